#include "windgen/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "windgen/error.hpp"
#include "windgen/log.hpp"
#include "windgen/random.hpp"

namespace windgen {

namespace {

constexpr double kCollapseWeight = 1e-8;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& cov, Eigen::Index k) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("covariance of component " + std::to_string(k) +
                         " is not positive definite");
  return llt.matrixL();
}

// N x K matrix of log(pi_k) + log N(y_i | mu_k, Sigma_k).
Eigen::MatrixXd weighted_log_densities(const Gmm& gmm, const Eigen::MatrixXd& Y) {
  const Eigen::Index n = Y.rows(), c = Y.cols(), k_count = gmm.components();
  Eigen::MatrixXd out(n, k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const Eigen::MatrixXd L = cholesky_or_throw(gmm.covariances[static_cast<std::size_t>(k)], k);
    const Eigen::MatrixXd centered =
        (Y.rowwise() - gmm.means[static_cast<std::size_t>(k)].transpose()).transpose();
    const Eigen::MatrixXd z = L.triangularView<Eigen::Lower>().solve(centered);
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    const double log_w = gmm.weights(k) > 0 ? std::log(gmm.weights(k))
                                            : -std::numeric_limits<double>::infinity();
    out.col(k) = (-0.5 * (z.colwise().squaredNorm().array() + log_det + c * kLog2Pi) + log_w)
                     .transpose();
  }
  return out;
}

Eigen::VectorXd row_logsumexp(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    if (!std::isfinite(mx)) {
      out(i) = mx;
      continue;
    }
    out(i) = mx + std::log((m.row(i).array() - mx).exp().sum());
  }
  return out;
}

std::vector<Eigen::Index> kmeanspp_centers(const Eigen::MatrixXd& Y, int k, Rng& rng) {
  const Eigen::Index n = Y.rows();
  std::vector<Eigen::Index> centers;
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.push_back(first(rng));
  Eigen::VectorXd d2 = (Y.rowwise() - Y.row(centers[0])).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (static_cast<int>(centers.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0) {
      pick = first(rng);
    } else {
      double target = unif(rng) * total, acc = 0.0;
      for (pick = 0; pick < n - 1; ++pick) {
        acc += d2(pick);
        if (acc >= target) break;
      }
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin((Y.rowwise() - Y.row(pick)).rowwise().squaredNorm());
  }
  return centers;
}

void m_step(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& resp, double reg, Gmm& gmm) {
  const Eigen::Index n = Y.rows(), c = Y.cols(), k_count = resp.cols();
  const Eigen::VectorXd nk = resp.colwise().sum().transpose();
  gmm.weights = nk / static_cast<double>(n);
  gmm.means.resize(static_cast<std::size_t>(k_count));
  gmm.covariances.resize(static_cast<std::size_t>(k_count));
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double mass = std::max(nk(k), std::numeric_limits<double>::min());
    gmm.means[ku] = (Y.transpose() * resp.col(k)) / mass;
    const Eigen::MatrixXd centered = Y.rowwise() - gmm.means[ku].transpose();
    Eigen::MatrixXd cov = (centered.transpose() * resp.col(k).asDiagonal() * centered) / mass;
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += reg;
    gmm.covariances[ku] = cov;
  }
  (void)c;
}

EmResult em_single(const Eigen::MatrixXd& Y, const EmOptions& opt, std::uint64_t seed) {
  const Eigen::Index n = Y.rows(), k_count = opt.k;
  Rng rng(seed);
  const auto centers = kmeanspp_centers(Y, opt.k, rng);

  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const double d = (Y.row(i) - Y.row(centers[static_cast<std::size_t>(k)])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    resp(i, best) = 1.0;
  }
  // A center always owns itself, so no component starts empty.
  for (Eigen::Index k = 0; k < k_count; ++k) {
    resp.row(centers[static_cast<std::size_t>(k)]).setZero();
    resp(centers[static_cast<std::size_t>(k)], k) = 1.0;
  }

  const Eigen::VectorXd data_var =
      (Y.rowwise() - Y.colwise().mean()).array().square().colwise().mean().transpose();

  EmResult result;
  m_step(Y, resp, opt.reg_covar, result.gmm);
  for (int it = 0; it < opt.max_iter; ++it) {
    const Eigen::MatrixXd logp = weighted_log_densities(result.gmm, Y);
    const Eigen::VectorXd lse = row_logsumexp(logp);
    const double total = lse.sum();
    if (!std::isfinite(total)) throw NumericalError("EM log-likelihood is not finite");
    result.log_likelihood_trace.push_back(total);
    result.iterations = it + 1;
    const auto& trace = result.log_likelihood_trace;
    if (trace.size() >= 2 && (trace.back() - trace[trace.size() - 2]) / static_cast<double>(n) < opt.tol) {
      result.converged = true;
      break;
    }
    if (it + 1 == opt.max_iter) break;
    resp = (logp.colwise() - lse).array().exp();
    m_step(Y, resp, opt.reg_covar, result.gmm);

    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (result.gmm.weights(k) >= kCollapseWeight) continue;
      Eigen::Index worst = 0;
      lse.minCoeff(&worst);
      const auto ku = static_cast<std::size_t>(k);
      result.gmm.means[ku] = Y.row(worst).transpose();
      result.gmm.covariances[ku] = data_var.asDiagonal();
      result.gmm.covariances[ku].diagonal().array() += opt.reg_covar;
      result.gmm.weights(k) = 1.0 / static_cast<double>(n);
      result.gmm.weights /= result.gmm.weights.sum();
      ++result.reseed_events;
      log_warning("EM component " + std::to_string(k) + " collapsed; re-seeded at sample " +
                  std::to_string(worst));
    }
  }
  return result;
}

}  // namespace

void Gmm::validate() const {
  const auto k = components();
  if (k < 1) throw InputError("mixture has no components");
  if (static_cast<Eigen::Index>(means.size()) != k ||
      static_cast<Eigen::Index>(covariances.size()) != k)
    throw InputError("mixture component arrays disagree in length");
  if ((weights.array() < 0).any() || std::abs(weights.sum() - 1.0) > 1e-10)
    throw InputError("mixture weights must lie on the simplex");
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& cov = covariances[static_cast<std::size_t>(i)];
    if (means[static_cast<std::size_t>(i)].size() != dim() || cov.rows() != dim() ||
        cov.cols() != dim())
      throw InputError("mixture component dimensions disagree");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw InputError("covariance " + std::to_string(i) + " is not symmetric");
    cholesky_or_throw(cov, i);
  }
}

EmResult em_fit(const Eigen::MatrixXd& Y, const EmOptions& options) {
  if (options.k < 1) throw InputError("k must be at least 1");
  if (options.k >= Y.rows())
    throw InputError("k=" + std::to_string(options.k) + " must be smaller than the sample count " +
                     std::to_string(Y.rows()));
  if (!(options.tol > 0)) throw InputError("tol must be positive");
  if (options.max_iter < 1 || options.restarts < 1)
    throw InputError("max_iter and restarts must be positive");
  if (!Y.allFinite()) throw InputError("EM input contains non-finite values");

  std::optional<EmResult> best;
  for (int r = 0; r < options.restarts; ++r) {
    EmResult res = em_single(Y, options, derive_seed(options.seed, static_cast<std::uint64_t>(r)));
    if (!best || res.log_likelihood_trace.back() > best->log_likelihood_trace.back())
      best = std::move(res);
  }
  return std::move(*best);
}

double gmm_logpdf(const Gmm& gmm, const Eigen::VectorXd& y) {
  if (y.size() != gmm.dim())
    throw InputError("gmm_logpdf: expected dimension " + std::to_string(gmm.dim()) + ", got " +
                     std::to_string(y.size()));
  const Eigen::MatrixXd row = y.transpose();
  return row_logsumexp(weighted_log_densities(gmm, row))(0);
}

double gmm_log_likelihood(const Gmm& gmm, const Eigen::MatrixXd& Y) {
  if (Y.cols() != gmm.dim()) throw InputError("gmm_log_likelihood: dimension mismatch");
  return row_logsumexp(weighted_log_densities(gmm, Y)).sum();
}

double bic(const Gmm& gmm, const Eigen::MatrixXd& Y) {
  const auto phi = static_cast<double>(gmm_parameter_count(
      static_cast<std::uint64_t>(gmm.components()), static_cast<std::uint64_t>(gmm.dim())));
  return -2.0 * gmm_log_likelihood(gmm, Y) + phi * std::log(static_cast<double>(Y.rows()));
}

KSelection select_k(const Eigen::MatrixXd& Y, const std::vector<int>& k_grid, std::uint64_t seed,
                    EmOptions options) {
  if (k_grid.empty()) throw InputError("k grid is empty");
  KSelection sel;
  std::vector<Gmm> fits;
  for (int k : k_grid) {
    options.k = k;
    options.seed = seed;
    try {
      auto res = em_fit(Y, options);
      sel.bic_curve.emplace_back(k, bic(res.gmm, Y));
      fits.push_back(std::move(res.gmm));
    } catch (const Error& e) {
      log_warning("skipping k=" + std::to_string(k) + ": " + e.what());
      sel.skipped.push_back(k);
    }
  }
  if (sel.bic_curve.empty()) throw NumericalError("EM failed for every k in the grid");

  double min_bic = std::numeric_limits<double>::infinity();
  for (const auto& [k, b] : sel.bic_curve) min_bic = std::min(min_bic, b);
  const double threshold = min_bic + 0.01 * std::abs(min_bic);
  std::size_t chosen = 0;
  int chosen_k = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < sel.bic_curve.size(); ++i) {
    const auto [k, b] = sel.bic_curve[i];
    if (b <= threshold && k < chosen_k) {
      chosen_k = k;
      chosen = i;
    }
  }
  sel.best_k = chosen_k;
  sel.gmm = std::move(fits[chosen]);
  return sel;
}

Eigen::MatrixXd gmm_sample(const Gmm& gmm, std::size_t n, std::uint64_t seed) {
  constexpr std::size_t kChunk = 4096;
  const Eigen::Index c = gmm.dim(), k_count = gmm.components();
  std::vector<Eigen::MatrixXd> chol;
  for (Eigen::Index k = 0; k < k_count; ++k)
    chol.push_back(cholesky_or_throw(gmm.covariances[static_cast<std::size_t>(k)], k));
  std::vector<double> cumulative(static_cast<std::size_t>(k_count));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < k_count; ++k) cumulative[static_cast<std::size_t>(k)] = acc += gmm.weights(k);

  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), c);
  Eigen::VectorXd xi(c);
  for (std::size_t start = 0; start < n; start += kChunk) {
    Rng rng = make_rng(seed, start / kChunk);
    std::uniform_real_distribution<double> unif(0.0, acc);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t stop = std::min(n, start + kChunk);
    for (std::size_t i = start; i < stop; ++i) {
      const double u = unif(rng);
      auto k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                        cumulative.begin());
      k = std::min(k, static_cast<std::size_t>(k_count - 1));
      while (gmm.weights(static_cast<Eigen::Index>(k)) <= 0 && k > 0) --k;
      for (Eigen::Index j = 0; j < c; ++j) xi(j) = normal(rng);
      out.row(static_cast<Eigen::Index>(i)) = (gmm.means[k] + chol[k] * xi).transpose();
    }
  }
  return out;
}

void GmmPipeline::validate() const {
  gmm.validate();
  if (gmm.dim() != pca.component_count())
    throw InputError("mixture dimension does not match the PCA component count");
  if (static_cast<std::size_t>(pca.input_dim()) != scaler.size())
    throw InputError("scaler width does not match the PCA input dimension");
  if (static_cast<std::size_t>(pca.input_dim()) != 2 * altitude_count() + 2)
    throw InputError("PCA input dimension must be 2A + 2");
}

Eigen::VectorXd joint_vector(const WindProfile& profile) {
  const auto a = static_cast<Eigen::Index>(profile.u.size());
  Eigen::VectorXd x(2 * a + 2);
  for (Eigen::Index i = 0; i < a; ++i) {
    x(i) = profile.u[static_cast<std::size_t>(i)];
    x(a + i) = profile.v[static_cast<std::size_t>(i)];
  }
  const auto [mu, mv] =
      uv_from_speed_bearing(profile.macro_speed, DirectionSet::bearing_deg(profile.condition.direction));
  x(2 * a) = mu;
  x(2 * a + 1) = mv;
  return x;
}

namespace {

ConditionLabel decode_macro(double mu, double mv, const SpeedBins& bins, double* speed_out) {
  const auto [speed, bearing] = speed_bearing_from_uv(mu, mv);
  if (speed_out) *speed_out = speed;
  return ConditionLabel{bins.bin_of(speed), DirectionSet::nearest(bearing)};
}

}  // namespace

WindProfile decode_joint(const Eigen::VectorXd& joint, std::size_t altitude_count,
                         const ConditionLayout& layout, const SpeedBins& bins) {
  const auto a = static_cast<Eigen::Index>(altitude_count);
  if (joint.size() != 2 * a + 2) throw InputError("joint vector has the wrong length");
  WindProfile p;
  p.u.resize(altitude_count);
  p.v.resize(altitude_count);
  for (Eigen::Index i = 0; i < a; ++i) {
    p.u[static_cast<std::size_t>(i)] = joint(i);
    p.v[static_cast<std::size_t>(i)] = joint(a + i);
  }
  p.condition = decode_macro(joint(layout.macro_u), joint(layout.macro_v), bins, &p.macro_speed);
  return p;
}

GmmPipeline fit_gmm_pipeline(const Dataset& dataset, const GmmPipelineOptions& options,
                             GmmFitReport* report) {
  if (dataset.size() < 2) throw InputError("GMM pipeline needs at least two profiles");
  const auto a = static_cast<Eigen::Index>(dataset.altitude_count());
  Eigen::MatrixXd joint(static_cast<Eigen::Index>(dataset.size()), 2 * a + 2);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    joint.row(static_cast<Eigen::Index>(i)) = joint_vector(dataset.profiles[i]).transpose();

  GmmPipeline pipe;
  pipe.altitudes = dataset.altitudes;
  pipe.speed_bins = dataset.speed_bins;
  pipe.layout = ConditionLayout{2 * a, 2 * a + 1};
  pipe.scaler = fit_scaler(joint);
  const Eigen::MatrixXd scaled = apply_scaler(joint, pipe.scaler, ScaleDirection::kForward);
  pipe.pca = pca_fit(scaled, options.pca_components);
  const Eigen::MatrixXd reduced = pca_project_rows(pipe.pca, scaled);
  auto selection = select_k(reduced, options.k_grid, options.seed, options.em);
  pipe.gmm = selection.gmm;
  if (report) {
    report->selection = std::move(selection);
    report->pca_ratio = pipe.pca.explained_variance_ratio;
  }
  return pipe;
}

ConditionalSamples conditional_sample(const GmmPipeline& pipeline, const ConditionQuery& query,
                                      std::size_t n, std::uint64_t seed, std::uint64_t max_draws) {
  if (n < 1) throw InputError("n must be at least 1");
  if (max_draws < n) throw InputError("max_draws must be at least n");
  constexpr std::uint64_t kBatch = 65536;
  const auto& pca = pipeline.pca;
  const auto mu_idx = pipeline.layout.macro_u, mv_idx = pipeline.layout.macro_v;
  const auto su = static_cast<std::size_t>(mu_idx), sv = static_cast<std::size_t>(mv_idx);

  ConditionalSamples out;
  std::uint64_t accepted = 0;
  std::uint64_t batch_index = 0;
  while (out.draws < max_draws && out.profiles.size() < n) {
    const std::uint64_t batch = std::min(kBatch, max_draws - out.draws);
    const Eigen::MatrixXd z = gmm_sample(pipeline.gmm, batch, derive_seed(seed, batch_index++));
    out.draws += batch;
    const Eigen::VectorXd mu =
        (z * pca.components.col(mu_idx)).array() * pipeline.scaler.std[su] +
        (pca.column_means(mu_idx) * pipeline.scaler.std[su] + pipeline.scaler.mean[su]);
    const Eigen::VectorXd mv =
        (z * pca.components.col(mv_idx)).array() * pipeline.scaler.std[sv] +
        (pca.column_means(mv_idx) * pipeline.scaler.std[sv] + pipeline.scaler.mean[sv]);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      double speed = 0.0;
      const auto label = decode_macro(mu(i), mv(i), pipeline.speed_bins, &speed);
      if (!query.matches(label)) continue;
      ++accepted;
      if (out.profiles.size() >= n) continue;
      const Eigen::VectorXd scaled = pca_reconstruct(pca, z.row(i).transpose());
      const auto x = apply_scaler(
          std::span<const double>(scaled.data(), static_cast<std::size_t>(scaled.size())),
          pipeline.scaler, ScaleDirection::kInverse);
      auto profile = decode_joint(
          Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())),
          pipeline.altitude_count(), pipeline.layout, pipeline.speed_bins);
      // The label is the one that passed the filter, not a re-decode of the
      // reconstructed vector, which may differ in the last bit.
      profile.condition = label;
      profile.macro_speed = speed;
      out.profiles.push_back(std::move(profile));
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(out.draws);
  if (accepted == 0) {
    const std::string what =
        query.speed_bin && query.direction
            ? format_label(ConditionLabel{*query.speed_bin, *query.direction})
            : "speed_bin=" + (query.speed_bin ? std::to_string(*query.speed_bin) : "*") + " direction=" +
                  (query.direction ? std::string(DirectionSet::token(*query.direction)) : "*");
    throw NoMassError("mixture allocates no probability mass to condition " + what + " after " +
                      std::to_string(out.draws) + " draws");
  }
  return out;
}

}  // namespace windgen
