#include "windgen/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "windgen/error.hpp"

namespace windgen {

PcaModel pca_fit(const Eigen::MatrixXd& X, Eigen::Index components) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2) throw InputError("pca_fit needs at least two rows");
  if (components < 1 || components > std::min(n, d))
    throw InputError("component count " + std::to_string(components) + " outside [1, " +
                     std::to_string(std::min(n, d)) + "]");
  if (!X.allFinite()) throw InputError("pca_fit input contains non-finite values");

  PcaModel model;
  model.column_means = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - model.column_means.transpose();
  const Eigen::MatrixXd gram = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");

  // Solver order is ascending; walk it backwards so equal eigenvalues keep
  // their first-occurrence order from the descending scan.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = d - 1 - i;
  const auto& evals = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return evals(a) > evals(b); });

  model.total_variance = std::max(0.0, gram.trace());
  model.components.resize(components, d);
  model.explained_variance.resize(components);
  model.explained_variance_ratio.resize(components);
  for (Eigen::Index c = 0; c < components; ++c) {
    const auto src = order[static_cast<std::size_t>(c)];
    Eigen::VectorXd vec = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    vec.cwiseAbs().maxCoeff(&arg);
    if (vec(arg) < 0) vec = -vec;
    model.components.row(c) = vec.transpose();
    const double lambda = std::max(0.0, evals(src));
    model.explained_variance(c) = lambda;
    model.explained_variance_ratio(c) =
        model.total_variance > 0 ? std::min(1.0, lambda / model.total_variance) : 0.0;
  }
  return model;
}

Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.input_dim())
    throw InputError("pca_project: expected dimension " + std::to_string(model.input_dim()) +
                     ", got " + std::to_string(x.size()));
  return model.components * (x - model.column_means);
}

Eigen::VectorXd pca_reconstruct(const PcaModel& model, const Eigen::VectorXd& y) {
  if (y.size() != model.component_count())
    throw InputError("pca_reconstruct: expected dimension " +
                     std::to_string(model.component_count()) + ", got " + std::to_string(y.size()));
  return model.components.transpose() * y + model.column_means;
}

Eigen::MatrixXd pca_project_rows(const PcaModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.input_dim()) throw InputError("pca_project_rows: dimension mismatch");
  return (X.rowwise() - model.column_means.transpose()) * model.components.transpose();
}

Eigen::MatrixXd pca_reconstruct_rows(const PcaModel& model, const Eigen::MatrixXd& Y) {
  if (Y.cols() != model.component_count())
    throw InputError("pca_reconstruct_rows: dimension mismatch");
  return (Y * model.components).rowwise() + model.column_means.transpose();
}

namespace {

constexpr double kJitter = 1e-12;

// Distance to the k-th nearest row of `pool` from `query`, skipping row `skip`.
double kth_distance(const Eigen::MatrixXd& pool, const Eigen::RowVectorXd& query, int k,
                    Eigen::Index skip, std::vector<double>& best) {
  best.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  const Eigen::Index m = pool.cols();
  for (Eigen::Index j = 0; j < pool.rows(); ++j) {
    if (j == skip) continue;
    double d2 = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      const double diff = pool(j, c) - query(c);
      d2 += diff * diff;
    }
    if (d2 < best.back()) {
      auto it = std::upper_bound(best.begin(), best.end(), d2);
      best.insert(it, d2);
      best.pop_back();
    }
  }
  return std::sqrt(best.back());
}

}  // namespace

double kl_divergence_knn(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q, int k) {
  if (k < 1) throw InputError("k must be at least 1");
  const Eigen::Index n = P.rows(), m = Q.rows();
  if (n <= k || m <= k)
    throw InputError("kNN KL needs more than k samples on each side (k=" + std::to_string(k) +
                     ", got " + std::to_string(n) + " and " + std::to_string(m) + ")");
  if (P.cols() != Q.cols() || P.cols() < 1) throw InputError("sample dimensions differ");
  if (!P.allFinite() || !Q.allFinite()) throw InputError("kNN KL samples must be finite");

  const double dim = static_cast<double>(P.cols());
  std::vector<double> scratch;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd x = P.row(i);
    const double rho = kth_distance(P, x, k, i, scratch) + kJitter;
    const double nu = kth_distance(Q, x, k, -1, scratch) + kJitter;
    acc += std::log(nu / rho);
  }
  return dim * acc / static_cast<double>(n) +
         std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

double symmetrized_kl(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q, int k) {
  const double total = kl_divergence_knn(P, Q, k) + kl_divergence_knn(Q, P, k);
  return std::max(0.0, total);
}

ProfileStats profile_stats(std::span<const WindProfile> samples) {
  if (samples.empty()) throw InputError("profile_stats needs at least one profile");
  const std::size_t a_count = samples.front().u.size();
  ProfileStats st;
  st.mean.assign(a_count, 0.0);
  st.std.assign(a_count, 0.0);
  const auto n = static_cast<double>(samples.size());
  for (const auto& p : samples) {
    if (p.u.size() != a_count || p.v.size() != a_count)
      throw InputError("profile_stats: altitude count mismatch");
    for (std::size_t a = 0; a < a_count; ++a) st.mean[a] += std::hypot(p.u[a], p.v[a]);
  }
  for (auto& m : st.mean) m /= n;
  for (const auto& p : samples)
    for (std::size_t a = 0; a < a_count; ++a) {
      const double d = std::hypot(p.u[a], p.v[a]) - st.mean[a];
      st.std[a] += d * d;
    }
  for (auto& s : st.std) s = std::sqrt(s / n);
  return st;
}

Eigen::MatrixXd altitude_averaged_uv(std::span<const WindProfile> samples) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.size()), 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& p = samples[i];
    const auto a = static_cast<double>(p.u.size());
    out(static_cast<Eigen::Index>(i), 0) = std::accumulate(p.u.begin(), p.u.end(), 0.0) / a;
    out(static_cast<Eigen::Index>(i), 1) = std::accumulate(p.v.begin(), p.v.end(), 0.0) / a;
  }
  return out;
}

Eigen::MatrixXd uv_at_altitude(std::span<const WindProfile> samples, std::size_t altitude) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.size()), 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (altitude >= samples[i].u.size()) throw InputError("altitude index out of range");
    out(static_cast<Eigen::Index>(i), 0) = samples[i].u[altitude];
    out(static_cast<Eigen::Index>(i), 1) = samples[i].v[altitude];
  }
  return out;
}

}  // namespace windgen
