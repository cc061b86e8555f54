#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "windgen/error.hpp"
#include "windgen/gmm.hpp"
#include "windgen/log.hpp"

using namespace windgen;
using windgen::testing::HandBuiltJoint;
using windgen::testing::KnownMixture;

namespace {

void check_monotone(const std::vector<double>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] >= trace[i - 1] - 1e-9 * std::abs(trace[i - 1]));
}

Gmm single(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  Gmm g;
  g.weights = Eigen::VectorXd::Ones(1);
  g.means = {std::move(mean)};
  g.covariances = {std::move(cov)};
  return g;
}

// Brute-force mixture density in extended precision.
long double direct_logpdf(const Gmm& g, const Eigen::VectorXd& y) {
  long double total = 0.0L;
  const auto d = static_cast<long double>(y.size());
  for (Eigen::Index k = 0; k < g.components(); ++k) {
    const auto& cov = g.covariances[static_cast<std::size_t>(k)];
    const Eigen::VectorXd r = y - g.means[static_cast<std::size_t>(k)];
    const long double quad = r.dot(cov.inverse() * r);
    const long double det = cov.determinant();
    total += static_cast<long double>(g.weights(k)) *
             std::exp(-0.5L * quad) / std::sqrt(std::pow(2.0L * std::numbers::pi_v<long double>, d) * det);
  }
  return std::log(total);
}

Gmm random_mixture(int k, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Gmm g;
  g.weights.resize(k);
  for (int i = 0; i < k; ++i) {
    g.weights(i) = 0.5 + std::abs(nd(rng));
    Eigen::VectorXd m(d);
    Eigen::MatrixXd a(d, d);
    for (auto& v : m) v = nd(rng);
    for (Eigen::Index j = 0; j < a.size(); ++j) a.data()[j] = nd(rng);
    g.means.push_back(m);
    g.covariances.push_back(a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d));
  }
  g.weights /= g.weights.sum();
  return g;
}

}  // namespace

TEST_CASE("parameter count formula") {
  CHECK(gmm_parameter_count(1, 96) == 4753);
  CHECK(gmm_parameter_count(21, 7) == 756);
  static_assert(gmm_parameter_count(1, 1) == 3);
}

TEST_CASE("single component EM is the closed form") {
  const KnownMixture mix;
  const auto Y = mix.sample(500, 1);
  EmOptions opt;
  opt.k = 1;
  const auto fit = em_fit(Y, opt);
  const Eigen::VectorXd mean = Y.colwise().mean().transpose();
  const Eigen::MatrixXd centered = Y.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(Y.rows());
  cov.diagonal().array() += opt.reg_covar;
  CHECK((fit.gmm.means[0] - mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fit.gmm.covariances[0] - cov).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(fit.converged);
  CHECK(fit.iterations <= 2);
  CHECK(fit.gmm.weights(0) == doctest::Approx(1.0));
}

TEST_CASE("EM recovers a known mixture") {
  const KnownMixture mix;
  const auto Y = mix.sample(10000, 2);
  EmOptions opt;
  opt.k = 3;
  opt.seed = 5;
  const auto fit = em_fit(Y, opt);
  check_monotone(fit.log_likelihood_trace);
  CHECK(mix.matched_mean_error(fit.gmm) < 0.1);
  CHECK_NOTHROW(fit.gmm.validate());
  CHECK(fit.gmm.weights.sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("EM on a large sample recovers all parameters within 5 percent") {
  const KnownMixture mix;
  const auto Y = mix.sample(100000, 3);
  EmOptions opt;
  opt.k = 3;
  opt.seed = 1;
  opt.restarts = 1;
  const auto fit = em_fit(Y, opt);
  check_monotone(fit.log_likelihood_trace);
  for (std::size_t t = 0; t < 3; ++t) {
    // Match each true component to the nearest fitted mean.
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if ((fit.gmm.means[k] - mix.means[t]).norm() < (fit.gmm.means[best] - mix.means[t]).norm()) best = k;
    CHECK(fit.gmm.weights(static_cast<Eigen::Index>(best)) == doctest::Approx(mix.weights[t]).epsilon(0.05));
    CHECK((fit.gmm.means[best] - mix.means[t]).norm() < 0.05 * std::max(1.0, mix.means[t].norm()));
    CHECK((fit.gmm.covariances[best] - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.05);
  }
}

TEST_CASE("EM traces are monotone across k and seeds") {
  const KnownMixture mix;
  const auto Y = mix.sample(800, 4);
  for (int k = 1; k <= 6; ++k)
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      EmOptions opt;
      opt.k = k;
      opt.seed = seed;
      opt.restarts = 1;
      opt.tol = 1e-10;
      check_monotone(em_fit(Y, opt).log_likelihood_trace);
    }
}

TEST_CASE("BIC selects the true component count") {
  const KnownMixture mix;
  const auto Y = mix.sample(10000, 2);
  const auto sel = select_k(Y, {1, 2, 3, 4, 5, 6, 7, 8}, 11);
  CHECK(sel.best_k == 3);
  CHECK(sel.bic_curve.size() == 8);
  CHECK(sel.skipped.empty());
  CHECK(sel.gmm.components() == 3);
  // BIC = -2 log L + phi log N, checked against its definition.
  const double expected =
      -2.0 * gmm_log_likelihood(sel.gmm, Y) + 18.0 * std::log(static_cast<double>(Y.rows()));
  CHECK(bic(sel.gmm, Y) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("select_k skips failing k and rejects an empty grid") {
  const KnownMixture mix;
  const auto Y = mix.sample(20, 2);
  set_log_sink({});
  const auto sel = select_k(Y, {1, 2, 50}, 0);
  set_log_sink(stderr_log_sink());
  CHECK(sel.skipped == std::vector<int>{50});
  CHECK(sel.bic_curve.size() == 2);
  CHECK_THROWS_AS(select_k(Y, {}, 0), InputError);
  set_log_sink({});
  CHECK_THROWS(select_k(Y, {40, 50}, 0));
  set_log_sink(stderr_log_sink());
}

TEST_CASE("EM argument errors") {
  const Eigen::MatrixXd Y = Eigen::MatrixXd::Random(5, 2);
  EmOptions opt;
  opt.k = 5;
  CHECK_THROWS_AS(em_fit(Y, opt), InputError);
  opt.k = 2;
  opt.tol = 0.0;
  CHECK_THROWS_AS(em_fit(Y, opt), InputError);
  opt.tol = 1e-6;
  opt.k = 0;
  CHECK_THROWS_AS(em_fit(Y, opt), InputError);
}

TEST_CASE("gmm_sample") {
  SUBCASE("standard normal moments") {
    const auto g = single(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity());
    const auto S = gmm_sample(g, 50000, 3);
    const Eigen::RowVectorXd mean = S.colwise().mean();
    CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
    const Eigen::MatrixXd c = S.rowwise() - mean;
    const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(S.rows());
    CHECK((cov - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.05);
  }
  SUBCASE("zero-weight components are never drawn") {
    Gmm g;
    g.weights = Eigen::Vector2d(1.0, 0.0);
    g.means = {Eigen::Vector2d(0, 0), Eigen::Vector2d(100, 100)};
    g.covariances = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
    const auto S = gmm_sample(g, 5000, 1);
    CHECK(S.maxCoeff() < 10.0);
  }
  SUBCASE("deterministic given seed") {
    const auto g = random_mixture(3, 3, 2);
    CHECK(gmm_sample(g, 100, 9) == gmm_sample(g, 100, 9));
    CHECK(gmm_sample(g, 100, 9) != gmm_sample(g, 100, 10));
  }
}

TEST_CASE("gmm_logpdf") {
  const auto std2 = single(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity());
  CHECK(gmm_logpdf(std2, Eigen::Vector2d::Zero()) == doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(gmm_logpdf(std2, Eigen::Vector2d::Zero()) == doctest::Approx(-1.837877).epsilon(1e-6));

  Gmm twin;
  twin.weights = Eigen::Vector2d(0.5, 0.5);
  twin.means = {Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 2)};
  Eigen::Matrix2d cov;
  cov << 2.0, 0.3, 0.3, 1.0;
  twin.covariances = {cov, cov};
  const auto one = single(Eigen::Vector2d(1, 2), cov);
  const Eigen::Vector2d y(0.3, -0.7);
  CHECK(gmm_logpdf(twin, y) == doctest::Approx(gmm_logpdf(one, y)).epsilon(1e-14));

  const auto g = random_mixture(3, 4, 7);
  Rng rng(1);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd p(4);
    for (auto& v : p) v = nd(rng);
    CHECK(std::abs(gmm_logpdf(g, p) - static_cast<double>(direct_logpdf(g, p))) < 1e-10);
  }
  // Far tails stay finite.
  CHECK(std::isfinite(gmm_logpdf(std2, Eigen::Vector2d(40.0, 0.0))));
  CHECK_THROWS_AS(gmm_logpdf(std2, Eigen::Vector3d::Zero()), InputError);
}

TEST_CASE("model samples all have finite density") {
  const auto g = random_mixture(4, 3, 12);
  const auto S = gmm_sample(g, 100000, 4);
  for (Eigen::Index i = 0; i < S.rows(); ++i) REQUIRE(std::isfinite(gmm_logpdf(g, S.row(i).transpose())));
}

TEST_CASE("mixture validation") {
  auto g = random_mixture(2, 2, 1);
  CHECK_NOTHROW(g.validate());
  auto bad = g;
  bad.weights(0) += 0.1;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = g;
  bad.covariances[1](0, 1) += 0.1;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = g;
  bad.covariances[0] = -Eigen::Matrix2d::Identity();
  CHECK_THROWS(bad.validate());
}

TEST_CASE("rejection conditioning against the analytic conditional") {
  const HandBuiltJoint joint;
  const auto& pipe = joint.pipeline;
  REQUIRE_NOTHROW(pipe.validate());

  SUBCASE("exact label selects one component") {
    const auto out = conditional_sample(pipe, ConditionQuery::exactly(HandBuiltJoint::label("W", 1)), 50000, 3);
    REQUIRE(out.profiles.size() == 50000);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    double sx = 0, sy = 0, sxy = 0, sxx = 0;
    for (const auto& p : out.profiles) {
      CHECK(p.condition == HandBuiltJoint::label("W", 1));
      mean += Eigen::Vector2d(p.u[0], p.v[0]);
      const auto [mu, mv] = uv_from_speed_bearing(p.macro_speed, 270.0);
      (void)mv;
      sx += mu;
      sy += p.u[0];
      sxy += mu * p.u[0];
      sxx += mu * mu;
    }
    const double n = static_cast<double>(out.profiles.size());
    mean /= n;
    CHECK((mean - joint.conditional_micro_mean({0})).cwiseAbs().maxCoeff() < 0.05);
    CHECK(out.acceptance_rate == doctest::Approx(joint.weights[0]).epsilon(0.02));
    // Regression slope of micro u on macro speed: Sigma_um / Sigma_mm = 10.
    const double slope = (sxy / n - sx / n * sy / n) / (sxx / n - sx / n * sx / n);
    CHECK(slope == doctest::Approx(10.0).epsilon(0.05));
  }
  SUBCASE("direction-only query mixes the matching components") {
    ConditionQuery q;
    q.direction = DirectionSet::index_of("W");
    const auto out = conditional_sample(pipe, q, 50000, 4);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : out.profiles) mean += Eigen::Vector2d(p.u[0], p.v[0]);
    mean /= static_cast<double>(out.profiles.size());
    CHECK((mean - joint.conditional_micro_mean({0, 1})).cwiseAbs().maxCoeff() < 0.05);
  }
  SUBCASE("any label accepts every draw") {
    const auto out = conditional_sample(pipe, ConditionQuery::any(), 1000, 5);
    CHECK(out.acceptance_rate == 1.0);
  }
  SUBCASE("zero mass raises the no-mass error") {
    CHECK_THROWS_AS(conditional_sample(pipe, ConditionQuery::exactly(HandBuiltJoint::label("E", 0)), 10, 6, 200000),
                    NoMassError);
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(conditional_sample(pipe, ConditionQuery::any(), 0, 1), InputError);
    CHECK_THROWS_AS(conditional_sample(pipe, ConditionQuery::any(), 10, 1, 5), InputError);
  }
  SUBCASE("deterministic") {
    const auto q = ConditionQuery::exactly(HandBuiltJoint::label("E", 3));
    const auto a = conditional_sample(pipe, q, 200, 8);
    const auto b = conditional_sample(pipe, q, 200, 8);
    for (std::size_t i = 0; i < 200; ++i) CHECK(a.profiles[i].u == b.profiles[i].u);
  }
}

TEST_CASE("joint vector layout") {
  WindProfile p;
  p.u = {1.0, 2.0};
  p.v = {3.0, 4.0};
  p.macro_speed = 6.0;
  p.condition = {2, DirectionSet::index_of("W")};
  const auto x = joint_vector(p);
  REQUIRE(x.size() == 6);
  CHECK(x(0) == 1.0);
  CHECK(x(3) == 4.0);
  CHECK(x(4) == doctest::Approx(6.0));
  CHECK(std::abs(x(5)) < 1e-12);
  const auto back = decode_joint(x, 2, ConditionLayout{4, 5}, SpeedBins::reference());
  CHECK(back.u == p.u);
  CHECK(back.v == p.v);
  CHECK(back.condition == p.condition);
  CHECK(back.macro_speed == doctest::Approx(6.0));
}

TEST_CASE("fitted pipeline samples only the requested label") {
  SynthConfig cfg;
  cfg.n_samples = 1500;
  cfg.altitude_count = 10;
  cfg.regimes = {{0.5, 0.15, 0.0, 0.3, 0.1}, {0.5, 0.5, 0.0, 0.3, 0.1}};
  const auto ds = synth_generate(cfg);
  GmmPipelineOptions opt;
  opt.pca_components = 4;
  opt.k_grid = {1, 2, 3, 4};
  GmmFitReport report;
  const auto pipe = fit_gmm_pipeline(ds, opt, &report);
  CHECK_NOTHROW(pipe.validate());
  CHECK(report.pca_ratio.size() == 4);
  CHECK(report.selection.bic_curve.size() == 4);
  for (const auto& label : labels_present(ds)) {
    try {
      const auto out = conditional_sample(pipe, ConditionQuery::exactly(label), 50, 1, 2'000'000);
      for (const auto& p : out.profiles) CHECK(p.condition == label);
    } catch (const NoMassError&) {
      // Sparse labels may carry no mass; acceptable here.
    }
  }
}
