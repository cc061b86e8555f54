#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "windgen/data.hpp"
#include "windgen/error.hpp"
#include "windgen/gmm.hpp"
#include "windgen/model.hpp"
#include "windgen/random.hpp"

namespace windgen::testing {

/// Known 2D mixture: means (0,0), (5,0), (0,5), identity covariances,
/// weights 0.5 / 0.3 / 0.2.
struct KnownMixture {
  std::array<Eigen::Vector2d, 3> means{Eigen::Vector2d(0, 0), Eigen::Vector2d(5, 0), Eigen::Vector2d(0, 5)};
  std::array<double, 3> weights{0.5, 0.3, 0.2};

  Eigen::MatrixXd sample(std::size_t n, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd Y(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      const auto& m = means[static_cast<std::size_t>(pick(rng))];
      Y(i, 0) = m(0) + nd(rng);
      Y(i, 1) = m(1) + nd(rng);
    }
    return Y;
  }

  /// Largest distance between a true mean and its fitted counterpart under
  /// the best of the 6 permutations.
  double matched_mean_error(const Gmm& gmm) const {
    std::array<int, 3> perm{0, 1, 2};
    double best = std::numeric_limits<double>::infinity();
    do {
      double worst = 0.0;
      for (std::size_t k = 0; k < 3; ++k)
        worst = std::max(worst, (gmm.means[static_cast<std::size_t>(perm[k])] - means[k]).norm());
      best = std::min(best, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
};

/// Joint mixture over [u, v, macro_u, macro_v] for a single altitude, with an
/// identity scaler and identity PCA. Components:
///   0: wind from W at 3.5 m/s (label W:1), micro correlated with macro
///   1: wind from W at 10 m/s (label W:3)
///   2: wind from E at 10 m/s (label E:3)
/// Macro spread is 0.05 m/s, so each component's macro mass lies inside its
/// label's region to many standard deviations.
struct HandBuiltJoint {
  GmmPipeline pipeline;
  std::array<Eigen::Vector4d, 3> means;
  std::array<Eigen::Matrix4d, 3> covs;
  std::array<double, 3> weights{0.4, 0.35, 0.25};

  HandBuiltJoint() {
    means[0] << 1.0, -0.5, 3.5, 0.0;
    means[1] << 3.0, 1.5, 10.0, 0.0;
    means[2] << -2.0, 0.5, -10.0, 0.0;
    const double m2 = 0.05 * 0.05;
    for (auto& c : covs) {
      c.setZero();
      c(0, 0) = 1.0;
      c(1, 1) = 0.5;
      c(0, 1) = c(1, 0) = 0.2;
      c(2, 2) = c(3, 3) = m2;
    }
    // Micro u of component 0 leans on macro u: corr 0.5.
    covs[0](0, 2) = covs[0](2, 0) = 0.5 * std::sqrt(1.0 * m2);

    pipeline.altitudes = {100.0};
    pipeline.layout = ConditionLayout{2, 3};
    pipeline.scaler.mean.assign(4, 0.0);
    pipeline.scaler.std.assign(4, 1.0);
    pipeline.pca.components = Eigen::MatrixXd::Identity(4, 4);
    pipeline.pca.column_means = Eigen::VectorXd::Zero(4);
    pipeline.pca.explained_variance = Eigen::VectorXd::Ones(4);
    pipeline.pca.explained_variance_ratio = Eigen::VectorXd::Constant(4, 0.25);
    pipeline.pca.total_variance = 4.0;
    pipeline.gmm.weights = Eigen::Vector3d(weights[0], weights[1], weights[2]);
    for (std::size_t k = 0; k < 3; ++k) {
      pipeline.gmm.means.push_back(means[k]);
      pipeline.gmm.covariances.push_back(covs[k]);
    }
  }

  static ConditionLabel label(const char* dir, int bin) { return {bin, DirectionSet::index_of(dir)}; }

  /// Analytic E[micro | macro in the region of the given components]: the
  /// weight-normalized micro means of the components whose macro mass lies in
  /// the accepted region.
  Eigen::Vector2d conditional_micro_mean(std::initializer_list<std::size_t> inside) const {
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    double w = 0.0;
    for (auto k : inside) {
      acc += weights[k] * means[k].head<2>();
      w += weights[k];
    }
    return acc / w;
  }
};

/// 8 isotropic Gaussians on a circle of radius 2, std 0.2.
inline Eigen::MatrixXd eight_gaussians(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 7);
  std::normal_distribution<double> nd(0.0, 0.2);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double a = 2.0 * std::numbers::pi * pick(rng) / 8.0;
    X(i, 0) = 2.0 * std::cos(a) + nd(rng);
    X(i, 1) = 2.0 * std::sin(a) + nd(rng);
  }
  return X;
}

/// 2D points as single-altitude profiles (u, v) sharing one label.
inline Dataset points_dataset(const Eigen::MatrixXd& points, ConditionLabel label = {}) {
  Dataset d;
  d.altitudes = {100.0};
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    WindProfile p;
    p.u = {points(i, 0)};
    p.v = {points(i, 1)};
    p.condition = label;
    p.macro_speed = 1.0;
    d.profiles.push_back(std::move(p));
  }
  return d;
}

/// Inverse of points_dataset.
inline Eigen::MatrixXd points_of(const std::vector<WindProfile>& profiles) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(profiles.size()), 2);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = profiles[i].u[0];
    m(static_cast<Eigen::Index>(i), 1) = profiles[i].v[0];
  }
  return m;
}

/// Profiles of A altitudes whose (u, v) at every altitude are N(mean, I), with
/// the mean set by the label: bin b and direction d put it at
/// (1 + b) * (cos, sin)(2 pi d / 16).
inline Dataset labelled_gaussians(std::span<const ConditionLabel> labels, std::size_t per_label,
                                  std::size_t altitudes, std::uint64_t seed) {
  Dataset d;
  d.altitudes = evenly_spaced(20.0, 250.0, altitudes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (const auto& label : labels) {
    const double a = 2.0 * std::numbers::pi * label.direction / 16.0, r = 1.0 + label.speed_bin;
    for (std::size_t i = 0; i < per_label; ++i) {
      WindProfile p;
      for (std::size_t k = 0; k < altitudes; ++k) {
        p.u.push_back(r * std::cos(a) + nd(rng));
        p.v.push_back(r * std::sin(a) + nd(rng));
      }
      p.condition = label;
      p.macro_speed = r;
      d.profiles.push_back(std::move(p));
    }
  }
  return d;
}

/// The 16 labels {0..3} x {N, E, S, W}.
inline std::vector<ConditionLabel> sixteen_labels() {
  std::vector<ConditionLabel> out;
  for (int b = 0; b < 4; ++b)
    for (int d : {0, 4, 8, 12}) out.push_back({b, d});
  return out;
}

/// Oracle model: hands back profiles of the requested label from a fixed
/// pool, without replacement, in a seed-dependent order.
class ReplayGenerator final : public Generator {
 public:
  explicit ReplayGenerator(Dataset pool) : pool_(std::move(pool)) {}

  ModelKind kind() const noexcept override { return ModelKind::kGmm; }
  const std::vector<double>& altitudes() const noexcept override { return pool_.altitudes; }
  const SpeedBins& speed_bins() const noexcept override { return pool_.speed_bins; }
  std::vector<WindProfile> generate(const ConditionLabel& label, std::size_t n,
                                    std::uint64_t seed) const override {
    std::vector<WindProfile> match;
    for (const auto& p : pool_.profiles)
      if (p.condition == label) match.push_back(p);
    if (match.empty()) throw NoMassError("replay pool has no " + format_label(label));
    if (match.size() < n) throw InputError("replay pool too small");
    std::mt19937_64 rng(seed);
    std::shuffle(match.begin(), match.end(), rng);
    match.resize(n);
    return match;
  }
  Checkpoint to_checkpoint() const override { throw Error("replay generators are not saved"); }

 private:
  Dataset pool_;
};

}  // namespace windgen::testing
