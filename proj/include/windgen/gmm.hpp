#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "windgen/data.hpp"
#include "windgen/stats.hpp"

namespace windgen {

/// Full-covariance Gaussian mixture.
struct Gmm {
  Eigen::VectorXd weights;                   // K, on the simplex
  std::vector<Eigen::VectorXd> means;        // K x C
  std::vector<Eigen::MatrixXd> covariances;  // K x C x C

  Eigen::Index components() const noexcept { return weights.size(); }
  Eigen::Index dim() const noexcept { return means.empty() ? 0 : means.front().size(); }
  /// Throws InputError if weights or covariances break the mixture invariants.
  void validate() const;
};

struct EmOptions {
  int k = 1;
  std::uint64_t seed = 0;
  double tol = 1e-6;  // minimum per-sample log-likelihood gain
  int max_iter = 500;
  int restarts = 3;
  double reg_covar = 1e-6;
};

struct EmResult {
  Gmm gmm;
  std::vector<double> log_likelihood_trace;  // total log-likelihood per iteration
  int iterations = 0;
  bool converged = false;
  int reseed_events = 0;
};

/// EM with k-means++ seeding; the restart with the highest final likelihood wins.
EmResult em_fit(const Eigen::MatrixXd& Y, const EmOptions& options);

double gmm_logpdf(const Gmm& gmm, const Eigen::VectorXd& y);
double gmm_log_likelihood(const Gmm& gmm, const Eigen::MatrixXd& Y);

/// Free parameters of a k-component, full-covariance mixture in `dim` dimensions.
constexpr std::uint64_t gmm_parameter_count(std::uint64_t k, std::uint64_t dim) noexcept {
  return k * (1 + dim + (dim * dim + dim) / 2);
}

double bic(const Gmm& gmm, const Eigen::MatrixXd& Y);

struct KSelection {
  int best_k = 0;
  Gmm gmm;
  std::vector<std::pair<int, double>> bic_curve;
  std::vector<int> skipped;
};

/// Fits every k in the grid and returns the smallest k whose BIC lies within
/// 1% of the minimum BIC.
KSelection select_k(const Eigen::MatrixXd& Y, const std::vector<int>& k_grid, std::uint64_t seed,
                    EmOptions options = {});

/// n x C draws; deterministic given seed.
Eigen::MatrixXd gmm_sample(const Gmm& gmm, std::size_t n, std::uint64_t seed);

/// Position of the macro (u, v) pair inside the joint vector.
struct ConditionLayout {
  Eigen::Index macro_u = 0;
  Eigen::Index macro_v = 1;
};

/// Scaler + PCA + mixture over the joint [u_1..u_A, v_1..v_A, macro_u, macro_v] vector.
struct GmmPipeline {
  Scaler scaler;
  PcaModel pca;
  Gmm gmm;
  ConditionLayout layout;
  SpeedBins speed_bins = SpeedBins::reference();
  std::vector<double> altitudes;

  std::size_t altitude_count() const noexcept { return altitudes.size(); }
  void validate() const;
};

/// Accepts labels matching every field that is set.
struct ConditionQuery {
  std::optional<int> speed_bin;
  std::optional<int> direction;

  static ConditionQuery exactly(const ConditionLabel& label) {
    return ConditionQuery{label.speed_bin, label.direction};
  }
  static ConditionQuery any() { return {}; }
  bool matches(const ConditionLabel& label) const noexcept {
    return (!speed_bin || *speed_bin == label.speed_bin) &&
           (!direction || *direction == label.direction);
  }
};

struct ConditionalSamples {
  std::vector<WindProfile> profiles;
  double acceptance_rate = 0.0;
  std::uint64_t draws = 0;
};

inline constexpr std::uint64_t kDefaultMaxDraws = 100'000'000;

/// Joint vector of a profile: micro elements followed by macro (u, v).
Eigen::VectorXd joint_vector(const WindProfile& profile);
/// Decodes a joint vector back to a profile with the label implied by its macro elements.
WindProfile decode_joint(const Eigen::VectorXd& joint, std::size_t altitude_count,
                         const ConditionLayout& layout, const SpeedBins& bins);

struct GmmPipelineOptions {
  Eigen::Index pca_components = 7;
  std::vector<int> k_grid = [] {
    std::vector<int> g;
    for (int k = 1; k <= 40; ++k) g.push_back(k);
    return g;
  }();
  EmOptions em;
  std::uint64_t seed = 0;
};

struct GmmFitReport {
  KSelection selection;
  Eigen::VectorXd pca_ratio;
};

GmmPipeline fit_gmm_pipeline(const Dataset& dataset, const GmmPipelineOptions& options,
                             GmmFitReport* report = nullptr);

/// Rejection sampling: draw joint samples and keep those whose decoded label
/// matches the query. Throws NoMassError when nothing is accepted.
ConditionalSamples conditional_sample(const GmmPipeline& pipeline, const ConditionQuery& query,
                                      std::size_t n, std::uint64_t seed,
                                      std::uint64_t max_draws = kDefaultMaxDraws);

}  // namespace windgen
