#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "windgen/data.hpp"

namespace windgen {

/// Principal axes of a centered design matrix.
struct PcaModel {
  Eigen::MatrixXd components;             // C x d', rows are unit eigenvectors
  Eigen::VectorXd column_means;           // d'
  Eigen::VectorXd explained_variance;     // C, eigenvalues of the 1/N covariance
  Eigen::VectorXd explained_variance_ratio;  // C
  double total_variance = 0.0;

  Eigen::Index component_count() const noexcept { return components.rows(); }
  Eigen::Index input_dim() const noexcept { return components.cols(); }
};

/// Top-`components` eigenvectors of X^T X (X centered) by descending eigenvalue.
/// Eigenvector signs are fixed so the largest-magnitude entry is positive.
PcaModel pca_fit(const Eigen::MatrixXd& X, Eigen::Index components);

Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd pca_reconstruct(const PcaModel& model, const Eigen::VectorXd& y);
/// Row-wise versions: N x d' -> N x C and back.
Eigen::MatrixXd pca_project_rows(const PcaModel& model, const Eigen::MatrixXd& X);
Eigen::MatrixXd pca_reconstruct_rows(const PcaModel& model, const Eigen::MatrixXd& Y);

/// k-nearest-neighbor estimate of KL(P||Q) for samples stored as rows.
/// Neighbor distances get 1e-12 added before taking ratios. Not clamped.
double kl_divergence_knn(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q, int k = 1);

/// KL(P||Q) + KL(Q||P), clamped below at zero.
double symmetrized_kl(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q, int k = 1);

/// Per-altitude mean and population standard deviation of sqrt(u^2 + v^2).
struct ProfileStats {
  std::vector<double> mean;
  std::vector<double> std;
};

ProfileStats profile_stats(std::span<const WindProfile> samples);

/// N x 2 matrix of altitude-averaged (u, v).
Eigen::MatrixXd altitude_averaged_uv(std::span<const WindProfile> samples);
/// N x 2 matrix of (u, v) at one altitude index.
Eigen::MatrixXd uv_at_altitude(std::span<const WindProfile> samples, std::size_t altitude);

}  // namespace windgen
