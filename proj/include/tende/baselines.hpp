#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "tende/systems.hpp"

namespace tende {

/// Covariance of a Gaussian vector with the positions of its X, Y and Z blocks.
struct GaussianBlocks {
  Eigen::MatrixXd covariance;
  std::vector<int> x;
  std::vector<int> y;
  std::vector<int> z;  // may be empty

  /// Throws std::invalid_argument unless the index sets are disjoint, cover
  /// every coordinate, and the covariance is symmetric positive definite.
  void validate() const;
};

/// Exact I(X; Y | Z) in nats: 1/2 log(det S_xz det S_yz / (det S_z det S_xyz)).
double gaussian_cmi(const GaussianBlocks& blocks);

/// Blocks for I(target_t; source past | target past) of the linear Gaussian system,
/// built from the lagged stationary autocovariances.
GaussianBlocks linear_gaussian_te_blocks(const LinearGaussianParams& p, Direction direction, int k,
                                         int l);

/// Plug-in Gaussian CMI from the sample covariance of a dataset (y, x, z blocks).
double gaussian_cmi_sample(const TeDataset& data);

/// Digamma for x >= 1 (and any positive x via recurrence).
double digamma(double x);

inline constexpr double kKnnJitter = 1e-10;

/// Neighbor counts of one query point, strictly inside the joint k-th neighbor radius.
struct KnnCounts {
  int xz = 0;
  int yz = 0;
  int z = 0;
};

/// psi(k) - mean[psi(n_xz + 1) + psi(n_yz + 1) - psi(n_z + 1)].
double knn_cmi_from_counts(int k_neighbors, std::span<const KnnCounts> counts);

/// Frenzel-Pompe k-NN estimate of I(Y; X | Z) with max-norm neighborhoods.
/// Points with a zero joint radius trigger a uniform jitter of amplitude kKnnJitter.
double knn_cmi(const TeDataset& data, int k_neighbors = 5, int threads = 1);

}  // namespace tende
