#include "tende/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "tende/parallel.hpp"

namespace tende {

void GaussianBlocks::validate() const {
  const auto m = static_cast<int>(covariance.rows());
  if (covariance.cols() != m) throw std::invalid_argument("GaussianBlocks: covariance not square");
  if (x.empty() || y.empty()) throw std::invalid_argument("GaussianBlocks: empty X or Y block");
  std::vector<int> seen(static_cast<std::size_t>(m), 0);
  for (const auto* block : {&x, &y, &z}) {
    for (int i : *block) {
      if (i < 0 || i >= m) throw std::invalid_argument("GaussianBlocks: index out of range");
      if (seen[static_cast<std::size_t>(i)]++) {
        throw std::invalid_argument("GaussianBlocks: blocks overlap");
      }
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw std::invalid_argument("GaussianBlocks: blocks do not cover the covariance");
  }
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) {
    throw std::invalid_argument("GaussianBlocks: covariance not symmetric");
  }
  if (Eigen::LLT<Eigen::MatrixXd>(covariance).info() != Eigen::Success) {
    throw std::invalid_argument("GaussianBlocks: covariance not positive definite");
  }
}

namespace {

double log_det_sub(const Eigen::MatrixXd& cov, const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) sub(i, j) = cov(idx[i], idx[j]);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("gaussian_cmi: singular block");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

std::vector<int> concat(std::initializer_list<const std::vector<int>*> parts) {
  std::vector<int> out;
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

}  // namespace

double gaussian_cmi(const GaussianBlocks& b) {
  b.validate();
  const Eigen::MatrixXd& c = b.covariance;
  return 0.5 * (log_det_sub(c, concat({&b.x, &b.z})) + log_det_sub(c, concat({&b.y, &b.z})) -
                log_det_sub(c, b.z) - log_det_sub(c, concat({&b.x, &b.y, &b.z})));
}

GaussianBlocks linear_gaussian_te_blocks(const LinearGaussianParams& p, Direction direction, int k,
                                         int l) {
  if (k < 1 || l < 1) throw std::invalid_argument("linear_gaussian_te_blocks: lags must be >= 1");
  p.validate();
  const int lags = std::max(k, l);
  Eigen::Matrix2d a;
  a << p.b_x, p.lambda, 0.0, p.b_y;
  // gamma[h] = Cov(s_{t+h}, s_t) for the state s = (x, y).
  std::vector<Eigen::Matrix2d> gamma(static_cast<std::size_t>(lags) + 1);
  gamma[0] = linear_gaussian_stationary_covariance(p);
  for (int h = 1; h <= lags; ++h) gamma[static_cast<std::size_t>(h)] = a * gamma[static_cast<std::size_t>(h) - 1];

  // Stacked (s_t, s_{t-1}, ..., s_{t-lags}).
  const int m = 2 * (lags + 1);
  Eigen::MatrixXd cov(m, m);
  for (int i = 0; i <= lags; ++i) {
    for (int j = 0; j <= lags; ++j) {
      const Eigen::Matrix2d g = j >= i ? gamma[static_cast<std::size_t>(j - i)]
                                       : gamma[static_cast<std::size_t>(i - j)].transpose();
      cov.block<2, 2>(2 * i, 2 * j) = g;
    }
  }
  const int src = direction == Direction::kXToY ? 0 : 1;
  const int tgt = 1 - src;
  std::vector<int> used, xs, zs;
  const std::vector<int> ys{tgt};
  for (int h = 1; h <= k; ++h) xs.push_back(2 * h + src);
  for (int h = 1; h <= l; ++h) zs.push_back(2 * h + tgt);
  used = concat({&ys, &xs, &zs});

  GaussianBlocks out;
  const auto n = static_cast<Eigen::Index>(used.size());
  out.covariance.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out.covariance(i, j) = cov(used[i], used[j]);
  }
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  int pos = 0;
  for (std::size_t i = 0; i < ys.size(); ++i) out.y.push_back(pos++);
  for (std::size_t i = 0; i < xs.size(); ++i) out.x.push_back(pos++);
  for (std::size_t i = 0; i < zs.size(); ++i) out.z.push_back(pos++);
  return out;
}

double gaussian_cmi_sample(const TeDataset& data) {
  const Eigen::Index n = data.size();
  if (n < 2) throw std::invalid_argument("gaussian_cmi_sample: need at least two rows");
  Eigen::MatrixXd all(n, data.y.cols() + data.x.cols() + data.z.cols());
  all << data.y, data.x, data.z;
  const Eigen::MatrixXd centered = all.rowwise() - all.colwise().mean();
  GaussianBlocks b;
  b.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
  int pos = 0;
  for (Eigen::Index i = 0; i < data.y.cols(); ++i) b.y.push_back(pos++);
  for (Eigen::Index i = 0; i < data.x.cols(); ++i) b.x.push_back(pos++);
  for (Eigen::Index i = 0; i < data.z.cols(); ++i) b.z.push_back(pos++);
  return gaussian_cmi(b);
}

double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: argument must be positive");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double r = 1.0 / (x * x);
  const double series =
      r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r * (1.0 / 240 - r * (1.0 / 132)))));
  return acc + std::log(x) - 0.5 / x - series;
}

double knn_cmi_from_counts(int k_neighbors, std::span<const KnnCounts> counts) {
  if (k_neighbors < 1) throw std::invalid_argument("knn_cmi: k must be >= 1");
  if (counts.empty()) throw std::invalid_argument("knn_cmi: no points");
  double sum = 0.0;
  for (const KnnCounts& c : counts) sum += digamma(c.xz + 1) + digamma(c.yz + 1) - digamma(c.z + 1);
  return digamma(k_neighbors) - sum / static_cast<double>(counts.size());
}

namespace {

// Max-norm distance from row i to every row, per block. Empty blocks give 0.
void block_distances(const Eigen::MatrixXd& block, Eigen::Index i, Eigen::ArrayXd& out) {
  out.setZero(block.rows());
  for (Eigen::Index c = 0; c < block.cols(); ++c) {
    out = out.max((block.col(c).array() - block(i, c)).abs());
  }
}

// Returns false if some point has a zero joint radius.
bool count_neighbors(const TeDataset& d, int k, int threads, std::vector<KnnCounts>& counts) {
  const Eigen::Index n = d.size();
  counts.assign(static_cast<std::size_t>(n), {});
  std::vector<char> degenerate(static_cast<std::size_t>(n), 0);
  const int workers = std::max(1, threads);
  const Eigen::Index chunk = (n + workers - 1) / workers;
  parallel_for(workers, workers, [&](int w) {
    Eigen::ArrayXd dx, dy, dz, joint;
    std::vector<double> scratch(static_cast<std::size_t>(n));
    const Eigen::Index lo = w * chunk, hi = std::min(n, lo + chunk);
    for (Eigen::Index i = lo; i < hi; ++i) {
      block_distances(d.x, i, dx);
      block_distances(d.y, i, dy);
      block_distances(d.z, i, dz);
      joint = dx.max(dy).max(dz);
      joint[i] = std::numeric_limits<double>::infinity();
      std::copy(joint.begin(), joint.end(), scratch.begin());
      std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
      const double eps = scratch[static_cast<std::size_t>(k - 1)];
      if (eps <= 0.0) {
        degenerate[static_cast<std::size_t>(i)] = 1;
        continue;
      }
      KnnCounts c;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i || dz[j] >= eps) continue;
        ++c.z;
        if (dx[j] < eps) ++c.xz;
        if (dy[j] < eps) ++c.yz;
      }
      counts[static_cast<std::size_t>(i)] = c;
    }
  });
  return std::find(degenerate.begin(), degenerate.end(), 1) == degenerate.end();
}

}  // namespace

double knn_cmi(const TeDataset& data, int k_neighbors, int threads) {
  if (k_neighbors < 1) throw std::invalid_argument("knn_cmi: k must be >= 1");
  if (data.size() <= k_neighbors) throw std::invalid_argument("knn_cmi: need more points than k");
  std::vector<KnnCounts> counts;
  if (count_neighbors(data, k_neighbors, threads, counts)) {
    return knn_cmi_from_counts(k_neighbors, counts);
  }
  TeDataset jittered = data;
  Rng rng(0x6a09e667f3bcc908ULL);
  std::uniform_real_distribution<double> u(-kKnnJitter, kKnnJitter);
  for (Eigen::MatrixXd* m : {&jittered.x, &jittered.y, &jittered.z}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] += u(rng);
  }
  if (!count_neighbors(jittered, k_neighbors, threads, counts)) {
    throw std::runtime_error("knn_cmi: more than k exact duplicates survive jitter");
  }
  return knn_cmi_from_counts(k_neighbors, counts);
}

}  // namespace tende
