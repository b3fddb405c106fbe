#include "tende/systems.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "tende/errors.hpp"

namespace tende {

void TimeSeriesPair::validate() const {
  if (x.rows() != y.rows()) throw std::invalid_argument("TimeSeriesPair: x and y lengths differ");
  if (!x.allFinite() || !y.allFinite()) {
    throw std::invalid_argument("TimeSeriesPair: non-finite entries");
  }
}

std::string to_string(Direction d) { return d == Direction::kXToY ? "x_to_y" : "y_to_x"; }

Direction parse_direction(const std::string& s) {
  if (s == "x_to_y" || s == "xy") return Direction::kXToY;
  if (s == "y_to_x" || s == "yx") return Direction::kYToX;
  throw std::invalid_argument("unknown direction '" + s + "'");
}

TimeSeriesPair swap_roles(const TimeSeriesPair& pair) { return {pair.y, pair.x}; }

TeDataset build_te_dataset(const TimeSeriesPair& pair, int k, int l, Direction direction) {
  if (k < 1 || l < 1) throw std::invalid_argument("build_te_dataset: lags must be >= 1");
  pair.validate();
  const Eigen::MatrixXd& src = direction == Direction::kXToY ? pair.x : pair.y;
  const Eigen::MatrixXd& tgt = direction == Direction::kXToY ? pair.y : pair.x;
  const Eigen::Index t_len = pair.length();
  const Eigen::Index start = std::max(k, l);
  if (t_len <= start) {
    throw std::invalid_argument("build_te_dataset: series of length " + std::to_string(t_len) +
                                " too short for lags (" + std::to_string(k) + ", " +
                                std::to_string(l) + ")");
  }
  const Eigen::Index n = t_len - start;
  const Eigen::Index nx = src.cols(), ny = tgt.cols();

  TeDataset d;
  d.k = k;
  d.l = l;
  d.y = tgt.bottomRows(n);
  d.x.resize(n, k * nx);
  d.z.resize(n, l * ny);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index t = start + i;
    for (int lag = 1; lag <= k; ++lag) d.x.block(i, (lag - 1) * nx, 1, nx) = src.row(t - lag);
    for (int lag = 1; lag <= l; ++lag) d.z.block(i, (lag - 1) * ny, 1, ny) = tgt.row(t - lag);
  }
  return d;
}

namespace {

void standardize_columns(Eigen::MatrixXd& m) {
  if (m.rows() == 0) return;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    auto col = m.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(m.rows()));
    if (sd > 0.0) col /= sd;
  }
}

}  // namespace

void standardize(TeDataset& data) {
  standardize_columns(data.y);
  standardize_columns(data.x);
  standardize_columns(data.z);
}

TeDataset select_rows(const TeDataset& data, const std::vector<Eigen::Index>& rows) {
  TeDataset out;
  out.k = data.k;
  out.l = data.l;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.y.resize(n, data.y.cols());
  out.x.resize(n, data.x.cols());
  out.z.resize(n, data.z.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    out.y.row(i) = data.y.row(r);
    out.x.row(i) = data.x.row(r);
    out.z.row(i) = data.z.row(r);
  }
  return out;
}

void LinearGaussianParams::validate() const {
  if (!(std::abs(b_x) < 1.0) || !(std::abs(b_y) < 1.0)) {
    throw std::invalid_argument("linear Gaussian system needs |b_x|, |b_y| < 1");
  }
  if (!(sigma_x2 > 0.0) || !(sigma_y2 > 0.0)) {
    throw std::invalid_argument("linear Gaussian system needs positive innovation variances");
  }
}

void JointSystemParams::validate() const {
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("joint system needs |rho| < 1");
}

TimeSeriesPair gen_linear_gaussian(const LinearGaussianParams& p, Eigen::Index t_len, Rng& rng) {
  p.validate();
  if (t_len < 1) throw std::invalid_argument("gen_linear_gaussian: length must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sx = std::sqrt(p.sigma_x2), sy = std::sqrt(p.sigma_y2);
  TimeSeriesPair out{Eigen::MatrixXd(t_len, 1), Eigen::MatrixXd(t_len, 1)};
  double x = 0.0, y = 0.0;
  for (Eigen::Index t = -kVarBurnIn; t < t_len; ++t) {
    const double ex = sx * normal(rng);
    const double ey = sy * normal(rng);
    const double x_next = p.b_x * x + p.lambda * y + ex;
    const double y_next = p.b_y * y + ey;
    x = x_next;
    y = y_next;
    if (t >= 0) {
      out.x(t, 0) = x;
      out.y(t, 0) = y;
    }
  }
  return out;
}

Eigen::Matrix2d linear_gaussian_stationary_covariance(const LinearGaussianParams& p) {
  p.validate();
  Eigen::Matrix2d a;
  a << p.b_x, p.lambda, 0.0, p.b_y;
  // vec(S) = (I - A kron A)^{-1} vec(Q), column-major vec.
  Eigen::Matrix4d kron;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) kron.block<2, 2>(2 * i, 2 * j) = a(i, j) * a;
  Eigen::Vector4d q(p.sigma_x2, 0.0, 0.0, p.sigma_y2);
  const Eigen::Vector4d s = (Eigen::Matrix4d::Identity() - kron).partialPivLu().solve(q);
  Eigen::Matrix2d cov;
  cov << s[0], s[2], s[1], s[3];
  return 0.5 * (cov + cov.transpose());
}

double te_linear_gaussian_truth(const LinearGaussianParams& p, Direction direction, int k, int l) {
  if (k < 1 || l < 1) throw std::invalid_argument("te_linear_gaussian_truth: lags must be >= 1");
  p.validate();
  // y is autonomous, so its past carries everything x's past could add.
  if (direction == Direction::kXToY || p.lambda == 0.0) return 0.0;

  // Given one lag of both series, x_t is left with its innovation only, so
  // TE = 1/2 log(Var(x_t | x_{t-1..t-l}) / sigma_x^2) for any k >= 1.
  Eigen::Matrix2d a;
  a << p.b_x, p.lambda, 0.0, p.b_y;
  const Eigen::Matrix2d s0 = linear_gaussian_stationary_covariance(p);
  std::vector<double> gamma(static_cast<std::size_t>(l) + 1);
  Eigen::Matrix2d ah = Eigen::Matrix2d::Identity();
  for (int h = 0; h <= l; ++h) {
    gamma[static_cast<std::size_t>(h)] = (ah * s0)(0, 0);
    ah = a * ah;
  }
  Eigen::MatrixXd g(l, l);
  Eigen::VectorXd c(l);
  for (int i = 0; i < l; ++i) {
    c[i] = gamma[static_cast<std::size_t>(i) + 1];
    for (int j = 0; j < l; ++j) g(i, j) = gamma[static_cast<std::size_t>(std::abs(i - j))];
  }
  const double cond_var = gamma[0] - c.dot(g.ldlt().solve(c));
  return 0.5 * std::log(cond_var / p.sigma_x2);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

TimeSeriesPair gen_joint_system(const JointSystemParams& p, Eigen::Index t_len, Rng& rng) {
  p.validate();
  if (t_len < 1) throw std::invalid_argument("gen_joint_system: length must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double c = std::sqrt(1.0 - p.rho * p.rho);
  TimeSeriesPair out{Eigen::MatrixXd(t_len, 1), Eigen::MatrixXd(t_len, 1)};
  double y = normal(rng);
  double x = normal(rng);
  double z = normal(rng);
  out.x(0, 0) = x;
  out.y(0, 0) = y;
  for (Eigen::Index t = 1; t < t_len; ++t) {
    y = y < p.lambda ? z : p.rho * x + c * z;
    x = normal(rng);
    z = normal(rng);
    out.x(t, 0) = x;
    out.y(t, 0) = y;
  }
  return out;
}

double te_joint_truth(const JointSystemParams& p, Direction direction) {
  p.validate();
  if (direction == Direction::kYToX) return 0.0;
  return -0.5 * (1.0 - normal_cdf(p.lambda)) * std::log1p(-p.rho * p.rho);
}

TimeSeriesPair stack_redundant(const TimeSeriesPair& pair, int d, Rng& rng) {
  if (d < 0) throw std::invalid_argument("stack_redundant: d must be nonnegative");
  pair.validate();
  const Eigen::Index n = pair.length();
  std::normal_distribution<double> normal(0.0, 1.0);
  TimeSeriesPair out{Eigen::MatrixXd(n, pair.x.cols() + d), Eigen::MatrixXd(n, pair.y.cols() + d)};
  out.x.leftCols(pair.x.cols()) = pair.x;
  out.y.leftCols(pair.y.cols()) = pair.y;
  for (int j = 0; j < d; ++j)
    for (Eigen::Index t = 0; t < n; ++t) out.x(t, pair.x.cols() + j) = normal(rng);
  for (int j = 0; j < d; ++j)
    for (Eigen::Index t = 0; t < n; ++t) out.y(t, pair.y.cols() + j) = normal(rng);
  return out;
}

std::string to_string(SystemKind kind) {
  return kind == SystemKind::kLinearGaussian ? "linear_gaussian" : "joint";
}

SystemKind parse_system_kind(const std::string& s) {
  if (s == "linear_gaussian" || s == "linear" || s == "gaussian") return SystemKind::kLinearGaussian;
  if (s == "joint") return SystemKind::kJoint;
  throw std::invalid_argument("unknown system '" + s + "'");
}

double SystemSpec::lambda() const {
  return kind == SystemKind::kLinearGaussian ? linear.lambda : joint.lambda;
}

void SystemSpec::set_lambda(double value) {
  if (kind == SystemKind::kLinearGaussian) {
    linear.lambda = value;
  } else {
    joint.lambda = value;
  }
}

TimeSeriesPair SystemSpec::generate(Eigen::Index t_len, Rng& rng) const {
  return kind == SystemKind::kLinearGaussian ? gen_linear_gaussian(linear, t_len, rng)
                                             : gen_joint_system(joint, t_len, rng);
}

double SystemSpec::truth(Direction direction, int k, int l) const {
  return kind == SystemKind::kLinearGaussian ? te_linear_gaussian_truth(linear, direction, k, l)
                                             : te_joint_truth(joint, direction);
}

StackedSystem stack_linear(const SystemSpec& system, int d, Eigen::Index t_len, Rng& rng,
                           Direction direction, int k, int l) {
  if (d < 1) throw std::invalid_argument("stack_linear: d must be >= 1");
  StackedSystem out;
  out.pair.x.resize(t_len, 0);
  out.pair.y.resize(t_len, 0);
  for (int j = 0; j < d; ++j) {
    const TimeSeriesPair rep = system.generate(t_len, rng);
    const Eigen::Index cx = out.pair.x.cols(), cy = out.pair.y.cols();
    out.pair.x.conservativeResize(Eigen::NoChange, cx + rep.x.cols());
    out.pair.y.conservativeResize(Eigen::NoChange, cy + rep.y.cols());
    out.pair.x.rightCols(rep.x.cols()) = rep.x;
    out.pair.y.rightCols(rep.y.cols()) = rep.y;
  }
  out.truth = d * system.truth(direction, k, l);
  return out;
}

TimeSeriesPair transform_half_cube(const TimeSeriesPair& pair) {
  auto f = [](double v) { return v * std::sqrt(std::abs(v)); };
  return {pair.x.unaryExpr(f), pair.y.unaryExpr(f)};
}

TimeSeriesPair transform_gauss_cdf(const TimeSeriesPair& pair) {
  return {pair.x.unaryExpr(&normal_cdf), pair.y.unaryExpr(&normal_cdf)};
}

void write_series(std::ostream& os, const TimeSeriesPair& pair) {
  pair.validate();
  os << "# " << pair.x.cols() << ' ' << pair.y.cols() << ' ' << pair.length() << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index t = 0; t < pair.length(); ++t) {
    bool first = true;
    for (Eigen::Index c = 0; c < pair.x.cols(); ++c, first = false) {
      os << (first ? "" : " ") << pair.x(t, c);
    }
    for (Eigen::Index c = 0; c < pair.y.cols(); ++c, first = false) {
      os << (first ? "" : " ") << pair.y(t, c);
    }
    os << '\n';
  }
}

void write_series(const std::filesystem::path& path, const TimeSeriesPair& pair) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  write_series(os, pair);
  if (!os) throw IoError("failed writing: " + path.string());
}

TimeSeriesPair read_series(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("series: missing header");
  std::istringstream header(line);
  std::string hash;
  Eigen::Index nx = 0, ny = 0, t_len = 0;
  if (!(header >> hash >> nx >> ny >> t_len) || hash != "#" || nx < 0 || ny < 0 || t_len < 0) {
    throw IoError("series: bad header '" + line + "'");
  }
  TimeSeriesPair pair{Eigen::MatrixXd(t_len, nx), Eigen::MatrixXd(t_len, ny)};
  for (Eigen::Index t = 0; t < t_len; ++t) {
    if (!std::getline(is, line)) throw IoError("series: truncated at row " + std::to_string(t));
    std::istringstream row(line);
    for (Eigen::Index c = 0; c < nx; ++c) {
      if (!(row >> pair.x(t, c))) throw IoError("series: malformed row " + std::to_string(t));
    }
    for (Eigen::Index c = 0; c < ny; ++c) {
      if (!(row >> pair.y(t, c))) throw IoError("series: malformed row " + std::to_string(t));
    }
    std::string extra;
    if (row >> extra) throw IoError("series: extra values on row " + std::to_string(t));
  }
  pair.validate();
  return pair;
}

TimeSeriesPair read_series(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path.string());
  return read_series(is);
}

}  // namespace tende
