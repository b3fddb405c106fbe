#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>

#include <Eigen/Core>

namespace tende {

using Rng = std::mt19937_64;

/// Two synchronized series; row t holds time step t.
struct TimeSeriesPair {
  Eigen::MatrixXd x;  // T_len x N_x
  Eigen::MatrixXd y;  // T_len x N_y

  Eigen::Index length() const { return x.rows(); }
  /// Throws std::invalid_argument on unequal lengths or non-finite entries.
  void validate() const;
};

enum class Direction { kXToY, kYToX };

std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

/// Exchanges the source and target roles.
TimeSeriesPair swap_roles(const TimeSeriesPair& pair);

/// i.i.d. triplets for TE(source -> target) = I(Y; X | Z).
struct TeDataset {
  Eigen::MatrixXd y;  // n x N_y       target now
  Eigen::MatrixXd x;  // n x (k * N_x) source past, lag 1 first
  Eigen::MatrixXd z;  // n x (l * N_y) target past, lag 1 first
  int k = 1;
  int l = 1;

  Eigen::Index size() const { return y.rows(); }
};

/// Rows t = max(k, l) .. T_len-1 (0-based). Direction kYToX treats y as the source.
TeDataset build_te_dataset(const TimeSeriesPair& pair, int k, int l, Direction direction);

/// Rescales every column of every block to zero mean and unit variance.
/// Constant columns are only centered.
void standardize(TeDataset& data);

/// Keeps the listed rows, in order.
TeDataset select_rows(const TeDataset& data, const std::vector<Eigen::Index>& rows);

struct LinearGaussianParams {
  double b_x = 0.5;
  double b_y = 0.5;
  double lambda = 0.0;
  double sigma_x2 = 1.0;
  double sigma_y2 = 1.0;

  void validate() const;
};

struct JointSystemParams {
  double lambda = 0.5;
  double rho = 0.9;

  void validate() const;
};

inline constexpr Eigen::Index kVarBurnIn = 1000;

/// x_t = b_x x_{t-1} + lambda y_{t-1} + e^x_t,  y_t = b_y y_{t-1} + e^y_t.
TimeSeriesPair gen_linear_gaussian(const LinearGaussianParams& p, Eigen::Index t_len, Rng& rng);

/// Stationary covariance of (x_t, y_t) for the VAR(1) above.
Eigen::Matrix2d linear_gaussian_stationary_covariance(const LinearGaussianParams& p);

/// Exact TE of the linear Gaussian system in nats, for any lags >= 1.
double te_linear_gaussian_truth(const LinearGaussianParams& p, Direction direction, int k = 1,
                                int l = 1);

/// y_t = z_{t-1} if y_{t-1} < lambda, else rho x_{t-1} + sqrt(1 - rho^2) z_{t-1}.
TimeSeriesPair gen_joint_system(const JointSystemParams& p, Eigen::Index t_len, Rng& rng);

/// -(1/2)(1 - Phi(lambda)) log(1 - rho^2) for x -> y, zero for y -> x.
double te_joint_truth(const JointSystemParams& p, Direction direction);

/// Standard normal CDF.
double normal_cdf(double x);

/// Appends d standard-normal white-noise columns to both x and y.
TimeSeriesPair stack_redundant(const TimeSeriesPair& pair, int d, Rng& rng);

enum class SystemKind { kLinearGaussian, kJoint };

std::string to_string(SystemKind kind);
SystemKind parse_system_kind(const std::string& s);

/// A benchmark system with its parameters.
struct SystemSpec {
  SystemKind kind = SystemKind::kJoint;
  LinearGaussianParams linear{};
  JointSystemParams joint{};

  /// Coupling parameter shared by both families.
  double lambda() const;
  void set_lambda(double lambda);

  TimeSeriesPair generate(Eigen::Index t_len, Rng& rng) const;
  double truth(Direction direction, int k = 1, int l = 1) const;
};

struct StackedSystem {
  TimeSeriesPair pair;
  double truth = 0.0;
};

/// d independent replicates stacked columnwise; TE adds across replicates.
StackedSystem stack_linear(const SystemSpec& system, int d, Eigen::Index t_len, Rng& rng,
                           Direction direction = Direction::kXToY, int k = 1, int l = 1);

/// x -> x sqrt(|x|), elementwise.
TimeSeriesPair transform_half_cube(const TimeSeriesPair& pair);
/// x -> Phi(x), elementwise.
TimeSeriesPair transform_gauss_cdf(const TimeSeriesPair& pair);

/// Text format: header "# N_x N_y T_len", then one line per step with the
/// x columns followed by the y columns.
void write_series(std::ostream& os, const TimeSeriesPair& pair);
void write_series(const std::filesystem::path& path, const TimeSeriesPair& pair);
TimeSeriesPair read_series(std::istream& is);
TimeSeriesPair read_series(const std::filesystem::path& path);

}  // namespace tende
