#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tende/estimators.hpp"
#include "tende/systems.hpp"

namespace tende {

/// Everything one estimate run needs.
struct RunConfig {
  SystemSpec system{};
  Eigen::Index n_samples = 10000;  // rows of the TE dataset
  int k = 1;
  int l = 1;
  std::vector<Direction> directions{Direction::kXToY, Direction::kYToX};
  EstimatorConfig estimator{};
  TrainConfig train{};
  int n_seeds = 5;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.0;
  bool all_variants = false;
  int threads = 1;
  std::filesystem::path output_dir = ".";

  void validate() const;
  PipelineConfig pipeline(Direction direction) const;
};

/// Flat "key = value" text; '#' starts a comment. Throws std::invalid_argument
/// on a line without '=' or a repeated key.
std::map<std::string, std::string> parse_key_values(std::istream& is);
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

/// Applies recognized keys to `cfg`. Throws std::invalid_argument on an unknown key
/// or an unparsable value.
void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& values);

/// Recognized configuration keys, in documentation order.
const std::vector<std::string>& config_keys();

struct ResultRow {
  std::string system;
  long long n = 0;
  double param = 0.0;  // swept value: lambda or d
  std::string direction;
  std::string variant;
  int seed = 0;
  double estimate = 0.0;
  std::optional<double> truth;
  double wall_seconds = 0.0;

  bool operator==(const ResultRow&) const = default;
};

inline constexpr const char* kResultHeader =
    "system,N,param,direction,variant,seed,estimate,truth,wall_time_s";

/// Six significant digits, as written to CSV.
std::string format_number(double v);

void write_result_row(std::ostream& os, const ResultRow& row);
/// Parses a CSV produced by write_results/append_results. Throws IoError on a bad header or row.
std::vector<ResultRow> parse_results(std::istream& is);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

/// Appends rows, writing the header only when the file is new or empty. Refuses
/// (IoError) to append to a file whose header differs.
void append_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

/// Mean and sample std of `estimate` grouped by (system, N, param, direction, variant).
struct ResultSummary {
  std::string system;
  long long n = 0;
  double param = 0.0;
  std::string direction;
  std::string variant;
  double mean = 0.0;
  double std_dev = 0.0;
  std::optional<double> truth;
  int seeds = 0;
};
std::vector<ResultSummary> summarize_rows(const std::vector<ResultRow>& rows);

struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // empty or same length as y
  bool truth = false;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<ChartSeries> series;
};

/// Line chart with error bars. Each series is one polyline; truth series are dashed
/// and tagged class="truth".
void write_svg(std::ostream& os, const Chart& chart);
void write_svg(const std::filesystem::path& path, const Chart& chart);

/// Santa Fe column positions (0-based) for each channel.
struct SantaFeColumns {
  int heart = 0;
  int respiration = 1;
  int oxygen = 2;
};

/// Parses "h,r,o" into column positions.
SantaFeColumns parse_santa_fe_columns(const std::string& spec);

inline constexpr Eigen::Index kSantaFeBegin = 2350;
inline constexpr Eigen::Index kSantaFeEnd = 3550;

struct SantaFeSeries {
  Eigen::VectorXd heart;
  Eigen::VectorXd respiration;
  Eigen::VectorXd oxygen;
};

/// Reads the whitespace-delimited recording, keeps rows [2350, 3550) and
/// standardizes each channel. Throws IoError on unreadable, malformed or short input.
SantaFeSeries load_santa_fe(std::istream& is, const SantaFeColumns& columns = {});
SantaFeSeries load_santa_fe(const std::filesystem::path& path, const SantaFeColumns& columns = {});

/// Progress hook: called after each finished configuration with its rows.
using RowSink = std::function<void(const std::vector<ResultRow>&)>;

struct SantaFeOptions {
  int l = 2;
  int k_max = 5;
  int n_seeds = 5;
  std::uint64_t seed = 0;
  TrainConfig train{};
  EstimatorConfig estimator{};
  int threads = 1;
};

/// TE(k, l) for k = 1..k_max in both directions between respiration and heart rate.
std::vector<ResultRow> run_santa_fe(const SantaFeSeries& data, const SantaFeOptions& opt,
                                    const RowSink& sink = {});

struct BenchmarkOptions {
  int n_seeds = 5;
  std::uint64_t seed = 0;
  Eigen::Index n_samples = 10000;
  TrainConfig train{};
  EstimatorConfig estimator{};
  bool all_variants = false;
  int threads = 1;
};

/// Suite names: sample_size, coupling, redundant, linear_stacking, halfcube, cdf.
const std::vector<std::string>& benchmark_suites();

/// One line chart's worth of sweep points.
struct SweepPlan {
  std::string figure;      // output file stem
  std::string x_label;
  SystemSpec system;
  std::string system_name;  // written to the system column
  std::vector<double> values;
  std::vector<Direction> directions;
  Eigen::Index n_samples = 10000;
  /// Series of length t_len for sweep value `v`.
  std::function<TimeSeriesPair(double v, Eigen::Index t_len, Rng& rng)> make;
  /// Ground truth at `v`, if known.
  std::function<std::optional<double>(double v, Direction dir)> truth;
  bool sweeps_samples = false;  // values are sample sizes
};

std::vector<SweepPlan> plan_suite(const std::string& suite, const BenchmarkOptions& opt);

/// Runs one sweep; rows come out ordered by value, direction, variant, seed.
std::vector<ResultRow> run_sweep(const SweepPlan& plan, const BenchmarkOptions& opt,
                                 const RowSink& sink = {});

/// Chart of mean +- std per variant and direction, with the truth curve if known.
Chart sweep_chart(const SweepPlan& plan, const std::vector<ResultRow>& rows);

}  // namespace tende
