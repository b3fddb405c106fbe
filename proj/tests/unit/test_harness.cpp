#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tende/errors.hpp"
#include "tende/harness.hpp"

using namespace tende;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ResultRow sample_row(int seed, double estimate) {
  ResultRow r;
  r.system = "joint";
  r.n = 10000;
  r.param = 0.5;
  r.direction = "x_to_y";
  r.variant = "c1";
  r.seed = seed;
  r.estimate = estimate;
  r.truth = 0.256199;
  r.wall_seconds = 41.25;
  return r;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("config text parsing") {
  std::istringstream in(
      "# comment line\n"
      "system = linear_gaussian\n"
      "lambda=0.25   # trailing comment\n"
      "\n"
      "direction = both\n"
      "epochs = 12\n"
      "train_time = uniform\n"
      "ema_decay = 0\n");
  const auto kv = parse_key_values(in);
  CHECK(kv.size() == 6);
  CHECK(kv.at("lambda") == "0.25");
  RunConfig cfg;
  apply_config(cfg, kv);
  CHECK(cfg.system.kind == SystemKind::kLinearGaussian);
  CHECK(cfg.system.lambda() == 0.25);
  CHECK(cfg.directions.size() == 2);
  CHECK(cfg.train.epochs == 12);
  CHECK(cfg.train.time_sampling == TrainTimeSampling::kUniform);
  CHECK(cfg.train.ema_decay == 0.0);

  // Later maps override earlier ones, which is how CLI flags beat the file.
  apply_config(cfg, {{"epochs", "3"}, {"approach", "j"}, {"option", "2"}});
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.estimator.approach == Approach::kJoint);
  CHECK(cfg.estimator.option == EstimatorOption::kGaussianReference);

  std::istringstream no_eq("epochs 3\n");
  CHECK_THROWS_AS(parse_key_values(no_eq), std::invalid_argument);
  std::istringstream twice("k=1\nk=2\n");
  CHECK_THROWS_AS(parse_key_values(twice), std::invalid_argument);
  CHECK_THROWS_AS(apply_config(cfg, {{"colour", "red"}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_config(cfg, {{"epochs", "many"}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_config(cfg, {{"option", "3"}}), std::invalid_argument);
  CHECK_THROWS_AS(read_key_values("/nonexistent/tende.cfg"), IoError);
  for (const auto& key : config_keys()) CHECK_FALSE(key.empty());
}

TEST_CASE("result rows: six significant digits and round trip") {
  CHECK(format_number(0.123456789) == "0.123457");
  CHECK(format_number(1234567.0) == "1.23457e+06");
  CHECK(format_number(std::nan("")) == "nan");
  std::ostringstream os;
  os << kResultHeader << '\n';
  ResultRow a = sample_row(0, 0.2345678);
  ResultRow b = sample_row(1, -0.001);
  b.truth.reset();
  write_result_row(os, a);
  write_result_row(os, b);
  std::istringstream in(os.str());
  const auto rows = parse_results(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].estimate == 0.234568);
  CHECK_FALSE(rows[1].truth.has_value());
  // A second pass reproduces the text exactly.
  std::ostringstream again;
  again << kResultHeader << '\n';
  for (const auto& r : rows) write_result_row(again, r);
  CHECK(again.str() == os.str());

  std::istringstream bad_header("system,N\n");
  CHECK_THROWS_AS(parse_results(bad_header), IoError);
  std::istringstream short_row(std::string(kResultHeader) + "\njoint,1,2\n");
  CHECK_THROWS_AS(parse_results(short_row), IoError);
  ResultRow comma = a;
  comma.system = "a,b";
  CHECK_THROWS_AS(write_result_row(os, comma), std::invalid_argument);
}

TEST_CASE("append_results is append-safe") {
  TempDir dir("tende_results_test");
  const fs::path csv = dir.path / "sub" / "r.csv";
  append_results(csv, {sample_row(0, 0.1), sample_row(1, 0.2)});
  append_results(csv, {sample_row(2, 0.3)});
  const auto rows = read_results(csv);
  CHECK(rows.size() == 3);
  CHECK(rows[2].seed == 2);
  std::ifstream in(csv);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(count(ss.str(), "system,N,") == 1);

  const fs::path other = dir.path / "other.csv";
  std::ofstream(other) << "a,b,c\n";
  CHECK_THROWS_AS(append_results(other, {sample_row(0, 0.1)}), IoError);
  CHECK_THROWS_AS(read_results(dir.path / "missing.csv"), IoError);

  const auto summary = summarize_rows(rows);
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].mean == doctest::Approx(0.2));
  CHECK(summary[0].std_dev == doctest::Approx(0.1));
  CHECK(summary[0].seeds == 3);
}

TEST_CASE("svg chart with a single truth polyline") {
  Chart c{"coupling <joint>", "lambda", "TE (nats)", {}};
  c.series.push_back({"c1", {0, 0.5, 1}, {0.4, 0.25, 0.1}, {0.01, 0.02, 0.01}, false});
  c.series.push_back({"c2", {0, 0.5, 1}, {0.38, 0.27, 0.12}, {}, false});
  c.series.push_back({"truth", {0, 0.5, 1}, {0.415, 0.256, 0.132}, {}, true});
  std::ostringstream os;
  write_svg(os, c);
  const std::string svg = os.str();
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(count(svg, "<polyline") == 3);
  CHECK(count(svg, "class=\"truth\"") == 1);
  CHECK(svg.find("&lt;joint&gt;") != std::string::npos);

  c.series[1].err = {1.0};
  CHECK_THROWS_AS(write_svg(os, c), std::invalid_argument);
}

TEST_CASE("sweep plans and their charts") {
  BenchmarkOptions opt;
  CHECK(benchmark_suites().size() == 6);
  const auto size_plans = plan_suite("sample_size", opt);
  REQUIRE(size_plans.size() == 2);
  CHECK(size_plans[0].values == std::vector<double>{500, 1000, 5000, 10000});
  CHECK(size_plans[0].directions.size() == 2);
  const auto coupling = plan_suite("coupling", opt);
  REQUIRE(coupling.size() == 2);
  CHECK(coupling[0].values.size() == 9);
  CHECK(coupling[1].truth(0.5, Direction::kXToY).value() == doctest::Approx(0.2562).epsilon(1e-3));
  CHECK(plan_suite("halfcube", opt).size() == 6);
  CHECK_THROWS_AS(plan_suite("nope", opt), std::invalid_argument);

  // Tiny end-to-end sweep: rows and a chart with exactly one truth curve.
  SweepPlan plan = coupling[1];
  plan.values = {0.0, 1.0};
  plan.n_samples = 200;
  BenchmarkOptions small;
  small.n_seeds = 2;
  small.train.epochs = 1;
  small.train.layout.hidden_width = 8;
  small.estimator.mc_time_draws_per_point = 1;
  int chunks = 0;
  const auto rows = run_sweep(plan, small, [&](const std::vector<ResultRow>&) { ++chunks; });
  CHECK(rows.size() == 4);
  CHECK(chunks == 2);
  CHECK(rows[0].truth.has_value());
  const Chart chart = sweep_chart(plan, rows);
  int truths = 0;
  for (const auto& s : chart.series) truths += s.truth;
  CHECK(truths == 1);
}

TEST_CASE("santa fe loader") {
  std::ostringstream file;
  for (int i = 0; i < 3600; ++i) {
    file << 60.0 + std::sin(i * 0.1) << ' ' << 1000.0 * std::cos(i * 0.07) << ' ' << 95.0 + (i % 7) << '\n';
  }
  std::istringstream in(file.str());
  const SantaFeSeries s = load_santa_fe(in);
  CHECK(s.heart.size() == kSantaFeEnd - kSantaFeBegin);
  CHECK(std::abs(s.respiration.mean()) < 1e-12);
  CHECK(s.oxygen.squaredNorm() / s.oxygen.size() == doctest::Approx(1.0));
  // The slice starts at row 2350.
  const bool rising = s.heart[1] > s.heart[0];
  CHECK(rising == (std::sin(2351 * 0.1) > std::sin(2350 * 0.1)));

  std::istringstream swapped(file.str());
  const SantaFeSeries t = load_santa_fe(swapped, parse_santa_fe_columns("1,0,2"));
  CHECK(t.heart == s.respiration);

  std::istringstream short_file("1 2 3\n");
  CHECK_THROWS_AS(load_santa_fe(short_file), IoError);
  std::istringstream junk("1 x 3\n");
  CHECK_THROWS_AS(load_santa_fe(junk), IoError);
  CHECK_THROWS_AS(parse_santa_fe_columns("0,0,1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_santa_fe_columns("0,1"), std::invalid_argument);
  CHECK_THROWS_AS(load_santa_fe(fs::path("/nonexistent/b1.txt")), IoError);
}
