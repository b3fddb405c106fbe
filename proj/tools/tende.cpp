// Command-line front end: simulate, estimate, benchmark, santafe, selftest.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "tende/baselines.hpp"
#include "tende/errors.hpp"
#include "tende/estimators.hpp"
#include "tende/harness.hpp"
#include "tende/parallel.hpp"
#include "tende/sde.hpp"

namespace fs = std::filesystem;
using namespace tende;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

// Flags named after config keys; only the ones given on the command line are kept.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string file;

  void attach(CLI::App& app) {
    app.add_option("--config", file, "key = value configuration file");
    for (const std::string& key : config_keys()) {
      options[key] = app.add_option("--" + key, values[key], "overrides '" + key + "' from the config file");
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    cfg.threads = configured_threads();
    if (!file.empty()) apply_config(cfg, read_key_values(file));
    std::map<std::string, std::string> given;
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) given[key] = values.at(key);
    }
    apply_config(cfg, given);
    cfg.validate();
    return cfg;
  }
};

TimeSeriesPair apply_transform(const std::string& name, const TimeSeriesPair& p) {
  if (name == "none") return p;
  if (name == "halfcube") return transform_half_cube(p);
  if (name == "cdf") return transform_gauss_cdf(p);
  throw std::invalid_argument("unknown transform '" + name + "'");
}

int cmd_simulate(const ConfigFlags& flags, Eigen::Index length, const std::string& out,
                 const std::string& transform) {
  const RunConfig cfg = flags.resolve();
  if (length < 1) throw std::invalid_argument("length must be positive");
  Rng rng(mix_seed(cfg.seed));
  const TimeSeriesPair pair = apply_transform(transform, cfg.system.generate(length, rng));
  if (out.empty() || out == "-") {
    write_series(std::cout, pair);
  } else {
    write_series(fs::path(out), pair);
  }
  return kExitOk;
}

int cmd_estimate(const ConfigFlags& flags, const std::string& input, const std::string& csv) {
  const RunConfig cfg = flags.resolve();
  std::optional<TimeSeriesPair> data;
  if (!input.empty()) data = read_series(fs::path(input));
  const fs::path out = csv.empty() ? cfg.output_dir / "results.csv" : fs::path(csv);
  const Eigen::Index t_len = cfg.n_samples + std::max(cfg.k, cfg.l);

  for (Direction dir : cfg.directions) {
    const PipelineConfig p = cfg.pipeline(dir);
    SeriesSource source;
    if (data) {
      source = [&](int) { return *data; };
    } else {
      source = [&cfg, t_len, seed = p.base_seed](int s) {
        Rng rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(s)));
        return cfg.system.generate(t_len, rng);
      };
    }
    std::vector<SeedOutcome> outcomes;
    const TeEstimate est = transfer_entropy(source, p, &outcomes);
    std::vector<ResultRow> rows;
    const std::vector<std::pair<Approach, EstimatorOption>> variants =
        cfg.all_variants ? std::vector<std::pair<Approach, EstimatorOption>>{
                               {Approach::kConditionalOnly, EstimatorOption::kDirect},
                               {Approach::kConditionalOnly, EstimatorOption::kGaussianReference},
                               {Approach::kJoint, EstimatorOption::kDirect},
                               {Approach::kJoint, EstimatorOption::kGaussianReference}}
                         : std::vector<std::pair<Approach, EstimatorOption>>{
                               {cfg.estimator.approach, cfg.estimator.option}};
    for (const auto& [a, o] : variants) {
      for (std::size_t s = 0; s < outcomes.size(); ++s) {
        ResultRow r;
        r.system = data ? fs::path(input).stem().string() : to_string(cfg.system.kind);
        r.n = static_cast<long long>(data ? data->length() - std::max(cfg.k, cfg.l) : cfg.n_samples);
        r.param = cfg.system.lambda();
        r.direction = to_string(dir);
        r.variant = variant_name(a, o);
        r.seed = static_cast<int>(s);
        r.estimate = cfg.all_variants ? outcomes[s].variants.get(a, o) : outcomes[s].value;
        if (!data) r.truth = cfg.system.truth(dir, cfg.k, cfg.l);
        r.wall_seconds = outcomes[s].total_seconds;
        rows.push_back(r);
      }
    }
    append_results(out, rows);
    std::printf("TE %s (%s): %.4f +- %.4f nats over %zu seeds", to_string(dir).c_str(),
                variant_name(cfg.estimator.approach, cfg.estimator.option).c_str(), est.value,
                est.std_dev, est.per_seed_values.size());
    if (!data) std::printf("  (truth %.4f)", cfg.system.truth(dir, cfg.k, cfg.l));
    std::printf("\n");
    std::fflush(stdout);
  }
  std::printf("results appended to %s\n", out.string().c_str());
  return kExitOk;
}

int cmd_benchmark(const ConfigFlags& flags, const std::string& suite, const std::string& out_dir) {
  const RunConfig cfg = flags.resolve();
  BenchmarkOptions opt;
  opt.n_seeds = cfg.n_seeds;
  opt.seed = cfg.seed;
  opt.n_samples = cfg.n_samples;
  opt.train = cfg.train;
  opt.estimator = cfg.estimator;
  opt.all_variants = cfg.all_variants;
  opt.threads = cfg.threads;
  const fs::path dir = out_dir.empty() ? cfg.output_dir : fs::path(out_dir);
  const std::vector<std::string> suites = suite == "all" ? benchmark_suites() : std::vector<std::string>{suite};
  for (const std::string& name : suites) {
    const fs::path csv = dir / (name + ".csv");
    for (const SweepPlan& plan : plan_suite(name, opt)) {
      std::printf("[%s] %s\n", name.c_str(), plan.figure.c_str());
      std::fflush(stdout);
      const auto rows = run_sweep(plan, opt, [&](const std::vector<ResultRow>& chunk) {
        append_results(csv, chunk);
        const auto s = summarize_rows(chunk);
        for (const auto& r : s) {
          std::printf("  %s=%g %s %s: %.4f +- %.4f", plan.x_label.c_str(), plan.sweeps_samples ? double(r.n) : r.param,
                      r.direction.c_str(), r.variant.c_str(), r.mean, r.std_dev);
          if (r.truth) std::printf("  (truth %.4f)", *r.truth);
          std::printf("\n");
        }
        std::fflush(stdout);
      });
      write_svg(dir / (plan.figure + ".svg"), sweep_chart(plan, rows));
    }
  }
  return kExitOk;
}

int cmd_santafe(const ConfigFlags& flags, const std::string& input, const std::string& columns,
                int k_max, int l, const std::string& out_dir) {
  const RunConfig cfg = flags.resolve();
  const SantaFeSeries data = load_santa_fe(fs::path(input), parse_santa_fe_columns(columns));
  SantaFeOptions opt;
  opt.l = l;
  opt.k_max = k_max;
  opt.n_seeds = cfg.n_seeds;
  opt.seed = cfg.seed;
  opt.train = cfg.train;
  opt.estimator = cfg.estimator;
  opt.threads = cfg.threads;
  const fs::path dir = out_dir.empty() ? cfg.output_dir : fs::path(out_dir);
  const fs::path csv = dir / "santafe.csv";
  const auto rows = run_santa_fe(data, opt, [&](const std::vector<ResultRow>& chunk) {
    append_results(csv, chunk);
    for (const auto& s : summarize_rows(chunk)) {
      std::printf("k=%g %s: %.4f +- %.4f\n", s.param, s.direction.c_str(), s.mean, s.std_dev);
    }
    std::fflush(stdout);
  });
  Chart chart{"santafe TE(k, l=" + std::to_string(l) + ")", "k", "TE (nats)", {}};
  for (const std::string d : {"resp_to_heart", "heart_to_resp"}) {
    ChartSeries s;
    s.label = d;
    for (const auto& r : summarize_rows(rows)) {
      if (r.direction != d) continue;
      s.x.push_back(r.param);
      s.y.push_back(r.mean);
      s.err.push_back(r.std_dev);
    }
    chart.series.push_back(std::move(s));
  }
  write_svg(dir / "santafe.svg", chart);
  return kExitOk;
}

int cmd_selftest() {
  int failures = 0;
  auto check = [&](const char* name, double got, double want, double tol) {
    const bool ok = std::isfinite(got) && std::abs(got - want) <= tol;
    std::printf("%s %-40s got %.6f want %.6f tol %g\n", ok ? "PASS" : "FAIL", name, got, want, tol);
    failures += ok ? 0 : 1;
  };
  const VpSchedule sched;
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    worst = std::max(worst, std::abs(sched.k(t) * sched.k(t) + sched.v(t) - 1.0));
  }
  check("k^2 + v = 1", worst, 0.0, 1e-12);
  check("tail KL at chi = 1", gaussian_tail_kl(3, 1.0), 0.0, 1e-15);

  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd wide(20000, 1);
  for (Eigen::Index i = 0; i < wide.rows(); ++i) wide(i, 0) = 2.0 * normal(rng);
  McConfig mc;
  mc.seed = 3;
  const double chi_end = chi_t(sched, sched.t_horizon(), 2.0);
  const double e = kl_estimate_e(gaussian_reference_score(sched, 2.0), gaussian_reference_score(sched, 1.0),
                                 wide, sched, mc);
  check("KL(N(0,4) || N(0,1)) minus tail", e,
        0.5 * (4.0 - 1.0 - std::log(4.0)) - 0.5 * (chi_end - 1.0 - std::log(chi_end)), 0.02);

  LinearGaussianParams lg;
  lg.lambda = 0.5;
  check("gaussian CMI vs stationary truth", gaussian_cmi(linear_gaussian_te_blocks(lg, Direction::kYToX, 1, 1)),
        te_linear_gaussian_truth(lg, Direction::kYToX), 1e-9);
  std::printf("%s\n", failures == 0 ? "selftest passed" : "selftest FAILED");
  return failures == 0 ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer entropy estimation with denoising score networks"};
  app.require_subcommand(1);

  ConfigFlags sim_flags, est_flags, bench_flags, sf_flags;
  long long length = 10001;
  std::string sim_out, transform = "none";
  auto* sim = app.add_subcommand("simulate", "write a synthetic series pair");
  sim_flags.attach(*sim);
  sim->add_option("--length", length, "number of time steps");
  sim->add_option("-o,--out", sim_out, "output file (stdout if omitted)");
  sim->add_option("--transform", transform, "none, halfcube or cdf");

  std::string est_input, est_csv;
  auto* est = app.add_subcommand("estimate", "estimate TE on a series file or a synthetic system");
  est_flags.attach(*est);
  est->add_option("-i,--input", est_input, "series file; a synthetic system is generated if omitted");
  est->add_option("--csv", est_csv, "results file (default <output_dir>/results.csv)");

  std::string suite = "all", bench_dir;
  auto* bench = app.add_subcommand("benchmark", "run a benchmark suite and write CSV + SVG");
  bench_flags.attach(*bench);
  bench->add_option("suite", suite, "sample_size, coupling, redundant, linear_stacking, halfcube, cdf or all");
  bench->add_option("--out-dir", bench_dir, "output directory");

  std::string sf_input, sf_columns = "0,1,2", sf_dir;
  int k_max = 5, sf_l = 2;
  auto* sf = app.add_subcommand("santafe", "TE between respiration and heart rate on the Santa Fe recording");
  sf_flags.attach(*sf);
  sf->add_option("-i,--input", sf_input, "whitespace-delimited recording")->required();
  sf->add_option("--columns", sf_columns, "0-based columns of heart rate, respiration, blood oxygen");
  sf->add_option("--k-max", k_max, "largest source lag");
  sf->add_option("--lag-target", sf_l, "target-history length l");
  sf->add_option("--out-dir", sf_dir, "output directory");

  auto* self = app.add_subcommand("selftest", "quick analytic checks of the numerical core");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_flags, static_cast<Eigen::Index>(length), sim_out, transform);
    if (est->parsed()) return cmd_estimate(est_flags, est_input, est_csv);
    if (bench->parsed()) return cmd_benchmark(bench_flags, suite, bench_dir);
    if (sf->parsed()) return cmd_santafe(sf_flags, sf_input, sf_columns, k_max, sf_l, sf_dir);
    if (self->parsed()) return cmd_selftest();
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
