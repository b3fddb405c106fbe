#include "tende/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "tende/parallel.hpp"

namespace tende {

namespace {

constexpr Eigen::Index kChunkRows = 2048;

/// Fresh time and noise draws for one chunk of rows.
struct DiffusedChunk {
  Eigen::MatrixXd y_t;  // d x B
  std::vector<double> t;
  Eigen::RowVectorXd half_g2_weight;  // importance weight * g^2 / 2
  Eigen::RowVectorXd inv_chi;
};

DiffusedChunk diffuse(const Eigen::Ref<const Eigen::MatrixXd>& rows, const VpSchedule& sched,
                      const TimeSampler& sampler, double sigma, Rng& rng) {
  const Eigen::Index b = rows.rows(), d = rows.cols();
  std::normal_distribution<double> normal(0.0, 1.0);
  DiffusedChunk c{Eigen::MatrixXd(d, b), std::vector<double>(static_cast<std::size_t>(b)),
                  Eigen::RowVectorXd(b), Eigen::RowVectorXd(b)};
  for (Eigen::Index j = 0; j < b; ++j) {
    const TimeDraw draw = sampler(rng);
    const double k = sched.k(draw.t), sv = std::sqrt(sched.v(draw.t));
    for (Eigen::Index i = 0; i < d; ++i) c.y_t(i, j) = k * rows(j, i) + sv * normal(rng);
    c.t[static_cast<std::size_t>(j)] = draw.t;
    c.half_g2_weight[j] = 0.5 * draw.weight * sched.g2(draw.t);
    c.inv_chi[j] = 1.0 / chi_t(sched, draw.t, sigma);
  }
  return c;
}

void require_trained(const ScoreModel& model) {
  if (model.steps == 0) throw std::invalid_argument("score model is untrained");
}

}  // namespace

ScoreFn gaussian_reference_score(const VpSchedule& sched, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_reference_score: sigma must be positive");
  return [sched, sigma](const Eigen::Ref<const Eigen::MatrixXd>& x_t, std::span<const double> t) {
    Eigen::MatrixXd s(x_t.rows(), x_t.cols());
    for (Eigen::Index j = 0; j < x_t.cols(); ++j) {
      s.col(j) = gaussian_ref_score(x_t.col(j), chi_t(sched, t[static_cast<std::size_t>(j)], sigma));
    }
    return s;
  };
}

ScoreFn marginal_score(const ScoreModel& model) {
  return [&model](const Eigen::Ref<const Eigen::MatrixXd>& x_t, std::span<const double> t) {
    const NetworkLayout& lay = model.net.layout();
    const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(lay.n_x, x_t.cols());
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(lay.n_z, x_t.cols());
    return score_batch(model, x_t, x, z, t, Encoding::kMarginal);
  };
}

double kl_estimate_e(const ScoreFn& score_p, const ScoreFn& score_q,
                     const Eigen::Ref<const Eigen::MatrixXd>& samples, const VpSchedule& sched,
                     const McConfig& mc) {
  if (samples.rows() == 0) throw std::invalid_argument("kl_estimate_e: empty sample set");
  if (mc.draws_per_point < 1) throw std::invalid_argument("kl_estimate_e: need at least one draw");
  const TimeSampler sampler(sched, mc.proposal);
  Rng rng(mc.seed);
  double total = 0.0;
  for (int draw = 0; draw < mc.draws_per_point; ++draw) {
    for (Eigen::Index start = 0; start < samples.rows(); start += kChunkRows) {
      const Eigen::Index len = std::min(kChunkRows, samples.rows() - start);
      const DiffusedChunk c = diffuse(samples.middleRows(start, len), sched, sampler, 1.0, rng);
      const Eigen::MatrixXd diff = score_p(c.y_t, c.t) - score_q(c.y_t, c.t);
      total += diff.colwise().squaredNorm().dot(c.half_g2_weight);
    }
  }
  return total / (static_cast<double>(samples.rows()) * mc.draws_per_point);
}

double entropy_estimate(const ScoreFn& score_p, const Eigen::Ref<const Eigen::MatrixXd>& samples,
                        double sigma, const VpSchedule& sched, const McConfig& mc) {
  if (!(sigma > 0.0)) throw std::invalid_argument("entropy_estimate: sigma must be positive");
  if (samples.rows() == 0) throw std::invalid_argument("entropy_estimate: empty sample set");
  const auto dim = static_cast<int>(samples.cols());
  const double s2 = sigma * sigma;
  const double mean_sq = samples.rowwise().squaredNorm().mean();
  const double e = kl_estimate_e(score_p, gaussian_reference_score(sched, sigma), samples, sched, mc);
  const double chi_T = chi_t(sched, sched.t_horizon(), sigma);
  return 0.5 * dim * std::log(2.0 * std::numbers::pi * s2) + mean_sq / (2.0 * s2) - e -
         gaussian_tail_kl(dim, chi_T);
}

void EstimatorConfig::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("EstimatorConfig: sigma must be positive");
  if (mc_time_draws_per_point < 1) {
    throw std::invalid_argument("EstimatorConfig: need at least one time draw per point");
  }
  if (option != EstimatorOption::kDirect && option != EstimatorOption::kGaussianReference) {
    throw std::invalid_argument("EstimatorConfig: option must be 1 or 2");
  }
}

std::string variant_name(Approach approach, EstimatorOption option) {
  return to_string(approach) + std::to_string(static_cast<int>(option));
}

double CmiVariants::get(Approach approach, EstimatorOption option) const {
  if (approach == Approach::kConditionalOnly) return option == EstimatorOption::kDirect ? c1 : c2;
  return option == EstimatorOption::kDirect ? j1 : j2;
}

CmiVariants estimate_cmi_variants(const ScoreModel& model, const TeDataset& data,
                                  const EstimatorConfig& cfg, bool include_marginal) {
  cfg.validate();
  require_trained(model);
  if (include_marginal && model.approach != Approach::kJoint) {
    throw std::invalid_argument("marginal-score estimators need a network trained with approach j");
  }
  if (data.size() == 0) throw std::invalid_argument("estimate_cmi: empty dataset");

  const VpSchedule& sched = model.schedule;
  const TimeSampler sampler(sched, cfg.proposal);
  Rng rng(cfg.seed);
  const Eigen::Index n = data.size();
  double c1 = 0.0, c2 = 0.0, j1 = 0.0, j2 = 0.0;

  for (int draw = 0; draw < cfg.mc_time_draws_per_point; ++draw) {
    for (Eigen::Index start = 0; start < n; start += kChunkRows) {
      const Eigen::Index len = std::min(kChunkRows, n - start);
      const DiffusedChunk c = diffuse(data.y.middleRows(start, len), sched, sampler, cfg.sigma, rng);
      const Eigen::MatrixXd x = data.x.middleRows(start, len).transpose();
      const Eigen::MatrixXd z = data.z.middleRows(start, len).transpose();

      const Eigen::MatrixXd s_xz = score_batch(model, c.y_t, x, z, c.t, Encoding::kGivenSourceAndPast);
      const Eigen::MatrixXd s_z = score_batch(model, c.y_t, x, z, c.t, Encoding::kGivenPast);
      const Eigen::MatrixXd ref = c.y_t * c.inv_chi.asDiagonal();

      c1 += (s_xz - s_z).colwise().squaredNorm().dot(c.half_g2_weight);
      c2 += ((s_xz + ref).colwise().squaredNorm() - (s_z + ref).colwise().squaredNorm())
                .dot(c.half_g2_weight);
      if (include_marginal) {
        const Eigen::MatrixXd s_m = score_batch(model, c.y_t, x, z, c.t, Encoding::kMarginal);
        j1 += ((s_xz - s_m).colwise().squaredNorm() - (s_z - s_m).colwise().squaredNorm())
                  .dot(c.half_g2_weight);
        // I(X;[Y,Z]) - I(X;Z), each against the shared marginal reference term.
        const Eigen::RowVectorXd ref_m = (s_m + ref).colwise().squaredNorm();
        j2 += (((s_xz + ref).colwise().squaredNorm() - ref_m) -
               ((s_z + ref).colwise().squaredNorm() - ref_m))
                  .dot(c.half_g2_weight);
      }
    }
  }

  const double denom = static_cast<double>(n) * cfg.mc_time_draws_per_point;
  CmiVariants out;
  out.c1 = c1 / denom;
  out.c2 = c2 / denom;
  if (include_marginal) {
    out.j1 = j1 / denom;
    out.j2 = j2 / denom;
  } else {
    out.j1 = out.j2 = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double cmi_c1(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg) {
  return estimate_cmi_variants(model, data, cfg, false).c1;
}

double cmi_c2(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg) {
  return estimate_cmi_variants(model, data, cfg, false).c2;
}

double cmi_j1(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg) {
  return estimate_cmi_variants(model, data, cfg, true).j1;
}

double cmi_j2(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg) {
  return estimate_cmi_variants(model, data, cfg, true).j2;
}

double estimate_cmi(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg) {
  const bool joint = cfg.approach == Approach::kJoint;
  return estimate_cmi_variants(model, data, cfg, joint).get(cfg.approach, cfg.option);
}

double sample_std_dev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

TeEstimate summarize(std::vector<double> per_seed_values) {
  TeEstimate e;
  if (!per_seed_values.empty()) {
    e.value = std::accumulate(per_seed_values.begin(), per_seed_values.end(), 0.0) /
              static_cast<double>(per_seed_values.size());
  }
  e.std_dev = sample_std_dev(per_seed_values);
  e.per_seed_values = std::move(per_seed_values);
  return e;
}

void PipelineConfig::validate() const {
  if (k < 1 || l < 1) throw std::invalid_argument("lags must be >= 1");
  if (n_seeds < 1) throw std::invalid_argument("n_seeds must be >= 1");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout_fraction must be in [0, 1)");
  }
  estimator.validate();
  train.validate();
}

SeedOutcome run_seed(const TimeSeriesPair& pair, const PipelineConfig& cfg, int seed_index) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  cfg.validate();

  TeDataset data = build_te_dataset(pair, cfg.k, cfg.l, cfg.direction);
  if (cfg.standardize_data) standardize(data);

  const std::uint64_t seed = mix_seed(cfg.base_seed, static_cast<std::uint64_t>(seed_index));
  TeDataset train_rows = data;
  TeDataset eval_rows = data;
  if (cfg.holdout_fraction > 0.0) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng split_rng(mix_seed(seed, 3));
    std::shuffle(order.begin(), order.end(), split_rng);
    const auto n_eval = static_cast<std::size_t>(std::ceil(cfg.holdout_fraction * order.size()));
    if (n_eval == 0 || n_eval >= order.size()) {
      throw std::invalid_argument("holdout split leaves an empty side");
    }
    eval_rows = select_rows(data, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval)});
    train_rows = select_rows(data, {order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end()});
  }

  const bool joint = cfg.all_variants || cfg.estimator.approach == Approach::kJoint;
  TrainConfig tc = cfg.train;
  tc.approach = joint ? Approach::kJoint : Approach::kConditionalOnly;
  tc.seed = mix_seed(seed, 1);
  TrainResult trained = train(train_rows, tc);
  const auto t1 = Clock::now();

  EstimatorConfig ec = cfg.estimator;
  ec.seed = mix_seed(seed, 2);
  SeedOutcome out;
  out.variants = estimate_cmi_variants(trained.model, eval_rows, ec, joint);
  out.value = out.variants.get(cfg.estimator.approach, cfg.estimator.option);
  out.loss_trace = std::move(trained.loss_trace);
  out.train_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.total_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

TeEstimate transfer_entropy(const SeriesSource& source, const PipelineConfig& cfg,
                            std::vector<SeedOutcome>* outcomes) {
  cfg.validate();
  std::vector<SeedOutcome> results(static_cast<std::size_t>(cfg.n_seeds));
  parallel_for(cfg.n_seeds, cfg.threads, [&](int s) {
    results[static_cast<std::size_t>(s)] = run_seed(source(s), cfg, s);
  });
  std::vector<double> values;
  values.reserve(results.size());
  for (const auto& r : results) values.push_back(r.value);
  if (outcomes) *outcomes = std::move(results);
  return summarize(std::move(values));
}

TeEstimate transfer_entropy(const TimeSeriesPair& pair, const PipelineConfig& cfg,
                            std::vector<SeedOutcome>* outcomes) {
  return transfer_entropy([&pair](int) { return pair; }, cfg, outcomes);
}

}  // namespace tende
