#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tende/score_model.hpp"
#include "tende/sde.hpp"
#include "tende/systems.hpp"

namespace tende {

/// Monte-Carlo settings for the time integral.
struct McConfig {
  int draws_per_point = 10;
  std::uint64_t seed = 0;
  TimeSampler::Proposal proposal = TimeSampler::Proposal::kImportance;
};

/// Score of a diffused density: x_t (d x B) and per-column times -> d x B.
using ScoreFn =
    std::function<Eigen::MatrixXd(const Eigen::Ref<const Eigen::MatrixXd>& x_t, std::span<const double> t)>;

/// Score of the diffused N(0, sigma^2 I) reference, -x/chi_t.
ScoreFn gaussian_reference_score(const VpSchedule& sched, double sigma);

/// The network's marginal target score, mask [1, -1, -1]. Source and past blocks are fed as zeros.
ScoreFn marginal_score(const ScoreModel& model);

/// e(p, q): Monte-Carlo estimate of int g^2/2 E_{p_t} ||s_p - s_q||^2 dt from samples of p (n x d).
double kl_estimate_e(const ScoreFn& score_p, const ScoreFn& score_q,
                     const Eigen::Ref<const Eigen::MatrixXd>& samples, const VpSchedule& sched,
                     const McConfig& mc);

/// (N/2) log(2 pi sigma^2) + E||x||^2 / (2 sigma^2) - e(p, phi_sigma) - tail(N, chi_T).
double entropy_estimate(const ScoreFn& score_p, const Eigen::Ref<const Eigen::MatrixXd>& samples,
                        double sigma, const VpSchedule& sched, const McConfig& mc);

enum class EstimatorOption { kDirect = 1, kGaussianReference = 2 };

struct EstimatorConfig {
  Approach approach = Approach::kConditionalOnly;
  EstimatorOption option = EstimatorOption::kDirect;
  double sigma = 1.0;
  int mc_time_draws_per_point = 10;
  std::uint64_t seed = 0;
  TimeSampler::Proposal proposal = TimeSampler::Proposal::kImportance;

  void validate() const;
  McConfig mc() const { return {mc_time_draws_per_point, seed, proposal}; }
};

std::string variant_name(Approach approach, EstimatorOption option);

/// All four CMI estimates computed from one shared set of time and noise draws.
/// The j-variants are NaN when `include_marginal` is false.
struct CmiVariants {
  double c1 = 0.0;
  double c2 = 0.0;
  double j1 = 0.0;
  double j2 = 0.0;

  double get(Approach approach, EstimatorOption option) const;
};

CmiVariants estimate_cmi_variants(const ScoreModel& model, const TeDataset& data,
                                  const EstimatorConfig& cfg, bool include_marginal);

double cmi_c1(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg);
double cmi_c2(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg);
double cmi_j1(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg);
double cmi_j2(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg);

/// Dispatches on cfg.approach and cfg.option.
double estimate_cmi(const ScoreModel& model, const TeDataset& data, const EstimatorConfig& cfg);

struct TeEstimate {
  double value = 0.0;  // nats
  std::vector<double> per_seed_values;
  double std_dev = 0.0;
};

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std_dev(std::span<const double> values);
TeEstimate summarize(std::vector<double> per_seed_values);

/// One seed of the end-to-end pipeline.
struct SeedOutcome {
  double value = 0.0;  // the configured variant
  CmiVariants variants;
  std::vector<double> loss_trace;
  double train_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Produces the series for seed index s (fresh data per seed for synthetic systems).
using SeriesSource = std::function<TimeSeriesPair(int seed_index)>;

struct PipelineConfig {
  int k = 1;
  int l = 1;
  Direction direction = Direction::kXToY;
  EstimatorConfig estimator{};
  TrainConfig train{};
  int n_seeds = 5;
  std::uint64_t base_seed = 0;
  bool standardize_data = true;
  double holdout_fraction = 0.0;  // > 0 trains on the rest and estimates on the held-out rows
  int threads = 1;
  /// Evaluate the j-variants too (requires joint training, which the pipeline then uses).
  bool all_variants = false;

  void validate() const;
};

/// Builds the dataset, trains from scratch and estimates, for seed index s.
SeedOutcome run_seed(const TimeSeriesPair& pair, const PipelineConfig& cfg, int seed_index);

/// Runs cfg.n_seeds independent seeds (in parallel up to cfg.threads) and aggregates.
/// `outcomes`, when non-null, receives the per-seed details in seed order.
TeEstimate transfer_entropy(const SeriesSource& source, const PipelineConfig& cfg,
                            std::vector<SeedOutcome>* outcomes = nullptr);
TeEstimate transfer_entropy(const TimeSeriesPair& pair, const PipelineConfig& cfg,
                            std::vector<SeedOutcome>* outcomes = nullptr);

}  // namespace tende
