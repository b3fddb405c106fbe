#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tende/neural.hpp"
#include "tende/sde.hpp"
#include "tende/systems.hpp"

namespace tende {

/// Which scores the amortized network learns: conditional-only (two masks) or
/// joint (adds the marginal target score).
enum class Approach { kConditionalOnly, kJoint };

std::string to_string(Approach a);
Approach parse_approach(const std::string& s);

/// The three legal encodings.
enum class Encoding {
  kGivenSourceAndPast,  // [1, 0, 0]  score of Y given X and Z
  kGivenPast,           // [1, -1, 0] score of Y given Z
  kMarginal,            // [1, -1, -1] score of Y
};

BlockMask block_mask(Encoding e);
/// Throws std::invalid_argument for masks outside the legal set.
Encoding encoding_from_mask(const BlockMask& mask);

/// Uniform over the encodings the approach trains.
Encoding sample_encoding(Approach approach, Rng& rng);

/// How training draws diffusion times.
///   kMixed:      half the batch uniform in t, half uniform in v(t); unit weights.
///   kUniform:    t uniform on [t_min, T]; unit weights.
///   kLikelihood: t from the g^2/v importance sampler, weighted by is_weight * g^2/v.
enum class TrainTimeSampling { kMixed, kUniform, kLikelihood };

std::string to_string(TrainTimeSampling s);
TrainTimeSampling parse_train_time_sampling(const std::string& s);

struct TrainConfig {
  Approach approach = Approach::kConditionalOnly;
  int epochs = 300;
  int batch_size = 256;
  std::uint64_t seed = 0;
  VpSchedule schedule{};
  NetworkLayout layout{};  // block widths are overwritten from the dataset
  AdamConfig adam{};
  TrainTimeSampling time_sampling = TrainTimeSampling::kMixed;
  /// Cosine decay of the learning rate to adam.learning_rate * final_lr_fraction
  /// over the whole run; 1 keeps it constant.
  double final_lr_fraction = 1.0;
  /// Decay of an exponential moving average of the parameters; 0 disables it.
  /// When enabled the trained model carries the averaged parameters.
  double ema_decay = 0.999;

  void validate() const;
};

/// A network plus everything needed to evaluate its scores.
struct ScoreModel {
  ScoreNetwork net;
  VpSchedule schedule;
  Approach approach;
  std::int64_t steps = 0;  // optimizer steps taken; 0 means untrained
};

struct TrainResult {
  ScoreModel model;
  std::vector<double> loss_trace;          // mean loss per epoch
  std::array<std::int64_t, 3> mask_counts;  // samples seen per Encoding
};

/// Mutable training state threaded through training_step.
class Trainer {
 public:
  Trainer(const TeDataset& data, const TrainConfig& cfg);

  /// One optimizer update on the given rows. Returns the batch loss.
  /// Throws NumericError if the loss is not finite.
  double training_step(std::span<const Eigen::Index> rows);

  /// Runs cfg.epochs shuffled passes and returns the per-epoch mean loss.
  std::vector<double> run();

  const ScoreModel& model() const { return model_; }
  /// Hands over the model, with averaged parameters when ema_decay > 0.
  ScoreModel release();
  const std::array<std::int64_t, 3>& mask_counts() const { return mask_counts_; }

  /// One training time with its loss weight, per cfg.time_sampling.
  TimeDraw draw_training_time(Rng& rng) const;

 private:
  const TeDataset& data_;
  TrainConfig cfg_;
  ScoreModel model_;
  AdamOptimizer optimizer_;
  TimeSampler sampler_;
  Rng rng_;
  std::array<std::int64_t, 3> mask_counts_{};
  ForwardTape tape_;
  ParameterSet grads_;
  ParameterSet ema_;
  std::int64_t total_steps_ = 1;
};

/// Throws std::invalid_argument on an empty dataset.
TrainResult train(const TeDataset& data, const TrainConfig& cfg);

/// Denoising loss mean_j c_j ||eps_j - net(...)||^2 with per-sample weights c_j.
/// Fills `grads` when non-null, reusing `tape` for the intermediates if given.
double denoising_loss(const ScoreNetwork& net, const BatchView& diffused,
                      const Eigen::Ref<const Eigen::MatrixXd>& noise,
                      std::span<const double> sample_weights, ParameterSet* grads = nullptr,
                      ForwardTape* tape = nullptr);

/// -net(...)/sqrt(v(t)) for one sample. Throws std::out_of_range for t < t_min.
Eigen::VectorXd score_at(const ScoreModel& model, const Eigen::Ref<const Eigen::VectorXd>& y_t,
                         const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& z, double t, Encoding encoding);

/// Batched scores, n_y x B, one encoding for the whole batch.
Eigen::MatrixXd score_batch(const ScoreModel& model, const Eigen::Ref<const Eigen::MatrixXd>& y_t,
                            const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::MatrixXd>& z, std::span<const double> t,
                            Encoding encoding);

/// Layout matching a dataset's block widths.
NetworkLayout layout_for(const TeDataset& data, NetworkLayout base = {});

}  // namespace tende
