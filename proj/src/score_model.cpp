#include "tende/score_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "tende/errors.hpp"

namespace tende {

std::string to_string(Approach a) { return a == Approach::kConditionalOnly ? "c" : "j"; }

Approach parse_approach(const std::string& s) {
  if (s == "c" || s == "conditional" || s == "conditional_only") return Approach::kConditionalOnly;
  if (s == "j" || s == "joint") return Approach::kJoint;
  throw std::invalid_argument("unknown approach '" + s + "'");
}

BlockMask block_mask(Encoding e) {
  switch (e) {
    case Encoding::kGivenSourceAndPast:
      return {1, 0, 0};
    case Encoding::kGivenPast:
      return {1, -1, 0};
    case Encoding::kMarginal:
      return {1, -1, -1};
  }
  throw std::invalid_argument("bad encoding");
}

Encoding encoding_from_mask(const BlockMask& mask) {
  if (mask == BlockMask{1, 0, 0}) return Encoding::kGivenSourceAndPast;
  if (mask == BlockMask{1, -1, 0}) return Encoding::kGivenPast;
  if (mask == BlockMask{1, -1, -1}) return Encoding::kMarginal;
  throw std::invalid_argument("mask is not one of [1,0,0], [1,-1,0], [1,-1,-1]");
}

Encoding sample_encoding(Approach approach, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, approach == Approach::kJoint ? 2 : 1);
  return static_cast<Encoding>(pick(rng));
}

std::string to_string(TrainTimeSampling s) {
  switch (s) {
    case TrainTimeSampling::kMixed:
      return "mixed";
    case TrainTimeSampling::kUniform:
      return "uniform";
    case TrainTimeSampling::kLikelihood:
      return "likelihood";
  }
  throw std::invalid_argument("bad time sampling");
}

TrainTimeSampling parse_train_time_sampling(const std::string& s) {
  if (s == "mixed") return TrainTimeSampling::kMixed;
  if (s == "uniform") return TrainTimeSampling::kUniform;
  if (s == "likelihood") return TrainTimeSampling::kLikelihood;
  throw std::invalid_argument("unknown training time sampling '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    throw std::invalid_argument("TrainConfig: final_lr_fraction must be in [0, 1]");
  }
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) {
    throw std::invalid_argument("TrainConfig: ema_decay must be in [0, 1)");
  }
}

NetworkLayout layout_for(const TeDataset& data, NetworkLayout base) {
  base.n_y = static_cast<int>(data.y.cols());
  base.n_x = static_cast<int>(data.x.cols());
  base.n_z = static_cast<int>(data.z.cols());
  return base;
}

double denoising_loss(const ScoreNetwork& net, const BatchView& diffused,
                      const Eigen::Ref<const Eigen::MatrixXd>& noise,
                      std::span<const double> sample_weights, ParameterSet* grads,
                      ForwardTape* tape) {
  const Eigen::Index b = diffused.y.cols();
  if (noise.rows() != diffused.y.rows() || noise.cols() != b ||
      static_cast<Eigen::Index>(sample_weights.size()) != b) {
    throw std::invalid_argument("denoising_loss: batch shapes disagree");
  }
  ForwardTape local;
  ForwardTape& tp = tape ? *tape : local;
  Eigen::MatrixXd residual = net.forward(diffused, grads ? &tp : nullptr);
  residual -= noise;
  const Eigen::Map<const Eigen::RowVectorXd> w(sample_weights.data(), b);
  const Eigen::RowVectorXd sq = residual.colwise().squaredNorm();
  const double loss = sq.dot(w) / static_cast<double>(b);
  if (grads) {
    residual *= (2.0 / static_cast<double>(b) * w.transpose()).asDiagonal();
    backward_into(net, tp, residual, *grads);
  }
  return loss;
}

Trainer::Trainer(const TeDataset& data, const TrainConfig& cfg)
    : data_(data),
      cfg_(cfg),
      model_{ScoreNetwork(layout_for(data, cfg.layout), cfg.seed), cfg.schedule, cfg.approach, 0},
      optimizer_(model_.net, cfg.adam),
      sampler_(cfg.schedule, TimeSampler::Proposal::kImportance),
      rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  const std::int64_t per_epoch = (data.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  total_steps_ = std::max<std::int64_t>(1, per_epoch * cfg_.epochs);
  if (cfg_.ema_decay > 0.0) ema_ = model_.net.parameters();
}

ScoreModel Trainer::release() {
  if (cfg_.ema_decay > 0.0) model_.net.parameters() = ema_;
  return std::move(model_);
}

TimeDraw Trainer::draw_training_time(Rng& rng) const {
  const VpSchedule& sched = model_.schedule;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (cfg_.time_sampling) {
    case TrainTimeSampling::kLikelihood: {
      const TimeDraw d = sampler_(rng);
      return {d.t, d.weight * sched.g2(d.t) / sched.v(d.t)};
    }
    case TrainTimeSampling::kMixed:
      if (unit(rng) < 0.5) {
        const double lo = sched.v(sched.t_min()), hi = sched.v(sched.t_horizon());
        const double v = lo + (hi - lo) * unit(rng);
        const double t = sched.time_at(-std::log1p(-v));
        return {std::clamp(t, sched.t_min(), sched.t_horizon()), 1.0};
      }
      [[fallthrough]];
    case TrainTimeSampling::kUniform:
      return {sched.t_min() + (sched.t_horizon() - sched.t_min()) * unit(rng), 1.0};
  }
  throw std::invalid_argument("bad time sampling");
}

double Trainer::training_step(std::span<const Eigen::Index> rows) {
  const auto b = static_cast<Eigen::Index>(rows.size());
  const VpSchedule& sched = model_.schedule;
  const Eigen::Index ny = data_.y.cols(), nx = data_.x.cols(), nz = data_.z.cols();

  Eigen::MatrixXd y_t(ny, b), x(nx, b), z(nz, b), noise(ny, b);
  std::vector<double> t(static_cast<std::size_t>(b)), weight(static_cast<std::size_t>(b));
  std::vector<BlockMask> masks(static_cast<std::size_t>(b));
  std::normal_distribution<double> normal(0.0, 1.0);

  for (Eigen::Index j = 0; j < b; ++j) {
    const auto js = static_cast<std::size_t>(j);
    const Eigen::Index r = rows[js];
    const TimeDraw draw = draw_training_time(rng_);
    for (Eigen::Index i = 0; i < ny; ++i) noise(i, j) = normal(rng_);
    const double k = sched.k(draw.t), sv = std::sqrt(sched.v(draw.t));
    y_t.col(j) = k * data_.y.row(r).transpose() + sv * noise.col(j);
    x.col(j) = data_.x.row(r).transpose();
    z.col(j) = data_.z.row(r).transpose();
    t[js] = draw.t;
    weight[js] = draw.weight;
    const Encoding e = sample_encoding(cfg_.approach, rng_);
    ++mask_counts_[static_cast<std::size_t>(e)];
    masks[js] = block_mask(e);
  }

  const double loss =
      denoising_loss(model_.net, BatchView{y_t, x, z, t, masks}, noise, weight, &grads_, &tape_);
  if (!std::isfinite(loss)) {
    throw NumericError("training loss is not finite at step " + std::to_string(model_.steps + 1));
  }
  if (cfg_.final_lr_fraction < 1.0) {
    const double progress = std::min(1.0, static_cast<double>(model_.steps) / static_cast<double>(total_steps_));
    const double f = cfg_.final_lr_fraction;
    optimizer_.set_learning_rate(cfg_.adam.learning_rate *
                                 (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress))));
  }
  optimizer_.step(model_.net, grads_);
  ++model_.steps;
  if (cfg_.ema_decay > 0.0) {
    const double d = cfg_.ema_decay, u = 1.0 - d;
    const ParameterSet& now = model_.net.parameters();
    for (std::size_t i = 0; i < ema_.size(); ++i) {
      ema_[i].weight = d * ema_[i].weight + u * now[i].weight;
      ema_[i].bias = d * ema_[i].bias + u * now[i].bias;
    }
  }
  return loss;
}

std::vector<double> Trainer::run() {
  const Eigen::Index n = data_.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(cfg_.batch_size);

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg_.epochs));
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      total += training_step(std::span<const Eigen::Index>(order).subspan(start, len)) *
               static_cast<double>(len);
      count += len;
    }
    trace.push_back(total / static_cast<double>(count));
  }
  return trace;
}

TrainResult train(const TeDataset& data, const TrainConfig& cfg) {
  Trainer trainer(data, cfg);
  std::vector<double> trace = trainer.run();
  const auto counts = trainer.mask_counts();
  return {trainer.release(), std::move(trace), counts};
}

Eigen::MatrixXd score_batch(const ScoreModel& model, const Eigen::Ref<const Eigen::MatrixXd>& y_t,
                            const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::MatrixXd>& z, std::span<const double> t,
                            Encoding encoding) {
  const double t_min = model.schedule.t_min();
  Eigen::RowVectorXd inv_sd(static_cast<Eigen::Index>(t.size()));
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (t[j] < t_min) {
      throw std::out_of_range("score_at: t = " + std::to_string(t[j]) + " below t_min");
    }
    inv_sd[static_cast<Eigen::Index>(j)] = 1.0 / std::sqrt(model.schedule.v(t[j]));
  }
  const std::vector<BlockMask> masks(t.size(), block_mask(encoding));
  Eigen::MatrixXd eps_hat = model.net.forward(BatchView{y_t, x, z, t, masks});
  return -(eps_hat * inv_sd.asDiagonal());
}

Eigen::VectorXd score_at(const ScoreModel& model, const Eigen::Ref<const Eigen::VectorXd>& y_t,
                         const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& z, double t, Encoding encoding) {
  const double ts[1] = {t};
  return score_batch(model, y_t, x, z, ts, encoding).col(0);
}

}  // namespace tende
