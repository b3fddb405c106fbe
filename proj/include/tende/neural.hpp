#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace tende {

/// Per-block encoding: entry 0 is the diffused target, 1 the source past,
/// 2 the target past. 1 = learned, 0 = clean conditioning input, -1 = dropped.
using BlockMask = std::array<int, 3>;

/// Throws std::invalid_argument unless every entry is in {-1, 0, 1} and mask[0] == 1.
void validate_block_mask(const BlockMask& mask);

struct NetworkLayout {
  int n_y = 1;  // target block, also the output width
  int n_x = 1;  // source-past block (k * N_x)
  int n_z = 1;  // target-past block (l * N_y)
  int hidden_width = 128;
  int hidden_layers = 3;
  int time_embed_dim = 64;  // must be even

  /// y, x, z, mask (3), raw t (1), Fourier features.
  int input_dim() const { return n_y + n_x + n_z + 3 + 1 + time_embed_dim; }
  void validate() const;
  bool operator==(const NetworkLayout&) const = default;
};

/// `count` frequencies spaced evenly in log between lo and hi.
Eigen::VectorXd log_spaced_frequencies(int count, double lo = 0.1, double hi = 10.0);

/// [sin(2 pi f_i t)..., cos(2 pi f_i t)...].
Eigen::VectorXd time_embed(double t, const Eigen::Ref<const Eigen::VectorXd>& frequencies);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Parameters and gradients share this shape.
using ParameterSet = std::vector<DenseLayer>;

ParameterSet zeros_like(const ParameterSet& params);
std::size_t parameter_count(const ParameterSet& params);
bool all_finite(const ParameterSet& params);

/// Intermediates of one batched forward pass, consumed by backward(). Reusing a
/// tape across equally sized batches avoids reallocating its buffers.
struct ForwardTape {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer, features x batch
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
  std::vector<Eigen::MatrixXd> gate;    // sigmoid(pre)
  Eigen::MatrixXd delta;                // backward scratch
  Eigen::MatrixXd upstream;
};

/// Columnwise batch view: one sample per column.
struct BatchView {
  Eigen::Ref<const Eigen::MatrixXd> y;  // n_y x B (already diffused)
  Eigen::Ref<const Eigen::MatrixXd> x;  // n_x x B
  Eigen::Ref<const Eigen::MatrixXd> z;  // n_z x B
  std::span<const double> t;            // B
  std::span<const BlockMask> masks;     // B
};

/// Feed-forward noise predictor. SiLU hidden layers, linear output, zero-initialized
/// output layer so an untrained network predicts zero noise everywhere.
class ScoreNetwork {
 public:
  ScoreNetwork(const NetworkLayout& layout, std::uint64_t seed);
  ScoreNetwork(const NetworkLayout& layout, Eigen::VectorXd frequencies, ParameterSet params);

  const NetworkLayout& layout() const { return layout_; }
  const Eigen::VectorXd& frequencies() const { return frequencies_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }

  /// Packs a batch into the first-layer input, zeroing blocks masked with -1.
  Eigen::MatrixXd assemble_input(const BatchView& batch) const;

  /// Noise prediction, n_y x B. Records intermediates when `tape` is given.
  Eigen::MatrixXd forward(const BatchView& batch, ForwardTape* tape = nullptr) const;
  Eigen::MatrixXd forward_input(const Eigen::Ref<const Eigen::MatrixXd>& input,
                                ForwardTape* tape = nullptr) const;

  /// Single-sample convenience overload.
  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& y_diffused,
                          const Eigen::Ref<const Eigen::VectorXd>& x_cond,
                          const Eigen::Ref<const Eigen::VectorXd>& z_cond, double t,
                          const BlockMask& mask) const;

 private:
  NetworkLayout layout_;
  Eigen::VectorXd frequencies_;
  ParameterSet params_;
};

/// Reverse-mode gradients of a scalar loss given dLoss/dOutput (n_y x B).
/// Optionally returns dLoss/dInput for the assembled input matrix.
ParameterSet backward(const ScoreNetwork& net, ForwardTape& tape,
                      const Eigen::Ref<const Eigen::MatrixXd>& output_adjoint,
                      Eigen::MatrixXd* input_adjoint = nullptr);
/// Same, writing into an existing gradient buffer.
void backward_into(const ScoreNetwork& net, ForwardTape& tape,
                   const Eigen::Ref<const Eigen::MatrixXd>& output_adjoint, ParameterSet& grads,
                   Eigen::MatrixXd* input_adjoint = nullptr);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  ParameterSet first_moment;
  ParameterSet second_moment;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const ScoreNetwork& net, AdamConfig config = {});

  /// One bias-corrected Adam update. Throws std::invalid_argument on shape mismatch.
  void step(ScoreNetwork& net, const ParameterSet& grads);

  const AdamState& state() const { return state_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  AdamState state_;
};

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const ScoreNetwork& net, const std::filesystem::path& path);
ScoreNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace tende
