#include "tende/neural.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "tende/errors.hpp"

namespace tende {

namespace {

void check_same_shape(const ParameterSet& a, const ParameterSet& b, const char* what) {
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].weight.rows() == b[i].weight.rows() && a[i].weight.cols() == b[i].weight.cols() &&
         a[i].bias.size() == b[i].bias.size();
  }
  if (!ok) throw std::invalid_argument(std::string(what) + ": parameter shapes differ");
}

}  // namespace

void validate_block_mask(const BlockMask& mask) {
  for (int m : mask) {
    if (m < -1 || m > 1) throw std::invalid_argument("mask entries must be in {-1, 0, 1}");
  }
  if (mask[0] != 1) throw std::invalid_argument("mask[0] must be 1 (the diffused target)");
}

void NetworkLayout::validate() const {
  if (n_y < 1 || n_x < 0 || n_z < 0) throw std::invalid_argument("NetworkLayout: bad block sizes");
  if (hidden_width < 1 || hidden_layers < 1) {
    throw std::invalid_argument("NetworkLayout: need at least one hidden layer");
  }
  if (time_embed_dim < 0 || time_embed_dim % 2 != 0) {
    throw std::invalid_argument("NetworkLayout: time_embed_dim must be even and nonnegative");
  }
}

Eigen::VectorXd log_spaced_frequencies(int count, double lo, double hi) {
  if (count < 0 || !(lo > 0.0) || !(hi >= lo)) {
    throw std::invalid_argument("log_spaced_frequencies: bad range");
  }
  Eigen::VectorXd f(count);
  for (int i = 0; i < count; ++i) {
    const double s = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    f[i] = lo * std::pow(hi / lo, s);
  }
  return f;
}

Eigen::VectorXd time_embed(double t, const Eigen::Ref<const Eigen::VectorXd>& frequencies) {
  const Eigen::Index n = frequencies.size();
  Eigen::VectorXd e(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double phase = 2.0 * std::numbers::pi * frequencies[i] * t;
    e[i] = std::sin(phase);
    e[n + i] = std::cos(phase);
  }
  return e;
}

ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const auto& l : params) {
    out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                   Eigen::VectorXd::Zero(l.bias.size())});
  }
  return out;
}

std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& l : params) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool all_finite(const ParameterSet& params) {
  for (const auto& l : params) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

ScoreNetwork::ScoreNetwork(const NetworkLayout& layout, std::uint64_t seed) : layout_(layout) {
  layout_.validate();
  frequencies_ = log_spaced_frequencies(layout_.time_embed_dim / 2);

  std::mt19937_64 rng(seed);
  int fan_in = layout_.input_dim();
  for (int l = 0; l < layout_.hidden_layers; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(layout_.hidden_width, fan_in),
                     Eigen::VectorXd(layout_.hidden_width)};
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = u(rng);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = u(rng);
    params_.push_back(std::move(layer));
    fan_in = layout_.hidden_width;
  }
  params_.push_back({Eigen::MatrixXd::Zero(layout_.n_y, fan_in), Eigen::VectorXd::Zero(layout_.n_y)});
}

ScoreNetwork::ScoreNetwork(const NetworkLayout& layout, Eigen::VectorXd frequencies,
                           ParameterSet params)
    : layout_(layout), frequencies_(std::move(frequencies)), params_(std::move(params)) {
  layout_.validate();
  if (frequencies_.size() * 2 != layout_.time_embed_dim) {
    throw std::invalid_argument("ScoreNetwork: frequency count does not match layout");
  }
  const auto expected = ScoreNetwork(layout_, 0).parameters();
  check_same_shape(expected, params_, "ScoreNetwork");
}

Eigen::MatrixXd ScoreNetwork::assemble_input(const BatchView& batch) const {
  const Eigen::Index b = batch.y.cols();
  if (batch.y.rows() != layout_.n_y || batch.x.rows() != layout_.n_x ||
      batch.z.rows() != layout_.n_z) {
    throw std::invalid_argument("ScoreNetwork: block dimensions do not match layout");
  }
  if (batch.x.cols() != b || batch.z.cols() != b || static_cast<Eigen::Index>(batch.t.size()) != b ||
      static_cast<Eigen::Index>(batch.masks.size()) != b) {
    throw std::invalid_argument("ScoreNetwork: batch sizes disagree");
  }

  const int ny = layout_.n_y, nx = layout_.n_x, nz = layout_.n_z;
  const Eigen::Index nf = frequencies_.size();
  Eigen::MatrixXd in(layout_.input_dim(), b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const BlockMask& m = batch.masks[static_cast<std::size_t>(j)];
    validate_block_mask(m);
    auto col = in.col(j);
    col.segment(0, ny) = batch.y.col(j);
    if (m[1] == -1) {
      col.segment(ny, nx).setZero();
    } else {
      col.segment(ny, nx) = batch.x.col(j);
    }
    if (m[2] == -1) {
      col.segment(ny + nx, nz).setZero();
    } else {
      col.segment(ny + nx, nz) = batch.z.col(j);
    }
    const Eigen::Index off = ny + nx + nz;
    col[off] = m[0];
    col[off + 1] = m[1];
    col[off + 2] = m[2];
    const double t = batch.t[static_cast<std::size_t>(j)];
    col[off + 3] = t;
    for (Eigen::Index i = 0; i < nf; ++i) {
      const double phase = 2.0 * std::numbers::pi * frequencies_[i] * t;
      col[off + 4 + i] = std::sin(phase);
      col[off + 4 + nf + i] = std::cos(phase);
    }
  }
  return in;
}

Eigen::MatrixXd ScoreNetwork::forward_input(const Eigen::Ref<const Eigen::MatrixXd>& input,
                                            ForwardTape* tape) const {
  if (input.rows() != layout_.input_dim()) {
    throw std::invalid_argument("ScoreNetwork: input has wrong dimension");
  }
  ForwardTape local;
  ForwardTape& tp = tape ? *tape : local;
  const std::size_t hidden = params_.size() - 1;
  // Buffers keep their storage across calls with the same batch size.
  tp.inputs.resize(params_.size());
  tp.pre.resize(hidden);
  tp.gate.resize(hidden);
  tp.inputs[0] = input;
  for (std::size_t l = 0; l < hidden; ++l) {
    Eigen::MatrixXd& pre = tp.pre[l];
    pre.resize(params_[l].weight.rows(), input.cols());
    pre.noalias() = params_[l].weight * tp.inputs[l];
    pre.colwise() += params_[l].bias;
    tp.gate[l].resize(pre.rows(), pre.cols());
    tp.gate[l].array() = (1.0 + (-pre.array()).exp()).inverse();
    tp.inputs[l + 1].resize(pre.rows(), pre.cols());
    tp.inputs[l + 1].array() = pre.array() * tp.gate[l].array();
  }
  Eigen::MatrixXd out(params_.back().weight.rows(), input.cols());
  out.noalias() = params_.back().weight * tp.inputs.back();
  out.colwise() += params_.back().bias;
  return out;
}

Eigen::MatrixXd ScoreNetwork::forward(const BatchView& batch, ForwardTape* tape) const {
  return forward_input(assemble_input(batch), tape);
}

Eigen::VectorXd ScoreNetwork::forward(const Eigen::Ref<const Eigen::VectorXd>& y_diffused,
                                      const Eigen::Ref<const Eigen::VectorXd>& x_cond,
                                      const Eigen::Ref<const Eigen::VectorXd>& z_cond, double t,
                                      const BlockMask& mask) const {
  const double ts[1] = {t};
  const BlockMask ms[1] = {mask};
  return forward(BatchView{y_diffused, x_cond, z_cond, ts, ms}).col(0);
}

void backward_into(const ScoreNetwork& net, ForwardTape& tape,
                   const Eigen::Ref<const Eigen::MatrixXd>& output_adjoint, ParameterSet& grads,
                   Eigen::MatrixXd* input_adjoint) {
  const ParameterSet& params = net.parameters();
  if (tape.inputs.size() != params.size() || tape.pre.size() + 1 != params.size() ||
      tape.gate.size() != tape.pre.size()) {
    throw std::invalid_argument("backward: tape does not match network");
  }
  if (output_adjoint.rows() != params.back().weight.rows() ||
      output_adjoint.cols() != tape.inputs.back().cols()) {
    throw std::invalid_argument("backward: adjoint has wrong shape");
  }

  grads.resize(params.size());
  tape.delta = output_adjoint;
  for (std::size_t l = params.size(); l-- > 0;) {
    grads[l].weight.resize(params[l].weight.rows(), params[l].weight.cols());
    grads[l].weight.noalias() = tape.delta * tape.inputs[l].transpose();
    grads[l].bias = tape.delta.rowwise().sum();
    if (l == 0 && input_adjoint == nullptr) break;
    tape.upstream.resize(params[l].weight.cols(), tape.delta.cols());
    tape.upstream.noalias() = params[l].weight.transpose() * tape.delta;
    if (l == 0) {
      *input_adjoint = tape.upstream;
      break;
    }
    // d/da [a sigmoid(a)] = s (1 + a (1 - s))
    const auto s = tape.gate[l - 1].array();
    tape.delta.resize(tape.upstream.rows(), tape.upstream.cols());
    tape.delta.array() = tape.upstream.array() * s * (1.0 + tape.pre[l - 1].array() * (1.0 - s));
  }
}

ParameterSet backward(const ScoreNetwork& net, ForwardTape& tape,
                      const Eigen::Ref<const Eigen::MatrixXd>& output_adjoint,
                      Eigen::MatrixXd* input_adjoint) {
  ParameterSet grads;
  backward_into(net, tape, output_adjoint, grads, input_adjoint);
  return grads;
}

AdamOptimizer::AdamOptimizer(const ScoreNetwork& net, AdamConfig config) : config_(config) {
  state_.first_moment = zeros_like(net.parameters());
  state_.second_moment = zeros_like(net.parameters());
}

void AdamOptimizer::step(ScoreNetwork& net, const ParameterSet& grads) {
  ParameterSet& params = net.parameters();
  check_same_shape(params, grads, "AdamOptimizer::step");
  check_same_shape(params, state_.first_moment, "AdamOptimizer::step");

  ++state_.step;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  const double lr = config_.learning_rate, eps = config_.epsilon;

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weight, grads[l].weight, state_.first_moment[l].weight,
           state_.second_moment[l].weight);
    update(params[l].bias, grads[l].bias, state_.first_moment[l].bias, state_.second_moment[l].bias);
  }
}

namespace {

constexpr const char* kCheckpointMagic = "tende-checkpoint";

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
    os << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& is) {
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0) {
    throw IoError("checkpoint: bad matrix header");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(is >> m(r, c))) throw IoError("checkpoint: truncated matrix");
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const ScoreNetwork& net, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  const NetworkLayout& lay = net.layout();
  os << kCheckpointMagic << ' ' << kCheckpointFormatVersion << '\n';
  os << lay.n_y << ' ' << lay.n_x << ' ' << lay.n_z << ' ' << lay.hidden_width << ' '
     << lay.hidden_layers << ' ' << lay.time_embed_dim << '\n';
  write_matrix(os, net.frequencies());
  os << net.parameters().size() << '\n';
  for (const auto& l : net.parameters()) {
    write_matrix(os, l.weight);
    write_matrix(os, l.bias);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

ScoreNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kCheckpointMagic) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (version != kCheckpointFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  NetworkLayout lay;
  if (!(is >> lay.n_y >> lay.n_x >> lay.n_z >> lay.hidden_width >> lay.hidden_layers >>
        lay.time_embed_dim)) {
    throw IoError("checkpoint: bad layout line");
  }
  Eigen::VectorXd freqs = read_matrix(is);
  std::size_t n_layers = 0;
  if (!(is >> n_layers)) throw IoError("checkpoint: missing layer count");
  ParameterSet params;
  for (std::size_t l = 0; l < n_layers; ++l) {
    DenseLayer layer;
    layer.weight = read_matrix(is);
    layer.bias = read_matrix(is);
    params.push_back(std::move(layer));
  }
  return ScoreNetwork(lay, std::move(freqs), std::move(params));
}

}  // namespace tende
