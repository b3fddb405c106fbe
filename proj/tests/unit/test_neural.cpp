#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "tende/errors.hpp"
#include "tende/neural.hpp"

using namespace tende;

namespace {

NetworkLayout small_layout() {
  NetworkLayout l;
  l.n_y = 2;
  l.n_x = 3;
  l.n_z = 2;
  l.hidden_width = 9;
  l.hidden_layers = 2;
  l.time_embed_dim = 6;
  return l;
}

// Replaces every parameter with a random draw so no layer is trivially zero.
void randomize(ScoreNetwork& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& layer : net.parameters()) {
    layer.weight = layer.weight.unaryExpr([&](double) { return n(rng); });
    layer.bias = layer.bias.unaryExpr([&](double) { return n(rng); });
  }
}

struct Batch {
  Eigen::MatrixXd y, x, z;
  std::vector<double> t;
  std::vector<BlockMask> masks;
  BatchView view() const { return {y, x, z, t, masks}; }
};

Batch random_batch(const NetworkLayout& l, int b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Batch out{Eigen::MatrixXd(l.n_y, b), Eigen::MatrixXd(l.n_x, b), Eigen::MatrixXd(l.n_z, b), {}, {}};
  for (auto* m : {&out.y, &out.x, &out.z}) *m = m->unaryExpr([&](double) { return n(rng); });
  const BlockMask choices[3] = {{1, 0, 0}, {1, -1, 0}, {1, -1, -1}};
  for (int j = 0; j < b; ++j) {
    out.t.push_back(u(rng));
    out.masks.push_back(choices[j % 3]);
  }
  return out;
}

// Scalar test loss: 0.5 * sum (out .* c) ^ 2 with fixed weights c.
double probe_loss(const ScoreNetwork& net, const Eigen::MatrixXd& input, const Eigen::MatrixXd& c) {
  return 0.5 * net.forward_input(input).cwiseProduct(c).squaredNorm();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_CASE("layout validation and input width") {
  NetworkLayout l = small_layout();
  CHECK(l.input_dim() == 2 + 3 + 2 + 3 + 1 + 6);
  CHECK_NOTHROW(l.validate());
  l.time_embed_dim = 5;
  CHECK_THROWS_AS(l.validate(), std::invalid_argument);
  l = small_layout();
  l.hidden_layers = 0;
  CHECK_THROWS_AS(l.validate(), std::invalid_argument);
  l = small_layout();
  l.n_y = 0;
  CHECK_THROWS_AS(l.validate(), std::invalid_argument);
}

TEST_CASE("mask validation") {
  CHECK_NOTHROW(validate_block_mask({1, 0, 0}));
  CHECK_NOTHROW(validate_block_mask({1, -1, -1}));
  CHECK_THROWS_AS(validate_block_mask({0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(validate_block_mask({1, 2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(validate_block_mask({-1, 0, 0}), std::invalid_argument);
}

TEST_CASE("fourier time embedding") {
  const Eigen::VectorXd f = log_spaced_frequencies(32);
  REQUIRE(f.size() == 32);
  CHECK(f[0] == doctest::Approx(0.1));
  CHECK(f[31] == doctest::Approx(10.0));
  for (int i = 1; i < 32; ++i) CHECK(f[i] / f[i - 1] == doctest::Approx(f[1] / f[0]));
  const Eigen::VectorXd e = time_embed(0.3, f);
  CHECK(e.size() == 64);
  for (int i = 0; i < 32; ++i) {
    CHECK(e[i] * e[i] + e[i + 32] * e[i + 32] == doctest::Approx(1.0));
    CHECK(e[i] == doctest::Approx(std::sin(2.0 * M_PI * f[i] * 0.3)));
  }
  CHECK_THROWS_AS(log_spaced_frequencies(4, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("default embedding separates a grid of times") {
  const Eigen::VectorXd f = log_spaced_frequencies(32);
  std::vector<Eigen::VectorXd> emb;
  for (int i = 0; i < 1000; ++i) emb.push_back(time_embed(1e-5 + (1.0 - 1e-5) * i / 999.0, f));
  double closest = 1e300;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    for (std::size_t j = i + 1; j < emb.size(); ++j) closest = std::min(closest, (emb[i] - emb[j]).norm());
  }
  CHECK(closest > 1e-4);
}

TEST_CASE("fresh network predicts zero and is seed deterministic") {
  const NetworkLayout l = small_layout();
  const ScoreNetwork a(l, 5), b(l, 5), c(l, 6);
  const Batch batch = random_batch(l, 7, 1);
  CHECK(a.forward(batch.view()).isZero(0.0));
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].weight == b.parameters()[i].weight);
  }
  CHECK(a.parameters()[0].weight != c.parameters()[0].weight);
  const auto& last = a.parameters().back();
  CHECK(last.weight.isZero(0.0));
  CHECK(last.bias.isZero(0.0));
  // Hidden weights stay inside the fan-in bound.
  const double bound = 1.0 / std::sqrt(static_cast<double>(l.input_dim()));
  CHECK(a.parameters()[0].weight.cwiseAbs().maxCoeff() <= bound);
  CHECK(parameter_count(a.parameters()) ==
        static_cast<std::size_t>((l.input_dim() + 1) * 9 + (9 + 1) * 9 + (9 + 1) * 2));
}

TEST_CASE("finite-difference gradient check on every layer") {
  const NetworkLayout l = small_layout();
  ScoreNetwork net(l, 11);
  randomize(net, 12);
  const Batch batch = random_batch(l, 5, 13);
  const Eigen::MatrixXd input = net.assemble_input(batch.view());
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::MatrixXd c = Eigen::MatrixXd::NullaryExpr(l.n_y, 5, [&] { return n(rng); });

  ForwardTape tape;
  const Eigen::MatrixXd out = net.forward_input(input, &tape);
  const Eigen::MatrixXd adjoint = out.cwiseProduct(c).cwiseProduct(c);
  Eigen::MatrixXd input_adj;
  const ParameterSet grads = backward(net, tape, adjoint, &input_adj);

  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t li = 0; li < net.parameters().size(); ++li) {
    auto& layer = net.parameters()[li];
    const std::pair<double*, Eigen::Index> params[2] = {{layer.weight.data(), layer.weight.size()},
                                                        {layer.bias.data(), layer.bias.size()}};
    const double* analytic[2] = {grads[li].weight.data(), grads[li].bias.data()};
    for (int which = 0; which < 2; ++which) {
      double* p = params[which].first;
      for (Eigen::Index i = 0; i < params[which].second; ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = probe_loss(net, input, c);
        p[i] = keep - h;
        const double down = probe_loss(net, input, c);
        p[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double g = analytic[which][i];
        if (std::abs(fd) > 1e-6 || std::abs(g) > 1e-6) worst = std::max(worst, rel_err(fd, g));
      }
    }
  }
  CHECK(worst < 1e-4);

  // Input adjoint, which covers the concatenated time features too.
  double worst_in = 0.0;
  Eigen::MatrixXd probe = input;
  for (Eigen::Index i = 0; i < probe.size(); ++i) {
    const double keep = probe.data()[i];
    probe.data()[i] = keep + h;
    const double up = probe_loss(net, probe, c);
    probe.data()[i] = keep - h;
    const double down = probe_loss(net, probe, c);
    probe.data()[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    if (std::abs(fd) > 1e-6 || std::abs(input_adj.data()[i]) > 1e-6) {
      worst_in = std::max(worst_in, rel_err(fd, input_adj.data()[i]));
    }
  }
  CHECK(worst_in < 1e-4);
}

TEST_CASE("backward_into reuses buffers and matches backward") {
  const NetworkLayout l = small_layout();
  ScoreNetwork net(l, 21);
  randomize(net, 22);
  const Batch batch = random_batch(l, 6, 23);
  ForwardTape tape;
  const Eigen::MatrixXd out = net.forward(batch.view(), &tape);
  const ParameterSet a = backward(net, tape, out);
  ParameterSet b;
  backward_into(net, tape, out, b);
  backward_into(net, tape, out, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].weight == b[i].weight);
    CHECK(a[i].bias == b[i].bias);
  }
  CHECK_THROWS_AS(backward(net, tape, Eigen::MatrixXd::Zero(l.n_y + 1, 6)), std::invalid_argument);
}

TEST_CASE("masked blocks cannot influence the output") {
  const NetworkLayout l = small_layout();
  ScoreNetwork net(l, 31);
  randomize(net, 32);
  Batch batch = random_batch(l, 9, 33);
  std::mt19937_64 rng(34);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int probe = 0; probe < 20; ++probe) {
    const Eigen::MatrixXd before = net.forward(batch.view());
    Batch other = batch;
    for (int j = 0; j < 9; ++j) {
      if (batch.masks[j][1] == -1) other.x.col(j) = other.x.col(j).unaryExpr([&](double) { return n(rng); });
      if (batch.masks[j][2] == -1) other.z.col(j) = other.z.col(j).unaryExpr([&](double) { return n(rng); });
    }
    CHECK(net.forward(other.view()) == before);
  }
  // Unmasked blocks do matter.
  Batch changed = batch;
  changed.x.col(0).array() += 1.0;  // column 0 has mask [1, 0, 0]
  CHECK(net.forward(changed.view()).col(0) != net.forward(batch.view()).col(0));
}

TEST_CASE("single-sample forward agrees with batched forward") {
  const NetworkLayout l = small_layout();
  ScoreNetwork net(l, 41);
  randomize(net, 42);
  const Batch batch = random_batch(l, 4, 43);
  const Eigen::MatrixXd all = net.forward(batch.view());
  for (int j = 0; j < 4; ++j) {
    const Eigen::VectorXd one = net.forward(batch.y.col(j), batch.x.col(j), batch.z.col(j), batch.t[j], batch.masks[j]);
    CHECK((one - all.col(j)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("adam first step has magnitude lr") {
  const NetworkLayout l = small_layout();
  ScoreNetwork net(l, 51);
  const ParameterSet start = net.parameters();
  ParameterSet g = zeros_like(net.parameters());
  for (auto& layer : g) {
    layer.weight.setConstant(0.37);
    layer.bias.setConstant(-2.5);
  }
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  AdamOptimizer opt(net, cfg);
  opt.step(net, g);
  CHECK(opt.state().step == 1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Eigen::MatrixXd dw = net.parameters()[i].weight - start[i].weight;
    const Eigen::VectorXd db = net.parameters()[i].bias - start[i].bias;
    // m_hat = g, v_hat = g^2 -> step = lr g / (|g| + eps).
    CHECK(dw.maxCoeff() == doctest::Approx(-1e-3 * 0.37 / (0.37 + 1e-8)).epsilon(1e-9));
    CHECK(dw.minCoeff() == doctest::Approx(dw.maxCoeff()));
    CHECK(db.maxCoeff() == doctest::Approx(1e-3 * 2.5 / (2.5 + 1e-8)).epsilon(1e-9));
  }
  ParameterSet wrong = g;
  wrong.pop_back();
  CHECK_THROWS_AS(opt.step(net, wrong), std::invalid_argument);
}

TEST_CASE("adam matches a hand-rolled reference for a few steps") {
  const NetworkLayout l = small_layout();
  ScoreNetwork net(l, 61);
  randomize(net, 62);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamOptimizer opt(net, cfg);
  double w = net.parameters()[1].weight(2, 3), m = 0.0, v = 0.0;
  for (int step = 1; step <= 5; ++step) {
    ParameterSet g = zeros_like(net.parameters());
    const double gv = 0.1 * step - 0.25;
    g[1].weight(2, 3) = gv;
    opt.step(net, g);
    m = cfg.beta1 * m + (1 - cfg.beta1) * gv;
    v = cfg.beta2 * v + (1 - cfg.beta2) * gv * gv;
    const double mh = m / (1 - std::pow(cfg.beta1, step)), vh = v / (1 - std::pow(cfg.beta2, step));
    w -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    CHECK(net.parameters()[1].weight(2, 3) == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip and version check") {
  const NetworkLayout l = small_layout();
  ScoreNetwork net(l, 71);
  randomize(net, 72);
  const auto dir = std::filesystem::temp_directory_path() / "tende_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "net.ckpt";
  save_checkpoint(net, path);
  const ScoreNetwork back = load_checkpoint(path);
  CHECK(back.layout() == net.layout());
  CHECK(back.frequencies() == net.frequencies());
  const Batch batch = random_batch(l, 5, 73);
  CHECK(back.forward(batch.view()) == net.forward(batch.view()));

  {
    std::ifstream in(path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    CHECK(magic == "tende-checkpoint");
    CHECK(version == kCheckpointFormatVersion);
  }
  std::string body;
  {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    body = ss.str();
  }
  const auto bumped = dir / "future.ckpt";
  {
    std::ofstream out(bumped);
    out << "tende-checkpoint " << kCheckpointFormatVersion + 1 << body.substr(body.find('\n'));
  }
  CHECK_THROWS_AS(load_checkpoint(bumped), IoError);
  const auto truncated = dir / "short.ckpt";
  {
    std::ofstream out(truncated);
    out << body.substr(0, body.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(truncated), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("parameter helpers") {
  ScoreNetwork net(small_layout(), 81);
  ParameterSet z = zeros_like(net.parameters());
  CHECK(parameter_count(z) == parameter_count(net.parameters()));
  CHECK(all_finite(z));
  z[0].weight(0, 0) = std::nan("");
  CHECK_FALSE(all_finite(z));
}
