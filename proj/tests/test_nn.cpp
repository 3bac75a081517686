// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "fairprep/checkpoint.hpp"
#include "fairprep/error.hpp"
#include "fairprep/nn.hpp"

using namespace fairprep;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Scalar probe L = sum(output .* weights) so that dL/d(output) = weights.
double probe(const DenseNet& net, const Matrix& in, const Matrix& weights) {
  const Matrix out = net.predict(in);
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * weights.values()[i];
  return s;
}

}  // namespace

TEST_CASE("identity layer and softmax head") {
  DenseNet net({2, 2}, {Activation::identity}, 0.0, 1);
  auto w = net.weights(0);
  w[0] = 1, w[1] = 0, w[2] = 0, w[3] = 1;
  for (double& b : net.bias(0)) b = 0.0;
  CHECK(net.predict(Matrix{{1, 2}}) == Matrix{{1, 2}});

  const Matrix s = softmax_rows(Matrix{{0, 0}});
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 1) == doctest::Approx(0.5));
  const Matrix big = softmax_rows(Matrix{{1000, 0, -1000}});
  CHECK(big.all_finite());
  CHECK(big(0, 0) + big(0, 1) + big(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hand-set two-layer relu net matches scalar arithmetic") {
  DenseNet net({1, 2, 1}, {Activation::relu, Activation::identity}, 0.0, 3);
  auto w0 = net.weights(0), b0 = net.bias(0), w1 = net.weights(1), b1 = net.bias(1);
  w0[0] = 2.0, w0[1] = -1.0;
  b0[0] = 0.5, b0[1] = 0.25;
  w1[0] = 3.0, w1[1] = 4.0;
  b1[0] = -1.0;
  // hidden = relu(2*1 + 0.5, -1*1 + 0.25) = (2.5, 0); out = 3*2.5 + 4*0 - 1 = 6.5
  CHECK(net.predict(Matrix{{1.0}})(0, 0) == doctest::Approx(6.5));
}

TEST_CASE("shape and state errors") {
  DenseNet net = DenseNet::mlp(3, {4}, 2, Activation::softmax, 0.0, 1);
  CHECK_THROWS_AS(net.predict(Matrix(1, 2)), ShapeError);
  CHECK_THROWS_AS(net.backward(Matrix(1, 2)), StateError);
  CHECK_THROWS_AS(DenseNet({3, 4}, {Activation::relu, Activation::relu}, 0.0, 1), ShapeError);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Rng rng(4);
  DenseNet net = DenseNet::mlp(3, {5, 4}, 2, Activation::identity, 0.0, 9);
  net.forward(random_matrix(6, 3, rng), Mode::training);
  const NetGradients g = net.backward(Matrix(6, 2));
  for (double v : g.params) CHECK(v == 0.0);
}

TEST_CASE("single linear neuron squared loss gradient is 2 (yhat - y) x") {
  DenseNet net({2, 1}, {Activation::identity}, 0.0, 5);
  auto w = net.weights(0);
  w[0] = 0.5, w[1] = -0.25;
  net.bias(0)[0] = 0.1;
  const Matrix x{{2.0, 4.0}};
  const Matrix out = net.forward(x, Mode::training);
  const double yhat = 0.5 * 2.0 - 0.25 * 4.0 + 0.1;
  CHECK(out(0, 0) == doctest::Approx(yhat));
  const LossValue l = squared_error(out, Matrix{{1.0}});
  const NetGradients g = net.backward(l.grad);
  CHECK(g.params[0] == doctest::Approx(2.0 * (yhat - 1.0) * 2.0));
  CHECK(g.params[1] == doctest::Approx(2.0 * (yhat - 1.0) * 4.0));
  CHECK(g.params[2] == doctest::Approx(2.0 * (yhat - 1.0)));
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(12);
  const std::vector<Activation> heads{Activation::identity, Activation::softmax, Activation::sigmoid};
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t in = 1 + rng.index(5), hidden = 1 + rng.index(8), out = 2 + rng.index(3);
    DenseNet net = DenseNet::mlp(in, {hidden, hidden}, out, heads[trial % 3], 0.0, 100 + trial);
    const Matrix x = random_matrix(4, in, rng), probe_w = random_matrix(4, out, rng);
    // Nonzero biases keep pre-activations away from the ReLU kink.
    auto params = net.parameters();
    for (double& v : params) v = rng.normal();
    net.forward(x, Mode::training);
    const NetGradients g = net.backward(probe_w);
    for (std::size_t p = 0; p < params.size(); ++p) {
      const double saved = params[p], h = 1e-5;
      params[p] = saved + h;
      const double up = probe(net, x, probe_w);
      params[p] = saved - h;
      const double down = probe(net, x, probe_w);
      params[p] = saved;
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(fd - g.params[p]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      Matrix xp = x, xm = x;
      xp.values()[i] += 1e-5;
      xm.values()[i] -= 1e-5;
      const double fd = (probe(net, xp, probe_w) - probe(net, xm, probe_w)) / 2e-5;
      CHECK(std::abs(fd - g.input.values()[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("dropout only in training mode") {
  Rng rng(2);
  DenseNet net = DenseNet::mlp(4, {32}, 1, Activation::identity, 0.5, 8);
  const Matrix x = random_matrix(10, 4, rng);
  CHECK(net.predict(x) == net.predict(x));
  CHECK(net.forward(x, Mode::inference) == net.predict(x));
  CHECK_FALSE(net.forward(x, Mode::training) == net.predict(x));
}

TEST_CASE("same seed gives identical parameters after training steps") {
  auto run = [] {
    Rng rng(1);
    DenseNet net = DenseNet::mlp(3, {8}, 1, Activation::identity, 0.1, 42);
    AdamState adam(net.parameter_count(), {});
    for (int s = 0; s < 20; ++s) {
      const Matrix x = random_matrix(16, 3, rng);
      const Matrix out = net.forward(x, Mode::training);
      const LossValue l = squared_error(out, Matrix(16, 1, 0.3));
      adam.step(net.parameters(), net.backward(l.grad).params);
    }
    return std::vector<double>(net.parameters().begin(), net.parameters().end());
  };
  CHECK(run() == run());
}

TEST_CASE("adam single step follows the recurrence") {
  AdamState adam(1, AdamConfig{0.1, 0.0, 0.999, 1e-8});
  std::vector<double> p{1.0};
  const std::vector<double> g{1.0};
  adam.step(p, g);
  // v = 0.001, v_hat = 0.001 / (1 - 0.999) = 1, step = 0.1 * 1 / (1 + 1e-8)
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(adam.steps() == 1);

  const double before = p[0];
  adam.step(p, g);
  const double second = before - p[0];
  CHECK(second <= 0.1 / (1.0 + 1e-8) + 1e-15);

  AdamState still(2, {});
  std::vector<double> q{0.3, -0.2};
  still.step(q, std::vector<double>{0.0, 0.0});
  CHECK(q == std::vector<double>{0.3, -0.2});

  std::vector<double> r{0.0};
  AdamState up(1, AdamConfig{0.1, 0.0, 0.999, 1e-8});
  up.ascend(r, g);
  CHECK(r[0] > 0.0);
}

TEST_CASE("gumbel softmax") {
  Rng rng(17);
  CHECK_THROWS_AS(gumbel_softmax(Matrix{{0, 0}}, 0.0, false, rng), ParameterError);

  const Matrix logits(2000, 3, 0.0);
  const auto hard = gumbel_softmax(logits, 0.5, true, rng);
  for (std::size_t r = 0; r < hard.output.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK((hard.output(r, c) == 0.0 || hard.output(r, c) == 1.0));
      sum += hard.output(r, c);
    }
    CHECK(sum == 1.0);
  }

  Matrix peaked(10000, 3, 0.0);
  for (std::size_t r = 0; r < peaked.rows(); ++r) peaked(r, 0) = 10.0;
  const auto s = gumbel_softmax(peaked, 0.5, true, rng);
  double wins = 0.0;
  for (std::size_t r = 0; r < s.output.rows(); ++r) wins += s.output(r, 0);
  CHECK(wins / 10000.0 >= 0.99);

  const auto warm = gumbel_softmax(Matrix(10000, 4, 0.0), 1e4, false, rng);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 10000; ++r) mean += warm.output(r, c) / 10000.0;
    CHECK(std::abs(mean - 0.25) <= 0.05);
  }
}

TEST_CASE("gumbel softmax backward matches finite differences of the soft sample") {
  const Matrix logits{{0.3, -0.2, 0.9}};
  const double temp = 0.7;
  const Matrix probe_w{{0.5, -1.0, 2.0}};
  auto value = [&](const Matrix& l) {
    const Matrix s = softmax_rows(Matrix{{l(0, 0) / temp, l(0, 1) / temp, l(0, 2) / temp}});
    return s(0, 0) * probe_w(0, 0) + s(0, 1) * probe_w(0, 1) + s(0, 2) * probe_w(0, 2);
  };
  const Matrix soft = softmax_rows(Matrix{{0.3 / temp, -0.2 / temp, 0.9 / temp}});
  const Matrix g = gumbel_softmax_backward(soft, probe_w, temp);
  for (std::size_t c = 0; c < 3; ++c) {
    Matrix up = logits, down = logits;
    up(0, c) += 1e-6;
    down(0, c) -= 1e-6;
    CHECK(g(0, c) == doctest::Approx((value(up) - value(down)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("losses") {
  const LossValue ce = cross_entropy(Matrix{{0.25, 0.75}}, Matrix{{0.0, 1.0}});
  CHECK(ce.value == doctest::Approx(-std::log(0.75)));
  CHECK(ce.grad(0, 1) == doctest::Approx(-1.0 / 0.75));
  const LossValue clipped = cross_entropy(Matrix{{1.0, 0.0}}, Matrix{{0.0, 1.0}});
  CHECK(clipped.value == doctest::Approx(-std::log(kProbabilityClip)));
  CHECK(std::isfinite(clipped.value));
  const LossValue se = squared_error(Matrix{{1.0}, {3.0}}, Matrix{{0.0}, {1.0}});
  CHECK(se.value == doctest::Approx((1.0 + 4.0) / 2.0));
  CHECK(se.grad(1, 0) == doctest::Approx(2.0 * 2.0 / 2.0));
}

TEST_CASE("checkpoint round trip is bit exact") {
  DenseNet net = DenseNet::mlp(3, {7, 5}, 2, Activation::softmax, 0.1, 77);
  Rng rng(3);
  net.forward(random_matrix(4, 3, rng), Mode::training);  // advances the dropout stream
  const auto dir = std::filesystem::temp_directory_path() / "fairprep_test_ckpt";
  save_json(to_json(net), dir / "net.json");
  const DenseNet back = densenet_from_json(load_json(dir / "net.json"));
  CHECK(back == net);
  CHECK(back.rng().state() == net.rng().state());
  const Matrix x = random_matrix(5, 3, rng);
  CHECK(back.predict(x) == net.predict(x));

  nlohmann::json doc = to_json(net);
  doc["params"].erase(0);
  CHECK_THROWS(densenet_from_json(doc));
  std::filesystem::remove_all(dir);
}
