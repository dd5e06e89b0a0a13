#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csim/net.hpp"
#include "csim/rng.hpp"

using namespace csim;

namespace {

// Central finite difference of a scalar function with respect to one entry.
template <typename F>
double central_diff(F&& f, double& param, double h = 1e-5) {
  const double orig = param;
  param = orig + h;
  const double fp = f();
  param = orig - h;
  const double fm = f();
  param = orig;
  return (fp - fm) / (2.0 * h);
}

Matrix random_matrix(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

}  // namespace

TEST_CASE("forward: zero weights give zero output") {
  DenseNet net = DenseNet::glorot({3, 4, 2}, 1);
  for (auto& w : net.weights) w.setZero();
  for (auto& b : net.biases) b.setZero();
  const Matrix out = net.forward(Matrix::Random(5, 3));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: single identity layer passes input through") {
  DenseNet net = DenseNet::glorot({3, 3}, 1);
  net.weights[0] = Matrix::Identity(3, 3);
  net.biases[0].setZero();
  const Matrix x = Matrix::Random(4, 3);
  CHECK((net.forward(x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: fixed 2x2 ReLU output matches hand arithmetic") {
  DenseNet net = DenseNet::glorot({2, 2, 1}, 1);
  net.weights[0] << 1.0, -1.0, 2.0, 0.5;
  net.biases[0] << 0.0, 0.25;
  net.weights[1] << 1.0, 2.0;
  net.biases[1] << -0.5;
  Matrix x(1, 2);
  x << 1.0, 2.0;
  // hidden pre-act: (1*1+2*2, 1*-1+2*0.5+0.25) = (5, 0.25); ReLU keeps both
  // output: 5*1 + 0.25*2 - 0.5 = 5.0
  CHECK(net.forward(x)(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("forward: shape mismatch is rejected") {
  DenseNet net = DenseNet::glorot({3, 2}, 1);
  CHECK_THROWS_AS(net.forward(Matrix::Random(2, 4)), std::invalid_argument);
}

TEST_CASE("forward is deterministic and bit-identical across calls") {
  DenseNet net = DenseNet::glorot({4, 8, 3}, 99);
  const Matrix x = Matrix::Random(16, 4);
  const Matrix a = net.forward(x);
  const Matrix b = net.forward(x);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax rows lie in (0,1) and sum to one") {
  Rng rng(5);
  DenseNet net = DenseNet::glorot({3, 5, 4}, 2, Activation::Softmax);
  const Matrix out = net.forward(random_matrix(rng, 10, 3, -5.0, 5.0));
  for (int i = 0; i < out.rows(); ++i) {
    CHECK(out.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.row(i).minCoeff() > 0.0);
    CHECK(out.row(i).maxCoeff() < 1.0);
  }
}

TEST_CASE("backward: linear net MSE gradient matches the closed form") {
  DenseNet net = DenseNet::glorot({3, 2}, 3);
  Rng rng(4);
  const Matrix x = random_matrix(rng, 8, 3);
  const Matrix y = random_matrix(rng, 8, 2);
  ForwardCache cache;
  const Matrix pred = forward_cached(net, x, cache);
  const LossResult l = loss(LossKind::Mse, pred, y);
  const Gradients g = backward(net, cache, l.grad);
  const Matrix expected = 2.0 * x.transpose() * (x * net.weights[0] + Matrix::Ones(8, 1) * net.biases[0].transpose() - y) / 8.0;
  CHECK((g.weights[0] - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  DenseNet net = DenseNet::glorot({3, 4, 2}, 5);
  ForwardCache cache;
  forward_cached(net, Matrix::Random(6, 3), cache);
  const Gradients g = backward(net, cache, Matrix::Zero(6, 2));
  for (const auto& w : g.weights) CHECK(w.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.input.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: analytic gradients match finite differences across losses and shapes") {
  Rng rng(2026);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int in = 1 + rng.uniform_int(4);
    const int out = 1 + rng.uniform_int(3);
    std::vector<int> dims{in};
    const int hidden_layers = rng.uniform_int(3);
    for (int l = 0; l < hidden_layers; ++l) dims.push_back(1 + rng.uniform_int(8));
    dims.push_back(out);
    DenseNet net = DenseNet::glorot(dims, rng.next_u64());
    const int batch = 1 + rng.uniform_int(6);
    const Matrix x = random_matrix(rng, batch, in);

    const LossKind kinds[] = {LossKind::Mse, LossKind::L1, LossKind::Huber,
                              LossKind::SoftmaxCrossEntropy};
    const LossKind kind = kinds[trial % 4];
    Matrix target;
    std::vector<int> labels;
    if (kind == LossKind::SoftmaxCrossEntropy) {
      for (int i = 0; i < batch; ++i) labels.push_back(rng.uniform_int(out));
    } else {
      target = random_matrix(rng, batch, out);
    }

    auto objective = [&]() {
      const Matrix pred = net.forward(x);
      if (kind == LossKind::SoftmaxCrossEntropy) return softmax_cross_entropy(pred, labels).value;
      return loss(kind, pred, target, 0.7).value;
    };

    ForwardCache cache;
    const Matrix pred = forward_cached(net, x, cache);
    const LossResult l = kind == LossKind::SoftmaxCrossEntropy
                             ? softmax_cross_entropy(pred, labels)
                             : loss(kind, pred, target, 0.7);
    const Gradients g = backward(net, cache, l.grad);

    for (int l_i = 0; l_i < net.layer_count(); ++l_i) {
      for (int probe = 0; probe < 3; ++probe) {
        const int r = rng.uniform_int(static_cast<int>(net.weights[l_i].rows()));
        const int c = rng.uniform_int(static_cast<int>(net.weights[l_i].cols()));
        const double analytic = g.weights[l_i](r, c);
        const double numeric = central_diff(objective, net.weights[l_i](r, c));
        // L1/Huber kinks make finite differences unreliable near zero.
        if (std::fabs(analytic) < 1e-7 && std::fabs(numeric) < 1e-7) continue;
        CHECK(std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-8}) <
              1e-4);
        ++checked;
      }
    }
  }
  CHECK(checked > 150);
}

TEST_CASE("backward: input gradients match finite differences") {
  Rng rng(31);
  DenseNet net = DenseNet::glorot({3, 6, 2}, 17);
  Matrix x = random_matrix(rng, 4, 3);
  const Matrix target = random_matrix(rng, 4, 2);
  auto objective = [&]() { return loss(LossKind::Mse, net.forward(x), target).value; };
  ForwardCache cache;
  const Matrix pred = forward_cached(net, x, cache);
  const Gradients g = backward(net, cache, loss(LossKind::Mse, pred, target).grad);
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) {
      const double numeric = central_diff(objective, x(i, j));
      CHECK(g.input(i, j) == doctest::Approx(numeric).epsilon(1e-4));
    }
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  DenseNet net = DenseNet::glorot({2, 2}, 9);
  const Matrix before = net.weights[0];
  AdamState adam(net, 0.1);
  adam.step(net, zero_gradients(net));
  CHECK((net.weights[0] - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: first unit-gradient step moves by about lr") {
  DenseNet net = DenseNet::glorot({1, 1}, 9);
  net.weights[0](0, 0) = 1.0;
  AdamState adam(net, 0.1);
  Gradients g = zero_gradients(net);
  g.weights[0](0, 0) = 1.0;
  adam.step(net, g);
  // bias-corrected ratio is 1/(sqrt(1)+eps) at t=1
  CHECK(net.weights[0](0, 0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: repeated identical gradients move monotonically against their sign") {
  DenseNet net = DenseNet::glorot({1, 1}, 9);
  net.weights[0](0, 0) = 0.0;
  AdamState adam(net, 0.05);
  Gradients g = zero_gradients(net);
  g.weights[0](0, 0) = -2.0;
  double prev = 0.0;
  for (int i = 0; i < 5; ++i) {
    adam.step(net, g);
    CHECK(net.weights[0](0, 0) > prev);
    prev = net.weights[0](0, 0);
  }
}

TEST_CASE("losses: exact values") {
  Matrix p(1, 1), t(1, 1);
  p << 2.0;
  t << 0.0;
  CHECK(loss(LossKind::Huber, p, t, 1.0).value == doctest::Approx(1.5));
  t << 2.0;
  CHECK(loss(LossKind::Mse, p, t).value == 0.0);
  CHECK(loss(LossKind::L1, p, t).value == 0.0);
  CHECK(loss(LossKind::Huber, p, t, 0.2).value == 0.0);

  // Uniform logits over 4 classes cost ln 4 per sample.
  Matrix logits = Matrix::Zero(3, 4);
  CHECK(softmax_cross_entropy(logits, {0, 1, 3}).value == doctest::Approx(std::log(4.0)));
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 1, 4}), std::invalid_argument);
}

TEST_CASE("checkpoint json round-trips a net exactly") {
  DenseNet net = DenseNet::glorot({3, 5, 2}, 12, Activation::Softmax);
  const DenseNet back = net_from_json(net_to_json(net));
  CHECK(back.layer_dims == net.layer_dims);
  CHECK(back.output_activation == net.output_activation);
  for (int l = 0; l < net.layer_count(); ++l) {
    CHECK((back.weights[l] - net.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.biases[l] - net.biases[l]).cwiseAbs().maxCoeff() == 0.0);
  }
}
