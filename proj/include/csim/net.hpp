#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "csim/rng.hpp"

namespace csim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Identity, Relu, Softmax, Exp };
enum class LossKind { Mse, L1, Huber, RelativeMse, SoftmaxCrossEntropy };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

// Fully connected net. Rows of a batch are samples; weights[l] is
// (in_dim x out_dim). Hidden layers are ReLU, the output layer is identity
// or row-wise softmax.
struct DenseNet {
  std::vector<int> layer_dims;
  Activation output_activation = Activation::Identity;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static DenseNet glorot(const std::vector<int>& dims, std::uint64_t seed,
                         Activation output_activation = Activation::Identity);

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }

  Matrix forward(const Matrix& batch) const;
};

// Post-activation values per layer; activations[0] is the input batch.
struct ForwardCache {
  std::vector<Matrix> activations;
  const Matrix& output() const { return activations.back(); }
};

Matrix forward_cached(const DenseNet& net, const Matrix& batch, ForwardCache& cache);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;  // dL/d(batch); the extractor consumes this from downstream nets

  Gradients& operator+=(const Gradients& other);
  Gradients& scale(double factor);
};

Gradients zero_gradients(const DenseNet& net);

// Backpropagates dL/d(output) through the cached forward pass.
Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& upstream);

struct LossResult {
  double value = 0.0;
  Matrix grad;  // dL/d(pred), same shape as pred (logits for cross-entropy)
};

// Regression losses are means over the batch of the per-sample loss summed
// across output columns. Huber is quadratic within `param`, linear outside.
// RelativeMse divides each squared residual by max(|target|, param)^2,
// suiting positive heavy-tailed measurements judged by percentage error
// while keeping the per-sample weights bounded.
LossResult loss(LossKind kind, const Matrix& pred, const Matrix& target, double param = 1.0);

// Cross-entropy on logits with integer class targets; the softmax is fused
// into the loss for a stable gradient.
LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels);

Matrix softmax_rows(const Matrix& logits);

// Adam with bias correction, one moment pair per parameter tensor of the
// net it was built for.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t t = 0;
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;

  explicit AdamState(const DenseNet& net, double lr = 1e-4);
  void step(DenseNet& net, const Gradients& grads);
};

nlohmann::json net_to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& j);

}  // namespace csim
