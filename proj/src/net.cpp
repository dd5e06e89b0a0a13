#include "csim/net.hpp"

#include <cmath>
#include <stdexcept>

namespace csim {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
    case Activation::Exp: return "exp";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "softmax") return Activation::Softmax;
  if (s == "exp") return Activation::Exp;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Mse: return "mse";
    case LossKind::L1: return "l1";
    case LossKind::Huber: return "huber";
    case LossKind::RelativeMse: return "relative_mse";
    case LossKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "mse";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "l1") return LossKind::L1;
  if (s == "huber") return LossKind::Huber;
  if (s == "relative_mse") return LossKind::RelativeMse;
  if (s == "softmax_cross_entropy") return LossKind::SoftmaxCrossEntropy;
  throw std::invalid_argument("unknown loss kind: " + s);
}

DenseNet DenseNet::glorot(const std::vector<int>& dims, std::uint64_t seed, Activation output_activation) {
  if (dims.size() < 2) throw std::invalid_argument("a net needs at least input and output dims");
  DenseNet net;
  net.layer_dims = dims;
  net.output_activation = output_activation;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(fan_out));
  }
  return net;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

namespace {

void apply_output_activation(const DenseNet& net, Matrix& z) {
  if (net.output_activation == Activation::Softmax) {
    z = softmax_rows(z);
  } else if (net.output_activation == Activation::Relu) {
    z = z.cwiseMax(0.0);
  } else if (net.output_activation == Activation::Exp) {
    // Clipped above so a wild early step cannot overflow.
    z = z.cwiseMin(30.0).array().exp();
  }
}

void check_input(const DenseNet& net, const Matrix& batch) {
  if (batch.cols() != net.input_dim()) {
    throw std::invalid_argument("batch has " + std::to_string(batch.cols()) +
                                " columns, net expects " + std::to_string(net.input_dim()));
  }
}

}  // namespace

Matrix DenseNet::forward(const Matrix& batch) const {
  check_input(*this, batch);
  Matrix a = batch;
  for (int l = 0; l < layer_count(); ++l) {
    Matrix z = (a * weights[l]).rowwise() + biases[l].transpose();
    if (l + 1 < layer_count()) {
      a = z.cwiseMax(0.0);
    } else {
      apply_output_activation(*this, z);
      a = std::move(z);
    }
  }
  return a;
}

Matrix forward_cached(const DenseNet& net, const Matrix& batch, ForwardCache& cache) {
  check_input(net, batch);
  cache.activations.clear();
  cache.activations.reserve(net.layer_count() + 1);
  cache.activations.push_back(batch);
  for (int l = 0; l < net.layer_count(); ++l) {
    Matrix z = (cache.activations.back() * net.weights[l]).rowwise() + net.biases[l].transpose();
    if (l + 1 < net.layer_count()) {
      z = z.cwiseMax(0.0);
    } else {
      apply_output_activation(net, z);
    }
    cache.activations.push_back(std::move(z));
  }
  return cache.activations.back();
}

Gradients zero_gradients(const DenseNet& net) {
  Gradients g;
  for (int l = 0; l < net.layer_count(); ++l) {
    g.weights.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.emplace_back(Vector::Zero(net.biases[l].size()));
  }
  g.input = Matrix();
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  if (input.size() > 0 && other.input.size() > 0) input += other.input;
  return *this;
}

Gradients& Gradients::scale(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
  if (input.size() > 0) input *= factor;
  return *this;
}

Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& upstream) {
  const int layers = net.layer_count();
  if (static_cast<int>(cache.activations.size()) != layers + 1) {
    throw std::invalid_argument("backward needs the cache of a matching forward pass");
  }
  Gradients grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);

  // delta = dL/dz for the current layer, starting from the output.
  Matrix delta;
  const Matrix& y = cache.activations.back();
  switch (net.output_activation) {
    case Activation::Identity:
      delta = upstream;
      break;
    case Activation::Relu:
      delta = (y.array() > 0.0).cast<double>() * upstream.array();
      break;
    case Activation::Exp:
      // y = exp(z) (clipped); below the clip dy/dz = y.
      delta = (y.array() * upstream.array()).matrix();
      break;
    case Activation::Softmax: {
      // dL/dz = y .* (g - rowdot(g, y))
      delta.resize(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double dot = upstream.row(i).dot(y.row(i));
        delta.row(i) = y.row(i).cwiseProduct(upstream.row(i).array().operator-(dot).matrix());
      }
      break;
    }
  }

  for (int l = layers - 1; l >= 0; --l) {
    grads.weights[l] = cache.activations[l].transpose() * delta;
    grads.biases[l] = delta.colwise().sum().transpose();
    Matrix prev = delta * net.weights[l].transpose();
    if (l > 0) {
      // Hidden layers are ReLU; gate by the post-activation sign.
      delta = (cache.activations[l].array() > 0.0).cast<double>() * prev.array();
    } else {
      grads.input = std::move(prev);
    }
  }
  return grads;
}

LossResult loss(LossKind kind, const Matrix& pred, const Matrix& target, double param) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("loss: prediction and target shapes differ");
  }
  const double n = static_cast<double>(pred.rows());
  LossResult out;
  Matrix r = pred - target;
  switch (kind) {
    case LossKind::Mse:
      out.value = r.squaredNorm() / n;
      out.grad = 2.0 * r / n;
      break;
    case LossKind::L1:
      out.value = r.array().abs().sum() / n;
      out.grad = r.array().sign().matrix() / n;
      break;
    case LossKind::Huber: {
      const double d = param;
      Eigen::ArrayXXd a = r.array().abs();
      out.value = ((a <= d).select(0.5 * a * a, d * (a - 0.5 * d))).sum() / n;
      out.grad = ((a <= d).select(r.array(), d * r.array().sign())).matrix() / n;
      break;
    }
    case LossKind::RelativeMse: {
      Eigen::ArrayXXd denom = target.array().abs().max(std::max(param, 1e-12)).square();
      out.value = (r.array().square() / denom).sum() / n;
      out.grad = (2.0 * r.array() / denom).matrix() / n;
      break;
    }
    case LossKind::SoftmaxCrossEntropy:
      throw std::invalid_argument("use softmax_cross_entropy() for class targets");
  }
  return out;
}

LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw std::invalid_argument("cross-entropy: one label per row required");
  }
  const int classes = static_cast<int>(logits.cols());
  const double n = static_cast<double>(logits.rows());
  Matrix probs = softmax_rows(logits);
  LossResult out;
  out.grad = probs / n;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int label = labels[i];
    if (label < 0 || label >= classes) {
      throw std::invalid_argument("cross-entropy: class index out of range");
    }
    total -= std::log(std::max(probs(i, label), 1e-300));
    out.grad(i, label) -= 1.0 / n;
  }
  out.value = total / n;
  return out;
}

AdamState::AdamState(const DenseNet& net, double lr_) {
  lr = lr_;
  for (int l = 0; l < net.layer_count(); ++l) {
    m_w.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    v_w.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    m_b.emplace_back(Vector::Zero(net.biases[l].size()));
    v_b.emplace_back(Vector::Zero(net.biases[l].size()));
  }
}

void AdamState::step(DenseNet& net, const Gradients& grads) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (int l = 0; l < net.layer_count(); ++l) {
    m_w[l] = beta1 * m_w[l] + (1.0 - beta1) * grads.weights[l];
    v_w[l] = beta2 * v_w[l].array() + (1.0 - beta2) * grads.weights[l].array().square();
    net.weights[l].array() -=
        lr * (m_w[l].array() / bc1) / ((v_w[l].array() / bc2).sqrt() + epsilon);

    m_b[l] = beta1 * m_b[l] + (1.0 - beta1) * grads.biases[l];
    v_b[l] = beta2 * v_b[l].array() + (1.0 - beta2) * grads.biases[l].array().square();
    net.biases[l].array() -=
        lr * (m_b[l].array() / bc1) / ((v_b[l].array() / bc2).sqrt() + epsilon);
  }
}

nlohmann::json net_to_json(const DenseNet& net) {
  nlohmann::json j;
  j["layer_dims"] = net.layer_dims;
  j["output_activation"] = to_string(net.output_activation);
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (int l = 0; l < net.layer_count(); ++l) {
    std::vector<double> w(net.weights[l].data(), net.weights[l].data() + net.weights[l].size());
    std::vector<double> b(net.biases[l].data(), net.biases[l].data() + net.biases[l].size());
    weights.push_back(w);
    biases.push_back(b);
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

DenseNet net_from_json(const nlohmann::json& j) {
  DenseNet net;
  net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  net.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    const int rows = net.layer_dims[l];
    const int cols = net.layer_dims[l + 1];
    auto w = weights.at(l).get<std::vector<double>>();
    auto b = biases.at(l).get<std::vector<double>>();
    if (static_cast<int>(w.size()) != rows * cols || static_cast<int>(b.size()) != cols) {
      throw std::invalid_argument("checkpoint weight shapes disagree with layer_dims");
    }
    net.weights.push_back(Eigen::Map<Matrix>(w.data(), rows, cols));
    net.biases.push_back(Eigen::Map<Vector>(b.data(), cols));
  }
  return net;
}

}  // namespace csim
