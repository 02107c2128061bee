#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "metairl/error.hpp"
#include "metairl/random.hpp"

namespace metairl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation : std::uint8_t { Tanh = 0, Relu = 1, Identity = 2 };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::Identity:
      return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw UsageError("unknown activation '" + name + "'");
}

/// Cached layer outputs from a batched forward pass. Column j of every matrix
/// belongs to sample j.
struct ForwardTape {
  std::vector<Matrix> activations;  // activations[0] is the input batch
};

/// Fully connected feed-forward network with all parameters stored in one flat
/// vector. Layer l owns an out x in weight block (column-major) followed by its bias.
/// Hidden layers share one activation; the output layer is always linear.
class DenseNet {
 public:
  DenseNet() = default;

  DenseNet(std::vector<int> sizes, Activation hidden) : sizes_(std::move(sizes)), hidden_(hidden) {
    require(sizes_.size() >= 2, "DenseNet needs at least an input and an output size");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      require(sizes_[l] > 0 && sizes_[l + 1] > 0, "DenseNet layer sizes must be positive");
      offsets_.push_back(total);
      total += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_ = Vector::Zero(static_cast<Eigen::Index>(total));
  }

  /// Fan-in scaled uniform initialization: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  /// biases zero. The output layer is further multiplied by `output_scale`.
  static DenseNet initialized(std::vector<int> sizes, Activation hidden, std::uint64_t seed,
                              double output_scale = 1.0) {
    DenseNet net(std::move(sizes), hidden);
    Rng rng(seed);
    for (int l = 0; l < net.layer_count(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
      const double scale = (l + 1 == net.layer_count()) ? output_scale : 1.0;
      auto w = net.weight_block(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          w(i, j) = scale * uniform(rng, -bound, bound);
        }
      }
    }
    return net;
  }

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  Activation activation(int layer) const { return layer + 1 == layer_count() ? Activation::Identity : hidden_; }
  Eigen::Index parameter_count() const { return params_.size(); }

  const Vector& parameters() const { return params_; }

  /// Replaces all parameters. Rejects wrong sizes and non-finite values so the
  /// network never holds a NaN/Inf weight.
  void set_parameters(const Vector& params) {
    require(params.size() == params_.size(), "parameter vector size mismatch");
    if (!params.allFinite()) {
      throw NumericalError("refusing to install non-finite network parameters");
    }
    params_ = params;
  }

  bool same_shape(const DenseNet& other) const { return sizes_ == other.sizes_ && hidden_ == other.hidden_; }

  Eigen::Map<const Matrix> weight(int l) const {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const Vector> bias(int l) const {
    return {params_.data() + offsets_[l] + static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
  }

  /// Offset of layer l's weight block inside the flat parameter vector.
  std::size_t layer_offset(int l) const { return offsets_[l]; }

  Vector forward(const Vector& input) const {
    require(input.size() == input_dim(), "forward: input has " + std::to_string(input.size()) +
                                             " entries, network expects " + std::to_string(input_dim()));
    Vector a = input;
    for (int l = 0; l < layer_count(); ++l) {
      Vector z = weight(l) * a + bias(l);
      apply_activation(activation(l), z);
      a = std::move(z);
    }
    return a;
  }

  /// Batched forward pass; `inputs` is input_dim x batch.
  Matrix forward_batch(const Matrix& inputs, ForwardTape* tape = nullptr) const {
    require(inputs.rows() == input_dim(), "forward_batch: input row count mismatch");
    if (tape != nullptr) {
      tape->activations.clear();
      tape->activations.reserve(layer_count() + 1);
      tape->activations.push_back(inputs);
    }
    Matrix a = inputs;
    for (int l = 0; l < layer_count(); ++l) {
      Matrix z = weight(l) * a;
      z.colwise() += bias(l);
      apply_activation(activation(l), z);
      a = std::move(z);
      if (tape != nullptr) tape->activations.push_back(a);
    }
    return a;
  }

  /// Gradient of sum_j <output_grads.col(j), net(x_j)> with respect to every parameter.
  Vector backward_batch(const ForwardTape& tape, const Matrix& output_grads) const {
    require(static_cast<int>(tape.activations.size()) == layer_count() + 1, "backward: tape does not match network");
    require(output_grads.rows() == output_dim() && output_grads.cols() == tape.activations.front().cols(),
            "backward: output gradient shape mismatch");
    Vector grad = Vector::Zero(params_.size());
    Matrix delta = output_grads;
    for (int l = layer_count() - 1; l >= 0; --l) {
      apply_derivative(activation(l), tape.activations[l + 1], delta);
      const Matrix& in = tape.activations[l];
      Eigen::Map<Matrix> gw(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      gw.noalias() = delta * in.transpose();
      Eigen::Map<Vector> gb(grad.data() + offsets_[l] + static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l],
                            sizes_[l + 1]);
      gb = delta.rowwise().sum();
      if (l > 0) {
        delta = weight(l).transpose() * delta;
      }
    }
    return grad;
  }

  Vector backward_batch(const Matrix& inputs, const Matrix& output_grads) const {
    ForwardTape tape;
    forward_batch(inputs, &tape);
    return backward_batch(tape, output_grads);
  }

  Vector backward(const Vector& input, const Vector& output_grad) const {
    require(input.size() == input_dim(), "backward: input size mismatch");
    require(output_grad.size() == output_dim(), "backward: output gradient size mismatch");
    return backward_batch(Matrix(input), Matrix(output_grad));
  }

  /// Directional derivative of the outputs along `direction` in parameter space
  /// (forward-mode), for every sample recorded in `tape`.
  Matrix jvp_batch(const ForwardTape& tape, const Vector& direction) const {
    require(direction.size() == params_.size(), "jvp: direction size mismatch");
    const Eigen::Index batch = tape.activations.front().cols();
    Matrix tangent = Matrix::Zero(input_dim(), batch);
    for (int l = 0; l < layer_count(); ++l) {
      Eigen::Map<const Matrix> dw(direction.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      Eigen::Map<const Vector> db(direction.data() + offsets_[l] + static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l],
                                  sizes_[l + 1]);
      Matrix zdot = dw * tape.activations[l];
      zdot.colwise() += db;
      if (l > 0) zdot.noalias() += weight(l) * tangent;
      apply_derivative(activation(l), tape.activations[l + 1], zdot);
      tangent = std::move(zdot);
    }
    return tangent;
  }

  bool operator==(const DenseNet& other) const {
    return sizes_ == other.sizes_ && hidden_ == other.hidden_ && params_.size() == other.params_.size() &&
           params_ == other.params_;
  }

 private:
  Eigen::Map<Matrix> weight_block(int l) { return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]}; }

  template <typename Derived>
  static void apply_activation(Activation act, Eigen::MatrixBase<Derived>& z) {
    switch (act) {
      case Activation::Tanh:
        z = z.array().tanh().matrix();
        break;
      case Activation::Relu:
        z = z.cwiseMax(0.0);
        break;
      case Activation::Identity:
        break;
    }
  }

  // Multiplies `delta` in place by the activation derivative, expressed via the
  // activation output y.
  static void apply_derivative(Activation act, const Matrix& y, Matrix& delta) {
    switch (act) {
      case Activation::Tanh:
        delta.array() *= (1.0 - y.array().square());
        break;
      case Activation::Relu:
        delta.array() *= (y.array() > 0.0).cast<double>();
        break;
      case Activation::Identity:
        break;
    }
  }

  std::vector<int> sizes_;
  Activation hidden_ = Activation::Tanh;
  std::vector<std::size_t> offsets_;
  Vector params_;
};

/// Numerically stable softmax of a logit column.
inline Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

/// Column-wise softmax.
inline Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    out.col(j) = softmax(logits.col(j));
  }
  return out;
}

}  // namespace metairl
