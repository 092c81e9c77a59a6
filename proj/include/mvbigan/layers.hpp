#pragma once

#include <random>
#include <string>
#include <variant>
#include <vector>

#include "mvbigan/core.hpp"

namespace mvbigan {

// Batch matrices hold one item per column.

enum class Mode { Train, Eval };

enum class Activation { Identity, Relu, LeakyRelu, Sigmoid, Tanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
struct Buffer {
  std::string name;
  Vec<T> value;
};

// Square feature maps, stored channel-major inside a column:
// row index = channel * size * size + y * size + x.
struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 4;
  int stride = 2;
  int padding = 1;
  int in_size = 0;
  bool transposed = false;

  int out_size() const;
  int in_features() const { return in_channels * in_size * in_size; }
  int out_features() const { return out_channels * out_size() * out_size(); }
};

template <typename T>
struct DenseLayer {
  Param<T> weight;  // out x in
  Param<T> bias;    // out x 1
};

template <typename T>
struct ConvLayer {
  ConvShape shape;
  Param<T> weight;  // conv: out x (in*k*k); transposed: in x (out*k*k)
  Param<T> bias;
};

// Parameter-free batch normalization; per feature for dense inputs,
// per channel for feature maps (spatial = size*size).
template <typename T>
struct BatchNormLayer {
  int channels = 0;
  int spatial = 1;
  Buffer<T> running_mean;
  Buffer<T> running_var;
};

struct ActivationLayer {
  Activation kind = Activation::Identity;
  double slope = 0.2;
};

template <typename T>
using Layer = std::variant<DenseLayer<T>, ConvLayer<T>, BatchNormLayer<T>, ActivationLayer>;

template <typename T>
struct LayerTape {
  Mat<T> input;
  Mat<T> output;
  Vec<T> mean;
  Vec<T> var;
  Vec<T> inv_std;
};

template <typename T>
struct StackTape {
  std::vector<LayerTape<T>> layers;
};

struct BackwardOptions {
  bool input_grad = true;
  bool param_grads = true;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

template <typename T>
class Stack {
 public:
  Stack() = default;
  explicit Stack(std::string name) : name_(std::move(name)) {}

  Stack& dense(int in, int out);
  Stack& conv(const ConvShape& shape);
  Stack& batchnorm(int channels, int spatial = 1);
  Stack& act(Activation kind, double slope = 0.2);

  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }
  const std::string& name() const { return name_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }

  // Input/output widths of the first/last sized layer.
  int input_size() const;
  int output_size() const;

  // Pure in both modes; batch statistics land in `tape` when given.
  Mat<T> forward(const Mat<T>& x, Mode mode, StackTape<T>* tape = nullptr) const;

  // Accumulates into Param::grad; returns d loss / d input (empty when
  // opts.input_grad is false).
  Mat<T> backward(const Mat<T>& dy, const StackTape<T>& tape, BackwardOptions opts = {});

  void update_running_stats(const StackTape<T>& tape, double momentum = kBatchNormMomentum);

  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, running
  // statistics reset to (0, 1).
  void initialize(std::mt19937_64& rng);

  template <typename F>
  void for_each_param(F&& f) {
    for (auto& layer : layers_) {
      if (auto* d = std::get_if<DenseLayer<T>>(&layer)) {
        f(d->weight);
        f(d->bias);
      } else if (auto* c = std::get_if<ConvLayer<T>>(&layer)) {
        f(c->weight);
        f(c->bias);
      }
    }
  }
  template <typename F>
  void for_each_param(F&& f) const {
    const_cast<Stack*>(this)->for_each_param([&](const Param<T>& p) { f(p); });
  }

  template <typename F>
  void for_each_buffer(F&& f) {
    for (auto& layer : layers_) {
      if (auto* bn = std::get_if<BatchNormLayer<T>>(&layer)) {
        f(bn->running_mean);
        f(bn->running_var);
      }
    }
  }

 private:
  std::string layer_name(std::size_t index) const;

  std::string name_;
  std::vector<Layer<T>> layers_;
};

template <typename T>
T apply_activation(Activation kind, T x, T slope);

extern template class Stack<float>;
extern template class Stack<double>;

}  // namespace mvbigan
