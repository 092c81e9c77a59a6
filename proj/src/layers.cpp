#include "mvbigan/layers.hpp"

#include <cmath>

namespace mvbigan {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity" || s == "linear") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "tanh") return Activation::Tanh;
  throw Error(ErrorKind::InvalidConfig, "unknown activation '" + s + "'");
}

int ConvShape::out_size() const {
  if (transposed) return (in_size - 1) * stride - 2 * padding + kernel;
  return (in_size + 2 * padding - kernel) / stride + 1;
}

template <typename T>
T apply_activation(Activation kind, T x, T slope) {
  switch (kind) {
    case Activation::Identity: return x;
    case Activation::Relu: return x > T(0) ? x : T(0);
    case Activation::LeakyRelu: return x > T(0) ? x : slope * x;
    case Activation::Sigmoid: return T(1) / (T(1) + std::exp(-x));
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

template float apply_activation<float>(Activation, float, float);
template double apply_activation<double>(Activation, double, double);

namespace {

template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const Mat<T>>;

// cols(p, c*k*k + ky*k + kx) = src(c, py*stride - pad + ky, px*stride - pad + kx),
// src is (src_size^2 x channels), cols is (grid^2 x channels*k*k).
template <typename T>
void gather_patches(const ConstMapMat<T>& src, int channels, int src_size, int grid, int k,
                    int stride, int pad, Mat<T>& cols) {
  cols.setZero(static_cast<Eigen::Index>(grid) * grid, static_cast<Eigen::Index>(channels) * k * k);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index col = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        for (int py = 0; py < grid; ++py) {
          const int sy = py * stride - pad + ky;
          if (sy < 0 || sy >= src_size) continue;
          for (int px = 0; px < grid; ++px) {
            const int sx = px * stride - pad + kx;
            if (sx < 0 || sx >= src_size) continue;
            cols(py * grid + px, col) = src(sy * src_size + sx, c);
          }
        }
      }
    }
  }
}

// Adjoint of gather_patches.
template <typename T>
void scatter_patches(const Mat<T>& cols, int channels, int dst_size, int grid, int k, int stride,
                     int pad, MapMat<T>& dst) {
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index col = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        for (int py = 0; py < grid; ++py) {
          const int sy = py * stride - pad + ky;
          if (sy < 0 || sy >= dst_size) continue;
          for (int px = 0; px < grid; ++px) {
            const int sx = px * stride - pad + kx;
            if (sx < 0 || sx >= dst_size) continue;
            dst(sy * dst_size + sx, c) += cols(py * grid + px, col);
          }
        }
      }
    }
  }
}

template <typename T>
Mat<T> conv_forward(const ConvLayer<T>& L, const Mat<T>& x) {
  const auto& s = L.shape;
  const int in = s.in_size, out = s.out_size(), k = s.kernel;
  const Eigen::Index batch = x.cols();
  Mat<T> y(static_cast<Eigen::Index>(s.out_channels) * out * out, batch);
  Mat<T> cols;
  for (Eigen::Index b = 0; b < batch; ++b) {
    ConstMapMat<T> xb(x.col(b).data(), static_cast<Eigen::Index>(in) * in, s.in_channels);
    MapMat<T> yb(y.col(b).data(), static_cast<Eigen::Index>(out) * out, s.out_channels);
    if (!s.transposed) {
      gather_patches<T>(xb, s.in_channels, in, out, k, s.stride, s.padding, cols);
      yb.noalias() = cols * L.weight.value.transpose();
    } else {
      cols.noalias() = xb * L.weight.value;
      yb.setZero();
      scatter_patches<T>(cols, s.out_channels, out, in, k, s.stride, s.padding, yb);
    }
    yb.rowwise() += L.bias.value.col(0).transpose();
  }
  return y;
}

template <typename T>
Mat<T> conv_backward(ConvLayer<T>& L, const Mat<T>& x, const Mat<T>& dy, BackwardOptions opts) {
  const auto& s = L.shape;
  const int in = s.in_size, out = s.out_size(), k = s.kernel;
  const Eigen::Index batch = x.cols();
  Mat<T> dx;
  if (opts.input_grad) dx.setZero(x.rows(), batch);
  Mat<T> cols, dcols;
  for (Eigen::Index b = 0; b < batch; ++b) {
    ConstMapMat<T> xb(x.col(b).data(), static_cast<Eigen::Index>(in) * in, s.in_channels);
    ConstMapMat<T> dyb(dy.col(b).data(), static_cast<Eigen::Index>(out) * out, s.out_channels);
    if (!s.transposed) {
      if (opts.param_grads) {
        gather_patches<T>(xb, s.in_channels, in, out, k, s.stride, s.padding, cols);
        L.weight.grad.noalias() += dyb.transpose() * cols;
        L.bias.grad.col(0) += dyb.colwise().sum().transpose();
      }
      if (opts.input_grad) {
        dcols.noalias() = dyb * L.weight.value;
        MapMat<T> dxb(dx.col(b).data(), static_cast<Eigen::Index>(in) * in, s.in_channels);
        scatter_patches<T>(dcols, s.in_channels, in, out, k, s.stride, s.padding, dxb);
      }
    } else {
      gather_patches<T>(dyb, s.out_channels, out, in, k, s.stride, s.padding, dcols);
      if (opts.param_grads) {
        L.weight.grad.noalias() += xb.transpose() * dcols;
        L.bias.grad.col(0) += dyb.colwise().sum().transpose();
      }
      if (opts.input_grad) {
        MapMat<T> dxb(dx.col(b).data(), static_cast<Eigen::Index>(in) * in, s.in_channels);
        dxb.noalias() = dcols * L.weight.value.transpose();
      }
    }
  }
  return dx;
}

// Per-channel mean/variance over batch and spatial positions.
template <typename T>
void channel_moments(const Mat<T>& x, int channels, int spatial, Vec<T>& mean, Vec<T>& var) {
  mean.setZero(channels);
  var.setZero(channels);
  const T n = static_cast<T>(x.cols()) * static_cast<T>(spatial);
  if (spatial == 1) {
    mean = x.rowwise().mean();
    var = (x.colwise() - mean).array().square().rowwise().mean();
    return;
  }
  for (int c = 0; c < channels; ++c) {
    auto block = x.middleRows(static_cast<Eigen::Index>(c) * spatial, spatial);
    const T m = block.sum() / n;
    mean(c) = m;
    var(c) = (block.array() - m).square().sum() / n;
  }
}

template <typename T>
Mat<T> normalize(const Mat<T>& x, int channels, int spatial, const Vec<T>& mean,
                 const Vec<T>& inv_std) {
  if (spatial == 1) {
    return ((x.colwise() - mean).array().colwise() * inv_std.array()).matrix();
  }
  Mat<T> y(x.rows(), x.cols());
  for (int c = 0; c < channels; ++c) {
    const Eigen::Index r = static_cast<Eigen::Index>(c) * spatial;
    y.middleRows(r, spatial) = (x.middleRows(r, spatial).array() - mean(c)) * inv_std(c);
  }
  return y;
}

template <typename T>
Mat<T> batchnorm_backward(const BatchNormLayer<T>& L, const Mat<T>& xhat, const Vec<T>& inv_std,
                          const Mat<T>& dy) {
  const int C = L.channels, S = L.spatial;
  const T n = static_cast<T>(dy.cols()) * static_cast<T>(S);
  if (S == 1) {
    const Vec<T> sum_dy = dy.rowwise().sum();
    const Vec<T> sum_dy_xhat = dy.cwiseProduct(xhat).rowwise().sum();
    Mat<T> dx = (n * dy).colwise() - sum_dy;
    dx -= (xhat.array().colwise() * sum_dy_xhat.array()).matrix();
    return (dx.array().colwise() * (inv_std.array() / n)).matrix();
  }
  Mat<T> dx(dy.rows(), dy.cols());
  for (int c = 0; c < C; ++c) {
    const Eigen::Index r = static_cast<Eigen::Index>(c) * S;
    auto g = dy.middleRows(r, S);
    auto h = xhat.middleRows(r, S);
    const T sg = g.sum();
    const T sgh = g.cwiseProduct(h).sum();
    dx.middleRows(r, S) = ((n * g.array() - sg) - h.array() * sgh) * (inv_std(c) / n);
  }
  return dx;
}

template <typename T>
Mat<T> activation_forward(const ActivationLayer& a, const Mat<T>& x) {
  const T slope = static_cast<T>(a.slope);
  switch (a.kind) {
    case Activation::Identity: return x;
    case Activation::Relu: return x.cwiseMax(T(0));
    case Activation::LeakyRelu:
      return (x.array() > T(0)).select(x.array(), slope * x.array()).matrix();
    case Activation::Sigmoid:
      return ((-x.array()).exp() + T(1)).inverse().matrix();
    case Activation::Tanh: return x.array().tanh().matrix();
  }
  return x;
}

template <typename T>
Mat<T> activation_backward(const ActivationLayer& a, const Mat<T>& x, const Mat<T>& y,
                           const Mat<T>& dy) {
  const T slope = static_cast<T>(a.slope);
  switch (a.kind) {
    case Activation::Identity: return dy;
    case Activation::Relu: return (x.array() > T(0)).select(dy.array(), T(0)).matrix();
    case Activation::LeakyRelu:
      return (x.array() > T(0)).select(dy.array(), slope * dy.array()).matrix();
    case Activation::Sigmoid: return (dy.array() * y.array() * (T(1) - y.array())).matrix();
    case Activation::Tanh: return (dy.array() * (T(1) - y.array().square())).matrix();
  }
  return dy;
}

}  // namespace

template <typename T>
std::string Stack<T>::layer_name(std::size_t index) const {
  return name_ + "." + std::to_string(index);
}

template <typename T>
Stack<T>& Stack<T>::dense(int in, int out) {
  if (in <= 0 || out <= 0) {
    throw Error(ErrorKind::InvalidConfig, name_ + ": dense layer needs positive sizes");
  }
  DenseLayer<T> d;
  const auto base = layer_name(layers_.size());
  d.weight = {base + ".weight", Mat<T>::Zero(out, in), Mat<T>::Zero(out, in)};
  d.bias = {base + ".bias", Mat<T>::Zero(out, 1), Mat<T>::Zero(out, 1)};
  layers_.emplace_back(std::move(d));
  return *this;
}

template <typename T>
Stack<T>& Stack<T>::conv(const ConvShape& shape) {
  if (shape.in_channels <= 0 || shape.out_channels <= 0 || shape.kernel <= 0 ||
      shape.stride <= 0 || shape.in_size <= 0 || shape.out_size() <= 0) {
    throw Error(ErrorKind::InvalidConfig, name_ + ": invalid convolution geometry");
  }
  ConvLayer<T> c;
  c.shape = shape;
  const Eigen::Index kk = static_cast<Eigen::Index>(shape.kernel) * shape.kernel;
  const auto base = layer_name(layers_.size());
  const Eigen::Index rows = shape.transposed ? shape.in_channels : shape.out_channels;
  const Eigen::Index cols = (shape.transposed ? shape.out_channels : shape.in_channels) * kk;
  c.weight = {base + ".weight", Mat<T>::Zero(rows, cols), Mat<T>::Zero(rows, cols)};
  c.bias = {base + ".bias", Mat<T>::Zero(shape.out_channels, 1),
            Mat<T>::Zero(shape.out_channels, 1)};
  layers_.emplace_back(std::move(c));
  return *this;
}

template <typename T>
Stack<T>& Stack<T>::batchnorm(int channels, int spatial) {
  if (channels <= 0 || spatial <= 0) {
    throw Error(ErrorKind::InvalidConfig, name_ + ": batchnorm needs positive sizes");
  }
  BatchNormLayer<T> bn;
  bn.channels = channels;
  bn.spatial = spatial;
  const auto base = layer_name(layers_.size());
  bn.running_mean = {base + ".running_mean", Vec<T>::Zero(channels)};
  bn.running_var = {base + ".running_var", Vec<T>::Ones(channels)};
  layers_.emplace_back(std::move(bn));
  return *this;
}

template <typename T>
Stack<T>& Stack<T>::act(Activation kind, double slope) {
  layers_.emplace_back(ActivationLayer{kind, slope});
  return *this;
}

template <typename T>
int Stack<T>::input_size() const {
  for (const auto& layer : layers_) {
    if (auto* d = std::get_if<DenseLayer<T>>(&layer)) return static_cast<int>(d->weight.value.cols());
    if (auto* c = std::get_if<ConvLayer<T>>(&layer)) return c->shape.in_features();
    if (auto* bn = std::get_if<BatchNormLayer<T>>(&layer)) return bn->channels * bn->spatial;
  }
  return 0;
}

template <typename T>
int Stack<T>::output_size() const {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (auto* d = std::get_if<DenseLayer<T>>(&*it)) return static_cast<int>(d->weight.value.rows());
    if (auto* c = std::get_if<ConvLayer<T>>(&*it)) return c->shape.out_features();
    if (auto* bn = std::get_if<BatchNormLayer<T>>(&*it)) return bn->channels * bn->spatial;
  }
  return 0;
}

template <typename T>
Mat<T> Stack<T>::forward(const Mat<T>& x, Mode mode, StackTape<T>* tape) const {
  if (tape) tape->layers.assign(layers_.size(), {});
  Mat<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    LayerTape<T>* lt = tape ? &tape->layers[i] : nullptr;
    if (auto* d = std::get_if<DenseLayer<T>>(&layer)) {
      if (h.rows() != d->weight.value.cols()) {
        throw Error(ErrorKind::ShapeMismatch, layer_name(i) + ": input has " +
                                                  std::to_string(h.rows()) + " rows, expected " +
                                                  std::to_string(d->weight.value.cols()));
      }
      Mat<T> y = d->weight.value * h;
      y.colwise() += d->bias.value.col(0);
      if (lt) lt->input = std::move(h);
      h = std::move(y);
    } else if (auto* c = std::get_if<ConvLayer<T>>(&layer)) {
      if (h.rows() != c->shape.in_features()) {
        throw Error(ErrorKind::ShapeMismatch, layer_name(i) + ": feature map size mismatch");
      }
      Mat<T> y = conv_forward(*c, h);
      if (lt) lt->input = std::move(h);
      h = std::move(y);
    } else if (auto* bn = std::get_if<BatchNormLayer<T>>(&layer)) {
      if (h.rows() != static_cast<Eigen::Index>(bn->channels) * bn->spatial) {
        throw Error(ErrorKind::ShapeMismatch, layer_name(i) + ": batchnorm width mismatch");
      }
      Vec<T> mean, var;
      if (mode == Mode::Train) {
        channel_moments<T>(h, bn->channels, bn->spatial, mean, var);
      } else {
        mean = bn->running_mean.value;
        var = bn->running_var.value;
      }
      Vec<T> inv_std = (var.array() + static_cast<T>(kBatchNormEps)).rsqrt();
      Mat<T> y = normalize<T>(h, bn->channels, bn->spatial, mean, inv_std);
      if (lt) {
        lt->output = y;
        lt->mean = std::move(mean);
        lt->var = std::move(var);
        lt->inv_std = std::move(inv_std);
      }
      h = std::move(y);
    } else {
      const auto& a = std::get<ActivationLayer>(layer);
      Mat<T> y = activation_forward<T>(a, h);
      if (lt) {
        if (a.kind == Activation::Sigmoid || a.kind == Activation::Tanh) {
          lt->output = y;
        } else {
          lt->input = std::move(h);
        }
      }
      h = std::move(y);
    }
  }
  return h;
}

template <typename T>
Mat<T> Stack<T>::backward(const Mat<T>& dy, const StackTape<T>& tape, BackwardOptions opts) {
  if (tape.layers.size() != layers_.size()) {
    throw Error(ErrorKind::ShapeMismatch, name_ + ": tape does not belong to this stack");
  }
  Mat<T> g = dy;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    auto& layer = layers_[idx];
    const auto& lt = tape.layers[idx];
    const bool need_dx = opts.input_grad || idx > 0;
    if (auto* d = std::get_if<DenseLayer<T>>(&layer)) {
      if (opts.param_grads) {
        d->weight.grad.noalias() += g * lt.input.transpose();
        d->bias.grad.col(0) += g.rowwise().sum();
      }
      g = need_dx ? Mat<T>(d->weight.value.transpose() * g) : Mat<T>();
    } else if (auto* c = std::get_if<ConvLayer<T>>(&layer)) {
      g = conv_backward(*c, lt.input, g, {need_dx, opts.param_grads});
    } else if (auto* bn = std::get_if<BatchNormLayer<T>>(&layer)) {
      g = batchnorm_backward<T>(*bn, lt.output, lt.inv_std, g);
    } else {
      const auto& a = std::get<ActivationLayer>(layer);
      g = activation_backward<T>(a, lt.input, lt.output, g);
    }
    if (!need_dx) break;
  }
  return opts.input_grad ? g : Mat<T>();
}

template <typename T>
void Stack<T>::update_running_stats(const StackTape<T>& tape, double momentum) {
  if (tape.layers.size() != layers_.size()) return;
  const T m = static_cast<T>(momentum);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto* bn = std::get_if<BatchNormLayer<T>>(&layers_[i]);
    if (!bn) continue;
    const auto& lt = tape.layers[i];
    if (lt.mean.size() != bn->channels) continue;
    const double n = static_cast<double>(lt.output.cols()) * bn->spatial;
    const T unbias = n > 1 ? static_cast<T>(n / (n - 1)) : T(1);
    bn->running_mean.value = m * bn->running_mean.value + (T(1) - m) * lt.mean;
    bn->running_var.value = m * bn->running_var.value + (T(1) - m) * unbias * lt.var;
  }
}

template <typename T>
void Stack<T>::initialize(std::mt19937_64& rng) {
  for (auto& layer : layers_) {
    Param<T>* w = nullptr;
    Param<T>* b = nullptr;
    double fan_in = 0;
    if (auto* d = std::get_if<DenseLayer<T>>(&layer)) {
      w = &d->weight;
      b = &d->bias;
      fan_in = static_cast<double>(d->weight.value.cols());
    } else if (auto* c = std::get_if<ConvLayer<T>>(&layer)) {
      w = &c->weight;
      b = &c->bias;
      const double kk = static_cast<double>(c->shape.kernel) * c->shape.kernel;
      // each output of a transposed convolution sees ~in*k*k/stride^2 inputs
      fan_in = c->shape.transposed
                   ? c->shape.in_channels * kk / (c->shape.stride * c->shape.stride)
                   : c->shape.in_channels * kk;
    } else if (auto* bn = std::get_if<BatchNormLayer<T>>(&layer)) {
      bn->running_mean.value.setZero();
      bn->running_var.value.setOnes();
      continue;
    } else {
      continue;
    }
    const double limit = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index j = 0; j < w->value.cols(); ++j) {
      for (Eigen::Index i = 0; i < w->value.rows(); ++i) w->value(i, j) = static_cast<T>(dist(rng));
    }
    b->value.setZero();
    w->zero_grad();
    b->zero_grad();
  }
}

template class Stack<float>;
template class Stack<double>;

}  // namespace mvbigan
