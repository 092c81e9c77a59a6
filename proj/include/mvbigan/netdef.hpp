#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mvbigan/core.hpp"
#include "mvbigan/layers.hpp"

namespace mvbigan {

enum class ViewKind { Vector, Image };

// Network shapes. Dense mode follows the MNIST architecture (linear view
// embeddings, fully connected stacks); conv mode follows the 64x64x3
// convolution / fractionally-strided convolution table.
struct ArchConfig {
  int latent_dim = 128;
  int output_size = 784;
  std::vector<int> view_sizes;
  std::vector<ViewKind> view_kinds;  // empty = all Vector
  int aggregation_dim = 1500;

  std::vector<int> encoder_hidden{1500, 1500};
  std::vector<int> generator_hidden{1500, 1500, 1500};
  std::vector<int> d1_hidden{1500, 1500, 1500};
  std::vector<int> d2_hidden{1500, 1500};
  Activation generator_output = Activation::Sigmoid;
  double leaky_slope = 0.2;

  bool conv_mode = false;
  int image_size = 64;
  int image_channels = 3;
  std::vector<int> conv_channels{64, 128, 256, 512};

  std::size_t num_views() const { return view_sizes.size(); }
  ViewKind view_kind(std::size_t k) const {
    return view_kinds.empty() ? ViewKind::Vector : view_kinds.at(k);
  }
  // Throws InvalidConfig.
  void validate() const;

  static ArchConfig mnist(std::vector<int> view_sizes);
  // Image views of 64x64x3 plus optional attribute vectors.
  static ArchConfig celeba(std::vector<ViewKind> kinds, std::vector<int> view_sizes);
};

using MaskBatch = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;  // V x B

template <typename T>
struct ViewBatch {
  std::vector<Mat<T>> views;  // views[k] is n_k x B
  MaskBatch mask;

  Eigen::Index batch() const { return mask.cols(); }
};

template <typename T>
ViewBatch<T> to_batch(const std::vector<ViewSet>& sets);
template <typename T>
Mat<T> to_matrix(const std::vector<std::vector<float>>& columns);
template <typename T>
std::vector<std::vector<float>> to_columns(const Mat<T>& m);

template <typename T>
struct LatentBatch {
  Mat<T> mu;       // Z x B
  Mat<T> log_var;  // Z x B

  Eigen::Index batch() const { return mu.cols(); }
  LatentGaussian<T> at(Eigen::Index b) const { return {mu.col(b), log_var.col(b)}; }
};

// nELU(x) = -ELU(-x): x below zero, 1 - exp(-x) above.
template <typename T>
T nelu(T x) {
  return x < T(0) ? x : T(1) - std::exp(-x);
}

// Psi(v(s,x)) = sum_k s_k phi_k(x_k), one embedding stack per view.
template <typename T>
class ViewEmbedding {
 public:
  struct Tape {
    std::vector<StackTape<T>> phi;
    std::vector<std::vector<Eigen::Index>> columns;  // active items per view
  };

  ViewEmbedding() = default;
  ViewEmbedding(std::vector<Stack<T>> phi, int dim) : phi_(std::move(phi)), dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t num_views() const { return phi_.size(); }
  std::vector<Stack<T>>& phi() { return phi_; }
  const std::vector<Stack<T>>& phi() const { return phi_; }

  Mat<T> forward(const ViewBatch<T>& in, Mode mode, Tape* tape = nullptr) const;
  // Returns per-view input gradients (empty matrices unless requested).
  std::vector<Mat<T>> backward(const Mat<T>& dagg, const Tape& tape, BackwardOptions opts);
  void update_running_stats(const Tape& tape);

 private:
  std::vector<Stack<T>> phi_;
  int dim_ = 0;
};

// E and H: aggregation, hidden trunk, (tanh mu, nELU log sigma^2) head.
template <typename T>
class Encoder {
 public:
  struct Tape {
    typename ViewEmbedding<T>::Tape embed;
    StackTape<T> trunk;
    StackTape<T> head;
    Mat<T> raw;  // pre-activation head output (2Z x B)
    LatentBatch<T> out;
  };

  Encoder() = default;
  Encoder(ViewEmbedding<T> embed, Stack<T> trunk, Stack<T> head, int latent_dim);

  LatentBatch<T> forward(const ViewBatch<T>& in, Mode mode, Tape* tape = nullptr) const;
  void backward(const Mat<T>& dmu, const Mat<T>& dlog_var, const Tape& tape);
  void update_running_stats(const Tape& tape);

  ViewEmbedding<T>& embed() { return embed_; }
  const ViewEmbedding<T>& embed() const { return embed_; }
  Stack<T>& trunk() { return trunk_; }
  Stack<T>& head() { return head_; }

  template <typename F>
  void for_each_stack(F&& f) {
    for (auto& s : embed_.phi()) f(s);
    f(trunk_);
    f(head_);
  }

 private:
  ViewEmbedding<T> embed_;
  Stack<T> trunk_;
  Stack<T> head_;
  int latent_dim_ = 0;
};

// D1 and D2: view embedding, optional bridge nonlinearity, z concatenated,
// then a stack producing one logit per item.
template <typename T>
class Critic {
 public:
  struct Tape {
    typename ViewEmbedding<T>::Tape embed;
    StackTape<T> bridge;
    StackTape<T> post;
    Eigen::Index feature_rows = 0;
  };
  struct InputGrads {
    std::vector<Mat<T>> views;
    Mat<T> z;
  };

  Critic() = default;
  Critic(ViewEmbedding<T> embed, Stack<T> bridge, Stack<T> post);

  // Logits (1 x B); probabilities are sigmoid(logits).
  Mat<T> forward(const ViewBatch<T>& in, const Mat<T>& z, Mode mode, Tape* tape = nullptr) const;
  InputGrads backward(const Mat<T>& dlogit, const Tape& tape, bool view_grads, bool z_grads,
                      bool param_grads = true);
  void update_running_stats(const Tape& tape);

  ViewEmbedding<T>& embed() { return embed_; }
  const ViewEmbedding<T>& embed() const { return embed_; }

  template <typename F>
  void for_each_stack(F&& f) {
    for (auto& s : embed_.phi()) f(s);
    f(bridge_);
    f(post_);
  }

 private:
  ViewEmbedding<T> embed_;
  Stack<T> bridge_;
  Stack<T> post_;
};

template <typename T>
struct ModelBundle {
  ArchConfig arch;
  Encoder<T> E;
  Encoder<T> H;
  Stack<T> G;
  Critic<T> D1;
  Critic<T> D2;

  template <typename F>
  void for_each_stack(F&& f) {
    E.for_each_stack(f);
    H.for_each_stack(f);
    f(G);
    D1.for_each_stack(f);
    D2.for_each_stack(f);
  }
  template <typename F>
  void for_each_param(F&& f) {
    for_each_stack([&](Stack<T>& s) { s.for_each_param(f); });
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    for_each_stack([&](Stack<T>& s) { s.for_each_buffer(f); });
  }
  void zero_grad() {
    for_each_param([](Param<T>& p) { p.zero_grad(); });
  }
};

// Builds the networks for `arch` without initializing weights.
template <typename T>
ModelBundle<T> build_model(const ArchConfig& arch);

// Deterministic in (arch, seed); throws InvalidConfig.
template <typename T>
ModelBundle<T> init_model(const ArchConfig& arch, std::uint64_t seed);

// Copies every parameter and buffer into a bundle of another scalar type.
template <typename To, typename From>
ModelBundle<To> cast_model(ModelBundle<From>& m) {
  ModelBundle<To> out = build_model<To>(m.arch);
  std::vector<Mat<From>*> src;
  std::vector<Vec<From>*> src_buf;
  m.for_each_param([&](Param<From>& p) { src.push_back(&p.value); });
  m.for_each_buffer([&](Buffer<From>& b) { src_buf.push_back(&b.value); });
  std::size_t i = 0, j = 0;
  out.for_each_param([&](Param<To>& p) {
    p.value = src[i++]->template cast<To>();
    p.zero_grad();
  });
  out.for_each_buffer([&](Buffer<To>& b) { b.value = src_buf[j++]->template cast<To>(); });
  return out;
}

// Views of the target y, seen by E and D1 as a single always-present view.
template <typename T>
ViewBatch<T> target_batch(const Mat<T>& y);

// --- forward evaluations -------------------------------------------------

template <typename T>
LatentBatch<T> encode_target(const ModelBundle<T>& m, const Mat<T>& y, Mode mode);
template <typename T>
Mat<T> generate(const ModelBundle<T>& m, const Mat<T>& z, Mode mode);
// Aggregate with H's embeddings (use `Critic::embed()` for D2's).
template <typename T>
Mat<T> aggregate(const ViewEmbedding<T>& phi, const ViewBatch<T>& in);
template <typename T>
LatentBatch<T> encode_views(const ModelBundle<T>& m, const ViewBatch<T>& in, Mode mode);
template <typename T>
Mat<T> discriminate_pair(const ModelBundle<T>& m, const Mat<T>& y, const Mat<T>& z, Mode mode);
template <typename T>
Mat<T> discriminate_view_pair(const ModelBundle<T>& m, const ViewBatch<T>& in, const Mat<T>& z,
                              Mode mode);
// mu + exp(log_var / 2) * noise.
template <typename T>
Mat<T> sample_latent(const LatentBatch<T>& g, const Mat<T>& noise);
template <typename T>
Vec<T> sample_latent(const LatentGaussian<T>& g, const Vec<T>& noise);

}  // namespace mvbigan
