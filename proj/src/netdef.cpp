#include "mvbigan/netdef.hpp"

#include <random>

namespace mvbigan {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, what);
}

int conv_final_size(const ArchConfig& a) {
  return a.image_size >> static_cast<int>(a.conv_channels.size());
}

// Convolution stack: image -> aggregation vector (A x 1 x 1).
template <typename T>
Stack<T> image_embedding(const ArchConfig& a, const std::string& name) {
  Stack<T> s(name);
  int size = a.image_size;
  int channels = a.image_channels;
  for (std::size_t j = 0; j < a.conv_channels.size(); ++j) {
    ConvShape cs{channels, a.conv_channels[j], 4, 2, 1, size, false};
    s.conv(cs);
    size = cs.out_size();
    channels = cs.out_channels;
    if (j > 0) s.batchnorm(channels, size * size);
    s.act(Activation::LeakyRelu, a.leaky_slope);
  }
  s.conv(ConvShape{channels, a.aggregation_dim, size, 1, 0, size, false});
  return s;
}

template <typename T>
Stack<T> view_embedding(const ArchConfig& a, int size, ViewKind kind,
                        const std::string& name) {
  if (a.conv_mode && kind == ViewKind::Image) return image_embedding<T>(a, name);
  Stack<T> s(name);
  s.dense(size, a.aggregation_dim);
  return s;
}

template <typename T>
Encoder<T> make_encoder(const ArchConfig& a, const std::string& name, bool on_target) {
  std::vector<Stack<T>> phi;
  if (on_target) {
    phi.push_back(view_embedding<T>(a, a.output_size,
                                    a.conv_mode ? ViewKind::Image : ViewKind::Vector,
                                    name + ".phi0"));
  } else {
    for (std::size_t k = 0; k < a.num_views(); ++k) {
      phi.push_back(view_embedding<T>(a, a.view_sizes[k], a.view_kind(k),
                                      name + ".phi" + std::to_string(k)));
    }
  }
  Stack<T> trunk(name + ".trunk");
  int prev = a.aggregation_dim;
  for (std::size_t i = 0; i < a.encoder_hidden.size(); ++i) {
    trunk.dense(prev, a.encoder_hidden[i]);
    if (a.conv_mode || i > 0) trunk.batchnorm(a.encoder_hidden[i]);
    trunk.act(Activation::Relu);
    prev = a.encoder_hidden[i];
  }
  Stack<T> head(name + ".head");
  head.dense(prev, 2 * a.latent_dim);
  return Encoder<T>(ViewEmbedding<T>(std::move(phi), a.aggregation_dim), std::move(trunk),
                    std::move(head), a.latent_dim);
}

template <typename T>
Stack<T> make_generator(const ArchConfig& a) {
  Stack<T> g("G");
  if (a.conv_mode) {
    const int depth = static_cast<int>(a.conv_channels.size());
    int size = 1;
    int channels = a.latent_dim;
    const int first = conv_final_size(a);
    for (int j = depth - 1; j >= 0; --j) {
      ConvShape cs = (j == depth - 1)
                         ? ConvShape{channels, a.conv_channels[j], first, 1, 0, size, true}
                         : ConvShape{channels, a.conv_channels[j], 4, 2, 1, size, true};
      g.conv(cs);
      size = cs.out_size();
      channels = cs.out_channels;
      g.batchnorm(channels, size * size);
      g.act(Activation::Relu);
    }
    g.conv(ConvShape{channels, a.image_channels, 4, 2, 1, size, true});
    g.act(a.generator_output);
    return g;
  }
  int prev = a.latent_dim;
  for (std::size_t i = 0; i < a.generator_hidden.size(); ++i) {
    g.dense(prev, a.generator_hidden[i]);
    if (i > 0) g.batchnorm(a.generator_hidden[i]);
    g.act(Activation::Relu);
    prev = a.generator_hidden[i];
  }
  g.dense(prev, a.output_size);
  g.act(a.generator_output);
  return g;
}

template <typename T>
Critic<T> make_d1(const ArchConfig& a) {
  std::vector<Stack<T>> phi;
  Stack<T> bridge("D1.bridge");
  Stack<T> post("D1.post");
  int prev = 0;
  std::size_t first_post = 0;
  if (a.conv_mode) {
    phi.push_back(image_embedding<T>(a, "D1.phi0"));
    prev = a.aggregation_dim;
  } else {
    Stack<T> s("D1.phi0");
    s.dense(a.output_size, a.d1_hidden.at(0));
    phi.push_back(std::move(s));
    bridge.act(Activation::LeakyRelu, a.leaky_slope);
    prev = a.d1_hidden[0];
    first_post = 1;
  }
  const int embed_dim = prev;
  prev += a.latent_dim;
  for (std::size_t i = first_post; i < a.d1_hidden.size(); ++i) {
    post.dense(prev, a.d1_hidden[i]);
    // dense mode: batch norm from the third layer on
    if (!a.conv_mode && i >= 2) post.batchnorm(a.d1_hidden[i]);
    post.act(Activation::LeakyRelu, a.leaky_slope);
    prev = a.d1_hidden[i];
  }
  post.dense(prev, 1);
  return Critic<T>(ViewEmbedding<T>(std::move(phi), embed_dim), std::move(bridge),
                   std::move(post));
}

template <typename T>
Critic<T> make_d2(const ArchConfig& a) {
  std::vector<Stack<T>> phi;
  for (std::size_t k = 0; k < a.num_views(); ++k) {
    phi.push_back(view_embedding<T>(a, a.view_sizes[k], a.view_kind(k),
                                    "D2.phi" + std::to_string(k)));
  }
  Stack<T> post("D2.post");
  int prev = a.aggregation_dim + a.latent_dim;
  for (std::size_t i = 0; i < a.d2_hidden.size(); ++i) {
    post.dense(prev, a.d2_hidden[i]);
    if (a.conv_mode || i > 0) post.batchnorm(a.d2_hidden[i]);
    post.act(Activation::LeakyRelu, a.leaky_slope);
    prev = a.d2_hidden[i];
  }
  post.dense(prev, 1);
  return Critic<T>(ViewEmbedding<T>(std::move(phi), a.aggregation_dim), Stack<T>("D2.bridge"),
                   std::move(post));
}

template <typename T>
void check_finite(const Mat<T>& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::NonFiniteActivation, std::string(what) + " produced non-finite values");
  }
}

template <typename T>
void check_views(const ViewEmbedding<T>& e, const ViewBatch<T>& in) {
  if (in.views.size() != e.num_views() || static_cast<std::size_t>(in.mask.rows()) != e.num_views()) {
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(e.num_views()) +
                                              " views, got " + std::to_string(in.views.size()));
  }
  for (std::size_t k = 0; k < in.views.size(); ++k) {
    if (in.views[k].cols() != in.batch() ||
        in.views[k].rows() != e.phi()[k].input_size()) {
      throw Error(ErrorKind::ShapeMismatch,
                  "view " + std::to_string(k) + " is " + std::to_string(in.views[k].rows()) + "x" +
                      std::to_string(in.views[k].cols()) + ", expected " +
                      std::to_string(e.phi()[k].input_size()) + " rows");
    }
  }
}

}  // namespace

void ArchConfig::validate() const {
  require(latent_dim > 0, "latent_dim must be positive");
  require(aggregation_dim > 0, "aggregation_dim must be positive");
  require(output_size > 0, "output_size must be positive");
  require(!view_sizes.empty(), "at least one view is required");
  for (int n : view_sizes) require(n > 0, "view sizes must be positive");
  require(view_kinds.empty() || view_kinds.size() == view_sizes.size(),
          "view_kinds must match view_sizes");
  for (const auto* hs : {&encoder_hidden, &generator_hidden, &d1_hidden, &d2_hidden}) {
    for (int h : *hs) require(h > 0, "hidden sizes must be positive");
  }
  require(!d1_hidden.empty(), "D1 needs at least one hidden layer");
  require(leaky_slope >= 0.0, "leaky_slope must be non-negative");
  if (conv_mode) {
    require(!conv_channels.empty(), "conv_channels must not be empty");
    for (int c : conv_channels) require(c > 0, "conv channels must be positive");
    require(image_size > 0 && conv_final_size(*this) >= 1 &&
                (conv_final_size(*this) << conv_channels.size()) == image_size,
            "image_size must be divisible by 2^depth");
    const int pixels = image_channels * image_size * image_size;
    require(output_size == pixels, "conv mode output must be an image");
    for (std::size_t k = 0; k < view_sizes.size(); ++k) {
      if (view_kind(k) == ViewKind::Image) require(view_sizes[k] == pixels, "image view size");
    }
  }
}

ArchConfig ArchConfig::mnist(std::vector<int> view_sizes) {
  ArchConfig a;
  a.view_sizes = std::move(view_sizes);
  return a;
}

ArchConfig ArchConfig::celeba(std::vector<ViewKind> kinds, std::vector<int> view_sizes) {
  ArchConfig a;
  a.conv_mode = true;
  a.view_kinds = std::move(kinds);
  a.view_sizes = std::move(view_sizes);
  a.output_size = 64 * 64 * 3;
  a.aggregation_dim = 1000;
  a.encoder_hidden = {1000};
  a.generator_hidden = {};
  a.d1_hidden = {1000};
  a.d2_hidden = {1000};
  a.generator_output = Activation::Tanh;
  return a;
}

template <typename T>
ViewBatch<T> to_batch(const std::vector<ViewSet>& sets) {
  ViewBatch<T> out;
  if (sets.empty()) return out;
  const std::size_t V = sets[0].views.size();
  const auto B = static_cast<Eigen::Index>(sets.size());
  out.mask.setZero(static_cast<Eigen::Index>(V), B);
  out.views.resize(V);
  for (std::size_t k = 0; k < V; ++k) {
    out.views[k].resize(static_cast<Eigen::Index>(sets[0].views[k].size()), B);
  }
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& s = sets[static_cast<std::size_t>(b)];
    if (s.views.size() != V || s.mask.size() != V) {
      throw Error(ErrorKind::ShapeMismatch, "viewsets in a batch must share the view count");
    }
    for (std::size_t k = 0; k < V; ++k) {
      if (static_cast<Eigen::Index>(s.views[k].size()) != out.views[k].rows()) {
        throw Error(ErrorKind::ShapeMismatch, "view " + std::to_string(k) + " size differs in batch");
      }
      out.mask(static_cast<Eigen::Index>(k), b) = s.mask[k] ? 1 : 0;
      for (Eigen::Index i = 0; i < out.views[k].rows(); ++i) {
        out.views[k](i, b) = static_cast<T>(s.views[k][static_cast<std::size_t>(i)]);
      }
    }
  }
  return out;
}

template <typename T>
Mat<T> to_matrix(const std::vector<std::vector<float>>& columns) {
  if (columns.empty()) return {};
  Mat<T> m(static_cast<Eigen::Index>(columns[0].size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t b = 0; b < columns.size(); ++b) {
    if (columns[b].size() != columns[0].size()) {
      throw Error(ErrorKind::ShapeMismatch, "ragged batch");
    }
    for (std::size_t i = 0; i < columns[b].size(); ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = static_cast<T>(columns[b][i]);
    }
  }
  return m;
}

template <typename T>
std::vector<std::vector<float>> to_columns(const Mat<T>& m) {
  std::vector<std::vector<float>> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index b = 0; b < m.cols(); ++b) {
    out[static_cast<std::size_t>(b)].resize(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)] = static_cast<float>(m(i, b));
    }
  }
  return out;
}

// --- ViewEmbedding -----------------------------------------------------------

template <typename T>
Mat<T> ViewEmbedding<T>::forward(const ViewBatch<T>& in, Mode mode, Tape* tape) const {
  check_views(*this, in);
  const Eigen::Index B = in.batch();
  Mat<T> agg = Mat<T>::Zero(dim_, B);
  if (tape) {
    tape->phi.assign(phi_.size(), {});
    tape->columns.assign(phi_.size(), {});
  }
  for (std::size_t k = 0; k < phi_.size(); ++k) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (in.mask(static_cast<Eigen::Index>(k), b)) cols.push_back(b);
    }
    if (cols.empty()) continue;
    StackTape<T>* st = tape ? &tape->phi[k] : nullptr;
    if (static_cast<Eigen::Index>(cols.size()) == B) {
      agg += phi_[k].forward(in.views[k], mode, st);
    } else {
      Mat<T> sub = in.views[k](Eigen::all, cols);
      agg(Eigen::all, cols) += phi_[k].forward(sub, mode, st);
    }
    if (tape) tape->columns[k] = std::move(cols);
  }
  return agg;
}

template <typename T>
std::vector<Mat<T>> ViewEmbedding<T>::backward(const Mat<T>& dagg, const Tape& tape,
                                               BackwardOptions opts) {
  std::vector<Mat<T>> dviews(phi_.size());
  const Eigen::Index B = dagg.cols();
  for (std::size_t k = 0; k < phi_.size(); ++k) {
    const auto& cols = tape.columns[k];
    if (opts.input_grad) dviews[k] = Mat<T>::Zero(phi_[k].input_size(), B);
    if (cols.empty()) continue;
    if (static_cast<Eigen::Index>(cols.size()) == B) {
      Mat<T> dx = phi_[k].backward(dagg, tape.phi[k], opts);
      if (opts.input_grad) dviews[k] = std::move(dx);
    } else {
      Mat<T> sub = dagg(Eigen::all, cols);
      Mat<T> dx = phi_[k].backward(sub, tape.phi[k], opts);
      if (opts.input_grad) dviews[k](Eigen::all, cols) = dx;
    }
  }
  return dviews;
}

template <typename T>
void ViewEmbedding<T>::update_running_stats(const Tape& tape) {
  for (std::size_t k = 0; k < phi_.size(); ++k) {
    if (!tape.columns[k].empty()) phi_[k].update_running_stats(tape.phi[k]);
  }
}

// --- Encoder -----------------------------------------------------------------

template <typename T>
Encoder<T>::Encoder(ViewEmbedding<T> embed, Stack<T> trunk, Stack<T> head, int latent_dim)
    : embed_(std::move(embed)),
      trunk_(std::move(trunk)),
      head_(std::move(head)),
      latent_dim_(latent_dim) {}

template <typename T>
LatentBatch<T> Encoder<T>::forward(const ViewBatch<T>& in, Mode mode, Tape* tape) const {
  Mat<T> agg = embed_.forward(in, mode, tape ? &tape->embed : nullptr);
  Mat<T> h = trunk_.forward(agg, mode, tape ? &tape->trunk : nullptr);
  Mat<T> raw = head_.forward(h, mode, tape ? &tape->head : nullptr);
  LatentBatch<T> out;
  out.mu = raw.topRows(latent_dim_).array().tanh().matrix();
  out.log_var = raw.bottomRows(latent_dim_).unaryExpr([](T x) { return nelu(x); });
  if (tape) {
    tape->raw = std::move(raw);
    tape->out = out;
  }
  return out;
}

template <typename T>
void Encoder<T>::backward(const Mat<T>& dmu, const Mat<T>& dlog_var, const Tape& tape) {
  const Eigen::Index Z = latent_dim_;
  Mat<T> draw(2 * Z, dmu.cols());
  draw.topRows(Z) = (dmu.array() * (T(1) - tape.out.mu.array().square())).matrix();
  draw.bottomRows(Z) = dlog_var.binaryExpr(
      tape.raw.bottomRows(Z), [](T g, T x) { return x < T(0) ? g : g * std::exp(-x); });
  Mat<T> dh = head_.backward(draw, tape.head);
  Mat<T> dagg = trunk_.backward(dh, tape.trunk);
  embed_.backward(dagg, tape.embed, {false, true});
}

template <typename T>
void Encoder<T>::update_running_stats(const Tape& tape) {
  embed_.update_running_stats(tape.embed);
  trunk_.update_running_stats(tape.trunk);
  head_.update_running_stats(tape.head);
}

// --- Critic ------------------------------------------------------------------

template <typename T>
Critic<T>::Critic(ViewEmbedding<T> embed, Stack<T> bridge, Stack<T> post)
    : embed_(std::move(embed)), bridge_(std::move(bridge)), post_(std::move(post)) {}

template <typename T>
Mat<T> Critic<T>::forward(const ViewBatch<T>& in, const Mat<T>& z, Mode mode, Tape* tape) const {
  Mat<T> f = embed_.forward(in, mode, tape ? &tape->embed : nullptr);
  f = bridge_.forward(f, mode, tape ? &tape->bridge : nullptr);
  if (z.cols() != f.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "z batch does not match view batch");
  }
  Mat<T> cat(f.rows() + z.rows(), f.cols());
  cat.topRows(f.rows()) = f;
  cat.bottomRows(z.rows()) = z;
  if (tape) tape->feature_rows = f.rows();
  return post_.forward(cat, mode, tape ? &tape->post : nullptr);
}

template <typename T>
typename Critic<T>::InputGrads Critic<T>::backward(const Mat<T>& dlogit, const Tape& tape,
                                                   bool view_grads, bool z_grads,
                                                   bool param_grads) {
  InputGrads g;
  const bool need_features = view_grads || param_grads;
  Mat<T> dcat = post_.backward(dlogit, tape.post, {need_features || z_grads, param_grads});
  if (z_grads) g.z = dcat.bottomRows(dcat.rows() - tape.feature_rows);
  if (!need_features) return g;
  Mat<T> df = dcat.topRows(tape.feature_rows);
  df = bridge_.backward(df, tape.bridge, {true, param_grads});
  g.views = embed_.backward(df, tape.embed, {view_grads, param_grads});
  return g;
}

template <typename T>
void Critic<T>::update_running_stats(const Tape& tape) {
  embed_.update_running_stats(tape.embed);
  bridge_.update_running_stats(tape.bridge);
  post_.update_running_stats(tape.post);
}

// --- bundle ------------------------------------------------------------------

template <typename T>
ModelBundle<T> build_model(const ArchConfig& arch) {
  arch.validate();
  ModelBundle<T> m;
  m.arch = arch;
  m.E = make_encoder<T>(arch, "E", true);
  m.H = make_encoder<T>(arch, "H", false);
  m.G = make_generator<T>(arch);
  m.D1 = make_d1<T>(arch);
  m.D2 = make_d2<T>(arch);
  return m;
}

template <typename T>
ModelBundle<T> init_model(const ArchConfig& arch, std::uint64_t seed) {
  ModelBundle<T> m = build_model<T>(arch);
  std::mt19937_64 rng(seed);
  m.for_each_stack([&](Stack<T>& s) { s.initialize(rng); });
  return m;
}

template <typename T>
ViewBatch<T> target_batch(const Mat<T>& y) {
  ViewBatch<T> b;
  b.views.push_back(y);
  b.mask = MaskBatch::Ones(1, y.cols());
  return b;
}

template <typename T>
LatentBatch<T> encode_target(const ModelBundle<T>& m, const Mat<T>& y, Mode mode) {
  if (y.rows() != m.arch.output_size) {
    throw Error(ErrorKind::ShapeMismatch, "target has " + std::to_string(y.rows()) +
                                              " entries, expected " +
                                              std::to_string(m.arch.output_size));
  }
  auto out = m.E.forward(target_batch(y), mode);
  check_finite(out.mu, "E");
  check_finite(out.log_var, "E");
  return out;
}

template <typename T>
Mat<T> generate(const ModelBundle<T>& m, const Mat<T>& z, Mode mode) {
  if (z.rows() != m.arch.latent_dim) {
    throw Error(ErrorKind::ShapeMismatch, "latent has " + std::to_string(z.rows()) +
                                              " entries, expected " +
                                              std::to_string(m.arch.latent_dim));
  }
  if (!z.allFinite()) throw Error(ErrorKind::NonFinite, "latent input is not finite");
  Mat<T> y = m.G.forward(z, mode);
  check_finite(y, "G");
  return y;
}

template <typename T>
Mat<T> aggregate(const ViewEmbedding<T>& phi, const ViewBatch<T>& in) {
  return phi.forward(in, Mode::Eval);
}

template <typename T>
LatentBatch<T> encode_views(const ModelBundle<T>& m, const ViewBatch<T>& in, Mode mode) {
  auto out = m.H.forward(in, mode);
  check_finite(out.mu, "H");
  check_finite(out.log_var, "H");
  return out;
}

template <typename T>
Mat<T> discriminate_pair(const ModelBundle<T>& m, const Mat<T>& y, const Mat<T>& z, Mode mode) {
  if (y.rows() != m.arch.output_size || z.rows() != m.arch.latent_dim) {
    throw Error(ErrorKind::ShapeMismatch, "D1 input shapes do not match the architecture");
  }
  Mat<T> logits = m.D1.forward(target_batch(y), z, mode);
  check_finite(logits, "D1");
  return logits.unaryExpr([](T a) { return apply_activation(Activation::Sigmoid, a, T(0)); });
}

template <typename T>
Mat<T> discriminate_view_pair(const ModelBundle<T>& m, const ViewBatch<T>& in, const Mat<T>& z,
                              Mode mode) {
  if (z.rows() != m.arch.latent_dim) {
    throw Error(ErrorKind::ShapeMismatch, "D2 latent size does not match the architecture");
  }
  Mat<T> logits = m.D2.forward(in, z, mode);
  check_finite(logits, "D2");
  return logits.unaryExpr([](T a) { return apply_activation(Activation::Sigmoid, a, T(0)); });
}

template <typename T>
Mat<T> sample_latent(const LatentBatch<T>& g, const Mat<T>& noise) {
  if (noise.rows() != g.mu.rows() || noise.cols() != g.mu.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "noise shape does not match the latent batch");
  }
  return (g.mu.array() + (T(0.5) * g.log_var.array()).exp() * noise.array()).matrix();
}

template <typename T>
Vec<T> sample_latent(const LatentGaussian<T>& g, const Vec<T>& noise) {
  if (noise.size() != g.mu.size() || g.log_var.size() != g.mu.size()) {
    throw Error(ErrorKind::ShapeMismatch, "noise shape does not match the latent");
  }
  return (g.mu.array() + (T(0.5) * g.log_var.array()).exp() * noise.array()).matrix();
}

#define MVBIGAN_INSTANTIATE(T)                                                                 \
  template class ViewEmbedding<T>;                                                             \
  template class Encoder<T>;                                                                   \
  template class Critic<T>;                                                                    \
  template ViewBatch<T> to_batch<T>(const std::vector<ViewSet>&);                              \
  template Mat<T> to_matrix<T>(const std::vector<std::vector<float>>&);                        \
  template std::vector<std::vector<float>> to_columns<T>(const Mat<T>&);                       \
  template ModelBundle<T> build_model<T>(const ArchConfig&);                                   \
  template ModelBundle<T> init_model<T>(const ArchConfig&, std::uint64_t);                     \
  template ViewBatch<T> target_batch<T>(const Mat<T>&);                                        \
  template LatentBatch<T> encode_target<T>(const ModelBundle<T>&, const Mat<T>&, Mode);        \
  template Mat<T> generate<T>(const ModelBundle<T>&, const Mat<T>&, Mode);                     \
  template Mat<T> aggregate<T>(const ViewEmbedding<T>&, const ViewBatch<T>&);                  \
  template LatentBatch<T> encode_views<T>(const ModelBundle<T>&, const ViewBatch<T>&, Mode);   \
  template Mat<T> discriminate_pair<T>(const ModelBundle<T>&, const Mat<T>&, const Mat<T>&,    \
                                       Mode);                                                  \
  template Mat<T> discriminate_view_pair<T>(const ModelBundle<T>&, const ViewBatch<T>&,        \
                                            const Mat<T>&, Mode);                              \
  template Mat<T> sample_latent<T>(const LatentBatch<T>&, const Mat<T>&);                      \
  template Vec<T> sample_latent<T>(const LatentGaussian<T>&, const Vec<T>&);

MVBIGAN_INSTANTIATE(float)
MVBIGAN_INSTANTIATE(double)

}  // namespace mvbigan
