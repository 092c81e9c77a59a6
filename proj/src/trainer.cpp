#include "mvbigan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mvbigan {

namespace {

constexpr std::uint64_t kTrainStreamTag = 0x545241494eull;
constexpr std::uint64_t kDataStreamTag = 0x44415441ull;

template <typename T>
Mat<T> reparam(const LatentBatch<T>& g, const Mat<T>& eps) {
  return (g.mu.array() + (T(0.5) * g.log_var.array()).exp() * eps.array()).matrix();
}

// d z / d (mu, log_var) applied to dz.
template <typename T>
void reparam_backward(const LatentBatch<T>& g, const Mat<T>& eps, const Mat<T>& dz, Mat<T>& dmu,
                      Mat<T>& dlog_var) {
  dmu += dz;
  dlog_var += (dz.array() * eps.array() * (T(0.5) * g.log_var.array()).exp() * T(0.5)).matrix();
}

template <typename T>
Vec<T> row(const Mat<T>& logits) {
  return logits.row(0).transpose();
}

bool is_numeric_failure(ErrorKind k) {
  return k == ErrorKind::NonFinite || k == ErrorKind::NonFiniteActivation ||
         k == ErrorKind::NonFiniteLoss;
}

}  // namespace

template <typename T>
TrainBatch<T> make_train_batch(const Dataset& ds, std::span<const std::size_t> items,
                               int latent_dim, Rng& rng) {
  const TaskSpec& spec = ds.spec;
  const std::size_t V = spec.num_views();
  const auto B = static_cast<Eigen::Index>(items.size());
  const auto L = static_cast<Eigen::Index>(spec.sequence_length);
  if (B == 0) throw Error(ErrorKind::EmptyDataset, "empty batch");
  TrainBatch<T> out;
  out.batch = B;
  out.steps = L;
  out.y.resize(static_cast<Eigen::Index>(spec.output_size), B);
  out.views.views.resize(V);
  for (std::size_t k = 0; k < V; ++k) {
    out.views.views[k].resize(static_cast<Eigen::Index>(spec.views[k].size), B * L);
  }
  out.views.mask.setZero(static_cast<Eigen::Index>(V), B * L);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Example& ex = ds.examples.at(items[static_cast<std::size_t>(b)]);
    if (ex.target.size() != spec.output_size || ex.viewset.views.size() != V) {
      throw Error(ErrorKind::ShapeMismatch, "example does not match the task");
    }
    for (Eigen::Index i = 0; i < out.y.rows(); ++i) {
      out.y(i, b) = static_cast<T>(ex.target[static_cast<std::size_t>(i)]);
    }
    const ViewSequence seq = sample_task_sequence(spec, rng);
    for (Eigen::Index t = 0; t < L; ++t) {
      const Eigen::Index col = t * B + b;
      for (std::size_t k = 0; k < V; ++k) {
        const auto& v = ex.viewset.views[k];
        auto dst = out.views.views[k].col(col);
        for (Eigen::Index i = 0; i < dst.size(); ++i) dst(i) = static_cast<T>(v[static_cast<std::size_t>(i)]);
        out.views.mask(static_cast<Eigen::Index>(k), col) = seq[static_cast<std::size_t>(t)][k] ? 1 : 0;
      }
    }
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Mat<T>& m, Eigen::Index cols) {
    m.resize(latent_dim, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < latent_dim; ++i) m(i, j) = static_cast<T>(normal(rng));
    }
  };
  fill(out.eps_E, B);
  fill(out.z_G, B);
  fill(out.eps_H, B * L);
  return out;
}

template <typename T>
GeneratorPass<T> forward_generators(const ModelBundle<T>& m, const TrainBatch<T>& b) {
  GeneratorPass<T> g;
  const LatentBatch<T> e = m.E.forward(target_batch(b.y), Mode::Train, &g.e_tape);
  g.z_E = reparam(e, b.eps_E);
  g.z_E_rep = g.z_E.replicate(1, b.steps);
  g.y_G = m.G.forward(b.z_G, Mode::Train, &g.g_tape);
  const LatentBatch<T> h = m.H.forward(b.views, Mode::Train, &g.h_tape);
  g.z_H = reparam(h, b.eps_H);
  return g;
}

template <typename T>
Mat<T> hcat(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

template <typename T>
ViewBatch<T> doubled(const ViewBatch<T>& v) {
  ViewBatch<T> out;
  for (const auto& x : v.views) out.views.push_back(hcat(x, x));
  out.mask.resize(v.mask.rows(), 2 * v.mask.cols());
  out.mask << v.mask, v.mask;
  return out;
}

template <typename T>
Mat<T> joined(const Vec<T>& real, const Vec<T>& fake) {
  Mat<T> out(1, real.size() + fake.size());
  out << real.transpose(), fake.transpose();
  return out;
}

template <typename T>
CriticPass<T> forward_critics(const ModelBundle<T>& m, const TrainBatch<T>& b,
                              const GeneratorPass<T>& g) {
  CriticPass<T> c;
  const Eigen::Index B = b.batch, BL = b.batch * b.steps;
  const Mat<T> l1 =
      m.D1.forward(target_batch(hcat(b.y, g.y_G)), hcat(g.z_E, b.z_G), Mode::Train, &c.d1);
  const Mat<T> l2 = m.D2.forward(doubled(b.views), hcat(g.z_E_rep, g.z_H), Mode::Train, &c.d2);
  c.d1_real_logit = l1.leftCols(B);
  c.d1_fake_logit = l1.rightCols(B);
  c.d2_real_logit = l2.leftCols(BL);
  c.d2_fake_logit = l2.rightCols(BL);
  return c;
}

template <typename T>
std::pair<T, T> critic_backward(ModelBundle<T>& m, const CriticPass<T>& c) {
  const auto l1 = adversarial_loss_from_logits<T>(row(c.d1_real_logit), row(c.d1_fake_logit));
  const auto l2 = adversarial_loss_from_logits<T>(row(c.d2_real_logit), row(c.d2_fake_logit));
  m.D1.backward(joined(l1.d_first, l1.d_second), c.d1, false, false, true);
  m.D2.backward(joined(l2.d_first, l2.d_second), c.d2, false, false, true);
  return {l1.value, l2.value};
}

template <typename T>
GeneratorLosses generator_backward(ModelBundle<T>& m, const TrainBatch<T>& b,
                                   const GeneratorPass<T>& g, const CriticPass<T>& c,
                                   double lambda) {
  const Eigen::Index Z = b.eps_E.rows();
  const Eigen::Index B = b.batch;
  const Eigen::Index BL = B * b.steps;
  // labels swapped: fakes scored as real and vice versa
  const auto l1 = adversarial_loss_from_logits<T>(row(c.d1_fake_logit), row(c.d1_real_logit));
  const auto l2 = adversarial_loss_from_logits<T>(row(c.d2_fake_logit), row(c.d2_real_logit));

  const auto d1 = m.D1.backward(joined(l1.d_second, l1.d_first), c.d1, true, true, false);
  m.G.backward(d1.views.at(0).rightCols(B), g.g_tape, {false, true});
  Mat<T> dz_E = d1.z.leftCols(B);

  const auto d2 = m.D2.backward(joined(l2.d_second, l2.d_first), c.d2, false, true, false);
  const Mat<T> dz_H = d2.z.rightCols(BL);
  for (Eigen::Index t = 0; t < b.steps; ++t) dz_E += d2.z.middleCols(t * B, B);

  KlGrad<T> kg;
  const T kl = sequence_kl_batch<T>(g.h_tape.out, B, b.steps, &kg, static_cast<T>(lambda));

  Mat<T> dmu_H = kg.mu_p, dlv_H = kg.log_var_p;
  reparam_backward(g.h_tape.out, b.eps_H, dz_H, dmu_H, dlv_H);
  m.H.backward(dmu_H, dlv_H, g.h_tape);

  Mat<T> dmu_E = Mat<T>::Zero(Z, B), dlv_E = Mat<T>::Zero(Z, B);
  reparam_backward(g.e_tape.out, b.eps_E, dz_E, dmu_E, dlv_E);
  m.E.backward(dmu_E, dlv_E, g.e_tape);

  return {static_cast<double>(l1.value), static_cast<double>(l2.value), static_cast<double>(kl)};
}

template <typename T>
std::vector<Param<T>*> critic_params(ModelBundle<T>& m) {
  std::vector<Param<T>*> out;
  auto add = [&](Param<T>& p) { out.push_back(&p); };
  m.D1.for_each_stack([&](Stack<T>& s) { s.for_each_param(add); });
  m.D2.for_each_stack([&](Stack<T>& s) { s.for_each_param(add); });
  return out;
}

template <typename T>
std::vector<Param<T>*> generator_params(ModelBundle<T>& m) {
  std::vector<Param<T>*> out;
  auto add = [&](Param<T>& p) { out.push_back(&p); };
  m.E.for_each_stack([&](Stack<T>& s) { s.for_each_param(add); });
  m.H.for_each_stack([&](Stack<T>& s) { s.for_each_param(add); });
  m.G.for_each_param(add);
  return out;
}

#define MVBIGAN_INSTANTIATE(T)                                                                 \
  template TrainBatch<T> make_train_batch<T>(const Dataset&, std::span<const std::size_t>, int, \
                                             Rng&);                                            \
  template GeneratorPass<T> forward_generators<T>(const ModelBundle<T>&, const TrainBatch<T>&); \
  template CriticPass<T> forward_critics<T>(const ModelBundle<T>&, const TrainBatch<T>&,       \
                                            const GeneratorPass<T>&);                          \
  template std::pair<T, T> critic_backward<T>(ModelBundle<T>&, const CriticPass<T>&);          \
  template GeneratorLosses generator_backward<T>(ModelBundle<T>&, const TrainBatch<T>&,        \
                                                 const GeneratorPass<T>&,                      \
                                                 const CriticPass<T>&, double);                \
  template std::vector<Param<T>*> critic_params<T>(ModelBundle<T>&);                           \
  template std::vector<Param<T>*> generator_params<T>(ModelBundle<T>&);

MVBIGAN_INSTANTIATE(float)
MVBIGAN_INSTANTIATE(double)
#undef MVBIGAN_INSTANTIATE

// --- optimizer ---------------------------------------------------------------

void Adam::update(const std::vector<Param<float>*>& params, std::uint64_t t) {
  const float b1 = static_cast<float>(settings_.beta1);
  const float b2 = static_cast<float>(settings_.beta2);
  const float c1 = static_cast<float>(1.0 - std::pow(settings_.beta1, static_cast<double>(t)));
  const float c2 = static_cast<float>(1.0 - std::pow(settings_.beta2, static_cast<double>(t)));
  const float lr = static_cast<float>(settings_.lr);
  const float eps = static_cast<float>(settings_.eps);
  for (Param<float>* p : params) {
    Moments& mo = moments_[p->name];
    if (mo.m.size() == 0) {
      mo.m.setZero(p->value.rows(), p->value.cols());
      mo.v.setZero(p->value.rows(), p->value.cols());
    }
    mo.m.array() = b1 * mo.m.array() + (1.0f - b1) * p->grad.array();
    mo.v.array() = b2 * mo.v.array() + (1.0f - b2) * p->grad.array().square();
    p->value.array() -= lr * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + eps);
  }
}

// --- training ----------------------------------------------------------------

LossBreakdown train_step(TrainState& state, const TrainBatch<float>& batch,
                         const TrainConfig& config) {
  auto& m = state.model;
  state.adam.set_settings({config.lr, config.beta1, config.beta2, config.eps});
  LossParts parts;
  try {
    const GeneratorPass<float> g = forward_generators(m, batch);
    const CriticPass<float> c = forward_critics(m, batch, g);
    m.zero_grad();
    const auto [d1, d2] = critic_backward(m, c);
    parts.d1_loss = d1;
    parts.d2_loss = d2;
    ++state.step;
    GeneratorLosses gl;
    if (config.update_mode == UpdateMode::Alternating) {
      state.adam.update(critic_params(m), state.step);
      const CriticPass<float> c2 = forward_critics(m, batch, g);
      gl = generator_backward(m, batch, g, c2, config.lambda);
      state.adam.update(generator_params(m), state.step);
    } else {
      gl = generator_backward(m, batch, g, c, config.lambda);
      state.adam.update(critic_params(m), state.step);
      state.adam.update(generator_params(m), state.step);
    }
    parts.gen_adv_loss = gl.gen_adv;
    parts.enc_adv_loss = gl.enc_adv;
    parts.kl_penalty = gl.kl;
    m.D1.update_running_stats(c.d1);
    m.D2.update_running_stats(c.d2);
    m.E.update_running_stats(g.e_tape);
    m.G.update_running_stats(g.g_tape);
    m.H.update_running_stats(g.h_tape);
    return assemble_losses(parts, config.lambda);
  } catch (const Error& e) {
    if (is_numeric_failure(e.kind())) throw Error(ErrorKind::NonFiniteLoss, e.what());
    throw;
  }
}

std::string format_metrics_line(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.3f",
                static_cast<unsigned long long>(m.epoch), m.mean.d1_loss, m.mean.d2_loss,
                m.mean.gen_adv_loss, m.mean.enc_adv_loss, m.mean.kl_penalty, m.wall_seconds);
  return buf;
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint ck;
  ck.config = config;
  ck.state.model = init_model<float>(config.arch(), config.seed);
  ck.state.adam = Adam({config.lr, config.beta1, config.beta2, config.eps});
  return ck;
}

Dataset load_training_data(const TrainConfig& config) {
  const TaskSpec spec = config.task_spec();
  if (config.task == TaskKind::Synthetic) {
    Rng rng = derive_rng(config.seed, {kDataStreamTag});
    return sample_synthetic(config.synthetic_spec(), config.synthetic_count, rng);
  }
  if (config.data_dir.empty()) {
    throw Error(ErrorKind::IoError, "no data directory configured (data.dir or MVBIGAN_DATA_DIR)");
  }
  return load_mnist_task(spec, config.data_dir, Split::Train, config.seed, config.data_limit);
}

namespace {

std::string arch_signature(const TrainConfig& c) {
  std::string s;
  for (const auto& k : config_keys()) {
    if (k.key.rfind("arch.", 0) == 0 || k.key.rfind("task.", 0) == 0) {
      s += k.key + "=" + get_config_value(c, k.key) + ";";
    }
  }
  return s;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const Checkpoint* resume,
                  std::ostream* log) {
  config.validate();
  if (data.size() == 0) throw Error(ErrorKind::EmptyDataset, "no training examples");
  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  if (resume) {
    if (arch_signature(resume->config) != arch_signature(config)) {
      throw Error(ErrorKind::InvalidConfig, "checkpoint was trained with a different task or architecture");
    }
    ck = *resume;
    ck.config = config;
  } else {
    ck = initial_checkpoint(config);
  }

  std::ofstream metrics;
  const std::filesystem::path out_dir = config.out_dir;
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string());
    metrics.open(out_dir / "metrics.tsv", resume ? std::ios::app : std::ios::trunc);
    if (!metrics) throw Error(ErrorKind::IoError, "cannot write metrics log in " + out_dir.string());
  }

  const auto N = data.size();
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  for (std::uint64_t epoch = ck.state.epoch; epoch < static_cast<std::uint64_t>(config.epochs);
       ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = make_batches(N, batch_size, config.seed, epoch);
    LossBreakdown sum;
    for (std::size_t j = 0; j < batches.size(); ++j) {
      Rng rng = derive_rng(config.seed, {kTrainStreamTag, epoch, j});
      LossBreakdown lb;
      try {
        const auto batch = make_train_batch<float>(data, batches[j], config.latent_dim, rng);
        lb = train_step(ck.state, batch, config);
      } catch (const Error& e) {
        if (!is_numeric_failure(e.kind())) throw;
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch + 1) + ", batch " +
                                                  std::to_string(j) + ": " + e.what());
      }
      sum.d1_loss += lb.d1_loss;
      sum.d2_loss += lb.d2_loss;
      sum.gen_adv_loss += lb.gen_adv_loss;
      sum.enc_adv_loss += lb.enc_adv_loss;
      sum.kl_penalty += lb.kl_penalty;
      sum.total_gen_side += lb.total_gen_side;
    }
    const double n = static_cast<double>(batches.size());
    EpochMetrics em;
    em.epoch = epoch + 1;
    em.mean = {sum.d1_loss / n, sum.d2_loss / n, sum.gen_adv_loss / n,
               sum.enc_adv_loss / n, sum.kl_penalty / n, sum.total_gen_side / n};
    em.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ck.state.epoch = epoch + 1;
    const std::string line = format_metrics_line(em);
    if (metrics.is_open()) metrics << line << '\n' << std::flush;
    if (log) *log << line << '\n' << std::flush;
    result.metrics.push_back(em);
    if (!out_dir.empty() && config.checkpoint_interval > 0 &&
        (epoch + 1) % static_cast<std::uint64_t>(config.checkpoint_interval) == 0) {
      save_checkpoint(ck, out_dir / ("checkpoint-" + std::to_string(epoch + 1) + ".bin"));
    }
  }
  if (!out_dir.empty()) save_checkpoint(ck, out_dir / "checkpoint.bin");
  return result;
}

// --- checkpoint container ------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'V', 'B', 'I', 'G', 'A', 'N', '\0'};
constexpr std::uint8_t kDtypeF32 = 1;

std::uint64_t fnv1a(const std::string& bytes, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 1099511628211ull;
  }
  return h;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_record(std::string& out, const std::string& name, std::vector<std::uint64_t> dims,
                const float* data, std::size_t count) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  out.push_back(static_cast<char>(kDtypeF32));
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_u64(out, d);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32(out, bits);
  }
}

struct Reader {
  const std::string& bytes;
  std::size_t pos;
  std::size_t end;

  void need(std::size_t n) const {
    if (end - pos < n) throw Error(ErrorKind::CorruptCheckpoint, "record runs past the end");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(bytes[pos + i])} << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes[pos + i])} << (8 * i);
    pos += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

struct Record {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

void fill_matrix(const std::map<std::string, Record>& recs, const std::string& name, Mat<float>& m) {
  auto it = recs.find(name);
  if (it == recs.end()) throw Error(ErrorKind::CorruptCheckpoint, "missing record " + name);
  const Record& r = it->second;
  const auto rows = static_cast<std::uint64_t>(m.rows());
  const auto cols = static_cast<std::uint64_t>(m.cols());
  const bool ok = (r.dims.size() == 2 && r.dims[0] == rows && r.dims[1] == cols) ||
                  (r.dims.size() == 1 && r.dims[0] == rows && cols == 1);
  if (!ok) {
    throw Error(ErrorKind::CorruptCheckpoint, "shape mismatch for " + name);
  }
  std::memcpy(m.data(), r.data.data(), r.data.size() * sizeof(float));
  if (!m.allFinite()) throw Error(ErrorKind::CorruptCheckpoint, "non-finite values in " + name);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  const std::string text = config_to_text(ckpt.config);
  put_u64(out, text.size());
  out += text;
  put_u64(out, ckpt.state.epoch);
  put_u64(out, ckpt.state.step);

  auto& model = const_cast<ModelBundle<float>&>(ckpt.state.model);
  std::uint64_t count = 0;
  std::string records;
  model.for_each_param([&](Param<float>& p) {
    put_record(records, p.name, {static_cast<std::uint64_t>(p.value.rows()),
                                 static_cast<std::uint64_t>(p.value.cols())},
               p.value.data(), static_cast<std::size_t>(p.value.size()));
    ++count;
  });
  model.for_each_buffer([&](Buffer<float>& b) {
    put_record(records, b.name, {static_cast<std::uint64_t>(b.value.size())}, b.value.data(),
               static_cast<std::size_t>(b.value.size()));
    ++count;
  });
  for (const auto& [name, mo] : ckpt.state.adam.moments()) {
    const std::vector<std::uint64_t> dims{static_cast<std::uint64_t>(mo.m.rows()),
                                          static_cast<std::uint64_t>(mo.m.cols())};
    put_record(records, "adam.m." + name, dims, mo.m.data(), static_cast<std::size_t>(mo.m.size()));
    put_record(records, "adam.v." + name, dims, mo.v.data(), static_cast<std::size_t>(mo.v.size()));
    count += 2;
  }
  put_u64(out, count);
  out += records;
  put_u64(out, fnv1a(out, out.size()));

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 12 + 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw Error(ErrorKind::CorruptCheckpoint, path.string() + " is not a checkpoint");
  }
  Reader head{bytes, 8, bytes.size()};
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                                ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::size_t body = bytes.size() - 8;
  Reader tail{bytes, body, bytes.size()};
  if (tail.u64() != fnv1a(bytes, body)) {
    throw Error(ErrorKind::CorruptCheckpoint, "checksum mismatch in " + path.string());
  }

  Reader r{bytes, 12, body};
  Checkpoint ck;
  const std::string text = r.str(static_cast<std::size_t>(r.u64()));
  try {
    ck.config = config_from_text(text);
    ck.config.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("bad config block: ") + e.what());
  }
  ck.state.epoch = r.u64();
  ck.state.step = r.u64();
  const std::uint64_t count = r.u64();
  std::map<std::string, Record> recs;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    r.need(1);
    if (static_cast<std::uint8_t>(bytes[r.pos++]) != kDtypeF32) {
      throw Error(ErrorKind::CorruptCheckpoint, "unsupported dtype for " + name);
    }
    Record rec;
    const std::uint32_t ndims = r.u32();
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      rec.dims.push_back(r.u64());
      n *= rec.dims.back();
    }
    r.need(n * 4);
    rec.data.resize(n);
    for (std::uint64_t j = 0; j < n; ++j) {
      const std::uint32_t bits = r.u32();
      std::memcpy(&rec.data[j], &bits, 4);
    }
    recs.emplace(name, std::move(rec));
  }
  if (r.pos != body) throw Error(ErrorKind::CorruptCheckpoint, "trailing bytes before checksum");

  ck.state.model = build_model<float>(ck.config.arch());
  ck.state.model.for_each_param([&](Param<float>& p) {
    fill_matrix(recs, p.name, p.value);
    p.zero_grad();
  });
  ck.state.model.for_each_buffer([&](Buffer<float>& b) {
    Mat<float> m(b.value.size(), 1);
    fill_matrix(recs, b.name, m);
    b.value = m.col(0);
  });
  ck.state.adam = Adam({ck.config.lr, ck.config.beta1, ck.config.beta2, ck.config.eps});
  ck.state.model.for_each_param([&](Param<float>& p) {
    const std::string m_name = "adam.m." + p.name;
    if (!recs.count(m_name)) return;
    Adam::Moments mo;
    mo.m.resize(p.value.rows(), p.value.cols());
    mo.v.resize(p.value.rows(), p.value.cols());
    fill_matrix(recs, m_name, mo.m);
    fill_matrix(recs, "adam.v." + p.name, mo.v);
    ck.state.adam.moments().emplace(p.name, std::move(mo));
  });
  return ck;
}

}  // namespace mvbigan
