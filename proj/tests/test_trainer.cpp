#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "helpers.hpp"
#include "mvbigan/trainer.hpp"

using namespace mvbigan;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config() {
  TrainConfig c = TrainConfig::for_task(TaskKind::Synthetic);
  c.latent_dim = 2;
  c.aggregation_dim = 8;
  c.encoder_hidden = {8};
  c.generator_hidden = {8, 8};
  c.d1_hidden = {8};
  c.d2_hidden = {8};
  c.batch_size = 16;
  c.synthetic_count = 64;
  c.epochs = 3;
  c.seed = 11;
  return c;
}

template <typename T>
std::vector<T> flat(ModelBundle<T>& m) {
  std::vector<T> out;
  m.for_each_param([&](Param<T>& p) { out.insert(out.end(), p.value.data(), p.value.data() + p.value.size()); });
  m.for_each_buffer([&](Buffer<T>& b) { out.insert(out.end(), b.value.data(), b.value.data() + b.value.size()); });
  return out;
}

std::vector<float> flat_params(const std::vector<Param<float>*>& ps) {
  std::vector<float> out;
  for (auto* p : ps) out.insert(out.end(), p->value.data(), p->value.data() + p->value.size());
  return out;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(s.data(), std::streamsize(s.size()));
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mvbigan_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidConfig;
}

}  // namespace

TEST(Trainer, ParameterGroupsPartitionTheModel) {
  auto m = init_model<float>(small_config().arch(), 0);
  std::set<std::string> critic, gen;
  for (auto* p : critic_params(m)) critic.insert(p->name);
  for (auto* p : generator_params(m)) gen.insert(p->name);
  std::size_t total = 0;
  m.for_each_param([&](Param<float>&) { ++total; });
  EXPECT_EQ(critic.size() + gen.size(), total);
  for (const auto& n : critic) EXPECT_FALSE(gen.count(n)) << n;
}

TEST(Trainer, StepUpdatesBothSides) {
  const TrainConfig c = small_config();
  const Dataset ds = load_training_data(c);
  Checkpoint ck = initial_checkpoint(c);
  const auto critic0 = flat_params(critic_params(ck.state.model));
  const auto gen0 = flat_params(generator_params(ck.state.model));
  Rng rng(1);
  const std::vector<std::size_t> items{0, 1, 2, 3, 4, 5, 6, 7};
  const auto batch = make_train_batch<float>(ds, items, c.latent_dim, rng);
  const LossBreakdown l = train_step(ck.state, batch, c);
  EXPECT_TRUE(std::isfinite(l.total_gen_side));
  EXPECT_EQ(ck.state.step, 1u);
  EXPECT_NE(flat_params(critic_params(ck.state.model)), critic0);
  EXPECT_NE(flat_params(generator_params(ck.state.model)), gen0);
}

TEST(Trainer, CriticStepWithSmallRateLowersCriticLoss) {
  const TrainConfig c = small_config();
  const Dataset ds = load_training_data(c);
  auto m = init_model<float>(c.arch(), 3);
  Rng rng(2);
  std::vector<std::size_t> items(16);
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
  const auto b = make_train_batch<float>(ds, items, c.latent_dim, rng);
  const auto g = forward_generators(m, b);
  auto loss = [&] {
    const auto cp = forward_critics(m, b, g);
    const auto l1 = adversarial_loss_from_logits<float>(cp.d1_real_logit.row(0).transpose(),
                                                        cp.d1_fake_logit.row(0).transpose());
    const auto l2 = adversarial_loss_from_logits<float>(cp.d2_real_logit.row(0).transpose(),
                                                        cp.d2_fake_logit.row(0).transpose());
    return double(l1.value + l2.value);
  };
  const double before = loss();
  m.zero_grad();
  critic_backward(m, forward_critics(m, b, g));
  Adam adam(AdamSettings{1e-4, 0.5, 0.999, 1e-8});
  adam.update(critic_params(m), 1);
  EXPECT_LT(loss(), before);
}

TEST(Trainer, KlWeightOnlyAddsTheKlGradient) {
  const TrainConfig c = small_config();
  const Dataset ds = load_training_data(c);
  auto mf = init_model<float>(c.arch(), 5);
  auto m = cast_model<double>(mf);
  Rng rng(4);
  const std::vector<std::size_t> items{0, 1, 2, 3, 4};
  const auto bf = make_train_batch<float>(ds, items, c.latent_dim, rng);
  TrainBatch<double> b{bf.y.cast<double>(), {}, bf.eps_E.cast<double>(), bf.z_G.cast<double>(),
                       bf.eps_H.cast<double>(), bf.batch, bf.steps};
  for (const auto& v : bf.views.views) b.views.views.push_back(v.cast<double>());
  b.views.mask = bf.views.mask;
  const auto g = forward_generators(m, b);
  const auto cp = forward_critics(m, b, g);
  auto grads = [&](double lambda) {
    m.zero_grad();
    const auto l = generator_backward(m, b, g, cp, lambda);
    std::vector<Mat<double>> out;
    for (auto* p : generator_params(m)) out.push_back(p->grad);
    return std::make_pair(l, out);
  };
  const auto [l0, g0] = grads(0.0);
  const auto [l1, g1] = grads(0.25);
  EXPECT_EQ(l0.gen_adv, l1.gen_adv);
  EXPECT_EQ(l0.kl, l1.kl);
  // H's KL gradient, directly from the batch penalty
  KlGrad<double> kg;
  sequence_kl_batch<double>(g.h_tape.out, b.batch, b.steps, &kg, 0.25);
  double diff = 0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    diff += (g1[i] - g0[i]).squaredNorm();
  }
  EXPECT_GT(diff, 0.0);
  EXPECT_GT(kg.mu_p.norm(), 0.0);
  // lambda = 0 leaves E and G untouched by the KL term
  const auto gen = generator_params(m);
  for (std::size_t i = 0; i < gen.size(); ++i) {
    if (gen[i]->name.rfind("H.", 0) == 0) continue;
    EXPECT_LT((g1[i] - g0[i]).norm(), 1e-12) << gen[i]->name;
  }
}

TEST(Trainer, DeterministicLosses) {
  TrainConfig c = small_config();
  const Dataset ds = load_training_data(c);
  const auto a = train(c, ds);
  const auto b = train(c, ds);
  ASSERT_EQ(a.metrics.size(), 3u);
  for (std::size_t e = 0; e < a.metrics.size(); ++e) {
    EXPECT_EQ(a.metrics[e].mean.d1_loss, b.metrics[e].mean.d1_loss);
    EXPECT_EQ(a.metrics[e].mean.kl_penalty, b.metrics[e].mean.kl_penalty);
    EXPECT_EQ(a.metrics[e].mean.total_gen_side, b.metrics[e].mean.total_gen_side);
  }
  auto ma = a.checkpoint.state.model;
  auto mb = b.checkpoint.state.model;
  EXPECT_EQ(flat(ma), flat(mb));
}

TEST(Trainer, ZeroEpochsKeepsInitialization) {
  TrainConfig c = small_config();
  c.epochs = 0;
  auto r = train(c, load_training_data(c));
  auto init = initial_checkpoint(c);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(flat(r.checkpoint.state.model), flat(init.state.model));
}

TEST(Trainer, MetricsLineFormat) {
  EpochMetrics m;
  m.epoch = 2;
  m.mean.d1_loss = 1.5;
  m.wall_seconds = 0.25;
  const std::string line = format_metrics_line(m);
  EXPECT_EQ(line.rfind("2\t1.5\t", 0), 0u);
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 6);
}

TEST(Checkpoint, SaveLoadIsBitExact) {
  const fs::path dir = temp_dir("ck");
  TrainConfig c = small_config();
  c.epochs = 2;
  const auto r = train(c, load_training_data(c));
  save_checkpoint(r.checkpoint, dir / "a.bin");
  Checkpoint loaded = load_checkpoint(dir / "a.bin");
  save_checkpoint(loaded, dir / "b.bin");
  EXPECT_EQ(read_bytes(dir / "a.bin"), read_bytes(dir / "b.bin"));
  EXPECT_EQ(loaded.state.epoch, 2u);
  EXPECT_EQ(loaded.state.step, r.checkpoint.state.step);
  EXPECT_EQ(config_to_text(loaded.config), config_to_text(c));
  fs::remove_all(dir);
}

TEST(Checkpoint, DamagedFilesAreRejected) {
  const fs::path dir = temp_dir("bad");
  const TrainConfig c = small_config();
  save_checkpoint(initial_checkpoint(c), dir / "a.bin");
  const std::string good = read_bytes(dir / "a.bin");

  write_bytes(dir / "t.bin", good.substr(0, good.size() / 2));
  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "t.bin"); }), ErrorKind::CorruptCheckpoint);

  std::string flipped = good;
  flipped[flipped.size() / 2] ^= 0x10;
  write_bytes(dir / "f.bin", flipped);
  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "f.bin"); }), ErrorKind::CorruptCheckpoint);

  std::string version = good;
  version[8] = 9;
  write_bytes(dir / "v.bin", version);
  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "v.bin"); }), ErrorKind::VersionMismatch);

  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "missing.bin"); }), ErrorKind::IoError);
  fs::remove_all(dir);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const fs::path dir = temp_dir("resume");
  TrainConfig c = small_config();
  c.epochs = 4;
  const Dataset ds = load_training_data(c);
  auto full = train(c, ds);

  TrainConfig half = c;
  half.epochs = 2;
  half.out_dir = (dir / "run").string();
  train(half, ds);
  const Checkpoint mid = load_checkpoint(dir / "run" / "checkpoint.bin");
  auto resumed = train(c, ds, &mid);

  EXPECT_EQ(resumed.checkpoint.state.step, full.checkpoint.state.step);
  EXPECT_EQ(flat(resumed.checkpoint.state.model), flat(full.checkpoint.state.model));
  ASSERT_EQ(resumed.metrics.size(), 2u);
  EXPECT_EQ(resumed.metrics[1].mean.total_gen_side, full.metrics[3].mean.total_gen_side);
  fs::remove_all(dir);
}

TEST(Checkpoint, ResumeRejectsDifferentArchitecture) {
  TrainConfig c = small_config();
  const Checkpoint ck = initial_checkpoint(c);
  c.latent_dim = 3;
  EXPECT_THROW(train(c, load_training_data(c), &ck), Error);
}
