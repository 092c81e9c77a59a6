#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvbigan/config.hpp"
#include "mvbigan/dataio.hpp"
#include "mvbigan/netdef.hpp"
#include "mvbigan/objective.hpp"

namespace mvbigan {

// One minibatch with its view sequences and every noise draw fixed, so the
// losses below are deterministic functions of the parameters.
template <typename T>
struct TrainBatch {
  Mat<T> y;               // n x B
  ViewBatch<T> views;     // B*L columns, step-major (column t*B + b)
  Mat<T> eps_E;           // Z x B
  Mat<T> z_G;             // Z x B, prior draws
  Mat<T> eps_H;           // Z x B*L
  Eigen::Index batch = 0;
  Eigen::Index steps = 0;
};

template <typename T>
TrainBatch<T> make_train_batch(const Dataset& ds, std::span<const std::size_t> items,
                               int latent_dim, Rng& rng);

// Train-mode passes through E, G and H.
template <typename T>
struct GeneratorPass {
  typename Encoder<T>::Tape e_tape;
  Mat<T> z_E;      // Z x B
  Mat<T> z_E_rep;  // z_E repeated over the L steps
  StackTape<T> g_tape;
  Mat<T> y_G;
  typename Encoder<T>::Tape h_tape;
  Mat<T> z_H;  // Z x B*L
};

// Real and fake pairs go through each critic as one batch (real columns
// first) so batch norm sees both; the logits are split afterwards.
template <typename T>
struct CriticPass {
  typename Critic<T>::Tape d1, d2;
  Mat<T> d1_real_logit, d1_fake_logit, d2_real_logit, d2_fake_logit;
};

template <typename T>
GeneratorPass<T> forward_generators(const ModelBundle<T>& m, const TrainBatch<T>& b);
template <typename T>
CriticPass<T> forward_critics(const ModelBundle<T>& m, const TrainBatch<T>& b,
                              const GeneratorPass<T>& g);

// Accumulate into Param::grad of D1/D2 only; returns (d1_loss, d2_loss).
template <typename T>
std::pair<T, T> critic_backward(ModelBundle<T>& m, const CriticPass<T>& c);

struct GeneratorLosses {
  double gen_adv = 0;
  double enc_adv = 0;
  double kl = 0;
};

// Label-swapped losses plus lambda * KL; accumulates into Param::grad of E,
// G and H only.
template <typename T>
GeneratorLosses generator_backward(ModelBundle<T>& m, const TrainBatch<T>& b,
                                   const GeneratorPass<T>& g, const CriticPass<T>& c,
                                   double lambda);

template <typename T>
std::vector<Param<T>*> critic_params(ModelBundle<T>& m);
template <typename T>
std::vector<Param<T>*> generator_params(ModelBundle<T>& m);

struct AdamSettings {
  double lr = 2e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-3;
};

class Adam {
 public:
  struct Moments {
    Mat<float> m;
    Mat<float> v;
  };

  Adam() = default;
  explicit Adam(AdamSettings s) : settings_(s) {}

  const AdamSettings& settings() const { return settings_; }
  void set_settings(const AdamSettings& s) { settings_ = s; }

  // One update of `params` at step `t` (1-based).
  void update(const std::vector<Param<float>*>& params, std::uint64_t t);

  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamSettings settings_;
  std::map<std::string, Moments> moments_;
};

struct TrainState {
  ModelBundle<float> model;
  Adam adam;
  std::uint64_t step = 0;   // completed train steps
  std::uint64_t epoch = 0;  // completed epochs
};

// One step of the procedure: discriminators first, then G, E, H. Throws
// NonFiniteLoss when any loss is not finite.
LossBreakdown train_step(TrainState& state, const TrainBatch<float>& batch,
                         const TrainConfig& config);

struct EpochMetrics {
  std::uint64_t epoch = 0;  // 1-based
  LossBreakdown mean;
  double wall_seconds = 0;
};

std::string format_metrics_line(const EpochMetrics& m);

struct Checkpoint {
  TrainConfig config;
  TrainState state;
};

Checkpoint initial_checkpoint(const TrainConfig& config);

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Atomic (temp file then rename). Throws IoError.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws IoError, VersionMismatch, CorruptCheckpoint.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Training examples for the configured task (synthetic draws or MNIST train
// split under config.data_dir).
Dataset load_training_data(const TrainConfig& config);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> metrics;
};

// Runs epochs [resume.epoch, config.epochs). With a non-empty out_dir the
// metrics log goes to out_dir/metrics.tsv and checkpoints to
// out_dir/checkpoint.bin (plus checkpoint-<epoch>.bin at the interval).
TrainResult train(const TrainConfig& config, const Dataset& data,
                  const Checkpoint* resume = nullptr, std::ostream* log = nullptr);

}  // namespace mvbigan
