#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mvbigan/dataio.hpp"
#include "mvbigan/netdef.hpp"

namespace mvbigan {

enum class UpdateMode { Alternating, OnePass };

const char* to_string(UpdateMode m);
UpdateMode update_mode_from_string(const std::string& s);

struct TrainConfig {
  TaskKind task = TaskKind::Quarters;
  int stream_views = 4;
  StreamGeometry stream;

  int latent_dim = 128;
  int aggregation_dim = 1500;
  std::vector<int> encoder_hidden{1500, 1500};
  std::vector<int> generator_hidden{1500, 1500, 1500};
  std::vector<int> d1_hidden{1500, 1500, 1500};
  std::vector<int> d2_hidden{1500, 1500};
  double leaky_slope = 0.2;

  double lambda = 1e-5;
  double lr = 2e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-3;
  int batch_size = 128;
  int epochs = 300;
  std::uint64_t seed = 0;
  UpdateMode update_mode = UpdateMode::Alternating;
  int checkpoint_interval = 0;  // 0: final checkpoint only
  std::string out_dir;

  std::string data_dir;
  std::size_t data_limit = 0;  // 0: every training image
  std::size_t synthetic_count = 4096;
  double synthetic_stddev = 0.1;
  double synthetic_noise = 0.0;

  TaskSpec task_spec() const;
  SyntheticSpec synthetic_spec() const;
  ArchConfig arch() const;
  // Throws InvalidConfig.
  void validate() const;

  // Defaults for a task: the MNIST tasks use the full-size networks, the
  // synthetic task a small network.
  static TrainConfig for_task(TaskKind kind);
};

struct ConfigKey {
  std::string key;
  std::string help;
};

// Every accepted dotted key, in display order.
const std::vector<ConfigKey>& config_keys();

std::string get_config_value(const TrainConfig& c, const std::string& key);
// Throws InvalidConfig for unknown keys or unparsable values.
void set_config_value(TrainConfig& c, const std::string& key, const std::string& value);

// `key = value` lines; '#' starts a comment. Later assignments win.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& p);

void apply_config(TrainConfig& c, const std::vector<std::pair<std::string, std::string>>& kv);

// Full dump of every key; parse_config_text/apply_config restore it exactly.
std::string config_to_text(const TrainConfig& c);
TrainConfig config_from_text(const std::string& text);

}  // namespace mvbigan
