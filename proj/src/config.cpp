#include "mvbigan/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace mvbigan {

const char* to_string(UpdateMode m) {
  return m == UpdateMode::Alternating ? "alternating" : "onepass";
}

UpdateMode update_mode_from_string(const std::string& s) {
  if (s == "alternating") return UpdateMode::Alternating;
  if (s == "onepass") return UpdateMode::OnePass;
  throw Error(ErrorKind::InvalidConfig, "update_mode must be alternating or onepass, got '" + s + "'");
}

TaskSpec TrainConfig::task_spec() const {
  TaskSpec t;
  switch (task) {
    case TaskKind::Quarters: t = TaskSpec::quarters(); break;
    case TaskKind::Stream: t = TaskSpec::stream(static_cast<std::size_t>(stream_views)); break;
    case TaskKind::Hetero: t = TaskSpec::hetero(); break;
    case TaskKind::Synthetic: t = TaskSpec::synthetic(); break;
  }
  t.geometry = stream;
  return t;
}

SyntheticSpec TrainConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.stddev = synthetic_stddev;
  s.view_noise = synthetic_noise;
  return s;
}

ArchConfig TrainConfig::arch() const {
  const TaskSpec t = task_spec();
  ArchConfig a = ArchConfig::mnist(t.view_sizes());
  a.output_size = static_cast<int>(t.output_size);
  a.latent_dim = latent_dim;
  a.aggregation_dim = aggregation_dim;
  a.encoder_hidden = encoder_hidden;
  a.generator_hidden = generator_hidden;
  a.d1_hidden = d1_hidden;
  a.d2_hidden = d2_hidden;
  a.leaky_slope = leaky_slope;
  a.generator_output = task == TaskKind::Synthetic ? Activation::Identity : Activation::Sigmoid;
  return a;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::InvalidConfig, what);
  };
  require(lambda >= 0.0 && std::isfinite(lambda), "train.lambda must be >= 0");
  require(lr > 0.0 && std::isfinite(lr), "train.lr must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0, "train.beta1 must be in [0,1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "train.beta2 must be in [0,1)");
  require(eps > 0.0, "train.eps must be > 0");
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(epochs >= 0, "train.epochs must be >= 0");
  require(checkpoint_interval >= 0, "train.checkpoint_interval must be >= 0");
  require(stream_views >= 1, "task.stream_views must be >= 1");
  require(synthetic_count >= 1, "data.synthetic_count must be >= 1");
  try {
    task_spec().validate();
    synthetic_spec().validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
  arch().validate();
}

TrainConfig TrainConfig::for_task(TaskKind kind) {
  TrainConfig c;
  c.task = kind;
  if (kind == TaskKind::Synthetic) {
    c.latent_dim = 2;
    c.aggregation_dim = 64;
    c.encoder_hidden = {64, 64};
    c.generator_hidden = {64, 64, 64};
    c.d1_hidden = {64, 64, 64};
    c.d2_hidden = {64, 64};
    c.lambda = 1e-2;
    c.lr = 5e-4;
    c.eps = 1e-8;
    c.batch_size = 256;
    c.epochs = 1200;
  }
  return c;
}

// --- key registry -------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename N>
N parse_number(const std::string& key, const std::string& s) {
  N v{};
  const char* end = s.data() + s.size();
  auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) {
    throw Error(ErrorKind::InvalidConfig, key + ": cannot parse '" + s + "'");
  }
  return v;
}

std::string fmt_list(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::vector<int> parse_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, item));
  return out;
}

struct Entry {
  ConfigKey info;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define NUM_ENTRY(KEY, FIELD, TYPE, HELP)                                                     \
  Entry {                                                                                     \
    {KEY, HELP}, [](const TrainConfig& c) { return std::to_string(c.FIELD); },                \
        [](TrainConfig& c, const std::string& v) { c.FIELD = parse_number<TYPE>(KEY, v); }    \
  }
#define REAL_ENTRY(KEY, FIELD, HELP)                                                          \
  Entry {                                                                                     \
    {KEY, HELP}, [](const TrainConfig& c) { return fmt_double(c.FIELD); },                    \
        [](TrainConfig& c, const std::string& v) { c.FIELD = parse_number<double>(KEY, v); }  \
  }
#define LIST_ENTRY(KEY, FIELD, HELP)                                                          \
  Entry {                                                                                     \
    {KEY, HELP}, [](const TrainConfig& c) { return fmt_list(c.FIELD); },                      \
        [](TrainConfig& c, const std::string& v) { c.FIELD = parse_list(KEY, v); }            \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{{"task.kind", "quarters | stream | hetero | synthetic"},
            [](const TrainConfig& c) { return std::string(to_string(c.task)); },
            [](TrainConfig& c, const std::string& v) { c.task = task_kind_from_string(v); }},
      NUM_ENTRY("task.stream_views", stream_views, int, "views per stream sequence"),
      NUM_ENTRY("task.stream_min_side", stream.min_side, int, "smallest revealed rectangle side"),
      NUM_ENTRY("task.stream_max_side", stream.max_side, int, "largest revealed rectangle side"),
      NUM_ENTRY("task.stream_rects", stream.rects_per_view, int, "rectangles added per view"),
      NUM_ENTRY("arch.latent_dim", latent_dim, int, "latent size Z"),
      NUM_ENTRY("arch.aggregation_dim", aggregation_dim, int, "aggregation space size A"),
      LIST_ENTRY("arch.encoder_hidden", encoder_hidden, "E/H hidden sizes"),
      LIST_ENTRY("arch.generator_hidden", generator_hidden, "G hidden sizes"),
      LIST_ENTRY("arch.d1_hidden", d1_hidden, "D1 hidden sizes"),
      LIST_ENTRY("arch.d2_hidden", d2_hidden, "D2 hidden sizes"),
      REAL_ENTRY("arch.leaky_slope", leaky_slope, "leaky ReLU slope"),
      REAL_ENTRY("train.lambda", lambda, "KL penalty weight"),
      REAL_ENTRY("train.lr", lr, "Adam learning rate"),
      REAL_ENTRY("train.beta1", beta1, "Adam beta1"),
      REAL_ENTRY("train.beta2", beta2, "Adam beta2"),
      REAL_ENTRY("train.eps", eps, "Adam epsilon"),
      NUM_ENTRY("train.batch_size", batch_size, int, "minibatch size"),
      NUM_ENTRY("train.epochs", epochs, int, "number of epochs"),
      NUM_ENTRY("train.seed", seed, std::uint64_t, "random seed"),
      Entry{{"train.update_mode", "alternating | onepass"},
            [](const TrainConfig& c) { return std::string(to_string(c.update_mode)); },
            [](TrainConfig& c, const std::string& v) { c.update_mode = update_mode_from_string(v); }},
      NUM_ENTRY("train.checkpoint_interval", checkpoint_interval, int,
                "epochs between checkpoints (0: final only)"),
      Entry{{"train.out_dir", "output directory"},
            [](const TrainConfig& c) { return c.out_dir; },
            [](TrainConfig& c, const std::string& v) { c.out_dir = v; }},
      Entry{{"data.dir", "directory holding the IDX files"},
            [](const TrainConfig& c) { return c.data_dir; },
            [](TrainConfig& c, const std::string& v) { c.data_dir = v; }},
      NUM_ENTRY("data.limit", data_limit, std::size_t, "training images used (0: all)"),
      NUM_ENTRY("data.synthetic_count", synthetic_count, std::size_t, "synthetic training points"),
      REAL_ENTRY("data.synthetic_stddev", synthetic_stddev, "mixture component stddev"),
      REAL_ENTRY("data.synthetic_noise", synthetic_noise, "noise added to synthetic views"),
  };
  return table;
}

#undef NUM_ENTRY
#undef REAL_ENTRY
#undef LIST_ENTRY

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.info.key == key) return e;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back(e.info);
    return out;
  }();
  return keys;
}

std::string get_config_value(const TrainConfig& c, const std::string& key) {
  return find_entry(key).get(c);
}

void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  find_entry(key).set(c, value);
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    find_entry(key);
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read config file " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_config(TrainConfig& c, const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) set_config_value(c, k, v);
}

std::string config_to_text(const TrainConfig& c) {
  std::string out;
  for (const auto& e : entries()) out += e.info.key + " = " + e.get(c) + "\n";
  return out;
}

TrainConfig config_from_text(const std::string& text) {
  TrainConfig c;
  apply_config(c, parse_config_text(text));
  return c;
}

}  // namespace mvbigan
