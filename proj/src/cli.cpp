#include "mvbigan/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mvbigan/config.hpp"
#include "mvbigan/eval.hpp"
#include "mvbigan/trainer.hpp"

namespace mvbigan {

namespace {

constexpr int kDeskEpochs = 30;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::BadMagic:
    case ErrorKind::TruncatedFile:
    case ErrorKind::IoError:
    case ErrorKind::EmptyDataset:
    case ErrorKind::VersionMismatch:
    case ErrorKind::CorruptCheckpoint:
      return 2;
    case ErrorKind::NonFinite:
    case ErrorKind::NonFiniteActivation:
    case ErrorKind::NonFiniteLoss:
      return 3;
    default:
      return 1;
  }
}

std::string env_data_dir() {
  const char* v = std::getenv("MVBIGAN_DATA_DIR");
  return v ? v : "";
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_overrides(const std::vector<std::string>& sets) {
  KeyValues kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, "override '" + s + "' is not key=value");
    }
    std::string key = s.substr(0, eq);
    get_config_value(TrainConfig{}, key);  // throws for unknown keys
    kv.emplace_back(std::move(key), s.substr(eq + 1));
  }
  return kv;
}

// Preset for a task with the desk-scale epoch count for the image tasks.
TrainConfig cli_defaults(TaskKind kind) {
  TrainConfig c = TrainConfig::for_task(kind);
  if (kind != TaskKind::Synthetic) c.epochs = kDeskEpochs;
  c.data_dir = env_data_dir();
  return c;
}

std::string keys_footer() {
  std::ostringstream out;
  const TrainConfig q = cli_defaults(TaskKind::Quarters);
  const TrainConfig s = cli_defaults(TaskKind::Synthetic);
  out << "Config keys (file lines `key = value`, or --set key=value).\n"
      << "Defaults shown for task quarters; [synthetic] where the synthetic preset differs.\n";
  for (const auto& k : config_keys()) {
    const std::string dq = get_config_value(q, k.key);
    const std::string ds = get_config_value(s, k.key);
    out << "  " << k.key << " = " << (dq.empty() ? "\"\"" : dq);
    if (ds != dq && k.key != "task.kind") out << "  [synthetic: " << ds << "]";
    out << "\n      " << k.help << "\n";
  }
  return out.str();
}

struct Common {
  std::string checkpoint;
  std::string data_dir;
  std::uint64_t seed = 0;
};

Dataset eval_dataset(const TrainConfig& cfg, const std::string& data_dir, std::size_t limit) {
  const std::string dir = !data_dir.empty() ? data_dir : !cfg.data_dir.empty() ? cfg.data_dir : env_data_dir();
  if (dir.empty()) throw Error(ErrorKind::IoError, "no data directory (--data-dir or MVBIGAN_DATA_DIR)");
  return load_mnist_task(cfg.task_spec(), dir, Split::Test, cfg.seed, limit);
}

SubsetMask parse_mask(const std::string& s, std::size_t V) {
  std::vector<int> bits;
  for (char c : s) {
    if (c == ',' || c == ' ') continue;
    bits.push_back(c - '0');
  }
  return SubsetMask(bits, V);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view conditional BiGAN: train, sample and evaluate"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  std::string config_path, task_name, out_dir, data_dir, resume_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int epochs = -1;
  bool quiet = false;
  train_cmd->add_option("--config", config_path, "Config file of key = value lines");
  train_cmd->add_option("--task", task_name, "quarters | stream | hetero | synthetic");
  train_cmd->add_option("--seed", seed, "Random seed (train.seed)");
  train_cmd->add_option("--out", out_dir, "Output directory (train.out_dir)");
  train_cmd->add_option("--data-dir", data_dir, "IDX directory (data.dir; default $MVBIGAN_DATA_DIR)");
  train_cmd->add_option("--epochs", epochs, "Epochs (train.epochs)");
  train_cmd->add_option("--set", sets, "Override key=value, repeatable");
  train_cmd->add_option("--resume", resume_path, "Continue from a checkpoint");
  train_cmd->add_flag("--quiet", quiet, "Do not echo per-epoch metrics");
  train_cmd->footer(keys_footer());

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Draw conditional samples for one item");
  Common sc;
  std::size_t index = 0, M = 8;
  std::string mask_str, values_str, sample_out;
  bool zero_noise = false;
  sample_cmd->add_option("--checkpoint", sc.checkpoint, "Checkpoint file")->required();
  sample_cmd->add_option("--data-dir", sc.data_dir, "IDX directory (default from checkpoint or $MVBIGAN_DATA_DIR)");
  sample_cmd->add_option("--index", index, "Test item index")->capture_default_str();
  sample_cmd->add_option("--mask", mask_str, "Available views, e.g. 1010 (default all)");
  sample_cmd->add_option("--values", values_str, "Synthetic task view values, e.g. 1,-1");
  sample_cmd->add_option("--M", M, "Number of samples")->capture_default_str();
  sample_cmd->add_option("--seed", sc.seed, "Sampling seed")->capture_default_str();
  sample_cmd->add_flag("--zero-noise", zero_noise, "Use the latent mean");
  sample_cmd->add_option("--out", sample_out, "Write samples here instead of stdout");

  // eval-variance
  auto* var_cmd = app.add_subcommand("eval-variance", "Sample variance along view sequences");
  Common vc;
  std::size_t items = 100, var_M = 16, steps = 0;
  std::string var_json;
  var_cmd->add_option("--checkpoint", vc.checkpoint, "Checkpoint file")->required();
  var_cmd->add_option("--data-dir", vc.data_dir, "IDX directory");
  var_cmd->add_option("--items", items, "Test items evaluated")->capture_default_str();
  var_cmd->add_option("--M", var_M, "Samples per step")->capture_default_str();
  var_cmd->add_option("--steps", steps, "Sequence length (0: task default)")->capture_default_str();
  var_cmd->add_option("--seed", vc.seed, "Evaluation seed")->capture_default_str();
  var_cmd->add_option("--json", var_json, "Also write the profile as JSON");

  // eval-synthetic
  auto* syn_cmd = app.add_subcommand("eval-synthetic", "Compare synthetic-task samples to analytic moments");
  Common yc;
  std::size_t syn_M = 4000;
  std::string syn_json;
  syn_cmd->add_option("--checkpoint", yc.checkpoint, "Checkpoint file")->required();
  syn_cmd->add_option("--M", syn_M, "Samples per condition")->capture_default_str();
  syn_cmd->add_option("--seed", yc.seed, "Evaluation seed")->capture_default_str();
  syn_cmd->add_option("--json", syn_json, "Also write the report as JSON");

  // inspect-data
  auto* inspect_cmd = app.add_subcommand("inspect-data", "Print the header of an IDX file");
  std::string idx_path;
  inspect_cmd->add_option("--idx", idx_path, "IDX file")->required();

  // render-grid
  auto* grid_cmd = app.add_subcommand("render-grid", "Render a PGM grid of samples along a view sequence");
  Common gc;
  std::size_t grid_index = 0, grid_M = 8;
  std::string grid_out;
  grid_cmd->add_option("--checkpoint", gc.checkpoint, "Checkpoint file")->required();
  grid_cmd->add_option("--data-dir", gc.data_dir, "IDX directory");
  grid_cmd->add_option("--index", grid_index, "Test item index")->capture_default_str();
  grid_cmd->add_option("--M", grid_M, "Samples per row")->capture_default_str();
  grid_cmd->add_option("--seed", gc.seed, "Sampling seed")->capture_default_str();
  grid_cmd->add_option("--out", grid_out, "Output .pgm")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (*train_cmd) {
      const KeyValues file_kv = config_path.empty() ? KeyValues{} : read_config_file(config_path);
      const KeyValues set_kv = parse_overrides(sets);
      std::optional<Checkpoint> resume;
      TrainConfig cfg;
      if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        cfg = resume->config;
      } else {
        TaskKind kind = TaskKind::Quarters;
        for (const auto* kv : {&file_kv, &set_kv}) {
          for (const auto& [k, v] : *kv) {
            if (k == "task.kind") kind = task_kind_from_string(v);
          }
        }
        if (!task_name.empty()) kind = task_kind_from_string(task_name);
        cfg = cli_defaults(kind);
      }
      apply_config(cfg, file_kv);
      apply_config(cfg, set_kv);
      if (!task_name.empty()) cfg.task = task_kind_from_string(task_name);
      if (train_cmd->count("--seed")) cfg.seed = seed;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      if (epochs >= 0) cfg.epochs = epochs;
      cfg.validate();
      const Dataset data = load_training_data(cfg);
      train(cfg, data, resume ? &*resume : nullptr, quiet ? nullptr : &out);
      return 0;
    }

    if (*sample_cmd) {
      const Checkpoint ck = load_checkpoint(sc.checkpoint);
      const TaskSpec spec = ck.config.task_spec();
      ViewSet vs;
      if (spec.kind == TaskKind::Synthetic) {
        if (values_str.empty()) throw Error(ErrorKind::InvalidConfig, "--values is required for the synthetic task");
        std::vector<std::vector<float>> views;
        std::stringstream ss(values_str);
        std::string item;
        while (std::getline(ss, item, ',')) views.push_back({std::stof(item)});
        vs = ViewSet{SubsetMask::full(views.size()), std::move(views)};
      } else {
        const Dataset data = eval_dataset(ck.config, sc.data_dir, index + 1);
        if (index >= data.size()) throw Error(ErrorKind::EmptyDataset, "index past the end of the test split");
        vs = data.examples[index].viewset;
      }
      validate_viewset(vs, spec.views);
      if (!mask_str.empty()) vs = vs.with_mask(parse_mask(mask_str, spec.num_views()));
      Rng rng = derive_rng(sc.seed);
      const auto samples = sample_conditional(ck.state.model, vs, M, rng, zero_noise);
      std::ofstream file;
      if (!sample_out.empty()) {
        file.open(sample_out);
        if (!file) throw Error(ErrorKind::IoError, "cannot write " + sample_out);
      }
      std::ostream& dst = sample_out.empty() ? out : file;
      for (const auto& s : samples) {
        for (std::size_t i = 0; i < s.size(); ++i) dst << (i ? " " : "") << s[i];
        dst << '\n';
      }
      return 0;
    }

    if (*var_cmd) {
      const Checkpoint ck = load_checkpoint(vc.checkpoint);
      const Dataset data = eval_dataset(ck.config, vc.data_dir, items);
      const std::size_t L = steps ? steps : data.spec.sequence_length;
      const VarianceProfile p = variance_profile(ck.state.model, data, L, var_M, vc.seed, items);
      out << "items = " << p.per_item.size() << "\n";
      for (std::size_t t = 0; t < p.step_means.size(); ++t) {
        out << "step_" << (t + 1) << "_variance = " << p.step_means[t] << "\n";
      }
      out << "fraction_monotone = " << p.fraction_monotone << "\n"
          << "population_decreasing = " << (p.population_decreasing() ? "true" : "false") << "\n"
          << "mean_ratio = " << p.mean_ratio << "\n";
      if (!var_json.empty()) {
        std::ofstream j(var_json);
        if (!j) throw Error(ErrorKind::IoError, "cannot write " + var_json);
        j << "{\"items\": " << p.per_item.size() << ", \"step_means\": [";
        for (std::size_t t = 0; t < p.step_means.size(); ++t) j << (t ? ", " : "") << p.step_means[t];
        j << "], \"fraction_monotone\": " << p.fraction_monotone
          << ", \"mean_ratio\": " << p.mean_ratio << "}\n";
      }
      return 0;
    }

    if (*syn_cmd) {
      const Checkpoint ck = load_checkpoint(yc.checkpoint);
      if (ck.config.task != TaskKind::Synthetic) {
        throw Error(ErrorKind::InvalidConfig, "checkpoint was not trained on the synthetic task");
      }
      const SyntheticReport rep = synthetic_report(ck.state.model, ck.config.synthetic_spec(), syn_M, yc.seed);
      out << rep.to_text();
      if (!syn_json.empty()) {
        std::ofstream j(syn_json);
        if (!j) throw Error(ErrorKind::IoError, "cannot write " + syn_json);
        j << rep.to_json() << "\n";
      }
      return 0;
    }

    if (*inspect_cmd) {
      const IdxData d = parse_idx(idx_path);
      std::string dims;
      for (std::size_t i = 0; i < d.dims.size(); ++i) dims += (i ? "x" : "") + std::to_string(d.dims[i]);
      out << "dims = " << dims << "\n" << "items = " << d.items() << "\n";
      return 0;
    }

    if (*grid_cmd) {
      const Checkpoint ck = load_checkpoint(gc.checkpoint);
      const Dataset data = eval_dataset(ck.config, gc.data_dir, grid_index + 1);
      if (grid_index >= data.size()) throw Error(ErrorKind::EmptyDataset, "index past the end of the test split");
      Rng rng = derive_rng(gc.seed);
      const ViewSequence seq = sample_task_sequence(data.spec, rng);
      render_grid(sequence_grid(ck.state.model, data.spec, data.examples[grid_index], seq, grid_M, rng),
                  grid_out);
      out << "wrote " << grid_out << "\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mvbigan
