#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mvbigan/core.hpp"

namespace mvbigan {

enum class TaskKind { Quarters, Stream, Hetero, Synthetic };

const char* to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

// Missing-value geometry for the stream task: view t (1-based) reveals the
// union of t * rects_per_view axis-aligned rectangles.
struct StreamGeometry {
  int min_side = 6;
  int max_side = 12;
  int rects_per_view = 1;
};

inline constexpr int kImageSide = 28;
inline constexpr std::size_t kImagePixels = 784;
inline constexpr float kMissingValue = 0.5f;

struct TaskSpec {
  TaskKind kind = TaskKind::Quarters;
  std::vector<ViewShape> views;
  std::size_t output_size = kImagePixels;
  std::size_t sequence_length = 4;
  StreamGeometry geometry;

  std::size_t num_views() const { return views.size(); }
  std::vector<int> view_sizes() const;
  // Quarters/hetero/synthetic draw random view orders; stream reveals in order.
  bool random_order() const { return kind != TaskKind::Stream; }
  void validate() const;

  static TaskSpec quarters();
  static TaskSpec stream(std::size_t num_views = 4);
  static TaskSpec hetero();
  static TaskSpec synthetic();
};

struct SyntheticSpec {
  std::vector<std::array<double, 2>> centers{{1.0, 1.0}, {1.0, -1.0}, {-1.0, 1.0}, {-1.0, -1.0}};
  double stddev = 0.1;
  double view_noise = 0.0;

  void validate() const;  // throws InvalidSpec
};

struct Dataset {
  TaskSpec spec;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
};

// --- IDX ---------------------------------------------------------------------

struct IdxData {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;  // bytes scaled by 1/255

  std::size_t items() const { return dims.empty() ? 0 : dims[0]; }
  std::size_t item_size() const;
  std::span<const float> item(std::size_t i) const;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Throws IoError, BadMagic, TruncatedFile.
IdxData parse_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
               std::span<const std::uint8_t> bytes);
std::vector<int> idx_labels(const IdxData& labels);

// --- view regimes -------------------------------------------------------------

// Quarters in order top-left, top-right, bottom-left, bottom-right; 14x14 each.
ViewSet make_quarter_views(std::span<const float> image);
std::vector<float> assemble_quarters(const ViewSet& vs);

struct StreamViews {
  std::vector<std::vector<float>> views;
  std::vector<std::vector<std::uint8_t>> revealed;
};

StreamViews make_stream_views(std::span<const float> image, std::size_t count, Rng& rng,
                              const StreamGeometry& geometry = {});

// View 0: one-hot label (10); view 1: image with a random half set to 0.5.
ViewSet make_hetero_views(std::span<const float> image, int label, Rng& rng);

// Random permutation of views, prefix-accumulated: mask t has t+1 ones.
ViewSequence sample_view_sequence(std::size_t num_views, std::size_t length, Rng& rng);
// Views revealed in index order.
ViewSequence prefix_view_sequence(std::size_t num_views, std::size_t length);
ViewSequence sample_task_sequence(const TaskSpec& spec, Rng& rng);

// Shuffled index batches for one epoch; deterministic in (seed, epoch),
// final partial batch kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch);

Dataset sample_synthetic(const SyntheticSpec& spec, std::size_t count, Rng& rng);

// --- MNIST tasks --------------------------------------------------------------

enum class Split { Train, Test };

struct MnistFiles {
  std::filesystem::path images;
  std::filesystem::path labels;
};

MnistFiles mnist_files(const std::filesystem::path& dir, Split split);

// Builds a task dataset from parsed images (and labels for hetero); view
// randomness is fixed by `seed`. `limit` = 0 keeps every image.
Dataset make_task_dataset(const TaskSpec& spec, const IdxData& images, const IdxData* labels,
                          std::uint64_t seed, std::size_t limit = 0);

Dataset load_mnist_task(const TaskSpec& spec, const std::filesystem::path& dir, Split split,
                        std::uint64_t seed, std::size_t limit = 0);

}  // namespace mvbigan
