#include "mvbigan/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace mvbigan {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Quarters: return "quarters";
    case TaskKind::Stream: return "stream";
    case TaskKind::Hetero: return "hetero";
    case TaskKind::Synthetic: return "synthetic";
  }
  return "quarters";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "quarters") return TaskKind::Quarters;
  if (s == "stream") return TaskKind::Stream;
  if (s == "hetero") return TaskKind::Hetero;
  if (s == "synthetic") return TaskKind::Synthetic;
  throw Error(ErrorKind::InvalidConfig, "unknown task '" + s + "'");
}

std::vector<int> TaskSpec::view_sizes() const {
  std::vector<int> out;
  for (const auto& v : views) out.push_back(static_cast<int>(v.size));
  return out;
}

void TaskSpec::validate() const {
  if (views.empty()) throw Error(ErrorKind::InvalidSpec, "task declares no views");
  if (sequence_length < 1 || sequence_length > views.size()) {
    throw Error(ErrorKind::InvalidLength, "sequence length must be in [1, V]");
  }
  if (geometry.min_side < 1 || geometry.max_side < geometry.min_side || geometry.max_side > kImageSide ||
      geometry.rects_per_view < 0) {
    throw Error(ErrorKind::InvalidSpec, "invalid stream geometry");
  }
}

TaskSpec TaskSpec::quarters() {
  TaskSpec t;
  t.kind = TaskKind::Quarters;
  t.views.assign(4, ViewShape{196, true});
  t.output_size = kImagePixels;
  t.sequence_length = 4;
  return t;
}

TaskSpec TaskSpec::stream(std::size_t num_views) {
  TaskSpec t;
  t.kind = TaskKind::Stream;
  t.views.assign(num_views, ViewShape{kImagePixels, true});
  t.output_size = kImagePixels;
  t.sequence_length = num_views;
  return t;
}

TaskSpec TaskSpec::hetero() {
  TaskSpec t;
  t.kind = TaskKind::Hetero;
  t.views = {ViewShape{10, true}, ViewShape{kImagePixels, true}};
  t.output_size = kImagePixels;
  t.sequence_length = 2;
  return t;
}

TaskSpec TaskSpec::synthetic() {
  TaskSpec t;
  t.kind = TaskKind::Synthetic;
  t.views = {ViewShape{1, false}, ViewShape{1, false}};
  t.output_size = 2;
  t.sequence_length = 2;
  return t;
}

void SyntheticSpec::validate() const {
  if (centers.empty()) throw Error(ErrorKind::InvalidSpec, "no mixture components");
  if (!(stddev > 0.0)) throw Error(ErrorKind::InvalidSpec, "stddev must be positive");
  if (!(view_noise >= 0.0)) throw Error(ErrorKind::InvalidSpec, "view noise must be >= 0");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      if (centers[i] == centers[j]) throw Error(ErrorKind::InvalidSpec, "duplicate centers");
    }
  }
}

// --- IDX ---------------------------------------------------------------------

std::size_t IdxData::item_size() const {
  std::size_t n = 1;
  for (std::size_t d = 1; d < dims.size(); ++d) n *= dims[d];
  return n;
}

std::span<const float> IdxData::item(std::size_t i) const {
  const std::size_t n = item_size();
  return std::span<const float>(data).subspan(i * n, n);
}

namespace {

std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

IdxData parse_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::IoError, "read failed for " + path.string());
  if (bytes.size() < 4) throw Error(ErrorKind::TruncatedFile, path.string() + ": missing header");
  const std::uint32_t magic = read_be32(bytes.data());
  const unsigned ndims = magic & 0xFF;
  // only unsigned-byte payloads (type code 0x08) are supported
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xFF) != 0x08 || ndims == 0 || ndims > 4) {
    throw Error(ErrorKind::BadMagic, path.string());
  }
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(ndims);
  if (bytes.size() < header) throw Error(ErrorKind::TruncatedFile, path.string() + ": short header");
  IdxData out;
  std::size_t total = 1;
  for (unsigned d = 0; d < ndims; ++d) {
    out.dims.push_back(read_be32(bytes.data() + 4 + 4 * d));
    total *= out.dims.back();
  }
  if (bytes.size() < header + total) {
    throw Error(ErrorKind::TruncatedFile, path.string() + ": expected " + std::to_string(total) +
                                              " payload bytes, found " +
                                              std::to_string(bytes.size() - header));
  }
  out.data.resize(total);
  for (std::size_t i = 0; i < total; ++i) out.data[i] = static_cast<float>(bytes[header + i]) / 255.0f;
  return out;
}

void write_idx(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
               std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  put_be32(out, 0x00000800u | static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_be32(out, d);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

std::vector<int> idx_labels(const IdxData& labels) {
  std::vector<int> out(labels.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<int>(std::lround(labels.data[i] * 255.0f));
  }
  return out;
}

// --- view regimes -------------------------------------------------------------

ViewSet make_quarter_views(std::span<const float> image) {
  if (image.size() != kImagePixels) {
    throw Error(ErrorKind::ShapeMismatch, "quarter views need a 28x28 image");
  }
  constexpr int half = kImageSide / 2;
  ViewSet vs{SubsetMask::full(4), std::vector<std::vector<float>>(4)};
  for (int q = 0; q < 4; ++q) {
    const int r0 = (q / 2) * half, c0 = (q % 2) * half;
    auto& v = vs.views[static_cast<std::size_t>(q)];
    v.reserve(half * half);
    for (int r = 0; r < half; ++r) {
      for (int c = 0; c < half; ++c) v.push_back(image[static_cast<std::size_t>((r0 + r) * kImageSide + c0 + c)]);
    }
  }
  return vs;
}

std::vector<float> assemble_quarters(const ViewSet& vs) {
  constexpr int half = kImageSide / 2;
  if (vs.views.size() != 4) throw Error(ErrorKind::ShapeMismatch, "need four quarter views");
  std::vector<float> image(kImagePixels);
  for (int q = 0; q < 4; ++q) {
    const auto& v = vs.views[static_cast<std::size_t>(q)];
    if (v.size() != half * half) throw Error(ErrorKind::ShapeMismatch, "quarter view size");
    const int r0 = (q / 2) * half, c0 = (q % 2) * half;
    for (int r = 0; r < half; ++r) {
      for (int c = 0; c < half; ++c) {
        image[static_cast<std::size_t>((r0 + r) * kImageSide + c0 + c)] = v[static_cast<std::size_t>(r * half + c)];
      }
    }
  }
  return image;
}

StreamViews make_stream_views(std::span<const float> image, std::size_t count, Rng& rng,
                              const StreamGeometry& geometry) {
  if (image.size() != kImagePixels) {
    throw Error(ErrorKind::ShapeMismatch, "stream views need a 28x28 image");
  }
  if (count < 1) throw Error(ErrorKind::InvalidLength, "stream needs at least one view");
  std::uniform_int_distribution<int> side(geometry.min_side, geometry.max_side);
  std::vector<std::uint8_t> revealed(kImagePixels, 0);
  StreamViews out;
  for (std::size_t t = 0; t < count; ++t) {
    for (int r = 0; r < geometry.rects_per_view; ++r) {
      const int h = side(rng), w = side(rng);
      const int top = std::uniform_int_distribution<int>(0, kImageSide - h)(rng);
      const int left = std::uniform_int_distribution<int>(0, kImageSide - w)(rng);
      for (int y = top; y < top + h; ++y) {
        for (int x = left; x < left + w; ++x) revealed[static_cast<std::size_t>(y * kImageSide + x)] = 1;
      }
    }
    std::vector<float> view(kImagePixels);
    for (std::size_t i = 0; i < kImagePixels; ++i) view[i] = revealed[i] ? image[i] : kMissingValue;
    out.views.push_back(std::move(view));
    out.revealed.push_back(revealed);
  }
  return out;
}

ViewSet make_hetero_views(std::span<const float> image, int label, Rng& rng) {
  if (image.size() != kImagePixels) {
    throw Error(ErrorKind::ShapeMismatch, "hetero views need a 28x28 image");
  }
  if (label < 0 || label > 9) throw Error(ErrorKind::ShapeMismatch, "label must be in 0..9");
  std::vector<float> onehot(10, 0.0f);
  onehot[static_cast<std::size_t>(label)] = 1.0f;
  std::vector<float> partial(image.begin(), image.end());
  const int half = std::uniform_int_distribution<int>(0, 3)(rng);  // left, right, top, bottom
  for (int y = 0; y < kImageSide; ++y) {
    for (int x = 0; x < kImageSide; ++x) {
      const bool hidden = (half == 0 && x < kImageSide / 2) || (half == 1 && x >= kImageSide / 2) ||
                          (half == 2 && y < kImageSide / 2) || (half == 3 && y >= kImageSide / 2);
      if (hidden) partial[static_cast<std::size_t>(y * kImageSide + x)] = kMissingValue;
    }
  }
  return ViewSet{SubsetMask::full(2), {std::move(onehot), std::move(partial)}};
}

ViewSequence sample_view_sequence(std::size_t num_views, std::size_t length, Rng& rng) {
  if (length < 1 || length > num_views) {
    throw Error(ErrorKind::InvalidLength, "sequence length " + std::to_string(length) +
                                              " outside [1, " + std::to_string(num_views) + "]");
  }
  std::vector<std::size_t> order(num_views);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<SubsetMask> masks;
  SubsetMask m = SubsetMask::empty(num_views);
  for (std::size_t t = 0; t < length; ++t) {
    m.set(order[t], true);
    masks.push_back(m);
  }
  return ViewSequence(std::move(masks));
}

ViewSequence prefix_view_sequence(std::size_t num_views, std::size_t length) {
  if (length < 1 || length > num_views) {
    throw Error(ErrorKind::InvalidLength, "sequence length outside [1, V]");
  }
  std::vector<SubsetMask> masks;
  SubsetMask m = SubsetMask::empty(num_views);
  for (std::size_t t = 0; t < length; ++t) {
    m.set(t, true);
    masks.push_back(m);
  }
  return ViewSequence(std::move(masks));
}

ViewSequence sample_task_sequence(const TaskSpec& spec, Rng& rng) {
  if (spec.random_order()) return sample_view_sequence(spec.num_views(), spec.sequence_length, rng);
  return prefix_view_sequence(spec.num_views(), spec.sequence_length);
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch) {
  if (count == 0) throw Error(ErrorKind::EmptyDataset, "cannot batch an empty dataset");
  if (batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch size must be positive");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = derive_rng(seed, {0x5348554646ull, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return batches;
}

Dataset sample_synthetic(const SyntheticSpec& spec, std::size_t count, Rng& rng) {
  spec.validate();
  Dataset ds;
  ds.spec = TaskSpec::synthetic();
  ds.examples.reserve(count);
  std::uniform_int_distribution<std::size_t> pick(0, spec.centers.size() - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = spec.centers[pick(rng)];
    const double y1 = c[0] + spec.stddev * gauss(rng);
    const double y2 = c[1] + spec.stddev * gauss(rng);
    double v1 = y1 > 0 ? 1.0 : -1.0;
    double v2 = y2 > 0 ? 1.0 : -1.0;
    if (spec.view_noise > 0) {
      v1 += spec.view_noise * gauss(rng);
      v2 += spec.view_noise * gauss(rng);
    }
    Example ex;
    ex.target = {static_cast<float>(y1), static_cast<float>(y2)};
    ex.viewset = ViewSet{SubsetMask::full(2), {{static_cast<float>(v1)}, {static_cast<float>(v2)}}};
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// --- MNIST tasks --------------------------------------------------------------

MnistFiles mnist_files(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::Train ? "train" : "t10k";
  return {dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte")};
}

Dataset make_task_dataset(const TaskSpec& spec, const IdxData& images, const IdxData* labels,
                          std::uint64_t seed, std::size_t limit) {
  spec.validate();
  if (spec.kind == TaskKind::Synthetic) {
    throw Error(ErrorKind::InvalidSpec, "synthetic data comes from sample_synthetic");
  }
  if (images.item_size() != kImagePixels) {
    throw Error(ErrorKind::ShapeMismatch, "expected 28x28 images");
  }
  std::size_t n = images.items();
  if (limit > 0) n = std::min(n, limit);
  if (n == 0) throw Error(ErrorKind::EmptyDataset, "no images");
  std::vector<int> label_values;
  if (labels) {
    label_values = idx_labels(*labels);
    if (label_values.size() < n) throw Error(ErrorKind::ShapeMismatch, "fewer labels than images");
  } else if (spec.kind == TaskKind::Hetero) {
    throw Error(ErrorKind::InvalidSpec, "hetero task needs labels");
  }
  Dataset ds;
  ds.spec = spec;
  ds.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto image = images.item(i);
    Example ex;
    ex.target.assign(image.begin(), image.end());
    ex.label = labels ? label_values[i] : -1;
    Rng rng = derive_rng(seed, {0x56494557ull, i});
    switch (spec.kind) {
      case TaskKind::Quarters: ex.viewset = make_quarter_views(image); break;
      case TaskKind::Stream: {
        auto sv = make_stream_views(image, spec.num_views(), rng, spec.geometry);
        ex.viewset = ViewSet{SubsetMask::full(spec.num_views()), std::move(sv.views)};
        break;
      }
      case TaskKind::Hetero: ex.viewset = make_hetero_views(image, ex.label, rng); break;
      case TaskKind::Synthetic: break;
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset load_mnist_task(const TaskSpec& spec, const std::filesystem::path& dir, Split split,
                        std::uint64_t seed, std::size_t limit) {
  const auto files = mnist_files(dir, split);
  IdxData images = parse_idx(files.images);
  if (spec.kind == TaskKind::Hetero) {
    IdxData labels = parse_idx(files.labels);
    return make_task_dataset(spec, images, &labels, seed, limit);
  }
  return make_task_dataset(spec, images, nullptr, seed, limit);
}

}  // namespace mvbigan
