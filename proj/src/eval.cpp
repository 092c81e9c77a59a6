#include "mvbigan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mvbigan {

namespace {

// Mean over rows of the population variance across the columns of `s`.
double block_variance(const Eigen::Ref<const Mat<double>>& s) {
  const Vec<double> mean = s.rowwise().mean();
  return ((s.colwise() - mean).array().square().rowwise().mean()).mean();
}

Mat<float> latent_draws(const LatentBatch<float>& h, Eigen::Index col, std::size_t M, Rng& rng,
                        bool zero_noise) {
  const Eigen::Index Z = h.mu.rows();
  Mat<float> z(Z, static_cast<Eigen::Index>(M));
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vec<float> sigma = (0.5f * h.log_var.col(col).array()).exp().matrix();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < Z; ++i) {
      const float eps = zero_noise ? 0.0f : static_cast<float>(normal(rng));
      z(i, j) = h.mu(i, col) + sigma(i) * eps;
    }
  }
  return z;
}

}  // namespace

std::vector<Sample> sample_conditional(const ModelBundle<float>& model, const ViewSet& viewset,
                                       std::size_t M, Rng& rng, bool zero_noise) {
  if (M < 1) throw Error(ErrorKind::TooFewSamples, "need at least one sample");
  const ViewBatch<float> in = to_batch<float>({viewset});
  const LatentBatch<float> h = encode_views(model, in, Mode::Eval);
  const Mat<float> y = generate(model, latent_draws(h, 0, M, rng, zero_noise), Mode::Eval);
  return to_columns(y);
}

double variance_metric(const std::vector<Sample>& samples) {
  if (samples.size() < 2) {
    throw Error(ErrorKind::TooFewSamples, "variance needs at least two samples");
  }
  const std::size_t n = samples[0].size();
  Mat<double> s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (samples[j].size() != n) throw Error(ErrorKind::ShapeMismatch, "samples differ in size");
    for (std::size_t i = 0; i < n; ++i) {
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[j][i];
    }
  }
  return block_variance(s);
}

bool VarianceProfile::population_decreasing() const {
  for (std::size_t t = 1; t < step_means.size(); ++t) {
    if (!(step_means[t] < step_means[t - 1])) return false;
  }
  return true;
}

VarianceProfile variance_profile(const ModelBundle<float>& model, const Dataset& data,
                                 std::size_t L, std::size_t M, std::uint64_t seed,
                                 std::size_t max_items) {
  if (M < 2) throw Error(ErrorKind::TooFewSamples, "variance needs at least two samples");
  TaskSpec spec = data.spec;
  spec.sequence_length = L;
  spec.validate();
  std::size_t items = data.size();
  if (max_items > 0) items = std::min(items, max_items);
  if (items == 0) throw Error(ErrorKind::EmptyDataset, "no items to evaluate");

  VarianceProfile p;
  p.step_means.assign(L, 0.0);
  double ratio_sum = 0;
  std::size_t ratio_count = 0, monotone_count = 0;
  for (std::size_t i = 0; i < items; ++i) {
    Rng rng = derive_rng(seed, {i});
    const Example& ex = data.examples[i];
    const ViewSequence seq = sample_task_sequence(spec, rng);
    std::vector<ViewSet> sets;
    for (std::size_t t = 0; t < L; ++t) sets.push_back(ex.viewset.with_mask(seq[t]));
    const LatentBatch<float> h = encode_views(model, to_batch<float>(sets), Mode::Eval);
    Mat<float> z(h.mu.rows(), static_cast<Eigen::Index>(L * M));
    for (std::size_t t = 0; t < L; ++t) {
      z.middleCols(static_cast<Eigen::Index>(t * M), static_cast<Eigen::Index>(M)) =
          latent_draws(h, static_cast<Eigen::Index>(t), M, rng, false);
    }
    const Mat<double> y = generate(model, z, Mode::Eval).cast<double>();
    std::vector<double> v(L);
    bool mono = true;
    for (std::size_t t = 0; t < L; ++t) {
      v[t] = block_variance(y.middleCols(static_cast<Eigen::Index>(t * M), static_cast<Eigen::Index>(M)));
      p.step_means[t] += v[t] / static_cast<double>(items);
      if (t > 0 && !(v[t] < v[t - 1])) mono = false;
    }
    if (v[0] > 0) {
      ratio_sum += v[L - 1] / v[0];
      ++ratio_count;
    }
    monotone_count += mono ? 1 : 0;
    p.monotone.push_back(mono);
    p.per_item.push_back(std::move(v));
  }
  p.fraction_monotone = static_cast<double>(monotone_count) / static_cast<double>(items);
  p.mean_ratio = ratio_count ? ratio_sum / static_cast<double>(ratio_count) : 0.0;
  return p;
}

// --- grids ---------------------------------------------------------------------

std::uint8_t to_gray(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

GrayImage compose_grid(const std::vector<GridRow>& rows, int side) {
  if (rows.empty()) throw Error(ErrorKind::ShapeMismatch, "grid has no rows");
  const std::size_t cells = rows[0].cells.size() + 1;
  const std::size_t area = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
  GrayImage img;
  img.width = static_cast<int>(cells) * side;
  img.height = static_cast<int>(rows.size()) * side;
  img.pixels.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].cells.size() + 1 != cells) {
      throw Error(ErrorKind::ShapeMismatch, "grid rows have different lengths");
    }
    for (std::size_t c = 0; c < cells; ++c) {
      const Sample& cell = c == 0 ? rows[r].input : rows[r].cells[c - 1];
      if (cell.size() != area) throw Error(ErrorKind::ShapeMismatch, "grid cell has wrong size");
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const std::size_t px = (r * static_cast<std::size_t>(side) + static_cast<std::size_t>(y)) *
                                     static_cast<std::size_t>(img.width) +
                                 c * static_cast<std::size_t>(side) + static_cast<std::size_t>(x);
          img.pixels[px] = to_gray(cell[static_cast<std::size_t>(y * side + x)]);
        }
      }
    }
  }
  return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
      } else {
        t.push_back(ch);
      }
    }
    return t;
  };
  if (token() != "P5") throw Error(ErrorKind::BadMagic, path.string() + " is not a binary PGM");
  GrayImage img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw Error(ErrorKind::BadMagic, "maxval must be 255");
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::TruncatedFile, path.string() + ": bad PGM header");
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw Error(ErrorKind::TruncatedFile, path.string() + ": short pixel data");
  }
  return img;
}

void render_grid(const std::vector<GridRow>& rows, const std::filesystem::path& path, int side) {
  write_pgm(compose_grid(rows, side), path);
}

Sample input_visualization(const TaskSpec& spec, const ViewSet& masked) {
  Sample canvas(kImagePixels, kMissingValue);
  switch (spec.kind) {
    case TaskKind::Quarters: {
      constexpr int half = kImageSide / 2;
      for (int q = 0; q < 4; ++q) {
        if (!masked.mask[static_cast<std::size_t>(q)]) continue;
        const auto& v = masked.views[static_cast<std::size_t>(q)];
        const int r0 = (q / 2) * half, c0 = (q % 2) * half;
        for (int r = 0; r < half; ++r) {
          for (int c = 0; c < half; ++c) {
            canvas[static_cast<std::size_t>((r0 + r) * kImageSide + c0 + c)] =
                v[static_cast<std::size_t>(r * half + c)];
          }
        }
      }
      break;
    }
    case TaskKind::Stream:
      for (std::size_t k = masked.views.size(); k-- > 0;) {
        if (masked.mask[k]) {
          canvas = masked.views[k];
          break;
        }
      }
      break;
    case TaskKind::Hetero:
      if (masked.mask[1]) canvas = masked.views[1];
      break;
    case TaskKind::Synthetic:
      throw Error(ErrorKind::InvalidSpec, "synthetic views have no image form");
  }
  return canvas;
}

std::vector<GridRow> sequence_grid(const ModelBundle<float>& model, const TaskSpec& spec,
                                   const Example& ex, const ViewSequence& seq, std::size_t M,
                                   Rng& rng) {
  std::vector<GridRow> rows;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const ViewSet masked = ex.viewset.with_mask(seq[t]);
    rows.push_back({input_visualization(spec, masked), sample_conditional(model, masked, M, rng)});
  }
  return rows;
}

// --- synthetic oracle -------------------------------------------------------------

double SyntheticCondition::mean_error() const {
  return std::max(std::abs(both.mean[0] - analytic_both.mean[0]),
                  std::abs(both.mean[1] - analytic_both.mean[1]));
}

std::array<double, 2> SyntheticCondition::var_ratio() const {
  // dim 0 is orthogonal to view 1, dim 1 to view 0
  return {view1_only.var[0] / both.var[0], view0_only.var[1] / both.var[1]};
}

Moments2 synthetic_analytic(const SyntheticSpec& spec, int sign0, int sign1) {
  std::vector<std::array<double, 2>> comps;
  for (const auto& c : spec.centers) {
    if (sign0 != 0 && (c[0] > 0 ? 1 : -1) != sign0) continue;
    if (sign1 != 0 && (c[1] > 0 ? 1 : -1) != sign1) continue;
    comps.push_back(c);
  }
  Moments2 m;
  if (comps.empty()) return m;
  const double w = 1.0 / static_cast<double>(comps.size());
  for (int d = 0; d < 2; ++d) {
    double mean = 0, sq = 0;
    for (const auto& c : comps) {
      mean += w * c[static_cast<std::size_t>(d)];
      sq += w * c[static_cast<std::size_t>(d)] * c[static_cast<std::size_t>(d)];
    }
    m.mean[static_cast<std::size_t>(d)] = mean;
    m.var[static_cast<std::size_t>(d)] = sq - mean * mean + spec.stddev * spec.stddev;
  }
  return m;
}

namespace {

Moments2 moments_of(const std::vector<Sample>& s) {
  Moments2 m;
  const double n = static_cast<double>(s.size());
  for (std::size_t d = 0; d < 2; ++d) {
    double mean = 0;
    for (const auto& x : s) mean += x[d];
    mean /= n;
    double var = 0;
    for (const auto& x : s) var += (x[d] - mean) * (x[d] - mean);
    m.mean[d] = mean;
    m.var[d] = var / n;
  }
  return m;
}

nlohmann::json moments_json(const Moments2& m) {
  return {{"mean", {m.mean[0], m.mean[1]}}, {"var", {m.var[0], m.var[1]}}};
}

}  // namespace

SyntheticReport synthetic_report(const ModelBundle<float>& model, const SyntheticSpec& spec,
                                 std::size_t M, std::uint64_t seed) {
  if (M < 2) throw Error(ErrorKind::TooFewSamples, "report needs at least two samples");
  if (model.arch.num_views() != 2 || model.arch.output_size != 2) {
    throw Error(ErrorKind::ShapeMismatch, "model was not built for the synthetic task");
  }
  SyntheticReport rep;
  rep.samples = M;
  std::uint64_t cond = 0;
  for (int s0 : {1, -1}) {
    for (int s1 : {1, -1}) {
      SyntheticCondition c;
      c.signs = {s0, s1};
      const ViewSet full{SubsetMask::full(2),
                         {{static_cast<float>(s0)}, {static_cast<float>(s1)}}};
      Rng r0 = derive_rng(seed, {cond, 0});
      Rng r1 = derive_rng(seed, {cond, 1});
      Rng r2 = derive_rng(seed, {cond, 2});
      c.both = moments_of(sample_conditional(model, full, M, r0));
      c.view0_only = moments_of(sample_conditional(model, full.with_mask(SubsetMask{1, 0}), M, r1));
      c.view1_only = moments_of(sample_conditional(model, full.with_mask(SubsetMask{0, 1}), M, r2));
      c.analytic_both = synthetic_analytic(spec, s0, s1);
      c.analytic_view0 = synthetic_analytic(spec, s0, 0);
      c.analytic_view1 = synthetic_analytic(spec, 0, s1);
      rep.conditions.push_back(c);
      ++cond;
    }
  }
  return rep;
}

std::string SyntheticReport::to_text() const {
  std::ostringstream out;
  char buf[256];
  auto line = [&](const char* label, const Moments2& m, const Moments2& a) {
    std::snprintf(buf, sizeof buf,
                  "  %-10s mean = (%+.4f, %+.4f)  var = (%.4f, %.4f)  analytic mean = (%+.4f, "
                  "%+.4f)  var = (%.4f, %.4f)\n",
                  label, m.mean[0], m.mean[1], m.var[0], m.var[1], a.mean[0], a.mean[1],
                  a.var[0], a.var[1]);
    out << buf;
  };
  out << "samples = " << samples << "\n";
  for (const auto& c : conditions) {
    out << "condition = (" << (c.signs[0] > 0 ? "+1" : "-1") << ", "
        << (c.signs[1] > 0 ? "+1" : "-1") << ")\n";
    line("both", c.both, c.analytic_both);
    line("view0", c.view0_only, c.analytic_view0);
    line("view1", c.view1_only, c.analytic_view1);
    const auto r = c.var_ratio();
    std::snprintf(buf, sizeof buf, "  mean_error = %.4f  var_ratio = (%.2f, %.2f)\n",
                  c.mean_error(), r[0], r[1]);
    out << buf;
  }
  return out.str();
}

std::string SyntheticReport::to_json() const {
  nlohmann::json j;
  j["samples"] = samples;
  j["conditions"] = nlohmann::json::array();
  for (const auto& c : conditions) {
    const auto r = c.var_ratio();
    j["conditions"].push_back({{"signs", {c.signs[0], c.signs[1]}},
                               {"both", moments_json(c.both)},
                               {"view0", moments_json(c.view0_only)},
                               {"view1", moments_json(c.view1_only)},
                               {"analytic_both", moments_json(c.analytic_both)},
                               {"analytic_view0", moments_json(c.analytic_view0)},
                               {"analytic_view1", moments_json(c.analytic_view1)},
                               {"mean_error", c.mean_error()},
                               {"var_ratio", {r[0], r[1]}}});
  }
  return j.dump(2);
}

}  // namespace mvbigan
