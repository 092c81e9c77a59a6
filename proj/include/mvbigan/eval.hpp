#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvbigan/dataio.hpp"
#include "mvbigan/netdef.hpp"

namespace mvbigan {

using Sample = std::vector<float>;

// z ~ P_H(z | v(s,x)), y = G(z), eval mode. With zero_noise every draw is
// G(mu_H).
std::vector<Sample> sample_conditional(const ModelBundle<float>& model, const ViewSet& viewset,
                                       std::size_t M, Rng& rng, bool zero_noise = false);

// Mean over dimensions of the population variance across samples.
// Throws TooFewSamples for M < 2.
double variance_metric(const std::vector<Sample>& samples);

struct VarianceProfile {
  std::vector<double> step_means;             // length L
  std::vector<std::vector<double>> per_item;  // items x L
  std::vector<bool> monotone;                 // strictly decreasing per item
  double fraction_monotone = 0;
  double mean_ratio = 0;  // mean over items of var(L) / var(1)

  bool population_decreasing() const;
};

// One random view sequence per item; item i uses derive_rng(seed, {i}).
VarianceProfile variance_profile(const ModelBundle<float>& model, const Dataset& data,
                                 std::size_t L, std::size_t M, std::uint64_t seed,
                                 std::size_t max_items = 0);

// --- grids ---------------------------------------------------------------------

struct GridRow {
  Sample input;                // input visualization, side x side
  std::vector<Sample> cells;   // samples, side x side each
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

std::uint8_t to_gray(float v);  // clamp to [0,1], round half up

GrayImage compose_grid(const std::vector<GridRow>& rows, int side);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);
void render_grid(const std::vector<GridRow>& rows, const std::filesystem::path& path,
                 int side = kImageSide);

// Input cell for a masked viewset of the given task: quarters in place on
// mid-gray, the partial image for stream/hetero views.
Sample input_visualization(const TaskSpec& spec, const ViewSet& masked);

// Rows for one item along a view sequence: one row per step.
std::vector<GridRow> sequence_grid(const ModelBundle<float>& model, const TaskSpec& spec,
                                   const Example& ex, const ViewSequence& seq, std::size_t M,
                                   Rng& rng);

// --- synthetic oracle -------------------------------------------------------------

struct Moments2 {
  std::array<double, 2> mean{};
  std::array<double, 2> var{};
};

struct SyntheticCondition {
  std::array<int, 2> signs{};  // view values
  Moments2 both;               // both views given
  Moments2 view0_only;         // only view 0 (sign of y1)
  Moments2 view1_only;
  Moments2 analytic_both;
  Moments2 analytic_view0;
  Moments2 analytic_view1;

  double mean_error() const;           // max |both.mean - analytic_both.mean|
  std::array<double, 2> var_ratio() const;  // var(other view only, d) / var(both, d)
};

struct SyntheticReport {
  std::size_t samples = 0;
  std::vector<SyntheticCondition> conditions;

  std::string to_text() const;
  std::string to_json() const;
};

// Analytic conditional moments of the equal-weight mixture given view signs
// (0 = view absent).
Moments2 synthetic_analytic(const SyntheticSpec& spec, int sign0, int sign1);

SyntheticReport synthetic_report(const ModelBundle<float>& model, const SyntheticSpec& spec,
                                 std::size_t M, std::uint64_t seed);

}  // namespace mvbigan
