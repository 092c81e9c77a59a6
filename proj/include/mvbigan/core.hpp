#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mvbigan {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class ErrorKind {
  LengthMismatch,
  NonBinaryEntry,
  ShapeMismatch,
  NonFinite,
  NonFiniteActivation,
  InvalidConfig,
  EmptySequence,
  BadMagic,
  TruncatedFile,
  IoError,
  InvalidLength,
  EmptyDataset,
  InvalidSpec,
  VersionMismatch,
  CorruptCheckpoint,
  NonFiniteLoss,
  TooFewSamples,
  NotNested,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Index vector s in {0,1}^V marking the available views.
class SubsetMask {
 public:
  SubsetMask() = default;
  // Throws LengthMismatch / NonBinaryEntry.
  SubsetMask(std::span<const int> bits, std::size_t num_views);
  SubsetMask(std::initializer_list<int> bits);

  static SubsetMask full(std::size_t num_views);
  static SubsetMask empty(std::size_t num_views);

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t k) const { return bits_[k] != 0; }
  void set(std::size_t k, bool on) { bits_.at(k) = on ? 1 : 0; }
  std::size_t count() const;
  std::string str() const;

  bool operator==(const SubsetMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

void validate_mask(std::span<const int> bits, std::size_t num_views);

// True iff every view in `s` is also in `s_prime`.
bool is_nested(const SubsetMask& s, const SubsetMask& s_prime);

struct ViewShape {
  std::size_t size = 0;
  bool unit_interval = false;  // image views live in [0,1]
};

// Dense views with zero placeholders for masked-out entries.
struct ViewSet {
  SubsetMask mask;
  std::vector<std::vector<float>> views;

  // Copy with `mask` applied; masked-out views become zero placeholders.
  ViewSet with_mask(const SubsetMask& m) const;
};

void validate_viewset(const ViewSet& vs, std::span<const ViewShape> shapes);

template <typename T>
struct LatentGaussian {
  Vec<T> mu;
  Vec<T> log_var;

  Eigen::Index dim() const { return mu.size(); }
};

struct Example {
  std::vector<float> target;
  ViewSet viewset;
  int label = -1;
};

class ViewSequence {
 public:
  ViewSequence() = default;
  // Throws NotNested when consecutive masks are not nested.
  explicit ViewSequence(std::vector<SubsetMask> masks);

  std::size_t length() const { return masks_.size(); }
  const SubsetMask& operator[](std::size_t t) const { return masks_[t]; }
  const std::vector<SubsetMask>& masks() const { return masks_; }

 private:
  std::vector<SubsetMask> masks_;
};

bool all_finite(std::span<const float> xs);

using Rng = std::mt19937_64;

// Independent stream for (seed, tag...), e.g. derive_rng(seed, {epoch}).
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

}  // namespace mvbigan
