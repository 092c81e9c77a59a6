#include "mvbigan/core.hpp"

#include <algorithm>
#include <cmath>

namespace mvbigan {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NonBinaryEntry: return "NonBinaryEntry";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidLength: return "InvalidLength";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::NotNested: return "NotNested";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void validate_mask(std::span<const int> bits, std::size_t num_views) {
  if (bits.size() != num_views) {
    throw Error(ErrorKind::LengthMismatch,
                "mask has " + std::to_string(bits.size()) + " entries, expected " +
                    std::to_string(num_views));
  }
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k] != 0 && bits[k] != 1) {
      throw Error(ErrorKind::NonBinaryEntry,
                  "mask entry " + std::to_string(k) + " is " + std::to_string(bits[k]));
    }
  }
}

SubsetMask::SubsetMask(std::span<const int> bits, std::size_t num_views) {
  validate_mask(bits, num_views);
  bits_.assign(bits.begin(), bits.end());
}

SubsetMask::SubsetMask(std::initializer_list<int> bits)
    : SubsetMask(std::span<const int>(bits.begin(), bits.size()), bits.size()) {}

SubsetMask SubsetMask::full(std::size_t num_views) {
  SubsetMask m;
  m.bits_.assign(num_views, 1);
  return m;
}

SubsetMask SubsetMask::empty(std::size_t num_views) {
  SubsetMask m;
  m.bits_.assign(num_views, 0);
  return m;
}

std::size_t SubsetMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::string SubsetMask::str() const {
  std::string s;
  for (auto b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

bool is_nested(const SubsetMask& s, const SubsetMask& s_prime) {
  if (s.size() != s_prime.size()) {
    throw Error(ErrorKind::LengthMismatch, "masks of different length");
  }
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] && !s_prime[k]) return false;
  }
  return true;
}

ViewSet ViewSet::with_mask(const SubsetMask& m) const {
  if (m.size() != views.size()) {
    throw Error(ErrorKind::LengthMismatch, "mask length does not match view count");
  }
  ViewSet out{m, views};
  for (std::size_t k = 0; k < views.size(); ++k) {
    if (!m[k]) std::fill(out.views[k].begin(), out.views[k].end(), 0.0f);
  }
  return out;
}

bool all_finite(std::span<const float> xs) {
  return std::all_of(xs.begin(), xs.end(), [](float x) { return std::isfinite(x); });
}

void validate_viewset(const ViewSet& vs, std::span<const ViewShape> shapes) {
  if (vs.mask.size() != shapes.size() || vs.views.size() != shapes.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                "viewset has " + std::to_string(vs.views.size()) + " views, task declares " +
                    std::to_string(shapes.size()));
  }
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto& v = vs.views[k];
    if (v.size() != shapes[k].size) {
      throw Error(ErrorKind::ShapeMismatch, "view " + std::to_string(k) + " has size " +
                                                std::to_string(v.size()) + ", expected " +
                                                std::to_string(shapes[k].size));
    }
    if (!all_finite(v)) {
      throw Error(ErrorKind::NonFinite, "view " + std::to_string(k) + " has non-finite values");
    }
    if (shapes[k].unit_interval &&
        std::any_of(v.begin(), v.end(), [](float x) { return x < 0.0f || x > 1.0f; })) {
      throw Error(ErrorKind::ShapeMismatch, "image view " + std::to_string(k) + " leaves [0,1]");
    }
  }
}

Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (auto s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

ViewSequence::ViewSequence(std::vector<SubsetMask> masks) : masks_(std::move(masks)) {
  for (std::size_t t = 1; t < masks_.size(); ++t) {
    if (!is_nested(masks_[t - 1], masks_[t])) {
      throw Error(ErrorKind::NotNested, "mask " + masks_[t - 1].str() + " is not contained in " +
                                            masks_[t].str());
    }
  }
}

}  // namespace mvbigan
