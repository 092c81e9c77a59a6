#include <gtest/gtest.h>

#include "mvbigan/core.hpp"

using namespace mvbigan;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidConfig;
}

SubsetMask random_mask(std::size_t V, Rng& rng) {
  SubsetMask m = SubsetMask::empty(V);
  for (std::size_t k = 0; k < V; ++k) m.set(k, rng() & 1);
  return m;
}

}  // namespace

TEST(Mask, ValidateAcceptsWellFormed) {
  const std::vector<int> bits{1, 0, 1, 0};
  EXPECT_NO_THROW(validate_mask(bits, 4));
  EXPECT_EQ(SubsetMask(bits, 4).count(), 2u);
}

TEST(Mask, ValidateRejectsWrongLength) {
  const std::vector<int> bits{1, 0};
  EXPECT_EQ(kind_of([&] { validate_mask(bits, 4); }), ErrorKind::LengthMismatch);
}

TEST(Mask, ValidateRejectsNonBinary) {
  const std::vector<int> bits{1, 2, 0, 0};
  EXPECT_EQ(kind_of([&] { validate_mask(bits, 4); }), ErrorKind::NonBinaryEntry);
  EXPECT_EQ(kind_of([&] { SubsetMask(bits, 4); }), ErrorKind::NonBinaryEntry);
}

TEST(Mask, NestedExamples) {
  EXPECT_TRUE(is_nested(SubsetMask{1, 0, 0, 0}, SubsetMask{1, 0, 1, 0}));
  EXPECT_FALSE(is_nested(SubsetMask{1, 1, 0, 0}, SubsetMask{0, 1, 1, 0}));
  EXPECT_TRUE(is_nested(SubsetMask{0, 0, 0, 0}, SubsetMask{0, 0, 0, 0}));
  EXPECT_EQ(kind_of([] { is_nested(SubsetMask{1, 0}, SubsetMask{1, 0, 0}); }),
            ErrorKind::LengthMismatch);
}

TEST(Mask, NestingIsReflexiveAndTransitive) {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const SubsetMask a = random_mask(5, rng), b = random_mask(5, rng), c = random_mask(5, rng);
    EXPECT_TRUE(is_nested(a, a));
    if (is_nested(a, b) && is_nested(b, c)) EXPECT_TRUE(is_nested(a, c));
  }
}

TEST(Mask, StringForm) { EXPECT_EQ((SubsetMask{1, 0, 1}).str(), "101"); }

TEST(Sequence, RejectsNonNested) {
  EXPECT_NO_THROW(ViewSequence({SubsetMask{1, 0}, SubsetMask{1, 1}}));
  EXPECT_EQ(kind_of([] { ViewSequence({SubsetMask{1, 0}, SubsetMask{0, 1}}); }),
            ErrorKind::NotNested);
}

TEST(ViewSetTest, WithMaskZeroesMissingViews) {
  const ViewSet vs{SubsetMask::full(2), {{0.5f, 0.25f}, {1.0f}}};
  const ViewSet m = vs.with_mask(SubsetMask{0, 1});
  EXPECT_EQ(m.views[0], (std::vector<float>{0.0f, 0.0f}));
  EXPECT_EQ(m.views[1], (std::vector<float>{1.0f}));
  EXPECT_FALSE(m.mask[0]);
}

TEST(ViewSetTest, Validation) {
  const std::vector<ViewShape> shapes{{2, true}, {1, false}};
  EXPECT_NO_THROW(validate_viewset(ViewSet{SubsetMask::full(2), {{0.0f, 1.0f}, {-3.0f}}}, shapes));
  EXPECT_EQ(kind_of([&] { validate_viewset(ViewSet{SubsetMask::full(2), {{0.0f}, {1.0f}}}, shapes); }),
            ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([&] {
              validate_viewset(ViewSet{SubsetMask::full(2), {{0.0f, 1.5f}, {1.0f}}}, shapes);
            }),
            ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([&] {
              validate_viewset(ViewSet{SubsetMask::full(2), {{0.0f, NAN}, {1.0f}}}, shapes);
            }),
            ErrorKind::NonFinite);
}

TEST(RngTest, DerivedStreamsAreDeterministicAndDistinct) {
  Rng a = derive_rng(7, {1, 2}), b = derive_rng(7, {1, 2}), c = derive_rng(7, {1, 3});
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
}
