#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <utility>

#include "affield/grid.hpp"

using namespace affield;

TEST(LabelGrid, RejectsOutOfRangeLabels) {
  EXPECT_THROW(LabelGrid(2, 2, 2, {0, 1, 2, 0}), ValidationError);
  EXPECT_THROW(LabelGrid(2, 2, 2, {0, 1, -1, 0}), ValidationError);
  EXPECT_THROW(LabelGrid(2, 2, 2, {0, 1, 1}), ValidationError);
  EXPECT_THROW(LabelGrid(0, 2, 2, {}), ValidationError);
  EXPECT_NO_THROW(LabelGrid(2, 2, 2, {0, 1, 1, 0}));
}

TEST(ProbGrid, RowsMustSumToOne) {
  EXPECT_THROW(ProbGrid(1, 1, 2, {0.5, 0.6}), ValidationError);
  EXPECT_THROW(ProbGrid(1, 1, 2, {1.5, -0.5}), ValidationError);
  EXPECT_NO_THROW(ProbGrid(1, 1, 2, {0.3, 0.7}));
}

TEST(ProbGrid, SoftmaxOfLogits) {
  const auto p = ProbGrid::from_logits(1, 2, 2, std::vector<double>{0.0, 0.0, 1000.0, 0.0});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(1, 0), 1.0);
  EXPECT_EQ(argmax(p), LabelGrid(1, 2, 2, {0, 0}));
}

TEST(DenseGrid, RejectsNonFinite) {
  EXPECT_THROW(DenseGrid(1, 1, 1, {std::nan("")}), ValidationError);
}

TEST(EmbedGrid, NormalizesAndHandlesZeroVectors) {
  const EmbedGrid e(DenseGrid(1, 2, 2, {3.0, 4.0, 0.0, 0.0}));
  EXPECT_DOUBLE_EQ(e.vector(0)[0], 0.6);
  EXPECT_DOUBLE_EQ(e.vector(0)[1], 0.8);
  EXPECT_DOUBLE_EQ(e.norm(0), 5.0);
  EXPECT_DOUBLE_EQ(e.vector(1)[0], 1.0);
  EXPECT_DOUBLE_EQ(e.vector(1)[1], 0.0);
}

TEST(KernelSpec, SortsAndValidates) {
  const KernelSpec ks({7, 3, 5});
  EXPECT_EQ(ks[0], 3);
  EXPECT_EQ(ks.largest(), 7);
  EXPECT_EQ(ks.index_of(5), 1u);
  EXPECT_THROW(KernelSpec(std::vector<int>{}), ValidationError);
  EXPECT_THROW(KernelSpec({3, 3}), ValidationError);
  EXPECT_THROW(KernelSpec({4}), ValidationError);
  EXPECT_THROW(KernelSpec({1}), ValidationError);
}

TEST(MakePairs, ThreeByThreeHasFortyPairs) {
  // Corners see 3 neighbors, edges 5, the center 8: 4*3 + 4*5 + 8.
  EXPECT_EQ(make_pairs(3, 3, 3).pairs.size(), 40u);
}

TEST(MakePairs, SinglePixelHasNoPairs) {
  EXPECT_TRUE(make_pairs(1, 1, 3).pairs.empty());
  EXPECT_TRUE(make_pairs(1, 1, 7).pairs.empty());
}

TEST(MakePairs, RejectsEvenOrTinyKernels) {
  EXPECT_THROW(make_pairs(4, 4, 4), ValidationError);
  EXPECT_THROW(make_pairs(4, 4, 1), ValidationError);
}

TEST(MakePairs, MatchesEnumerationAndIsSymmetric) {
  for (int h = 1; h <= 8; ++h) {
    for (int w = 1; w <= 8; ++w) {
      for (int k : {3, 5, 7}) {
        const auto ps = make_pairs(h, w, k);
        std::set<std::pair<std::uint32_t, std::uint32_t>> got;
        for (const auto& p : ps.pairs) got.emplace(p.center, p.neighbor);
        ASSERT_EQ(got.size(), ps.pairs.size()) << "duplicates at " << h << "x" << w << " k=" << k;

        std::set<std::pair<std::uint32_t, std::uint32_t>> want;
        const int r = k / 2;
        for (int a = 0; a < h * w; ++a)
          for (int b = 0; b < h * w; ++b) {
            if (a == b) continue;
            if (std::abs(a / w - b / w) <= r && std::abs(a % w - b % w) <= r) want.emplace(a, b);
          }
        ASSERT_EQ(got, want) << h << "x" << w << " k=" << k;
        for (const auto& [a, b] : got) ASSERT_TRUE(got.count({b, a}));
      }
    }
  }
}

TEST(OneHot, RoundTripsThroughArgmax) {
  const LabelGrid g(2, 3, 4, {0, 1, 2, 3, 2, 1});
  EXPECT_EQ(argmax(one_hot(g)), g);
}
