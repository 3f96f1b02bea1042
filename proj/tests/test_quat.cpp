#include <gtest/gtest.h>

#include <random>

#include "surfnet/error.hpp"
#include "surfnet/quat.hpp"

using namespace surfnet;

namespace {

Quaternion random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return {g(rng), g(rng), g(rng), g(rng)};
}

double max_diff(const QuatBlock& x, const QuatBlock& y) {
  double m = 0.0;
  for (int i = 0; i < 16; ++i) m = std::max(m, std::abs(x.m[i] - y.m[i]));
  return m;
}

constexpr Quaternion kI{0, 1, 0, 0};
constexpr Quaternion kJ{0, 0, 1, 0};
constexpr Quaternion kK{0, 0, 0, 1};
constexpr Quaternion kOne{1, 0, 0, 0};

}  // namespace

TEST(Quat, FromVector3) {
  EXPECT_EQ(from_vector3({0, 0, 0}), (Quaternion{}));
  EXPECT_EQ(from_vector3({1, 0, 0}), kI);
  EXPECT_EQ(from_vector3({-1, 1, 0}), (Quaternion{0, -1, 1, 0}));
}

TEST(Quat, UnitRelations) {
  EXPECT_EQ(qmul(kI, kJ), kK);
  EXPECT_EQ(qmul(kJ, kK), kI);
  EXPECT_EQ(qmul(kK, kI), kJ);
  EXPECT_EQ(qmul(kJ, kI), -1.0 * kK);
  const Quaternion minus_one{-1, 0, 0, 0};
  EXPECT_EQ(qmul(kI, kI), minus_one);
  EXPECT_EQ(qmul(kJ, kJ), minus_one);
  EXPECT_EQ(qmul(kK, kK), minus_one);
  EXPECT_EQ(qmul(qmul(kI, kJ), kK), minus_one);
}

TEST(Quat, IdentityAndConjugate) {
  std::mt19937_64 rng(1);
  const Quaternion q = random_quat(rng);
  EXPECT_EQ(qmul(q, kOne), q);
  EXPECT_EQ(qmul(kOne, q), q);
  EXPECT_EQ(conjugate(kI), (Quaternion{0, -1, 0, 0}));
  EXPECT_EQ(conjugate(Quaternion{2.5, 0, 0, 0}), (Quaternion{2.5, 0, 0, 0}));
  for (int t = 0; t < 100; ++t) {
    const Quaternion p = random_quat(rng);
    EXPECT_EQ(to_block(conjugate(p)), block_transpose(to_block(p)));
  }
}

TEST(Quat, BlockLayout) {
  const QuatBlock one = to_block(kOne);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) EXPECT_EQ(one(r, c), r == c ? 1.0 : 0.0);
  }
  const QuatBlock i = to_block(kI);
  EXPECT_EQ(i(1, 0), 1.0);
  EXPECT_EQ(i(0, 1), -1.0);
}

TEST(Quat, BlockActsAsLeftMultiplication) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const Quaternion p = random_quat(rng);
    const Quaternion q = random_quat(rng);
    const QuatBlock b = to_block(p);
    const double v[4] = {q.a, q.b, q.c, q.d};
    double out[4] = {};
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) out[r] += b(r, c) * v[c];
    }
    const Quaternion pq = qmul(p, q);
    EXPECT_NEAR(out[0], pq.a, 1e-12);
    EXPECT_NEAR(out[1], pq.b, 1e-12);
    EXPECT_NEAR(out[2], pq.c, 1e-12);
    EXPECT_NEAR(out[3], pq.d, 1e-12);
  }
}

TEST(Quat, HomomorphismAndNorm) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const Quaternion p = random_quat(rng);
    const Quaternion q = random_quat(rng);
    EXPECT_LT(max_diff(block_multiply(to_block(p), to_block(q)), to_block(qmul(p, q))), 1e-12);
    const double lhs = qnorm(qmul(p, q));
    const double rhs = qnorm(p) * qnorm(q);
    EXPECT_NEAR(lhs, rhs, 1e-12 * rhs);
  }
}

TEST(Quat, FromBlockRoundTrip) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    const Quaternion q = random_quat(rng);
    EXPECT_EQ(from_block(to_block(q)), q);
  }
}

TEST(Quat, InvalidBlock) {
  QuatBlock b = to_block({1, 2, 3, 4});
  EXPECT_TRUE(block_is_valid(b));
  b(2, 3) += 1e-6;
  EXPECT_FALSE(block_is_valid(b));
  EXPECT_THROW(from_block(b), InvalidBlock);
  QuatBlock ok = to_block({1, 2, 3, 4});
  ok(0, 1) += 5e-13;
  EXPECT_NO_THROW(from_block(ok));
}

TEST(Quat, LanesSplitJoin) {
  const std::vector<double> f{1, 2, 3, 4, 5, 6, 7, 8};
  const auto lanes = split_lanes(f);
  ASSERT_EQ(lanes.size(), 2u);
  EXPECT_EQ(lanes[1], (Quaternion{5, 6, 7, 8}));
  EXPECT_EQ(join_lanes(lanes), f);
  EXPECT_THROW(split_lanes(std::vector<double>{1, 2, 3}), NonQuadChannels);
}
