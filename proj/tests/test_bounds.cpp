#include <gtest/gtest.h>

#include <cmath>

#include "recloss/bounds.hpp"
#include "recloss/verify.hpp"

using namespace recloss;

TEST(BoundChain, SymmetricPointTwoNegatives) {
  const ScoreBundle b{0.7, {0.7, 0.7}, {}};
  const auto r = verify_bound_chain(b);
  const double expected[6] = {std::log(1.5), 0.0, 0.0, std::log(2.0), 2 * std::log(2.0), std::log(2.0)};
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(r.slack[k], expected[k], 1e-12) << BoundChainReport::names[k];
}

TEST(BoundChain, RandomBundlesHold) {
  const auto r = bound_chain_suite(10000, 3, 64);
  EXPECT_TRUE(r.pass()) << r.worst;
}

TEST(BoundChain, EachSlackNonNegativeIndividually) {
  Rng rng(8);
  std::array<double, 6> worst;
  worst.fill(1e300);
  for (int t = 0; t < 5000; ++t) {
    const auto b = random_bundle(rng, 1 + t % 64, 0, -10, 10);
    const auto r = verify_bound_chain(b);
    for (int k = 0; k < 6; ++k) worst[k] = std::min(worst[k], r.slack[k]);
  }
  for (int k = 0; k < 6; ++k) EXPECT_GE(worst[k], -kBoundTolerance) << BoundChainReport::names[k];
}

TEST(BoundChain, SaturatedPositive) {
  for (double pos : {50.0, 500.0, 5000.0}) {
    const auto r = verify_bound_chain(ScoreBundle{pos, {0.0, 1.0, -3.0}, {}});
    EXPECT_TRUE(r.holds()) << pos;
  }
}

namespace {

/// Mine with its sign flipped, standing in for a broken implementation.
struct SignFlippedMine {
  double infonce(const ScoreBundle& b) const { return recloss::infonce(b).value; }
  double mine(const ScoreBundle& b) const { return -recloss::mine(b).value; }
  double bpr(const ScoreBundle& b) const { return recloss::bpr(b).value; }
};

}  // namespace

TEST(BoundChain, SignFlipInMineIsDetected) {
  const auto r = bound_chain_suite(1000, 3, 64, SignFlippedMine{});
  EXPECT_FALSE(r.pass());
}

TEST(BoundChain, SeededRunsAreReproducible) {
  EXPECT_EQ(bound_chain_suite(500, 11).worst, bound_chain_suite(500, 11).worst);
}
