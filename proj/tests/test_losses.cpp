#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "recloss/losses.hpp"
#include "recloss/sampling.hpp"
#include "recloss/synthetic.hpp"

using namespace recloss;

namespace {

ScoreBundle bundle(double pos, std::vector<double> unl, std::vector<double> extra = {}) {
  return {pos, std::move(unl), std::move(extra)};
}

// Naive long-double references, written straight from the loss definitions.
long double ref_infonce_plus(const ScoreBundle& b, long double lambda, long double eps) {
  long double z = eps * std::exp(static_cast<long double>(b.pos));
  for (double s : b.unlabeled) z += std::exp(static_cast<long double>(s));
  return -(b.pos - lambda * std::log(z));
}

long double ref_bpr(const ScoreBundle& b) {
  long double v = 0;
  for (double s : b.unlabeled) v += std::log1p(std::exp(static_cast<long double>(s - b.pos)));
  return v;
}

long double ref_debiased_infonce(const ScoreBundle& b, long double tau, long double lambda_n, long double t,
                                 bool clamp) {
  long double mu = 0, mp = 0;
  for (double s : b.unlabeled) mu += std::exp(static_cast<long double>(s));
  for (double s : b.extra_pos) mp += std::exp(static_cast<long double>(s));
  mu /= b.unlabeled.size();
  mp /= b.extra_pos.size();
  long double g = (mu - tau * mp) / (1 - tau);
  if (clamp) g = std::max(g, std::exp(-1 / t));
  const long double ep = std::exp(static_cast<long double>(b.pos));
  return -std::log(ep / (ep + lambda_n * g));
}

constexpr double kLn2 = std::numbers::ln2;

}  // namespace

// --- tau+ -------------------------------------------------------------------

TEST(TauPlus, TopK) {
  DebiasParams p;
  p.k = 20;
  EXPECT_DOUBLE_EQ(compute_tau_plus(5, 100, p), 0.25);
}

TEST(TauPlus, ProportionalAlphaZero) {
  DebiasParams p;
  p.tau_plus_mode = TauPlusMode::proportional;
  p.alpha = 0.0;
  EXPECT_DOUBLE_EQ(compute_tau_plus(7, 200, p), 7.0 / 200.0);
}

TEST(TauPlus, ProportionalGivesConstantWeight) {
  DebiasParams p;
  p.tau_plus_mode = TauPlusMode::proportional;
  for (double alpha : {0.0, 0.3, 0.9}) {
    p.alpha = alpha;
    PlantedBlockConfig pc;
    pc.seed = static_cast<std::uint64_t>(alpha * 10);
    const auto ds = planted_block_dataset(pc);
    for (Index u = 0; u < ds.num_users; ++u) {
      const double n = static_cast<double>(ds.train_positives[u].size());
      const double c = static_cast<double>(ds.num_items) / n * compute_tau_plus(ds, u, p);
      EXPECT_NEAR(c, 1.0 + alpha, 1e-12);
    }
  }
}

TEST(TauPlus, AtLeastOneIsConfigError) {
  DebiasParams p;
  p.k = 20;
  EXPECT_THROW(compute_tau_plus(80, 100, p), ConfigError);
  p.tau_plus_mode = TauPlusMode::proportional;
  p.alpha = 1.0;
  EXPECT_THROW(compute_tau_plus(50, 100, p), ConfigError);
  EXPECT_LE(compute_tau_plus(49, 100, p), 1.0 - 1e-6);
}

// --- closed-form values -----------------------------------------------------

TEST(Bpr, Values) {
  EXPECT_NEAR(bpr(bundle(0, {0})).value, kLn2, 1e-15);
  const auto b = bundle(2, {0, 1});
  EXPECT_NEAR(bpr(b).value, static_cast<double>(ref_bpr(b)), 1e-15);
  EXPECT_NEAR(bpr(b).value, 0.440190, 1e-6);
  EXPECT_LT(bpr(bundle(800, {0, 1})).value, 1e-300);
  EXPECT_TRUE(std::isfinite(bpr(bundle(-800, {0})).value));
}

TEST(SampledSoftmax, Values) {
  EXPECT_NEAR(sampled_softmax(bundle(0, {0, 0, 0, 0})).value, std::log(5.0), 1e-15);
  const auto b = bundle(1, {0, 0});
  EXPECT_NEAR(sampled_softmax(b).value, std::log1p(2.0 / std::numbers::e), 1e-15);
  EXPECT_NEAR(sampled_softmax(b).value, 0.551445, 1e-6);
  EXPECT_EQ(sampled_softmax(b).value, infonce(b).value);
}

TEST(InfoNCE, EqualScores) {
  for (std::size_t n : {1u, 3u, 64u}) {
    EXPECT_NEAR(infonce(bundle(0, std::vector<double>(n, 0.0))).value, std::log(n + 1.0), 1e-14);
  }
}

TEST(InfoNCE, StableForLargeScores) {
  const auto b = bundle(1000, {999, 1001});
  const auto e = infonce(b);
  EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_NEAR(e.value, std::log(1 + std::exp(-1.0) + std::exp(1.0)), 1e-12);
}

TEST(InfoNCEPlus, Values) {
  EXPECT_NEAR(infonce_plus(bundle(0, {0, 0}), {1.0, 0.0}).value, kLn2, 1e-15);
  const auto b = bundle(1, {0, 0});
  EXPECT_NEAR(infonce_plus(b, {1.1, 0.0}).value, static_cast<double>(ref_infonce_plus(b, 1.1L, 0.0L)), 1e-15);
  EXPECT_NEAR(infonce_plus(b, {1.1, 0.0}).value, -0.237538, 1e-6);
  const auto c = bundle(0.3, {-1.2, 0.7, 2.5});
  EXPECT_NEAR(infonce_plus(c, {0.7, 0.4}).value, static_cast<double>(ref_infonce_plus(c, 0.7L, 0.4L)), 1e-14);
}

TEST(Mine, Values) {
  for (std::size_t n : {1u, 2u, 10u}) {
    EXPECT_NEAR(mine(bundle(0.4, std::vector<double>(n, 0.4))).value, std::log(static_cast<double>(n)), 1e-14);
  }
  const auto b = bundle(1, {0, 0});
  EXPECT_NEAR(mine_plus(b, 1.2).value, 1.2 * kLn2 - 1.0, 1e-15);
  // the six-digit figure -0.168224 rounds 1.2 ln 2 - 1 = -0.1682234 upward
  EXPECT_NEAR(mine_plus(b, 1.2).value, -0.168224, 1e-6);
  EXPECT_EQ(dcl(b).value, mine(b).value);
}

TEST(Mine, NormalizedFormDiffersByLogN) {
  const auto b = bundle(0.2, {0.1, -0.5, 1.3, 0.0, 2.2});
  const auto raw = mine(b, false);
  const auto norm = mine(b, true);
  EXPECT_NEAR(raw.value - norm.value, std::log(5.0), 1e-12);
  EXPECT_NEAR(raw.d_pos, norm.d_pos, 1e-12);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(raw.d_unlabeled[j], norm.d_unlabeled[j], 1e-12);
}

TEST(Ccl, Values) {
  EXPECT_DOUBLE_EQ(ccl(bundle(1, {0.9, 0.1, -1}), {1.0, 0.9}).value, 0.0);
  EXPECT_NEAR(ccl(bundle(0.5, {0.95, 0.2}), {1.0, 0.9}).value, 0.525, 1e-15);
  const auto e = ccl(bundle(0.5, {0.95, 0.2}), {2.0, 0.9});
  EXPECT_DOUBLE_EQ(e.d_pos, -1.0);
  EXPECT_DOUBLE_EQ(e.d_unlabeled[0], 1.0);
  EXPECT_DOUBLE_EQ(e.d_unlabeled[1], 0.0);
}

TEST(Mse, Values) {
  EXPECT_DOUBLE_EQ(mse_pointwise(bundle(1, {0, 0}), 1.0).value, 0.0);
  EXPECT_NEAR(mse_pointwise(bundle(0.5, {0.2}), 1.0).value, 0.29, 1e-15);
  EXPECT_DOUBLE_EQ(mse_pointwise(bundle(0.3, {}), 1.0).d_pos, -2.0 * 0.7);
  EXPECT_DOUBLE_EQ(mse_pointwise(bundle(0.3, {}), 1.0).value, 0.49);
}

TEST(DebiasedInfoNCE, HalfPriorClosedForm) {
  DebiasParams d;
  d.lambda_n = 1.0;
  d.clamp_floor_enabled = false;
  const auto b = bundle(0, {0, 0}, {0});
  EXPECT_NEAR(debiased_infonce(b, d, 0.5).value, kLn2, 1e-15);
}

TEST(DebiasedInfoNCE, ZeroPriorIsInfoNCE) {
  DebiasParams d;
  const auto b = bundle(0.1, {0.5, -0.3, 0.8, 0.0}, {0.9});
  d.lambda_n = 4.0;
  EXPECT_NEAR(debiased_infonce(b, d, 0.0).value, infonce(b).value, 1e-12);
}

TEST(DebiasedInfoNCE, FloorBranch) {
  // mean_j e^0 = 1, mean_k e^1 = e: g = 2(1 - 0.5 e) < 0 so the floor e^{-1} is used
  DebiasParams d;
  d.lambda_n = 1.0;
  d.temperature = 1.0;
  const auto b = bundle(0, {0, 0}, {1});
  const auto e = debiased_infonce(b, d, 0.5);
  EXPECT_NEAR(e.value, std::log(1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(e.value, static_cast<double>(ref_debiased_infonce(b, 0.5L, 1.0L, 1.0L, true)), 1e-15);
  EXPECT_DOUBLE_EQ(e.d_unlabeled[0], 0.0);
  EXPECT_DOUBLE_EQ(e.d_extra_pos[0], 0.0);
  // temperature 0.5 lowers the floor to e^{-2}
  d.temperature = 0.5;
  EXPECT_NEAR(debiased_infonce(b, d, 0.5).value, std::log(1.0 + std::exp(-2.0)), 1e-15);
}

TEST(DebiasedInfoNCE, EqualScoresNeverHitFloor) {
  // with every score equal to a, g = e^a exactly, which is >= e^{-1/t} whenever a >= -1/t
  DebiasParams d;
  d.temperature = 1.0;
  const auto b = bundle(0.5, {0.5, 0.5}, {0.5});
  const auto e = debiased_infonce(b, d, 0.99);
  EXPECT_NEAR(e.value, std::log(1.0 + d.lambda_n), 1e-9);
  EXPECT_NE(e.d_unlabeled[0], 0.0);
}

TEST(DebiasedInfoNCE, UnclampedNegativeMassIsDomainError) {
  DebiasParams d;
  d.clamp_floor_enabled = false;
  d.lambda_n = 5.0;
  EXPECT_THROW(debiased_infonce(bundle(0, {0, 0}, {3}), d, 0.5), std::domain_error);
}

TEST(DebiasedInfoNCE, MatchesReference) {
  Rng rng(17);
  std::uniform_real_distribution<double> s(-2, 2), tau(0, 0.6);
  for (int t = 0; t < 200; ++t) {
    ScoreBundle b{s(rng), {s(rng), s(rng), s(rng)}, {s(rng), s(rng)}};
    DebiasParams d;
    d.lambda_n = 0.8;
    const double tp = tau(rng);
    EXPECT_NEAR(debiased_infonce(b, d, tp).value,
                static_cast<double>(ref_debiased_infonce(b, tp, 0.8L, 1.0L, true)), 1e-12);
  }
}

TEST(DebiasedInfoNCE, RequiresPositiveSamples) {
  DebiasParams d;
  EXPECT_THROW(debiased_infonce(bundle(0, {0}), d, 0.1), std::invalid_argument);
  EXPECT_THROW(debiased_infonce(bundle(0, {0}, {0}), d, 1.0), std::invalid_argument);
}

TEST(DebiasedCcl, Values) {
  DebiasParams d;
  d.lambda_n = 1.0;
  EXPECT_NEAR(debiased_ccl(bundle(1, {0.5}, {0.5}), {1.0, 0.0}, d, 0.5).value, 0.25, 1e-15);
}

TEST(DebiasedCcl, ZeroPriorKeepsOnlyUnlabeledHinge) {
  DebiasParams d;
  d.lambda_n = 0.7;
  const auto b = bundle(0.3, {0.95, 0.2, 0.99}, {0.97});
  const CCLParams p{0.7, 0.9};
  EXPECT_NEAR(debiased_ccl(b, p, d, 0.0).value, ccl(b, p).value - (1.0 - b.pos), 1e-15);
}

TEST(DebiasedCcl, MayGoNegativeUnlessFloored) {
  DebiasParams d;
  d.lambda_n = 1.0;
  const auto b = bundle(1, {0.0}, {1.0});
  EXPECT_LT(debiased_ccl(b, {1.0, 0.0}, d, 0.5).value, 0.0);
  d.ccl_floor_at_zero = true;
  const auto e = debiased_ccl(b, {1.0, 0.0}, d, 0.5);
  EXPECT_DOUBLE_EQ(e.value, 0.0);
  EXPECT_DOUBLE_EQ(e.d_extra_pos[0], 0.0);
  EXPECT_THROW(debiased_ccl(bundle(1, {0.0}), {1.0, 0.0}, d, 0.5), std::invalid_argument);
}

TEST(DebiasedMse, Values) {
  EXPECT_NEAR(debiased_mse(bundle(1, {1}, {1}), 0.5, 1.0).value, 0.5, 1e-15);
  const auto b = bundle(0.4, {0.3, -0.6}, {0.2});
  EXPECT_NEAR(debiased_mse(b, 0.0, 0.8).value, 0.8 * (0.09 + 0.36) / 2.0, 1e-15);
  const auto same = bundle(0.4, {0.3, -0.6}, {0.3, -0.6});
  EXPECT_NEAR(debiased_mse(same, 1.0, 0.8).value, 0.36, 1e-15);
  EXPECT_THROW(debiased_mse(bundle(1, {1}), 0.5, 1.0), std::invalid_argument);
}

TEST(Errors, EmptyUnlabeledRejected) {
  const auto b = bundle(0, {});
  EXPECT_THROW(bpr(b), std::invalid_argument);
  EXPECT_THROW(infonce(b), std::invalid_argument);
  EXPECT_THROW(mine(b), std::invalid_argument);
  EXPECT_THROW(ccl(b, {}), std::invalid_argument);
  EXPECT_NO_THROW(mse_pointwise(b, 1.0));
}

// --- reductions and properties ---------------------------------------------

TEST(Reductions, RandomBundles) {
  Rng rng(1234);
  std::uniform_real_distribution<double> s(-5, 5);
  for (int t = 0; t < 500; ++t) {
    ScoreBundle b;
    b.pos = s(rng);
    b.unlabeled.resize(1 + t % 40);
    for (auto& x : b.unlabeled) x = s(rng);
    const double info = infonce(b).value;
    EXPECT_NEAR(infonce_plus(b, {1, 1}).value, info, 1e-12);
    EXPECT_NEAR(sampled_softmax(b).value, info, 1e-12);
    const double m = mine(b).value;
    EXPECT_NEAR(infonce_plus(b, {1, 0}).value, m, 1e-12);
    EXPECT_NEAR(mine_plus(b, 1.0).value, m, 1e-12);
    EXPECT_NEAR(info, static_cast<double>(ref_infonce_plus(b, 1, 1)), 1e-12);
    EXPECT_NEAR(bpr(b).value, static_cast<double>(ref_bpr(b)), 1e-12);
  }
}

TEST(Properties, IncreasingPositiveScoreLowersLoss) {
  Rng rng(77);
  std::uniform_real_distribution<double> s(-3, 3);
  for (int t = 0; t < 200; ++t) {
    ScoreBundle b{s(rng), {s(rng), s(rng), s(rng)}, {}};
    ScoreBundle up = b;
    up.pos += 0.25;
    EXPECT_LT(bpr(up).value, bpr(b).value);
    EXPECT_LT(infonce(up).value, infonce(b).value);
    // d/dpos = -1 + lambda * eps e^pos / (eps e^pos + sum): negative when lambda <= 1 or eps = 0
    EXPECT_LT(infonce_plus(up, {0.9, 0.5}).value, infonce_plus(b, {0.9, 0.5}).value);
    EXPECT_LT(infonce_plus(up, {1.5, 0.0}).value, infonce_plus(b, {1.5, 0.0}).value);
    EXPECT_LT(mine(up).value, mine(b).value);
    EXPECT_LT(mine_plus(up, 1.1).value, mine_plus(b, 1.1).value);
  }
}

TEST(Properties, NoiseWeightAboveOneCanReverseMonotonicity) {
  // eps * lambda = 0.6 < 1, yet the positive term dominates the partition
  const ScoreBundle b{3.0, {-3.0}, {}};
  EXPECT_GT(infonce_plus(b, {1.2, 0.5}).d_pos, 0.0);
}

TEST(Properties, GradientShapesMatchBundle) {
  const auto b = bundle(0.1, {0.2, 0.3, 0.4}, {0.5, 0.6});
  for (LossKind k : kAllLossKinds) {
    LossConfig c;
    c.kind = k;
    const auto e = evaluate_loss(c, b, 0.1);
    EXPECT_EQ(e.d_unlabeled.size(), 3u) << to_string(k);
    EXPECT_EQ(e.d_extra_pos.size(), 2u) << to_string(k);
    EXPECT_TRUE(std::isfinite(e.value)) << to_string(k);
  }
}

// Central differences against every analytic partial, several parameter tables.
class FiniteDifference : public ::testing::TestWithParam<LossKind> {};

TEST_P(FiniteDifference, AnalyticPartialsMatch) {
  const LossKind kind = GetParam();
  Rng rng(derive_seed(5, to_string(kind)));
  std::uniform_real_distribution<double> s(-2.0, 2.0), tau(0.0, 0.6);
  constexpr double h = 1e-6;
  for (int variant = 0; variant < 3; ++variant) {
    LossConfig c;
    c.kind = kind;
    c.infonce_plus = {0.5 + 0.4 * variant, 0.3 * variant};
    c.mine_plus_lambda = 0.9 + 0.2 * variant;
    c.mine_normalized = variant == 1;
    c.ccl = {0.5 + variant, -0.2 + 0.3 * variant};
    c.debias.lambda_n = 0.4 + 0.3 * variant;
    c.debias.temperature = 0.5 + 0.5 * variant;
    c.debias.clamp_floor_enabled = variant != 2;
    c.mse_negative_weight = 0.5 + variant;
    int checked = 0;
    while (checked < 40) {
      ScoreBundle b;
      b.pos = s(rng);
      b.unlabeled.resize(1 + rng() % 12);
      b.extra_pos.resize(1 + rng() % 5);
      for (auto& x : b.unlabeled) x = s(rng);
      for (auto& x : b.extra_pos) x = s(rng);
      const double tp = is_debiased(kind) ? tau(rng) : 0.0;
      // resample near hinge margins and near the clamp switch
      bool kink = false;
      for (double x : b.unlabeled) kink = kink || std::abs(x - c.ccl.margin) < 1e-4;
      for (double x : b.extra_pos) kink = kink || std::abs(x - c.ccl.margin) < 1e-4;
      if (kind == LossKind::debiased_infonce) {
        const long double g_unclamped = [&] {
          long double mu = 0, mp = 0;
          for (double x : b.unlabeled) mu += std::exp(static_cast<long double>(x));
          for (double x : b.extra_pos) mp += std::exp(static_cast<long double>(x));
          return (mu / b.unlabeled.size() - tp * mp / b.extra_pos.size()) / (1 - tp);
        }();
        const double floor = std::exp(-1.0 / c.debias.temperature);
        if (std::abs(static_cast<double>(g_unclamped) - floor) < 1e-4 * floor) kink = true;
        if (!c.debias.clamp_floor_enabled && g_unclamped <= 0.05) kink = true;
      }
      if (kink && (kind == LossKind::ccl || kind == LossKind::debiased_ccl || kind == LossKind::debiased_infonce))
        continue;
      const auto e = evaluate_loss(c, b, tp);
      auto check = [&](double& x, double analytic) {
        const double saved = x;
        x = saved + h;
        const double up = evaluate_loss(c, b, tp).value;
        x = saved - h;
        const double down = evaluate_loss(c, b, tp).value;
        x = saved;
        const double fd = (up - down) / (2 * h);
        EXPECT_LT(std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-3}), 1e-5)
            << to_string(kind) << " variant " << variant << " analytic " << analytic << " fd " << fd;
      };
      check(b.pos, e.d_pos);
      for (std::size_t j = 0; j < b.unlabeled.size(); ++j) check(b.unlabeled[j], e.d_unlabeled[j]);
      for (std::size_t k = 0; k < b.extra_pos.size(); ++k) check(b.extra_pos[k], e.d_extra_pos[k]);
      ++checked;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, FiniteDifference, ::testing::ValuesIn(kAllLossKinds),
                         [](const auto& info) { return to_string(info.param); });

TEST(Dispatch, NamesRoundTrip) {
  for (LossKind k : kAllLossKinds) EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  EXPECT_EQ(parse_loss_kind("mine+"), LossKind::mine_plus);
  EXPECT_THROW(parse_loss_kind("hinge"), std::invalid_argument);
  EXPECT_TRUE(prefers_cosine(LossKind::mine_plus));
  EXPECT_TRUE(prefers_cosine(LossKind::ccl));
  EXPECT_FALSE(prefers_cosine(LossKind::bpr));
  EXPECT_FALSE(prefers_cosine(LossKind::infonce));
}
