#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "recloss/sampling.hpp"

using namespace recloss;

namespace {

InteractionDataset small_dataset() { return make_dataset({{0, 1, 2}, {2}, {}}, {}, 3, 5); }

/// Pearson chi-square statistic of observed counts against expected probabilities.
double chi_square(const std::vector<std::size_t>& counts, const std::vector<double>& probs, std::size_t draws) {
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expected = probs[i] * static_cast<double>(draws);
    stat += (static_cast<double>(counts[i]) - expected) * (static_cast<double>(counts[i]) - expected) / expected;
  }
  return stat;
}

}  // namespace

TEST(Uniform, SingleItemUniverse) {
  const auto ds = make_dataset({{0}}, {}, 1, 1);
  Rng rng(1);
  EXPECT_EQ(sample_unlabeled(ds, 0, 5, rng), (std::vector<Index>{0, 0, 0, 0, 0}));
}

TEST(Uniform, FrequenciesWithinThreeSigma) {
  const auto ds = small_dataset();
  Rng rng(42);
  constexpr std::size_t draws = 1'000'000;
  std::vector<Index> out;
  sample_unlabeled(ds, draws, rng, out);
  std::vector<std::size_t> counts(ds.num_items, 0);
  for (Index i : out) ++counts[i];
  const double p = 1.0 / static_cast<double>(ds.num_items);
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (auto c : counts) EXPECT_LT(std::abs(static_cast<double>(c) - draws * p), 3 * sigma);
  // chi-square with 4 dof: 99.9th percentile is 18.47
  EXPECT_LT(chi_square(counts, std::vector<double>(ds.num_items, p), draws), 18.47);
}

TEST(Uniform, IncludesUserPositives) {
  const auto ds = small_dataset();
  Rng rng(3);
  const auto draws = sample_unlabeled(ds, 0, 200, rng);
  EXPECT_TRUE(std::any_of(draws.begin(), draws.end(), [&](Index i) { return ds.is_train_positive(0, i); }));
}

TEST(Uniform, DeterministicPerSeed) {
  const auto ds = small_dataset();
  Rng a(9), b(9);
  EXPECT_EQ(sample_unlabeled(ds, 0, 100, a), sample_unlabeled(ds, 0, 100, b));
}

TEST(ExcludingPositives, NeverReturnsPositives) {
  const auto ds = small_dataset();
  Rng rng(5);
  std::vector<Index> out;
  sample_excluding_positives(ds, 0, 1000, rng, out);
  for (Index i : out) EXPECT_FALSE(ds.is_train_positive(0, i));
  const auto full = make_dataset({{0, 1}}, {}, 1, 2);
  EXPECT_THROW(sample_excluding_positives(full, 0, 1, rng, out), std::runtime_error);
}

TEST(Popularity, SmoothedProbabilities) {
  // popularity [3, 1]
  const auto ds = make_dataset({{0, 1}, {0}, {0}}, {}, 3, 2);
  PopularitySampler s(ds);
  const auto p = s.probabilities();
  EXPECT_NEAR(p[0], 4.0 / 6.0, 1e-12);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-12);
  Rng rng(11);
  constexpr std::size_t draws = 600'000;
  const auto out = sample_popularity(ds, draws, rng);
  std::vector<std::size_t> counts(2, 0);
  for (Index i : out) ++counts[i];
  // chi-square with 1 dof: 99.9th percentile is 10.83
  EXPECT_LT(chi_square(counts, {4.0 / 6.0, 2.0 / 6.0}, draws), 10.83);
}

TEST(Popularity, UniformPopularityIsUniform) {
  const auto ds = make_dataset({{0, 1, 2, 3}}, {}, 1, 4);
  const auto p = PopularitySampler(ds).probabilities();
  for (double x : p) EXPECT_NEAR(x, 0.25, 1e-12);
}

TEST(Popularity, SingleItem) {
  const auto ds = make_dataset({{0}}, {}, 1, 1);
  Rng rng(2);
  for (Index i : sample_popularity(ds, 50, rng)) EXPECT_EQ(i, 0u);
}

TEST(Popularity, NeedsInteractions) {
  const auto ds = make_dataset({{}}, {}, 1, 3);
  Rng rng(2);
  EXPECT_THROW(sample_popularity(ds, 1, rng), std::invalid_argument);
}

TEST(UserPositives, SinglePositive) {
  const auto ds = make_dataset({{7}}, {});
  Rng rng(1);
  EXPECT_EQ(sample_user_positives(ds, 0, 3, rng), (std::vector<Index>{7, 7, 7}));
}

TEST(UserPositives, EmptyUserIsAnError) {
  const auto ds = small_dataset();
  Rng rng(1);
  EXPECT_THROW(sample_user_positives(ds, 2, 3, rng), std::invalid_argument);
}

TEST(UserPositives, MarginalIsUniformOverPositives) {
  const auto ds = small_dataset();
  Rng rng(21);
  constexpr std::size_t draws = 300'000;
  const auto out = sample_user_positives(ds, 0, draws, rng);
  std::map<Index, std::size_t> counts;
  for (Index i : out) ++counts[i];
  ASSERT_EQ(counts.size(), 3u);
  std::vector<std::size_t> c;
  for (auto& [item, n] : counts) c.push_back(n);
  // chi-square with 2 dof: 99.9th percentile is 13.82
  EXPECT_LT(chi_square(c, {1.0 / 3, 1.0 / 3, 1.0 / 3}, draws), 13.82);
}

TEST(Dispatch, AllKindsInRangeAndDeterministic) {
  const auto ds = small_dataset();
  for (auto kind : {SamplerKind::uniform_all_items, SamplerKind::uniform_excluding_user_positives,
                    SamplerKind::popularity}) {
    UnlabeledSampler s1(ds, kind), s2(ds, kind);
    Rng a(4), b(4);
    std::vector<Index> x, y;
    s1.sample(1, 500, a, x);
    s2.sample(1, 500, b, y);
    EXPECT_EQ(x, y);
    for (Index i : x) EXPECT_LT(i, ds.num_items);
  }
  EXPECT_EQ(parse_sampler_kind(to_string(SamplerKind::popularity)), SamplerKind::popularity);
  EXPECT_THROW(parse_sampler_kind("hard"), std::invalid_argument);
}

TEST(Seeds, NamedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, "sampling"), derive_seed(1, "init"));
  EXPECT_EQ(derive_seed(1, "sampling"), derive_seed(1, "sampling"));
  EXPECT_NE(derive_seed(1, "sampling"), derive_seed(2, "sampling"));
}
