#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "recloss/data.hpp"

namespace recloss {

/// Anything that can produce a full-catalog score row for a user.
template <class S>
concept UserScorer = requires(const S& s, Index u, std::span<double> out) {
  { s.num_items() } -> std::convertible_to<std::size_t>;
  s.score_user(u, out);
};

struct MetricsReport {
  std::size_t k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t users_evaluated = 0;
};

/// Top-k item indices by descending score with `masked` items excluded.
/// Ties are broken by ascending item index. k is clamped to the number of
/// unmasked items.
inline std::vector<Index> rank_top_k(std::span<const double> scores, std::span<const Index> masked,
                                     std::size_t k) {
  if (k == 0) throw std::invalid_argument("rank_top_k: k must be >= 1");
  std::vector<char> is_masked(scores.size(), 0);
  for (Index i : masked)
    if (i < scores.size()) is_masked[i] = 1;
  std::vector<Index> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!is_masked[i]) candidates.push_back(static_cast<Index>(i));
  k = std::min(k, candidates.size());
  auto better = [&](Index a, Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

template <UserScorer S>
std::vector<Index> rank_top_k(const S& scorer, const InteractionDataset& ds, Index u, std::size_t k) {
  std::vector<double> row(scorer.num_items());
  scorer.score_user(u, row);
  return rank_top_k(row, ds.train_positives[u], k);
}

/// |topk ∩ test| / |test|. `test` must be sorted.
inline double recall_at_k(std::span<const Index> topk, std::span<const Index> test) {
  if (test.empty()) throw std::invalid_argument("recall_at_k: empty test set");
  std::size_t hits = 0;
  for (Index i : topk) hits += std::binary_search(test.begin(), test.end(), i);
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

/// Binary-relevance NDCG with the ideal DCG truncated at min(k, |test|).
inline double ndcg_at_k(std::span<const Index> topk, std::span<const Index> test) {
  if (test.empty()) throw std::invalid_argument("ndcg_at_k: empty test set");
  double dcg = 0.0;
  for (std::size_t r = 0; r < topk.size(); ++r)
    if (std::binary_search(test.begin(), test.end(), topk[r]))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  const std::size_t ideal = std::min(topk.size(), test.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

/// Worker count from RECLOSS_THREADS (default 1).
inline unsigned thread_budget() {
  if (const char* env = std::getenv("RECLOSS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

/// Mean Recall@k / NDCG@k over users with a non-empty test list. Per-user
/// results are reduced in user order, so the output does not depend on the
/// number of threads.
template <UserScorer S>
MetricsReport evaluate(const S& scorer, const InteractionDataset& ds, std::size_t k,
                       unsigned threads = 1) {
  std::vector<Index> users;
  for (std::size_t u = 0; u < ds.num_users; ++u)
    if (!ds.test_positives[u].empty()) users.push_back(static_cast<Index>(u));
  if (users.empty()) throw std::runtime_error("evaluate: no user has test items");

  std::vector<double> recall(users.size()), ndcg(users.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> row(scorer.num_items());
    for (std::size_t x = begin; x < end; ++x) {
      const Index u = users[x];
      scorer.score_user(u, row);
      auto top = rank_top_k(row, ds.train_positives[u], k);
      recall[x] = recall_at_k(top, ds.test_positives[u]);
      ndcg[x] = ndcg_at_k(top, ds.test_positives[u]);
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(users.size())));
  if (threads == 1) {
    work(0, users.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (users.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(users.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  MetricsReport r;
  r.k = k;
  r.users_evaluated = users.size();
  for (std::size_t x = 0; x < users.size(); ++x) {
    r.recall += recall[x];
    r.ndcg += ndcg[x];
  }
  r.recall /= static_cast<double>(users.size());
  r.ndcg /= static_cast<double>(users.size());
  return r;
}

/// Non-personalized baseline: every user gets the training popularity row.
class PopularityScorer {
 public:
  explicit PopularityScorer(const InteractionDataset& ds)
      : pop_(ds.item_popularity.begin(), ds.item_popularity.end()) {}
  std::size_t num_items() const { return pop_.size(); }
  void score_user(Index, std::span<double> out) const { std::copy(pop_.begin(), pop_.end(), out.begin()); }

 private:
  std::vector<double> pop_;
};

/// Dense user x item score table; convenient for tests and external scores.
class TableScorer {
 public:
  TableScorer(std::size_t num_items, std::vector<std::vector<double>> rows)
      : num_items_(num_items), rows_(std::move(rows)) {}
  std::size_t num_items() const { return num_items_; }
  void score_user(Index u, std::span<double> out) const {
    std::copy(rows_[u].begin(), rows_[u].end(), out.begin());
  }

 private:
  std::size_t num_items_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace recloss
