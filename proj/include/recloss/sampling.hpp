#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "recloss/data.hpp"

namespace recloss {

using Rng = std::mt19937_64;

/// Seeds an independent sub-stream from the root seed and a stream name, so
/// that e.g. init and sampling draws do not shift when one of them changes.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(root),
                                   static_cast<std::uint32_t>(root >> 32)};
  for (unsigned char c : stream) words.push_back(c);
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(derive_seed(root, stream));
}

enum class SamplerKind { uniform_all_items, uniform_excluding_user_positives, popularity };

inline SamplerKind parse_sampler_kind(std::string_view s) {
  if (s == "uniform" || s == "uniform_all_items") return SamplerKind::uniform_all_items;
  if (s == "uniform_excluding_user_positives" || s == "uniform_excluding")
    return SamplerKind::uniform_excluding_user_positives;
  if (s == "popularity") return SamplerKind::popularity;
  throw std::invalid_argument("unknown sampler kind '" + std::string(s) + "'");
}

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::uniform_all_items: return "uniform";
    case SamplerKind::uniform_excluding_user_positives: return "uniform_excluding_user_positives";
    case SamplerKind::popularity: return "popularity";
  }
  return "?";
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::uniform_all_items;
  std::size_t n_negatives = 800;
  std::size_t m_positives = 10;
  /// Draw one set of unlabeled items per batch instead of per positive pair.
  bool shared_negatives = false;
};

/// N i.i.d. uniform draws over the whole catalog. The user's own positives
/// may be drawn; that contamination is what the debiased losses correct.
inline void sample_unlabeled(const InteractionDataset& ds, std::size_t n, Rng& rng,
                             std::vector<Index>& out) {
  std::uniform_int_distribution<Index> pick(0, static_cast<Index>(ds.num_items - 1));
  out.resize(n);
  for (auto& x : out) x = pick(rng);
}

inline std::vector<Index> sample_unlabeled(const InteractionDataset& ds, Index /*u*/, std::size_t n,
                                           Rng& rng) {
  std::vector<Index> out;
  sample_unlabeled(ds, n, rng, out);
  return out;
}

/// Rejection sampling over I \ I_u+.
inline void sample_excluding_positives(const InteractionDataset& ds, Index u, std::size_t n,
                                       Rng& rng, std::vector<Index>& out) {
  if (ds.train_positives[u].size() >= ds.num_items)
    throw std::runtime_error("user " + std::to_string(u) + " has no unobserved items");
  std::uniform_int_distribution<Index> pick(0, static_cast<Index>(ds.num_items - 1));
  out.resize(n);
  for (auto& x : out) {
    do {
      x = pick(rng);
    } while (ds.is_train_positive(u, x));
  }
}

/// Draws items with probability proportional to popularity + 1.
class PopularitySampler {
 public:
  explicit PopularitySampler(const InteractionDataset& ds) {
    std::vector<double> w(ds.num_items);
    for (std::size_t i = 0; i < ds.num_items; ++i)
      w[i] = static_cast<double>(ds.item_popularity[i]) + 1.0;
    dist_ = std::discrete_distribution<Index>(w.begin(), w.end());
  }

  void sample(std::size_t n, Rng& rng, std::vector<Index>& out) {
    out.resize(n);
    for (auto& x : out) x = dist_(rng);
  }

  std::vector<double> probabilities() const { return dist_.probabilities(); }

 private:
  std::discrete_distribution<Index> dist_;
};

inline std::vector<Index> sample_popularity(const InteractionDataset& ds, std::size_t n, Rng& rng) {
  if (ds.train_interactions() == 0)
    throw std::invalid_argument("popularity sampling needs at least one interaction");
  PopularitySampler s(ds);
  std::vector<Index> out;
  s.sample(n, rng, out);
  return out;
}

/// M uniform draws with replacement from the user's train positives.
inline void sample_user_positives(const InteractionDataset& ds, Index u, std::size_t m, Rng& rng,
                                  std::vector<Index>& out) {
  const auto& pos = ds.train_positives[u];
  if (pos.empty())
    throw std::invalid_argument("user " + std::to_string(u) + " has no train positives");
  std::uniform_int_distribution<std::size_t> pick(0, pos.size() - 1);
  out.resize(m);
  for (auto& x : out) x = pos[pick(rng)];
}

inline std::vector<Index> sample_user_positives(const InteractionDataset& ds, Index u,
                                                std::size_t m, Rng& rng) {
  std::vector<Index> out;
  sample_user_positives(ds, u, m, rng, out);
  return out;
}

/// Dispatches unlabeled draws according to SamplerConfig::kind.
class UnlabeledSampler {
 public:
  UnlabeledSampler(const InteractionDataset& ds, SamplerKind kind) : ds_(&ds), kind_(kind) {
    if (kind_ == SamplerKind::popularity) pop_.emplace(ds);
  }

  void sample(Index u, std::size_t n, Rng& rng, std::vector<Index>& out) {
    switch (kind_) {
      case SamplerKind::uniform_all_items: sample_unlabeled(*ds_, n, rng, out); break;
      case SamplerKind::uniform_excluding_user_positives:
        sample_excluding_positives(*ds_, u, n, rng, out);
        break;
      case SamplerKind::popularity: pop_->sample(n, rng, out); break;
    }
  }

 private:
  const InteractionDataset* ds_;
  SamplerKind kind_;
  std::optional<PopularitySampler> pop_;
};

}  // namespace recloss
