#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>

#include "recloss/data.hpp"
#include "recloss/sampling.hpp"

namespace recloss {

/// Users and items are split into `blocks` equal groups; a user interacts
/// with each item of their own block with probability `in_block_rate`. Each
/// interaction is replaced by a random out-of-block item with probability
/// `noise`. A `test_fraction` of every user's interactions is held out.
struct PlantedBlockConfig {
  std::size_t users = 200;
  std::size_t items = 300;
  std::size_t blocks = 5;
  double in_block_rate = 0.75;
  double noise = 0.05;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

inline InteractionDataset planted_block_dataset(const PlantedBlockConfig& c) {
  if (c.blocks == 0 || c.blocks > c.items || c.blocks > c.users)
    throw std::invalid_argument("planted blocks must be between 1 and min(users, items)");
  Rng rng(c.seed);
  std::bernoulli_distribution keep(c.in_block_rate), corrupt(c.noise);
  const std::size_t per_block = c.items / c.blocks;
  PerUserLists train(c.users), test(c.users);
  for (std::size_t u = 0; u < c.users; ++u) {
    const std::size_t b = u % c.blocks;
    const std::size_t lo = b * per_block;
    const std::size_t hi = (b + 1 == c.blocks) ? c.items : lo + per_block;
    std::uniform_int_distribution<std::size_t> outside(0, c.items - (hi - lo) - 1);
    ItemList items;
    for (std::size_t i = lo; i < hi; ++i) {
      if (!keep(rng)) continue;
      if (corrupt(rng)) {
        std::size_t j = outside(rng);
        if (j >= lo) j += hi - lo;
        items.push_back(static_cast<Index>(j));
      } else {
        items.push_back(static_cast<Index>(i));
      }
    }
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    std::shuffle(items.begin(), items.end(), rng);
    // keep at least one train item per user
    std::size_t n_test = static_cast<std::size_t>(c.test_fraction * static_cast<double>(items.size()) + 0.5);
    if (items.size() >= 2) n_test = std::min(n_test, items.size() - 1);
    else n_test = 0;
    test[u].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_test));
    train[u].assign(items.begin() + static_cast<std::ptrdiff_t>(n_test), items.end());
  }
  return make_dataset(std::move(train), std::move(test), c.users, c.items);
}

}  // namespace recloss
