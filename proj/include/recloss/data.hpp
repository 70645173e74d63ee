#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace recloss {

using Index = std::uint32_t;
using ItemList = std::vector<Index>;
using PerUserLists = std::vector<ItemList>;

/// Raised for malformed dataset text. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Sparse implicit-feedback store. Train lists are the observed positives
/// (r_ui = 1), test lists are held-out positives used only for ranking metrics.
///
/// Invariants: per-user lists are strictly increasing, train and test are
/// disjoint for every user, and item_popularity[i] counts training users of i.
struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  PerUserLists train_positives;
  PerUserLists test_positives;
  std::vector<std::size_t> item_popularity;
  /// Duplicate (u, i) pairs dropped while loading.
  std::size_t duplicates_removed = 0;
  /// Test pairs dropped because they also appear in train.
  std::size_t overlaps_removed = 0;

  std::size_t train_interactions() const {
    std::size_t n = 0;
    for (const auto& l : train_positives) n += l.size();
    return n;
  }
  std::size_t test_interactions() const {
    std::size_t n = 0;
    for (const auto& l : test_positives) n += l.size();
    return n;
  }
  bool is_train_positive(Index u, Index i) const {
    const auto& l = train_positives[u];
    return std::binary_search(l.begin(), l.end(), i);
  }
};

struct DatasetStats {
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::size_t interaction_count = 0;  // train only
  std::size_t test_interaction_count = 0;
  std::size_t total_interaction_count = 0;  // train + test
  double density = 0.0;
  std::size_t max_items_per_user = 0;
  std::size_t min_items_per_user = 0;
};

namespace detail {

inline void sort_unique(ItemList& l, std::size_t& dropped) {
  std::sort(l.begin(), l.end());
  auto last = std::unique(l.begin(), l.end());
  dropped += static_cast<std::size_t>(l.end() - last);
  l.erase(last, l.end());
}

struct RawSplit {
  PerUserLists lists;
  std::size_t max_user_plus_one = 0;
  std::size_t max_item_plus_one = 0;
};

inline Index parse_index(std::string_view tok, const std::string& path, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(path, line, "malformed token '" + std::string(tok) + "'");
  }
  if (v >= std::numeric_limits<Index>::max()) {
    throw ParseError(path, line, "index out of range '" + std::string(tok) + "'");
  }
  return static_cast<Index>(v);
}

inline RawSplit read_split(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  RawSplit out;
  std::string text;
  std::size_t lineno = 0;
  const std::string name = p.string();
  while (std::getline(in, text)) {
    ++lineno;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    std::string_view rest(text);
    bool have_user = false;
    Index user = 0;
    while (true) {
      auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      auto end = rest.find_first_of(" \t");
      auto tok = rest.substr(0, end);
      Index v = parse_index(tok, name, lineno);
      if (!have_user) {
        user = v;
        have_user = true;
        if (out.lists.size() <= user) out.lists.resize(user + 1);
        out.max_user_plus_one = std::max<std::size_t>(out.max_user_plus_one, user + 1);
      } else {
        out.lists[user].push_back(v);
        out.max_item_plus_one = std::max<std::size_t>(out.max_item_plus_one, v + std::size_t{1});
      }
      if (end == std::string_view::npos) break;
      rest.remove_prefix(end);
    }
  }
  return out;
}

}  // namespace detail

inline void recompute_popularity(InteractionDataset& ds) {
  ds.item_popularity.assign(ds.num_items, 0);
  for (const auto& l : ds.train_positives)
    for (Index i : l) ++ds.item_popularity[i];
}

/// Builds a dataset from raw per-user lists. Sorts, deduplicates and removes
/// train/test overlap. The item universe spans both partitions.
inline InteractionDataset make_dataset(PerUserLists train, PerUserLists test,
                                       std::size_t num_users = 0, std::size_t num_items = 0) {
  InteractionDataset ds;
  num_users = std::max({num_users, train.size(), test.size()});
  for (const auto* lists : {&train, &test})
    for (const auto& l : *lists)
      for (Index i : l) num_items = std::max<std::size_t>(num_items, i + std::size_t{1});
  train.resize(num_users);
  test.resize(num_users);
  std::size_t test_dups = 0;
  for (std::size_t u = 0; u < num_users; ++u) {
    detail::sort_unique(train[u], ds.duplicates_removed);
    detail::sort_unique(test[u], test_dups);
    ItemList kept;
    kept.reserve(test[u].size());
    std::set_difference(test[u].begin(), test[u].end(), train[u].begin(), train[u].end(),
                        std::back_inserter(kept));
    ds.overlaps_removed += test[u].size() - kept.size();
    test[u] = std::move(kept);
  }
  ds.duplicates_removed += test_dups;
  ds.num_users = num_users;
  ds.num_items = num_items;
  ds.train_positives = std::move(train);
  ds.test_positives = std::move(test);
  recompute_popularity(ds);
  return ds;
}

/// Loads "<user> <item> <item> ..." text files (0-indexed, whitespace separated).
inline InteractionDataset load_dataset(const std::filesystem::path& train_path,
                                       const std::filesystem::path& test_path) {
  auto tr = detail::read_split(train_path);
  auto te = detail::read_split(test_path);
  std::size_t n_train = 0;
  for (const auto& l : tr.lists) n_train += l.size();
  if (n_train == 0) throw std::runtime_error("empty training file: " + train_path.string());
  return make_dataset(std::move(tr.lists), std::move(te.lists),
                      std::max(tr.max_user_plus_one, te.max_user_plus_one),
                      std::max(tr.max_item_plus_one, te.max_item_plus_one));
}

inline InteractionDataset load_dataset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("data directory not found: " + dir.string());
  return load_dataset(dir / "train.txt", dir / "test.txt");
}

/// Writes one line per user (including users with empty lists) so that
/// reloading reproduces the user universe exactly.
inline void write_split(const std::filesystem::path& p, const PerUserLists& lists) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  for (std::size_t u = 0; u < lists.size(); ++u) {
    out << u;
    for (Index i : lists[u]) out << ' ' << i;
    out << '\n';
  }
}

inline void write_dataset(const std::filesystem::path& dir, const InteractionDataset& ds) {
  std::filesystem::create_directories(dir);
  write_split(dir / "train.txt", ds.train_positives);
  write_split(dir / "test.txt", ds.test_positives);
}

inline DatasetStats dataset_stats(const InteractionDataset& ds) {
  DatasetStats s;
  s.user_count = ds.num_users;
  s.item_count = ds.num_items;
  s.interaction_count = ds.train_interactions();
  s.test_interaction_count = ds.test_interactions();
  s.total_interaction_count = s.interaction_count + s.test_interaction_count;
  if (s.user_count && s.item_count)
    s.density = static_cast<double>(s.interaction_count) /
                (static_cast<double>(s.user_count) * static_cast<double>(s.item_count));
  if (!ds.train_positives.empty()) {
    s.min_items_per_user = std::numeric_limits<std::size_t>::max();
    for (const auto& l : ds.train_positives) {
      s.max_items_per_user = std::max(s.max_items_per_user, l.size());
      s.min_items_per_user = std::min(s.min_items_per_user, l.size());
    }
  }
  return s;
}

struct ValidationSplit {
  InteractionDataset train;  // train lists with the held-out items removed
  PerUserLists held_out;
};

/// Moves ceil(fraction * |I_u+|) of each user's train items into a
/// validation list, always keeping at least one item for users with two or
/// more positives. Users with a single positive keep it.
inline ValidationSplit make_validation_split(const InteractionDataset& ds, double fraction,
                                             std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("validation fraction must lie in (0, 1)");
  ValidationSplit out{ds, PerUserLists(ds.num_users)};
  std::mt19937_64 rng(seed);
  for (std::size_t u = 0; u < ds.num_users; ++u) {
    ItemList items = ds.train_positives[u];
    const std::size_t n = items.size();
    if (n < 2) continue;
    auto h = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
    h = std::min(h, n - 1);
    std::shuffle(items.begin(), items.end(), rng);
    ItemList held(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(h));
    ItemList kept(items.begin() + static_cast<std::ptrdiff_t>(h), items.end());
    std::sort(held.begin(), held.end());
    std::sort(kept.begin(), kept.end());
    out.held_out[u] = std::move(held);
    out.train.train_positives[u] = std::move(kept);
  }
  recompute_popularity(out.train);
  return out;
}

/// Inverse of make_validation_split on the train lists.
inline InteractionDataset merge_validation(const InteractionDataset& split_train,
                                           const PerUserLists& held_out) {
  InteractionDataset ds = split_train;
  for (std::size_t u = 0; u < ds.num_users && u < held_out.size(); ++u) {
    ItemList merged;
    std::merge(ds.train_positives[u].begin(), ds.train_positives[u].end(), held_out[u].begin(),
               held_out[u].end(), std::back_inserter(merged));
    ds.train_positives[u] = std::move(merged);
  }
  recompute_popularity(ds);
  return ds;
}

/// Same train partition, test partition replaced (e.g. by validation lists).
inline InteractionDataset with_test_lists(const InteractionDataset& ds, PerUserLists test) {
  InteractionDataset out = ds;
  test.resize(ds.num_users);
  out.test_positives = std::move(test);
  return out;
}

}  // namespace recloss
