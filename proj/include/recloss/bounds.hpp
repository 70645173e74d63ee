#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string_view>

#include "recloss/losses.hpp"

namespace recloss {

inline constexpr double kBoundTolerance = 1e-9;

/// Slack (lhs - rhs) of each link in the contrastive lower-bound chain for a
/// single positive term. Each slack must be non-negative.
struct BoundChainReport {
  static constexpr std::array<std::string_view, 6> names = {
      "infonce_ge_mine",          // log(1+S) >= log S
      "mine_ge_mean_gap_logn",    // Jensen: log S >= mean gap + log N
      "max_gap_logn1_ge_infonce", // max(0, max gap) + log(N+1) >= log(1+S)
      "mine_ge_max_gap",          // log S >= max gap
      "bpr_ge_hinge_sum",         // sum softplus(gap) >= sum max(0, gap)
      "logn_nonneg",              // log N >= 0
  };
  std::array<double, 6> slack{};

  double worst() const { return *std::min_element(slack.begin(), slack.end()); }
  bool holds(double tol = kBoundTolerance) const { return worst() >= -tol; }
};

/// Loss values the chain is evaluated on. Tests swap in a tampered provider
/// to confirm that a broken loss is caught.
struct DefaultBoundLosses {
  double infonce(const ScoreBundle& b) const { return recloss::infonce(b).value; }
  double mine(const ScoreBundle& b) const { return recloss::mine(b).value; }
  double bpr(const ScoreBundle& b) const { return recloss::bpr(b).value; }
};

/// Gaps are s_j - s_pos. The losses themselves come from `losses`, the bound
/// terms are computed directly from the gaps.
template <class Losses = DefaultBoundLosses>
BoundChainReport verify_bound_chain(const ScoreBundle& b, const Losses& losses = {}) {
  detail::require_unlabeled(b, "verify_bound_chain");
  const auto n = static_cast<double>(b.unlabeled.size());
  double mean_gap = 0.0;
  double max_gap = -std::numeric_limits<double>::infinity();
  double hinge_sum = 0.0;
  for (double s : b.unlabeled) {
    const double gap = s - b.pos;
    mean_gap += gap;
    max_gap = std::max(max_gap, gap);
    hinge_sum += std::max(0.0, gap);
  }
  mean_gap /= n;

  const double l_info = losses.infonce(b);
  const double l_mine = losses.mine(b);
  const double l_bpr = losses.bpr(b);

  BoundChainReport r;
  r.slack[0] = l_info - l_mine;
  r.slack[1] = l_mine - (mean_gap + std::log(n));
  r.slack[2] = std::max(0.0, max_gap) + std::log(n + 1.0) - l_info;
  r.slack[3] = l_mine - max_gap;
  r.slack[4] = l_bpr - hinge_sum;
  r.slack[5] = std::log(n);
  return r;
}

}  // namespace recloss
