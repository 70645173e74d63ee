#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "recloss/bounds.hpp"
#include "recloss/eval.hpp"
#include "recloss/linear.hpp"
#include "recloss/losses.hpp"
#include "recloss/sampling.hpp"

namespace recloss {

/// One property evaluated over many random instances. `worst` is compared
/// against `threshold` in the direction given by `at_least`.
struct PropertyResult {
  std::string property;
  std::size_t instances = 0;
  double worst = 0.0;
  double threshold = 0.0;
  bool at_least = false;
  std::size_t excluded = 0;

  bool pass() const { return at_least ? worst >= threshold : worst <= threshold; }
};

// ---------------------------------------------------------------------------
// instance generators

inline ScoreBundle random_bundle(Rng& rng, std::size_t n, std::size_t m, double lo, double hi) {
  std::uniform_real_distribution<double> score(lo, hi);
  ScoreBundle b;
  b.pos = score(rng);
  b.unlabeled.resize(n);
  b.extra_pos.resize(m);
  for (auto& s : b.unlabeled) s = score(rng);
  for (auto& s : b.extra_pos) s = score(rng);
  return b;
}

/// Random 0/1 matrix; each row gets at least one interaction.
inline Eigen::MatrixXd random_binary(Rng& rng, std::size_t rows, std::size_t cols, double density) {
  std::bernoulli_distribution on(density);
  std::uniform_int_distribution<std::size_t> pick(0, cols - 1);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index u = 0; u < x.rows(); ++u) {
    for (Eigen::Index i = 0; i < x.cols(); ++i) x(u, i) = on(rng) ? 1.0 : 0.0;
    if (x.row(u).sum() == 0.0) x(u, static_cast<Eigen::Index>(pick(rng))) = 1.0;
  }
  return x;
}

inline std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <class T, std::size_t N>
const T& pick_one(Rng& rng, const T (&options)[N]) {
  return options[uniform_size(rng, 0, N - 1)];
}

// ---------------------------------------------------------------------------
// loss gradients

/// Loss configuration used by the gradient and identity checks.
inline LossConfig probe_config(LossKind kind) {
  LossConfig c;
  c.kind = kind;
  c.infonce_plus = {0.8, 0.6};
  c.mine_plus_lambda = 1.2;
  c.ccl = {1.5, 0.4};
  c.debias.lambda_n = 0.7;
  c.debias.temperature = 1.0;
  c.mse_negative_weight = 0.9;
  return c;
}

/// True when a central difference of width `h` may straddle a kink of the
/// loss (hinge margins, the debiased InfoNCE floor).
inline bool near_kink(const LossConfig& c, const ScoreBundle& b, double tau_plus, double h) {
  const double band = 100.0 * h;
  auto near_margin = [&](const std::vector<double>& xs) {
    return std::any_of(xs.begin(), xs.end(), [&](double s) { return std::abs(s - c.ccl.margin) < band; });
  };
  switch (c.kind) {
    case LossKind::ccl: return near_margin(b.unlabeled);
    case LossKind::debiased_ccl: return near_margin(b.unlabeled) || near_margin(b.extra_pos);
    case LossKind::debiased_infonce: {
      if (!c.debias.clamp_floor_enabled) return false;
      double mu = 0.0, mp = 0.0;
      for (double s : b.unlabeled) mu += std::exp(s);
      for (double s : b.extra_pos) mp += std::exp(s);
      mu /= static_cast<double>(b.unlabeled.size());
      mp /= static_cast<double>(b.extra_pos.size());
      const double g = (mu - tau_plus * mp) / (1.0 - tau_plus);
      const double floor = std::exp(-1.0 / c.debias.temperature);
      return std::abs(g - floor) < 1e-3 * floor;
    }
    default: return false;
  }
}

/// Largest |analytic - central difference| / max(|analytic|, |fd|, 1e-3)
/// over every score coordinate of `instances` random bundles.
inline PropertyResult gradient_check(LossKind kind, std::size_t instances, std::uint64_t seed,
                                     double h = 1e-6, double threshold = 1e-5) {
  Rng rng(derive_seed(seed, "gradient/" + to_string(kind)));
  const LossConfig cfg = probe_config(kind);
  std::uniform_real_distribution<double> tau(0.0, 0.5);
  PropertyResult r{"gradient/" + to_string(kind), 0, 0.0, threshold, false, 0};
  while (r.instances < instances) {
    auto b = random_bundle(rng, uniform_size(rng, 1, 16), uniform_size(rng, 1, 8), -3.0, 3.0);
    const double tp = is_debiased(kind) ? tau(rng) : 0.0;
    if (near_kink(cfg, b, tp, h)) {
      ++r.excluded;
      continue;
    }
    const auto analytic = evaluate_loss(cfg, b, tp);
    auto probe = [&](double& coord, double grad) {
      const double saved = coord;
      coord = saved + h;
      const double up = evaluate_loss(cfg, b, tp).value;
      coord = saved - h;
      const double down = evaluate_loss(cfg, b, tp).value;
      coord = saved;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(grad - fd) / std::max({std::abs(grad), std::abs(fd), 1e-3});
      r.worst = std::max(r.worst, rel);
    };
    probe(b.pos, analytic.d_pos);
    for (std::size_t j = 0; j < b.unlabeled.size(); ++j) probe(b.unlabeled[j], analytic.d_unlabeled[j]);
    for (std::size_t k = 0; k < b.extra_pos.size(); ++k) probe(b.extra_pos[k], analytic.d_extra_pos[k]);
    ++r.instances;
  }
  return r;
}

/// Algebraic reductions between the loss family members and between the
/// two EASE forms; worst absolute difference.
inline PropertyResult reduction_identities(std::size_t instances, std::uint64_t seed, double threshold = 1e-12) {
  Rng rng(derive_seed(seed, "identities"));
  PropertyResult r{"reduction_identities", instances, 0.0, threshold, false, 0};
  auto track = [&](double a, double b) { r.worst = std::max(r.worst, std::abs(a - b)); };
  for (std::size_t t = 0; t < instances; ++t) {
    // cosine-range scores keep the debiased estimate above its floor
    const auto b = random_bundle(rng, uniform_size(rng, 1, 64), uniform_size(rng, 1, 8), -1.0, 1.0);
    const double info = infonce(b).value;
    track(infonce_plus(b, {1.0, 1.0}).value, info);
    track(sampled_softmax(b).value, info);
    const double m = mine(b).value;
    track(infonce_plus(b, {1.0, 0.0}).value, m);
    track(mine_plus(b, 1.0).value, m);
    DebiasParams d;
    d.lambda_n = static_cast<double>(b.unlabeled.size());
    track(debiased_infonce(b, d, 0.0).value, info);

    const auto x = random_binary(rng, uniform_size(rng, 3, 10), uniform_size(rng, 2, 8), 0.4);
    const double lambda = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    track((ease_debiased_fit(x, lambda, 0.0).weights - ease_fit(x, lambda).weights).cwiseAbs().maxCoeff(), 0.0);
  }
  return r;
}

// ---------------------------------------------------------------------------
// bound chain

/// Smallest slack across the six inequalities; passes when >= -tolerance.
template <class Losses = DefaultBoundLosses>
PropertyResult bound_chain_suite(std::size_t instances, std::uint64_t seed, std::size_t max_n = 64,
                                 const Losses& losses = {}) {
  Rng rng(derive_seed(seed, "bounds"));
  PropertyResult r{"bound_chain", instances, std::numeric_limits<double>::infinity(), -kBoundTolerance, true, 0};
  for (std::size_t t = 0; t < instances; ++t) {
    const auto b = random_bundle(rng, uniform_size(rng, 1, max_n), 0, -10.0, 10.0);
    r.worst = std::min(r.worst, verify_bound_chain(b, losses).worst());
  }
  return r;
}

// ---------------------------------------------------------------------------
// iALS

inline PropertyResult ials_equivalence_suite(std::size_t instances, std::uint64_t seed, double threshold = 1e-8) {
  Rng rng(derive_seed(seed, "ials_equivalence"));
  const double alphas[] = {0.05, 0.1, 0.5};
  const double cs[] = {1.2, 1.5, 2.0};
  const double nus[] = {0.0, 0.5, 1.0};
  std::uniform_real_distribution<double> lambda(0.05, 2.0);
  PropertyResult r{"ials_equivalence", instances, 0.0, threshold, false, 0};
  for (std::size_t t = 0; t < instances; ++t) {
    const auto users = uniform_size(rng, 2, 12);
    const auto items = uniform_size(rng, 2, 16);
    const auto ds = dataset_from_dense(random_binary(rng, users, items, 0.35));
    const auto rep = check_ials_equivalence(ds, uniform_size(rng, 1, 6), pick_one(rng, alphas), lambda(rng),
                                    pick_one(rng, nus), pick_one(rng, cs), rng());
    r.excluded += rep.ill_conditioned;
    r.worst = std::max(r.worst, rep.max_deviation());
  }
  return r;
}

/// Largest relative increase of the objective between consecutive sweeps.
inline PropertyResult ials_monotonicity_suite(std::size_t instances, std::uint64_t seed, bool debiased,
                                              std::size_t sweeps = 10, double threshold = 1e-10) {
  Rng rng(derive_seed(seed, debiased ? "ials/debiased" : "ials/plain"));
  const double alphas[] = {0.05, 0.1, 0.5};
  const double cs[] = {1.0, 1.2, 1.5, 2.0};
  PropertyResult r{debiased ? "ials_monotone_debiased" : "ials_monotone", instances,
                   -std::numeric_limits<double>::infinity(), threshold, false, 0};
  for (std::size_t t = 0; t < instances; ++t) {
    const auto ds = dataset_from_dense(random_binary(rng, uniform_size(rng, 3, 15), uniform_size(rng, 3, 20), 0.3));
    IALSConfig cfg;
    cfg.dim = uniform_size(rng, 1, 6);
    cfg.alpha0 = pick_one(rng, alphas);
    cfg.lambda = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    cfg.nu = 1.0;
    cfg.sweeps = sweeps;
    cfg.seed = rng();
    cfg.c_u.resize(ds.num_users);
    for (auto& c : cfg.c_u) c = pick_one(rng, cs);
    const auto st = ials_fit(ds, cfg, debiased);
    for (std::size_t s = 1; s < st.objective_trace.size(); ++s) {
      const double prev = st.objective_trace[s - 1];
      r.worst = std::max(r.worst, (st.objective_trace[s] - prev) / std::max(std::abs(prev), 1.0));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// EASE

/// Per-column reference: with w_jj = 0 fixed, the remaining coordinates solve
/// the reduced ridge system (G + lambda I) restricted to the other items.
inline Eigen::MatrixXd ease_reference(const Eigen::MatrixXd& x, double lambda) {
  const Eigen::MatrixXd g = x.transpose() * x;
  const Eigen::Index n = g.rows();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != j) free.push_back(i);
    const auto f = static_cast<Eigen::Index>(free.size());
    if (f == 0) continue;
    Eigen::MatrixXd a(f, f);
    Eigen::VectorXd rhs(f);
    for (Eigen::Index r = 0; r < f; ++r) {
      rhs(r) = g(free[r], j);
      for (Eigen::Index c = 0; c < f; ++c) a(r, c) = g(free[r], free[c]) + (r == c ? lambda : 0.0);
    }
    const Eigen::VectorXd sol = a.fullPivLu().solve(rhs);
    for (Eigen::Index r = 0; r < f; ++r) w(free[r], j) = sol(r);
  }
  return w;
}

inline PropertyResult ease_reference_suite(std::size_t instances, std::uint64_t seed, double threshold = 1e-8) {
  Rng rng(derive_seed(seed, "ease"));
  PropertyResult r{"ease_closed_form", instances, 0.0, threshold, false, 0};
  for (std::size_t t = 0; t < instances; ++t) {
    const auto x = random_binary(rng, 6, 5, 0.4);
    const double lambda = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
    r.worst = std::max(r.worst, (ease_fit(x, lambda).weights - ease_reference(x, lambda)).cwiseAbs().maxCoeff());
  }
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(5, 5);
  const double identity_max = ease_fit(id, 1.0).weights.cwiseAbs().maxCoeff();
  if (identity_max != 0.0) r.worst = std::max(r.worst, std::numeric_limits<double>::infinity());
  return r;
}

struct EaseEquivalenceResults {
  PropertyResult scale;
  PropertyResult optimizer;
};

inline EaseEquivalenceResults ease_equivalence_suite(std::size_t instances, std::uint64_t seed, double scale_threshold = 1e-10,
                                      double optimizer_threshold = 1e-4) {
  Rng rng(derive_seed(seed, "ease_equivalence"));
  const double alphas[] = {0.1, 0.3, 0.6};
  EaseEquivalenceResults out{{"ease_equivalence_scale", instances, 0.0, scale_threshold, false, 0},
                      {"ease_equivalence_optimizer", instances, 0.0, optimizer_threshold, false, 0}};
  for (std::size_t t = 0; t < instances; ++t) {
    const auto x = random_binary(rng, uniform_size(rng, 3, 12), uniform_size(rng, 2, 8), 0.4);
    const double lambda = std::uniform_real_distribution<double>(0.5, 10.0)(rng);
    const auto rep = check_ease_equivalence(x, lambda, pick_one(rng, alphas));
    out.scale.worst = std::max(out.scale.worst, rep.scale_deviation);
    out.optimizer.worst = std::max(out.optimizer.worst, rep.optimizer_deviation);
  }
  return out;
}

// ---------------------------------------------------------------------------
// metrics

struct BruteForceMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
};

/// Sorts every unmasked item with a plain comparator and scores the first k.
inline BruteForceMetrics brute_force_metrics(const std::vector<double>& scores, const std::vector<Index>& masked,
                                             const std::vector<Index>& test, std::size_t k) {
  std::vector<Index> order;
  for (Index i = 0; i < scores.size(); ++i)
    if (std::find(masked.begin(), masked.end(), i) == masked.end()) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  if (order.size() > k) order.resize(k);
  BruteForceMetrics m;
  double hits = 0.0, dcg = 0.0, idcg = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (std::find(test.begin(), test.end(), order[r]) != test.end()) {
      hits += 1.0;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  for (std::size_t r = 0; r < std::min(k, test.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  m.recall = hits / static_cast<double>(test.size());
  m.ndcg = dcg / idcg;
  return m;
}

/// Counts instances where the library metrics differ from the brute-force
/// reference, or change under a strictly increasing transform of the scores.
inline PropertyResult metric_oracle_suite(std::size_t instances, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "metrics"));
  PropertyResult r{"metric_oracle", instances, 0.0, 0.0, false, 0};
  for (std::size_t t = 0; t < instances; ++t) {
    const auto n = uniform_size(rng, 3, 40);
    std::vector<Index> items(n);
    std::iota(items.begin(), items.end(), Index{0});
    std::shuffle(items.begin(), items.end(), rng);
    const auto n_masked = uniform_size(rng, 0, n - 2);
    const auto n_test = uniform_size(rng, 1, n - n_masked - 1);
    std::vector<Index> masked(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_masked));
    std::vector<Index> test(items.begin() + static_cast<std::ptrdiff_t>(n_masked),
                            items.begin() + static_cast<std::ptrdiff_t>(n_masked + n_test));
    std::sort(masked.begin(), masked.end());
    std::sort(test.begin(), test.end());
    // few distinct values so ties are common
    std::uniform_int_distribution<int> level(-5, 5);
    std::vector<double> scores(n), warped(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = level(rng);
      warped[i] = 3.0 * scores[i] * scores[i] * scores[i] + 7.0;
    }
    const auto k = uniform_size(rng, 1, n);

    const auto ref = brute_force_metrics(scores, masked, test, k);
    const auto topk = rank_top_k(scores, masked, k);
    const auto topk_warped = rank_top_k(warped, masked, k);
    bool ok = recall_at_k(topk, test) == ref.recall && ndcg_at_k(topk, test) == ref.ndcg && topk == topk_warped;
    for (Index i : topk) ok = ok && !std::binary_search(masked.begin(), masked.end(), i);
    if (!ok) r.worst += 1.0;
  }
  return r;
}

}  // namespace recloss
