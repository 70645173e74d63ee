#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "recloss/data.hpp"

namespace recloss {

/// Scores participating in one positive term: the positive item, N unlabeled
/// draws and (for the debiased losses) M extra draws from the user's positives.
struct ScoreBundle {
  double pos = 0.0;
  std::vector<double> unlabeled;
  std::vector<double> extra_pos;
};

/// Loss value plus its partial derivative with respect to every input score.
struct LossEvaluation {
  double value = 0.0;
  double d_pos = 0.0;
  std::vector<double> d_unlabeled;
  std::vector<double> d_extra_pos;
};

struct InfoNCEPlusParams {
  double lambda = 1.0;
  double epsilon = 1.0;
};

struct CCLParams {
  double negative_weight = 1.0;
  double margin = 0.9;
};

enum class TauPlusMode { top_k, proportional };

struct DebiasParams {
  TauPlusMode tau_plus_mode = TauPlusMode::top_k;
  std::size_t k = 20;
  double alpha = 0.0;
  double lambda_n = 1.0;
  double temperature = 1.0;
  /// Floor the negative-mass estimate of debiased InfoNCE at exp(-1/t).
  bool clamp_floor_enabled = true;
  /// Floor the correction term of debiased CCL at zero (off by default).
  bool ccl_floor_at_zero = false;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// class prior

inline constexpr double kTauPlusCeiling = 1.0 - 1e-6;

/// tau_u+ from the user's positive count. Throws ConfigError when the
/// configured prior reaches 1 (no room left for negatives).
inline double compute_tau_plus(std::size_t num_positives, std::size_t num_items,
                               const DebiasParams& p) {
  if (num_positives == 0) throw std::invalid_argument("tau+ needs at least one positive");
  if (num_items == 0) throw std::invalid_argument("tau+ needs a non-empty catalog");
  double tau = 0.0;
  const auto n = static_cast<double>(num_positives);
  const auto items = static_cast<double>(num_items);
  switch (p.tau_plus_mode) {
    case TauPlusMode::top_k: tau = (n + static_cast<double>(p.k)) / items; break;
    case TauPlusMode::proportional:
      if (p.alpha < 0.0) throw ConfigError("proportional tau+ requires alpha >= 0");
      tau = (1.0 + p.alpha) * n / items;
      break;
  }
  if (tau >= 1.0)
    throw ConfigError("class prior tau+ = " + std::to_string(tau) +
                      " >= 1; reduce K/alpha for this catalog");
  return std::clamp(tau, std::numeric_limits<double>::min(), kTauPlusCeiling);
}

inline double compute_tau_plus(const InteractionDataset& ds, Index u, const DebiasParams& p) {
  return compute_tau_plus(ds.train_positives[u].size(), ds.num_items, p);
}

// ---------------------------------------------------------------------------
// numerics

namespace detail {

inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double max_of(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  return m;
}

inline void require_unlabeled(const ScoreBundle& b, std::string_view loss) {
  if (b.unlabeled.empty())
    throw std::invalid_argument(std::string(loss) + " needs at least one unlabeled score");
}

inline void require_extra(const ScoreBundle& b, std::string_view loss) {
  if (b.extra_pos.empty())
    throw std::invalid_argument(std::string(loss) +
                                " needs M >= 1 positive samples; use the biased loss instead");
}

inline LossEvaluation shaped_like(const ScoreBundle& b) {
  LossEvaluation e;
  e.d_unlabeled.assign(b.unlabeled.size(), 0.0);
  e.d_extra_pos.assign(b.extra_pos.size(), 0.0);
  return e;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// biased losses

/// sum_j log(1 + exp(s_j - s_pos))
inline LossEvaluation bpr(const ScoreBundle& b) {
  detail::require_unlabeled(b, "bpr");
  auto e = detail::shaped_like(b);
  for (std::size_t j = 0; j < b.unlabeled.size(); ++j) {
    const double gap = b.unlabeled[j] - b.pos;
    e.value += detail::softplus(gap);
    const double g = detail::sigmoid(gap);
    e.d_unlabeled[j] = g;
    e.d_pos -= g;
  }
  return e;
}

/// -(s_pos - lambda * log(eps * exp(s_pos) + sum_j exp(s_j)))
inline LossEvaluation infonce_plus(const ScoreBundle& b, const InfoNCEPlusParams& p) {
  detail::require_unlabeled(b, "infonce_plus");
  auto e = detail::shaped_like(b);
  double m = detail::max_of(b.unlabeled);
  if (p.epsilon > 0) m = std::max(m, b.pos);
  const double pos_w = p.epsilon > 0 ? p.epsilon * std::exp(b.pos - m) : 0.0;
  double z = pos_w;
  for (std::size_t j = 0; j < b.unlabeled.size(); ++j) {
    e.d_unlabeled[j] = std::exp(b.unlabeled[j] - m);
    z += e.d_unlabeled[j];
  }
  const double log_partition = m + std::log(z);
  e.value = p.lambda * log_partition - b.pos;
  e.d_pos = -1.0 + p.lambda * pos_w / z;
  for (auto& d : e.d_unlabeled) d *= p.lambda / z;
  return e;
}

/// -log(exp(s_pos) / (exp(s_pos) + sum_j exp(s_j)))
inline LossEvaluation sampled_softmax(const ScoreBundle& b) {
  return infonce_plus(b, {1.0, 1.0});
}

inline LossEvaluation infonce(const ScoreBundle& b) { return infonce_plus(b, {1.0, 1.0}); }

/// Decoupled form -(s_pos - log sum_j exp(s_j)). With `normalized` the MINE
/// expectation form is reported instead, which is lower by log N; gradients
/// are identical.
inline LossEvaluation mine(const ScoreBundle& b, bool normalized = false) {
  auto e = infonce_plus(b, {1.0, 0.0});
  if (normalized) e.value -= std::log(static_cast<double>(b.unlabeled.size()));
  return e;
}

inline LossEvaluation dcl(const ScoreBundle& b) { return mine(b, false); }

/// -(s_pos - lambda * log sum_j exp(s_j)); meant for cosine/temperature scores.
inline LossEvaluation mine_plus(const ScoreBundle& b, double lambda) {
  return infonce_plus(b, {lambda, 0.0});
}

/// (1 - s_pos) + (w/N) sum_j max(0, s_j - margin)
inline LossEvaluation ccl(const ScoreBundle& b, const CCLParams& p) {
  detail::require_unlabeled(b, "ccl");
  auto e = detail::shaped_like(b);
  const double scale = p.negative_weight / static_cast<double>(b.unlabeled.size());
  double hinge = 0.0;
  for (std::size_t j = 0; j < b.unlabeled.size(); ++j) {
    const double over = b.unlabeled[j] - p.margin;
    if (over > 0) {
      hinge += over;
      e.d_unlabeled[j] = scale;
    }
  }
  e.value = (1.0 - b.pos) + scale * hinge;
  e.d_pos = -1.0;
  return e;
}

/// (1 - s_pos)^2 + (lambda_neg/N) sum_j s_j^2. N may be zero.
inline LossEvaluation mse_pointwise(const ScoreBundle& b, double lambda_neg) {
  auto e = detail::shaped_like(b);
  e.value = (1.0 - b.pos) * (1.0 - b.pos);
  e.d_pos = -2.0 * (1.0 - b.pos);
  if (!b.unlabeled.empty()) {
    const double scale = lambda_neg / static_cast<double>(b.unlabeled.size());
    for (std::size_t j = 0; j < b.unlabeled.size(); ++j) {
      e.value += scale * b.unlabeled[j] * b.unlabeled[j];
      e.d_unlabeled[j] = 2.0 * scale * b.unlabeled[j];
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// debiased losses

/// Debiased InfoNCE. The negative mass is estimated as
///   g = (mean_j e^{s_j} - tau+ mean_k e^{s_k}) / tau-
/// and floored at exp(-1/t) when clamping is enabled; a floored g carries no
/// gradient into the sample scores.
inline LossEvaluation debiased_infonce(const ScoreBundle& b, const DebiasParams& d, double tau_plus) {
  detail::require_unlabeled(b, "debiased_infonce");
  detail::require_extra(b, "debiased_infonce");
  if (!(tau_plus >= 0.0 && tau_plus < 1.0))
    throw std::invalid_argument("debiased_infonce requires tau+ in [0, 1)");
  auto e = detail::shaped_like(b);
  const double tau_minus = 1.0 - tau_plus;
  const auto n = static_cast<double>(b.unlabeled.size());
  const auto m_count = static_cast<double>(b.extra_pos.size());

  // Everything below is scaled by exp(-shift) to keep the exponentials finite.
  const double shift = std::max({b.pos, detail::max_of(b.unlabeled), detail::max_of(b.extra_pos)});
  double mean_unl = 0.0;
  for (std::size_t j = 0; j < b.unlabeled.size(); ++j) {
    e.d_unlabeled[j] = std::exp(b.unlabeled[j] - shift);
    mean_unl += e.d_unlabeled[j];
  }
  mean_unl /= n;
  double mean_pos = 0.0;
  for (std::size_t k = 0; k < b.extra_pos.size(); ++k) {
    e.d_extra_pos[k] = std::exp(b.extra_pos[k] - shift);
    mean_pos += e.d_extra_pos[k];
  }
  mean_pos /= m_count;

  const double g_scaled = (mean_unl - tau_plus * mean_pos) / tau_minus;
  const double floor_scaled = std::exp(-1.0 / d.temperature - shift);
  const bool clamped = d.clamp_floor_enabled && g_scaled < floor_scaled;
  const double g_used = clamped ? floor_scaled : g_scaled;

  const double pos_scaled = std::exp(b.pos - shift);
  const double denom = pos_scaled + d.lambda_n * g_used;
  if (!(denom > 0.0))
    throw std::domain_error("debiased_infonce: negative-mass estimate drove the partition <= 0");
  e.value = std::log(denom) + shift - b.pos;
  e.d_pos = pos_scaled / denom - 1.0;
  if (clamped) {
    std::fill(e.d_unlabeled.begin(), e.d_unlabeled.end(), 0.0);
    std::fill(e.d_extra_pos.begin(), e.d_extra_pos.end(), 0.0);
  } else {
    const double c = d.lambda_n / (denom * tau_minus);
    for (auto& x : e.d_unlabeled) x *= c / n;
    for (auto& x : e.d_extra_pos) x *= -c * tau_plus / m_count;
  }
  return e;
}

/// tau+ (1 - s_pos) + lambda_n (mean_j relu(s_j - margin) - tau+ mean_k relu(s_k - margin))
/// Unclamped unless DebiasParams::ccl_floor_at_zero is set.
inline LossEvaluation debiased_ccl(const ScoreBundle& b, const CCLParams& p, const DebiasParams& d,
                                   double tau_plus) {
  detail::require_unlabeled(b, "debiased_ccl");
  detail::require_extra(b, "debiased_ccl");
  auto e = detail::shaped_like(b);
  const auto n = static_cast<double>(b.unlabeled.size());
  const auto m_count = static_cast<double>(b.extra_pos.size());
  double unl = 0.0;
  for (std::size_t j = 0; j < b.unlabeled.size(); ++j) {
    const double over = b.unlabeled[j] - p.margin;
    if (over > 0) {
      unl += over;
      e.d_unlabeled[j] = d.lambda_n / n;
    }
  }
  double pos = 0.0;
  for (std::size_t k = 0; k < b.extra_pos.size(); ++k) {
    const double over = b.extra_pos[k] - p.margin;
    if (over > 0) {
      pos += over;
      e.d_extra_pos[k] = -d.lambda_n * tau_plus / m_count;
    }
  }
  double correction = d.lambda_n * (unl / n - tau_plus * pos / m_count);
  if (d.ccl_floor_at_zero && correction < 0.0) {
    correction = 0.0;
    std::fill(e.d_unlabeled.begin(), e.d_unlabeled.end(), 0.0);
    std::fill(e.d_extra_pos.begin(), e.d_extra_pos.end(), 0.0);
  }
  e.value = tau_plus * (1.0 - b.pos) + correction;
  e.d_pos = -tau_plus;
  return e;
}

/// tau+ (1 - s_pos)^2 + lambda (mean_j s_j^2 - tau+ mean_k s_k^2)
inline LossEvaluation debiased_mse(const ScoreBundle& b, double tau_plus, double lambda) {
  detail::require_unlabeled(b, "debiased_mse");
  detail::require_extra(b, "debiased_mse");
  auto e = detail::shaped_like(b);
  const auto n = static_cast<double>(b.unlabeled.size());
  const auto m_count = static_cast<double>(b.extra_pos.size());
  double unl = 0.0;
  for (std::size_t j = 0; j < b.unlabeled.size(); ++j) {
    unl += b.unlabeled[j] * b.unlabeled[j];
    e.d_unlabeled[j] = 2.0 * lambda * b.unlabeled[j] / n;
  }
  double pos = 0.0;
  for (std::size_t k = 0; k < b.extra_pos.size(); ++k) {
    pos += b.extra_pos[k] * b.extra_pos[k];
    e.d_extra_pos[k] = -2.0 * lambda * tau_plus * b.extra_pos[k] / m_count;
  }
  e.value = tau_plus * (1.0 - b.pos) * (1.0 - b.pos) + lambda * (unl / n - tau_plus * pos / m_count);
  e.d_pos = -2.0 * tau_plus * (1.0 - b.pos);
  return e;
}

inline LossEvaluation debiased_mse(const ScoreBundle& b, const DebiasParams& /*d*/, double tau_plus,
                                   double lambda) {
  return debiased_mse(b, tau_plus, lambda);
}

// ---------------------------------------------------------------------------
// configuration-driven dispatch

enum class LossKind {
  bpr,
  softmax,
  infonce,
  infonce_plus,
  dcl,
  mine,
  mine_plus,
  ccl,
  mse,
  debiased_infonce,
  debiased_ccl,
  debiased_mse,
};

inline constexpr LossKind kAllLossKinds[] = {
    LossKind::bpr,          LossKind::softmax,          LossKind::infonce,
    LossKind::infonce_plus, LossKind::dcl,              LossKind::mine,
    LossKind::mine_plus,    LossKind::ccl,              LossKind::mse,
    LossKind::debiased_infonce, LossKind::debiased_ccl, LossKind::debiased_mse,
};

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::bpr: return "bpr";
    case LossKind::softmax: return "softmax";
    case LossKind::infonce: return "infonce";
    case LossKind::infonce_plus: return "infonce_plus";
    case LossKind::dcl: return "dcl";
    case LossKind::mine: return "mine";
    case LossKind::mine_plus: return "mine_plus";
    case LossKind::ccl: return "ccl";
    case LossKind::mse: return "mse";
    case LossKind::debiased_infonce: return "debiased_infonce";
    case LossKind::debiased_ccl: return "debiased_ccl";
    case LossKind::debiased_mse: return "debiased_mse";
  }
  return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
  for (LossKind k : kAllLossKinds)
    if (to_string(k) == s) return k;
  if (s == "mine+") return LossKind::mine_plus;
  if (s == "infonce+") return LossKind::infonce_plus;
  throw std::invalid_argument("unknown loss kind '" + std::string(s) + "'");
}

inline bool is_debiased(LossKind k) {
  return k == LossKind::debiased_infonce || k == LossKind::debiased_ccl ||
         k == LossKind::debiased_mse;
}

/// Losses whose natural score is a (temperature-scaled) cosine.
inline bool prefers_cosine(LossKind k) {
  return k == LossKind::mine_plus || k == LossKind::ccl || k == LossKind::debiased_ccl ||
         k == LossKind::debiased_infonce;
}

struct LossConfig {
  LossKind kind = LossKind::infonce;
  InfoNCEPlusParams infonce_plus{1.0, 0.0};
  double mine_plus_lambda = 1.1;
  bool mine_normalized = false;
  CCLParams ccl{};
  DebiasParams debias{};
  /// Negative-term weight of the (debiased) MSE losses.
  double mse_negative_weight = 1.0;
};

inline LossEvaluation evaluate_loss(const LossConfig& c, const ScoreBundle& b, double tau_plus = 0.0) {
  switch (c.kind) {
    case LossKind::bpr: return bpr(b);
    case LossKind::softmax: return sampled_softmax(b);
    case LossKind::infonce: return infonce(b);
    case LossKind::infonce_plus: return infonce_plus(b, c.infonce_plus);
    case LossKind::dcl: return dcl(b);
    case LossKind::mine: return mine(b, c.mine_normalized);
    case LossKind::mine_plus: return mine_plus(b, c.mine_plus_lambda);
    case LossKind::ccl: return ccl(b, c.ccl);
    case LossKind::mse: return mse_pointwise(b, c.mse_negative_weight);
    case LossKind::debiased_infonce: return debiased_infonce(b, c.debias, tau_plus);
    case LossKind::debiased_ccl: return debiased_ccl(b, c.ccl, c.debias, tau_plus);
    case LossKind::debiased_mse: return debiased_mse(b, tau_plus, c.mse_negative_weight);
  }
  throw std::logic_error("unhandled loss kind");
}

}  // namespace recloss
