#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "recloss/data.hpp"
#include "recloss/losses.hpp"
#include "recloss/mf.hpp"

namespace recloss {

/// Dense binary user x item matrix of the train partition.
inline Eigen::MatrixXd dense_interactions(const InteractionDataset& ds) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.num_users),
                                            static_cast<Eigen::Index>(ds.num_items));
  for (std::size_t u = 0; u < ds.num_users; ++u)
    for (Index i : ds.train_positives[u]) x(static_cast<Eigen::Index>(u), i) = 1.0;
  return x;
}

/// Inverse of dense_interactions: nonzero entries become train positives.
inline InteractionDataset dataset_from_dense(const Eigen::MatrixXd& x) {
  PerUserLists train(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index u = 0; u < x.rows(); ++u)
    for (Eigen::Index i = 0; i < x.cols(); ++i)
      if (x(u, i) != 0.0) train[static_cast<std::size_t>(u)].push_back(static_cast<Index>(i));
  return make_dataset(std::move(train), {}, static_cast<std::size_t>(x.rows()),
                      static_cast<std::size_t>(x.cols()));
}

namespace detail {

inline PerUserLists users_by_item(const InteractionDataset& ds) {
  PerUserLists by_item(ds.num_items);
  for (std::size_t u = 0; u < ds.num_users; ++u)
    for (Index i : ds.train_positives[u]) by_item[i].push_back(static_cast<Index>(u));
  return by_item;
}

inline Eigen::VectorXd spd_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw std::runtime_error("ridge system is not positive definite");
  return llt.solve(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// iALS

struct IALSConfig {
  std::size_t dim = 8;
  double alpha0 = 0.1;
  double lambda = 0.01;
  double nu = 1.0;
  /// Per-user positive weight for the debiased objective; empty means 1.
  std::vector<double> c_u;
  std::size_t sweeps = 10;
  double init_std = 0.1;
  std::uint64_t seed = 0;

  double c(std::size_t u) const { return c_u.empty() ? 1.0 : c_u[u]; }
};

struct IALSState {
  Matrix user_factors;  // W, num_users x d
  Matrix item_factors;  // H, num_items x d
  std::vector<double> objective_trace;  // initial value, then one per sweep

  ScoringModel as_model() const { return {user_factors, item_factors, ScoreMode::dot, 1.0}; }
};

inline double ials_user_reg(const InteractionDataset& ds, const IALSConfig& cfg, std::size_t u) {
  return cfg.lambda * std::pow(static_cast<double>(ds.train_positives[u].size()) +
                                   cfg.alpha0 * static_cast<double>(ds.num_items),
                               cfg.nu);
}

inline double ials_item_reg(const InteractionDataset& ds, const IALSConfig& cfg, std::size_t i) {
  return cfg.lambda * std::pow(static_cast<double>(ds.item_popularity[i]) +
                                   cfg.alpha0 * static_cast<double>(ds.num_users),
                               cfg.nu);
}

/// Original objective:
///   sum_S (y-1)^2 + a0 sum_{u,i} y^2 + lambda (sum_u reg_u |w_u|^2 + sum_i reg_i |h_i|^2)
/// Debiased objective replaces the observed term by
///   sum_S [c_u (y-1)^2 - c_u a0 y^2].
inline double ials_objective(const InteractionDataset& ds, const Matrix& w, const Matrix& h,
                             const IALSConfig& cfg, bool debiased) {
  double obs = 0.0;
  for (std::size_t u = 0; u < ds.num_users; ++u) {
    const double c = debiased ? cfg.c(u) : 1.0;
    for (Index i : ds.train_positives[u]) {
      const double y = w.row(static_cast<Eigen::Index>(u)).dot(h.row(i));
      obs += c * (y - 1.0) * (y - 1.0);
      if (debiased) obs -= c * cfg.alpha0 * y * y;
    }
  }
  const Eigen::MatrixXd gw = w.transpose() * w;
  const Eigen::MatrixXd gh = h.transpose() * h;
  const double all = cfg.alpha0 * gw.cwiseProduct(gh).sum();
  double reg = 0.0;
  for (std::size_t u = 0; u < ds.num_users; ++u)
    reg += ials_user_reg(ds, cfg, u) * w.row(static_cast<Eigen::Index>(u)).squaredNorm();
  for (std::size_t i = 0; i < ds.num_items; ++i)
    reg += ials_item_reg(ds, cfg, i) * h.row(static_cast<Eigen::Index>(i)).squaredNorm();
  return obs + all + reg;
}

/// Alternating exact ridge solves. Each half-sweep minimizes the selected
/// objective over one side with the other fixed, so the objective trace is
/// non-increasing.
///
/// user:  ((a+b) H_S^T H_S + a0 H^T H + reg_u I) w_u = a H_S^T 1
/// item:  (sum_{u in U_i} (a_u+b_u) w_u w_u^T + a0 W^T W + reg_i I) h_i = sum a_u w_u
/// with (a, b) = (1, 0) for the original and (c_u, -c_u a0) for the debiased objective.
inline IALSState ials_fit(const InteractionDataset& ds, const IALSConfig& cfg, bool debiased) {
  if (cfg.sweeps == 0) throw ConfigError("iALS needs at least one sweep");
  if (cfg.dim == 0) throw ConfigError("iALS dimension must be >= 1");
  if (!(cfg.lambda > 0.0)) throw ConfigError("iALS lambda must be > 0");
  if (cfg.alpha0 < 0.0) throw ConfigError("iALS alpha0 must be >= 0");
  if (debiased && !(cfg.alpha0 < 1.0)) throw ConfigError("debiased iALS requires alpha0 < 1");
  if (!cfg.c_u.empty() && cfg.c_u.size() != ds.num_users) throw ConfigError("c_u must have one entry per user");
  for (double c : cfg.c_u)
    if (!(c > 0.0)) throw ConfigError("c_u must be > 0");

  const auto d = static_cast<Eigen::Index>(cfg.dim);
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, cfg.init_std);
  IALSState st;
  st.user_factors.resize(static_cast<Eigen::Index>(ds.num_users), d);
  st.item_factors.resize(static_cast<Eigen::Index>(ds.num_items), d);
  for (Eigen::Index k = 0; k < st.user_factors.size(); ++k) st.user_factors.data()[k] = gauss(rng);
  for (Eigen::Index k = 0; k < st.item_factors.size(); ++k) st.item_factors.data()[k] = gauss(rng);

  const auto by_item = detail::users_by_item(ds);
  auto weights = [&](std::size_t u) {
    const double c = debiased ? cfg.c(u) : 1.0;
    const double a = c;
    const double b = debiased ? -c * cfg.alpha0 : 0.0;
    return std::pair{a, b};
  };

  st.objective_trace.push_back(ials_objective(ds, st.user_factors, st.item_factors, cfg, debiased));
  for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
    Eigen::MatrixXd gram = cfg.alpha0 * (st.item_factors.transpose() * st.item_factors);
    for (std::size_t u = 0; u < ds.num_users; ++u) {
      const auto [a, b] = weights(u);
      Eigen::MatrixXd lhs = gram;
      lhs.diagonal().array() += ials_user_reg(ds, cfg, u);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
      for (Index i : ds.train_positives[u]) {
        auto hi = st.item_factors.row(i).transpose();
        lhs.noalias() += (a + b) * hi * hi.transpose();
        rhs += a * hi;
      }
      st.user_factors.row(static_cast<Eigen::Index>(u)) = detail::spd_solve(lhs, rhs).transpose();
    }
    gram = cfg.alpha0 * (st.user_factors.transpose() * st.user_factors);
    for (std::size_t i = 0; i < ds.num_items; ++i) {
      Eigen::MatrixXd lhs = gram;
      lhs.diagonal().array() += ials_item_reg(ds, cfg, i);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
      for (Index u : by_item[i]) {
        const auto [a, b] = weights(u);
        auto wu = st.user_factors.row(u).transpose();
        lhs.noalias() += (a + b) * wu * wu.transpose();
        rhs += a * wu;
      }
      st.item_factors.row(static_cast<Eigen::Index>(i)) = detail::spd_solve(lhs, rhs).transpose();
    }
    st.objective_trace.push_back(ials_objective(ds, st.user_factors, st.item_factors, cfg, debiased));
  }
  return st;
}

// ---------------------------------------------------------------------------
// Debiased iALS closed forms are rescaled original-form solutions

struct IalsEquivalenceReport {
  /// Printed closed form (rhs sqrt(c) H_S 1) vs original form / (sqrt(c)(1-a0)).
  double printed_form_deviation = 0.0;
  /// Exact minimizer (rhs c H_S 1) vs original form / (1-a0).
  double solver_form_deviation = 0.0;
  std::size_t systems_checked = 0;
  std::size_t ill_conditioned = 0;

  double max_deviation() const { return std::max(printed_form_deviation, solver_form_deviation); }
};

/// For random factor matrices, compares each user's (and item's) debiased
/// ridge solution against the original-form solution with
///   a0' = a0 / ((1-a0) c),   reg' = reg / ((1-a0) c).
/// The original-form systems are solved with a QR factorization, independent
/// of the Cholesky path used for the debiased side.
inline IalsEquivalenceReport check_ials_equivalence(const InteractionDataset& ds, std::size_t dim, double alpha0,
                                     double lambda, double nu, double c, std::uint64_t seed) {
  if (!(alpha0 < 1.0) || alpha0 < 0.0) throw ConfigError("iALS equivalence check requires 0 <= alpha0 < 1");
  if (!(c > 0.0)) throw ConfigError("iALS equivalence check requires c_u > 0");
  const auto d = static_cast<Eigen::Index>(dim);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd h(static_cast<Eigen::Index>(ds.num_items), d);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(ds.num_users), d);
  for (Eigen::Index k = 0; k < h.size(); ++k) h.data()[k] = gauss(rng);
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = gauss(rng);

  IALSConfig cfg;
  cfg.alpha0 = alpha0;
  cfg.lambda = lambda;
  cfg.nu = nu;
  const double scale = (1.0 - alpha0) * c;
  const double alpha0_prime = alpha0 / scale;
  const double k_printed = 1.0 / (std::sqrt(c) * (1.0 - alpha0));
  const double k_solver = 1.0 / (1.0 - alpha0);

  IalsEquivalenceReport rep;
  auto compare = [&](const Eigen::MatrixXd& observed, const Eigen::MatrixXd& all, double reg) {
    const Eigen::MatrixXd gram_obs = observed.transpose() * observed;
    const Eigen::MatrixXd gram_all = all.transpose() * all;
    const Eigen::VectorXd ones_proj = observed.transpose() * Eigen::VectorXd::Ones(observed.rows());
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);

    Eigen::MatrixXd lhs_deb = scale * gram_obs + alpha0 * gram_all + reg * id;
    Eigen::LLT<Eigen::MatrixXd> llt(lhs_deb);
    Eigen::MatrixXd lhs_orig = gram_obs + alpha0_prime * gram_all + (reg / scale) * id;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(lhs_orig);
    ++rep.systems_checked;
    if (llt.info() != Eigen::Success || qr.rank() < d) {
      ++rep.ill_conditioned;
      return;
    }
    const Eigen::VectorXd printed = llt.solve(std::sqrt(c) * ones_proj);
    const Eigen::VectorXd exact = llt.solve(c * ones_proj);
    const Eigen::VectorXd orig = qr.solve(ones_proj);
    auto rel = [](const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
      const double n = ref.norm();
      return n > 0.0 ? (a - ref).norm() / n : (a - ref).norm();
    };
    rep.printed_form_deviation = std::max(rep.printed_form_deviation, rel(printed, k_printed * orig));
    rep.solver_form_deviation = std::max(rep.solver_form_deviation, rel(exact, k_solver * orig));
  };

  for (std::size_t u = 0; u < ds.num_users; ++u) {
    const auto& items = ds.train_positives[u];
    Eigen::MatrixXd hs(static_cast<Eigen::Index>(items.size()), d);
    for (std::size_t r = 0; r < items.size(); ++r) hs.row(static_cast<Eigen::Index>(r)) = h.row(items[r]);
    compare(hs, h, ials_user_reg(ds, cfg, u));
  }
  const auto by_item = detail::users_by_item(ds);
  for (std::size_t i = 0; i < ds.num_items; ++i) {
    const auto& users = by_item[i];
    Eigen::MatrixXd ws(static_cast<Eigen::Index>(users.size()), d);
    for (std::size_t r = 0; r < users.size(); ++r) ws.row(static_cast<Eigen::Index>(r)) = w.row(users[r]);
    compare(ws, w, ials_item_reg(ds, cfg, i));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// EASE

inline constexpr std::size_t kDefaultEaseItemBudget = 30000;

struct EASESolution {
  Eigen::MatrixXd weights;  // item x item, zero diagonal
  Eigen::MatrixXd inverse;  // P = (X^T X + lambda I)^-1
};

/// W = scale * (I - P dMat(1 / diag(P))), P = (G + lambda I)^-1, diag(W) = 0.
inline EASESolution ease_from_gram(const Eigen::MatrixXd& gram, double lambda, double scale = 1.0) {
  if (!(lambda > 0.0)) throw ConfigError("EASE lambda must be > 0");
  const Eigen::Index n = gram.rows();
  Eigen::MatrixXd reg = gram;
  reg.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) throw std::runtime_error("EASE: Gram matrix factorization failed");
  EASESolution s;
  s.inverse = llt.solve(Eigen::MatrixXd::Identity(n, n));
  s.weights.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pjj = s.inverse(j, j);
    for (Eigen::Index i = 0; i < n; ++i) s.weights(i, j) = -scale * s.inverse(i, j) / pjj;
    s.weights(j, j) = 0.0;
  }
  if (!s.weights.allFinite()) throw std::runtime_error("EASE: non-finite weights (ill-conditioned system)");
  return s;
}

inline EASESolution ease_fit(const Eigen::MatrixXd& x, double lambda) {
  return ease_from_gram(x.transpose() * x, lambda);
}

inline void check_debias_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw ConfigError("debiased EASE requires 0 <= alpha < 1 (convexity requires c_u < 2)");
}

/// W_hat = (I - P_hat dMat(1 / diag(P_hat))) / (1 - alpha),
/// P_hat = (X^T X + lambda / (1 - alpha) I)^-1.
inline EASESolution ease_debiased_fit(const Eigen::MatrixXd& x, double lambda, double alpha) {
  check_debias_alpha(alpha);
  return ease_from_gram(x.transpose() * x, lambda / (1.0 - alpha), 1.0 / (1.0 - alpha));
}

/// Item-item Gram matrix accumulated from the sparse train lists.
inline Eigen::MatrixXd item_gram(const InteractionDataset& ds, std::size_t item_budget = kDefaultEaseItemBudget) {
  if (ds.num_items > item_budget)
    throw ConfigError("EASE: " + std::to_string(ds.num_items) + " items exceeds the item budget of " +
                      std::to_string(item_budget));
  const auto n = static_cast<Eigen::Index>(ds.num_items);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (const auto& items : ds.train_positives)
    for (Index a : items)
      for (Index b : items) g(a, b) += 1.0;
  return g;
}

inline EASESolution ease_fit(const InteractionDataset& ds, double lambda,
                             std::size_t item_budget = kDefaultEaseItemBudget) {
  return ease_from_gram(item_gram(ds, item_budget), lambda);
}

inline EASESolution ease_debiased_fit(const InteractionDataset& ds, double lambda, double alpha,
                                      std::size_t item_budget = kDefaultEaseItemBudget) {
  check_debias_alpha(alpha);
  return ease_from_gram(item_gram(ds, item_budget), lambda / (1.0 - alpha), 1.0 / (1.0 - alpha));
}

/// Scores a user as the sum of W rows over their train items (x_u W).
class EaseScorer {
 public:
  EaseScorer(const InteractionDataset& ds, Eigen::MatrixXd weights) : ds_(&ds), w_(std::move(weights)) {}
  std::size_t num_items() const { return static_cast<std::size_t>(w_.cols()); }
  void score_user(Index u, std::span<double> out) const {
    Eigen::Map<Eigen::VectorXd> row(out.data(), static_cast<Eigen::Index>(out.size()));
    row.setZero();
    for (Index i : ds_->train_positives[u]) row += w_.row(i).transpose();
  }
  const Eigen::MatrixXd& weights() const { return w_; }

 private:
  const InteractionDataset* ds_;
  Eigen::MatrixXd w_;
};

/// Off-diagonal residual of the Lagrangian stationarity condition
/// (X^T X + lambda I) W = X^T X - dMat(mu); the diagonal absorbs mu.
inline double ease_stationarity_residual(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, double lambda) {
  const Eigen::MatrixXd g = x.transpose() * x;
  Eigen::MatrixXd r = (g + lambda * Eigen::MatrixXd::Identity(g.rows(), g.cols())) * w - g;
  r.diagonal().setZero();
  return r.cwiseAbs().maxCoeff();
}

/// Minimizes |X - XW|^2 - alpha |XW|^2 + lambda |W|^2 subject to diag(W) = 0
/// column by column with conjugate gradients on the free (off-diagonal)
/// coordinates. Uses only gradient evaluations, no matrix inverse.
inline Eigen::MatrixXd minimize_debiased_ease_cg(const Eigen::MatrixXd& x, double lambda, double alpha,
                                                 double tol = 1e-14, std::size_t max_iter = 0) {
  const Eigen::MatrixXd g = x.transpose() * x;
  const Eigen::Index n = g.rows();
  if (max_iter == 0) max_iter = static_cast<std::size_t>(20 * n + 20);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    // Column objective (up to constants): (1-alpha) w^T G w - 2 g_j^T w + lambda |w|^2
    // Gradient: 2((1-alpha) G w + lambda w - g_j), projected onto w_j = 0.
    auto grad = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd gr = 2.0 * ((1.0 - alpha) * (g * v) + lambda * v - g.col(j));
      gr(j) = 0.0;
      return gr;
    };
    auto hess_apply = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd hp = 2.0 * ((1.0 - alpha) * (g * p) + lambda * p);
      hp(j) = 0.0;
      return hp;
    };
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r = -grad(v);
    Eigen::VectorXd p = r;
    const double r0 = std::max(r.norm(), 1e-300);
    for (std::size_t it = 0; it < max_iter && r.norm() > tol * r0; ++it) {
      const Eigen::VectorXd hp = hess_apply(p);
      const double step = r.squaredNorm() / p.dot(hp);
      v += step * p;
      // recompute the residual from the gradient to avoid drift
      const Eigen::VectorXd r_next = -grad(v);
      const double beta = r_next.squaredNorm() / r.squaredNorm();
      p = r_next + beta * p;
      r = r_next;
    }
    w.col(j) = v;
  }
  return w;
}

struct EaseEquivalenceReport {
  double scale_deviation = 0.0;      // debiased closed form vs rescaled EASE
  double optimizer_deviation = 0.0;  // debiased closed form vs CG minimizer
};

/// Relative max-abs difference; absolute when the reference is all zeros.
inline double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) {
  const double scale = ref.cwiseAbs().maxCoeff();
  const double diff = (a - ref).cwiseAbs().maxCoeff();
  return scale > 0.0 ? diff / scale : diff;
}

inline EaseEquivalenceReport check_ease_equivalence(const Eigen::MatrixXd& x, double lambda, double alpha) {
  check_debias_alpha(alpha);
  const auto debiased = ease_debiased_fit(x, lambda, alpha);
  const auto plain = ease_fit(x, lambda / (1.0 - alpha));
  EaseEquivalenceReport rep;
  rep.scale_deviation = max_rel_diff(debiased.weights, plain.weights / (1.0 - alpha));
  const Eigen::MatrixXd cg = minimize_debiased_ease_cg(x, lambda, alpha);
  rep.optimizer_deviation = (debiased.weights - cg).cwiseAbs().maxCoeff();
  return rep;
}

}  // namespace recloss
