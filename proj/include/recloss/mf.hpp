#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "recloss/data.hpp"
#include "recloss/eval.hpp"
#include "recloss/losses.hpp"
#include "recloss/sampling.hpp"

namespace recloss {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ScoreMode { dot, cosine };

inline constexpr double kNormFloor = 1e-12;

inline std::string to_string(ScoreMode m) { return m == ScoreMode::dot ? "dot" : "cosine"; }

/// User/item embedding tables plus the scoring rule. In cosine mode the score
/// is <v_u/|v_u|, v_i/|v_i|> / temperature.
struct ScoringModel {
  Matrix user_embeddings;
  Matrix item_embeddings;
  ScoreMode mode = ScoreMode::dot;
  double temperature = 1.0;

  std::size_t num_users() const { return static_cast<std::size_t>(user_embeddings.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(item_embeddings.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(user_embeddings.cols()); }

  void score_user(Index u, std::span<double> out) const {
    Eigen::Map<Eigen::VectorXd> row(out.data(), static_cast<Eigen::Index>(out.size()));
    if (mode == ScoreMode::dot) {
      row.noalias() = item_embeddings * user_embeddings.row(u).transpose();
      return;
    }
    const double un = std::max(user_embeddings.row(u).norm(), kNormFloor);
    row.noalias() = item_embeddings * user_embeddings.row(u).transpose();
    for (Eigen::Index i = 0; i < row.size(); ++i)
      row[i] /= un * std::max(item_embeddings.row(i).norm(), kNormFloor) * temperature;
  }
};

inline double score(const ScoringModel& m, Index u, Index i) {
  const double dot = m.user_embeddings.row(u).dot(m.item_embeddings.row(i));
  if (m.mode == ScoreMode::dot) return dot;
  const double un = std::max(m.user_embeddings.row(u).norm(), kNormFloor);
  const double in = std::max(m.item_embeddings.row(i).norm(), kNormFloor);
  return dot / (un * in * m.temperature);
}

/// Gaussian(0, init_std^2) entries, deterministic per seed.
inline ScoringModel init_model(std::size_t num_users, std::size_t num_items, std::size_t dim,
                               std::uint64_t seed, double init_std, ScoreMode mode = ScoreMode::dot,
                               double temperature = 1.0) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be >= 1");
  if (!(init_std > 0.0)) throw std::invalid_argument("init_std must be > 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, init_std);
  ScoringModel m;
  m.mode = mode;
  m.temperature = temperature;
  m.user_embeddings.resize(static_cast<Eigen::Index>(num_users), static_cast<Eigen::Index>(dim));
  m.item_embeddings.resize(static_cast<Eigen::Index>(num_items), static_cast<Eigen::Index>(dim));
  for (Eigen::Index k = 0; k < m.user_embeddings.size(); ++k) m.user_embeddings.data()[k] = gauss(rng);
  for (Eigen::Index k = 0; k < m.item_embeddings.size(); ++k) m.item_embeddings.data()[k] = gauss(rng);
  return m;
}

// ---------------------------------------------------------------------------
// gradient assembly

/// Sampled items for one positive (u, i) pair.
struct PairSamples {
  Index user = 0;
  Index item = 0;
  std::vector<Index> unlabeled;
  std::vector<Index> extra_pos;
  double tau_plus = 0.0;
};

/// Embedding gradients restricted to the rows a batch touched.
class BatchGradient {
 public:
  BatchGradient() = default;
  BatchGradient(std::size_t num_users, std::size_t num_items, std::size_t dim)
      : user_grad(Matrix::Zero(static_cast<Eigen::Index>(num_users), static_cast<Eigen::Index>(dim))),
        item_grad(Matrix::Zero(static_cast<Eigen::Index>(num_items), static_cast<Eigen::Index>(dim))),
        user_seen_(num_users, 0),
        item_seen_(num_items, 0) {}

  Matrix user_grad;
  Matrix item_grad;
  std::vector<Index> touched_users;
  std::vector<Index> touched_items;

  void touch_user(Index u) {
    if (!user_seen_[u]) {
      user_seen_[u] = 1;
      touched_users.push_back(u);
    }
  }
  void touch_item(Index i) {
    if (!item_seen_[i]) {
      item_seen_[i] = 1;
      touched_items.push_back(i);
    }
  }
  void clear() {
    for (Index u : touched_users) {
      user_grad.row(u).setZero();
      user_seen_[u] = 0;
    }
    for (Index i : touched_items) {
      item_grad.row(i).setZero();
      item_seen_[i] = 0;
    }
    touched_users.clear();
    touched_items.clear();
  }

 private:
  std::vector<char> user_seen_;
  std::vector<char> item_seen_;
};

namespace detail {

/// Adds coeff * d score(u, i) / d(v_u, v_i) to the gradient tables.
inline void add_score_grad(const ScoringModel& m, Index u, Index i, double coeff, BatchGradient& g) {
  auto vu = m.user_embeddings.row(u);
  auto vi = m.item_embeddings.row(i);
  if (m.mode == ScoreMode::dot) {
    g.user_grad.row(u).noalias() += coeff * vi;
    g.item_grad.row(i).noalias() += coeff * vu;
    return;
  }
  const double un = std::max(vu.norm(), kNormFloor);
  const double in = std::max(vi.norm(), kNormFloor);
  const double cos = vu.dot(vi) / (un * in);
  const double c = coeff / m.temperature;
  g.user_grad.row(u).noalias() += (c / un) * (vi / in - cos * vu / un);
  g.item_grad.row(i).noalias() += (c / in) * (vu / un - cos * vi / in);
}

}  // namespace detail

/// Mean loss over the batch pairs plus l2_weight / B * sum of squared norms of
/// every embedding row the batch touched. Fills `grad` (cleared first) when
/// provided. Returns {objective, mean data loss}.
struct BatchObjective {
  double objective = 0.0;
  double mean_loss = 0.0;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline BatchObjective batch_objective(const ScoringModel& m, std::span<const PairSamples> batch,
                                      const LossConfig& loss, double l2_weight, BatchGradient* grad) {
  if (batch.empty()) return {};
  if (grad) grad->clear();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  ScoreBundle bundle;
  double total = 0.0;
  for (const auto& p : batch) {
    bundle.pos = score(m, p.user, p.item);
    bundle.unlabeled.resize(p.unlabeled.size());
    for (std::size_t j = 0; j < p.unlabeled.size(); ++j) bundle.unlabeled[j] = score(m, p.user, p.unlabeled[j]);
    bundle.extra_pos.resize(p.extra_pos.size());
    for (std::size_t k = 0; k < p.extra_pos.size(); ++k) bundle.extra_pos[k] = score(m, p.user, p.extra_pos[k]);
    auto ev = evaluate_loss(loss, bundle, p.tau_plus);
    if (!std::isfinite(ev.value))
      throw NonFiniteLoss("non-finite loss for user " + std::to_string(p.user) + ", item " +
                          std::to_string(p.item) + " (positive score " + std::to_string(bundle.pos) + ")");
    total += ev.value;
    if (!grad) continue;
    grad->touch_user(p.user);
    grad->touch_item(p.item);
    detail::add_score_grad(m, p.user, p.item, ev.d_pos * inv_b, *grad);
    for (std::size_t j = 0; j < p.unlabeled.size(); ++j) {
      grad->touch_item(p.unlabeled[j]);
      if (ev.d_unlabeled[j] != 0.0)
        detail::add_score_grad(m, p.user, p.unlabeled[j], ev.d_unlabeled[j] * inv_b, *grad);
    }
    for (std::size_t k = 0; k < p.extra_pos.size(); ++k) {
      grad->touch_item(p.extra_pos[k]);
      if (ev.d_extra_pos[k] != 0.0)
        detail::add_score_grad(m, p.user, p.extra_pos[k], ev.d_extra_pos[k] * inv_b, *grad);
    }
  }
  BatchObjective out;
  out.mean_loss = total * inv_b;
  out.objective = out.mean_loss;
  if (l2_weight > 0.0) {
    // touched rows are needed for the penalty even without a gradient request
    BatchGradient local;
    const BatchGradient* rows = grad;
    if (!grad) {
      local = BatchGradient(m.num_users(), m.num_items(), 1);
      for (const auto& p : batch) {
        local.touch_user(p.user);
        local.touch_item(p.item);
        for (Index j : p.unlabeled) local.touch_item(j);
        for (Index k : p.extra_pos) local.touch_item(k);
      }
      rows = &local;
    }
    double sq = 0.0;
    for (Index u : rows->touched_users) sq += m.user_embeddings.row(u).squaredNorm();
    for (Index i : rows->touched_items) sq += m.item_embeddings.row(i).squaredNorm();
    out.objective += l2_weight * inv_b * sq;
    if (grad) {
      const double c = 2.0 * l2_weight * inv_b;
      for (Index u : grad->touched_users) grad->user_grad.row(u).noalias() += c * m.user_embeddings.row(u);
      for (Index i : grad->touched_items) grad->item_grad.row(i).noalias() += c * m.item_embeddings.row(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  Matrix user_m, user_v, item_m, item_v;
  std::uint64_t step = 0;

  static OptimizerState for_model(const ScoringModel& m) {
    OptimizerState s;
    s.user_m = Matrix::Zero(m.user_embeddings.rows(), m.user_embeddings.cols());
    s.user_v = s.user_m;
    s.item_m = Matrix::Zero(m.item_embeddings.rows(), m.item_embeddings.cols());
    s.item_v = s.item_m;
    return s;
  }
};

/// One bias-corrected Adam step applied lazily: only rows touched by the
/// batch have their moments and parameters updated.
inline void adam_step(ScoringModel& m, OptimizerState& s, const BatchGradient& g, double lr,
                      const AdamConfig& cfg = {}) {
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto update = [&](auto param, auto mom1, auto mom2, auto grad) {
    mom1 = cfg.beta1 * mom1 + (1.0 - cfg.beta1) * grad;
    mom2 = cfg.beta2 * mom2 + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (mom1.array() / c1) / ((mom2.array() / c2).sqrt() + cfg.eps);
  };
  for (Index u : g.touched_users)
    update(m.user_embeddings.row(u), s.user_m.row(u), s.user_v.row(u), g.user_grad.row(u));
  for (Index i : g.touched_items)
    update(m.item_embeddings.row(i), s.item_m.row(i), s.item_v.row(i), g.item_grad.row(i));
}

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  std::size_t embedding_dim = 64;
  std::size_t batch_size = 512;
  double initial_lr = 1e-4;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 3;
  double improvement_threshold = 1e-4;
  double min_lr = 1e-6;
  double l2_weight = 0.0;
  std::size_t max_epochs = 1000;
  std::uint64_t seed = 0;
  double init_std = 0.01;
  /// Empty means: cosine for losses that prefer it, dot otherwise.
  std::optional<ScoreMode> score_mode;
  double temperature = 1.0;
  std::size_t eval_k = 20;
  LossConfig loss{};
  SamplerConfig sampler{};
  AdamConfig adam{};

  ScoreMode resolved_mode() const {
    if (score_mode) return *score_mode;
    return prefers_cosine(loss.kind) ? ScoreMode::cosine : ScoreMode::dot;
  }

  void validate() const {
    if (embedding_dim == 0) throw ConfigError("train.embedding_dim must be >= 1");
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("train.plateau_factor must lie in (0, 1)");
    if (!(initial_lr > 0.0)) throw ConfigError("train.initial_lr must be > 0");
    if (!(min_lr < initial_lr)) throw ConfigError("train.min_lr must be < train.initial_lr");
    if (l2_weight < 0.0) throw ConfigError("train.l2_weight must be >= 0");
    if (!(temperature > 0.0)) throw ConfigError("train.temperature must be > 0");
    if (!(init_std > 0.0)) throw ConfigError("train.init_std must be > 0");
    if (eval_k == 0) throw ConfigError("train.eval_k must be >= 1");
    if (sampler.n_negatives == 0 && loss.kind != LossKind::mse)
      throw ConfigError("sampler.n_negatives must be >= 1 for loss " + to_string(loss.kind));
    if (is_debiased(loss.kind) && sampler.m_positives == 0)
      throw ConfigError("sampler.m_positives must be >= 1 for debiased losses");
    if (loss.debias.lambda_n <= 0.0) throw ConfigError("loss.lambda_n must be > 0");
  }
};

/// Reusable per-epoch state: samplers and buffers.
class EpochRunner {
 public:
  EpochRunner(const InteractionDataset& ds, const TrainConfig& cfg)
      : ds_(&ds), cfg_(cfg), sampler_(ds, cfg.sampler.kind) {
    for (std::size_t u = 0; u < ds.num_users; ++u)
      for (Index i : ds.train_positives[u]) pairs_.push_back({static_cast<Index>(u), i});
    if (pairs_.empty()) throw std::invalid_argument("train_epoch: dataset has no training pairs");
    if (is_debiased(cfg.loss.kind)) {
      tau_.assign(ds.num_users, 0.0);
      for (std::size_t u = 0; u < ds.num_users; ++u)
        if (!ds.train_positives[u].empty()) tau_[u] = compute_tau_plus(ds, static_cast<Index>(u), cfg.loss.debias);
    }
  }

  /// One pass over the shuffled positive pairs. Returns the mean data loss.
  double run(ScoringModel& m, OptimizerState& s, double lr, Rng& rng) {
    LossConfig loss = cfg_.loss;
    if (m.mode == ScoreMode::cosine) loss.debias.temperature = m.temperature;
    if (grad_.user_grad.rows() != m.user_embeddings.rows() || grad_.user_grad.cols() != m.user_embeddings.cols())
      grad_ = BatchGradient(m.num_users(), m.num_items(), m.dim());
    std::shuffle(pairs_.begin(), pairs_.end(), rng);
    const bool debiased = is_debiased(loss.kind);
    const std::size_t bs = cfg_.batch_size;
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < pairs_.size(); start += bs, ++batch_no) {
      const std::size_t end = std::min(pairs_.size(), start + bs);
      batch_.resize(end - start);
      for (std::size_t x = start; x < end; ++x) {
        auto& p = batch_[x - start];
        p.user = pairs_[x].first;
        p.item = pairs_[x].second;
        if (cfg_.sampler.shared_negatives && x != start) {
          p.unlabeled = batch_[0].unlabeled;
        } else {
          sampler_.sample(p.user, cfg_.sampler.n_negatives, rng, p.unlabeled);
        }
        if (debiased) {
          sample_user_positives(*ds_, p.user, cfg_.sampler.m_positives, rng, p.extra_pos);
          p.tau_plus = tau_[p.user];
        } else {
          p.extra_pos.clear();
        }
      }
      BatchObjective obj;
      try {
        obj = batch_objective(m, batch_, loss, cfg_.l2_weight, &grad_);
      } catch (const NonFiniteLoss& e) {
        throw NonFiniteLoss("batch " + std::to_string(batch_no) + ": " + e.what());
      }
      adam_step(m, s, grad_, lr, cfg_.adam);
      loss_sum += obj.mean_loss * static_cast<double>(end - start);
    }
    return loss_sum / static_cast<double>(pairs_.size());
  }

 private:
  const InteractionDataset* ds_;
  TrainConfig cfg_;
  UnlabeledSampler sampler_;
  std::vector<std::pair<Index, Index>> pairs_;
  std::vector<double> tau_;
  std::vector<PairSamples> batch_;
  BatchGradient grad_;
};

inline double train_epoch(ScoringModel& m, OptimizerState& s, const InteractionDataset& ds,
                          const TrainConfig& cfg, double lr, Rng& rng) {
  EpochRunner runner(ds, cfg);
  return runner.run(m, s, lr, rng);
}

/// Halves (by `factor`) the learning rate after `patience` epochs without an
/// absolute improvement above `threshold`. Done once lr drops below min_lr.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, std::size_t patience, double threshold, double min_lr)
      : lr_(lr), factor_(factor), patience_(patience), threshold_(threshold), min_lr_(min_lr) {}

  /// Records an epoch's metric; returns true when it is a new best.
  bool observe(double metric) {
    if (!has_best_ || metric > best_ + threshold_) {
      best_ = metric;
      has_best_ = true;
      stale_ = 0;
      return true;
    }
    if (++stale_ >= patience_) {
      lr_ *= factor_;
      stale_ = 0;
      ++reductions_;
    }
    return false;
  }

  double lr() const { return lr_; }
  bool finished() const { return lr_ < min_lr_; }
  std::size_t reductions() const { return reductions_; }
  double best() const { return best_; }

 private:
  double lr_, factor_;
  std::size_t patience_;
  double threshold_, min_lr_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t stale_ = 0;
  std::size_t reductions_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_recall = 0.0;
  double val_ndcg = 0.0;
  double lr = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
};

struct FitResult {
  ScoringModel model;  // snapshot with the best validation recall
  TrainingHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on `train` (whose train lists must exclude the validation items),
/// monitoring Recall@eval_k on `validation` for the plateau schedule.
inline FitResult fit(const InteractionDataset& train, const PerUserLists& validation,
                     const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto val_ds = with_test_lists(train, validation);
  bool has_val = false;
  for (const auto& l : val_ds.test_positives) has_val = has_val || !l.empty();
  if (!has_val) throw std::invalid_argument("fit: validation split is empty");

  auto model = init_model(train.num_users, train.num_items, cfg.embedding_dim,
                          derive_seed(cfg.seed, "init"), cfg.init_std, cfg.resolved_mode(), cfg.temperature);
  auto state = OptimizerState::for_model(model);
  Rng rng = make_rng(cfg.seed, "sampling");
  EpochRunner runner(train, cfg);
  PlateauScheduler sched(cfg.initial_lr, cfg.plateau_factor, cfg.plateau_patience,
                         cfg.improvement_threshold, cfg.min_lr);
  FitResult out{model, {}};
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !sched.finished(); ++epoch) {
    const double lr = sched.lr();
    const double loss = runner.run(model, state, lr, rng);
    const auto metrics = evaluate(model, val_ds, cfg.eval_k, thread_budget());
    EpochRecord rec{epoch, loss, metrics.recall, metrics.ndcg, lr};
    out.history.epochs.push_back(rec);
    if (sched.observe(metrics.recall)) {
      out.model = model;
      out.history.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
  }
  return out;
}

}  // namespace recloss
