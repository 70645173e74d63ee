// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Criterion 10 needs the full public datasets; point RECLOSS_GOWALLA_DIR and
// RECLOSS_AMAZON_BOOKS_DIR at LightGCN-format copies to run it.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "recloss/config.hpp"
#include "recloss/eval.hpp"
#include "recloss/linear.hpp"
#include "recloss/mf.hpp"
#include "recloss/synthetic.hpp"
#include "recloss/verify.hpp"

using namespace recloss;

namespace {

constexpr std::uint64_t kSeed = 20240501;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << title << ": " << o.detail << std::fixed
            << std::setprecision(2) << " (" << secs << "s, budget " << budget_s << "s)" << std::defaultfloat
            << '\n';
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

Outcome gradients() {
  double worst = 0.0;
  std::size_t excluded = 0;
  bool ok = true;
  std::string worst_kind;
  for (LossKind k : kAllLossKinds) {
    const auto r = gradient_check(k, 100, kSeed, 1e-6, 1e-5);
    ok = ok && r.pass();
    excluded += r.excluded;
    if (r.worst >= worst) {
      worst = r.worst;
      worst_kind = to_string(k);
    }
  }
  return {ok, "max rel err " + fmt(worst) + " (" + worst_kind + ") < 1e-05 over 12 kinds x 100 bundles, " +
                  std::to_string(excluded) + " kink-adjacent excluded"};
}

Outcome identities() {
  const auto r = reduction_identities(200, kSeed, 1e-12);
  return {r.pass(), "max abs diff " + fmt(r.worst) + " <= 1e-12"};
}

Outcome bounds() {
  const auto r = bound_chain_suite(10000, kSeed, 64);
  return {r.pass(), "min slack " + fmt(r.worst) + " >= -1e-09 over 10^4 bundles, N in 1..64"};
}

Outcome ials_equivalence() {
  const auto r = ials_equivalence_suite(50, kSeed, 1e-8);
  return {r.pass(), "max rel deviation " + fmt(r.worst) + " <= 1e-08 over 50 instances"};
}

Outcome ease_equivalence() {
  const auto r = ease_equivalence_suite(50, kSeed, 1e-10, 1e-4);
  return {r.scale.pass() && r.optimizer.pass(),
          "scale deviation " + fmt(r.scale.worst) + " <= 1e-10, optimizer deviation " + fmt(r.optimizer.worst) +
              " <= 1e-04"};
}

Outcome ease_oracle() {
  const auto r = ease_reference_suite(20, kSeed, 1e-8);
  const double identity_max = ease_fit(Eigen::MatrixXd::Identity(5, 5), 1.0).weights.cwiseAbs().maxCoeff();
  return {r.pass() && identity_max == 0.0,
          "max abs diff " + fmt(r.worst) + " < 1e-08 on 20 6x5 instances, X=I gives max|W| = " + fmt(identity_max)};
}

Outcome ials_monotone() {
  const auto plain = ials_monotonicity_suite(20, kSeed, false, 10, 1e-10);
  const auto deb = ials_monotonicity_suite(20, kSeed, true, 10, 1e-10);
  return {plain.pass() && deb.pass(), "largest relative increase " + fmt(plain.worst) + " (original), " +
                                          fmt(deb.worst) + " (debiased), tolerance 1e-10"};
}

Outcome metrics() {
  const auto r = metric_oracle_suite(200, kSeed);
  return {r.pass(), std::to_string(static_cast<long>(r.worst)) + " mismatches in 200 instances"};
}

TrainConfig learnability_config(LossKind kind) {
  TrainConfig tc;
  tc.embedding_dim = 32;
  tc.batch_size = 128;
  tc.initial_lr = 1e-2;
  tc.max_epochs = 60;
  tc.seed = kSeed;
  tc.loss.kind = kind;
  tc.loss.infonce_plus = {1.0, 0.0};
  tc.loss.mine_plus_lambda = 1.1;
  tc.sampler.n_negatives = 64;
  tc.sampler.m_positives = 10;
  return tc;
}

void learnability() {
  PlantedBlockConfig pc;
  pc.users = 200;
  pc.items = 300;
  pc.blocks = 5;
  pc.noise = 0.05;
  pc.seed = derive_seed(kSeed, "synthetic");
  const auto ds = planted_block_dataset(pc);
  const double baseline = evaluate(PopularityScorer(ds), ds, 20).recall;
  const auto split = make_validation_split(ds, 0.1, derive_seed(kSeed, "splits"));
  for (LossKind kind : {LossKind::bpr, LossKind::infonce, LossKind::mine_plus, LossKind::ccl, LossKind::debiased_ccl}) {
    report(9, "learnability/" + to_string(kind), 180.0, [&] {
      const auto result = fit(split.train, split.held_out, learnability_config(kind));
      const double recall = evaluate(result.model, ds, 20).recall;
      return Outcome{recall >= 0.60 && recall >= 1.5 * baseline,
                     "Recall@20 " + fmt(recall) + " (>= 0.60), popularity " + fmt(baseline) + " (needs >= " +
                         fmt(1.5 * baseline) + ")"};
    });
  }
}

/// Full-scale reproduction; only runs when the dataset directories are given.
void stretch() {
  const char* gowalla = std::getenv("RECLOSS_GOWALLA_DIR");
  const char* amazon = std::getenv("RECLOSS_AMAZON_BOOKS_DIR");
  if (!gowalla || !amazon) {
    std::cout << "SKIP [10] full-scale reproduction: set RECLOSS_GOWALLA_DIR and RECLOSS_AMAZON_BOOKS_DIR "
                 "(multi-hour CPU run, excluded from the default suite)\n";
    return;
  }
  auto run = [](const char* dir, const std::string& preset) {
    Json cfg = resolve_config(Json(), preset, {});
    const auto ds = load_dataset_dir(dir);
    const auto tc = train_config(cfg);
    const auto split = make_validation_split(ds, validation_fraction(cfg), derive_seed(tc.seed, "splits"));
    const auto result = fit(split.train, split.held_out, tc);
    return evaluate(result.model, ds, 20, thread_budget());
  };
  report(10, "gowalla mine+ preset", 1e9, [&] {
    const auto m = run(gowalla, "mine+/gowalla");
    const bool ok = std::abs(100.0 * m.recall - 18.53) <= 0.5 && std::abs(100.0 * m.ndcg - 15.70) <= 0.5;
    return Outcome{ok, "Recall@20 " + fmt(100.0 * m.recall) + " (target 18.53 +- 0.5), NDCG@20 " +
                           fmt(100.0 * m.ndcg) + " (target 15.70 +- 0.5)"};
  });
  report(10, "amazon-books debiased ccl improvement", 1e9, [&] {
    const auto debiased = run(amazon, "debiased-ccl/amazon-books");
    Json biased = resolve_config(Json(), "debiased-ccl/amazon-books", {{"loss.kind", "ccl"}});
    const auto ds = load_dataset_dir(amazon);
    const auto tc = train_config(biased);
    const auto split = make_validation_split(ds, validation_fraction(biased), derive_seed(tc.seed, "splits"));
    const auto base = evaluate(fit(split.train, split.held_out, tc).model, ds, 20, thread_budget());
    const double gain_r = 100.0 * (debiased.recall / base.recall - 1.0);
    const double gain_n = 100.0 * (debiased.ndcg / base.ndcg - 1.0);
    return Outcome{gain_r > 0.0 && gain_n > 0.0, "relative gain recall " + fmt(gain_r) + "% (target +4.17%), ndcg " +
                                                     fmt(gain_n) + "% (target +4.27%)"};
  });
}

}  // namespace

int main() {
  report(1, "gradient correctness", 10.0, gradients);
  report(2, "reduction identities", 1.0, identities);
  report(3, "bound chain", 10.0, bounds);
  report(4, "debiased iALS equivalence", 5.0, ials_equivalence);
  report(5, "debiased EASE equivalence", 30.0, ease_equivalence);
  report(6, "EASE closed form", 2.0, ease_oracle);
  report(7, "iALS objective monotonicity", 5.0, ials_monotone);
  report(8, "metric oracle", 2.0, metrics);
  learnability();
  stretch();
  std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(failures) + " CRITERIA FAILED") << '\n';
  return failures == 0 ? 0 : 1;
}
