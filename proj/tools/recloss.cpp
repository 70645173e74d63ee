// recloss command-line driver: stats, train, eval, solve, verify, sweep.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "recloss/checkpoint.hpp"
#include "recloss/config.hpp"
#include "recloss/data.hpp"
#include "recloss/eval.hpp"
#include "recloss/linear.hpp"
#include "recloss/mf.hpp"
#include "recloss/synthetic.hpp"
#include "recloss/verify.hpp"

namespace fs = std::filesystem;
using namespace recloss;

namespace {

struct CommonOptions {
  std::string config_file;
  std::string preset;
  std::vector<std::string> sets;
  std::string data_dir;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool synthetic = false;
  // subcommand flags, already in "key=value" form
  std::vector<std::pair<std::string, std::string>> flag_overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "JSON config document")->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "named hyperparameter bundle, e.g. mine+/gowalla");
  cmd->add_option("--set", o.sets, "override a config key, e.g. --set train.max_epochs=20");
  cmd->add_option("--data", o.data_dir, "directory holding train.txt and test.txt");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_flag("--synthetic", o.synthetic, "use the planted-block dataset instead of --data");
}

/// Registers `--name` and, when given, forwards it to config key `key`.
void add_mapped(CLI::App* cmd, CommonOptions& o, const std::string& flag, const std::string& key,
                const std::string& help) {
  cmd->add_option_function<std::string>(flag, [&o, key](const std::string& v) {
    o.flag_overrides.emplace_back(key, v);
  }, help);
}

Json resolve(const std::string& command, const CommonOptions& o) {
  Json doc;
  if (!o.config_file.empty()) doc = load_config_file(o.config_file);
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!o.data_dir.empty()) overrides.emplace_back("data_dir", Json(o.data_dir).dump());
  if (!o.out_dir.empty()) overrides.emplace_back("output_dir", Json(o.out_dir).dump());
  if (o.seed) overrides.emplace_back("seed", std::to_string(*o.seed));
  if (o.synthetic) overrides.emplace_back("synthetic.enabled", "true");
  for (const auto& kv : o.flag_overrides) overrides.push_back(kv);
  Json cfg = resolve_config(doc, o.preset, overrides);
  cfg["command"] = command;
  return cfg;
}

struct LoadedData {
  InteractionDataset ds;
  std::string name;
};

LoadedData load_data(const Json& cfg) {
  if (cfg.at("synthetic").at("enabled").get<bool>()) {
    const auto name = cfg.at("dataset_name").get<std::string>();
    return {planted_block_dataset(synthetic_config(cfg)), name.empty() ? "synthetic" : name};
  }
  const fs::path dir = cfg.at("data_dir").get<std::string>();
  if (dir.empty()) throw ConfigError("no data source: pass --data DIR or --synthetic");
  if (!fs::is_directory(dir)) throw std::runtime_error("data directory not found: " + dir.string());
  auto name = cfg.at("dataset_name").get<std::string>();
  if (name.empty()) name = fs::absolute(dir).lexically_normal().filename().string();
  if (name.empty()) name = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  return {load_dataset_dir(dir), name};
}

fs::path prepare_output(const Json& cfg) {
  const fs::path out = cfg.at("output_dir").get<std::string>();
  fs::create_directories(out);
  std::ofstream(out / "config.resolved") << cfg.dump(2) << '\n';
  return out;
}

std::ofstream open_csv(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << std::setprecision(10);
  return f;
}

void write_eval_row(const fs::path& p, const std::string& dataset, const std::string& model,
                    const std::string& loss, const MetricsReport& m) {
  auto f = open_csv(p);
  f << "dataset,model,loss,k,recall,ndcg,users_evaluated\n";
  f << dataset << ',' << model << ',' << loss << ',' << m.k << ',' << m.recall << ',' << m.ndcg << ','
    << m.users_evaluated << '\n';
  std::cout << std::setprecision(6) << "recall@" << m.k << "=" << m.recall << " ndcg@" << m.k << "=" << m.ndcg
            << " users=" << m.users_evaluated << '\n';
}

// ---------------------------------------------------------------------------

int run_stats(const Json& cfg) {
  const auto data = load_data(cfg);
  const auto out = prepare_output(cfg);
  const auto s = dataset_stats(data.ds);
  auto f = open_csv(out / "stats.csv");
  std::ostringstream row;
  row << std::setprecision(10);
  row << "dataset,users,items,train_interactions,test_interactions,total_interactions,density,"
         "max_items_per_user,min_items_per_user,duplicates_removed,overlaps_removed\n"
      << data.name << ',' << s.user_count << ',' << s.item_count << ',' << s.interaction_count << ','
      << s.test_interaction_count << ',' << s.total_interaction_count << ',' << s.density << ','
      << s.max_items_per_user << ',' << s.min_items_per_user << ',' << data.ds.duplicates_removed << ','
      << data.ds.overlaps_removed << '\n';
  f << row.str();
  std::cout << row.str();
  return 0;
}

struct TrainOutcome {
  FitResult fit;
  MetricsReport test;
};

TrainOutcome train_and_test(const Json& cfg, const InteractionDataset& ds, const EpochCallback& on_epoch = {}) {
  const auto tc = train_config(cfg);
  const auto split = make_validation_split(ds, validation_fraction(cfg), derive_seed(tc.seed, "splits"));
  auto result = fit(split.train, split.held_out, tc, on_epoch);
  // rank against the full train lists so validation items stay masked
  const auto report = evaluate(result.model, ds, cfg.at("eval").at("k").get<std::size_t>(), thread_budget());
  return {std::move(result), report};
}

int run_train(const Json& cfg) {
  train_config(cfg);  // validate before touching data or disk
  const auto data = load_data(cfg);
  const auto out = prepare_output(cfg);
  auto history = open_csv(out / "history.csv");
  history << "epoch,loss,val_recall20,val_ndcg20,lr\n";
  auto on_epoch = [&](const EpochRecord& r) {
    history << r.epoch << ',' << r.loss << ',' << r.val_recall << ',' << r.val_ndcg << ',' << r.lr << '\n';
    history.flush();
    std::cerr << "epoch " << r.epoch << " loss " << r.loss << " val_recall " << r.val_recall << " lr " << r.lr
              << '\n';
  };
  const auto outcome = train_and_test(cfg, data.ds, on_epoch);
  write_checkpoint(out / "model.bin", to_checkpoint(outcome.fit.model));
  write_eval_row(out / "eval.csv", data.name, "mf", cfg.at("loss").at("kind").get<std::string>(), outcome.test);
  return 0;
}

int run_eval(const Json& cfg) {
  const auto ckpt_path = cfg.at("eval").at("checkpoint").get<std::string>();
  if (ckpt_path.empty()) throw ConfigError("eval needs --checkpoint");
  if (!fs::is_regular_file(ckpt_path)) throw std::runtime_error("checkpoint not found: " + ckpt_path);
  const auto data = load_data(cfg);
  const auto ck = read_checkpoint(ckpt_path);
  const auto k = cfg.at("eval").at("k").get<std::size_t>();
  auto model_name = cfg.at("eval").at("model_name").get<std::string>();
  MetricsReport report;
  if (ck.mode == CheckpointMode::ease) {
    if (static_cast<std::size_t>(ck.items.rows()) != data.ds.num_items)
      throw std::runtime_error("checkpoint item count does not match the dataset");
    report = evaluate(EaseScorer(data.ds, ck.items), data.ds, k, thread_budget());
    if (model_name.empty()) model_name = "ease";
  } else {
    const auto model = to_model(ck);
    if (static_cast<std::size_t>(model.user_embeddings.rows()) != data.ds.num_users ||
        static_cast<std::size_t>(model.item_embeddings.rows()) != data.ds.num_items)
      throw std::runtime_error("checkpoint shape does not match the dataset");
    report = evaluate(model, data.ds, k, thread_budget());
    if (model_name.empty()) model_name = "mf";
  }
  const auto out = prepare_output(cfg);
  write_eval_row(out / "eval.csv", data.name, model_name, "", report);
  return 0;
}

int run_solve(const Json& cfg) {
  const auto which = parse_linear_model(cfg.at("linear").at("model").get<std::string>());
  const auto data = load_data(cfg);
  const auto& ds = data.ds;
  const auto k = cfg.at("eval").at("k").get<std::size_t>();
  const auto model_name = cfg.at("linear").at("model").get<std::string>();
  const double lambda = cfg.at("linear").at("lambda").get<double>();
  const double alpha = cfg.at("linear").at("alpha").get<double>();
  const auto budget = cfg.at("linear").at("item_budget").get<std::size_t>();

  if (which == LinearModel::ials || which == LinearModel::ials_debiased) {
    const auto ic = ials_config(cfg, ds.num_users);
    const auto st = ials_fit(ds, ic, which == LinearModel::ials_debiased);
    const auto out = prepare_output(cfg);
    auto trace = open_csv(out / "objective.csv");
    trace << "sweep,objective\n";
    for (std::size_t s = 0; s < st.objective_trace.size(); ++s) trace << s << ',' << st.objective_trace[s] << '\n';
    const auto model = st.as_model();
    write_checkpoint(out / "model.bin", to_checkpoint(model));
    write_eval_row(out / "eval.csv", data.name, model_name, "", evaluate(model, ds, k, thread_budget()));
    return 0;
  }
  const auto sol = which == LinearModel::ease ? ease_fit(ds, lambda, budget) : ease_debiased_fit(ds, lambda, alpha, budget);
  const auto out = prepare_output(cfg);
  write_checkpoint(out / "model.bin", ease_checkpoint(sol.weights));
  write_eval_row(out / "eval.csv", data.name, model_name, "",
                 evaluate(EaseScorer(ds, sol.weights), ds, k, thread_budget()));
  return 0;
}

int run_verify(const Json& cfg) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const auto& v = cfg.at("verify");
  const auto bound_n = v.at("bound_instances").get<std::size_t>();
  const auto bound_max_n = v.at("bound_max_n").get<std::size_t>();
  const auto equivalence_n = v.at("equivalence_instances").get<std::size_t>();
  if (bound_max_n == 0) throw ConfigError("verify.bound_max_n must be >= 1");

  std::vector<PropertyResult> rows;
  for (LossKind kind : kAllLossKinds) rows.push_back(gradient_check(kind, 100, seed));
  rows.push_back(reduction_identities(100, seed));
  rows.push_back(bound_chain_suite(bound_n, seed, bound_max_n));
  rows.push_back(ials_equivalence_suite(equivalence_n, seed));
  const auto ease_eq = ease_equivalence_suite(equivalence_n, seed);
  rows.push_back(ease_eq.scale);
  rows.push_back(ease_eq.optimizer);
  rows.push_back(ease_reference_suite(20, seed));
  rows.push_back(ials_monotonicity_suite(20, seed, false));
  rows.push_back(ials_monotonicity_suite(20, seed, true));
  rows.push_back(metric_oracle_suite(200, seed));

  const auto out = prepare_output(cfg);
  auto f = open_csv(out / "verify.csv");
  f << std::setprecision(17);
  f << "property,instances,worst,threshold,pass,excluded\n";
  bool all = true;
  for (const auto& r : rows) {
    f << r.property << ',' << r.instances << ',' << r.worst << ',' << r.threshold << ',' << (r.pass() ? 1 : 0)
      << ',' << r.excluded << '\n';
    std::cout << (r.pass() ? "PASS " : "FAIL ") << r.property << " worst=" << r.worst
              << (r.at_least ? " >= " : " <= ") << r.threshold << '\n';
    all = all && r.pass();
  }
  return all ? 0 : 1;
}

int run_sweep(const Json& cfg) {
  const auto axis = cfg.at("sweep").at("axis").get<std::string>();
  const auto values = cfg.at("sweep").at("values");
  if (values.empty()) throw ConfigError("sweep needs a non-empty value grid (--values or --geometric)");
  get_config_value(cfg, axis);  // rejects unknown axes up front
  for (const auto& v : values) {
    Json probe = cfg;
    set_config_value(probe, axis, v.dump());
    train_config(probe);
  }
  const auto data = load_data(cfg);
  const auto out = prepare_output(cfg);

  struct Row {
    std::string value;
    std::optional<MetricsReport> metrics;
    std::string error;
  };
  std::vector<Row> rows(values.size());
  auto run_point = [&](std::size_t p) {
    rows[p].value = values[p].dump();
    try {
      Json point = cfg;
      set_config_value(point, axis, values[p].dump());
      rows[p].metrics = train_and_test(point, data.ds).test;
    } catch (const std::exception& e) {
      rows[p].error = e.what();
    }
  };

  std::size_t workers = std::max<std::size_t>(1, cfg.at("sweep").at("workers").get<std::size_t>());
  if (std::getenv("RECLOSS_THREADS")) workers = std::min<std::size_t>(workers, thread_budget());
  workers = std::min(workers, rows.size());
  if (workers <= 1) {
    for (std::size_t p = 0; p < rows.size(); ++p) run_point(p);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t p = next++; p < rows.size(); p = next++) run_point(p);
      });
  }

  auto f = open_csv(out / "sweep.csv");
  f << "axis,value,recall,ndcg,users_evaluated,status\n";
  for (const auto& r : rows) {
    f << axis << ',' << r.value << ',';
    if (r.metrics)
      f << r.metrics->recall << ',' << r.metrics->ndcg << ',' << r.metrics->users_evaluated << ",ok\n";
    else
      f << ",,,\"error: " << r.error << "\"\n";
  }
  std::cout << "wrote " << rows.size() << " sweep rows to " << (out / "sweep.csv").string() << '\n';
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string tok; std::getline(in, tok, ',');)
    if (!tok.empty()) out.push_back(tok);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recloss: contrastive and debiased losses for implicit-feedback recommendation"};
  app.require_subcommand(1);

  CommonOptions opts;
  auto* stats = app.add_subcommand("stats", "dataset statistics");
  auto* train = app.add_subcommand("train", "train matrix factorization with a chosen loss");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* solve = app.add_subcommand("solve", "fit iALS or EASE in closed form");
  auto* verify = app.add_subcommand("verify", "run the numerical property suites");
  auto* sweep = app.add_subcommand("sweep", "train and evaluate over a hyperparameter grid");
  for (auto* cmd : {stats, train, eval, solve, verify, sweep}) add_common(cmd, opts);

  add_mapped(train, opts, "--loss", "loss.kind", "loss kind");
  add_mapped(train, opts, "--epochs", "train.max_epochs", "maximum epochs");
  add_mapped(train, opts, "--lr", "train.initial_lr", "initial learning rate");
  add_mapped(train, opts, "--dim", "train.embedding_dim", "embedding dimension");
  add_mapped(train, opts, "--negatives", "sampler.n_negatives", "unlabeled samples per pair");

  add_mapped(eval, opts, "--checkpoint", "eval.checkpoint", "model.bin to evaluate");
  add_mapped(eval, opts, "--model-name", "eval.model_name", "model column of eval.csv");
  add_mapped(eval, opts, "--k", "eval.k", "cutoff");

  add_mapped(solve, opts, "--model", "linear.model", "ials, ials-debiased, ease or ease-debiased");
  add_mapped(solve, opts, "--alpha0", "linear.alpha0", "iALS unobserved weight");
  add_mapped(solve, opts, "--lambda", "linear.lambda", "ridge weight");
  add_mapped(solve, opts, "--alpha", "linear.alpha", "EASE debias coefficient");
  add_mapped(solve, opts, "--c-u", "linear.c_u", "debiased iALS per-user weight");
  add_mapped(solve, opts, "--sweeps", "linear.sweeps", "iALS sweeps");
  add_mapped(solve, opts, "--dim", "linear.dim", "iALS dimension");

  add_mapped(verify, opts, "--bound-instances", "verify.bound_instances", "bound-chain instances");
  add_mapped(verify, opts, "--equivalence-instances", "verify.equivalence_instances", "equivalence check instances");

  std::string sweep_values, sweep_geometric;
  add_mapped(sweep, opts, "--axis", "sweep.axis", "dotted config key to vary");
  add_mapped(sweep, opts, "--workers", "sweep.workers", "parallel grid points");
  sweep->add_option("--values", sweep_values, "comma-separated grid values");
  sweep->add_option("--geometric", sweep_geometric, "lo,hi,ratio geometric grid");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!sweep_values.empty() || !sweep_geometric.empty()) {
      Json grid = Json::array();
      for (const auto& v : split_list(sweep_values)) {
        try {
          grid.push_back(Json::parse(v));
        } catch (const Json::parse_error&) {
          grid.push_back(v);
        }
      }
      if (!sweep_geometric.empty()) {
        const auto parts = split_list(sweep_geometric);
        if (parts.size() != 3) throw ConfigError("--geometric expects lo,hi,ratio");
        for (double v : geometric_grid(std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])))
          grid.push_back(v);
      }
      opts.flag_overrides.emplace_back("sweep.values", grid.dump());
    }

    auto* chosen = app.get_subcommands().front();
    const auto cfg = resolve(chosen->get_name(), opts);
    if (chosen == stats) return run_stats(cfg);
    if (chosen == train) return run_train(cfg);
    if (chosen == eval) return run_eval(cfg);
    if (chosen == solve) return run_solve(cfg);
    if (chosen == verify) return run_verify(cfg);
    return run_sweep(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
