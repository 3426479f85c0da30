// metasel: generate datasets, train, sweep, compare methods, verify gradients.
//
// Every subcommand accepts --config <file> (flat `key = value` lines) and
// flags named after the same keys (drop_rate → --drop-rate). Flags override
// the config file, which overrides the built-in benchmark defaults.
//
// Failures exit nonzero and print one JSON object on stderr:
//   {"error":"<kind>","message":"...","command":"<subcommand>"}

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "metasel/checkpoint.hpp"
#include "metasel/csv.hpp"
#include "metasel/dataset_io.hpp"
#include "metasel/experiment.hpp"
#include "metasel/log_io.hpp"
#include "metasel/metrics.hpp"
#include "metasel/noise_synth.hpp"
#include "metasel/trainer.hpp"
#include "metasel/verify.hpp"

namespace fs = std::filesystem;
using namespace metasel;

namespace {

enum ExitCode { kOk = 0, kRuntime = 1, kUsage = 2, kDiverged = 3, kVerifyFailed = 4 };

int fail(ExitCode code, const std::string& kind, const std::string& message, const std::string& command) {
  nlohmann::json j{{"error", kind}, {"message", message}, {"command", command}};
  std::cerr << j.dump() << '\n';
  return code;
}

const std::vector<std::string> kTrainKeys = {
    "drop_rate",    "relabel_rate", "warmup_epochs", "total_epochs",     "batch_size",        "meta_batch_size",
    "lr_classifier", "lr_selection", "momentum",     "num_classes",      "feature_dim",       "selection_hidden",
    "seed",         "pseudo_label_mode", "detach_features", "meta_in_train"};
const std::vector<std::string> kNoiseKeys = {"samples_per_class", "input_dim",       "in_dist_flip_rate", "out_dist_fraction",
                                             "cluster_separation", "out_dist_offset", "out_dist_clusters"};
const std::vector<std::string> kRunKeys = {"num_seeds", "meta_per_class", "test_per_class", "checkpoint_every", "jobs"};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

/// Options shared by every subcommand; values are kept as strings and
/// applied through apply_setting after the config file.
struct Common {
  std::string config;
  std::string out;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", config, "Config file of key = value lines")->check(CLI::ExistingFile);
    app->add_option("--out", out, "Artifact root directory");
    for (const auto& k : keys) app->add_option(flag_name(k), overrides[k], k);
  }

  ExperimentSpec resolve() const {
    ExperimentSpec s = default_benchmark();
    if (!config.empty()) load_config(s, config);
    for (const auto& [k, v] : overrides) {
      if (!v.empty()) apply_setting(s, k, v);
    }
    if (!out.empty()) s.out_dir = out;
    return s;
  }
};

std::vector<std::string> concat_keys(std::initializer_list<const std::vector<std::string>*> lists) {
  std::vector<std::string> out;
  for (const auto* l : lists) out.insert(out.end(), l->begin(), l->end());
  return out;
}

void require_valid(const ExperimentSpec& s) {
  if (const auto v = validate_experiment(s); !v.empty()) throw std::invalid_argument(v.front());
}

int cmd_generate(const ExperimentSpec& s) {
  if (const auto v = validate_noise_spec(s.noise); !v.empty()) throw std::invalid_argument(v.front());
  const auto b = make_benchmark(s.noise, s.meta_per_class, s.test_per_class, s.train.meta_in_train);
  fs::create_directories(s.out_dir);
  save_dataset((fs::path(s.out_dir) / "train.csv").string(), b.train);
  save_dataset((fs::path(s.out_dir) / "meta.csv").string(), b.meta);
  save_dataset((fs::path(s.out_dir) / "test.csv").string(), b.test);
  std::cout << "train " << b.train.size() << " (in-dist noisy " << b.train.count(NoiseKind::in_dist) << ", out-of-dist "
            << b.train.count(NoiseKind::out_dist) << "), meta " << b.meta.size() << ", test " << b.test.size() << " -> "
            << s.out_dir << '\n';
  return kOk;
}

/// Single run on datasets previously written by `generate`.
int train_on_files(const ExperimentSpec& s, const std::string& data_dir) {
  const auto dir = fs::path(data_dir);
  const auto train_set = load_dataset((dir / "train.csv").string());
  const auto meta_set = load_dataset((dir / "meta.csv").string());
  std::optional<Dataset> test_set;
  if (fs::exists(dir / "test.csv")) test_set = load_dataset((dir / "test.csv").string());
  auto model = init_model(train_set.input_dim(), s.train);
  const auto r = train(s.train, train_set, meta_set, std::move(model), s.method,
                       make_tag_observer(train_set, test_set ? &*test_set : nullptr));
  fs::create_directories(s.out_dir);
  save_csv((fs::path(s.out_dir) / "train_log.csv").string(), train_log_table(r.log));
  save_checkpoint((fs::path(s.out_dir) / "final.ckpt").string(), r.model);
  if (!r.log.epochs.empty()) std::cout << "final test ACA " << format_double(r.log.epochs.back().test_aca) << '\n';
  return kOk;
}

void print_aggregate(const ExperimentResult& r) {
  const auto& t = r.aggregate;
  for (const auto& row : t.rows) {
    std::cout << row[t.column("method")];
    if (!row[t.column("parameter")].empty()) std::cout << ' ' << row[t.column("parameter")] << '=' << row[t.column("value")];
    std::cout << "  ACA " << row[t.column("final_aca_mean")] << " ± " << row[t.column("final_aca_std")] << "  P_in gap "
              << row[t.column("pin_gap_mean")] << '\n';
  }
  std::cout << "aggregate: " << r.aggregate_csv.string() << '\n';
}

int cmd_verify(std::size_t instances, std::size_t subset_trials, std::uint64_t seed, const std::string& out_dir) {
  verify::CheckOptions o;
  o.instances = instances;
  o.seed = seed;
  const auto meta = verify::check_meta_gradient(o);
  o.instances = 5 * instances;
  const auto grads = verify::check_gradients(o);
  const auto subsets = verify::check_subsets(subset_trials, seed);

  auto rows = meta.table.rows();
  for (const auto& r : grads.rows()) rows.push_back(r);
  fs::create_directories(out_dir);
  const auto path = fs::path(out_dir) / "verify_report.csv";
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  oracle::write_report_csv(os, rows);

  bool grads_ok = true;
  for (const auto& r : grads.rows()) grads_ok = grads_ok && r.error.max_rel <= 1e-5;
  const bool meta_ok = std::max({meta.explicit_vs_autodiff, meta.explicit_vs_fd, meta.autodiff_vs_fd}) <= 1e-4;
  const bool subsets_ok = subsets.split_matches == subsets.split_trials && subsets.select_matches == subsets.select_trials;
  std::cout << "meta-gradient  explicit/autodiff " << meta.explicit_vs_autodiff << "  explicit/fd " << meta.explicit_vs_fd
            << "  autodiff/fd " << meta.autodiff_vs_fd << "  T-assembly " << meta.t_matrix_assembly
            << (meta_ok ? "  ok" : "  FAIL") << '\n';
  for (const auto& r : grads.rows()) std::cout << r.comparison << '/' << r.error.block << "  " << r.error.max_rel << '\n';
  std::cout << "gradients " << (grads_ok ? "ok" : "FAIL") << '\n';
  std::cout << "splitter " << subsets.split_matches << '/' << subsets.split_trials << "  selector " << subsets.select_matches
            << '/' << subsets.select_trials << (subsets_ok ? "  ok" : "  FAIL") << '\n';
  std::cout << "report: " << path.string() << '\n';
  if (!(meta_ok && grads_ok && subsets_ok)) {
    return fail(kVerifyFailed, "verification_failed", "oracle comparison exceeded tolerance", "verify");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-set-guided sample selection for noisy-label training"};
  app.require_subcommand(1);

  const auto all_keys = concat_keys({&kTrainKeys, &kNoiseKeys, &kRunKeys});

  Common gen_opts, train_opts, sweep_opts, compare_opts;
  auto* gen = app.add_subcommand("generate", "Write synthetic train/meta/test datasets");
  const std::vector<std::string> gen_extra = {"seed", "num_classes", "meta_in_train", "meta_per_class", "test_per_class"};
  gen_opts.attach(gen, concat_keys({&kNoiseKeys, &gen_extra}));

  std::string method, data_dir;
  auto* tr = app.add_subcommand("train", "Train one method (default: one seed)");
  train_opts.attach(tr, all_keys);
  tr->add_option("--method", method, "full | discard_only | no_relabel | self_correct | plain");
  tr->add_option("--data", data_dir, "Train on datasets written by `generate` instead of a fresh benchmark")
      ->check(CLI::ExistingDirectory);

  std::string sweep_param, sweep_values, sweep_methods;
  auto* sw = app.add_subcommand("sweep", "Sweep one setting over a grid of values");
  sweep_opts.attach(sw, all_keys);
  sw->add_option("--param", sweep_param, "Setting to sweep, e.g. drop_rate")->required();
  sw->add_option("--values", sweep_values, "start:stop:step or a comma list")->required();
  sw->add_option("--methods", sweep_methods, "Comma-separated methods (default: full)");

  std::string compare_methods = "full,discard_only,no_relabel,self_correct,plain";
  auto* cmp = app.add_subcommand("compare", "Run several methods on identical seeds");
  compare_opts.attach(cmp, all_keys);
  cmp->add_option("--methods", compare_methods, "Comma-separated methods")->capture_default_str();

  std::size_t verify_instances = 20, subset_trials = 1000;
  std::uint64_t verify_seed = 1;
  std::string verify_out = "out";
  auto* ver = app.add_subcommand("verify", "Check analytic gradients and greedy selection against oracles");
  ver->add_option("--instances", verify_instances, "Random meta-gradient instances")->capture_default_str();
  ver->add_option("--subset-trials", subset_trials, "Random split/selection instances")->capture_default_str();
  ver->add_option("--seed", verify_seed, "Seed")->capture_default_str();
  ver->add_option("--out", verify_out, "Report directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    return fail(kUsage, "usage", e.what(), sub ? sub->get_name() : "");
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const auto parse_methods = [](const std::string& list) {
    std::vector<Method> out;
    for (auto f : detail::split_fields(list)) out.push_back(parse_method(detail::trim(std::string(f))));
    return out;
  };
  try {
    if (command == "verify") return cmd_verify(verify_instances, subset_trials, verify_seed, verify_out);
    if (command == "generate") return cmd_generate(gen_opts.resolve());

    if (command == "train") {
      auto s = train_opts.resolve();
      if (train_opts.overrides["num_seeds"].empty()) s.num_seeds = 1;
      if (!method.empty()) s.method = parse_method(method);
      require_valid(s);
      if (!data_dir.empty()) return train_on_files(s, data_dir);
      print_aggregate(run_experiment(s));
      return kOk;
    }
    if (command == "sweep") {
      auto s = sweep_opts.resolve();
      if (!sweep_methods.empty()) s.methods = parse_methods(sweep_methods);
      s.sweep = SweepSpec{sweep_param, parse_sweep_values(sweep_values)};
      if (s.jobs == 1 && sweep_opts.overrides["jobs"].empty()) s.jobs = std::max(1u, std::thread::hardware_concurrency());
      print_aggregate(run_experiment(s));
      return kOk;
    }
    if (command == "compare") {
      auto s = compare_opts.resolve();
      s.methods = parse_methods(compare_methods);
      if (s.jobs == 1 && compare_opts.overrides["jobs"].empty()) s.jobs = std::max(1u, std::thread::hardware_concurrency());
      print_aggregate(run_experiment(s));
      return kOk;
    }
  } catch (const TrainingError& e) {
    return fail(kDiverged, "training_diverged", e.what(), command);
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "invalid_config", e.what(), command);
  } catch (const std::exception& e) {
    return fail(kRuntime, "runtime", e.what(), command);
  }
  return fail(kUsage, "usage", "unknown subcommand", command);
}
