// Seeded experiment driver: benchmark generation, per-seed training runs,
// aggregate tables, and plots. Everything aggregated or plotted is read back
// from the CSV files written for each seed.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasel/checkpoint.hpp"
#include "metasel/csv.hpp"
#include "metasel/log_io.hpp"
#include "metasel/metrics.hpp"
#include "metasel/noise_synth.hpp"
#include "metasel/plot.hpp"
#include "metasel/trainer.hpp"

namespace metasel {

struct SweepSpec {
  std::string parameter;
  std::vector<std::string> values;
};

struct ExperimentSpec {
  NoiseSpec noise;
  TrainConfig train;
  Method method = Method::full;
  std::vector<Method> methods;  // used by compare; empty means {method}
  std::size_t num_seeds = 1;
  std::string out_dir = "out";
  std::size_t meta_per_class = 10;
  std::size_t test_per_class = 200;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables
  std::size_t jobs = 1;
  std::optional<SweepSpec> sweep;
};

/// The desk-scale benchmark the acceptance suite runs: 5 classes, 200 per
/// class, 30% symmetric flips, 20% out-of-distribution, T_s = 5, T_max = 60.
inline ExperimentSpec default_benchmark() {
  ExperimentSpec s;
  s.noise.num_classes = 5;
  s.noise.samples_per_class = 200;
  s.noise.input_dim = 16;
  s.noise.in_dist_flip_rate = 0.3;
  s.noise.out_dist_fraction = 0.2;
  s.noise.cluster_separation = 5.0;
  s.noise.out_dist_offset = 4.0;
  s.noise.out_dist_clusters = 2;
  s.train.num_classes = 5;
  s.train.drop_rate = 0.4;
  s.train.relabel_rate = 0.3;
  s.train.warmup_epochs = 5;
  s.train.total_epochs = 60;
  s.train.batch_size = 60;
  s.train.meta_batch_size = 10;
  s.train.lr_classifier = 0.2;
  s.train.lr_selection = 10.0;
  s.train.feature_dim = 64;
  s.train.selection_hidden = 256;
  s.num_seeds = 5;
  return s;
}

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

inline std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

}  // namespace detail

/// Applies one `key = value` setting. Throws std::invalid_argument on an
/// unknown key or malformed value.
inline void apply_setting(ExperimentSpec& s, const std::string& key, const std::string& value) {
  const auto real = [&] { return detail::parse_number<double>(value, key.c_str()); };
  const auto count = [&] { return detail::parse_number<std::size_t>(value, key.c_str()); };
  try {
    if (key == "drop_rate") s.train.drop_rate = real();
    else if (key == "relabel_rate") s.train.relabel_rate = real();
    else if (key == "warmup_epochs") s.train.warmup_epochs = count();
    else if (key == "total_epochs") s.train.total_epochs = count();
    else if (key == "batch_size") s.train.batch_size = count();
    else if (key == "meta_batch_size") s.train.meta_batch_size = count();
    else if (key == "lr_classifier") s.train.lr_classifier = real();
    else if (key == "lr_selection") s.train.lr_selection = real();
    else if (key == "momentum") s.train.momentum = real();
    else if (key == "num_classes") s.train.num_classes = s.noise.num_classes = count();
    else if (key == "feature_dim") s.train.feature_dim = count();
    else if (key == "selection_hidden") s.train.selection_hidden = count();
    else if (key == "seed") s.train.seed = s.noise.seed = detail::parse_number<std::uint64_t>(value, "seed");
    else if (key == "pseudo_label_mode") s.train.pseudo_label_mode = parse_pseudo_label_mode(value);
    else if (key == "detach_features") s.train.detach_features = detail::parse_bool(value);
    else if (key == "meta_in_train") s.train.meta_in_train = detail::parse_bool(value);
    else if (key == "samples_per_class") s.noise.samples_per_class = count();
    else if (key == "input_dim") s.noise.input_dim = count();
    else if (key == "in_dist_flip_rate") s.noise.in_dist_flip_rate = real();
    else if (key == "out_dist_fraction") s.noise.out_dist_fraction = real();
    else if (key == "cluster_separation") s.noise.cluster_separation = real();
    else if (key == "out_dist_offset") s.noise.out_dist_offset = real();
    else if (key == "out_dist_clusters") s.noise.out_dist_clusters = count();
    else if (key == "method") s.method = parse_method(value);
    else if (key == "num_seeds") s.num_seeds = count();
    else if (key == "meta_per_class") s.meta_per_class = count();
    else if (key == "test_per_class") s.test_per_class = count();
    else if (key == "checkpoint_every") s.checkpoint_every = count();
    else if (key == "jobs") s.jobs = count();
    else if (key == "out") s.out_dir = value;
    else throw std::invalid_argument("unknown setting '" + key + "'");
  } catch (const std::runtime_error& e) {
    throw std::invalid_argument(e.what());
  }
}

/// Flat `key = value` config; `#` starts a comment.
inline void apply_config(ExperimentSpec& s, std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(s, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline void load_config(ExperimentSpec& s, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  apply_config(s, is);
}

inline std::vector<std::string> validate_experiment(const ExperimentSpec& s) {
  auto v = training_violations(s.train);
  for (auto& m : validate_noise_spec(s.noise)) v.push_back(std::move(m));
  if (s.num_seeds < 1) v.emplace_back("num_seeds must be >= 1");
  if (s.train.num_classes != s.noise.num_classes) v.emplace_back("num_classes differs between noise and training settings");
  if (s.meta_per_class < 1) v.emplace_back("meta_per_class must be >= 1");
  if (s.test_per_class < 1) v.emplace_back("test_per_class must be >= 1");
  if (s.meta_per_class * 5 > s.noise.samples_per_class) v.emplace_back("meta set must satisfy M <= N/5");
  return v;
}

/// Seed for trial k: the base seed offset by k, shared by data and training.
inline ExperimentSpec trial_spec(const ExperimentSpec& s, std::size_t k) {
  ExperimentSpec t = s;
  t.noise.seed = s.noise.seed + k;
  t.train.seed = s.train.seed + k;
  return t;
}

struct TrialResult {
  TrainLog log;
  ModelState model;
};

/// One seeded run. Checkpoints go to `checkpoint_prefix` + "_epoch<T>.ckpt" when enabled.
inline TrialResult run_trial(const ExperimentSpec& s, Method method, const std::string& checkpoint_prefix = {}) {
  const auto bench = make_benchmark(s.noise, s.meta_per_class, s.test_per_class, s.train.meta_in_train);
  const auto init = init_model(s.noise.input_dim, s.train);
  auto observer = make_tag_observer(bench.train, &bench.test);
  EpochObserver on_epoch = observer;
  if (s.checkpoint_every > 0 && !checkpoint_prefix.empty()) {
    on_epoch = [observer, &s, checkpoint_prefix](const EpochContext& ctx, EpochRecord& rec) {
      observer(ctx, rec);
      if (ctx.epoch % s.checkpoint_every == 0) {
        save_checkpoint(checkpoint_prefix + "_epoch" + std::to_string(ctx.epoch) + ".ckpt", ctx.model);
      }
    };
  }
  auto r = train(s.train, bench.train, bench.meta, init, method, on_epoch);
  return {std::move(r.log), std::move(r.model)};
}

struct Summary {
  double mean = kMissing;
  double std = kMissing;
  std::size_t count = 0;  // finite values used
};

/// Mean and sample standard deviation over the finite entries, in order.
inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  double sum = 0.0;
  for (double x : xs) {
    if (std::isfinite(x)) {
      sum += x;
      ++s.count;
    }
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (double x : xs) {
    if (std::isfinite(x)) ss += (x - s.mean) * (x - s.mean);
  }
  s.std = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
  return s;
}

/// Per-seed quantities the aggregate table summarizes, taken from a seed's log CSV.
struct SeedFinals {
  double final_aca = kMissing;
  double pin_gap = kMissing;            // P_in(InDistNoisy) − P_in(OutOfDist), final epoch
  double warmup_loss_gap = kMissing;    // loss(noisy) − loss(clean), epoch T_s
  double relabel_acc_in_dist = kMissing;
  double observed_acc_in_dist = kMissing;
  double in_dist_precision = kMissing;
  double out_dist_recall = kMissing;
  double discard_rate = kMissing;       // |discarded| / |noisy|: chance level for out_dist_recall
  double clean_precision = kMissing;
};

inline SeedFinals seed_finals(const CsvTable& log, std::size_t warmup_epochs) {
  SeedFinals f;
  if (log.rows.empty()) return f;
  const auto last = log.rows.size() - 1;
  const auto at = [&](const char* col, std::size_t row) {
    return log.has_column(col) ? parse_double(log.rows[row].at(log.column(col))) : kMissing;
  };
  f.final_aca = at("test_aca", last);
  f.pin_gap = at("pin_in_dist", last) - at("pin_out_dist", last);
  if (warmup_epochs >= 1 && warmup_epochs <= log.rows.size()) {
    f.warmup_loss_gap = at("loss_noisy", warmup_epochs - 1) - at("loss_clean", warmup_epochs - 1);
  }
  f.relabel_acc_in_dist = at("relabel_acc_in_dist", last);
  f.observed_acc_in_dist = at("observed_acc_in_dist", last);
  f.in_dist_precision = at("in_dist_precision", last);
  f.out_dist_recall = at("out_dist_recall", last);
  f.clean_precision = at("clean_precision", last);
  const double noisy = at("noisy_count", last), kept = at("in_dist_count", last);
  if (noisy > 0) f.discard_rate = (noisy - kept) / noisy;
  return f;
}

inline const std::vector<std::string>& aggregate_columns() {
  static const std::vector<std::string> cols = {
      "method", "parameter", "value", "num_seeds",
      "final_aca_mean", "final_aca_std",
      "pin_gap_mean", "pin_gap_std", "pin_gap_positive_seeds",
      "warmup_loss_gap_mean", "warmup_loss_gap_std", "warmup_loss_gap_positive_seeds",
      "relabel_acc_in_dist_mean", "relabel_acc_in_dist_std", "observed_acc_in_dist_mean", "relabel_wins_seeds",
      "in_dist_precision_mean", "out_dist_recall_mean", "discard_rate_mean", "clean_precision_mean"};
  return cols;
}

/// One aggregate row from the per-seed log CSVs of one (method, setting) cell.
inline std::vector<std::string> aggregate_row(const std::string& method, const std::string& parameter,
                                              const std::string& value, const std::vector<CsvTable>& logs,
                                              std::size_t warmup_epochs, std::size_t num_classes) {
  std::vector<SeedFinals> finals;
  for (const auto& l : logs) finals.push_back(seed_finals(l, warmup_epochs));
  const auto pick = [&](double SeedFinals::*field) {
    std::vector<double> v;
    for (const auto& f : finals) v.push_back(f.*field);
    return v;
  };
  const auto positive = [&](double SeedFinals::*field) {
    std::size_t n = 0;
    for (const auto& f : finals) n += (f.*field > 0.0);
    return std::to_string(n);
  };
  std::size_t relabel_wins = 0;
  for (const auto& f : finals) {
    relabel_wins += f.relabel_acc_in_dist > 1.0 / static_cast<double>(num_classes) &&
                    f.relabel_acc_in_dist > f.observed_acc_in_dist;
  }
  const auto aca = summarize(pick(&SeedFinals::final_aca));
  const auto gap = summarize(pick(&SeedFinals::pin_gap));
  const auto wl = summarize(pick(&SeedFinals::warmup_loss_gap));
  const auto rel = summarize(pick(&SeedFinals::relabel_acc_in_dist));
  return {method,
          parameter,
          value,
          std::to_string(logs.size()),
          format_double(aca.mean),
          format_double(aca.std),
          format_double(gap.mean),
          format_double(gap.std),
          positive(&SeedFinals::pin_gap),
          format_double(wl.mean),
          format_double(wl.std),
          positive(&SeedFinals::warmup_loss_gap),
          format_double(rel.mean),
          format_double(rel.std),
          format_double(summarize(pick(&SeedFinals::observed_acc_in_dist)).mean),
          std::to_string(relabel_wins),
          format_double(summarize(pick(&SeedFinals::in_dist_precision)).mean),
          format_double(summarize(pick(&SeedFinals::out_dist_recall)).mean),
          format_double(summarize(pick(&SeedFinals::discard_rate)).mean),
          format_double(summarize(pick(&SeedFinals::clean_precision)).mean)};
}

/// Per-epoch mean over seeds of one log column.
inline Series mean_curve(const std::string& name, const std::vector<CsvTable>& logs, const std::string& column) {
  Series s{name, {}, {}};
  if (logs.empty()) return s;
  const std::size_t epochs = logs.front().rows.size();
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<double> v;
    for (const auto& l : logs) {
      if (e < l.rows.size() && l.has_column(column)) v.push_back(parse_double(l.rows[e].at(l.column(column))));
    }
    s.x.push_back(static_cast<double>(e + 1));
    s.y.push_back(summarize(v).mean);
  }
  return s;
}

struct Cell {
  Method method;
  std::string parameter;  // empty when not sweeping
  std::string value;
  std::filesystem::path dir;
  std::vector<CsvTable> logs;
};

struct ExperimentResult {
  std::filesystem::path aggregate_csv;
  CsvTable aggregate;
  std::vector<Cell> cells;
};

namespace detail {

inline void plot_cell(const Cell& c) {
  const std::string label = to_string(c.method) + (c.parameter.empty() ? "" : " " + c.parameter + "=" + c.value);
  save_svg((c.dir / "aca_vs_epoch.svg").string(),
           {"Test ACA vs epoch (" + label + ")", "epoch", "ACA (%)", {mean_curve("test ACA", c.logs, "test_aca")}});
  save_svg((c.dir / "loss_by_tag.svg").string(),
           {"Training loss by noise type (" + label + ")",
            "epoch",
            "mean cross-entropy",
            {mean_curve("clean", c.logs, "loss_clean"), mean_curve("in-dist noisy", c.logs, "loss_in_dist"),
             mean_curve("out-of-dist", c.logs, "loss_out_dist")}});
  save_svg((c.dir / "pin_by_tag.svg").string(),
           {"P_in by noise type (" + label + ")",
            "epoch",
            "mean P_in",
            {mean_curve("clean", c.logs, "pin_clean"), mean_curve("in-dist noisy", c.logs, "pin_in_dist"),
             mean_curve("out-of-dist", c.logs, "pin_out_dist")}});
}

}  // namespace detail

/// Runs every (method × sweep value × seed) trial, writing
///   <out>/<method>[/<param>_<value>]/seed_<k>.csv   per-seed logs
///   <out>/<method>[/<param>_<value>]/*.svg          per-cell plots
///   <out>/aggregate.csv                              one row per cell
///   <out>/compare_aca.svg, <out>/sweep_<param>.svg   cross-cell plots
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  if (auto v = validate_experiment(spec); !v.empty()) throw std::invalid_argument(v.front());
  const std::vector<Method> methods = spec.methods.empty() ? std::vector<Method>{spec.method} : spec.methods;
  const std::filesystem::path root(spec.out_dir);
  std::filesystem::create_directories(root);

  std::vector<std::pair<std::string, std::string>> settings;
  if (spec.sweep) {
    for (const auto& v : spec.sweep->values) settings.emplace_back(spec.sweep->parameter, v);
  } else {
    settings.emplace_back("", "");
  }
  // Validate every sweep point before running anything.
  for (const auto& [param, value] : settings) {
    if (param.empty()) continue;
    ExperimentSpec probe = spec;
    apply_setting(probe, param, value);
    if (auto v = validate_experiment(probe); !v.empty()) throw std::invalid_argument(param + "=" + value + ": " + v.front());
  }

  ExperimentResult result;
  result.aggregate.header = aggregate_columns();
  for (Method method : methods) {
    for (const auto& [param, value] : settings) {
      ExperimentSpec cell_spec = spec;
      if (!param.empty()) apply_setting(cell_spec, param, value);
      Cell cell{method, param, value, root / to_string(method), {}};
      if (!param.empty()) cell.dir /= param + "_" + value;
      std::filesystem::create_directories(cell.dir);

      const auto run_seed = [&cell_spec, &cell, method](std::size_t k) {
        const auto ts = trial_spec(cell_spec, k);
        const auto trial = run_trial(ts, method, (cell.dir / ("seed_" + std::to_string(k))).string());
        save_csv((cell.dir / ("seed_" + std::to_string(k) + ".csv")).string(), train_log_table(trial.log));
      };
      const std::size_t jobs = std::max<std::size_t>(1, spec.jobs);
      for (std::size_t k0 = 0; k0 < spec.num_seeds; k0 += jobs) {
        std::vector<std::future<void>> running;
        for (std::size_t k = k0; k < std::min(spec.num_seeds, k0 + jobs); ++k) {
          running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, run_seed, k));
        }
        for (auto& f : running) f.get();
      }
      for (std::size_t k = 0; k < spec.num_seeds; ++k) {
        cell.logs.push_back(load_csv((cell.dir / ("seed_" + std::to_string(k) + ".csv")).string()));
      }
      result.aggregate.rows.push_back(aggregate_row(to_string(method), param, value, cell.logs,
                                                    cell_spec.train.warmup_epochs, cell_spec.train.num_classes));
      detail::plot_cell(cell);
      result.cells.push_back(std::move(cell));
    }
  }
  result.aggregate_csv = root / "aggregate.csv";
  save_csv(result.aggregate_csv.string(), result.aggregate);

  // Cross-cell plots, from the CSVs on disk.
  const auto agg = load_csv(result.aggregate_csv.string());
  if (methods.size() > 1 && !spec.sweep) {
    LineChart chart{"Test ACA vs epoch by method", "epoch", "ACA (%)", {}};
    for (const auto& c : result.cells) chart.series.push_back(mean_curve(to_string(c.method), c.logs, "test_aca"));
    save_svg((root / "compare_aca.svg").string(), chart);
  }
  if (spec.sweep) {
    LineChart chart{"Final test ACA vs " + spec.sweep->parameter, spec.sweep->parameter, "ACA (%)", {}};
    const auto mcol = agg.strings("method");
    const auto vcol = agg.numbers("value");
    const auto acol = agg.numbers("final_aca_mean");
    for (Method m : methods) {
      Series s{to_string(m), {}, {}};
      for (std::size_t i = 0; i < agg.rows.size(); ++i) {
        if (mcol[i] == to_string(m)) {
          s.x.push_back(vcol[i]);
          s.y.push_back(acol[i]);
        }
      }
      chart.series.push_back(std::move(s));
    }
    save_svg((root / ("sweep_" + spec.sweep->parameter + ".svg")).string(), chart);
  }
  return result;
}

/// Sweep values for a start:stop:step range (inclusive, tolerant of rounding)
/// or a comma-separated list.
inline std::vector<std::string> parse_sweep_values(const std::string& text) {
  std::vector<std::string> out;
  if (std::count(text.begin(), text.end(), ':') == 2) {
    const auto a = text.find(':'), b = text.find(':', a + 1);
    const double start = detail::parse_number<double>(text.substr(0, a), "sweep start");
    const double stop = detail::parse_number<double>(text.substr(a + 1, b - a - 1), "sweep stop");
    const double step = detail::parse_number<double>(text.substr(b + 1), "sweep step");
    if (!(step > 0.0) || stop < start) throw std::invalid_argument("sweep range must have step > 0 and stop >= start");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) {
      // Round to 12 significant digits so 0.15 + 3·0.05 prints as 0.3.
      std::ostringstream os;
      os.precision(12);
      os << start + static_cast<double>(i) * step;
      out.push_back(os.str());
    }
    return out;
  }
  for (auto f : detail::split_fields(text)) {
    const auto v = detail::trim(std::string(f));
    if (!v.empty()) out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty sweep value list");
  return out;
}

}  // namespace metasel
