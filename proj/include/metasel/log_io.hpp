// TrainLog ⇄ CSV, one row per epoch with a fixed column order.
#pragma once

#include <string>
#include <vector>

#include "metasel/csv.hpp"
#include "metasel/trainer.hpp"

namespace metasel {

inline const std::vector<std::string>& train_log_columns(bool with_selection) {
  static const std::vector<std::string> all = {
      "epoch",          "alpha",          "mean_train_loss",   "samples_seen",         "clean_count",
      "noisy_count",    "in_dist_count",  "test_aca",          "loss_clean",           "loss_in_dist",
      "loss_out_dist",  "loss_noisy",     "pin_clean",         "pin_in_dist",          "pin_out_dist",
      "relabel_acc",    "relabel_acc_in_dist", "observed_acc_in_dist", "clean_precision", "clean_recall",
      "in_dist_precision", "in_dist_recall", "out_dist_precision", "out_dist_recall"};
  static const std::vector<std::string> plain = {
      "epoch",        "alpha",        "mean_train_loss", "samples_seen", "test_aca",  "loss_clean",
      "loss_in_dist", "loss_out_dist", "loss_noisy",     "pin_clean",    "pin_in_dist", "pin_out_dist"};
  return with_selection ? all : plain;
}

/// Plain runs never split or select, so their logs carry no selection columns.
inline CsvTable train_log_table(const TrainLog& log) {
  const bool sel = log.method != Method::plain;
  CsvTable t;
  t.header = train_log_columns(sel);
  for (const auto& r : log.epochs) {
    std::vector<std::string> row = {std::to_string(r.epoch), format_double(r.alpha), format_double(r.mean_train_loss),
                                    std::to_string(r.samples_seen)};
    if (sel) {
      row.push_back(std::to_string(r.clean_count));
      row.push_back(std::to_string(r.noisy_count));
      row.push_back(std::to_string(r.in_dist_count));
    }
    for (double v : {r.test_aca, r.loss_clean, r.loss_in_dist, r.loss_out_dist, r.loss_noisy, r.pin_clean,
                     r.pin_in_dist, r.pin_out_dist}) {
      row.push_back(format_double(v));
    }
    if (sel) {
      for (double v : {r.relabel_acc, r.relabel_acc_in_dist, r.observed_acc_in_dist, r.clean_precision, r.clean_recall,
                       r.in_dist_precision, r.in_dist_recall, r.out_dist_precision, r.out_dist_recall}) {
        row.push_back(format_double(v));
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace metasel
