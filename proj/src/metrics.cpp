#include "medbert/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "medbert/error.hpp"
#include "medbert/kv_config.hpp"

namespace medbert::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ValidationError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) +
                          ")");
  }
}

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts class_counts(std::span<const int> labels) {
  Counts c;
  for (int y : labels) {
    if (y == 1) {
      ++c.pos;
    } else if (y == 0) {
      ++c.neg;
    } else {
      throw ValidationError("binary labels must be 0 or 1, got " + std::to_string(y));
    }
  }
  if (c.pos == 0 || c.neg == 0) throw UndefinedMetricError("AUROC is undefined when only one class is present");
  return c;
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// Walks groups of tied scores, calling step(threshold, tp, fp) after each group.
template <typename Step>
void sweep(std::span<const double> scores, std::span<const int> labels, Step step) {
  for (double s : scores) {
    if (std::isnan(s)) throw ValidationError("scores contain NaN");
  }
  const auto idx = descending_order(scores);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double thr = scores[idx[i]];
    for (; i < idx.size() && scores[idx[i]] == thr; ++i) (labels[idx[i]] == 1 ? tp : fp)++;
    step(thr, tp, fp);
  }
}

double clamp_days(double v) { return std::clamp(v, 0.0, kLosClipDays); }

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "auroc");
  const Counts c = class_counts(labels);
  // Twice the area in units of (1/P)(1/N); integers until the final division.
  double twice = 0.0;
  std::size_t prev_tp = 0, prev_fp = 0;
  sweep(scores, labels, [&](double, std::size_t tp, std::size_t fp) {
    twice += static_cast<double>(fp - prev_fp) * static_cast<double>(tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
  });
  return twice / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "roc_curve");
  const Counts c = class_counts(labels);
  const double p = static_cast<double>(c.pos), n = static_cast<double>(c.neg);
  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  sweep(scores, labels, [&](double thr, std::size_t tp, std::size_t fp) {
    curve.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p, thr});
  });
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

void write_roc_csv(std::span<const RocPoint> curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "fpr,tpr,threshold\n";
  for (const auto& pt : curve) {
    out << format_double(pt.fpr) << ',' << format_double(pt.tpr) << ','
        << (std::isinf(pt.threshold) ? std::string("inf") : format_double(pt.threshold)) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

double macro_auroc(const std::vector<std::vector<double>>& probs, std::span<const int> labels, int n_classes) {
  check_lengths(probs.size(), labels.size(), "macro_auroc");
  double total = 0.0;
  std::vector<double> s(probs.size());
  std::vector<int> y(probs.size());
  for (int c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i].size() != static_cast<std::size_t>(n_classes)) throw ValidationError("macro_auroc: score width mismatch");
      s[i] = probs[i][static_cast<std::size_t>(c)];
      y[i] = labels[i] == c ? 1 : 0;
    }
    total += auroc(s, y);
  }
  return total / n_classes;
}

// ---------------------------------------------------------------- confusion / F1

ConfusionMatrix::ConfusionMatrix(int n_classes) : n_(n_classes) {
  if (n_classes < 2) throw ValidationError("confusion matrix needs at least 2 classes");
  counts_.assign(static_cast<std::size_t>(n_ * n_), 0);
}

ConfusionMatrix::ConfusionMatrix(std::span<const int> preds, std::span<const int> labels, int n_classes)
    : ConfusionMatrix(n_classes) {
  check_lengths(preds.size(), labels.size(), "confusion matrix");
  for (std::size_t i = 0; i < preds.size(); ++i) add(labels[i], preds[i]);
}

void ConfusionMatrix::add(int truth, int pred) {
  if (truth < 0 || truth >= n_ || pred < 0 || pred >= n_) {
    throw ValidationError("class index out of range: truth " + std::to_string(truth) + ", pred " + std::to_string(pred));
  }
  ++counts_[static_cast<std::size_t>(truth * n_ + pred)];
}

std::size_t ConfusionMatrix::at(int truth, int pred) const { return counts_.at(static_cast<std::size_t>(truth * n_ + pred)); }

std::size_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

double ConfusionMatrix::precision(int c) const {
  std::size_t predicted = 0;
  for (int t = 0; t < n_; ++t) predicted += at(t, c);
  return predicted == 0 ? 0.0 : static_cast<double>(at(c, c)) / static_cast<double>(predicted);
}

double ConfusionMatrix::recall(int c) const {
  std::size_t actual = 0;
  for (int p = 0; p < n_; ++p) actual += at(c, p);
  return actual == 0 ? 0.0 : static_cast<double>(at(c, c)) / static_cast<double>(actual);
}

double ConfusionMatrix::f1(int c) const {
  const double p = precision(c), r = recall(c);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

std::vector<int> threshold_predictions(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<int> argmax_predictions(const std::vector<std::vector<double>>& probs) {
  std::vector<int> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].empty()) throw ValidationError("argmax of an empty score vector");
    out[i] = static_cast<int>(std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
  }
  return out;
}

double f1_binary(std::span<const int> preds, std::span<const int> labels) {
  if (preds.empty()) throw ValidationError("f1: empty input");
  return ConfusionMatrix(preds, labels, 2).f1(1);
}

double f1_macro(std::span<const int> preds, std::span<const int> labels, int n_classes) {
  if (preds.empty()) throw ValidationError("f1: empty input");
  const ConfusionMatrix cm(preds, labels, n_classes);
  double total = 0.0;
  for (int c = 0; c < n_classes; ++c) total += cm.f1(c);
  return total / n_classes;
}

double mae(std::span<const double> preds, std::span<const double> labels) {
  check_lengths(preds.size(), labels.size(), "mae");
  if (preds.empty()) throw ValidationError("mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(clamp_days(preds[i]) - labels[i]);
  return s / static_cast<double>(preds.size());
}

double mse(std::span<const double> preds, std::span<const double> labels) {
  check_lengths(preds.size(), labels.size(), "mse");
  if (preds.empty()) throw ValidationError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = clamp_days(preds[i]) - labels[i];
    s += d * d;
  }
  return s / static_cast<double>(preds.size());
}

std::vector<MetricValue> task_metrics(Task task, const std::vector<std::vector<double>>& scores,
                                      std::span<const double> labels) {
  check_lengths(scores.size(), labels.size(), "task_metrics");
  const std::size_t width = task_outputs(task);
  for (const auto& s : scores) {
    if (s.size() != width) throw ValidationError("task_metrics: score vector width does not match the task");
  }
  if (task == Task::real) {
    std::vector<double> preds(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i][0];
    return {{"mae", mae(preds, labels)}, {"mse", mse(preds, labels)}};
  }
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = static_cast<int>(labels[i]);
  if (task == Task::binary) {
    std::vector<double> s(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) s[i] = scores[i][0];
    return {{"auroc", auroc(s, y)}, {"f1", f1_binary(threshold_predictions(s), y)}};
  }
  return {{"auroc", macro_auroc(scores, y, 3)}, {"f1", f1_macro(argmax_predictions(scores), y, 3)}};
}

// ---------------------------------------------------------------- strata

std::string age_stratum(int age_years) {
  const int lo = std::max(0, age_years) / 10 * 10;
  return "age:" + std::to_string(lo) + "-" + std::to_string(lo + 9);
}

std::string sex_stratum(Sex s) { return "sex:" + std::string(to_string(s)); }

std::vector<StratumResult> stratified_eval(Task task, const std::vector<std::vector<double>>& scores,
                                           std::span<const double> labels, std::span<const Demographics> demographics,
                                           std::size_t min_size) {
  check_lengths(scores.size(), labels.size(), "stratified_eval");
  check_lengths(scores.size(), demographics.size(), "stratified_eval");

  std::map<int, std::vector<std::size_t>> by_decade;
  std::map<int, std::vector<std::size_t>> by_sex;
  for (std::size_t i = 0; i < demographics.size(); ++i) {
    by_decade[std::max(0, demographics[i].age_years) / 10].push_back(i);
    by_sex[static_cast<int>(demographics[i].sex)].push_back(i);
  }

  std::vector<StratumResult> out;
  auto evaluate = [&](std::string name, const std::vector<std::size_t>& members) {
    StratumResult r;
    r.stratum = std::move(name);
    r.n = members.size();
    r.suppressed = r.n <= min_size;
    if (!r.suppressed) {
      std::vector<std::vector<double>> s;
      std::vector<double> y;
      for (std::size_t i : members) {
        s.push_back(scores[i]);
        y.push_back(labels[i]);
      }
      try {
        r.metrics = task_metrics(task, s, y);
      } catch (const UndefinedMetricError& e) {
        r.note = e.what();
      }
    }
    out.push_back(std::move(r));
  };
  for (const auto& [decade, members] : by_decade) evaluate(age_stratum(decade * 10), members);
  for (const auto& [sex, members] : by_sex) evaluate(sex_stratum(static_cast<Sex>(sex)), members);
  return out;
}

std::vector<ReportRow> report_rows(Task task, const std::string& model, std::span<const MetricValue> overall,
                                   std::span<const StratumResult> strata) {
  const std::string t(to_string(task));
  std::vector<ReportRow> rows;
  for (const auto& m : overall) rows.push_back({t, model, m.name, m.value, "all"});
  for (const auto& s : strata) {
    if (s.suppressed) {
      rows.push_back({t, model, "suppressed_n", static_cast<double>(s.n), s.stratum});
      continue;
    }
    rows.push_back({t, model, "n", static_cast<double>(s.n), s.stratum});
    for (const auto& m : s.metrics) rows.push_back({t, model, m.name, m.value, s.stratum});
  }
  return rows;
}

void write_report_csv(std::span<const ReportRow> rows, std::uint64_t config_hash, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# config_hash=" << hex64(config_hash) << '\n';
  out << "task,model,metric,value,stratum\n";
  for (const auto& r : rows) {
    out << r.task << ',' << r.model << ',' << r.metric << ',' << format_double(r.value) << ',' << r.stratum << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace medbert::metrics
