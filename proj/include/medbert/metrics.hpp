#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "medbert/event_model.hpp"
#include "medbert/task.hpp"

namespace medbert::metrics {

// Trapezoidal area under the ROC curve. Tied scores form one step, so the
// result equals P(score_pos > score_neg) + 0.5 * P(tie).
// Throws UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predict positive when score >= threshold; +inf for the origin
};

// One point per distinct score, descending, preceded by (0, 0).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(std::span<const RocPoint> curve);

void write_roc_csv(std::span<const RocPoint> curve, const std::filesystem::path& path);

// Mean of the one-vs-rest AUROCs over classes 0..n_classes-1.
// probs[i][c] is the score of sample i for class c.
double macro_auroc(const std::vector<std::vector<double>>& probs, std::span<const int> labels, int n_classes);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes);
  ConfusionMatrix(std::span<const int> preds, std::span<const int> labels, int n_classes);

  void add(int truth, int pred);
  std::size_t at(int truth, int pred) const;
  int n_classes() const noexcept { return n_; }
  std::size_t total() const noexcept;

  // Zero when the denominator is zero.
  double precision(int c) const;
  double recall(int c) const;
  double f1(int c) const;

 private:
  int n_;
  std::vector<std::size_t> counts_;
};

std::vector<int> threshold_predictions(std::span<const double> scores, double threshold = 0.5);
// Index of the largest entry; the first one on ties.
std::vector<int> argmax_predictions(const std::vector<std::vector<double>>& probs);

// F1 of the positive class.
double f1_binary(std::span<const int> preds, std::span<const int> labels);
double f1_macro(std::span<const int> preds, std::span<const int> labels, int n_classes);

// Predictions are clamped to [0, 30] first.
double mae(std::span<const double> preds, std::span<const double> labels);
double mse(std::span<const double> preds, std::span<const double> labels);

struct MetricValue {
  std::string name;
  double value = 0.0;
};

// binary: auroc, f1; category: auroc (macro one-vs-rest), f1 (macro);
// real: mae, mse. scores[i] is the model output vector for sample i and
// labels hold class indices (as doubles) or days.
std::vector<MetricValue> task_metrics(Task task, const std::vector<std::vector<double>>& scores,
                                      std::span<const double> labels);

inline constexpr std::size_t kMinStratumSize = 100;

struct StratumResult {
  std::string stratum;  // "age:60-69", "sex:female"
  std::size_t n = 0;
  bool suppressed = false;  // n <= min_size
  std::vector<MetricValue> metrics;
  std::string note;  // why a metric is missing, e.g. a single-class stratum
};

std::string age_stratum(int age_years);
std::string sex_stratum(Sex s);

// Age decades and sex, in that order; age strata sorted by decade.
std::vector<StratumResult> stratified_eval(Task task, const std::vector<std::vector<double>>& scores,
                                           std::span<const double> labels, std::span<const Demographics> demographics,
                                           std::size_t min_size = kMinStratumSize);

struct ReportRow {
  std::string task;
  std::string model;
  std::string metric;
  double value = 0.0;
  std::string stratum;  // "all" for the whole split
};

std::vector<ReportRow> report_rows(Task task, const std::string& model, std::span<const MetricValue> overall,
                                   std::span<const StratumResult> strata);

// "# config_hash=<hex>" line, then CSV task,model,metric,value,stratum.
void write_report_csv(std::span<const ReportRow> rows, std::uint64_t config_hash, const std::filesystem::path& path);

}  // namespace medbert::metrics
