#pragma once

// Tabular comparison pipeline: latest value per measurement code within the
// observation window, occurrence flags for medications and procedures,
// expanded history and demographics; mean imputation and min-max scaling
// fitted on the training split; chi-squared top-k selection; logistic
// regression or a one-hidden-layer MLP.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "medbert/event_model.hpp"
#include "medbert/numerics/matrix.hpp"
#include "medbert/task.hpp"

namespace medbert::baseline {

class FeatureSchema {
 public:
  // Columns for every lab/vital and medication/procedure code seen in `train`.
  static FeatureSchema from_cohort(const Cohort& train);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  // One row; NaN marks a missing measurement. Expects a windowed admission.
  // Codes absent from the schema are ignored.
  std::vector<double> featurize_latest(const Admission& adm) const;
  num::Matrix featurize(std::span<const Admission> admissions) const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t, std::less<>> measurement_col_;
  std::map<std::string, std::size_t, std::less<>> occurrence_col_;
  std::size_t history_offset_ = 0;
};

// Train-only statistics. transform() imputes with the train mean, scales
// with the train min/max, and clamps to [0, 1]; constant columns map to 0.
class TabularPipeline {
 public:
  static TabularPipeline fit(const num::Matrix& train);

  num::Matrix transform(const num::Matrix& x) const;

  const std::vector<double>& means() const noexcept { return mean_; }
  const std::vector<double>& mins() const noexcept { return min_; }
  const std::vector<double>& maxs() const noexcept { return max_; }

  bool operator==(const TabularPipeline&) const = default;

 private:
  std::vector<double> mean_, min_, max_;
};

// Per-feature statistic sum_c (O_c - E_c)^2 / E_c where O_c is the sum of
// the feature over rows of class c and E_c = (n_c / n) * column sum.
// Terms with E_c == 0 contribute 0. X must be non-negative.
std::vector<double> chi2_scores(const num::Matrix& x, std::span<const int> labels, int n_classes);

// Indices of the k largest scores, best first; ties go to the lower index.
// k > d returns all d and appends a warning.
std::vector<std::size_t> chi2_select(std::span<const double> scores, std::size_t k,
                                     std::vector<std::string>* warnings = nullptr);

inline constexpr std::size_t kSelectedFeatures = 50;

num::Matrix select_columns(const num::Matrix& x, std::span<const std::size_t> cols);

// Labels used for selection: class labels for binary/category, LOS > 2 for real.
std::vector<int> selection_labels(Task task, std::span<const double> labels);

struct LearnerConfig {
  std::size_t hidden = 0;  // 0 = logistic/linear regression
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 42;
};

LearnerConfig logreg_config(std::uint64_t seed);
LearnerConfig mlp_config(std::uint64_t seed);

// Logistic regression (sigmoid / softmax) or linear regression when
// hidden == 0; otherwise input -> hidden gelu units -> output.
// Same losses as the sequence model.
class TabularModel {
 public:
  TabularModel(std::size_t n_features, Task task, const LearnerConfig& cfg);

  // Adam with early stopping on validation loss; keeps the best weights.
  // Returns the number of epochs run.
  int fit(const num::Matrix& x_train, std::span<const double> y_train, const num::Matrix& x_valid,
          std::span<const double> y_valid);

  std::vector<std::vector<double>> predict(const num::Matrix& x) const;  // task scores
  double loss(const num::Matrix& x, std::span<const double> y) const;

  int best_epoch() const noexcept { return best_epoch_; }
  std::vector<num::Matrix> weights() const;

 private:
  num::Matrix logits(const num::Matrix& x, num::Matrix* hidden_pre, num::Matrix* hidden) const;

  Task task_;
  LearnerConfig cfg_;
  num::Matrix w1_, b1_, w2_, b2_;  // w1/b1 unused when hidden == 0
  int best_epoch_ = 0;
};

struct SplitFeatures {
  num::Matrix train, valid, test;
  std::vector<double> y_train, y_valid, y_test;
};

struct BaselineResult {
  std::vector<std::string> feature_names;  // full schema
  std::vector<std::size_t> selected;       // schema indices, best first
  std::vector<double> chi2;                // per schema column
  TabularPipeline pipeline;
  std::vector<std::vector<double>> logreg_scores;  // test split
  std::vector<std::vector<double>> mlp_scores;
  std::vector<double> test_labels;
  std::vector<std::string> warnings;
};

// Whole pipeline on windowed splits.
BaselineResult run_baseline(const CohortSplit& windowed, Task task, std::uint64_t seed,
                            std::size_t k = kSelectedFeatures);

// Header row of names, then one row per sample; NaN written as empty.
void write_feature_csv(const num::Matrix& x, std::span<const std::string> names, const std::filesystem::path& path);
// "name<TAB>chi2" per selected feature, best first.
void write_selection_report(const BaselineResult& r, const std::filesystem::path& path);

}  // namespace medbert::baseline
