#include "medbert/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "medbert/error.hpp"
#include "medbert/kv_config.hpp"
#include "medbert/model.hpp"
#include "medbert/numerics/ops.hpp"
#include "medbert/numerics/optim.hpp"
#include "medbert/trainer.hpp"

namespace medbert::baseline {

using num::Matrix;

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// history columns: 18 comorbidities, 14 prescription groups, arrival one-hot,
// hour bucket, weekday, season, triage, admission type one-hot; then age,
// sex one-hot, pregnant.
constexpr std::size_t kArrivalModes = 4;
constexpr std::size_t kAdmissionTypes = 3;

double admission_label(const Admission& adm, Task task) {
  switch (task) {
    case Task::binary:
      return label_binary(adm.los_days);
    case Task::category:
      return label_category(adm.los_days);
    case Task::real:
      return label_real(adm.los_days);
  }
  return 0.0;
}

std::vector<double> labels_of(const Cohort& c, Task task) {
  std::vector<double> y;
  y.reserve(c.size());
  for (const auto& a : c.admissions) y.push_back(admission_label(a, task));
  return y;
}

}  // namespace

// ---------------------------------------------------------------- features

FeatureSchema FeatureSchema::from_cohort(const Cohort& train) {
  std::set<std::string> measured, occurred;
  for (const auto& adm : train.admissions) {
    for (const auto& e : adm.events) (is_measurement(e.type) ? measured : occurred).insert(e.code);
  }
  FeatureSchema s;
  for (const auto& code : measured) {
    s.measurement_col_.emplace(code, s.names_.size());
    s.names_.push_back("latest:" + code);
  }
  for (const auto& code : occurred) {
    s.occurrence_col_.emplace(code, s.names_.size());
    s.names_.push_back("any:" + code);
  }
  s.history_offset_ = s.names_.size();
  for (const auto& n : default_comorbidity_names()) s.names_.push_back("cmb:" + std::string(n));
  for (const auto& n : prescription_group_names()) s.names_.push_back("rx:" + std::string(n));
  for (std::size_t m = 0; m < kArrivalModes; ++m) {
    s.names_.push_back("arrival:" + std::string(to_string(static_cast<ArrivalMode>(m))));
  }
  for (const char* n : {"hour_bucket", "weekday", "season", "triage"}) s.names_.emplace_back(n);
  for (std::size_t t = 0; t < kAdmissionTypes; ++t) {
    s.names_.push_back("admtype:" + std::string(to_string(static_cast<AdmissionType>(t))));
  }
  s.names_.emplace_back("age_years");
  for (int x = 0; x < 3; ++x) s.names_.push_back("sex:" + std::string(to_string(static_cast<Sex>(x))));
  s.names_.emplace_back("pregnant");
  return s;
}

std::vector<double> FeatureSchema::featurize_latest(const Admission& adm) const {
  std::vector<double> row(names_.size(), 0.0);
  for (const auto& [code, col] : measurement_col_) row[col] = kMissing;
  // Events are sorted, so the last write per code is the latest value.
  for (const auto& e : adm.events) {
    if (is_measurement(e.type)) {
      if (auto it = measurement_col_.find(e.code); it != measurement_col_.end() && e.value) row[it->second] = *e.value;
    } else if (auto it = occurrence_col_.find(e.code); it != occurrence_col_.end()) {
      row[it->second] = 1.0;
    }
  }
  std::size_t c = history_offset_;
  const History& h = adm.history;
  for (bool b : h.comorbidities) row[c++] = b ? 1.0 : 0.0;
  for (bool b : h.prescriptions) row[c++] = b ? 1.0 : 0.0;
  for (std::size_t m = 0; m < kArrivalModes; ++m) row[c++] = static_cast<std::size_t>(h.arrival_mode) == m ? 1.0 : 0.0;
  row[c++] = h.hour_bucket;
  row[c++] = h.weekday;
  row[c++] = h.season;
  row[c++] = h.triage;
  for (std::size_t t = 0; t < kAdmissionTypes; ++t) {
    row[c++] = static_cast<std::size_t>(h.admission_type) == t ? 1.0 : 0.0;
  }
  row[c++] = adm.demographics.age_years;
  for (int x = 0; x < 3; ++x) row[c++] = static_cast<int>(adm.demographics.sex) == x ? 1.0 : 0.0;
  row[c++] = adm.demographics.pregnant ? 1.0 : 0.0;
  return row;
}

Matrix FeatureSchema::featurize(std::span<const Admission> admissions) const {
  Matrix x(admissions.size(), names_.size());
  for (std::size_t i = 0; i < admissions.size(); ++i) {
    const auto row = featurize_latest(admissions[i]);
    std::copy(row.begin(), row.end(), x.row(i).begin());
  }
  return x;
}

// ---------------------------------------------------------------- pipeline

TabularPipeline TabularPipeline::fit(const Matrix& train) {
  if (train.rows() == 0) throw ValidationError("pipeline fit: empty training matrix");
  const std::size_t d = train.cols();
  TabularPipeline p;
  p.mean_.assign(d, 0.0);
  p.min_.assign(d, std::numeric_limits<double>::infinity());
  p.max_.assign(d, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> seen(d, 0);
  for (std::size_t i = 0; i < train.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = train(i, j);
      if (std::isnan(v)) continue;
      p.mean_[j] += v;
      ++seen[j];
    }
  }
  for (std::size_t j = 0; j < d; ++j) p.mean_[j] = seen[j] ? p.mean_[j] / static_cast<double>(seen[j]) : 0.0;
  // min/max of the imputed column
  for (std::size_t i = 0; i < train.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = std::isnan(train(i, j)) ? p.mean_[j] : train(i, j);
      p.min_[j] = std::min(p.min_[j], v);
      p.max_[j] = std::max(p.max_[j], v);
    }
  }
  return p;
}

Matrix TabularPipeline::transform(const Matrix& x) const {
  if (x.cols() != mean_.size()) {
    throw ValidationError("pipeline transform: expected " + std::to_string(mean_.size()) + " columns, got " +
                          std::to_string(x.cols()));
  }
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double v = std::isnan(x(i, j)) ? mean_[j] : x(i, j);
      const double range = max_[j] - min_[j];
      out(i, j) = range > 0.0 ? std::clamp((v - min_[j]) / range, 0.0, 1.0) : 0.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------- chi2

std::vector<double> chi2_scores(const Matrix& x, std::span<const int> labels, int n_classes) {
  if (labels.size() != x.rows()) throw ValidationError("chi2: label count does not match rows");
  if (x.rows() == 0) throw ValidationError("chi2: empty input");
  const std::size_t d = x.cols(), k = static_cast<std::size_t>(n_classes);
  std::vector<double> observed(k * d, 0.0), class_n(k, 0.0), total(d, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= n_classes) throw ValidationError("chi2: label out of range");
    class_n[static_cast<std::size_t>(y)] += 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = x(i, j);
      if (!(v >= 0.0)) throw ValidationError("chi2: features must be non-negative");
      observed[static_cast<std::size_t>(y) * d + j] += v;
      total[j] += v;
    }
  }
  const double n = static_cast<double>(x.rows());
  std::vector<double> stat(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t c = 0; c < k; ++c) {
      const double expected = class_n[c] / n * total[j];
      if (expected > 0.0) {
        const double diff = observed[c * d + j] - expected;
        stat[j] += diff * diff / expected;
      }
    }
  }
  return stat;
}

std::vector<std::size_t> chi2_select(std::span<const double> scores, std::size_t k, std::vector<std::string>* warnings) {
  if (k > scores.size()) {
    if (warnings) {
      warnings->push_back("chi2_select: k=" + std::to_string(k) + " exceeds " + std::to_string(scores.size()) +
                          " features; selecting all");
    }
    k = scores.size();
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

Matrix select_columns(const Matrix& x, std::span<const std::size_t> cols) {
  Matrix out(x.rows(), cols.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = x(i, cols[j]);
  }
  return out;
}

std::vector<int> selection_labels(Task task, std::span<const double> labels) {
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y[i] = task == Task::real ? label_binary(labels[i]) : static_cast<int>(labels[i]);
  }
  return y;
}

// ---------------------------------------------------------------- learners

LearnerConfig logreg_config(std::uint64_t seed) {
  LearnerConfig c;
  c.hidden = 0;
  c.lr = 1e-2;
  c.seed = seed;
  return c;
}

LearnerConfig mlp_config(std::uint64_t seed) {
  LearnerConfig c;
  c.hidden = 64;
  c.lr = 1e-3;
  c.seed = seed;
  return c;
}

TabularModel::TabularModel(std::size_t n_features, Task task, const LearnerConfig& cfg) : task_(task), cfg_(cfg) {
  if (n_features == 0) throw ValidationError("tabular model needs at least one feature");
  if (cfg.batch_size == 0 || cfg.max_epochs < 1 || cfg.patience < 1 || !(cfg.lr > 0.0)) {
    throw ValidationError("invalid learner configuration");
  }
  num::Rng rng(cfg.seed);
  const std::size_t out = task_outputs(task);
  const std::size_t in2 = cfg.hidden ? cfg.hidden : n_features;
  if (cfg.hidden) {
    w1_ = Matrix(n_features, cfg.hidden);
    b1_ = Matrix(1, cfg.hidden);
    std::normal_distribution<double> d1(0.0, 1.0 / std::sqrt(static_cast<double>(n_features)));
    for (double& v : w1_.flat()) v = d1(rng);
  }
  w2_ = Matrix(in2, out);
  b2_ = Matrix(1, out);
  std::normal_distribution<double> d2(0.0, 1.0 / std::sqrt(static_cast<double>(in2)));
  for (double& v : w2_.flat()) v = d2(rng);
}

Matrix TabularModel::logits(const Matrix& x, Matrix* hidden_pre, Matrix* hidden) const {
  if (!cfg_.hidden) {
    Matrix z = num::matmul(x, w2_);
    num::add_row_bias(z, b2_);
    return z;
  }
  Matrix pre = num::matmul(x, w1_);
  num::add_row_bias(pre, b1_);
  Matrix act = num::gelu(pre);
  Matrix z = num::matmul(act, w2_);
  num::add_row_bias(z, b2_);
  if (hidden_pre) *hidden_pre = std::move(pre);
  if (hidden) *hidden = std::move(act);
  return z;
}

double TabularModel::loss(const Matrix& x, std::span<const double> y) const {
  if (y.size() != x.rows() || x.rows() == 0) throw ValidationError("tabular loss: bad shapes");
  const Matrix z = logits(x, nullptr, nullptr);
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) total += task_loss(z.row(i), y[i], task_);
  return total / static_cast<double>(z.rows());
}

std::vector<std::vector<double>> TabularModel::predict(const Matrix& x) const {
  const Matrix z = logits(x, nullptr, nullptr);
  std::vector<std::vector<double>> out;
  out.reserve(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) out.push_back(scores_from_logits(z.row(i), task_));
  return out;
}

std::vector<Matrix> TabularModel::weights() const { return {w1_, b1_, w2_, b2_}; }

int TabularModel::fit(const Matrix& x_train, std::span<const double> y_train, const Matrix& x_valid,
                      std::span<const double> y_valid) {
  if (x_train.rows() == 0 || x_valid.rows() == 0) throw ValidationError("tabular fit: empty split");
  if (y_train.size() != x_train.rows() || y_valid.size() != x_valid.rows()) {
    throw ValidationError("tabular fit: label count does not match rows");
  }
  const std::size_t out = task_outputs(task_);
  num::Parameter pw1("w1", w1_.rows(), w1_.cols()), pb1("b1", b1_.rows(), b1_.cols(), false);
  num::Parameter pw2("w2", w2_.rows(), w2_.cols()), pb2("b2", b2_.rows(), b2_.cols(), false);
  pw1.value = w1_;
  pb1.value = b1_;
  pw2.value = w2_;
  pb2.value = b2_;
  std::vector<num::Parameter*> params{&pw2, &pb2};
  if (cfg_.hidden) params.insert(params.begin(), {&pw1, &pb1});
  const num::AdamConfig adam{cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay};

  auto sync = [&] {
    w1_ = pw1.value;
    b1_ = pb1.value;
    w2_ = pw2.value;
    b2_ = pb2.value;
  };

  num::Rng rng(cfg_.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order(x_train.rows());
  EarlyStopping stopper(cfg_.patience);
  std::vector<Matrix> best = weights();
  int epoch = 1;
  for (; epoch <= cfg_.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      const std::size_t b = end - start;
      Matrix xb(b, x_train.cols());
      for (std::size_t i = 0; i < b; ++i) {
        std::copy(x_train.row(order[start + i]).begin(), x_train.row(order[start + i]).end(), xb.row(i).begin());
      }
      Matrix pre, act;
      const Matrix z = logits(xb, &pre, &act);
      Matrix dz(b, out);
      for (std::size_t i = 0; i < b; ++i) {
        const auto g = task_loss_grad(z.row(i), y_train[order[start + i]], task_);
        for (std::size_t c = 0; c < out; ++c) dz(i, c) = g[c] / static_cast<double>(b);
      }
      for (auto* p : params) p->zero_grad();
      const Matrix& top_in = cfg_.hidden ? act : xb;
      num::matmul_tn_acc(top_in, dz, pw2.grad);
      num::accumulate_bias_grad(dz, pb2.grad);
      if (cfg_.hidden) {
        Matrix dact = num::matmul_nt(dz, w2_);
        for (std::size_t i = 0; i < dact.size(); ++i) dact.data()[i] *= num::gelu_grad(pre.data()[i]);
        num::matmul_tn_acc(xb, dact, pw1.grad);
        num::accumulate_bias_grad(dact, pb1.grad);
      }
      num::adam_step(params, adam);
      sync();
    }
    if (stopper.update(epoch, loss(x_valid, y_valid))) best = weights();
    if (stopper.should_stop()) break;
  }
  w1_ = best[0];
  b1_ = best[1];
  w2_ = best[2];
  b2_ = best[3];
  best_epoch_ = stopper.best_epoch();
  return std::min(epoch, cfg_.max_epochs);
}

// ---------------------------------------------------------------- pipeline run

BaselineResult run_baseline(const CohortSplit& windowed, Task task, std::uint64_t seed, std::size_t k) {
  BaselineResult r;
  const FeatureSchema schema = FeatureSchema::from_cohort(windowed.train);
  r.feature_names = schema.names();

  const Matrix raw_train = schema.featurize(windowed.train.admissions);
  r.pipeline = TabularPipeline::fit(raw_train);
  const Matrix x_train = r.pipeline.transform(raw_train);
  const Matrix x_valid = r.pipeline.transform(schema.featurize(windowed.valid.admissions));
  const Matrix x_test = r.pipeline.transform(schema.featurize(windowed.test.admissions));

  const auto y_train = labels_of(windowed.train, task);
  const auto y_valid = labels_of(windowed.valid, task);
  r.test_labels = labels_of(windowed.test, task);

  const int n_sel_classes = task == Task::category ? 3 : 2;
  r.chi2 = chi2_scores(x_train, selection_labels(task, y_train), n_sel_classes);
  r.selected = chi2_select(r.chi2, k, &r.warnings);

  const Matrix s_train = select_columns(x_train, r.selected);
  const Matrix s_valid = select_columns(x_valid, r.selected);
  const Matrix s_test = select_columns(x_test, r.selected);

  TabularModel logreg(r.selected.size(), task, logreg_config(seed));
  logreg.fit(s_train, y_train, s_valid, y_valid);
  r.logreg_scores = logreg.predict(s_test);

  TabularModel mlp(r.selected.size(), task, mlp_config(seed));
  mlp.fit(s_train, y_train, s_valid, y_valid);
  r.mlp_scores = mlp.predict(s_test);
  return r;
}

void write_feature_csv(const Matrix& x, std::span<const std::string> names, const std::filesystem::path& path) {
  if (names.size() != x.cols()) throw ValidationError("feature csv: name count does not match columns");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (j) out << ',';
      if (!std::isnan(x(i, j))) out << format_double(x(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_selection_report(const BaselineResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j : r.selected) out << r.feature_names[j] << '\t' << format_double(r.chi2[j]) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace medbert::baseline
