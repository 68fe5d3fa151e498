#pragma once

// Mini-batch training with early stopping on validation loss.

#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "medbert/model.hpp"

namespace medbert {

// Tracks the best loss seen so far. Epochs are 1-based. Training stops once
// `patience` consecutive epochs fail to set a new strict minimum.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  // Returns true when `loss` is a new minimum.
  bool update(int epoch, double loss);
  bool should_stop() const noexcept { return stale_ >= patience_; }

  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }
  int stale_epochs() const noexcept { return stale_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_valid_loss = 0.0;
  double initial_train_loss = 0.0;  // eval-mode loss before the first update
  bool stopped_early = false;
};

struct TrainHooks {
  // Replaces the measured validation loss for an epoch.
  std::function<double(int epoch, double measured)> valid_loss_override;
  std::function<void(const EpochRecord&)> on_epoch_end;
};

// Restores the best-validation weights before returning.
TrainResult train(MBertModel& model, std::span<const TokenizedSequence> train_set,
                  std::span<const TokenizedSequence> valid_set, const TrainHooks& hooks = {});

// Mean eval-mode loss.
double evaluate_loss(const MBertModel& model, std::span<const TokenizedSequence> seqs);

// Eval-mode scores per sequence (see scores_from_logits).
std::vector<std::vector<double>> predict(const MBertModel& model, std::span<const TokenizedSequence> seqs);

// CSV: epoch,train_loss,valid_loss
void write_training_log(std::span<const EpochRecord> log, const std::filesystem::path& path);

// Copies of every parameter value, in parameters() order.
std::vector<num::Matrix> snapshot_weights(const MBertModel& model);
void restore_weights(MBertModel& model, const std::vector<num::Matrix>& weights);

}  // namespace medbert
