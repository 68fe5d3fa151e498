#include "medbert/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "medbert/error.hpp"
#include "medbert/kv_config.hpp"

namespace medbert {

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ValidationError("patience must be >= 1");
}

bool EarlyStopping::update(int epoch, double loss) {
  if (loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

std::vector<num::Matrix> snapshot_weights(const MBertModel& model) {
  std::vector<num::Matrix> out;
  for (const num::Parameter* p : model.parameters()) out.push_back(p->value);
  return out;
}

void restore_weights(MBertModel& model, const std::vector<num::Matrix>& weights) {
  auto params = model.parameters();
  if (params.size() != weights.size()) throw ValidationError("restore_weights: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->value.same_shape(weights[i])) {
      throw ValidationError("restore_weights: shape mismatch for " + params[i]->name);
    }
    params[i]->value = weights[i];
  }
}

double evaluate_loss(const MBertModel& model, std::span<const TokenizedSequence> seqs) {
  if (seqs.empty()) throw ValidationError("evaluate_loss: empty dataset");
  const Task task = model.config().task;
  double total = 0.0;
  for (const auto& s : seqs) total += task_loss(model.forward(s), task_label(s, task), task);
  return total / static_cast<double>(seqs.size());
}

std::vector<std::vector<double>> predict(const MBertModel& model, std::span<const TokenizedSequence> seqs) {
  std::vector<std::vector<double>> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(scores_from_logits(model.forward(s), model.config().task));
  return out;
}

TrainResult train(MBertModel& model, std::span<const TokenizedSequence> train_set,
                  std::span<const TokenizedSequence> valid_set, const TrainHooks& hooks) {
  if (train_set.empty() || valid_set.empty()) throw ValidationError("train: train and valid splits must be non-empty");
  const ModelConfig& cfg = model.config();
  num::Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const num::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  auto params = model.parameters();

  TrainResult result;
  result.initial_train_loss = evaluate_loss(model, train_set);

  EarlyStopping stopper(cfg.patience);
  std::vector<num::Matrix> best = snapshot_weights(model);
  std::vector<std::size_t> order(train_set.size());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        epoch_loss += model.accumulate_gradients(train_set[order[i]], true, rng, scale);
      }
      num::adam_step(params, adam);
    }

    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), evaluate_loss(model, valid_set)};
    if (hooks.valid_loss_override) rec.valid_loss = hooks.valid_loss_override(epoch, rec.valid_loss);
    result.log.push_back(rec);
    if (hooks.on_epoch_end) hooks.on_epoch_end(rec);

    if (stopper.update(epoch, rec.valid_loss)) best = snapshot_weights(model);
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }

  restore_weights(model, best);
  result.best_epoch = stopper.best_epoch();
  result.best_valid_loss = stopper.best_loss();
  return result;
}

void write_training_log(std::span<const EpochRecord> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,valid_loss\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.valid_loss) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace medbert
