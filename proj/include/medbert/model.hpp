#pragma once

// Transformer encoder over tokenized admissions.
//
// Input row i is E_tok[token_i] + PE[position_i] + E_age[age_bucket] +
// E_sex[sex]; PE is the fixed sinusoidal table, so events sharing a
// position id get the same position vector. Each layer is post-norm:
//   h = LN(x + MHA(x)),  out = LN(h + W2 gelu(W1 h))
// with dropout on attention probabilities. The final encoder output gets
// dropout, and the [CLS] row feeds a linear head (1 logit for binary and
// real, 3 for category). Backward passes are written out per layer.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "medbert/kv_config.hpp"
#include "medbert/numerics/matrix.hpp"
#include "medbert/numerics/ops.hpp"
#include "medbert/numerics/optim.hpp"
#include "medbert/task.hpp"
#include "medbert/tokenizer.hpp"

namespace medbert {

struct ModelConfig {
  int n_layers = 6;
  int hidden_dim = 288;
  int intermediate_dim = 288;
  int n_heads = 8;
  int max_len = 256;
  double dropout_p = 0.10;
  double attention_dropout_p = 0.10;
  double weight_decay = 0.003;
  double lr = 1e-5;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  Task task = Task::binary;
  std::uint64_t seed = 42;
  int vocab_size = 0;
  int max_positions = 2048;

  static ModelConfig full_profile();
  // 2 layers, width 64, 4 heads, batch 32, lr 1e-3.
  static ModelConfig small_profile();

  void validate() const;
  int head_dim() const { return hidden_dim / n_heads; }

  // Keys are the field names, each prefixed with `prefix`.
  KeyValueConfig to_kv(const std::string& prefix = "") const;
  static ModelConfig from_kv(const KeyValueConfig& kv, const ModelConfig& defaults, const std::string& prefix = "");
  bool operator==(const ModelConfig&) const = default;
};

// The key projection has no bias: a shared offset on every key shifts each
// score row by a constant, which softmax ignores.
struct EncoderLayer {
  num::Parameter q_weight, q_bias, k_weight, v_weight, v_bias, o_weight, o_bias;
  num::Parameter ln1_gain, ln1_bias;
  num::Parameter ff1_weight, ff1_bias, ff2_weight, ff2_bias;
  num::Parameter ln2_gain, ln2_bias;
};

// Static sinusoid: row p, column 2i = sin(p / 10000^(2i/d)), column 2i+1 = cos(same).
num::Matrix sinusoidal_table(std::size_t n_positions, std::size_t dim);

class MBertModel {
 public:
  // Weights ~ N(0, 0.02^2), biases 0, layer-norm gains 1.
  explicit MBertModel(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }

  // len x hidden embedding sum; throws ValidationError on out-of-range ids.
  num::Matrix embed(const TokenizedSequence& seq) const;

  // Full encoder stack over every row, including the final output dropout.
  // key_valid[j] == 0 masks key j out of attention.
  num::Matrix encode(const num::Matrix& x, std::span<const std::uint8_t> key_valid, bool train, num::Rng& rng) const;

  // Eval-mode head logits for the [CLS] row.
  std::vector<double> forward(const TokenizedSequence& seq) const;

  // Forward + backward for one sequence. Adds grad_scale * dloss/dtheta to
  // every parameter's grad and returns the loss. With train == false
  // dropout is off and rng is untouched.
  double accumulate_gradients(const TokenizedSequence& seq, bool train, num::Rng& rng, double grad_scale);

  std::vector<num::Parameter*> parameters();
  std::vector<const num::Parameter*> parameters() const;
  void zero_grad();

  const num::Matrix& position_table() const noexcept { return position_table_; }

 private:
  struct LayerCache;
  struct SequenceCache;

  num::Matrix layer_forward(const EncoderLayer& layer, const num::Matrix& x, std::size_t n_query,
                            std::span<const std::uint8_t> key_valid, bool train, num::Rng& rng,
                            LayerCache* cache) const;
  num::Matrix layer_backward(EncoderLayer& layer, const LayerCache& cache, const num::Matrix& d_out);
  std::vector<double> run(const TokenizedSequence& seq, bool train, num::Rng& rng, SequenceCache* cache) const;
  void check_ids(const TokenizedSequence& seq) const;

  ModelConfig cfg_;
  num::Parameter token_embedding_;
  num::Parameter age_embedding_;
  num::Parameter sex_embedding_;
  std::vector<EncoderLayer> layers_;
  num::Parameter head_weight_;
  num::Parameter head_bias_;
  num::Matrix position_table_;
};

// Task label for a sequence: 0/1, class index, or clipped LOS in days.
double task_label(const TokenizedSequence& seq, Task task);

// binary: sigmoid cross-entropy; category: softmax cross-entropy;
// real: squared error in days.
double task_loss(std::span<const double> logits, double label, Task task);
// d task_loss / d logits
std::vector<double> task_loss_grad(std::span<const double> logits, double label, Task task);

// Eval-mode scores: sigmoid probability, softmax vector, or predicted days.
std::vector<double> scores_from_logits(std::span<const double> logits, Task task);

}  // namespace medbert
