#include "medbert/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "medbert/error.hpp"
#include "medbert/numerics/kernels.hpp"

namespace medbert {

using num::Matrix;
using num::Parameter;

namespace {

constexpr double kInitStd = 0.02;
constexpr double kMaskedScore = -1e9;

constexpr std::array<std::string_view, 3> kTaskNames{"binary", "category", "real"};

void init_normal(Parameter& p, num::Rng& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  for (double& v : p.value.flat()) v = dist(rng);
}

// y[0:rows] = x[0:rows] * W + b
Matrix linear(const Matrix& x, std::size_t rows, const Parameter& w, const Parameter* b) {
  Matrix y(rows, w.value.cols());
  num::kernels::active().gemm_nn(rows, w.value.cols(), w.value.rows(), x.data(), x.cols(), w.value.data(),
                                 w.value.cols(), y.data(), y.cols());
  if (b) num::add_row_bias(y, b->value);
  return y;
}

// dW += x[0:rows]^T dy, db += colsum(dy); returns dy * W^T.
Matrix linear_backward(const Matrix& x, const Matrix& dy, Parameter& w, Parameter* b) {
  const auto& k = num::kernels::active();
  const std::size_t rows = dy.rows(), in = w.value.rows(), out = w.value.cols();
  k.gemm_tn_acc(in, out, rows, x.data(), x.cols(), dy.data(), dy.cols(), w.grad.data(), out);
  if (b) num::accumulate_bias_grad(dy, b->grad);
  Matrix dx(rows, in);
  k.gemm_nt(rows, in, out, dy.data(), dy.cols(), w.value.data(), out, dx.data(), in);
  return dx;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

// ---------------------------------------------------------------- config

std::string_view to_string(Task t) { return kTaskNames.at(static_cast<std::size_t>(t)); }

std::optional<Task> parse_task(std::string_view s) {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (kTaskNames[i] == s) return static_cast<Task>(i);
  }
  return std::nullopt;
}

std::size_t task_outputs(Task t) { return t == Task::category ? 3 : 1; }

ModelConfig ModelConfig::full_profile() { return ModelConfig{}; }

ModelConfig ModelConfig::small_profile() {
  ModelConfig c;
  c.n_layers = 2;
  c.hidden_dim = 64;
  c.intermediate_dim = 64;
  c.n_heads = 4;
  c.batch_size = 32;
  c.lr = 1e-3;
  return c;
}

void ModelConfig::validate() const {
  if (n_layers < 1) throw ValidationError("n_layers must be >= 1");
  if (hidden_dim < 2 || intermediate_dim < 1 || n_heads < 1) throw ValidationError("layer sizes must be positive");
  if (hidden_dim % n_heads != 0) throw ValidationError("hidden_dim must be divisible by n_heads");
  if (hidden_dim % 2 != 0) throw ValidationError("hidden_dim must be even for the sinusoidal table");
  if (max_len < static_cast<int>(kPrefixTokens)) throw ValidationError("max_len must cover [CLS] + history");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0) || !(attention_dropout_p >= 0.0 && attention_dropout_p < 1.0)) {
    throw ValidationError("dropout probabilities must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0) || !(lr > 0.0)) throw ValidationError("lr must be > 0 and weight_decay >= 0");
  if (batch_size < 1 || max_epochs < 1 || patience < 1) throw ValidationError("batch_size, max_epochs, patience must be >= 1");
  if (vocab_size < static_cast<int>(kMaskId) + 1) throw ValidationError("vocab_size must include the reserved tokens");
  if (max_positions < max_len) throw ValidationError("max_positions must be >= max_len");
}

KeyValueConfig ModelConfig::to_kv(const std::string& p) const {
  KeyValueConfig kv;
  kv.set(p + "n_layers", std::to_string(n_layers));
  kv.set(p + "hidden_dim", std::to_string(hidden_dim));
  kv.set(p + "intermediate_dim", std::to_string(intermediate_dim));
  kv.set(p + "n_heads", std::to_string(n_heads));
  kv.set(p + "max_len", std::to_string(max_len));
  kv.set(p + "dropout_p", format_double(dropout_p));
  kv.set(p + "attention_dropout_p", format_double(attention_dropout_p));
  kv.set(p + "weight_decay", format_double(weight_decay));
  kv.set(p + "lr", format_double(lr));
  kv.set(p + "batch_size", std::to_string(batch_size));
  kv.set(p + "max_epochs", std::to_string(max_epochs));
  kv.set(p + "patience", std::to_string(patience));
  kv.set(p + "task", std::string(to_string(task)));
  kv.set(p + "seed", std::to_string(seed));
  kv.set(p + "vocab_size", std::to_string(vocab_size));
  kv.set(p + "max_positions", std::to_string(max_positions));
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv, const ModelConfig& d, const std::string& p) {
  ModelConfig c;
  c.n_layers = static_cast<int>(kv.get_int(p + "n_layers", d.n_layers));
  c.hidden_dim = static_cast<int>(kv.get_int(p + "hidden_dim", d.hidden_dim));
  c.intermediate_dim = static_cast<int>(kv.get_int(p + "intermediate_dim", d.intermediate_dim));
  c.n_heads = static_cast<int>(kv.get_int(p + "n_heads", d.n_heads));
  c.max_len = static_cast<int>(kv.get_int(p + "max_len", d.max_len));
  c.dropout_p = kv.get_double(p + "dropout_p", d.dropout_p);
  c.attention_dropout_p = kv.get_double(p + "attention_dropout_p", d.attention_dropout_p);
  c.weight_decay = kv.get_double(p + "weight_decay", d.weight_decay);
  c.lr = kv.get_double(p + "lr", d.lr);
  c.batch_size = static_cast<int>(kv.get_int(p + "batch_size", d.batch_size));
  c.max_epochs = static_cast<int>(kv.get_int(p + "max_epochs", d.max_epochs));
  c.patience = static_cast<int>(kv.get_int(p + "patience", d.patience));
  const auto task = parse_task(kv.get_string(p + "task", std::string(to_string(d.task))));
  if (!task) throw ValidationError("config key '" + p + "task' must be binary, category or real");
  c.task = *task;
  c.seed = kv.get_uint(p + "seed", d.seed);
  c.vocab_size = static_cast<int>(kv.get_int(p + "vocab_size", d.vocab_size));
  c.max_positions = static_cast<int>(kv.get_int(p + "max_positions", d.max_positions));
  return c;
}

Matrix sinusoidal_table(std::size_t n_positions, std::size_t dim) {
  Matrix pe(n_positions, dim);
  for (std::size_t p = 0; p < n_positions; ++p) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe(p, i) = std::sin(angle);
      if (i + 1 < dim) pe(p, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

// ---------------------------------------------------------------- caches

struct MBertModel::LayerCache {
  Matrix input;  // L x d
  std::size_t n_query = 0;
  Matrix q, k, v;                     // nq x d, L x d, L x d
  std::vector<Matrix> probs;          // per head, nq x L, after softmax
  std::vector<Matrix> dropped_probs;  // per head, after dropout
  std::vector<Matrix> attn_mask;      // per head dropout factors
  Matrix context;                     // nq x d
  num::LayerNormCache ln1;
  Matrix h1;  // nq x d
  Matrix ff_pre;
  Matrix ff_act;
  num::LayerNormCache ln2;
};

struct MBertModel::SequenceCache {
  std::vector<LayerCache> layers;
  Matrix output_mask;  // 1 x d dropout factors on the [CLS] row
  Matrix cls;          // 1 x d after dropout
};

// ---------------------------------------------------------------- model

MBertModel::MBertModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto d = static_cast<std::size_t>(cfg_.hidden_dim);
  const auto f = static_cast<std::size_t>(cfg_.intermediate_dim);
  num::Rng rng(cfg_.seed);

  token_embedding_ = Parameter("token_embedding", static_cast<std::size_t>(cfg_.vocab_size), d);
  age_embedding_ = Parameter("age_embedding", kAgeBuckets, d);
  sex_embedding_ = Parameter("sex_embedding", kSexIds, d);
  init_normal(token_embedding_, rng);
  init_normal(age_embedding_, rng);
  init_normal(sex_embedding_, rng);

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    EncoderLayer layer{Parameter(pre + "q_weight", d, d),      Parameter(pre + "q_bias", 1, d, false),
                       Parameter(pre + "k_weight", d, d),
                       Parameter(pre + "v_weight", d, d),      Parameter(pre + "v_bias", 1, d, false),
                       Parameter(pre + "o_weight", d, d),      Parameter(pre + "o_bias", 1, d, false),
                       Parameter(pre + "ln1_gain", 1, d, false), Parameter(pre + "ln1_bias", 1, d, false),
                       Parameter(pre + "ff1_weight", d, f),    Parameter(pre + "ff1_bias", 1, f, false),
                       Parameter(pre + "ff2_weight", f, d),    Parameter(pre + "ff2_bias", 1, d, false),
                       Parameter(pre + "ln2_gain", 1, d, false), Parameter(pre + "ln2_bias", 1, d, false)};
    for (Parameter* w : {&layer.q_weight, &layer.k_weight, &layer.v_weight, &layer.o_weight, &layer.ff1_weight,
                         &layer.ff2_weight}) {
      init_normal(*w, rng);
    }
    layer.ln1_gain.value.fill(1.0);
    layer.ln2_gain.value.fill(1.0);
    layers_.push_back(std::move(layer));
  }

  const std::size_t outputs = task_outputs(cfg_.task);
  head_weight_ = Parameter("head.weight", d, outputs);
  head_bias_ = Parameter("head.bias", 1, outputs, false);
  init_normal(head_weight_, rng);

  position_table_ = sinusoidal_table(static_cast<std::size_t>(cfg_.max_positions), d);
}

std::vector<Parameter*> MBertModel::parameters() {
  std::vector<Parameter*> out{&token_embedding_, &age_embedding_, &sex_embedding_};
  for (auto& l : layers_) {
    for (Parameter* p : {&l.q_weight, &l.q_bias, &l.k_weight, &l.v_weight, &l.v_bias, &l.o_weight,
                         &l.o_bias, &l.ln1_gain, &l.ln1_bias, &l.ff1_weight, &l.ff1_bias, &l.ff2_weight,
                         &l.ff2_bias, &l.ln2_gain, &l.ln2_bias}) {
      out.push_back(p);
    }
  }
  out.push_back(&head_weight_);
  out.push_back(&head_bias_);
  return out;
}

std::vector<const Parameter*> MBertModel::parameters() const {
  auto mut = const_cast<MBertModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void MBertModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

void MBertModel::check_ids(const TokenizedSequence& seq) const {
  if (seq.token_ids.size() != seq.position_ids.size()) throw ValidationError("token/position length mismatch");
  if (seq.token_ids.empty()) throw ValidationError("empty sequence");
  if (seq.size() > static_cast<std::size_t>(cfg_.max_len)) {
    throw ValidationError("sequence longer than max_len (" + std::to_string(cfg_.max_len) + ")");
  }
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.token_ids[i] < 0 || seq.token_ids[i] >= cfg_.vocab_size) {
      throw ValidationError("token id out of range: " + std::to_string(seq.token_ids[i]));
    }
    if (seq.position_ids[i] < 0 || seq.position_ids[i] >= cfg_.max_positions) {
      throw ValidationError("position id out of range: " + std::to_string(seq.position_ids[i]));
    }
  }
  if (seq.age_bucket < 0 || seq.age_bucket >= kAgeBuckets) throw ValidationError("age bucket out of range");
  if (seq.sex_id < 0 || seq.sex_id >= kSexIds) throw ValidationError("sex id out of range");
}

Matrix MBertModel::embed(const TokenizedSequence& seq) const {
  check_ids(seq);
  const std::size_t d = static_cast<std::size_t>(cfg_.hidden_dim);
  Matrix x(seq.size(), d);
  const auto age = age_embedding_.value.row(static_cast<std::size_t>(seq.age_bucket));
  const auto sex = sex_embedding_.value.row(static_cast<std::size_t>(seq.sex_id));
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto tok = token_embedding_.value.row(static_cast<std::size_t>(seq.token_ids[i]));
    const auto pos = position_table_.row(static_cast<std::size_t>(seq.position_ids[i]));
    auto out = x.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] = tok[j] + pos[j] + age[j] + sex[j];
  }
  return x;
}

Matrix MBertModel::layer_forward(const EncoderLayer& layer, const Matrix& x, std::size_t n_query,
                                 std::span<const std::uint8_t> key_valid, bool train, num::Rng& rng,
                                 LayerCache* cache) const {
  const auto& k = num::kernels::active();
  const std::size_t len = x.rows(), d = x.cols();
  const std::size_t heads = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix q = linear(x, n_query, layer.q_weight, &layer.q_bias);
  Matrix kk = linear(x, len, layer.k_weight, nullptr);
  Matrix v = linear(x, len, layer.v_weight, &layer.v_bias);

  Matrix context(n_query, d);
  if (cache) {
    cache->probs.assign(heads, {});
    cache->dropped_probs.assign(heads, {});
    cache->attn_mask.assign(heads, {});
  }
  Matrix scores(n_query, len);
  for (std::size_t h = 0; h < heads; ++h) {
    k.gemm_nt(n_query, len, dh, q.data() + h * dh, d, kk.data() + h * dh, d, scores.data(), len);
    for (std::size_t i = 0; i < n_query; ++i) {
      auto row = scores.row(i);
      for (std::size_t j = 0; j < len; ++j) row[j] = row[j] * scale + (key_valid[j] ? 0.0 : kMaskedScore);
      num::softmax_inplace(row);
    }
    Matrix mask;
    Matrix dropped = num::dropout(scores, cfg_.attention_dropout_p, rng, train, cache ? &mask : nullptr);
    k.gemm_nn(n_query, dh, len, dropped.data(), len, v.data() + h * dh, d, context.data() + h * dh, d);
    if (cache) {
      cache->probs[h] = scores;
      cache->dropped_probs[h] = std::move(dropped);
      cache->attn_mask[h] = std::move(mask);
    }
  }

  Matrix attn_out = linear(context, n_query, layer.o_weight, &layer.o_bias);
  for (std::size_t i = 0; i < n_query; ++i) k.axpy(1.0, x.row(i).data(), attn_out.row(i).data(), d);
  Matrix h1 = num::layer_norm(attn_out, layer.ln1_gain.value, layer.ln1_bias.value, num::kLayerNormEps,
                              cache ? &cache->ln1 : nullptr);

  Matrix ff_pre = linear(h1, n_query, layer.ff1_weight, &layer.ff1_bias);
  Matrix ff_act = num::gelu(ff_pre);
  Matrix ff_out = linear(ff_act, n_query, layer.ff2_weight, &layer.ff2_bias);
  num::add_inplace(ff_out, h1);
  Matrix out = num::layer_norm(ff_out, layer.ln2_gain.value, layer.ln2_bias.value, num::kLayerNormEps,
                               cache ? &cache->ln2 : nullptr);

  if (cache) {
    cache->input = x;
    cache->n_query = n_query;
    cache->q = std::move(q);
    cache->k = std::move(kk);
    cache->v = std::move(v);
    cache->context = std::move(context);
    cache->h1 = std::move(h1);
    cache->ff_pre = std::move(ff_pre);
    cache->ff_act = std::move(ff_act);
  }
  return out;
}

Matrix MBertModel::layer_backward(EncoderLayer& layer, const LayerCache& c, const Matrix& d_out) {
  const auto& k = num::kernels::active();
  const std::size_t len = c.input.rows(), d = c.input.cols(), nq = c.n_query;
  const std::size_t heads = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // out = LN2(h1 + ff_out)
  Matrix d_res2 = num::layer_norm_backward(d_out, c.ln2, layer.ln2_gain.value, layer.ln2_gain.grad, layer.ln2_bias.grad);
  Matrix d_act = linear_backward(c.ff_act, d_res2, layer.ff2_weight, &layer.ff2_bias);
  for (std::size_t i = 0; i < d_act.size(); ++i) d_act.data()[i] *= num::gelu_grad(c.ff_pre.data()[i]);
  Matrix d_h1 = linear_backward(c.h1, d_act, layer.ff1_weight, &layer.ff1_bias);
  num::add_inplace(d_h1, d_res2);

  // h1 = LN1(x[0:nq] + attn_out)
  Matrix d_res1 = num::layer_norm_backward(d_h1, c.ln1, layer.ln1_gain.value, layer.ln1_gain.grad, layer.ln1_bias.grad);
  Matrix d_context = linear_backward(c.context, d_res1, layer.o_weight, &layer.o_bias);

  Matrix d_q(nq, d), d_k(len, d), d_v(len, d);
  Matrix d_probs(nq, len);
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix& p = c.probs[h];
    const Matrix& pd = c.dropped_probs[h];
    const Matrix& mask = c.attn_mask[h];
    // context_h = dropped_probs * v_h
    k.gemm_nt(nq, len, dh, d_context.data() + h * dh, d, c.v.data() + h * dh, d, d_probs.data(), len);
    k.gemm_tn_acc(len, dh, nq, pd.data(), len, d_context.data() + h * dh, d, d_v.data() + h * dh, d);
    // softmax backward through the dropout factors, then the 1/sqrt(dh) scale
    for (std::size_t i = 0; i < nq; ++i) {
      auto dp = d_probs.row(i);
      const auto pr = p.row(i);
      const auto mr = mask.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        dp[j] *= mr[j];
        dot += dp[j] * pr[j];
      }
      for (std::size_t j = 0; j < len; ++j) dp[j] = pr[j] * (dp[j] - dot) * scale;
    }
    k.gemm_nn(nq, dh, len, d_probs.data(), len, c.k.data() + h * dh, d, d_q.data() + h * dh, d);
    k.gemm_tn_acc(len, dh, nq, d_probs.data(), len, c.q.data() + h * dh, d, d_k.data() + h * dh, d);
  }

  Matrix d_x = linear_backward(c.input, d_k, layer.k_weight, nullptr);
  num::add_inplace(d_x, linear_backward(c.input, d_v, layer.v_weight, &layer.v_bias));
  Matrix d_xq = linear_backward(c.input, d_q, layer.q_weight, &layer.q_bias);
  for (std::size_t i = 0; i < nq; ++i) {
    k.axpy(1.0, d_xq.row(i).data(), d_x.row(i).data(), d);
    k.axpy(1.0, d_res1.row(i).data(), d_x.row(i).data(), d);
  }
  return d_x;
}

Matrix MBertModel::encode(const Matrix& x, std::span<const std::uint8_t> key_valid, bool train, num::Rng& rng) const {
  if (x.cols() != static_cast<std::size_t>(cfg_.hidden_dim)) throw ValidationError("encode: width mismatch");
  if (key_valid.size() != x.rows()) throw ValidationError("encode: key mask length mismatch");
  Matrix h = x;
  for (const auto& layer : layers_) h = layer_forward(layer, h, h.rows(), key_valid, train, rng, nullptr);
  return num::dropout(h, cfg_.dropout_p, rng, train);
}

std::vector<double> MBertModel::run(const TokenizedSequence& seq, bool train, num::Rng& rng,
                                    SequenceCache* cache) const {
  Matrix h = embed(seq);
  std::vector<std::uint8_t> key_valid(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) key_valid[i] = seq.token_ids[i] != kPadId;

  if (cache) cache->layers.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    // Only the [CLS] row of the last layer reaches the head.
    const std::size_t n_query = l + 1 == layers_.size() ? 1 : h.rows();
    h = layer_forward(layers_[l], h, n_query, key_valid, train, rng, cache ? &cache->layers[l] : nullptr);
  }

  Matrix mask;
  Matrix cls = num::dropout(h, cfg_.dropout_p, rng, train, cache ? &mask : nullptr);
  Matrix logits = linear(cls, 1, head_weight_, &head_bias_);
  num::check_finite(logits, "model logits");
  if (cache) {
    cache->output_mask = std::move(mask);
    cache->cls = std::move(cls);
  }
  return {logits.flat().begin(), logits.flat().end()};
}

std::vector<double> MBertModel::forward(const TokenizedSequence& seq) const {
  num::Rng unused(0);
  return run(seq, false, unused, nullptr);
}

double MBertModel::accumulate_gradients(const TokenizedSequence& seq, bool train, num::Rng& rng, double grad_scale) {
  SequenceCache cache;
  const std::vector<double> logits = run(seq, train, rng, &cache);
  const double label = task_label(seq, cfg_.task);
  const double loss = task_loss(logits, label, cfg_.task);
  std::vector<double> dlogits = task_loss_grad(logits, label, cfg_.task);

  Matrix d_logits(1, dlogits.size());
  for (std::size_t i = 0; i < dlogits.size(); ++i) d_logits(0, i) = dlogits[i] * grad_scale;
  Matrix d_h = linear_backward(cache.cls, d_logits, head_weight_, &head_bias_);
  for (std::size_t j = 0; j < d_h.cols(); ++j) d_h(0, j) *= cache.output_mask(0, j);

  for (std::size_t l = layers_.size(); l-- > 0;) d_h = layer_backward(layers_[l], cache.layers[l], d_h);

  // Embedding sum; the position table is fixed.
  const std::size_t d = d_h.cols();
  auto age = age_embedding_.grad.row(static_cast<std::size_t>(seq.age_bucket));
  auto sex = sex_embedding_.grad.row(static_cast<std::size_t>(seq.sex_id));
  const auto& k = num::kernels::active();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double* row = d_h.row(i).data();
    k.axpy(1.0, row, token_embedding_.grad.row(static_cast<std::size_t>(seq.token_ids[i])).data(), d);
    k.axpy(1.0, row, age.data(), d);
    k.axpy(1.0, row, sex.data(), d);
  }
  return loss;
}

// ---------------------------------------------------------------- losses

double task_label(const TokenizedSequence& seq, Task task) {
  switch (task) {
    case Task::binary:
      return seq.label_binary;
    case Task::category:
      return seq.label_category;
    case Task::real:
      return seq.label_real;
  }
  return 0.0;
}

namespace {
void check_logits(std::span<const double> logits, Task task) {
  if (logits.size() != task_outputs(task)) {
    throw ValidationError("expected " + std::to_string(task_outputs(task)) + " logits for task " +
                          std::string(to_string(task)) + ", got " + std::to_string(logits.size()));
  }
}
}  // namespace

double task_loss(std::span<const double> logits, double label, Task task) {
  check_logits(logits, task);
  switch (task) {
    case Task::binary:
      return softplus(logits[0]) - label * logits[0];
    case Task::category: {
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (double z : logits) sum += std::exp(z - mx);
      return mx + std::log(sum) - logits[static_cast<std::size_t>(label)];
    }
    case Task::real:
      return (logits[0] - label) * (logits[0] - label);
  }
  return 0.0;
}

std::vector<double> task_loss_grad(std::span<const double> logits, double label, Task task) {
  check_logits(logits, task);
  switch (task) {
    case Task::binary:
      return {sigmoid(logits[0]) - label};
    case Task::category: {
      std::vector<double> g(logits.begin(), logits.end());
      num::softmax_inplace(g);
      g[static_cast<std::size_t>(label)] -= 1.0;
      return g;
    }
    case Task::real:
      return {2.0 * (logits[0] - label)};
  }
  return {};
}

std::vector<double> scores_from_logits(std::span<const double> logits, Task task) {
  check_logits(logits, task);
  switch (task) {
    case Task::binary:
      return {sigmoid(logits[0])};
    case Task::category: {
      std::vector<double> p(logits.begin(), logits.end());
      num::softmax_inplace(p);
      return p;
    }
    case Task::real:
      return {logits[0]};
  }
  return {};
}

}  // namespace medbert
