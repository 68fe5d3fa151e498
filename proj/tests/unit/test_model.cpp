#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "medbert/checkpoint.hpp"
#include "medbert/error.hpp"
#include "medbert/model.hpp"
#include "medbert/numerics/gradcheck.hpp"
#include "medbert/trainer.hpp"
#include "support.hpp"

using namespace medbert;
using medbert::test::TempDir;

namespace {

ModelConfig tiny(Task task, double dropout = 0.0, std::uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden_dim = 16;
  cfg.intermediate_dim = 16;
  cfg.n_heads = 2;
  cfg.max_len = 64;
  cfg.dropout_p = dropout;
  cfg.attention_dropout_p = dropout;
  cfg.vocab_size = 24;
  cfg.max_positions = 128;
  cfg.task = task;
  cfg.seed = seed;
  cfg.batch_size = 4;
  cfg.lr = 1e-2;
  return cfg;
}

TokenizedSequence random_sequence(std::mt19937_64& rng, int len, int vocab = 24) {
  TokenizedSequence s;
  int pos = 0;
  for (int i = 0; i < len; ++i) {
    s.token_ids.push_back(i == 0 ? kClsId : static_cast<TokenId>(4 + rng() % (vocab - 4)));
    if (i > 0 && rng() % 3 != 0) ++pos;
    s.position_ids.push_back(pos);
  }
  s.age_bucket = static_cast<int>(rng() % kAgeBuckets);
  s.sex_id = static_cast<int>(rng() % kSexIds);
  s.label_binary = static_cast<int>(rng() % 2);
  s.label_category = static_cast<int>(rng() % 3);
  s.label_real = 1.0 + static_cast<double>(rng() % 29);
  return s;
}

std::vector<num::Matrix> grads(const MBertModel& m) {
  std::vector<num::Matrix> out;
  for (const auto* p : m.parameters()) out.push_back(p->grad);
  return out;
}

}  // namespace

TEST_CASE("model config") {
  ModelConfig p = ModelConfig::full_profile();
  CHECK(p.n_layers == 6);
  CHECK(p.hidden_dim == 288);
  CHECK(p.n_heads == 8);
  CHECK(p.head_dim() == 36);
  CHECK(p.lr == 1e-5);
  CHECK(p.weight_decay == 0.003);
  ModelConfig s = ModelConfig::small_profile();
  CHECK(s.n_layers == 2);
  CHECK(s.hidden_dim == 64);
  CHECK(s.n_heads == 4);
  s.vocab_size = 10;
  CHECK(ModelConfig::from_kv(s.to_kv("model."), ModelConfig{}, "model.") == s);
  s.n_heads = 5;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.n_heads = 4;
  s.dropout_p = 1.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("sinusoidal table") {
  const num::Matrix pe = sinusoidal_table(50, 16);
  for (std::size_t c = 0; c < 16; ++c) CHECK(pe(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe(7, 4) == doctest::Approx(std::sin(7.0 / std::pow(10000.0, 4.0 / 16.0))));
  CHECK(pe(7, 5) == doctest::Approx(std::cos(7.0 / std::pow(10000.0, 4.0 / 16.0))));
}

TEST_CASE("embedding sum") {
  MBertModel model(tiny(Task::binary));
  TokenizedSequence s;
  s.token_ids = {kClsId, 5, 6, 7};
  s.position_ids = {0, 1, 2, 2};
  s.age_bucket = 4;
  s.sex_id = 1;
  const num::Matrix e = model.embed(s);
  const auto params = model.parameters();
  const num::Matrix& tok = params[0]->value;
  for (std::size_t c = 0; c < 16; ++c) {
    CHECK(e(3, c) - e(2, c) == doctest::Approx(tok(7, c) - tok(6, c)).epsilon(1e-14));
  }
  for (auto* p : model.parameters()) {
    if (p->name.find("embedding") != std::string::npos) p->value.fill(0.0);
  }
  const num::Matrix z = model.embed(s);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 16; ++c) CHECK(z(r, c) == model.position_table()(s.position_ids[r], c));
  }
  s.token_ids[1] = 24;
  CHECK_THROWS_AS(model.embed(s), ValidationError);
  s.token_ids[1] = 5;
  s.age_bucket = 12;
  CHECK_THROWS_AS(model.embed(s), ValidationError);
}

TEST_CASE("forward shapes, determinism and init scores") {
  std::mt19937_64 rng(1);
  const TokenizedSequence s = random_sequence(rng, 20);
  CHECK(MBertModel(tiny(Task::binary)).forward(s).size() == 1);
  CHECK(MBertModel(tiny(Task::real)).forward(s).size() == 1);
  const MBertModel cat(tiny(Task::category));
  CHECK(cat.forward(s).size() == 3);
  CHECK(cat.forward(s) == cat.forward(s));

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ModelConfig cfg = ModelConfig::small_profile();
    cfg.vocab_size = 24;
    cfg.task = Task::category;
    cfg.seed = seed;
    const MBertModel m(cfg);
    const auto probs = scores_from_logits(m.forward(random_sequence(rng, 30)), Task::category);
    for (double p : probs) {
      CHECK(p > 0.2);
      CHECK(p < 0.45);
    }
  }
}

TEST_CASE("encoder output shape and eval determinism") {
  const MBertModel m(tiny(Task::binary, 0.1));
  std::mt19937_64 rng(2);
  const auto s = random_sequence(rng, 9);
  const num::Matrix x = m.embed(s);
  const std::vector<std::uint8_t> valid(9, 1);
  num::Rng r(0);
  const num::Matrix a = m.encode(x, valid, false, r);
  const num::Matrix b = m.encode(x, valid, false, r);
  CHECK(a.rows() == 9);
  CHECK(a.cols() == 16);
  CHECK(a == b);
}

TEST_CASE("losses") {
  const double ln2 = std::log(2.0), ln3 = std::log(3.0);
  CHECK(task_loss(std::vector{0.0}, 1, Task::binary) == doctest::Approx(ln2).epsilon(1e-12));
  for (int c = 0; c < 3; ++c) CHECK(task_loss(std::vector{0.7, 0.7, 0.7}, c, Task::category) == doctest::Approx(ln3));
  CHECK(task_loss(std::vector{5.0}, 3.0, Task::real) == 4.0);
  CHECK(std::isfinite(task_loss(std::vector{-800.0}, 1, Task::binary)));
  CHECK(task_loss(std::vector{-800.0}, 1, Task::binary) == doctest::Approx(800.0));
  const auto g = task_loss_grad(std::vector{5.0}, 3.0, Task::real);
  CHECK(g[0] == 4.0);
  const auto p = scores_from_logits(std::vector{1.0, 2.0, 3.0}, Task::category);
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scores_from_logits(std::vector{0.0}, Task::binary)[0] == 0.5);
  CHECK(scores_from_logits(std::vector{-3.0}, Task::real)[0] == -3.0);
}

TEST_CASE("padding is neutral") {
  std::mt19937_64 rng(3);
  for (Task task : {Task::binary, Task::category, Task::real}) {
    const MBertModel m(tiny(task));
    TokenizedSequence s = random_sequence(rng, 15);
    const auto before = m.forward(s);
    for (int i = 0; i < 7; ++i) {
      s.token_ids.push_back(kPadId);
      s.position_ids.push_back(s.position_ids.back());
    }
    const auto after = m.forward(s);
    for (std::size_t k = 0; k < before.size(); ++k) CHECK(std::abs(before[k] - after[k]) < 1e-9);
  }
}

TEST_CASE("gradient check on a history-only sequence") {
  std::mt19937_64 rng(4);
  MBertModel model(tiny(Task::category));
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (auto* p : model.parameters()) {
    for (double& v : p->value.flat()) v += jitter(rng);
  }
  const TokenizedSequence s = random_sequence(rng, 39);
  num::Rng unused(0);
  auto loss = [&] { return task_loss(model.forward(s), task_label(s, Task::category), Task::category); };
  auto grad = [&] {
    const double l = model.accumulate_gradients(s, false, unused, 1.0);
    CHECK(std::isfinite(l));
  };
  auto params = model.parameters();
  const auto r = num::finite_diff_check(loss, grad, params, 3 * params.size(), 7);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("duplicated batch gives the same mean gradient") {
  std::mt19937_64 rng(5);
  MBertModel model(tiny(Task::binary));
  const auto s = random_sequence(rng, 12);
  num::Rng unused(0);
  model.zero_grad();
  model.accumulate_gradients(s, false, unused, 1.0);
  const auto one = grads(model);
  model.zero_grad();
  model.accumulate_gradients(s, false, unused, 0.5);
  model.accumulate_gradients(s, false, unused, 0.5);
  const auto two = grads(model);
  for (std::size_t i = 0; i < one.size(); ++i) {
    for (std::size_t j = 0; j < one[i].size(); ++j) CHECK(std::abs(one[i].data()[j] - two[i].data()[j]) < 1e-12);
  }
}

TEST_CASE("position table stays frozen during training") {
  std::mt19937_64 rng(6);
  std::vector<TokenizedSequence> train_set, valid_set;
  for (int i = 0; i < 8; ++i) train_set.push_back(random_sequence(rng, 10 + i));
  for (int i = 0; i < 4; ++i) valid_set.push_back(random_sequence(rng, 12));
  ModelConfig cfg = tiny(Task::binary, 0.1);
  cfg.max_epochs = 2;
  MBertModel model(cfg);
  const num::Matrix pe = model.position_table();
  const auto w0 = snapshot_weights(model);
  train(model, train_set, valid_set);
  CHECK(model.position_table() == pe);
  CHECK(snapshot_weights(model) != w0);
  for (const auto* p : model.parameters()) CHECK(p->name.find("position") == std::string::npos);
}

TEST_CASE("early stopping") {
  EarlyStopping es(10);
  const std::vector<double> losses = {5, 4, 3, 3.1, 3.2, 3.3, 3.4, 3.5, 3.6, 3.7, 3.8, 3.9, 3.95};
  int stopped = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    es.update(static_cast<int>(i) + 1, losses[i]);
    if (es.should_stop()) {
      stopped = static_cast<int>(i) + 1;
      break;
    }
  }
  CHECK(stopped == 13);
  CHECK(es.best_epoch() == 3);
  CHECK(es.best_loss() == 3.0);
  EarlyStopping tie(2);
  CHECK(tie.update(1, 1.0));
  CHECK_FALSE(tie.update(2, 1.0));
  CHECK_THROWS_AS(EarlyStopping(0), ValidationError);
}

TEST_CASE("training loop") {
  std::mt19937_64 rng(7);
  std::vector<TokenizedSequence> train_set, valid_set;
  for (int i = 0; i < 12; ++i) train_set.push_back(random_sequence(rng, 8 + i % 5));
  for (int i = 0; i < 4; ++i) valid_set.push_back(random_sequence(rng, 10));

  ModelConfig cfg = tiny(Task::binary, 0.1);
  cfg.max_epochs = 1;
  MBertModel one(cfg);
  CHECK(train(one, train_set, valid_set).log.size() == 1);

  cfg.max_epochs = 4;
  MBertModel a(cfg), b(cfg);
  const TrainResult ra = train(a, train_set, valid_set);
  const TrainResult rb = train(b, train_set, valid_set);
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    CHECK(ra.log[i].train_loss == rb.log[i].train_loss);
    CHECK(ra.log[i].valid_loss == rb.log[i].valid_loss);
  }
  CHECK(snapshot_weights(a) == snapshot_weights(b));

  const auto preds = predict(a, valid_set);
  for (const auto& p : preds) {
    CHECK(p[0] >= 0.0);
    CHECK(p[0] <= 1.0);
  }
  CHECK(predict(a, valid_set) == preds);

  // Best-epoch weights are restored.
  MBertModel c(cfg);
  std::vector<num::Matrix> at_epoch2;
  TrainHooks hooks;
  hooks.valid_loss_override = [](int epoch, double) { return epoch == 2 ? 0.0 : 1.0; };
  hooks.on_epoch_end = [&](const EpochRecord& r) {
    if (r.epoch == 2) at_epoch2 = snapshot_weights(c);
  };
  const TrainResult rc = train(c, train_set, valid_set, hooks);
  CHECK(rc.best_epoch == 2);
  CHECK(snapshot_weights(c) == at_epoch2);

  TempDir dir("trainlog");
  write_training_log(ra.log, dir / "log.csv");
  std::ifstream in(dir / "log.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,train_loss,valid_loss");
}

TEST_CASE("checkpoint round trip and refusals") {
  TempDir dir("ckpt");
  std::mt19937_64 rng(8);
  ModelConfig cfg = tiny(Task::category);
  MBertModel model(cfg);
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto* p : model.parameters()) {
    for (double& v : p->value.flat()) v += jitter(rng);
  }
  const auto path = dir / "m.ckpt";
  save_checkpoint(model, 0xabcdef, path);
  CHECK(std::filesystem::exists(checkpoint_blob_path(path)));
  CHECK(read_checkpoint_info(path).config == cfg);

  const MBertModel back = load_checkpoint(path, 0xabcdef);
  for (int i = 0; i < 5; ++i) {
    const auto s = random_sequence(rng, 20);
    CHECK(back.forward(s) == model.forward(s));
  }
  CHECK_THROWS_AS(load_checkpoint(path, 0x123), ValidationError);

  std::filesystem::resize_file(checkpoint_blob_path(path), std::filesystem::file_size(checkpoint_blob_path(path)) - 8);
  CHECK_THROWS_AS(load_checkpoint(path, 0xabcdef), ValidationError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt", 0xabcdef), ValidationError);
}
