#include "medbert/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "medbert/baseline.hpp"
#include "medbert/checkpoint.hpp"
#include "medbert/dataset.hpp"
#include "medbert/error.hpp"
#include "medbert/metrics.hpp"
#include "medbert/tokenizer.hpp"
#include "medbert/trainer.hpp"

namespace medbert::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopKeys{"workdir", "seed", "task", "profile", "threads"};
const std::string kSynthPrefix = "synth.";
const std::string kModelPrefix = "model.";

KeyValueConfig strip_prefix(const KeyValueConfig& kv, const std::string& prefix) {
  KeyValueConfig out;
  for (const auto& [k, v] : kv.values()) {
    if (k.starts_with(prefix)) out.set(k.substr(prefix.size()), v);
  }
  return out;
}

void check_keys(const KeyValueConfig& kv) {
  const auto synth_keys = SynthConfig{}.to_kv();
  const auto model_keys = ModelConfig{}.to_kv();
  for (const auto& [k, v] : kv.values()) {
    if (kTopKeys.contains(k)) continue;
    if (k.starts_with(kSynthPrefix) && synth_keys.contains(k.substr(kSynthPrefix.size()))) continue;
    if (k.starts_with(kModelPrefix)) {
      const std::string field = k.substr(kModelPrefix.size());
      if (field == "task" || field == "vocab_size") {
        throw ValidationError("config key '" + k + "' is derived; use 'task' or the vocabulary instead");
      }
      if (model_keys.contains(field)) continue;
    }
    throw ValidationError("unknown config key '" + k + "'");
  }
}

// ---------------------------------------------------------------- paths

struct Paths {
  fs::path dir;
  fs::path cohort() const { return dir / "cohort.jsonl"; }
  fs::path ranges() const { return dir / "ranges.tsv"; }
  fs::path vocab() const { return dir / "vocab.txt"; }
  fs::path split(const char* name) const { return dir / (std::string(name) + ".jsonl"); }
  fs::path checkpoint(Task t) const { return dir / ("model_" + std::string(to_string(t)) + ".ckpt"); }
  fs::path train_log(Task t) const { return dir / ("train_log_" + std::string(to_string(t)) + ".csv"); }
  fs::path report(Task t) const { return dir / ("report_" + std::string(to_string(t)) + ".csv"); }
  fs::path roc(Task t) const { return dir / ("roc_" + std::string(to_string(t)) + ".csv"); }
  fs::path roc_class(int c) const { return dir / ("roc_category_class" + std::to_string(c) + ".csv"); }
  fs::path baseline_report(Task t) const { return dir / ("baseline_" + std::string(to_string(t)) + ".csv"); }
  fs::path selection(Task t) const { return dir / ("selected_features_" + std::string(to_string(t)) + ".txt"); }
  fs::path features() const { return dir / "features_train.csv"; }
};

void require_file(const fs::path& p, const char* produced_by) {
  if (!fs::exists(p)) throw ValidationError("missing input " + p.string() + " (run '" + produced_by + "' first)");
}

std::vector<Demographics> demographics_of(std::span<const TokenizedSequence> seqs) {
  std::vector<Demographics> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back({s.age_bucket * 10, static_cast<Sex>(s.sex_id), false});
  return out;
}

std::vector<double> labels_of(std::span<const TokenizedSequence> seqs, Task task) {
  std::vector<double> y;
  y.reserve(seqs.size());
  for (const auto& s : seqs) y.push_back(task_label(s, task));
  return y;
}

// ---------------------------------------------------------------- commands

int cmd_synth(const RunConfig& rc, std::ostream& out) {
  const Paths p{rc.workdir};
  fs::create_directories(p.dir);
  const unsigned threads = rc.threads ? rc.threads : std::max(1u, std::thread::hardware_concurrency());
  const SynthResult r = generate_cohort(rc.synth, threads);
  save_cohort(r.cohort, p.cohort());
  r.ranges.save(p.ranges());
  out << "synth: " << r.cohort.size() << " admissions -> " << p.cohort().string() << '\n';
  return kExitOk;
}

int cmd_prep(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Paths p{rc.workdir};
  require_file(p.cohort(), "synth");
  require_file(p.ranges(), "synth");
  std::vector<std::string> warnings;
  const Cohort cohort = load_cohort(p.cohort(), &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  const RangeTable ranges = RangeTable::load(p.ranges());
  const PreparedData d = prepare_dataset(cohort, ranges, rc.seed, static_cast<std::size_t>(rc.model.max_len));
  d.vocab.save(p.vocab());
  save_sequences(d.train, p.split("train"));
  save_sequences(d.valid, p.split("valid"));
  save_sequences(d.test, p.split("test"));
  if (d.missing_ranges > 0) err << "warning: " << d.missing_ranges << " measurements had no reference range\n";
  const std::size_t total = d.train.size() + d.valid.size() + d.test.size();
  out << "prep: " << total << " sequences (" << d.train.size() << '/' << d.valid.size() << '/' << d.test.size()
      << "), vocabulary " << d.vocab.size() << " tokens\n";
  return kExitOk;
}

int cmd_train(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Paths p{rc.workdir};
  for (const char* s : {"train", "valid"}) require_file(p.split(s), "prep");
  require_file(p.vocab(), "prep");
  const Vocabulary vocab = Vocabulary::load(p.vocab());
  const auto train_set = load_sequences(p.split("train"));
  const auto valid_set = load_sequences(p.split("valid"));

  ModelConfig mc = rc.model;
  mc.vocab_size = static_cast<int>(vocab.size());
  MBertModel model(mc);
  TrainHooks hooks;
  hooks.on_epoch_end = [&](const EpochRecord& r) {
    err << "epoch " << r.epoch << " train_loss " << format_double(r.train_loss) << " valid_loss "
        << format_double(r.valid_loss) << '\n';
  };
  const TrainResult r = train(model, train_set, valid_set, hooks);
  save_checkpoint(model, vocab.hash(), p.checkpoint(mc.task));
  write_training_log(r.log, p.train_log(mc.task));
  out << "train: " << r.log.size() << " epochs, best epoch " << r.best_epoch << " (valid loss "
      << format_double(r.best_valid_loss) << ") -> " << p.checkpoint(mc.task).string() << '\n';
  return kExitOk;
}

struct LoadedEval {
  MBertModel model;
  std::vector<TokenizedSequence> test;
};

LoadedEval load_for_eval(const RunConfig& rc, const std::string& checkpoint_flag, bool task_given) {
  const Paths p{rc.workdir};
  const fs::path ckpt = checkpoint_flag.empty() ? p.checkpoint(rc.task) : fs::path(checkpoint_flag);
  require_file(ckpt, "train");
  require_file(checkpoint_blob_path(ckpt), "train");
  require_file(p.vocab(), "prep");
  require_file(p.split("test"), "prep");
  const CheckpointInfo info = read_checkpoint_info(ckpt);
  if (task_given && info.config.task != rc.task) {
    throw ValidationError("checkpoint " + ckpt.string() + " was trained for task '" +
                          std::string(to_string(info.config.task)) + "', not '" + std::string(to_string(rc.task)) + "'");
  }
  const Vocabulary vocab = Vocabulary::load(p.vocab());
  return {load_checkpoint(ckpt, vocab.hash()), load_sequences(p.split("test"))};
}

int cmd_eval(const RunConfig& rc, const std::string& checkpoint_flag, bool task_given, std::ostream& out) {
  const Paths p{rc.workdir};
  const LoadedEval le = load_for_eval(rc, checkpoint_flag, task_given);
  const Task task = le.model.config().task;
  const auto scores = predict(le.model, le.test);
  const auto labels = labels_of(le.test, task);
  const auto demos = demographics_of(le.test);

  const auto overall = metrics::task_metrics(task, scores, labels);
  const auto strata = metrics::stratified_eval(task, scores, labels, demos);
  std::vector<metrics::RocPoint> curve;
  if (task == Task::binary) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s.push_back(scores[i][0]);
      y.push_back(static_cast<int>(labels[i]));
    }
    curve = metrics::roc_curve(s, y);
  }
  // Everything is computed before the first file is written.
  metrics::write_report_csv(metrics::report_rows(task, "mbert", overall, strata), rc.hash(), p.report(task));
  if (task == Task::binary) metrics::write_roc_csv(curve, p.roc(task));
  for (const auto& m : overall) out << "eval: " << to_string(task) << ' ' << m.name << ' ' << format_double(m.value) << '\n';
  return kExitOk;
}

int cmd_roc(const RunConfig& rc, const std::string& checkpoint_flag, bool task_given, std::ostream& out) {
  const Paths p{rc.workdir};
  const LoadedEval le = load_for_eval(rc, checkpoint_flag, task_given);
  const Task task = le.model.config().task;
  if (task == Task::real) throw ValidationError("roc: the real-valued task has no ROC curve");
  const auto scores = predict(le.model, le.test);
  const auto labels = labels_of(le.test, task);
  const int classes = task == Task::binary ? 1 : 3;
  std::vector<std::pair<fs::path, std::vector<metrics::RocPoint>>> curves;
  for (int c = 0; c < classes; ++c) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s.push_back(task == Task::binary ? scores[i][0] : scores[i][static_cast<std::size_t>(c)]);
      y.push_back(task == Task::binary ? static_cast<int>(labels[i]) : static_cast<int>(labels[i]) == c);
    }
    curves.emplace_back(task == Task::binary ? p.roc(task) : p.roc_class(c), metrics::roc_curve(s, y));
  }
  for (const auto& [path, curve] : curves) {
    metrics::write_roc_csv(curve, path);
    out << "roc: " << curve.size() << " points -> " << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_baseline(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Paths p{rc.workdir};
  require_file(p.cohort(), "synth");
  const Cohort cohort = load_cohort(p.cohort());
  const CohortSplit split = windowed_split(cohort, rc.seed);
  const auto r = baseline::run_baseline(split, rc.task, rc.seed);
  for (const auto& w : r.warnings) err << "warning: " << w << '\n';

  std::vector<Demographics> demos;
  for (const auto& adm : split.test.admissions) demos.push_back(adm.demographics);
  std::vector<metrics::ReportRow> rows;
  for (const auto& [name, scores] : {std::pair{"logreg", &r.logreg_scores}, {"mlp", &r.mlp_scores}}) {
    const auto overall = metrics::task_metrics(rc.task, *scores, r.test_labels);
    const auto strata = metrics::stratified_eval(rc.task, *scores, r.test_labels, demos);
    const auto part = metrics::report_rows(rc.task, name, overall, strata);
    rows.insert(rows.end(), part.begin(), part.end());
    for (const auto& m : overall) out << "baseline: " << name << ' ' << m.name << ' ' << format_double(m.value) << '\n';
  }
  const baseline::FeatureSchema schema = baseline::FeatureSchema::from_cohort(split.train);
  baseline::write_feature_csv(schema.featurize(split.train.admissions), schema.names(), p.features());
  baseline::write_selection_report(r, p.selection(rc.task));
  metrics::write_report_csv(rows, rc.hash(), p.baseline_report(rc.task));
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------- config

std::uint64_t RunConfig::hash() const { return effective.hash(); }

RunConfig resolve_config(const KeyValueConfig& file, const KeyValueConfig& overrides) {
  KeyValueConfig kv = file;
  for (const auto& [k, v] : overrides.values()) kv.set(k, v);
  check_keys(kv);

  RunConfig rc;
  rc.workdir = kv.get_string("workdir", rc.workdir);
  rc.seed = kv.get_uint("seed", rc.seed);
  const auto task = parse_task(kv.get_string("task", "binary"));
  if (!task) throw ValidationError("task must be binary, category or real");
  rc.task = *task;
  rc.profile = kv.get_string("profile", rc.profile);
  ModelConfig base;
  if (rc.profile == "small") {
    base = ModelConfig::small_profile();
  } else if (rc.profile == "full") {
    base = ModelConfig::full_profile();
  } else {
    throw ValidationError("profile must be 'small' or 'full', got '" + rc.profile + "'");
  }
  const auto threads = kv.get_int("threads", 0);
  if (threads < 0) throw ValidationError("threads must be >= 0");
  rc.threads = static_cast<unsigned>(threads);

  SynthConfig synth_defaults;
  synth_defaults.seed = rc.seed;
  rc.synth = SynthConfig::from_kv(strip_prefix(kv, kSynthPrefix), synth_defaults);

  base.seed = rc.seed;
  rc.model = ModelConfig::from_kv(strip_prefix(kv, kModelPrefix), base);
  rc.model.task = rc.task;
  // vocab_size is filled in from the vocabulary; validate the rest now.
  ModelConfig probe = rc.model;
  probe.vocab_size = 4;
  probe.validate();

  rc.effective.set("seed", std::to_string(rc.seed));
  rc.effective.set("task", std::string(to_string(rc.task)));
  rc.effective.set("profile", rc.profile);
  const KeyValueConfig synth_kv = rc.synth.to_kv();
  const KeyValueConfig model_kv = rc.model.to_kv();
  for (const auto& [k, v] : synth_kv.values()) rc.effective.set(kSynthPrefix + k, v);
  for (const auto& [k, v] : model_kv.values()) {
    if (k != "vocab_size") rc.effective.set(kModelPrefix + k, v);
  }
  return rc;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Length-of-stay prediction from clinical event sequences", "medbert"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string workdir, task, profile, checkpoint;
    std::optional<std::uint64_t> seed;
    std::optional<int> n, max_epochs, threads;
    std::optional<double> severity_effect;
  } c;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", c.config, "Flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option("-w,--workdir", c.workdir, "Artifact directory");
    sub->add_option("--seed", c.seed, "Seed for every module");
    sub->add_option("--task", c.task, "binary | category | real");
    sub->add_option("--profile", c.profile, "small | full");
    sub->add_option("--set", c.sets, "Override a config key (key=value)");
    return sub;
  };
  auto* synth = common(app.add_subcommand("synth", "Generate a synthetic cohort and reference ranges"));
  synth->add_option("-n,--n", c.n, "Number of admissions");
  synth->add_option("--severity-effect", c.severity_effect, "Strength of the planted signal");
  synth->add_option("--threads", c.threads, "Generator threads (output does not depend on this)");
  auto* prep = common(app.add_subcommand("prep", "Window, split, build the vocabulary, tokenize"));
  auto* trn = common(app.add_subcommand("train", "Train the sequence model"));
  trn->add_option("--max-epochs", c.max_epochs, "Upper bound on training epochs");
  auto* eval = common(app.add_subcommand("eval", "Evaluate a checkpoint on the test split"));
  eval->add_option("--checkpoint", c.checkpoint, "Checkpoint manifest (default: model_<task>.ckpt)");
  auto* base = common(app.add_subcommand("baseline", "Tabular baselines on the same split"));
  auto* roc = common(app.add_subcommand("roc", "Export ROC curves for a checkpoint"));
  roc->add_option("--checkpoint", c.checkpoint, "Checkpoint manifest (default: model_<task>.ckpt)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    KeyValueConfig file = c.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(c.config);
    KeyValueConfig overrides;
    for (const auto& s : c.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + s + "'");
      overrides.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!c.workdir.empty()) overrides.set("workdir", c.workdir);
    if (c.seed) overrides.set("seed", std::to_string(*c.seed));
    if (!c.task.empty()) overrides.set("task", c.task);
    if (!c.profile.empty()) overrides.set("profile", c.profile);
    if (c.n) overrides.set("synth.n_admissions", std::to_string(*c.n));
    if (c.severity_effect) overrides.set("synth.severity_effect", format_double(*c.severity_effect));
    if (c.threads) overrides.set("threads", std::to_string(*c.threads));
    if (c.max_epochs) overrides.set("model.max_epochs", std::to_string(*c.max_epochs));
    const bool task_given = file.contains("task") || overrides.contains("task");
    const RunConfig rc = resolve_config(file, overrides);

    if (synth->parsed()) return cmd_synth(rc, out);
    if (prep->parsed()) return cmd_prep(rc, out, err);
    if (trn->parsed()) return cmd_train(rc, out, err);
    if (eval->parsed()) return cmd_eval(rc, c.checkpoint, task_given, out);
    if (base->parsed()) return cmd_baseline(rc, out, err);
    if (roc->parsed()) return cmd_roc(rc, c.checkpoint, task_given, out);
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace medbert::cli
