#pragma once

// Command-line driver: synth, prep, train, eval, baseline, roc.
//
// Every command reads one flat "key = value" config file (--config) with
// command-line overrides (--set key=value and the named flags). Artifacts
// live under the work directory with fixed names:
//
//   cohort.jsonl, ranges.tsv                      synth
//   vocab.txt, {train,valid,test}.jsonl           prep
//   model_<task>.ckpt(.bin), train_log_<task>.csv train
//   report_<task>.csv, roc_<task>.csv             eval / roc
//   baseline_<task>.csv, selected_features_<task>.txt,
//   features_train.csv                            baseline
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <iosfwd>
#include <string>
#include <vector>

#include "medbert/cohort_synth.hpp"
#include "medbert/kv_config.hpp"
#include "medbert/model.hpp"

namespace medbert::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Resolved settings for one command.
struct RunConfig {
  std::string workdir = ".";
  std::uint64_t seed = 42;
  Task task = Task::binary;
  std::string profile = "small";
  unsigned threads = 0;  // 0 = hardware concurrency
  SynthConfig synth;
  ModelConfig model;
  KeyValueConfig effective;  // every resolved key, used for the hash

  // Hash of the effective settings; the work directory is excluded.
  std::uint64_t hash() const;
};

// Layers defaults, the config file (if any), then overrides.
// Recognized keys: workdir, seed, task, profile, threads, synth.<field>,
// model.<field>. Unknown keys are rejected.
RunConfig resolve_config(const KeyValueConfig& file, const KeyValueConfig& overrides);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace medbert::cli
