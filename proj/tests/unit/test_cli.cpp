#include <fstream>
#include <sstream>

#include "doctest.h"
#include "medbert/cli.hpp"
#include "medbert/error.hpp"
#include "medbert/event_model.hpp"
#include "medbert/tokenizer.hpp"
#include "support.hpp"

using namespace medbert;
using medbert::test::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  TempDir dir("cli_usage");
  CHECK(run({}).code == cli::kExitValidation);
  CHECK(run({"frobnicate"}).code == cli::kExitValidation);
  const Result r = run({"synth", "-w", dir.path().string(), "-n", "0"});
  CHECK(r.code == cli::kExitValidation);
  CHECK_FALSE(r.err.empty());
  CHECK(run({"synth", "-w", dir.path().string(), "--set", "nosuchkey=1"}).code == cli::kExitValidation);
  CHECK(run({"prep", "-w", (dir / "empty").string()}).code != cli::kExitOk);
}

TEST_CASE("synth is deterministic and creates the work directory") {
  TempDir dir("cli_synth");
  const auto a = dir / "a/nested", b = dir / "b";
  REQUIRE(run({"synth", "-w", a.string(), "-n", "200", "--seed", "7"}).code == cli::kExitOk);
  REQUIRE(run({"synth", "-w", b.string(), "-n", "200", "--seed", "7", "--threads", "3"}).code == cli::kExitOk);
  CHECK(slurp(a / "cohort.jsonl") == slurp(b / "cohort.jsonl"));
  CHECK(slurp(a / "ranges.tsv") == slurp(b / "ranges.tsv"));
  CHECK(load_cohort(a / "cohort.jsonl").size() == 200);
}

TEST_CASE("prep, train, eval, baseline, roc") {
  TempDir dir("cli_pipeline");
  const std::string w = dir.path().string();
  REQUIRE(run({"synth", "-w", w, "-n", "300", "--seed", "3"}).code == cli::kExitOk);
  const std::string cohort_before = slurp(dir / "cohort.jsonl");
  REQUIRE(run({"prep", "-w", w, "--seed", "3"}).code == cli::kExitOk);
  CHECK(slurp(dir / "cohort.jsonl") == cohort_before);

  const auto train = load_sequences(dir / "train.jsonl");
  const auto valid = load_sequences(dir / "valid.jsonl");
  const auto test = load_sequences(dir / "test.jsonl");
  CHECK(train.size() + valid.size() + test.size() == 300);
  const Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
  const std::string vocab_before = slurp(dir / "vocab.txt");
  REQUIRE(run({"prep", "-w", w, "--seed", "3"}).code == cli::kExitOk);
  CHECK(slurp(dir / "vocab.txt") == vocab_before);

  CHECK(run({"eval", "-w", w}).code != cli::kExitOk);
  CHECK_FALSE(std::filesystem::exists(dir / "report_binary.csv"));

  for (const char* task : {"binary", "real"}) {
    REQUIRE(run({"train", "-w", w, "--seed", "3", "--task", task, "--max-epochs", "1"}).code == cli::kExitOk);
    REQUIRE(run({"eval", "-w", w, "--seed", "3", "--task", task}).code == cli::kExitOk);
  }
  const std::string bin = slurp(dir / "report_binary.csv");
  CHECK(bin.find(",auroc,") != std::string::npos);
  CHECK(bin.find(",f1,") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "roc_binary.csv"));
  const std::string real = slurp(dir / "report_real.csv");
  CHECK(real.find(",mae,") != std::string::npos);
  CHECK(real.find(",mse,") != std::string::npos);
  CHECK(real.find(",auroc,") == std::string::npos);
  CHECK(real.starts_with("# config_hash="));

  const Result mismatch = run({"eval", "-w", w, "--task", "category", "--checkpoint", (dir / "model_binary.ckpt").string()});
  CHECK(mismatch.code == cli::kExitValidation);

  std::filesystem::remove(dir / "roc_binary.csv");
  REQUIRE(run({"roc", "-w", w, "--seed", "3", "--task", "binary"}).code == cli::kExitOk);
  CHECK(slurp(dir / "roc_binary.csv").starts_with("fpr,tpr,threshold\n"));

  REQUIRE(run({"baseline", "-w", w, "--seed", "3", "--task", "binary"}).code == cli::kExitOk);
  CHECK(std::filesystem::exists(dir / "baseline_binary.csv"));
  CHECK(std::filesystem::exists(dir / "selected_features_binary.txt"));
  CHECK(std::filesystem::exists(dir / "features_train.csv"));
}

TEST_CASE("config file and overrides") {
  TempDir dir("cli_config");
  KeyValueConfig file;
  file.set("seed", "9");
  file.set("synth.n_admissions", "50");
  KeyValueConfig over;
  over.set("synth.n_admissions", "60");
  const cli::RunConfig rc = cli::resolve_config(file, over);
  CHECK(rc.seed == 9);
  CHECK(rc.synth.n_admissions == 60);

  KeyValueConfig moved = over;
  moved.set("workdir", "/elsewhere");
  CHECK(cli::resolve_config(file, moved).hash() == rc.hash());
  KeyValueConfig changed = over;
  changed.set("seed", "10");
  CHECK(cli::resolve_config(file, changed).hash() != rc.hash());

  KeyValueConfig bad;
  bad.set("model.nonsense", "1");
  CHECK_THROWS_AS(cli::resolve_config(bad, {}), ValidationError);

  file.save(dir / "run.cfg");
  REQUIRE(run({"synth", "-c", (dir / "run.cfg").string(), "-w", dir.path().string()}).code == cli::kExitOk);
  CHECK(load_cohort(dir / "cohort.jsonl").size() == 50);
}
