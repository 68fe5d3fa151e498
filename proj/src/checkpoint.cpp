#include "medbert/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "medbert/error.hpp"
#include "medbert/kv_config.hpp"
#include "medbert/numerics/tensor_io.hpp"

namespace medbert {

namespace {

const std::string kModelPrefix = "model.";

struct Manifest {
  KeyValueConfig kv;
  std::vector<num::TensorEntry> tensors;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint manifest " + path.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.starts_with("tensor ")) {
      std::istringstream ss(t.substr(7));
      num::TensorEntry e;
      if (!(ss >> e.name >> e.rows >> e.cols >> e.offset)) throw FormatError(lineno, "tensor", "expected name rows cols offset");
      m.tensors.push_back(std::move(e));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(lineno, t, "expected 'key = value'");
    m.kv.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  return m;
}

std::uint64_t parse_hex(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ValidationError("checkpoint: bad vocab_hash '" + s + "'");
  return v;
}

CheckpointInfo info_from(const Manifest& m) {
  const auto format = m.kv.get("format");
  if (!format || *format != kCheckpointFormat) {
    throw ValidationError("checkpoint: unsupported format '" + format.value_or("") + "'");
  }
  const auto hash = m.kv.get("vocab_hash");
  if (!hash) throw ValidationError("checkpoint: manifest has no vocab_hash");
  CheckpointInfo info;
  info.vocab_hash = parse_hex(*hash);
  info.config = ModelConfig::from_kv(m.kv, ModelConfig{}, kModelPrefix);
  info.config.validate();
  return info;
}

}  // namespace

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& manifest) {
  return std::filesystem::path(manifest.string() + ".bin");
}

void save_checkpoint(const MBertModel& model, std::uint64_t vocab_hash, const std::filesystem::path& manifest) {
  std::vector<num::NamedTensor> tensors;
  for (const num::Parameter* p : model.parameters()) tensors.push_back({p->name, &p->value});
  const auto entries = num::write_tensor_blob(checkpoint_blob_path(manifest), tensors);

  std::ofstream out(manifest);
  if (!out) throw std::runtime_error("cannot write " + manifest.string());
  out << "format = " << kCheckpointFormat << '\n';
  out << "vocab_hash = " << hex64(vocab_hash) << '\n';
  const KeyValueConfig cfg = model.config().to_kv(kModelPrefix);
  for (const auto& [k, v] : cfg.values()) out << k << " = " << v << '\n';
  for (const auto& e : entries) out << "tensor " << e.name << ' ' << e.rows << ' ' << e.cols << ' ' << e.offset << '\n';
  if (!out) throw std::runtime_error("write failed: " + manifest.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& manifest) { return info_from(read_manifest(manifest)); }

MBertModel load_checkpoint(const std::filesystem::path& manifest, std::uint64_t expected_vocab_hash) {
  const Manifest m = read_manifest(manifest);
  const CheckpointInfo info = info_from(m);
  if (info.vocab_hash != expected_vocab_hash) {
    throw ValidationError("checkpoint vocabulary hash mismatch: checkpoint has " + hex64(info.vocab_hash) +
                          ", vocabulary has " + hex64(expected_vocab_hash));
  }

  MBertModel model(info.config);
  auto params = model.parameters();
  if (m.tensors.size() != params.size()) {
    throw ValidationError("checkpoint: expected " + std::to_string(params.size()) + " tensors, manifest lists " +
                          std::to_string(m.tensors.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = m.tensors[i];
    if (e.name != params[i]->name || e.rows != params[i]->value.rows() || e.cols != params[i]->value.cols()) {
      throw ValidationError("checkpoint: tensor " + std::to_string(i) + " is " + e.name + " " + std::to_string(e.rows) +
                            "x" + std::to_string(e.cols) + ", model expects " + params[i]->name + " " +
                            params[i]->value.shape_string());
    }
  }
  auto values = num::read_tensor_blob(checkpoint_blob_path(manifest), m.tensors);
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(values[i]);
  return model;
}

}  // namespace medbert
