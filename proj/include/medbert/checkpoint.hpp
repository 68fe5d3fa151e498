#pragma once

// Checkpoint = text manifest + tensor blob at "<manifest>.bin".
//
// Manifest lines:
//   format = medbert-checkpoint/1
//   vocab_hash = <16 hex digits>
//   model.<field> = <value>            (ModelConfig)
//   tensor <name> <rows> <cols> <byte offset>

#include <cstdint>
#include <filesystem>
#include <optional>

#include "medbert/model.hpp"

namespace medbert {

inline constexpr std::string_view kCheckpointFormat = "medbert-checkpoint/1";

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& manifest);

void save_checkpoint(const MBertModel& model, std::uint64_t vocab_hash, const std::filesystem::path& manifest);

struct CheckpointInfo {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& manifest);

// Throws ValidationError when the vocabulary hash differs from
// expected_vocab_hash or a tensor's name or shape does not match the config.
MBertModel load_checkpoint(const std::filesystem::path& manifest, std::uint64_t expected_vocab_hash);

}  // namespace medbert
