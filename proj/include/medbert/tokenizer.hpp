#pragma once

// Admission -> model input: [CLS], 38 history tokens, then one token per
// event. Lab and vital tokens carry a :L/:N/:H suffix from the patient's
// reference range. Events that share a timestamp share a position id.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medbert/event_model.hpp"
#include "medbert/range_table.hpp"

namespace medbert {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kClsId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kMaskId = 3;
inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kMaskToken = "[MASK]";

inline constexpr std::size_t kHistoryTokens = kComorbiditySlots + kPrescriptionSlots + 6;  // 38
inline constexpr std::size_t kPrefixTokens = 1 + kHistoryTokens;                          // CLS + history
inline constexpr std::size_t kMaxSequenceLength = 256;
inline constexpr int kAgeBuckets = 12;
inline constexpr int kSexIds = 3;

// Token <-> id. Ids 0..3 are [PAD], [CLS], [UNK], [MASK]; remaining ids
// follow first occurrence in the token streams the vocabulary is built from.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(std::span<const std::vector<std::string>> token_streams);

  TokenId id(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  // FNV-1a over the newline-joined token list; checkpoints pin it.
  std::uint64_t hash() const;

  // One token per line; line i (0-based) holds id i.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct TokenizedSequence {
  std::string admission_id;
  std::vector<TokenId> token_ids;
  std::vector<std::int32_t> position_ids;
  int age_bucket = 0;
  int sex_id = 0;
  int label_binary = 0;
  int label_category = 0;
  double label_real = 0.0;

  std::size_t size() const noexcept { return token_ids.size(); }
  bool operator==(const TokenizedSequence&) const = default;
};

int age_bucket(int age_years);  // decades, capped at 11 (110+)
inline int sex_id(Sex s) { return static_cast<int>(s); }

// Counts measurements whose code has no range row for the demographics.
class MissingRangeCounter {
 public:
  void record() noexcept { count_.fetch_add(1, std::memory_order_relaxed); }
  std::size_t count() const noexcept { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::size_t> count_{0};
};

// "<code>:L" below the range, "<code>:H" above, "<code>:N" inside the
// closed interval. Without a matching row: bare "<code>" and a counter hit.
std::string bin_measurement(std::string_view code, double value, const Demographics& demo, const RangeTable& ranges,
                            MissingRangeCounter* missing = nullptr);

// Position ids for [CLS] + history + events: 0, 1..38, then 39 for the
// first event, +1 whenever the timestamp strictly increases.
std::vector<std::int32_t> assign_positions(std::span<const MedicalEvent> events);

// Keeps [CLS] + history and the most recent events; position ids are kept.
TokenizedSequence truncate(TokenizedSequence seq, std::size_t max_len = kMaxSequenceLength);

class Tokenizer {
 public:
  explicit Tokenizer(const RangeTable& ranges);
  Tokenizer(const RangeTable& ranges, std::array<std::string, kComorbiditySlots> comorbidity_names);

  std::string bin_measurement(std::string_view code, double value, const Demographics& demo) const;
  std::vector<std::string> history_tokens(const History& h) const;
  std::string event_token(const MedicalEvent& e, const Demographics& demo) const;

  // Full token strings: [CLS], history, events. Expects a windowed admission.
  std::vector<std::string> tokens(const Admission& adm) const;

  // Encoded and truncated to max_len, with labels attached.
  TokenizedSequence encode(const Admission& adm, const Vocabulary& vocab,
                           std::size_t max_len = kMaxSequenceLength) const;

  std::size_t missing_range_count() const noexcept { return missing_.count(); }

 private:
  const RangeTable& ranges_;
  std::array<std::string, kComorbiditySlots> comorbidity_names_;
  mutable MissingRangeCounter missing_;
};

// Throws ValidationError describing the first violated invariant.
void validate_sequence(const TokenizedSequence& seq, std::size_t max_len = kMaxSequenceLength);

// JSON lines, one TokenizedSequence per line.
void save_sequences(std::span<const TokenizedSequence> seqs, const std::filesystem::path& path);
std::vector<TokenizedSequence> load_sequences(const std::filesystem::path& path);

}  // namespace medbert
