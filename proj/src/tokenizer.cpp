#include "medbert/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "medbert/error.hpp"
#include "medbert/kv_config.hpp"

namespace medbert {

namespace {

constexpr std::array<std::string_view, kHourBuckets> kHourNames{"00-05", "06-11", "12-17", "18-23"};
constexpr std::array<std::string_view, kWeekdays> kWeekdayNames{"mon", "tue", "wed", "thu", "fri", "sat", "sun"};
constexpr std::array<std::string_view, kSeasons> kSeasonNames{"winter", "spring", "summer", "autumn"};

std::array<std::string, kComorbiditySlots> default_names() {
  std::array<std::string, kComorbiditySlots> out;
  const auto& names = default_comorbidity_names();
  std::copy(names.begin(), names.end(), out.begin());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() {
  for (auto t : {kPadToken, kClsToken, kUnkToken, kMaskToken}) add(std::string(t));
}

void Vocabulary::add(std::string token) {
  if (ids_.contains(token)) return;
  ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> token_streams) {
  if (token_streams.empty()) throw ValidationError("cannot build a vocabulary from an empty training split");
  Vocabulary v;
  for (const auto& stream : token_streams) {
    for (const auto& tok : stream) v.add(tok);
  }
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ValidationError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open vocabulary: " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (line_no < 4) {
      if (line != v.tokens_[line_no]) throw FormatError(line_no + 1, "token", "reserved token expected: " + v.tokens_[line_no]);
    } else {
      if (line.empty() || v.ids_.contains(line)) throw FormatError(line_no + 1, "token", "empty or duplicate token");
      v.add(line);
    }
    ++line_no;
  }
  if (line_no < 4) throw ValidationError("vocabulary file is missing reserved tokens: " + path.string());
  return v;
}

// ---------------------------------------------------------------- free functions

int age_bucket(int age_years) { return std::clamp(age_years / 10, 0, kAgeBuckets - 1); }

std::string bin_measurement(std::string_view code, double value, const Demographics& demo, const RangeTable& ranges,
                            MissingRangeCounter* missing) {
  if (!std::isfinite(value)) throw ValidationError("bin_measurement: non-finite value for " + std::string(code));
  const auto range = ranges.lookup(code, demo);
  if (!range) {
    if (missing) missing->record();
    return std::string(code);
  }
  const char suffix = value < range->low ? 'L' : value > range->high ? 'H' : 'N';
  std::string out(code);
  out += ':';
  out += suffix;
  return out;
}

std::vector<std::int32_t> assign_positions(std::span<const MedicalEvent> events) {
  std::vector<std::int32_t> pos(kPrefixTokens + events.size());
  for (std::size_t i = 0; i < kPrefixTokens; ++i) pos[i] = static_cast<std::int32_t>(i);
  std::int32_t next = static_cast<std::int32_t>(kPrefixTokens);
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (i > 0 && events[i].timestamp_hours < events[i - 1].timestamp_hours) {
      throw ValidationError("assign_positions: events must be sorted by timestamp");
    }
    if (i > 0 && events[i].timestamp_hours > events[i - 1].timestamp_hours) ++next;
    pos[kPrefixTokens + i] = next;
  }
  return pos;
}

TokenizedSequence truncate(TokenizedSequence seq, std::size_t max_len) {
  if (max_len < kPrefixTokens) throw ValidationError("truncate: max_len must cover [CLS] and the history prefix");
  if (seq.size() <= max_len) return seq;
  const auto drop = static_cast<std::ptrdiff_t>(seq.size() - max_len);
  const auto first_event = static_cast<std::ptrdiff_t>(kPrefixTokens);
  seq.token_ids.erase(seq.token_ids.begin() + first_event, seq.token_ids.begin() + first_event + drop);
  seq.position_ids.erase(seq.position_ids.begin() + first_event, seq.position_ids.begin() + first_event + drop);
  return seq;
}

void validate_sequence(const TokenizedSequence& seq, std::size_t max_len) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("sequence " + seq.admission_id + ": " + what);
  };
  if (seq.token_ids.size() != seq.position_ids.size()) fail("token and position lengths differ");
  if (seq.size() > max_len) fail("longer than max_len");
  if (seq.size() < kPrefixTokens) fail("missing [CLS] + history prefix");
  if (seq.token_ids[0] != kClsId) fail("first token is not [CLS]");
  for (std::size_t i = 0; i < kPrefixTokens; ++i) {
    if (seq.position_ids[i] != static_cast<std::int32_t>(i)) fail("prefix positions must be 0..38");
  }
  for (std::size_t i = kPrefixTokens; i < seq.size(); ++i) {
    const std::int32_t step = seq.position_ids[i] - seq.position_ids[i - 1];
    const bool first_event = i == kPrefixTokens;
    if (first_event ? step < 1 : (step < 0 || step > 1)) fail("event positions out of order");
  }
  if (seq.age_bucket < 0 || seq.age_bucket >= kAgeBuckets) fail("age_bucket out of range");
  if (seq.sex_id < 0 || seq.sex_id >= kSexIds) fail("sex_id out of range");
  if (seq.label_binary < 0 || seq.label_binary > 1) fail("label_binary out of range");
  if (seq.label_category < 0 || seq.label_category > 2) fail("label_category out of range");
}

// ---------------------------------------------------------------- Tokenizer

Tokenizer::Tokenizer(const RangeTable& ranges) : Tokenizer(ranges, default_names()) {}

Tokenizer::Tokenizer(const RangeTable& ranges, std::array<std::string, kComorbiditySlots> comorbidity_names)
    : ranges_(ranges), comorbidity_names_(std::move(comorbidity_names)) {}

std::string Tokenizer::bin_measurement(std::string_view code, double value, const Demographics& demo) const {
  return medbert::bin_measurement(code, value, demo, ranges_, &missing_);
}

std::vector<std::string> Tokenizer::history_tokens(const History& h) const {
  h.validate();
  std::vector<std::string> out;
  out.reserve(kHistoryTokens);
  for (std::size_t i = 0; i < kComorbiditySlots; ++i) {
    out.push_back("cmb:" + comorbidity_names_[i] + (h.comorbidities[i] ? ":1" : ":0"));
  }
  const auto& groups = prescription_group_names();
  for (std::size_t i = 0; i < kPrescriptionSlots; ++i) {
    out.push_back("rx:" + std::string(groups[i]) + (h.prescriptions[i] ? ":1" : ":0"));
  }
  out.push_back("arrival:" + std::string(to_string(h.arrival_mode)));
  out.push_back("hour:" + std::string(kHourNames[static_cast<std::size_t>(h.hour_bucket)]));
  out.push_back("weekday:" + std::string(kWeekdayNames[static_cast<std::size_t>(h.weekday)]));
  out.push_back("season:" + std::string(kSeasonNames[static_cast<std::size_t>(h.season)]));
  out.push_back("triage:" + std::to_string(h.triage));
  out.push_back("admtype:" + std::string(to_string(h.admission_type)));
  return out;
}

std::string Tokenizer::event_token(const MedicalEvent& e, const Demographics& demo) const {
  if (is_measurement(e.type) && e.value) return bin_measurement(e.code, *e.value, demo);
  return e.code;
}

std::vector<std::string> Tokenizer::tokens(const Admission& adm) const {
  std::vector<std::string> out;
  out.reserve(kPrefixTokens + adm.events.size());
  out.emplace_back(kClsToken);
  for (auto& t : history_tokens(adm.history)) out.push_back(std::move(t));
  for (const auto& e : adm.events) out.push_back(event_token(e, adm.demographics));
  return out;
}

TokenizedSequence Tokenizer::encode(const Admission& adm, const Vocabulary& vocab, std::size_t max_len) const {
  TokenizedSequence seq;
  seq.admission_id = adm.admission_id;
  const auto toks = tokens(adm);
  seq.token_ids.reserve(toks.size());
  for (const auto& t : toks) seq.token_ids.push_back(vocab.id(t));
  seq.token_ids[0] = kClsId;
  seq.position_ids = assign_positions(adm.events);
  seq.age_bucket = age_bucket(adm.demographics.age_years);
  seq.sex_id = sex_id(adm.demographics.sex);
  seq.label_binary = label_binary(adm.los_days);
  seq.label_category = label_category(adm.los_days);
  seq.label_real = label_real(adm.los_days);
  return truncate(std::move(seq), max_len);
}

// ---------------------------------------------------------------- dataset files

void save_sequences(std::span<const TokenizedSequence> seqs, const std::filesystem::path& path) {
  using json = nlohmann::ordered_json;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& s : seqs) {
    json j = {{"admission_id", s.admission_id}, {"token_ids", s.token_ids},      {"position_ids", s.position_ids},
              {"age_bucket", s.age_bucket},     {"sex_id", s.sex_id},            {"label_binary", s.label_binary},
              {"label_category", s.label_category}, {"label_real", s.label_real}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<TokenizedSequence> load_sequences(const std::filesystem::path& path) {
  using json = nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open tokenized dataset: " + path.string());
  std::vector<TokenizedSequence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    TokenizedSequence s;
    const char* field = "<record>";
    try {
      const json j = json::parse(line);
      field = "admission_id", s.admission_id = j.at(field).get<std::string>();
      field = "token_ids", s.token_ids = j.at(field).get<std::vector<TokenId>>();
      field = "position_ids", s.position_ids = j.at(field).get<std::vector<std::int32_t>>();
      field = "age_bucket", s.age_bucket = j.at(field).get<int>();
      field = "sex_id", s.sex_id = j.at(field).get<int>();
      field = "label_binary", s.label_binary = j.at(field).get<int>();
      field = "label_category", s.label_category = j.at(field).get<int>();
      field = "label_real", s.label_real = j.at(field).get<double>();
      validate_sequence(s, std::numeric_limits<std::size_t>::max());
    } catch (const json::exception& e) {
      throw FormatError(line_no, field, e.what());
    } catch (const ValidationError& e) {
      throw FormatError(line_no, "<record>", e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace medbert
