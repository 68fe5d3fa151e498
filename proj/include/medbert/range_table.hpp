#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medbert/event_model.hpp"

namespace medbert {

// One demographic cell of a reference range. Ages are inclusive integer
// bounds; a value v is normal iff low <= v <= high.
struct RangeRow {
  std::string code;
  Sex sex = Sex::unknown;
  int age_low = 0;
  int age_high = kMaxAgeYears;
  bool pregnant = false;
  double low = 0.0;
  double high = 1.0;

  bool operator==(const RangeRow&) const = default;
};

struct ReferenceRange {
  double low = 0.0;
  double high = 0.0;
};

// Reference ranges keyed by (code, sex, pregnant, age band). Construction
// rejects low >= high and overlapping age bands within a (code, sex,
// pregnant) cell; gaps are allowed and surface as failed lookups.
class RangeTable {
 public:
  RangeTable() = default;
  explicit RangeTable(std::vector<RangeRow> rows);

  std::optional<ReferenceRange> lookup(std::string_view code, const Demographics& demo) const;

  // True when every demographic combination a valid Demographics can take
  // (female/male/unknown, pregnant only for female) has a band covering
  // each age in [0, 120].
  bool has_full_coverage(std::string_view code) const;

  const std::vector<RangeRow>& rows() const noexcept { return rows_; }
  std::vector<std::string> codes() const;
  bool empty() const noexcept { return rows_.empty(); }

  // Whitespace-separated columns: code sex age_low age_high pregnant low high.
  void save(const std::filesystem::path& path) const;
  static RangeTable load(const std::filesystem::path& path);

  bool operator==(const RangeTable& other) const { return rows_ == other.rows_; }

 private:
  std::vector<RangeRow> rows_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_code_;
};

}  // namespace medbert
