#include "medbert/range_table.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "medbert/error.hpp"

namespace medbert {

namespace {

bool same_cell(const RangeRow& a, const RangeRow& b) {
  return a.code == b.code && a.sex == b.sex && a.pregnant == b.pregnant;
}

std::string describe(const RangeRow& r) {
  std::ostringstream os;
  os << r.code << '/' << to_string(r.sex) << '/' << r.age_low << '-' << r.age_high
     << (r.pregnant ? "/pregnant" : "");
  return os.str();
}

}  // namespace

RangeTable::RangeTable(std::vector<RangeRow> rows) : rows_(std::move(rows)) {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const RangeRow& r = rows_[i];
    if (r.code.empty()) throw ValidationError("range row with empty code");
    if (!(std::isfinite(r.low) && std::isfinite(r.high) && r.low < r.high)) {
      throw ValidationError("range row " + describe(r) + ": requires finite low < high");
    }
    if (r.age_low < 0 || r.age_high > kMaxAgeYears || r.age_low > r.age_high) {
      throw ValidationError("range row " + describe(r) + ": invalid age band");
    }
    if (r.pregnant && r.sex != Sex::female) {
      throw ValidationError("range row " + describe(r) + ": pregnant rows must be female");
    }
    auto& idx = by_code_[r.code];
    for (std::size_t j : idx) {
      const RangeRow& o = rows_[j];
      if (same_cell(r, o) && r.age_low <= o.age_high && o.age_low <= r.age_high) {
        throw ValidationError("overlapping age bands: " + describe(r) + " and " + describe(o));
      }
    }
    idx.push_back(i);
  }
}

std::optional<ReferenceRange> RangeTable::lookup(std::string_view code, const Demographics& demo) const {
  auto it = by_code_.find(code);
  if (it == by_code_.end()) return std::nullopt;
  for (std::size_t i : it->second) {
    const RangeRow& r = rows_[i];
    if (r.sex == demo.sex && r.pregnant == demo.pregnant && r.age_low <= demo.age_years &&
        demo.age_years <= r.age_high) {
      return ReferenceRange{r.low, r.high};
    }
  }
  return std::nullopt;
}

bool RangeTable::has_full_coverage(std::string_view code) const {
  const Demographics cells[] = {{0, Sex::female, false}, {0, Sex::female, true},
                                {0, Sex::male, false}, {0, Sex::unknown, false}};
  for (Demographics demo : cells) {
    for (int age = 0; age <= kMaxAgeYears; ++age) {
      demo.age_years = age;
      if (!lookup(code, demo)) return false;
    }
  }
  return true;
}

std::vector<std::string> RangeTable::codes() const {
  std::vector<std::string> out;
  out.reserve(by_code_.size());
  for (const auto& [code, idx] : by_code_) out.push_back(code);
  return out;
}

void RangeTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "code\tsex\tage_low\tage_high\tpregnant\tlow\thigh\n";
  out.precision(17);
  for (const auto& r : rows_) {
    out << r.code << '\t' << to_string(r.sex) << '\t' << r.age_low << '\t' << r.age_high << '\t'
        << (r.pregnant ? 1 : 0) << '\t' << r.low << '\t' << r.high << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RangeTable RangeTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open range table: " + path.string());
  std::vector<RangeRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.starts_with("code")) continue;
    std::istringstream is(line);
    RangeRow r;
    std::string sex;
    int pregnant = 0;
    if (!(is >> r.code >> sex >> r.age_low >> r.age_high >> pregnant >> r.low >> r.high)) {
      throw FormatError(line_no, "<row>", "expected 7 columns: code sex age_low age_high pregnant low high");
    }
    auto s = parse_sex(sex);
    if (!s) throw FormatError(line_no, "sex", "unknown value '" + sex + "'");
    r.sex = *s;
    r.pregnant = pregnant != 0;
    rows.push_back(std::move(r));
  }
  return RangeTable(std::move(rows));
}

}  // namespace medbert
