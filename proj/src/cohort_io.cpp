#include <fstream>
#include <json.hpp>

#include "medbert/error.hpp"
#include "medbert/event_model.hpp"

namespace medbert {

namespace {

using json = nlohmann::ordered_json;

json to_json(const Admission& adm) {
  json demo = {{"age_years", adm.demographics.age_years},
               {"sex", to_string(adm.demographics.sex)},
               {"pregnant", adm.demographics.pregnant}};

  json cmb = json::array();
  for (bool b : adm.history.comorbidities) cmb.push_back(b ? 1 : 0);
  json rx = json::array();
  for (bool b : adm.history.prescriptions) rx.push_back(b ? 1 : 0);
  json hist = {{"comorbidities", std::move(cmb)},
               {"prescriptions", std::move(rx)},
               {"arrival_mode", to_string(adm.history.arrival_mode)},
               {"hour_bucket", adm.history.hour_bucket},
               {"weekday", adm.history.weekday},
               {"season", adm.history.season},
               {"triage", adm.history.triage},
               {"admission_type", to_string(adm.history.admission_type)}};

  json events = json::array();
  for (const auto& e : adm.events) {
    json ev = {{"event_type", to_string(e.type)}, {"code", e.code}};
    if (e.value) ev["value"] = *e.value;
    ev["timestamp_hours"] = e.timestamp_hours;
    events.push_back(std::move(ev));
  }

  return json{{"admission_id", adm.admission_id},
              {"demographics", std::move(demo)},
              {"history", std::move(hist)},
              {"events", std::move(events)},
              {"los_days", adm.los_days}};
}

// Field accessors that report the offending line and dotted field path.
class RecordReader {
 public:
  explicit RecordReader(std::size_t line) : line_(line) {}

  const json& field(const json& obj, const char* key, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(join(path, key), "missing");
    return *it;
  }

  double number(const json& obj, const char* key, const std::string& path) const {
    const json& v = field(obj, key, path);
    if (!v.is_number()) fail(join(path, key), "expected a number");
    return v.get<double>();
  }

  int integer(const json& obj, const char* key, const std::string& path) const {
    const json& v = field(obj, key, path);
    if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
    return v.get<int>();
  }

  std::string string(const json& obj, const char* key, const std::string& path) const {
    const json& v = field(obj, key, path);
    if (!v.is_string()) fail(join(path, key), "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const json& obj, const char* key, const std::string& path) const {
    const json& v = field(obj, key, path);
    if (!v.is_boolean()) fail(join(path, key), "expected a boolean");
    return v.get<bool>();
  }

  template <std::size_t N>
  std::array<bool, N> flags(const json& obj, const char* key, const std::string& path) const {
    const json& v = field(obj, key, path);
    if (!v.is_array() || v.size() != N) fail(join(path, key), "expected an array of " + std::to_string(N) + " flags");
    std::array<bool, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number_integer() || (v[i] != 0 && v[i] != 1)) fail(join(path, key), "flags must be 0 or 1");
      out[i] = v[i] == 1;
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw FormatError(line_, field, what);
  }

  static std::string join(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
  }

 private:
  std::size_t line_;
};

Admission from_json(const json& obj, std::size_t line) {
  RecordReader r(line);
  Admission adm;
  adm.admission_id = r.string(obj, "admission_id", "");

  const json& demo = r.field(obj, "demographics", "");
  adm.demographics.age_years = r.integer(demo, "age_years", "demographics");
  auto sex = parse_sex(r.string(demo, "sex", "demographics"));
  if (!sex) r.fail("demographics.sex", "unknown value");
  adm.demographics.sex = *sex;
  adm.demographics.pregnant = r.boolean(demo, "pregnant", "demographics");

  const json& hist = r.field(obj, "history", "");
  adm.history.comorbidities = r.flags<kComorbiditySlots>(hist, "comorbidities", "history");
  adm.history.prescriptions = r.flags<kPrescriptionSlots>(hist, "prescriptions", "history");
  auto mode = parse_arrival_mode(r.string(hist, "arrival_mode", "history"));
  if (!mode) r.fail("history.arrival_mode", "unknown value");
  adm.history.arrival_mode = *mode;
  adm.history.hour_bucket = r.integer(hist, "hour_bucket", "history");
  adm.history.weekday = r.integer(hist, "weekday", "history");
  adm.history.season = r.integer(hist, "season", "history");
  adm.history.triage = r.integer(hist, "triage", "history");
  auto type = parse_admission_type(r.string(hist, "admission_type", "history"));
  if (!type) r.fail("history.admission_type", "unknown value");
  adm.history.admission_type = *type;

  const json& events = r.field(obj, "events", "");
  if (!events.is_array()) r.fail("events", "expected an array");
  adm.events.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string path = "events[" + std::to_string(i) + "]";
    const json& ev = events[i];
    MedicalEvent e;
    auto et = parse_event_type(r.string(ev, "event_type", path));
    if (!et) r.fail(path + ".event_type", "unknown value");
    e.type = *et;
    e.code = r.string(ev, "code", path);
    if (ev.contains("value")) e.value = r.number(ev, "value", path);
    e.timestamp_hours = r.number(ev, "timestamp_hours", path);
    try {
      e.validate();
    } catch (const ValidationError& err) {
      r.fail(path, err.what());
    }
    adm.events.push_back(std::move(e));
  }
  sort_events(adm.events);

  adm.los_days = r.number(obj, "los_days", "");
  try {
    adm.validate();
  } catch (const ValidationError& err) {
    r.fail("admission", err.what());
  }
  return adm;
}

}  // namespace

void save_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  json header = {{"schema_version", cohort.schema_version},
                 {"seed", cohort.seed},
                 {"n_admissions", cohort.admissions.size()}};
  out << header.dump() << '\n';
  for (const auto& adm : cohort.admissions) out << to_json(adm).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Cohort load_cohort(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open cohort file: " + path.string());

  Cohort cohort;
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t declared = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw FormatError(line_no, "<record>", std::string("invalid JSON: ") + e.what());
    }
    if (!have_header) {
      RecordReader r(line_no);
      cohort.schema_version = r.string(obj, "schema_version", "");
      if (cohort.schema_version != kCohortSchemaVersion) {
        r.fail("schema_version", "unsupported version '" + cohort.schema_version + "'");
      }
      const json& seed = r.field(obj, "seed", "");
      if (!seed.is_number_unsigned()) r.fail("seed", "expected a non-negative integer");
      cohort.seed = seed.get<std::uint64_t>();
      declared = static_cast<std::size_t>(r.integer(obj, "n_admissions", ""));
      have_header = true;
      continue;
    }
    cohort.admissions.push_back(from_json(obj, line_no));
  }

  if (!have_header) {
    if (warnings) warnings->push_back("cohort file " + path.string() + " is empty");
    return cohort;
  }
  if (declared != cohort.admissions.size()) {
    throw ValidationError("cohort file declares " + std::to_string(declared) + " admissions but contains " +
                          std::to_string(cohort.admissions.size()));
  }
  cohort.validate();
  return cohort;
}

}  // namespace medbert
