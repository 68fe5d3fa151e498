#include "medbert/event_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "medbert/error.hpp"

namespace medbert {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view s, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<Enum>(i);
  }
  return std::nullopt;
}

constexpr std::array<std::string_view, 3> kSexNames{"female", "male", "unknown"};
constexpr std::array<std::string_view, 4> kEventTypeNames{"lab", "vital", "medication", "procedure"};
constexpr std::array<std::string_view, 4> kArrivalNames{"ambulance", "walk_in", "referral", "transfer"};
constexpr std::array<std::string_view, 3> kAdmissionTypeNames{"acute", "subacute", "planned"};

}  // namespace

const std::array<std::string_view, kComorbiditySlots>& default_comorbidity_names() {
  // Charlson-style conditions.
  static constexpr std::array<std::string_view, kComorbiditySlots> names{
      "myocardial_infarction", "heart_failure",       "peripheral_vascular", "cerebrovascular",
      "dementia",              "chronic_pulmonary",   "rheumatic",           "peptic_ulcer",
      "mild_liver",            "diabetes",            "diabetes_complicated", "hemiplegia",
      "renal",                 "malignancy",          "severe_liver",        "metastatic_tumor",
      "hiv_aids",              "leukemia_lymphoma"};
  return names;
}

const std::array<std::string_view, kPrescriptionSlots>& prescription_group_names() {
  static constexpr std::array<std::string_view, kPrescriptionSlots> names{
      "A", "B", "C", "D", "G", "H", "J", "L", "M", "N", "P", "R", "S", "V"};
  return names;
}

std::string_view to_string(Sex s) { return kSexNames.at(static_cast<std::size_t>(s)); }
std::string_view to_string(EventType t) { return kEventTypeNames.at(static_cast<std::size_t>(t)); }
std::string_view to_string(ArrivalMode m) { return kArrivalNames.at(static_cast<std::size_t>(m)); }
std::string_view to_string(AdmissionType t) { return kAdmissionTypeNames.at(static_cast<std::size_t>(t)); }

std::optional<Sex> parse_sex(std::string_view s) { return parse_enum<Sex>(s, kSexNames); }
std::optional<EventType> parse_event_type(std::string_view s) { return parse_enum<EventType>(s, kEventTypeNames); }
std::optional<ArrivalMode> parse_arrival_mode(std::string_view s) { return parse_enum<ArrivalMode>(s, kArrivalNames); }
std::optional<AdmissionType> parse_admission_type(std::string_view s) {
  return parse_enum<AdmissionType>(s, kAdmissionTypeNames);
}

void Demographics::validate() const {
  if (age_years < 0 || age_years > kMaxAgeYears) {
    throw ValidationError("age_years out of range [0, 120]: " + std::to_string(age_years));
  }
  if (pregnant && sex != Sex::female) throw ValidationError("pregnant requires sex = female");
}

void MedicalEvent::validate() const {
  if (!std::isfinite(timestamp_hours) || timestamp_hours < 0.0) {
    throw ValidationError("event '" + code + "': timestamp_hours must be finite and >= 0");
  }
  if (code.empty()) throw ValidationError("event code is empty");
  if (is_measurement(type) != value.has_value()) {
    throw ValidationError("event '" + code + "': value must be present iff the event is a lab or vital");
  }
  if (value && !std::isfinite(*value)) throw ValidationError("event '" + code + "': non-finite value");
}

void History::validate() const {
  if (hour_bucket < 0 || hour_bucket >= kHourBuckets) throw ValidationError("hour_bucket out of range");
  if (weekday < 0 || weekday >= kWeekdays) throw ValidationError("weekday out of range");
  if (season < 0 || season >= kSeasons) throw ValidationError("season out of range");
  if (triage < 1 || triage > kTriageLevels) throw ValidationError("triage out of range");
}

void Admission::validate() const {
  if (admission_id.empty()) throw ValidationError("admission_id is empty");
  demographics.validate();
  history.validate();
  if (!std::isfinite(los_days) || los_days <= 1.0) {
    throw ValidationError("admission " + admission_id + ": los_days must be > 1");
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    events[i].validate();
    if (i > 0 && events[i].timestamp_hours < events[i - 1].timestamp_hours) {
      throw ValidationError("admission " + admission_id + ": events not sorted by timestamp");
    }
  }
}

void Cohort::validate() const {
  std::unordered_set<std::string> seen;
  seen.reserve(admissions.size());
  for (const auto& adm : admissions) {
    adm.validate();
    if (!seen.insert(adm.admission_id).second) {
      throw ValidationError("duplicate admission_id: " + adm.admission_id);
    }
  }
}

void sort_events(std::vector<MedicalEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const MedicalEvent& a, const MedicalEvent& b) {
    return a.timestamp_hours < b.timestamp_hours;
  });
}

double clip_los(double los_days) {
  if (!std::isfinite(los_days) || los_days <= 0.0) {
    throw ValidationError("clip_los: los_days must be finite and > 0");
  }
  return std::min(los_days, kLosClipDays);
}

Admission window_events(const Admission& adm, double horizon_hours) {
  if (!(horizon_hours > 0.0)) throw ValidationError("window_events: horizon_hours must be > 0");
  Admission out = adm;
  std::erase_if(out.events, [&](const MedicalEvent& e) { return e.timestamp_hours > horizon_hours; });
  return out;
}

int label_binary(double los_days) { return clip_los(los_days) > 2.0 ? 1 : 0; }

int label_category(double los_days) {
  const double los = clip_los(los_days);
  if (los < 2.0) return 0;
  if (los <= 7.0) return 1;
  return 2;
}

CohortSplit split_cohort(const Cohort& cohort, std::uint64_t seed) {
  const std::size_t n = cohort.size();
  if (n < 10) throw ValidationError("split_cohort: need at least 10 admissions, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_train = (n * 8) / 10;
  const std::size_t n_valid = n / 10;
  // 0 = train, 1 = valid, 2 = test
  std::vector<std::uint8_t> assignment(n, 2);
  for (std::size_t i = 0; i < n_train; ++i) assignment[order[i]] = 0;
  for (std::size_t i = n_train; i < n_train + n_valid; ++i) assignment[order[i]] = 1;

  CohortSplit split;
  for (Cohort* part : {&split.train, &split.valid, &split.test}) {
    part->seed = cohort.seed;
    part->schema_version = cohort.schema_version;
  }
  for (std::size_t i = 0; i < n; ++i) {
    Cohort& part = assignment[i] == 0 ? split.train : assignment[i] == 1 ? split.valid : split.test;
    part.admissions.push_back(cohort.admissions[i]);
  }
  return split;
}

}  // namespace medbert
