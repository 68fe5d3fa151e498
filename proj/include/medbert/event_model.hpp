#pragma once

// Admissions as timestamped medical event sequences, plus the task labels
// and dataset preparation steps (clipping, windowing, splitting).

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace medbert {

inline constexpr double kLosClipDays = 30.0;
inline constexpr double kObservationWindowHours = 24.0;
inline constexpr int kMaxAgeYears = 120;
inline constexpr std::size_t kComorbiditySlots = 18;
inline constexpr std::size_t kPrescriptionSlots = 14;
inline constexpr std::string_view kCohortSchemaVersion = "medbert-cohort/1";

enum class Sex : std::uint8_t { female = 0, male = 1, unknown = 2 };

struct Demographics {
  int age_years = 0;
  Sex sex = Sex::unknown;
  bool pregnant = false;

  void validate() const;
  bool operator==(const Demographics&) const = default;
};

enum class EventType : std::uint8_t { lab, vital, medication, procedure };

constexpr bool is_measurement(EventType t) { return t == EventType::lab || t == EventType::vital; }

struct MedicalEvent {
  EventType type = EventType::lab;
  std::string code;
  std::optional<double> value;  // present iff lab or vital
  double timestamp_hours = 0.0;

  void validate() const;
  bool operator==(const MedicalEvent&) const = default;
};

enum class ArrivalMode : std::uint8_t { ambulance, walk_in, referral, transfer };
enum class AdmissionType : std::uint8_t { acute, subacute, planned };

inline constexpr int kHourBuckets = 4;  // 0-5, 6-11, 12-17, 18-23
inline constexpr int kWeekdays = 7;
inline constexpr int kSeasons = 4;
inline constexpr int kTriageLevels = 5;  // 1 (most urgent) .. 5

// Pre-admission information: comorbidities, prescription history by ATC
// level-1 group, and mode/time/triage of the admission.
struct History {
  std::array<bool, kComorbiditySlots> comorbidities{};
  std::array<bool, kPrescriptionSlots> prescriptions{};
  ArrivalMode arrival_mode = ArrivalMode::walk_in;
  int hour_bucket = 0;
  int weekday = 0;
  int season = 0;
  int triage = 3;
  AdmissionType admission_type = AdmissionType::acute;

  void validate() const;
  bool operator==(const History&) const = default;
};

struct Admission {
  std::string admission_id;
  Demographics demographics;
  History history;
  std::vector<MedicalEvent> events;  // non-decreasing timestamp_hours
  double los_days = 2.0;

  void validate() const;
  bool operator==(const Admission&) const = default;
};

struct Cohort {
  std::vector<Admission> admissions;
  std::uint64_t seed = 0;
  std::string schema_version{kCohortSchemaVersion};

  std::size_t size() const noexcept { return admissions.size(); }
  // Validates every admission and checks admission_id uniqueness.
  void validate() const;
  bool operator==(const Cohort&) const = default;
};

const std::array<std::string_view, kComorbiditySlots>& default_comorbidity_names();
// ATC level-1 anatomical groups, in the conventional letter order.
const std::array<std::string_view, kPrescriptionSlots>& prescription_group_names();

std::string_view to_string(Sex s);
std::string_view to_string(EventType t);
std::string_view to_string(ArrivalMode m);
std::string_view to_string(AdmissionType t);
std::optional<Sex> parse_sex(std::string_view s);
std::optional<EventType> parse_event_type(std::string_view s);
std::optional<ArrivalMode> parse_arrival_mode(std::string_view s);
std::optional<AdmissionType> parse_admission_type(std::string_view s);

// Stable sort by timestamp; co-timestamped events keep their relative order.
void sort_events(std::vector<MedicalEvent>& events);

double clip_los(double los_days);
Admission window_events(const Admission& adm, double horizon_hours = kObservationWindowHours);
int label_binary(double los_days);
int label_category(double los_days);
inline double label_real(double los_days) { return clip_los(los_days); }

struct CohortSplit {
  Cohort train;
  Cohort valid;
  Cohort test;
};

// 80/10/10 random partition: floor(0.8n), floor(0.1n), remainder.
// Admissions keep their cohort order within each split.
CohortSplit split_cohort(const Cohort& cohort, std::uint64_t seed);

// Line-delimited JSON: a header object, then one admission object per line.
void save_cohort(const Cohort& cohort, const std::filesystem::path& path);
Cohort load_cohort(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

}  // namespace medbert
