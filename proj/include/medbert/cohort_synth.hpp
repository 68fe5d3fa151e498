#pragma once

// Synthetic cohorts with a planted severity signal.
//
// Each admission draws a latent severity s ~ U[0,1]. Length of stay is
// 1 + 29 * Beta(m(s) * k, (1 - m(s)) * k) with m(s) = 0.008 + 0.4 s^2 and
// k = 7, so LOS is right-skewed, strictly above one day, and increases with
// s whatever the severity_effect. severity_effect scales how much s leaks
// into the observable record: the probability that a measurement falls
// outside its reference range, the number of events in the first day,
// comorbidity prevalence, and triage urgency. With severity_effect = 0 the
// record is independent of LOS.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medbert/event_model.hpp"
#include "medbert/kv_config.hpp"
#include "medbert/range_table.hpp"

namespace medbert {

struct SynthConfig {
  int n_admissions = 1000;
  std::uint64_t seed = 42;
  int n_lab_codes = 50;
  int n_vital_codes = 7;
  int n_med_codes = 100;
  int n_proc_codes = 100;
  // Expected number of events in the first 24 hours at median severity.
  double mean_events_per_admission = 30.0;
  double severity_effect = 1.0;
  // Probability that a lab event following another lab event shares its timestamp.
  double co_timestamp_fraction = 0.3;

  void validate() const;

  static SynthConfig from_kv(const KeyValueConfig& kv, const SynthConfig& defaults);
  static SynthConfig from_kv(const KeyValueConfig& kv) { return from_kv(kv, SynthConfig{}); }
  KeyValueConfig to_kv() const;
};

// Code lists used by the generator. Codes are unique across event types.
struct SynthCodes {
  std::vector<std::string> labs;    // labs[0] == "albumin"
  std::vector<std::string> vitals;  // vitals[0] == "temperature"
  std::vector<std::string> meds;    // meds[0] == "J01XE01"
  std::vector<std::string> procs;
};

SynthCodes synth_codes(const SynthConfig& cfg);

// Full demographic coverage for every lab and vital code. Includes the
// albumin row (male, 18-40, 36-48 g/L) and temperature 36.1-38.0 for all.
RangeTable generate_range_table(const SynthConfig& cfg);

struct SynthResult {
  Cohort cohort;
  RangeTable ranges;
  std::vector<double> severity;  // latent s per admission, cohort order
};

// Deterministic in cfg; the output does not depend on n_threads.
SynthResult generate_cohort(const SynthConfig& cfg, unsigned n_threads = 1);

}  // namespace medbert
