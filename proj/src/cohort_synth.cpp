#include "medbert/cohort_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <thread>

#include "medbert/error.hpp"

namespace medbert {

namespace {

constexpr double kLosBetaConcentration = 7.0;
constexpr std::uint64_t kRangeStream = 0x52414e4745ULL;

struct AgeBand {
  int low;
  int high;
};
constexpr AgeBand kAgeBands[] = {{0, 17}, {18, 40}, {41, 64}, {65, kMaxAgeYears}};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index + 1)));
}

double round_to(double v, double unit) { return std::round(v / unit) * unit; }

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03d", prefix, i);
  return buf;
}

struct VitalSpec {
  const char* code;
  double low;
  double high;
};
constexpr VitalSpec kVitals[] = {{"temperature", 36.1, 38.0}, {"spo2", 94.0, 100.0},
                                 {"pulse", 60.0, 100.0},      {"resp_rate", 12.0, 20.0},
                                 {"bp_systolic", 90.0, 140.0}, {"bp_diastolic", 60.0, 90.0},
                                 {"bmi", 18.5, 25.0}};

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
  return w;
}

// Sampling tables shared read-only by all generator threads.
struct Generator {
  const SynthConfig& cfg;
  SynthCodes codes;
  RangeTable ranges;
  std::vector<double> lab_w, vital_w, med_w, proc_w;

  explicit Generator(const SynthConfig& c)
      : cfg(c),
        codes(synth_codes(c)),
        ranges(generate_range_table(c)),
        lab_w(zipf_weights(codes.labs.size(), 0.8)),
        vital_w(zipf_weights(codes.vitals.size(), 0.3)),
        med_w(zipf_weights(codes.meds.size(), 1.0)),
        proc_w(zipf_weights(codes.procs.size(), 1.0)) {}

  struct Pickers {
    std::discrete_distribution<std::size_t> lab, vital, med, proc;
  };

  Pickers pickers() const {
    return {{lab_w.begin(), lab_w.end()},
            {vital_w.begin(), vital_w.end()},
            {med_w.begin(), med_w.end()},
            {proc_w.begin(), proc_w.end()}};
  }

  MedicalEvent draw_event(std::mt19937_64& rng, Pickers& pick, const Demographics& demo, double p_abnormal) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    MedicalEvent ev;
    const double u = unit(rng);
    if (u < 0.45) {
      ev.type = EventType::lab, ev.code = codes.labs[pick.lab(rng)];
    } else if (u < 0.70) {
      ev.type = EventType::vital, ev.code = codes.vitals[pick.vital(rng)];
    } else if (u < 0.88) {
      ev.type = EventType::medication, ev.code = codes.meds[pick.med(rng)];
    } else {
      ev.type = EventType::procedure, ev.code = codes.procs[pick.proc(rng)];
    }

    if (is_measurement(ev.type)) {
      const auto range = ranges.lookup(ev.code, demo);
      const double low = range->low, high = range->high, width = high - low;
      double v;
      if (unit(rng) < p_abnormal) {
        const double excess = width * (0.05 + 0.75 * unit(rng));
        v = unit(rng) < 0.6 ? high + excess : low - excess;
        v = round_to(v, 0.01);
      } else {
        v = std::clamp(round_to(low + width * unit(rng), 0.01), low, high);
      }
      ev.value = v;
    }
    return ev;
  }

  Admission make(std::size_t index, double& severity_out) const {
    auto rng = stream_rng(cfg.seed, index);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double e = cfg.severity_effect;

    const double s = unit(rng);
    severity_out = s;
    const double centered = s - 0.5;

    Admission adm;
    char id[32];
    std::snprintf(id, sizeof id, "A%07zu", index);
    adm.admission_id = id;

    Demographics& demo = adm.demographics;
    demo.age_years = std::clamp(static_cast<int>(std::lround(62.0 + 20.0 * gauss(rng))), 0, 105);
    const double su = unit(rng);
    demo.sex = su < 0.49 ? Sex::female : su < 0.98 ? Sex::male : Sex::unknown;
    demo.pregnant = demo.sex == Sex::female && demo.age_years >= 18 && demo.age_years <= 45 && unit(rng) < 0.06;

    History& h = adm.history;
    const double cmb_scale = std::max(0.0, 1.0 + 1.2 * e * centered);
    for (std::size_t j = 0; j < kComorbiditySlots; ++j) {
      const double base = 0.03 + 0.03 * static_cast<double>(j % 5);
      h.comorbidities[j] = unit(rng) < base * cmb_scale;
    }
    for (std::size_t j = 0; j < kPrescriptionSlots; ++j) {
      h.prescriptions[j] = unit(rng) < 0.12 + 0.06 * static_cast<double>((j * 7) % 5);
    }
    const double arrival = unit(rng);
    const double p_ambulance = std::clamp(0.3 + 0.3 * e * centered, 0.05, 0.9);
    h.arrival_mode = arrival < p_ambulance                   ? ArrivalMode::ambulance
                     : arrival < p_ambulance + 0.4 * (1 - p_ambulance) ? ArrivalMode::walk_in
                     : arrival < p_ambulance + 0.8 * (1 - p_ambulance) ? ArrivalMode::referral
                                                                       : ArrivalMode::transfer;
    h.hour_bucket = std::uniform_int_distribution<int>(0, kHourBuckets - 1)(rng);
    h.weekday = std::uniform_int_distribution<int>(0, kWeekdays - 1)(rng);
    h.season = std::uniform_int_distribution<int>(0, kSeasons - 1)(rng);
    h.triage = std::clamp(static_cast<int>(std::lround(3.0 + 0.9 * gauss(rng) - 1.5 * e * centered)), 1, kTriageLevels);
    const double at = unit(rng);
    h.admission_type = at < 0.7 ? AdmissionType::acute : at < 0.9 ? AdmissionType::subacute : AdmissionType::planned;

    const double mean_frac = 0.008 + 0.4 * s * s;
    std::gamma_distribution<double> ga(mean_frac * kLosBetaConcentration, 1.0);
    std::gamma_distribution<double> gb((1.0 - mean_frac) * kLosBetaConcentration, 1.0);
    const double xa = ga(rng), xb = gb(rng);
    const double beta = std::clamp(xa / (xa + xb), 1e-4, 1.0);
    adm.los_days = 1.0 + 29.0 * beta;
    const double stay_hours = std::min(adm.los_days, kLosClipDays) * 24.0;

    // First-day events: count and abnormality both track severity.
    const double p_abnormal = std::clamp(0.08 + 0.6 * e * s, 0.0, 0.9);
    const double rate = cfg.mean_events_per_admission * std::max(0.2, 1.0 + 0.8 * e * centered);
    const int n_first = rate > 0.0 ? std::poisson_distribution<int>(rate)(rng) : 0;
    Pickers pick = pickers();
    const double mean_gap = kObservationWindowHours / (n_first + 1);
    std::exponential_distribution<double> gap(1.0 / mean_gap);
    double t = 0.0;
    for (int k = 0; k < n_first; ++k) {
      MedicalEvent ev = draw_event(rng, pick, demo, p_abnormal);
      const bool co_timed = ev.type == EventType::lab && !adm.events.empty() &&
                            adm.events.back().type == EventType::lab && unit(rng) < cfg.co_timestamp_fraction;
      if (!co_timed) t = round_to(t + gap(rng), 0.01);
      if (t > stay_hours) break;
      ev.timestamp_hours = t;
      adm.events.push_back(std::move(ev));
    }

    // Later events, removed again by the observation window.
    const double later_rate = 0.25 * cfg.mean_events_per_admission * (stay_hours / 24.0 - 1.0);
    const int n_later = later_rate > 0.0 ? std::min(400, std::poisson_distribution<int>(later_rate)(rng)) : 0;
    std::vector<double> later_times(static_cast<std::size_t>(n_later));
    std::uniform_real_distribution<double> later_t(kObservationWindowHours, stay_hours);
    for (double& lt : later_times) lt = round_to(later_t(rng), 0.01);
    std::sort(later_times.begin(), later_times.end());
    for (double lt : later_times) {
      MedicalEvent ev = draw_event(rng, pick, demo, p_abnormal);
      ev.timestamp_hours = std::max(lt, adm.events.empty() ? 0.0 : adm.events.back().timestamp_hours);
      adm.events.push_back(std::move(ev));
    }
    sort_events(adm.events);
    return adm;
  }
};

}  // namespace

void SynthConfig::validate() const {
  if (n_admissions < 1) throw ValidationError("n_admissions must be >= 1");
  if (n_lab_codes < 1 || n_vital_codes < 1 || n_med_codes < 1 || n_proc_codes < 1) {
    throw ValidationError("code counts must be >= 1");
  }
  if (!(mean_events_per_admission >= 0.0) || !std::isfinite(mean_events_per_admission)) {
    throw ValidationError("mean_events_per_admission must be finite and >= 0");
  }
  if (!(severity_effect >= 0.0) || !std::isfinite(severity_effect)) {
    throw ValidationError("severity_effect must be finite and >= 0");
  }
  if (!(co_timestamp_fraction >= 0.0 && co_timestamp_fraction <= 1.0)) {
    throw ValidationError("co_timestamp_fraction must be in [0, 1]");
  }
}

SynthConfig SynthConfig::from_kv(const KeyValueConfig& kv, const SynthConfig& d) {
  SynthConfig c;
  c.n_admissions = static_cast<int>(kv.get_int("n_admissions", d.n_admissions));
  c.seed = kv.get_uint("seed", d.seed);
  c.n_lab_codes = static_cast<int>(kv.get_int("n_lab_codes", d.n_lab_codes));
  c.n_vital_codes = static_cast<int>(kv.get_int("n_vital_codes", d.n_vital_codes));
  c.n_med_codes = static_cast<int>(kv.get_int("n_med_codes", d.n_med_codes));
  c.n_proc_codes = static_cast<int>(kv.get_int("n_proc_codes", d.n_proc_codes));
  c.mean_events_per_admission = kv.get_double("mean_events_per_admission", d.mean_events_per_admission);
  c.severity_effect = kv.get_double("severity_effect", d.severity_effect);
  c.co_timestamp_fraction = kv.get_double("co_timestamp_fraction", d.co_timestamp_fraction);
  c.validate();
  return c;
}

KeyValueConfig SynthConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("n_admissions", std::to_string(n_admissions));
  kv.set("seed", std::to_string(seed));
  kv.set("n_lab_codes", std::to_string(n_lab_codes));
  kv.set("n_vital_codes", std::to_string(n_vital_codes));
  kv.set("n_med_codes", std::to_string(n_med_codes));
  kv.set("n_proc_codes", std::to_string(n_proc_codes));
  kv.set("mean_events_per_admission", format_double(mean_events_per_admission));
  kv.set("severity_effect", format_double(severity_effect));
  kv.set("co_timestamp_fraction", format_double(co_timestamp_fraction));
  return kv;
}

SynthCodes synth_codes(const SynthConfig& cfg) {
  SynthCodes c;
  c.labs.push_back("albumin");
  for (int i = 1; i < cfg.n_lab_codes; ++i) c.labs.push_back(numbered("LAB", i));
  for (int i = 0; i < cfg.n_vital_codes; ++i) {
    c.vitals.push_back(i < static_cast<int>(std::size(kVitals)) ? std::string(kVitals[i].code) : numbered("VIT", i));
  }
  c.meds.push_back("J01XE01");
  for (int i = 1; i < cfg.n_med_codes; ++i) c.meds.push_back(numbered("MED", i));
  for (int i = 0; i < cfg.n_proc_codes; ++i) c.procs.push_back(numbered("PRC", i));
  return c;
}

RangeTable generate_range_table(const SynthConfig& cfg) {
  cfg.validate();
  const SynthCodes codes = synth_codes(cfg);
  auto rng = stream_rng(cfg.seed, kRangeStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<RangeRow> rows;
  auto emit = [&rows](const std::string& code, Sex sex, bool pregnant, const AgeBand& band, double low,
                      double high) {
    rows.push_back(RangeRow{code, sex, band.low, band.high, pregnant, low, high});
  };

  for (std::size_t li = 0; li < codes.labs.size(); ++li) {
    const std::string& code = codes.labs[li];
    const double center = li == 0 ? 42.0 : round_to(5.0 + 145.0 * unit(rng), 0.1);
    const double width = li == 0 ? 12.0 : round_to(std::max(1.0, center * (0.2 + 0.4 * unit(rng))), 0.1);
    for (std::size_t b = 0; b < std::size(kAgeBands); ++b) {
      // Sex- and age-specific shifts make raw values ambiguous without the range.
      double cell_low[2], cell_high[2];
      for (int sx = 0; sx < 2; ++sx) {
        const double shift = round_to(width * (unit(rng) - 0.5) * 0.7, 0.1);
        const double scale = 0.8 + 0.4 * unit(rng);
        cell_low[sx] = round_to(center + shift - 0.5 * width * scale, 0.1);
        cell_high[sx] = round_to(center + shift + 0.5 * width * scale, 0.1);
      }
      if (li == 0 && b == 1) cell_low[1] = 36.0, cell_high[1] = 48.0;  // albumin, male 18-40
      emit(code, Sex::female, false, kAgeBands[b], cell_low[0], cell_high[0]);
      const double preg_shift = round_to(0.15 * width, 0.1);
      emit(code, Sex::female, true, kAgeBands[b], cell_low[0] - preg_shift, cell_high[0] - preg_shift);
      emit(code, Sex::male, false, kAgeBands[b], cell_low[1], cell_high[1]);
      emit(code, Sex::unknown, false, kAgeBands[b], round_to(0.5 * (cell_low[0] + cell_low[1]), 0.1),
           round_to(0.5 * (cell_high[0] + cell_high[1]), 0.1));
    }
  }

  for (std::size_t vi = 0; vi < codes.vitals.size(); ++vi) {
    double low, high;
    if (vi < std::size(kVitals)) {
      low = kVitals[vi].low, high = kVitals[vi].high;
    } else {
      low = round_to(10.0 + 90.0 * unit(rng), 0.1);
      high = round_to(low * (1.2 + 0.3 * unit(rng)), 0.1);
    }
    for (const AgeBand& band : kAgeBands) {
      emit(codes.vitals[vi], Sex::female, false, band, low, high);
      emit(codes.vitals[vi], Sex::female, true, band, low, high);
      emit(codes.vitals[vi], Sex::male, false, band, low, high);
      emit(codes.vitals[vi], Sex::unknown, false, band, low, high);
    }
  }
  return RangeTable(std::move(rows));
}

SynthResult generate_cohort(const SynthConfig& cfg, unsigned n_threads) {
  cfg.validate();
  const Generator gen(cfg);
  const std::size_t n = static_cast<std::size_t>(cfg.n_admissions);

  SynthResult result;
  result.cohort.seed = cfg.seed;
  result.cohort.admissions.resize(n);
  result.severity.resize(n);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) result.cohort.admissions[i] = gen.make(i, result.severity[i]);
  };
  n_threads = std::max(1u, std::min<unsigned>(n_threads, static_cast<unsigned>(n)));
  if (n_threads == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + n_threads - 1) / n_threads;
    for (unsigned t = 0; t < n_threads; ++t) {
      const std::size_t begin = t * chunk, end = std::min(n, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
  }
  result.ranges = gen.ranges;
  return result;
}

}  // namespace medbert
