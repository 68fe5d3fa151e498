#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "medbert/cohort_synth.hpp"
#include "medbert/error.hpp"
#include "medbert/metrics.hpp"
#include "medbert/tokenizer.hpp"
#include "support.hpp"

using namespace medbert;
using medbert::test::TempDir;

namespace {

SynthResult synth(int n, std::uint64_t seed, double effect, unsigned threads = 1) {
  SynthConfig cfg;
  cfg.n_admissions = n;
  cfg.seed = seed;
  cfg.severity_effect = effect;
  return generate_cohort(cfg, threads);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double abnormal_count(const Admission& adm, const RangeTable& ranges) {
  const Admission w = window_events(adm);
  double k = 0;
  for (const auto& e : w.events) {
    if (!e.value) continue;
    const auto r = ranges.lookup(e.code, adm.demographics);
    if (r && (*e.value < r->low || *e.value > r->high)) ++k;
  }
  return k;
}

}  // namespace

TEST_CASE("generation is deterministic and thread-count independent") {
  TempDir dir("synth_det");
  const SynthResult a = synth(1000, 7, 1.0, 1);
  const SynthResult b = synth(1000, 7, 1.0, 4);
  CHECK(a.cohort == b.cohort);
  save_cohort(a.cohort, dir / "a.jsonl");
  save_cohort(b.cohort, dir / "b.jsonl");
  CHECK(std::filesystem::file_size(dir / "a.jsonl") == std::filesystem::file_size(dir / "b.jsonl"));
  CHECK(synth(50, 8, 1.0).cohort != a.cohort);
}

TEST_CASE("generated admissions are valid") {
  const SynthResult r = synth(2000, 11, 1.0);
  CHECK_NOTHROW(r.cohort.validate());
  std::size_t same = 0, lab_pairs = 0;
  for (const auto& adm : r.cohort.admissions) {
    CHECK(adm.los_days > 1.0);
    for (std::size_t i = 0; i < adm.events.size(); ++i) {
      const auto& e = adm.events[i];
      if (e.value) CHECK(r.ranges.lookup(e.code, adm.demographics).has_value());
      if (i > 0) {
        CHECK(adm.events[i - 1].timestamp_hours <= e.timestamp_hours);
        if (e.timestamp_hours <= kObservationWindowHours && e.type == EventType::lab && adm.events[i - 1].type == EventType::lab) {
          ++lab_pairs;
          if (adm.events[i - 1].timestamp_hours == e.timestamp_hours) ++same;
        }
      }
    }
  }
  const double frac = static_cast<double>(same) / static_cast<double>(lab_pairs);
  CHECK(frac > 0.25);
  CHECK(frac < 0.35);
}

TEST_CASE("LOS is right-skewed") {
  const SynthResult r = synth(5000, 13, 1.0);
  std::vector<double> los;
  for (const auto& a : r.cohort.admissions) los.push_back(a.los_days);
  const double mean = std::accumulate(los.begin(), los.end(), 0.0) / static_cast<double>(los.size());
  std::nth_element(los.begin(), los.begin() + los.size() / 2, los.end());
  CHECK(mean > los[los.size() / 2]);
}

TEST_CASE("severity_effect 0 leaves the record uninformative") {
  const SynthResult r = synth(10000, 21, 0.0);
  std::vector<double> abn, lab;
  for (const auto& a : r.cohort.admissions) {
    abn.push_back(abnormal_count(a, r.ranges));
    lab.push_back(label_binary(a.los_days));
  }
  CHECK(std::abs(pearson(abn, lab)) < 0.05);
}

TEST_CASE("severity oracle and decile monotonicity") {
  const SynthResult r = synth(10000, 42, 1.0);
  std::vector<int> labels;
  for (const auto& a : r.cohort.admissions) labels.push_back(label_binary(a.los_days));
  CHECK(metrics::auroc(r.severity, labels) > 0.85);

  std::vector<std::size_t> idx(r.severity.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return r.severity[a] < r.severity[b]; });
  const std::size_t dec = idx.size() / 10;
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < dec; ++i) {
    lo += r.cohort.admissions[idx[i]].los_days;
    hi += r.cohort.admissions[idx[idx.size() - 1 - i]].los_days;
  }
  CHECK(hi > lo);

  std::vector<double> abn, los;
  for (const auto& a : r.cohort.admissions) {
    abn.push_back(abnormal_count(a, r.ranges));
    los.push_back(label_binary(a.los_days));
  }
  CHECK(pearson(abn, los) > 0.1);
}

TEST_CASE("range table") {
  const SynthConfig cfg;
  const RangeTable t = generate_range_table(cfg);
  const auto alb = t.lookup("albumin", Demographics{31, Sex::male, false});
  REQUIRE(alb.has_value());
  CHECK(alb->low == 36.0);
  CHECK(alb->high == 48.0);
  const auto temp = t.lookup("temperature", Demographics{70, Sex::female, false});
  REQUIRE(temp.has_value());
  CHECK(temp->low == 36.1);
  CHECK(temp->high == 38.0);
  const SynthCodes codes = synth_codes(cfg);
  for (const auto* list : {&codes.labs, &codes.vitals}) {
    for (const auto& c : *list) CHECK(t.has_full_coverage(c));
  }
  CHECK(codes.labs.size() == 50);
  CHECK(codes.vitals.size() == 7);

  TempDir dir("ranges");
  t.save(dir / "r.tsv");
  CHECK(RangeTable::load(dir / "r.tsv") == t);
}

TEST_CASE("range table rejects overlapping bands and inverted bounds") {
  RangeRow a{"x", Sex::male, 0, 50, false, 1.0, 2.0};
  RangeRow b{"x", Sex::male, 50, 120, false, 1.0, 2.0};
  CHECK_THROWS_AS(RangeTable({a, b}), ValidationError);
  b.age_low = 51;
  CHECK_NOTHROW(RangeTable({a, b}));
  b.low = 3.0;
  CHECK_THROWS_AS(RangeTable({a, b}), ValidationError);
}

TEST_CASE("synth config validation and key-value round trip") {
  SynthConfig cfg;
  cfg.n_admissions = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.n_admissions = 10;
  cfg.severity_effect = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.severity_effect = 0.25;
  cfg.seed = 1234567890123ULL;
  CHECK(SynthConfig::from_kv(cfg.to_kv()).to_kv().values() == cfg.to_kv().values());
}
