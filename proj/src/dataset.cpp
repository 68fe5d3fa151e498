#include "medbert/dataset.hpp"

namespace medbert {

CohortSplit windowed_split(const Cohort& cohort, std::uint64_t seed) {
  Cohort windowed = cohort;
  for (auto& adm : windowed.admissions) adm = window_events(adm);
  return split_cohort(windowed, seed);
}

PreparedData prepare_dataset(const Cohort& cohort, const RangeTable& ranges, std::uint64_t seed, std::size_t max_len) {
  PreparedData d;
  d.windowed = windowed_split(cohort, seed);
  const Tokenizer tok(ranges);
  std::vector<std::vector<std::string>> streams;
  streams.reserve(d.windowed.train.size());
  for (const auto& adm : d.windowed.train.admissions) streams.push_back(tok.tokens(adm));
  d.vocab = Vocabulary::build(streams);

  auto encode = [&](const Cohort& part, std::vector<TokenizedSequence>& out) {
    out.reserve(part.size());
    for (const auto& adm : part.admissions) out.push_back(tok.encode(adm, d.vocab, max_len));
  };
  encode(d.windowed.train, d.train);
  encode(d.windowed.valid, d.valid);
  encode(d.windowed.test, d.test);
  d.missing_ranges = tok.missing_range_count();
  return d;
}

}  // namespace medbert
