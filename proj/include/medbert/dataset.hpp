#pragma once

// Cohort -> model-ready splits: window to the observation period, split
// 80/10/10, build the vocabulary on the training split, tokenize.

#include <cstdint>
#include <vector>

#include "medbert/event_model.hpp"
#include "medbert/range_table.hpp"
#include "medbert/tokenizer.hpp"

namespace medbert {

struct PreparedData {
  CohortSplit windowed;  // admissions cut to the observation window
  Vocabulary vocab;
  std::vector<TokenizedSequence> train, valid, test;
  std::size_t missing_ranges = 0;
};

CohortSplit windowed_split(const Cohort& cohort, std::uint64_t seed);

PreparedData prepare_dataset(const Cohort& cohort, const RangeTable& ranges, std::uint64_t seed,
                             std::size_t max_len = kMaxSequenceLength);

}  // namespace medbert
