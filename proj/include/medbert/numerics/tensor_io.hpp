#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "medbert/numerics/matrix.hpp"

namespace medbert::num {

// Location of one tensor inside a blob of little-endian doubles.
struct TensorEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;  // bytes

  bool operator==(const TensorEntry&) const = default;
};

struct NamedTensor {
  std::string name;
  const Matrix* tensor;
};

std::vector<TensorEntry> write_tensor_blob(const std::filesystem::path& path, std::span<const NamedTensor> tensors);

// Blob size must equal the sum of the entries exactly.
std::vector<Matrix> read_tensor_blob(const std::filesystem::path& path, std::span<const TensorEntry> entries);

}  // namespace medbert::num
