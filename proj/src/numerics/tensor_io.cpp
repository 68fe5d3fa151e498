#include "medbert/numerics/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "medbert/error.hpp"

namespace medbert::num {

namespace {

void to_little_endian(std::uint64_t& bits) {
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
}

}  // namespace

std::vector<TensorEntry> write_tensor_blob(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  std::vector<TensorEntry> entries;
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    entries.push_back({t.name, t.tensor->rows(), t.tensor->cols(), offset});
    for (double v : t.tensor->flat()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      to_little_endian(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += t.tensor->size() * sizeof(double);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return entries;
}

std::vector<Matrix> read_tensor_blob(const std::filesystem::path& path, std::span<const TensorEntry> entries) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open tensor blob: " + path.string());
  const auto blob_size = static_cast<std::size_t>(std::filesystem::file_size(path));
  std::size_t expected = 0;
  for (const auto& e : entries) {
    if (e.offset != expected) throw ValidationError("tensor '" + e.name + "': offset does not follow previous tensor");
    expected += e.rows * e.cols * sizeof(double);
  }
  if (blob_size != expected) {
    throw ValidationError("tensor blob shape error: manifest describes " + std::to_string(expected) +
                          " bytes but " + path.string() + " holds " + std::to_string(blob_size));
  }
  std::vector<Matrix> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Matrix m(e.rows, e.cols);
    for (double& v : m.flat()) {
      std::uint64_t bits;
      in.read(reinterpret_cast<char*>(&bits), sizeof bits);
      to_little_endian(bits);
      std::memcpy(&v, &bits, sizeof v);
    }
    out.push_back(std::move(m));
  }
  if (!in) throw ValidationError("tensor blob truncated: " + path.string());
  return out;
}

}  // namespace medbert::num
