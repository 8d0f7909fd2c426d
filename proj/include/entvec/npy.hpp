#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace entvec::npy {

enum class Dtype { int64, float64 };

struct Array {
  Dtype dtype = Dtype::int64;
  std::vector<std::size_t> shape;  // rank 1 or 2
  std::vector<std::int64_t> ints;
  std::vector<double> reals;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (const std::size_t dim : shape) n *= dim;
    return n;
  }
};

// NPY v1.0, little-endian '<i8' / '<f8', C order. The preamble (magic,
// version, header length, header dict, space padding, trailing newline) is
// padded to a multiple of 64 bytes.
void write(const std::filesystem::path& path, std::span<const std::int64_t> values,
           std::span<const std::size_t> shape);
void write(const std::filesystem::path& path, std::span<const double> values,
           std::span<const std::size_t> shape);

// Strict reader for the subset above; rejects other versions, dtypes,
// fortran order and size mismatches with an error naming the violated field.
Array read(const std::filesystem::path& path);

}  // namespace entvec::npy
