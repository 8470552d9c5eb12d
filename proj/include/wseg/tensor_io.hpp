#pragma once

// WST1 tensor container:
//   "WST1" | u32 rank | rank x u32 dims | prod(dims) x f32 values
// All integers and floats little-endian, values row-major.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wseg {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  std::size_t element_count() const;
};

/// Values are narrowed to 32-bit floats.
Tensor make_tensor(std::vector<std::uint32_t> shape, std::span<const double> values);

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// Throws FormatError on wrong magic, truncated payload, or trailing bytes.
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace wseg
