#include "wseg/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace wseg {

namespace {

constexpr char kMagic[4] = {'W', 'S', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor make_tensor(std::vector<std::uint32_t> shape, std::span<const double> values) {
  Tensor t{std::move(shape), {}};
  if (t.element_count() != values.size()) {
    throw FormatError("tensor shape does not match value count");
  }
  t.values.reserve(values.size());
  for (double v : values) t.values.push_back(static_cast<float>(v));
  return t;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.element_count() != t.values.size()) {
    throw FormatError("tensor shape does not match value count");
  }
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * t.shape.size() + 4 * t.values.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) put_u32(out, d);
  for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a WST1 tensor (bad magic)");
  }
  const std::uint32_t rank = get_u32(bytes, 4);
  std::size_t offset = 8;
  if (bytes.size() < offset + 4ull * rank) throw FormatError("WST1 header truncated");
  Tensor t;
  t.shape.reserve(rank);
  for (std::uint32_t i = 0; i < rank; ++i, offset += 4) t.shape.push_back(get_u32(bytes, offset));
  const std::size_t count = t.element_count();
  if ((bytes.size() - offset) / 4 < count) throw FormatError("WST1 payload truncated");
  if (bytes.size() - offset != 4 * count) throw FormatError("WST1 payload has trailing bytes");
  t.values.reserve(count);
  for (std::size_t i = 0; i < count; ++i, offset += 4) {
    t.values.push_back(std::bit_cast<float>(get_u32(bytes, offset)));
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

}  // namespace wseg
