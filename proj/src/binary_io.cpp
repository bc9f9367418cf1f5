#include "svae/binary_io.hpp"

#include <bit>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace svae::io {

namespace {

template <class U>
void put_le(std::ostream& os, U bits) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(bytes, sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw std::runtime_error("binary block truncated");
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return bits;
}

}  // namespace

void write_f64(std::ostream& os, std::span<const double> values) {
  for (double v : values) put_le(os, std::bit_cast<std::uint64_t>(v));
}

std::vector<double> read_f64(std::istream& is, std::size_t count) {
  std::vector<double> out(count);
  for (auto& v : out) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
  return out;
}

void write_i32(std::ostream& os, std::span<const std::int32_t> values) {
  for (auto v : values) put_le(os, std::bit_cast<std::uint32_t>(v));
}

std::vector<std::int32_t> read_i32(std::istream& is, std::size_t count) {
  std::vector<std::int32_t> out(count);
  for (auto& v : out) v = std::bit_cast<std::int32_t>(get_le<std::uint32_t>(is));
  return out;
}

void write_u8(std::ostream& os, std::span<const std::uint8_t> values) {
  os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
}

std::vector<std::uint8_t> read_u8(std::istream& is, std::size_t count) {
  std::vector<std::uint8_t> out(count);
  if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count))) {
    throw std::runtime_error("binary block truncated");
  }
  return out;
}

}  // namespace svae::io
