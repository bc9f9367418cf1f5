#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

// Little-endian raw blocks, independent of host byte order.
namespace svae::io {

void write_f64(std::ostream& os, std::span<const double> values);
std::vector<double> read_f64(std::istream& is, std::size_t count);

void write_i32(std::ostream& os, std::span<const std::int32_t> values);
std::vector<std::int32_t> read_i32(std::istream& is, std::size_t count);

void write_u8(std::ostream& os, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> read_u8(std::istream& is, std::size_t count);

}  // namespace svae::io
