#include "segdsl/binary_io.hpp"

#include <bit>
#include <cstring>

#include "segdsl/error.hpp"

namespace segdsl::io {
namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw DataError("unexpected end of binary stream");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[i]) << (8 * i);
  }
  return value;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t value) { put_le(out, value); }
void write_u64(std::ostream& out, std::uint64_t value) { put_le(out, value); }
void write_f32(std::ostream& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }
void write_f64(std::ostream& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

void write_string(std::ostream& out, std::string_view text) {
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_header(std::ostream& out, std::string_view magic, std::uint32_t version) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_u32(out, version);
}

std::uint32_t read_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
float read_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

std::string read_string(std::istream& in) {
  const std::uint32_t size = read_u32(in);
  std::string text(size, '\0');
  in.read(text.data(), size);
  if (!in) throw DataError("unexpected end of binary stream inside string");
  return text;
}

std::uint32_t read_header(std::istream& in, std::string_view magic, std::uint32_t max_version) {
  std::string found(magic.size(), '\0');
  in.read(found.data(), static_cast<std::streamsize>(found.size()));
  if (!in || found != magic) {
    throw DataError("bad magic: expected '" + std::string(magic) + "'");
  }
  const std::uint32_t version = read_u32(in);
  if (version == 0 || version > max_version) {
    throw DataError("unsupported " + std::string(magic) + " version " + std::to_string(version));
  }
  return version;
}

}  // namespace segdsl::io
