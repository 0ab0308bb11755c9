#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace segdsl::io {

// Little-endian primitive encoding shared by the feature cache, model and
// forest checkpoints. All three start with a 4-byte magic and a u32 version.

void write_u32(std::ostream& out, std::uint32_t value);
void write_u64(std::ostream& out, std::uint64_t value);
void write_f32(std::ostream& out, float value);
void write_f64(std::ostream& out, double value);
void write_string(std::ostream& out, std::string_view text);
void write_header(std::ostream& out, std::string_view magic, std::uint32_t version);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);

// Reads and checks the magic, returns the stored version. Throws DataError on
// a magic mismatch or when the version exceeds max_version.
std::uint32_t read_header(std::istream& in, std::string_view magic, std::uint32_t max_version);

}  // namespace segdsl::io
