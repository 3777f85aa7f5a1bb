#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "mrsm/types.hpp"

namespace mrsm::io {

// Little-endian primitive encoding shared by the key and forest files.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void bytes(std::string_view raw);
  void vector(const Vector& v);
  void matrix(const Matrix& m);  // row-major

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::string bytes(std::size_t n);
  Vector vector();
  Matrix matrix();

  // Reads and checks a magic tag followed by a u32 version.
  void expect_header(std::string_view magic, std::uint32_t version);

 private:
  void read(char* dst, std::size_t n);
  std::istream& in_;
};

void write_header(BinaryWriter& w, std::string_view magic, std::uint32_t version);

}  // namespace mrsm::io
