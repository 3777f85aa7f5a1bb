#include "mrsm/io.hpp"

#include <bit>
#include <cstring>

namespace mrsm::io {

void BinaryWriter::u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

void BinaryWriter::u32(std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out_.write(buf, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out_.write(buf, 8);
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::bytes(std::string_view raw) {
  out_.write(raw.data(), static_cast<std::streamsize>(raw.size()));
}

void BinaryWriter::vector(const Vector& v) {
  u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
}

void BinaryWriter::matrix(const Matrix& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
}

void BinaryReader::read(char* dst, std::size_t n) {
  in_.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw Error("unexpected end of binary stream");
}

std::uint8_t BinaryReader::u8() {
  char c;
  read(&c, 1);
  return static_cast<std::uint8_t>(c);
}

std::uint32_t BinaryReader::u32() {
  unsigned char buf[4];
  read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

std::uint64_t BinaryReader::u64() {
  unsigned char buf[8];
  read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::bytes(std::size_t n) {
  std::string s(n, '\0');
  if (n > 0) read(s.data(), n);
  return s;
}

Vector BinaryReader::vector() {
  const auto n = u64();
  if (n > (1ULL << 32)) throw Error("vector length out of range");
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f64();
  return v;
}

Matrix BinaryReader::matrix() {
  const auto rows = u64();
  const auto cols = u64();
  if (rows > (1ULL << 20) || cols > (1ULL << 20)) throw Error("matrix shape out of range");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  }
  return m;
}

void BinaryReader::expect_header(std::string_view magic, std::uint32_t version) {
  const auto got = bytes(magic.size());
  if (got != magic) throw Error("bad file magic, expected " + std::string(magic));
  const auto v = u32();
  if (v != version) {
    throw Error("unsupported " + std::string(magic) + " version " + std::to_string(v));
  }
}

void write_header(BinaryWriter& w, std::string_view magic, std::uint32_t version) {
  w.bytes(magic);
  w.u32(version);
}

}  // namespace mrsm::io
