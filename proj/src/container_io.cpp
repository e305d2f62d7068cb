#include "qml/container_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

namespace qml {
namespace io {

void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4] = {};
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0)
    throw InvalidInput(std::string("container: expected magic ") + magic);
}

void write_i64(std::ostream& out, std::int64_t v) {
  const auto bits = static_cast<std::uint64_t>(v);
  std::array<char, 8> bytes;
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  out.write(bytes.data(), 8);
}

void write_f64(std::ostream& out, double v) { write_i64(out, static_cast<std::int64_t>(std::bit_cast<std::uint64_t>(v))); }

std::int64_t read_i64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (!in) throw InvalidInput("container: truncated data");
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return static_cast<std::int64_t>(bits);
}

double read_f64(std::istream& in) { return std::bit_cast<double>(static_cast<std::uint64_t>(read_i64(in))); }

void write_complex(std::ostream& out, std::complex<double> z) {
  write_f64(out, z.real());
  write_f64(out, z.imag());
}

std::complex<double> read_complex(std::istream& in) {
  const double re = read_f64(in);
  const double im = read_f64(in);
  return {re, im};
}

}  // namespace io

void write_field(std::ostream& out, const Field2D& u) {
  u.check_shape();
  const Index n = u.grid.points_per_axis;
  io::write_magic(out, "QML1");
  io::write_i64(out, n);
  io::write_f64(out, u.grid.half_width);
  io::write_f64(out, u.grid.h);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) io::write_complex(out, u.values(i, j));
  if (u.grid.center != Vec2::Zero()) {
    io::write_magic(out, "CTR1");
    io::write_f64(out, u.grid.center[0]);
    io::write_f64(out, u.grid.center[1]);
  }
  if (!out) throw Error("write_field: stream failure");
}

Field2D read_field(std::istream& in) {
  io::expect_magic(in, "QML1");
  const std::int64_t n = io::read_i64(in);
  const double half_width = io::read_f64(in);
  const double h = io::read_f64(in);
  if (n < 16 || n > (1 << 16)) throw InvalidInput("read_field: implausible grid size");
  GridSpec grid{half_width, static_cast<Index>(n), h, Vec2::Zero()};
  grid.validate();
  Field2D u(grid);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) u.values(i, j) = io::read_complex(in);
  char tag[4];
  if (in.read(tag, 4) && std::memcmp(tag, "CTR1", 4) == 0) {
    u.grid.center[0] = io::read_f64(in);
    u.grid.center[1] = io::read_f64(in);
  }
  detail::require_finite(u.values, "read_field");
  return u;
}

void write_field(const std::filesystem::path& path, const Field2D& u) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_field(out, u);
}

Field2D read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_field(in);
}

void write_abs_slice_csv(std::ostream& out, const Field2D& u, int axis, Index index) {
  const Index n = u.grid.points_per_axis;
  if (axis != 0 && axis != 1) throw InvalidInput("write_abs_slice_csv: axis must be 0 or 1");
  if (index < 0 || index >= n) throw InvalidInput("write_abs_slice_csv: index out of range");
  out << (axis == 0 ? "x2,abs_u\n" : "x1,abs_u\n");
  out << std::setprecision(17);
  for (Index t = 0; t < n; ++t) {
    const auto value = axis == 0 ? u.values(index, t) : u.values(t, index);
    out << u.grid.x(t) << ',' << std::abs(value) << '\n';
  }
}

}  // namespace qml
