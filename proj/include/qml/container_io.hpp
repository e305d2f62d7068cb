#pragma once

#include "qml/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace qml {

/// Little-endian primitives shared by every binary container.
namespace io {
void write_magic(std::ostream& out, const char (&magic)[5]);
void expect_magic(std::istream& in, const char (&magic)[5]);
void write_i64(std::ostream& out, std::int64_t v);
void write_f64(std::ostream& out, double v);
std::int64_t read_i64(std::istream& in);
double read_f64(std::istream& in);
void write_complex(std::ostream& out, std::complex<double> z);
std::complex<double> read_complex(std::istream& in);
}  // namespace io

/// Field container: "QML1", N (i64), L, h (f64), then N^2 (re, im) pairs in row-major order.
/// A trailing "CTR1" block with the two lattice-center components follows when the center is nonzero;
/// readers that stop after the samples still see a valid field.
void write_field(std::ostream& out, const Field2D& u);
Field2D read_field(std::istream& in);
void write_field(const std::filesystem::path& path, const Field2D& u);
Field2D read_field(const std::filesystem::path& path);

/// CSV of |u| along one grid line: axis 0 fixes x1 = x(index) and walks x2, axis 1 the converse.
void write_abs_slice_csv(std::ostream& out, const Field2D& u, int axis, Index index);

}  // namespace qml
