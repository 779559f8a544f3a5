#include "rtlod/coeff.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "rtlod/errors.hpp"

namespace rtlod {

CoefficientField::CoefficientField(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidArgument("empty coefficient field");
  min_ = values_.front();
  max_ = values_.front();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!(v > 0) || !std::isfinite(v)) {
      throw InvalidArgument("coefficient must be positive and finite (cell " +
                            std::to_string(i) + ")");
    }
    min_ = std::min(min_, v);
    max_ = std::max(max_, v);
  }
}

CoefficientField CoefficientField::constant(const Mesh& mesh, double value) {
  return CoefficientField(std::vector<double>(mesh.num_triangles(), value));
}

CoefficientField CoefficientField::scaled(double factor) const {
  std::vector<double> v = values_;
  for (double& x : v) x *= factor;
  return CoefficientField(std::move(v));
}

namespace {

bool divides(double length, double block) {
  const double n = length / block;
  return std::abs(n - std::round(n)) <= 1e-9 * std::max(1.0, n);
}

}  // namespace

Checkerboard::Checkerboard(double block_size, double v_black, double v_white,
                           const Rect& domain)
    : block_size_(block_size), v_black_(v_black), v_white_(v_white), domain_(domain) {
  if (!(block_size > 0)) throw InvalidArgument("block size must be positive");
  if (!(v_black > 0) || !(v_white > 0)) {
    throw InvalidArgument("checkerboard values must be positive");
  }
  if (domain.degenerate()) throw InvalidArgument("degenerate domain");
  if (!divides(domain.width(), block_size) || !divides(domain.height(), block_size)) {
    throw InvalidArgument("block size does not divide the domain side lengths");
  }
}

double Checkerboard::operator()(Point p) const {
  const auto i = static_cast<long>(std::floor((p.x - domain_.x0) / block_size_));
  const auto j = static_cast<long>(std::floor((p.y - domain_.y0) / block_size_));
  return (i + j) % 2 == 0 ? v_black_ : v_white_;
}

CoefficientField Checkerboard::on(const Mesh& mesh) const {
  std::vector<double> values(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) values[t] = (*this)(mesh.centroid(t));
  return CoefficientField(std::move(values));
}

CoefficientField checkerboard(const Mesh& mesh, double block_size, double v_black,
                              double v_white, const Rect& domain) {
  return Checkerboard(block_size, v_black, v_white, domain).on(mesh);
}

double Raster::operator()(Point p) const {
  const int col = std::clamp(
      static_cast<int>(std::floor((p.x - domain.x0) / domain.width() * ncols)), 0, ncols - 1);
  const int row = std::clamp(
      static_cast<int>(std::floor((p.y - domain.y0) / domain.height() * nrows)), 0, nrows - 1);
  return at(col, row);
}

Raster parse_raster(std::istream& in, int ncols, int nrows, const Rect& domain) {
  if (ncols < 1 || nrows < 1) throw InvalidArgument("raster dimensions must be positive");
  if (domain.degenerate()) throw InvalidArgument("degenerate domain");
  Raster raster{ncols, nrows, domain, {}};
  const auto expected = static_cast<std::size_t>(ncols) * nrows;
  raster.values.reserve(expected);
  std::string line;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
      if (p == end) break;
      const char* tok_end = p;
      while (tok_end < end && !std::isspace(static_cast<unsigned char>(*tok_end))) ++tok_end;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(p, tok_end, v);
      const auto index = static_cast<long>(raster.values.size());
      if (ec != std::errc() || ptr != tok_end) {
        throw DataFormatError("raster entry " + std::to_string(index) + " is not a number: '" +
                                  std::string(p, tok_end) + "'",
                              index);
      }
      if (!(v > 0) || !std::isfinite(v)) {
        throw DataFormatError("raster entry " + std::to_string(index) + " is not positive",
                              index);
      }
      raster.values.push_back(v);
      p = tok_end;
    }
  }
  if (raster.values.size() != expected) {
    throw DataFormatError("raster has " + std::to_string(raster.values.size()) +
                              " entries, expected " + std::to_string(expected),
                          static_cast<long>(std::min(raster.values.size(), expected)));
  }
  return raster;
}

Raster read_raster(const std::filesystem::path& path, int ncols, int nrows,
                   const Rect& domain) {
  std::ifstream in(path);
  if (!in) throw DataMissingError("cannot open raster file " + path.string());
  return parse_raster(in, ncols, nrows, domain);
}

void write_raster(const Raster& raster, std::ostream& out) {
  char buf[32];
  for (int row = 0; row < raster.nrows; ++row) {
    for (int col = 0; col < raster.ncols; ++col) {
      // Shortest representation that parses back to the same double.
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), raster.at(col, row));
      if (col > 0) out << ' ';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

CoefficientField sample_raster(const Raster& raster, const Mesh& mesh) {
  std::vector<double> values(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) values[t] = raster(mesh.centroid(t));
  return CoefficientField(std::move(values));
}

CoefficientField load_raster(const std::filesystem::path& path, int ncols, int nrows,
                             const Rect& domain) {
  const Raster raster = read_raster(path, ncols, nrows, domain);
  return sample_raster(raster, build_structured_mesh(ncols, nrows, domain));
}

}  // namespace rtlod
