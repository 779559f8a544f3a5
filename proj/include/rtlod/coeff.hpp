#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "rtlod/mesh.hpp"
#include "rtlod/types.hpp"

namespace rtlod {

/// Scalar permeability kappa per fine triangle, A = kappa * I.
///
/// alpha and beta bound the spectrum of A^{-1}: alpha = 1 / max kappa,
/// beta = 1 / min kappa.
class CoefficientField {
 public:
  CoefficientField() = default;
  /// Throws InvalidArgument on nonpositive or nonfinite entries.
  explicit CoefficientField(std::vector<double> values);

  static CoefficientField constant(const Mesh& mesh, double value);

  const std::vector<double>& values() const { return values_; }
  double operator[](int cell) const { return values_[cell]; }
  int size() const { return static_cast<int>(values_.size()); }

  double min_value() const { return min_; }
  double max_value() const { return max_; }
  double contrast() const { return max_ / min_; }
  double alpha() const { return 1.0 / max_; }
  double beta() const { return 1.0 / min_; }

  CoefficientField scaled(double factor) const;

 private:
  std::vector<double> values_;
  double min_ = 1.0;
  double max_ = 1.0;
};

/// Checkerboard with square blocks of side `block_size`; block (i, j)
/// counted from the lower-left corner is black when i + j is even.
class Checkerboard {
 public:
  Checkerboard(double block_size, double v_black, double v_white, const Rect& domain);

  double operator()(Point p) const;
  /// Samples the pattern at triangle centroids.
  CoefficientField on(const Mesh& mesh) const;

  double block_size() const { return block_size_; }

 private:
  double block_size_;
  double v_black_;
  double v_white_;
  Rect domain_;
};

CoefficientField checkerboard(const Mesh& mesh, double block_size, double v_black,
                              double v_white, const Rect& domain);

/// Cell values on a ncols x nrows grid, row-major, row 0 at the bottom.
struct Raster {
  int ncols = 0;
  int nrows = 0;
  Rect domain;
  std::vector<double> values;

  double at(int col, int row) const {
    return values[static_cast<std::size_t>(row) * ncols + col];
  }
  double operator()(Point p) const;
};

/// Parses whitespace- or comma-separated positive decimals. Throws
/// DataFormatError (with the offending index) on count mismatch, unparsable
/// tokens, or nonpositive values; DataMissingError if the file is absent.
Raster read_raster(const std::filesystem::path& path, int ncols, int nrows,
                   const Rect& domain);
Raster parse_raster(std::istream& in, int ncols, int nrows, const Rect& domain);

/// Writes one row per line, space separated, bottom row first.
void write_raster(const Raster& raster, std::ostream& out);

/// Samples a raster at triangle centroids.
CoefficientField sample_raster(const Raster& raster, const Mesh& mesh);

/// Reads the raster and assigns each cell value to the two triangles of the
/// matching structured ncols x nrows mesh over `domain`.
CoefficientField load_raster(const std::filesystem::path& path, int ncols, int nrows,
                             const Rect& domain);

}  // namespace rtlod
