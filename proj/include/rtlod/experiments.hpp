#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtlod/metrics.hpp"
#include "rtlod/types.hpp"

namespace rtlod {

enum class ExperimentKind { Convergence, Spe10, Decay, Single };

/// How the number of corrector layers follows the coarse mesh.
struct LayerRule {
  enum class Kind { Fixed, Proportional, Ideal };
  Kind kind = Kind::Proportional;
  int value = 1;          // Fixed
  double constant = 1.0;  // Proportional: round(constant * log2(1/H_side)) + offset
  int offset = 1;

  /// `cells` is the number of coarse cells along the x side of the domain.
  int layers_for(int cells) const;
  std::string describe() const;
};

struct CoefficientSpec {
  enum class Kind { Constant, Checkerboard, Raster };
  Kind kind = Kind::Checkerboard;
  double value = 1.0;  // Constant
  double block = 1.0 / 64;
  double black = 1.0;
  double white = 0.001;
  std::filesystem::path path;  // Raster
  int ncols = 60;
  int nrows = 220;
  int layer = 85;  // used when the file holds the full SPE10 model
};

struct SourceSpec {
  /// cosine: 2 pi^2 cos(pi x) cos(pi y) on the unit square.
  /// checker: +-1 on squares of side `block`.
  /// wells: +1 on the lower-left and -1 on the upper-right grid rectangle.
  enum class Kind { Cosine, Checker, Wells };
  Kind kind = Kind::Cosine;
  double block = 0.25;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Convergence;
  std::string name = "convergence";
  Rect domain;
  /// Structured meshes: cells per side. Every coarse mesh must nest in the fine one.
  std::vector<std::array<int, 2>> coarse_cells;
  std::array<int, 2> fine_cells{128, 128};
  LayerRule layers;
  /// Explicit layer list (decay, spe10); overrides `layers`.
  std::vector<int> layer_list;
  bool source_correction = false;
  int ell_offset = 1;  // ell = m + offset
  CoefficientSpec coefficient;
  SourceSpec source;
  /// Decay: coarse elements to profile; empty picks the one nearest the centre.
  std::vector<int> decay_elements;
  bool write_fields = false;
  double load_tolerance = 1e-8;
  int threads = 1;
  std::filesystem::path out_dir = "out";
  nlohmann::json raw;  // as read, for the manifest

  /// Throws InvalidArgument with the offending key.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

ExperimentKind parse_kind(const std::string& name);
const char* kind_name(ExperimentKind kind);

/// Stable 64-bit FNV-1a hash of the canonical config dump, as hex.
std::string config_hash(const nlohmann::json& j);

/// Per-case outcome. A failed case keeps NaN errors and its message.
struct CaseResult {
  ErrorReport report;
  bool ok = true;
  std::string message;
  double setup_s = 0.0;
  /// ||div(u_ref - u_ms)||, to compare with report.err_div.
  double div_distance = 0.0;
};

struct DecayRow {
  int element = 0;
  int m = 0;
  double tail = 0.0;       // ideal corrector energy outside N^m(T)
  double loc_error = 0.0;  // energy of (C_T - C_T^m) on the local basis
  double norm = 0.0;       // energy of the ideal corrector
};

/// Cellwise |u| at fine centroids.
struct FieldDump {
  std::string label;
  std::vector<Point> centroids;
  std::vector<double> magnitude;
};

struct RunResult {
  std::string experiment;
  std::vector<CaseResult> cases;
  std::vector<DecayRow> decay;
  std::vector<FieldDump> fields;
  double reference_s = 0.0;
  double total_s = 0.0;
  nlohmann::json notes = nlohmann::json::object();
};

RunResult run_convergence(const ExperimentConfig& config);
/// Throws DataMissingError if the raster file is absent.
RunResult run_spe10(const ExperimentConfig& config);
RunResult run_decay(const ExperimentConfig& config);
RunResult run_single(const ExperimentConfig& config);
RunResult run_experiment(const ExperimentConfig& config);

/// results.csv (or decay_*.csv), field_*.csv and manifest.json.
std::vector<std::filesystem::path> write_outputs(const ExperimentConfig& config,
                                                 const RunResult& result,
                                                 const std::filesystem::path& out_dir);

void write_results_csv(const RunResult& result, std::ostream& out);
void write_decay_csv(const std::vector<DecayRow>& rows, std::ostream& out);
void write_field_csv(const FieldDump& field, std::ostream& out);

/// Linear fit of log(values) against m; values must be positive.
LinearFit fit_decay(const std::vector<int>& ms, const std::vector<double>& values);

}  // namespace rtlod
