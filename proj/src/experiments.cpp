#include "rtlod/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "rtlod/coeff.hpp"
#include "rtlod/corrector.hpp"
#include "rtlod/errors.hpp"
#include "rtlod/linsolve.hpp"
#include "rtlod/lod.hpp"
#include "rtlod/mesh.hpp"

namespace rtlod {

using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw InvalidArgument("config: '" + key + "' " + why);
}

template <class T>
T get(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(key, "has the wrong type");
  }
}

std::array<int, 2> cell_pair(const json& v, const std::string& key) {
  if (v.is_number_integer()) return {v.get<int>(), v.get<int>()};
  if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
    return {v[0].get<int>(), v[1].get<int>()};
  }
  bad(key, "must be an integer or a pair of integers");
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) bad(where.empty() ? k : where + "." + k, "is not a known key");
  }
}

LayerRule parse_layers(const json& j) {
  check_keys(j, "layers", {"rule", "m", "constant", "offset"});
  LayerRule r;
  const auto rule = get<std::string>(j, "rule", "proportional");
  if (rule == "fixed") {
    r.kind = LayerRule::Kind::Fixed;
    r.value = get<int>(j, "m", 1);
    if (r.value < 1) bad("layers.m", "must be at least 1");
  } else if (rule == "proportional") {
    r.kind = LayerRule::Kind::Proportional;
    r.constant = get<double>(j, "constant", 1.0);
    r.offset = get<int>(j, "offset", 1);
    if (!(r.constant >= 0)) bad("layers.constant", "must be nonnegative");
  } else if (rule == "ideal") {
    r.kind = LayerRule::Kind::Ideal;
  } else {
    bad("layers.rule", "must be fixed, proportional or ideal");
  }
  return r;
}

CoefficientSpec parse_coefficient(const json& j, CoefficientSpec::Kind default_kind) {
  check_keys(j, "coefficient",
             {"kind", "value", "block", "black", "white", "path", "ncols", "nrows", "layer"});
  CoefficientSpec c;
  const auto kind = get<std::string>(
      j, "kind", default_kind == CoefficientSpec::Kind::Raster ? "raster" : "checkerboard");
  if (kind == "constant") {
    c.kind = CoefficientSpec::Kind::Constant;
    c.value = get<double>(j, "value", 1.0);
    if (!(c.value > 0)) bad("coefficient.value", "must be positive");
  } else if (kind == "checkerboard") {
    c.kind = CoefficientSpec::Kind::Checkerboard;
    c.block = get<double>(j, "block", c.block);
    c.black = get<double>(j, "black", c.black);
    c.white = get<double>(j, "white", c.white);
    if (!(c.block > 0)) bad("coefficient.block", "must be positive");
    if (!(c.black > 0) || !(c.white > 0)) bad("coefficient", "values must be positive");
  } else if (kind == "raster") {
    c.kind = CoefficientSpec::Kind::Raster;
    c.path = get<std::string>(j, "path", "");
    c.ncols = get<int>(j, "ncols", c.ncols);
    c.nrows = get<int>(j, "nrows", c.nrows);
    c.layer = get<int>(j, "layer", c.layer);
    if (c.path.empty()) bad("coefficient.path", "is required for raster coefficients");
    if (c.ncols < 1 || c.nrows < 1) bad("coefficient", "raster dimensions must be positive");
  } else {
    bad("coefficient.kind", "must be constant, checkerboard or raster");
  }
  return c;
}

SourceSpec parse_source(const json& j) {
  check_keys(j, "source", {"kind", "block"});
  SourceSpec s;
  const auto kind = get<std::string>(j, "kind", "cosine");
  if (kind == "cosine") {
    s.kind = SourceSpec::Kind::Cosine;
  } else if (kind == "checker") {
    s.kind = SourceSpec::Kind::Checker;
    s.block = get<double>(j, "block", s.block);
    if (!(s.block > 0)) bad("source.block", "must be positive");
  } else if (kind == "wells") {
    s.kind = SourceSpec::Kind::Wells;
  } else {
    bad("source.kind", "must be cosine, checker or wells");
  }
  return s;
}

MeshPtr structured(std::array<int, 2> cells, const Rect& domain) {
  return std::make_shared<const Mesh>(build_structured_mesh(cells[0], cells[1], domain));
}

std::vector<double> read_numbers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataMissingError("cannot open raster file " + path.string() +
                           "; see the README section on the SPE10 data for how to obtain it");
  }
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    double v = 0;
    std::istringstream ss(tok);
    if (!(ss >> v)) {
      throw DataFormatError("raster entry " + std::to_string(out.size()) + " is not a number: '" +
                                tok + "'",
                            static_cast<long>(out.size()));
    }
    out.push_back(v);
  }
  return out;
}

// Either a single layer of ncols x nrows values, or the full SPE10 permeability
// file (kx, ky, kz blocks of 85 layers each) from which kx of `layer` is taken.
Raster load_layer(const CoefficientSpec& c, const Rect& domain) {
  if (!std::filesystem::exists(c.path)) {
    throw DataMissingError("raster file " + c.path.string() +
                           " not found; see the README section on the SPE10 data");
  }
  const std::size_t per_layer = static_cast<std::size_t>(c.ncols) * c.nrows;
  constexpr int kLayers = 85;
  std::vector<double> all = read_numbers(c.path);
  std::vector<double> values;
  if (all.size() == per_layer) {
    values = std::move(all);
  } else if (all.size() == 3 * kLayers * per_layer) {
    if (c.layer < 1 || c.layer > kLayers) bad("coefficient.layer", "must be in 1..85");
    const auto first = all.begin() + static_cast<std::ptrdiff_t>((c.layer - 1) * per_layer);
    values.assign(first, first + static_cast<std::ptrdiff_t>(per_layer));
  } else {
    throw DataFormatError("raster holds " + std::to_string(all.size()) + " values, expected " +
                          std::to_string(per_layer) + " or " +
                          std::to_string(3 * kLayers * per_layer));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0) || !std::isfinite(values[i])) {
      throw DataFormatError("raster entry " + std::to_string(i) + " is not positive",
                            static_cast<long>(i));
    }
  }
  return Raster{c.ncols, c.nrows, domain, std::move(values)};
}

CoefficientField make_coefficient(const ExperimentConfig& cfg, const Mesh& fine) {
  const CoefficientSpec& c = cfg.coefficient;
  switch (c.kind) {
    case CoefficientSpec::Kind::Constant:
      return CoefficientField::constant(fine, c.value);
    case CoefficientSpec::Kind::Checkerboard:
      return checkerboard(fine, c.block, c.black, c.white, cfg.domain);
    case CoefficientSpec::Kind::Raster:
      return sample_raster(load_layer(c, cfg.domain), fine);
  }
  throw InternalError("unknown coefficient kind");
}

Vector make_load(const ExperimentConfig& cfg, const Mesh& fine, const PressureSpace& q) {
  const Rect& dom = cfg.domain;
  switch (cfg.source.kind) {
    case SourceSpec::Kind::Cosine:
      return assemble_load(q, [](Point p) {
        constexpr double pi = std::numbers::pi;
        return 2 * pi * pi * std::cos(pi * p.x) * std::cos(pi * p.y);
      });
    case SourceSpec::Kind::Checker: {
      // Exact cell integrals; the pattern is constant on cells inside a square.
      const double b = cfg.source.block;
      Vector f(fine.num_triangles());
      for (int t = 0; t < fine.num_triangles(); ++t) {
        const Point c = fine.centroid(t);
        const auto i = static_cast<long>(std::floor((c.x - dom.x0) / b));
        const auto j = static_cast<long>(std::floor((c.y - dom.y0) / b));
        f[t] = ((i + j) % 2 == 0 ? 1.0 : -1.0) * fine.area(t);
      }
      return f;
    }
    case SourceSpec::Kind::Wells: {
      const double dx = dom.width() / cfg.fine_cells[0];
      const double dy = dom.height() / cfg.fine_cells[1];
      Vector f = Vector::Zero(fine.num_triangles());
      for (int t = 0; t < fine.num_triangles(); ++t) {
        const Point c = fine.centroid(t);
        if (c.x < dom.x0 + dx && c.y < dom.y0 + dy) f[t] = fine.area(t);
        if (c.x > dom.x1 - dx && c.y > dom.y1 - dy) f[t] = -fine.area(t);
      }
      return f;
    }
  }
  throw InternalError("unknown source kind");
}

FieldDump field_of(const std::string& label, const RTSpace& space, const Vector& u) {
  const Mesh& m = space.mesh();
  FieldDump f;
  f.label = label;
  f.centroids.reserve(static_cast<std::size_t>(m.num_triangles()));
  f.magnitude.reserve(static_cast<std::size_t>(m.num_triangles()));
  const std::span<const double> dofs(u.data(), static_cast<std::size_t>(u.size()));
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Point c = m.centroid(t);
    const Point v = rt0::evaluate_in(space, dofs, t, c);
    f.centroids.push_back(c);
    f.magnitude.push_back(std::hypot(v.x, v.y));
  }
  return f;
}

struct Reference {
  MeshPtr fine;
  CoefficientField coeff;
  Vector load;
  ReferenceSolution solution;
  double seconds = 0.0;
};

Reference make_reference(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  Reference r;
  r.fine = structured(cfg.fine_cells, cfg.domain);
  r.coeff = make_coefficient(cfg, *r.fine);
  const RTSpace v(r.fine);
  const PressureSpace q(r.fine);
  r.load = compatible_load(make_load(cfg, *r.fine, q), r.fine->areas(), cfg.load_tolerance);
  r.solution = solve_reference(v, q, r.coeff, r.load);
  r.seconds = seconds_since(t0);
  return r;
}

DiscretizationPtr make_disc(const ExperimentConfig& cfg, const Reference& ref,
                            std::array<int, 2> coarse) {
  auto c = structured(coarse, cfg.domain);
  return Discretization::build(c, ref.fine, ref.coeff, cfg.threads);
}

int layers_of(const ExperimentConfig& cfg, std::array<int, 2> coarse) {
  return cfg.layers.layers_for(coarse[0]);
}

CaseResult failed_case(const std::string& experiment, const std::string& message) {
  CaseResult c;
  c.ok = false;
  c.message = message;
  c.report.experiment = experiment;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  c.report.err_u_energy = c.report.err_p_l2 = c.report.err_div = nan;
  c.div_distance = nan;
  return c;
}

// Correctors, optional source correction, LOD solve and errors for one case.
CaseResult run_case(const ExperimentConfig& cfg, const Discretization& d, const Reference& ref,
                    int m, MultiscaleSolution* keep = nullptr) {
  CaseResult c;
  c.report.experiment = cfg.name;
  c.report.H = d.coarse_mesh->h_max();
  c.report.h = d.fine_mesh->h_max();
  c.report.m = m;
  const auto t0 = Clock::now();
  const CorrectorSet q = compute_all_correctors(d, m, cfg.threads);
  c.setup_s = seconds_since(t0);
  MultiscaleSolution s;
  if (cfg.source_correction) {
    const int ell = m == kIdealLayers ? kIdealLayers : m + cfg.ell_offset;
    c.report.ell = ell;
    const Vector r = compute_source_correction(d, ell, ref.load, cfg.threads);
    s = assemble_and_solve_lod(d, q, ref.load, &r, ell);
  } else {
    s = assemble_and_solve_lod(d, q, ref.load);
  }
  c.report.runtime_s = seconds_since(t0);
  const ReferenceSolution& u = ref.solution;
  c.report.err_u_energy = relative_energy_error(s.fine_velocity, u.velocity, d.fine_mass);
  c.report.err_p_l2 = relative_pressure_error(d, u.pressure, s.coarse_pressure);
  c.report.err_div = divergence_error(d, ref.load);
  c.div_distance = divergence_distance(d, u.velocity, s.fine_velocity);
  if (keep) *keep = std::move(s);
  return c;
}

// Global fine vectors of the three element correctors of T on `patch`.
std::array<Vector, 3> element_correctors(const Discretization& d, int T, const ElementSet& patch) {
  const PatchSystem sys(d, patch);
  const DenseMatrix x = sys.solve(element_corrector_rhs(d, sys, T));
  std::array<Vector, 3> out;
  for (int i = 0; i < 3; ++i) {
    out[i] = Vector::Zero(d.fine.num_dofs());
    for (std::size_t a = 0; a < sys.dofs().size(); ++a) {
      out[i][sys.dofs()[a]] = x(static_cast<Eigen::Index>(a), i);
    }
  }
  return out;
}

int central_element(const Mesh& m, const Rect& dom) {
  const Point c{0.5 * (dom.x0 + dom.x1), 0.5 * (dom.y0 + dom.y1)};
  int best = 0;
  double dist = std::numeric_limits<double>::infinity();
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Point p = m.centroid(t) - c;
    const double r = dot(p, p);
    if (r < dist) {
      dist = r;
      best = t;
    }
  }
  return best;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12e", v);
  return buf;
}

}  // namespace

int LayerRule::layers_for(int cells) const {
  switch (kind) {
    case Kind::Fixed:
      return value;
    case Kind::Ideal:
      return kIdealLayers;
    case Kind::Proportional:
      break;
  }
  const long m = std::lround(constant * std::log2(static_cast<double>(cells))) + offset;
  return static_cast<int>(std::max(1L, m));
}

std::string LayerRule::describe() const {
  switch (kind) {
    case Kind::Fixed:
      return "fixed m = " + std::to_string(value);
    case Kind::Ideal:
      return "ideal (whole domain)";
    case Kind::Proportional:
      break;
  }
  std::ostringstream s;
  s << "m = round(" << constant << " * log2(1/H_side)) + " << offset;
  return s.str();
}

ExperimentKind parse_kind(const std::string& name) {
  if (name == "convergence") return ExperimentKind::Convergence;
  if (name == "spe10") return ExperimentKind::Spe10;
  if (name == "decay") return ExperimentKind::Decay;
  if (name == "single") return ExperimentKind::Single;
  throw InvalidArgument("unknown experiment '" + name + "' (convergence, spe10, decay, single)");
}

const char* kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Convergence:
      return "convergence";
    case ExperimentKind::Spe10:
      return "spe10";
    case ExperimentKind::Decay:
      return "decay";
    case ExperimentKind::Single:
      return "single";
  }
  return "unknown";
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
  check_keys(j, "",
             {"experiment", "name", "domain", "coarse_levels", "coarse_cells", "fine_level",
              "fine_cells", "layers", "layer_list", "source_correction", "ell_offset",
              "coefficient", "source", "decay_elements", "write_fields", "tolerances", "threads",
              "output"});
  ExperimentConfig c;
  c.raw = j;
  c.kind = parse_kind(get<std::string>(j, "experiment", "convergence"));
  c.name = get<std::string>(j, "name", kind_name(c.kind));

  // Experiment-specific defaults, then overrides.
  if (c.kind == ExperimentKind::Spe10) {
    c.domain = {0.0, 0.0, 1.2, 2.2};
    c.coarse_cells = {{6, 22}};
    c.fine_cells = {60, 220};
    c.layer_list = {2, 3, 4};
    c.source_correction = true;
    c.coefficient.kind = CoefficientSpec::Kind::Raster;
    c.source.kind = SourceSpec::Kind::Wells;
  } else if (c.kind == ExperimentKind::Decay) {
    c.coarse_cells = {{16, 16}};
    c.fine_cells = {64, 64};
    c.layer_list = {1, 2, 3, 4, 5};
  } else {
    c.coarse_cells = {{4, 4}, {8, 8}, {16, 16}, {32, 32}};
  }

  if (j.contains("domain")) {
    const auto& d = j.at("domain");
    if (!d.is_array() || d.size() != 4) bad("domain", "must be [x0, y0, x1, y1]");
    try {
      c.domain = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>(), d[3].get<double>()};
    } catch (const json::exception&) {
      bad("domain", "must hold numbers");
    }
    if (c.domain.degenerate()) bad("domain", "is degenerate");
  }
  if (j.contains("coarse_levels") && j.contains("coarse_cells")) {
    bad("coarse_levels", "conflicts with coarse_cells");
  }
  if (j.contains("coarse_levels")) {
    c.coarse_cells.clear();
    for (int l : get<std::vector<int>>(j, "coarse_levels", {})) {
      if (l < 0 || l > 12) bad("coarse_levels", "entries must be in 0..12");
      c.coarse_cells.push_back({1 << l, 1 << l});
    }
  }
  if (j.contains("coarse_cells")) {
    const auto& v = j.at("coarse_cells");
    if (!v.is_array()) bad("coarse_cells", "must be a list");
    c.coarse_cells.clear();
    for (const auto& e : v) c.coarse_cells.push_back(cell_pair(e, "coarse_cells"));
  }
  if (j.contains("fine_level") && j.contains("fine_cells")) {
    bad("fine_level", "conflicts with fine_cells");
  }
  if (j.contains("fine_level")) {
    const int l = get<int>(j, "fine_level", 7);
    if (l < 0 || l > 12) bad("fine_level", "must be in 0..12");
    c.fine_cells = {1 << l, 1 << l};
  }
  if (j.contains("fine_cells")) c.fine_cells = cell_pair(j.at("fine_cells"), "fine_cells");
  if (c.coarse_cells.empty()) bad("coarse_cells", "must not be empty");
  for (const auto& cc : c.coarse_cells) {
    if (cc[0] < 1 || cc[1] < 1) bad("coarse_cells", "entries must be positive");
    if (c.fine_cells[0] % cc[0] != 0 || c.fine_cells[1] % cc[1] != 0) {
      bad("coarse_cells", "every coarse mesh must divide the fine mesh");
    }
  }

  if (j.contains("layers")) c.layers = parse_layers(j.at("layers"));
  if (j.contains("layer_list")) {
    c.layer_list = get<std::vector<int>>(j, "layer_list", {});
    for (int m : c.layer_list) {
      if (m < 1) bad("layer_list", "entries must be at least 1");
    }
  }
  if (j.contains("source_correction")) c.source_correction = get<bool>(j, "source_correction", false);
  c.ell_offset = get<int>(j, "ell_offset", c.ell_offset);
  if (c.ell_offset < 0) bad("ell_offset", "must be nonnegative");
  if (j.contains("coefficient")) {
    c.coefficient = parse_coefficient(j.at("coefficient"), c.coefficient.kind);
  }
  // Checkerboard squares default to twice the fine cell width.
  if (c.coefficient.kind == CoefficientSpec::Kind::Checkerboard &&
      !(j.contains("coefficient") && j.at("coefficient").contains("block"))) {
    c.coefficient.block = 2.0 * c.domain.width() / c.fine_cells[0];
  }
  if (j.contains("source")) c.source = parse_source(j.at("source"));
  c.decay_elements = get<std::vector<int>>(j, "decay_elements", {});
  c.write_fields = get<bool>(j, "write_fields", c.kind == ExperimentKind::Spe10 ||
                                                    c.kind == ExperimentKind::Single);
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    check_keys(t, "tolerances", {"load_balance"});
    c.load_tolerance = get<double>(t, "load_balance", c.load_tolerance);
    if (!(c.load_tolerance > 0)) bad("tolerances.load_balance", "must be positive");
  }
  c.threads = get<int>(j, "threads", 1);
  if (c.threads < 0) bad("threads", "must be nonnegative");
  c.out_dir = get<std::string>(j, "output", "out");
  if (c.kind == ExperimentKind::Spe10 && c.coefficient.kind == CoefficientSpec::Kind::Raster &&
      c.coefficient.path.empty()) {
    bad("coefficient.path", "is required for spe10");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = from_json(j);
  // Relative raster paths are resolved against the config file.
  if (c.coefficient.kind == CoefficientSpec::Kind::Raster && c.coefficient.path.is_relative() &&
      !std::filesystem::exists(c.coefficient.path)) {
    c.coefficient.path = path.parent_path() / c.coefficient.path;
  }
  return c;
}

std::string config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunResult run_convergence(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunResult out;
  out.experiment = cfg.name;
  const Reference ref = make_reference(cfg);
  out.reference_s = ref.seconds;
  out.notes["reference_relative_residual"] = ref.solution.relative_residual;
  for (const auto& cells : cfg.coarse_cells) {
    const int m = cfg.layer_list.empty() ? layers_of(cfg, cells) : cfg.layer_list.front();
    try {
      const auto d = make_disc(cfg, ref, cells);
      out.cases.push_back(run_case(cfg, *d, ref, m));
    } catch (const std::exception& e) {
      CaseResult c = failed_case(cfg.name, e.what());
      c.report.H = structured(cells, cfg.domain)->h_max();
      c.report.h = ref.fine->h_max();
      c.report.m = m;
      out.cases.push_back(std::move(c));
    }
  }
  out.total_s = seconds_since(t0);
  return out;
}

RunResult run_spe10(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunResult out;
  out.experiment = cfg.name;
  const Reference ref = make_reference(cfg);
  out.reference_s = ref.seconds;
  out.notes["reference_relative_residual"] = ref.solution.relative_residual;
  out.notes["load_sum"] = ref.load.sum();
  const auto d = make_disc(cfg, ref, cfg.coarse_cells.front());
  if (cfg.write_fields) out.fields.push_back(field_of("reference", d->fine, ref.solution.velocity));
  const std::vector<int> ms = cfg.layer_list.empty() ? std::vector<int>{2, 3, 4} : cfg.layer_list;
  for (int m : ms) {
    try {
      MultiscaleSolution s;
      out.cases.push_back(run_case(cfg, *d, ref, m, &s));
      if (cfg.write_fields) out.fields.push_back(field_of("m" + std::to_string(m), d->fine, s.fine_velocity));
    } catch (const std::exception& e) {
      CaseResult c = failed_case(cfg.name, e.what());
      c.report.H = d->coarse_mesh->h_max();
      c.report.h = d->fine_mesh->h_max();
      c.report.m = m;
      if (cfg.source_correction) c.report.ell = m + cfg.ell_offset;
      out.cases.push_back(std::move(c));
    }
  }
  out.total_s = seconds_since(t0);
  return out;
}

RunResult run_decay(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunResult out;
  out.experiment = cfg.name;
  auto fine = structured(cfg.fine_cells, cfg.domain);
  const auto d = Discretization::build(structured(cfg.coarse_cells.front(), cfg.domain), fine,
                                       make_coefficient(cfg, *fine), cfg.threads);
  std::vector<int> elements = cfg.decay_elements;
  if (elements.empty()) elements.push_back(central_element(*d->coarse_mesh, cfg.domain));
  const std::vector<int> ms =
      cfg.layer_list.empty() ? std::vector<int>{1, 2, 3, 4, 5} : cfg.layer_list;
  const ElementSet whole = corrector_patch(*d, 0, kIdealLayers);
  const PatchSystem ideal_sys(*d, whole);
  for (int T : elements) {
    if (T < 0 || T >= d->coarse_mesh->num_triangles()) {
      throw InvalidArgument("decay element " + std::to_string(T) + " is out of range");
    }
    const DenseMatrix x = ideal_sys.solve(element_corrector_rhs(*d, ideal_sys, T));
    std::array<Vector, 3> ideal;
    double norm2 = 0.0;
    std::vector<double> tail2(ms.size(), 0.0);
    for (int i = 0; i < 3; ++i) {
      ideal[i] = Vector::Zero(d->fine.num_dofs());
      for (std::size_t a = 0; a < ideal_sys.dofs().size(); ++a) {
        ideal[i][ideal_sys.dofs()[a]] = x(static_cast<Eigen::Index>(a), i);
      }
      norm2 += ideal[i].dot(d->fine_mass * ideal[i]);
      const auto tails = corrector_tail(*d, ideal[i], T, ms);
      for (std::size_t k = 0; k < ms.size(); ++k) tail2[k] += tails[k] * tails[k];
    }
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const auto local = element_correctors(*d, T, corrector_patch(*d, T, ms[k]));
      double e2 = 0.0;
      for (int i = 0; i < 3; ++i) {
        const Vector diff = ideal[i] - local[i];
        e2 += diff.dot(d->fine_mass * diff);
      }
      out.decay.push_back({T, ms[k], std::sqrt(tail2[k]), std::sqrt(std::max(e2, 0.0)),
                           std::sqrt(norm2)});
    }
  }
  out.total_s = seconds_since(t0);
  return out;
}

RunResult run_single(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunResult out;
  out.experiment = cfg.name;
  const Reference ref = make_reference(cfg);
  out.reference_s = ref.seconds;
  const auto cells = cfg.coarse_cells.front();
  const int m = cfg.layer_list.empty() ? layers_of(cfg, cells) : cfg.layer_list.front();
  const auto d = make_disc(cfg, ref, cells);
  MultiscaleSolution s;
  try {
    out.cases.push_back(run_case(cfg, *d, ref, m, &s));
  } catch (const std::exception& e) {
    CaseResult c = failed_case(cfg.name, e.what());
    c.report.H = d->coarse_mesh->h_max();
    c.report.h = d->fine_mesh->h_max();
    c.report.m = m;
    out.cases.push_back(std::move(c));
  }
  if (cfg.write_fields) {
    out.fields.push_back(field_of("reference", d->fine, ref.solution.velocity));
    if (out.cases.back().ok) out.fields.push_back(field_of("lod", d->fine, s.fine_velocity));
  }
  out.total_s = seconds_since(t0);
  return out;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::Convergence:
      return run_convergence(cfg);
    case ExperimentKind::Spe10:
      return run_spe10(cfg);
    case ExperimentKind::Decay:
      return run_decay(cfg);
    case ExperimentKind::Single:
      return run_single(cfg);
  }
  throw InternalError("unknown experiment kind");
}

void write_results_csv(const RunResult& result, std::ostream& out) {
  out << results_header() << '\n';
  for (const auto& c : result.cases) out << format_row(c.report) << '\n';
}

void write_decay_csv(const std::vector<DecayRow>& rows, std::ostream& out) {
  out << "element,m,tail,loc_error,norm\n";
  for (const auto& r : rows) {
    out << r.element << ',' << r.m << ',' << format_double(r.tail) << ','
        << format_double(r.loc_error) << ',' << format_double(r.norm) << '\n';
  }
}

void write_field_csv(const FieldDump& field, std::ostream& out) {
  out << "x,y,magnitude\n";
  for (std::size_t i = 0; i < field.magnitude.size(); ++i) {
    out << format_double(field.centroids[i].x) << ',' << format_double(field.centroids[i].y)
        << ',' << format_double(field.magnitude[i]) << '\n';
  }
}

std::vector<std::filesystem::path> write_outputs(const ExperimentConfig& cfg,
                                                 const RunResult& result,
                                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::string& name) {
    const auto path = dir / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + path.string());
    written.push_back(path);
    return f;
  };
  if (cfg.kind == ExperimentKind::Decay) {
    auto f = open("decay_" + cfg.name + ".csv");
    write_decay_csv(result.decay, f);
  } else {
    auto f = open("results.csv");
    write_results_csv(result, f);
  }
  for (const auto& field : result.fields) {
    auto f = open("field_" + field.label + ".csv");
    write_field_csv(field, f);
  }

  json cases = json::array();
  for (const auto& c : result.cases) {
    cases.push_back({{"H", c.report.H},
                     {"h", c.report.h},
                     {"m", c.report.m},
                     {"ell", c.report.ell},
                     {"ok", c.ok},
                     {"message", c.message},
                     {"corrector_s", c.setup_s},
                     {"runtime_s", c.report.runtime_s},
                     {"div_distance", c.ok ? json(c.div_distance) : json()}});
  }
  json outputs = json::array();
  for (const auto& p : written) outputs.push_back(p.filename().string());
  outputs.push_back("manifest.json");
  const json manifest = {
      {"tool", "rtlod"},
      {"experiment", kind_name(cfg.kind)},
      {"name", cfg.name},
      {"config_hash", config_hash(cfg.raw)},
      {"config", cfg.raw},
      {"layer_rule", cfg.layer_list.empty() ? cfg.layers.describe() : "explicit list"},
      {"source_correction", cfg.source_correction
                                ? json("ell = m + " + std::to_string(cfg.ell_offset))
                                : json(false)},
      {"solver_backend", SparseLU::backend()},
      {"threads", cfg.threads},
      {"cases", cases},
      {"notes", result.notes},
      {"wall_time_s", {{"reference", result.reference_s}, {"total", result.total_s}}},
      {"outputs", outputs}};
  {
    auto f = open("manifest.json");
    f << manifest.dump(2) << '\n';
  }
  return written;
}

LinearFit fit_decay(const std::vector<int>& ms, const std::vector<double>& values) {
  if (ms.size() != values.size()) throw InvalidArgument("decay fit: size mismatch");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (!(values[i] > 0)) throw InvalidArgument("decay fit: values must be positive");
    x.push_back(ms[i]);
    y.push_back(std::log(values[i]));
  }
  return fit_line(x, y);
}

}  // namespace rtlod
