#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rtlod/coeff.hpp"
#include "rtlod/corrector.hpp"
#include "rtlod/errors.hpp"
#include "rtlod/experiments.hpp"
#include "rtlod/lod.hpp"
#include "rtlod/mesh.hpp"
#include "rtlod/metrics.hpp"

namespace py = pybind11;
using namespace rtlod;

namespace {

Eigen::MatrixXd vertex_array(const Mesh& m) {
  Eigen::MatrixXd out(m.num_vertices(), 2);
  for (int v = 0; v < m.num_vertices(); ++v) out.row(v) << m.vertex(v).x, m.vertex(v).y;
  return out;
}

Eigen::MatrixXi triangle_array(const Mesh& m) {
  Eigen::MatrixXi out(m.num_triangles(), 3);
  for (int t = 0; t < m.num_triangles(); ++t)
    out.row(t) << m.triangle(t)[0], m.triangle(t)[1], m.triangle(t)[2];
  return out;
}

py::dict case_dict(const CaseResult& c) {
  py::dict d;
  const auto& r = c.report;
  d["experiment"] = r.experiment;
  d["H"] = r.H;
  d["h"] = r.h;
  d["m"] = r.m;
  d["ell"] = r.ell;
  d["err_u_energy"] = r.err_u_energy;
  d["err_p_l2"] = r.err_p_l2;
  d["err_div"] = r.err_div;
  d["div_distance"] = c.div_distance;
  d["runtime_s"] = r.runtime_s;
  d["ok"] = c.ok;
  d["message"] = c.message;
  return d;
}

}  // namespace

PYBIND11_MODULE(_rtlod, m) {
  m.doc() = "Stable localized orthogonal decomposition in Raviart-Thomas spaces";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<DataMissingError>(m, "DataMissingError", PyExc_FileNotFoundError);
  py::register_exception<CompatibilityError>(m, "CompatibilityError", PyExc_ValueError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  py::class_<Mesh, std::shared_ptr<Mesh>>(m, "Mesh")
      .def_property_readonly("num_vertices", &Mesh::num_vertices)
      .def_property_readonly("num_triangles", &Mesh::num_triangles)
      .def_property_readonly("num_edges", &Mesh::num_edges)
      .def_property_readonly("h_max", &Mesh::h_max)
      .def_property_readonly("vertices", &vertex_array)
      .def_property_readonly("triangles", &triangle_array)
      .def_property_readonly("areas", &Mesh::areas);

  m.def(
      "structured_mesh",
      [](int nx, int ny, std::array<double, 4> d) {
        return std::make_shared<Mesh>(build_structured_mesh(nx, ny, {d[0], d[1], d[2], d[3]}));
      },
      py::arg("nx"), py::arg("ny"), py::arg("domain") = std::array<double, 4>{0, 0, 1, 1},
      "nx x ny rectangles, each split along its lower-left to upper-right diagonal.");

  py::class_<CoefficientField>(m, "CoefficientField")
      .def_property_readonly("values", &CoefficientField::values)
      .def_property_readonly("contrast", &CoefficientField::contrast);
  m.def(
      "checkerboard",
      [](const Mesh& mesh, double block, double black, double white) {
        return checkerboard(mesh, block, black, white, {});
      },
      py::arg("mesh"), py::arg("block"), py::arg("black") = 1.0, py::arg("white") = 0.001);
  m.def("constant_coefficient", &CoefficientField::constant, py::arg("mesh"), py::arg("value"));
  m.def(
      "coefficient_from_values",
      [](std::vector<double> v) { return CoefficientField(std::move(v)); }, py::arg("values"));

  py::class_<Discretization, std::shared_ptr<Discretization>>(m, "Discretization")
      .def_property_readonly("num_coarse_dofs", [](const Discretization& d) { return d.coarse.num_dofs(); })
      .def_property_readonly("num_fine_dofs", [](const Discretization& d) { return d.fine.num_dofs(); })
      .def_readonly("pi", &Discretization::pi)
      .def_readonly("prolongation", &Discretization::prolongation)
      .def_readonly("fine_mass", &Discretization::fine_mass)
      .def_readonly("fine_div", &Discretization::fine_div)
      .def_readonly("coarse_div", &Discretization::coarse_div)
      .def_readonly("projection", &Discretization::projection);

  m.def(
      "discretize",
      [](std::shared_ptr<Mesh> coarse, std::shared_ptr<Mesh> fine, CoefficientField coeff,
         int threads) {
        auto d = Discretization::build(coarse, fine, std::move(coeff), threads);
        return std::const_pointer_cast<Discretization>(d);
      },
      py::arg("coarse"), py::arg("fine"), py::arg("coefficient"), py::arg("threads") = 1,
      "Assembles the two-grid system; the fine mesh must nest in the coarse one.");

  m.def(
      "fine_load",
      [](const Discretization& d, const std::function<double(double, double)>& f) {
        return assemble_load(d.fine_pressure, [&](Point p) { return f(p.x, p.y); });
      },
      py::arg("disc"), py::arg("f"), "Cell integrals of f(x, y) on the fine mesh.");

  m.def(
      "solve_reference",
      [](const Discretization& d, const Vector& load) {
        const ReferenceSolution r = solve_reference(d, load);
        return py::make_tuple(r.velocity, r.pressure);
      },
      py::arg("disc"), py::arg("load"), "Fine mixed solution (velocity dofs, cell pressures).");

  py::class_<CorrectorSet>(m, "CorrectorSet")
      .def_readonly("layers", &CorrectorSet::layers)
      .def_property_readonly("num_elements", &CorrectorSet::num_elements)
      .def("apply", &CorrectorSet::apply, py::arg("disc"), py::arg("coarse"));
  m.attr("IDEAL") = kIdealLayers;

  m.def("compute_correctors", &compute_all_correctors, py::arg("disc"), py::arg("layers"),
        py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("source_correction", &compute_source_correction, py::arg("disc"), py::arg("layers"),
        py::arg("load"), py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());

  m.def(
      "solve_lod",
      [](const Discretization& d, const CorrectorSet& q, const Vector& load,
         std::optional<Vector> source, std::optional<int> source_layers) {
        const MultiscaleSolution s =
            assemble_and_solve_lod(d, q, load, source ? &*source : nullptr, source_layers);
        py::dict out;
        out["coarse_coefficients"] = s.coarse_coefficients;
        out["coarse_pressure"] = s.coarse_pressure;
        out["fine_velocity"] = s.fine_velocity;
        out["layers"] = s.layers;
        return out;
      },
      py::arg("disc"), py::arg("correctors"), py::arg("load"), py::arg("source") = py::none(),
      py::arg("source_layers") = py::none());

  m.def("relative_energy_error", &relative_energy_error, py::arg("u"), py::arg("reference"),
        py::arg("mass"));
  m.def("relative_pressure_error", &relative_pressure_error, py::arg("disc"),
        py::arg("fine_pressure"), py::arg("coarse_pressure"));
  m.def("divergence_error", &divergence_error, py::arg("disc"), py::arg("load"));
  m.def("divergence_distance", &divergence_distance, py::arg("disc"), py::arg("u1"),
        py::arg("u2"));
  m.def("eoc", &eoc, py::arg("errors"), py::arg("hs"));
  m.def(
      "fit_order",
      [](const std::vector<double>& e, const std::vector<double>& h) {
        const LinearFit f = fit_order(e, h);
        return py::make_tuple(f.slope, f.r_squared);
      },
      py::arg("errors"), py::arg("hs"), "Least-squares slope of log e against log H and R^2.");

  m.def(
      "run_experiment",
      [](const std::string& config_json, std::optional<std::string> out_dir) {
        const ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        if (out_dir) write_outputs(cfg, r, *out_dir);
        py::list cases;
        for (const auto& c : r.cases) cases.append(case_dict(c));
        py::list decay;
        for (const auto& d : r.decay) {
          py::dict row;
          row["element"] = d.element;
          row["m"] = d.m;
          row["tail"] = d.tail;
          row["loc_error"] = d.loc_error;
          row["norm"] = d.norm;
          decay.append(row);
        }
        py::dict out;
        out["cases"] = cases;
        out["decay"] = decay;
        out["total_s"] = r.total_s;
        return out;
      },
      py::arg("config_json"), py::arg("out_dir") = py::none(),
      "Runs a JSON experiment config; writes CSV and manifest when out_dir is given.");
}
