#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "strnet/cli_io.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace strnet;

namespace {

SpringGraph graph_of(const Eigen::MatrixXi& adjacency) {
  SpringGraph g;
  g.adjacency = adjacency;
  g.masses.assign(adjacency.rows(), 1.0);
  return g;
}

std::vector<std::vector<int>> one_based(std::vector<std::vector<int>> parts) {
  for (auto& p : parts)
    for (auto& a : p) ++a;
  return parts;
}

py::dict network_summary(const io::NetworkDoc& doc) {
  const auto& spec = doc.spec;
  py::list strings, nodes;
  for (const auto& s : spec.strings)
    strings.append(py::dict("id"_a = s.id, "length"_a = s.length, "density"_a = s.density, "material"_a = s.material,
                            "node_at_0"_a = s.node_at_0, "node_at_L"_a = s.node_at_L));
  for (const auto& n : spec.nodes) {
    const char* kind = n.kind == NodeKind::ClampedSimple ? "clamped" : n.kind == NodeKind::ControlledSimple ? "controlled" : "multiple";
    nodes.append(py::dict("id"_a = n.id, "kind"_a = kind));
  }
  return py::dict("strings"_a = strings, "nodes"_a = nodes, "topology"_a = topology_name(spec.topology()),
                  "gravity"_a = spec.gravity, "problems"_a = validate(spec));
}

py::dict feasibility_of(const io::NetworkDoc& doc, std::optional<std::vector<int>> controlled) {
  Feasibility f = controlled ? feasibility(doc.spec, *controlled) : feasibility(doc.spec);
  py::dict out("feasible"_a = f.feasible, "reason"_a = f.reason);
  if (f.feasible) {
    out["variant"] = plan_variant_name(f.plan.variant);
    out["plan"] = f.plan.describe(doc.spec);
  } else {
    std::vector<int> ids;
    for (int s : f.orphan) ids.push_back(doc.spec.strings[s].id);
    out["orphan"] = ids;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_strnet, m) {
  m.doc() = "Elastic string networks: simulation and boundary control synthesis";

  py::register_exception<Error>(m, "StrnetError", PyExc_RuntimeError);

  m.def("laplacian", [](const Eigen::MatrixXi& adjacency) { return laplacian(graph_of(adjacency)); }, "adjacency"_a);
  m.def("laplacian_rank", [](const Eigen::MatrixXd& L, double tol) { return laplacian_rank(L, tol); }, "L"_a,
        "tol"_a = 1e-9);
  m.def("connected_components",
        [](const Eigen::MatrixXi& adjacency) { return one_based(connected_components(graph_of(adjacency))); },
        "adjacency"_a, "Parts as 1-based local indices.");

  m.def("stress", [](double h, const Vec3& v) { return stress(MaterialLaw::hookean(h), v); }, "h"_a, "v"_a);
  m.def("stress_jacobian", [](double h, const Vec3& v) { return stress_jacobian(MaterialLaw::hookean(h), v); }, "h"_a,
        "v"_a);
  m.def(
      "wave_speeds",
      [](double h, double rho, double s) {
        Speeds sp = wave_speeds(MaterialLaw::hookean(h), rho, s);
        return py::make_tuple(sp.longitudinal, sp.transverse);
      },
      "h"_a, "rho"_a, "stretch"_a, "(longitudinal, transverse) speeds of a hookean string.");

  m.def("load_network", [](const std::string& path) { return network_summary(io::load_network(path)); }, "path"_a);
  m.def(
      "feasibility",
      [](const std::string& path, std::optional<std::vector<int>> controlled) {
        return feasibility_of(io::load_network(path), std::move(controlled));
      },
      "path"_a, "controlled"_a = py::none());
  m.def(
      "traveling_times",
      [](const std::string& scenario) {
        auto sc = io::load_scenario(scenario);
        auto eq = io::build_equilibrium(sc.network.spec, sc.equilibrium);
        double eps0 = sc.num.eps0 >= 0 ? sc.num.eps0 : default_eps0(eq);
        auto tt = traveling_times(sc.network.spec, eq, eps0);
        return py::dict("T"_a = tt.T, "Tbar"_a = tt.Tbar, "Tstar"_a = tt.Tstar, "T_min_control"_a = tt.T_min_control);
      },
      "scenario"_a);

  m.def(
      "run",
      [](const std::string& command, const std::string& scenario, const std::string& out_dir, bool svg, int threads,
         std::uint64_t seed) {
        io::CommandOptions opt{scenario, out_dir, svg, threads, seed};
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = io::run_command(command, opt, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      "command"_a, "scenario"_a, "out_dir"_a = "out", "svg"_a = false, "threads"_a = 0, "seed"_a = 0,
      "Runs a CLI subcommand; returns (exit_code, stdout, stderr).");
}
