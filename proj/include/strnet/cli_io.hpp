#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "strnet/control_synthesis.hpp"

namespace strnet::io {

// ---------------------------------------------------------------- material registry

using LawParams = std::map<std::string, double>;
using LawFactory = std::function<MaterialLaw(const LawParams&)>;

// Custom laws are referenced by name from network files. "quartic" is built in:
// V(s) = h (s-1)^2 / 2 + q (s-1)^4 / 4.
void register_law(const std::string& name, LawFactory factory);
bool has_law(const std::string& name);
MaterialLaw make_law(const std::string& name, const LawParams& params);

struct MaterialEntry {
  std::string kind = "hookean";  // "hookean" or "custom"
  std::string law;               // registry name for custom laws
  LawParams params;              // h for hookean
};

// A network together with the material table it was built from.
struct NetworkDoc {
  NetworkSpec spec;
  std::map<std::string, MaterialEntry> materials;
};

NetworkDoc parse_network(const std::string& text, const std::string& origin = "<network>");
NetworkDoc load_network(const std::string& path);
std::string dump_network(const NetworkDoc& doc);
NetworkDoc network_doc(const NetworkSpec& spec);  // hookean materials only

// Empty iff both specs describe the same network; otherwise the first difference.
std::string structural_diff(const NetworkSpec& a, const NetworkSpec& b);

// ---------------------------------------------------------------- scenarios

struct EquilibriumSpec {
  std::string kind = "fan";  // fan | affine | shooting | sampled
  double stretch = 1.25;     // fan: |tangent|, directions evenly spread in the xy-plane
  std::vector<double> angles_deg;
  std::vector<Vec3> tangents, anchors;  // affine; empty anchors: balanced at `center`
  Vec3 center = Vec3::Zero();
  std::vector<Vec3> start, end, tangent_guess;  // shooting
  ShootingOptions shooting;
  std::vector<std::vector<Vec3>> samples;  // sampled, per string
};

EquilibriumConfig build_equilibrium(const NetworkSpec& spec, const EquilibriumSpec& es);

struct Numerics {
  int N = 400;
  double cfl = 0.8;
  double eps0 = -1;
  double tol_iface = 1e-8;
  double tol_compat = 1e-8;
  double tol_eq = 1e-9;
  double c0 = -1;
  double replay_tol = 0.05;  // terminal error bound relative to the data amplitude
  int threads = 1;
  int energy_stride = 0;
};

struct LegSpec {
  EquilibriumSpec equilibrium;
  NetworkData initial, target;
  double T = 0, T_factor = 0;
};

struct Scenario {
  std::string path, dir;
  NetworkDoc network;
  EquilibriumSpec equilibrium;
  NetworkData initial, target;
  double amplitude = 0;  // sup of |r| and |r_t| over initial and target data
  Numerics num;
  std::string task = "simulate";
  double T = 0, T_factor = 0;
  std::vector<int> controlled;  // node ids; empty: every controlled node
  std::vector<double> snapshots;
  std::string controls_file;
  std::vector<LegSpec> legs;  // more than one: global-local synthesis
};

Scenario parse_scenario(const std::string& text, const std::string& path = "<scenario>");
Scenario load_scenario(const std::string& path);

// Horizon of the scenario: T, or T_factor times the traveling time Tbar.
double scenario_horizon(const Scenario& sc, const EquilibriumConfig& eq);

// ---------------------------------------------------------------- output

// 17 significant digits, locale independent; zero prints as "0".
std::string fmt(double v);

void write_traces_csv(std::ostream& os, const NetworkSpec& spec, const std::vector<TraceRecord>& traces);
void write_snapshots_csv(std::ostream& os, const NetworkSpec& spec, const std::vector<Snapshot>& snaps, int N);
void write_energy_csv(std::ostream& os, const std::vector<double>& t, const std::vector<double>& e);
void write_controls_csv(std::ostream& os, const ControlSet& cs);
ControlSet parse_controls_csv(const std::string& text, const std::string& origin = "<controls>");
void write_equilibrium_csv(std::ostream& os, const NetworkSpec& spec, const EquilibriumConfig& eq, int N);

struct ReportInfo {
  double T = 0, Tbar = 0, Tstar = 0;
  int N = 0;
  std::string plan;
  double amplitude = 0;
  double replay_tol = 0;
  std::uint64_t seed = 0;
};
// replay_tol * amplitude plus an absolute 1e-10 for rounding in zero problems.
double replay_bound(double replay_tol, double amplitude);
std::string verification_report(const NetworkSpec& spec, const VerificationReport& rep, const ReportInfo& info);

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct PlotOptions {
  std::string title, xlabel, ylabel;
};

// Fixed 800x500 viewport; axis bounds are the data bounds padded by 5%.
std::string plot_svg(const std::vector<Series>& series, const PlotOptions& opt);

// ---------------------------------------------------------------- commands

struct CommandOptions {
  std::string scenario;
  std::string out_dir = "out";
  bool svg = false;
  int threads = 0;  // 0: from the scenario
  std::uint64_t seed = 0;
};

// Exit status of an error: 2 config, 3 numerical abort, 4 infeasible.
int exit_code(ErrorKind kind);

// Runs analyze | simulate | synthesize | verify | equilibrium. Failures print
// one line "strnet: E_<CODE>: message" to `err`.
int run_command(const std::string& name, const CommandOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace strnet::io
