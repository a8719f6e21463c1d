#pragma once

#include <optional>
#include <string>
#include <vector>

#include "strnet/hyperbolic_solver.hpp"

namespace strnet {

enum class PlanVariant { FullRank, DamagedCase1, DamagedCase2, ComponentSplit };
const char* plan_variant_name(PlanVariant v);

// Strings are indices into NetworkSpec::strings.
struct ComponentPlan {
  std::vector<int> strings;
  int clamped = -1;  // uncontrolled string of the component, if any
  int pivot = -1;    // string whose junction position comes from the clamped row
  std::vector<int> free;  // position traces bridged freely
};

struct TransferPlan {
  PlanVariant variant = PlanVariant::FullRank;
  int clamped = -1;
  std::vector<ComponentPlan> components;
  std::string describe(const NetworkSpec& spec) const;
};

struct Feasibility {
  bool feasible = false;
  TransferPlan plan;
  std::string reason;
  std::vector<int> orphan;  // strings of the offending component when infeasible
};

// Controls at the listed node ids; the other simple nodes are treated as clamped.
Feasibility feasibility(const NetworkSpec& spec, const std::vector<int>& controlled_nodes);
// Controls at every ControlledSimple node.
Feasibility feasibility(const NetworkSpec& spec);

// Sampled Dirichlet signal of one controlled node (absolute positions).
struct ControlSignal {
  int node = 0;
  std::vector<double> t;
  std::vector<Vec3> U, Ut, Utt;
  ControlSample at(double time) const;  // cubic Hermite in (U, Ut)
};

struct ControlSet {
  std::vector<ControlSignal> signals;
  double Tbar = 0, Tstar = 0, dt = 0;
  int N = 0;
  ControlMap as_map() const;
  const ControlSignal* find(int node) const;
};

struct SynthesisOptions {
  int N = 400;
  double cfl = 0.8;
  double eps0 = -1;  // < 0: default_eps0
  double tol_iface = 1e-8;
  double tol_compat = 1e-8;
  double c0 = -1;    // < 0: 1e-3 of the stretch margin (advisory only)
  int threads = 1;
  int order_position = 5;  // bridge order of the clamped-end position trace
  int order_strain = 4;    // bridge order of the clamped-end strain trace
  int order_free = 3;      // bridge order of free junction positions
  int keep_columns = 0;    // coarse sidewise field columns kept per string
};

struct ControlProblem {
  const NetworkSpec* spec = nullptr;
  const EquilibriumConfig* eq = nullptr;
  NetworkData initial, target;
  double T = 0;
  SynthesisOptions opt;
  // Auxiliary boundary data of the forward and backward runs; nodes left
  // out get the compatible quadratic in time (zero for data vanishing there).
  ControlMap aux_forward, aux_backward;
};

struct SynthesisDiagnostics {
  TravelTimes times;
  TimeGrid grid;
  int K_bar = 0, K_star = 0;
  TransferPlan plan;
  double max_interface_residual = 0;
  double trace_match_position = 0;  // junction positions vs forward/backward traces
  double trace_match_strain = 0;
  std::vector<double> rail_rt_mismatch;  // per string
  CompatReport compat_initial, compat_target;
  std::vector<double> smoothness;  // per string: max |4th difference| / median, control channel
  std::vector<std::string> advisories;
};

struct SynthesisResult {
  ControlSet controls;
  SynthesisDiagnostics diag;
  std::vector<SidewiseResult> sidewise;             // per string
  std::vector<std::vector<Vec3>> junction_position;  // per string, on the control grid
  std::vector<std::vector<Vec3>> junction_strain;
};

SynthesisResult synthesize_local(const ControlProblem& problem);

// Bridges the gap between two records sharing dt; channels present in both
// inputs are joined with a degree 2*order+1 Hermite polynomial.
TraceRecord connect_traces(const TraceRecord& left, const TraceRecord& right, int order);

// Samples left[0..kl] and right (ending at index K) joined over the gap.
std::vector<Vec3> hermite_connect(const std::vector<Vec3>& left, const std::vector<Vec3>& right, int K, double dt,
                                  int order);

// Junction positions and strains for the strings of one component.
struct JunctionTraces {
  std::vector<std::vector<Vec3>> position, strain;  // per string (empty if not in component)
};

JunctionTraces junction_transfer(const ComponentPlan& plan, const NetworkSpec& spec, const EquilibriumConfig& eq,
                                 double dt, int K, int K_star, const std::vector<Vec3>& clamped_position,
                                 const std::vector<Vec3>& clamped_strain, const std::vector<const TraceRecord*>& fwd,
                                 const std::vector<const TraceRecord*>& bwd, int free_order = 3);

// Max over time and masses of |m r_tt + eps G(R^e_x + r_x) + kappa (L (R^e + r))|
// with r_tt from the 4th-order second difference of the positions.
double interface_residual(const NetworkSpec& spec, const EquilibriumConfig& eq, double dt,
                          const std::vector<std::vector<Vec3>>& position, const std::vector<std::vector<Vec3>>& strain);

struct VerificationReport {
  std::vector<double> terminal_error_r, terminal_error_rt;  // per string
  std::optional<double> max_interface_residual;             // from synthesis, when known
  double replay_interface_residual = 0;
  double energy_drift = 0;
  std::vector<double> energy_t, energy;
  double max_terminal_error() const;
};

VerificationReport verify_controls(const NetworkSpec& spec, const EquilibriumConfig& eq, const NetworkData& initial,
                                   const ControlSet& controls, const NetworkData& target, double T, int N,
                                   double cfl = 0.8, double dt = 0);

struct Leg {
  const EquilibriumConfig* eq = nullptr;
  NetworkData initial, target;  // perturbations of this leg's equilibrium
  double T = 0;
};

struct GlobalLocalResult {
  ControlSet controls;
  std::vector<SynthesisResult> legs;
  double T = 0;
};

GlobalLocalResult synthesize_global_local(const NetworkSpec& spec, const std::vector<Leg>& legs,
                                          const SynthesisOptions& opt);

}  // namespace strnet
