#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "strnet/equilibrium.hpp"
#include "strnet/network_model.hpp"

namespace strnet {

// A smooth vector profile on [0, L] with its x-derivative.
struct Profile {
  std::function<Vec3(double)> f;
  std::function<Vec3(double)> df;

  Vec3 operator()(double x) const { return f(x); }
  static Profile zero();
  static Profile constant(const Vec3& v);
  // amplitude * exp(-((x - c)/w)^2)
  static Profile gaussian(const Vec3& amplitude, double center, double width);
  // amplitude * exp(1 - 1/(1 - ((x - c)/w)^2)) inside |x - c| < w, zero outside
  static Profile bump(const Vec3& amplitude, double center, double width);
  // amplitude * sin(k pi x / L)
  static Profile sine(const Vec3& amplitude, int k, double length);
  // amplitude * sin(pi x / length)^p, flat to order p at both ends
  static Profile sine_power(const Vec3& amplitude, int p, double length);
  // uniform samples on [0, L], interpolated by quintic Hermite
  static Profile sampled(double length, const std::vector<Vec3>& values);
};

// Perturbation data r, r_t of one string.
struct StringData {
  Profile r = Profile::zero();
  Profile rt = Profile::zero();
};
using NetworkData = std::vector<StringData>;

// Absolute Dirichlet value of a controlled node and its time derivatives.
struct ControlSample {
  Vec3 U = Vec3::Zero(), Ut = Vec3::Zero(), Utt = Vec3::Zero();
};
using ControlFn = std::function<ControlSample(double)>;
using ControlMap = std::map<int, ControlFn>;  // keyed by node id

// First-order state w = (r_x, r_t, r) of one string on its grid.
struct StringState {
  std::vector<Vec3> rx, rt, r;
};
using Field = std::vector<StringState>;

struct TraceRecord {
  int string = 0;
  End end = End::Zero;
  double t0 = 0, dt = 0;
  std::vector<Vec3> r, rt, rx;
  int order = 2;  // declared smoothness of the position channel
  size_t size() const { return r.size(); }
};

struct TimeGrid {
  double t0 = 0;
  double dt = 0;
  int steps = 0;
  double t_end() const { return t0 + steps * dt; }
};

struct TravelTimes {
  std::vector<double> T;       // per string
  std::vector<double> mu_min;  // slowest speed in the eps0 ball
  std::vector<double> mu_max;  // fastest speed in the eps0 ball
  int clamped = 0;
  double Tbar = 0;
  double Tstar = 0;
  double T_min_control = 0;
};

// 0.05 of the equilibrium stretch margin.
double default_eps0(const EquilibriumConfig& eq);

TravelTimes traveling_times(const NetworkSpec& spec, const EquilibriumConfig& eq, double eps0, int clamped = -1);

TimeGrid make_time_grid(const NetworkSpec& spec, const EquilibriumConfig& eq, int N, double cfl, double eps0, double T,
                        double t0 = 0);

Field sample_field(const NetworkSpec& spec, int N, const NetworkData& data);

struct RunOptions {
  int N = 400;
  double cfl = 0.8;
  std::vector<double> snapshot_times;
  int energy_stride = 0;       // 0: no energy history
  bool check_consistency = false;
  bool record_traces = true;
};

struct Snapshot {
  double t = 0;
  Field field;
};

struct SimulationResult {
  TimeGrid grid;
  int N = 0;
  std::vector<TraceRecord> traces;  // both ends of every string
  std::vector<Snapshot> snapshots;
  std::vector<double> energy_t, energy;
  Field final_field;
  double max_consistency = 0;  // max of |D_x r - r_x| / (dx^2 max|r_xx|)
  const TraceRecord* trace(int string, End end) const;
};

// Integrates from `initial` at grid.t0 over grid.steps steps of grid.dt.
SimulationResult simulate_forward(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& initial,
                                  const ControlMap& controls, const TimeGrid& grid, const RunOptions& opt);

// `final` is the state at grid.t_end(); results are indexed in original time.
SimulationResult simulate_backward(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& final,
                                   const ControlMap& controls, const TimeGrid& grid, const RunOptions& opt);

struct SidewiseRequest {
  int string = 0;
  End from = End::Length;  // Cauchy data given at this end
  TimeGrid grid;           // t grid of the Cauchy data
  std::vector<Vec3> r, rt, rx;
  Profile rail0, railT;        // r(x, t0) and r(x, t_end)
  Profile rail0_rt, railT_rt;  // for diagnostics only
  double cfl = 0.8;
  double mu_min = 0;  // lower bound for the string's speeds (0: from data)
  int keep_columns = 0;
};

struct SidewiseResult {
  TraceRecord far;  // trace at the opposite end
  double dx = 0;
  int steps = 0;
  double rail_rt_mismatch0 = 0, rail_rt_mismatchT = 0;
  std::vector<double> column_x;
  std::vector<StringState> columns;  // fields along t at kept x positions
};

SidewiseResult sidewise_solve(const NetworkSpec& spec, const EquilibriumConfig& eq, const SidewiseRequest& req);

struct CompatReport {
  struct Item {
    std::string what;
    double residual;
  };
  std::vector<Item> items;
  double max() const;
};

CompatReport check_compatibility(const NetworkSpec& spec, const EquilibriumConfig& eq, const NetworkData& data,
                                 const ControlMap& controls, double t = 0);

// r_tt at a string end implied by the PDE for the data r (time t = data time).
Vec3 end_acceleration(const NetworkSpec& spec, const EquilibriumConfig& eq, const StringData& data, int string,
                      End end);

double total_energy(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& field);
// total_energy minus its value for the zero field.
double perturbation_energy(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& field);

// Zero controls hold every controlled node at its equilibrium position.
ControlMap hold_controls(const NetworkSpec& spec, const EquilibriumConfig& eq);

}  // namespace strnet
