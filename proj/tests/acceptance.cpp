// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "strnet/control_synthesis.hpp"

using namespace strnet;

namespace {

// Pinned tolerances.
constexpr double kLaplacianRuntime = 1e-3;      // s
constexpr double kFrameTol = 1e-10;             // relative Frobenius
constexpr double kJacobianTol = 1e-6;           // relative, central differences
constexpr double kRoundTripTol = 1e-12;
constexpr double kWaveTol = 1e-3;               // of the amplitude
constexpr double kDriftTol = 1e-3;
constexpr double kOrderMin = 1.9;
constexpr double kReplayTol = 0.05;             // of the amplitude
constexpr double kIfaceTol = 1e-8;
constexpr double kShootingMatch = 1e-10;
constexpr double kShootingResidual = 1e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Vec3> fan(int n, double stretch) {
  std::vector<Vec3> t;
  for (int i = 0; i < n; ++i) {
    double a = 2 * M_PI * i / n;
    t.push_back(stretch * Vec3(std::cos(a), std::sin(a), 0));
  }
  return t;
}

NetworkSpec single_string(double gravity) {
  NetworkSpec spec;
  spec.materials["m"] = MaterialLaw::hookean(1);
  spec.gravity = gravity;
  spec.strings.push_back({1, 1.0, 1.0, "m", 1, 2});
  spec.nodes.push_back({1, NodeKind::ClampedSimple, {}});
  spec.nodes.push_back({2, NodeKind::ClampedSimple, {}});
  return spec;
}

Vec3 random_stretched(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(1.05, 2.0);
  Vec3 d(nd(rng), nd(rng), nd(rng));
  return ud(rng) * d.normalized();
}

// ---------------------------------------------------------------- 1

Outcome laplacians() {
  auto t0 = std::chrono::steady_clock::now();
  Eigen::MatrixXi Ll(4, 4), Lm(4, 4), Lr(4, 4);
  Ll << 3, -1, -1, -1, -1, 3, -1, -1, -1, -1, 3, -1, -1, -1, -1, 3;
  Lm << 2, -1, -1, 0, -1, 2, 0, -1, -1, 0, 1, 0, 0, -1, 0, 1;
  Lr << 1, -1, 0, 0, -1, 1, 0, 0, 0, 0, 1, -1, 0, 0, -1, 1;
  auto gl = complete_spring_graph(4, 1, 1);
  auto gm = spring_graph_from_edges(4, {{0, 1}, {0, 2}, {1, 3}}, 1, 1);
  auto gr = spring_graph_from_edges(4, {{0, 1}, {2, 3}}, 1, 1);
  Eigen::MatrixXd L[3] = {laplacian(gl), laplacian(gm), laplacian(gr)};
  int rank[3] = {laplacian_rank(L[0]), laplacian_rank(L[1]), laplacian_rank(L[2])};
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool exact = L[0].cast<int>() == Ll && L[1].cast<int>() == Lm && L[2].cast<int>() == Lr;
  bool ok = exact && rank[0] == 3 && rank[1] == 3 && rank[2] == 2 && secs < kLaplacianRuntime;
  return {ok, "ranks " + std::to_string(rank[0]) + "," + std::to_string(rank[1]) + "," + std::to_string(rank[2]) +
                  (exact ? ", entries exact" : ", entries differ") + fmt(", %.2e s", secs)};
}

// ---------------------------------------------------------------- 2

Outcome characteristic_structure() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> hd(0.5, 3.0), rd(0.5, 2.0);
  double worst_frame = 0, worst_jac = 0;
  for (int k = 0; k < 1000; ++k) {
    MaterialLaw law = MaterialLaw::hookean(hd(rng));
    double rho = rd(rng);
    Vec3 v = random_stretched(rng);
    Mat3 J = stress_jacobian(law, v);
    auto f = characteristic_frame(law, rho, v, default_skew_axis(v));
    Mat3 rec = f.Q * f.mu.cwiseAbs2().asDiagonal() * f.Q.transpose();
    worst_frame = std::max(worst_frame, (J / rho - rec).norm() / J.norm());
    Mat3 fd;
    double h = 1e-6;
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = h;
      fd.col(c) = (stress(law, v + e) - stress(law, v - e)) / (2 * h);
    }
    worst_jac = std::max(worst_jac, (fd - J).norm() / J.norm());
  }
  return {worst_frame <= kFrameTol && worst_jac <= kJacobianTol,
          fmt("frame %.2e", worst_frame) + fmt(", jacobian vs differences %.2e", worst_jac)};
}

// ---------------------------------------------------------------- 3

Outcome riemann_round_trip() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  MaterialLaw law = MaterialLaw::hookean(1.3);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    Vec3 v = random_stretched(rng);
    auto f = characteristic_frame(law, 1.1, v, default_skew_axis(v));
    Vec3 w1(nd(rng), nd(rng), nd(rng)), w2(nd(rng), nd(rng), nd(rng)), w3(nd(rng), nd(rng), nd(rng));
    auto xi = to_riemann(f, w1, w2, w3);
    auto w = from_riemann(f, xi);
    worst = std::max({worst, (w.w1 - w1).norm(), (w.w2 - w2).norm(), (w.w3 - w3).norm()});
    RiemannState z{Vec3(nd(rng), nd(rng), nd(rng)), Vec3(nd(rng), nd(rng), nd(rng)), Vec3(nd(rng), nd(rng), nd(rng))};
    auto ww = from_riemann(f, z);
    auto back = to_riemann(f, ww.w1, ww.w2, ww.w3);
    worst = std::max({worst, (back.plus - z.plus).norm(), (back.minus - z.minus).norm(), (back.zero - z.zero).norm()});
  }
  return {worst <= kRoundTripTol, fmt("max round-trip error %.2e", worst)};
}

// ---------------------------------------------------------------- 4

Outcome linear_wave() {
  auto spec = single_string(0);
  auto eq = zero_gravity_equilibrium(spec, {Vec3(1.25, 0, 0)}, {Vec3::Zero()});
  const double amp = 1e-6;
  const int N = 400;
  NetworkData data(1);
  data[0].r = Profile::sine(Vec3(amp, amp, 0.5 * amp), 1, 1.0);
  // Speeds along the tangent and across it.
  const double mu[3] = {1.0, std::sqrt(0.2), std::sqrt(0.2)};
  double T = 1 / mu[1];  // one traversal of the slow family
  auto grid = make_time_grid(spec, eq, N, 0.8, 0, T);
  RunOptions ro;
  ro.N = N;
  ro.record_traces = false;
  auto run = simulate_forward(spec, eq, sample_field(spec, N, data), {}, grid, ro);
  double t = grid.t_end(), err = 0;
  for (int j = 0; j <= N; ++j) {
    double x = double(j) / N;
    Vec3 a = data[0].r(x);
    for (int c = 0; c < 3; ++c) {
      // d'Alembert for a standing sine: (f(x - mu t) + f(x + mu t)) / 2
      double exact = a[c] * std::cos(M_PI * mu[c] * t);
      err = std::max(err, std::abs(run.final_field[0].r[j][c] - exact));
    }
  }
  return {err <= kWaveTol * amp, fmt("max error %.2e x amplitude", err / amp)};
}

// ---------------------------------------------------------------- 5

struct ClampedStar {
  NetworkSpec spec;
  EquilibriumConfig eq;
  NetworkData data;
  double Tbar = 0;
};

ClampedStar clamped_star() {
  ClampedStar s;
  s.spec = make_star(3, complete_spring_graph(3, 1.0, 1.0), MaterialLaw::hookean(1), 1.0, 1.0);
  for (auto& n : s.spec.nodes)
    if (n.kind == NodeKind::ControlledSimple) n.kind = NodeKind::ClampedSimple;
  auto t = fan(3, 1.25);
  s.eq = zero_gravity_equilibrium(s.spec, t, balanced_anchors(s.spec, t));
  s.data.resize(3);
  s.data[1].r = Profile::bump(Vec3(0, 1e-3, 1e-3), 0.5, 0.3);
  s.Tbar = traveling_times(s.spec, s.eq, default_eps0(s.eq)).Tbar;
  return s;
}

Outcome energy_conservation() {
  auto s = clamped_star();
  double drift[2];
  int Ns[2] = {800, 1600};
  for (int k = 0; k < 2; ++k) {
    auto grid = make_time_grid(s.spec, s.eq, Ns[k], 0.8, default_eps0(s.eq), s.Tbar);
    RunOptions ro;
    ro.N = Ns[k];
    ro.energy_stride = 5;
    ro.record_traces = false;
    auto run = simulate_forward(s.spec, s.eq, sample_field(s.spec, Ns[k], s.data), {}, grid, ro);
    double e0 = run.energy.front(), d = 0;
    for (double e : run.energy) d = std::max(d, std::abs(e - e0) / e0);
    drift[k] = d;
  }
  return {drift[0] <= kDriftTol && drift[1] < drift[0],
          fmt("drift %.2e at N=800", drift[0]) + fmt(", %.2e at N=1600", drift[1])};
}

// ---------------------------------------------------------------- 6

// sin^4 bumps: smooth, and flat to fourth order at both ends of each string.
Outcome self_convergence() {
  auto s = clamped_star();
  s.data[0].r = Profile::sine_power(Vec3(0, 0, 1e-3), 4, 1.0);
  s.data[1].r = Profile::sine_power(Vec3(0, 1e-3, 1e-3), 4, 1.0);
  s.data[2].r = Profile::sine_power(Vec3(1e-3, 0, 0), 4, 1.0);
  const double T = 2.0;
  std::vector<Field> out;
  for (int N : {200, 400, 800}) {
    auto grid = make_time_grid(s.spec, s.eq, N, 0.8, default_eps0(s.eq), T);
    RunOptions ro;
    ro.N = N;
    ro.record_traces = false;
    out.push_back(simulate_forward(s.spec, s.eq, sample_field(s.spec, N, s.data), {}, grid, ro).final_field);
  }
  // Differences on the N = 200 points.
  double d1 = 0, d2 = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= 200; ++j) {
      d1 = std::max(d1, (out[0][i].r[j] - out[1][i].r[2 * j]).norm());
      d2 = std::max(d2, (out[1][i].r[2 * j] - out[2][i].r[4 * j]).norm());
    }
  double order = std::log2(d1 / d2);
  return {order >= kOrderMin, fmt("observed order %.3f", order) + fmt(" (differences %.2e", d1) + fmt(", %.2e)", d2)};
}

// ---------------------------------------------------------------- 7, 8

struct ReplayRow {
  int N;
  double err_r, err_rt, iface;
};

// Synthesis plus replay on N = 200, 400, 800; errors relative to `amp`.
std::vector<ReplayRow> replay_series(const NetworkSpec& spec, const std::vector<Vec3>& tangents, const NetworkData& init,
                                     double amp) {
  auto eq = zero_gravity_equilibrium(spec, tangents, balanced_anchors(spec, tangents));
  int clamped = feasibility(spec).plan.clamped;
  double T = 2.2 * traveling_times(spec, eq, default_eps0(eq), clamped).Tbar;
  NetworkData target(spec.strings.size());
  std::vector<ReplayRow> rows;
  for (int N : {200, 400, 800}) {
    ControlProblem pb;
    pb.spec = &spec;
    pb.eq = &eq;
    pb.initial = init;
    pb.target = target;
    pb.T = T;
    pb.opt.N = N;
    pb.opt.threads = 3;
    auto res = synthesize_local(pb);
    auto rep = verify_controls(spec, eq, init, res.controls, target, T, N, 0.8, res.diag.grid.dt);
    double er = 0, ev = 0;
    for (size_t i = 0; i < rep.terminal_error_r.size(); ++i) {
      er = std::max(er, rep.terminal_error_r[i] / amp);
      ev = std::max(ev, rep.terminal_error_rt[i] / amp);
    }
    rows.push_back({N, er, ev, res.diag.max_interface_residual});
  }
  return rows;
}

bool replay_ok(const std::vector<ReplayRow>& rows, std::string& detail) {
  bool ok = true;
  for (size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    detail += " N=" + std::to_string(r.N) + ":" + fmt(" r %.2e", r.err_r) + fmt(" rt %.2e", r.err_rt) + fmt(" iface %.1e", r.iface);
    ok = ok && r.iface <= kIfaceTol;
    if (k > 0) ok = ok && r.err_r < rows[k - 1].err_r && r.err_rt < rows[k - 1].err_rt;
  }
  ok = ok && rows.back().err_r <= kReplayTol && rows.back().err_rt <= kReplayTol;
  return ok;
}

constexpr double kAmp = 1e-3;
constexpr double kJunctionMass = 0.01;

NetworkData demo_data(int n) {
  const Vec3 pattern[4] = {Vec3(0, 0, 1), Vec3(0, 1, 1), Vec3(1, 0, 1), Vec3(1, 1, 0)};
  NetworkData d(n);
  for (int i = 0; i < n; ++i) d[i].r = Profile::sine_power(kAmp * pattern[i % 4], 4, 1.0);
  return d;
}

Outcome controllability_replay() {
  auto spec = make_star(3, complete_spring_graph(3, 1.0, kJunctionMass), MaterialLaw::hookean(1), 1.0, 1.0);
  std::string detail = "per-string sup errors / amplitude:";
  bool ok = replay_ok(replay_series(spec, fan(3, 1.25), demo_data(3), kAmp), detail);
  return {ok, detail};
}

Outcome damage_suite() {
  std::string detail;
  bool ok = true;
  auto star3 = [](std::vector<std::pair<int, int>> edges) {
    return make_star(3, spring_graph_from_edges(3, edges, 1.0, kJunctionMass), MaterialLaw::hookean(1), 1.0, 1.0);
  };
  const char* names[2] = {"case 1", "case 2"};
  std::vector<std::pair<int, int>> edges[2] = {{{0, 1}, {1, 2}}, {{0, 1}, {0, 2}}};
  for (int c = 0; c < 2; ++c) {
    auto spec = star3(edges[c]);
    auto f = feasibility(spec);
    std::string d = std::string(names[c]) + " [" + (f.feasible ? f.plan.describe(spec) : f.reason) + "]";
    bool good = false;
    try {
      good = f.feasible && replay_ok(replay_series(spec, fan(3, 1.25), demo_data(3), kAmp), d);
    } catch (const Error& e) {
      d += std::string(" ") + e.code() + ": " + e.what();
    }
    detail += "\n    " + d + (good ? " -> pass" : " -> FAIL");
    ok = ok && good;
  }
  {
    auto f = feasibility(star3({{1, 2}}));
    bool good = !f.feasible && f.reason.find("component {1} has no control") != std::string::npos;
    detail += "\n    case 5 -> " + (f.feasible ? std::string("feasible") : "infeasible: " + f.reason) + (good ? " -> pass" : " -> FAIL");
    ok = ok && good;
  }
  {
    // The spring graph leaves string 3's mass attached to string 3 only, so its
    // balance demands zero stress: no stretched equilibrium exists.
    auto spec = star3({{0, 1}});
    auto f = feasibility(spec);
    std::string d = "case 6 [" + (f.feasible ? f.plan.describe(spec) : f.reason) + "]";
    bool good = false;
    try {
      std::vector<Vec3> t = {Vec3(1.25, 0, 0), Vec3(-1.25, 0, 0), Vec3(0, 1.25, 0)};
      good = f.feasible && replay_ok(replay_series(spec, t, demo_data(3), kAmp), d);
    } catch (const Error& e) {
      d += std::string(" ") + e.code() + ": " + e.what();
    }
    detail += "\n    " + d + (good ? " -> pass" : " -> FAIL");
    ok = ok && good;
  }
  {
    // Component split that does admit a stretched equilibrium (informational).
    auto spec = make_star(4, spring_graph_from_edges(4, {{0, 1}, {2, 3}}, 1.0, kJunctionMass), MaterialLaw::hookean(1), 1.0, 1.0);
    std::vector<Vec3> t = {Vec3(1.25, 0, 0), Vec3(-1.25, 0, 0), Vec3(0, 1.25, 0), Vec3(0, -1.25, 0)};
    std::string d = "4-string split (info) [" + feasibility(spec).plan.describe(spec) + "]";
    try {
      bool good = replay_ok(replay_series(spec, t, demo_data(4), kAmp), d);
      d += good ? " -> pass" : " -> fail";
    } catch (const Error& e) {
      d += std::string(" ") + e.code() + ": " + e.what();
    }
    detail += "\n    " + d;
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 9

Outcome horizon_guard() {
  auto spec = make_star(3, complete_spring_graph(3, 1.0, kJunctionMass), MaterialLaw::hookean(1), 1.0, 1.0);
  spec.strings[0].length = 1.5;  // the clamped string is the slowest, so T* - T_i > 0
  auto t = fan(3, 1.25);
  auto eq = zero_gravity_equilibrium(spec, t, balanced_anchors(spec, t));
  auto tt = traveling_times(spec, eq, default_eps0(eq), 0);
  bool gap = true;
  for (size_t i = 1; i < tt.T.size(); ++i) gap = gap && tt.Tstar - tt.T[i] > 0;
  ControlProblem pb;
  pb.spec = &spec;
  pb.eq = &eq;
  pb.initial = NetworkData(3);
  pb.target = NetworkData(3);
  pb.opt.N = 40;
  std::string detail;
  bool refused = false;
  pb.T = 1.9 * tt.Tbar;
  auto t0 = std::chrono::steady_clock::now();
  try {
    synthesize_local(pb);
  } catch (const Error& e) {
    refused = e.kind() == ErrorKind::Horizon;
    detail = std::string("1.9 Tbar: ") + e.code();
  }
  double refuse_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool proceeds = false;
  pb.T = 2.05 * tt.Tbar;
  try {
    auto res = synthesize_local(pb);
    proceeds = res.diag.grid.steps > 0;
    detail += ", 2.05 Tbar: proceeds";
  } catch (const Error& e) {
    detail += std::string(", 2.05 Tbar: ") + e.code() + " " + e.what();
  }
  detail += fmt(", T* - max T_i = %.3f", tt.Tstar - *std::max_element(tt.T.begin() + 1, tt.T.end()));
  detail += fmt(", refusal after %.1e s", refuse_secs);
  return {refused && proceeds && gap && refuse_secs < 0.1, detail};
}

// ---------------------------------------------------------------- 10

Outcome equilibrium_checks() {
  std::string detail;
  // g = 0: the star's junction position is the shooting unknown.
  auto spec = make_star(3, complete_spring_graph(3, 1.0, 1.0), MaterialLaw::hookean(1), 1.0, 1.0);
  auto t = fan(3, 1.25);
  auto affine = zero_gravity_equilibrium(spec, t, balanced_anchors(spec, t));
  ShootingInput in;
  for (int i = 0; i < 3; ++i) {
    in.start.push_back(affine.strings[i].at(End::Zero) + Vec3(0.01, -0.02, 0.005));
    in.end.push_back(affine.strings[i].at(End::Length));
  }
  auto shot = shooting_equilibrium(spec, in);
  double match = 0;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k <= 50; ++k) {
      double x = k / 50.0;
      match = std::max(match, (shot.strings[i].R(x) - affine.strings[i].R(x)).norm());
    }
  // Weak gravity on a string clamped at both ends.
  auto hang = single_string(1e-3);
  ShootingInput hi{{Vec3::Zero()}, {Vec3(1.25, 0, 0)}, {Vec3(1.25, 0, 0)}};
  auto sag = shooting_equilibrium(hang, hi);
  double resid = equilibrium_residual(hang, sag).interior[0];
  double mid = sag.strings[0].R(0.5).dot(hang.up);
  detail = fmt("g=0 max |R - R_affine| %.2e", match) + fmt(", g>0 interior residual %.2e", resid) +
           fmt(", midpoint height %.3e", mid);
  return {match <= kShootingMatch && resid <= kShootingResidual && mid < 0, detail};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    double budget;  // s
  };
  std::vector<Criterion> all = {
      {"Laplacian reproduction", laplacians, 1},
      {"characteristic structure", characteristic_structure, 1},
      {"Riemann round trip", riemann_round_trip, 1},
      {"linear-wave oracle", linear_wave, 10},
      {"energy conservation", energy_conservation, 120},
      {"self-convergence", self_convergence, 120},
      {"controllability replay", controllability_replay, 300},
      {"damage suite", damage_suite, 600},
      {"horizon guard", horizon_guard, 1},
      {"equilibrium", equilibrium_checks, 10},
  };
  int failed = 0;
  for (size_t k = 0; k < all.size(); ++k) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[k].run();
    } catch (const Error& e) {
      o = {false, std::string(e.code()) + ": " + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > all[k].budget) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", all[k].budget);
    }
    std::printf("criterion %2zu %-26s %s  %.1fs  %s\n", k + 1, all[k].name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed ? 1 : 0;
}
