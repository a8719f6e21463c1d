#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "strnet/cli_io.hpp"

namespace strnet::io {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Compat:
      return 2;
    case ErrorKind::Infeasible:
    case ErrorKind::Horizon:
      return 4;
    default:
      return 3;
  }
}

namespace {

// Failure that is not a library error (e.g. a replay above its bound).
struct CommandFailure {
  std::string code;
  std::string message;
  int status;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

class Outputs {
 public:
  explicit Outputs(const std::string& dir) : dir_(dir) {}

  void write(const std::string& name, const std::string& content) const {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    fs::path p = fs::path(dir_) / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::Config, "cannot write " + p.string());
    out << content;
  }
  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

 private:
  std::string dir_;
};

template <class F>
std::string to_string(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

std::string id_list(const NetworkSpec& spec, const std::vector<int>& strings) {
  std::string s = "{";
  for (size_t i = 0; i < strings.size(); ++i) s += (i ? "," : "") + std::to_string(spec.strings[strings[i]].id);
  return s + "}";
}

double eps0_of(const Scenario& sc, const EquilibriumConfig& eq) { return sc.num.eps0 >= 0 ? sc.num.eps0 : default_eps0(eq); }

Profile shifted(const StringEquilibrium& from, const StringEquilibrium& to, const Profile& p) {
  return {[from, to, p](double x) { return Vec3(to.R(x) - from.R(x) + p.f(x)); },
          [from, to, p](double x) { return Vec3(to.Rx(x) - from.Rx(x) + p.df(x)); }};
}

// Target of a multi-leg run expressed as a perturbation of the first equilibrium.
NetworkData target_in_first_frame(const NetworkSpec& spec, const EquilibriumConfig& first, const EquilibriumConfig& last,
                                  const NetworkData& target) {
  NetworkData out = target;
  for (size_t i = 0; i < spec.strings.size(); ++i) out[i].r = shifted(first.strings[i], last.strings[i], target[i].r);
  return out;
}

Series energy_series(const std::vector<double>& t, const std::vector<double>& e) { return {"energy", t, e}; }

void check_replay(const VerificationReport& rep, const Scenario& sc) {
  double worst = rep.max_terminal_error();
  double bound = replay_bound(sc.num.replay_tol, sc.amplitude);
  if (worst > bound) {
    std::ostringstream os;
    os << "terminal error " << fmt(worst) << " exceeds " << fmt(sc.num.replay_tol) << " x amplitude + 1e-10 = " << fmt(bound);
    throw CommandFailure{"E_REPLAY", os.str(), 3};
  }
}

// ---------------------------------------------------------------- analyze

int cmd_analyze(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  std::ifstream in(opt.scenario, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, opt.scenario + ": cannot open file");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  NetworkSpec spec;
  bool is_network = false;
  try {
    auto j = nlohmann::json::parse(text);
    is_network = j.is_object() && j.contains("strings");
  } catch (const nlohmann::json::exception&) {
    // reported with position by the parsers below
  }
  if (is_network) spec = parse_network(text, opt.scenario).spec;
  else spec = parse_scenario(text, opt.scenario).network.spec;

  out << "network: " << spec.strings.size() << " strings, " << spec.nodes.size() << " nodes, topology "
      << topology_name(spec.topology()) << "\n";
  int last_rank = 0, last_components = 0;
  for (const auto& node : spec.nodes) {
    if (node.kind != NodeKind::Multiple) continue;
    const auto& g = node.graph;
    std::vector<int> strings;
    for (const auto& e : g.incidence) strings.push_back(e.string);
    out << "junction " << node.id << ": strings " << id_list(spec, strings) << ", stiffness " << fmt(g.stiffness) << "\n";
    Eigen::MatrixXd L = laplacian(g);
    out << "  adjacency:\n";
    for (int a = 0; a < g.size(); ++a) {
      out << "   ";
      for (int b = 0; b < g.size(); ++b) out << ' ' << std::setw(2) << g.adjacency(a, b);
      out << "\n";
    }
    out << "  degree:";
    for (int a = 0; a < g.size(); ++a) out << ' ' << static_cast<int>(std::lround(L(a, a)));
    out << "\n  laplacian:\n";
    for (int a = 0; a < g.size(); ++a) {
      out << "   ";
      for (int b = 0; b < g.size(); ++b) out << ' ' << std::setw(2) << static_cast<int>(std::lround(L(a, b)));
      out << "\n";
    }
    auto comps = connected_components(g);
    last_rank = laplacian_rank(L);
    last_components = static_cast<int>(comps.size());
    out << "  rank " << last_rank << ", components " << last_components << ":";
    for (const auto& c : comps) {
      std::vector<int> ss;
      for (int a : c) ss.push_back(g.incidence[a].string);
      std::sort(ss.begin(), ss.end());
      out << ' ' << id_list(spec, ss);
    }
    out << "\n";
  }
  if (spec.star_center() < 0) {
    out << "control synthesis: not available (requires a star network)\n";
    return 0;
  }
  std::vector<int> ctl;
  for (const auto& n : spec.nodes)
    if (n.kind == NodeKind::ControlledSimple) ctl.push_back(n.id);
  out << "controls at nodes {";
  for (size_t i = 0; i < ctl.size(); ++i) out << (i ? "," : "") << ctl[i];
  out << "}\n";
  auto f = feasibility(spec, ctl);
  out << "rank " << last_rank << ", components " << last_components << ", ";
  if (!f.feasible) {
    if (f.orphan.size() == 1) out << "infeasible: component " << id_list(spec, f.orphan) << " unreachable\n";
    else out << "infeasible: " << f.reason << "\n";
    err << "strnet: E_INFEASIBLE: " << one_line(f.reason) << "\n";
    return 4;
  }
  const char* what = f.plan.variant == PlanVariant::FullRank ? "full rank" : plan_variant_name(f.plan.variant);
  out << "feasible (" << what << ")\n";
  out << "plan: " << f.plan.describe(spec) << "\n";
  return 0;
}

// ---------------------------------------------------------------- equilibrium

int cmd_equilibrium(const CommandOptions& opt, std::ostream& out, std::ostream&) {
  Scenario sc = load_scenario(opt.scenario);
  const NetworkSpec& spec = sc.network.spec;
  EquilibriumConfig eq = build_equilibrium(spec, sc.equilibrium);
  auto res = equilibrium_residual(spec, eq);
  out << "equilibrium: " << sc.equilibrium.kind << "\n" << res.describe(spec);
  out << "stretch margin " << fmt(eq.stretch_margin()) << "\n";
  out << "max residual " << fmt(res.max()) << " (tol_eq " << fmt(sc.num.tol_eq) << ")\n";
  Outputs files(opt.out_dir);
  files.write("equilibrium.csv", to_string([&](std::ostream& os) { write_equilibrium_csv(os, spec, eq, sc.num.N); }));
  if (opt.svg) {
    std::vector<Series> ss;
    for (size_t i = 0; i < spec.strings.size(); ++i) {
      Series s{"string " + std::to_string(spec.strings[i].id), {}, {}};
      for (int j = 0; j <= 200; ++j) {
        double x = spec.strings[i].length * j / 200;
        s.x.push_back(x);
        s.y.push_back(eq.strings[i].R(x).dot(spec.up));
      }
      ss.push_back(std::move(s));
    }
    files.write("equilibrium.svg", plot_svg(ss, {"equilibrium height", "x", "R . up"}));
  }
  if (!(res.max() <= sc.num.tol_eq)) {
    throw Error(ErrorKind::Equilibrium, "equilibrium residual " + fmt(res.max()) + " exceeds tol_eq " + fmt(sc.num.tol_eq));
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  Scenario sc = load_scenario(opt.scenario);
  const NetworkSpec& spec = sc.network.spec;
  EquilibriumConfig eq = build_equilibrium(spec, sc.equilibrium);
  double T = scenario_horizon(sc, eq);
  TimeGrid grid = make_time_grid(spec, eq, sc.num.N, sc.num.cfl, eps0_of(sc, eq), T);
  ControlMap controls = hold_controls(spec, eq);
  auto compat = check_compatibility(spec, eq, sc.initial, controls);
  if (compat.max() > sc.num.tol_compat)
    err << "strnet: warning: initial data violate compatibility (residual " << fmt(compat.max()) << ")\n";
  RunOptions ro;
  ro.N = sc.num.N;
  ro.cfl = sc.num.cfl;
  ro.snapshot_times = sc.snapshots;
  ro.energy_stride = sc.num.energy_stride > 0 ? sc.num.energy_stride : std::max(1, grid.steps / 500);
  auto run = simulate_forward(spec, eq, sample_field(spec, sc.num.N, sc.initial), controls, grid, ro);

  double e0 = run.energy.front(), dev = 0;
  for (double e : run.energy) dev = std::max(dev, std::abs(e - e0));
  double drift = e0 > 0 ? dev / e0 : dev;
  out << "simulate: T = " << fmt(T) << ", steps " << grid.steps << ", dt " << fmt(grid.dt) << ", N " << sc.num.N << "\n";
  out << "energy: initial " << fmt(e0) << ", relative drift " << fmt(drift) << "\n";

  Outputs files(opt.out_dir);
  files.write("traces.csv", to_string([&](std::ostream& os) { write_traces_csv(os, spec, run.traces); }));
  files.write("energy.csv", to_string([&](std::ostream& os) { write_energy_csv(os, run.energy_t, run.energy); }));
  if (!run.snapshots.empty())
    files.write("snapshots.csv", to_string([&](std::ostream& os) { write_snapshots_csv(os, spec, run.snapshots, sc.num.N); }));
  if (opt.svg) {
    std::vector<Series> ss;
    for (const auto& tr : run.traces) {
      if (tr.end != End::Zero) continue;
      Series s{"string " + std::to_string(spec.strings[tr.string].id) + ", x = 0", {}, {}};
      for (size_t k = 0; k < tr.size(); ++k) {
        s.x.push_back(tr.t0 + k * tr.dt);
        s.y.push_back(tr.r[k].norm());
      }
      ss.push_back(std::move(s));
    }
    files.write("traces.svg", plot_svg(ss, {"end displacement", "t", "|r(0, t)|"}));
    files.write("energy.svg", plot_svg({energy_series(run.energy_t, run.energy)}, {"perturbation energy", "t", "E"}));
  }
  return 0;
}

// ---------------------------------------------------------------- synthesize / verify

SynthesisOptions synthesis_options(const Scenario& sc, const CommandOptions& opt) {
  SynthesisOptions so;
  so.N = sc.num.N;
  so.cfl = sc.num.cfl;
  so.eps0 = sc.num.eps0;
  so.tol_iface = sc.num.tol_iface;
  so.tol_compat = sc.num.tol_compat;
  so.c0 = sc.num.c0;
  so.threads = opt.threads > 0 ? opt.threads : sc.num.threads;
  return so;
}

void write_control_plots(const Outputs& files, const NetworkSpec& spec, const EquilibriumConfig& eq, const ControlSet& cs,
                         const VerificationReport& rep) {
  std::vector<Series> ss;
  for (const auto& sig : cs.signals) {
    Vec3 rest = Vec3::Zero();
    for (size_t i = 0; i < spec.strings.size(); ++i)
      if (spec.strings[i].node_at_L == sig.node) rest = eq.strings[i].at(End::Length);
    Series s{"node " + std::to_string(sig.node), sig.t, {}};
    for (const auto& u : sig.U) s.y.push_back((u - rest).norm());
    ss.push_back(std::move(s));
  }
  files.write("controls.svg", plot_svg(ss, {"control displacement", "t", "|U - R(L)|"}));
  files.write("energy.svg", plot_svg({energy_series(rep.energy_t, rep.energy)}, {"replay energy", "t", "E"}));
}

int cmd_synthesize(const CommandOptions& opt, std::ostream& out, std::ostream&) {
  Scenario sc = load_scenario(opt.scenario);
  const NetworkSpec& spec = sc.network.spec;
  SynthesisOptions so = synthesis_options(sc, opt);
  Outputs files(opt.out_dir);
  ReportInfo info;
  info.N = sc.num.N;
  info.amplitude = sc.amplitude;
  info.replay_tol = sc.num.replay_tol;
  info.seed = opt.seed;

  ControlSet controls;
  VerificationReport rep;
  EquilibriumConfig eq0;
  if (sc.legs.size() > 1) {
    std::vector<EquilibriumConfig> eqs;
    for (const auto& l : sc.legs) eqs.push_back(build_equilibrium(spec, l.equilibrium));
    std::vector<Leg> legs;
    for (size_t k = 0; k < sc.legs.size(); ++k) {
      Scenario tmp = sc;
      tmp.T = sc.legs[k].T;
      tmp.T_factor = sc.legs[k].T_factor;
      legs.push_back({&eqs[k], sc.legs[k].initial, sc.legs[k].target, scenario_horizon(tmp, eqs[k])});
    }
    auto gl = synthesize_global_local(spec, legs, so);
    controls = gl.controls;
    eq0 = eqs.front();
    NetworkData target = target_in_first_frame(spec, eqs.front(), eqs.back(), sc.legs.back().target);
    rep = verify_controls(spec, eq0, sc.legs.front().initial, controls, target, gl.T, so.N, so.cfl, controls.dt);
    double iface = 0;
    for (const auto& l : gl.legs) iface = std::max(iface, l.diag.max_interface_residual);
    rep.max_interface_residual = iface;
    info.T = gl.T;
    info.Tbar = controls.Tbar;
    info.Tstar = controls.Tstar;
    info.plan = "global-local, " + std::to_string(legs.size()) + " legs";
    out << "synthesize: " << info.plan << ", T = " << fmt(gl.T) << "\n";
  } else {
    eq0 = build_equilibrium(spec, sc.equilibrium);
    ControlProblem pb;
    pb.spec = &spec;
    pb.eq = &eq0;
    pb.initial = sc.initial;
    pb.target = sc.target;
    if (!sc.legs.empty()) {
      sc.T = sc.legs.front().T;
      sc.T_factor = sc.legs.front().T_factor;
    }
    pb.T = scenario_horizon(sc, eq0);
    pb.opt = so;
    auto res = synthesize_local(pb);
    controls = res.controls;
    const auto& d = res.diag;
    rep = verify_controls(spec, eq0, sc.initial, controls, sc.target, pb.T, so.N, so.cfl, d.grid.dt);
    rep.max_interface_residual = d.max_interface_residual;
    info.T = pb.T;
    info.Tbar = d.times.Tbar;
    info.Tstar = d.times.Tstar;
    info.plan = d.plan.describe(spec);
    out << "synthesize: T = " << fmt(pb.T) << ", Tbar = " << fmt(d.times.Tbar) << ", Tstar = " << fmt(d.times.Tstar)
        << ", steps " << d.grid.steps << "\n";
    out << "plan: " << info.plan << "\n";
    for (const auto& a : d.advisories) out << "advisory: " << one_line(a) << "\n";
  }

  std::string report = verification_report(spec, rep, info);
  files.write("controls.csv", to_string([&](std::ostream& os) { write_controls_csv(os, controls); }));
  files.write("report.txt", report);
  if (opt.svg) write_control_plots(files, spec, eq0, controls, rep);
  out << report;
  check_replay(rep, sc);
  return 0;
}

int cmd_verify(const CommandOptions& opt, std::ostream& out, std::ostream&) {
  Scenario sc = load_scenario(opt.scenario);
  const NetworkSpec& spec = sc.network.spec;
  std::string cpath;
  if (!sc.controls_file.empty()) {
    fs::path p(sc.controls_file);
    cpath = p.is_relative() && !sc.dir.empty() ? (fs::path(sc.dir) / p).string() : p.string();
  } else {
    cpath = Outputs(opt.out_dir).path("controls.csv");
  }
  std::ifstream in(cpath, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, cpath + ": cannot open controls file");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ControlSet cs = parse_controls_csv(text, cpath);
  for (const auto& s : cs.signals) {
    int k = spec.node_index(s.node);
    if (k < 0 || spec.nodes[k].kind == NodeKind::Multiple)
      throw Error(ErrorKind::Config, cpath + ": node " + std::to_string(s.node) + " is not a simple node of the network");
  }
  EquilibriumConfig eq = build_equilibrium(spec, sc.equilibrium);
  NetworkData target = sc.target;
  if (sc.legs.size() > 1)
    target = target_in_first_frame(spec, eq, build_equilibrium(spec, sc.legs.back().equilibrium), sc.legs.back().target);
  double T = cs.signals.front().t.back() - cs.signals.front().t.front();
  auto rep = verify_controls(spec, eq, sc.initial, cs, target, T, sc.num.N, sc.num.cfl, cs.dt);
  ReportInfo info;
  info.T = T;
  info.N = sc.num.N;
  info.amplitude = sc.amplitude;
  info.replay_tol = sc.num.replay_tol;
  info.seed = opt.seed;
  if (spec.star_center() >= 0) {
    try {
      auto tt = traveling_times(spec, eq, eps0_of(sc, eq));
      info.Tbar = tt.Tbar;
      info.Tstar = tt.Tstar;
    } catch (const Error&) {
      // traveling times are informational here
    }
  }
  std::string report = verification_report(spec, rep, info);
  Outputs files(opt.out_dir);
  files.write("verify_report.txt", report);
  if (opt.svg) files.write("energy.svg", plot_svg({energy_series(rep.energy_t, rep.energy)}, {"replay energy", "t", "E"}));
  out << report;
  check_replay(rep, sc);
  return 0;
}

}  // namespace

int run_command(const std::string& name, const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    if (opt.scenario.empty()) throw Error(ErrorKind::Config, "--scenario is required");
    if (name == "analyze") return cmd_analyze(opt, out, err);
    if (name == "simulate") return cmd_simulate(opt, out, err);
    if (name == "synthesize") return cmd_synthesize(opt, out, err);
    if (name == "verify") return cmd_verify(opt, out, err);
    if (name == "equilibrium") return cmd_equilibrium(opt, out, err);
    throw Error(ErrorKind::Config, "unknown command '" + name + "'");
  } catch (const Error& e) {
    err << "strnet: " << e.code() << ": " << one_line(e.what()) << "\n";
    return exit_code(e.kind());
  } catch (const CommandFailure& f) {
    err << "strnet: " << f.code << ": " << one_line(f.message) << "\n";
    return f.status;
  } catch (const std::exception& e) {
    err << "strnet: E_INTERNAL: " << one_line(e.what()) << "\n";
    return 3;
  }
}

}  // namespace strnet::io
