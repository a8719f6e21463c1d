#include "strnet/control_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <mutex>
#include <thread>

#include "strnet/numerics.hpp"

namespace strnet {

const char* plan_variant_name(PlanVariant v) {
  switch (v) {
    case PlanVariant::FullRank: return "full-rank";
    case PlanVariant::DamagedCase1: return "damaged-case-1";
    case PlanVariant::DamagedCase2: return "damaged-case-2";
    case PlanVariant::ComponentSplit: return "component-split";
  }
  return "?";
}

namespace {

std::string id_set(const NetworkSpec& spec, const std::vector<int>& strings) {
  std::ostringstream os;
  os << "{";
  for (size_t k = 0; k < strings.size(); ++k) os << (k ? "," : "") << spec.strings[strings[k]].id;
  os << "}";
  return os.str();
}

}  // namespace

std::string TransferPlan::describe(const NetworkSpec& spec) const {
  std::ostringstream os;
  os << plan_variant_name(variant);
  for (const auto& c : components) {
    os << "; component " << id_set(spec, c.strings);
    if (c.clamped >= 0) os << " clamped " << spec.strings[c.clamped].id << " pivot " << spec.strings[c.pivot].id;
    if (!c.free.empty()) os << " free " << id_set(spec, c.free);
  }
  return os.str();
}

Feasibility feasibility(const NetworkSpec& spec, const std::vector<int>& controlled_nodes) {
  Feasibility out;
  int center = spec.star_center();
  if (center < 0) {
    out.reason = "control synthesis requires a star network (topology is " +
                 std::string(topology_name(spec.topology())) + ")";
    return out;
  }
  const auto& g = spec.nodes[center].graph;
  int n = static_cast<int>(spec.strings.size());
  std::set<int> ctl(controlled_nodes.begin(), controlled_nodes.end());
  std::vector<bool> controlled(n);
  for (int i = 0; i < n; ++i) controlled[i] = ctl.count(spec.strings[i].node_at_L) > 0;
  int clamped = -1;
  for (int i = 0; i < n; ++i)
    if (!controlled[i]) {
      clamped = i;
      break;
    }
  out.plan.clamped = clamped;
  Eigen::MatrixXd L = laplacian(g);
  bool connected = laplacian_rank(L) == n - 1;
  for (const auto& comp : connected_components(g)) {
    ComponentPlan cp;
    std::vector<int> unctl;
    for (int a : comp) {
      int s = g.incidence[a].string;
      cp.strings.push_back(s);
      if (!controlled[s]) unctl.push_back(s);
    }
    std::sort(cp.strings.begin(), cp.strings.end());
    std::sort(unctl.begin(), unctl.end());
    if (unctl.size() > 1) {
      out.orphan = cp.strings;
      out.reason = "component " + id_set(spec, cp.strings) + " has more than one uncontrolled string " +
                   id_set(spec, unctl);
      return out;
    }
    if (unctl.size() == 1) {
      if (cp.strings.size() == 1) {
        out.orphan = cp.strings;
        out.reason = "component " + id_set(spec, cp.strings) + " has no control (unreachable)";
        return out;
      }
      cp.clamped = unctl[0];
      int a0 = g.local_index(cp.clamped);
      for (int s : cp.strings)
        if (s != cp.clamped && g.adjacency(a0, g.local_index(s))) {
          cp.pivot = s;
          break;
        }
      for (int s : cp.strings)
        if (s != cp.clamped && s != cp.pivot) cp.free.push_back(s);
    } else {
      cp.free = cp.strings;
    }
    out.plan.components.push_back(cp);
  }
  if (!connected) {
    out.plan.variant = PlanVariant::ComponentSplit;
  } else {
    bool complete = true;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b && !g.adjacency(a, b)) complete = false;
    int deg = clamped >= 0 ? static_cast<int>(L(g.local_index(clamped), g.local_index(clamped))) : n - 1;
    if (complete) out.plan.variant = PlanVariant::FullRank;
    else if (deg < n - 1) out.plan.variant = PlanVariant::DamagedCase1;
    else out.plan.variant = PlanVariant::DamagedCase2;
  }
  out.feasible = true;
  return out;
}

Feasibility feasibility(const NetworkSpec& spec) {
  std::vector<int> ids;
  for (const auto& n : spec.nodes)
    if (n.kind == NodeKind::ControlledSimple) ids.push_back(n.id);
  return feasibility(spec, ids);
}

// ---------------------------------------------------------------- control sets

ControlSample ControlSignal::at(double time) const {
  int n = static_cast<int>(t.size());
  if (n == 0) return {};
  if (time <= t.front()) return {U.front(), Ut.front(), Utt.front()};
  if (time >= t.back()) return {U.back(), Ut.back(), Utt.back()};
  int k = static_cast<int>(std::upper_bound(t.begin(), t.end(), time) - t.begin()) - 1;
  k = std::clamp(k, 0, n - 2);
  double h = t[k + 1] - t[k];
  double s = (time - t[k]) / h;
  if (s <= 1e-12) return {U[k], Ut[k], Utt[k]};
  if (s >= 1 - 1e-12) return {U[k + 1], Ut[k + 1], Utt[k + 1]};
  double s2 = s * s, s3 = s2 * s;
  double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  double d00 = (6 * s2 - 6 * s) / h, d10 = 3 * s2 - 4 * s + 1, d01 = (-6 * s2 + 6 * s) / h, d11 = 3 * s2 - 2 * s;
  ControlSample c;
  c.U = h00 * U[k] + h10 * h * Ut[k] + h01 * U[k + 1] + h11 * h * Ut[k + 1];
  c.Ut = d00 * U[k] + d10 * Ut[k] + d01 * U[k + 1] + d11 * Ut[k + 1];
  c.Utt = (1 - s) * Utt[k] + s * Utt[k + 1];
  return c;
}

ControlMap ControlSet::as_map() const {
  ControlMap m;
  for (const auto& s : signals) {
    const ControlSignal* p = &s;
    m[s.node] = [p](double t) { return p->at(t); };
  }
  return m;
}

const ControlSignal* ControlSet::find(int node) const {
  for (const auto& s : signals)
    if (s.node == node) return &s;
  return nullptr;
}

// ---------------------------------------------------------------- traces

std::vector<Vec3> hermite_connect(const std::vector<Vec3>& left, const std::vector<Vec3>& right, int K, double dt,
                                  int order) {
  int kl = static_cast<int>(left.size()) - 1;
  int kr = K - (static_cast<int>(right.size()) - 1);
  if (kr - kl < order + 1) {
    std::ostringstream os;
    os << "trace gap of " << kr - kl << " samples is shorter than order + 1 = " << order + 1;
    throw Error(ErrorKind::Config, os.str());
  }
  auto dl = one_sided_derivatives(left, kl, dt, order, true);
  auto dr = one_sided_derivatives(right, 0, dt, order, false);
  HermiteBridge br(dl, dr, (kr - kl) * dt);
  std::vector<Vec3> out(K + 1);
  for (int k = 0; k <= kl; ++k) out[k] = left[k];
  for (int k = kl + 1; k < kr; ++k) out[k] = br((k - kl) * dt);
  for (int k = kr; k <= K; ++k) out[k] = right[k - kr];
  return out;
}

TraceRecord connect_traces(const TraceRecord& left, const TraceRecord& right, int order) {
  if (std::abs(left.dt - right.dt) > 1e-12 * left.dt) throw Error(ErrorKind::Config, "traces must share dt");
  double end = right.t0 + (right.size() - 1) * right.dt;
  int K = static_cast<int>(std::llround((end - left.t0) / left.dt));
  TraceRecord out;
  out.string = left.string;
  out.end = left.end;
  out.t0 = left.t0;
  out.dt = left.dt;
  out.order = order;
  if (!left.r.empty() && !right.r.empty()) out.r = hermite_connect(left.r, right.r, K, left.dt, order);
  if (!left.rt.empty() && !right.rt.empty()) out.rt = hermite_connect(left.rt, right.rt, K, left.dt, order);
  if (!left.rx.empty() && !right.rx.empty()) out.rx = hermite_connect(left.rx, right.rx, K, left.dt, order);
  return out;
}

// ---------------------------------------------------------------- junction transfer

namespace {

std::vector<Vec3> head(const std::vector<Vec3>& v, int k) { return {v.begin(), v.begin() + k + 1}; }
std::vector<Vec3> tail(const std::vector<Vec3>& v, int k) { return {v.end() - (k + 1), v.end()}; }

}  // namespace

JunctionTraces junction_transfer(const ComponentPlan& plan, const NetworkSpec& spec, const EquilibriumConfig& eq,
                                 double dt, int K, int K_star, const std::vector<Vec3>& clamped_position,
                                 const std::vector<Vec3>& clamped_strain, const std::vector<const TraceRecord*>& fwd,
                                 const std::vector<const TraceRecord*>& bwd, int free_order) {
  int center = spec.star_center();
  if (center < 0) throw Error(ErrorKind::Config, "junction transfer requires a star network");
  const auto& g = spec.nodes[center].graph;
  Eigen::MatrixXd L = laplacian(g) * g.stiffness;
  int n = static_cast<int>(spec.strings.size());
  JunctionTraces out;
  out.position.assign(n, {});
  out.strain.assign(n, {});
  std::vector<Vec3> Re(n), Rx0(n);
  for (int s = 0; s < n; ++s) {
    Re[s] = eq.strings[s].R(0);
    Rx0[s] = eq.strings[s].Rx(0);
  }
  for (int s : plan.free) {
    if (!fwd[s] || !bwd[s]) throw Error(ErrorKind::Config, "missing junction traces for a free string");
    out.position[s] = hermite_connect(head(fwd[s]->r, K_star), tail(bwd[s]->r, K_star), K, dt, free_order);
  }
  if (plan.clamped >= 0) {
    int c = plan.clamped, p = plan.pivot;
    if (p < 0) throw Error(ErrorKind::Infeasible, "pivot absent: clamped string has no spring neighbour");
    int ac = g.local_index(c), ap = g.local_index(p);
    double eps = orientation(End::Zero);
    if (static_cast<int>(clamped_position.size()) != K + 1 || clamped_strain.size() != clamped_position.size())
      throw Error(ErrorKind::Config, "clamped junction trace has wrong length");
    out.position[c] = clamped_position;
    out.strain[c] = clamped_strain;
    auto Bdd = derivative(clamped_position, dt, 2);
    const auto& law = spec.law(c);
    std::vector<Vec3> piv(K + 1);
    for (int k = 0; k <= K; ++k) {
      Vec3 rhs = g.masses[ac] * Bdd[k] + eps * stress(law, Vec3(Rx0[c] + clamped_strain[k]));
      for (int s : plan.strings) {
        if (s == p) continue;
        rhs += L(ac, g.local_index(s)) * (Re[s] + out.position[s][k]);
      }
      rhs += L(ac, ap) * Re[p];
      piv[k] = -rhs / L(ac, ap);
    }
    out.position[p] = piv;
  }
  // Remaining rows give the strains.
  for (int s : plan.strings) {
    if (s == plan.clamped) continue;
    int a = g.local_index(s);
    auto Bdd = derivative(out.position[s], dt, 2);
    const auto& law = spec.law(s);
    double eps = orientation(End::Zero);
    std::vector<Vec3> strain(K + 1);
    Vec3 guess = Rx0[s];
    for (int k = 0; k <= K; ++k) {
      Vec3 y = g.masses[a] * Bdd[k];
      for (int b : plan.strings) y += L(a, g.local_index(b)) * (Re[b] + out.position[b][k]);
      // eps G(V) = -y
      Vec3 target = -y / eps;
      Vec3 V;
      try {
        V = invert_stress(law, target, guess);
      } catch (const Error& e) {
        std::ostringstream os;
        os << "junction transfer, string " << spec.strings[s].id << " at t = " << k * dt << ": " << e.what();
        throw Error(e.kind(), os.str());
      }
      guess = V;
      strain[k] = V - Rx0[s];
    }
    out.strain[s] = strain;
  }
  return out;
}

double interface_residual(const NetworkSpec& spec, const EquilibriumConfig& eq, double dt,
                          const std::vector<std::vector<Vec3>>& position, const std::vector<std::vector<Vec3>>& strain) {
  int center = spec.star_center();
  if (center < 0) return 0;
  const auto& g = spec.nodes[center].graph;
  Eigen::MatrixXd L = laplacian(g) * g.stiffness;
  double worst = 0;
  for (int a = 0; a < g.size(); ++a) {
    int s = g.incidence[a].string;
    if (position[s].empty()) continue;
    // Only rows whose spring neighbours all carry traces.
    bool ok = true;
    for (int b = 0; b < g.size(); ++b)
      if (L(a, b) != 0 && position[g.incidence[b].string].empty()) ok = false;
    if (!ok) continue;
    auto Bdd = derivative(position[s], dt, 2);
    for (size_t k = 0; k < position[s].size(); ++k) {
      Vec3 r = g.masses[a] * Bdd[k] +
               orientation(End::Zero) * stress(spec.law(s), Vec3(eq.strings[s].Rx(0) + strain[s][k]));
      for (int b = 0; b < g.size(); ++b) {
        int sb = g.incidence[b].string;
        if (L(a, b) != 0) r += L(a, b) * (eq.strings[sb].R(0) + position[sb][k]);
      }
      worst = std::max(worst, r.norm());
    }
  }
  return worst;
}

// ---------------------------------------------------------------- synthesis

namespace {

// Quadratic-in-time control compatible with the data at time t_ref.
ControlMap compatible_controls(const NetworkSpec& spec, const EquilibriumConfig& eq, const NetworkData& data,
                               double t_ref, const ControlMap& overrides) {
  ControlMap m;
  for (size_t i = 0; i < spec.strings.size(); ++i) {
    const auto& node = spec.node_of(static_cast<int>(i), End::Length);
    if (node.kind != NodeKind::ControlledSimple) continue;
    auto it = overrides.find(node.id);
    if (it != overrides.end()) {
      m[node.id] = it->second;
      continue;
    }
    double L = spec.strings[i].length;
    Vec3 U0 = eq.strings[i].R(L) + data[i].r.f(L);
    Vec3 U1 = data[i].rt.f(L);
    Vec3 U2 = end_acceleration(spec, eq, data[i], static_cast<int>(i), End::Length);
    m[node.id] = [=](double t) {
      double s = t - t_ref;
      return ControlSample{U0 + s * U1 + 0.5 * s * s * U2, U1 + s * U2, U2};
    };
  }
  return m;
}

double smoothness_indicator(const std::vector<Vec3>& v) {
  if (v.size() < 8) return 0;
  std::vector<double> d;
  for (size_t k = 0; k + 4 < v.size(); ++k) d.push_back((v[k] - 4 * v[k + 1] + 6 * v[k + 2] - 4 * v[k + 3] + v[k + 4]).norm());
  std::vector<double> s = d;
  std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
  double med = s[s.size() / 2];
  double mx = *std::max_element(d.begin(), d.end());
  return med > 0 ? mx / med : 0;
}

template <class F>
void run_parallel(const std::vector<int>& items, int threads, F f) {
  if (threads <= 1 || items.size() <= 1) {
    for (int it : items) f(it);
    return;
  }
  std::vector<std::exception_ptr> errs(items.size());
  size_t next = 0;
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      size_t k;
      {
        std::lock_guard<std::mutex> lk(mu);
        if (next >= items.size()) return;
        k = next++;
      }
      try {
        f(items[k]);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(threads, items.size()); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace

SynthesisResult synthesize_local(const ControlProblem& pb) {
  const NetworkSpec& spec = *pb.spec;
  const EquilibriumConfig& eq = *pb.eq;
  const auto& opt = pb.opt;
  int n = static_cast<int>(spec.strings.size());
  if (pb.initial.size() != spec.strings.size() || pb.target.size() != spec.strings.size())
    throw Error(ErrorKind::Config, "initial and target data must cover every string");
  Feasibility fz = feasibility(spec);
  if (!fz.feasible) throw Error(ErrorKind::Infeasible, "infeasible: " + fz.reason);
  SynthesisResult res;
  auto& dg = res.diag;
  dg.plan = fz.plan;
  double eps0 = opt.eps0 >= 0 ? opt.eps0 : default_eps0(eq);
  dg.times = traveling_times(spec, eq, eps0, fz.plan.clamped >= 0 ? fz.plan.clamped : 0);
  const auto& tt = dg.times;
  if (!(pb.T > 2 * tt.Tbar)) {
    std::ostringstream os;
    os << "horizon T = " << pb.T << " violates T > 2T̄ = " << 2 * tt.Tbar << " (T̄ = " << tt.Tbar << ")";
    throw Error(ErrorKind::Horizon, os.str());
  }
  for (int i = 0; i < n; ++i) {
    if (i == tt.clamped) continue;
    if (tt.Tstar - tt.T[i] < -1e-12 * tt.Tbar) {
      std::ostringstream os;
      os << "T* - T_i = " << tt.Tstar - tt.T[i] << " < 0 for string " << spec.strings[i].id;
      throw Error(ErrorKind::Horizon, os.str());
    }
  }
  dg.grid = make_time_grid(spec, eq, opt.N, opt.cfl, eps0, pb.T);
  int K = dg.grid.steps;
  double dt = dg.grid.dt;
  int Kbar = static_cast<int>(std::ceil(tt.Tbar / dt - 1e-9));
  int Kstar = static_cast<int>(std::floor(tt.Tstar / dt + 1e-9));
  if (2 * Kbar >= K) throw Error(ErrorKind::Horizon, "horizon too close to 2T̄ for the time grid; refine N");
  dg.K_bar = Kbar;
  dg.K_star = Kstar;

  ControlMap auxf = compatible_controls(spec, eq, pb.initial, 0.0, pb.aux_forward);
  ControlMap auxb = compatible_controls(spec, eq, pb.target, pb.T, pb.aux_backward);
  dg.compat_initial = check_compatibility(spec, eq, pb.initial, auxf, 0.0);
  dg.compat_target = check_compatibility(spec, eq, pb.target, auxb, pb.T);
  for (const auto* rep : {&dg.compat_initial, &dg.compat_target})
    for (const auto& it : rep->items)
      if (it.residual > opt.tol_compat) {
        std::ostringstream os;
        os << (rep == &dg.compat_initial ? "initial" : "target") << " data incompatible at " << it.what
           << ": residual " << it.residual << " > " << opt.tol_compat;
        throw Error(ErrorKind::Compat, os.str());
      }
  double c0 = opt.c0 > 0 ? opt.c0 : 1e-3 * eq.stretch_margin();
  double size = 0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k <= 64; ++k) {
      double x = spec.strings[i].length * k / 64;
      for (const auto* d : {&pb.initial[i], &pb.target[i]})
        size = std::max({size, d->r.f(x).norm(), d->r.df(x).norm(), d->rt.f(x).norm()});
    }
  if (size > c0) {
    std::ostringstream os;
    os << "data size " << size << " exceeds c0 = " << c0 << "; relying on the stretched-regime guard";
    dg.advisories.push_back(os.str());
  }

  RunOptions ro;
  ro.N = opt.N;
  ro.cfl = opt.cfl;
  TimeGrid gf{0.0, dt, Kbar};
  TimeGrid gb{(K - Kbar) * dt, dt, Kbar};
  SimulationResult fwd, bwd;
  fwd = simulate_forward(spec, eq, sample_field(spec, opt.N, pb.initial), auxf, gf, ro);
  bwd = simulate_backward(spec, eq, sample_field(spec, opt.N, pb.target), auxb, gb, ro);

  std::vector<const TraceRecord*> f0(n), b0(n);
  for (int i = 0; i < n; ++i) {
    f0[i] = fwd.trace(i, End::Zero);
    b0[i] = bwd.trace(i, End::Zero);
  }
  res.sidewise.resize(n);
  res.junction_position.assign(n, {});
  res.junction_strain.assign(n, {});
  TimeGrid gs{0.0, dt, K};
  auto rails = [&](SidewiseRequest& rq, int i) {
    rq.grid = gs;
    rq.rail0 = pb.initial[i].r;
    rq.railT = pb.target[i].r;
    rq.rail0_rt = pb.initial[i].rt;
    rq.railT_rt = pb.target[i].rt;
    rq.cfl = opt.cfl;
    rq.mu_min = tt.mu_min[i];
    rq.keep_columns = opt.keep_columns;
  };

  for (const auto& comp : dg.plan.components) {
    std::vector<Vec3> cpos, cstr;
    if (comp.clamped >= 0) {
      int c = comp.clamped;
      const TraceRecord* fl = fwd.trace(c, End::Length);
      const TraceRecord* bl = bwd.trace(c, End::Length);
      SidewiseRequest rq;
      rq.string = c;
      rq.from = End::Length;
      rails(rq, c);
      rq.r = hermite_connect(fl->r, bl->r, K, dt, opt.order_position);
      rq.rx = hermite_connect(fl->rx, bl->rx, K, dt, opt.order_strain);
      rq.rt = derivative(rq.r, dt, 1);
      res.sidewise[c] = sidewise_solve(spec, eq, rq);
      // Forward and backward traces near both ends, the sidewise trace in between.
      const auto& sp = res.sidewise[c].far.r;
      const auto& sx = res.sidewise[c].far.rx;
      const TraceRecord* fz0 = f0[c];
      const TraceRecord* bz0 = b0[c];
      cpos.resize(K + 1);
      cstr.resize(K + 1);
      // The sidewise trace at x = 0 is fixed by forward data only on [0, T*].
      int k1 = Kstar / 2;
      for (int k = 0; k <= K; ++k) {
        double wf = k <= Kstar ? 1 - smooth_step(double(k - k1) / (Kstar - k1)) : 0.0;
        int kb = k - (K - Kbar);
        double wb = kb >= Kbar - Kstar ? smooth_step(double(kb - (Kbar - Kstar)) / (Kstar - k1)) : 0.0;
        double ws = 1 - wf - wb;
        cpos[k] = ws * sp[k];
        cstr[k] = ws * sx[k];
        if (wf > 0) {
          cpos[k] += wf * fz0->r[k];
          cstr[k] += wf * fz0->rx[k];
        }
        if (wb > 0) {
          cpos[k] += wb * bz0->r[kb];
          cstr[k] += wb * bz0->rx[kb];
        }
      }
    }
    JunctionTraces jt = junction_transfer(comp, spec, eq, dt, K, Kstar, cpos, cstr, f0, b0, opt.order_free);
    for (int s : comp.strings) {
      res.junction_position[s] = jt.position[s];
      res.junction_strain[s] = jt.strain[s];
      if (s == comp.clamped) continue;
      for (int k = 0; k <= Kstar; ++k) {
        dg.trace_match_position = std::max(dg.trace_match_position, (jt.position[s][k] - f0[s]->r[k]).norm());
        dg.trace_match_strain = std::max(dg.trace_match_strain, (jt.strain[s][k] - f0[s]->rx[k]).norm());
        int kb = K - Kstar + k;
        int kk = Kbar - Kstar + k;
        dg.trace_match_position = std::max(dg.trace_match_position, (jt.position[s][kb] - b0[s]->r[kk]).norm());
        dg.trace_match_strain = std::max(dg.trace_match_strain, (jt.strain[s][kb] - b0[s]->rx[kk]).norm());
      }
    }
    std::vector<int> todo;
    for (int s : comp.strings)
      if (s != comp.clamped) todo.push_back(s);
    run_parallel(todo, opt.threads, [&](int s) {
      SidewiseRequest rq;
      rq.string = s;
      rq.from = End::Zero;
      rails(rq, s);
      rq.r = jt.position[s];
      rq.rx = jt.strain[s];
      rq.rt = derivative(rq.r, dt, 1);
      res.sidewise[s] = sidewise_solve(spec, eq, rq);
    });
  }
  dg.max_interface_residual = interface_residual(spec, eq, dt, res.junction_position, res.junction_strain);
  if (dg.max_interface_residual > opt.tol_iface) {
    std::ostringstream os;
    os << "interface residual " << dg.max_interface_residual << " exceeds " << opt.tol_iface;
    dg.advisories.push_back(os.str());
  }

  ControlSet& cs = res.controls;
  cs.Tbar = tt.Tbar;
  cs.Tstar = tt.Tstar;
  cs.dt = dt;
  cs.N = opt.N;
  dg.rail_rt_mismatch.assign(n, 0.0);
  dg.smoothness.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto& sw = res.sidewise[i];
    dg.rail_rt_mismatch[i] = std::max(sw.rail_rt_mismatch0, sw.rail_rt_mismatchT);
    if (i == fz.plan.clamped) continue;
    const auto& node = spec.node_of(i, End::Length);
    ControlSignal sig;
    sig.node = node.id;
    Vec3 RL = eq.strings[i].R(spec.strings[i].length);
    for (int k = 0; k <= K; ++k) {
      sig.t.push_back(k * dt);
      sig.U.push_back(RL + sw.far.r[k]);
    }
    sig.Ut = sw.far.rt;
    sig.Utt = derivative(sw.far.rt, dt, 1);
    dg.smoothness[i] = smoothness_indicator(sw.far.r);
    cs.signals.push_back(std::move(sig));
  }
  return res;
}

// ---------------------------------------------------------------- verification

double VerificationReport::max_terminal_error() const {
  double m = 0;
  for (double e : terminal_error_r) m = std::max(m, e);
  for (double e : terminal_error_rt) m = std::max(m, e);
  return m;
}

VerificationReport verify_controls(const NetworkSpec& spec, const EquilibriumConfig& eq, const NetworkData& initial,
                                   const ControlSet& controls, const NetworkData& target, double T, int N, double cfl,
                                   double dt) {
  TimeGrid grid;
  if (dt > 0) {
    grid.steps = std::max(1, static_cast<int>(std::llround(T / dt)));
    grid.dt = T / grid.steps;
  } else {
    grid = make_time_grid(spec, eq, N, cfl, default_eps0(eq), T);
  }
  RunOptions ro;
  ro.N = N;
  ro.cfl = cfl;
  ro.energy_stride = std::max(1, grid.steps / 200);
  auto run = simulate_forward(spec, eq, sample_field(spec, N, initial), controls.as_map(), grid, ro);
  VerificationReport rep;
  Field want = sample_field(spec, N, target);
  for (size_t i = 0; i < spec.strings.size(); ++i) {
    double er = 0, ev = 0;
    for (int j = 0; j <= N; ++j) {
      er = std::max(er, (run.final_field[i].r[j] - want[i].r[j]).norm());
      ev = std::max(ev, (run.final_field[i].rt[j] - want[i].rt[j]).norm());
    }
    rep.terminal_error_r.push_back(er);
    rep.terminal_error_rt.push_back(ev);
  }
  int n = static_cast<int>(spec.strings.size());
  std::vector<std::vector<Vec3>> pos(n), str(n);
  if (spec.star_center() >= 0) {
    for (int i = 0; i < n; ++i) {
      pos[i] = run.trace(i, End::Zero)->r;
      str[i] = run.trace(i, End::Zero)->rx;
    }
    rep.replay_interface_residual = interface_residual(spec, eq, grid.dt, pos, str);
  }
  rep.energy_t = run.energy_t;
  rep.energy = run.energy;
  double e0 = run.energy.front(), dev = 0;
  for (double e : run.energy) dev = std::max(dev, std::abs(e - e0));
  rep.energy_drift = std::abs(e0) > 0 ? dev / std::abs(e0) : dev;
  return rep;
}

// ---------------------------------------------------------------- global-local

GlobalLocalResult synthesize_global_local(const NetworkSpec& spec, const std::vector<Leg>& legs,
                                          const SynthesisOptions& opt) {
  if (legs.empty()) throw Error(ErrorKind::Config, "global-local synthesis needs at least one leg");
  for (size_t k = 0; k + 1 < legs.size(); ++k) {
    const auto& a = legs[k];
    const auto& b = legs[k + 1];
    double worst = 0;
    for (size_t i = 0; i < spec.strings.size(); ++i)
      for (int j = 0; j <= 32; ++j) {
        double x = spec.strings[i].length * j / 32;
        Vec3 pa = a.eq->strings[i].R(x) + a.target[i].r.f(x);
        Vec3 pb = b.eq->strings[i].R(x) + b.initial[i].r.f(x);
        worst = std::max({worst, (pa - pb).norm(), (a.target[i].rt.f(x) - b.initial[i].rt.f(x)).norm()});
      }
    if (worst > 1e-9) {
      std::ostringstream os;
      os << "seam between legs " << k + 1 << " and " << k + 2 << " is inconsistent (mismatch " << worst << ")";
      throw Error(ErrorKind::Config, os.str());
    }
  }
  GlobalLocalResult out;
  double offset = 0;
  for (size_t k = 0; k < legs.size(); ++k) {
    ControlProblem pb;
    pb.spec = &spec;
    pb.eq = legs[k].eq;
    pb.initial = legs[k].initial;
    pb.target = legs[k].target;
    pb.T = legs[k].T;
    pb.opt = opt;
    try {
      out.legs.push_back(synthesize_local(pb));
    } catch (const Error& e) {
      throw Error(e.kind(), "leg " + std::to_string(k + 1) + ": " + e.what());
    }
    const ControlSet& cs = out.legs.back().controls;
    for (const auto& sig : cs.signals) {
      ControlSignal* dst = nullptr;
      for (auto& s : out.controls.signals)
        if (s.node == sig.node) dst = &s;
      if (!dst) {
        out.controls.signals.push_back({sig.node, {}, {}, {}, {}});
        dst = &out.controls.signals.back();
      }
      size_t start = 0;
      if (!dst->t.empty()) {
        // Seam sample shared by both legs: blend and skip the duplicate.
        dst->U.back() = 0.5 * (dst->U.back() + sig.U[0]);
        dst->Ut.back() = 0.5 * (dst->Ut.back() + sig.Ut[0]);
        dst->Utt.back() = 0.5 * (dst->Utt.back() + sig.Utt[0]);
        start = 1;
      }
      for (size_t j = start; j < sig.t.size(); ++j) {
        dst->t.push_back(offset + sig.t[j]);
        dst->U.push_back(sig.U[j]);
        dst->Ut.push_back(sig.Ut[j]);
        dst->Utt.push_back(sig.Utt[j]);
      }
    }
    out.controls.dt = k == 0 ? cs.dt : std::min(out.controls.dt, cs.dt);
    out.controls.N = cs.N;
    out.controls.Tbar = std::max(out.controls.Tbar, cs.Tbar);
    out.controls.Tstar = std::max(out.controls.Tstar, cs.Tstar);
    offset += legs[k].T;
  }
  out.T = offset;
  return out;
}

}  // namespace strnet
