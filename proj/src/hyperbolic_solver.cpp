#include "strnet/hyperbolic_solver.hpp"

#include <algorithm>
#include <array>
#include <memory>
#include <cmath>
#include <sstream>

#include "strnet/numerics.hpp"

namespace strnet {

// ---------------------------------------------------------------- profiles

Profile Profile::zero() { return constant(Vec3::Zero()); }

Profile Profile::constant(const Vec3& v) {
  return {[v](double) { return v; }, [](double) { return Vec3::Zero(); }};
}

Profile Profile::gaussian(const Vec3& A, double c, double w) {
  return {[=](double x) {
            double u = (x - c) / w;
            return Vec3(A * std::exp(-u * u));
          },
          [=](double x) {
            double u = (x - c) / w;
            return Vec3(A * (-2 * u / w) * std::exp(-u * u));
          }};
}

Profile Profile::bump(const Vec3& A, double c, double w) {
  return {[=](double x) {
            double u = (x - c) / w;
            if (std::abs(u) >= 1) return Vec3::Zero().eval();
            return Vec3(A * std::exp(1 - 1 / (1 - u * u)));
          },
          [=](double x) {
            double u = (x - c) / w;
            if (std::abs(u) >= 1) return Vec3::Zero().eval();
            double q = 1 - u * u;
            return Vec3(A * std::exp(1 - 1 / q) * (-2 * u / (w * q * q)));
          }};
}

Profile Profile::sine_power(const Vec3& A, int p, double L) {
  if (p < 1) throw Error(ErrorKind::Config, "sine_power exponent must be positive");
  double om = M_PI / L;
  return {[=](double x) { return Vec3(A * std::pow(std::sin(om * x), p)); },
          [=](double x) { return Vec3(A * (p * om * std::pow(std::sin(om * x), p - 1) * std::cos(om * x))); }};
}

Profile Profile::sine(const Vec3& A, int k, double L) {
  double om = k * M_PI / L;
  return {[=](double x) { return Vec3(A * std::sin(om * x)); }, [=](double x) { return Vec3(A * om * std::cos(om * x)); }};
}

Profile Profile::sampled(double L, const std::vector<Vec3>& values) {
  if (values.size() < 9) throw Error(ErrorKind::Config, "sampled profile needs at least 9 samples");
  auto q = std::make_shared<QuinticSamples>();
  q->h = L / (values.size() - 1);
  q->f = values;
  q->d1 = derivative(values, q->h, 1);
  q->d2 = derivative(values, q->h, 2);
  return {[q](double x) { return q->eval(x, 0); }, [q](double x) { return q->eval(x, 1); }};
}

const TraceRecord* SimulationResult::trace(int string, End end) const {
  for (const auto& t : traces)
    if (t.string == string && t.end == end) return &t;
  return nullptr;
}

double CompatReport::max() const {
  double m = 0;
  for (const auto& i : items) m = std::max(m, i.residual);
  return m;
}

// ---------------------------------------------------------------- speeds

double default_eps0(const EquilibriumConfig& eq) { return 0.05 * eq.stretch_margin(); }

namespace {

// Strain magnitudes |R^e_x| sampled along a string.
std::vector<double> stretch_samples(const StringEquilibrium& s) {
  std::vector<double> out;
  if (s.affine) return {s.tangent.norm()};
  for (int k = 0; k <= 64; ++k) out.push_back(s.Rx(s.length * k / 64).norm());
  return out;
}

}  // namespace

TravelTimes traveling_times(const NetworkSpec& spec, const EquilibriumConfig& eq, double eps0, int clamped) {
  if (eps0 < 0) throw Error(ErrorKind::Config, "eps0 must be nonnegative");
  TravelTimes tt;
  int ns = static_cast<int>(spec.strings.size());
  for (int i = 0; i < ns; ++i) {
    const auto& law = spec.law(i);
    double rho = spec.strings[i].density;
    double lo = 1e300, hi = 0;
    for (double s0 : stretch_samples(eq.strings[i])) {
      if (!(s0 - eps0 > 1 + kDeltaStretch) || !law.in_domain(s0 - eps0) || !law.in_domain(s0 + eps0)) {
        std::ostringstream os;
        os << "string " << spec.strings[i].id << ": eps0 = " << eps0 << " ball around stretch " << s0
           << " leaves the stretched regime; use a smaller eps0";
        throw Error(ErrorKind::Stretch, os.str());
      }
      for (int k = 0; k <= 20; ++k) {
        double s = s0 - eps0 + 2 * eps0 * k / 20;
        Speeds sp = wave_speeds(law, rho, s);
        lo = std::min({lo, sp.longitudinal, sp.transverse});
        hi = std::max({hi, sp.longitudinal, sp.transverse});
      }
    }
    tt.mu_min.push_back(lo);
    tt.mu_max.push_back(hi);
    tt.T.push_back(spec.strings[i].length / lo);
  }
  if (clamped < 0) {
    clamped = 0;
    for (int i = 0; i < ns; ++i)
      if (spec.node_of(i, End::Length).kind == NodeKind::ClampedSimple) {
        clamped = i;
        break;
      }
  }
  tt.clamped = clamped;
  double mx = *std::max_element(tt.T.begin(), tt.T.end());
  tt.Tbar = tt.T[clamped] + mx;
  tt.Tstar = tt.Tbar - tt.T[clamped];
  tt.T_min_control = 2 * tt.Tbar;
  return tt;
}

TimeGrid make_time_grid(const NetworkSpec& spec, const EquilibriumConfig& eq, int N, double cfl, double eps0,
                        double T, double t0) {
  if (N < 4) throw Error(ErrorKind::Config, "N must be at least 4");
  if (!(cfl > 0 && cfl < 1)) throw Error(ErrorKind::Config, "CFL factor must lie in (0,1)");
  if (!(T > 0)) throw Error(ErrorKind::Config, "horizon must be positive");
  auto tt = traveling_times(spec, eq, eps0);
  double dt = 1e300;
  for (size_t i = 0; i < spec.strings.size(); ++i) dt = std::min(dt, cfl * spec.strings[i].length / N / tt.mu_max[i]);
  TimeGrid g;
  g.t0 = t0;
  g.steps = std::max(1, static_cast<int>(std::ceil(T / dt - 1e-9)));
  g.dt = T / g.steps;
  return g;
}

Field sample_field(const NetworkSpec& spec, int N, const NetworkData& data) {
  if (data.size() != spec.strings.size()) throw Error(ErrorKind::Config, "data must cover every string");
  Field f(spec.strings.size());
  for (size_t i = 0; i < spec.strings.size(); ++i) {
    double dx = spec.strings[i].length / N;
    for (int j = 0; j <= N; ++j) {
      double x = j * dx;
      f[i].rx.push_back(data[i].r.df(x));
      f[i].rt.push_back(data[i].rt.f(x));
      f[i].r.push_back(data[i].r.f(x));
    }
  }
  return f;
}

// ---------------------------------------------------------------- strip engine

namespace {

struct Coef {
  Vec3 Rx, c, d;  // V = Rx + sa a + sb b;  b_tau = P(V)(a_sigma + c) - d
};

struct Op {
  const MaterialLaw* law = nullptr;
  double rho = 1;
  bool inverse = false;  // P = rho G_v^{-1} (sidewise) instead of G_v / rho
  double max_sp2 = 0;
  double bad_s = 0;
  bool bad = false;

  Vec3 apply(const Vec3& V, const Vec3& y) {
    double s = V.norm();
    if (!(s > 1 + kDeltaStretch)) {
      if (!bad) bad_s = s;
      bad = true;
      s = 1 + 2 * kDeltaStretch;
    }
    double l = law->Vss(s), tr = law->Vs(s) / s;
    double al = inverse ? rho / l : l / rho;
    double be = inverse ? rho / tr : tr / rho;
    max_sp2 = std::max(max_sp2, std::max(al, be));
    Vec3 t = V / V.norm();
    return be * y + (al - be) * t.dot(y) * t;
  }
};

struct Strip {
  std::vector<Vec3> a, b, p;
};

template <class HalfCoef, class NodeCoef>
void lw_interior(const Strip& u, Strip& nu, double dtau, double dsig, Op& op, double sa, double sb, HalfCoef hc,
                 NodeCoef nc, std::vector<Vec3>& ah, std::vector<Vec3>& bh) {
  int J = static_cast<int>(u.a.size()) - 1;
  double lam = dtau / dsig;
  ah.resize(J);
  bh.resize(J);
  for (int j = 0; j < J; ++j) {
    const Coef c = hc(j);
    Vec3 am = 0.5 * (u.a[j] + u.a[j + 1]);
    Vec3 bm = 0.5 * (u.b[j] + u.b[j + 1]);
    Vec3 V = c.Rx + sa * am + sb * bm;
    ah[j] = am + 0.5 * lam * (u.b[j + 1] - u.b[j]);
    bh[j] = bm + 0.5 * dtau * (op.apply(V, (u.a[j + 1] - u.a[j]) / dsig + c.c) - c.d);
  }
  for (int j = 1; j < J; ++j) {
    const Coef c = nc(j);
    Vec3 am = 0.5 * (ah[j - 1] + ah[j]);
    Vec3 bm = 0.5 * (bh[j - 1] + bh[j]);
    Vec3 V = c.Rx + sa * am + sb * bm;
    nu.a[j] = u.a[j] + lam * (bh[j] - bh[j - 1]);
    nu.b[j] = u.b[j] + dtau * (op.apply(V, (ah[j] - ah[j - 1]) / dsig + c.c) - c.d);
    nu.p[j] = u.p[j] + 0.5 * dtau * (u.b[j] + nu.b[j]);
  }
}

// Outgoing characteristic at one end of a strip, advanced by Beam-Warming in
// the frame frozen at the boundary point.
struct Outgoing {
  Mat3 Q;
  Vec3 d;
  Vec3 c_old, c_new;
  bool right = false;

  // Boundary sigma-derivative a given the boundary tau-derivative b.
  Vec3 a_of(const Vec3& b, bool use_new) const {
    const Vec3& c = use_new ? c_new : c_old;
    Vec3 qb = Q.transpose() * b;
    Vec3 w = right ? Vec3(c + qb) : Vec3(c - qb);
    return Q * w.cwiseQuotient(d);
  }
};

Outgoing outgoing(const Strip& u, bool right, Op& op, const Coef& cb, const Vec3& axis, double dtau, double dsig,
                  double sa, double sb) {
  int J = static_cast<int>(u.a.size()) - 1;
  int i0 = right ? J : 0, i1 = right ? J - 1 : 1, i2 = right ? J - 2 : 2;
  Vec3 V = cb.Rx + sa * u.a[i0] + sb * u.b[i0];
  if (!(V.norm() > 1 + kDeltaStretch)) {
    std::ostringstream os;
    os << "boundary strain |V| = " << V.norm() << " lost stretch";
    throw Error(ErrorKind::Stretch, os.str());
  }
  CharacteristicFrame f = characteristic_frame(*op.law, op.rho, V, axis);
  Outgoing o;
  o.right = right;
  o.Q = f.Q;
  o.d = op.inverse ? f.mu.cwiseInverse() : f.mu;
  auto ell = [&](int i) -> Vec3 {
    Vec3 qa = o.Q.transpose() * u.a[i], qb = o.Q.transpose() * u.b[i];
    return right ? Vec3(o.d.cwiseProduct(qa) - qb) : Vec3(o.d.cwiseProduct(qa) + qb);
  };
  Vec3 c0 = ell(i0), c1 = ell(i1), c2 = ell(i2);
  Vec3 S = op.apply(V, cb.c) - cb.d;
  Vec3 src = o.Q.transpose() * S;
  if (right) src = -src;
  o.c_old = c0;
  for (int k = 0; k < 3; ++k) {
    double nu = o.d[k] * dtau / dsig;
    double d2 = c0[k] - 2 * c1[k] + c2[k];
    if (right)
      o.c_new[k] = c0[k] - nu * (3 * c0[k] - 4 * c1[k] + c2[k]) / 2 + 0.5 * nu * nu * d2;
    else
      o.c_new[k] = c0[k] + nu * (-3 * c0[k] + 4 * c1[k] - c2[k]) / 2 + 0.5 * nu * nu * d2;
  }
  o.c_new += dtau * src;
  return o;
}

void check_finite(const Strip& s, const std::string& where) {
  for (size_t j = 0; j < s.a.size(); ++j)
    if (!s.a[j].allFinite() || !s.b[j].allFinite() || !s.p[j].allFinite()) {
      std::ostringstream os;
      os << where << ": non-finite value at grid index " << j;
      throw Error(ErrorKind::NonFinite, os.str());
    }
}

enum class BcKind { Clamped, Controlled, Junction };

struct EndInfo {
  BcKind kind = BcKind::Clamped;
  int node = -1;   // index into spec.nodes
  int local = -1;  // junction local index
  const ControlFn* control = nullptr;
};

struct StringRt {
  int N = 0;
  double dx = 0;
  const MaterialLaw* law = nullptr;
  double rho = 1;
  Vec3 axis;
  std::vector<Coef> node, half;
  EndInfo ends[2];
  Vec3 Re[2];  // equilibrium positions at x = 0, L
};

class ForwardSolver {
 public:
  ForwardSolver(const NetworkSpec& spec, const EquilibriumConfig& eq, int N, double dt, double cfl,
                const ControlMap& controls)
      : spec_(spec), eq_(eq), dt_(dt), cfl_(cfl) {
    Vec3 ge = spec.gravity * spec.up;
    for (size_t i = 0; i < spec.strings.size(); ++i) {
      StringRt s;
      s.N = N;
      s.dx = spec.strings[i].length / N;
      s.law = &spec.law(static_cast<int>(i));
      s.rho = spec.strings[i].density;
      s.axis = eq.strings[i].axis;
      for (int j = 0; j <= N; ++j) {
        double x = j * s.dx;
        s.node.push_back({eq.strings[i].Rx(x), eq.strings[i].Rxx(x), ge});
        if (j < N) s.half.push_back({eq.strings[i].Rx(x + 0.5 * s.dx), eq.strings[i].Rxx(x + 0.5 * s.dx), ge});
      }
      for (int e = 0; e < 2; ++e) {
        End end = e == 0 ? End::Zero : End::Length;
        s.Re[e] = eq.strings[i].at(end);
        const NodeSpec& nd = spec.node_of(static_cast<int>(i), end);
        EndInfo& info = s.ends[e];
        info.node = spec.node_index(nd.id);
        if (nd.kind == NodeKind::ClampedSimple) {
          info.kind = BcKind::Clamped;
        } else if (nd.kind == NodeKind::ControlledSimple) {
          info.kind = BcKind::Controlled;
          auto it = controls.find(nd.id);
          info.control = it == controls.end() ? nullptr : &it->second;
        } else {
          info.kind = BcKind::Junction;
          info.local = nd.graph.local_index(static_cast<int>(i));
          if (info.local < 0 || nd.graph.incidence[info.local].end != end)
            throw Error(ErrorKind::Config, "junction incidence does not list string " + std::to_string(spec.strings[i].id));
        }
      }
      strings_.push_back(std::move(s));
    }
    for (size_t n = 0; n < spec.nodes.size(); ++n) {
      if (spec.nodes[n].kind != NodeKind::Multiple) continue;
      const auto& g = spec.nodes[n].graph;
      junctions_.push_back(static_cast<int>(n));
      laplacians_.push_back(laplacian(g) * g.stiffness);
      // Forces are taken relative to the equilibrium so that r = 0 is an exact discrete rest state.
      std::vector<Vec3> rest(g.size());
      for (int a = 0; a < g.size(); ++a) {
        const auto& ref = g.incidence[a];
        const auto& s = strings_[ref.string];
        rest[a] = stress(*s.law, s.node[ref.end == End::Zero ? 0 : s.N].Rx);
      }
      rest_.push_back(std::move(rest));
      double mmin = *std::min_element(g.masses.begin(), g.masses.end());
      if (!(mmin > 0)) throw Error(ErrorKind::Config, "junction masses must be positive");
      if (dt * std::sqrt(g.stiffness / mmin) > 0.5) {
        std::ostringstream os;
        os << "junction stiffness guard: dt*sqrt(kappa/m) = " << dt * std::sqrt(g.stiffness / mmin) << " > 0.5";
        throw Error(ErrorKind::Cfl, os.str());
      }
    }
  }

  void set_field(const Field& f) {
    state_.resize(f.size());
    for (size_t i = 0; i < f.size(); ++i) {
      if (static_cast<int>(f[i].r.size()) != strings_[i].N + 1) throw Error(ErrorKind::Config, "field size does not match grid");
      state_[i] = {f[i].rx, f[i].rt, f[i].r};
    }
    next_ = state_;
  }

  Field field() const {
    Field f(state_.size());
    for (size_t i = 0; i < state_.size(); ++i) f[i] = {state_[i].a, state_[i].b, state_[i].p};
    return f;
  }

  const std::vector<Strip>& strips() const { return state_; }

  void step(double t) {
    double t1 = t + dt_;
    std::vector<std::array<Outgoing, 2>> outs(strings_.size());
    for (size_t i = 0; i < strings_.size(); ++i) {
      auto& s = strings_[i];
      Op op{s.law, s.rho, false};
      const Strip& u = state_[i];
      Strip& nu = next_[i];
      lw_interior(
          u, nu, dt_, s.dx, op, 1.0, 0.0, [&](int j) -> const Coef& { return s.half[j]; },
          [&](int j) -> const Coef& { return s.node[j]; }, ah_, bh_);
      outs[i][0] = outgoing(u, false, op, s.node[0], s.axis, dt_, s.dx, 1.0, 0.0);
      outs[i][1] = outgoing(u, true, op, s.node[s.N], s.axis, dt_, s.dx, 1.0, 0.0);
      if (op.bad) {
        std::ostringstream os;
        os << "string " << spec_.strings[i].id << " at t = " << t1 << ": strain |V| = " << op.bad_s
           << " lost stretch";
        throw Error(ErrorKind::Stretch, os.str());
      }
      double nu_max = std::sqrt(op.max_sp2) * dt_ / s.dx;
      if (nu_max > cfl_ * (1 + 1e-9)) {
        std::ostringstream os;
        os << "string " << spec_.strings[i].id << " at t = " << t1 << ": CFL number " << nu_max << " exceeds " << cfl_;
        throw Error(ErrorKind::Cfl, os.str());
      }
      for (int e = 0; e < 2; ++e) {
        const EndInfo& info = s.ends[e];
        int j = e == 0 ? 0 : s.N;
        if (info.kind == BcKind::Junction) continue;
        Vec3 bb = Vec3::Zero(), pp = Vec3::Zero();
        if (info.kind == BcKind::Controlled && info.control) {
          ControlSample cs = (*info.control)(t1);
          bb = cs.Ut;
          pp = cs.U - s.Re[e];
        }
        nu.b[j] = bb;
        nu.p[j] = pp;
        nu.a[j] = outs[i][e].a_of(bb, true);
      }
    }
    for (size_t k = 0; k < junctions_.size(); ++k) junction_step(k, outs);
    for (size_t i = 0; i < strings_.size(); ++i) check_finite(next_[i], "string " + std::to_string(spec_.strings[i].id));
    std::swap(state_, next_);
  }

 private:
  void junction_step(size_t k, const std::vector<std::array<Outgoing, 2>>& outs) {
    const auto& g = spec_.nodes[junctions_[k]].graph;
    const Eigen::MatrixXd& L = laplacians_[k];
    int d = g.size();
    std::vector<Vec3> r0(d), v0(d);
    for (int a = 0; a < d; ++a) {
      const auto& ref = g.incidence[a];
      int e = ref.end == End::Zero ? 0 : 1;
      int j = e == 0 ? 0 : strings_[ref.string].N;
      r0[a] = state_[ref.string].p[j];
      v0[a] = state_[ref.string].b[j];
    }
    auto accel = [&](const std::vector<Vec3>& r, const std::vector<Vec3>& v, bool use_new) {
      std::vector<Vec3> acc(d);
      for (int a = 0; a < d; ++a) {
        const auto& ref = g.incidence[a];
        int e = ref.end == End::Zero ? 0 : 1;
        const auto& s = strings_[ref.string];
        const Outgoing& o = outs[ref.string][e];
        Vec3 V = s.node[e == 0 ? 0 : s.N].Rx + o.a_of(v[a], use_new);
        Vec3 F = -orientation(ref.end) * (stress(*s.law, V) - rest_[k][a]);
        for (int b = 0; b < d; ++b) F -= L(a, b) * r[b];
        acc[a] = F / g.masses[a];
      }
      return acc;
    };
    auto k1 = accel(r0, v0, false);
    std::vector<Vec3> rs(d), vs(d);
    for (int a = 0; a < d; ++a) {
      rs[a] = r0[a] + dt_ * v0[a];
      vs[a] = v0[a] + dt_ * k1[a];
    }
    auto k2 = accel(rs, vs, true);
    for (int a = 0; a < d; ++a) {
      const auto& ref = g.incidence[a];
      int e = ref.end == End::Zero ? 0 : 1;
      int j = e == 0 ? 0 : strings_[ref.string].N;
      Vec3 v1 = v0[a] + 0.5 * dt_ * (k1[a] + k2[a]);
      Vec3 r1 = r0[a] + 0.5 * dt_ * (v0[a] + vs[a]);
      Strip& nu = next_[ref.string];
      nu.b[j] = v1;
      nu.p[j] = r1;
      nu.a[j] = outs[ref.string][e].a_of(v1, true);
    }
  }

  const NetworkSpec& spec_;
  const EquilibriumConfig& eq_;
  double dt_, cfl_;
  std::vector<StringRt> strings_;
  std::vector<int> junctions_;
  std::vector<Eigen::MatrixXd> laplacians_;
  std::vector<std::vector<Vec3>> rest_;
  std::vector<Strip> state_, next_;
  std::vector<Vec3> ah_, bh_;
};

void push_traces(std::vector<TraceRecord>& tr, const std::vector<Strip>& st) {
  for (auto& t : tr) {
    const Strip& s = st[t.string];
    int j = t.end == End::Zero ? 0 : static_cast<int>(s.p.size()) - 1;
    t.r.push_back(s.p[j]);
    t.rt.push_back(s.b[j]);
    t.rx.push_back(s.a[j]);
  }
}

double consistency_ratio(const std::vector<Strip>& st, const NetworkSpec& spec) {
  double worst = 0;
  for (size_t i = 0; i < st.size(); ++i) {
    const auto& s = st[i];
    int N = static_cast<int>(s.p.size()) - 1;
    double dx = spec.strings[i].length / N;
    double err = 0, ax = 0;
    for (int j = 1; j < N; ++j) {
      err = std::max(err, ((s.p[j + 1] - s.p[j - 1]) / (2 * dx) - s.a[j]).norm());
      ax = std::max(ax, (s.a[j + 1] - s.a[j - 1]).norm() / (2 * dx));
    }
    if (ax > 0) worst = std::max(worst, err / (dx * dx * ax));
  }
  return worst;
}

}  // namespace

SimulationResult simulate_forward(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& initial,
                                  const ControlMap& controls, const TimeGrid& grid, const RunOptions& opt) {
  ForwardSolver solver(spec, eq, opt.N, grid.dt, opt.cfl, controls);
  solver.set_field(initial);
  SimulationResult res;
  res.grid = grid;
  res.N = opt.N;
  if (opt.record_traces) {
    for (size_t i = 0; i < spec.strings.size(); ++i)
      for (End e : {End::Zero, End::Length}) {
        TraceRecord t;
        t.string = static_cast<int>(i);
        t.end = e;
        t.t0 = grid.t0;
        t.dt = grid.dt;
        t.r.reserve(grid.steps + 1);
        t.rt.reserve(grid.steps + 1);
        t.rx.reserve(grid.steps + 1);
        res.traces.push_back(std::move(t));
      }
    push_traces(res.traces, solver.strips());
  }
  std::vector<bool> snapped(opt.snapshot_times.size(), false);
  auto take_snapshots = [&](int n) {
    double t = grid.t0 + n * grid.dt;
    for (size_t k = 0; k < opt.snapshot_times.size(); ++k) {
      if (snapped[k]) continue;
      double ts = opt.snapshot_times[k];
      if (std::abs(ts - t) <= 0.5 * grid.dt + 1e-12 || (n == grid.steps && ts > t)) {
        res.snapshots.push_back({t, solver.field()});
        snapped[k] = true;
      }
    }
  };
  auto take_energy = [&](int n) {
    if (opt.energy_stride <= 0) return;
    if (n % opt.energy_stride != 0 && n != grid.steps) return;
    res.energy_t.push_back(grid.t0 + n * grid.dt);
    res.energy.push_back(perturbation_energy(spec, eq, solver.field()));
  };
  take_snapshots(0);
  take_energy(0);
  if (opt.check_consistency) res.max_consistency = consistency_ratio(solver.strips(), spec);
  for (int n = 0; n < grid.steps; ++n) {
    solver.step(grid.t0 + n * grid.dt);
    if (opt.record_traces) push_traces(res.traces, solver.strips());
    take_snapshots(n + 1);
    take_energy(n + 1);
    if (opt.check_consistency && ((n + 1) % 16 == 0 || n + 1 == grid.steps))
      res.max_consistency = std::max(res.max_consistency, consistency_ratio(solver.strips(), spec));
  }
  std::sort(res.snapshots.begin(), res.snapshots.end(), [](const Snapshot& a, const Snapshot& b) { return a.t < b.t; });
  res.final_field = solver.field();
  return res;
}

namespace {
Field negate_velocity(Field f) {
  for (auto& s : f)
    for (auto& v : s.rt) v = -v;
  return f;
}
}  // namespace

SimulationResult simulate_backward(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& final,
                                   const ControlMap& controls, const TimeGrid& grid, const RunOptions& opt) {
  double T = grid.t_end();
  ControlMap rev;
  for (const auto& [node, fn] : controls) {
    ControlFn f = fn;
    rev[node] = [f, T](double s) {
      ControlSample c = f(T - s);
      return ControlSample{c.U, -c.Ut, c.Utt};
    };
  }
  TimeGrid g2 = grid;
  g2.t0 = 0;
  RunOptions o2 = opt;
  o2.snapshot_times.clear();
  for (double ts : opt.snapshot_times) o2.snapshot_times.push_back(T - ts);
  SimulationResult r = simulate_forward(spec, eq, negate_velocity(final), rev, g2, o2);
  r.grid = grid;
  for (auto& t : r.traces) {
    std::reverse(t.r.begin(), t.r.end());
    std::reverse(t.rt.begin(), t.rt.end());
    std::reverse(t.rx.begin(), t.rx.end());
    for (auto& v : t.rt) v = -v;
    t.t0 = grid.t0;
  }
  for (auto& s : r.snapshots) {
    s.t = T - s.t;
    s.field = negate_velocity(s.field);
  }
  std::reverse(r.snapshots.begin(), r.snapshots.end());
  for (auto& t : r.energy_t) t = T - t;
  std::reverse(r.energy_t.begin(), r.energy_t.end());
  std::reverse(r.energy.begin(), r.energy.end());
  r.final_field = negate_velocity(r.final_field);
  return r;
}

// ---------------------------------------------------------------- sidewise

SidewiseResult sidewise_solve(const NetworkSpec& spec, const EquilibriumConfig& eq, const SidewiseRequest& req) {
  int i = req.string;
  const auto& law = spec.law(i);
  double rho = spec.strings[i].density;
  double L = spec.strings[i].length;
  const auto& se = eq.strings[i];
  int K = req.grid.steps;
  double dt = req.grid.dt;
  if (static_cast<int>(req.r.size()) != K + 1 || req.rt.size() != req.r.size() || req.rx.size() != req.r.size())
    throw Error(ErrorKind::Config, "sidewise Cauchy data must have one sample per time level");
  if (K < 3) throw Error(ErrorKind::Config, "sidewise time grid too short");
  bool rightward = req.from == End::Zero;
  double sb = rightward ? 1.0 : -1.0;
  auto x_of = [&](double tau) { return rightward ? tau : L - tau; };

  Strip u;
  u.a = req.rt;
  u.p = req.r;
  u.b.resize(K + 1);
  for (int k = 0; k <= K; ++k) u.b[k] = sb * req.rx[k];

  // Slowest speed bounds the sidewise step.
  double mu = req.mu_min > 0 ? req.mu_min : 1e300;
  Vec3 Rx0 = se.Rx(x_of(0));
  for (int k = 0; k <= K; ++k) {
    double s = (Rx0 + sb * u.b[k]).norm();
    if (!(s > 1 + kDeltaStretch)) {
      std::ostringstream os;
      os << "sidewise Cauchy data on string " << spec.strings[i].id << " lose stretch at t = " << req.grid.t0 + k * dt;
      throw Error(ErrorKind::Stretch, os.str());
    }
    Speeds sp = wave_speeds(law, rho, s);
    mu = std::min({mu, 0.9 * sp.longitudinal, 0.9 * sp.transverse});
  }
  int Ns = std::max(4, static_cast<int>(std::ceil(L / (req.cfl * dt * mu))));
  double dtau = L / Ns;

  Vec3 ge = spec.gravity * spec.up;
  auto coef = [&](double tau) { return Coef{se.Rx(x_of(tau)), ge, se.Rxx(x_of(tau))}; };

  SidewiseResult res;
  res.dx = dtau;
  res.steps = Ns;
  int stride = req.keep_columns > 0 ? std::max(1, Ns / req.keep_columns) : 0;
  auto keep = [&](int n) {
    if (!stride || (n % stride != 0 && n != Ns)) return;
    res.column_x.push_back(x_of(n * dtau));
    StringState c;
    c.rt = u.a;
    c.r = u.p;
    c.rx.resize(K + 1);
    for (int k = 0; k <= K; ++k) c.rx[k] = sb * u.b[k];
    res.columns.push_back(std::move(c));
  };
  keep(0);

  Strip nu = u;
  std::vector<Vec3> ah, bh;
  for (int n = 0; n < Ns; ++n) {
    double tau = n * dtau;
    Op op{&law, rho, true};
    Coef ch = coef(tau + 0.5 * dtau);
    lw_interior(
        u, nu, dtau, dt, op, 0.0, sb, [&](int) -> const Coef& { return ch; }, [&](int) -> const Coef& { return ch; },
        ah, bh);
    Coef cb = coef(tau);
    Outgoing o0 = outgoing(u, false, op, cb, se.axis, dtau, dt, 0.0, sb);
    Outgoing oT = outgoing(u, true, op, cb, se.axis, dtau, dt, 0.0, sb);
    if (op.bad) {
      std::ostringstream os;
      os << "sidewise solve on string " << spec.strings[i].id << " at x = " << x_of(tau + dtau)
         << ": strain |V| = " << op.bad_s << " lost stretch";
      throw Error(ErrorKind::Stretch, os.str());
    }
    double nu_max = std::sqrt(op.max_sp2) * dtau / dt;
    if (nu_max > req.cfl * (1 + 1e-9)) {
      std::ostringstream os;
      os << "sidewise CFL violation on string " << spec.strings[i].id << ": " << nu_max << " > " << req.cfl;
      throw Error(ErrorKind::Cfl, os.str());
    }
    double x1 = x_of(tau + dtau);
    Vec3 b0 = sb * req.rail0.df(x1), bT = sb * req.railT.df(x1);
    nu.b[0] = b0;
    nu.p[0] = req.rail0.f(x1);
    nu.a[0] = o0.a_of(b0, true);
    nu.b[K] = bT;
    nu.p[K] = req.railT.f(x1);
    nu.a[K] = oT.a_of(bT, true);
    check_finite(nu, "sidewise string " + std::to_string(spec.strings[i].id));
    std::swap(u, nu);
    if (req.rail0_rt.f) res.rail_rt_mismatch0 = std::max(res.rail_rt_mismatch0, (u.a[0] - req.rail0_rt.f(x1)).norm());
    if (req.railT_rt.f) res.rail_rt_mismatchT = std::max(res.rail_rt_mismatchT, (u.a[K] - req.railT_rt.f(x1)).norm());
    keep(n + 1);
  }
  TraceRecord& far = res.far;
  far.string = i;
  far.end = rightward ? End::Length : End::Zero;
  far.t0 = req.grid.t0;
  far.dt = dt;
  far.r = u.p;
  far.rt = u.a;
  far.rx.resize(K + 1);
  for (int k = 0; k <= K; ++k) far.rx[k] = sb * u.b[k];
  return res;
}

// ---------------------------------------------------------------- compatibility, energy

namespace {

// d/dx of f at an end of [0, L] by a one-sided stencil of step h.
Vec3 end_derivative(const std::function<Vec3(double)>& f, double x, double L, double h) {
  std::vector<Vec3> s;
  bool back = x > 0.5 * L;
  for (int j = 0; j < 7; ++j) s.push_back(f(back ? x - j * h : x + j * h));
  std::vector<double> xs;
  for (int j = 0; j < 7; ++j) xs.push_back(back ? -j : j);
  auto w = fd_weights(0.0, xs, 1);
  Vec3 acc = Vec3::Zero();
  for (int j = 0; j < 7; ++j) acc += w[j] * s[j];
  return acc / h;
}

}  // namespace

Vec3 end_acceleration(const NetworkSpec& spec, const EquilibriumConfig& eq, const StringData& data, int i, End end) {
  const auto& law = spec.law(i);
  double L = spec.strings[i].length;
  double x = end == End::Zero ? 0.0 : L;
  // Differenced relative to the end value, so a constant stress gives exactly zero.
  Vec3 G0 = stress(law, Vec3(eq.strings[i].Rx(x) + data.r.df(x)));
  std::function<Vec3(double)> G = [&](double y) { return Vec3(stress(law, Vec3(eq.strings[i].Rx(y) + data.r.df(y))) - G0); };
  return end_derivative(G, x, L, 1e-3 * L) / spec.strings[i].density - spec.gravity * spec.up;
}

CompatReport check_compatibility(const NetworkSpec& spec, const EquilibriumConfig& eq, const NetworkData& data,
                                 const ControlMap& controls, double t) {
  CompatReport rep;
  auto strain = [&](int i) {
    return [&, i](double x) -> Vec3 { return eq.strings[i].Rx(x) + data[i].r.df(x); };
  };
  // r_tt and r_ttt at a string end from the PDE.
  auto accel = [&](int i, double x) {
    return end_acceleration(spec, eq, data[i], i, x > 0.5 * spec.strings[i].length ? End::Length : End::Zero);
  };
  auto jerk = [&](int i, double x) {
    const auto& law = spec.law(i);
    auto sf = strain(i);
    std::function<Vec3(double)> H = [&](double y) { return Vec3(stress_jacobian(law, sf(y)) * data[i].rt.df(y)); };
    double h = 1e-3 * spec.strings[i].length;
    return Vec3(end_derivative(H, x, spec.strings[i].length, h) / spec.strings[i].density);
  };
  for (size_t n = 0; n < spec.nodes.size(); ++n) {
    const auto& node = spec.nodes[n];
    std::string nid = "node " + std::to_string(node.id);
    if (node.kind != NodeKind::Multiple) {
      for (size_t i = 0; i < spec.strings.size(); ++i)
        for (End e : {End::Zero, End::Length}) {
          int nodeid = e == End::Zero ? spec.strings[i].node_at_0 : spec.strings[i].node_at_L;
          if (nodeid != node.id) continue;
          double x = e == End::Zero ? 0.0 : spec.strings[i].length;
          Vec3 Re = eq.strings[i].R(x);
          ControlSample c{Re, Vec3::Zero(), Vec3::Zero()};
          auto it = controls.find(node.id);
          if (node.kind == NodeKind::ControlledSimple && it != controls.end()) c = it->second(t);
          int si = static_cast<int>(i);
          rep.items.push_back({nid + " U", (c.U - Re - data[i].r.f(x)).norm()});
          rep.items.push_back({nid + " U_t", (c.Ut - data[i].rt.f(x)).norm()});
          rep.items.push_back({nid + " U_tt", (c.Utt - accel(si, x)).norm()});
        }
      continue;
    }
    const auto& g = node.graph;
    Eigen::MatrixXd L = laplacian(g) * g.stiffness;
    for (int a = 0; a < g.size(); ++a) {
      const auto& ref = g.incidence[a];
      int i = ref.string;
      double x = ref.end == End::Zero ? 0.0 : spec.strings[i].length;
      double eps = orientation(ref.end);
      Vec3 V = eq.strings[i].Rx(x) + data[i].r.df(x);
      // Relative to the equilibrium balance, as in the solver.
      Vec3 r0 = g.masses[a] * accel(i, x) + eps * (stress(spec.law(i), V) - stress(spec.law(i), eq.strings[i].Rx(x)));
      Vec3 r1 = g.masses[a] * jerk(i, x) + eps * stress_jacobian(spec.law(i), V) * data[i].rt.df(x);
      for (int b = 0; b < g.size(); ++b) {
        const auto& rb = g.incidence[b];
        double xb = rb.end == End::Zero ? 0.0 : spec.strings[rb.string].length;
        r0 += L(a, b) * data[rb.string].r.f(xb);
        r1 += L(a, b) * data[rb.string].rt.f(xb);
      }
      std::string tag = nid + " mass " + std::to_string(a + 1);
      rep.items.push_back({tag + " order 0", r0.norm()});
      rep.items.push_back({tag + " order 1", r1.norm()});
    }
  }
  return rep;
}

namespace {

// Energy of the field; with `relative` the zero-field energy is subtracted
// term by term to avoid cancellation.
double energy(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& field, bool relative) {
  double E = 0;
  for (size_t i = 0; i < spec.strings.size(); ++i) {
    const auto& s = field[i];
    int N = static_cast<int>(s.r.size()) - 1;
    double dx = spec.strings[i].length / N;
    auto w = simpson_weights(N, dx);
    const auto& law = spec.law(static_cast<int>(i));
    double rho = spec.strings[i].density;
    for (int j = 0; j <= N; ++j) {
      Vec3 Rx = eq.strings[i].Rx(j * dx);
      double pot = law.V((Rx + s.rx[j]).norm());
      if (relative) pot -= law.V(Rx.norm());
      E += w[j] * (0.5 * rho * s.rt[j].squaredNorm() + pot);
    }
  }
  for (const auto& node : spec.nodes) {
    if (node.kind != NodeKind::Multiple) continue;
    const auto& g = node.graph;
    std::vector<Vec3> R(g.size()), r(g.size());
    for (int a = 0; a < g.size(); ++a) {
      const auto& ref = g.incidence[a];
      int j = ref.end == End::Zero ? 0 : static_cast<int>(field[ref.string].r.size()) - 1;
      R[a] = eq.strings[ref.string].at(ref.end);
      r[a] = field[ref.string].r[j];
      E += 0.5 * g.masses[a] * field[ref.string].rt[j].squaredNorm();
    }
    for (int a = 0; a < g.size(); ++a)
      for (int b = a + 1; b < g.size(); ++b) {
        if (!g.adjacency(a, b)) continue;
        Vec3 dR = R[a] - R[b], dr = r[a] - r[b];
        double e = relative ? (2 * dR.dot(dr) + dr.squaredNorm()) : (dR + dr).squaredNorm();
        E += 0.5 * g.stiffness * e;
      }
  }
  return E;
}

}  // namespace

double total_energy(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& field) {
  return energy(spec, eq, field, false);
}

double perturbation_energy(const NetworkSpec& spec, const EquilibriumConfig& eq, const Field& field) {
  return energy(spec, eq, field, true);
}

ControlMap hold_controls(const NetworkSpec& spec, const EquilibriumConfig& eq) {
  ControlMap m;
  for (size_t i = 0; i < spec.strings.size(); ++i)
    for (End e : {End::Zero, End::Length}) {
      const auto& n = spec.node_of(static_cast<int>(i), e);
      if (n.kind != NodeKind::ControlledSimple) continue;
      Vec3 R = eq.strings[i].at(e);
      m[n.id] = [R](double) { return ControlSample{R, Vec3::Zero(), Vec3::Zero()}; };
    }
  return m;
}

}  // namespace strnet
