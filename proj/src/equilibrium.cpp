#include "strnet/equilibrium.hpp"

#include <cmath>
#include <sstream>

namespace strnet {

double EquilibriumConfig::stretch_margin() const {
  double m = 1e300;
  for (const auto& s : strings) {
    if (s.affine) {
      m = std::min(m, s.tangent.norm() - 1);
    } else {
      for (const auto& d : s.samples.d1) m = std::min(m, d.norm() - 1);
    }
  }
  return m;
}

namespace {

void require_stretched(const Vec3& t, int id) {
  if (!(t.norm() > 1 + kDeltaStretch)) {
    std::ostringstream os;
    os << "string " << id << ": |R_x| = " << t.norm() << " is not stretched";
    throw Error(ErrorKind::Stretch, os.str());
  }
}

}  // namespace

EquilibriumConfig zero_gravity_equilibrium(const NetworkSpec& spec, const std::vector<Vec3>& tangents,
                                           const std::vector<Vec3>& anchors) {
  if (spec.gravity != 0) throw Error(ErrorKind::Config, "affine equilibrium requires zero gravity");
  if (tangents.size() != spec.strings.size() || anchors.size() != spec.strings.size())
    throw Error(ErrorKind::Config, "affine equilibrium needs one tangent and one anchor per string");
  EquilibriumConfig eq;
  eq.kind = EquilibriumKind::ZeroGravityAffine;
  for (size_t i = 0; i < tangents.size(); ++i) {
    require_stretched(tangents[i], spec.strings[i].id);
    if (!spec.law(static_cast<int>(i)).in_domain(tangents[i].norm()))
      throw Error(ErrorKind::Stretch, "tangent outside material domain");
    StringEquilibrium s;
    s.length = spec.strings[i].length;
    s.affine = true;
    s.anchor = anchors[i];
    s.tangent = tangents[i];
    s.axis = default_skew_axis(tangents[i]);
    eq.strings.push_back(s);
  }
  return eq;
}

std::vector<Vec3> balanced_anchors(const NetworkSpec& spec, const std::vector<Vec3>& tangents, const Vec3& center) {
  int c = spec.star_center();
  if (c < 0) throw Error(ErrorKind::Config, "balanced anchors need a star network");
  const auto& g = spec.nodes[c].graph;
  int d = g.size();
  Eigen::MatrixXd L = laplacian(g) * g.stiffness;
  // kappa L X = -eps G with eps = -1 at x = 0.
  Eigen::MatrixXd rhs(d, 3);
  for (int a = 0; a < d; ++a) {
    int s = g.incidence[a].string;
    require_stretched(tangents[s], spec.strings[s].id);
    rhs.row(a) = (-orientation(g.incidence[a].end) * stress(spec.law(s), tangents[s])).transpose();
  }
  for (const auto& comp : connected_components(g)) {
    Vec3 net = Vec3::Zero();
    for (int a : comp) net += rhs.row(a).transpose();
    double scale = 0;
    for (int a : comp) scale = std::max(scale, rhs.row(a).norm());
    if (net.norm() > 1e-12 * std::max(1.0, scale)) {
      std::ostringstream os;
      os << "spring component {";
      for (size_t k = 0; k < comp.size(); ++k)
        os << (k ? "," : "") << spec.strings[g.incidence[comp[k]].string].id;
      os << "} carries net string stress |sum G| = " << net.norm()
         << "; no stretched balance exists for it";
      throw Error(ErrorKind::Equilibrium, os.str());
    }
  }
  Eigen::MatrixXd X = L.completeOrthogonalDecomposition().solve(rhs);
  std::vector<Vec3> anchors(spec.strings.size(), center);
  for (int a = 0; a < d; ++a) anchors[g.incidence[a].string] = center + X.row(a).transpose();
  return anchors;
}

double ResidualReport::max() const {
  double m = 0;
  for (double r : interior) m = std::max(m, r);
  for (const auto& j : junctions) m = std::max(m, j.residual);
  return m;
}

std::string ResidualReport::describe(const NetworkSpec& spec) const {
  std::ostringstream os;
  os.precision(6);
  for (size_t i = 0; i < interior.size(); ++i)
    os << "string " << spec.strings[i].id << " interior residual " << interior[i] << "\n";
  for (const auto& j : junctions)
    os << "node " << spec.nodes[j.node].id << " mass " << j.local + 1 << " balance residual " << j.residual << "\n";
  return os.str();
}

ResidualReport equilibrium_residual(const NetworkSpec& spec, const EquilibriumConfig& eq, int samples) {
  ResidualReport rep;
  for (size_t i = 0; i < spec.strings.size(); ++i) {
    const auto& s = eq.strings[i];
    const auto& law = spec.law(static_cast<int>(i));
    double rho = spec.strings[i].density;
    double h = s.length / samples;
    std::vector<Vec3> G(samples + 1);
    for (int k = 0; k <= samples; ++k) G[k] = stress(law, s.Rx(k * h));
    auto dG = derivative(G, h, 1);
    double m = 0;
    for (int k = 0; k <= samples; ++k) m = std::max(m, (dG[k] - rho * spec.gravity * spec.up).norm());
    rep.interior.push_back(m);
  }
  for (size_t n = 0; n < spec.nodes.size(); ++n) {
    const auto& node = spec.nodes[n];
    if (node.kind != NodeKind::Multiple) continue;
    const auto& g = node.graph;
    Eigen::MatrixXd L = laplacian(g) * g.stiffness;
    for (int a = 0; a < g.size(); ++a) {
      const auto& ref = g.incidence[a];
      const auto& s = eq.strings[ref.string];
      double x = ref.end == End::Zero ? 0.0 : s.length;
      Vec3 r = orientation(ref.end) * stress(spec.law(ref.string), s.Rx(x));
      for (int b = 0; b < g.size(); ++b) r += L(a, b) * eq.strings[g.incidence[b].string].at(g.incidence[b].end);
      rep.junctions.push_back({static_cast<int>(n), a, r.norm()});
    }
  }
  return rep;
}

namespace {

struct Profile1 {
  std::vector<Vec3> R, Rx, Rxx;
  Mat3 compliance;  // integral of G_v^{-1} over the string
};

// Integrates R' = G^{-1}(sigma + rho g x e) from R(0) = start.
Profile1 integrate_string(const MaterialLaw& law, double rho, double g, const Vec3& up, double L, int n,
                          const Vec3& start, const Vec3& sigma) {
  Profile1 p;
  double h = L / n;
  p.R.resize(n + 1);
  p.Rx.resize(n + 1);
  p.Rxx.resize(n + 1);
  p.compliance.setZero();
  Vec3 guess = sigma.normalized() * 1.1;
  auto strain = [&](double x) {
    Vec3 v = invert_stress(law, sigma + rho * g * x * up, guess);
    guess = v;
    return v;
  };
  const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  const double gw[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
  p.R[0] = start;
  for (int k = 0; k <= n; ++k) {
    double x = k * h;
    p.Rx[k] = strain(x);
    p.Rxx[k] = stress_jacobian(law, p.Rx[k]).ldlt().solve(rho * g * up);
    if (k == n) break;
    Vec3 acc = Vec3::Zero();
    for (int q = 0; q < 3; ++q) {
      double xq = x + 0.5 * h * (1 + gx[q]);
      Vec3 v = strain(xq);
      acc += gw[q] * h * v;
      p.compliance += gw[q] * h * stress_jacobian(law, v).inverse();
    }
    guess = p.Rx[k];
    p.R[k + 1] = p.R[k] + acc;
  }
  return p;
}

}  // namespace

EquilibriumConfig shooting_equilibrium(const NetworkSpec& spec, const ShootingInput& in, ShootingOptions opt) {
  int ns = static_cast<int>(spec.strings.size());
  if (static_cast<int>(in.start.size()) != ns || static_cast<int>(in.end.size()) != ns)
    throw Error(ErrorKind::Config, "shooting needs start and end positions per string");
  int center = -1;
  for (int i = 0; i < ns; ++i) {
    if (spec.node_of(i, End::Length).kind == NodeKind::Multiple)
      throw Error(ErrorKind::Config, "shooting requires every x = L end at a simple node");
    const auto& n0 = spec.node_of(i, End::Zero);
    if (n0.kind == NodeKind::Multiple) {
      int k = spec.node_index(n0.id);
      if (center >= 0 && center != k) throw Error(ErrorKind::Config, "shooting supports a single junction (star)");
      center = k;
    }
  }
  const SpringGraph* g = center >= 0 ? &spec.nodes[center].graph : nullptr;
  Eigen::MatrixXd Lk;
  if (g) Lk = laplacian(*g) * g->stiffness;
  std::vector<bool> at_junction(ns, false);
  for (int i = 0; i < ns; ++i) at_junction[i] = g && g->local_index(i) >= 0;

  std::vector<Vec3> u(ns);
  for (int i = 0; i < ns; ++i) {
    if (at_junction[i]) {
      u[i] = in.start[i];
    } else {
      if (in.tangent_guess.size() != static_cast<size_t>(ns)) throw Error(ErrorKind::Config, "tangent guess missing");
      require_stretched(in.tangent_guess[i], spec.strings[i].id);
      u[i] = stress(spec.law(i), in.tangent_guess[i]);
    }
  }
  auto sigma_of = [&](const std::vector<Vec3>& uu, int i) -> Vec3 {
    if (!at_junction[i]) return uu[i];
    int a = g->local_index(i);
    Vec3 s = Vec3::Zero();
    for (int b = 0; b < g->size(); ++b) s += Lk(a, b) * uu[g->incidence[b].string];
    return s;  // -eps kappa (L X)_a with eps = -1
  };
  auto start_of = [&](const std::vector<Vec3>& uu, int i) -> Vec3 { return at_junction[i] ? uu[i] : in.start[i]; };
  auto evaluate = [&](const std::vector<Vec3>& uu, std::vector<Profile1>& prof) {
    Eigen::VectorXd F(3 * ns);
    prof.clear();
    for (int i = 0; i < ns; ++i) {
      Vec3 sig = sigma_of(uu, i);
      if (!(sig.norm() > 0))
        throw Error(ErrorKind::Stretch, "string " + std::to_string(spec.strings[i].id) + " has zero tension at x = 0");
      prof.push_back(integrate_string(spec.law(i), spec.strings[i].density, spec.gravity, spec.up,
                                      spec.strings[i].length, opt.intervals, start_of(uu, i), sig));
      for (const auto& v : prof.back().Rx) require_stretched(v, spec.strings[i].id);
      F.segment<3>(3 * i) = prof.back().R.back() - in.end[i];
    }
    return F;
  };

  std::vector<Profile1> prof;
  Eigen::VectorXd F = evaluate(u, prof);
  double lscale = 1;
  for (const auto& s : spec.strings) lscale = std::max(lscale, s.length);
  for (int it = 0; it < opt.max_iter && F.norm() > 1e-13 * lscale; ++it) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3 * ns, 3 * ns);
    for (int i = 0; i < ns; ++i) {
      if (!at_junction[i]) {
        J.block<3, 3>(3 * i, 3 * i) = prof[i].compliance;
        continue;
      }
      int a = g->local_index(i);
      J.block<3, 3>(3 * i, 3 * i) += Mat3::Identity();
      for (int b = 0; b < g->size(); ++b) {
        int k = g->incidence[b].string;
        J.block<3, 3>(3 * i, 3 * k) += Lk(a, b) * prof[i].compliance;
      }
    }
    Eigen::VectorXd du = J.fullPivLu().solve(-F);
    double lam = 1;
    bool accepted = false;
    for (int k = 0; k < 30 && !accepted; ++k, lam *= 0.5) {
      std::vector<Vec3> trial = u;
      for (int i = 0; i < ns; ++i) trial[i] += lam * du.segment<3>(3 * i);
      try {
        std::vector<Profile1> tp;
        Eigen::VectorXd Ft = evaluate(trial, tp);
        if (Ft.norm() < F.norm()) {
          u = trial;
          F = Ft;
          prof = tp;
          accepted = true;
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Stretch && e.kind() != ErrorKind::Newton) throw;
      }
    }
    if (!accepted) break;
  }

  EquilibriumConfig eq;
  eq.kind = EquilibriumKind::ShootingSolved;
  for (int i = 0; i < ns; ++i) {
    StringEquilibrium s;
    s.length = spec.strings[i].length;
    s.affine = false;
    s.samples.x0 = 0;
    s.samples.h = s.length / opt.intervals;
    s.samples.f = prof[i].R;
    s.samples.d1 = prof[i].Rx;
    s.samples.d2 = prof[i].Rxx;
    s.axis = default_skew_axis(prof[i].Rx[0]);
    eq.strings.push_back(s);
  }
  auto rep = equilibrium_residual(spec, eq);
  double pos_err = F.norm();
  if (pos_err > 1e-9 * lscale || rep.max() > opt.tol) {
    std::ostringstream os;
    os << "shooting did not converge: end mismatch " << pos_err << ", residual " << rep.max();
    throw Error(ErrorKind::Equilibrium, os.str());
  }
  return eq;
}

EquilibriumConfig sampled_equilibrium(const NetworkSpec& spec, const std::vector<std::vector<Vec3>>& samples) {
  if (samples.size() != spec.strings.size()) throw Error(ErrorKind::Config, "sampled equilibrium needs one profile per string");
  EquilibriumConfig eq;
  eq.kind = EquilibriumKind::UserSampled;
  for (size_t i = 0; i < samples.size(); ++i) {
    int n = static_cast<int>(samples[i].size()) - 1;
    if (n < 8) throw Error(ErrorKind::Config, "sampled equilibrium needs at least 9 samples per string");
    StringEquilibrium s;
    s.length = spec.strings[i].length;
    s.affine = false;
    s.samples.h = s.length / n;
    s.samples.f = samples[i];
    s.samples.d1 = derivative(samples[i], s.samples.h, 1);
    s.samples.d2 = derivative(samples[i], s.samples.h, 2);
    for (const auto& v : s.samples.d1) require_stretched(v, spec.strings[i].id);
    s.axis = default_skew_axis(s.samples.d1[0]);
    eq.strings.push_back(s);
  }
  return eq;
}

}  // namespace strnet
