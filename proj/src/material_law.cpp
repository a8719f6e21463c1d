#include "strnet/material_law.hpp"

#include <cmath>
#include <sstream>

namespace strnet {

MaterialLaw MaterialLaw::hookean(double h) {
  if (!(h > 0)) throw Error(ErrorKind::Config, "hookean modulus must be positive");
  MaterialLaw m;
  m.kind_ = Kind::Hookean;
  m.h_ = h;
  return m;
}

MaterialLaw MaterialLaw::custom(Fn V, Fn Vs, Fn Vss, double lo, double hi) {
  if (!(lo < 1 && 1 < hi)) throw Error(ErrorKind::Config, "custom law domain must contain 1");
  MaterialLaw m;
  m.kind_ = Kind::Custom;
  m.V_ = std::move(V);
  m.Vs_ = std::move(Vs);
  m.Vss_ = std::move(Vss);
  m.lo_ = lo;
  m.hi_ = hi;
  return m;
}

std::vector<std::string> MaterialLaw::check(int samples) const {
  std::vector<std::string> out;
  if (std::abs(V(1.0)) > 1e-12) out.push_back("V(1) != 0");
  if (std::abs(Vs(1.0)) > 1e-12) out.push_back("V_s(1) != 0");
  double a = std::max(lo_, 0.0), b = std::min(hi_, 4.0);
  for (int k = 1; k < samples; ++k) {
    double s = a + (b - a) * k / samples;
    if (!(Vss(s) > 0)) {
      std::ostringstream os;
      os << "V_ss(" << s << ") <= 0";
      out.push_back(os.str());
      break;
    }
    double e = 1e-5 * std::max(1.0, s);
    double fd1 = (V(s + e) - V(s - e)) / (2 * e);
    double fd2 = (Vs(s + e) - Vs(s - e)) / (2 * e);
    double sc1 = std::max(1e-8, std::abs(Vs(s))), sc2 = std::max(1e-8, std::abs(Vss(s)));
    if (std::abs(fd1 - Vs(s)) > 1e-4 * sc1 + 1e-9 || std::abs(fd2 - Vss(s)) > 1e-4 * sc2 + 1e-9) {
      std::ostringstream os;
      os << "derivatives inconsistent at s=" << s;
      out.push_back(os.str());
      break;
    }
  }
  return out;
}

namespace {
void check_domain(const MaterialLaw& law, double s) {
  if (!(s > 0) || !law.in_domain(s) || !std::isfinite(s)) {
    std::ostringstream os;
    os << "strain magnitude " << s << " outside the law's domain";
    throw Error(ErrorKind::Stretch, os.str());
  }
}
}  // namespace

Vec3 stress(const MaterialLaw& law, const Vec3& v) {
  double s = v.norm();
  check_domain(law, s);
  return law.Vs(s) / s * v;
}

Mat3 stress_jacobian(const MaterialLaw& law, const Vec3& v) {
  double s = v.norm();
  check_domain(law, s);
  Vec3 t = v / s;
  Mat3 tt = t * t.transpose();
  return law.Vss(s) * tt + (law.Vs(s) / s) * (Mat3::Identity() - tt);
}

Speeds wave_speeds(const MaterialLaw& law, double rho, double s) {
  check_domain(law, s);
  double l = law.Vss(s) / rho, t = law.Vs(s) / (rho * s);
  return {std::sqrt(std::max(l, 0.0)), std::sqrt(std::max(t, 0.0))};
}

CharacteristicFrame characteristic_frame(const MaterialLaw& law, double rho, const Vec3& v,
                                         const Vec3& axis, double theta_min) {
  double s = v.norm();
  check_domain(law, s);
  if (s < 1 + kDeltaStretch) {
    std::ostringstream os;
    os << "strain |v| = " << s << " is not stretched";
    throw Error(ErrorKind::Stretch, os.str());
  }
  Vec3 a = axis.normalized();
  Vec3 t = v / s;
  Vec3 mv = a.cross(v);
  double sin_angle = mv.norm() / s;
  if (sin_angle < std::sin(theta_min)) {
    std::ostringstream os;
    os << "strain within " << std::asin(std::min(1.0, sin_angle)) << " rad of the skew axis (minimum "
       << theta_min << ")";
    throw Error(ErrorKind::Frame, os.str());
  }
  CharacteristicFrame f;
  Vec3 n = mv / mv.norm();
  f.Q.col(0) = t;
  f.Q.col(1) = n;
  f.Q.col(2) = t.cross(n);
  Speeds sp = wave_speeds(law, rho, s);
  f.mu = Vec3(sp.longitudinal, sp.transverse, sp.transverse);
  f.axis = a;
  return f;
}

Vec3 default_skew_axis(const Vec3& tangent) {
  Vec3 t = tangent.normalized();
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(t[i]) < std::abs(t[k])) k = i;
  Vec3 e = Vec3::Zero();
  e[k] = 1;
  Vec3 a = e - e.dot(t) * t;
  return a.normalized();
}

RiemannState to_riemann(const CharacteristicFrame& f, const Vec3& w1, const Vec3& w2, const Vec3& w3) {
  Vec3 q1 = f.Q.transpose() * w1;
  Vec3 q2 = (f.Q.transpose() * w2).cwiseQuotient(f.mu);
  return {0.5 * (q1 - q2), 0.5 * (q1 + q2), w3};
}

FirstOrderState from_riemann(const CharacteristicFrame& f, const RiemannState& xi) {
  return {f.Q * (xi.plus + xi.minus), f.Q * f.mu.cwiseProduct(xi.minus - xi.plus), xi.zero};
}

Vec3 invert_stress(const MaterialLaw& law, const Vec3& y, const Vec3& guess, double tol, int max_iter) {
  double ny = y.norm();
  if (!(ny > 0) || !std::isfinite(ny))
    throw Error(ErrorKind::Stretch, "stress target is zero or non-finite; no stretched strain produces it");
  Vec3 v = guess;
  if (!(v.norm() > 1 + kDeltaStretch) || !law.in_domain(v.norm())) v = 1.1 * y / ny;
  double scale = std::max(1.0, ny);
  Vec3 r = stress(law, v) - y;
  for (int it = 0; it < max_iter; ++it) {
    if (r.norm() <= tol * scale) return v;
    Vec3 dv = stress_jacobian(law, v).ldlt().solve(-r);
    double lam = 1.0;
    for (int k = 0; k < 40; ++k, lam *= 0.5) {
      Vec3 trial = v + lam * dv;
      double s = trial.norm();
      if (s > 1 + kDeltaStretch && law.in_domain(s)) {
        Vec3 rt = stress(law, trial) - y;
        if (rt.norm() < r.norm() || rt.norm() <= tol * scale) {
          v = trial;
          r = rt;
          break;
        }
      }
    }
  }
  if (r.norm() <= 1e3 * tol * scale) return v;
  std::ostringstream os;
  os << "stress inversion did not converge (residual " << r.norm() << ")";
  throw Error(ErrorKind::Newton, os.str());
}

}  // namespace strnet
