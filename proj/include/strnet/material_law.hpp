#pragma once

#include <functional>
#include <string>
#include <vector>

#include "strnet/core.hpp"

namespace strnet {

// Elastic potential V(s) of a string, s = |R_x| the local stretch.
class MaterialLaw {
 public:
  enum class Kind { Hookean, Custom };
  using Fn = std::function<double(double)>;

  MaterialLaw() = default;
  static MaterialLaw hookean(double h);
  static MaterialLaw custom(Fn V, Fn Vs, Fn Vss, double lo, double hi);

  Kind kind() const { return kind_; }
  double h() const { return h_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  double V(double s) const { return kind_ == Kind::Hookean ? 0.5 * h_ * (s - 1) * (s - 1) : V_(s); }
  double Vs(double s) const { return kind_ == Kind::Hookean ? h_ * (s - 1) : Vs_(s); }
  double Vss(double s) const { return kind_ == Kind::Hookean ? h_ : Vss_(s); }

  bool in_domain(double s) const { return s > lo_ && s < hi_; }

  // Invariant violations found by sampling the domain (empty if fine).
  std::vector<std::string> check(int samples = 101) const;

 private:
  Kind kind_ = Kind::Hookean;
  double h_ = 1.0;
  double lo_ = 0.0;
  double hi_ = 1e300;
  Fn V_, Vs_, Vss_;
};

Vec3 stress(const MaterialLaw& law, const Vec3& v);
Mat3 stress_jacobian(const MaterialLaw& law, const Vec3& v);

// Longitudinal and transverse speeds at stretch s.
struct Speeds {
  double longitudinal;
  double transverse;
};
Speeds wave_speeds(const MaterialLaw& law, double rho, double s);

struct CharacteristicFrame {
  Mat3 Q;
  Vec3 mu;
  Vec3 axis;
};

inline constexpr double kThetaMin = 1e-3;

CharacteristicFrame characteristic_frame(const MaterialLaw& law, double rho, const Vec3& v,
                                         const Vec3& axis, double theta_min = kThetaMin);

// Unit vector orthogonal to the tangent, used as the skew axis of a string.
Vec3 default_skew_axis(const Vec3& tangent);

struct RiemannState {
  Vec3 plus, minus, zero;
};
struct FirstOrderState {
  Vec3 w1, w2, w3;
};

RiemannState to_riemann(const CharacteristicFrame& f, const Vec3& w1, const Vec3& w2, const Vec3& w3);
FirstOrderState from_riemann(const CharacteristicFrame& f, const RiemannState& xi);

// Solves stress(law, v) = y for a stretched v by damped Newton.
Vec3 invert_stress(const MaterialLaw& law, const Vec3& y, const Vec3& guess, double tol = 1e-14,
                   int max_iter = 60);

}  // namespace strnet
