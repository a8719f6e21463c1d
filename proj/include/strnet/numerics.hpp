#pragma once

#include <vector>

#include "strnet/core.hpp"

namespace strnet {

// Finite-difference weights (Fornberg) for the m-th derivative at z from nodes x.
std::vector<double> fd_weights(double z, const std::vector<double>& x, int m);

// Derivative of uniformly sampled data: 4th-order central stencils inside,
// one-sided stencils of the same order near both ends.
std::vector<Vec3> derivative(const std::vector<Vec3>& f, double h, int order);

// Derivatives 0..order at sample k estimated from one-sided samples
// (towards lower indices when `backward`), accuracy `accuracy` in h.
std::vector<Vec3> one_sided_derivatives(const std::vector<Vec3>& f, int k, double h, int order, bool backward,
                                        int accuracy = 4);

// Two-point Hermite polynomial of degree 2*order+1 on [0, span]: matches
// value and derivatives 0..order of `left` at 0 and of `right` at span.
class HermiteBridge {
 public:
  HermiteBridge(const std::vector<Vec3>& left, const std::vector<Vec3>& right, double span);
  Vec3 operator()(double s, int deriv = 0) const;

 private:
  std::vector<Vec3> c_;  // monomial coefficients in u = s / span
  double span_;
};

// Quintic Hermite interpolation of (f, f', f'') data on a uniform grid.
struct QuinticSamples {
  double x0 = 0, h = 1;
  std::vector<Vec3> f, d1, d2;
  // Returns value, first or second derivative at x.
  Vec3 eval(double x, int deriv) const;
};

// C-infinity step: 0 for s <= 0, 1 for s >= 1.
double smooth_step(double s);

// Composite Simpson weights for n+1 uniform samples (3/8 rule closes odd n).
std::vector<double> simpson_weights(int n, double h);

}  // namespace strnet
