#pragma once

#include <string>
#include <vector>

#include "strnet/network_model.hpp"
#include "strnet/numerics.hpp"

namespace strnet {

// Static configuration R^e of one string, evaluable anywhere on [0, L].
struct StringEquilibrium {
  double length = 1.0;
  bool affine = true;
  Vec3 anchor = Vec3::Zero();   // R^e(0) for affine strings
  Vec3 tangent = Vec3::UnitX(); // R^e_x for affine strings
  QuinticSamples samples;       // non-affine strings
  Vec3 axis = Vec3::UnitZ();    // skew axis for characteristic frames

  Vec3 R(double x) const { return affine ? Vec3(anchor + x * tangent) : samples.eval(x, 0); }
  Vec3 Rx(double x) const { return affine ? tangent : samples.eval(x, 1); }
  Vec3 Rxx(double x) const { return affine ? Vec3::Zero() : samples.eval(x, 2); }
  Vec3 at(End e) const { return R(e == End::Zero ? 0.0 : length); }
};

enum class EquilibriumKind { ZeroGravityAffine, ShootingSolved, UserSampled };

struct EquilibriumConfig {
  EquilibriumKind kind = EquilibriumKind::ZeroGravityAffine;
  std::vector<StringEquilibrium> strings;
  // Smallest |R^e_x| - 1 over all strings.
  double stretch_margin() const;
};

EquilibriumConfig zero_gravity_equilibrium(const NetworkSpec& spec, const std::vector<Vec3>& tangents,
                                           const std::vector<Vec3>& anchors);

// Junction-end positions R^e(0) that balance the springs of a star against the
// string stresses G(tangent); fails if some spring component has net stress.
std::vector<Vec3> balanced_anchors(const NetworkSpec& spec, const std::vector<Vec3>& tangents,
                                   const Vec3& center = Vec3::Zero());

struct ResidualReport {
  std::vector<double> interior;  // per string
  struct Junction {
    int node;
    int local;
    double residual;
  };
  std::vector<Junction> junctions;
  double max() const;
  std::string describe(const NetworkSpec& spec) const;
};

ResidualReport equilibrium_residual(const NetworkSpec& spec, const EquilibriumConfig& eq, int samples = 200);

struct ShootingOptions {
  double tol = 1e-9;
  int max_iter = 40;
  int intervals = 400;
};

// Per string: start = R(0) (fixed when x = 0 is a simple node, a guess at a
// junction), end = R(L) (fixed), tangent_guess used for simple-start strings.
struct ShootingInput {
  std::vector<Vec3> start, end, tangent_guess;
};

EquilibriumConfig shooting_equilibrium(const NetworkSpec& spec, const ShootingInput& in, ShootingOptions opt = {});

// Samples R(x_k), x_k = k L / n, per string; derivatives by finite differences.
EquilibriumConfig sampled_equilibrium(const NetworkSpec& spec, const std::vector<std::vector<Vec3>>& samples);

}  // namespace strnet
