#pragma once

#include <cmath>
#include <vector>

#include "strnet/control_synthesis.hpp"

namespace strnet::test {

inline std::vector<Vec3> fan(int n, double stretch) {
  std::vector<Vec3> t;
  for (int i = 0; i < n; ++i) {
    double a = 2 * M_PI * i / n;
    t.push_back(stretch * Vec3(std::cos(a), std::sin(a), 0));
  }
  return t;
}

struct Star {
  NetworkSpec spec;
  EquilibriumConfig eq;
};

// Uniform Hookean star at stretch 1.25, strings of unit length and density.
inline Star star(int n, const SpringGraph& g, bool clamp_all = false) {
  Star s;
  s.spec = make_star(n, g, MaterialLaw::hookean(1), 1.0, 1.0);
  if (clamp_all)
    for (auto& node : s.spec.nodes)
      if (node.kind == NodeKind::ControlledSimple) node.kind = NodeKind::ClampedSimple;
  auto t = fan(n, 1.25);
  s.eq = zero_gravity_equilibrium(s.spec, t, balanced_anchors(s.spec, t));
  return s;
}

inline Star star(int n, double mass = 0.01, bool clamp_all = false) {
  return star(n, complete_spring_graph(n, 1.0, mass), clamp_all);
}

inline NetworkSpec single_string(double gravity = 0) {
  NetworkSpec spec;
  spec.materials["m"] = MaterialLaw::hookean(1);
  spec.gravity = gravity;
  spec.strings.push_back({1, 1.0, 1.0, "m", 1, 2});
  spec.nodes.push_back({1, NodeKind::ClampedSimple, {}});
  spec.nodes.push_back({2, NodeKind::ClampedSimple, {}});
  return spec;
}

inline double max_norm(const std::vector<Vec3>& v) {
  double m = 0;
  for (auto& x : v) m = std::max(m, x.norm());
  return m;
}

inline double field_max(const Field& f) {
  double m = 0;
  for (auto& s : f) m = std::max({m, max_norm(s.r), max_norm(s.rt), max_norm(s.rx)});
  return m;
}

}  // namespace strnet::test
