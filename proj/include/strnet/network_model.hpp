#pragma once

#include <map>
#include <string>
#include <vector>

#include "strnet/core.hpp"
#include "strnet/material_law.hpp"

namespace strnet {

enum class End { Zero, Length };

struct StringSpec {
  int id = 0;
  double length = 1.0;
  double density = 1.0;
  std::string material;
  int node_at_0 = 0;
  int node_at_L = 0;
};

// One string end; `string` indexes NetworkSpec::strings.
struct EndRef {
  int string = 0;
  End end = End::Zero;
  bool operator==(const EndRef&) const = default;
};

// Spring-mass insertion at a multiple node. Local index a carries mass
// masses[a] and is attached to the string end incidence[a].
struct SpringGraph {
  Eigen::MatrixXi adjacency;
  double stiffness = 1.0;
  std::vector<double> masses;
  std::vector<EndRef> incidence;

  int size() const { return static_cast<int>(masses.size()); }
  int local_index(int string) const;
};

enum class NodeKind { ClampedSimple, ControlledSimple, Multiple };

struct NodeSpec {
  int id = 0;
  NodeKind kind = NodeKind::ClampedSimple;
  SpringGraph graph;  // only for Multiple
};

enum class Topology { Star, Chain, Ring, General };

struct NetworkSpec {
  std::vector<StringSpec> strings;
  std::vector<NodeSpec> nodes;
  std::map<std::string, MaterialLaw> materials;
  double gravity = 0.0;
  Vec3 up = Vec3::UnitZ();

  int string_index(int id) const;
  int node_index(int id) const;
  const MaterialLaw& law(int s) const;
  const NodeSpec& node_of(int s, End end) const;
  Topology topology() const;
  // Index of the single Multiple node of a star, or -1.
  int star_center() const;
};

// Orientation sign of a string end at a node: -1 at x = 0, +1 at x = L.
inline double orientation(End e) { return e == End::Zero ? -1.0 : 1.0; }

Eigen::MatrixXd laplacian(const SpringGraph& g);
int laplacian_rank(const Eigen::MatrixXd& L, double tol = 1e-9);
std::vector<std::vector<int>> connected_components(const SpringGraph& g);
std::vector<std::string> validate(const NetworkSpec& spec);
const char* topology_name(Topology t);

// Builders used by tests, the CLI demos and the python module.
SpringGraph complete_spring_graph(int n, double kappa, double mass);
SpringGraph spring_graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges, double kappa,
                                    double mass);
// Star with n strings meeting node 0 at x = 0; string 1 ends at a clamped node,
// the others at controlled nodes. Strings and nodes get ids 1..n.
NetworkSpec make_star(int n, const SpringGraph& g, const MaterialLaw& law, double length, double rho);

}  // namespace strnet
