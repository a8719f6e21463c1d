#include "strnet/network_model.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace strnet {

int SpringGraph::local_index(int string) const {
  for (int a = 0; a < size(); ++a)
    if (incidence[a].string == string) return a;
  return -1;
}

int NetworkSpec::string_index(int id) const {
  for (size_t i = 0; i < strings.size(); ++i)
    if (strings[i].id == id) return static_cast<int>(i);
  return -1;
}

int NetworkSpec::node_index(int id) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

const MaterialLaw& NetworkSpec::law(int s) const {
  auto it = materials.find(strings.at(s).material);
  if (it == materials.end())
    throw Error(ErrorKind::Config, "unknown material '" + strings.at(s).material + "'");
  return it->second;
}

const NodeSpec& NetworkSpec::node_of(int s, End end) const {
  int id = end == End::Zero ? strings.at(s).node_at_0 : strings.at(s).node_at_L;
  int k = node_index(id);
  if (k < 0) throw Error(ErrorKind::Config, "string " + std::to_string(strings.at(s).id) + " references missing node");
  return nodes[k];
}

int NetworkSpec::star_center() const {
  int center = -1;
  for (size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].kind != NodeKind::Multiple) continue;
    if (center >= 0) return -1;
    center = static_cast<int>(k);
  }
  if (center < 0) return -1;
  std::set<int> far;
  for (const auto& s : strings) {
    if (s.node_at_0 != nodes[center].id) return -1;
    if (!far.insert(s.node_at_L).second) return -1;
  }
  return center;
}

Topology NetworkSpec::topology() const {
  if (star_center() >= 0) return Topology::Star;
  // Node degrees in the string graph decide chain versus ring.
  std::map<int, int> deg;
  for (const auto& s : strings) {
    deg[s.node_at_0]++;
    deg[s.node_at_L]++;
  }
  int ones = 0, twos = 0;
  for (auto& [id, d] : deg) {
    if (d == 1) ones++;
    else if (d == 2) twos++;
    else return Topology::General;
  }
  if (validate(*this).empty()) {
    if (ones == 2 && twos + 2 == static_cast<int>(deg.size())) return Topology::Chain;
    if (ones == 0 && twos == static_cast<int>(deg.size())) return Topology::Ring;
  }
  return Topology::General;
}

const char* topology_name(Topology t) {
  switch (t) {
    case Topology::Star: return "star";
    case Topology::Chain: return "chain";
    case Topology::Ring: return "ring";
    case Topology::General: return "general";
  }
  return "general";
}

Eigen::MatrixXd laplacian(const SpringGraph& g) {
  int d = g.size();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  for (int a = 0; a < d; ++a) {
    int deg = 0;
    for (int b = 0; b < d; ++b) {
      deg += g.adjacency(a, b);
      L(a, b) = -g.adjacency(a, b);
    }
    L(a, a) = deg;
  }
  return L;
}

int laplacian_rank(const Eigen::MatrixXd& L, double tol) {
  if (L.rows() != L.cols()) throw Error(ErrorKind::Config, "laplacian_rank: matrix is not square");
  if ((L - L.transpose()).cwiseAbs().maxCoeff() > 0)
    throw Error(ErrorKind::Config, "laplacian_rank: matrix is not symmetric");
  if (L.rows() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  double top = ev.cwiseAbs().maxCoeff();
  if (top == 0) return 0;
  int r = 0;
  for (int k = 0; k < ev.size(); ++k)
    if (std::abs(ev[k]) > tol * top) ++r;
  return r;
}

std::vector<std::vector<int>> connected_components(const SpringGraph& g) {
  int d = g.size();
  std::vector<int> parent(d);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b)
      if (g.adjacency(a, b)) parent[find(a)] = find(b);
  std::map<int, std::vector<int>> parts;
  for (int a = 0; a < d; ++a) parts[find(a)].push_back(a);
  std::vector<std::vector<int>> out;
  for (auto& [root, v] : parts) out.push_back(v);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> validate(const NetworkSpec& spec) {
  std::vector<std::string> out;
  auto sid = [](const StringSpec& s) { return "string " + std::to_string(s.id); };
  std::set<int> ids;
  for (const auto& n : spec.nodes)
    if (!ids.insert(n.id).second) out.push_back("duplicate node id " + std::to_string(n.id));
  std::set<int> sids;
  for (const auto& s : spec.strings) {
    if (!sids.insert(s.id).second) out.push_back("duplicate string id " + std::to_string(s.id));
    if (!(s.length > 0)) out.push_back(sid(s) + ": length must be positive");
    if (!(s.density > 0)) out.push_back(sid(s) + ": density must be positive");
    if (!spec.materials.count(s.material)) out.push_back(sid(s) + ": unknown material '" + s.material + "'");
    if (spec.node_index(s.node_at_0) < 0) out.push_back(sid(s) + ": node_at_0 " + std::to_string(s.node_at_0) + " not found");
    if (spec.node_index(s.node_at_L) < 0) out.push_back(sid(s) + ": node_at_L " + std::to_string(s.node_at_L) + " not found");
    if (s.node_at_0 == s.node_at_L) out.push_back(sid(s) + ": both ends at the same node");
  }
  if (spec.gravity < 0) out.push_back("gravity must be nonnegative");
  // Ends meeting each node.
  std::map<int, std::vector<EndRef>> ends;
  for (size_t i = 0; i < spec.strings.size(); ++i) {
    ends[spec.strings[i].node_at_0].push_back({static_cast<int>(i), End::Zero});
    ends[spec.strings[i].node_at_L].push_back({static_cast<int>(i), End::Length});
  }
  for (const auto& n : spec.nodes) {
    std::string nid = "node " + std::to_string(n.id);
    const auto& e = ends[n.id];
    if (n.kind != NodeKind::Multiple) {
      if (e.size() != 1) out.push_back(nid + ": simple node must meet exactly one string end (has " + std::to_string(e.size()) + ")");
      continue;
    }
    const auto& g = n.graph;
    int d = g.size();
    if (d == 0) out.push_back(nid + ": multiple node without spring graph");
    if (g.adjacency.rows() != d || g.adjacency.cols() != d) {
      out.push_back(nid + ": adjacency size does not match mass count");
      continue;
    }
    if (static_cast<int>(g.incidence.size()) != d) out.push_back(nid + ": incidence size does not match mass count");
    if (!(g.stiffness > 0)) out.push_back(nid + ": stiffness must be positive");
    for (int a = 0; a < d; ++a) {
      if (!(g.masses[a] > 0)) out.push_back(nid + ": mass " + std::to_string(a + 1) + " must be positive");
      if (g.adjacency(a, a) != 0) out.push_back(nid + ": adjacency diagonal must be zero");
      for (int b = 0; b < d; ++b) {
        if (g.adjacency(a, b) != g.adjacency(b, a)) out.push_back(nid + ": adjacency not symmetric");
        if (g.adjacency(a, b) != 0 && g.adjacency(a, b) != 1) out.push_back(nid + ": adjacency entries must be 0 or 1");
      }
    }
    for (const auto& ref : e) {
      int c = static_cast<int>(std::count(g.incidence.begin(), g.incidence.end(), ref));
      if (c != 1)
        out.push_back(nid + ": incidence must list string " + std::to_string(spec.strings[ref.string].id) +
                      " exactly once");
    }
    for (const auto& ref : g.incidence)
      if (std::find(e.begin(), e.end(), ref) == e.end()) out.push_back(nid + ": incidence lists an end not meeting this node");
  }
  // Connectivity of the string graph.
  if (!spec.strings.empty() && out.empty()) {
    std::map<int, int> parent;
    for (const auto& n : spec.nodes) parent[n.id] = n.id;
    std::function<int(int)> find = [&](int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); };
    for (const auto& s : spec.strings) parent[find(s.node_at_0)] = find(s.node_at_L);
    std::set<int> roots;
    for (const auto& n : spec.nodes) roots.insert(find(n.id));
    if (roots.size() > 1) out.push_back("string graph is not connected");
  }
  return out;
}

SpringGraph spring_graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges, double kappa, double mass) {
  SpringGraph g;
  g.adjacency = Eigen::MatrixXi::Zero(n, n);
  for (auto [a, b] : edges) g.adjacency(a, b) = g.adjacency(b, a) = 1;
  g.stiffness = kappa;
  g.masses.assign(n, mass);
  for (int i = 0; i < n; ++i) g.incidence.push_back({i, End::Zero});
  return g;
}

SpringGraph complete_spring_graph(int n, double kappa, double mass) {
  std::vector<std::pair<int, int>> e;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) e.emplace_back(a, b);
  return spring_graph_from_edges(n, e, kappa, mass);
}

NetworkSpec make_star(int n, const SpringGraph& g, const MaterialLaw& law, double length, double rho) {
  NetworkSpec spec;
  spec.materials["m"] = law;
  NodeSpec c;
  c.id = 0;
  c.kind = NodeKind::Multiple;
  c.graph = g;
  spec.nodes.push_back(c);
  for (int i = 1; i <= n; ++i) {
    spec.strings.push_back({i, length, rho, "m", 0, i});
    NodeSpec s;
    s.id = i;
    s.kind = i == 1 ? NodeKind::ClampedSimple : NodeKind::ControlledSimple;
    spec.nodes.push_back(s);
  }
  return spec;
}

}  // namespace strnet
