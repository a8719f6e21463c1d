#include "strnet/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace strnet::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- registry

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, LawFactory>& registry() {
  static std::map<std::string, LawFactory> r = [] {
    std::map<std::string, LawFactory> init;
    init["quartic"] = [](const LawParams& p) {
      double h = p.count("h") ? p.at("h") : 1.0;
      double q = p.count("q") ? p.at("q") : 0.0;
      if (!(h > 0) || !(q >= 0)) throw Error(ErrorKind::Config, "quartic law needs h > 0 and q >= 0");
      return MaterialLaw::custom(
          [h, q](double s) { double d = s - 1; return 0.5 * h * d * d + 0.25 * q * d * d * d * d; },
          [h, q](double s) { double d = s - 1; return h * d + q * d * d * d; },
          [h, q](double s) { double d = s - 1; return h + 3 * q * d * d; }, 0.0, 1e6);
    };
    return init;
  }();
  return r;
}

}  // namespace

void register_law(const std::string& name, LawFactory factory) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(factory);
}

bool has_law(const std::string& name) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  return registry().count(name) > 0;
}

MaterialLaw make_law(const std::string& name, const LawParams& params) {
  LawFactory f;
  {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end()) throw Error(ErrorKind::Config, "no registered material law '" + name + "'");
    f = it->second;
  }
  return f(params);
}

// ---------------------------------------------------------------- json helpers

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, path + ": cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    size_t pos = std::min<size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    int line = 1, col = 1;
    for (size_t i = 0; i < pos; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    size_t k = what.find("syntax error");
    if (k == std::string::npos) k = what.rfind(": ") == std::string::npos ? 0 : what.rfind(": ") + 2;
    throw Error(ErrorKind::Config, origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what.substr(k));
  }
}

// A JSON object with the file and key path used in error messages.
class Obj {
 public:
  Obj(const json& j, std::string origin, std::string path) : j_(j), origin_(std::move(origin)), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(path_, msg); }
  [[noreturn]] void fail_at(const std::string& path, const std::string& msg) const {
    throw Error(ErrorKind::Config, origin_ + ": " + (path.empty() ? std::string("(root)") : path) + ": " + msg);
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const std::string& origin() const { return origin_; }
  bool has(const std::string& key) const { return j_.contains(key); }

  void allow(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool ok = false;
      for (const char* k : keys) ok = ok || it.key() == k;
      if (!ok) fail_at(sub(it.key()), "unknown key");
    }
  }

  const json& at(const std::string& key) const {
    if (!j_.contains(key)) fail_at(sub(key), "missing key");
    return j_.at(key);
  }

  double number(const std::string& key) const { return as_number(at(key), sub(key)); }
  double number(const std::string& key, double def) const { return has(key) ? number(key) : def; }
  int integer(const std::string& key) const { return as_int(at(key), sub(key)); }
  int integer(const std::string& key, int def) const { return has(key) ? integer(key) : def; }
  std::string str(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_string()) fail_at(sub(key), "expected a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& key, const std::string& def) const { return has(key) ? str(key) : def; }
  Vec3 vec3(const std::string& key) const { return as_vec3(at(key), sub(key)); }
  Obj obj(const std::string& key) const { return Obj(at(key), origin_, sub(key)); }
  const json& array(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_array()) fail_at(sub(key), "expected an array");
    return v;
  }
  std::vector<Vec3> vec3_list(const std::string& key) const {
    std::vector<Vec3> out;
    const json& a = array(key);
    for (size_t i = 0; i < a.size(); ++i) out.push_back(as_vec3(a[i], sub(key) + "[" + std::to_string(i) + "]"));
    return out;
  }
  std::vector<double> number_list(const std::string& key) const {
    std::vector<double> out;
    const json& a = array(key);
    for (size_t i = 0; i < a.size(); ++i) out.push_back(as_number(a[i], sub(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  double as_number(const json& v, const std::string& path) const {
    if (!v.is_number()) fail_at(path, "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) fail_at(path, "expected a finite number");
    return d;
  }
  int as_int(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail_at(path, "expected an integer");
    return v.get<int>();
  }
  Vec3 as_vec3(const json& v, const std::string& path) const {
    if (!v.is_array() || v.size() != 3) fail_at(path, "expected an array of 3 numbers");
    return Vec3(as_number(v[0], path + "[0]"), as_number(v[1], path + "[1]"), as_number(v[2], path + "[2]"));
  }

 private:
  const json& j_;
  std::string origin_, path_;
};

std::string idx(const std::string& path, size_t i) { return path + "[" + std::to_string(i) + "]"; }

}  // namespace

// ---------------------------------------------------------------- networks

namespace {

NetworkDoc network_from_json(const json& j, const std::string& origin) {
  Obj root(j, origin, "");
  root.allow({"description", "gravity", "up", "materials", "strings", "nodes", "springs"});
  NetworkDoc doc;
  NetworkSpec& spec = doc.spec;
  spec.gravity = root.number("gravity", 0.0);
  if (root.has("up")) {
    Vec3 up = root.vec3("up");
    if (up.norm() == 0) root.fail_at("up", "must be nonzero");
    spec.up = up.normalized();
  }

  const json& mats = root.array("materials");
  for (size_t i = 0; i < mats.size(); ++i) {
    Obj m(mats[i], origin, idx("materials", i));
    m.allow({"id", "kind", "h", "law", "params"});
    std::string id = m.str("id");
    if (doc.materials.count(id)) m.fail_at(m.sub("id"), "duplicate material '" + id + "'");
    MaterialEntry e;
    e.kind = m.str("kind");
    MaterialLaw law;
    if (e.kind == "hookean") {
      double h = m.number("h");
      if (!(h > 0)) m.fail_at(m.sub("h"), "must be positive");
      e.params["h"] = h;
      law = MaterialLaw::hookean(h);
    } else if (e.kind == "custom") {
      e.law = m.str("law");
      if (m.has("params")) {
        Obj p = m.obj("params");
        for (auto it = m.at("params").begin(); it != m.at("params").end(); ++it)
          e.params[it.key()] = p.number(it.key());
      }
      try {
        law = make_law(e.law, e.params);
      } catch (const Error& err) {
        m.fail(err.what());
      }
      auto bad = law.check();
      if (!bad.empty()) m.fail("material law check failed: " + bad.front());
    } else {
      m.fail_at(m.sub("kind"), "expected 'hookean' or 'custom'");
    }
    doc.materials[id] = e;
    spec.materials[id] = law;
  }

  const json& strs = root.array("strings");
  for (size_t i = 0; i < strs.size(); ++i) {
    Obj s(strs[i], origin, idx("strings", i));
    s.allow({"id", "length", "density", "material", "node_at_0", "node_at_L"});
    StringSpec ss;
    ss.id = s.integer("id");
    ss.length = s.number("length");
    ss.density = s.number("density");
    ss.material = s.str("material");
    ss.node_at_0 = s.integer("node_at_0");
    ss.node_at_L = s.integer("node_at_L");
    spec.strings.push_back(ss);
  }

  const json& nodes = root.array("nodes");
  for (size_t i = 0; i < nodes.size(); ++i) {
    Obj n(nodes[i], origin, idx("nodes", i));
    n.allow({"id", "kind"});
    NodeSpec ns;
    ns.id = n.integer("id");
    std::string kind = n.str("kind");
    if (kind == "clamped") ns.kind = NodeKind::ClampedSimple;
    else if (kind == "controlled") ns.kind = NodeKind::ControlledSimple;
    else if (kind == "multiple") ns.kind = NodeKind::Multiple;
    else n.fail_at(n.sub("kind"), "expected 'clamped', 'controlled' or 'multiple'");
    spec.nodes.push_back(ns);
  }

  std::set<int> with_springs;
  if (root.has("springs")) {
    const json& springs = root.array("springs");
    for (size_t i = 0; i < springs.size(); ++i) {
      Obj sp(springs[i], origin, idx("springs", i));
      sp.allow({"node", "stiffness", "mass", "masses", "incidence", "edges", "complete"});
      int id = sp.integer("node");
      int k = spec.node_index(id);
      if (k < 0) sp.fail_at(sp.sub("node"), "node " + std::to_string(id) + " not found");
      if (spec.nodes[k].kind != NodeKind::Multiple) sp.fail_at(sp.sub("node"), "node " + std::to_string(id) + " is not a multiple node");
      if (!with_springs.insert(id).second) sp.fail_at(sp.sub("node"), "duplicate springs entry for node " + std::to_string(id));
      SpringGraph g;
      g.stiffness = sp.number("stiffness");
      if (sp.has("incidence")) {
        const json& inc = sp.array("incidence");
        for (size_t a = 0; a < inc.size(); ++a) {
          Obj e(inc[a], origin, idx(sp.sub("incidence"), a));
          e.allow({"string", "end"});
          int sid = e.integer("string");
          int s = spec.string_index(sid);
          if (s < 0) e.fail_at(e.sub("string"), "string " + std::to_string(sid) + " not found");
          std::string end = e.str("end");
          if (end != "0" && end != "L") e.fail_at(e.sub("end"), "expected \"0\" or \"L\"");
          g.incidence.push_back({s, end == "0" ? End::Zero : End::Length});
        }
      } else {
        for (size_t s = 0; s < spec.strings.size(); ++s) {
          if (spec.strings[s].node_at_0 == id) g.incidence.push_back({static_cast<int>(s), End::Zero});
          if (spec.strings[s].node_at_L == id) g.incidence.push_back({static_cast<int>(s), End::Length});
        }
      }
      int d = static_cast<int>(g.incidence.size());
      if (sp.has("masses")) {
        g.masses = sp.number_list("masses");
        if (static_cast<int>(g.masses.size()) != d)
          sp.fail_at(sp.sub("masses"), "expected " + std::to_string(d) + " masses, one per incident string end");
      } else {
        g.masses.assign(d, sp.number("mass"));
      }
      g.adjacency = Eigen::MatrixXi::Zero(d, d);
      if (sp.has("complete") && sp.has("edges")) sp.fail("give either 'edges' or 'complete', not both");
      if (sp.has("complete")) {
        const json& c = sp.at("complete");
        if (!c.is_boolean()) sp.fail_at(sp.sub("complete"), "expected true or false");
        if (c.get<bool>())
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) g.adjacency(a, b) = a != b;
      } else if (sp.has("edges")) {
        const json& edges = sp.array("edges");
        for (size_t e = 0; e < edges.size(); ++e) {
          std::string p = idx(sp.sub("edges"), e);
          if (!edges[e].is_array() || edges[e].size() != 2) sp.fail_at(p, "expected a pair of local indices");
          int a = sp.as_int(edges[e][0], p + "[0]") - 1, b = sp.as_int(edges[e][1], p + "[1]") - 1;
          if (a < 0 || b < 0 || a >= d || b >= d) sp.fail_at(p, "local index out of range 1.." + std::to_string(d));
          if (a == b) sp.fail_at(p, "a spring needs two distinct masses");
          g.adjacency(a, b) = g.adjacency(b, a) = 1;
        }
      }
      spec.nodes[k].graph = g;
    }
  }
  for (const auto& n : spec.nodes)
    if (n.kind == NodeKind::Multiple && !with_springs.count(n.id))
      root.fail_at("springs", "multiple node " + std::to_string(n.id) + " has no springs entry");

  auto problems = validate(spec);
  if (!problems.empty()) {
    std::string msg = "invalid network: " + problems.front();
    for (size_t i = 1; i < problems.size(); ++i) msg += "; " + problems[i];
    throw Error(ErrorKind::Config, origin + ": " + msg);
  }
  return doc;
}

}  // namespace

NetworkDoc parse_network(const std::string& text, const std::string& origin) {
  return network_from_json(parse_json(text, origin), origin);
}

NetworkDoc load_network(const std::string& path) { return parse_network(read_file(path), path); }

std::string dump_network(const NetworkDoc& doc) {
  using ojson = nlohmann::ordered_json;
  const NetworkSpec& spec = doc.spec;
  ojson root;
  root["gravity"] = spec.gravity;
  root["up"] = {spec.up.x(), spec.up.y(), spec.up.z()};
  ojson mats = ojson::array();
  for (const auto& [id, e] : doc.materials) {
    ojson m;
    m["id"] = id;
    m["kind"] = e.kind;
    if (e.kind == "hookean") {
      m["h"] = e.params.at("h");
    } else {
      m["law"] = e.law;
      ojson p = ojson::object();
      for (const auto& [k, v] : e.params) p[k] = v;
      m["params"] = p;
    }
    mats.push_back(m);
  }
  root["materials"] = mats;
  ojson strs = ojson::array();
  for (const auto& s : spec.strings)
    strs.push_back({{"id", s.id},
                    {"length", s.length},
                    {"density", s.density},
                    {"material", s.material},
                    {"node_at_0", s.node_at_0},
                    {"node_at_L", s.node_at_L}});
  root["strings"] = strs;
  ojson nodes = ojson::array(), springs = ojson::array();
  for (const auto& n : spec.nodes) {
    const char* kind = n.kind == NodeKind::ClampedSimple ? "clamped"
                       : n.kind == NodeKind::ControlledSimple ? "controlled"
                                                               : "multiple";
    nodes.push_back({{"id", n.id}, {"kind", kind}});
    if (n.kind != NodeKind::Multiple) continue;
    const auto& g = n.graph;
    ojson sp;
    sp["node"] = n.id;
    sp["stiffness"] = g.stiffness;
    sp["masses"] = g.masses;
    ojson inc = ojson::array();
    for (const auto& e : g.incidence)
      inc.push_back({{"string", spec.strings[e.string].id}, {"end", e.end == End::Zero ? "0" : "L"}});
    sp["incidence"] = inc;
    ojson edges = ojson::array();
    for (int a = 0; a < g.size(); ++a)
      for (int b = a + 1; b < g.size(); ++b)
        if (g.adjacency(a, b)) edges.push_back({a + 1, b + 1});
    sp["edges"] = edges;
    springs.push_back(sp);
  }
  root["nodes"] = nodes;
  root["springs"] = springs;
  return root.dump(2) + "\n";
}

NetworkDoc network_doc(const NetworkSpec& spec) {
  NetworkDoc doc;
  doc.spec = spec;
  for (const auto& [id, law] : spec.materials) {
    if (law.kind() != MaterialLaw::Kind::Hookean)
      throw Error(ErrorKind::Config, "material '" + id + "' is custom; build the NetworkDoc with its registry entry");
    MaterialEntry e;
    e.params["h"] = law.h();
    doc.materials[id] = e;
  }
  return doc;
}

std::string structural_diff(const NetworkSpec& a, const NetworkSpec& b) {
  if (a.gravity != b.gravity) return "gravity differs";
  if (a.up != b.up) return "up direction differs";
  if (a.strings.size() != b.strings.size()) return "string count differs";
  for (size_t i = 0; i < a.strings.size(); ++i) {
    const auto &x = a.strings[i], &y = b.strings[i];
    if (x.id != y.id || x.length != y.length || x.density != y.density || x.material != y.material ||
        x.node_at_0 != y.node_at_0 || x.node_at_L != y.node_at_L)
      return "string " + std::to_string(x.id) + " differs";
  }
  if (a.nodes.size() != b.nodes.size()) return "node count differs";
  for (size_t k = 0; k < a.nodes.size(); ++k) {
    const auto &x = a.nodes[k], &y = b.nodes[k];
    std::string nid = "node " + std::to_string(x.id);
    if (x.id != y.id || x.kind != y.kind) return nid + " differs";
    if (x.kind != NodeKind::Multiple) continue;
    const auto &g = x.graph, &h = y.graph;
    if (g.stiffness != h.stiffness || g.masses != h.masses) return nid + " masses or stiffness differ";
    if (!(g.incidence == h.incidence)) return nid + " incidence differs";
    if (g.adjacency.rows() != h.adjacency.rows() || g.adjacency != h.adjacency) return nid + " adjacency differs";
  }
  if (a.materials.size() != b.materials.size()) return "material count differs";
  for (const auto& [id, law] : a.materials) {
    auto it = b.materials.find(id);
    if (it == b.materials.end()) return "material '" + id + "' missing";
    const auto& other = it->second;
    if (law.kind() != other.kind()) return "material '" + id + "' kind differs";
    for (double s : {1.0, 1.1, 1.25, 1.5})
      if (law.V(s) != other.V(s) || law.Vs(s) != other.Vs(s) || law.Vss(s) != other.Vss(s))
        return "material '" + id + "' law differs";
  }
  return "";
}

// ---------------------------------------------------------------- csv input

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    size_t a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
    s = a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  }
  return out;
}

bool to_double(const std::string& s, double& v) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  auto r = std::from_chars(b, e, v);
  return r.ec == std::errc() && r.ptr == e;
}

// Numeric rows of a CSV file; a first row that does not parse is a header.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;
};

Csv read_csv(const std::string& text, const std::string& origin) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    auto cells = split_line(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    size_t bad = 0;
    for (size_t c = 0; c < cells.size() && numeric; ++c)
      if (!to_double(cells[c], row[c])) {
        numeric = false;
        bad = c;
      }
    if (!numeric) {
      if (csv.rows.empty() && csv.header.empty()) {
        csv.header = cells;
        continue;
      }
      size_t col = 1;
      for (size_t c = 0; c < bad; ++c) col += cells[c].size() + 1;
      throw Error(ErrorKind::Config, origin + ":" + std::to_string(ln) + ":" + std::to_string(col) + ": expected a number, got '" +
                                         cells[bad] + "'");
    }
    if (!csv.rows.empty() && row.size() != csv.rows.front().size())
      throw Error(ErrorKind::Config, origin + ":" + std::to_string(ln) + ":1: expected " +
                                         std::to_string(csv.rows.front().size()) + " columns, got " + std::to_string(row.size()));
    csv.rows.push_back(row);
    csv.lines.push_back(ln);
  }
  return csv;
}

std::string resolve(const std::string& dir, const std::string& file) {
  fs::path p(file);
  if (p.is_relative() && !dir.empty()) p = fs::path(dir) / p;
  return p.string();
}

}  // namespace

// ---------------------------------------------------------------- scenarios

namespace {

Profile parse_shape(const Obj& o, double L, const std::string& dir) {
  o.allow({"shape", "amplitude", "center", "width", "k", "p", "value", "file"});
  std::string shape = o.str("shape");
  if (shape == "zero") return Profile::zero();
  if (shape == "constant") return Profile::constant(o.vec3("value"));
  if (shape == "gaussian" || shape == "bump") {
    Vec3 a = o.vec3("amplitude");
    double c = o.number("center"), w = o.number("width");
    if (!(w > 0)) o.fail_at(o.sub("width"), "must be positive");
    if (shape == "bump" && (c - w < 0 || c + w > L)) o.fail("bump support must lie inside the string");
    return shape == "gaussian" ? Profile::gaussian(a, c, w) : Profile::bump(a, c, w);
  }
  if (shape == "sine") {
    int k = o.integer("k", 1);
    if (k < 1) o.fail_at(o.sub("k"), "must be at least 1");
    return Profile::sine(o.vec3("amplitude"), k, L);
  }
  if (shape == "sine_power") {
    int p = o.integer("p", 4);
    if (p < 1) o.fail_at(o.sub("p"), "must be at least 1");
    return Profile::sine_power(o.vec3("amplitude"), p, L);
  }
  if (shape == "sampled") {
    std::string path = resolve(dir, o.str("file"));
    Csv csv = read_csv(read_file(path), path);
    std::vector<Vec3> v;
    for (const auto& row : csv.rows) {
      if (row.size() != 3 && row.size() != 4) throw Error(ErrorKind::Config, path + ": expected columns r1,r2,r3 or x,r1,r2,r3");
      size_t c = row.size() - 3;
      v.emplace_back(row[c], row[c + 1], row[c + 2]);
    }
    try {
      return Profile::sampled(L, v);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, path + ": " + e.what());
    }
  }
  o.fail_at(o.sub("shape"), "unknown shape '" + shape + "' (zero, constant, gaussian, bump, sine, sine_power, sampled)");
}

NetworkData parse_data(const Obj& parent, const std::string& key, const NetworkSpec& spec, const std::string& dir) {
  NetworkData data(spec.strings.size());
  if (!parent.has(key)) return data;
  const json& arr = parent.array(key);
  std::set<int> seen;
  for (size_t i = 0; i < arr.size(); ++i) {
    Obj e(arr[i], parent.origin(), idx(parent.sub(key), i));
    e.allow({"string", "r", "rt"});
    int id = e.integer("string");
    int s = spec.string_index(id);
    if (s < 0) e.fail_at(e.sub("string"), "string " + std::to_string(id) + " not found");
    if (!seen.insert(id).second) e.fail_at(e.sub("string"), "string " + std::to_string(id) + " listed twice");
    double L = spec.strings[s].length;
    if (e.has("r")) data[s].r = parse_shape(e.obj("r"), L, dir);
    if (e.has("rt")) data[s].rt = parse_shape(e.obj("rt"), L, dir);
  }
  return data;
}

EquilibriumSpec parse_equilibrium(const Obj& o, const NetworkSpec& spec, const std::string& dir) {
  EquilibriumSpec es;
  size_t n = spec.strings.size();
  es.kind = o.str("kind", "fan");
  auto sized = [&](const std::string& key) {
    auto v = o.vec3_list(key);
    if (v.size() != n) o.fail_at(o.sub(key), "expected one entry per string (" + std::to_string(n) + ")");
    return v;
  };
  if (es.kind == "fan") {
    o.allow({"kind", "stretch", "angles_deg", "center"});
    es.stretch = o.number("stretch", 1.25);
    if (!(es.stretch > 1)) o.fail_at(o.sub("stretch"), "must exceed 1 (stretched equilibrium)");
    if (o.has("angles_deg")) {
      es.angles_deg = o.number_list("angles_deg");
      if (es.angles_deg.size() != n) o.fail_at(o.sub("angles_deg"), "expected one angle per string");
    }
    if (o.has("center")) es.center = o.vec3("center");
  } else if (es.kind == "affine") {
    o.allow({"kind", "tangents", "anchors", "center"});
    es.tangents = sized("tangents");
    if (o.has("anchors")) {
      const json& a = o.at("anchors");
      if (!(a.is_string() && a.get<std::string>() == "balanced")) es.anchors = sized("anchors");
    }
    if (o.has("center")) es.center = o.vec3("center");
  } else if (es.kind == "shooting") {
    o.allow({"kind", "start", "end", "tangent_guess", "tol", "max_iter", "intervals"});
    es.start = sized("start");
    es.end = sized("end");
    if (o.has("tangent_guess")) es.tangent_guess = sized("tangent_guess");
    es.shooting.tol = o.number("tol", es.shooting.tol);
    es.shooting.max_iter = o.integer("max_iter", es.shooting.max_iter);
    es.shooting.intervals = o.integer("intervals", es.shooting.intervals);
    if (!(es.shooting.tol > 0)) o.fail_at(o.sub("tol"), "must be positive");
  } else if (es.kind == "sampled") {
    o.allow({"kind", "file"});
    std::string path = resolve(dir, o.str("file"));
    Csv csv = read_csv(read_file(path), path);
    es.samples.assign(n, {});
    for (size_t r = 0; r < csv.rows.size(); ++r) {
      const auto& row = csv.rows[r];
      if (row.size() != 5) throw Error(ErrorKind::Config, path + ":" + std::to_string(csv.lines[r]) + ":1: expected columns string,x,R1,R2,R3");
      int s = spec.string_index(static_cast<int>(row[0]));
      if (s < 0) throw Error(ErrorKind::Config, path + ":" + std::to_string(csv.lines[r]) + ":1: unknown string " + fmt(row[0]));
      es.samples[s].emplace_back(row[2], row[3], row[4]);
    }
  } else {
    o.fail_at(o.sub("kind"), "expected fan, affine, shooting or sampled");
  }
  return es;
}

double amplitude_of(const NetworkSpec& spec, const NetworkData& d) {
  double a = 0;
  for (size_t i = 0; i < d.size(); ++i)
    for (int j = 0; j <= 200; ++j) {
      double x = spec.strings[i].length * j / 200;
      a = std::max({a, d[i].r(x).norm(), d[i].rt(x).norm()});
    }
  return a;
}

void parse_horizon(const Obj& o, double& T, double& factor) {
  if (o.has("T") && o.has("T_factor")) o.fail("give either 'T' or 'T_factor', not both");
  T = o.number("T", 0.0);
  factor = o.number("T_factor", 0.0);
  if (o.has("T") && !(T > 0)) o.fail_at(o.sub("T"), "must be positive");
  if (o.has("T_factor") && !(factor > 0)) o.fail_at(o.sub("T_factor"), "must be positive");
}

}  // namespace

EquilibriumConfig build_equilibrium(const NetworkSpec& spec, const EquilibriumSpec& es) {
  size_t n = spec.strings.size();
  if (es.kind == "fan" || es.kind == "affine") {
    std::vector<Vec3> tangents = es.tangents;
    if (es.kind == "fan") {
      for (size_t i = 0; i < n; ++i) {
        double a = es.angles_deg.empty() ? 2 * M_PI * i / n : es.angles_deg[i] * M_PI / 180;
        tangents.push_back(es.stretch * Vec3(std::cos(a), std::sin(a), 0));
      }
    }
    std::vector<Vec3> anchors = es.anchors;
    if (anchors.empty()) {
      if (spec.star_center() < 0)
        throw Error(ErrorKind::Config, "balanced anchors need a star network; list explicit anchors");
      anchors = balanced_anchors(spec, tangents, es.center);
    }
    return zero_gravity_equilibrium(spec, tangents, anchors);
  }
  if (es.kind == "shooting") {
    ShootingInput in{es.start, es.end, es.tangent_guess};
    if (in.tangent_guess.empty())
      for (size_t i = 0; i < n; ++i) in.tangent_guess.push_back((es.end[i] - es.start[i]) / spec.strings[i].length);
    return shooting_equilibrium(spec, in, es.shooting);
  }
  if (es.kind == "sampled") return sampled_equilibrium(spec, es.samples);
  throw Error(ErrorKind::Config, "unknown equilibrium kind '" + es.kind + "'");
}

Scenario parse_scenario(const std::string& text, const std::string& path) {
  json j = parse_json(text, path);
  Obj root(j, path, "");
  root.allow({"description", "network", "equilibrium", "initial", "target", "numerics", "task", "legs"});
  Scenario sc;
  sc.path = path;
  sc.dir = fs::path(path).parent_path().string();

  const json& net = root.at("network");
  if (net.is_string()) {
    std::string np = resolve(sc.dir, net.get<std::string>());
    if (!fs::exists(np)) root.fail_at("network", "file not found: " + np);
    sc.network = load_network(np);
  } else {
    sc.network = network_from_json(net, path + " (network)");
  }
  NetworkSpec& spec = sc.network.spec;

  if (root.has("numerics")) {
    Obj o = root.obj("numerics");
    o.allow({"N", "cfl", "eps0", "tol_iface", "tol_compat", "tol_eq", "c0", "replay_tol", "threads", "energy_stride"});
    Numerics& nu = sc.num;
    nu.N = o.integer("N", nu.N);
    nu.cfl = o.number("cfl", nu.cfl);
    nu.eps0 = o.number("eps0", nu.eps0);
    nu.tol_iface = o.number("tol_iface", nu.tol_iface);
    nu.tol_compat = o.number("tol_compat", nu.tol_compat);
    nu.tol_eq = o.number("tol_eq", nu.tol_eq);
    nu.c0 = o.number("c0", nu.c0);
    nu.replay_tol = o.number("replay_tol", nu.replay_tol);
    nu.threads = o.integer("threads", nu.threads);
    nu.energy_stride = o.integer("energy_stride", nu.energy_stride);
    if (nu.N < 8) o.fail_at(o.sub("N"), "must be at least 8");
    if (!(nu.cfl > 0 && nu.cfl < 1)) o.fail_at(o.sub("cfl"), "must lie in (0, 1)");
    if (o.has("eps0") && !(nu.eps0 >= 0)) o.fail_at(o.sub("eps0"), "must be nonnegative");
    for (const char* k : {"tol_iface", "tol_compat", "tol_eq", "replay_tol", "c0"})
      if (o.has(k) && !(o.number(k) > 0)) o.fail_at(o.sub(k), "must be positive");
    if (nu.threads < 1) o.fail_at(o.sub("threads"), "must be at least 1");
    if (nu.energy_stride < 0) o.fail_at(o.sub("energy_stride"), "must be nonnegative");
  }

  if (root.has("task")) {
    Obj o = root.obj("task");
    o.allow({"kind", "T", "T_factor", "controlled", "snapshots", "controls_file"});
    sc.task = o.str("kind", sc.task);
    static const std::set<std::string> kinds{"analyze", "simulate", "synthesize", "verify", "equilibrium"};
    if (!kinds.count(sc.task)) o.fail_at(o.sub("kind"), "expected analyze, simulate, synthesize, verify or equilibrium");
    parse_horizon(o, sc.T, sc.T_factor);
    if (o.has("snapshots")) sc.snapshots = o.number_list("snapshots");
    sc.controls_file = o.str("controls_file", "");
    if (o.has("controlled")) {
      const json& a = o.array("controlled");
      std::set<int> ids;
      for (size_t i = 0; i < a.size(); ++i) {
        int id = o.as_int(a[i], idx(o.sub("controlled"), i));
        int k = spec.node_index(id);
        if (k < 0 || spec.nodes[k].kind == NodeKind::Multiple)
          o.fail_at(idx(o.sub("controlled"), i), "node " + std::to_string(id) + " is not a simple node");
        ids.insert(id);
        sc.controlled.push_back(id);
      }
      // The declared placement overrides the node kinds of the network file.
      for (auto& n : spec.nodes)
        if (n.kind != NodeKind::Multiple) n.kind = ids.count(n.id) ? NodeKind::ControlledSimple : NodeKind::ClampedSimple;
    }
  }

  if (root.has("legs")) {
    for (const char* k : {"equilibrium", "initial", "target"})
      if (root.has(k)) root.fail_at(k, "not allowed together with 'legs'");
    const json& legs = root.array("legs");
    if (legs.empty()) root.fail_at("legs", "needs at least one leg");
    for (size_t i = 0; i < legs.size(); ++i) {
      Obj o(legs[i], path, idx("legs", i));
      o.allow({"equilibrium", "initial", "target", "T", "T_factor"});
      LegSpec leg;
      if (o.has("equilibrium")) leg.equilibrium = parse_equilibrium(o.obj("equilibrium"), spec, sc.dir);
      leg.initial = parse_data(o, "initial", spec, sc.dir);
      leg.target = parse_data(o, "target", spec, sc.dir);
      parse_horizon(o, leg.T, leg.T_factor);
      if (leg.T == 0 && leg.T_factor == 0) o.fail("needs 'T' or 'T_factor'");
      sc.legs.push_back(std::move(leg));
    }
    sc.equilibrium = sc.legs.front().equilibrium;
    sc.initial = sc.legs.front().initial;
    sc.target = sc.legs.back().target;
  } else {
    if (root.has("equilibrium")) sc.equilibrium = parse_equilibrium(root.obj("equilibrium"), spec, sc.dir);
    sc.initial = parse_data(root, "initial", spec, sc.dir);
    sc.target = parse_data(root, "target", spec, sc.dir);
  }
  sc.amplitude = std::max(amplitude_of(spec, sc.initial), amplitude_of(spec, sc.target));
  for (const auto& leg : sc.legs)
    sc.amplitude = std::max({sc.amplitude, amplitude_of(spec, leg.initial), amplitude_of(spec, leg.target)});
  return sc;
}

Scenario load_scenario(const std::string& path) { return parse_scenario(read_file(path), path); }

double scenario_horizon(const Scenario& sc, const EquilibriumConfig& eq) {
  if (sc.T > 0) return sc.T;
  if (!(sc.T_factor > 0)) throw Error(ErrorKind::Config, sc.path + ": task.T or task.T_factor is required");
  const NetworkSpec& spec = sc.network.spec;
  int clamped = -1;
  if (spec.star_center() >= 0) {
    auto f = feasibility(spec);
    if (f.feasible) clamped = f.plan.clamped;
  }
  double eps0 = sc.num.eps0 >= 0 ? sc.num.eps0 : default_eps0(eq);
  return sc.T_factor * traveling_times(spec, eq, eps0, clamped).Tbar;
}

// ---------------------------------------------------------------- csv output

std::string fmt(double v) {
  if (v == 0) return "0";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

namespace {

void put3(std::ostream& os, const Vec3& v) { os << ',' << fmt(v.x()) << ',' << fmt(v.y()) << ',' << fmt(v.z()); }

}  // namespace

void write_traces_csv(std::ostream& os, const NetworkSpec& spec, const std::vector<TraceRecord>& traces) {
  os << "string,x,t,r1,r2,r3,rt1,rt2,rt3,rx1,rx2,rx3\n";
  size_t K = 0;
  for (const auto& tr : traces) K = std::max(K, tr.size());
  for (size_t k = 0; k < K; ++k)
    for (const auto& tr : traces) {
      if (k >= tr.size()) continue;
      const auto& s = spec.strings[tr.string];
      os << s.id << ',' << fmt(tr.end == End::Zero ? 0.0 : s.length) << ',' << fmt(tr.t0 + k * tr.dt);
      put3(os, tr.r[k]);
      put3(os, k < tr.rt.size() ? tr.rt[k] : Vec3::Zero());
      put3(os, k < tr.rx.size() ? tr.rx[k] : Vec3::Zero());
      os << '\n';
    }
}

void write_snapshots_csv(std::ostream& os, const NetworkSpec& spec, const std::vector<Snapshot>& snaps, int N) {
  os << "string,x,t,r1,r2,r3,rt1,rt2,rt3,rx1,rx2,rx3\n";
  for (const auto& sn : snaps)
    for (size_t i = 0; i < sn.field.size(); ++i) {
      const auto& st = sn.field[i];
      double L = spec.strings[i].length;
      for (int j = 0; j <= N; ++j) {
        os << spec.strings[i].id << ',' << fmt(L * j / N) << ',' << fmt(sn.t);
        put3(os, st.r[j]);
        put3(os, st.rt[j]);
        put3(os, st.rx[j]);
        os << '\n';
      }
    }
}

void write_energy_csv(std::ostream& os, const std::vector<double>& t, const std::vector<double>& e) {
  os << "t,energy\n";
  for (size_t k = 0; k < t.size() && k < e.size(); ++k) os << fmt(t[k]) << ',' << fmt(e[k]) << '\n';
}

void write_controls_csv(std::ostream& os, const ControlSet& cs) {
  os << "node,t,U1,U2,U3,Ut1,Ut2,Ut3,Utt1,Utt2,Utt3\n";
  for (const auto& s : cs.signals)
    for (size_t k = 0; k < s.t.size(); ++k) {
      os << s.node << ',' << fmt(s.t[k]);
      put3(os, s.U[k]);
      put3(os, s.Ut[k]);
      put3(os, s.Utt[k]);
      os << '\n';
    }
}

ControlSet parse_controls_csv(const std::string& text, const std::string& origin) {
  Csv csv = read_csv(text, origin);
  static const std::vector<std::string> want{"node", "t", "U1", "U2", "U3", "Ut1", "Ut2", "Ut3", "Utt1", "Utt2", "Utt3"};
  if (csv.header != want) throw Error(ErrorKind::Config, origin + ":1:1: expected header node,t,U1,U2,U3,Ut1,Ut2,Ut3,Utt1,Utt2,Utt3");
  ControlSet cs;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    int node = static_cast<int>(row[0]);
    if (cs.signals.empty() || cs.signals.back().node != node) {
      if (cs.find(node)) throw Error(ErrorKind::Config, origin + ":" + std::to_string(csv.lines[r]) + ":1: rows of node " + std::to_string(node) + " are not contiguous");
      cs.signals.push_back({node, {}, {}, {}, {}});
    }
    auto& s = cs.signals.back();
    if (!s.t.empty() && !(row[1] > s.t.back()))
      throw Error(ErrorKind::Config, origin + ":" + std::to_string(csv.lines[r]) + ":1: times must increase");
    s.t.push_back(row[1]);
    s.U.emplace_back(row[2], row[3], row[4]);
    s.Ut.emplace_back(row[5], row[6], row[7]);
    s.Utt.emplace_back(row[8], row[9], row[10]);
  }
  if (cs.signals.empty()) throw Error(ErrorKind::Config, origin + ": no control samples");
  const auto& t = cs.signals.front().t;
  if (t.size() < 2) throw Error(ErrorKind::Config, origin + ": need at least two samples per node");
  cs.dt = (t.back() - t.front()) / (t.size() - 1);
  for (const auto& s : cs.signals)
    if (s.t.size() != t.size() || std::abs(s.t.back() - t.back()) > 1e-12 * std::max(1.0, t.back()))
      throw Error(ErrorKind::Config, origin + ": node " + std::to_string(s.node) + " is sampled on a different time grid");
  return cs;
}

void write_equilibrium_csv(std::ostream& os, const NetworkSpec& spec, const EquilibriumConfig& eq, int N) {
  os << "string,x,R1,R2,R3,Rx1,Rx2,Rx3\n";
  for (size_t i = 0; i < spec.strings.size(); ++i) {
    double L = spec.strings[i].length;
    for (int j = 0; j <= N; ++j) {
      double x = L * j / N;
      os << spec.strings[i].id << ',' << fmt(x);
      put3(os, eq.strings[i].R(x));
      put3(os, eq.strings[i].Rx(x));
      os << '\n';
    }
  }
}

double replay_bound(double replay_tol, double amplitude) { return replay_tol * amplitude + 1e-10; }

std::string verification_report(const NetworkSpec& spec, const VerificationReport& rep, const ReportInfo& info) {
  std::ostringstream os;
  double worst = rep.max_terminal_error();
  double bound = replay_bound(info.replay_tol, info.amplitude);
  os << "# verification report\n";
  os << "horizon_T = " << fmt(info.T) << "\n";
  os << "Tbar = " << fmt(info.Tbar) << "\n";
  os << "Tstar = " << fmt(info.Tstar) << "\n";
  os << "N = " << info.N << "\n";
  if (!info.plan.empty()) os << "plan = " << info.plan << "\n";
  os << "seed = " << info.seed << "\n";
  os << "amplitude = " << fmt(info.amplitude) << "\n";
  for (size_t i = 0; i < rep.terminal_error_r.size(); ++i) {
    os << "terminal_error_r[" << spec.strings[i].id << "] = " << fmt(rep.terminal_error_r[i]) << "\n";
    os << "terminal_error_rt[" << spec.strings[i].id << "] = " << fmt(rep.terminal_error_rt[i]) << "\n";
  }
  os << "max_terminal_error = " << fmt(worst) << "\n";
  if (info.amplitude > 0) os << "relative_terminal_error = " << fmt(worst / info.amplitude) << "\n";
  os << "max_interface_residual = " << (rep.max_interface_residual ? fmt(*rep.max_interface_residual) : "n/a") << "\n";
  os << "replay_interface_residual = " << fmt(rep.replay_interface_residual) << "\n";
  os << "energy_drift = " << fmt(rep.energy_drift) << "\n";
  os << "acceptance_bound = " << fmt(bound) << "\n";
  os << "status = " << (worst <= bound ? "pass" : "fail") << "\n";
  return os.str();
}

// ---------------------------------------------------------------- svg

namespace {

std::string num(double v, int digits) {
  if (v == 0 || std::abs(v) < 1e-300) return "0";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, r.ptr);
}

std::string px(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, std::round(v * 100) / 100, std::chars_format::fixed, 2);
  return std::string(buf, r.ptr);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

// Data range padded by 5% of its span; a flat range by 5% of max(|value|, 1).
std::pair<double, double> padded(double lo, double hi) {
  double span = hi - lo;
  if (!(span > 0)) span = std::max(std::abs(lo), 1.0);
  return {lo - 0.05 * span, hi + 0.05 * span};
}

}  // namespace

std::string plot_svg(const std::vector<Series>& series, const PlotOptions& opt) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  const double W = 800, H = 500, left = 80, right = 170, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  bool any = false;
  for (const auto& s : series)
    for (size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      any = true;
      xlo = std::min(xlo, s.x[k]);
      xhi = std::max(xhi, s.x[k]);
      ylo = std::min(ylo, s.y[k]);
      yhi = std::max(yhi, s.y[k]);
    }
  if (!any) xlo = xhi = ylo = yhi = 0;
  auto [x0, x1] = padded(xlo, xhi);
  auto [y0, y1] = padded(ylo, yhi);
  auto X = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto Y = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" viewBox=\"0 0 800 500\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
  os << "<text x=\"" << px(left + pw / 2) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">"
     << escape(opt.title) << "</text>\n";
  os << "<rect x=\"" << px(left) << "\" y=\"" << px(top) << "\" width=\"" << px(pw) << "\" height=\"" << px(ph)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<line x1=\"" << px(X(xv)) << "\" y1=\"" << px(top + ph) << "\" x2=\"" << px(X(xv)) << "\" y2=\"" << px(top + ph + 5)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px(X(xv)) << "\" y=\"" << px(top + ph + 18)
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(xv, 4) << "</text>\n";
    os << "<line x1=\"" << px(left - 5) << "\" y1=\"" << px(Y(yv)) << "\" x2=\"" << px(left) << "\" y2=\"" << px(Y(yv))
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px(left - 8) << "\" y=\"" << px(Y(yv) + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(yv, 4) << "</text>\n";
  }
  os << "<text x=\"" << px(left + pw / 2) << "\" y=\"" << px(H - 10)
     << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << escape(opt.xlabel) << "</text>\n";
  os << "<text x=\"16\" y=\"" << px(top + ph / 2) << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
     << "transform=\"rotate(-90 16 " << px(top + ph / 2) << ")\">" << escape(opt.ylabel) << "</text>\n";
  if (!any)
    os << "<text x=\"" << px(left + pw / 2) << "\" y=\"" << px(top + ph / 2)
       << "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">no data</text>\n";

  for (size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* c = colors[i % 8];
    size_t n = std::min(s.x.size(), s.y.size());
    double ly = top + 14 + 18 * static_cast<double>(i);
    os << "<line x1=\"" << px(W - right + 12) << "\" y1=\"" << px(ly - 4) << "\" x2=\"" << px(W - right + 32) << "\" y2=\""
       << px(ly - 4) << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << px(W - right + 38) << "\" y=\"" << px(ly) << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << escape(s.label) << (n == 0 ? " (empty)" : "") << "</text>\n";
    if (n == 0) continue;
    size_t stride = std::max<size_t>(1, (n + 1999) / 2000);
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (size_t k = 0; k < n; k += stride) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      os << (first ? "" : " ") << px(X(s.x[k])) << ',' << px(Y(s.y[k]));
      first = false;
    }
    if ((n - 1) % stride != 0 && std::isfinite(s.x[n - 1]) && std::isfinite(s.y[n - 1]))
      os << ' ' << px(X(s.x[n - 1])) << ',' << px(Y(s.y[n - 1]));
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace strnet::io
