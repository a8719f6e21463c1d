#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "strnet/cli_io.hpp"
#include "support.hpp"

using namespace strnet;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = STRNET_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("strnet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code;
  std::string out, err;
};

Run command(const std::string& name, const fs::path& scenario, const fs::path& out_dir, bool svg = false) {
  io::CommandOptions opt;
  opt.scenario = scenario.string();
  opt.out_dir = out_dir.string();
  opt.svg = svg;
  std::ostringstream out, err;
  int code = io::run_command(name, opt, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("network files round trip") {
  for (auto name : {"star3.json", "star4_lm.json", "star3_case6.json"}) {
    auto doc = io::load_network((kSource / "scenarios" / name).string());
    CHECK(validate(doc.spec).empty());
    auto again = io::parse_network(io::dump_network(doc));
    CHECK(io::structural_diff(doc.spec, again.spec) == "");
    CHECK(io::dump_network(again) == io::dump_network(doc));
  }
  auto a = io::load_network((kSource / "scenarios/star4_complete.json").string());
  auto b = io::load_network((kSource / "scenarios/star4_lm.json").string());
  CHECK(io::structural_diff(a.spec, b.spec) != "");

  auto built = make_star(4, complete_spring_graph(4, 1, 0.01), MaterialLaw::hookean(1), 1, 1);
  auto doc = io::parse_network(io::dump_network(io::network_doc(built)));
  CHECK(io::structural_diff(built, doc.spec) == "");
}

TEST_CASE("parse errors carry line and column") {
  try {
    io::parse_network("{\n  \"strings\": [\n    ,\n  ]\n}\n", "net.json");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).rfind("net.json:3:5:", 0) == 0);
  }
  try {
    io::parse_network("{\"strings\": [], \"colour\": 1}", "net.json");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("colour") != std::string::npos);
  }
}

TEST_CASE("custom material laws") {
  CHECK(io::has_law("quartic"));
  auto law = io::make_law("quartic", {{"h", 2}, {"q", 1}});
  CHECK(law.Vs(1.5) == doctest::Approx(2 * 0.5 + 0.125));
  CHECK_THROWS_AS(io::make_law("no-such-law", {}), Error);
}

TEST_CASE("csv output is byte stable") {
  auto s = test::star(3);
  NetworkData d(3);
  d[1].r = Profile::sine_power(Vec3(0, 1e-3, 0), 4, 1.0);
  auto grid = make_time_grid(s.spec, s.eq, 50, 0.8, default_eps0(s.eq), 0.5);
  RunOptions ro;
  ro.N = 50;
  std::string text[2];
  for (auto& t : text) {
    auto res = simulate_forward(s.spec, s.eq, sample_field(s.spec, 50, d), {}, grid, ro);
    std::ostringstream os;
    io::write_traces_csv(os, s.spec, res.traces);
    t = os.str();
  }
  CHECK(text[0] == text[1]);
  CHECK(io::fmt(0.0) == "0");
  CHECK(io::fmt(0.1) == "0.10000000000000001");
}

TEST_CASE("controls csv round trip") {
  ControlSet cs;
  cs.Tbar = 4.5;
  cs.Tstar = 2.25;
  cs.dt = 0.01;
  cs.N = 100;
  for (int node : {2, 3}) {
    ControlSignal sig;
    sig.node = node;
    for (int k = 0; k <= 20; ++k) {
      double t = k * 0.01;
      sig.t.push_back(t);
      sig.U.push_back(Vec3(std::sin(t), node * t, 1.0 / 3));
      sig.Ut.push_back(Vec3(std::cos(t), node, 0));
      sig.Utt.push_back(Vec3(-std::sin(t), 0, 0));
    }
    cs.signals.push_back(sig);
  }
  std::ostringstream a, b;
  io::write_controls_csv(a, cs);
  auto back = io::parse_controls_csv(a.str());
  io::write_controls_csv(b, back);
  CHECK(a.str() == b.str());
  REQUIRE(back.signals.size() == 2);
  CHECK(back.signals[1].U == cs.signals[1].U);

  try {
    io::parse_controls_csv("t,node,U_x\n0,2,abc\n", "c.csv");
    FAIL("expected a csv error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("c.csv:") == 0);
  }
}

TEST_CASE("svg plots") {
  io::Series zero{"string 1", {}, {}};
  for (int k = 0; k <= 10; ++k) {
    zero.x.push_back(0.1 * k);
    zero.y.push_back(0.0);
  }
  std::string svg = io::plot_svg({zero}, {"r(0, t)", "t", "|r|"});
  CHECK(svg == slurp(kSource / "tests/golden/zero_trace.svg"));
  CHECK(svg == io::plot_svg({zero}, {"r(0, t)", "t", "|r|"}));

  SUBCASE("axis bounds are the data bounds padded by 5%") {
    io::Series s{"a", {0, 10}, {-1, 3}};
    std::string p = io::plot_svg({s}, {});
    // x spans [-0.5, 10.5] and y spans [-1.2, 3.2] over a 550 x 410 plot area
    CHECK(p.find(">-1.2</text>") != std::string::npos);
    CHECK(p.find(">3.2</text>") != std::string::npos);
    CHECK(p.find(">-0.5</text>") != std::string::npos);
    CHECK(p.find(">10.5</text>") != std::string::npos);
    CHECK(p.find("points=\"105.00,431.36 605.00,58.64\"") != std::string::npos);
  }
  SUBCASE("empty channels") {
    std::string p = io::plot_svg({io::Series{"string 2", {}, {}}}, {});
    CHECK(p.find("string 2 (empty)") != std::string::npos);
    CHECK(p.find("no data") != std::string::npos);
    CHECK(p.find("polyline") == std::string::npos);
  }
}

TEST_CASE("analyze") {
  auto out = scratch("analyze");
  auto full = command("analyze", kSource / "scenarios/star4_complete.json", out);
  CHECK(full.code == 0);
  CHECK(full.out.find("rank 3, components 1, feasible (full rank)") != std::string::npos);

  auto c5 = command("analyze", kSource / "scenarios/star3_case5.json", out);
  CHECK(c5.code == 4);
  CHECK(c5.out.find("infeasible: component {1} unreachable") != std::string::npos);
  CHECK(c5.err.rfind("strnet: E_INFEASIBLE:", 0) == 0);
}

TEST_CASE("configuration errors exit with 2") {
  auto out = scratch("config");
  auto missing = command("analyze", out / "nope.json", out);
  CHECK(missing.code == 2);
  CHECK(missing.err.rfind("strnet: E_CONFIG:", 0) == 0);

  std::ofstream(out / "broken.json") << "{\n  \"network\": \"star3.json\",,\n}\n";
  auto broken = command("simulate", out / "broken.json", out);
  CHECK(broken.code == 2);
  CHECK(broken.err.find(":2:") != std::string::npos);

  CHECK(command("frobnicate", kSource / "scenarios/star3.json", out).code == 2);
}

TEST_CASE("short horizons are refused") {
  auto out = scratch("horizon");
  auto r = command("synthesize", kSource / "scenarios/short_horizon.json", out);
  CHECK(r.code == 4);
  CHECK(r.err.rfind("strnet: E_HORIZON:", 0) == 0);
  CHECK(r.err.find("T > 2") != std::string::npos);
}

TEST_CASE("zero simulation writes zero traces") {
  auto out = scratch("zero_sim");
  auto scenario = out / "zero.json";
  std::ofstream(scenario) << "{\"network\": \"" << (kSource / "scenarios/star3.json").string()
                          << "\", \"numerics\": {\"N\": 40, \"energy_stride\": 5},"
                          << " \"task\": {\"kind\": \"simulate\", \"T\": 0.5}}";
  auto r = command("simulate", scenario, out / "run", true);
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(out / "run/traces.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream fields(line);
    std::string f;
    int col = 0;
    while (std::getline(fields, f, ',')) {
      if (col++ < 3) continue;  // string, x, t
      CHECK(f == "0");
    }
    ++rows;
  }
  CHECK(rows > 0);
  CHECK(fs::exists(out / "run/traces.svg"));
  CHECK(fs::exists(out / "run/energy.csv"));
}

TEST_CASE("zero synthesis and verify") {
  auto out = scratch("zero_syn");
  auto r = command("synthesize", kSource / "scenarios/zero_synthesize.json", out);
  REQUIRE(r.code == 0);
  CHECK(slurp(out / "report.txt").find("status = pass") != std::string::npos);
  auto v = command("verify", kSource / "scenarios/zero_synthesize.json", out);
  CHECK(v.code == 0);
  CHECK(fs::exists(out / "verify_report.txt"));
}
