#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace strnet;

namespace {

std::vector<int> controlled_nodes(const NetworkSpec& spec) {
  std::vector<int> ids;
  for (auto& n : spec.nodes)
    if (n.kind == NodeKind::ControlledSimple) ids.push_back(n.id);
  return ids;
}

NetworkData demo_data(int n, double amp) {
  const Vec3 pattern[3] = {Vec3(0, 0, 1), Vec3(0, 1, 1), Vec3(1, 0, 1)};
  NetworkData d(n);
  for (int i = 0; i < n; ++i) d[i].r = Profile::sine_power(amp * pattern[i % 3], 4, 1.0);
  return d;
}

ControlProblem problem(const test::Star& s, const NetworkData& init, int N) {
  ControlProblem pb;
  pb.spec = &s.spec;
  pb.eq = &s.eq;
  pb.initial = init;
  pb.target = NetworkData(s.spec.strings.size());
  pb.opt.N = N;
  pb.opt.threads = 3;
  pb.T = 2.2 * traveling_times(s.spec, s.eq, default_eps0(s.eq), 0).Tbar;
  return pb;
}

TraceRecord trace_of(std::vector<Vec3> r, double dt) {
  TraceRecord t;
  t.dt = dt;
  t.rt.assign(r.size(), Vec3::Zero());
  t.rx = t.rt;
  t.r = std::move(r);
  return t;
}

}  // namespace

TEST_CASE("feasibility examples") {
  auto full = make_star(4, complete_spring_graph(4, 1, 0.01), MaterialLaw::hookean(1), 1, 1);
  auto f = feasibility(full);
  CHECK(f.feasible);
  CHECK(f.plan.variant == PlanVariant::FullRank);

  auto case5 = make_star(3, spring_graph_from_edges(3, {{1, 2}}, 1, 0.01), MaterialLaw::hookean(1), 1, 1);
  auto f5 = feasibility(case5);
  CHECK(!f5.feasible);
  CHECK(f5.reason.find("component {1} has no control") != std::string::npos);
  CHECK(f5.orphan == std::vector<int>{0});

  auto case6 = make_star(3, spring_graph_from_edges(3, {{0, 1}}, 1, 0.01), MaterialLaw::hookean(1), 1, 1);
  auto f6 = feasibility(case6, {2, 3});
  CHECK(f6.feasible);
  CHECK(f6.plan.variant == PlanVariant::ComponentSplit);
  REQUIRE(f6.plan.components.size() == 2);
  CHECK(f6.plan.components[0].strings == std::vector<int>{0, 1});
  CHECK(f6.plan.components[1].strings == std::vector<int>{2});

  CHECK(!feasibility(case6, {2}).feasible);
}

TEST_CASE("property: more controls never lose feasibility") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng() % 5);
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (rng() % 2) edges.push_back({a, b});
    auto spec = make_star(n, spring_graph_from_edges(n, edges, 1, 0.01), MaterialLaw::hookean(1), 1, 1);
    auto all = controlled_nodes(spec);
    unsigned mask = static_cast<unsigned>(rng()) & ((1u << all.size()) - 1);
    std::vector<int> some;
    for (size_t k = 0; k < all.size(); ++k)
      if (mask >> k & 1) some.push_back(all[k]);
    if (feasibility(spec, some).feasible) CHECK(feasibility(spec, all).feasible);
    int rank = laplacian_rank(laplacian(spec.nodes[spec.star_center()].graph));
    if (rank == n - 1) CHECK(feasibility(spec, all).feasible);
  }
}

TEST_CASE("connect traces") {
  double dt = 0.01;
  int K = 300, Ks = 100;
  SUBCASE("constants") {
    std::vector<Vec3> c(Ks + 1, Vec3(1, 2, 3));
    auto out = hermite_connect(c, c, K, dt, 3);
    for (auto& v : out) CHECK((v - Vec3(1, 2, 3)).norm() < 1e-10);
  }
  SUBCASE("zeros") {
    std::vector<Vec3> z(Ks + 1, Vec3::Zero());
    CHECK(test::max_norm(hermite_connect(z, z, K, dt, 3)) == 0);
  }
  SUBCASE("sine ramps are joined smoothly") {
    std::vector<Vec3> left(Ks + 1), right(Ks + 1);
    for (int k = 0; k <= Ks; ++k) {
      left[k] = Vec3(std::sin(k * dt), 0, 0);
      right[k] = Vec3(std::sin((K - Ks + k) * dt - 0.2), 0, 0);
    }
    auto l = trace_of(left, dt), r = trace_of(right, dt);
    r.t0 = (K - Ks) * dt;
    auto out = connect_traces(l, r, 3);
    REQUIRE(out.size() == static_cast<size_t>(K + 1));
    for (int k = 0; k <= Ks; ++k) {
      CHECK(out.r[k] == left[k]);
      CHECK(out.r[K - Ks + k] == right[k]);
    }
    std::vector<double> d4;
    for (int k = 2; k + 2 <= K; ++k)
      d4.push_back((out.r[k - 2] - 4 * out.r[k - 1] + 6 * out.r[k] - 4 * out.r[k + 1] + out.r[k + 2]).norm());
    // A C3 join keeps the seam's 4th differences at the level of the bridge's own.
    std::vector<double> interior(d4.begin() + Ks - 2, d4.begin() + K - Ks - 2);
    std::nth_element(interior.begin(), interior.begin() + interior.size() / 2, interior.end());
    double median = interior[interior.size() / 2];
    CHECK(*std::max_element(d4.begin(), d4.end()) <= 10 * std::max(median, 1e-12));
  }
}

TEST_CASE("junction transfer satisfies the interface system") {
  double dt = 0.005;
  int K = 400, Ks = 120;
  std::vector<Vec3> pulse(K + 1), strain(K + 1);
  for (int k = 0; k <= K; ++k) {
    double u = std::pow(std::sin(M_PI * k / K), 6);
    pulse[k] = 1e-4 * u * Vec3(0.3, 1, 0.5);
    strain[k] = 1e-4 * u * Vec3(1, -0.2, 0.4);
  }
  auto zero = trace_of(std::vector<Vec3>(K + 1, Vec3::Zero()), dt);

  auto check_graph = [&](const SpringGraph& g, PlanVariant variant, bool zero_input) {
    auto s = test::star(3, g);
    auto f = feasibility(s.spec);
    REQUIRE(f.feasible);
    CHECK(f.plan.variant == variant);
    std::vector<const TraceRecord*> fw(3, &zero), bw(3, &zero);
    auto p = zero_input ? zero.r : pulse;
    auto x = zero_input ? zero.r : strain;
    auto jt = junction_transfer(f.plan.components[0], s.spec, s.eq, dt, K, Ks, p, x, fw, bw);
    CHECK(interface_residual(s.spec, s.eq, dt, jt.position, jt.strain) <= 1e-8);
    for (int i = 1; i < 3; ++i) {
      // end segments are matched up to the differencing of the input pulse
      CHECK(jt.position[i][0].norm() < 1e-10);
      CHECK(jt.position[i][K].norm() < 1e-10);
      if (zero_input) CHECK(test::max_norm(jt.position[i]) + test::max_norm(jt.strain[i]) < 1e-15);
    }
  };
  SUBCASE("zero input") { check_graph(complete_spring_graph(3, 1, 0.01), PlanVariant::FullRank, true); }
  SUBCASE("full graph") { check_graph(complete_spring_graph(3, 1, 0.01), PlanVariant::FullRank, false); }
  SUBCASE("chain 1-2-3") {
    check_graph(spring_graph_from_edges(3, {{0, 1}, {1, 2}}, 1, 0.01), PlanVariant::DamagedCase1, false);
  }
}

TEST_CASE("zero problem gives zero controls") {
  auto s = test::star(3);
  auto pb = problem(s, NetworkData(3), 100);
  auto res = synthesize_local(pb);
  for (auto& sig : res.controls.signals) {
    int i = -1;
    for (size_t k = 0; k < s.spec.strings.size(); ++k)
      if (s.spec.strings[k].node_at_L == sig.node) i = static_cast<int>(k);
    REQUIRE(i >= 0);
    Vec3 Re = s.eq.strings[i].R(1.0);
    for (auto& U : sig.U) CHECK((U - Re).norm() < 1e-12);
    CHECK(test::max_norm(sig.Ut) < 1e-12);
  }
  auto rep = verify_controls(s.spec, s.eq, pb.initial, res.controls, pb.target, pb.T, 100);
  CHECK(rep.max_terminal_error() < 1e-12);
}

TEST_CASE("controls offset on one node") {
  auto s = test::star(3);
  auto pb = problem(s, NetworkData(3), 200);
  auto res = synthesize_local(pb);
  auto shifted = res.controls;
  for (auto& U : shifted.signals[0].U) U += Vec3(0, 0, 1e-4);
  auto rep = verify_controls(s.spec, s.eq, pb.initial, shifted, pb.target, pb.T, 200);
  double er = *std::max_element(rep.terminal_error_r.begin(), rep.terminal_error_r.end());
  CHECK(er > 0);
  CHECK(er <= 3e-4);
}

TEST_CASE("replay of a small demo") {
  auto s = test::star(3);
  double amp = 1e-3;
  auto pb = problem(s, demo_data(3, amp), 400);
  auto res = synthesize_local(pb);
  CHECK(res.diag.max_interface_residual <= 1e-8);
  auto rep = verify_controls(s.spec, s.eq, pb.initial, res.controls, pb.target, pb.T, 400);
  double er = *std::max_element(rep.terminal_error_r.begin(), rep.terminal_error_r.end());
  CHECK(er <= 0.05 * amp);

  SUBCASE("two legs through zero") {
    Leg a{&s.eq, pb.initial, NetworkData(3), pb.T};
    Leg b{&s.eq, NetworkData(3), NetworkData(3), pb.T};
    auto gl = synthesize_global_local(s.spec, {a, b}, pb.opt);
    CHECK(gl.T == doctest::Approx(2 * pb.T));
    auto r2 = verify_controls(s.spec, s.eq, pb.initial, gl.controls, NetworkData(3), gl.T, 400);
    double e2 = *std::max_element(r2.terminal_error_r.begin(), r2.terminal_error_r.end());
    CHECK(e2 <= 2 * 0.05 * amp);
  }
}

TEST_CASE("global-local") {
  auto s = test::star(3);
  auto pb = problem(s, NetworkData(3), 100);
  SUBCASE("one leg matches the local synthesis") {
    Leg a{&s.eq, pb.initial, pb.target, pb.T};
    auto gl = synthesize_global_local(s.spec, {a}, pb.opt);
    auto loc = synthesize_local(pb);
    REQUIRE(gl.controls.signals.size() == loc.controls.signals.size());
    for (size_t k = 0; k < loc.controls.signals.size(); ++k)
      CHECK(gl.controls.signals[k].U == loc.controls.signals[k].U);
  }
  SUBCASE("incompatible seam") {
    Leg a{&s.eq, NetworkData(3), NetworkData(3), pb.T};
    Leg b{&s.eq, demo_data(3, 1e-3), NetworkData(3), pb.T};
    try {
      synthesize_global_local(s.spec, {a, b}, pb.opt);
      FAIL("expected a seam error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("seam") != std::string::npos);
    }
  }
}
