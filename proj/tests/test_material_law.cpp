#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace strnet;
using doctest::Approx;

TEST_CASE("hookean stress examples") {
  CHECK((stress(MaterialLaw::hookean(1), Vec3(1.2, 0, 0)) - Vec3(0.2, 0, 0)).norm() < 1e-15);
  CHECK((stress(MaterialLaw::hookean(2), Vec3(0, 1.5, 0)) - Vec3(0, 1.0, 0)).norm() < 1e-15);
  Vec3 u = Vec3(1, 2, 2).normalized();
  CHECK(stress(MaterialLaw::hookean(3), u).norm() < 1e-15);
}

TEST_CASE("stress outside the stretched regime") {
  CHECK_THROWS_AS(stress(MaterialLaw::hookean(1), Vec3::Zero()), Error);
}

TEST_CASE("stress jacobian") {
  auto law = MaterialLaw::hookean(1);
  Mat3 J = stress_jacobian(law, Vec3(1.25, 0, 0));
  CHECK((J - Vec3(1, 0.2, 0.2).asDiagonal().toDenseMatrix()).norm() < 1e-14);

  Vec3 v = Vec3(1, 1, 0).normalized();
  Mat3 J1 = stress_jacobian(law, v);
  CHECK((J1 - v * v.transpose()).norm() < 1e-14);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 100; ++k) {
    Vec3 w = Vec3(nd(rng), nd(rng), nd(rng)).normalized() * (1.1 + 0.05 * k / 10.0);
    Mat3 Jw = stress_jacobian(law, w), fd;
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = 1e-6;
      fd.col(c) = (stress(law, w + e) - stress(law, w - e)) / 2e-6;
    }
    CHECK((fd - Jw).norm() / Jw.norm() < 1e-6);
    CHECK((Jw - Jw.transpose()).norm() == 0);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat3>(Jw).eigenvalues().minCoeff() > 0);
  }
}

TEST_CASE("characteristic frame") {
  auto law = MaterialLaw::hookean(1);
  Vec3 v(1.25, 0, 0);
  auto f = characteristic_frame(law, 1.0, v, Vec3::UnitZ());
  CHECK(f.mu[0] == Approx(1.0).epsilon(1e-14));
  CHECK(f.mu[1] == Approx(0.44721359549995793).epsilon(1e-14));
  CHECK(f.mu[2] == Approx(0.44721359549995793).epsilon(1e-14));
  for (Vec3 axis : std::vector<Vec3>{Vec3::UnitZ(), Vec3(0, 1, 1).normalized(), Vec3(0.3, -1, 0.2).normalized()}) {
    auto g = characteristic_frame(law, 1.0, v, axis);
    Mat3 rec = g.Q * g.mu.cwiseAbs2().asDiagonal() * g.Q.transpose();
    CHECK((rec - stress_jacobian(law, v)).norm() < 1e-10);
    CHECK((g.Q.transpose() * g.Q - Mat3::Identity()).norm() < 1e-13);
  }
  CHECK_THROWS_AS(characteristic_frame(law, 1.0, Vec3(0, 0, 1.3), Vec3::UnitZ()), Error);
}

TEST_CASE("riemann variables") {
  auto law = MaterialLaw::hookean(1.5);
  auto f = characteristic_frame(law, 0.7, Vec3(1.1, 0.4, -0.2), Vec3::UnitZ());
  auto z = to_riemann(f, Vec3::Zero(), Vec3::Zero(), Vec3::Zero());
  CHECK(z.plus.norm() + z.minus.norm() + z.zero.norm() == 0);

  for (int k = 0; k < 3; ++k) {
    auto xi = to_riemann(f, f.Q.col(k), Vec3::Zero(), Vec3::Zero());
    Vec3 e = 0.5 * Vec3::Unit(k);
    CHECK((xi.plus - e).norm() < 1e-15);
    CHECK((xi.minus - e).norm() < 1e-15);
  }

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 200; ++k) {
    Vec3 w1(nd(rng), nd(rng), nd(rng)), w2(nd(rng), nd(rng), nd(rng)), w3(nd(rng), nd(rng), nd(rng));
    auto back = from_riemann(f, to_riemann(f, w1, w2, w3));
    CHECK((back.w1 - w1).norm() < 1e-12);
    CHECK((back.w2 - w2).norm() < 1e-12);
    CHECK((back.w3 - w3).norm() == 0);
  }
}

TEST_CASE("invert stress") {
  auto law = MaterialLaw::hookean(2);
  Vec3 v(0.3, 1.4, -0.5);
  Vec3 back = invert_stress(law, stress(law, v), Vec3(0, 1.2, 0));
  CHECK((back - v).norm() < 1e-12);
}

TEST_CASE("custom law invariants") {
  auto quartic = MaterialLaw::custom([](double s) { return 0.5 * (s - 1) * (s - 1) + 0.25 * std::pow(s - 1, 4); },
                                     [](double s) { return (s - 1) + std::pow(s - 1, 3); },
                                     [](double s) { return 1 + 3 * (s - 1) * (s - 1); }, 0.0, 10.0);
  CHECK(quartic.check().empty());
  auto bad = MaterialLaw::custom([](double s) { return s - 1; }, [](double) { return 1.0; },
                                 [](double) { return 0.0; }, 0.0, 10.0);
  CHECK(!bad.check().empty());
  CHECK_THROWS_AS(MaterialLaw::hookean(0), Error);
}
