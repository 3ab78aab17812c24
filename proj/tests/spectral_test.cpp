#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gridgfv/analysis.hpp"
#include "test_util.hpp"

namespace gridgfv {
namespace {

using testing::load_fixture;

PowerFlowSolution flat_solution(const NetworkCase& c) {
  PowerFlowSolution s;
  const auto n = static_cast<Eigen::Index>(c.bus_count());
  s.vm = Eigen::VectorXd::Ones(n);
  s.va = Eigen::VectorXd::Zero(n);
  s.p_inj = s.q_inj = Eigen::VectorXd::Zero(n);
  for (const auto& b : c.buses) s.bus_ids.push_back(b.id);
  return s;
}

Eigen::MatrixXd path_laplacian(int n) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    l(i, i) += 1;
    l(i + 1, i + 1) += 1;
    l(i, i + 1) -= 1;
    l(i + 1, i) -= 1;
  }
  return l;
}

Eigen::MatrixXd two_bus_l() {
  Eigen::MatrixXd l(2, 2);
  l << 5, -5, -5, 5;
  return l;
}

TEST(BuildLaplacian, TwoBus) {
  auto c = testing::two_bus();
  auto s = flat_solution(c);
  auto l = build_laplacian(c, s);
  EXPECT_NEAR((l.l - two_bus_l()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  s.va(1) = -std::numbers::pi / 3;
  l = build_laplacian(c, s);
  EXPECT_NEAR(l.l(0, 1), -2.5, 1e-12);
  EXPECT_NEAR(l.l(1, 0), -2.5, 1e-12);
}

TEST(BuildLaplacian, RejectsAngleBeyondNinetyDegrees) {
  auto c = testing::two_bus();
  auto s = flat_solution(c);
  s.va(1) = 1.7;
  EXPECT_THROW(build_laplacian(c, s), NumericalError);
  s.va(1) = 2 * std::numbers::pi - 0.1;  // wraps to a small difference
  EXPECT_NO_THROW(build_laplacian(c, s));
}

TEST(BuildLaplacian, FixturesMatchPerBranchAccumulation) {
  for (const auto& name : testing::bundled_fixtures()) {
    auto c = load_fixture(name);
    auto sol = solve_powerflow(c);
    auto l = build_laplacian(c, sol).l;
    const auto n = static_cast<Eigen::Index>(c.bus_count());
    Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        double b = 0.0;
        for (const auto& br : c.branches) {
          bool ij = br.from_bus == c.buses[i].id && br.to_bus == c.buses[j].id;
          bool ji = br.from_bus == c.buses[j].id && br.to_bus == c.buses[i].id;
          if (br.in_service && (ij || ji)) b += br.x / (br.r * br.r + br.x * br.x);
        }
        expect(i, j) = -sol.vm(i) * sol.vm(j) * b * std::cos(sol.va(i) - sol.va(j));
      }
      expect(i, i) = -expect.row(i).sum();
    }
    EXPECT_LE((l - expect).cwiseAbs().maxCoeff(), 1e-10) << name;
    EXPECT_LE(l.rowwise().sum().cwiseAbs().maxCoeff(), 1e-10) << name;
    EXPECT_LE((l - l.transpose()).cwiseAbs().maxCoeff(), 1e-12) << name;
    auto ev = eigendecompose(l).eigenvalues;
    EXPECT_GE(ev(0), -1e-9 * ev.maxCoeff()) << name;
  }
}

TEST(Eigendecompose, TwoBus) {
  auto d = eigendecompose(two_bus_l());
  EXPECT_NEAR(d.eigenvalues(0), 0.0, 1e-12);
  EXPECT_NEAR(d.eigenvalues(1), 10.0, 1e-12);
  EXPECT_NEAR(d.eigenvectors(0, 1), -d.eigenvectors(1, 1), 1e-12);
  EXPECT_EQ(d.zero_multiplicity, 1);
}

// Determinant by cofactor expansion, independent of any factorization.
double cofactor_det(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  if (n == 1) return a(0, 0);
  double det = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::MatrixXd minor(n - 1, n - 1);
    for (Eigen::Index i = 1; i < n; ++i)
      for (Eigen::Index j = 0, jj = 0; j < n; ++j)
        if (j != c) minor(i - 1, jj++) = a(i, j);
    det += ((c % 2) ? -1.0 : 1.0) * a(0, c) * cofactor_det(minor);
  }
  return det;
}

TEST(Eigendecompose, PathOfFour) {
  auto l = path_laplacian(4);
  auto d = eigendecompose(l);
  const double s2 = std::sqrt(2.0);
  Eigen::Vector4d expect(0.0, 2 - s2, 2.0, 2 + s2);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(d.eigenvalues(i), expect(i), 1e-12);
    EXPECT_NEAR(cofactor_det(l - expect(i) * Eigen::MatrixXd::Identity(4, 4)), 0.0, 1e-12);
  }
  for (int a = 0; a < 4; ++a) {
    Eigen::VectorXd r = l * d.eigenvectors.col(a) - d.eigenvalues(a) * d.eigenvectors.col(a);
    EXPECT_LE(r.norm(), 1e-8 * 4.0);
  }
}

TEST(Eigendecompose, TwoIslands) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(4, 4);
  l.topLeftCorner(2, 2) = two_bus_l();
  l.bottomRightCorner(2, 2) = two_bus_l();
  auto d = eigendecompose(l);
  EXPECT_EQ(d.zero_multiplicity, 2);
  EXPECT_THROW(fiedler(d), DataError);
}

TEST(Fiedler, TwoBus) {
  auto f = fiedler(eigendecompose(two_bus_l()));
  EXPECT_NEAR(f.lambda2, 10.0, 1e-12);
  EXPECT_NEAR(f.vector(0), 1.0, 1e-12);
  EXPECT_NEAR(f.vector(1), 1.0, 1e-12);
}

TEST(Fiedler, PathMonotoneTowardsMiddle) {
  for (int n : {4, 7, 10}) {
    auto f = fiedler(eigendecompose(path_laplacian(n)));
    EXPECT_NEAR(f.lambda2, 2 - 2 * std::cos(std::numbers::pi / n), 1e-12);
    // |phi_2(i)| is proportional to |cos(pi (i + 1/2) / n)|.
    Eigen::VectorXd expect(n);
    for (int i = 0; i < n; ++i) expect(i) = std::abs(std::cos(std::numbers::pi * (i + 0.5) / n));
    expect /= expect.maxCoeff();
    EXPECT_LE((f.vector - expect).cwiseAbs().maxCoeff(), 1e-10);
    for (int i = 0; i + 1 < n / 2; ++i) EXPECT_GT(f.vector(i), f.vector(i + 1));
    EXPECT_FALSE(f.degenerate);
  }
}

TEST(Fiedler, CompleteGraphIsFlaggedDegenerate) {
  Eigen::MatrixXd l = 4.0 * Eigen::MatrixXd::Identity(4, 4) - Eigen::MatrixXd::Ones(4, 4);
  auto f = fiedler(eigendecompose(l));
  EXPECT_NEAR(f.lambda2, 4.0, 1e-12);
  EXPECT_TRUE(f.degenerate);
}

TEST(NodalInertia, SingleGeneratorSingleBus) {
  NetworkCase c;
  c.buses = {{.id = 1, .kind = BusKind::slack}};
  c.generators = {{.id = 1, .bus = 1, .h = 4.2, .xd_p = 0.3, .mva_base = 100}};
  auto sol = solve_powerflow(c);
  auto aug = augment_internal_nodes(build_ybus(c), c);
  auto h = nodal_inertia(c, sol, internal_emfs(c, sol), frequency_participation(aug), bus_generator_susceptance(aug));
  EXPECT_NEAR(h.h(0), 4.2, 1e-12);
}

TEST(NodalInertia, SymmetricThreeBus) {
  // Generators at both ends of a symmetric unloaded chain 1 - 2 - 3. At the
  // middle bus D = [0.5, 0.5], E = 1, angles 0 and both couplings are equal,
  // so h_2 = 2c / (2 * 0.5 c / H) = 2H.
  const double big_h = 3.0;
  NetworkCase c;
  c.buses = {{.id = 1, .kind = BusKind::slack}, {.id = 2}, {.id = 3, .kind = BusKind::pv}};
  c.branches = {{.from_bus = 1, .to_bus = 2, .x = 0.1}, {.from_bus = 2, .to_bus = 3, .x = 0.1}};
  c.generators = {{.id = 1, .bus = 1, .h = big_h, .xd_p = 0.2, .mva_base = 100},
                  {.id = 2, .bus = 3, .h = big_h, .xd_p = 0.2, .mva_base = 100}};
  auto sol = solve_powerflow(c);
  auto emfs = internal_emfs(c, sol);
  auto aug = augment_internal_nodes(build_ybus(c), c);
  auto d = frequency_participation(aug);
  auto b = bus_generator_susceptance(aug);
  EXPECT_NEAR(d.d(1, 0), 0.5, 1e-12);
  EXPECT_NEAR(d.d(1, 1), 0.5, 1e-12);
  EXPECT_NEAR(b(1, 0), b(1, 1), 1e-12);
  const double cpl = b(1, 0) * emfs[0].e_mag * std::cos(emfs[0].delta0 - sol.va(1));
  const double direct = (2 * cpl) / (2 * 0.5 * cpl / big_h);
  auto h = nodal_inertia(c, sol, emfs, d, b);
  EXPECT_NEAR(h.h(1), direct, 1e-10);
  EXPECT_NEAR(h.h(1), 2 * big_h, 1e-10);
}

TEST(NodalInertia, FixturesPositiveAndFinite) {
  for (const auto& name : testing::bundled_fixtures()) {
    auto a = analyze_case(load_fixture(name));
    EXPECT_TRUE(a.inertia.h.allFinite()) << name;
    EXPECT_GT(a.inertia.h.minCoeff(), 0.0) << name;
  }
}

TEST(SolveGep, IdentityInertiaIsStandardProblem) {
  auto l = path_laplacian(5);
  auto gep = solve_gep(l, Eigen::VectorXd::Ones(5));
  auto std_d = eigendecompose(l);
  EXPECT_LE((gep.eigenvalues - std_d.eigenvalues).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SolveGep, UniformInertiaScalesEigenvalues) {
  auto l = path_laplacian(5);
  auto gep = solve_gep(l, Eigen::VectorXd::Constant(5, 4.0));
  auto std_d = eigendecompose(l);
  EXPECT_LE((gep.eigenvalues - std_d.eigenvalues / 4.0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(std::abs(gep.eigenvectors.col(1).normalized().dot(std_d.eigenvectors.col(1))), 1.0, 1e-12);
}

TEST(SolveGep, TwoBusPencil) {
  // det(L - lambda N) = (5 - l)(5 - 4l) - 25 = 4 l^2 - 25 l  =>  l = 25/4.
  auto gep = solve_gep(two_bus_l(), Eigen::Vector2d(1.0, 4.0));
  EXPECT_NEAR(gep.eigenvalues(0), 0.0, 1e-12);
  EXPECT_NEAR(gep.eigenvalues(1), 6.25, 1e-12);
  Eigen::VectorXd v = gep.eigenvectors.col(1) / gep.eigenvectors(0, 1);
  EXPECT_NEAR(v(1), -0.25, 1e-12);
  auto g = gfv(gep);
  EXPECT_NEAR(g.dynamic_connectivity, 6.25, 1e-12);
  EXPECT_NEAR(g.gfv(0), 1.0, 1e-15);
  EXPECT_NEAR(g.gfv(1), 0.25, 1e-12);
}

TEST(SolveGep, RejectsNonPositiveInertia) {
  EXPECT_THROW(solve_gep(two_bus_l(), Eigen::Vector2d(1.0, 0.0)), DataError);
  EXPECT_THROW(solve_gep(two_bus_l(), Eigen::Vector2d(-1.0, 2.0)), DataError);
}

Eigen::MatrixXd random_connected_laplacian(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> w(0.1, 10.0);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  auto add = [&](int i, int j, double x) {
    l(i, i) += x;
    l(j, j) += x;
    l(i, j) -= x;
    l(j, i) -= x;
  };
  for (int i = 1; i < n; ++i) add(i, static_cast<int>(rng() % i), w(rng));  // spanning tree
  for (int e = 0; e < n; ++e) {
    int i = static_cast<int>(rng() % n), j = static_cast<int>(rng() % n);
    if (i != j) add(i, j, w(rng));
  }
  return l;
}

TEST(GfvProperties, RandomPencils) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> hdist(0.5, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng() % 10);
    auto l = random_connected_laplacian(rng, n);
    Eigen::VectorXd h(n);
    for (auto& x : h) x = hdist(rng);
    auto gep = solve_gep(l, h);
    const double lmax = gep.eigenvalues.cwiseAbs().maxCoeff();
    EXPECT_GE(gep.eigenvalues.minCoeff(), -1e-9 * lmax);
    EXPECT_EQ(gep.zero_multiplicity, 1);
    // Constant vector is the zero mode.
    EXPECT_LE((l * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff(), 1e-9);
    Eigen::VectorXd z = gep.eigenvectors.col(0).cwiseAbs();
    EXPECT_LE(z.maxCoeff() - z.minCoeff(), 1e-9 * z.maxCoeff());

    auto g = gfv(gep);
    EXPECT_EQ(g.gfv.maxCoeff(), 1.0);
    EXPECT_GE(g.gfv.minCoeff(), 0.0);
    EXPECT_GT(g.dynamic_connectivity, 0.0);

    auto scaled = gfv(solve_gep(l, 3.5 * h));
    EXPECT_NEAR(scaled.dynamic_connectivity, g.dynamic_connectivity / 3.5, 1e-10 * g.dynamic_connectivity);
    if (!g.degenerate) EXPECT_LE((scaled.gfv - g.gfv).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(GfvProperties, FixtureInvariants) {
  for (const auto& name : testing::bundled_fixtures()) {
    auto a = analyze_case(load_fixture(name));
    EXPECT_EQ(a.gfv.gfv.maxCoeff(), 1.0) << name;
    EXPECT_GE(a.gfv.gfv.minCoeff(), 0.0) << name;
    EXPECT_GT(a.gfv.dynamic_connectivity, 0.0) << name;
    EXPECT_GT(a.fiedler.lambda2, 0.0) << name;
  }
}

TEST(GfvProperties, DisconnectedPencilRejected) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(4, 4);
  l.topLeftCorner(2, 2) = two_bus_l();
  l.bottomRightCorner(2, 2) = two_bus_l();
  EXPECT_THROW(gfv(solve_gep(l, Eigen::Vector4d(1, 2, 3, 4))), DataError);
}

}  // namespace
}  // namespace gridgfv
