// Tests for the semidefinite solver: the complex embedding, toy problems
// with known solutions, infeasibility and unboundedness certificates,
// randomized instances built around known optimal pairs, and determinism.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "risim/conic.hpp"
#include "risim/rng.hpp"
#include "test_util.hpp"

using namespace risim;
using doctest::Approx;

namespace {

CMat unit_pair(int n, int i, int j) {
  CMat m = CMat::Zero(n, n);
  m(j, i) = cd(1.0, 0.0);  // tr(m Z) = Z(i, j)
  return m;
}

// Pin every entry of a Hermitian matrix through scalar equalities.
void pin_hermitian(SdpBuilder& b, VarHandle z, const CMat& h) {
  const int n = int(h.rows());
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      b.add_equality(trace_term(z, unit_pair(n, i, j), -h(i, j).real()));
      if (i != j)
        b.add_equality(trace_term(z, cd(0.0, 1.0) * unit_pair(n, i, j),
                                  h(i, j).imag()));
    }
}

Mat random_sym(RngStream& rng, int n) {
  Mat m(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) m(i, j) = rng.normal();
  return sym(m);
}

}  // namespace

TEST_CASE("complex embedding round trip and spectrum doubling") {
  RngStream rng(7, 0);
  const CMat h = testutil::random_psd(rng, 4, 5.0);
  const Mat y = realify(h);
  CHECK(testutil::rel_err(derealify(y), h) < 1e-15);

  // Each eigenvalue of h appears twice in the embedding.
  Eigen::SelfAdjointEigenSolver<CMat> eh(h);
  Eigen::SelfAdjointEigenSolver<Mat> ey(y);
  for (int i = 0; i < 4; ++i) {
    CHECK(ey.eigenvalues()[2 * i] == Approx(eh.eigenvalues()[i]).epsilon(1e-12));
    CHECK(ey.eigenvalues()[2 * i + 1] ==
          Approx(eh.eigenvalues()[i]).epsilon(1e-12));
  }

  // Trace convention used by the assembler.
  const CMat g = testutil::random_cmat(rng, 4, 4);
  const CMat gh = herm(g);
  const double direct = (gh * h).trace().real();
  const double embedded = 0.5 * (realify(gh) * y).trace();
  CHECK(direct == Approx(embedded).epsilon(1e-12));
}

TEST_CASE("identity trace minimum with unit diagonal") {
  for (int n : {2, 3, 5}) {
    SdpBuilder b;
    const VarHandle x = b.add_variable(VarKind::kRealPsd, n, "x");
    for (int i = 0; i < n; ++i)
      b.add_equality(trace_term(x, unit_pair(n, i, i), -1.0));
    b.minimize(trace_term(x, CMat::Identity(n, n)));
    const SdpSolution s = solve_sdp(b);
    REQUIRE(s.status == SolveStatus::kOptimal);
    CHECK(s.objective == Approx(double(n)).epsilon(1e-7));
    CHECK(testutil::rel_err(CMat(s.value(x)), CMat(CMat::Identity(n, n))) <
          1e-6);
  }
}

TEST_CASE("scalar free variable against a two by two matrix constraint") {
  // minimize x subject to [[x, 1], [1, x]] >= 0  ->  x = 1.
  SdpBuilder b;
  const VarHandle x = b.add_variable(VarKind::kFree, 1, "x");
  const CMat one = CMat::Ones(1, 1);
  ScalarAffine diag;
  diag.add(x, one);
  ScalarAffine off;
  off.constant = 1.0;
  b.add_lmi({{diag, off}, {off, diag}});
  b.minimize(trace_term(x, one));
  const SdpSolution s = solve_sdp(b);
  REQUIRE(s.status == SolveStatus::kOptimal);
  CHECK(s.objective == Approx(1.0).epsilon(1e-7));
  CHECK(s.real_value(x)(0, 0) == Approx(1.0).epsilon(1e-6));
}

TEST_CASE("scalar inequality lower bound on the trace") {
  SdpBuilder b;
  const VarHandle x = b.add_variable(VarKind::kRealPsd, 3, "x");
  b.add_inequality(trace_term(x, CMat::Identity(3, 3), -3.0));  // tr >= 3
  b.minimize(trace_term(x, CMat::Identity(3, 3)));
  const SdpSolution s = solve_sdp(b);
  REQUIRE(s.status == SolveStatus::kOptimal);
  CHECK(s.objective == Approx(3.0).epsilon(1e-7));
  CHECK(min_eig(s.value(x)) > -1e-7 * s.value(x).norm());
}

TEST_CASE("negative trace cap is reported infeasible") {
  SdpBuilder b;
  const VarHandle x = b.add_variable(VarKind::kRealPsd, 3, "x");
  // tr(X) <= -1 cannot hold on the PSD cone.
  ScalarAffine e;
  e.add(x, -CMat::Identity(3, 3));
  e.constant = -1.0;
  b.add_inequality(e);
  b.minimize(trace_term(x, CMat::Identity(3, 3)));
  const SdpSolution s = solve_sdp(b);
  CHECK(s.status == SolveStatus::kInfeasible);
}

TEST_CASE("conflicting duplicate equalities are reported infeasible") {
  SdpBuilder b;
  const VarHandle x = b.add_variable(VarKind::kRealPsd, 2, "x");
  b.add_equality(trace_term(x, CMat::Identity(2, 2), -1.0));
  b.add_equality(trace_term(x, CMat::Identity(2, 2), -2.0));
  b.minimize(trace_term(x, CMat::Identity(2, 2)));
  CHECK(solve_sdp(b).status == SolveStatus::kInfeasible);
}

TEST_CASE("redundant consistent equalities are pruned and solved") {
  SdpBuilder b;
  const VarHandle x = b.add_variable(VarKind::kRealPsd, 2, "x");
  b.add_equality(trace_term(x, CMat::Identity(2, 2), -1.0));
  b.add_equality(trace_term(x, CMat::Identity(2, 2), -1.0));
  b.add_equality(trace_term(x, 2.0 * CMat::Identity(2, 2), -2.0));
  b.minimize(trace_term(x, CMat(CMat::Identity(2, 2) +
                                0.1 * unit_pair(2, 0, 1) +
                                0.1 * unit_pair(2, 1, 0))));
  const SdpSolution s = solve_sdp(b);
  REQUIRE(s.status == SolveStatus::kOptimal);
  // min tr(CX) with tr(X)=1 over PSD = smallest eigenvalue of C = 0.9.
  CHECK(s.objective == Approx(0.9).epsilon(1e-6));
}

TEST_CASE("growing diagonal with a pinned off diagonal is unbounded") {
  SdpBuilder b;
  const VarHandle x = b.add_variable(VarKind::kRealPsd, 2, "x");
  b.add_equality(trace_term(x, unit_pair(2, 0, 1), -1.0));
  b.minimize(trace_term(x, -CMat::Identity(2, 2)));
  const SdpSolution s = solve_sdp(b);
  CHECK(s.status == SolveStatus::kUnbounded);
}

TEST_CASE("fully pinned complex variable reproduces the target matrix") {
  RngStream rng(19, 0);
  const CMat h = testutil::random_psd(rng, 3, 4.0);
  SdpBuilder b;
  const VarHandle z = b.add_variable(VarKind::kComplexPsd, 3, "z");
  pin_hermitian(b, z, h);
  b.minimize(trace_term(z, CMat::Identity(3, 3)));
  const SdpSolution s = solve_sdp(b);
  REQUIRE(s.status == SolveStatus::kOptimal);
  CHECK(testutil::rel_err(s.value(z), h) < 1e-7);
  CHECK(s.objective == Approx(h.trace().real()).epsilon(1e-8));
}

TEST_CASE("real instances with a constructed optimal pair") {
  // Build X* and S* complementary, pick y*, and derive b and C so that the
  // optimal value is known exactly.
  for (std::uint64_t seed : {3u, 4u, 5u, 6u, 7u}) {
    RngStream rng(seed, 0);
    const int n = 4, m = 3, r = 2;
    const Mat basis =
        Eigen::HouseholderQR<Mat>(random_sym(rng, n)).householderQ();
    Vec lam = Vec::Zero(n), om = Vec::Zero(n);
    for (int i = 0; i < r; ++i) lam[i] = 0.5 + rng.uniform(0.0, 1.5);
    for (int i = r; i < n; ++i) om[i] = 0.5 + rng.uniform(0.0, 1.5);
    const Mat x_star = basis * lam.asDiagonal() * basis.transpose();
    const Mat s_star = basis * om.asDiagonal() * basis.transpose();

    std::vector<Mat> a(m);
    Vec y_star(m);
    for (int i = 0; i < m; ++i) {
      a[i] = random_sym(rng, n);
      y_star[i] = rng.normal();
    }
    Mat c = s_star;
    for (int i = 0; i < m; ++i) c += y_star[i] * a[i];

    SdpBuilder b;
    const VarHandle x = b.add_variable(VarKind::kRealPsd, n, "x");
    for (int i = 0; i < m; ++i)
      b.add_equality(trace_term(x, a[i].cast<cd>(), -(a[i] * x_star).trace()));
    b.minimize(trace_term(x, c.cast<cd>()));
    const SdpSolution s = solve_sdp(b);
    REQUIRE(s.status == SolveStatus::kOptimal);
    const double want = (c * x_star).trace();
    CHECK(std::abs(s.objective - want) < 1e-7 * (1.0 + std::abs(want)));
    CHECK(min_eig(s.value(x)) > -1e-7 * std::max(1.0, s.value(x).norm()));
    CHECK(s.primal_residual < 1e-7);
    CHECK(s.dual_residual < 1e-7);
  }
}

TEST_CASE("complex instances with a constructed optimal pair") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    RngStream rng(seed, 0);
    const int n = 3, m = 3, r = 1;
    const CMat raw = testutil::random_cmat(rng, n, n);
    const CMat basis = Eigen::HouseholderQR<CMat>(raw).householderQ();
    Vec lam = Vec::Zero(n), om = Vec::Zero(n);
    for (int i = 0; i < r; ++i) lam[i] = 0.5 + rng.uniform(0.0, 1.5);
    for (int i = r; i < n; ++i) om[i] = 0.5 + rng.uniform(0.0, 1.5);
    const CMat x_star =
        basis * lam.asDiagonal().toDenseMatrix().cast<cd>() * basis.adjoint();
    const CMat s_star =
        basis * om.asDiagonal().toDenseMatrix().cast<cd>() * basis.adjoint();

    std::vector<CMat> a(m);
    Vec y_star(m);
    for (int i = 0; i < m; ++i) {
      a[i] = herm(testutil::random_cmat(rng, n, n));
      y_star[i] = rng.normal();
    }
    CMat c = s_star;
    for (int i = 0; i < m; ++i) c += y_star[i] * a[i];

    SdpBuilder b;
    const VarHandle z = b.add_variable(VarKind::kComplexPsd, n, "z");
    for (int i = 0; i < m; ++i)
      b.add_equality(trace_term(z, a[i], -(a[i] * x_star).trace().real()));
    b.minimize(trace_term(z, c));
    const SdpSolution s = solve_sdp(b);
    REQUIRE(s.status == SolveStatus::kOptimal);
    const double want = (c * x_star).trace().real();
    CHECK(std::abs(s.objective - want) < 1e-7 * (1.0 + std::abs(want)));
    CHECK(min_eig(s.value(z)) > -1e-7 * std::max(1.0, s.value(z).norm()));
  }
}

TEST_CASE("epigraph of a squared norm through a bordered matrix constraint") {
  // minimize t with [[t, u^T], [u, I]] >= 0 and u pinned:  t = |u0|^2.
  RngStream rng(23, 0);
  Vec u0(3);
  for (int i = 0; i < 3; ++i) u0[i] = rng.normal();

  SdpBuilder b;
  const VarHandle t = b.add_variable(VarKind::kFree, 1, "t");
  const VarHandle u = b.add_variable(VarKind::kFree, 3, "u");
  const CMat one = CMat::Ones(1, 1);
  for (int i = 0; i < 3; ++i) {
    CMat pick = CMat::Zero(3, 1);
    pick(i, 0) = 1.0;
    b.add_equality(trace_term(u, pick, -u0[i]));
  }
  std::vector<std::vector<ScalarAffine>> grid(4, std::vector<ScalarAffine>(4));
  grid[0][0].add(t, one);
  for (int i = 0; i < 3; ++i) {
    CMat pick = CMat::Zero(3, 1);
    pick(i, 0) = 1.0;
    grid[0][i + 1].add(u, pick);
    grid[i + 1][i + 1].constant = 1.0;
  }
  b.add_lmi(grid);
  b.minimize(trace_term(t, one));
  const SdpSolution s = solve_sdp(b);
  REQUIRE(s.status == SolveStatus::kOptimal);
  CHECK(s.objective == Approx(u0.squaredNorm()).epsilon(1e-6));
}

TEST_CASE("repeated solves are bit identical") {
  RngStream rng(31, 0);
  const CMat h = testutil::random_psd(rng, 3, 2.5);
  auto build = [&]() {
    SdpBuilder b;
    const VarHandle z = b.add_variable(VarKind::kComplexPsd, 3, "z");
    b.add_equality(trace_term(z, CMat::Identity(3, 3), -2.0));
    b.minimize(trace_term(z, h));
    return solve_sdp(b);
  };
  const SdpSolution s1 = build();
  const SdpSolution s2 = build();
  REQUIRE(s1.status == SolveStatus::kOptimal);
  REQUIRE(s2.status == SolveStatus::kOptimal);
  CHECK(std::memcmp(&s1.objective, &s2.objective, sizeof(double)) == 0);
  const CMat z1 = s1.values[0], z2 = s2.values[0];
  CHECK(std::memcmp(z1.data(), z2.data(), sizeof(cd) * 9) == 0);
}
