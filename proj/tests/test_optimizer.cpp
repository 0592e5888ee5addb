// Surrogate tangency/minorization, rank-one recovery invariants, and full
// descent runs: monotonicity, bound-chain ordering, and final feasibility.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "risim/bounds.hpp"
#include "risim/optimizer.hpp"
#include "risim/rng.hpp"
#include "test_util.hpp"

using namespace risim;
using namespace risim::testutil;

namespace {

struct Fixture {
  SystemConfig cfg;
  ChannelSet chs;
  RisRealization ris;
  explicit Fixture(std::uint64_t seed = 7)
      : chs(sample_channels(cfg, seed, 0)),
        ris(sample_ris_realization(cfg, seed, 0)) {}
};

}  // namespace

TEST_CASE("score-correction surrogate is tangent and minorizing") {
  Fixture fx;
  RngStream rng = make_stream(3, Draw::kTesting, 0);
  const CMat r0 = random_psd(rng, fx.cfg.n_tx, fx.cfg.power_budget_w);
  const PseudoTrue pt = solve_pseudo_true(fx.cfg, fx.chs, fx.ris, r0);
  const BoundOperators ops = bound_operators(fx.cfg, fx.chs, fx.ris, pt);
  const BlockFormsRx forms = block_forms_rx(ops);

  const CMat anchor_rx = random_psd(rng, fx.cfg.n_tx, fx.cfg.power_budget_w);
  const MmAnchors anchors = mm_anchors(forms, anchor_rx);

  const double exact0 = score_correction(forms, anchor_rx);
  const double sur0 = score_correction_surrogate(forms, anchors, anchor_rx);
  CHECK(std::abs(sur0 - exact0) <= 1e-9 * std::max(std::abs(exact0), 1e-30));

  for (int k = 0; k < 50; ++k) {
    const CMat rx =
        random_psd(rng, fx.cfg.n_tx, fx.cfg.power_budget_w * (0.2 + 0.05 * k));
    const double exact = score_correction(forms, rx);
    const double sur = score_correction_surrogate(forms, anchors, rx);
    CHECK(sur <= exact + 1e-9 * (1.0 + std::abs(exact)));
  }
}

TEST_CASE("rank-one recovery preserves covariance, rates, and positivity") {
  Fixture fx;
  RngStream rng = make_stream(11, Draw::kTesting, 2);
  const CMat rows = downlink_rows(fx.chs, fx.ris.effective());

  for (int rep = 0; rep < 20; ++rep) {
    LiftedDesign lifted;
    for (int k = 0; k < fx.cfg.n_users; ++k)
      lifted.w_cov.push_back(
          random_psd(rng, fx.cfg.n_tx, 0.4 * fx.cfg.power_budget_w));
    lifted.r_s = random_psd(rng, fx.cfg.n_tx, 0.2 * fx.cfg.power_budget_w);

    const TransmitDesign d = recover_rank_one(lifted, rows);
    CHECK((lifted.covariance() - d.covariance()).cwiseAbs().maxCoeff() <=
          1e-12);
    const Vec s_lift = sinr_all(lifted, rows, fx.cfg.comm_noise_w);
    const Vec s_rank = sinr_all(d, rows, fx.cfg.comm_noise_w);
    for (int k = 0; k < fx.cfg.n_users; ++k)
      CHECK(std::abs(s_lift[k] - s_rank[k]) <= 1e-9 * s_lift[k]);
    CHECK(min_eig(d.r_s) >= -1e-9);
  }
}

TEST_CASE("rank-one recovery rejects a user with no received power") {
  Fixture fx;
  const CMat rows = downlink_rows(fx.chs, fx.ris.effective());
  // Beam user 0 into the orthogonal complement of its own channel row.
  const CVec h = rows.row(0).adjoint();
  CVec u = CVec::Zero(fx.cfg.n_tx);
  u[0] = 1.0;
  u -= (h.dot(u) / h.squaredNorm()) * h;
  LiftedDesign lifted;
  lifted.w_cov.push_back(u * u.adjoint());
  for (int k = 1; k < fx.cfg.n_users; ++k)
    lifted.w_cov.push_back(CMat::Identity(fx.cfg.n_tx, fx.cfg.n_tx));
  lifted.r_s = CMat::Zero(fx.cfg.n_tx, fx.cfg.n_tx);
  CHECK_THROWS_AS(recover_rank_one(lifted, rows), std::runtime_error);
}

TEST_CASE("descent run: monotone objective, valid chain, feasible design") {
  Fixture fx(7);
  const OptResult ub = solve_ub(fx.cfg, fx.chs, fx.ris);
  REQUIRE(ub.status == RunStatus::kConverged);

  const OptResult res = solve_proposed(fx.cfg, fx.chs, fx.ris, &ub);
  REQUIRE(res.status == RunStatus::kConverged);
  CHECK(res.outer_iterations <= 10);  // desk-scale settling budget

  CHECK(res.monotone_ok);
  double prev = std::numeric_limits<double>::infinity();
  int accepted = 0;
  for (const IterationRecord& r : res.trace) {
    if (!r.accepted) continue;
    ++accepted;
    CHECK(r.objective <= prev + 1e-8 * (1.0 + std::abs(prev)));
    prev = r.objective;
    // Bound chain ordering holds at every accepted iterate.
    const double scale = 1.0 + std::abs(r.sandwich_hi);
    CHECK(r.sandwich_lo <= r.sandwich_mid + 1e-8 * scale);
    CHECK(r.sandwich_mid <= r.sandwich_hi + 1e-8 * scale);
    CHECK(r.sandwich_lo > 0.0);
  }
  CHECK(accepted >= 1);
  CHECK(res.outer_iterations <= fx.cfg.bcd_max_outer);
  CHECK(res.audits.projection_sinr_gap < 1e-2);  // near-rank-one extraction

  // Final design feasibility: rates, power, unit-modulus working entries.
  REQUIRE(res.sinr.size() == fx.cfg.n_users);
  for (int k = 0; k < fx.cfg.n_users; ++k)
    CHECK(res.sinr[k] >= fx.cfg.sinr_min - 1e-6);
  CHECK(res.design.power() <= fx.cfg.power_budget_w + 1e-6);
  for (int i = 0; i < res.v_w.size(); ++i)
    CHECK(std::abs(std::abs(res.v_w[i]) - 1.0) <= 1e-12);

  // Numerical audits accumulated over every inner solve.
  CHECK(res.audits.mm_tangency_rel <= 1e-9);
  CHECK(res.audits.prop1_rx_err <= 1e-12);
  CHECK(res.audits.prop1_sinr_rel <= 1e-9);
  CHECK(res.audits.prop1_rs_min_eig >= -1e-9);
  CHECK(res.audits.mm_descent_margin >= -1e-6);
  CHECK(res.audits.sca_descent_margin >= -1e-6);
  CHECK(res.audits.mm_iterations_max <= fx.cfg.mm_max_iter);
  CHECK(res.audits.sca_iterations_max <= fx.cfg.sca_max_iter);

  // The reported bound is a real positive-semidefinite 2x2 curvature product.
  CHECK(res.mcrb.rows() == 2);
  CHECK(res.mcrb_trace() > 0.0);
  CHECK(min_eig(res.mcrb) >= -1e-12 * res.mcrb_trace());

  // Records serialize to one JSON object per line.
  const std::string line = res.trace.front().to_json();
  CHECK(line.front() == '{');
  CHECK(line.find("\"objective\"") != std::string::npos);

  // Benchmark evaluations on the same realization.
  const SchemeEval naive = eval_naive(fx.cfg, fx.chs, fx.ris, ub);
  CHECK(naive.mcrb_trace() > 0.0);
  const SchemeEval ra = eval_random(fx.cfg, fx.chs, fx.ris, res, 7, 0);
  const SchemeEval rb = eval_random(fx.cfg, fx.chs, fx.ris, res, 7, 0);
  CHECK(ra.mcrb_trace() == rb.mcrb_trace());  // same draw stream, same result
  const SchemeEval rc = eval_random(fx.cfg, fx.chs, fx.ris, res, 7, 1);
  CHECK(ra.mcrb_trace() != rc.mcrb_trace());

  // The fault-free benchmark bound agrees with the classical bound formula.
  const Mat crb =
      crb_angles(fx.cfg, fx.chs, ub.commanded, fx.chs.target_aod,
                 cd(fx.chs.alpha_target, 0.0), ub.design.covariance());
  CHECK(rel_err(CMat(ub.mcrb.cast<cd>()), CMat(crb.cast<cd>())) <= 1e-8);
}

TEST_CASE("fault-free run matches the fault-free benchmark bound") {
  SystemConfig cfg;
  cfg.n_faulty = 0;
  const ChannelSet chs = sample_channels(cfg, 19, 0);
  const RisRealization ris = sample_ris_realization(cfg, 19, 0);

  const OptResult ub = solve_ub(cfg, chs, ris);
  REQUIRE(ub.status == RunStatus::kConverged);
  const OptResult res = solve_proposed(cfg, chs, ris, &ub);
  REQUIRE(res.status == RunStatus::kConverged);
  CHECK(std::abs(res.mcrb_trace() - ub.mcrb_trace()) <=
        0.01 * ub.mcrb_trace());
}

TEST_CASE("impossible rate floor at tiny power reports infeasible") {
  SystemConfig cfg;
  cfg.sinr_min = 1e6;
  cfg.power_budget_w = 1e-9;
  const ChannelSet chs = sample_channels(cfg, 5, 0);
  const RisRealization ris = sample_ris_realization(cfg, 5, 0);
  const OptResult res = solve_proposed(cfg, chs, ris);
  CHECK(res.status == RunStatus::kInfeasible);
}
