// optimizer.hpp — joint transmit/surface design minimizing the angle-bound
// relaxation under per-user SINR and power constraints.
//
// Relaxation. With the 4x4 curvature/score blocks A, B of the bounds module,
// the angle bound tr(Z^{-1} U Z^{-1}) is upper-bounded by the product
// tr(Ctilde - S(R_x)) * tr(Dtilde Dtilde), where S is the score correction
// B_pa B_ap / b_alpha and the auxiliary matrices obey two linear matrix
// inequalities (a Schur-complement lift of Ctilde >= canonical C and
// Dtilde <= Z^{-1} < 0). The product splits over block coordinate descent:
// the transmit step optimizes {W_k, R_s, Ctilde} with a majorize-minimize
// surrogate for the score correction; the surface step optimizes
// {lifted V, Dtilde} with a trace-minus-spectral penalty driving the lifted
// Gram matrix to rank one. Accepted iterates carry canonically repaired
// auxiliaries (trace-minimal feasible Ctilde/Dtilde at the current state),
// which keeps the objective trace monotone and the bound chain exact.

#pragma once

#include <string>
#include <vector>

#include "risim/bounds.hpp"
#include "risim/linalg.hpp"
#include "risim/scenario.hpp"
#include "risim/signal.hpp"

namespace risim {

// kInfeasible: the rate floor cannot be met at the power budget.
// kNumericalLimit: degenerate curvature, or the outer loop hit its cap
// without the objective settling.
enum class RunStatus { kConverged, kInfeasible, kNumericalLimit };

// Anchor values of the score blocks entering the majorize-minimize surrogate
// of the score-correction trace tr(B_pa B_ap) / b_alpha.
struct MmAnchors {
  Mat cross;           // 2x2 angle/gain score block at the anchor
  double alpha = 0.0;  // gain/gain score scalar at the anchor
};
MmAnchors mm_anchors(const BlockFormsRx& forms, const CMat& r_x);

// Exact score-correction trace and its affine surrogate around the anchors.
// Quadratic-over-linear convexity makes the surrogate touch the exact value
// at the anchor and never exceed it elsewhere, so substituting -surrogate
// for -trace majorizes the minimized objective.
double score_correction(const BlockFormsRx& forms, const CMat& r_x);
double score_correction_surrogate(const BlockFormsRx& forms,
                                  const MmAnchors& anchors, const CMat& r_x);

// One accepted (or reverted) subproblem update in a descent run.
struct IterationRecord {
  int outer = 0;
  std::string step;        // "initialize", "transmit", or "surface"
  double objective = 0.0;  // relaxed objective, internal scale
  double mcrb_trace = 0.0; // physical angle-bound trace at this iterate
  double sandwich_lo = 0.0, sandwich_mid = 0.0, sandwich_hi = 0.0;
  double sinr_margin = 0.0;  // min_k sinr_k - threshold (linear)
  double rank_gap = 0.0;     // lambda2/lambda1 of the lifted surface Gram
  int inner_iterations = 0;
  bool accepted = true;

  std::string to_json() const;
};

// Worst-case numerical audits accumulated over one descent run.
struct RunAudits {
  double mm_tangency_rel = 0.0;    // largest relative surrogate gap at anchors
  double prop1_rx_err = 0.0;       // largest entrywise covariance drift
  double prop1_sinr_rel = 0.0;     // largest relative SINR drift
  double prop1_rs_min_eig = 0.0;   // most negative recovered R_s eigenvalue
  double mm_descent_margin = 0.0;  // most negative relative inner MM decrease
  double sca_descent_margin = 0.0; // most negative relative inner SCA decrease
  double projection_sinr_gap = 0.0; // largest relative SINR shift caused by
                                    // unit-modulus projection at extraction
  int transmit_solves = 0;
  int mm_iterations_max = 0;
  int sca_iterations_max = 0;
};

// Final state of a descent run (proposed scheme or the fault-free variant).
struct OptResult {
  RunStatus status = RunStatus::kNumericalLimit;
  TransmitDesign design;   // rank-one recovered beamformers + sensing cov
  CVec v_w;                // working-element coefficients (unit modulus)
  CVec commanded;          // full commanded vector actually deployed
  PseudoTrue pseudo_true;  // fit at the final design
  Mat mcrb;                // physical 2x2 angle bound at the final design
  Vec sinr;                // final per-user SINR (linear)
  double objective = 0.0;  // final relaxed objective (internal scale)
  int outer_iterations = 0;
  bool rank_gap_ok = true;   // lifted Gram closed to rank one
  bool monotone_ok = true;   // objective trace non-increasing within slack
  std::vector<IterationRecord> trace;
  RunAudits audits;

  double mcrb_trace() const { return mcrb.trace(); }
};

// A deployed design evaluated on the true (faulty) surface: pseudo-true fit,
// angle bound, and audited SINRs. Used by the naive/random benchmarks.
struct SchemeEval {
  TransmitDesign design;
  CVec commanded;
  PseudoTrue pseudo_true;
  Mat mcrb;
  Vec sinr;

  double mcrb_trace() const { return mcrb.trace(); }
};

// Fault-free upper-bound run: the same descent on the perfect-surface model,
// where the assumed and true models coincide and the bound is the classical
// one. The result's mcrb field holds the classical angle bound.
OptResult solve_ub(const SystemConfig& cfg, const ChannelSet& chs,
                   const RisRealization& ris);

// Full pipeline on the faulty surface: initialization from the fault-free
// design, pseudo-true fit (held fixed across the descent), alternating
// transmit/surface steps, final pseudo-true re-fit for reporting. Pass a
// precomputed fault-free run to skip re-solving it.
OptResult solve_proposed(const SystemConfig& cfg, const ChannelSet& chs,
                         const RisRealization& ris,
                         const OptResult* ub_warm = nullptr);

// Deploy a (design, commanded) pair on the true surface and evaluate it:
// fresh pseudo-true fit, angle bound, SINR audit.
SchemeEval evaluate_deployment(const SystemConfig& cfg, const ChannelSet& chs,
                               const RisRealization& ris,
                               const TransmitDesign& design,
                               const CVec& commanded);

// Benchmark schemes. naive: fault-free phases deployed unchanged on the
// faulty surface with the fault-free beamformers. random: proposed
// beamformers with uniformly random working phases (seed-deterministic).
SchemeEval eval_naive(const SystemConfig& cfg, const ChannelSet& chs,
                      const RisRealization& ris, const OptResult& ub);
SchemeEval eval_random(const SystemConfig& cfg, const ChannelSet& chs,
                       const RisRealization& ris, const OptResult& proposed,
                       std::uint64_t seed, std::uint64_t trial);

// Rank-one restoration of a lifted transmit design: per-user beamformers
//   w_k = (hbar_k What_k hbar_k^H)^{-1/2} What_k hbar_k^H
// and compensated sensing covariance R_s + sum What_k - sum w_k w_k^H.
// Preserves the transmit covariance exactly and every user's SINR.
// Throws std::runtime_error when some hbar_k What_k hbar_k^H is numerically
// zero relative to |hbar_k|^2 tr(What_k).
TransmitDesign recover_rank_one(const LiftedDesign& lifted, const CMat& rows);

}  // namespace risim
