// bounds.hpp — estimation-theoretic machinery: angle-derivative operators of
// the reflected echo, the pseudo-true parameter fit, and the mismatched-model
// bound blocks consumed by the optimizer.
//
// Model summary. Over one slot the sensing receiver observes
//   y = (a_t * Omega_w + a_s * Omega_f) x + n,     n ~ CN(0, noise_w I),
// where Omega_w / Omega_f are the rank-one two-hop operators through the
// working elements toward the target and the stuck elements toward the
// scatter. The estimator, unaware of faults, fits the full-surface model
//   mu(eta; x) = alpha * Omega(phi) x,   eta = (phi_e, phi_a, Re a, Im a),
// with Omega(phi) built from all R elements at the commanded coefficients.
// Everything downstream (pseudo-true point, 4x4 curvature/score blocks, the
// 2x2 angle bound) follows from this pair of models. Frame averages reduce to
// per-slot trace forms against the transmit covariance R_x.

#pragma once

#include <vector>

#include "risim/linalg.hpp"
#include "risim/scenario.hpp"
#include "risim/signal.hpp"

namespace risim {

// Element-domain outer product Omega = a a^H of the surface steering vector
// and its angle derivatives in commutator form with the index diagonals
// D_y = diag(iy(r)), D_z = diag(iz(r)). All matrices are R x R.
struct ElementOperators {
  CMat omega;
  CMat d_el, d_az;
  CMat d_elel, d_elaz, d_azaz;
};
ElementOperators element_operators(const SystemConfig& cfg,
                                   const AnglePair& ang);

// Antenna-domain operators of the full-surface assumed model,
//   Obar = H_br diag(v) Omega diag(v)^H H_br^H      (v conjugated convention),
// together with the matching angle derivatives. All matrices are n_tx x n_tx.
struct EchoOperators {
  CMat omega;
  CMat d_el, d_az;
  CMat d_elel, d_elaz, d_azaz;
};
EchoOperators echo_operators(const SystemConfig& cfg, const CMat& h_bs_ris,
                             const CVec& v, const AnglePair& ang);

// Explicit-frame mean mu(eta) = alpha vec(Obar(phi) X) and its analytic
// first/second derivatives, materialized for a concrete slot matrix X.
// Column order of d1: (phi_e, phi_a, Re alpha, Im alpha); d2 is the packed
// upper triangle (ee, ea, aa, e-Re, e-Im, a-Re, a-Im) — alpha-alpha terms
// vanish. Used by the finite-difference validation suite.
struct ExplicitMean {
  CVec mu;                  // n_tx*T
  CMat d1;                  // (n_tx*T) x 4
  CMat d2;                  // (n_tx*T) x 7
};
ExplicitMean explicit_mean(const SystemConfig& cfg, const CMat& h_bs_ris,
                           const CVec& v, const AnglePair& ang, cd alpha,
                           const CMat& x);

// Pseudo-true parameter: the assumed-model parameter minimizing the distance
// to the true echo mean. Solved by variable projection over the angles (the
// gain is eliminated in closed form), with a local grid around the true
// target direction followed by a simplex polish.
struct PseudoTrue {
  AnglePair angles;
  cd alpha;
  double residual;  // squared fit residual per slot at the optimum
};
PseudoTrue solve_pseudo_true(const SystemConfig& cfg, const ChannelSet& chs,
                             const RisRealization& ris, const CMat& r_x);

// Frozen ingredients of the bound blocks at a pseudo-true point: the
// assumed-model operator stack, the true-side working/faulty cascades, and
// the two-hop map that re-opens the working cascade as a function of the
// lifted surface variable.
struct BoundOperators {
  EchoOperators assumed;  // at pseudo-true angles, commanded v, all elements
  CMat omega_w;           // working-element cascade at the true target angles
  CMat omega_f;           // stuck-element cascade at the scatter angles
  CMat g_w;               // two-hop map of working elements (target angles)
  cd alpha0;              // pseudo-true gain
  cd gain_working;        // true gain of the working (target) return
  cd gain_faulty;         // true gain of the stuck-element (scatter) return
  double noise_w;         // sensing noise power
};
BoundOperators bound_operators(const SystemConfig& cfg, const ChannelSet& chs,
                               const RisRealization& ris,
                               const PseudoTrue& pt);

// 4x4 curvature (a) and score-covariance (b) blocks in the parameter order
// (phi_e, phi_a, Re alpha, Im alpha), assembled at a transmit covariance.
struct BoundBlocks {
  Mat a;  // expected log-likelihood Hessian of the assumed model
  Mat b;  // score covariance
};
BoundBlocks assemble_blocks(const BoundOperators& ops, const CMat& r_x);

// Block accessors / derived quantities (all on the 4x4 blocks).
Mat schur_z(const Mat& a);              // A_pp - A_ap^T A_aa^{-1} A_ap
Mat sandwich_u(const BoundBlocks& bl);  // B_pp - B_ap^T B_aa^{-1} B_ap + ...
Mat mcrb_angles(const BoundBlocks& bl);  // Z^{-1} U Z^{-1}  (2x2)
Mat mcrb_full(const BoundBlocks& bl);    // A^{-1} B A^{-1}  (4x4)

// Auxiliary-variable values that meet the relaxation with equality when the
// remaining blocks are held fixed.
Mat canonical_c(const BoundBlocks& bl);  // B_pp + (A+B)_ap^T B_aa^{-1} (A+B)_ap
Mat canonical_d(const BoundBlocks& bl);  // Z^{-1}

// Classical angle bound of the fault-free (correctly specified) model with
// gain `alpha`, commanded coefficients over all elements, at true angles.
Mat crb_angles(const SystemConfig& cfg, const ChannelSet& chs,
               const CVec& commanded, const AnglePair& ang, cd alpha,
               const CMat& r_x);

// One real-valued affine functional x -> re_trace(coeff * x) + offset of a
// Hermitian matrix variable (coeff is Hermitian so the value is exact).
struct TraceAffine {
  CMat coeff;
  double offset = 0.0;
  double eval(const CMat& x) const { return re_trace(coeff * x) + offset; }
};

// Every bound-block entry as an affine functional of R_x (pseudo-true point
// and surface coefficients frozen). Mismatch entries e_* are the sums
// (a + b)_*; the alpha-alpha mismatch vanishes identically.
struct BlockFormsRx {
  TraceAffine b_angle[2][2];        // score block, angle-angle
  TraceAffine b_angle_alpha[2][2];  // score block, rows angle / cols alpha
  TraceAffine b_alpha;              // score block, alpha-alpha = b_alpha * I2
  TraceAffine e_angle[2][2];        // mismatch block, angle-angle
  TraceAffine e_angle_alpha[2][2];  // mismatch block, rows angle / cols alpha
};
BlockFormsRx block_forms_rx(const BoundOperators& ops);

// Mismatch entries as affine functionals of the lifted surface Gram matrix
// V = v_w v_w^H (W x W, upper-left of the lifted SINR variable); the score
// blocks are frozen at the current commanded coefficients and R_x.
struct BlockFormsV {
  TraceAffine e_angle[2][2];        // coeff is W x W
  TraceAffine e_angle_alpha[2][2];
  Mat b_angle;                      // frozen 2x2
  Mat b_angle_alpha;                // frozen 2x2
  double b_alpha;                   // frozen scalar (block = b_alpha * I2)
};
BlockFormsV block_forms_v(const BoundOperators& ops, const CMat& r_x);

// Numeric 4x4 blocks from the affine views (consistency helpers/tests).
BoundBlocks assemble_blocks(const BlockFormsRx& forms, const CMat& r_x);
BoundBlocks assemble_blocks(const BlockFormsV& forms, const CMat& v_gram);

// Definiteness diagnostics for one assembled instance. The eigenvalue
// fields are scale-free margins: each is the extreme eigenvalue of the
// gain-balanced congruence of the block (inertia-preserving), divided by
// that matrix's Frobenius norm. The last field is the residual between the
// selector identity I2~ A^{-1} I2~^T and Z^{-1}.
struct DefinitenessReport {
  double b_min_eig;          // score block margin: expected >= 0
  double a_max_eig;          // curvature block margin: expected < 0
  double z_max_eig;          // angle Schur complement margin: expected < 0
  double zz_min_eig;         // (Z Z)^{-1} margin: expected > 0
  double selector_residual;  // ||upper-left of balanced A^{-1} - Z^{-1}||_max
};
DefinitenessReport definiteness_report(const BoundBlocks& bl);

}  // namespace risim
