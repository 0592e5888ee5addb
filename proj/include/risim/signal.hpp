// signal.hpp — transmit designs, downlink SINR, and the cascaded two-hop
// operators consumed by the bound/optimizer layers.
//
// The transmit frame is x(t) = W c(t) + s(t): one unit-power data stream per
// user plus a zero-mean sensing stream with covariance R_s, so the transmit
// covariance is R_x = W W^H + R_s (trace-bounded by the power budget).

#pragma once

#include <vector>

#include "risim/linalg.hpp"
#include "risim/rng.hpp"
#include "risim/scenario.hpp"

namespace risim {

// Rank-one-per-user design: column k of `w` precodes user k.
struct TransmitDesign {
  CMat w;    // n_tx x n_users
  CMat r_s;  // n_tx x n_tx, Hermitian PSD sensing covariance

  CMat covariance() const { return w * w.adjoint() + r_s; }
  double power() const { return covariance().trace().real(); }
};

// Semidefinite-relaxed design: one PSD block per user (possibly rank > 1).
struct LiftedDesign {
  std::vector<CMat> w_cov;  // per user, n_tx x n_tx Hermitian PSD
  CMat r_s;

  CMat covariance() const;
  double power() const { return covariance().trace().real(); }
};

// Effective downlink row vectors h̄_k (one per user) for the surface applying
// coefficient vector v_eff (conjugated convention): h̄_k = v_eff^H H_k.
CMat downlink_rows(const ChannelSet& chs, const CVec& v_eff);

// Same, restricted to an element subset (e.g. only the stuck elements).
CMat downlink_rows_subset(const ChannelSet& chs, const std::vector<int>& idx,
                          const CVec& v_subset);

// Per-user SINR of a rank-one design: |h̄_k w_k|^2 over inter-user
// interference + sensing-stream leakage + noise.
Vec sinr_all(const TransmitDesign& d, const CMat& rows, double noise_w);

// Per-user SINR of a lifted design (uses h̄_k W_k h̄_k^H in the numerator).
Vec sinr_all(const LiftedDesign& d, const CMat& rows, double noise_w);

// Row-selection of the element-major cascade H_k.
CMat cascade_subset(const CMat& cascade, const std::vector<int>& idx);

// G = diag(conj(a)) * H_br,subset^H (one row per selected element): the
// two-hop map with Omega = G^H v v^H G for surface coefficients v.
CMat two_hop_map(const CMat& h_bs_ris, const std::vector<int>& idx,
                 const CVec& steering);

// Rank-one two-hop operator u u^H with u = G^H v.
CMat two_hop_operator(const CMat& g, const CVec& v);

// True echo mean operator: alpha_t * Omega_working(target angles)
//                          + alpha_s * Omega_faulty(scatter angles).
struct SensingCascade {
  CMat omega_working;  // n_tx x n_tx, via working elements toward the target
  CMat omega_faulty;   // n_tx x n_tx, via stuck elements toward the scatter
  CMat g_bar;          // alpha_t * omega_working + alpha_s * omega_faulty
};
SensingCascade sensing_cascade(const SystemConfig& cfg, const ChannelSet& chs,
                               const RisRealization& ris);

// Coefficient matrix of the lifted per-user SINR constraint, written as
//   (1/gamma + 1) tr(Hbar_k W_k) - tr(Hbar_k (sum_j W_j + R_s)) >= noise,
// with Hbar_k = h̄_k^H h̄_k.
CMat lifted_channel(const CMat& rows, int k);

// Surface-side SINR certificate matrix: for vtilde = [conj(v_w); 1],
//   vtilde^H Q_k vtilde = |h̄_k w_k|^2 - gamma * (interference + leakage),
// so tr(Q_k V) >= gamma * noise is the SINR constraint on lifted V.
CMat sinr_certificate(const SystemConfig& cfg, const ChannelSet& chs,
                      const RisRealization& ris, const LiftedDesign& d,
                      int k, double gamma);

// Transmit beam gain through the surface toward the given direction:
// u^H R_x u with u the two-hop receive vector for all elements.
double beam_gain(const SystemConfig& cfg, const ChannelSet& chs,
                 const CVec& v_eff, const AnglePair& a, const CMat& r_x);

// Monte-Carlo symbol-level estimate of the per-user SINR: unit-power QPSK
// data streams plus a Gaussian sensing stream whose *sample* covariance is
// forced to R_s exactly. Used as an oracle for the closed-form SINR.
Vec sinr_symbol_estimate(const TransmitDesign& d, const CMat& rows,
                         double noise_w, int n_slots, std::uint64_t seed);

}  // namespace risim
