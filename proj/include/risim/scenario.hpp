// scenario.hpp — system configuration, geometry, array responses, and random
// scenario realizations (channel fading, reflector faults, user drops).
//
// Conventions used throughout the library:
//  * The base station is a uniform linear array along the x-axis; the
//    reflecting surface is a uniform planar array in the y-z plane, element
//    (0,0) at the surface reference position, index r = iz * ny + iy.
//  * Angles: for a unit propagation direction u, elevation = asin(u_z) and
//    azimuth = atan2(u_y, u_x); the planar response accumulates phase
//    -kappa * (dy*cos(el)*sin(az)*iy + dz*sin(el)*iz) per element.
//  * Every reflection-coefficient vector v stores the *conjugate* of the
//    physical coefficient, i.e. the applied phase matrix is diag(conj(v)).
//    With that convention the cascaded downlink row vector is
//    v^H * diag(h_k^H) * H_br^H, and the element-major cascade matrix
//    H_k = diag(h_k^H) * H_br^H has one row per reflecting element.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "risim/linalg.hpp"
#include "risim/rng.hpp"

namespace risim {

struct AnglePair {
  double elev = 0.0;  // radians
  double azim = 0.0;  // radians
};

// All quantities in SI units (meters, watts, hertz, radians); ratios linear.
struct SystemConfig {
  int n_tx = 8;        // transmit antennas
  int n_rx = 8;        // receive antennas (sensing)
  int ris_ny = 4;      // reflecting elements along y
  int ris_nz = 4;      // reflecting elements along z
  int n_users = 2;     // downlink users
  int n_faulty = 2;    // faulty reflecting elements
  int n_slots = 64;    // radar/communication slots per frame

  double carrier_hz = 28e9;
  double spacing_y_m = 0.0;   // element pitch along y; 0 => half wavelength
  double spacing_z_m = 0.0;   // element pitch along z; 0 => half wavelength
  double bs_spacing_m = 0.0;  // transmit array pitch; 0 => half wavelength

  double power_budget_w = 0.1;     // total transmit power
  double sensing_noise_w = 1e-14;  // receiver noise power, sensing chain
  double comm_noise_w = 1e-14;     // receiver noise power, each user
  double sinr_min = 4.0;           // per-user SINR floor (linear)

  double target_rcs_m2 = 1.2589254117941673;   // radar cross-section
  double scatter_rcs_m2 = 1.2589254117941673;  // unintended scatter RCS

  Eigen::Vector3d bs_pos_m{15.0, 0.0, 10.0};
  Eigen::Vector3d ris_pos_m{0.0, 40.0, 5.0};
  Eigen::Vector3d ue_center_m{15.0, 40.0, 1.0};
  double ue_radius_m = 8.0;
  Eigen::Vector3d target_pos_m{20.0, 55.0, 1.0};
  Eigen::Vector3d scatter_pos_m{5.0, 58.0, 2.0};

  double pathloss_ref = 1e-3;       // power gain at the reference distance
  double pathloss_ref_dist_m = 1.0;
  double pathloss_exp_bs_ris = 2.0;
  double pathloss_exp_ris_ue = 2.2;
  double rician_k_bs_ris = 10.0;  // Rician K-factor (linear)
  double rician_k_ris_ue = 1.0;

  // Optimizer knobs.
  double penalty_init = 0.1;
  double penalty_growth = 5.0;
  double penalty_cap = 1e4;
  double bcd_tol = 1e-5;  // relative objective reduction threshold
  int bcd_max_outer = 30;
  double mm_tol = 1e-4;
  int mm_max_iter = 15;
  double sca_tol = 1e-4;
  int sca_max_iter = 12;
  double ipm_tol = 1e-8;        // interior-point relative gap/residual target
  double strict_margin = 1e-6;  // definiteness margin, in internal block scale

  double wavelength_m() const { return 299792458.0 / carrier_hz; }
  double wavenumber() const;  // 2*pi / wavelength, exact by construction
  double dy() const { return spacing_y_m > 0 ? spacing_y_m : 0.5 * wavelength_m(); }
  double dz() const { return spacing_z_m > 0 ? spacing_z_m : 0.5 * wavelength_m(); }
  double d_bs() const { return bs_spacing_m > 0 ? bs_spacing_m : 0.5 * wavelength_m(); }
  int n_elements() const { return ris_ny * ris_nz; }

  // Throws std::invalid_argument on any violated precondition (dimensions
  // positive, fault count within range, powers/ratios positive, ...).
  void validate() const;

  std::string to_json() const;
  static SystemConfig from_json(const std::string& text);
};

// Distance-power-law attenuation: ref * (d / d_ref)^(-exponent).
double pathloss(const SystemConfig& cfg, double dist_m, double exponent);

// Angles of the unit vector pointing from `from` toward `to`.
AnglePair direction_angles(const Eigen::Vector3d& from,
                           const Eigen::Vector3d& to);

// Per-element grid coordinates of the planar surface, index r = iz*ny + iy.
Vec element_index_y(int ny, int nz);
Vec element_index_z(int ny, int nz);

// Planar array response (unit-modulus entries, element (0,0) has phase 0).
CVec upa_steering(const SystemConfig& cfg, const AnglePair& a);

// Linear array response along x with direction cosine `cosx` = u . x_hat.
CVec ula_steering(int n, double spacing_m, double wavelength_m, double cosx);

// One random fault realization of the reflecting surface.
struct RisRealization {
  std::vector<int> faulty_idx;   // sorted positions of stuck elements
  std::vector<int> working_idx;  // sorted complement
  CVec faulty_coeffs;            // conjugated stuck coefficients, |.| <= 1
  CVec commanded;                // conjugated commanded phases, all elements

  int n_working() const { return static_cast<int>(working_idx.size()); }
  int n_faulty() const { return static_cast<int>(faulty_idx.size()); }

  // Coefficients the surface physically applies (conjugated convention):
  // commanded at working positions, stuck values at faulty positions.
  CVec effective() const;

  // A fault-free twin (every element working, same commanded phases).
  RisRealization as_perfect() const;
};

// Channel realization plus the deterministic scenario geometry derived data.
struct ChannelSet {
  CMat h_bs_ris;                   // n_tx x R, uplink orientation
  std::vector<CVec> h_ris_ue;      // per user, length R
  std::vector<CMat> cascade_ue;    // per user, R x n_tx (element-major rows)
  std::vector<Eigen::Vector3d> ue_pos_m;

  AnglePair target_aod;   // from the surface toward the target
  AnglePair scatter_aod;  // from the surface toward the unintended scatter
  double alpha_target;    // |two-hop gain| toward the target, real >= 0
  double alpha_scatter;   // |two-hop gain| via the scatter

  int n_elements() const { return static_cast<int>(h_bs_ris.cols()); }
};

// Round-trip sensing amplitude: sqrt(n_tx*n_rx*lambda^2*rcs/(4*pi^3*d^4))
// with d the total forward path length via the surface.
double two_hop_gain(const SystemConfig& cfg, double rcs_m2,
                    double total_path_m);

// Samples fault positions uniformly, stuck magnitudes U(0,1), stuck phases
// U(0,2pi); commanded phases initialize to 1. Deterministic in (seed, trial).
RisRealization sample_ris_realization(const SystemConfig& cfg,
                                      std::uint64_t seed, std::uint64_t trial);

// Samples the Rician-faded channels. Per-object substreams are keyed by
// physical coordinates (user index, element grid position) so realizations
// stay coupled when the aperture or the user count changes.
ChannelSet sample_channels(const SystemConfig& cfg, std::uint64_t seed,
                           std::uint64_t trial);

// Serialization of a full scenario (config + channels + faults) so optimizer
// regressions can run on frozen inputs.
std::string scenario_to_json(const SystemConfig& cfg, const ChannelSet& chs,
                             const RisRealization& ris);
void scenario_from_json(const std::string& text, SystemConfig& cfg,
                        ChannelSet& chs, RisRealization& ris);

}  // namespace risim
