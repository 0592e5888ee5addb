// Frozen-value and property tests for geometry, array responses, fading, and
// fault realizations. The numeric goldens were computed independently with
// numpy and are pinned to full double precision.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "risim/scenario.hpp"
#include "test_util.hpp"

using namespace risim;
using doctest::Approx;

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

TEST_CASE("carrier geometry constants") {
  SystemConfig cfg;
  CHECK(cfg.wavelength_m() == Approx(0.0107068735).epsilon(1e-12));
  CHECK(cfg.wavenumber() ==
        Approx(2.0 * std::numbers::pi / 0.0107068735).epsilon(1e-12));
  CHECK(cfg.dy() == Approx(0.5 * cfg.wavelength_m()).epsilon(1e-15));
}

TEST_CASE("direction angles toward target and scatter") {
  SystemConfig cfg;
  const AnglePair t = direction_angles(cfg.ris_pos_m, cfg.target_pos_m);
  CHECK(t.elev / kDeg == Approx(-9.09027692082232).epsilon(1e-12));
  CHECK(t.azim / kDeg == Approx(36.86989764584402).epsilon(1e-12));
  const AnglePair s = direction_angles(cfg.ris_pos_m, cfg.scatter_pos_m);
  CHECK(s.elev / kDeg == Approx(-9.12302895500693).epsilon(1e-12));
  CHECK(s.azim / kDeg == Approx(74.47588900324574).epsilon(1e-12));
  CHECK((cfg.target_pos_m - cfg.ris_pos_m).norm() ==
        Approx(25.317977802344327).epsilon(1e-14));
  CHECK((cfg.scatter_pos_m - cfg.ris_pos_m).norm() ==
        Approx(18.920887928424502).epsilon(1e-14));
  CHECK((cfg.ris_pos_m - cfg.bs_pos_m).norm() ==
        Approx(std::sqrt(1850.0)).epsilon(1e-14));
}

TEST_CASE("planar steering entries") {
  SystemConfig cfg;
  cfg.ris_ny = 5;
  cfg.ris_nz = 4;
  const AnglePair t = direction_angles(cfg.ris_pos_m, cfg.target_pos_m);
  const CVec a = upa_steering(cfg, t);
  REQUIRE(a.size() == 20);
  CHECK(a[0] == cd(1.0, 0.0));
  for (int r = 0; r < 20; ++r) CHECK(std::abs(a[r]) == Approx(1.0).epsilon(1e-14));
  // Element (iy=2, iz=3) -> index 3*5+2, value frozen from the reference run.
  const cd golden(-0.6152805158306768, -0.788308243543816);
  CHECK(std::abs(a[17] - golden) < 1e-12);
  // The grid index maps match the steering layout.
  const Vec iy = element_index_y(5, 4), iz = element_index_z(5, 4);
  CHECK(iy[17] == 2.0);
  CHECK(iz[17] == 3.0);
}

TEST_CASE("path loss and round-trip sensing gain goldens") {
  SystemConfig cfg;
  const double d_br = (cfg.ris_pos_m - cfg.bs_pos_m).norm();
  CHECK(pathloss(cfg, d_br, cfg.pathloss_exp_bs_ris) ==
        Approx(5.405405405405405e-07).epsilon(1e-12));

  const double d_rt = (cfg.target_pos_m - cfg.ris_pos_m).norm();
  const double g_t = two_hop_gain(cfg, cfg.target_rcs_m2, d_br + d_rt);
  CHECK(g_t * g_t == Approx(3.416332158278007e-12).epsilon(1e-12));

  const double d_rs = (cfg.scatter_pos_m - cfg.ris_pos_m).norm();
  const double g_s = two_hop_gain(cfg, cfg.scatter_rcs_m2, d_br + d_rs);
  CHECK(g_s * g_s == Approx(5.061985098683296e-12).epsilon(1e-12));
}

TEST_CASE("fault realizations: determinism, partition, coefficient law") {
  SystemConfig cfg;
  const RisRealization r1 = sample_ris_realization(cfg, 11, 3);
  const RisRealization r2 = sample_ris_realization(cfg, 11, 3);
  CHECK(r1.faulty_idx == r2.faulty_idx);
  CHECK((r1.faulty_coeffs - r2.faulty_coeffs).norm() == 0.0);

  CHECK(r1.n_faulty() == cfg.n_faulty);
  CHECK(r1.n_working() == cfg.n_elements() - cfg.n_faulty);
  // Partition property: working + faulty = all indices, disjoint and sorted.
  std::vector<int> merged = r1.working_idx;
  merged.insert(merged.end(), r1.faulty_idx.begin(), r1.faulty_idx.end());
  std::sort(merged.begin(), merged.end());
  for (int r = 0; r < cfg.n_elements(); ++r) CHECK(merged[r] == r);

  for (int f = 0; f < r1.n_faulty(); ++f)
    CHECK(std::abs(r1.faulty_coeffs[f]) <= 1.0);
  CHECK((r1.commanded - CVec::Ones(cfg.n_elements())).norm() == 0.0);

  // The effective coefficients equal commanded except at stuck positions.
  const CVec eff = r1.effective();
  for (int i : r1.working_idx) CHECK(eff[i] == r1.commanded[i]);
  for (int f = 0; f < r1.n_faulty(); ++f)
    CHECK(eff[r1.faulty_idx[f]] == r1.faulty_coeffs[f]);

  const RisRealization perfect = r1.as_perfect();
  CHECK(perfect.n_faulty() == 0);
  CHECK(perfect.n_working() == cfg.n_elements());
  CHECK((perfect.effective() - r1.commanded).norm() == 0.0);
}

TEST_CASE("stuck coefficients are keyed by grid coordinate") {
  // With every element faulty, the same (iy, iz) cell must misbehave
  // identically in a 4x4 and a 5x4 aperture (coupled sweeps rely on this).
  SystemConfig small;
  small.n_faulty = 16;
  SystemConfig big;
  big.ris_ny = 5;
  big.n_faulty = 20;
  const RisRealization rs = sample_ris_realization(small, 5, 1);
  const RisRealization rb = sample_ris_realization(big, 5, 1);
  for (int iz = 0; iz < 4; ++iz)
    for (int iy = 0; iy < 4; ++iy)
      CHECK(rs.faulty_coeffs[iz * 4 + iy] == rb.faulty_coeffs[iz * 5 + iy]);
}

TEST_CASE("channels are coupled across apertures by grid coordinate") {
  SystemConfig small;
  SystemConfig big;
  big.ris_ny = 5;
  const ChannelSet cs = sample_channels(small, 21, 4);
  const ChannelSet cb = sample_channels(big, 21, 4);
  for (int iz = 0; iz < 4; ++iz)
    for (int iy = 0; iy < 4; ++iy) {
      const int r_small = iz * 4 + iy, r_big = iz * 5 + iy;
      CHECK((cs.h_bs_ris.col(r_small) - cb.h_bs_ris.col(r_big)).norm() == 0.0);
      for (int k = 0; k < small.n_users; ++k)
        CHECK(cs.h_ris_ue[k][r_small] == cb.h_ris_ue[k][r_big]);
    }
  // User drops do not depend on the aperture either.
  for (int k = 0; k < small.n_users; ++k)
    CHECK((cs.ue_pos_m[k] - cb.ue_pos_m[k]).norm() == 0.0);
}

TEST_CASE("users drop uniformly inside the disk") {
  SystemConfig cfg;
  for (std::uint64_t trial = 0; trial < 40; ++trial) {
    const ChannelSet chs = sample_channels(cfg, 33, trial);
    for (const auto& p : chs.ue_pos_m) {
      CHECK((p - cfg.ue_center_m).norm() <= cfg.ue_radius_m + 1e-12);
      CHECK(p.z() == cfg.ue_center_m.z());
    }
  }
}

TEST_CASE("fading statistics match the Rician model") {
  SystemConfig cfg;
  const double d_br = (cfg.ris_pos_m - cfg.bs_pos_m).norm();
  const double pl = pathloss(cfg, d_br, cfg.pathloss_exp_bs_ris);
  const double k1 = cfg.rician_k_bs_ris;
  const double los = std::sqrt(pl * k1 / (k1 + 1.0));
  const double nlos_var = pl / (k1 + 1.0);

  const int n_trials = 2500;
  cd mean(0.0, 0.0);
  double var = 0.0;
  for (int t = 0; t < n_trials; ++t) {
    const ChannelSet chs = sample_channels(cfg, 77, t);
    mean += chs.h_bs_ris(0, 0);
  }
  mean /= double(n_trials);
  // Element (0,0): both array responses have unit phase there, so the mean
  // is the LoS amplitude itself.
  CHECK(std::abs(mean - cd(los, 0.0)) / los < 0.03);
  for (int t = 0; t < n_trials; ++t) {
    const ChannelSet chs = sample_channels(cfg, 77, t);
    var += std::norm(chs.h_bs_ris(0, 0) - mean);
  }
  var /= double(n_trials);
  CHECK(var == Approx(nlos_var).epsilon(0.08));
}

TEST_CASE("gain constants are attached to the channel set") {
  SystemConfig cfg;
  const ChannelSet chs = sample_channels(cfg, 3, 0);
  CHECK(chs.alpha_target * chs.alpha_target ==
        Approx(3.416332158278007e-12).epsilon(1e-12));
  CHECK(chs.alpha_scatter * chs.alpha_scatter ==
        Approx(5.061985098683296e-12).epsilon(1e-12));
  CHECK(chs.n_elements() == cfg.n_elements());
  CHECK(chs.cascade_ue[0].rows() == cfg.n_elements());
  CHECK(chs.cascade_ue[0].cols() == cfg.n_tx);
}

TEST_CASE("config JSON round-trip and unknown-key rejection") {
  SystemConfig cfg;
  cfg.n_tx = 12;
  cfg.ris_ny = 6;
  cfg.sinr_min = 2.5;
  cfg.penalty_cap = 500.0;
  const SystemConfig back = SystemConfig::from_json(cfg.to_json());
  CHECK(back.n_tx == 12);
  CHECK(back.ris_ny == 6);
  CHECK(back.sinr_min == 2.5);
  CHECK(back.penalty_cap == 500.0);
  CHECK(back.carrier_hz == cfg.carrier_hz);
  CHECK(back.bs_pos_m == cfg.bs_pos_m);

  CHECK_THROWS_AS(SystemConfig::from_json("{\"n_tx\": 8, \"oops\": 1}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(SystemConfig::from_json("{\"n_users\": 0}"),
                  std::invalid_argument);
}

TEST_CASE("scenario JSON round-trip preserves channels and faults") {
  SystemConfig cfg;
  const ChannelSet chs = sample_channels(cfg, 8, 2);
  const RisRealization ris = sample_ris_realization(cfg, 8, 2);
  const std::string text = scenario_to_json(cfg, chs, ris);

  SystemConfig cfg2;
  ChannelSet chs2;
  RisRealization ris2;
  scenario_from_json(text, cfg2, chs2, ris2);
  CHECK((chs2.h_bs_ris - chs.h_bs_ris).norm() == 0.0);
  for (int k = 0; k < cfg.n_users; ++k) {
    CHECK((chs2.h_ris_ue[k] - chs.h_ris_ue[k]).norm() == 0.0);
    CHECK((chs2.cascade_ue[k] - chs.cascade_ue[k]).norm() == 0.0);
  }
  CHECK(chs2.alpha_target == chs.alpha_target);
  CHECK(ris2.faulty_idx == ris.faulty_idx);
  CHECK(ris2.working_idx == ris.working_idx);
  CHECK((ris2.faulty_coeffs - ris.faulty_coeffs).norm() == 0.0);
  CHECK((ris2.commanded - ris.commanded).norm() == 0.0);
}
