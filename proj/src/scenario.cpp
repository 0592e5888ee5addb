// scenario.cpp — configuration validation and serialization, geometry, array
// responses, and random realizations of channels and reflector faults.

#include "risim/scenario.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace risim {

using json = nlohmann::ordered_json;

double SystemConfig::wavenumber() const {
  return 2.0 * std::numbers::pi / wavelength_m();
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("SystemConfig: " + what);
}

json vec3_to_json(const Eigen::Vector3d& v) {
  return json::array({v.x(), v.y(), v.z()});
}

Eigen::Vector3d vec3_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json cmat_to_json(const CMat& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      re.push_back(m(r, c).real());
      im.push_back(m(r, c).imag());
    }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"re", re}, {"im", im}};
}

CMat cmat_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  CMat m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r, ++k)
      m(r, c) = cd(re.at(k).get<double>(), im.at(k).get<double>());
  return m;
}

}  // namespace

void SystemConfig::validate() const {
  require(n_tx > 0 && n_rx > 0, "antenna counts must be positive");
  require(ris_ny > 0 && ris_nz > 0, "surface grid must be positive");
  require(n_users > 0, "need at least one user");
  require(n_faulty >= 0 && n_faulty <= n_elements(),
          "fault count must lie in [0, R]");
  require(n_slots > 0, "slot count must be positive");
  require(carrier_hz > 0, "carrier frequency must be positive");
  require(power_budget_w > 0, "power budget must be positive");
  require(sensing_noise_w > 0 && comm_noise_w > 0,
          "noise powers must be positive");
  require(sinr_min > 0, "SINR floor must be positive");
  require(target_rcs_m2 > 0 && scatter_rcs_m2 > 0, "RCS must be positive");
  require(ue_radius_m >= 0, "user disk radius must be non-negative");
  require(pathloss_ref > 0 && pathloss_ref_dist_m > 0,
          "path-loss reference must be positive");
  require(rician_k_bs_ris >= 0 && rician_k_ris_ue >= 0,
          "Rician K-factors must be non-negative");
  require(penalty_init > 0 && penalty_growth > 1 && penalty_cap >= penalty_init,
          "penalty schedule must grow from a positive start");
  require(bcd_tol > 0 && mm_tol > 0 && sca_tol > 0 && ipm_tol > 0,
          "tolerances must be positive");
  require(bcd_max_outer > 0 && mm_max_iter > 0 && sca_max_iter > 0,
          "iteration caps must be positive");
  require(strict_margin > 0, "definiteness margin must be positive");
}

std::string SystemConfig::to_json() const {
  json j;
  j["n_tx"] = n_tx;
  j["n_rx"] = n_rx;
  j["ris_ny"] = ris_ny;
  j["ris_nz"] = ris_nz;
  j["n_users"] = n_users;
  j["n_faulty"] = n_faulty;
  j["n_slots"] = n_slots;
  j["carrier_hz"] = carrier_hz;
  j["spacing_y_m"] = spacing_y_m;
  j["spacing_z_m"] = spacing_z_m;
  j["bs_spacing_m"] = bs_spacing_m;
  j["power_budget_w"] = power_budget_w;
  j["sensing_noise_w"] = sensing_noise_w;
  j["comm_noise_w"] = comm_noise_w;
  j["sinr_min"] = sinr_min;
  j["target_rcs_m2"] = target_rcs_m2;
  j["scatter_rcs_m2"] = scatter_rcs_m2;
  j["bs_pos_m"] = vec3_to_json(bs_pos_m);
  j["ris_pos_m"] = vec3_to_json(ris_pos_m);
  j["ue_center_m"] = vec3_to_json(ue_center_m);
  j["ue_radius_m"] = ue_radius_m;
  j["target_pos_m"] = vec3_to_json(target_pos_m);
  j["scatter_pos_m"] = vec3_to_json(scatter_pos_m);
  j["pathloss_ref"] = pathloss_ref;
  j["pathloss_ref_dist_m"] = pathloss_ref_dist_m;
  j["pathloss_exp_bs_ris"] = pathloss_exp_bs_ris;
  j["pathloss_exp_ris_ue"] = pathloss_exp_ris_ue;
  j["rician_k_bs_ris"] = rician_k_bs_ris;
  j["rician_k_ris_ue"] = rician_k_ris_ue;
  j["penalty_init"] = penalty_init;
  j["penalty_growth"] = penalty_growth;
  j["penalty_cap"] = penalty_cap;
  j["bcd_tol"] = bcd_tol;
  j["bcd_max_outer"] = bcd_max_outer;
  j["mm_tol"] = mm_tol;
  j["mm_max_iter"] = mm_max_iter;
  j["sca_tol"] = sca_tol;
  j["sca_max_iter"] = sca_max_iter;
  j["ipm_tol"] = ipm_tol;
  j["strict_margin"] = strict_margin;
  return j.dump(2);
}

SystemConfig SystemConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  SystemConfig c;
  // Unknown keys are rejected so typos in config files fail loudly.
  const SystemConfig defaults;
  auto get = [&](const char* key, auto member) {
    using T = std::decay_t<decltype(member)>;
    if (j.contains(key)) return j.at(key).get<T>();
    return member;
  };
  c.n_tx = get("n_tx", defaults.n_tx);
  c.n_rx = get("n_rx", defaults.n_rx);
  c.ris_ny = get("ris_ny", defaults.ris_ny);
  c.ris_nz = get("ris_nz", defaults.ris_nz);
  c.n_users = get("n_users", defaults.n_users);
  c.n_faulty = get("n_faulty", defaults.n_faulty);
  c.n_slots = get("n_slots", defaults.n_slots);
  c.carrier_hz = get("carrier_hz", defaults.carrier_hz);
  c.spacing_y_m = get("spacing_y_m", defaults.spacing_y_m);
  c.spacing_z_m = get("spacing_z_m", defaults.spacing_z_m);
  c.bs_spacing_m = get("bs_spacing_m", defaults.bs_spacing_m);
  c.power_budget_w = get("power_budget_w", defaults.power_budget_w);
  c.sensing_noise_w = get("sensing_noise_w", defaults.sensing_noise_w);
  c.comm_noise_w = get("comm_noise_w", defaults.comm_noise_w);
  c.sinr_min = get("sinr_min", defaults.sinr_min);
  c.target_rcs_m2 = get("target_rcs_m2", defaults.target_rcs_m2);
  c.scatter_rcs_m2 = get("scatter_rcs_m2", defaults.scatter_rcs_m2);
  if (j.contains("bs_pos_m")) c.bs_pos_m = vec3_from_json(j.at("bs_pos_m"));
  if (j.contains("ris_pos_m")) c.ris_pos_m = vec3_from_json(j.at("ris_pos_m"));
  if (j.contains("ue_center_m"))
    c.ue_center_m = vec3_from_json(j.at("ue_center_m"));
  c.ue_radius_m = get("ue_radius_m", defaults.ue_radius_m);
  if (j.contains("target_pos_m"))
    c.target_pos_m = vec3_from_json(j.at("target_pos_m"));
  if (j.contains("scatter_pos_m"))
    c.scatter_pos_m = vec3_from_json(j.at("scatter_pos_m"));
  c.pathloss_ref = get("pathloss_ref", defaults.pathloss_ref);
  c.pathloss_ref_dist_m = get("pathloss_ref_dist_m", defaults.pathloss_ref_dist_m);
  c.pathloss_exp_bs_ris = get("pathloss_exp_bs_ris", defaults.pathloss_exp_bs_ris);
  c.pathloss_exp_ris_ue = get("pathloss_exp_ris_ue", defaults.pathloss_exp_ris_ue);
  c.rician_k_bs_ris = get("rician_k_bs_ris", defaults.rician_k_bs_ris);
  c.rician_k_ris_ue = get("rician_k_ris_ue", defaults.rician_k_ris_ue);
  c.penalty_init = get("penalty_init", defaults.penalty_init);
  c.penalty_growth = get("penalty_growth", defaults.penalty_growth);
  c.penalty_cap = get("penalty_cap", defaults.penalty_cap);
  c.bcd_tol = get("bcd_tol", defaults.bcd_tol);
  c.bcd_max_outer = get("bcd_max_outer", defaults.bcd_max_outer);
  c.mm_tol = get("mm_tol", defaults.mm_tol);
  c.mm_max_iter = get("mm_max_iter", defaults.mm_max_iter);
  c.sca_tol = get("sca_tol", defaults.sca_tol);
  c.sca_max_iter = get("sca_max_iter", defaults.sca_max_iter);
  c.ipm_tol = get("ipm_tol", defaults.ipm_tol);
  c.strict_margin = get("strict_margin", defaults.strict_margin);

  static const char* known[] = {
      "n_tx", "n_rx", "ris_ny", "ris_nz", "n_users", "n_faulty", "n_slots",
      "carrier_hz", "spacing_y_m", "spacing_z_m", "bs_spacing_m",
      "power_budget_w", "sensing_noise_w", "comm_noise_w", "sinr_min",
      "target_rcs_m2", "scatter_rcs_m2", "bs_pos_m", "ris_pos_m",
      "ue_center_m", "ue_radius_m", "target_pos_m", "scatter_pos_m",
      "pathloss_ref", "pathloss_ref_dist_m", "pathloss_exp_bs_ris",
      "pathloss_exp_ris_ue", "rician_k_bs_ris", "rician_k_ris_ue",
      "penalty_init", "penalty_growth", "penalty_cap", "bcd_tol",
      "bcd_max_outer", "mm_tol", "mm_max_iter", "sca_tol", "sca_max_iter",
      "ipm_tol", "strict_margin"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument("SystemConfig: unknown key " + key);
  }
  c.validate();
  return c;
}

double pathloss(const SystemConfig& cfg, double dist_m, double exponent) {
  return cfg.pathloss_ref *
         std::pow(dist_m / cfg.pathloss_ref_dist_m, -exponent);
}

AnglePair direction_angles(const Eigen::Vector3d& from,
                           const Eigen::Vector3d& to) {
  const Eigen::Vector3d u = (to - from).normalized();
  return {std::asin(u.z()), std::atan2(u.y(), u.x())};
}

Vec element_index_y(int ny, int nz) {
  Vec v(static_cast<Eigen::Index>(ny) * nz);
  for (int iz = 0; iz < nz; ++iz)
    for (int iy = 0; iy < ny; ++iy) v[iz * ny + iy] = iy;
  return v;
}

Vec element_index_z(int ny, int nz) {
  Vec v(static_cast<Eigen::Index>(ny) * nz);
  for (int iz = 0; iz < nz; ++iz)
    for (int iy = 0; iy < ny; ++iy) v[iz * ny + iy] = iz;
  return v;
}

CVec upa_steering(const SystemConfig& cfg, const AnglePair& a) {
  const int ny = cfg.ris_ny, nz = cfg.ris_nz;
  const double uy = std::cos(a.elev) * std::sin(a.azim);
  const double uz = std::sin(a.elev);
  const double py = cfg.wavenumber() * cfg.dy() * uy;
  const double pz = cfg.wavenumber() * cfg.dz() * uz;
  CVec v(static_cast<Eigen::Index>(ny) * nz);
  for (int iz = 0; iz < nz; ++iz)
    for (int iy = 0; iy < ny; ++iy)
      v[iz * ny + iy] = std::polar(1.0, -(py * iy + pz * iz));
  return v;
}

CVec ula_steering(int n, double spacing_m, double wavelength_m, double cosx) {
  const double p = 2.0 * std::numbers::pi / wavelength_m * spacing_m * cosx;
  CVec v(n);
  for (int i = 0; i < n; ++i) v[i] = std::polar(1.0, -p * i);
  return v;
}

CVec RisRealization::effective() const {
  CVec v = commanded;
  for (int f = 0; f < n_faulty(); ++f) v[faulty_idx[f]] = faulty_coeffs[f];
  return v;
}

RisRealization RisRealization::as_perfect() const {
  RisRealization p;
  p.working_idx.resize(commanded.size());
  for (int r = 0; r < commanded.size(); ++r) p.working_idx[r] = r;
  p.faulty_coeffs = CVec(0);
  p.commanded = commanded;
  return p;
}

double two_hop_gain(const SystemConfig& cfg, double rcs_m2,
                    double total_path_m) {
  const double lam = cfg.wavelength_m();
  const double pi3 = std::pow(std::numbers::pi, 3);
  return std::sqrt(cfg.n_tx * cfg.n_rx * lam * lam * rcs_m2 /
                   (4.0 * pi3 * std::pow(total_path_m, 4)));
}

RisRealization sample_ris_realization(const SystemConfig& cfg,
                                      std::uint64_t seed,
                                      std::uint64_t trial) {
  cfg.validate();
  const int r_total = cfg.n_elements();
  RisRealization ris;
  RngStream faults = make_stream(seed, Draw::kFaultPlacement, trial);
  ris.faulty_idx = faults.sample_indices(r_total, cfg.n_faulty);
  ris.working_idx.reserve(r_total - cfg.n_faulty);
  std::size_t f = 0;
  for (int r = 0; r < r_total; ++r) {
    if (f < ris.faulty_idx.size() && ris.faulty_idx[f] == r) {
      ++f;
    } else {
      ris.working_idx.push_back(r);
    }
  }
  // Stuck coefficients are keyed by grid coordinate so the same element
  // misbehaves identically across configurations that both contain it.
  RngStream coeff_root = make_stream(seed, Draw::kFaultCoefficient, trial);
  ris.faulty_coeffs = CVec(cfg.n_faulty);
  for (int i = 0; i < cfg.n_faulty; ++i) {
    const int r = ris.faulty_idx[i];
    const int iy = r % cfg.ris_ny, iz = r / cfg.ris_ny;
    RngStream s = coeff_root.substream(iz * 64 + iy);
    const double beta = s.uniform();
    const double theta = s.uniform(0.0, 2.0 * std::numbers::pi);
    ris.faulty_coeffs[i] = std::polar(beta, theta);
  }
  ris.commanded = CVec::Ones(r_total);
  return ris;
}

ChannelSet sample_channels(const SystemConfig& cfg, std::uint64_t seed,
                           std::uint64_t trial) {
  cfg.validate();
  const int r_total = cfg.n_elements();
  ChannelSet chs;

  // Geometry-derived scalars.
  chs.target_aod = direction_angles(cfg.ris_pos_m, cfg.target_pos_m);
  chs.scatter_aod = direction_angles(cfg.ris_pos_m, cfg.scatter_pos_m);
  const double d_br = (cfg.ris_pos_m - cfg.bs_pos_m).norm();
  const double d_rt = (cfg.target_pos_m - cfg.ris_pos_m).norm();
  const double d_rs = (cfg.scatter_pos_m - cfg.ris_pos_m).norm();
  chs.alpha_target = two_hop_gain(cfg, cfg.target_rcs_m2, d_br + d_rt);
  chs.alpha_scatter = two_hop_gain(cfg, cfg.scatter_rcs_m2, d_br + d_rs);

  // Base-station <-> surface link: Rician, line-of-sight rank one.
  const AnglePair bs_to_ris = direction_angles(cfg.bs_pos_m, cfg.ris_pos_m);
  const AnglePair ris_to_bs = direction_angles(cfg.ris_pos_m, cfg.bs_pos_m);
  const double cos_bs =
      std::cos(bs_to_ris.elev) * std::cos(bs_to_ris.azim);  // u . x_hat
  const CVec b_bs =
      ula_steering(cfg.n_tx, cfg.d_bs(), cfg.wavelength_m(), cos_bs);
  const CVec a_ris = upa_steering(cfg, ris_to_bs);
  const double pl_br = pathloss(cfg, d_br, cfg.pathloss_exp_bs_ris);
  const double k1 = cfg.rician_k_bs_ris;
  const double los1 = std::sqrt(pl_br * k1 / (k1 + 1.0));
  const double nlos1 = std::sqrt(pl_br / (k1 + 1.0));
  chs.h_bs_ris = CMat(cfg.n_tx, r_total);
  RngStream br_root = make_stream(seed, Draw::kChannelBsRis, trial);
  for (int r = 0; r < r_total; ++r) {
    const int iy = r % cfg.ris_ny, iz = r / cfg.ris_ny;
    RngStream col = br_root.substream(iz * 64 + iy);
    for (int m = 0; m < cfg.n_tx; ++m) {
      chs.h_bs_ris(m, r) =
          los1 * b_bs[m] * std::conj(a_ris[r]) + nlos1 * col.cnormal();
    }
  }

  // Users: uniform drop on a disk, surface->user Rician fading.
  RngStream place_root = make_stream(seed, Draw::kUserPlacement, trial);
  RngStream ue_root = make_stream(seed, Draw::kChannelRisUe, trial);
  const double k2 = cfg.rician_k_ris_ue;
  chs.ue_pos_m.resize(cfg.n_users);
  chs.h_ris_ue.resize(cfg.n_users);
  chs.cascade_ue.resize(cfg.n_users);
  for (int k = 0; k < cfg.n_users; ++k) {
    RngStream place = place_root.substream(k);
    const double rad = cfg.ue_radius_m * std::sqrt(place.uniform());
    const double ang = place.uniform(0.0, 2.0 * std::numbers::pi);
    chs.ue_pos_m[k] = cfg.ue_center_m +
                      Eigen::Vector3d(rad * std::cos(ang),
                                      rad * std::sin(ang), 0.0);
    const double d_ru = (chs.ue_pos_m[k] - cfg.ris_pos_m).norm();
    const double pl_ru = pathloss(cfg, d_ru, cfg.pathloss_exp_ris_ue);
    const CVec a_ue =
        upa_steering(cfg, direction_angles(cfg.ris_pos_m, chs.ue_pos_m[k]));
    const double los2 = std::sqrt(pl_ru * k2 / (k2 + 1.0));
    const double nlos2 = std::sqrt(pl_ru / (k2 + 1.0));
    CVec h(r_total);
    RngStream user = ue_root.substream(k);
    for (int r = 0; r < r_total; ++r) {
      const int iy = r % cfg.ris_ny, iz = r / cfg.ris_ny;
      RngStream el = user.substream(iz * 64 + iy);
      h[r] = los2 * a_ue[r] + nlos2 * el.cnormal();
    }
    chs.h_ris_ue[k] = h;
    // Element-major cascade: row r is conj(h_k[r]) * (column r of H_br)^H.
    chs.cascade_ue[k] = h.conjugate().asDiagonal() * chs.h_bs_ris.adjoint();
  }
  return chs;
}

std::string scenario_to_json(const SystemConfig& cfg, const ChannelSet& chs,
                             const RisRealization& ris) {
  json j;
  j["config"] = json::parse(cfg.to_json());
  j["channels"]["h_bs_ris"] = cmat_to_json(chs.h_bs_ris);
  j["channels"]["h_ris_ue"] = json::array();
  for (const auto& h : chs.h_ris_ue)
    j["channels"]["h_ris_ue"].push_back(cmat_to_json(h));
  j["channels"]["ue_pos_m"] = json::array();
  for (const auto& p : chs.ue_pos_m)
    j["channels"]["ue_pos_m"].push_back(vec3_to_json(p));
  j["faults"]["faulty_idx"] = ris.faulty_idx;
  j["faults"]["faulty_coeffs"] = cmat_to_json(ris.faulty_coeffs);
  j["faults"]["commanded"] = cmat_to_json(ris.commanded);
  return j.dump(2);
}

void scenario_from_json(const std::string& text, SystemConfig& cfg,
                        ChannelSet& chs, RisRealization& ris) {
  const json j = json::parse(text);
  cfg = SystemConfig::from_json(j.at("config").dump());

  chs = ChannelSet{};
  chs.h_bs_ris = cmat_from_json(j.at("channels").at("h_bs_ris"));
  for (const auto& h : j.at("channels").at("h_ris_ue"))
    chs.h_ris_ue.push_back(cmat_from_json(h).col(0));
  for (const auto& p : j.at("channels").at("ue_pos_m"))
    chs.ue_pos_m.push_back(vec3_from_json(p));
  chs.target_aod = direction_angles(cfg.ris_pos_m, cfg.target_pos_m);
  chs.scatter_aod = direction_angles(cfg.ris_pos_m, cfg.scatter_pos_m);
  const double d_br = (cfg.ris_pos_m - cfg.bs_pos_m).norm();
  chs.alpha_target = two_hop_gain(
      cfg, cfg.target_rcs_m2, d_br + (cfg.target_pos_m - cfg.ris_pos_m).norm());
  chs.alpha_scatter = two_hop_gain(
      cfg, cfg.scatter_rcs_m2,
      d_br + (cfg.scatter_pos_m - cfg.ris_pos_m).norm());
  chs.cascade_ue.clear();
  for (const auto& h : chs.h_ris_ue)
    chs.cascade_ue.push_back(h.conjugate().asDiagonal() *
                             chs.h_bs_ris.adjoint());

  ris = RisRealization{};
  ris.faulty_idx = j.at("faults").at("faulty_idx").get<std::vector<int>>();
  ris.faulty_coeffs = cmat_from_json(j.at("faults").at("faulty_coeffs")).col(0);
  ris.commanded = cmat_from_json(j.at("faults").at("commanded")).col(0);
  std::size_t f = 0;
  for (int r = 0; r < ris.commanded.size(); ++r) {
    if (f < ris.faulty_idx.size() && ris.faulty_idx[f] == r) {
      ++f;
    } else {
      ris.working_idx.push_back(r);
    }
  }
}

}  // namespace risim
