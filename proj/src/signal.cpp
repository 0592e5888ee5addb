// signal.cpp — transmit designs, SINR evaluation, and two-hop cascades.

#include "risim/signal.hpp"

#include <cmath>

namespace risim {

CMat LiftedDesign::covariance() const {
  CMat r = r_s;
  for (const auto& wk : w_cov) r += wk;
  return r;
}

CMat downlink_rows(const ChannelSet& chs, const CVec& v_eff) {
  const int k_users = static_cast<int>(chs.cascade_ue.size());
  const int n_tx = static_cast<int>(chs.h_bs_ris.rows());
  CMat rows(k_users, n_tx);
  for (int k = 0; k < k_users; ++k)
    rows.row(k) = v_eff.adjoint() * chs.cascade_ue[k];
  return rows;
}

CMat downlink_rows_subset(const ChannelSet& chs, const std::vector<int>& idx,
                          const CVec& v_subset) {
  const int k_users = static_cast<int>(chs.cascade_ue.size());
  const int n_tx = static_cast<int>(chs.h_bs_ris.rows());
  CMat rows = CMat::Zero(k_users, n_tx);
  for (int k = 0; k < k_users; ++k) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      rows.row(k) += std::conj(v_subset[i]) * chs.cascade_ue[k].row(idx[i]);
  }
  return rows;
}

Vec sinr_all(const TransmitDesign& d, const CMat& rows, double noise_w) {
  const int k_users = static_cast<int>(rows.rows());
  Vec out(k_users);
  for (int k = 0; k < k_users; ++k) {
    double signal = 0.0, interference = 0.0;
    for (int i = 0; i < d.w.cols(); ++i) {
      const double p = std::norm((rows.row(k) * d.w.col(i)).value());
      if (i == k)
        signal = p;
      else
        interference += p;
    }
    const double leak =
        (rows.row(k) * d.r_s * rows.row(k).adjoint()).value().real();
    out[k] = signal / (interference + leak + noise_w);
  }
  return out;
}

Vec sinr_all(const LiftedDesign& d, const CMat& rows, double noise_w) {
  const int k_users = static_cast<int>(rows.rows());
  Vec out(k_users);
  for (int k = 0; k < k_users; ++k) {
    double signal = 0.0, interference = 0.0;
    for (std::size_t i = 0; i < d.w_cov.size(); ++i) {
      const double p =
          (rows.row(k) * d.w_cov[i] * rows.row(k).adjoint()).value().real();
      if (static_cast<int>(i) == k)
        signal = p;
      else
        interference += p;
    }
    const double leak =
        (rows.row(k) * d.r_s * rows.row(k).adjoint()).value().real();
    out[k] = signal / (interference + leak + noise_w);
  }
  return out;
}

CMat cascade_subset(const CMat& cascade, const std::vector<int>& idx) {
  CMat sub(static_cast<Eigen::Index>(idx.size()), cascade.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    sub.row(static_cast<Eigen::Index>(i)) = cascade.row(idx[i]);
  return sub;
}

CMat two_hop_map(const CMat& h_bs_ris, const std::vector<int>& idx,
                 const CVec& steering) {
  CMat g(static_cast<Eigen::Index>(idx.size()), h_bs_ris.rows());
  for (std::size_t i = 0; i < idx.size(); ++i)
    g.row(static_cast<Eigen::Index>(i)) =
        std::conj(steering[idx[i]]) * h_bs_ris.col(idx[i]).adjoint();
  return g;
}

CMat two_hop_operator(const CMat& g, const CVec& v) {
  const CVec u = g.adjoint() * v;
  return u * u.adjoint();
}

SensingCascade sensing_cascade(const SystemConfig& cfg, const ChannelSet& chs,
                               const RisRealization& ris) {
  SensingCascade sc;
  const CVec a_t = upa_steering(cfg, chs.target_aod);
  const CVec a_s = upa_steering(cfg, chs.scatter_aod);
  const CMat g_w = two_hop_map(chs.h_bs_ris, ris.working_idx, a_t);
  CVec v_w(ris.n_working());
  for (int i = 0; i < ris.n_working(); ++i)
    v_w[i] = ris.commanded[ris.working_idx[i]];
  sc.omega_working = two_hop_operator(g_w, v_w);
  if (ris.n_faulty() > 0) {
    const CMat g_f = two_hop_map(chs.h_bs_ris, ris.faulty_idx, a_s);
    sc.omega_faulty = two_hop_operator(g_f, ris.faulty_coeffs);
  } else {
    sc.omega_faulty = CMat::Zero(cfg.n_tx, cfg.n_tx);
  }
  sc.g_bar = chs.alpha_target * sc.omega_working +
             chs.alpha_scatter * sc.omega_faulty;
  return sc;
}

CMat lifted_channel(const CMat& rows, int k) {
  return rows.row(k).adjoint() * rows.row(k);
}

CMat sinr_certificate(const SystemConfig& cfg, const ChannelSet& chs,
                      const RisRealization& ris, const LiftedDesign& d,
                      int k, double gamma) {
  // M_k = W_k - gamma * (sum_{i != k} W_i + R_s)
  CMat m_k = d.w_cov[k];
  for (std::size_t i = 0; i < d.w_cov.size(); ++i)
    if (static_cast<int>(i) != k) m_k -= gamma * d.w_cov[i];
  m_k -= gamma * d.r_s;

  // Stack the working-element cascade rows over the faulty-only downlink row.
  const CMat h_w = cascade_subset(chs.cascade_ue[k], ris.working_idx);
  const CMat row_f =
      downlink_rows_subset(chs, ris.faulty_idx, ris.faulty_coeffs).row(k);
  const Eigen::Index w = h_w.rows();
  CMat stacked(w + 1, cfg.n_tx);
  stacked.topRows(w) = h_w;
  stacked.row(w) = row_f;
  return stacked * m_k * stacked.adjoint();
}

double beam_gain(const SystemConfig& cfg, const ChannelSet& chs,
                 const CVec& v_eff, const AnglePair& a, const CMat& r_x) {
  std::vector<int> all(cfg.n_elements());
  for (int r = 0; r < cfg.n_elements(); ++r) all[r] = r;
  const CMat g = two_hop_map(chs.h_bs_ris, all, upa_steering(cfg, a));
  const CVec u = g.adjoint() * v_eff;
  return (u.adjoint() * r_x * u).value().real();
}

Vec sinr_symbol_estimate(const TransmitDesign& d, const CMat& rows,
                         double noise_w, int n_slots, std::uint64_t seed) {
  const int n_tx = static_cast<int>(d.w.rows());
  const int k_users = static_cast<int>(d.w.cols());
  RngStream rng = make_stream(seed, Draw::kSymbolStream, 0);

  // Unit-power QPSK data symbols.
  CMat c(k_users, n_slots);
  for (int k = 0; k < k_users; ++k)
    for (int t = 0; t < n_slots; ++t) {
      const double re = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double im = rng.uniform() < 0.5 ? -1.0 : 1.0;
      c(k, t) = cd(re, im) / std::sqrt(2.0);
    }

  // Sensing stream: white Gaussian block re-colored so its *sample*
  // covariance equals R_s exactly (rank-aware square roots on both sides).
  CMat s = CMat::Zero(n_tx, n_slots);
  {
    CMat raw(n_tx, n_slots);
    for (int i = 0; i < n_tx; ++i)
      for (int t = 0; t < n_slots; ++t) raw(i, t) = rng.cnormal();
    const CMat sample_cov = raw * raw.adjoint() / double(n_slots);
    Eigen::SelfAdjointEigenSolver<CMat> es(sample_cov);
    CMat whiten = CMat::Zero(n_tx, n_tx);
    for (int i = 0; i < n_tx; ++i) {
      const double ev = es.eigenvalues()[i];
      if (ev > 1e-14)
        whiten += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint() /
                  std::sqrt(ev);
    }
    Eigen::SelfAdjointEigenSolver<CMat> er(herm(d.r_s));
    CMat color = CMat::Zero(n_tx, n_tx);
    for (int i = 0; i < n_tx; ++i) {
      const double ev = std::max(0.0, er.eigenvalues()[i]);
      color += std::sqrt(ev) * er.eigenvectors().col(i) *
               er.eigenvectors().col(i).adjoint();
    }
    s = color * whiten * raw;
  }

  Vec out(k_users);
  for (int k = 0; k < k_users; ++k) {
    const Eigen::RowVectorXcd h = rows.row(k);
    double sig = 0.0, rest = 0.0;
    for (int t = 0; t < n_slots; ++t) {
      cd des = (h * d.w.col(k)).value() * c(k, t);
      cd other = (h * s.col(t)).value();
      for (int i = 0; i < k_users; ++i)
        if (i != k) other += (h * d.w.col(i)).value() * c(i, t);
      other += std::sqrt(noise_w) * rng.cnormal();
      sig += std::norm(des);
      rest += std::norm(other);
    }
    out[k] = sig / rest;
  }
  return out;
}

}  // namespace risim
