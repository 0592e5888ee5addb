// bounds.cpp — echo derivative operators, pseudo-true fit, bound blocks.

#include "risim/bounds.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace risim {

namespace {

// Commutator with a real diagonal (given as a vector): diag(d) m - m diag(d).
CMat diag_comm(const Vec& d, const CMat& m) {
  return d.asDiagonal() * m - m * d.asDiagonal();
}

CVec vec_of(const CMat& m) {
  return Eigen::Map<const CVec>(m.data(), m.size());
}

// Hermitian part scaled so that re_trace(m * x) == re_trace(herm(m) * x) for
// Hermitian x.
CMat herm_coeff(const CMat& m) { return herm(m); }

}  // namespace

ElementOperators element_operators(const SystemConfig& cfg,
                                   const AnglePair& ang) {
  const double kappa = cfg.wavenumber();
  const double cy = cfg.dy(), cz = cfg.dz();
  const double se = std::sin(ang.elev), ce = std::cos(ang.elev);
  const double sa = std::sin(ang.azim), ca = std::cos(ang.azim);

  const Vec ry = element_index_y(cfg.ris_ny, cfg.ris_nz);
  const Vec rz = element_index_z(cfg.ris_ny, cfg.ris_nz);
  const CVec a = upa_steering(cfg, ang);

  ElementOperators ops;
  ops.omega = a * a.adjoint();
  const cd jk = cd(0.0, kappa);

  ops.d_el = jk * (cy * se * sa * diag_comm(ry, ops.omega) -
                   cz * ce * diag_comm(rz, ops.omega));
  ops.d_az = -jk * cy * ce * ca * diag_comm(ry, ops.omega);

  ops.d_elel = jk * (cy * ce * sa * diag_comm(ry, ops.omega) +
                     cz * se * diag_comm(rz, ops.omega) +
                     cy * se * sa * diag_comm(ry, ops.d_el) -
                     cz * ce * diag_comm(rz, ops.d_el));
  ops.d_elaz = jk * (cy * se * ca * diag_comm(ry, ops.omega) +
                     cy * se * sa * diag_comm(ry, ops.d_az) -
                     cz * ce * diag_comm(rz, ops.d_az));
  ops.d_azaz = jk * (cy * ce * sa * diag_comm(ry, ops.omega) -
                     cy * ce * ca * diag_comm(ry, ops.d_az));
  return ops;
}

EchoOperators echo_operators(const SystemConfig& cfg, const CMat& h_bs_ris,
                             const CVec& v, const AnglePair& ang) {
  const ElementOperators el = element_operators(cfg, ang);
  const CMat lift = h_bs_ris * v.asDiagonal();  // N_t x R

  EchoOperators ops;
  ops.omega = lift * el.omega * lift.adjoint();
  ops.d_el = lift * el.d_el * lift.adjoint();
  ops.d_az = lift * el.d_az * lift.adjoint();
  ops.d_elel = lift * el.d_elel * lift.adjoint();
  ops.d_elaz = lift * el.d_elaz * lift.adjoint();
  ops.d_azaz = lift * el.d_azaz * lift.adjoint();
  return ops;
}

ExplicitMean explicit_mean(const SystemConfig& cfg, const CMat& h_bs_ris,
                           const CVec& v, const AnglePair& ang, cd alpha,
                           const CMat& x) {
  const EchoOperators ops = echo_operators(cfg, h_bs_ris, v, ang);
  const cd j(0.0, 1.0);

  ExplicitMean out;
  out.mu = alpha * vec_of(ops.omega * x);
  out.d1.resize(out.mu.size(), 4);
  out.d1.col(0) = alpha * vec_of(ops.d_el * x);
  out.d1.col(1) = alpha * vec_of(ops.d_az * x);
  out.d1.col(2) = vec_of(ops.omega * x);
  out.d1.col(3) = j * vec_of(ops.omega * x);

  out.d2.resize(out.mu.size(), 7);
  out.d2.col(0) = alpha * vec_of(ops.d_elel * x);
  out.d2.col(1) = alpha * vec_of(ops.d_elaz * x);
  out.d2.col(2) = alpha * vec_of(ops.d_azaz * x);
  out.d2.col(3) = vec_of(ops.d_el * x);
  out.d2.col(4) = j * vec_of(ops.d_el * x);
  out.d2.col(5) = vec_of(ops.d_az * x);
  out.d2.col(6) = j * vec_of(ops.d_az * x);
  return out;
}

namespace {

// Variable-projection objective pieces for the pseudo-true fit. For angles
// phi the best gain is <b, mu>/||b||^2 with b the assumed echo; both inner
// products collapse to traces against R_x.
struct ProjectionFit {
  cd overlap;     // tr(Omega(phi) G R_x)
  double energy;  // tr(Omega(phi)^2 R_x)
};

ProjectionFit projection_fit(const CMat& h_bs_ris, const SystemConfig& cfg,
                             const CVec& v, const CMat& g_bar, const CMat& r_x,
                             const AnglePair& ang) {
  const CVec a = upa_steering(cfg, ang);
  const CVec u = h_bs_ris * (a.array() * v.array()).matrix();
  ProjectionFit fit;
  fit.overlap = (u.adjoint() * g_bar * r_x * u).value();
  fit.energy =
      u.squaredNorm() * (u.adjoint() * r_x * u).value().real();
  return fit;
}

// Projection score to maximize: |<b, mu>|^2 / ||b||^2.
double projection_score(const CMat& h_bs_ris, const SystemConfig& cfg,
                        const CVec& v, const CMat& g_bar, const CMat& r_x,
                        const AnglePair& ang) {
  const ProjectionFit fit =
      projection_fit(h_bs_ris, cfg, v, g_bar, r_x, ang);
  if (fit.energy <= 0.0) return 0.0;
  return std::norm(fit.overlap) / fit.energy;
}

// Nelder-Mead on a 2D function (maximization via negated score).
template <typename F>
std::array<double, 2> simplex_polish(F&& f, std::array<double, 2> start,
                                     double step, double tol, int max_iter) {
  struct Vertex {
    std::array<double, 2> x;
    double val;
  };
  auto eval = [&](const std::array<double, 2>& x) { return f(x); };
  std::array<Vertex, 3> s = {
      Vertex{start, eval(start)},
      Vertex{{start[0] + step, start[1]}, 0.0},
      Vertex{{start[0], start[1] + step}, 0.0}};
  s[1].val = eval(s[1].x);
  s[2].val = eval(s[2].x);

  for (int it = 0; it < max_iter; ++it) {
    std::sort(s.begin(), s.end(),
              [](const Vertex& a, const Vertex& b) { return a.val < b.val; });
    const double spread = std::max(
        std::hypot(s[2].x[0] - s[0].x[0], s[2].x[1] - s[0].x[1]),
        std::hypot(s[1].x[0] - s[0].x[0], s[1].x[1] - s[0].x[1]));
    if (spread < tol) break;

    const std::array<double, 2> centroid = {(s[0].x[0] + s[1].x[0]) / 2.0,
                                            (s[0].x[1] + s[1].x[1]) / 2.0};
    auto along = [&](double t) {
      return std::array<double, 2>{centroid[0] + t * (centroid[0] - s[2].x[0]),
                                   centroid[1] + t * (centroid[1] - s[2].x[1])};
    };

    const auto xr = along(1.0);
    const double fr = eval(xr);
    if (fr < s[0].val) {
      const auto xe = along(2.0);
      const double fe = eval(xe);
      if (fe < fr)
        s[2] = {xe, fe};
      else
        s[2] = {xr, fr};
    } else if (fr < s[1].val) {
      s[2] = {xr, fr};
    } else {
      const auto xc = along(fr < s[2].val ? 0.5 : -0.5);
      const double fc = eval(xc);
      if (fc < std::min(fr, s[2].val)) {
        s[2] = {xc, fc};
      } else {
        for (int i = 1; i < 3; ++i) {
          s[i].x = {(s[i].x[0] + s[0].x[0]) / 2.0,
                    (s[i].x[1] + s[0].x[1]) / 2.0};
          s[i].val = eval(s[i].x);
        }
      }
    }
  }
  std::sort(s.begin(), s.end(),
            [](const Vertex& a, const Vertex& b) { return a.val < b.val; });
  return s[0].x;
}

// Exact Newton refinement of the projection score. Writing the score as
// |n|^2 / (e1 e2) with n = tr(g r_x omega), e1 = tr(omega),
// e2 = tr(omega r_x), every derivative of omega is available in closed form,
// so the 2x2 Newton system is exact and converges quadratically from the
// simplex output. Steps are backtracked so the score never decreases.
AnglePair newton_refine(const SystemConfig& cfg, const CMat& h_bs_ris,
                        const CVec& v, const CMat& g_bar, const CMat& r_x,
                        AnglePair ang) {
  auto score = [&](const AnglePair& a) {
    return projection_score(h_bs_ris, cfg, v, g_bar, r_x, a);
  };
  const CMat g_rx = g_bar * r_x;
  double f_cur = score(ang);

  for (int it = 0; it < 12; ++it) {
    const EchoOperators ops = echo_operators(cfg, h_bs_ris, v, ang);
    const CMat* d1[2] = {&ops.d_el, &ops.d_az};
    const CMat* d2[2][2] = {{&ops.d_elel, &ops.d_elaz},
                            {&ops.d_elaz, &ops.d_azaz}};

    const cd n = (g_rx * ops.omega).trace();
    const double e1 = ops.omega.trace().real();
    const double e2 = (ops.omega * r_x).trace().real();
    const double p = std::norm(n);
    const double g = e1 * e2;
    if (g <= 0.0) break;

    cd n_i[2];
    double e1_i[2], e2_i[2];
    for (int i = 0; i < 2; ++i) {
      n_i[i] = (g_rx * (*d1[i])).trace();
      e1_i[i] = (*d1[i]).trace().real();
      e2_i[i] = ((*d1[i]) * r_x).trace().real();
    }

    Vec grad(2);
    Mat hess(2, 2);
    for (int i = 0; i < 2; ++i) {
      const double p_i = 2.0 * (std::conj(n) * n_i[i]).real();
      const double g_i = e1_i[i] * e2 + e1 * e2_i[i];
      grad[i] = p_i / g - p * g_i / (g * g);
      for (int k = 0; k <= i; ++k) {
        const cd n_ik = (g_rx * (*d2[i][k])).trace();
        const double p_k = 2.0 * (std::conj(n) * n_i[k]).real();
        const double p_ik =
            2.0 * ((std::conj(n_i[k]) * n_i[i]).real() +
                   (std::conj(n) * n_ik).real());
        const double g_k = e1_i[k] * e2 + e1 * e2_i[k];
        const double g_ik = (*d2[i][k]).trace().real() * e2 +
                            e1_i[i] * e2_i[k] + e1_i[k] * e2_i[i] +
                            e1 * ((*d2[i][k]) * r_x).trace().real();
        hess(i, k) = p_ik / g - (p_i * g_k + p_k * g_i + p * g_ik) / (g * g) +
                     2.0 * p * g_i * g_k / (g * g * g);
        hess(k, i) = hess(i, k);
      }
    }

    // Require a negative-definite Hessian (we are maximizing); otherwise the
    // simplex output is the best certified point.
    const double det = hess(0, 0) * hess(1, 1) - hess(0, 1) * hess(1, 0);
    if (!(hess(0, 0) < 0.0) || !(det > 0.0)) break;
    Vec step(2);
    step[0] = -(hess(1, 1) * grad[0] - hess(0, 1) * grad[1]) / det;
    step[1] = -(hess(0, 0) * grad[1] - hess(1, 0) * grad[0]) / det;
    const double norm0 = std::hypot(step[0], step[1]);
    if (norm0 > 0.01) step *= 0.01 / norm0;  // trust region, radians

    // Far from the optimum, globalize with a backtracking line search. Inside
    // the quadratic basin take the full step: score comparisons bottom out at
    // machine precision long before the analytic gradient does.
    double tt = 1.0;
    AnglePair cand{ang.elev + step[0], ang.azim + step[1]};
    if (norm0 > 1e-6) {
      double f_new = score(cand);
      for (int k = 0; k < 8 && f_new < f_cur; ++k) {
        tt *= 0.5;
        cand = AnglePair{ang.elev + tt * step[0], ang.azim + tt * step[1]};
        f_new = score(cand);
      }
      if (f_new < f_cur) break;
      f_cur = f_new;
    }
    ang = cand;
    if (tt * norm0 < 1e-14) break;
  }
  return ang;
}

}  // namespace

PseudoTrue solve_pseudo_true(const SystemConfig& cfg, const ChannelSet& chs,
                             const RisRealization& ris, const CMat& r_x) {
  const SensingCascade sc = sensing_cascade(cfg, chs, ris);
  const CVec v = ris.commanded;

  auto score = [&](const AnglePair& ang) {
    return projection_score(chs.h_bs_ris, cfg, v, sc.g_bar, r_x, ang);
  };

  // Local grid around the true target direction, then a simplex polish.
  const double half_span = 3.0 * std::numbers::pi / 180.0;
  const int n_grid = 41;
  AnglePair best = chs.target_aod;
  double best_score = -1.0;
  for (int ie = 0; ie < n_grid; ++ie) {
    for (int ia = 0; ia < n_grid; ++ia) {
      AnglePair ang;
      ang.elev = chs.target_aod.elev - half_span +
                 2.0 * half_span * ie / (n_grid - 1);
      ang.azim = chs.target_aod.azim - half_span +
                 2.0 * half_span * ia / (n_grid - 1);
      const double sc_val = score(ang);
      if (sc_val > best_score) {
        best_score = sc_val;
        best = ang;
      }
    }
  }

  auto negated = [&](const std::array<double, 2>& x) {
    return -score(AnglePair{x[0], x[1]});
  };
  const auto polished =
      simplex_polish(negated, {best.elev, best.azim},
                     0.05 * std::numbers::pi / 180.0, 1e-12, 400);

  PseudoTrue pt;
  pt.angles = newton_refine(cfg, chs.h_bs_ris, v, sc.g_bar, r_x,
                            AnglePair{polished[0], polished[1]});
  const ProjectionFit fit =
      projection_fit(chs.h_bs_ris, cfg, v, sc.g_bar, r_x, pt.angles);
  pt.alpha = fit.energy > 0.0 ? fit.overlap / fit.energy : cd(0.0, 0.0);
  const double true_energy =
      re_trace(sc.g_bar.adjoint() * sc.g_bar * r_x);
  pt.residual = true_energy -
                (fit.energy > 0.0 ? std::norm(fit.overlap) / fit.energy : 0.0);
  return pt;
}

BoundOperators bound_operators(const SystemConfig& cfg, const ChannelSet& chs,
                               const RisRealization& ris,
                               const PseudoTrue& pt) {
  BoundOperators ops;
  ops.assumed = echo_operators(cfg, chs.h_bs_ris, ris.commanded, pt.angles);
  const SensingCascade sc = sensing_cascade(cfg, chs, ris);
  ops.omega_w = sc.omega_working;
  ops.omega_f = sc.omega_faulty;
  ops.g_w = two_hop_map(chs.h_bs_ris, ris.working_idx,
                        upa_steering(cfg, chs.target_aod));
  ops.alpha0 = pt.alpha;
  ops.gain_working = cd(chs.alpha_target, 0.0);
  ops.gain_faulty = cd(chs.alpha_scatter, 0.0);
  ops.noise_w = cfg.sensing_noise_w;
  return ops;
}

namespace {

// Shared assembly from the seven operator matrices. The mismatch operator is
// the adjoint of the model error's covariance kernel,
//   s = conj(gain_w) omega_w + conj(gain_f) omega_f - conj(alpha0) omega,
// i.e. the true-side cascades with their own gains minus the assumed model at
// the pseudo-true point. The angle-angle mean curvature carries one factor of
// alpha0 (restoring the squared-gain weight only when all gains coincide),
// while the angle-gain mean curvature is gain-free.
struct BlockScratch {
  const CMat* d1[2];
  const CMat* d2[2][2];
  CMat mismatch;
  double score_gain;     // 2 |alpha0|^2 / noise (score block only)
  double cross_gain;     // 2 / noise
  cd alpha0;
};

BlockScratch make_scratch(const BoundOperators& ops) {
  BlockScratch s;
  s.d1[0] = &ops.assumed.d_el;
  s.d1[1] = &ops.assumed.d_az;
  s.d2[0][0] = &ops.assumed.d_elel;
  s.d2[0][1] = &ops.assumed.d_elaz;
  s.d2[1][0] = &ops.assumed.d_elaz;
  s.d2[1][1] = &ops.assumed.d_azaz;
  s.mismatch = std::conj(ops.gain_working) * ops.omega_w +
               std::conj(ops.gain_faulty) * ops.omega_f -
               std::conj(ops.alpha0) * ops.assumed.omega;
  s.score_gain = 2.0 * std::norm(ops.alpha0) / ops.noise_w;
  s.cross_gain = 2.0 / ops.noise_w;
  s.alpha0 = ops.alpha0;
  return s;
}

BoundBlocks compose_blocks(const Mat& b_angle, const Mat& b_cross,
                           double b_alpha, const Mat& e_angle,
                           const Mat& e_cross) {
  BoundBlocks bl;
  bl.b = Mat::Zero(4, 4);
  bl.b.topLeftCorner(2, 2) = b_angle;
  bl.b.topRightCorner(2, 2) = b_cross;
  bl.b.bottomLeftCorner(2, 2) = b_cross.transpose();
  bl.b.bottomRightCorner(2, 2) = b_alpha * Mat::Identity(2, 2);

  bl.a = Mat::Zero(4, 4);
  bl.a.topLeftCorner(2, 2) = e_angle - b_angle;
  bl.a.topRightCorner(2, 2) = e_cross - b_cross;
  bl.a.bottomLeftCorner(2, 2) = (e_cross - b_cross).transpose();
  bl.a.bottomRightCorner(2, 2) = -b_alpha * Mat::Identity(2, 2);
  return bl;
}

}  // namespace

BoundBlocks assemble_blocks(const BoundOperators& ops, const CMat& r_x) {
  const BlockScratch s = make_scratch(ops);
  const cd j(0.0, 1.0);
  const CMat& omega = ops.assumed.omega;

  Mat b_angle(2, 2), b_cross(2, 2), e_angle(2, 2), e_cross(2, 2);
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) {
      b_angle(i, k) =
          s.score_gain * ((*s.d1[i]) * r_x * (*s.d1[k]).adjoint()).trace().real();
      e_angle(i, k) =
          s.cross_gain *
          (s.alpha0 * ((*s.d2[i][k]) * r_x * s.mismatch).trace()).real();
    }
    const cd cross = (omega * r_x * (*s.d1[i]).adjoint()).trace();
    const cd mis = ((*s.d1[i]) * r_x * s.mismatch).trace();
    // Columns of the angle/alpha blocks follow the (Re, Im) gain components.
    b_cross(i, 0) = s.cross_gain * (std::conj(s.alpha0) * cross).real();
    b_cross(i, 1) = s.cross_gain * (j * std::conj(s.alpha0) * cross).real();
    e_cross(i, 0) = s.cross_gain * mis.real();
    e_cross(i, 1) = s.cross_gain * (j * mis).real();
  }
  const double b_alpha =
      s.cross_gain * (omega * r_x * omega.adjoint()).trace().real();
  return compose_blocks(b_angle, b_cross, b_alpha, e_angle, e_cross);
}

Mat schur_z(const Mat& a) {
  return a.topLeftCorner(2, 2) -
         a.topRightCorner(2, 2) *
             a.bottomRightCorner(2, 2).inverse() * a.bottomLeftCorner(2, 2);
}

Mat sandwich_u(const BoundBlocks& bl) {
  const Mat b_aa_inv = bl.b.bottomRightCorner(2, 2).inverse();
  const Mat ab_cross = bl.a.topRightCorner(2, 2) + bl.b.topRightCorner(2, 2);
  return bl.b.topLeftCorner(2, 2) -
         bl.b.topRightCorner(2, 2) * b_aa_inv * bl.b.bottomLeftCorner(2, 2) +
         ab_cross * b_aa_inv * ab_cross.transpose();
}

Mat mcrb_angles(const BoundBlocks& bl) {
  const Mat z_inv = schur_z(bl.a).inverse();
  return z_inv * sandwich_u(bl) * z_inv;
}

Mat mcrb_full(const BoundBlocks& bl) {
  // Equilibrate the alpha rows/columns before inverting: the gain block can
  // sit many orders of magnitude above the angle block, and the balanced
  // inverse keeps the angle corner fully accurate. The angle corner of the
  // result is scale-invariant (the scaling matrix is identity there).
  const double angle_scale =
      std::max(bl.a.topLeftCorner(2, 2).cwiseAbs().maxCoeff(),
               std::numeric_limits<double>::min());
  const double alpha_scale =
      std::max(bl.a.bottomRightCorner(2, 2).cwiseAbs().maxCoeff(),
               std::numeric_limits<double>::min());
  Vec d(4);
  const double t = std::sqrt(angle_scale / alpha_scale);
  d << 1.0, 1.0, t, t;
  const Mat a_s = d.asDiagonal() * bl.a * d.asDiagonal();
  const Mat b_s = d.asDiagonal() * bl.b * d.asDiagonal();
  const Mat a_inv_s = a_s.inverse();
  const Mat core = a_inv_s * b_s * a_inv_s;
  return d.cwiseInverse().asDiagonal() * core *
         d.cwiseInverse().asDiagonal();
}

Mat canonical_c(const BoundBlocks& bl) {
  const Mat b_aa_inv = bl.b.bottomRightCorner(2, 2).inverse();
  const Mat ab_cross = bl.a.topRightCorner(2, 2) + bl.b.topRightCorner(2, 2);
  return bl.b.topLeftCorner(2, 2) + ab_cross * b_aa_inv * ab_cross.transpose();
}

Mat canonical_d(const BoundBlocks& bl) { return schur_z(bl.a).inverse(); }

Mat crb_angles(const SystemConfig& cfg, const ChannelSet& chs,
               const CVec& commanded, const AnglePair& ang, cd alpha,
               const CMat& r_x) {
  const EchoOperators ops = echo_operators(cfg, chs.h_bs_ris, commanded, ang);
  const double gain = 2.0 * std::norm(alpha) / cfg.sensing_noise_w;
  const double cross_gain = 2.0 / cfg.sensing_noise_w;
  const cd j(0.0, 1.0);
  const CMat* d1[2] = {&ops.d_el, &ops.d_az};

  Mat b_angle(2, 2), b_cross(2, 2);
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k)
      b_angle(i, k) =
          gain * ((*d1[i]) * r_x * (*d1[k]).adjoint()).trace().real();
    const cd cross = (ops.omega * r_x * (*d1[i]).adjoint()).trace();
    b_cross(i, 0) = cross_gain * (std::conj(alpha) * cross).real();
    b_cross(i, 1) = cross_gain * (j * std::conj(alpha) * cross).real();
  }
  const double b_alpha =
      cross_gain * (ops.omega * r_x * ops.omega.adjoint()).trace().real();
  const Mat fisher_angle =
      b_angle - b_cross * b_cross.transpose() / b_alpha;
  return fisher_angle.inverse();
}

BlockFormsRx block_forms_rx(const BoundOperators& ops) {
  const BlockScratch s = make_scratch(ops);
  const cd j(0.0, 1.0);
  const CMat& omega = ops.assumed.omega;

  BlockFormsRx f;
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) {
      f.b_angle[i][k].coeff =
          herm_coeff(s.score_gain * (*s.d1[k]) * (*s.d1[i]));
      f.e_angle[i][k].coeff =
          herm_coeff(s.cross_gain * s.alpha0 * s.mismatch * (*s.d2[i][k]));
    }
    const CMat cross_core = (*s.d1[i]) * omega;  // tr(omega R d_i^H) kernel
    f.b_angle_alpha[i][0].coeff =
        herm_coeff(s.cross_gain * std::conj(s.alpha0) * cross_core);
    f.b_angle_alpha[i][1].coeff =
        herm_coeff(s.cross_gain * j * std::conj(s.alpha0) * cross_core);
    const CMat mis_core = s.mismatch * (*s.d1[i]);
    f.e_angle_alpha[i][0].coeff = herm_coeff(s.cross_gain * mis_core);
    f.e_angle_alpha[i][1].coeff = herm_coeff(s.cross_gain * j * mis_core);
  }
  f.b_alpha.coeff = herm_coeff(s.cross_gain * omega * omega);
  return f;
}

BlockFormsV block_forms_v(const BoundOperators& ops, const CMat& r_x) {
  const BlockScratch s = make_scratch(ops);
  const cd j(0.0, 1.0);
  // The working cascade re-opens as g_w^H V g_w; everything else in the
  // mismatch operator stays fixed at the current design.
  const cd w_gain = std::conj(ops.gain_working);
  const CMat fixed = std::conj(ops.gain_faulty) * ops.omega_f -
                     std::conj(ops.alpha0) * ops.assumed.omega;

  BlockFormsV f;
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) {
      const CMat core_ik =
          ops.g_w * (*s.d2[i][k]) * r_x * ops.g_w.adjoint();
      f.e_angle[i][k].coeff =
          herm_coeff(s.cross_gain * s.alpha0 * w_gain * core_ik);
      f.e_angle[i][k].offset =
          s.cross_gain *
          (s.alpha0 * ((*s.d2[i][k]) * r_x * fixed).trace()).real();
    }
    const CMat core = ops.g_w * (*s.d1[i]) * r_x * ops.g_w.adjoint();
    const cd fixed_tr = ((*s.d1[i]) * r_x * fixed).trace();
    f.e_angle_alpha[i][0].coeff = herm_coeff(s.cross_gain * w_gain * core);
    f.e_angle_alpha[i][0].offset = s.cross_gain * fixed_tr.real();
    f.e_angle_alpha[i][1].coeff = herm_coeff(s.cross_gain * j * w_gain * core);
    f.e_angle_alpha[i][1].offset = s.cross_gain * (j * fixed_tr).real();
  }

  const BoundBlocks frozen = assemble_blocks(ops, r_x);
  f.b_angle = frozen.b.topLeftCorner(2, 2);
  f.b_angle_alpha = frozen.b.topRightCorner(2, 2);
  f.b_alpha = frozen.b(3, 3);
  return f;
}

BoundBlocks assemble_blocks(const BlockFormsRx& forms, const CMat& r_x) {
  Mat b_angle(2, 2), b_cross(2, 2), e_angle(2, 2), e_cross(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      b_angle(i, k) = forms.b_angle[i][k].eval(r_x);
      b_cross(i, k) = forms.b_angle_alpha[i][k].eval(r_x);
      e_angle(i, k) = forms.e_angle[i][k].eval(r_x);
      e_cross(i, k) = forms.e_angle_alpha[i][k].eval(r_x);
    }
  return compose_blocks(b_angle, b_cross, forms.b_alpha.eval(r_x), e_angle,
                        e_cross);
}

BoundBlocks assemble_blocks(const BlockFormsV& forms, const CMat& v_gram) {
  Mat e_angle(2, 2), e_cross(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      e_angle(i, k) = forms.e_angle[i][k].eval(v_gram);
      e_cross(i, k) = forms.e_angle_alpha[i][k].eval(v_gram);
    }
  return compose_blocks(forms.b_angle, forms.b_angle_alpha, forms.b_alpha,
                        e_angle, e_cross);
}

DefinitenessReport definiteness_report(const BoundBlocks& bl) {
  // All sign checks run on the balanced congruence D M D (same scaling as
  // mcrb_full): congruence preserves inertia, while raw eigenvalues of the
  // unbalanced matrices drown the angle-corner signs in roundoff from the
  // much larger gain block. Each margin is normalized by the Frobenius norm
  // of the balanced matrix, so thresholds are dimension-free.
  const double angle_scale =
      std::max(bl.a.topLeftCorner(2, 2).cwiseAbs().maxCoeff(),
               std::numeric_limits<double>::min());
  const double alpha_scale =
      std::max(bl.a.bottomRightCorner(2, 2).cwiseAbs().maxCoeff(),
               std::numeric_limits<double>::min());
  Vec d(4);
  const double t = std::sqrt(angle_scale / alpha_scale);
  d << 1.0, 1.0, t, t;
  const Mat a_s = d.asDiagonal() * bl.a * d.asDiagonal();
  const Mat b_s = d.asDiagonal() * bl.b * d.asDiagonal();

  DefinitenessReport rep;
  rep.b_min_eig = min_eig(sym(b_s)) / b_s.norm();
  rep.a_max_eig = max_eig(sym(a_s)) / a_s.norm();
  const Mat z = schur_z(bl.a);  // 2x2 angle corner: single scale already
  rep.z_max_eig = max_eig(sym(z)) / z.norm();
  const Mat zz_inv = (z * z).inverse();
  rep.zz_min_eig = min_eig(sym(zz_inv)) / zz_inv.norm();

  const Mat upper_left = a_s.inverse().topLeftCorner(2, 2);
  rep.selector_residual = (upper_left - z.inverse()).cwiseAbs().maxCoeff();
  return rep;
}

}  // namespace risim
