// conic.cpp — dense homogeneous self-dual interior-point solver for small
// semidefinite programs with PSD, nonnegative, and free blocks.

#include "risim/conic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace risim {

Mat realify(const CMat& h) {
  const int n = int(h.rows());
  Mat out(2 * n, 2 * n);
  out.topLeftCorner(n, n) = h.real();
  out.bottomRightCorner(n, n) = h.real();
  out.topRightCorner(n, n) = -h.imag();
  out.bottomLeftCorner(n, n) = h.imag();
  return out;
}

CMat derealify(const Mat& y) {
  const int n = int(y.rows()) / 2;
  const Mat re = 0.5 * (y.topLeftCorner(n, n) + y.bottomRightCorner(n, n));
  const Mat im = 0.5 * (y.bottomLeftCorner(n, n) - y.topRightCorner(n, n));
  CMat h = re.cast<cd>() + cd(0.0, 1.0) * im.cast<cd>();
  return 0.5 * (h + h.adjoint());
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

VarHandle SdpBuilder::add_variable(VarKind kind, int dim, std::string name) {
  if (dim <= 0) throw std::invalid_argument("variable dimension must be > 0");
  vars_.push_back({kind, dim, std::move(name)});
  return VarHandle{int(vars_.size()) - 1};
}

void SdpBuilder::check_term_dims(const ScalarAffine& expr) const {
  for (const AffineTerm& t : expr.terms) {
    if (t.var.id < 0 || t.var.id >= int(vars_.size()))
      throw std::invalid_argument("affine term references unknown variable");
    const Variable& v = vars_[t.var.id];
    if (v.kind == VarKind::kFree) {
      if (t.coeff.rows() != v.dim || t.coeff.cols() != 1)
        throw std::invalid_argument("free-variable coefficient must be dim x 1");
    } else {
      if (t.coeff.rows() != v.dim || t.coeff.cols() != v.dim)
        throw std::invalid_argument("matrix coefficient dimension mismatch");
    }
  }
}

void SdpBuilder::add_equality(ScalarAffine expr) {
  check_term_dims(expr);
  eqs_.push_back(std::move(expr));
}

void SdpBuilder::add_inequality(ScalarAffine expr) {
  check_term_dims(expr);
  ineqs_.push_back(std::move(expr));
}

void SdpBuilder::add_lmi(std::vector<std::vector<ScalarAffine>> entries) {
  const int q = int(entries.size());
  if (q == 0) throw std::invalid_argument("empty matrix constraint");
  for (const auto& row : entries) {
    if (int(row.size()) != q)
      throw std::invalid_argument("matrix constraint must be square");
    for (const ScalarAffine& e : row) check_term_dims(e);
  }
  lmis_.push_back({std::move(entries)});
}

void SdpBuilder::minimize(ScalarAffine objective) {
  check_term_dims(objective);
  objective_ = std::move(objective);
}

// ---------------------------------------------------------------------------
// Standard form: min c.x  s.t.  A x = b,  x in (PSD blocks) x R+^l x R^f
// ---------------------------------------------------------------------------

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

int svec_len(int n) { return n * (n + 1) / 2; }

// Column-major upper triangle with sqrt(2) off-diagonal weights, so that
// svec(X) . svec(Y) == tr(X Y) for symmetric X, Y.
void svec_acc(const Mat& m, double w, double* out) {
  int k = 0;
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < j; ++i) out[k++] += w * kSqrt2 * m(i, j);
    out[k++] += w * m(j, j);
  }
}

Mat smat(const double* v, int n) {
  Mat m(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < j; ++i) {
      m(i, j) = v[k] / kSqrt2;
      m(j, i) = m(i, j);
      ++k;
    }
    m(j, j) = v[k++];
  }
  return m;
}

void svec_set(const Mat& m, double* out) {
  int k = 0;
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < j; ++i) out[k++] = kSqrt2 * m(i, j);
    out[k++] = m(j, j);
  }
}

struct Layout {
  std::vector<int> psd_dims;
  std::vector<int> psd_off;  // svec offset of each PSD block
  int cone_len = 0;          // PSD svecs + orthant (barrier part of x)
  int orth_off = 0;
  int orth_len = 0;
  int free_off = 0;
  int free_len = 0;
  int total = 0;
  double barrier = 0.0;  // sum of PSD dims + orthant length
};

struct VarSlot {
  VarKind kind;
  int dim;
  int psd_block = -1;  // for matrix variables
  int free_pos = -1;   // for free variables (offset within free segment)
};

struct StandardForm {
  Layout lay;
  Mat a;  // m x total
  Vec b;
  Vec c;
  std::vector<VarSlot> slots;
  bool inconsistent = false;  // dependent equality rows with conflicting rhs
};

// Accumulate one scalar affine functional into a dense coefficient row.
void write_expr(const std::vector<VarSlot>& slots,
                const Layout& lay, const ScalarAffine& expr, double* row) {
  for (const AffineTerm& t : expr.terms) {
    const VarSlot& s = slots[t.var.id];
    if (s.kind == VarKind::kFree) {
      for (int i = 0; i < s.dim; ++i)
        row[lay.free_off + s.free_pos + i] += t.coeff(i, 0).real();
    } else if (s.kind == VarKind::kRealPsd) {
      const Mat m = sym(t.coeff.real());
      svec_acc(m, 1.0, row + lay.psd_off[s.psd_block]);
    } else {
      // Re tr(H X) == 0.5 tr(realify(H) realify(X)).
      const Mat m = realify(herm(t.coeff));
      svec_acc(m, 0.5, row + lay.psd_off[s.psd_block]);
    }
  }
}

StandardForm assemble(const SdpBuilder& p) {
  StandardForm sf;
  Layout& lay = sf.lay;

  for (const auto& v : p.variables()) {
    VarSlot slot{v.kind, v.dim, -1, -1};
    if (v.kind == VarKind::kFree) {
      slot.free_pos = lay.free_len;
      lay.free_len += v.dim;
    } else {
      slot.psd_block = int(lay.psd_dims.size());
      lay.psd_dims.push_back(v.kind == VarKind::kRealPsd ? v.dim : 2 * v.dim);
    }
    sf.slots.push_back(slot);
  }
  std::vector<int> lmi_block(p.lmis().size());
  for (std::size_t l = 0; l < p.lmis().size(); ++l) {
    lmi_block[l] = int(lay.psd_dims.size());
    lay.psd_dims.push_back(int(p.lmis()[l].entries.size()));
  }
  lay.orth_len = int(p.inequalities().size());

  lay.psd_off.resize(lay.psd_dims.size());
  int off = 0;
  for (std::size_t bidx = 0; bidx < lay.psd_dims.size(); ++bidx) {
    lay.psd_off[bidx] = off;
    off += svec_len(lay.psd_dims[bidx]);
    lay.barrier += lay.psd_dims[bidx];
  }
  lay.orth_off = off;
  lay.cone_len = off + lay.orth_len;
  lay.free_off = lay.cone_len;
  lay.total = lay.cone_len + lay.free_len;
  lay.barrier += lay.orth_len;

  int m = int(p.equalities().size()) + int(p.inequalities().size());
  for (const auto& l : p.lmis()) m += svec_len(int(l.entries.size()));
  if (m == 0) throw std::invalid_argument("problem has no constraints");

  sf.a = Mat::Zero(m, lay.total);
  sf.b = Vec::Zero(m);
  int r = 0;
  Vec row(lay.total);

  for (const ScalarAffine& e : p.equalities()) {
    row.setZero();
    write_expr(sf.slots, lay, e, row.data());
    sf.b[r] = -e.constant;
    const double sc =
        std::max({row.cwiseAbs().maxCoeff(), std::abs(sf.b[r]), 1e-12});
    sf.a.row(r) = row / sc;
    sf.b[r] /= sc;
    ++r;
  }
  for (int i = 0; i < int(p.inequalities().size()); ++i) {
    row.setZero();
    write_expr(sf.slots, lay, p.inequalities()[i], row.data());
    sf.b[r] = -p.inequalities()[i].constant;
    const double sc =
        std::max({row.cwiseAbs().maxCoeff(), std::abs(sf.b[r]), 1e-12});
    sf.a.row(r) = row / sc;
    sf.b[r] /= sc;
    sf.a(r, lay.orth_off + i) = -1.0;  // slack: expr/sc - t = 0, t >= 0
    ++r;
  }
  for (std::size_t l = 0; l < p.lmis().size(); ++l) {
    const auto& entries = p.lmis()[l].entries;
    const int q = int(entries.size());
    // One scale for the whole block keeps the slack congruent to the matrix.
    double sc = 1e-12;
    for (int j = 0; j < q; ++j)
      for (int i = 0; i <= j; ++i) {
        row.setZero();
        write_expr(sf.slots, lay, entries[i][j], row.data());
        sc = std::max({sc, row.cwiseAbs().maxCoeff(),
                       std::abs(entries[i][j].constant)});
      }
    const int boff = lay.psd_off[lmi_block[l]];
    int k = 0;
    for (int j = 0; j < q; ++j)
      for (int i = 0; i <= j; ++i) {
        row.setZero();
        write_expr(sf.slots, lay, entries[i][j], row.data());
        sf.a.row(r) = row / sc;
        sf.b[r] = -entries[i][j].constant / sc;
        // Subtract the slack entry: S_ij in svec carries the sqrt(2) weight.
        sf.a(r, boff + k) = (i == j) ? -1.0 : -1.0 / kSqrt2;
        ++k;
        ++r;
      }
  }

  sf.c = Vec::Zero(lay.total);
  write_expr(sf.slots, lay, p.objective(), sf.c.data());

  // Dependent-row pruning: keep a maximal independent subset; conflicting
  // dependent rows certify primal infeasibility outright.
  Eigen::ColPivHouseholderQR<Mat> qr(sf.a.transpose());
  qr.setThreshold(1e-11);
  const int rank = int(qr.rank());
  if (std::getenv("RISIM_CONIC_TRACE") != nullptr)
    std::fprintf(stderr, "assemble: m=%d n=%d rank=%d\n", m, lay.total, rank);
  if (rank < m) {
    Mat aug(m, lay.total + 1);
    aug << sf.a, sf.b;
    Eigen::ColPivHouseholderQR<Mat> qr_aug(aug.transpose());
    qr_aug.setThreshold(1e-11);
    if (int(qr_aug.rank()) > rank) {
      sf.inconsistent = true;
      return sf;
    }
    const auto perm = qr.colsPermutation().indices();
    std::vector<int> keep(perm.data(), perm.data() + rank);
    std::sort(keep.begin(), keep.end());
    Mat a2(rank, lay.total);
    Vec b2(rank);
    for (int i = 0; i < rank; ++i) {
      a2.row(i) = sf.a.row(keep[i]);
      b2[i] = sf.b[keep[i]];
    }
    sf.a = std::move(a2);
    sf.b = std::move(b2);
  }
  return sf;
}

// ---------------------------------------------------------------------------
// NT scaling and cone operations
// ---------------------------------------------------------------------------

struct Scaling {
  std::vector<Mat> w;      // per PSD block
  std::vector<Mat> g;      // W = G G^T
  std::vector<Mat> g_t;    // G^T
  std::vector<Mat> v_vec;  // eigenvectors of the scaled point V
  std::vector<Vec> v_val;  // eigenvalues of V
  Vec orth_w2;             // x_i / s_i
  Vec orth_v;              // sqrt(x_i s_i)
};

Mat sqrt_psd(const Mat& m, double floor_val) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  const Vec lam = es.eigenvalues().cwiseMax(floor_val);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

Scaling make_scaling(const Layout& lay, const Vec& x, const Vec& s) {
  Scaling sc;
  const int nb = int(lay.psd_dims.size());
  sc.w.resize(nb);
  sc.g.resize(nb);
  sc.g_t.resize(nb);
  sc.v_vec.resize(nb);
  sc.v_val.resize(nb);
  for (int b = 0; b < nb; ++b) {
    const int n = lay.psd_dims[b];
    const Mat xb = smat(x.data() + lay.psd_off[b], n);
    const Mat sb = smat(s.data() + lay.psd_off[b], n);
    Eigen::SelfAdjointEigenSolver<Mat> es(sb);
    const Vec lam = es.eigenvalues().cwiseMax(1e-300);
    const Mat s_half = es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
                       es.eigenvectors().transpose();
    const Mat s_inv_half = es.eigenvectors() *
                           lam.cwiseSqrt().cwiseInverse().asDiagonal() *
                           es.eigenvectors().transpose();
    const Mat inner = sqrt_psd(s_half * xb * s_half, 1e-300);
    sc.w[b] = s_inv_half * inner * s_inv_half;
    Eigen::SelfAdjointEigenSolver<Mat> ew(sc.w[b]);
    const Vec wl = ew.eigenvalues().cwiseMax(1e-300);
    sc.g[b] = ew.eigenvectors() * wl.cwiseSqrt().asDiagonal();
    sc.g_t[b] = sc.g[b].transpose();
    const Mat v = sc.g_t[b] * sb * sc.g[b];
    Eigen::SelfAdjointEigenSolver<Mat> ev(sym(v));
    sc.v_vec[b] = ev.eigenvectors();
    sc.v_val[b] = ev.eigenvalues();
  }
  if (lay.orth_len > 0) {
    sc.orth_w2 = x.segment(lay.orth_off, lay.orth_len).cwiseQuotient(
        s.segment(lay.orth_off, lay.orth_len));
    sc.orth_v = x.segment(lay.orth_off, lay.orth_len)
                    .cwiseProduct(s.segment(lay.orth_off, lay.orth_len))
                    .cwiseSqrt();
  }
  return sc;
}

// u -> svec(W smat(u) W) per PSD block; orthant entries scale by x_i/s_i.
// Acts on the cone segment only (free entries untouched by caller).
Vec apply_w(const Layout& lay, const Scaling& sc, const Vec& u) {
  Vec out = Vec::Zero(lay.cone_len);
  for (std::size_t b = 0; b < lay.psd_dims.size(); ++b) {
    const int n = lay.psd_dims[b];
    const Mat m = smat(u.data() + lay.psd_off[b], n);
    const Mat t = sc.w[b] * m * sc.w[b];
    svec_set(sym(t), out.data() + lay.psd_off[b]);
  }
  if (lay.orth_len > 0)
    out.segment(lay.orth_off, lay.orth_len) =
        sc.orth_w2.cwiseProduct(u.segment(lay.orth_off, lay.orth_len));
  return out;
}

// Largest step alpha with x + alpha d staying in the cone interior.
double max_step(const Layout& lay, const Vec& x, const Vec& d) {
  double alpha = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < lay.psd_dims.size(); ++b) {
    const int n = lay.psd_dims[b];
    const Mat xb = smat(x.data() + lay.psd_off[b], n);
    const Mat db = smat(d.data() + lay.psd_off[b], n);
    Eigen::LLT<Mat> llt(xb);
    if (llt.info() != Eigen::Success) return 0.0;
    const Mat l = llt.matrixL();
    const Mat scaled =
        l.triangularView<Eigen::Lower>().solve(db).transpose();
    const Mat inner =
        l.triangularView<Eigen::Lower>().solve(scaled).transpose();
    const double lmin =
        Eigen::SelfAdjointEigenSolver<Mat>(sym(inner), Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
  }
  for (int i = 0; i < lay.orth_len; ++i) {
    const double xi = x[lay.orth_off + i], di = d[lay.orth_off + i];
    if (di < 0.0) alpha = std::min(alpha, -xi / di);
  }
  return alpha;
}

struct Residuals {
  Vec rp;      // b tau - A x
  Vec rd;      // c tau - A^T y - s
  double rg;   // kappa + c.x - b.y
  double mu;   // complementarity measure
};

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

struct Iterate {
  Vec x, y, s;
  double tau, kappa;
};

struct Direction {
  Vec dx, dy, ds;
  double dtau, dkappa;
};

class HsdSolver {
 public:
  HsdSolver(const StandardForm& sf, const SolveSettings& st)
      : sf_(sf), st_(st), lay_(sf.lay), m_(int(sf.a.rows())) {
    a_cone_ = sf_.a.leftCols(lay_.cone_len);
    a_free_ = sf_.a.rightCols(lay_.free_len);
    c_cone_ = sf_.c.head(lay_.cone_len);
    c_free_ = sf_.c.tail(lay_.free_len);
  }

  SolveStatus run(Iterate& z, Residuals& out_res);

  int iterations_used = 0;

 private:
  Residuals residuals(const Iterate& z) const {
    Residuals r;
    r.rp = sf_.b * z.tau - sf_.a * z.x;
    r.rd = sf_.c * z.tau - sf_.a.transpose() * z.y - z.s;
    r.rg = z.kappa + sf_.c.dot(z.x) - sf_.b.dot(z.y);
    r.mu = (z.x.head(lay_.cone_len).dot(z.s.head(lay_.cone_len)) +
            z.tau * z.kappa) /
           (lay_.barrier + 1.0);
    return r;
  }

  // Scaled-candidate convergence metrics.
  void candidate_metrics(const Iterate& z, double& pres, double& dres,
                         double& grel) const {
    const Vec xc = z.x / z.tau;
    const Vec yc = z.y / z.tau;
    const Vec sc = z.s / z.tau;
    pres = (sf_.b - sf_.a * xc).cwiseAbs().maxCoeff() /
           (1.0 + sf_.b.cwiseAbs().maxCoeff());
    dres = (sf_.c - sf_.a.transpose() * yc - sc).cwiseAbs().maxCoeff() /
           (1.0 + sf_.c.cwiseAbs().maxCoeff());
    const double pobj = sf_.c.dot(xc), dobj = sf_.b.dot(yc);
    grel = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
  }

  // Solve the reduced saddle system for (dy, dxf, dtau) given the
  // complementarity targets, then back-substitute the full direction.
  // eta scales the feasibility/gap residual targets; the consistent pairing
  // with a complementarity target sigma*mu is eta = 1 - sigma, because
  // x.s + tau kappa == y.rp - x.rd + tau rg holds identically.
  Direction solve_direction(const Iterate& z, const Residuals& r, double eta,
                            const Scaling& sc, const Vec& rc, double rtk,
                            const Eigen::FullPivLU<Mat>& lu) const {
    const int nf = lay_.free_len;
    Vec rhs(m_ + nf + 1);
    const Vec w_rd = apply_w(lay_, sc, r.rd.head(lay_.cone_len));
    rhs.head(m_) = eta * (r.rp + a_cone_ * w_rd) - a_cone_ * rc;
    rhs.segment(m_, nf) = eta * r.rd.tail(nf);
    rhs[m_ + nf] =
        eta * (r.rg - c_cone_.dot(w_rd)) + c_cone_.dot(rc) + rtk / z.tau;

    const Vec sol = lu.solve(rhs);
    Direction d;
    d.dy = sol.head(m_);
    const Vec dxf = sol.segment(m_, nf);
    d.dtau = sol[m_ + nf];
    d.dkappa = (rtk - z.kappa * d.dtau) / z.tau;

    Vec ds_cone = eta * r.rd.head(lay_.cone_len) - a_cone_.transpose() * d.dy +
                  c_cone_ * d.dtau;
    Vec dx_cone = rc - apply_w(lay_, sc, ds_cone);
    d.dx.resize(lay_.total);
    d.dx << dx_cone, dxf;
    d.ds.resize(lay_.total);
    d.ds << ds_cone, Vec::Zero(nf);
    return d;
  }

  // Mehrotra corrector complementarity target in the scaled space.
  Vec corrector_rc(const Iterate& z, const Scaling& sc, const Direction& aff,
                   double sigma_mu) const {
    Vec rc = Vec::Zero(lay_.cone_len);
    for (std::size_t b = 0; b < lay_.psd_dims.size(); ++b) {
      const int n = lay_.psd_dims[b];
      const Mat g = sc.g[b];
      const Mat g_t = sc.g_t[b];
      const Mat ginv_t =
          g_t.inverse();  // small blocks; G is well conditioned by design
      const Mat dxa = smat(aff.dx.data() + lay_.psd_off[b], n);
      const Mat dsa = smat(aff.ds.data() + lay_.psd_off[b], n);
      const Mat dvx = ginv_t.transpose() * dxa * ginv_t;
      const Mat dvs = g_t * dsa * g;
      const Mat corr = 0.5 * (dvx * dvs + dvs * dvx);
      // R_V = sigma mu I - V^2 - corr, then the Lyapunov solve in V's basis.
      const Mat u = sc.v_vec[b];
      const Vec lam = sc.v_val[b];
      Mat rv = -corr;
      rv.diagonal().array() += sigma_mu;
      rv -= u * lam.cwiseAbs2().asDiagonal() * u.transpose();
      const Mat rt = u.transpose() * rv * u;
      Mat sol(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          sol(i, j) = 2.0 * rt(i, j) / (lam[i] + lam[j]);
      const Mat back = g * (u * sol * u.transpose()) * g_t;
      svec_set(sym(back), rc.data() + lay_.psd_off[b]);
    }
    for (int i = 0; i < lay_.orth_len; ++i) {
      const int k = lay_.orth_off + i;
      rc[k] = (sigma_mu - z.x[k] * z.s[k] - aff.dx[k] * aff.ds[k]) / z.s[k];
    }
    return rc;
  }

  const StandardForm& sf_;
  const SolveSettings& st_;
  const Layout& lay_;
  int m_;
  Mat a_cone_, a_free_;
  Vec c_cone_, c_free_;
};

SolveStatus HsdSolver::run(Iterate& z, Residuals& out_res) {
  const int nf = lay_.free_len;

  // Unit initialization on the cone, zero free part.
  z.x = Vec::Zero(lay_.total);
  z.s = Vec::Zero(lay_.total);
  for (std::size_t b = 0; b < lay_.psd_dims.size(); ++b) {
    Mat id = Mat::Identity(lay_.psd_dims[b], lay_.psd_dims[b]);
    svec_set(id, z.x.data() + lay_.psd_off[b]);
    svec_set(id, z.s.data() + lay_.psd_off[b]);
  }
  for (int i = 0; i < lay_.orth_len; ++i) {
    z.x[lay_.orth_off + i] = 1.0;
    z.s[lay_.orth_off + i] = 1.0;
  }
  z.y = Vec::Zero(m_);
  z.tau = 1.0;
  z.kappa = 1.0;

  int stalls = 0;
  for (int it = 0; it < st_.max_iterations; ++it) {
    iterations_used = it + 1;
    const Residuals r = residuals(z);
    out_res = r;

    double pres, dres, grel;
    candidate_metrics(z, pres, dres, grel);
    if (pres < st_.tol && dres < st_.tol && grel < st_.tol)
      return SolveStatus::kOptimal;

    // Farkas certificates: y with A'y + s = 0, s in the dual cone, b.y > 0
    // proves primal infeasibility; x in the cone with A x = 0, c.x < 0
    // proves unboundedness. Constraint rows are normalized at assembly, so
    // the residual-to-payoff ratio is a scale-free certificate quality.
    const double by = sf_.b.dot(z.y);
    const double cx = sf_.c.dot(z.x);
    if (by > 0.0) {
      const double qual =
          ((sf_.a.transpose() * z.y + z.s).cwiseAbs().maxCoeff()) / by;
      if (qual < st_.tol * 10.0) return SolveStatus::kInfeasible;
    }
    if (cx < 0.0) {
      const double qual = (sf_.a * z.x).cwiseAbs().maxCoeff() / (-cx);
      if (qual < st_.tol * 10.0) return SolveStatus::kUnbounded;
    }

    const Scaling sc = make_scaling(lay_, z.x, z.s);

    // Reduced saddle matrix; shared by predictor and corrector.
    Mat t_rows(m_, lay_.cone_len);
    for (int i = 0; i < m_; ++i)
      t_rows.row(i) = apply_w(lay_, sc, a_cone_.row(i).transpose());
    Mat p = t_rows * a_cone_.transpose();
    p = 0.5 * (p + p.transpose());
    const Vec wc = apply_w(lay_, sc, c_cone_);
    const Vec u = a_cone_ * wc;

    Mat k = Mat::Zero(m_ + nf + 1, m_ + nf + 1);
    k.topLeftCorner(m_, m_) = p;
    if (nf > 0) {
      k.block(0, m_, m_, nf) = a_free_;
      k.block(m_, 0, nf, m_) = a_free_.transpose();
      k.block(m_, m_ + nf, nf, 1) = -c_free_;
      k.block(m_ + nf, m_, 1, nf) = -c_free_.transpose();
    }
    k.block(0, m_ + nf, m_, 1) = -(u + sf_.b);
    k.block(m_ + nf, 0, 1, m_) = (sf_.b - u).transpose();
    k(m_ + nf, m_ + nf) = c_cone_.dot(wc) + z.kappa / z.tau;
    Eigen::FullPivLU<Mat> lu(k);

    // Predictor: pure Newton toward feasibility and zero complementarity.
    const Vec rc_aff = -z.x.head(lay_.cone_len);
    const Direction aff =
        solve_direction(z, r, 1.0, sc, rc_aff, -z.tau * z.kappa, lu);

    double alpha_aff = std::min(
        {max_step(lay_, z.x, aff.dx), max_step(lay_, z.s, aff.ds),
         aff.dtau < 0.0 ? -z.tau / aff.dtau
                        : std::numeric_limits<double>::infinity(),
         aff.dkappa < 0.0 ? -z.kappa / aff.dkappa
                          : std::numeric_limits<double>::infinity()});
    alpha_aff = std::min(1.0, 0.995 * alpha_aff);

    const double mu_aff =
        ((z.x.head(lay_.cone_len) + alpha_aff * aff.dx.head(lay_.cone_len))
             .dot(z.s.head(lay_.cone_len) +
                  alpha_aff * aff.ds.head(lay_.cone_len)) +
         (z.tau + alpha_aff * aff.dtau) * (z.kappa + alpha_aff * aff.dkappa)) /
        (lay_.barrier + 1.0);
    double sigma = std::pow(std::max(0.0, mu_aff / r.mu), 3.0);
    sigma = std::clamp(sigma, 1e-8, 0.99999);

    // Corrector with the second-order complementarity target.
    const Vec rc = corrector_rc(z, sc, aff, sigma * r.mu);
    const double rtk = sigma * r.mu - z.tau * z.kappa - aff.dtau * aff.dkappa;
    const Direction dir = solve_direction(z, r, 1.0 - sigma, sc, rc, rtk, lu);

    double alpha = std::min(
        {max_step(lay_, z.x, dir.dx), max_step(lay_, z.s, dir.ds),
         dir.dtau < 0.0 ? -z.tau / dir.dtau
                        : std::numeric_limits<double>::infinity(),
         dir.dkappa < 0.0 ? -z.kappa / dir.dkappa
                          : std::numeric_limits<double>::infinity()});
    alpha = std::min(1.0, 0.98 * alpha);

    static const bool trace = std::getenv("RISIM_CONIC_TRACE") != nullptr;
    if (trace)
      std::fprintf(stderr,
                   "it=%2d tau=%.3e kap=%.3e mu=%.3e pres=%.3e dres=%.3e "
                   "grel=%.3e sig=%.3e a_aff=%.3e a=%.3e\n",
                   it, z.tau, z.kappa, r.mu, pres, dres, grel, sigma,
                   alpha_aff, alpha);

    if (alpha < 1e-10) {
      if (++stalls >= 2) break;
    } else {
      stalls = 0;
    }

    z.x += alpha * dir.dx;
    z.y += alpha * dir.dy;
    z.s += alpha * dir.ds;
    z.tau += alpha * dir.dtau;
    z.kappa += alpha * dir.dkappa;
  }

  out_res = residuals(z);
  double pres, dres, grel;
  candidate_metrics(z, pres, dres, grel);
  if (pres < st_.accept_tol && dres < st_.accept_tol && grel < st_.accept_tol)
    return SolveStatus::kOptimal;
  const double by = sf_.b.dot(z.y);
  if (by > 0.0 &&
      (sf_.a.transpose() * z.y + z.s).cwiseAbs().maxCoeff() <
          1e-6 * by &&
      z.tau < 1e-6)
    return SolveStatus::kInfeasible;
  const double cx = sf_.c.dot(z.x);
  if (cx < 0.0 && (sf_.a * z.x).cwiseAbs().maxCoeff() < 1e-6 * (-cx) &&
      z.tau < 1e-6)
    return SolveStatus::kUnbounded;
  return SolveStatus::kNumericalLimit;
}

double eval_affine(const ScalarAffine& e, const std::vector<CMat>& values) {
  double out = e.constant;
  for (const AffineTerm& t : e.terms) {
    const CMat& x = values[t.var.id];
    if (x.cols() == 1 && t.coeff.cols() == 1)
      out += (t.coeff.real().transpose() * x.real()).value();
    else
      out += (t.coeff * x).trace().real();
  }
  return out;
}

}  // namespace

SdpSolution solve_sdp(const SdpBuilder& problem, const SolveSettings& settings) {
  const StandardForm sf = assemble(problem);
  SdpSolution sol;
  sol.values.resize(problem.variables().size());

  auto fill_values = [&](const Vec& x, double tau) {
    for (std::size_t vi = 0; vi < problem.variables().size(); ++vi) {
      const VarSlot& slot = sf.slots[vi];
      if (slot.kind == VarKind::kFree) {
        sol.values[vi] =
            (x.segment(sf.lay.free_off + slot.free_pos, slot.dim) / tau)
                .cast<cd>();
      } else {
        const int n = sf.lay.psd_dims[slot.psd_block];
        const Mat m = smat(x.data() + sf.lay.psd_off[slot.psd_block], n) / tau;
        if (slot.kind == VarKind::kRealPsd)
          sol.values[vi] = sym(m).cast<cd>();
        else
          sol.values[vi] = derealify(m);
      }
    }
  };

  if (sf.inconsistent) {
    sol.status = SolveStatus::kInfeasible;
    Vec zero = Vec::Zero(sf.lay.total);
    fill_values(zero, 1.0);
    return sol;
  }

  HsdSolver solver(sf, settings);
  Iterate z;
  Residuals res;
  sol.status = solver.run(z, res);
  sol.iterations = solver.iterations_used;

  const double tau = std::max(z.tau, 1e-300);
  fill_values(z.x, sol.status == SolveStatus::kOptimal ? tau : 1.0);
  sol.objective = eval_affine(problem.objective(), sol.values);

  const Vec xc = z.x / tau;
  const Vec yc = z.y / tau;
  const Vec sc = z.s / tau;
  sol.primal_residual = (sf.b - sf.a * xc).cwiseAbs().maxCoeff() /
                        (1.0 + sf.b.cwiseAbs().maxCoeff());
  sol.dual_residual =
      (sf.c - sf.a.transpose() * yc - sc).cwiseAbs().maxCoeff() /
      (1.0 + sf.c.cwiseAbs().maxCoeff());
  const double pobj = sf.c.dot(xc), dobj = sf.b.dot(yc);
  sol.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
  return sol;
}

}  // namespace risim
