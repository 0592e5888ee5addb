// test_util.hpp — shared helpers for the unit-test suites.

#pragma once

#include "risim/linalg.hpp"
#include "risim/rng.hpp"

namespace risim::testutil {

inline CMat random_cmat(RngStream& rng, int rows, int cols) {
  CMat m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.cnormal();
  return m;
}

inline CVec random_cvec(RngStream& rng, int n) {
  CVec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.cnormal();
  return v;
}

inline CVec random_phases(RngStream& rng, int n) {
  CVec v(n);
  for (int i = 0; i < n; ++i)
    v[i] = std::polar(1.0, rng.uniform(0.0, 2.0 * 3.14159265358979323846));
  return v;
}

// Hermitian positive definite with the requested trace.
inline CMat random_psd(RngStream& rng, int n, double trace) {
  const CMat m = random_cmat(rng, n, n);
  CMat p = m * m.adjoint() + 0.05 * double(n) * CMat::Identity(n, n);
  return p * (trace / p.trace().real());
}

// Relative Frobenius distance, guarded for near-zero references.
inline double rel_err(const CMat& got, const CMat& want) {
  const double scale = std::max(want.norm(), 1e-300);
  return (got - want).norm() / scale;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace risim::testutil
