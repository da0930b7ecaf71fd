#pragma once

// Fixed-rank complex matrix routines on raw row-major pointers. Everything is
// templated on the rank so the compiler fully unrolls; used by the flow step
// kernel and the monitor sweeps where Eigen's dynamic paths are too slow.

#include <array>

#include "heflow/field.hpp"

namespace heflow::small {

template <int R>
inline void mul(const cplx* a, const cplx* b, cplx* c) {
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) {
      cplx s(0.0, 0.0);
      for (int k = 0; k < R; ++k) s += a[i * R + k] * b[k * R + j];
      c[i * R + j] = s;
    }
}

template <int R>
inline void commut(const cplx* a, const cplx* b, cplx* c) {
  cplx ab[R * R], ba[R * R];
  mul<R>(a, b, ab);
  mul<R>(b, a, ba);
  for (int e = 0; e < R * R; ++e) c[e] = ab[e] - ba[e];
}

template <int R>
inline cplx trace(const cplx* a) {
  cplx t(0.0, 0.0);
  for (int i = 0; i < R; ++i) t += a[i * R + i];
  return t;
}

// tr(a*a), real for matrices similar to Hermitian ones
template <int R>
inline cplx trace_sq(const cplx* a) {
  cplx t(0.0, 0.0);
  for (int i = 0; i < R; ++i)
    for (int k = 0; k < R; ++k) t += a[i * R + k] * a[k * R + i];
  return t;
}

template <int R>
inline double max_abs(const cplx* a) {
  double m = 0.0;
  for (int e = 0; e < R * R; ++e) m = std::max(m, std::abs(a[e]));
  return m;
}

// Inverse by Gauss-Jordan with partial pivoting; returns false when singular.
template <int R>
inline bool inverse(const cplx* a, cplx* inv) {
  cplx m[R * R];
  for (int e = 0; e < R * R; ++e) m[e] = a[e];
  for (int e = 0; e < R * R; ++e) inv[e] = cplx(0.0, 0.0);
  for (int i = 0; i < R; ++i) inv[i * R + i] = cplx(1.0, 0.0);
  for (int col = 0; col < R; ++col) {
    int piv = col;
    double best = std::norm(m[col * R + col]);
    for (int rr = col + 1; rr < R; ++rr) {
      const double v = std::norm(m[rr * R + col]);
      if (v > best) { best = v; piv = rr; }
    }
    if (!(best > 0.0)) return false;
    if (piv != col)
      for (int j = 0; j < R; ++j) {
        std::swap(m[piv * R + j], m[col * R + j]);
        std::swap(inv[piv * R + j], inv[col * R + j]);
      }
    const cplx d = 1.0 / m[col * R + col];
    for (int j = 0; j < R; ++j) { m[col * R + j] *= d; inv[col * R + j] *= d; }
    for (int rr = 0; rr < R; ++rr) {
      if (rr == col) continue;
      const cplx f = m[rr * R + col];
      if (f == cplx(0.0, 0.0)) continue;
      for (int j = 0; j < R; ++j) {
        m[rr * R + j] -= f * m[col * R + j];
        inv[rr * R + j] -= f * inv[col * R + j];
      }
    }
  }
  return true;
}

template <int R>
inline cplx det(const cplx* a) {
  cplx m[R * R];
  for (int e = 0; e < R * R; ++e) m[e] = a[e];
  cplx d(1.0, 0.0);
  for (int col = 0; col < R; ++col) {
    int piv = col;
    double best = std::norm(m[col * R + col]);
    for (int rr = col + 1; rr < R; ++rr) {
      const double v = std::norm(m[rr * R + col]);
      if (v > best) { best = v; piv = rr; }
    }
    if (!(best > 0.0)) return cplx(0.0, 0.0);
    if (piv != col) {
      d = -d;
      for (int j = col; j < R; ++j) std::swap(m[piv * R + j], m[col * R + j]);
    }
    d *= m[col * R + col];
    const cplx f0 = 1.0 / m[col * R + col];
    for (int rr = col + 1; rr < R; ++rr) {
      const cplx f = m[rr * R + col] * f0;
      for (int j = col; j < R; ++j) m[rr * R + j] -= f * m[col * R + j];
    }
  }
  return d;
}

// exp(s * A) for A with real spectrum (similar to Hermitian). R <= 2 closed
// form; otherwise scaling-and-squaring with a degree-12 Taylor polynomial.
template <int R>
inline void exp_real_spectrum(const cplx* a, double s, cplx* out) {
  if constexpr (R == 1) {
    out[0] = std::exp(s * a[0]);
  } else if constexpr (R == 2) {
    const cplx tr2 = 0.5 * (a[0] + a[3]);
    const cplx dt = a[0] * a[3] - a[1] * a[2];
    const double q2 = std::max((tr2 * tr2 - dt).real(), 0.0);
    const double q = std::sqrt(q2);
    const double w = s * q;
    const double ch = std::cosh(w);
    // sinh(w)/q with the q -> 0 limit s * sinhc(w)
    double sh_over_q;
    if (q > 1e-8) sh_over_q = std::sinh(w) / q;
    else sh_over_q = s * (1.0 + w * w / 6.0);
    const cplx e0 = std::exp(s * tr2);
    out[0] = e0 * (ch + sh_over_q * (a[0] - tr2));
    out[1] = e0 * (sh_over_q * a[1]);
    out[2] = e0 * (sh_over_q * a[2]);
    out[3] = e0 * (ch + sh_over_q * (a[3] - tr2));
  } else {
    cplx as[R * R];
    double norm1 = 0.0;
    for (int i = 0; i < R; ++i) {
      double rowsum = 0.0;
      for (int j = 0; j < R; ++j) rowsum += std::abs(a[i * R + j]) * std::abs(s);
      norm1 = std::max(norm1, rowsum);
    }
    int squarings = 0;
    double scale = 1.0;
    while (norm1 * scale > 0.25 && squarings < 40) { scale *= 0.5; ++squarings; }
    for (int e = 0; e < R * R; ++e) as[e] = a[e] * (s * scale);
    // Taylor: out = I + as (I + as/2 (I + as/3 (...)))
    cplx acc[R * R];
    for (int e = 0; e < R * R; ++e) acc[e] = as[e] / 12.0;
    for (int i = 0; i < R; ++i) acc[i * R + i] += 1.0;
    for (int k = 11; k >= 1; --k) {
      cplx tmp[R * R];
      mul<R>(as, acc, tmp);
      for (int e = 0; e < R * R; ++e) acc[e] = tmp[e] / double(k);
      for (int i = 0; i < R; ++i) acc[i * R + i] += 1.0;
    }
    for (int sq = 0; sq < squarings; ++sq) {
      cplx tmp[R * R];
      mul<R>(acc, acc, tmp);
      for (int e = 0; e < R * R; ++e) acc[e] = tmp[e];
    }
    for (int e = 0; e < R * R; ++e) out[e] = acc[e];
  }
}

// Hermitian eigendecomposition: B Hermitian R x R, ascending eigenvalues,
// unitary column eigenvectors. Closed form for R = 2, Eigen otherwise.
template <int R>
inline void herm_eig(const cplx* b, double* evals, cplx* evecs) {
  if constexpr (R == 1) {
    evals[0] = b[0].real();
    evecs[0] = cplx(1.0, 0.0);
  } else if constexpr (R == 2) {
    const double a0 = b[0].real(), a3 = b[3].real();
    const cplx c = 0.5 * (b[1] + std::conj(b[2]));  // symmetrized off-diagonal
    const double m = 0.5 * (a0 + a3);
    const double d = 0.5 * (a0 - a3);
    const double cc = std::norm(c);
    const double q = std::sqrt(d * d + cc);
    evals[0] = m - q;
    evals[1] = m + q;
    if (q < 1e-300 || cc < 1e-60 * std::max(1.0, q * q)) {
      // (near-)diagonal: pick coordinate axes, ordered
      const bool flip = a0 > a3;
      evecs[0] = flip ? cplx(0, 0) : cplx(1, 0);
      evecs[2] = flip ? cplx(1, 0) : cplx(0, 0);
      evecs[1] = flip ? cplx(1, 0) : cplx(0, 0);
      evecs[3] = flip ? cplx(0, 0) : cplx(1, 0);
      return;
    }
    // eigenvector for lambda = m - q: (c, (m - q) - a0) direction (column 0)
    cplx v0 = c, v1 = cplx(evals[0] - a0, 0.0);
    double nn = std::sqrt(std::norm(v0) + std::norm(v1));
    evecs[0] = v0 / nn;
    evecs[2] = v1 / nn;
    // second eigenvector orthogonal: (-conj(v1), conj(v0))
    evecs[1] = -std::conj(evecs[2]);
    evecs[3] = std::conj(evecs[0]);
  } else {
    Eigen::Matrix<cplx, R, R> B;
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j) B(i, j) = b[i * R + j];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<cplx, R, R>> es(B);
    for (int i = 0; i < R; ++i) evals[i] = es.eigenvalues()[i];
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j) evecs[i * R + j] = es.eigenvectors()(i, j);
  }
}

// Cholesky W = L L^dagger of a Hermitian positive matrix. Returns false when
// not positive definite. L lower triangular, row-major.
template <int R>
inline bool cholesky(const cplx* w, cplx* L) {
  for (int e = 0; e < R * R; ++e) L[e] = cplx(0.0, 0.0);
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j <= i; ++j) {
      cplx s = w[i * R + j];
      for (int k = 0; k < j; ++k) s -= L[i * R + k] * std::conj(L[j * R + k]);
      if (i == j) {
        const double dd = s.real();
        if (!(dd > 0.0)) return false;
        L[i * R + i] = std::sqrt(dd);
      } else {
        L[i * R + j] = s / L[j * R + j].real();
      }
    }
  }
  return true;
}

// Solve L^dagger X = B for X (L lower triangular => L^dagger upper).
template <int R>
inline void solve_upper(const cplx* L, const cplx* b, cplx* x) {
  for (int col = 0; col < R; ++col) {
    for (int i = R - 1; i >= 0; --i) {
      cplx s = b[i * R + col];
      for (int k = i + 1; k < R; ++k) s -= std::conj(L[k * R + i]) * x[k * R + col];
      x[i * R + col] = s / L[i * R + i].real();
    }
  }
}

// Spectral data of a W-self-adjoint matrix eta: evals ascending, frame E with
// eta = E diag E^{-1}, E^{-1} = E^dagger W. Uses B = L^dag eta L^{-dag}.
template <int R>
struct WeightedEig {
  double evals[R];
  cplx frame[R * R];      // columns
  cplx frame_inv[R * R];
};

template <int R>
inline bool weighted_eig(const cplx* eta, const cplx* w, WeightedEig<R>& out) {
  cplx L[R * R], Linv_h[R * R], tmp[R * R], B[R * R];
  if (!cholesky<R>(w, L)) return false;
  cplx id[R * R];
  for (int e = 0; e < R * R; ++e) id[e] = cplx(0.0, 0.0);
  for (int i = 0; i < R; ++i) id[i * R + i] = cplx(1.0, 0.0);
  solve_upper<R>(L, id, Linv_h);                      // (L^dag)^{-1}
  // B = L^dag * eta * Linv_h
  cplx Lh[R * R];
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) Lh[i * R + j] = std::conj(L[j * R + i]);
  mul<R>(Lh, eta, tmp);
  mul<R>(tmp, Linv_h, B);
  // hermitize against truncation junk
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < i; ++j) {
      const cplx m = 0.5 * (B[i * R + j] + std::conj(B[j * R + i]));
      B[i * R + j] = m;
      B[j * R + i] = std::conj(m);
    }
  for (int i = 0; i < R; ++i) B[i * R + i] = cplx(B[i * R + i].real(), 0.0);
  cplx U[R * R];
  herm_eig<R>(B, out.evals, U);
  mul<R>(Linv_h, U, out.frame);
  // frame_inv = U^dag L^dag
  cplx Ud[R * R];
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) Ud[i * R + j] = std::conj(U[j * R + i]);
  mul<R>(Ud, Lh, out.frame_inv);
  return true;
}

}  // namespace heflow::small
