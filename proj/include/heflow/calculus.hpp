#pragma once

// Discrete complex calculus on twisted fields: 4th-order centered lattice
// derivatives with twisted wraparound, the (1,1)-contraction, the scalar
// Laplacian Delta = -2i Lambda dbar partial, rectangle-rule integration, a
// plain O(n^3) DFT and the Poisson solver (untwisted scalars only).

#include <sstream>

#include "heflow/field.hpp"
#include "heflow/parallel.hpp"

namespace heflow {

namespace detail {
// offsets -2..2, coefficients scaled by n later
inline constexpr double kStencil[5] = {1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0};
}  // namespace detail

// cx * D_x f + cy * D_y f computed entrywise with twisted wraparound in y and
// plain periodic wrap in x. Output carries the given form type.
inline TwistedMatrixField derivative_combine(const TwistedMatrixField& f, cplx cx, cplx cy,
                                             FormType out_form) {
  const TorusGeometry& g = f.geom();
  const int n = g.grid_n();
  const int r = f.rank();
  TwistedMatrixField out(g, r, out_form, f.twist());
  const double scale_n = double(n);
  const cplx* src = f.data();
  cplx* dst = out.data();
  const size_t rr = size_t(r) * r;

  for_rows(n, [&](int y) {
    const bool interior = (y >= 2 && y <= n - 3);
    for (int x = 0; x < n; ++x) {
      const size_t o = (size_t(y) * n + x) * rr;
      const int xm2 = (x + n - 2) % n, xm1 = (x + n - 1) % n;
      const int xp1 = (x + 1) % n, xp2 = (x + 2) % n;
      const size_t oxm2 = (size_t(y) * n + xm2) * rr, oxm1 = (size_t(y) * n + xm1) * rr;
      const size_t oxp1 = (size_t(y) * n + xp1) * rr, oxp2 = (size_t(y) * n + xp2) * rr;
      for (size_t e = 0; e < rr; ++e) {
        const cplx dx = detail::kStencil[0] * src[oxm2 + e] + detail::kStencil[1] * src[oxm1 + e] +
                        detail::kStencil[3] * src[oxp1 + e] + detail::kStencil[4] * src[oxp2 + e];
        cplx dy;
        if (interior) {
          dy = detail::kStencil[0] * src[(size_t(y - 2) * n + x) * rr + e] +
               detail::kStencil[1] * src[(size_t(y - 1) * n + x) * rr + e] +
               detail::kStencil[3] * src[(size_t(y + 1) * n + x) * rr + e] +
               detail::kStencil[4] * src[(size_t(y + 2) * n + x) * rr + e];
        } else {
          const int i = int(e) / r, j = int(e) % r;
          dy = detail::kStencil[0] * f.value_wrapped(x, y - 2, i, j) +
               detail::kStencil[1] * f.value_wrapped(x, y - 1, i, j) +
               detail::kStencil[3] * f.value_wrapped(x, y + 1, i, j) +
               detail::kStencil[4] * f.value_wrapped(x, y + 2, i, j);
        }
        dst[o + e] = scale_n * (cx * dx + cy * dy);
      }
    }
  });
  return out;
}

// dbar on a (0,0) field -> (0,1) coefficient.
inline TwistedMatrixField dbar(const TwistedMatrixField& f) {
  if (f.form() != FormType::F00) throw Error("dbar: expected a (0,0) field");
  return derivative_combine(f, f.geom().dzb_x(), f.geom().dzb_y(), FormType::F01);
}

// dbar on a (1,0) field -> (1,1) coefficient against dz^dzbar (note the sign).
inline TwistedMatrixField dbar_of_10(const TwistedMatrixField& gfield) {
  if (gfield.form() != FormType::F10) throw Error("dbar_of_10: expected a (1,0) field");
  return derivative_combine(gfield, -gfield.geom().dzb_x(), -gfield.geom().dzb_y(), FormType::F11);
}

// partial on a (0,0) field -> (1,0) coefficient.
inline TwistedMatrixField partial(const TwistedMatrixField& f) {
  if (f.form() != FormType::F00) throw Error("partial: expected a (0,0) field");
  return derivative_combine(f, f.geom().dz_x(), f.geom().dz_y(), FormType::F10);
}

// partial on a (0,1) field -> (1,1) coefficient against dz^dzbar.
inline TwistedMatrixField partial_of_01(const TwistedMatrixField& afield) {
  if (afield.form() != FormType::F01) throw Error("partial_of_01: expected a (0,1) field");
  return derivative_combine(afield, afield.geom().dz_x(), afield.geom().dz_y(), FormType::F11);
}

// Lambda_w contraction of a (1,1) field: Lambda(eta dz^dzbar) = -2i eta / c.
inline TwistedMatrixField lambda_contract(const TwistedMatrixField& F) {
  if (F.form() != FormType::F11) throw Error("lambda_contract: expected a (1,1) field");
  TwistedMatrixField out(F.geom(), F.rank(), FormType::F00, F.twist());
  const cplx s = F.geom().lambda_factor();
  const cplx* src = F.data();
  cplx* dst = out.data();
  for (size_t k = 0; k < F.values(); ++k) dst[k] = s * src[k];
  return out;
}

// Scalar Laplacian Delta f = -2i Lambda dbar partial f on untwisted scalars;
// equals the flat Euclidean Laplacian for tau = i, c = 1.
inline TwistedMatrixField laplacian(const TwistedMatrixField& f) {
  if (f.rank() != 1 || !f.untwisted())
    throw Error("laplacian: untwisted scalar fields only");
  TwistedMatrixField p = derivative_combine(f, f.geom().dz_x(), f.geom().dz_y(), FormType::F00);
  TwistedMatrixField q =
      derivative_combine(p, f.geom().dzb_x(), f.geom().dzb_y(), FormType::F00);
  q *= cplx(4.0 / f.geom().area_scale(), 0.0);
  return q;
}

// Rectangle-rule integral of a scalar (0,0) field against w^n/n!; exact for
// grid-resolved Fourier modes.
inline cplx integrate(const TwistedMatrixField& f) {
  if (f.rank() != 1 || f.form() != FormType::F00)
    throw Error("integrate: expected a scalar (0,0) field");
  const int n = f.grid_n();
  cplx sum(0.0, 0.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const cplx v = f(x, y, 0, 0);
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
        std::ostringstream os;
        os << "integrate: non-finite value at grid (" << x << "," << y << ")";
        throw Error(os.str());
      }
      sum += v;
    }
  return sum * f.geom().cell_weight();
}

// Forward DFT of an untwisted scalar field: returns coef indexed [l * n + k]
// with f(x,y) = sum_{k,l} coef e^{2 pi i (k x + l y)}, k,l in [0,n).
inline std::vector<cplx> dft2(const TwistedMatrixField& f) {
  if (f.rank() != 1 || !f.untwisted()) throw Error("dft2: untwisted scalars only");
  const int n = f.grid_n();
  std::vector<cplx> tw(size_t(n), cplx(0.0, 0.0));
  for (int m = 0; m < n; ++m) tw[size_t(m)] = std::exp(cplx(0.0, -2.0 * M_PI * double(m) / n));
  std::vector<cplx> stage(size_t(n) * n), out(size_t(n) * n);
  for_rows(n, [&](int y) {  // transform along x
    for (int k = 0; k < n; ++k) {
      cplx s(0.0, 0.0);
      for (int x = 0; x < n; ++x) s += f(x, y, 0, 0) * tw[size_t(k) * x % n];
      stage[size_t(y) * n + k] = s;
    }
  });
  for_rows(n, [&](int l) {  // transform along y
    for (int k = 0; k < n; ++k) {
      cplx s(0.0, 0.0);
      for (int y = 0; y < n; ++y) s += stage[size_t(y) * n + k] * tw[size_t(l) * y % n];
      out[size_t(l) * n + k] = s / (double(n) * double(n));
    }
  });
  return out;
}

// Inverse of dft2.
inline TwistedMatrixField idft2(const TorusGeometry& geom, const std::vector<cplx>& coef) {
  const int n = geom.grid_n();
  if (coef.size() != size_t(n) * n) throw Error("idft2: coefficient size mismatch");
  std::vector<cplx> tw(size_t(n), cplx(0.0, 0.0));
  for (int m = 0; m < n; ++m) tw[size_t(m)] = std::exp(cplx(0.0, 2.0 * M_PI * double(m) / n));
  TwistedMatrixField f = TwistedMatrixField::scalar(geom);
  std::vector<cplx> stage(size_t(n) * n);
  for_rows(n, [&](int l) {
    for (int x = 0; x < n; ++x) {
      cplx s(0.0, 0.0);
      for (int k = 0; k < n; ++k) s += coef[size_t(l) * n + k] * tw[size_t(k) * x % n];
      stage[size_t(l) * n + x] = s;
    }
  });
  for_rows(n, [&](int y) {
    for (int x = 0; x < n; ++x) {
      cplx s(0.0, 0.0);
      for (int l = 0; l < n; ++l) s += stage[size_t(l) * n + x] * tw[size_t(l) * y % n];
      f(x, y, 0, 0) = s;
    }
  });
  return f;
}

// Solve Delta f = g with mean-zero f by Fourier inversion of the exact symbol
// of the discrete Laplacian. The four modes annihilated by the centered
// stencil (k,l in {0, n/2}) must be absent from g; the constant mode is the
// zero-mean precondition, the Nyquist ones are checked and projected out.
inline TwistedMatrixField poisson_solve(const TwistedMatrixField& g, double mean_tol = 1e-8) {
  if (g.rank() != 1 || !g.untwisted()) throw Error("poisson_solve: untwisted scalars only");
  const TorusGeometry& geom = g.geom();
  const int n = geom.grid_n();
  const cplx mean = integrate(g) / geom.volume();
  double gnorm = g.max_abs();
  if (std::abs(mean) > mean_tol * std::max(gnorm, 1e-300)) {
    std::ostringstream os;
    os << "poisson_solve: input has nonzero mean " << mean << " (|mean| > " << mean_tol
       << " * ||g||_inf = " << mean_tol * gnorm << ")";
    throw Error(os.str());
  }
  std::vector<cplx> coef = dft2(g);
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k) {
      const bool null_mode = (k == 0 || k == n / 2) && (l == 0 || l == n / 2);
      cplx& c = coef[size_t(l) * n + k];
      if (null_mode) {
        if ((k != 0 || l != 0) && std::abs(c) > 1e-10 * std::max(gnorm, 1e-300))
          throw Error("poisson_solve: input has content in a stencil null mode (Nyquist)");
        c = cplx(0.0, 0.0);
      } else {
        c /= geom.laplace_symbol(k, l);
      }
    }
  return idft2(geom, coef);
}

}  // namespace heflow
