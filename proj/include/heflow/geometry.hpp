#pragma once

// Flat torus C/(Z + tau Z) with constant Kahler form w = (i c/2) dz^dzbar.
// Lattice coordinates (x, y) in [0,1)^2, z = x + tau y, grid_n points per
// direction. Everything downstream (derivatives, integration, Poisson) fixes
// its conventions here.

#include <complex>
#include <stdexcept>
#include <string>
#include <cmath>

namespace heflow {

using cplx = std::complex<double>;

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class TorusGeometry {
 public:
  TorusGeometry(cplx tau, double area_scale, int grid_n)
      : tau_(tau), c_(area_scale), n_(grid_n) {
    if (tau.imag() <= 0.0) throw Error("TorusGeometry: Im(tau) must be positive");
    if (c_ <= 0.0) throw Error("TorusGeometry: area_scale must be positive");
    if (n_ < 8 || n_ % 2 != 0)
      throw Error("TorusGeometry: grid_n must be even and >= 8, got " + std::to_string(n_));
    const cplx two_i_imtau = tau_ - std::conj(tau_);  // 2i Im(tau)
    dz_x_ = -std::conj(tau_) / two_i_imtau;           // d/dz = dz_x_ D_x + dz_y_ D_y
    dz_y_ = 1.0 / two_i_imtau;
    dzb_x_ = tau_ / two_i_imtau;                      // d/dzbar
    dzb_y_ = -1.0 / two_i_imtau;
  }

  cplx tau() const { return tau_; }
  double im_tau() const { return tau_.imag(); }
  double area_scale() const { return c_; }
  int grid_n() const { return n_; }
  double volume() const { return c_ * tau_.imag(); }
  double cell_weight() const { return volume() / (double(n_) * double(n_)); }
  double spacing() const { return 1.0 / double(n_); }

  // z = x + tau y at lattice point (ix, iy)
  cplx z_at(int ix, int iy) const {
    return cplx(double(ix) / n_, 0.0) + tau_ * (double(iy) / n_);
  }
  double xcoord(int ix) const { return double(ix) / n_; }
  double ycoord(int iy) const { return double(iy) / n_; }

  cplx dz_x() const { return dz_x_; }
  cplx dz_y() const { return dz_y_; }
  cplx dzb_x() const { return dzb_x_; }
  cplx dzb_y() const { return dzb_y_; }

  // Lambda_w (eta dz^dzbar) = -2i eta / c, so that Lambda_w w = 1.
  cplx lambda_factor() const { return cplx(0.0, -2.0 / c_); }

  // i Lambda_w (eta dz^dzbar) = (2/c) eta.
  double ilambda_factor() const { return 2.0 / c_; }

  // Symbol of the 4th-order first-derivative stencil on mode e^{i w j}:
  // D -> i n s(w), s(w) = (4/3) sin w - (1/6) sin 2w.
  static double stencil_symbol(double omega) {
    return (4.0 / 3.0) * std::sin(omega) - (1.0 / 6.0) * std::sin(2.0 * omega);
  }

  // Exact symbol of the discrete Laplacian (composition of the dbar and
  // partial stencils) on the Fourier mode e^{2 pi i (k x + l y)}. Real, <= 0.
  double laplace_symbol(int k, int l) const {
    const double wk = 2.0 * M_PI * double(k) / n_;
    const double wl = 2.0 * M_PI * double(l) / n_;
    const cplx s = dz_x_ * stencil_symbol(wk) + dz_y_ * stencil_symbol(wl);
    return -(4.0 / c_) * double(n_) * double(n_) * std::norm(s);
  }

  // Continuum symbol of the Laplacian on the same mode (for oracles):
  // Delta e = -(4/c) pi^2 |l - tau k|^2 / Im(tau)^2 e.
  double laplace_symbol_exact(int k, int l) const {
    const cplx m = cplx(double(l), 0.0) - tau_ * double(k);
    const double it = tau_.imag();
    return -(4.0 / c_) * M_PI * M_PI * std::norm(m) / (it * it);
  }

  // Holomorphic multiplier mu_m(z) = exp(-2 pi i m z - pi i m tau); sections of
  // the degree-m line bundle satisfy f(z + tau) = mu_m(z) f(z), f(z + 1) = f(z).
  cplx multiplier(int m, cplx z) const {
    const cplx ipi(0.0, M_PI);
    return std::exp(-ipi * (2.0 * double(m) * z + double(m) * tau_));
  }

  // Reference constant-curvature metric weight on the degree-d line bundle:
  // k_d(y) = exp(-2 pi d y^2 Im tau); then i Lambda F = 2 pi d / V.
  double metric_weight(int d, int iy) const {
    const double y = double(iy) / n_;
    return std::exp(-2.0 * M_PI * double(d) * y * y * tau_.imag());
  }

  // Chern connection (1,0)-coefficient of the reference weight: gamma_d = 2 pi i d y.
  cplx connection_coeff(int d, int iy) const {
    return cplx(0.0, 2.0 * M_PI * double(d) * double(iy) / n_);
  }

  bool operator==(const TorusGeometry& o) const {
    return tau_ == o.tau_ && c_ == o.c_ && n_ == o.n_;
  }

 private:
  cplx tau_;
  double c_;
  int n_;
  cplx dz_x_, dz_y_, dzb_x_, dzb_y_;
};

}  // namespace heflow
