#pragma once

// Independent ground-truth solvers for the PDE code. Neither path shares
// derivative code with the flow module: the scalar oracle evolves Fourier
// coefficients with the analytic Laplacian symbol, and the matrix oracle
// integrates the spatially-constant reduction of the flow with an adaptive
// Runge-Kutta scheme.

#include <boost/numeric/odeint.hpp>

#include "heflow/calculus.hpp"

namespace heflow {

// ---------------------------------------------------------------------------
// Linear heat oracle for line bundles: Phi evolves by dPhi/dt = Delta Phi.
// ---------------------------------------------------------------------------

class ScalarHeatOracle {
 public:
  ScalarHeatOracle(const TorusGeometry& geom, const TwistedMatrixField& phi0)
      : geom_(&geom) {
    if (phi0.rank() != 1 || !phi0.untwisted())
      throw Error("ScalarHeatOracle: rank-1 untwisted data only");
    coef_ = dft2(phi0);
    const int n = geom.grid_n();
    // real field: coefficients must be conjugate-symmetric
    double scale = 0.0;
    for (const cplx& c : coef_) scale = std::max(scale, std::abs(c));
    for (int l = 0; l < n; ++l)
      for (int k = 0; k < n; ++k) {
        const cplx a = coef_[size_t(l) * n + k];
        const cplx b = coef_[size_t((n - l) % n) * n + (n - k) % n];
        if (std::abs(a - std::conj(b)) > 1e-9 * std::max(scale, 1e-300))
          throw Error("ScalarHeatOracle: coefficients are not conjugate-symmetric");
      }
  }

  // Phi(t) = sum Phi0_hat(k,l) exp(kappa_exact(k,l) t) e^{2 pi i (k x + l y)}
  TwistedMatrixField at_time(double t) const {
    const int n = geom_->grid_n();
    std::vector<cplx> c(coef_);
    for (int l = 0; l < n; ++l)
      for (int k = 0; k < n; ++k) {
        const int ks = k > n / 2 ? k - n : k;
        const int ls = l > n / 2 ? l - n : l;
        c[size_t(l) * n + k] *= std::exp(geom_->laplace_symbol_exact(ks, ls) * t);
      }
    return idft2(*geom_, c);
  }

 private:
  const TorusGeometry* geom_;
  std::vector<cplx> coef_;
};

// ---------------------------------------------------------------------------
// Constant-coefficient matrix ODE: h' = -2 h Phi(h) with
// Phi(h) = (2/c) ([A, A*] + G A - A G + [T, h^{-1} T* h]),
// G = -h^{-1} A* h + A*, for twist-0 bundles with equal degrees.
// The Donaldson functional is accumulated alongside: mu' = -2 V tr(Phi^2).
// ---------------------------------------------------------------------------

struct ConstantHiggsData {
  int rank = 2;
  double area_scale = 1.0;  // c
  double volume = 1.0;      // V = c Im(tau)
  Mat a;                    // (0,1) coefficient
  Mat theta;                // (1,0) coefficient
};

inline Mat constant_phi(const ConstantHiggsData& d, const Mat& h) {
  const int r = d.rank;
  Mat phi = Mat::Zero(r, r);
  const Mat hinv = h.inverse();
  if (d.a.size() > 0 && d.a.cwiseAbs().maxCoeff() > 0.0) {
    const Mat astar = d.a.adjoint();
    phi += d.a * astar - astar * d.a;
    const Mat g = astar - hinv * astar * h;
    phi += g * d.a - d.a * g;
  }
  if (d.theta.size() > 0 && d.theta.cwiseAbs().maxCoeff() > 0.0) {
    const Mat tstar_h = hinv * Mat(d.theta.adjoint()) * h;
    phi += d.theta * tstar_h - tstar_h * d.theta;
  }
  phi *= 2.0 / d.area_scale;
  return phi;
}

struct MatrixOdeResult {
  Mat h;
  double mu = 0.0;       // Donaldson functional accumulated from 0 to t
  double phi_fro = 0.0;  // |Phi|_F at the final time
};

inline MatrixOdeResult matrix_ode(const ConstantHiggsData& d, const Mat& h0, double t_end,
                                  double tol = 1e-12) {
  namespace ode = boost::numeric::odeint;
  const int r = d.rank;
  if (h0.rows() != r || h0.cols() != r) throw Error("matrix_ode: h0 shape mismatch");
  using State = std::vector<double>;
  State s(size_t(2 * r * r) + 1, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      s[size_t(2 * (i * r + j))] = h0(i, j).real();
      s[size_t(2 * (i * r + j)) + 1] = h0(i, j).imag();
    }
  auto unpack = [r](const State& st) {
    Mat h = Mat::Zero(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        h(i, j) = cplx(st[size_t(2 * (i * r + j))], st[size_t(2 * (i * r + j)) + 1]);
    return h;
  };
  auto rhs = [&](const State& st, State& dst, double) {
    Mat h = unpack(st);
    Mat phi = constant_phi(d, h);
    Mat dh = -2.0 * h * phi;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) {
        dst[size_t(2 * (i * r + j))] = dh(i, j).real();
        dst[size_t(2 * (i * r + j)) + 1] = dh(i, j).imag();
      }
    dst[size_t(2 * r * r)] = -2.0 * d.volume * (phi * phi).trace().real();
  };
  if (t_end > 0.0) {
    auto stepper = ode::make_controlled(tol, tol, ode::runge_kutta_dopri5<State>());
    ode::integrate_adaptive(stepper, rhs, s, 0.0, t_end, std::min(1e-3, t_end));
  }
  MatrixOdeResult out;
  out.h = unpack(s);
  out.mu = s[size_t(2 * r * r)];
  Mat phi = constant_phi(d, out.h);
  out.phi_fro = std::sqrt(std::max(0.0, (phi * phi).trace().real()));
  return out;
}

// Extracts constant-coefficient data from a preset-style bundle, verifying the
// fields really are constant and untwisted.
inline ConstantHiggsData constant_data_from(const HiggsBundle& b) {
  if (!std::all_of(b.twist().begin(), b.twist().end(), [](int m) { return m == 0; }))
    throw Error("constant_data_from: bundle must be untwisted");
  ConstantHiggsData d;
  d.rank = b.rank();
  d.area_scale = b.geom().area_scale();
  d.volume = b.geom().volume();
  d.a = Mat(b.a().at(0, 0));
  d.theta = Mat(b.theta().at(0, 0));
  const int n = b.geom().grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if ((Mat(b.a().at(x, y)) - d.a).cwiseAbs().maxCoeff() > 0.0 ||
          (Mat(b.theta().at(x, y)) - d.theta).cwiseAbs().maxCoeff() > 0.0)
        throw Error("constant_data_from: bundle fields are not spatially constant");
    }
  return d;
}

}  // namespace heflow
