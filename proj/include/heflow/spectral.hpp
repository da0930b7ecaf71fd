#pragma once

// Spectral calculus on self-adjoint endomorphism fields: pointwise
// eigendecomposition with respect to a Hermitian positive weight (Cholesky of
// the weight, then a standard Hermitian eigensolve), scalar functions rho(eta),
// two-variable kernels Psi[eta](p), and the exp/log pair used for S = log h.

#include <functional>

#include "heflow/higgs.hpp"

namespace heflow {

using DynMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;

struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;  // ascending
  Mat frame;                    // columns W-orthonormal, eta = frame * diag * frame^{-1}
  Mat frame_inv;                // frame^{-1} = frame^dagger W
};

// Decompose a W-self-adjoint matrix (W Hermitian positive definite).
// B = L^dagger eta L^{-dagger} is Hermitian for eta self-adjoint w.r.t. W = L L^dagger.
inline SpectralDecomposition spectral_decompose(const Mat& eta, const Mat& W,
                                                double* hermiticity_residual = nullptr) {
  const int r = int(eta.rows());
  Eigen::LLT<DynMat> llt(W);
  if (llt.info() != Eigen::Success) throw Error("spectral_decompose: weight not positive definite");
  DynMat Lh = DynMat(llt.matrixL()).adjoint();  // upper triangular L^dagger
  DynMat Lh_inv = Lh.triangularView<Eigen::Upper>().solve(DynMat::Identity(r, r));
  DynMat B = Lh * eta * Lh_inv;
  if (hermiticity_residual) {
    *hermiticity_residual = (B - DynMat(B.adjoint())).cwiseAbs().maxCoeff();
  }
  DynMat Bh = 0.5 * (B + B.adjoint());
  Eigen::SelfAdjointEigenSolver<DynMat> es(Bh);
  if (es.info() != Eigen::Success) throw Error("spectral_decompose: eigensolver failed");
  SpectralDecomposition out;
  out.eigenvalues = es.eigenvalues();
  DynMat U = es.eigenvectors();
  out.frame = Lh_inv * U;
  out.frame_inv = U.adjoint() * Lh;
  return out;
}

// rho applied through the eigenframe: rho(eta) = E rho(Lambda) E^{-1}.
inline Mat rho_apply_mat(const Mat& eta, const Mat& W, const std::function<double(double)>& rho) {
  SpectralDecomposition d = spectral_decompose(eta, W);
  const int r = int(eta.rows());
  Mat out = Mat::Zero(r, r);
  DynMat scaled = d.frame;
  for (int i = 0; i < r; ++i) scaled.col(i) *= rho(d.eigenvalues[i]);
  out = scaled * d.frame_inv;
  return out;
}

// Two-variable kernel: components of p in the eigenframe scaled by
// Psi(lambda_i, lambda_j) with p = sum p_ij e_i^* (x) e_j; in matrix components
// (row a, col b) of E^{-1} p E the weight is Psi(lambda_b, lambda_a).
inline Mat psi_apply_mat(const Mat& eta, const Mat& W, const Mat& p,
                         const std::function<double(double, double)>& psi) {
  SpectralDecomposition d = spectral_decompose(eta, W);
  const int r = int(eta.rows());
  DynMat pc = d.frame_inv * p * d.frame;
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) pc(a, b) *= psi(d.eigenvalues[b], d.eigenvalues[a]);
  Mat out = d.frame * pc * d.frame_inv;
  return out;
}

inline Mat exp_weighted(const Mat& eta, const Mat& W) {
  return rho_apply_mat(eta, W, [](double x) { return std::exp(x); });
}

// Principal logarithm of a W-self-adjoint positive h; eigenvalues are floored
// at 1e-14 before the log.
inline Mat log_weighted(const Mat& h, const Mat& W) {
  return rho_apply_mat(h, W, [](double x) {
    if (x < 1e-14) x = 1e-14;
    return std::log(x);
  });
}

// The Donaldson kernel Psi(x,y) = (x-y)^{-2} (e^{y-x} - (y-x) - 1), evaluated
// through a 6-term Taylor series in u = y-x near the diagonal to avoid
// cancellation; Psi > 0 everywhere, Psi(x,x) = 1/2.
inline double donaldson_psi(double x, double y) {
  const double u = y - x;
  if (std::abs(u) < 1e-4) {
    return 0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u * (1.0 / 120.0 +
                u * (1.0 / 720.0 + u * (1.0 / 5040.0)))));
  }
  return (std::expm1(u) - u) / (u * u);
}

// ---------------------------------------------------------------------------
// Field-level wrappers. The weight is the metric the field is self-adjoint
// against: K0 alone (weight_state == nullptr) or K0 * h_K.
// ---------------------------------------------------------------------------

// Hermitian positive weight matrix W(x,y) = K0(y) [* h(x,y)].
inline Mat weight_matrix(const HiggsBundle& b, int x, int y, const TwistedMatrixField* h) {
  const int r = b.rank();
  Mat W = Mat::Zero(r, r);
  for (int i = 0; i < r; ++i) W(i, i) = b.k0_weight(i, y);
  if (h) W = W * Mat(h->at(x, y));
  // enforce exact Hermiticity against roundoff
  Mat Wh = 0.5 * (W + Mat(W.adjoint()));
  return Wh;
}

inline TwistedMatrixField rho_apply(const HiggsBundle& b, const TwistedMatrixField& eta,
                                    const std::function<double(double)>& rho,
                                    const TwistedMatrixField* weight_state = nullptr,
                                    double self_adjoint_tol = 1e-6) {
  TwistedMatrixField out = b.zero_field(FormType::F00);
  const int n = b.geom().grid_n();
  const double scale = std::max(eta.max_abs(), 1e-300);
  std::vector<double> worst(size_t(n), 0.0);
  for_rows(n, [&](int y) {
    for (int x = 0; x < n; ++x) {
      Mat W = weight_matrix(b, x, y, weight_state);
      double herm = 0.0;
      SpectralDecomposition d = spectral_decompose(eta.at(x, y), W, &herm);
      worst[size_t(y)] = std::max(worst[size_t(y)], herm);
      DynMat scaled = d.frame;
      for (int i = 0; i < b.rank(); ++i) scaled.col(i) *= rho(d.eigenvalues[i]);
      out.at(x, y) = scaled * d.frame_inv;
    }
  });
  double herm = 0.0;
  for (double w : worst) herm = std::max(herm, w);
  if (herm > self_adjoint_tol * scale)
    throw Error("rho_apply: input is not self-adjoint w.r.t. the weight (residual " +
                std::to_string(herm / scale) + " relative)");
  return out;
}

inline TwistedMatrixField psi_apply(const HiggsBundle& b, const TwistedMatrixField& eta,
                                    const TwistedMatrixField& p,
                                    const std::function<double(double, double)>& psi,
                                    const TwistedMatrixField* weight_state = nullptr,
                                    double self_adjoint_tol = 1e-6) {
  TwistedMatrixField out(b.geom(), b.rank(), p.form(), p.twist());
  const int n = b.geom().grid_n();
  const double scale = std::max(eta.max_abs(), 1e-300);
  std::vector<double> worst(size_t(n), 0.0);
  for_rows(n, [&](int y) {
    for (int x = 0; x < n; ++x) {
      Mat W = weight_matrix(b, x, y, weight_state);
      double herm = 0.0;
      SpectralDecomposition d = spectral_decompose(eta.at(x, y), W, &herm);
      worst[size_t(y)] = std::max(worst[size_t(y)], herm);
      DynMat pc = d.frame_inv * Mat(p.at(x, y)) * d.frame;
      for (int aa = 0; aa < b.rank(); ++aa)
        for (int bb = 0; bb < b.rank(); ++bb) pc(aa, bb) *= psi(d.eigenvalues[bb], d.eigenvalues[aa]);
      out.at(x, y) = d.frame * pc * d.frame_inv;
    }
  });
  double herm = 0.0;
  for (double w : worst) herm = std::max(herm, w);
  if (herm > self_adjoint_tol * scale)
    throw Error("psi_apply: input is not self-adjoint w.r.t. the weight");
  return out;
}

// S = log h for a state h self-adjoint w.r.t. W = K0 [* h_K].
inline TwistedMatrixField log_state(const HiggsBundle& b, const TwistedMatrixField& h,
                                    const TwistedMatrixField* weight_state = nullptr) {
  return rho_apply(b, h, [](double x) { return std::log(std::max(x, 1e-14)); }, weight_state,
                   1e-4);
}

inline TwistedMatrixField exp_field(const HiggsBundle& b, const TwistedMatrixField& s,
                                    const TwistedMatrixField* weight_state = nullptr) {
  return rho_apply(b, s, [](double x) { return std::exp(x); }, weight_state, 1e-4);
}

// Eigenvalue fields of a W-self-adjoint field, sorted ascending per point.
inline std::vector<TwistedMatrixField> eigenvalue_fields(const HiggsBundle& b,
                                                         const TwistedMatrixField& eta,
                                                         const TwistedMatrixField* weight_state = nullptr) {
  const int n = b.geom().grid_n();
  std::vector<TwistedMatrixField> out;
  for (int i = 0; i < b.rank(); ++i) out.push_back(TwistedMatrixField::scalar(b.geom()));
  for_rows(n, [&](int y) {
    for (int x = 0; x < n; ++x) {
      Mat W = weight_matrix(b, x, y, weight_state);
      SpectralDecomposition d = spectral_decompose(eta.at(x, y), W);
      for (int i = 0; i < b.rank(); ++i) out[size_t(i)](x, y, 0, 0) = d.eigenvalues[i];
    }
  });
  return out;
}

}  // namespace heflow
