#pragma once

// Both formulations of the Donaldson functional and their cross-checks.
// Closed form:  mu(K,H) = int tr(S i Lambda F_{K,theta})
//                        + <Psi(S)(D''_theta S), D''_theta S>_K,
// with S = log(K^{-1}H), Psi(x,y) = (x-y)^{-2}(e^{y-x} - (y-x) - 1) and
// F_{K,theta} = F_{K,a} + [theta, theta*K]. Path form: Simpson quadrature of
// int tr(Phi(H(s)) H^{-1} dH/ds) along geodesic or linear-in-h paths.

#include "heflow/spectral.hpp"

namespace heflow {

struct DonaldsonTerms {
  double total = 0.0;
  double curvature_term = 0.0;  // int tr(S i Lambda F_{K,theta})
  double psi_term = 0.0;        // >= 0
};

// i Lambda F_{K,theta} of a background state (Phi + lambda Id).
inline TwistedMatrixField ilambda_f_theta(const HiggsBundle& b, const TwistedMatrixField& hK) {
  MetricState ks{hK, 0.0};
  TwistedMatrixField out = phi(b, ks);
  const int n = b.geom().grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int i = 0; i < b.rank(); ++i) out(x, y, i, i) += b.lambda();
  return out;
}

// S = log(K^{-1} H) where K = K0 hK and H = K0 hH; S is W_K-self-adjoint with
// W_K = K0 hK.
inline TwistedMatrixField relative_log(const HiggsBundle& b, const TwistedMatrixField& hK,
                                       const TwistedMatrixField& hH) {
  const int n = b.geom().grid_n();
  TwistedMatrixField hrel = b.zero_field(FormType::F00);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Mat inv = detail::inverse_checked(hK.at(x, y), x, y);
      hrel.at(x, y) = inv * Mat(hH.at(x, y));
    }
  return log_state(b, hrel, &hK);
}

inline DonaldsonTerms donaldson_closed(const HiggsBundle& b, const TwistedMatrixField& hK,
                                       const TwistedMatrixField& hH,
                                       const TwistedMatrixField* ilf_theta_cached = nullptr) {
  const int n = b.geom().grid_n();
  TwistedMatrixField S = relative_log(b, hK, hH);
  TwistedMatrixField ilf =
      ilf_theta_cached ? *ilf_theta_cached : ilambda_f_theta(b, hK);
  DonaldsonTerms out;
  // curvature term
  TwistedMatrixField integrand = TwistedMatrixField::scalar(b.geom());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      integrand(x, y, 0, 0) = (Mat(S.at(x, y)) * Mat(ilf.at(x, y))).trace().real();
  out.curvature_term = integrate(integrand).real();
  // Psi term over the (0,1) and (1,0) components of D''_theta S
  std::vector<TwistedMatrixField> comps;
  comps.push_back(b.dbar_a(S));
  if (b.has_theta()) comps.push_back(commutator(b.theta(), S, FormType::F10));
  const double ff = 2.0 / b.geom().area_scale();
  double psi_sum = 0.0;
  for (const TwistedMatrixField& P : comps) {
    TwistedMatrixField psi_p = psi_apply(b, S, P, donaldson_psi, &hK);
    TwistedMatrixField padj = adjoint_state(b, hK, P);
    TwistedMatrixField pair = TwistedMatrixField::scalar(b.geom());
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        pair(x, y, 0, 0) = ff * (Mat(psi_p.at(x, y)) * Mat(padj.at(x, y))).trace().real();
    psi_sum += integrate(pair).real();
  }
  out.psi_term = psi_sum;
  out.total = out.curvature_term + out.psi_term;
  return out;
}

enum class PathKind { geodesic, linear_in_h };

struct PathResult {
  double value = 0.0;
  int nodes = 0;
};

// mu(K,H) = int_0^1 int_M tr(Phi(H(s)) H^{-1} dH/ds) ds via composite Simpson
// in s, refined until the relative change drops below rel_tol.
inline PathResult donaldson_path(const HiggsBundle& b, const TwistedMatrixField& hK,
                                 const TwistedMatrixField& hH, PathKind kind,
                                 int m_start = 9, double rel_tol = 1e-7) {
  const int n = b.geom().grid_n();
  TwistedMatrixField S = relative_log(b, hK, hH);  // used by the geodesic path

  auto integrand_at = [&](double s) -> double {
    // H(s) as an absolute state, and V = H^{-1} dH/ds
    TwistedMatrixField habs = b.zero_field(FormType::F00);
    TwistedMatrixField vfield = b.zero_field(FormType::F00);
    if (kind == PathKind::geodesic) {
      TwistedMatrixField sS = S;
      sS *= cplx(s, 0.0);
      TwistedMatrixField es = exp_field(b, sS, &hK);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          habs.at(x, y) = Mat(hK.at(x, y)) * Mat(es.at(x, y));
          vfield.at(x, y) = S.at(x, y);
        }
    } else {
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          Mat hk = hK.at(x, y);
          Mat hrel = detail::inverse_checked(hK.at(x, y), x, y) * Mat(hH.at(x, y));
          Mat id = Mat::Identity(b.rank(), b.rank());
          Mat hs = (1.0 - s) * id + s * hrel;
          habs.at(x, y) = hk * hs;
          vfield.at(x, y) = hs.inverse() * (hrel - id);
        }
    }
    MetricState st{habs, 0.0};
    TwistedMatrixField ph = phi(b, st);
    TwistedMatrixField tr = TwistedMatrixField::scalar(b.geom());
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        tr(x, y, 0, 0) = (Mat(ph.at(x, y)) * Mat(vfield.at(x, y))).trace().real();
    return integrate(tr).real();
  };

  double prev = 0.0;
  bool have_prev = false;
  for (int m = m_start; m <= 129; m = 2 * m - 1) {
    // composite Simpson with m nodes (m odd)
    const int seg = m - 1;
    const double hstep = 1.0 / seg;
    double acc = integrand_at(0.0) + integrand_at(1.0);
    for (int i = 1; i < seg; ++i) acc += integrand_at(i * hstep) * (i % 2 ? 4.0 : 2.0);
    const double val = acc * hstep / 3.0;
    if (have_prev && std::abs(val - prev) <= rel_tol * std::max(std::abs(val), 1e-12))
      return PathResult{val, m};
    prev = val;
    have_prev = true;
  }
  throw Error("donaldson_path: quadrature did not converge to the requested tolerance");
}

// Residual of the gradient-flow identity d mu/dt = -2 ||Phi||_{L^2}^2 from
// three consecutive mu samples at spacing dt_mon and ||Phi||^2 at the center.
inline double energy_derivative_residual(double mu_prev, double mu_next, double dt_mon,
                                         double phi_l2_sq_center) {
  const double dmu = (mu_next - mu_prev) / (2.0 * dt_mon);
  return std::abs(dmu + 2.0 * phi_l2_sq_center) / std::max(phi_l2_sq_center, 1e-30);
}

}  // namespace heflow
