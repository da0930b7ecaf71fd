#pragma once

// Metric states h = K^{-1}H and the curvature pipeline: Chern curvature of the
// evolving metric, the Higgs adjoint, the Einstein deviation
// Phi = i Lambda (F_H + [theta, theta*H]) - lambda Id, and Gauss-Codazzi
// degrees of projection fields.

#include "heflow/bundle.hpp"

namespace heflow {

struct MetricState {
  TwistedMatrixField h;
  double t = 0.0;
};

inline MetricState identity_state(const HiggsBundle& b, double t = 0.0) {
  MetricState s{b.zero_field(FormType::F00), t};
  s.h.set_identity();
  return s;
}

namespace detail {

inline Mat inverse_checked(ConstMatMap m, int x, int y) {
  const int r = int(m.rows());
  Eigen::PartialPivLU<Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>> lu(m);
  const double det = std::abs(lu.determinant());
  const double scale = m.cwiseAbs().maxCoeff();
  if (!(det > 0.0) || !std::isfinite(det) ||
      det < 1e-14 * std::pow(std::max(scale, 1e-300), r)) {
    std::ostringstream os;
    os << "singular metric at grid (" << x << "," << y << "): |det| = " << det
       << ", approx condition >= " << (det > 0.0 ? std::pow(scale, r) / det : INFINITY);
    throw Error(os.str());
  }
  Mat inv = lu.inverse();
  return inv;
}

}  // namespace detail

// f^{*H} = h^{-1} (K0^{-1} f^dagger K0) h for a (0,0) field f and state h.
inline TwistedMatrixField adjoint_state(const HiggsBundle& b, const TwistedMatrixField& h,
                                        const TwistedMatrixField& f) {
  TwistedMatrixField adj = b.adjoint_k0(f, f.form());
  TwistedMatrixField out(b.geom(), b.rank(), f.form(), f.twist());
  const int n = b.geom().grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Mat hinv = detail::inverse_checked(h.at(x, y), x, y);
      out.at(x, y) = hinv * adj.at(x, y) * h.at(x, y);
    }
  return out;
}

// Pointwise squared H-Frobenius norm |f|^2_H = tr(f f^{*H}) as a scalar field.
// form_factor multiplies (use 2/c per (1,0) or (0,1) form index).
inline TwistedMatrixField h_norm_sq_field(const HiggsBundle& b, const TwistedMatrixField& h,
                                          const TwistedMatrixField& f, double form_factor = 1.0) {
  TwistedMatrixField adj = adjoint_state(b, h, f);
  TwistedMatrixField out = TwistedMatrixField::scalar(b.geom());
  const int n = b.geom().grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      out(x, y, 0, 0) = form_factor * (f.at(x, y) * adj.at(x, y)).trace().real();
  return out;
}

// partial_conn: (1,0)-derivative in the Chern connection of (dbar+a, H):
// partial_{H} f = partial_{K,a} f + [h^{-1} partial_{K,a} h, f].
inline TwistedMatrixField partial_H(const HiggsBundle& b, const MetricState& state,
                                    const TwistedMatrixField& f) {
  TwistedMatrixField dh = b.partial_Ka(state.h);
  TwistedMatrixField out = b.partial_Ka(f);
  const int n = b.geom().grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Mat hinv = detail::inverse_checked(state.h.at(x, y), x, y);
      Mat g = hinv * dh.at(x, y);
      out.at(x, y) += g * f.at(x, y) - f.at(x, y) * g;
    }
  return out;
}

// Curvature F_H = F_{K,a} + dbar_a(h^{-1} partial_{K,a} h), as a (1,1) field.
inline TwistedMatrixField curvature(const HiggsBundle& b, const MetricState& state) {
  TwistedMatrixField dh = b.partial_Ka(state.h);
  TwistedMatrixField g = b.zero_field(FormType::F10);
  const int n = b.geom().grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Mat hinv = detail::inverse_checked(state.h.at(x, y), x, y);
      g.at(x, y) = hinv * dh.at(x, y);
    }
  TwistedMatrixField out = b.dbar_a_of_10(g);
  out += b.f_ka();
  return out;
}

// theta^{*H} = h^{-1} theta^{*K0} h, a (0,1) field.
inline TwistedMatrixField higgs_adjoint(const HiggsBundle& b, const MetricState& state) {
  TwistedMatrixField out = b.zero_field(FormType::F01);
  const int n = b.geom().grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Mat hinv = detail::inverse_checked(state.h.at(x, y), x, y);
      out.at(x, y) = hinv * b.theta_adj_k0().at(x, y) * state.h.at(x, y);
    }
  return out;
}

struct PhiResult {
  TwistedMatrixField phi;       // H-self-adjoint (0,0) field
  double asymmetry = 0.0;       // sup |Phi_raw - Phi_raw^{*H}| before symmetrization
};

// Einstein deviation Phi(H, theta) = i Lambda (F_H + [theta, theta*H]) - lambda Id.
// The discrete assembly is projected onto its H-self-adjoint part; the
// projection distance (a truncation-order diagnostic) is reported.
inline PhiResult phi_full(const HiggsBundle& b, const MetricState& state) {
  TwistedMatrixField f_h = curvature(b, state);
  TwistedMatrixField raw = b.zero_field(FormType::F00);
  const int n = b.geom().grid_n();
  const double il = b.geom().ilambda_factor();
  const double lam = b.lambda();
  const bool with_theta = b.has_theta();
  TwistedMatrixField theta_h =
      with_theta ? higgs_adjoint(b, state) : b.zero_field(FormType::F01);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Mat m = f_h.at(x, y);
      if (with_theta) {
        Mat t = b.theta().at(x, y);
        Mat mh = theta_h.at(x, y);
        m += t * mh - mh * t;
      }
      m *= il;
      for (int i = 0; i < b.rank(); ++i) m(i, i) -= lam;
      raw.at(x, y) = m;
    }
  TwistedMatrixField adj = adjoint_state(b, state.h, raw);
  PhiResult res{b.zero_field(FormType::F00), 0.0};
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Mat d = raw.at(x, y) - adj.at(x, y);
      res.asymmetry = std::max(res.asymmetry, d.cwiseAbs().maxCoeff());
      res.phi.at(x, y) = 0.5 * (raw.at(x, y) + adj.at(x, y));
    }
  return res;
}

inline TwistedMatrixField phi(const HiggsBundle& b, const MetricState& state) {
  return phi_full(b, state).phi;
}

struct DegreeResult {
  double degree = 0.0;
  double curvature_part = 0.0;   // (1/2pi) int tr(pi i Lambda F_{H,theta})
  double dirichlet_part = 0.0;   // (1/2pi) int |D''_theta pi|^2
  double idempotency = 0.0;      // sup |pi^2 - pi|
  bool warned = false;
};

// Gauss-Codazzi degree of the subsheaf represented by a projection field:
// deg = (1/2pi) [ int tr(pi i Lambda F_{H,theta}) - int |D''_theta pi|^2_H ].
// With pi = Id the second term vanishes identically and the full degree
// sum(d_i) is returned.
inline DegreeResult chern_weil_degree(const HiggsBundle& b, const MetricState& state,
                                      const TwistedMatrixField* projection = nullptr,
                                      double idempotency_tol = 0.05) {
  const int n = b.geom().grid_n();
  DegreeResult res;
  TwistedMatrixField ilf = phi(b, state);  // i Lambda F_{H,theta} - lambda
  TwistedMatrixField integrand = TwistedMatrixField::scalar(b.geom());
  if (projection) {
    const TwistedMatrixField& p = *projection;
    p.require_compatible(state.h);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        Mat pm = p.at(x, y);
        Mat sq = pm * pm - pm;
        res.idempotency = std::max(res.idempotency, sq.cwiseAbs().maxCoeff());
      }
    if (res.idempotency > idempotency_tol) {
      std::ostringstream os;
      os << "chern_weil_degree: projection fails idempotency, sup|pi^2 - pi| = "
         << res.idempotency;
      throw Error(os.str());
    }
    if (res.idempotency > 1e-3) res.warned = true;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        Mat m = ilf.at(x, y);
        for (int i = 0; i < b.rank(); ++i) m(i, i) += b.lambda();
        integrand(x, y, 0, 0) = (p.at(x, y) * m).trace();
      }
    res.curvature_part = integrate(integrand).real() / (2.0 * M_PI);
    TwistedMatrixField dbar_p = b.dbar_a(p);
    TwistedMatrixField nrm = h_norm_sq_field(b, state.h, dbar_p, 2.0 / b.geom().area_scale());
    if (b.has_theta()) {
      TwistedMatrixField tp = commutator(b.theta(), p, FormType::F10);
      nrm += h_norm_sq_field(b, state.h, tp, 2.0 / b.geom().area_scale());
    }
    res.dirichlet_part = integrate(nrm).real() / (2.0 * M_PI);
  } else {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        cplx tr = ilf.at(x, y).trace();
        integrand(x, y, 0, 0) = tr + double(b.rank()) * b.lambda();
      }
    res.curvature_part = integrate(integrand).real() / (2.0 * M_PI);
    res.dirichlet_part = 0.0;
  }
  res.degree = res.curvature_part - res.dirichlet_part;
  return res;
}

}  // namespace heflow
