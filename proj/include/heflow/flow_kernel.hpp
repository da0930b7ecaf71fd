#pragma once

// Rank-templated step kernel for the heat flow. Three sweeps per evaluation:
// (A) combined partial stencil of h, (B) pointwise G = h^{-1} partial_{K,a} h,
// (C) combined dbar stencil of G plus assembly of the H-symmetrized Phi and
// its norms. The update sweep applies h <- h exp(-2 dt Phi) and re-enforces
// K0-self-adjointness. All reductions are per-row partials combined in order.

#include "heflow/smallalg.hpp"
#include "heflow/higgs.hpp"

namespace heflow {

struct StepNorms {
  double sup_phi = 0.0;       // sup_x |Phi|_H (Frobenius)
  double phi_l2_sq = 0.0;     // int |Phi|_H^2 dV
  double sup_tr_phi = 0.0;    // sup_x |tr Phi|
  double sup_det_drift = 0.0; // sup_x |det h_rel - 1|
  double sup_phi_pointwise_sq = 0.0;  // sup_x |Phi|^2 (same as sup_phi^2)
};

class RunContext {
 public:
  RunContext(const HiggsBundle& b, const TwistedMatrixField& h_background)
      : bundle_(&b), n_(b.geom().grid_n()), r_(b.rank()) {
    const TorusGeometry& g = b.geom();
    ax_ = g.dz_x(); ay_ = g.dz_y(); bx_ = g.dzb_x(); by_ = g.dzb_y();
    il_ = g.ilambda_factor();
    lambda_ = b.lambda();
    cellw_ = g.cell_weight();
    has_a_ = b.has_a();
    has_theta_ = b.has_theta();
    const size_t rr = size_t(r_) * r_;
    has_gamma_ = false;
    for (int d : b.degrees())
      if (d != b.degrees()[0]) has_gamma_ = true;
    // per-entry, per-row tables
    kratio_.assign(rr * n_, 1.0);
    gamma_.assign(rr * n_, cplx(0.0, 0.0));
    up_mul_.assign(rr * 2 * n_, cplx(1.0, 0.0));
    dn_mul_.assign(rr * 2 * n_, cplx(1.0, 0.0));
    for (int i = 0; i < r_; ++i)
      for (int j = 0; j < r_; ++j) {
        const size_t e = size_t(i) * r_ + j;
        const int m = b.degrees()[size_t(i)] - b.degrees()[size_t(j)];
        for (int y = 0; y < n_; ++y) {
          kratio_[e * n_ + y] = b.k0_weight(j, y) / b.k0_weight(i, y);
          gamma_[e * n_ + y] = b.gamma(i, y) - b.gamma(j, y);
        }
        for (int x = 0; x < n_; ++x) {
          for (int yb = 0; yb < 2; ++yb)
            up_mul_[e * 2 * n_ + size_t(yb) * n_ + x] = g.multiplier(m, g.z_at(x, yb));
          for (int yy = -2; yy <= -1; ++yy)
            dn_mul_[e * 2 * n_ + size_t(yy + 2) * n_ + x] =
                1.0 / g.multiplier(m, cplx(g.xcoord(x), 0.0) + g.tau() * (double(yy) / n_));
        }
      }
    fka_ = field_to_raw(b.f_ka());
    if (has_a_) {
      a_raw_ = field_to_raw(b.a());
      ma_raw_ = field_to_raw(b.a_adj_k0());
    }
    if (has_theta_) {
      t_raw_ = field_to_raw(b.theta());
      mk_raw_ = field_to_raw(b.theta_adj_k0());
    }
    hk_raw_ = field_to_raw(h_background);
    // h_K^{-1} cached for relative-state monitors
    hkinv_raw_.assign(hk_raw_.size(), cplx(0.0, 0.0));
    for (size_t p = 0; p < size_t(n_) * n_; ++p) {
      Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
          hk_raw_.data() + p * rr, r_, r_);
      Eigen::Map<Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mi(
          hkinv_raw_.data() + p * rr, r_, r_);
      mi = m.inverse();
    }
    set_det_reference();
  }

  const HiggsBundle& bundle() const { return *bundle_; }
  int n() const { return n_; }
  int rank() const { return r_; }
  size_t field_size() const { return size_t(n_) * n_ * r_ * r_; }
  double cell_weight() const { return cellw_; }
  const std::vector<cplx>& h_background_raw() const { return hk_raw_; }
  const std::vector<cplx>& h_background_inv_raw() const { return hkinv_raw_; }

  std::vector<cplx> field_to_raw(const TwistedMatrixField& f) const {
    return std::vector<cplx>(f.data(), f.data() + f.values());
  }
  void raw_to_field(const std::vector<cplx>& raw, TwistedMatrixField& f) const {
    std::copy(raw.begin(), raw.end(), f.data());
  }

  // ---- templated sweeps -----------------------------------------------

  // dst = cx Dx(src) + cy Dy(src), twisted seam handling from the tables.
  template <int R>
  void stencil_pass(const cplx* src, cplx cx, cplx cy, cplx* dst) const {
    constexpr int RR = R * R;
    const int n = n_;
    const double c0 = detail::kStencil[0], c1 = detail::kStencil[1];
    const double c3 = detail::kStencil[3], c4 = detail::kStencil[4];
    const double sn = double(n);
    for_rows(n, [&](int y) {
      const bool interior = (y >= 2 && y <= n - 3);
      const size_t row = size_t(y) * n;
      for (int x = 0; x < n; ++x) {
        const int xm2 = (x + n - 2) % n, xm1 = (x + n - 1) % n;
        const int xp1 = (x + 1) % n, xp2 = (x + 2) % n;
        const cplx* pm2 = src + (row + xm2) * RR;
        const cplx* pm1 = src + (row + xm1) * RR;
        const cplx* pp1 = src + (row + xp1) * RR;
        const cplx* pp2 = src + (row + xp2) * RR;
        cplx* out = dst + (row + x) * RR;
        if (interior) {
          const cplx* qm2 = src + (size_t(y - 2) * n + x) * RR;
          const cplx* qm1 = src + (size_t(y - 1) * n + x) * RR;
          const cplx* qp1 = src + (size_t(y + 1) * n + x) * RR;
          const cplx* qp2 = src + (size_t(y + 2) * n + x) * RR;
          for (int e = 0; e < RR; ++e) {
            const cplx dx = c0 * pm2[e] + c1 * pm1[e] + c3 * pp1[e] + c4 * pp2[e];
            const cplx dy = c0 * qm2[e] + c1 * qm1[e] + c3 * qp1[e] + c4 * qp2[e];
            out[e] = sn * (cx * dx + cy * dy);
          }
        } else {
          for (int e = 0; e < RR; ++e) {
            const cplx dx = c0 * pm2[e] + c1 * pm1[e] + c3 * pp1[e] + c4 * pp2[e];
            cplx dy(0.0, 0.0);
            const double cs[4] = {c0, c1, c3, c4};
            const int off[4] = {-2, -1, 1, 2};
            for (int t = 0; t < 4; ++t) {
              const int yy = y + off[t];
              cplx v;
              if (yy >= 0 && yy < n) {
                v = src[(size_t(yy) * n + x) * RR + e];
              } else if (yy >= n) {
                const int yb = yy - n;
                v = up_mul_[size_t(e) * 2 * n + size_t(yb) * n + x] *
                    src[(size_t(yb) * n + x) * RR + e];
              } else {
                v = dn_mul_[size_t(e) * 2 * n + size_t(yy + 2) * n + x] *
                    src[(size_t(yy + n) * n + x) * RR + e];
              }
              dy += cs[t] * v;
            }
            out[e] = sn * (cx * dx + cy * dy);
          }
        }
      }
    });
  }

  // Full Phi evaluation: fills phi (H-self-adjoint) and norms.
  template <int R>
  void phi_pass(const cplx* h, cplx* phi, StepNorms& norms,
                std::vector<cplx>& scratch_p, std::vector<cplx>& scratch_g,
                std::vector<cplx>& scratch_hi) const {
    constexpr int RR = R * R;
    const int n = n_;
    const size_t npts = size_t(n) * n;
    if (scratch_p.size() != npts * RR) scratch_p.assign(npts * RR, cplx(0, 0));
    if (scratch_g.size() != npts * RR) scratch_g.assign(npts * RR, cplx(0, 0));
    if (scratch_hi.size() != npts * RR) scratch_hi.assign(npts * RR, cplx(0, 0));
    cplx* P = scratch_p.data();
    cplx* G = scratch_g.data();
    cplx* HI = scratch_hi.data();

    stencil_pass<R>(h, ax_, ay_, P);  // raw partial of h

    // pointwise: P -> partial_{K,a} h, G = h^{-1} P
    std::vector<double> row_det(size_t(n), 0.0);
    std::vector<int> row_sing(size_t(n), -1);
    for_rows(n, [&](int y) {
      double worst = 0.0;
      for (int x = 0; x < n; ++x) {
        const size_t p = size_t(y) * n + x;
        const cplx* hp = h + p * RR;
        cplx* pp = P + p * RR;
        if (has_gamma_) {
          for (int e = 0; e < RR; ++e) {
            const cplx gd = gamma_[size_t(e) * n + y];
            pp[e] += gd * hp[e];
          }
        }
        if (has_a_) {
          const cplx* ma = ma_raw_.data() + p * RR;
          cplx br[RR];
          small::mul<R>(ma, hp, br);
          cplx br2[RR];
          small::mul<R>(hp, ma, br2);
          for (int e = 0; e < RR; ++e) pp[e] -= br[e] - br2[e];
        }
        cplx* hi = HI + p * RR;
        if (!small::inverse<R>(hp, hi)) { row_sing[size_t(y)] = x; continue; }
        small::mul<R>(hi, pp, G + p * RR);
        const cplx dd = small::det<R>(hp);
        worst = std::max(worst, std::abs(dd / hk_det_ref_(p) - 1.0));
      }
      row_det[size_t(y)] = worst;
    });
    for (int y = 0; y < n; ++y)
      if (row_sing[size_t(y)] >= 0) {
        std::ostringstream os;
        os << "flow: singular h at grid (" << row_sing[size_t(y)] << "," << y << ")";
        throw Error(os.str());
      }
    double det_drift = 0.0;
    for (double v : row_det) det_drift = std::max(det_drift, v);

    stencil_pass<R>(G, bx_, by_, P);  // reuse P as Dzb G

    std::vector<double> row_sup(size_t(n), 0.0), row_l2(size_t(n), 0.0), row_tr(size_t(n), 0.0);
    for_rows(n, [&](int y) {
      double sup = 0.0, l2 = 0.0, trm = 0.0;
      for (int x = 0; x < n; ++x) {
        const size_t p = size_t(y) * n + x;
        const cplx* hp = h + p * RR;
        const cplx* hi = HI + p * RR;
        const cplx* q = P + p * RR;
        cplx F[RR];
        const cplx* fka = fka_.data() + p * RR;
        for (int e = 0; e < RR; ++e) F[e] = fka[e] - q[e];
        if (has_a_) {
          const cplx* ga = G + p * RR;
          const cplx* av = a_raw_.data() + p * RR;
          cplx t1[RR], t2[RR];
          small::mul<R>(ga, av, t1);
          small::mul<R>(av, ga, t2);
          for (int e = 0; e < RR; ++e) F[e] += t1[e] - t2[e];
        }
        cplx raw[RR];
        if (has_theta_) {
          const cplx* tv = t_raw_.data() + p * RR;
          const cplx* mk = mk_raw_.data() + p * RR;
          cplx mh[RR], t1[RR], t2[RR];
          small::mul<R>(mk, hp, t1);
          small::mul<R>(hi, t1, mh);
          small::mul<R>(tv, mh, t1);
          small::mul<R>(mh, tv, t2);
          for (int e = 0; e < RR; ++e) F[e] += t1[e] - t2[e];
        }
        for (int e = 0; e < RR; ++e) raw[e] = il_ * F[e];
        for (int i = 0; i < R; ++i) raw[i * R + i] -= lambda_;
        // Phi = (raw + h^{-1} K0^{-1} raw^dag K0 h)/2
        cplx adjw[RR];
        for (int i = 0; i < R; ++i)
          for (int j = 0; j < R; ++j)
            adjw[i * R + j] =
                std::conj(raw[j * R + i]) * kratio_[(size_t(i) * R + j) * n_ + y];
        cplx t1[RR], t2[RR];
        small::mul<R>(hi, adjw, t1);
        small::mul<R>(t1, hp, t2);
        cplx* out = phi + p * RR;
        for (int e = 0; e < RR; ++e) out[e] = 0.5 * (raw[e] + t2[e]);
        const double tsq = std::max(small::trace_sq<R>(out).real(), 0.0);
        sup = std::max(sup, tsq);
        l2 += tsq;
        trm = std::max(trm, std::abs(small::trace<R>(out)));
      }
      row_sup[size_t(y)] = sup;
      row_l2[size_t(y)] = l2;
      row_tr[size_t(y)] = trm;
    });
    norms = StepNorms{};
    double l2 = 0.0;
    for (int y = 0; y < n; ++y) {
      norms.sup_phi_pointwise_sq = std::max(norms.sup_phi_pointwise_sq, row_sup[size_t(y)]);
      l2 += row_l2[size_t(y)];
      norms.sup_tr_phi = std::max(norms.sup_tr_phi, row_tr[size_t(y)]);
    }
    norms.sup_phi = std::sqrt(norms.sup_phi_pointwise_sq);
    norms.phi_l2_sq = l2 * cellw_;
    norms.sup_det_drift = det_drift;
  }

  // h_out = K0-symmetrize( h_in * exp(-2 dt phi) )
  template <int R>
  void update_pass(const cplx* h_in, const cplx* phi, double dt, cplx* h_out) const {
    constexpr int RR = R * R;
    const int n = n_;
    for_rows(n, [&](int y) {
      for (int x = 0; x < n; ++x) {
        const size_t p = size_t(y) * n + x;
        cplx E[RR], t1[RR];
        small::exp_real_spectrum<R>(phi + p * RR, -2.0 * dt, E);
        small::mul<R>(h_in + p * RR, E, t1);
        cplx* out = h_out + p * RR;
        for (int i = 0; i < R; ++i)
          for (int j = 0; j < R; ++j) {
            const cplx adj =
                std::conj(t1[j * R + i]) * kratio_[(size_t(i) * R + j) * n_ + y];
            out[i * R + j] = 0.5 * (t1[i * R + j] + adj);
          }
      }
    });
  }

  cplx ax_, ay_, bx_, by_;
  double il_ = 0.0, lambda_ = 0.0, cellw_ = 0.0;
  bool has_a_ = false, has_theta_ = false, has_gamma_ = false;
  std::vector<double> kratio_;
  std::vector<cplx> gamma_, up_mul_, dn_mul_;
  std::vector<cplx> fka_, a_raw_, ma_raw_, t_raw_, mk_raw_, hk_raw_, hkinv_raw_;
  std::vector<double> det_ref_;

 private:
  // det of the background at each point; the per-step drift monitor tracks
  // |det h_abs / det h_K - 1| = |det h_rel - 1|.
  void set_det_reference() {
    const size_t npts = size_t(n_) * n_;
    det_ref_.resize(npts);
    const size_t rr = size_t(r_) * r_;
    for (size_t p = 0; p < npts; ++p) {
      Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
          hk_raw_.data() + p * rr, r_, r_);
      det_ref_[p] = m.determinant().real();
    }
  }
  double hk_det_ref_(size_t p) const { return det_ref_.empty() ? 1.0 : det_ref_[p]; }
  const HiggsBundle* bundle_;
  int n_, r_;
};

// Rank dispatch helper.
template <class F>
auto dispatch_rank(int r, F&& f) {
  switch (r) {
    case 1: return f(std::integral_constant<int, 1>{});
    case 2: return f(std::integral_constant<int, 2>{});
    case 3: return f(std::integral_constant<int, 3>{});
    case 4: return f(std::integral_constant<int, 4>{});
    case 5: return f(std::integral_constant<int, 5>{});
    case 6: return f(std::integral_constant<int, 6>{});
    case 7: return f(std::integral_constant<int, 7>{});
    case 8: return f(std::integral_constant<int, 8>{});
    default: throw Error("unsupported rank " + std::to_string(r));
  }
}

}  // namespace heflow
