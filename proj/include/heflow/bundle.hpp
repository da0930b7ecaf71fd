#pragma once

// Higgs bundle data over the flat torus: direct sums of reference line bundles
// L_{d_i} with constant-curvature weights, a dbar-deformation a in (0,1), a
// Higgs field theta in (1,0), and the Einstein constant lambda. The background
// Chern connection and curvature of the deformed pair (dbar + a, K0) are
// computed once per bundle.

#include <numeric>
#include <utility>

#include "heflow/calculus.hpp"

namespace heflow {

// Entire theta-like section of the degree-m line bundle (m > 0), q-th basis
// element: sum over the residue class q mod m of exp(pi i tau n^2/m + 2 pi i n z).
inline cplx theta_section_value(const TorusGeometry& geom, int m, int q, cplx z) {
  const cplx ipi(0.0, M_PI);
  cplx s(0.0, 0.0);
  for (int j = -12; j <= 12; ++j) {
    const double nn = double(j * m + q);
    s += std::exp(ipi * (geom.tau() * nn * nn / double(m) + 2.0 * nn * z));
  }
  return s;
}

// Smooth section of L_m for any m != 0: theta-like for m > 0, metric-weighted
// conjugate for m < 0 (k_{|m|} conj(s) is a section of L_{-|m|}).
inline cplx twisted_profile_value(const TorusGeometry& geom, int m, int q, int ix, int iy) {
  const cplx z = geom.z_at(ix, iy);
  if (m > 0) return theta_section_value(geom, m, q, z);
  if (m < 0)
    return geom.metric_weight(-m, iy) * std::conj(theta_section_value(geom, -m, q, z));
  return cplx(1.0, 0.0);
}

class HiggsBundle {
 public:
  HiggsBundle(const TorusGeometry& geom, std::vector<int> degrees,
              TwistedMatrixField a, TwistedMatrixField theta)
      : geom_(&geom), degrees_(std::move(degrees)),
        a_(std::move(a)), theta_(std::move(theta)) {
    rank_ = int(degrees_.size());
    if (rank_ < 1 || rank_ > kMaxRank) throw Error("HiggsBundle: rank out of range");
    twist_.assign(size_t(rank_) * rank_, 0);
    for (int i = 0; i < rank_; ++i)
      for (int j = 0; j < rank_; ++j)
        twist_[size_t(i) * rank_ + j] = degrees_[size_t(i)] - degrees_[size_t(j)];
    if (a_.form() != FormType::F01) throw Error("HiggsBundle: a must be a (0,1) field");
    if (theta_.form() != FormType::F10) throw Error("HiggsBundle: theta must be a (1,0) field");
    if (a_.twist() != twist_ || theta_.twist() != twist_)
      throw Error("HiggsBundle: a/theta twist matrices must match the degree vector");
    const int deg_sum = std::accumulate(degrees_.begin(), degrees_.end(), 0);
    lambda_ = 2.0 * M_PI * double(deg_sum) / (double(rank_) * geom.volume());
    has_a_ = a_.max_abs() > 0.0;
    has_theta_ = theta_.max_abs() > 0.0;
    a_adj_ = adjoint_k0(a_, FormType::F10);
    theta_adj_ = adjoint_k0(theta_, FormType::F01);
    build_background_curvature();
  }

  static HiggsBundle trivial(const TorusGeometry& geom, std::vector<int> degrees) {
    const int r = int(degrees.size());
    std::vector<int> tw(size_t(r) * r, 0);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) tw[size_t(i) * r + j] = degrees[size_t(i)] - degrees[size_t(j)];
    TwistedMatrixField a(geom, r, FormType::F01, tw);
    TwistedMatrixField th(geom, r, FormType::F10, tw);
    return HiggsBundle(geom, std::move(degrees), std::move(a), std::move(th));
  }

  const TorusGeometry& geom() const { return *geom_; }
  int rank() const { return rank_; }
  const std::vector<int>& degrees() const { return degrees_; }
  const std::vector<int>& twist() const { return twist_; }
  int degree_sum() const { return std::accumulate(degrees_.begin(), degrees_.end(), 0); }
  double slope() const { return double(degree_sum()) / rank_; }
  double lambda() const { return lambda_; }
  const TwistedMatrixField& a() const { return a_; }
  const TwistedMatrixField& theta() const { return theta_; }
  const TwistedMatrixField& a_adj_k0() const { return a_adj_; }      // a^{*K0}, (1,0)
  const TwistedMatrixField& theta_adj_k0() const { return theta_adj_; }  // theta^{*K0}, (0,1)
  bool has_a() const { return has_a_; }
  bool has_theta() const { return has_theta_; }

  // Background curvature of the deformed Chern connection (dbar + a, K0):
  // raw (1,1) coefficient and its i Lambda contraction.
  const TwistedMatrixField& f_ka() const { return f_ka_; }
  const TwistedMatrixField& ilambda_fka() const { return ilf_ka_; }

  double k0_weight(int i, int iy) const { return geom_->metric_weight(degrees_[size_t(i)], iy); }
  cplx gamma(int i, int iy) const { return geom_->connection_coeff(degrees_[size_t(i)], iy); }

  TwistedMatrixField zero_field(FormType form) const {
    return TwistedMatrixField(*geom_, rank_, form, twist_);
  }

  // Pointwise adjoint with respect to the reference weights, flipping the form
  // index (1,0) <-> (0,1): f*_{ij} = conj(f_{ji}) k_j / k_i.
  TwistedMatrixField adjoint_k0(const TwistedMatrixField& f, FormType out_form) const {
    TwistedMatrixField out(*geom_, rank_, out_form, f.twist());
    const int n = geom_->grid_n();
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x)
        for (int i = 0; i < rank_; ++i)
          for (int j = 0; j < rank_; ++j)
            out(x, y, i, j) =
                std::conj(f(x, y, j, i)) * (k0_weight(j, y) / k0_weight(i, y));
    }
    return out;
  }

  // Background Chern (1,0)-derivative on End-valued (0,0) fields:
  // partial f + [Gamma, f], Gamma = diag(2 pi i d_i y).
  TwistedMatrixField partial_K(const TwistedMatrixField& f) const {
    TwistedMatrixField out = partial(f);
    add_gamma_bracket(out, f);
    return out;
  }

  // Deformed background (1,0)-derivative: partial_K f - [a^{*K0}, f].
  TwistedMatrixField partial_Ka(const TwistedMatrixField& f) const {
    TwistedMatrixField out = partial_K(f);
    if (has_a_) {
      const int n = geom_->grid_n();
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          out.at(x, y) -= a_adj_.at(x, y) * f.at(x, y) - f.at(x, y) * a_adj_.at(x, y);
    }
    return out;
  }

  // Deformed dbar on (0,0) fields: dbar f + [a, f].
  TwistedMatrixField dbar_a(const TwistedMatrixField& f) const {
    TwistedMatrixField out = dbar(f);
    if (has_a_) {
      const int n = geom_->grid_n();
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          out.at(x, y) += a_.at(x, y) * f.at(x, y) - f.at(x, y) * a_.at(x, y);
    }
    return out;
  }

  // Deformed dbar on (1,0) fields, (1,1) coefficient: -Dzb g + (g A - A g).
  TwistedMatrixField dbar_a_of_10(const TwistedMatrixField& gf) const {
    TwistedMatrixField out = dbar_of_10(gf);
    if (has_a_) {
      const int n = geom_->grid_n();
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          out.at(x, y) += gf.at(x, y) * a_.at(x, y) - a_.at(x, y) * gf.at(x, y);
    }
    return out;
  }

  // Residual of the Higgs holomorphicity condition dbar_a theta = 0.
  double theta_holomorphy_residual() const {
    if (!has_theta_) return 0.0;
    TwistedMatrixField res = dbar_a_of_10(theta_);
    return res.max_abs();
  }

 private:
  void add_gamma_bracket(TwistedMatrixField& out, const TwistedMatrixField& f) const {
    const int n = geom_->grid_n();
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x)
        for (int i = 0; i < rank_; ++i)
          for (int j = 0; j < rank_; ++j) {
            const cplx gd = gamma(i, y) - gamma(j, y);
            if (gd != cplx(0.0, 0.0)) out(x, y, i, j) += gd * f(x, y, i, j);
          }
    }
  }

  void build_background_curvature() {
    // F_{K,a} (1,1)-coefficient:
    //   (pi/Im tau) diag(d) + Dz A + [Gamma, A] + Dzb M + [A, M],  M = a^{*K0}.
    f_ka_ = zero_field(FormType::F11);
    const int n = geom_->grid_n();
    const double fk = M_PI / geom_->im_tau();
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        for (int i = 0; i < rank_; ++i) f_ka_(x, y, i, i) = fk * double(degrees_[size_t(i)]);
    if (has_a_) {
      TwistedMatrixField da =
          derivative_combine(a_, geom_->dz_x(), geom_->dz_y(), FormType::F11);
      add_gamma_bracket(da, a_);
      TwistedMatrixField dm =
          derivative_combine(a_adj_, geom_->dzb_x(), geom_->dzb_y(), FormType::F11);
      f_ka_ += da;
      f_ka_ += dm;
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          f_ka_.at(x, y) += a_.at(x, y) * a_adj_.at(x, y) - a_adj_.at(x, y) * a_.at(x, y);
    }
    ilf_ka_ = lambda_contract(f_ka_);
    ilf_ka_ *= cplx(0.0, 1.0);
  }

  const TorusGeometry* geom_;
  std::vector<int> degrees_;
  int rank_ = 0;
  std::vector<int> twist_;
  TwistedMatrixField a_, theta_, a_adj_, theta_adj_;
  TwistedMatrixField f_ka_, ilf_ka_;
  double lambda_ = 0.0;
  bool has_a_ = false, has_theta_ = false;
};

// ---------------------------------------------------------------------------
// Builders: tensor product and Whitney sum (Kronecker / block-diagonal rules).
// ---------------------------------------------------------------------------

inline HiggsBundle build_tensor(const HiggsBundle& b1, const HiggsBundle& b2) {
  if (!(b1.geom() == b2.geom())) throw Error("build_tensor: geometry mismatch");
  const int r1 = b1.rank(), r2 = b2.rank();
  if (r1 * r2 > kMaxRank) throw Error("build_tensor: product rank exceeds limit");
  std::vector<int> deg(size_t(r1) * r2);
  for (int i = 0; i < r1; ++i)
    for (int j = 0; j < r2; ++j)
      deg[size_t(i) * r2 + j] = b1.degrees()[size_t(i)] + b2.degrees()[size_t(j)];
  std::vector<int> tw(deg.size() * deg.size());
  for (size_t p = 0; p < deg.size(); ++p)
    for (size_t q = 0; q < deg.size(); ++q) tw[p * deg.size() + q] = deg[p] - deg[q];
  const TorusGeometry& geom = b1.geom();
  const int n = geom.grid_n();
  TwistedMatrixField a(geom, r1 * r2, FormType::F01, tw);
  TwistedMatrixField th(geom, r1 * r2, FormType::F10, tw);
  auto kron_accum = [&](TwistedMatrixField& out, const TwistedMatrixField& f1, bool left) {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        for (int i1 = 0; i1 < r1; ++i1)
          for (int j1 = 0; j1 < r2; ++j1)
            for (int i2 = 0; i2 < r1; ++i2)
              for (int j2 = 0; j2 < r2; ++j2) {
                cplx v(0.0, 0.0);
                if (left && j1 == j2) v = f1(x, y, i1, i2);          // f (x) Id
                if (!left && i1 == i2) v = f1(x, y, j1, j2);         // Id (x) f
                if (v != cplx(0.0, 0.0)) out(x, y, i1 * r2 + j1, i2 * r2 + j2) += v;
              }
  };
  kron_accum(a, b1.a(), true);
  kron_accum(a, b2.a(), false);
  kron_accum(th, b1.theta(), true);
  kron_accum(th, b2.theta(), false);
  return HiggsBundle(geom, std::move(deg), std::move(a), std::move(th));
}

inline HiggsBundle build_whitney(const HiggsBundle& b1, const HiggsBundle& b2) {
  if (!(b1.geom() == b2.geom())) throw Error("build_whitney: geometry mismatch");
  const int r1 = b1.rank(), r2 = b2.rank();
  if (r1 + r2 > kMaxRank) throw Error("build_whitney: sum rank exceeds limit");
  std::vector<int> deg(b1.degrees());
  deg.insert(deg.end(), b2.degrees().begin(), b2.degrees().end());
  std::vector<int> tw(deg.size() * deg.size());
  for (size_t p = 0; p < deg.size(); ++p)
    for (size_t q = 0; q < deg.size(); ++q) tw[p * deg.size() + q] = deg[p] - deg[q];
  const TorusGeometry& geom = b1.geom();
  const int n = geom.grid_n();
  TwistedMatrixField a(geom, r1 + r2, FormType::F01, tw);
  TwistedMatrixField th(geom, r1 + r2, FormType::F10, tw);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      for (int i = 0; i < r1; ++i)
        for (int j = 0; j < r1; ++j) {
          a(x, y, i, j) = b1.a()(x, y, i, j);
          th(x, y, i, j) = b1.theta()(x, y, i, j);
        }
      for (int i = 0; i < r2; ++i)
        for (int j = 0; j < r2; ++j) {
          a(x, y, r1 + i, r1 + j) = b2.a()(x, y, i, j);
          th(x, y, r1 + i, r1 + j) = b2.theta()(x, y, i, j);
        }
    }
  return HiggsBundle(geom, std::move(deg), std::move(a), std::move(th));
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct BundlePresetParams {
  double theta_scale = 1.0;
  double a_scale = 1.0;
};

inline HiggsBundle make_preset(const TorusGeometry& geom, const std::string& name,
                               const BundlePresetParams& p = {}) {
  if (name == "flat_rank2") return HiggsBundle::trivial(geom, {0, 0});
  if (name == "extension_O_O") {
    std::vector<int> deg = {0, 0};
    TwistedMatrixField a(geom, 2, FormType::F01, {0, 0, 0, 0});
    TwistedMatrixField th(geom, 2, FormType::F10, {0, 0, 0, 0});
    Mat na = Mat::Zero(2, 2);
    na(0, 1) = p.a_scale;
    a.set_constant(na);
    return HiggsBundle(geom, std::move(deg), std::move(a), std::move(th));
  }
  if (name == "nilpotent_higgs") {
    std::vector<int> deg = {0, 0};
    TwistedMatrixField a(geom, 2, FormType::F01, {0, 0, 0, 0});
    TwistedMatrixField th(geom, 2, FormType::F10, {0, 0, 0, 0});
    Mat nt = Mat::Zero(2, 2);
    nt(0, 1) = p.theta_scale;
    th.set_constant(nt);
    return HiggsBundle(geom, std::move(deg), std::move(a), std::move(th));
  }
  if (name == "split_unstable") return HiggsBundle::trivial(geom, {1, -1});
  throw Error("unknown bundle preset '" + name + "'");
}

}  // namespace heflow
