#pragma once

// Grid of r x r complex matrices with per-entry holomorphic-multiplier
// boundary twists. Entry (i,j) is a section of Hom(L_{d_j}, L_{d_i}); its
// twist m(i,j) = d_i - d_j governs the wrap in the tau-direction. The
// 1-direction is always plain periodic.

#include <vector>
#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "heflow/geometry.hpp"

namespace heflow {

enum class FormType : int { F00 = 0, F10 = 1, F01 = 2, F11 = 3 };

inline const char* form_name(FormType f) {
  switch (f) {
    case FormType::F00: return "(0,0)";
    case FormType::F10: return "(1,0)";
    case FormType::F01: return "(0,1)";
    case FormType::F11: return "(1,1)";
  }
  return "?";
}

using Mat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor, 8, 8>;
using MatMap = Eigen::Map<Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline constexpr int kMaxRank = 8;

class TwistedMatrixField {
 public:
  TwistedMatrixField() = default;

  TwistedMatrixField(const TorusGeometry& geom, int rank, FormType form,
                     std::vector<int> twist)
      : geom_(&geom), r_(rank), form_(form), twist_(std::move(twist)),
        data_(size_t(geom.grid_n()) * geom.grid_n() * rank * rank, cplx(0.0, 0.0)) {
    if (r_ < 1 || r_ > kMaxRank)
      throw Error("TwistedMatrixField: rank must be in [1," + std::to_string(kMaxRank) + "]");
    if (twist_.empty()) twist_.assign(size_t(r_) * r_, 0);
    if (twist_.size() != size_t(r_) * r_)
      throw Error("TwistedMatrixField: twist matrix size mismatch");
    for (int i = 0; i < r_; ++i) {
      if (twist_[size_t(i) * r_ + i] != 0)
        throw Error("TwistedMatrixField: twist diagonal must be zero");
      for (int j = 0; j < r_; ++j)
        if (twist_[size_t(i) * r_ + j] != -twist_[size_t(j) * r_ + i])
          throw Error("TwistedMatrixField: twist matrix must be antisymmetric");
    }
  }

  static TwistedMatrixField scalar(const TorusGeometry& geom, FormType form = FormType::F00) {
    return TwistedMatrixField(geom, 1, form, {0});
  }

  const TorusGeometry& geom() const { return *geom_; }
  int rank() const { return r_; }
  int grid_n() const { return geom_->grid_n(); }
  FormType form() const { return form_; }
  const std::vector<int>& twist() const { return twist_; }
  int twist(int i, int j) const { return twist_[size_t(i) * r_ + j]; }
  bool untwisted() const {
    return std::all_of(twist_.begin(), twist_.end(), [](int m) { return m == 0; });
  }

  cplx* data() { return data_.data(); }
  const cplx* data() const { return data_.data(); }
  size_t values() const { return data_.size(); }

  size_t point_offset(int ix, int iy) const {
    return (size_t(iy) * geom_->grid_n() + ix) * r_ * r_;
  }
  MatMap at(int ix, int iy) { return MatMap(data_.data() + point_offset(ix, iy), r_, r_); }
  ConstMatMap at(int ix, int iy) const {
    return ConstMatMap(data_.data() + point_offset(ix, iy), r_, r_);
  }
  cplx& operator()(int ix, int iy, int i, int j) {
    return data_[point_offset(ix, iy) + size_t(i) * r_ + j];
  }
  const cplx& operator()(int ix, int iy, int i, int j) const {
    return data_[point_offset(ix, iy) + size_t(i) * r_ + j];
  }

  // Entry value at lattice (ix, iy) with iy allowed outside [0, n): the wrap
  // across the tau-seam multiplies by mu_m (or its inverse). ix wraps plainly.
  cplx value_wrapped(int ix, int iy, int i, int j) const {
    const int n = geom_->grid_n();
    ix = ((ix % n) + n) % n;
    const int m = twist(i, j);
    if (iy >= 0 && iy < n) return (*this)(ix, iy, i, j);
    if (iy >= n) {
      const int base = iy - n;  // assume single wrap
      cplx mu = geom_->multiplier(m, geom_->z_at(ix, base));
      return mu * (*this)(ix, base, i, j);
    }
    const int base = iy + n;
    cplx mu = geom_->multiplier(m, cplx(geom_->xcoord(ix), 0.0) + geom_->tau() * (double(iy) / n));
    return (*this)(ix, base, i, j) / mu;
  }

  void set_constant(const Mat& m) {
    const int n = geom_->grid_n();
    if (!untwisted()) {
      for (int i = 0; i < r_; ++i)
        for (int j = 0; j < r_; ++j)
          if (twist(i, j) != 0 && m(i, j) != cplx(0.0, 0.0))
            throw Error("set_constant: nonzero constant entry in twisted slot (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
    }
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) at(x, y) = m;
  }

  void set_identity() {
    Mat id = Mat::Identity(r_, r_);
    set_constant(id);
  }

  void check_finite(const char* what) const {
    const int n = geom_->grid_n();
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        for (int i = 0; i < r_; ++i)
          for (int j = 0; j < r_; ++j) {
            const cplx v = (*this)(x, y, i, j);
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
              std::ostringstream os;
              os << what << ": non-finite value at grid (" << x << "," << y
                 << ") entry (" << i << "," << j << ")";
              throw Error(os.str());
            }
          }
  }

  double max_abs() const {
    double m = 0.0;
    for (const cplx& v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  TwistedMatrixField& operator+=(const TwistedMatrixField& o) {
    require_compatible(o);
    for (size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  TwistedMatrixField& operator-=(const TwistedMatrixField& o) {
    require_compatible(o);
    for (size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  TwistedMatrixField& operator*=(cplx s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend TwistedMatrixField operator+(TwistedMatrixField a, const TwistedMatrixField& b) {
    a += b;
    return a;
  }
  friend TwistedMatrixField operator-(TwistedMatrixField a, const TwistedMatrixField& b) {
    a -= b;
    return a;
  }
  friend TwistedMatrixField operator*(cplx s, TwistedMatrixField a) {
    a *= s;
    return a;
  }

  void require_compatible(const TwistedMatrixField& o) const {
    if (r_ != o.r_ || geom_->grid_n() != o.geom_->grid_n())
      throw Error("field shape mismatch");
  }

 private:
  const TorusGeometry* geom_ = nullptr;
  int r_ = 0;
  FormType form_ = FormType::F00;
  std::vector<int> twist_;
  std::vector<cplx> data_;
};

// Pointwise product. Twists add entrywise; for End(E)-valued fields built from
// one degree vector the twist matrix is shared and closed under products.
inline TwistedMatrixField pointwise_mul(const TwistedMatrixField& a,
                                        const TwistedMatrixField& b, FormType out_form) {
  a.require_compatible(b);
  TwistedMatrixField out(a.geom(), a.rank(), out_form, a.twist());
  const int n = a.grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) out.at(x, y) = a.at(x, y) * b.at(x, y);
  return out;
}

inline TwistedMatrixField commutator(const TwistedMatrixField& a,
                                     const TwistedMatrixField& b, FormType out_form) {
  a.require_compatible(b);
  TwistedMatrixField out(a.geom(), a.rank(), out_form, a.twist());
  const int n = a.grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      out.at(x, y) = a.at(x, y) * b.at(x, y) - b.at(x, y) * a.at(x, y);
  return out;
}

// Trace field (untwisted scalar of the same form degree).
inline TwistedMatrixField trace_field(const TwistedMatrixField& f) {
  TwistedMatrixField out = TwistedMatrixField::scalar(f.geom(), f.form());
  const int n = f.grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) out(x, y, 0, 0) = f.at(x, y).trace();
  return out;
}

}  // namespace heflow
