#pragma once

// Donaldson heat flow driver: conformal normalization of the initial metric,
// multiplicative exponential stepping (positivity and K-self-adjointness are
// preserved by construction), adaptive halving on monotonicity violations, and
// the monitor suite from Lemma 4 and the energy estimates.

#include <functional>
#include <optional>

#include "heflow/donaldson.hpp"
#include "heflow/flow_kernel.hpp"

namespace heflow {

enum class Scheme { exp_euler, exp_midpoint };

inline const char* scheme_name(Scheme s) {
  return s == Scheme::exp_euler ? "exp_euler" : "exp_midpoint";
}

struct FlowConfig {
  double dt = 1e-3;
  double t_max = 1.0;
  Scheme scheme = Scheme::exp_euler;
  int monitor_every = 100;
  double monotonicity_slack = 1e-8;
  double det_drift_tol = 1e-6;
  double trace_drift_tol = 1e-6;
  double checkpoint_every_t = 0.0;  // 0: final checkpoint only
  double s_l1_floor = 5.0;          // scaled by V; below it the log-regime is "stable"
  bool quiet = true;
};

struct MonitorRecord {
  long step = 0;
  double t = 0.0, dt = 0.0;
  double sup_phi = 0.0;       // sup |Phi|_H
  double phi_l2 = 0.0;        // ||Phi||_{L^2}
  double mu = 0.0;            // Donaldson functional mu(K, H(t))
  double s_l1 = 0.0, s_linf = 0.0;
  double tr_s_int = 0.0;      // int tr S
  double sup_tr_phi = 0.0;
  double det_drift = 0.0;     // sup |det h_rel - 1|
  double min_eig_h = 0.0;     // min eigenvalue of h_rel over the grid
  double eq35_slack = 0.0;    // mu + C ||S||_inf
  double eq36_ratio = 0.0;    // ||S||_inf / (1 + ||S||_L1)
  double eq38_slack = 0.0;    // sup|Phi| - sup_x d/dt log(tr h + tr h^{-1})
  double eq312_slack = 0.0;   // -sqrt(V) mu - (r^{-1/2}||S||_L1 - V log 2r)||Phi||_L2
  double lemma4_r1 = 0.0;     // relative
  double lemma4_r2 = 0.0;     // relative
  double energy_residual = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> flags;
};

struct FlowTrace {
  std::vector<MonitorRecord> records;
  std::vector<std::string> warnings;
  long total_steps = 0;
  long total_halvings = 0;
  long rejected_steps = 0;
  double max_sup_phi_increase = 0.0;  // max over accepted steps of (next-prev)/(1+prev)
  double max_l2_increase = 0.0;
  double max_sup_tr_phi = 0.0;        // over every step
  double max_det_drift = 0.0;         // over every step
  int flagged_records = 0;

  // centered-difference energy residual |d mu/dt + 2 ||Phi||^2| / ||Phi||^2
  void fill_energy_residuals() {
    for (size_t i = 1; i + 1 < records.size(); ++i) {
      const double span = records[i + 1].t - records[i - 1].t;
      if (span <= 0.0) continue;
      const double dmu = (records[i + 1].mu - records[i - 1].mu) / span;
      const double p2 = records[i].phi_l2 * records[i].phi_l2;
      records[i].energy_residual = std::abs(dmu + 2.0 * p2) / std::max(p2, 1e-30);
    }
  }
};

// ---------------------------------------------------------------------------
// normalize_initial: conformal change K = e^f H0 killing tr Phi.
// ---------------------------------------------------------------------------

struct NormalizeResult {
  TwistedMatrixField h_K;          // background state of the normalized metric
  TwistedMatrixField f;            // accumulated conformal factor
  int iterations = 0;
  int sign = +1;
  double residual = 0.0;           // final sup |tr Phi(K)|
};

inline NormalizeResult normalize_initial(const HiggsBundle& b, const MetricState& h0,
                                         double rel_tol = 1e-8, int max_iter = 8) {
  const int n = b.geom().grid_n();
  const int r = b.rank();
  TwistedMatrixField h = h0.h;
  TwistedMatrixField ftot = TwistedMatrixField::scalar(b.geom());
  PhiResult pr = phi_full(b, {h, h0.t});
  const double phi0_sup = max_rows(n, [&](int y) {
    double m = 0.0;
    for (int x = 0; x < n; ++x) m = std::max(m, Mat(pr.phi.at(x, y)).cwiseAbs().maxCoeff());
    return m;
  });
  const double target = rel_tol * std::max(phi0_sup, 1e-300);
  auto tr_field = [&](const TwistedMatrixField& ph) {
    TwistedMatrixField t = TwistedMatrixField::scalar(b.geom());
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) t(x, y, 0, 0) = ph.at(x, y).trace().real();
    return t;
  };
  TwistedMatrixField trphi = tr_field(pr.phi);
  double resid = trphi.max_abs();
  int sign = +1;
  bool sign_fixed = false;
  int it = 0;
  while (resid > target && it < max_iter) {
    TwistedMatrixField g = trphi;
    g *= cplx(2.0 / double(r) * double(sign), 0.0);
    TwistedMatrixField f = poisson_solve(g, 1e-6);
    TwistedMatrixField htry = h;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double ef = std::exp(f(x, y, 0, 0).real());
        htry.at(x, y) *= ef;
      }
    TwistedMatrixField ph2 = phi(b, {htry, h0.t});
    TwistedMatrixField tr2 = tr_field(ph2);
    const double resid2 = tr2.max_abs();
    if (resid2 < 0.5 * resid) {
      h = htry;
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) ftot(x, y, 0, 0) += f(x, y, 0, 0).real();
      trphi = tr2;
      resid = resid2;
      sign_fixed = true;
      ++it;
    } else if (!sign_fixed) {
      sign = -sign;
      sign_fixed = true;  // one flip allowed
    } else {
      throw Error(
          "normalize_initial: conformal correction fails to reduce tr Phi "
          "(residual " + std::to_string(resid2) + " vs " + std::to_string(resid) +
          ") — sign convention bug");
    }
  }
  if (resid > target)
    throw Error("normalize_initial: did not reach tolerance after " +
                std::to_string(it) + " iterations (residual " + std::to_string(resid) + ")");
  return NormalizeResult{std::move(h), std::move(ftot), it, sign, resid};
}

// ---------------------------------------------------------------------------
// FlowRunner
// ---------------------------------------------------------------------------

struct Lemma4Residuals {
  double r1 = 0.0, r2 = 0.0;          // relative to field scales
  double r1_raw = 0.0, r2_raw = 0.0;
};

class FlowRunner {
 public:
  using CheckpointFn =
      std::function<void(double t, const TwistedMatrixField& h_abs, const FlowTrace&)>;

  // h_background: the normalized metric K as a state against K0 (h_K).
  // initial h_abs defaults to h_K itself, i.e. H(0) = K.
  FlowRunner(const HiggsBundle& b, TwistedMatrixField h_background)
      : b_(&b), ctx_(b, h_background), hK_(std::move(h_background)) {
    const size_t fs = ctx_.field_size();
    h_cur_.assign(fs, cplx(0, 0));
    h_next_.assign(fs, cplx(0, 0));
    phi_cur_.assign(fs, cplx(0, 0));
    phi_next_.assign(fs, cplx(0, 0));
    std::copy(hK_.data(), hK_.data() + fs, h_cur_.begin());
    ilf_theta_ = ilambda_f_theta(*b_, hK_);
    // C in mu >= -C ||S||_inf: the integrated fiber norm of i Lambda F_{K,theta}
    TwistedMatrixField nsq = h_norm_sq_field(*b_, hK_, ilf_theta_);
    TwistedMatrixField nrm = TwistedMatrixField::scalar(b.geom());
    const int n = b.geom().grid_n();
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        nrm(x, y, 0, 0) = std::sqrt(std::max(nsq(x, y, 0, 0).real(), 0.0));
    c35_ = integrate(nrm).real();
    eval_phi(h_cur_, phi_cur_, norms_cur_);
  }

  const HiggsBundle& bundle() const { return *b_; }
  const TwistedMatrixField& background() const { return hK_; }
  double time() const { return t_; }
  const StepNorms& norms() const { return norms_cur_; }

  TwistedMatrixField state_field() const {
    TwistedMatrixField f = b_->zero_field(FormType::F00);
    ctx_.raw_to_field(h_cur_, f);
    return f;
  }
  MetricState state() const { return MetricState{state_field(), t_}; }

  void set_state(const TwistedMatrixField& h, double t) {
    std::copy(h.data(), h.data() + ctx_.field_size(), h_cur_.begin());
    t_ = t;
    eval_phi(h_cur_, phi_cur_, norms_cur_);
  }

  // One raw step of the configured scheme; no adaptivity, no monitors.
  void step_once(double dt, Scheme scheme = Scheme::exp_euler) {
    take_step(dt, scheme);
    std::swap(h_cur_, h_next_);
    std::swap(phi_cur_, phi_next_);
    norms_cur_ = norms_next_;
    t_ += dt;
  }

  // Phi of the current state as a field (H-self-adjoint by construction).
  TwistedMatrixField phi_field() const {
    TwistedMatrixField f = b_->zero_field(FormType::F00);
    ctx_.raw_to_field(phi_cur_, f);
    return f;
  }

  FlowTrace run(const FlowConfig& cfg, const CheckpointFn& checkpoint = nullptr) {
    FlowTrace trace;
    const double stab = 0.2 * b_->geom().volume() /
                        (double(ctx_.n()) * double(ctx_.n()));
    if (cfg.dt > stab) {
      trace.warnings.push_back(
          "dt " + std::to_string(cfg.dt) + " exceeds the stability guideline " +
          std::to_string(stab) + "; adaptive halving will catch instabilities");
      if (!cfg.quiet)
        std::fprintf(stderr, "[heflow] warning: %s\n", trace.warnings.back().c_str());
    }
    double dt = cfg.dt;
    long step = 0;
    long consecutive_ok = 0;
    double next_checkpoint =
        cfg.checkpoint_every_t > 0.0 ? cfg.checkpoint_every_t : INFINITY;
    std::optional<PendingMonitor> pending = start_monitor(cfg, step, dt, trace);

    while (t_ < cfg.t_max - 1e-12) {
      const double dt_eff = std::min(dt, cfg.t_max - t_);
      int halvings_this_step = 0;
      for (;;) {
        take_step(dt_eff / std::pow(2.0, halvings_this_step), cfg.scheme);
        const double slack_sup =
            cfg.monotonicity_slack * (1.0 + norms_cur_.sup_phi);
        const double slack_l2 =
            cfg.monotonicity_slack * (1.0 + std::sqrt(norms_cur_.phi_l2_sq));
        const bool ok =
            norms_next_.sup_phi <= norms_cur_.sup_phi + slack_sup &&
            std::sqrt(norms_next_.phi_l2_sq) <= std::sqrt(norms_cur_.phi_l2_sq) + slack_l2;
        if (ok) break;
        ++halvings_this_step;
        ++trace.total_halvings;
        ++trace.rejected_steps;
        if (halvings_this_step > 10) {
          trace.fill_energy_residuals();
          throw Error("flow: dt underflow after 10 halvings at t = " + std::to_string(t_) +
                      " (sup|Phi| " + std::to_string(norms_cur_.sup_phi) + " -> " +
                      std::to_string(norms_next_.sup_phi) + ")");
        }
      }
      const double dt_used = dt_eff / std::pow(2.0, halvings_this_step);
      if (halvings_this_step > 0) {
        dt = dt_used;
        consecutive_ok = 0;
      }
      // accept
      trace.max_sup_phi_increase =
          std::max(trace.max_sup_phi_increase,
                   (norms_next_.sup_phi - norms_cur_.sup_phi) / (1.0 + norms_cur_.sup_phi));
      trace.max_l2_increase =
          std::max(trace.max_l2_increase,
                   (std::sqrt(norms_next_.phi_l2_sq) - std::sqrt(norms_cur_.phi_l2_sq)) /
                       (1.0 + std::sqrt(norms_cur_.phi_l2_sq)));
      if (pending) {
        finalize_monitor(*pending, dt_used, cfg, trace);
        pending.reset();
      }
      std::swap(h_cur_, h_next_);
      std::swap(phi_cur_, phi_next_);
      norms_cur_ = norms_next_;
      t_ += dt_used;
      ++step;
      ++consecutive_ok;
      trace.max_sup_tr_phi = std::max(trace.max_sup_tr_phi, norms_cur_.sup_tr_phi);
      trace.max_det_drift = std::max(trace.max_det_drift, norms_cur_.sup_det_drift);
      if (consecutive_ok >= 500 && dt < cfg.dt) {
        dt = std::min(2.0 * dt, cfg.dt);
        consecutive_ok = 0;
      }
      const bool final_step = t_ >= cfg.t_max - 1e-12;
      if (step % std::max(cfg.monitor_every, 1) == 0 || final_step)
        pending = start_monitor(cfg, step, dt_used, trace);
      if (t_ >= next_checkpoint - 1e-12 || final_step) {
        if (checkpoint) checkpoint(t_, state_field(), trace);
        while (next_checkpoint <= t_ + 1e-12) next_checkpoint += cfg.checkpoint_every_t;
      }
    }
    if (pending) {
      // measure the pair residuals with a probe step that is not committed
      take_step(dt, cfg.scheme);
      finalize_monitor(*pending, dt, cfg, trace);
      pending.reset();
    }
    trace.total_steps = step;
    trace.fill_energy_residuals();
    return trace;
  }

  // Lemma 4 residuals from the current state and one probe step of size dt.
  Lemma4Residuals lemma4_residuals(double dt, Scheme scheme = Scheme::exp_euler) {
    take_step(dt, scheme);
    return lemma4_from_pair(phi_cur_, phi_next_, h_cur_, dt);
  }

 private:
  struct PendingMonitor {
    MonitorRecord rec;
    TwistedMatrixField phi_field;     // Phi at the monitor state
    TwistedMatrixField h_field;       // h_abs at the monitor state
    std::vector<double> logT;         // log(tr h_rel + tr h_rel^{-1}) per point
  };

  void eval_phi(const std::vector<cplx>& h, std::vector<cplx>& phi_out, StepNorms& norms) {
    dispatch_rank(b_->rank(), [&](auto rc) {
      constexpr int R = decltype(rc)::value;
      ctx_.phi_pass<R>(h.data(), phi_out.data(), norms, scratch_p_, scratch_g_, scratch_hi_);
    });
  }

  void take_step(double dt, Scheme scheme) {
    dispatch_rank(b_->rank(), [&](auto rc) {
      constexpr int R = decltype(rc)::value;
      if (scheme == Scheme::exp_euler) {
        ctx_.update_pass<R>(h_cur_.data(), phi_cur_.data(), dt, h_next_.data());
      } else {
        // predictor half step, Phi at the midpoint, full update from h_cur
        if (h_half_.size() != ctx_.field_size()) h_half_.assign(ctx_.field_size(), cplx(0, 0));
        if (phi_half_.size() != ctx_.field_size()) phi_half_.assign(ctx_.field_size(), cplx(0, 0));
        ctx_.update_pass<R>(h_cur_.data(), phi_cur_.data(), 0.5 * dt, h_half_.data());
        StepNorms tmp;
        ctx_.phi_pass<R>(h_half_.data(), phi_half_.data(), tmp, scratch_p_, scratch_g_,
                         scratch_hi_);
        ctx_.update_pass<R>(h_cur_.data(), phi_half_.data(), dt, h_next_.data());
      }
      ctx_.phi_pass<R>(h_next_.data(), phi_next_.data(), norms_next_, scratch_p_, scratch_g_,
                       scratch_hi_);
    });
  }

  // Heavy per-monitor-state sweep: spectral data of h_rel, mu, S-norms.
  std::optional<PendingMonitor> start_monitor(const FlowConfig& cfg, long step, double dt,
                                              FlowTrace& trace) {
    PendingMonitor pm{MonitorRecord{}, b_->zero_field(FormType::F00),
                      b_->zero_field(FormType::F00), {}};
    pm.rec.step = step;
    pm.rec.t = t_;
    pm.rec.dt = dt;
    pm.rec.sup_phi = norms_cur_.sup_phi;
    pm.rec.phi_l2 = std::sqrt(std::max(norms_cur_.phi_l2_sq, 0.0));
    pm.rec.sup_tr_phi = norms_cur_.sup_tr_phi;
    pm.rec.det_drift = norms_cur_.sup_det_drift;
    ctx_.raw_to_field(phi_cur_, pm.phi_field);
    ctx_.raw_to_field(h_cur_, pm.h_field);

    const int n = ctx_.n();
    const int r = b_->rank();
    const size_t npts = size_t(n) * n;
    pm.logT.assign(npts, 0.0);
    if (s_field_.rank() == 0) s_field_ = b_->zero_field(FormType::F00);
    if (frames_.size() != npts * size_t(r) * r * 2)
      frames_.assign(npts * size_t(r) * r * 2, cplx(0, 0));
    if (evals_.size() != npts * size_t(r)) evals_.assign(npts * size_t(r), 0.0);

    std::vector<double> row_l1(size_t(n), 0.0), row_linf(size_t(n), 0.0);
    std::vector<double> row_trs(size_t(n), 0.0), row_mineig(size_t(n), INFINITY);
    dispatch_rank(r, [&](auto rc) {
      constexpr int R = decltype(rc)::value;
      constexpr int RR = R * R;
      const cplx* hkinv = ctx_.h_background_inv_raw().data();
      const cplx* hk = ctx_.h_background_raw().data();
      for_rows(n, [&](int y) {
        double l1 = 0.0, linf = 0.0, trs = 0.0, mineig = INFINITY;
        for (int x = 0; x < n; ++x) {
          const size_t p = size_t(y) * n + x;
          cplx hrel[RR];
          small::mul<R>(hkinv + p * RR, h_cur_.data() + p * RR, hrel);
          // weight W = K0(y) * hK
          cplx w[RR];
          for (int i = 0; i < R; ++i)
            for (int j = 0; j < R; ++j)
              w[i * R + j] = b_->k0_weight(i, y) * hk[p * RR + size_t(i) * R + j];
          for (int i = 0; i < R; ++i)
            for (int j = 0; j < i; ++j) {
              const cplx m = 0.5 * (w[i * R + j] + std::conj(w[j * R + i]));
              w[i * R + j] = m;
              w[j * R + i] = std::conj(m);
            }
          small::WeightedEig<R> we;
          if (!small::weighted_eig<R>(hrel, w, we))
            throw Error("monitor: weight not positive definite");
          double ssq = 0.0, str = 0.0, T = 0.0;
          double ls[R];
          for (int i = 0; i < R; ++i) {
            const double ev = std::max(we.evals[i], 1e-14);
            mineig = std::min(mineig, ev);
            ls[i] = std::log(ev);
            ssq += ls[i] * ls[i];
            str += ls[i];
            T += ev + 1.0 / ev;
          }
          const double snorm = std::sqrt(ssq);
          l1 += snorm;
          linf = std::max(linf, snorm);
          trs += str;
          pm.logT[p] = std::log(T);
          // S = E diag(log) E^{-1}
          cplx sd[RR];
          for (int i = 0; i < R; ++i)
            for (int j = 0; j < R; ++j) {
              cplx s(0.0, 0.0);
              for (int k = 0; k < R; ++k)
                s += we.frame[i * R + k] * ls[k] * we.frame_inv[k * R + j];
              sd[i * R + j] = s;
            }
          for (int e = 0; e < RR; ++e) s_field_.data()[p * RR + e] = sd[e];
          for (int i = 0; i < R; ++i) evals_[p * R + i] = ls[i];
          for (int e = 0; e < RR; ++e) {
            frames_[p * 2 * RR + e] = we.frame[e];
            frames_[p * 2 * RR + RR + e] = we.frame_inv[e];
          }
        }
        row_l1[size_t(y)] = l1;
        row_linf[size_t(y)] = linf;
        row_trs[size_t(y)] = trs;
        row_mineig[size_t(y)] = mineig;
      });
    });
    double l1 = 0.0, linf = 0.0, trs = 0.0, mineig = INFINITY;
    for (int y = 0; y < n; ++y) {
      l1 += row_l1[size_t(y)];
      linf = std::max(linf, row_linf[size_t(y)]);
      trs += row_trs[size_t(y)];
      mineig = std::min(mineig, row_mineig[size_t(y)]);
    }
    pm.rec.s_l1 = l1 * ctx_.cell_weight();
    pm.rec.s_linf = linf;
    pm.rec.tr_s_int = trs * ctx_.cell_weight();
    pm.rec.min_eig_h = mineig;
    pm.rec.mu = monitor_mu(pm);
    // inequality slacks that need no pair data
    const double V = b_->geom().volume();
    pm.rec.eq35_slack = pm.rec.mu + c35_ * pm.rec.s_linf;
    pm.rec.eq36_ratio = pm.rec.s_linf / (1.0 + pm.rec.s_l1);
    pm.rec.eq312_slack =
        -std::sqrt(V) * pm.rec.mu -
        (pm.rec.s_l1 / std::sqrt(double(r)) - V * std::log(2.0 * r)) * pm.rec.phi_l2;
    (void)trace;
    return pm;
  }

  // mu via the closed formula with cached frames (the fused monitor path).
  double monitor_mu(const PendingMonitor& pm) {
    const int n = ctx_.n();
    const int r = b_->rank();
    // curvature term
    std::vector<double> row(size_t(n), 0.0);
    for_rows(n, [&](int y) {
      double acc = 0.0;
      for (int x = 0; x < n; ++x)
        acc += (Mat(s_field_.at(x, y)) * Mat(ilf_theta_.at(x, y))).trace().real();
      row[size_t(y)] = acc;
    });
    double term1 = 0.0;
    for (int y = 0; y < n; ++y) term1 += row[size_t(y)];
    term1 *= ctx_.cell_weight();
    // Psi term over D'' components
    double term2 = 0.0;
    std::vector<TwistedMatrixField> comps;
    comps.push_back(b_->dbar_a(s_field_));
    if (b_->has_theta()) comps.push_back(commutator(b_->theta(), s_field_, FormType::F10));
    const double ff = 2.0 / b_->geom().area_scale();
    dispatch_rank(r, [&](auto rc) {
      constexpr int R = decltype(rc)::value;
      constexpr int RR = R * R;
      for (const TwistedMatrixField& P : comps) {
        std::vector<double> rowp(size_t(n), 0.0);
        for_rows(n, [&](int y) {
          double acc = 0.0;
          for (int x = 0; x < n; ++x) {
            const size_t p = size_t(y) * n + x;
            const cplx* E = frames_.data() + p * 2 * RR;
            const cplx* Einv = E + RR;
            cplx t1[RR], ph[RR];
            small::mul<R>(Einv, P.data() + p * RR, t1);
            small::mul<R>(t1, E, ph);
            for (int aa = 0; aa < R; ++aa)
              for (int bb = 0; bb < R; ++bb)
                acc += donaldson_psi(evals_[p * R + bb], evals_[p * R + aa]) *
                       std::norm(ph[aa * R + bb]);
          }
          rowp[size_t(y)] = acc;
        });
        for (int y = 0; y < n; ++y) term2 += rowp[size_t(y)];
      }
    });
    term2 *= ff * ctx_.cell_weight();
    return term1 + term2;
  }

  Lemma4Residuals lemma4_from_pair(const std::vector<cplx>& phi_a,
                                   const std::vector<cplx>& phi_b,
                                   const std::vector<cplx>& h_a, double dt) {
    const int n = ctx_.n();
    Lemma4Residuals out;
    TwistedMatrixField pa = b_->zero_field(FormType::F00);
    TwistedMatrixField pb = b_->zero_field(FormType::F00);
    ctx_.raw_to_field(phi_a, pa);
    ctx_.raw_to_field(phi_b, pb);
    TwistedMatrixField ha = b_->zero_field(FormType::F00);
    ctx_.raw_to_field(h_a, ha);
    // r1: (d/dt - Delta) tr Phi
    TwistedMatrixField tra = TwistedMatrixField::scalar(b_->geom());
    TwistedMatrixField trb = TwistedMatrixField::scalar(b_->geom());
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        tra(x, y, 0, 0) = pa.at(x, y).trace().real();
        trb(x, y, 0, 0) = pb.at(x, y).trace().real();
      }
    TwistedMatrixField lap_tra = laplacian(tra);
    double r1 = 0.0, s1 = 0.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double ddt = (trb(x, y, 0, 0).real() - tra(x, y, 0, 0).real()) / dt;
        const double dl = lap_tra(x, y, 0, 0).real();
        r1 = std::max(r1, std::abs(ddt - dl));
        s1 = std::max(s1, std::abs(ddt) + std::abs(dl));
      }
    out.r1_raw = r1;
    out.r1 = r1 / std::max(s1, 1e-30);
    // r2: (d/dt - Delta)|Phi|^2 + 4 |D''_theta Phi|^2
    TwistedMatrixField ua = TwistedMatrixField::scalar(b_->geom());
    TwistedMatrixField ub = TwistedMatrixField::scalar(b_->geom());
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        ua(x, y, 0, 0) = (Mat(pa.at(x, y)) * Mat(pa.at(x, y))).trace().real();
        ub(x, y, 0, 0) = (Mat(pb.at(x, y)) * Mat(pb.at(x, y))).trace().real();
      }
    TwistedMatrixField lap_ua = laplacian(ua);
    const double ff = 2.0 / b_->geom().area_scale();
    TwistedMatrixField dphi = b_->dbar_a(pa);
    TwistedMatrixField dnorm = h_norm_sq_field(*b_, ha, dphi, ff);
    if (b_->has_theta()) {
      TwistedMatrixField tp = commutator(b_->theta(), pa, FormType::F10);
      dnorm += h_norm_sq_field(*b_, ha, tp, ff);
    }
    double r2 = 0.0, s2 = 0.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double ddt = (ub(x, y, 0, 0).real() - ua(x, y, 0, 0).real()) / dt;
        const double dl = lap_ua(x, y, 0, 0).real();
        const double dd = 4.0 * dnorm(x, y, 0, 0).real();
        r2 = std::max(r2, std::abs(ddt - dl + dd));
        s2 = std::max(s2, std::abs(ddt) + std::abs(dl) + dd);
      }
    out.r2_raw = r2;
    out.r2 = r2 / std::max(s2, 1e-30);
    return out;
  }

  void finalize_monitor(PendingMonitor& pm, double dt, const FlowConfig& cfg,
                        FlowTrace& trace) {
    // pair residuals between the monitor state (phi_cur_) and the stepped state
    Lemma4Residuals lr = lemma4_from_pair(phi_cur_, phi_next_, h_cur_, dt);
    pm.rec.lemma4_r1 = lr.r1;
    pm.rec.lemma4_r2 = lr.r2;
    // eq (3.8): sup_x d/dt log(tr h_rel + tr h_rel^{-1}) <= sup |Phi|
    const int n = ctx_.n();
    std::vector<double> row(size_t(n), -INFINITY);
    dispatch_rank(b_->rank(), [&](auto rc) {
      constexpr int R = decltype(rc)::value;
      constexpr int RR = R * R;
      const cplx* hkinv = ctx_.h_background_inv_raw().data();
      const cplx* hk = ctx_.h_background_raw().data();
      for_rows(n, [&](int y) {
        double worst = -INFINITY;
        for (int x = 0; x < n; ++x) {
          const size_t p = size_t(y) * n + x;
          cplx hrel[RR], hinv[RR], hrelinv[RR];
          small::mul<R>(hkinv + p * RR, h_next_.data() + p * RR, hrel);
          if (!small::inverse<R>(h_next_.data() + p * RR, hinv)) continue;
          small::mul<R>(hinv, hk + p * RR, hrelinv);
          const double T = (small::trace<R>(hrel) + small::trace<R>(hrelinv)).real();
          const double rate = (std::log(std::max(T, 1e-300)) - pm.logT[p]) / dt;
          worst = std::max(worst, rate);
        }
        row[size_t(y)] = worst;
      });
    });
    double rate = -INFINITY;
    for (int y = 0; y < n; ++y) rate = std::max(rate, row[size_t(y)]);
    pm.rec.eq38_slack = pm.rec.sup_phi - rate;
    // flags
    const double vscale = b_->geom().volume();
    if (pm.rec.det_drift > cfg.det_drift_tol)
      pm.rec.flags.push_back("det_drift " + std::to_string(pm.rec.det_drift));
    if (std::abs(pm.rec.tr_s_int) > cfg.trace_drift_tol * vscale)
      pm.rec.flags.push_back("tr_S_integral " + std::to_string(pm.rec.tr_s_int));
    if (pm.rec.eq35_slack < -1e-6 * (1.0 + std::abs(pm.rec.mu)))
      pm.rec.flags.push_back("eq35_slack " + std::to_string(pm.rec.eq35_slack));
    if (pm.rec.eq312_slack < -1e-6 * (1.0 + std::abs(pm.rec.mu)))
      pm.rec.flags.push_back("eq312_slack " + std::to_string(pm.rec.eq312_slack));
    if (pm.rec.eq38_slack < -1e-3 * (1.0 + pm.rec.sup_phi))
      pm.rec.flags.push_back("eq38_slack " + std::to_string(pm.rec.eq38_slack));
    trace.flagged_records += pm.rec.flags.empty() ? 0 : 1;
    trace.records.push_back(std::move(pm.rec));
  }

  const HiggsBundle* b_;
  RunContext ctx_;
  TwistedMatrixField hK_;
  TwistedMatrixField ilf_theta_;
  TwistedMatrixField s_field_;
  std::vector<cplx> h_cur_, h_next_, h_half_, phi_cur_, phi_next_, phi_half_;
  std::vector<cplx> scratch_p_, scratch_g_, scratch_hi_;
  std::vector<cplx> frames_;
  std::vector<double> evals_;
  StepNorms norms_cur_, norms_next_;
  double t_ = 0.0;
  double c35_ = 0.0;
};

}  // namespace heflow
