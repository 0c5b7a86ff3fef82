//! Two dependent paid-claims processes cut from one master random bridge
//! `S` on `[0, T*]`: line 1 is `S` on `[0, T]`, line 2 is `k^2` times the
//! increments of `S` on `[T, T*]` run on a clock sped up by
//! `lambda = T*/T - 1`. Per-line best estimates need only the master's
//! posterior mean at the pooled observation.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bridge::{inc_log_density, inc_second_moment};
use crate::error::{Error, Result};
use crate::lrb::{psi_integral, ConditionalLaw, Observation};
use crate::prior::PriorLaw;
use crate::reserve::best_estimate;
use crate::sim::simulate_paths;
use crate::specfun::{log_scaled_normal_cdf, LogWeightedValue};
use crate::stable::{log_density_ct, BridgeParams};

const UNDERFLOW_EXPONENT: f64 = 800.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiLineConfig {
    /// Master activity.
    pub c: f64,
    /// Master horizon `T*`.
    #[serde(rename = "T_star")]
    pub master_horizon: f64,
    /// Line horizon `T`, the split point.
    #[serde(rename = "T")]
    pub split: f64,
    /// Line-2 activity.
    pub c2: f64,
}

impl MultiLineConfig {
    pub fn new(c: f64, master_horizon: f64, split: f64, c2: f64) -> Result<Self> {
        let cfg = Self { c, master_horizon, split, c2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        BridgeParams::new(self.c, self.master_horizon)?;
        if !(self.split > 0.0 && self.split < self.master_horizon) {
            return Err(Error::param(format!(
                "split T must lie in (0, T*) = (0, {}), got {}",
                self.master_horizon, self.split
            )));
        }
        if !(self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(Error::param(format!("line-2 activity must be positive, got {}", self.c2)));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.master_horizon / self.split - 1.0
    }

    pub fn k(&self) -> f64 {
        self.c2 / (self.c * self.lambda())
    }

    pub fn master(&self) -> BridgeParams {
        BridgeParams { c: self.c, horizon: self.master_horizon }
    }

    /// Master time left after the pooled observation at line time `t`.
    fn remaining(&self, t: f64) -> f64 {
        self.master_horizon - (1.0 + self.lambda()) * t
    }
}

/// Simultaneous reading of both lines at line time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointObservation {
    pub t: f64,
    pub xi1: f64,
    pub xi2: f64,
}

impl JointObservation {
    pub const ORIGIN: Self = Self { t: 0.0, xi1: 0.0, xi2: 0.0 };

    pub fn new(t: f64, xi1: f64, xi2: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("observation time must be nonnegative, got {t}")));
        }
        if !(xi1 >= 0.0 && xi2 >= 0.0 && xi1.is_finite() && xi2.is_finite()) {
            return Err(Error::domain(format!("paid amounts must be nonnegative, got ({xi1}, {xi2})")));
        }
        if t == 0.0 && (xi1 != 0.0 || xi2 != 0.0) {
            return Err(Error::domain("paid amounts at time zero must be zero"));
        }
        Ok(Self { t, xi1, xi2 })
    }

    fn check_before(&self, cfg: &MultiLineConfig) -> Result<()> {
        if !(self.t < cfg.split) {
            return Err(Error::domain(format!("observation time {} is not before the split {}", self.t, cfg.split)));
        }
        Ok(())
    }

    /// The master observation: time `(1 + lambda) t`, level `xi1 + xi2/k^2`.
    pub fn pooled(&self, cfg: &MultiLineConfig) -> Result<Observation> {
        let k = cfg.k();
        Observation::new((1.0 + cfg.lambda()) * self.t, self.xi1 + self.xi2 / (k * k))
    }
}

/// Terminal density of one line at `x`.
pub fn line_terminal_density(cfg: &MultiLineConfig, prior: &PriorLaw, line: u8, x: f64) -> Result<f64> {
    cfg.validate()?;
    if !(x > 0.0) {
        return Ok(0.0);
    }
    let (big_t, t_star) = (cfg.split, cfg.master_horizon);
    // both kernels carry exp(-(cT)^2/(2x)); past this the value is below
    // any representable density
    if (cfg.c * big_t).powi(2) / (2.0 * x) > UNDERFLOW_EXPONENT {
        return Ok(0.0);
    }
    match line {
        1 => {
            // int f^c_{T,T*}(x; z) p(z) dz
            let f = |_: f64, v: f64| LogWeightedValue::from_log(inc_log_density(cfg.c, big_t, t_star - big_t, x, v));
            Ok(prior.integrate_against(f, x)?.get())
        }
        2 => {
            // k^-2 int f^{c2}_{T, T*/lambda}(x; z) p(z/k^2) dz, with z = k^2 w
            let k2 = cfg.k().powi(2);
            let rest = t_star / cfg.lambda() - big_t;
            let f = |_: f64, off: f64| LogWeightedValue::from_log(inc_log_density(cfg.c2, big_t, rest, x, k2 * off));
            Ok(prior.integrate_against(f, x / k2)?.get())
        }
        _ => Err(Error::domain(format!("line must be 1 or 2, got {line}"))),
    }
}

/// Line-2 terminal density through the master increment directly:
/// `k^-2 int f^c_{T*-T,T*}(x/k^2; z) p(z) dz`.
pub fn line2_terminal_density_master_form(cfg: &MultiLineConfig, prior: &PriorLaw, x: f64) -> Result<f64> {
    cfg.validate()?;
    if !(x > 0.0) {
        return Ok(0.0);
    }
    let k2 = cfg.k().powi(2);
    let u = x / k2;
    let (big_t, t_star) = (cfg.split, cfg.master_horizon);
    if (cfg.c * (t_star - big_t)).powi(2) / (2.0 * u) > UNDERFLOW_EXPONENT {
        return Ok(0.0);
    }
    let f = |_: f64, v: f64| LogWeightedValue::from_log(inc_log_density(cfg.c, t_star - big_t, big_t, u, v));
    Ok(prior.integrate_against(f, u)?.get() / k2)
}

fn check_step(cfg: &MultiLineConfig, from: &JointObservation, to: &JointObservation) -> Result<()> {
    from.check_before(cfg)?;
    if !(to.t > from.t && to.t <= cfg.split) {
        return Err(Error::domain(format!("need {} < t <= {}, got t = {}", from.t, cfg.split, to.t)));
    }
    if to.xi1 < from.xi1 || to.xi2 < from.xi2 {
        return Err(Error::domain("paid claims cannot decrease on either line"));
    }
    Ok(())
}

/// Joint transition density of `(xi1_t, xi2_t)` given both lines at `from`,
/// with respect to Lebesgue measure in the line units.
pub fn joint_conditional_density(
    cfg: &MultiLineConfig,
    prior: &Arc<PriorLaw>,
    from: &JointObservation,
    to: &JointObservation,
) -> Result<f64> {
    cfg.validate()?;
    check_step(cfg, from, to)?;
    let (d1, d2) = (to.xi1 - from.xi1, to.xi2 - from.xi2);
    if d1 <= 0.0 || d2 <= 0.0 {
        return Ok(0.0);
    }
    let (c, lam, k2) = (cfg.c, cfg.lambda(), cfg.k().powi(2));
    let dt = to.t - from.t;
    let master = cfg.master();
    let a = from.pooled(cfg)?;
    let log_kernel = log_density_ct(c * dt, d1) + log_density_ct(c * lam * dt, d2 / k2) - k2.ln();
    let log_ratio = if to.t < cfg.split {
        let b = to.pooled(cfg)?;
        psi_integral(&master, prior, &b)?.ln() - psi_integral(&master, prior, &a)?.ln()
    } else {
        // the pooled level at the split is the master terminal value
        let law = ConditionalLaw::new(master, Arc::clone(prior), a)?;
        let y = to.xi1 + to.xi2 / k2;
        law.log_density_offset(y, y - a.xi) - log_density_ct(c * cfg.remaining(from.t), y - a.xi)
    };
    Ok((log_ratio + log_kernel).exp())
}

/// Marginal transition density of one line given both lines at `from`.
pub fn line_marginal_density(
    cfg: &MultiLineConfig,
    prior: &Arc<PriorLaw>,
    from: &JointObservation,
    line: u8,
    t: f64,
    y: f64,
) -> Result<f64> {
    cfg.validate()?;
    from.check_before(cfg)?;
    if !(t > from.t && t <= cfg.split) {
        return Err(Error::domain(format!("need {} < t <= {}, got t = {}", from.t, cfg.split, t)));
    }
    let k2 = cfg.k().powi(2);
    let (x, window, unit) = match line {
        1 => (from.xi1, t - from.t, 1.0),
        2 => (from.xi2 / k2, cfg.lambda() * (t - from.t), k2),
        _ => return Err(Error::domain(format!("line must be 1 or 2, got {line}"))),
    };
    let u = y / unit - x;
    if u <= 0.0 || (cfg.c * window).powi(2) / (2.0 * u) > UNDERFLOW_EXPONENT {
        return Ok(0.0);
    }
    let a = from.pooled(cfg)?;
    let law = ConditionalLaw::new(cfg.master(), Arc::clone(prior), a)?;
    let rest = cfg.remaining(from.t) - window;
    let r = law.integrate_from(a.xi + u, |_, v| {
        if rest <= 0.0 {
            return LogWeightedValue::ZERO;
        }
        LogWeightedValue::from_log(inc_log_density(cfg.c, window, rest, u, v))
    })?;
    Ok(r.get() / unit)
}

/// Best estimates of both lines' ultimate losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineEstimates {
    pub u1: f64,
    pub u2: f64,
    /// Master posterior mean at the pooled observation.
    pub master_mean: f64,
    pub quad_err: f64,
}

/// `U1 = (T-t)/D (E* - xi2/k^2) + (T*-T-lambda t)/D xi1` and
/// `U2 = k^2 (T*-T-lambda t)/D (E* - xi1) + (T-t)/D xi2`, where
/// `D = T* - (1+lambda) t` and `E*` is the master posterior mean.
pub fn best_estimates(cfg: &MultiLineConfig, prior: &Arc<PriorLaw>, obs: &JointObservation) -> Result<LineEstimates> {
    cfg.validate()?;
    obs.check_before(cfg)?;
    prior.require_finite_mean()?;
    let pooled = obs.pooled(cfg)?;
    let law = ConditionalLaw::new(cfg.master(), Arc::clone(prior), pooled)?;
    let e = best_estimate(&law)?;
    let (big_t, t_star, lam, k2) = (cfg.split, cfg.master_horizon, cfg.lambda(), cfg.k().powi(2));
    let t = obs.t;
    let d = cfg.remaining(t);
    let w1 = (big_t - t) / d;
    let w2 = (t_star - big_t - lam * t) / d;
    // reserves first, so nonnegativity survives rounding
    let open = (e.value - pooled.xi).max(0.0);
    Ok(LineEstimates {
        u1: obs.xi1 + w1 * open,
        u2: obs.xi2 + k2 * w2 * open,
        master_mean: e.value,
        quad_err: e.quad_err,
    })
}

/// Components of the a priori correlation of the two terminal values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub mean1: f64,
    pub mean2: f64,
    pub second1: f64,
    pub second2: f64,
    pub cross: f64,
    /// `C_{T*} = c sqrt(2 pi) int z^{3/2} e^{c^2 T*^2/(2z)} Phi(-c T*/sqrt z) p(z) dz`.
    pub c_tstar: f64,
    pub correlation: f64,
    pub quad_err: f64,
}

pub fn c_tstar(cfg: &MultiLineConfig, prior: &PriorLaw) -> Result<(f64, f64)> {
    let (c, ts) = (cfg.c, cfg.master_horizon);
    let f = |z: f64, _: f64| {
        let x = -c * ts / z.sqrt();
        LogWeightedValue::from_log(1.5 * z.ln() + log_scaled_normal_cdf(x))
    };
    let r = prior.integrate_against(f, 0.0)?;
    Ok((c * (2.0 * PI).sqrt() * r.get(), r.rel_error))
}

/// `E[S_T S_{T*}] = (T/T*) m2`, `E[S_T^2] = (T/T*)(m2 - (T*-T) C)`,
/// `E[(S_{T*}-S_T)^2] = (1-T/T*)(m2 - T C)`, so the cross moment
/// `k^2 E[S_T (S_{T*}-S_T)]` is `k^2 (T/T*)(T*-T) C`.
pub fn a_priori_correlation(cfg: &MultiLineConfig, prior: &PriorLaw) -> Result<CorrelationReport> {
    cfg.validate()?;
    prior.require_finite_second_moment()?;
    let m = prior.moments();
    let (big_t, ts, k2) = (cfg.split, cfg.master_horizon, cfg.k().powi(2));
    let (c, err) = c_tstar(cfg, prior)?;
    let f = big_t / ts;
    let mean1 = f * m.mean;
    let mean2 = k2 * (1.0 - f) * m.mean;
    let second1 = f * (m.second_moment - (ts - big_t) * c);
    let second2 = k2 * k2 * (1.0 - f) * (m.second_moment - big_t * c);
    let cross = k2 * f * (ts - big_t) * c;
    let cov = cross - mean1 * mean2;
    let correlation = cov / ((second1 - mean1 * mean1) * (second2 - mean2 * mean2)).sqrt();
    Ok(CorrelationReport { mean1, mean2, second1, second2, cross, c_tstar: c, correlation, quad_err: err })
}

/// `E[S_T^2]` by quadrature of the pinned-bridge second moment, independent
/// of `C_{T*}`.
pub fn line1_second_moment_by_quadrature(cfg: &MultiLineConfig, prior: &PriorLaw) -> Result<f64> {
    let (big_t, ts) = (cfg.split, cfg.master_horizon);
    let f = |z: f64, _: f64| LogWeightedValue::from_value(inc_second_moment(cfg.c, big_t, ts - big_t, z));
    Ok(prior.integrate_against(f, 0.0)?.get())
}

/// Simulated line values at line times where both lines sit on the master's
/// dyadic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LineEnsemble {
    pub times: Vec<f64>,
    /// `line1[path][j]`, `line2[path][j]` at `times[j]`.
    pub line1: Vec<Vec<f64>>,
    pub line2: Vec<Vec<f64>>,
}

/// Simulate the master on `[0, T*]` at the given depth and split it into the
/// two lines. `T/T*` must be a dyadic grid point.
pub fn simulate_lines(cfg: &MultiLineConfig, prior: &PriorLaw, depth: u32, count: usize, seed: u64) -> Result<LineEnsemble> {
    cfg.validate()?;
    let n = 1usize << depth;
    let split_pos = cfg.split / cfg.master_horizon * n as f64;
    let js = split_pos.round() as usize;
    if (split_pos - js as f64).abs() > 1e-9 || js == 0 || js == n {
        return Err(Error::domain(format!("the split T/T* = {} is not on a depth-{depth} grid", cfg.split / cfg.master_horizon)));
    }
    let e = simulate_paths(&cfg.master(), prior, depth, count, seed)?;
    let h = cfg.master_horizon / n as f64;
    let lam = cfg.lambda();
    let k2 = cfg.k().powi(2);
    // line time t = j h for j <= js, needs T + lambda t on the grid
    let mut idx = Vec::new();
    for j in 0..=js {
        let pos = js as f64 + lam * j as f64;
        let p = pos.round();
        if (pos - p).abs() < 1e-9 {
            idx.push((j, p as usize));
        }
    }
    let times = idx.iter().map(|&(j, _)| j as f64 * h).collect();
    let mut line1 = Vec::with_capacity(count);
    let mut line2 = Vec::with_capacity(count);
    for p in e.paths() {
        line1.push(idx.iter().map(|&(j, _)| p[j]).collect());
        line2.push(idx.iter().map(|&(_, m)| k2 * (p[m] - p[js])).collect());
    }
    Ok(LineEnsemble { times, line1, line2 })
}
