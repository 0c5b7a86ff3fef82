//! Reserving quantities computed from a [`ConditionalLaw`]: best estimates,
//! variance, moments of the paid-claims process, exceedance prices for
//! stop-loss and layer reinsurance, conditional tail expectations and the
//! tail-ratio diagnostic.
//!
//! Exceedance and tail-expectation integrals are written in terms of the
//! *time-reversed* bridge: seen from the terminal value `z`, the remaining
//! amount `z - xi_t` is a bridge increment over `T - t` out of `T - s`. This
//! gives integrands in the offset `z - K` directly, which is what the
//! quadrature needs to stay accurate at the lower end.

use serde::{Deserialize, Serialize};

use crate::bridge::{inc_cdf, inc_first_moment, inc_second_moment};
use crate::error::{Error, Result};
use crate::lrb::{ConditionalLaw, Observation};
use crate::specfun::LogWeightedValue;

/// A value with the relative quadrature error accumulated in producing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub quad_err: f64,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Self { value, quad_err: 0.0 }
    }
}

/// Quantile levels reported in [`ReservingReport`].
pub const REPORT_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservingReport {
    pub at: Observation,
    pub best_estimate_ultimate: f64,
    pub reserve: f64,
    pub variance: f64,
    pub quantiles: Vec<(f64, f64)>,
    pub quadrature_error: f64,
}

/// Flat row form of a report, one per evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub t: f64,
    pub paid: f64,
    pub ultimate_best_estimate: f64,
    pub reserve: f64,
    pub variance: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    pub quad_err: f64,
}

impl ReservingReport {
    pub fn record(&self) -> ReportRecord {
        let q = |p: f64| {
            self.quantiles
                .iter()
                .find(|(l, _)| *l == p)
                .map(|&(_, v)| v)
                .unwrap_or(f64::NAN)
        };
        ReportRecord {
            t: self.at.s,
            paid: self.at.xi,
            ultimate_best_estimate: self.best_estimate_ultimate,
            reserve: self.reserve,
            variance: self.variance,
            q05: q(0.05),
            q25: q(0.25),
            q50: q(0.5),
            q75: q(0.75),
            q95: q(0.95),
            quad_err: self.quadrature_error,
        }
    }
}

/// An aggregate `L` excess of `K` treaty paying on the given dates.
/// `limit = None` is an unlimited stop-loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub attachment: f64,
    #[serde(default)]
    pub limit: Option<f64>,
    pub payment_dates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPayment {
    pub date: f64,
    pub expected_payment: f64,
    pub quad_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub payments: Vec<LayerPayment>,
    /// Expected value of the layer at the anchor, already "paid".
    pub already_recovered: f64,
    /// Expected total recovery at the last date, minus `already_recovered`.
    pub total: f64,
    pub warnings: Vec<String>,
}

fn finite(x: f64) -> LogWeightedValue {
    LogWeightedValue::from_value(x)
}

fn check_time(law: &ConditionalLaw, t: f64) -> Result<()> {
    let s = law.anchor().s;
    let big_t = law.params().horizon;
    if !(t > s && t <= big_t) {
        return Err(Error::domain(format!("evaluation time must lie in ({s}, {big_t}], got {t}")));
    }
    Ok(())
}

/// `U_sT = int z nu_s(dz)`.
pub fn best_estimate(law: &ConditionalLaw) -> Result<Estimate> {
    law.prior().require_finite_mean()?;
    let obs = law.anchor();
    if obs.s == 0.0 {
        return Ok(Estimate::exact(law.prior().moments().mean));
    }
    let r = law.integrate(|_, d| finite(d))?;
    Ok(Estimate { value: obs.xi + r.get(), quad_err: r.rel_error })
}

/// `R_sT = U_sT - xi_s`.
pub fn best_estimate_reserve(law: &ConditionalLaw) -> Result<Estimate> {
    let u = best_estimate(law)?;
    Ok(Estimate { value: u.value - law.anchor().xi, ..u })
}

/// `int (z - U_sT)^2 nu_s(dz)`.
pub fn conditional_variance(law: &ConditionalLaw) -> Result<Estimate> {
    law.prior().require_finite_second_moment()?;
    let obs = law.anchor();
    if obs.s == 0.0 {
        return Ok(Estimate::exact(law.prior().moments().variance()));
    }
    let u = best_estimate(law)?;
    let r = u.value - obs.xi;
    let v = law.integrate(|_, d| finite((d - r) * (d - r)))?;
    Ok(Estimate { value: v.get(), quad_err: v.rel_error + u.quad_err })
}

/// `E[xi_t | xi_s] = ((T - t) xi_s + (t - s) U_sT) / (T - s)`.
pub fn paid_claims_conditional_mean(law: &ConditionalLaw, t: f64) -> Result<Estimate> {
    check_time(law, t)?;
    let obs = law.anchor();
    let big_t = law.params().horizon;
    let u = best_estimate(law)?;
    let value = ((big_t - t) * obs.xi + (t - obs.s) * u.value) / (big_t - obs.s);
    Ok(Estimate { value, ..u })
}

/// `E[xi_t^2 | xi_s]`, averaging the pinned-bridge second moment over `nu_s`.
pub fn paid_claims_conditional_second_moment(law: &ConditionalLaw, t: f64) -> Result<Estimate> {
    check_time(law, t)?;
    law.prior().require_finite_second_moment()?;
    let obs = law.anchor();
    let (c, big_t) = (law.params().c, law.params().horizon);
    let (a, b) = (t - obs.s, big_t - t);
    let x = obs.xi;
    let r = law.integrate(|_, w| {
        let inc2 = if b == 0.0 { w * w } else { inc_second_moment(c, a, b, w) };
        finite(x * x + 2.0 * x * a / (a + b) * w + inc2)
    })?;
    Ok(Estimate { value: r.get(), quad_err: r.rel_error })
}

/// `D_st(K) = E[(xi_t - K)^+ | xi_s]`, the expected exceedance of the
/// paid-claims level over `K` at time `t`.
pub fn expected_exceedance(law: &ConditionalLaw, t: f64, k: f64) -> Result<Estimate> {
    check_time(law, t)?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::domain(format!("attachment must be nonnegative, got {k}")));
    }
    let obs = law.anchor();
    if k <= obs.xi {
        let m = paid_claims_conditional_mean(law, t)?;
        return Ok(Estimate { value: m.value - k, ..m });
    }
    law.prior().require_finite_mean()?;
    let (c, big_t) = (law.params().c, law.params().horizon);
    let (a, b) = (t - obs.s, big_t - t);
    let u0 = k - obs.xi;
    let r = law.integrate_from(k, |_, v0| {
        if b == 0.0 {
            return finite(v0);
        }
        let f = inc_cdf(c, b, a, v0, u0);
        let m = inc_first_moment(c, b, a, v0, u0);
        finite((v0 * f - m).max(0.0))
    })?;
    Ok(Estimate { value: r.get(), quad_err: r.rel_error })
}

/// Expected payments of a layer on each of its dates. The value at the
/// anchor, `(xi_s - K)^+ - (xi_s - K - L)^+`, counts as already paid, so the
/// payments telescope to `D_sT(K) - D_sT(K + L)` minus that amount.
pub fn layer_recovery_schedule(law: &ConditionalLaw, layer: &LayerSpec) -> Result<LayerSchedule> {
    let obs = law.anchor();
    let big_t = law.params().horizon;
    let k = layer.attachment;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::domain(format!("attachment must be nonnegative, got {k}")));
    }
    if let Some(l) = layer.limit {
        if !(l > 0.0) {
            return Err(Error::domain(format!("layer limit must be positive, got {l}")));
        }
    }
    if layer.payment_dates.is_empty() {
        return Err(Error::domain("a layer needs at least one payment date"));
    }
    if layer.payment_dates.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("payment dates must be strictly increasing"));
    }
    let last = *layer.payment_dates.last().expect("nonempty");
    if last != big_t {
        return Err(Error::domain(format!("the last payment date must be the horizon {big_t}, got {last}")));
    }
    let mut warnings = Vec::new();
    let mut dates = Vec::with_capacity(layer.payment_dates.len());
    for &d in &layer.payment_dates {
        if d < obs.s {
            return Err(Error::domain(format!("payment date {d} precedes the observation time {}", obs.s)));
        }
        if d == obs.s {
            warnings.push(format!("payment date {d} coincides with the observation time and is dropped"));
            continue;
        }
        dates.push(d);
    }

    let layer_value = |t: f64| -> Result<Estimate> {
        let lo = expected_exceedance(law, t, k)?;
        match layer.limit {
            None => Ok(lo),
            Some(l) => {
                let hi = expected_exceedance(law, t, k + l)?;
                Ok(Estimate { value: lo.value - hi.value, quad_err: lo.quad_err + hi.quad_err })
            }
        }
    };
    let at_anchor = {
        let x = obs.xi;
        let lo = (x - k).max(0.0);
        match layer.limit {
            None => lo,
            Some(l) => lo - (x - k - l).max(0.0),
        }
    };

    let mut payments = Vec::with_capacity(dates.len());
    let mut prev = at_anchor;
    for d in dates {
        let v = layer_value(d)?;
        payments.push(LayerPayment { date: d, expected_payment: v.value - prev, quad_err: v.quad_err });
        prev = v.value;
    }
    Ok(LayerSchedule { payments, already_recovered: at_anchor, total: prev - at_anchor, warnings })
}

/// `E[xi_t | xi_s, xi_t > theta]`.
pub fn conditional_value_at_risk(law: &ConditionalLaw, t: f64, theta: f64) -> Result<Estimate> {
    check_time(law, t)?;
    let obs = law.anchor();
    if !(theta > obs.xi && theta.is_finite()) {
        return Err(Error::domain(format!("threshold must exceed the paid amount {}, got {theta}", obs.xi)));
    }
    law.prior().require_finite_mean()?;
    let (c, big_t) = (law.params().c, law.params().horizon);
    let (a, b) = (t - obs.s, big_t - t);
    let u0 = theta - obs.xi;
    let prob = law.integrate_from(theta, |_, v0| {
        if b == 0.0 {
            return finite(1.0);
        }
        finite(inc_cdf(c, b, a, v0, u0))
    })?;
    if prob.get() < 1e-12 {
        return Err(Error::IllConditioned(format!(
            "P[xi_t > {theta}] = {:e} is too small for a stable conditional expectation",
            prob.get()
        )));
    }
    // level above theta: theta + (v0 - V) on {V <= v0}
    let excess = law.integrate_from(theta, |_, v0| {
        if b == 0.0 {
            return finite(v0);
        }
        let f = inc_cdf(c, b, a, v0, u0);
        let m = inc_first_moment(c, b, a, v0, u0);
        finite((v0 * f - m).max(0.0))
    })?;
    Ok(Estimate { value: theta + excess.get() / prob.get(), quad_err: prob.rel_error + excess.rel_error })
}

/// Finite-`L` tail ratio `P[U > L] / P[U - xi_s > L | xi_s]`.
pub fn tail_ratio(law: &ConditionalLaw, l: f64) -> Result<Estimate> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::domain(format!("tail level must be positive, got {l}")));
    }
    let one = |_: f64, _: f64| LogWeightedValue::from_log(0.0);
    let num = law.prior().integrate_against(one, l)?;
    let den = law.integrate_from(law.anchor().xi + l, one)?;
    if num.value.is_zero() || den.value.is_zero() {
        return Err(Error::IllConditioned(format!("the prior has no mass beyond {l}")));
    }
    Ok(Estimate { value: (num.ln() - den.ln()).exp(), quad_err: num.rel_error + den.rel_error })
}

/// `lim_{L -> inf}` of [`tail_ratio`]:
/// `psi_s(R; xi) T / (T - s) * lim p(L) / p(L + xi)`.
///
/// The posterior density carries the factor `(T - s)/T` from the kernel
/// ratio; at large `z` everything else in it tends to one, which is where the
/// `T / (T - s)` comes from. Families without a closed-form density ratio
/// use a sweep over `L`.
pub fn tail_ratio_limit(law: &ConditionalLaw) -> Result<f64> {
    let obs = law.anchor();
    let big_t = law.params().horizon;
    match law.prior().tail_density_ratio_limit(obs.xi) {
        Some(r) => Ok(law.normalizer() * big_t / (big_t - obs.s) * r),
        None => tail_ratio_sweep(law),
    }
}

/// `psi_s(R; xi) * lim p(L) / p(L + xi)`, the limit without the
/// `T / (T - s)` factor. Kept for comparison with [`tail_ratio_limit`].
pub fn tail_ratio_limit_without_time_factor(law: &ConditionalLaw) -> Result<f64> {
    let big_t = law.params().horizon;
    Ok(tail_ratio_limit(law)? * (big_t - law.anchor().s) / big_t)
}

fn tail_ratio_sweep(law: &ConditionalLaw) -> Result<f64> {
    let scale = law.prior().scale();
    let mut prev: Option<f64> = None;
    let mut last_change = f64::INFINITY;
    for k in 1..=12 {
        let l = scale * 10f64.powi(k);
        let r = match tail_ratio(law, l) {
            Ok(r) => r.value,
            Err(e) if e.is_numerical() => {
                return Err(Error::NonConvergence { estimate: prev.unwrap_or(f64::NAN), rel_error: last_change })
            }
            Err(e) => return Err(e),
        };
        if let Some(p) = prev {
            last_change = (r / p - 1.0).abs();
            if last_change < 1e-4 {
                return Ok(r);
            }
        }
        prev = Some(r);
    }
    Err(Error::NonConvergence { estimate: prev.unwrap_or(f64::NAN), rel_error: last_change })
}

/// Full report at the law's anchor.
pub fn report(law: &ConditionalLaw) -> Result<ReservingReport> {
    let u = best_estimate(law)?;
    let v = conditional_variance(law)?;
    let mut quantiles = Vec::with_capacity(REPORT_LEVELS.len());
    for &p in &REPORT_LEVELS {
        quantiles.push((p, law.quantile(p)?));
    }
    let obs = law.anchor();
    Ok(ReservingReport {
        at: obs,
        best_estimate_ultimate: u.value,
        reserve: u.value - obs.xi,
        variance: v.value,
        quantiles,
        quadrature_error: u.quad_err.max(v.quad_err),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::PriorLaw;
    use crate::stable::BridgeParams;
    use std::sync::Arc;

    fn gpd_law(s: f64, xi: f64) -> ConditionalLaw {
        let p = BridgeParams::new(1.0, 1.0).unwrap();
        let prior = Arc::new(PriorLaw::gpd(1.0, 1.0, 0.25).unwrap());
        ConditionalLaw::new(p, prior, Observation::new(s, xi).unwrap()).unwrap()
    }

    #[test]
    fn unconditional_values() {
        let law = gpd_law(0.0, 0.0);
        assert!((best_estimate(&law).unwrap().value - 7.0 / 3.0).abs() < 1e-14);
        assert!((conditional_variance(&law).unwrap().value - 32.0 / 9.0).abs() < 1e-13);
        let m = paid_claims_conditional_mean(&law, 0.4).unwrap().value;
        assert!((m - 0.4 * 7.0 / 3.0).abs() < 1e-14);
        let d = expected_exceedance(&law, 0.4, 0.0).unwrap().value;
        assert!((d - m).abs() < 1e-14);
    }

    #[test]
    fn variance_is_second_moment_minus_square() {
        let law = gpd_law(0.3, 0.4);
        let u = best_estimate(&law).unwrap().value;
        let v = conditional_variance(&law).unwrap().value;
        let m2 = paid_claims_conditional_second_moment(&law, 1.0).unwrap().value;
        assert!(v > 0.0);
        assert!(((m2 - u * u) - v).abs() < 1e-8 * m2);
        assert!(u >= 0.4);
    }

    #[test]
    fn linear_branch_is_exact() {
        let law = gpd_law(0.2, 0.5);
        let m = paid_claims_conditional_mean(&law, 0.7).unwrap().value;
        for &k in &[0.0, 0.2, 0.5] {
            let d = expected_exceedance(&law, 0.7, k).unwrap().value;
            assert!((d - (m - k)).abs() < 1e-12);
        }
    }

    #[test]
    fn exceedance_is_continuous_decreasing_and_convex() {
        let law = gpd_law(0.2, 0.5);
        let ks: Vec<f64> = (0..40).map(|i| 0.3 + 0.1 * i as f64).collect();
        let d: Vec<f64> = ks.iter().map(|&k| expected_exceedance(&law, 0.7, k).unwrap().value).collect();
        for w in d.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for w in d.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
        // across the branch boundary at K = xi
        let below = expected_exceedance(&law, 0.7, 0.5).unwrap().value;
        let above = expected_exceedance(&law, 0.7, 0.5 + 1e-9).unwrap().value;
        assert!((below - above).abs() < 1e-8);
    }

    #[test]
    fn exceedance_matches_forward_bridge_form() {
        // mean - K + int_{z > xi} [(K - xi) F(K - xi; z - xi) - M(K - xi; z - xi)] nu_s(dz)
        let law = gpd_law(0.2, 0.5);
        let (t, k) = (0.7, 1.2);
        let (a, b, u) = (0.5, 0.3, k - 0.5);
        let m = paid_claims_conditional_mean(&law, t).unwrap().value;
        let corr = law
            .integrate(|_, d| {
                let v = d - u;
                let (f, mm) = if v <= 0.0 { (1.0, a / (a + b) * d) } else { (inc_cdf(1.0, a, b, u, v), inc_first_moment(1.0, a, b, u, v)) };
                finite(u * f - mm)
            })
            .unwrap()
            .get();
        let d = expected_exceedance(&law, t, k).unwrap().value;
        assert!((m - k + corr - d).abs() < 1e-8, "{} vs {d}", m - k + corr);
    }

    #[test]
    fn exceedance_at_horizon_is_terminal_call() {
        let law = gpd_law(0.2, 0.5);
        let k = 1.7;
        let d = expected_exceedance(&law, 1.0, k).unwrap().value;
        let direct = law.integrate_from(k, |_, off| finite(off)).unwrap().get();
        assert!((d - direct).abs() < 1e-8 * direct);
        // and D at T for large K approaches it from the smaller-t side
        let d9 = expected_exceedance(&law, 1.0 - 1e-6, k).unwrap().value;
        assert!((d9 - d).abs() < 1e-3 * d);
    }

    #[test]
    fn full_reserve_ceded() {
        let law = gpd_law(0.3, 0.6);
        let layer = LayerSpec { attachment: 0.0, limit: None, payment_dates: vec![1.0] };
        let sched = layer_recovery_schedule(&law, &layer).unwrap();
        let r = best_estimate_reserve(&law).unwrap().value;
        assert_eq!(sched.payments.len(), 1);
        assert!((sched.payments[0].expected_payment - r).abs() < 1e-12);
    }

    #[test]
    fn layer_telescopes_and_drops_anchor_dates() {
        let law = gpd_law(0.2, 0.5);
        let layer = LayerSpec { attachment: 1.2, limit: Some(0.8), payment_dates: vec![0.2, 0.5, 0.8, 1.0] };
        let sched = layer_recovery_schedule(&law, &layer).unwrap();
        assert_eq!(sched.warnings.len(), 1);
        assert_eq!(sched.payments.len(), 3);
        let sum: f64 = sched.payments.iter().map(|p| p.expected_payment).sum();
        let end = expected_exceedance(&law, 1.0, 1.2).unwrap().value - expected_exceedance(&law, 1.0, 2.0).unwrap().value;
        assert!((sum - end).abs() < 1e-10);
        assert!(sched.payments.iter().all(|p| p.expected_payment >= -1e-12));
        let bad = LayerSpec { attachment: 1.2, limit: None, payment_dates: vec![0.5, 0.9] };
        assert!(layer_recovery_schedule(&law, &bad).is_err());
    }

    #[test]
    fn cvar_limits_and_monotone() {
        let law = gpd_law(0.2, 0.5);
        let m = paid_claims_conditional_mean(&law, 0.7).unwrap().value;
        let near = conditional_value_at_risk(&law, 0.7, 0.5 + 1e-9).unwrap().value;
        assert!((near - m).abs() < 1e-6);
        let mut prev = 0.0;
        for i in 1..30 {
            let th = 0.5 + 0.1 * i as f64;
            let v = conditional_value_at_risk(&law, 0.7, th).unwrap().value;
            assert!(v >= th);
            assert!(v >= prev - 1e-10);
            prev = v;
        }
        assert!(conditional_value_at_risk(&law, 0.7, 0.4).is_err());
    }

    #[test]
    fn tail_ratio_exponential() {
        let p = BridgeParams::new(1.0, 1.0).unwrap();
        let prior = Arc::new(PriorLaw::exponential(1.0).unwrap());
        let law = ConditionalLaw::new(p, prior, Observation::new(0.5, 0.4).unwrap()).unwrap();
        let lim = tail_ratio_limit(&law).unwrap();
        let r = tail_ratio(&law, 1000.0).unwrap().value;
        assert!((r / lim - 1.0).abs() < 1e-2, "{r} vs {lim}");
        let printed = tail_ratio_limit_without_time_factor(&law).unwrap();
        assert!((lim / printed - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_tail_sweep_fails() {
        let p = BridgeParams::new(1.0, 1.0).unwrap();
        let grid = vec![0.5, 1.0, 2.0, 3.0];
        let prior = Arc::new(PriorLaw::tabulated(grid, vec![0.2, 1.0, 0.5, 0.1]).unwrap());
        let law = ConditionalLaw::new(p, prior, Observation::new(0.5, 0.4).unwrap()).unwrap();
        assert!(tail_ratio_limit(&law).is_err());
    }

    #[test]
    fn report_fields() {
        let law = gpd_law(0.4, 0.9);
        let r = report(&law).unwrap();
        assert!((r.reserve - (r.best_estimate_ultimate - 0.9)).abs() < 1e-15);
        assert!(r.quantiles.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(r.quantiles[0].1 > 0.9);
        let rec = r.record();
        assert_eq!(rec.t, 0.4);
        assert_eq!(rec.q50, r.quantiles[2].1);
        let levy = ConditionalLaw::unconditional(BridgeParams::new(1.0, 1.0).unwrap(), Arc::new(PriorLaw::levy(1.0, 1.0).unwrap())).unwrap();
        assert!(matches!(best_estimate(&levy), Err(Error::InfiniteMoment(_))));
    }
}
