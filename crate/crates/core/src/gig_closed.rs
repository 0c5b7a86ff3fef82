//! Closed forms for a GIG(n - 1/2, cT, gamma) terminal law.
//!
//! With this prior every posterior quantity is a ratio of polynomials in
//! the paid amount whose coefficients are moments of the IG increment law
//! `q_t = GIG(-1/2, ct, gamma)`: with `tau = T - t` and `Z ~ q_tau`,
//! `P_n(x) = E[(Z + x)^n] = sum_k C(n, k) m_tau^(n-k) x^k`, and the posterior
//! of the ultimate loss is `y^n q_tau(y - xi) dy / P_n(xi)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::prior::PriorLaw;
use crate::specfun::log_bessel_k_half_integer;

/// Highest `n` accepted unless raised with [`GigClosedForm::with_max_order`].
pub const DEFAULT_MAX_ORDER: u32 = 12;

fn check_ig(c: f64, gamma: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param(format!("activity c must be positive, got {c}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param(format!("IG needs gamma > 0, got {gamma}")));
    }
    Ok(())
}

/// IG increment density
/// `q_t(x) = ct / sqrt(2 pi) x^{-3/2} exp(-gamma^2 (x - ct/gamma)^2 / (2x))`.
pub fn ig_increment_density(c: f64, gamma: f64, t: f64, x: f64) -> Result<f64> {
    check_ig(c, gamma)?;
    if !(t > 0.0) {
        return Err(Error::domain(format!("IG time must be positive, got {t}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let ct = c * t;
    let d = gamma * x - ct;
    Ok((ct.ln() - 0.5 * (2.0 * PI).ln() - 1.5 * x.ln() - 0.5 * d * d / x).exp())
}

/// `m_t^(k) = sqrt(2/pi) gamma e^{gamma ct} (ct/gamma)^{k+1/2} K_{k-1/2}(gamma ct)`.
pub fn ig_moment(c: f64, gamma: f64, t: f64, k: u32) -> Result<f64> {
    check_ig(c, gamma)?;
    if !(t > 0.0) {
        return Err(Error::domain(format!("IG time must be positive, got {t}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let ct = c * t;
    let z = gamma * ct;
    // K_{k-1/2} = K_{(k-1)+1/2}
    let lk = log_bessel_k_half_integer(k - 1, z)?;
    Ok((0.5 * (2.0 / PI).ln() + gamma.ln() + z + (f64::from(k) + 0.5) * (ct / gamma).ln() + lk).exp())
}

/// Moments `m_t^(0..=k_max)` of one IG law.
#[derive(Debug, Clone, PartialEq)]
pub struct IgMoments {
    pub c: f64,
    pub gamma: f64,
    pub t: f64,
    values: Vec<f64>,
}

impl IgMoments {
    pub fn new(c: f64, gamma: f64, t: f64, k_max: u32) -> Result<Self> {
        let values = (0..=k_max).map(|k| ig_moment(c, gamma, t, k)).collect::<Result<Vec<_>>>()?;
        Ok(Self { c, gamma, t, values })
    }

    pub fn get(&self, k: u32) -> f64 {
        self.values[k as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `E[(Z + x)^n] = sum_k C(n, k) m^(n-k) x^k`, by Horner in `x`.
    pub fn shifted_power_mean(&self, n: u32, x: f64) -> f64 {
        let mut acc = 0.0;
        let mut binom = 1.0;
        // walk k = n, n-1, ..., 0 carrying C(n, k)
        for k in (0..=n).rev() {
            acc = acc * x + binom * self.get(n - k);
            if k > 0 {
                binom = binom * f64::from(k) / f64::from(n - k + 1);
            }
        }
        acc
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * f64::from(n - j) / f64::from(j + 1))
}

/// Mixture weights of the transition density: `weights[k]` multiplies
/// `q^(k)_{t-s} = GIG(k - 1/2, c(t-s), gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    pub n: u32,
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub weights: Vec<f64>,
}

/// The paid-claims process whose terminal law is GIG(n - 1/2, cT, gamma).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigClosedForm {
    pub c: f64,
    pub gamma: f64,
    pub n: u32,
    pub horizon: f64,
    max_order: u32,
}

impl GigClosedForm {
    pub fn new(c: f64, gamma: f64, n: u32, horizon: f64) -> Result<Self> {
        Self::with_max_order(c, gamma, n, horizon, DEFAULT_MAX_ORDER)
    }

    pub fn with_max_order(c: f64, gamma: f64, n: u32, horizon: f64, max_order: u32) -> Result<Self> {
        check_ig(c, gamma)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param(format!("horizon must be positive, got {horizon}")));
        }
        if n > max_order {
            return Err(Error::param(format!("order n = {n} exceeds the cap {max_order}")));
        }
        Ok(Self { c, gamma, n, horizon, max_order })
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    /// The matching generic prior.
    pub fn prior(&self) -> Result<PriorLaw> {
        PriorLaw::gig(f64::from(self.n) - 0.5, self.c * self.horizon, self.gamma)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(Error::domain(format!("time must lie in [0, {}), got {t}", self.horizon)));
        }
        Ok(())
    }

    fn check_paid(xi: f64) -> Result<()> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::domain(format!("paid amount must be nonnegative, got {xi}")));
        }
        Ok(())
    }

    /// `E[U^m | xi_t = xi] = P_{n+m}(xi) / P_n(xi)` over `T - t`.
    pub fn higher_moment(&self, t: f64, xi: f64, m: u32) -> Result<f64> {
        self.check_time(t)?;
        Self::check_paid(xi)?;
        let tab = IgMoments::new(self.c, self.gamma, self.horizon - t, self.n + m)?;
        Ok(tab.shifted_power_mean(self.n + m, xi) / tab.shifted_power_mean(self.n, xi))
    }

    /// `U_tT = P_{n+1}(xi) / P_n(xi)`.
    pub fn best_estimate(&self, t: f64, xi: f64) -> Result<f64> {
        self.higher_moment(t, xi, 1)
    }

    /// `E[exp(a^2 U / 2) | xi_t = xi]` for `0 < a < gamma`:
    /// `Pbar_n(xi) / P_n(xi) exp(a^2 xi / 2 + c(T - t)(gamma - gammabar))`,
    /// with `gammabar = sqrt(gamma^2 - a^2)` and `Pbar` built on IG moments
    /// with `gammabar`.
    pub fn exponential_moment(&self, t: f64, xi: f64, a: f64) -> Result<f64> {
        self.check_time(t)?;
        Self::check_paid(xi)?;
        if !(a > 0.0 && a < self.gamma) {
            return Err(Error::domain(format!("exponent parameter must lie in (0, {}), got {a}", self.gamma)));
        }
        let tau = self.horizon - t;
        let gbar = ((self.gamma - a) * (self.gamma + a)).sqrt();
        let tab = IgMoments::new(self.c, self.gamma, tau, self.n)?;
        let bar = IgMoments::new(self.c, gbar, tau, self.n)?;
        let ratio = bar.shifted_power_mean(self.n, xi) / tab.shifted_power_mean(self.n, xi);
        Ok(ratio * (0.5 * a * a * xi + self.c * tau * (self.gamma - gbar)).exp())
    }

    /// Weights `w^(k)_st(x) = C(n,k) m^(k)_{t-s} P_{n-k}(x; T-t) / P_n(x; T-s)`
    /// of `q^(k)_{t-s}`.
    pub fn mixture_weights(&self, s: f64, t: f64, x: f64) -> Result<MixtureWeights> {
        if self.n == 0 {
            return Err(Error::domain("n = 0 is the pure IG process and has no mixture"));
        }
        self.check_time(s)?;
        self.check_time(t)?;
        if !(s < t) {
            return Err(Error::domain(format!("need s < t, got {s}, {t}")));
        }
        Self::check_paid(x)?;
        let n = self.n;
        let inc = IgMoments::new(self.c, self.gamma, t - s, n)?;
        let rest = IgMoments::new(self.c, self.gamma, self.horizon - t, n)?;
        let total = IgMoments::new(self.c, self.gamma, self.horizon - s, n)?;
        let den = total.shifted_power_mean(n, x);
        let weights = (0..=n)
            .map(|k| binomial(n, k) * inc.get(k) * rest.shifted_power_mean(n - k, x) / den)
            .collect();
        Ok(MixtureWeights { n, s, t, x, weights })
    }

    /// Transition density from `(s, x)` to `(t, y)` as the GIG mixture.
    pub fn transition_density(&self, s: f64, t: f64, x: f64, y: f64) -> Result<f64> {
        if y < x {
            return Err(Error::domain(format!("paid claims cannot decrease: {x} then {y}")));
        }
        if self.n == 0 {
            return ig_process_transition(self.c, self.gamma, s, t, x, y);
        }
        let w = self.mixture_weights(s, t, x)?;
        let dt = t - s;
        let mut sum = 0.0;
        for (k, wk) in w.weights.iter().enumerate() {
            let q = PriorLaw::gig(k as f64 - 0.5, self.c * dt, self.gamma)?;
            sum += wk * q.density(y - x);
        }
        Ok(sum)
    }
}

/// With an IG terminal law (n = 0) the paid-claims process is itself an IG
/// process: the transition density is `q_{t-s}(y - x)`.
pub fn ig_process_transition(c: f64, gamma: f64, s: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(s < t) {
        return Err(Error::domain(format!("need s < t, got {s}, {t}")));
    }
    if y < x {
        return Err(Error::domain(format!("paid claims cannot decrease: {x} then {y}")));
    }
    ig_increment_density(c, gamma, t - s, y - x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrb::{transition_density, ConditionalLaw, Observation};
    use crate::quad::integrate_real;
    use crate::specfun::LogWeightedValue;
    use crate::stable::BridgeParams;
    use std::sync::Arc;

    #[test]
    fn ig_density_matches_gig() {
        let (c, g, t) = (1.3, 0.7, 0.8);
        let gig = PriorLaw::gig(-0.5, c * t, g).unwrap();
        for i in 1..50 {
            let x = 0.05 * f64::from(i) * f64::from(i);
            let a = ig_increment_density(c, g, t, x).unwrap();
            assert!((a / gig.density(x) - 1.0).abs() < 1e-12);
        }
        assert_eq!(ig_increment_density(c, g, t, 0.0).unwrap(), 0.0);
        let mass = integrate_real(|x| ig_increment_density(c, g, t, x).unwrap(), 0.0, None, 1.0).unwrap();
        assert!((mass - 1.0).abs() < 1e-9);
        assert!(ig_increment_density(c, 0.0, t, 1.0).is_err());
    }

    #[test]
    fn moments_match_polynomials() {
        for &(c, g, t) in &[(1.0, 2.0, 1.0), (0.3, 1.7, 2.5), (2.0, 0.1, 0.4)] {
            let ct: f64 = c * t;
            let gc = g * ct;
            let want = [
                1.0,
                ct / g,
                ct / g.powi(3) * (1.0 + gc),
                ct / g.powi(5) * (3.0 + 3.0 * gc + gc * gc),
                ct / g.powi(7) * (15.0 + 15.0 * gc + 6.0 * gc * gc + gc * gc * gc),
            ];
            for (k, w) in want.iter().enumerate() {
                let m = ig_moment(c, g, t, k as u32).unwrap();
                assert!((m / w - 1.0).abs() < 1e-13, "k={k}: {m} vs {w}");
            }
        }
        assert!((ig_moment(1.0, 2.0, 1.0, 3).unwrap() - 13.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn moments_by_quadrature() {
        let (c, g, t) = (1.0, 1.5, 0.7);
        for k in 1..=6 {
            let q = integrate_real(|x| x.powi(k) * ig_increment_density(c, g, t, x).unwrap(), 0.0, None, 1.0).unwrap();
            assert!((q / ig_moment(c, g, t, k as u32).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn n1_rational_form() {
        let (c, g, big_t) = (1.2, 1.8, 1.0);
        let f = GigClosedForm::new(c, g, 1, big_t).unwrap();
        for &(t, xi) in &[(0.0, 0.0), (0.3, 0.4), (0.9, 2.0)] {
            let r: f64 = c * (big_t - t);
            let want = (r * (1.0 + g * r) + 2.0 * g * g * r * xi + g.powi(3) * xi * xi) / (g * g * r + g.powi(3) * xi);
            assert!((f.best_estimate(t, xi).unwrap() / want - 1.0).abs() < 1e-14);
        }
        // run-off
        let u = f.best_estimate(1.0 - 1e-12, 0.7).unwrap();
        assert!((u - 0.7).abs() < 1e-9);
    }

    #[test]
    fn weights_n1_and_sums() {
        let (c, g) = (1.0, 2.0);
        let f = GigClosedForm::new(c, g, 1, 1.0).unwrap();
        let w = f.mixture_weights(0.2, 0.6, 0.5).unwrap();
        let w1 = c * 0.4 / (g * 0.5 + c * 0.8);
        assert!((w.weights[1] - w1).abs() < 1e-15);
        assert!((w.weights[0] - (1.0 - w1)).abs() < 1e-15);
        for n in 1..=3 {
            let f = GigClosedForm::new(c, g, n, 1.0).unwrap();
            for &(s, t, x) in &[(0.0, 0.5, 0.0), (0.1, 0.2, 3.0), (0.5, 0.95, 0.01)] {
                let w = f.mixture_weights(s, t, x).unwrap();
                let sum: f64 = w.weights.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(w.weights.iter().all(|&v| v >= 0.0));
            }
        }
        assert!(GigClosedForm::new(c, g, 0, 1.0).unwrap().mixture_weights(0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn density_identity() {
        let (c, g, dt) = (1.0, 1.3, 0.4);
        for k in 0..=4u32 {
            let qk = PriorLaw::gig(f64::from(k) - 0.5, c * dt, g).unwrap();
            let m = ig_moment(c, g, dt, k).unwrap();
            for i in 1..30 {
                let x = 0.03 * f64::from(i);
                let lhs = x.powi(k as i32) * ig_increment_density(c, g, dt, x).unwrap();
                assert!((lhs / (m * qk.density(x)) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixture_equals_generic_transition() {
        let p = BridgeParams::new(1.0, 1.0).unwrap();
        for n in 1..=2 {
            let f = GigClosedForm::new(1.0, 1.5, n, 1.0).unwrap();
            let prior = f.prior().unwrap();
            for &(s, t, x, y) in &[(0.0, 0.4, 0.0, 0.3), (0.2, 0.5, 0.3, 0.9), (0.5, 0.9, 1.0, 1.05)] {
                let from = if s == 0.0 { Observation::ORIGIN } else { Observation::new(s, x).unwrap() };
                let g = transition_density(&p, &prior, &from, &Observation::new(t, y).unwrap()).unwrap();
                let m = f.transition_density(s, t, x, y).unwrap();
                assert!((g / m - 1.0).abs() < 1e-9, "n={n} {g} vs {m}");
            }
        }
    }

    #[test]
    fn ig_prior_gives_ig_process() {
        let p = BridgeParams::new(1.1, 1.0).unwrap();
        let g = 0.9;
        let prior = PriorLaw::gig(-0.5, 1.1, g).unwrap();
        for &(s, t, x, y) in &[(0.1, 0.3, 0.2, 0.5), (0.6, 0.9, 1.0, 1.3)] {
            let a = transition_density(&p, &prior, &Observation::new(s, x).unwrap(), &Observation::new(t, y).unwrap()).unwrap();
            let b = ig_process_transition(1.1, g, s, t, x, y).unwrap();
            assert!((a / b - 1.0).abs() < 1e-10);
        }
        assert!(ig_process_transition(1.1, g, 0.1, 0.3, 0.5, 0.2).is_err());
    }

    #[test]
    fn best_estimate_matches_quadrature() {
        let p = BridgeParams::new(1.0, 1.0).unwrap();
        for n in 1..=3 {
            let f = GigClosedForm::new(1.0, 1.2, n, 1.0).unwrap();
            let prior = Arc::new(f.prior().unwrap());
            for &(t, xi) in &[(0.3, 0.2), (0.8, 1.5)] {
                let law = ConditionalLaw::new(p, Arc::clone(&prior), Observation::new(t, xi).unwrap()).unwrap();
                let q = law.integrate(|z, _| LogWeightedValue::from_value(z)).unwrap().get();
                assert!((q / f.best_estimate(t, xi).unwrap() - 1.0).abs() < 1e-8);
                let q2 = law.integrate(|z, _| LogWeightedValue::from_value(z * z)).unwrap().get();
                let m2 = f.higher_moment(t, xi, 2).unwrap();
                assert!((q2 / m2 - 1.0).abs() < 1e-8);
                assert!(m2 - f.best_estimate(t, xi).unwrap().powi(2) >= 0.0);
            }
        }
    }

    #[test]
    fn exponential_moment_matches_quadrature() {
        // c != 1 separates the corrected exponent from one without c
        for &c in &[1.0, 1.7] {
            let p = BridgeParams::new(c, 1.0).unwrap();
            let f = GigClosedForm::new(c, 2.0, 1, 1.0).unwrap();
            let law = ConditionalLaw::new(p, Arc::new(f.prior().unwrap()), Observation::new(0.5, 0.3).unwrap()).unwrap();
            let a: f64 = 1.0;
            let q = law.integrate(|z, _| LogWeightedValue::from_log(0.5 * a * a * z)).unwrap().get();
            let e = f.exponential_moment(0.5, 0.3, a).unwrap();
            assert!((q / e - 1.0).abs() < 1e-7, "c={c}: {q} vs {e}");
            let gbar = (4.0f64 - 1.0).sqrt();
            let without_c = e * (-(c - 1.0) * 0.5 * (2.0 - gbar)).exp();
            if c != 1.0 {
                assert!((q / without_c - 1.0).abs() > 1e-3);
            }
        }
        let f = GigClosedForm::new(1.0, 2.0, 1, 1.0).unwrap();
        assert!((f.exponential_moment(0.5, 0.3, 1e-9).unwrap() - 1.0).abs() < 1e-12);
        let mut prev = 1.0;
        for i in 1..18 {
            let v = f.exponential_moment(0.5, 0.3, 0.1 * f64::from(i)).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(f.exponential_moment(0.5, 0.3, 2.0).is_err());
    }

    #[test]
    fn order_cap() {
        assert!(GigClosedForm::new(1.0, 1.0, 13, 1.0).is_err());
        let f = GigClosedForm::with_max_order(1.0, 1.0, 20, 1.0, 20).unwrap();
        assert!(f.best_estimate(0.5, 1.0).unwrap().is_finite());
    }
}
