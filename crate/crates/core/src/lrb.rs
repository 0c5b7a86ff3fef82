//! The stable-1/2 random bridge: the `psi` normalizers, the conditional law
//! of the terminal value given an observation, and the Markov transition.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{open_uniform, PriorLaw};
use crate::quad::{CdfTable, Integral};
use crate::specfun::LogWeightedValue;
use crate::stable::{log_density_ct, BridgeParams};

/// A time-stamped paid-to-date reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub s: f64,
    pub xi: f64,
}

impl Observation {
    pub const ORIGIN: Self = Self { s: 0.0, xi: 0.0 };

    pub fn new(s: f64, xi: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("observation time must be nonnegative, got {s}")));
        }
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::domain(format!("paid amount must be nonnegative, got {xi}")));
        }
        if s == 0.0 && xi != 0.0 {
            return Err(Error::domain(format!("paid amount at time zero must be zero, got {xi}")));
        }
        Ok(Self { s, xi })
    }

    fn check_within(&self, params: &BridgeParams) -> Result<()> {
        if !(self.s < params.horizon) {
            return Err(Error::domain(format!(
                "observation time {} is not before the horizon {}",
                self.s, params.horizon
            )));
        }
        Ok(())
    }

    /// Error unless `later` follows `self` on a nondecreasing path.
    pub fn check_succeeded_by(&self, later: &Observation) -> Result<()> {
        if !(later.s > self.s) {
            return Err(Error::domain(format!("observation times must increase: {} then {}", self.s, later.s)));
        }
        if later.xi < self.xi {
            return Err(Error::domain(format!("paid claims cannot decrease: {} then {}", self.xi, later.xi)));
        }
        Ok(())
    }
}

/// `ln` of the Radon-Nikodym factor `f_{T-s}(z - xi) / f_T(z)`, with the
/// offset `d = z - xi` supplied exactly.
pub fn log_rn_factor(params: &BridgeParams, obs: &Observation, z: f64, d: f64) -> f64 {
    if obs.s == 0.0 {
        return 0.0;
    }
    if !(d > 0.0) {
        return f64::NEG_INFINITY;
    }
    let c = params.c;
    let big_t = params.horizon;
    let rest = big_t - obs.s;
    let ratio = if obs.xi == 0.0 { 0.0 } else { 1.5 * (z.ln() - d.ln()) };
    (rest / big_t).ln() + ratio + 0.5 * c * c * (big_t * big_t / z - rest * rest / d)
}

/// Length scale for quadrature of posterior integrands beyond `xi`.
fn posterior_scale(params: &BridgeParams, prior: &PriorLaw, obs: &Observation) -> f64 {
    let rest = params.c * (params.horizon - obs.s);
    prior.scale().min(rest * rest).max(1e-300)
}

/// `psi_s(R; xi) = int f_{T-s}(z - xi)/f_T(z) nu(dz)`, with its error.
pub fn psi_integral(params: &BridgeParams, prior: &PriorLaw, obs: &Observation) -> Result<Integral> {
    obs.check_within(params)?;
    if obs.s == 0.0 {
        return Ok(Integral { value: LogWeightedValue::from_log(0.0), rel_error: 0.0 });
    }
    let f = |z: f64, d: f64| LogWeightedValue::from_log(log_rn_factor(params, obs, z, d));
    prior.integrate_against_scaled(f, obs.xi, posterior_scale(params, prior, obs))
}

pub fn psi_mass(params: &BridgeParams, prior: &PriorLaw, obs: &Observation) -> Result<f64> {
    Ok(psi_integral(params, prior, obs)?.get())
}

/// Markov transition density of the random bridge from `from` to `to`:
/// `psi_t(y) / psi_s(x) f_{t-s}(y - x)`.
pub fn transition_density(params: &BridgeParams, prior: &PriorLaw, from: &Observation, to: &Observation) -> Result<f64> {
    from.check_succeeded_by(to)?;
    to.check_within(params)?;
    let d = to.xi - from.xi;
    if d <= 0.0 {
        return Ok(0.0);
    }
    let a = psi_integral(params, prior, from)?;
    let b = psi_integral(params, prior, to)?;
    Ok((b.ln() - a.ln() + log_density_ct(params.c * (to.s - from.s), d)).exp())
}

/// Law of the ultimate loss given one observation of the paid-claims
/// process (by the Markov property, the whole history up to that time).
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    params: BridgeParams,
    prior: Arc<PriorLaw>,
    anchor: Observation,
    log_psi: f64,
    psi_error: f64,
    table: OnceLock<CdfTable>,
}

impl ConditionalLaw {
    pub fn new(params: BridgeParams, prior: Arc<PriorLaw>, anchor: Observation) -> Result<Self> {
        params.validate()?;
        let psi = psi_integral(&params, &prior, &anchor)?;
        if psi.value.is_zero() || psi.value.sign < 0 {
            return Err(Error::IllConditioned(format!(
                "the observation ({}, {}) has zero likelihood under the prior",
                anchor.s, anchor.xi
            )));
        }
        Ok(Self { params, prior, anchor, log_psi: psi.ln(), psi_error: psi.rel_error, table: OnceLock::new() })
    }

    /// The prior itself (anchor at the origin).
    pub fn unconditional(params: BridgeParams, prior: Arc<PriorLaw>) -> Result<Self> {
        Self::new(params, prior, Observation::ORIGIN)
    }

    pub fn params(&self) -> &BridgeParams {
        &self.params
    }

    pub fn prior(&self) -> &PriorLaw {
        &self.prior
    }

    pub fn prior_arc(&self) -> &Arc<PriorLaw> {
        &self.prior
    }

    pub fn anchor(&self) -> Observation {
        self.anchor
    }

    pub fn normalizer(&self) -> f64 {
        self.log_psi.exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_psi
    }

    /// Relative quadrature error of the cached normalizer.
    pub fn normalizer_error(&self) -> f64 {
        self.psi_error
    }

    /// `ln` posterior density with the offset `d = z - xi` given exactly.
    pub fn log_density_offset(&self, z: f64, d: f64) -> f64 {
        if self.anchor.s > 0.0 && !(d > 0.0) {
            return f64::NEG_INFINITY;
        }
        let lp = self.prior.log_density(z);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + log_rn_factor(&self.params, &self.anchor, z, d) - self.log_psi
    }

    pub fn log_density(&self, z: f64) -> f64 {
        self.log_density_offset(z, z - self.anchor.xi)
    }

    pub fn density(&self, z: f64) -> f64 {
        self.log_density(z).exp()
    }

    /// `int f(z, z - xi) nu_s(dz)`.
    pub fn integrate<F>(&self, f: F) -> Result<Integral>
    where
        F: Fn(f64, f64) -> LogWeightedValue,
    {
        self.integrate_from(self.anchor.xi, f)
    }

    /// `int_lower^inf f(z, z - lower) nu_s(dz)` for `lower >= xi`.
    pub fn integrate_from<F>(&self, lower: f64, f: F) -> Result<Integral>
    where
        F: Fn(f64, f64) -> LogWeightedValue,
    {
        let xi = self.anchor.xi;
        if lower < xi {
            return Err(Error::domain(format!("integration bound {lower} is below the paid amount {xi}")));
        }
        let base = lower - xi;
        let g = |z: f64, off: f64| {
            let d = if base == 0.0 { off } else { base + off };
            let k = log_rn_factor(&self.params, &self.anchor, z, d);
            if k == f64::NEG_INFINITY {
                return LogWeightedValue::ZERO;
            }
            f(z, off).scale_log(k - self.log_psi)
        };
        let scale = posterior_scale(&self.params, &self.prior, &self.anchor);
        let mut r = self.prior.integrate_against_scaled(g, lower, scale)?;
        r.rel_error += self.psi_error;
        Ok(r)
    }

    /// Re-anchor at a later observation; the result depends only on the new
    /// observation, which is what makes successive updates consistent.
    pub fn reanchor(&self, obs: Observation) -> Result<Self> {
        if obs == self.anchor {
            return Ok(self.clone());
        }
        self.anchor.check_succeeded_by(&obs)?;
        Self::new(self.params, Arc::clone(&self.prior), obs)
    }

    fn table(&self) -> Result<&CdfTable> {
        if let Some(t) = self.table.get() {
            return Ok(t);
        }
        let (lo, hi) = self.prior.support();
        let xi = self.anchor.xi;
        let dens = |z: f64, d: f64| self.log_density_offset(z, d).exp();
        let t = CdfTable::build(
            &dens,
            xi,
            (lo - xi).max(0.0),
            hi,
            posterior_scale(&self.params, &self.prior, &self.anchor),
            &self.prior.breakpoints(),
        )?;
        let _ = self.table.set(t);
        Ok(self.table.get().expect("just set"))
    }

    pub fn cdf(&self, z: f64) -> Result<f64> {
        let dens = |z: f64, d: f64| self.log_density_offset(z, d).exp();
        Ok(self.table()?.cdf(&dens, z))
    }

    pub fn survival(&self, z: f64) -> Result<f64> {
        let dens = |z: f64, d: f64| self.log_density_offset(z, d).exp();
        Ok(self.table()?.survival(&dens, z))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        let dens = |z: f64, d: f64| self.log_density_offset(z, d).exp();
        self.table()?.quantile(&dens, p)
    }

    /// Exact-to-tabulation inverse-CDF draw of the ultimate loss.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        if self.anchor.s == 0.0 {
            return self.prior.sample(rng);
        }
        let q = open_uniform(rng);
        let dens = |z: f64, d: f64| self.log_density_offset(z, d).exp();
        let t = self.table()?;
        if q < 0.5 {
            t.upper_quantile(&dens, q)
        } else {
            t.quantile(&dens, 1.0 - q)
        }
    }
}
