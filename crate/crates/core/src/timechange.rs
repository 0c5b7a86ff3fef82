//! Deterministic operational time driven by a marginal exposure profile:
//! `tau(t) = T int_0^t eps / int_0^T eps`. The time-changed paid-claims
//! process is the plain one read at `tau(t)`, so every reserving and
//! simulation routine is reused by mapping times through `tau`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrb::{ConditionalLaw, Observation};
use crate::prior::PriorLaw;
use crate::stable::BridgeParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExposureCurve {
    /// Craighead curve: exposure proportional to the Weibull density.
    Weibull { a: f64, b: f64 },
    /// Bucketed exposure: `exposure[i]` applies on `[times[i], times[i+1])`,
    /// the last bucket runs to the horizon. `times[0]` must be zero.
    Tabulated { times: Vec<f64>, exposure: Vec<f64> },
    Identity,
}

/// Where the marginal exposure of a Weibull curve peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExposurePeak {
    At(f64),
    /// `b <= 1`: the marginal exposure decreases for all `t`.
    MonotoneDecreasing,
}

impl ExposureCurve {
    pub fn validate(&self) -> Result<()> {
        match self {
            &ExposureCurve::Weibull { a, b } => {
                if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
                    return Err(Error::param(format!("Weibull curve needs a, b > 0, got ({a}, {b})")));
                }
            }
            ExposureCurve::Tabulated { times, exposure } => {
                if times.is_empty() || times.len() != exposure.len() {
                    return Err(Error::param("tabulated exposure needs equal-length, nonempty times and exposure"));
                }
                if times[0] != 0.0 {
                    return Err(Error::param("tabulated exposure must start at time 0"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::param("exposure times must be finite and strictly increasing"));
                }
                if exposure.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                    return Err(Error::param("exposures must be finite and nonnegative"));
                }
                if exposure.iter().all(|&e| e == 0.0) {
                    return Err(Error::param("exposure is zero everywhere"));
                }
            }
            ExposureCurve::Identity => {}
        }
        Ok(())
    }

    /// `t*` for a Weibull curve: `a ((b - 1)/b)^{1/b}` when `b > 1`.
    pub fn exposure_peak(&self) -> Result<ExposurePeak> {
        match *self {
            ExposureCurve::Weibull { a, b } => {
                self.validate()?;
                if b <= 1.0 {
                    Ok(ExposurePeak::MonotoneDecreasing)
                } else {
                    Ok(ExposurePeak::At(a * ((b - 1.0) / b).powf(1.0 / b)))
                }
            }
            _ => Err(Error::domain("the exposure peak is defined for Weibull curves only")),
        }
    }
}

/// An exposure curve bound to a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    curve: ExposureCurve,
    horizon: f64,
    /// Tabulated only: bucket edges (ending at `T`) and cumulative exposure.
    edges: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TimeChange {
    pub fn new(curve: ExposureCurve, horizon: f64) -> Result<Self> {
        curve.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param(format!("horizon must be positive, got {horizon}")));
        }
        let (mut edges, mut cumulative) = (Vec::new(), Vec::new());
        if let ExposureCurve::Tabulated { times, exposure } = &curve {
            if *times.last().expect("validated") >= horizon {
                return Err(Error::param(format!("exposure buckets must start before the horizon {horizon}")));
            }
            edges = times.clone();
            edges.push(horizon);
            cumulative.push(0.0);
            let mut acc = 0.0;
            for (i, e) in exposure.iter().enumerate() {
                acc += e * (edges[i + 1] - edges[i]);
                cumulative.push(acc);
            }
        }
        Ok(Self { curve, horizon, edges, cumulative })
    }

    pub fn identity(horizon: f64) -> Result<Self> {
        Self::new(ExposureCurve::Identity, horizon)
    }

    pub fn curve(&self) -> &ExposureCurve {
        &self.curve
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.curve, ExposureCurve::Identity)
    }

    fn check(&self, t: f64, what: &str) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::domain(format!("{what} must lie in [0, {}], got {t}", self.horizon)));
        }
        Ok(())
    }

    /// `tau(t)`.
    pub fn operational_time(&self, t: f64) -> Result<f64> {
        self.check(t, "time")?;
        let big_t = self.horizon;
        if t == big_t {
            return Ok(big_t);
        }
        Ok(match &self.curve {
            ExposureCurve::Identity => t,
            &ExposureCurve::Weibull { a, b } => {
                let num = -(-(t / a).powf(b)).exp_m1();
                let den = -(-(big_t / a).powf(b)).exp_m1();
                big_t * num / den
            }
            ExposureCurve::Tabulated { exposure, .. } => {
                let i = self.bucket(t);
                let acc = self.cumulative[i] + exposure[i] * (t - self.edges[i]);
                big_t * acc / self.cumulative[self.cumulative.len() - 1]
            }
        })
    }

    fn bucket(&self, t: f64) -> usize {
        // last edge index with edges[i] <= t, excluding the horizon edge
        let n = self.edges.len() - 1;
        self.edges[..n].partition_point(|&e| e <= t).saturating_sub(1)
    }

    /// Smallest `t` with `tau(t) = u`.
    pub fn calendar_time(&self, u: f64) -> Result<f64> {
        self.check(u, "operational time")?;
        let big_t = self.horizon;
        if u == big_t {
            return Ok(big_t);
        }
        Ok(match &self.curve {
            ExposureCurve::Identity => u,
            &ExposureCurve::Weibull { a, b } => {
                let den = -(-(big_t / a).powf(b)).exp_m1();
                a * (-(-u * den / big_t).ln_1p()).powf(1.0 / b)
            }
            ExposureCurve::Tabulated { exposure, .. } => {
                let target = u / big_t * self.cumulative[self.cumulative.len() - 1];
                // first bucket whose cumulative end reaches the target with positive exposure
                let mut i = 0;
                while i + 1 < self.cumulative.len() - 1 && self.cumulative[i + 1] < target {
                    i += 1;
                }
                while exposure[i] == 0.0 && i + 1 < exposure.len() {
                    i += 1;
                }
                if exposure[i] == 0.0 {
                    self.edges[i]
                } else {
                    (self.edges[i] + (target - self.cumulative[i]) / exposure[i]).min(self.edges[i + 1])
                }
            }
        })
    }

    /// `tau'(t) = T eps(t) / int_0^T eps`.
    pub fn operational_rate(&self, t: f64) -> Result<f64> {
        self.check(t, "time")?;
        let big_t = self.horizon;
        Ok(match &self.curve {
            ExposureCurve::Identity => 1.0,
            &ExposureCurve::Weibull { a, b } => {
                let den = -(-(big_t / a).powf(b)).exp_m1();
                let x = t / a;
                let eps = if t == 0.0 {
                    if b < 1.0 {
                        f64::INFINITY
                    } else if b == 1.0 {
                        1.0 / a
                    } else {
                        0.0
                    }
                } else {
                    b / a * x.powf(b - 1.0) * (-x.powf(b)).exp()
                };
                big_t * eps / den
            }
            ExposureCurve::Tabulated { exposure, .. } => {
                let i = self.bucket(t.min(self.edges[self.edges.len() - 2]).max(0.0));
                let i = if t >= big_t { exposure.len() - 1 } else { i };
                big_t * exposure[i] / self.cumulative[self.cumulative.len() - 1]
            }
        })
    }

    /// The observation `(t, paid)` seen on the operational clock.
    pub fn observation(&self, t: f64, paid: f64) -> Result<Observation> {
        Observation::new(self.operational_time(t)?, paid)
    }

    /// Conditional law given a calendar-time observation.
    pub fn conditional_law(&self, params: BridgeParams, prior: Arc<PriorLaw>, t: f64, paid: f64) -> Result<ConditionalLaw> {
        self.check_params(&params)?;
        ConditionalLaw::new(params, prior, self.observation(t, paid)?)
    }

    fn check_params(&self, params: &BridgeParams) -> Result<()> {
        if params.horizon != self.horizon {
            return Err(Error::param(format!(
                "time change horizon {} differs from the model horizon {}",
                self.horizon, params.horizon
            )));
        }
        Ok(())
    }

    /// `E[xi^tau_t] = tau(t)/T E[U]`.
    pub fn expected_development(&self, t: f64, prior_mean: f64) -> Result<f64> {
        Ok(self.operational_time(t)? / self.horizon * prior_mean)
    }
}
