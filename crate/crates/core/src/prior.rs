//! A priori laws for the ultimate loss: densities, moments, quadrature
//! against the law, distribution functions and exact samplers.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_split, CdfTable, Integral, QuadOptions};
use crate::specfun::{
    ln_gamma, log_bessel_k, std_normal_cdf, std_normal_quantile, LogWeightedValue,
};
use crate::stable::{log_density_ct, BridgeParams};

/// Serializable description of a prior, as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Gig { lambda: f64, delta: f64, gamma: f64 },
    Gpd { sigma: f64, mu: f64, shape: f64 },
    Exponential { rate: f64 },
    HalfNormal { scale: f64 },
    #[serde(rename = "levy")]
    LevyStable {
        c: f64,
        #[serde(rename = "T")]
        horizon: f64,
    },
    Tabulated { grid: Vec<f64>, density: Vec<f64> },
}

/// Mean and second moment, with infinite values flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub mean: f64,
    pub second_moment: f64,
    pub mean_finite: bool,
    pub second_finite: bool,
}

impl MomentReport {
    fn finite(mean: f64, second: f64) -> Self {
        Self { mean, second_moment: second, mean_finite: true, second_finite: true }
    }

    fn only_mean(mean: f64) -> Self {
        Self { mean, second_moment: f64::INFINITY, mean_finite: true, second_finite: false }
    }

    fn infinite() -> Self {
        Self { mean: f64::INFINITY, second_moment: f64::INFINITY, mean_finite: false, second_finite: false }
    }

    pub fn variance(&self) -> f64 {
        if self.second_finite {
            (self.second_moment - self.mean * self.mean).max(0.0)
        } else {
            f64::INFINITY
        }
    }
}

/// GIG flavours: the two boundary limits have their own closed forms.
#[derive(Debug, Clone, Copy)]
enum GigForm {
    General,
    /// `delta = 0`: gamma with shape `lambda`, rate `gamma^2/2`.
    Gamma,
    /// `gamma = 0`: reciprocal gamma with shape `-lambda`, scale `delta^2/2`.
    ReciprocalGamma,
}

#[derive(Debug, Clone)]
struct Tabulated {
    x: Vec<f64>,
    /// log density at the knots (normalized); `-inf` where zero
    ly: Vec<f64>,
    /// Hermite slopes of `ly` (unused on intervals touching a zero knot)
    d: Vec<f64>,
}

impl Tabulated {
    fn new(grid: &[f64], density: &[f64]) -> Result<Self> {
        if grid.len() != density.len() || grid.len() < 2 {
            return Err(Error::param("tabulated prior needs matching grid and density of length >= 2"));
        }
        if !grid.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Err(Error::param("tabulated grid must be positive"));
        }
        if !grid.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::param("tabulated grid must be strictly increasing"));
        }
        if !density.iter().all(|&d| d >= 0.0 && d.is_finite()) {
            return Err(Error::param("tabulated density values must be finite and nonnegative"));
        }
        if density.iter().all(|&d| d == 0.0) {
            return Err(Error::param("tabulated density is identically zero"));
        }
        let x = grid.to_vec();
        let ly: Vec<f64> = density.iter().map(|d| d.ln()).collect();
        let d = pchip_slopes(&x, &ly);
        let mut tab = Self { x, ly, d };
        // normalize the interpolant exactly: integrate each knot interval
        let mass = tab.mass()?;
        for v in &mut tab.ly {
            *v -= mass.ln();
        }
        Ok(tab)
    }

    fn mass(&self) -> Result<f64> {
        let f = |z: f64, _: f64| LogWeightedValue::from_log(self.log_density(z));
        let opts = QuadOptions::default();
        Ok(integrate_split(&f, 0.0, self.x[0], Some(self.x[self.x.len() - 1]), &self.x, 1.0, &opts)?.get())
    }

    fn log_density(&self, z: f64) -> f64 {
        let n = self.x.len();
        if !(z >= self.x[0] && z <= self.x[n - 1]) {
            return f64::NEG_INFINITY;
        }
        let k = match self.x.binary_search_by(|v| v.total_cmp(&z)) {
            Ok(k) => return self.ly[k],
            Err(k) => k - 1,
        };
        let (y0, y1) = (self.ly[k], self.ly[k + 1]);
        let h = self.x[k + 1] - self.x[k];
        let t = (z - self.x[k]) / h;
        if y0 == f64::NEG_INFINITY || y1 == f64::NEG_INFINITY {
            // next to a zero knot the log is unbounded: interpolate the density linearly
            return ((1.0 - t) * y0.exp() + t * y1.exp()).ln();
        }
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * self.d[k]
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * self.d[k + 1]
    }
}

/// Fritsch-Carlson monotone slopes, computed separately on each run of
/// finite values.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    let mut start = 0;
    while start < n {
        if !y[start].is_finite() {
            start += 1;
            continue;
        }
        let mut end = start;
        while end + 1 < n && y[end + 1].is_finite() {
            end += 1;
        }
        pchip_run(&x[start..=end], &y[start..=end], &mut d[start..=end]);
        start = end + 1;
    }
    d
}

fn pchip_run(x: &[f64], y: &[f64], d: &mut [f64]) {
    let n = x.len();
    if n < 2 {
        return;
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        d[0] = del[0];
        d[1] = del[0];
        return;
    }
    for k in 1..n - 1 {
        if del[k - 1] * del[k] <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    let end_slope = |h0: f64, h1: f64, m0: f64, m1: f64| {
        let s = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if s.signum() != m0.signum() {
            0.0
        } else if m0.signum() != m1.signum() && s.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            s
        }
    };
    d[0] = end_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
}

#[derive(Debug, Clone)]
enum Kind {
    Gig { lambda: f64, delta: f64, gamma: f64, form: GigForm, ln_norm: f64 },
    Gpd { sigma: f64, mu: f64, shape: f64 },
    Exponential { rate: f64 },
    HalfNormal { scale: f64 },
    Levy { ct: f64 },
    Tabulated(Tabulated),
}

/// An immutable a priori law for the ultimate loss.
#[derive(Debug, Clone)]
pub struct PriorLaw {
    spec: PriorSpec,
    kind: Kind,
    table: OnceLock<CdfTable>,
}

impl PriorLaw {
    pub fn new(spec: PriorSpec) -> Result<Self> {
        let kind = match &spec {
            &PriorSpec::Gig { lambda, delta, gamma } => gig_kind(lambda, delta, gamma)?,
            &PriorSpec::Gpd { sigma, mu, shape } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::param(format!("GPD scale must be positive, got {sigma}")));
                }
                if !(mu >= 0.0 && mu.is_finite()) {
                    return Err(Error::param(format!("GPD location must be nonnegative (support in (0, inf)), got {mu}")));
                }
                if !shape.is_finite() {
                    return Err(Error::param("GPD shape must be finite"));
                }
                Kind::Gpd { sigma, mu, shape }
            }
            &PriorSpec::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::param(format!("exponential rate must be positive, got {rate}")));
                }
                Kind::Exponential { rate }
            }
            &PriorSpec::HalfNormal { scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::param(format!("half-normal scale must be positive, got {scale}")));
                }
                Kind::HalfNormal { scale }
            }
            &PriorSpec::LevyStable { c, horizon } => {
                BridgeParams::new(c, horizon)?;
                Kind::Levy { ct: c * horizon }
            }
            PriorSpec::Tabulated { grid, density } => Kind::Tabulated(Tabulated::new(grid, density)?),
        };
        Ok(Self { spec, kind, table: OnceLock::new() })
    }

    pub fn gig(lambda: f64, delta: f64, gamma: f64) -> Result<Self> {
        Self::new(PriorSpec::Gig { lambda, delta, gamma })
    }

    pub fn gpd(sigma: f64, mu: f64, shape: f64) -> Result<Self> {
        Self::new(PriorSpec::Gpd { sigma, mu, shape })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(PriorSpec::Exponential { rate })
    }

    pub fn half_normal(scale: f64) -> Result<Self> {
        Self::new(PriorSpec::HalfNormal { scale })
    }

    pub fn levy(c: f64, horizon: f64) -> Result<Self> {
        Self::new(PriorSpec::LevyStable { c, horizon })
    }

    pub fn tabulated(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        Self::new(PriorSpec::Tabulated { grid, density })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    /// `ln p(z)`, `-inf` outside the support.
    pub fn log_density(&self, z: f64) -> f64 {
        if !(z > 0.0) {
            return f64::NEG_INFINITY;
        }
        match &self.kind {
            &Kind::Gig { lambda, delta, gamma, ln_norm, .. } => {
                ln_norm + (lambda - 1.0) * z.ln() - 0.5 * (delta * delta / z + gamma * gamma * z)
            }
            &Kind::Gpd { sigma, mu, shape } => {
                if z <= mu {
                    return f64::NEG_INFINITY;
                }
                let y = (z - mu) / sigma;
                if shape == 0.0 {
                    -sigma.ln() - y
                } else {
                    let arg = shape * y;
                    if arg <= -1.0 {
                        return f64::NEG_INFINITY;
                    }
                    -sigma.ln() - (1.0 / shape + 1.0) * arg.ln_1p()
                }
            }
            &Kind::Exponential { rate } => rate.ln() - rate * z,
            &Kind::HalfNormal { scale } => {
                0.5 * (2.0 / PI).ln() - scale.ln() - 0.5 * (z / scale).powi(2)
            }
            &Kind::Levy { ct } => log_density_ct(ct, z),
            Kind::Tabulated(t) => t.log_density(z),
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        self.log_density(z).exp()
    }

    /// Support as `(lower, upper)`; `None` for an unbounded upper end.
    pub fn support(&self) -> (f64, Option<f64>) {
        match &self.kind {
            &Kind::Gpd { sigma, mu, shape } => {
                (mu, if shape < 0.0 { Some(mu - sigma / shape) } else { None })
            }
            Kind::Tabulated(t) => (t.x[0], Some(t.x[t.x.len() - 1])),
            _ => (0.0, None),
        }
    }

    /// Points where the density is not smooth (quadrature split points).
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Gpd { mu, .. } => vec![*mu],
            Kind::Tabulated(t) => t.x.clone(),
            _ => Vec::new(),
        }
    }

    /// Length scale of the density beyond its last breakpoint.
    pub fn scale(&self) -> f64 {
        match &self.kind {
            &Kind::Gig { lambda, delta, gamma, form, .. } => match form {
                GigForm::Gamma => 2.0 * lambda.max(0.5) / (gamma * gamma),
                GigForm::ReciprocalGamma => 0.5 * delta * delta / (1.0 - lambda),
                GigForm::General => {
                    let g2 = gamma * gamma;
                    let l1 = lambda - 1.0;
                    // mode of the density, written to avoid cancellation
                    let r = (l1 * l1 + g2 * delta * delta).sqrt();
                    if l1 >= 0.0 {
                        (l1 + r) / g2
                    } else {
                        delta * delta / (r - l1)
                    }
                }
            },
            &Kind::Gpd { sigma, .. } => sigma,
            &Kind::Exponential { rate } => 1.0 / rate,
            &Kind::HalfNormal { scale } => scale,
            &Kind::Levy { ct } => ct * ct,
            Kind::Tabulated(t) => t.x[t.x.len() - 1] - t.x[0],
        }
    }

    pub fn moments(&self) -> MomentReport {
        match &self.kind {
            &Kind::Gig { lambda, delta, gamma, form, .. } => match form {
                GigForm::Gamma => {
                    let rate = 0.5 * gamma * gamma;
                    MomentReport::finite(lambda / rate, lambda * (lambda + 1.0) / (rate * rate))
                }
                GigForm::ReciprocalGamma => {
                    let (a, b) = (-lambda, 0.5 * delta * delta);
                    if a > 2.0 {
                        MomentReport::finite(b / (a - 1.0), b * b / ((a - 1.0) * (a - 2.0)))
                    } else if a > 1.0 {
                        MomentReport::only_mean(b / (a - 1.0))
                    } else {
                        MomentReport::infinite()
                    }
                }
                GigForm::General => {
                    let w = gamma * delta;
                    let r = delta / gamma;
                    let k0 = log_bessel_k(lambda, w).expect("validated GIG argument");
                    let k1 = log_bessel_k(lambda + 1.0, w).expect("validated GIG argument");
                    let k2 = log_bessel_k(lambda + 2.0, w).expect("validated GIG argument");
                    MomentReport::finite((k1 - k0).exp() * r, (k2 - k0).exp() * r * r)
                }
            },
            &Kind::Gpd { sigma, mu, shape } => {
                if shape >= 1.0 {
                    return MomentReport::infinite();
                }
                let mean = mu + sigma / (1.0 - shape);
                if shape >= 0.5 {
                    return MomentReport::only_mean(mean);
                }
                let var = sigma * sigma / ((1.0 - shape).powi(2) * (1.0 - 2.0 * shape));
                MomentReport::finite(mean, var + mean * mean)
            }
            &Kind::Exponential { rate } => MomentReport::finite(1.0 / rate, 2.0 / (rate * rate)),
            &Kind::HalfNormal { scale } => {
                MomentReport::finite(scale * (2.0 / PI).sqrt(), scale * scale)
            }
            Kind::Levy { .. } => MomentReport::infinite(),
            Kind::Tabulated(_) => {
                let m1 = self.integrate_against(|z, _| LogWeightedValue::from_value(z), 0.0);
                let m2 = self.integrate_against(|z, _| LogWeightedValue::from_value(z * z), 0.0);
                match (m1, m2) {
                    (Ok(a), Ok(b)) => MomentReport::finite(a.get(), b.get()),
                    _ => MomentReport::infinite(),
                }
            }
        }
    }

    /// `int_lower^inf f(z, z - lower) p(z) dz`.
    pub fn integrate_against<F>(&self, f: F, lower: f64) -> Result<Integral>
    where
        F: Fn(f64, f64) -> LogWeightedValue,
    {
        self.integrate_against_scaled(f, lower, self.scale())
    }

    /// As [`Self::integrate_against`] with an explicit length scale for the
    /// unbounded piece.
    pub fn integrate_against_scaled<F>(&self, f: F, lower: f64, scale: f64) -> Result<Integral>
    where
        F: Fn(f64, f64) -> LogWeightedValue,
    {
        let (lo, hi) = self.support();
        if let Some(h) = hi {
            if lower >= h {
                return Ok(Integral::zero());
            }
        }
        let start = lower.max(lo);
        let g = |z: f64, off: f64| {
            let lp = self.log_density(z);
            if lp == f64::NEG_INFINITY {
                return LogWeightedValue::ZERO;
            }
            f(z, off).scale_log(lp)
        };
        integrate_split(&g, lower, start, hi, &self.breakpoints(), scale, &QuadOptions::default())
    }

    fn table(&self) -> Result<&CdfTable> {
        if let Some(t) = self.table.get() {
            return Ok(t);
        }
        let (lo, hi) = self.support();
        let dens = |z: f64, _: f64| self.density(z);
        let t = CdfTable::build(&dens, 0.0, lo, hi, self.scale(), &self.breakpoints())?;
        let _ = self.table.set(t);
        Ok(self.table.get().expect("just set"))
    }

    pub fn cdf(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Ok(0.0);
        }
        Ok(match &self.kind {
            &Kind::Gpd { sigma, mu, shape } => {
                if z <= mu {
                    0.0
                } else if shape == 0.0 {
                    -(-(z - mu) / sigma).exp_m1()
                } else {
                    let arg = shape * (z - mu) / sigma;
                    if arg <= -1.0 {
                        1.0
                    } else {
                        -((-1.0 / shape) * arg.ln_1p()).exp_m1()
                    }
                }
            }
            &Kind::Exponential { rate } => -(-rate * z).exp_m1(),
            &Kind::HalfNormal { scale } => 1.0 - 2.0 * std_normal_cdf(-z / scale),
            &Kind::Levy { ct } => 2.0 * std_normal_cdf(-ct / z.sqrt()),
            _ => {
                let dens = |z: f64, _: f64| self.density(z);
                self.table()?.cdf(&dens, z)
            }
        })
    }

    /// Inverse distribution function.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile needs p in (0,1), got {p}")));
        }
        self.quantile_from_upper(1.0 - p, p)
    }

    /// Quantile given both `p` and `q = 1 - p`, each exact where it matters.
    fn quantile_from_upper(&self, q: f64, p: f64) -> Result<f64> {
        Ok(match &self.kind {
            &Kind::Gpd { sigma, mu, shape } => {
                if shape == 0.0 {
                    mu - sigma * q.ln()
                } else {
                    mu + sigma * (-shape * q.ln()).exp_m1() / shape
                }
            }
            &Kind::Exponential { rate } => -q.ln() / rate,
            &Kind::HalfNormal { scale } => -scale * std_normal_quantile(0.5 * q)?,
            &Kind::Levy { ct } => (ct / std_normal_quantile(0.5 * p)?).powi(2),
            _ => {
                let dens = |z: f64, _: f64| self.density(z);
                let t = self.table()?;
                if q < 0.5 {
                    t.upper_quantile(&dens, q)?
                } else {
                    t.quantile(&dens, p)?
                }
            }
        })
    }

    /// One exact draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match &self.kind {
            &Kind::Gig { lambda, delta, gamma, form, .. } => Ok(sample_gig(lambda, delta, gamma, form, rng)),
            &Kind::Levy { ct } => {
                let z: f64 = loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z != 0.0 {
                        break z;
                    }
                };
                Ok((ct / z).powi(2))
            }
            _ => {
                // open-interval uniform; q is the upper-tail probability
                let q: f64 = open_uniform(rng);
                self.quantile_from_upper(q, 1.0 - q)
            }
        }
    }

    /// Error unless the prior mean is finite.
    pub fn require_finite_mean(&self) -> Result<()> {
        if self.moments().mean_finite {
            Ok(())
        } else {
            Err(Error::InfiniteMoment("the prior has infinite mean".into()))
        }
    }

    /// Error unless the prior second moment is finite.
    pub fn require_finite_second_moment(&self) -> Result<()> {
        if self.moments().second_finite {
            Ok(())
        } else {
            Err(Error::InfiniteMoment("the prior has infinite second moment".into()))
        }
    }

    /// `lim_{L -> inf} p(L) / p(L + xi)` for the families with a known tail,
    /// `None` where it is not available in closed form.
    pub fn tail_density_ratio_limit(&self, xi: f64) -> Option<f64> {
        match &self.kind {
            &Kind::Exponential { rate } => Some((rate * xi).exp()),
            Kind::HalfNormal { .. } => Some(f64::INFINITY),
            Kind::Levy { .. } => Some(1.0),
            &Kind::Gpd { sigma, shape, .. } => {
                if shape > 0.0 {
                    Some(1.0)
                } else if shape == 0.0 {
                    Some((xi / sigma).exp())
                } else {
                    // bounded support
                    None
                }
            }
            &Kind::Gig { gamma, .. } => Some((0.5 * gamma * gamma * xi).exp()),
            Kind::Tabulated(_) => None,
        }
    }
}

pub(crate) fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn gig_kind(lambda: f64, delta: f64, gamma: f64) -> Result<Kind> {
    if !(lambda.is_finite() && delta.is_finite() && gamma.is_finite()) || delta < 0.0 || gamma < 0.0 {
        return Err(Error::param(format!("GIG parameters must be finite with delta, gamma >= 0; got ({lambda}, {delta}, {gamma})")));
    }
    let ok = if lambda > 0.0 {
        gamma > 0.0
    } else if lambda == 0.0 {
        delta > 0.0 && gamma > 0.0
    } else {
        delta > 0.0
    };
    if !ok {
        return Err(Error::param(format!(
            "GIG parameters outside the permitted domain: lambda = {lambda}, delta = {delta}, gamma = {gamma}"
        )));
    }
    let (form, ln_norm) = if delta == 0.0 {
        let rate = 0.5 * gamma * gamma;
        (GigForm::Gamma, lambda * rate.ln() - ln_gamma(lambda)?)
    } else if gamma == 0.0 {
        let scale = 0.5 * delta * delta;
        (GigForm::ReciprocalGamma, -lambda * scale.ln() - ln_gamma(-lambda)?)
    } else {
        let lk = log_bessel_k(lambda, gamma * delta)?;
        (GigForm::General, lambda * (gamma / delta).ln() - std::f64::consts::LN_2 - lk)
    };
    Ok(Kind::Gig { lambda, delta, gamma, form, ln_norm })
}

/// GIG sampler.
///
/// The boundary limits are drawn through gamma variates and `lambda = -1/2`
/// by the transformation-with-multiple-roots method for the inverse
/// Gaussian. Everything else uses the rejection schemes of Hörmann and
/// Leydold (2014) for the two-parameter density
/// `x^{l-1} exp(-w/2 (x + 1/x))`, `w = gamma delta`, scaled by
/// `delta/gamma`; negative `l` is handled by reciprocation.
fn sample_gig<R: Rng + ?Sized>(lambda: f64, delta: f64, gamma: f64, form: GigForm, rng: &mut R) -> f64 {
    match form {
        GigForm::Gamma => {
            let g = Gamma::new(lambda, 1.0).expect("validated shape").sample(rng);
            g / (0.5 * gamma * gamma)
        }
        GigForm::ReciprocalGamma => {
            let g = Gamma::new(-lambda, 1.0).expect("validated shape").sample(rng);
            0.5 * delta * delta / g
        }
        GigForm::General => {
            if lambda == -0.5 {
                return sample_inverse_gaussian(delta / gamma, delta * delta, rng);
            }
            let omega = gamma * delta;
            let alpha = delta / gamma;
            let l = lambda.abs();
            let x = if l > 2.0 || omega > 3.0 {
                rou_shift(l, omega, rng)
            } else if l >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
                rou_noshift(l, omega, rng)
            } else {
                concave_split(l, omega, rng)
            };
            if lambda < 0.0 {
                alpha / x
            } else {
                alpha * x
            }
        }
    }
}

fn gig_mode(l: f64, omega: f64) -> f64 {
    if l >= 1.0 {
        (((l - 1.0) * (l - 1.0) + omega * omega).sqrt() + (l - 1.0)) / omega
    } else {
        omega / (((1.0 - l) * (1.0 - l) + omega * omega).sqrt() + (1.0 - l))
    }
}

/// Ratio of uniforms without mode shift.
fn rou_noshift<R: Rng + ?Sized>(l: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (l - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(l, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((l + 1.0) + ((l + 1.0) * (l + 1.0) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (l + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v = open_uniform(rng);
        let x = u / v;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Ratio of uniforms with the mode shifted to the origin; the bounding
/// rectangle comes from the two real roots of a cubic.
fn rou_shift<R: Rng + ?Sized>(l: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (l - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(l, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let a = -(2.0 * (l + 1.0) / omega + xm);
    let b = 2.0 * (l - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v = open_uniform(rng);
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Rejection from a three-piece hat (constant, power, exponential) for
/// `0 <= l < 1` and small `omega`, where the density is not T-concave.
fn concave_split<R: Rng + ?Sized>(l: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = gig_mode(l, omega);
    let x0 = omega / (1.0 - l);
    let k0 = ((l - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a1 = k0 * x0;
    let (k1, a2, k2, a3);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a2 = 0.0;
        k2 = x0.powf(l - 1.0);
        a3 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a2 = if l == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / l * ((2.0 / omega).powf(l) - x0.powf(l))
        };
        k2 = (2.0 / omega).powf(l - 1.0);
        a3 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a1 + a2 + a3;
    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx) = if v <= a1 {
            (x0 * v / a1, k0)
        } else {
            v -= a1;
            if v <= a2 {
                if l == 0.0 {
                    let x = omega * (omega.exp() * v).exp();
                    (x, k1 / x)
                } else {
                    let x = (x0.powf(l) + l / k1 * v).powf(1.0 / l);
                    (x, k1 * x.powf(l - 1.0))
                }
            } else {
                v -= a2;
                let a = x0.max(2.0 / omega);
                let x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                (x, k2 * (-omega / 2.0 * x).exp())
            }
        };
        if !(x > 0.0) {
            continue;
        }
        let u = rng.random::<f64>() * hx;
        if u.ln() <= (l - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Inverse Gaussian with mean `m` and shape `shape` (Michael, Schucany and
/// Haas), with the smaller root written without cancellation.
fn sample_inverse_gaussian<R: Rng + ?Sized>(m: f64, shape: f64, rng: &mut R) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    let y = n * n;
    let my = m * y;
    let x = m - 2.0 * m * my / (my + (my * my + 4.0 * m * shape * y).sqrt());
    let u: f64 = rng.random();
    if u <= m / (m + x) {
        x
    } else {
        m * m / x
    }
}
