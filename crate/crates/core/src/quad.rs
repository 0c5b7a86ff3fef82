//! Double-exponential quadrature with log-scaled accumulation.
//!
//! Integrands are handed two coordinates: the abscissa `z` and its offset
//! `z - origin` from a caller-chosen origin, computed without cancellation.
//! Kernels such as `(z - xi)^{-3/2} exp(-a/(z - xi))` must see the offset
//! exactly; recovering it as `z - xi` after the fact loses every digit once
//! the node sits within an ulp of `xi`.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::specfun::LogWeightedValue;

/// Result of a quadrature: the value in log form plus the achieved
/// relative-error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: LogWeightedValue,
    pub rel_error: f64,
}

impl Integral {
    pub fn zero() -> Self {
        Self { value: LogWeightedValue::ZERO, rel_error: 0.0 }
    }

    pub fn get(&self) -> f64 {
        self.value.value()
    }

    pub fn ln(&self) -> f64 {
        self.value.log_magnitude
    }

    /// Sum of two integrals with errors combined in absolute terms.
    pub fn add(self, other: Integral) -> Integral {
        let value = self.value.add(other.value);
        if value.is_zero() {
            return Integral { value, rel_error: self.rel_error.max(other.rel_error) };
        }
        let abs_err = |i: &Integral| i.rel_error * (i.value.log_magnitude - value.log_magnitude).exp();
        Integral { value, rel_error: abs_err(&self) + abs_err(&other) }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Target relative error.
    pub rel_tol: f64,
    /// Absolute floor, relative to the L1 norm of the integrand.
    pub abs_floor: f64,
    /// Give up above this error after the last level.
    pub fail_tol: f64,
    pub max_level: u32,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_floor: 1e-13, fail_tol: 1e-8, max_level: 10 }
    }
}

/// Running signed sum of log-weighted terms, rescaled on every new maximum.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    signed: f64,
    abs: f64,
}

impl LogSum {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, signed: 0.0, abs: 0.0 }
    }

    fn push(&mut self, v: LogWeightedValue) {
        if v.is_zero() {
            return;
        }
        if v.log_magnitude > self.max {
            let r = (self.max - v.log_magnitude).exp();
            self.signed *= r;
            self.abs *= r;
            self.max = v.log_magnitude;
        }
        let e = (v.log_magnitude - self.max).exp();
        self.signed += f64::from(v.sign) * e;
        self.abs += e;
    }
}

/// `ln cosh(u)` without overflow.
fn ln_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// A node of a transformed rule: absolute abscissa, offset from the origin,
/// log of the weight (Jacobian, without the step h).
struct Node {
    z: f64,
    offset: f64,
    ln_w: f64,
}

/// One level-refining double-exponential sum.
///
/// `node(t)` maps the rule variable to a node (or `None` outside the domain).
fn de_sum<N, F>(node: N, t_lo: f64, t_hi: f64, f: &F, opts: &QuadOptions) -> Result<Integral>
where
    N: Fn(f64) -> Option<Node>,
    F: Fn(f64, f64) -> LogWeightedValue,
{
    let mut sum = LogSum::new();
    let eval = |t: f64, sum: &mut LogSum| -> Result<()> {
        if let Some(n) = node(t) {
            if n.ln_w == f64::NEG_INFINITY {
                return Ok(());
            }
            let v = f(n.z, n.offset);
            if v.sign != 0 && !v.log_magnitude.is_finite() {
                return Err(Error::IllConditioned(format!(
                    "integrand is not finite at z = {:e} (offset {:e})",
                    n.z, n.offset
                )));
            }
            sum.push(v.scale_log(n.ln_w));
        }
        Ok(())
    };
    // level 0: integer nodes
    let j_lo = t_lo.ceil() as i64;
    let j_hi = t_hi.floor() as i64;
    for j in j_lo..=j_hi {
        eval(j as f64, &mut sum)?;
    }
    let mut h = 1.0;
    let mut prev: Option<(f64, f64)> = None; // (scaled value, max) of previous level
    let mut last_rel = f64::INFINITY;
    for level in 1..=opts.max_level {
        h *= 0.5;
        let n_lo = (t_lo / h).ceil() as i64;
        let n_hi = (t_hi / h).floor() as i64;
        let mut k = n_lo;
        if k % 2 == 0 {
            k += 1;
        }
        while k <= n_hi {
            eval(k as f64 * h, &mut sum)?;
            k += 2;
        }
        let cur = (sum.signed * h, sum.max);
        let l1 = sum.abs * h;
        if let Some((pv, pm)) = prev {
            // bring previous value onto the current scale
            let pv = pv * (pm - cur.1).exp();
            let diff = (cur.0 - pv).abs();
            let rel = if cur.0 != 0.0 { diff / cur.0.abs() } else if l1 > 0.0 { diff / l1 } else { 0.0 };
            last_rel = rel;
            let converged = diff <= opts.rel_tol * cur.0.abs() || diff <= opts.abs_floor * l1;
            if level >= 4 && converged {
                return Ok(finish(cur, rel));
            }
            if level >= 4 && sum.abs == 0.0 {
                return Ok(Integral::zero());
            }
        }
        prev = Some(cur);
    }
    let cur = prev.expect("at least one level");
    if last_rel <= opts.fail_tol {
        Ok(finish(cur, last_rel))
    } else {
        Err(Error::NonConvergence {
            estimate: finish(cur, last_rel).get(),
            rel_error: last_rel,
        })
    }
}

fn finish((scaled, max): (f64, f64), rel: f64) -> Integral {
    Integral { value: LogWeightedValue::from_value(scaled).scale_log(max), rel_error: rel }
}

/// Tanh-sinh rule on the finite interval `[a, b]`. `a_offset` is `a - origin`.
pub fn tanh_sinh<F>(f: &F, a: f64, b: f64, a_offset: f64, opts: &QuadOptions) -> Result<Integral>
where
    F: Fn(f64, f64) -> LogWeightedValue,
{
    if !(b > a) {
        return Ok(Integral::zero());
    }
    let width = b - a;
    let ln_half_width = (0.5 * width).ln();
    let node = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        // distances to both ends, each computed without cancellation
        let da = width / (1.0 + (-2.0 * u).exp());
        let db = width / (1.0 + (2.0 * u).exp());
        if da <= 0.0 || db <= 0.0 {
            return None;
        }
        let (z, offset) = if t <= 0.0 { (a + da, a_offset + da) } else { (b - db, a_offset + (width - db)) };
        let ln_w = ln_half_width + (FRAC_PI_2 * t.cosh()).ln() - 2.0 * ln_cosh(u);
        Some(Node { z, offset, ln_w })
    };
    de_sum(node, -4.5, 4.5, f, opts)
}

/// Exp-sinh rule on `[a, inf)`, nodes `a + s exp(pi/2 sinh t)`.
pub fn exp_sinh<F>(f: &F, a: f64, a_offset: f64, scale: f64, opts: &QuadOptions) -> Result<Integral>
where
    F: Fn(f64, f64) -> LogWeightedValue,
{
    let ln_s = scale.ln();
    let node = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        let d = scale * u.exp();
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        let ln_w = ln_s + (FRAC_PI_2 * t.cosh()).ln() + u;
        Some(Node { z: a + d, offset: a_offset + d, ln_w })
    };
    de_sum(node, -5.0, 5.0, f, opts)
}

/// `int_lower^upper f(z, z - origin) dz`, split at `breaks`.
///
/// `lower >= origin`; `upper = None` means infinity, in which case the last
/// piece uses the exp-sinh rule with length scale `scale`.
pub fn integrate_split<F>(
    f: &F,
    origin: f64,
    lower: f64,
    upper: Option<f64>,
    breaks: &[f64],
    scale: f64,
    opts: &QuadOptions,
) -> Result<Integral>
where
    F: Fn(f64, f64) -> LogWeightedValue,
{
    debug_assert!(lower >= origin);
    let mut points = vec![lower];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > lower && upper.map_or(true, |u| b < u))
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    points.extend(inner);
    let mut total = Integral::zero();
    for w in points.windows(2) {
        let off = if w[0] == origin { 0.0 } else { w[0] - origin };
        total = total.add(tanh_sinh(f, w[0], w[1], off, opts)?);
    }
    let last = *points.last().expect("nonempty");
    let off = if last == origin { 0.0 } else { last - origin };
    let tail = match upper {
        Some(u) => tanh_sinh(f, last, u, off, opts)?,
        None => exp_sinh(f, last, off, scale.max(f64::MIN_POSITIVE), opts)?,
    };
    Ok(total.add(tail))
}

/// Plain-valued convenience wrapper over [`integrate_split`] on `[a, b]`.
pub fn integrate_real<F>(f: F, a: f64, b: Option<f64>, scale: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let g = |z: f64, _: f64| LogWeightedValue::from_value(f(z));
    Ok(integrate_split(&g, a, a, b, &[], scale, &QuadOptions::default())?.get())
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8))
}

/// GL-8 on `[lo, hi]` in offset coordinates.
fn gl_cell<F: Fn(f64, f64) -> f64>(f: &F, origin: f64, lo: f64, hi: f64) -> f64 {
    let (x, w) = gl8();
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    x.iter()
        .zip(w)
        .map(|(&xi, &wi)| {
            let d = mid + half * xi;
            wi * f(origin + d, d)
        })
        .sum::<f64>()
        * half
}

/// Cumulative distribution of a one-dimensional density, tabulated on a
/// log-spaced grid of offsets from an origin and inverted by safeguarded
/// Newton iteration.
///
/// The density is not stored; every evaluation takes it again as an
/// argument, so the table can live inside the law that owns the density.
#[derive(Debug, Clone)]
pub struct CdfTable {
    origin: f64,
    offsets: Vec<f64>,
    cum: Vec<f64>,
    surv: Vec<f64>,
    total: f64,
}

const NODES_PER_DECADE: f64 = 30.0;
const DECADES: i32 = 30;

impl CdfTable {
    /// `density(z, z - origin)` must be finite and nonnegative; zero below
    /// `origin + lower_offset` and above `upper` (if given).
    pub fn build<F: Fn(f64, f64) -> f64>(
        density: &F,
        origin: f64,
        lower_offset: f64,
        upper: Option<f64>,
        scale: f64,
        breaks: &[f64],
    ) -> Result<Self> {
        let upper_off = upper.map(|u| u - origin);
        let mut offsets: Vec<f64> = Vec::new();
        let n = (NODES_PER_DECADE as i32) * DECADES;
        for k in -n..=n {
            let o = scale * 10f64.powf(f64::from(k) / NODES_PER_DECADE);
            if o > lower_offset && upper_off.map_or(true, |u| o < u) {
                offsets.push(o);
            }
        }
        for &b in breaks {
            let o = b - origin;
            if o > lower_offset && upper_off.map_or(true, |u| o < u) {
                offsets.push(o);
            }
        }
        if let Some(u) = upper_off {
            offsets.push(u);
        }
        offsets.sort_by(f64::total_cmp);
        offsets.dedup();
        // mass between the support start and the first node
        let first = *offsets.first().ok_or_else(|| Error::domain("empty CDF grid"))?;
        let head = if lower_offset > 0.0 {
            offsets.insert(0, lower_offset);
            0.0
        } else {
            let g = |z: f64, d: f64| LogWeightedValue::from_value(density(z, d));
            tanh_sinh(&g, origin, origin + first, 0.0, &QuadOptions { max_level: 7, fail_tol: 1e-4, ..Default::default() })
                .map(|i| i.get())
                .unwrap_or(0.0)
        };
        let mut cells = Vec::with_capacity(offsets.len());
        for w in offsets.windows(2) {
            let m = gl_cell(density, origin, w[0], w[1]);
            if !m.is_finite() || m < 0.0 {
                return Err(Error::IllConditioned(format!("density not finite near z = {:e}", origin + w[0])));
            }
            cells.push(m);
        }
        let mut cum = Vec::with_capacity(offsets.len());
        let mut acc = head;
        cum.push(acc);
        for &m in &cells {
            acc += m;
            cum.push(acc);
        }
        let mut surv = vec![0.0; offsets.len()];
        let mut acc = 0.0;
        for i in (0..cells.len()).rev() {
            acc += cells[i];
            surv[i] = acc;
        }
        let total = cum[cum.len() - 1];
        if !(total > 0.0) {
            return Err(Error::IllConditioned("density has no mass on the grid".into()));
        }
        Ok(Self { origin, offsets, cum, surv, total })
    }

    /// Unnormalized mass captured by the grid.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    fn cell_of(&self, d: f64) -> usize {
        match self.offsets.binary_search_by(|o| o.total_cmp(&d)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    pub fn cdf<F: Fn(f64, f64) -> f64>(&self, density: &F, z: f64) -> f64 {
        let d = z - self.origin;
        if d <= self.offsets[0] {
            return if d <= 0.0 { 0.0 } else { self.cum[0] / self.total };
        }
        let last = self.offsets.len() - 1;
        if d >= self.offsets[last] {
            return 1.0;
        }
        let i = self.cell_of(d);
        if i < last && self.cum[i] > self.surv[i] {
            // upper half of the distribution: subtract from one for accuracy
            let rest = gl_cell(density, self.origin, d, self.offsets[i + 1]);
            1.0 - (self.surv[i + 1] + rest) / self.total
        } else {
            ((self.cum[i] + gl_cell(density, self.origin, self.offsets[i], d)) / self.total).min(1.0)
        }
    }

    pub fn survival<F: Fn(f64, f64) -> f64>(&self, density: &F, z: f64) -> f64 {
        let d = z - self.origin;
        if d <= self.offsets[0] {
            return 1.0 - self.cdf(density, z);
        }
        let last = self.offsets.len() - 1;
        if d >= self.offsets[last] {
            return 0.0;
        }
        let i = self.cell_of(d);
        (self.surv[i + 1] + gl_cell(density, self.origin, d, self.offsets[i + 1])) / self.total
    }

    /// Quantile at probability `p`; `upper_tail` selects inversion of the
    /// survival function (`p` then means 1 - probability) for accuracy near 1.
    pub fn quantile<F: Fn(f64, f64) -> f64>(&self, density: &F, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile needs p in (0,1), got {p}")));
        }
        if p > 0.5 {
            return self.upper_quantile(density, 1.0 - p);
        }
        let target = p * self.total;
        if target <= self.cum[0] {
            // inside the head cell: bisection on the DE integral is overkill;
            // report the first node (mass below 1e-30 scale is negligible)
            return Ok(self.origin + self.offsets[0]);
        }
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(i) => return Ok(self.origin + self.offsets[i]),
            Err(i) => i - 1,
        };
        let r = target - self.cum[i];
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        Ok(self.origin + self.solve_in_cell(density, lo, hi, |d| gl_cell(density, self.origin, lo, d) - r, 1.0))
    }

    /// Point with survival probability `q`.
    pub fn upper_quantile<F: Fn(f64, f64) -> f64>(&self, density: &F, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("quantile needs q in (0,1), got {q}")));
        }
        if q >= 0.5 {
            return self.quantile(density, 1.0 - q);
        }
        let target = q * self.total;
        // surv is nonincreasing: find i with surv[i] >= target > surv[i+1]
        let n = self.surv.len();
        let mut lo_i = 0usize;
        let mut hi_i = n - 1;
        if self.surv[0] < target {
            return Ok(self.origin + self.offsets[0]);
        }
        while hi_i - lo_i > 1 {
            let mid = (lo_i + hi_i) / 2;
            if self.surv[mid] >= target {
                lo_i = mid;
            } else {
                hi_i = mid;
            }
        }
        let i = lo_i;
        let r = target - self.surv[i + 1];
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        Ok(self.origin + self.solve_in_cell(density, lo, hi, |d| gl_cell(density, self.origin, d, hi) - r, -1.0))
    }

    /// Root of the monotone `g` on `[lo, hi]` (offsets); `g' = slope_sign * density`.
    fn solve_in_cell<F, G>(&self, density: &F, lo: f64, hi: f64, g: G, slope_sign: f64) -> f64
    where
        F: Fn(f64, f64) -> f64,
        G: Fn(f64) -> f64,
    {
        let (mut a, mut b) = (lo, hi);
        let mut d = 0.5 * (a + b);
        for _ in 0..100 {
            let v = g(d);
            if v * slope_sign < 0.0 {
                a = d;
            } else {
                b = d;
            }
            let fd = density(self.origin + d, d) * slope_sign;
            let mut next = if fd != 0.0 { d - v / fd } else { f64::NAN };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - d).abs() <= 1e-15 * d.abs() || b - a <= 1e-15 * b.abs() {
                return next;
            }
            d = next;
        }
        d
    }
}
