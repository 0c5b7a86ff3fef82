//! Path simulation by dyadic bisection, and the Monte-Carlo helpers used by
//! the statistical tests.
//!
//! A path first draws its terminal value, then fills midpoints level by level
//! from the analytic midpoint law of the stable-1/2 bridge. Every path owns
//! a ChaCha8 stream selected by `(seed, path index)` and consumes it in a
//! fixed order (terminal, then level by level, left to right), so an ensemble
//! is bit-identical under any thread schedule.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bridge::midpoint_fraction;
use crate::error::{Error, Result};
use crate::lrb::{ConditionalLaw, Observation};
use crate::prior::PriorLaw;
use crate::stable::BridgeParams;

pub const DEFAULT_DEPTH: u32 = 10;
pub const MAX_DEPTH: u32 = 24;

/// Simulated paths on the grid `t_i = s + i (T - s) 2^-depth`, stored as
/// cumulative values, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub depth: u32,
    pub count: usize,
    pub seed: u64,
    pub start: Observation,
    pub horizon: f64,
    values: Vec<f64>,
}

impl PathEnsemble {
    pub fn steps(&self) -> usize {
        1 << self.depth
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.steps();
        let h = (self.horizon - self.start.s) / n as f64;
        (0..=n).map(|i| if i == n { self.horizon } else { self.start.s + i as f64 * h }).collect()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.steps() + 1;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.steps() + 1)
    }

    /// Values of every path at grid index `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.paths().map(|p| p[j]).collect()
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.column(self.steps())
    }

    /// Grid index of `t`, if `t` is a grid time.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times().iter().position(|&u| (u - t).abs() <= 1e-12 * self.horizon)
    }

    /// Per-time empirical quantiles, for fan charts: one row per grid time,
    /// `levels.len()` columns.
    pub fn quantile_summary(&self, levels: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let times = self.times();
        (0..=self.steps())
            .map(|j| {
                let mut col = self.column(j);
                col.sort_by(f64::total_cmp);
                (times[j], levels.iter().map(|&p| empirical_quantile(&col, p)).collect())
            })
            .collect()
    }

    /// CSV with header `path_id,t,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["path_id", "t", "value"]).map_err(io_err)?;
        let times = self.times();
        for (i, p) in self.paths().enumerate() {
            for (t, v) in times.iter().zip(p) {
                w.write_record(&[i.to_string(), t.to_string(), v.to_string()]).map_err(io_err)?;
            }
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// Little-endian `[count:u64][depth:u64][seed:u64][values: f64 row-major]`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(&(self.count as u64).to_le_bytes())?;
        out.write_all(&u64::from(self.depth).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_sizes(depth: u32, count: usize) -> Result<()> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::domain(format!("depth must lie in 1..={MAX_DEPTH}, got {depth}")));
    }
    if count == 0 {
        return Err(Error::domain("path count must be positive"));
    }
    Ok(())
}

/// Fill `row[1..n]` given `row[0]` and `row[n]`, over a time span `span`.
fn bisect(c: f64, span: f64, row: &mut [f64], rng: &mut ChaCha8Rng) {
    let n = row.len() - 1;
    let mut step = n;
    while step > 1 {
        let half = step / 2;
        let dt = span * step as f64 / n as f64;
        let mut i = 0;
        while i < n {
            let (y, z) = (row[i], row[i + step]);
            // always draw, so the stream position does not depend on the values
            let g: f64 = StandardNormal.sample(rng);
            let w = z - y;
            row[i + half] = if w > 0.0 { (y + w * midpoint_fraction(c, dt, w, g)).min(z) } else { y };
            i += step;
        }
        step = half;
    }
}

fn simulate_with<F>(params: &BridgeParams, start: Observation, depth: u32, count: usize, seed: u64, terminal: F) -> Result<PathEnsemble>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    params.validate()?;
    check_sizes(depth, count)?;
    let n = 1usize << depth;
    let span = params.horizon - start.s;
    let mut values = vec![0.0; count * (n + 1)];
    values.par_chunks_mut(n + 1).enumerate().try_for_each(|(i, row)| -> Result<()> {
        let mut rng = path_rng(seed, i);
        row[0] = start.xi;
        row[n] = terminal(&mut rng)?;
        bisect(params.c, span, row, &mut rng);
        Ok(())
    })?;
    Ok(PathEnsemble { depth, count, seed, start, horizon: params.horizon, values })
}

/// Paths from the origin with terminal law `prior`.
pub fn simulate_paths(params: &BridgeParams, prior: &PriorLaw, depth: u32, count: usize, seed: u64) -> Result<PathEnsemble> {
    simulate_with(params, Observation::ORIGIN, depth, count, seed, |rng| prior.sample(rng))
}

/// Remaining development on `[s, T]` given the law's anchor: the terminal is
/// drawn from the posterior, then `[s, T]` is bisected.
pub fn simulate_conditional(law: &ConditionalLaw, depth: u32, count: usize, seed: u64) -> Result<PathEnsemble> {
    let start = law.anchor();
    if start.s > 0.0 {
        // build the shared inverse-CDF table once, before the workers start
        law.quantile(0.5)?;
    }
    simulate_with(law.params(), start, depth, count, seed, |rng| law.sample(rng))
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }

    /// `|mean - target| <= k SE`.
    pub fn agrees(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.std_error
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample correlation with a delete-one-batch jackknife standard error.
pub fn correlation_estimate(x: &[f64], y: &[f64], batches: usize) -> Result<MeanEstimate> {
    let n = x.len();
    if n != y.len() || batches < 2 || n < 2 * batches {
        return Err(Error::domain("correlation needs paired samples and at least two per batch"));
    }
    let full = pearson(x, y);
    let size = n / batches;
    let loo: Vec<f64> = (0..batches)
        .map(|b| {
            let keep = |v: &[f64]| -> Vec<f64> {
                v.iter().enumerate().filter(|(i, _)| i / size != b || *i >= size * batches).map(|(_, v)| *v).collect()
            };
            pearson(&keep(x), &keep(y))
        })
        .collect();
    let g = batches as f64;
    let mean = loo.iter().sum::<f64>() / g;
    let var = (g - 1.0) / g * loo.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok(MeanEstimate { mean: full, std_error: var.sqrt() })
}

/// One-sample Kolmogorov-Smirnov test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// KS statistic of `samples` against `cdf`; the CDF is evaluated in parallel.
pub fn ks_test<F>(samples: &[f64], cdf: F) -> Result<KsResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return Err(Error::domain("KS test needs samples"));
    }
    let fs = xs.par_iter().map(|&x| cdf(x)).collect::<Result<Vec<f64>>>()?;
    let nf = n as f64;
    let d = fs
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / nf).max((i + 1) as f64 / nf - f))
        .fold(0.0, f64::max);
    Ok(KsResult { statistic: d, p_value: kolmogorov_p_value(d, n), n })
}

/// Asymptotic `P[D_n > d]` with Stephens' finite-`n` correction.
pub fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    if lam < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = f64::from(k);
        let term = (-2.0 * k * k * lam * lam).exp();
        sum += if k as u32 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::bridge_cdf;
    use crate::reserve::best_estimate;
    use std::sync::Arc;

    fn unit() -> BridgeParams {
        BridgeParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn kolmogorov_values() {
        // P[K > 1.36] ~ 0.049, P[K > 1.628] ~ 0.01 for the limiting law
        assert!((kolmogorov_p_value(1.3581 / 1e4f64.sqrt(), 10_000) - 0.05).abs() < 2e-3);
        assert!((kolmogorov_p_value(1.6276 / 1e4f64.sqrt(), 10_000) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_p_value(0.0, 100), 1.0);
    }

    #[test]
    fn paths_monotone_and_deterministic() {
        let prior = PriorLaw::gpd(1.0, 1.0, 0.25).unwrap();
        let a = simulate_paths(&unit(), &prior, 5, 200, 42).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_paths(&unit(), &prior, 5, 200, 42).unwrap());
        assert_eq!(a, b);
        for p in a.paths() {
            assert_eq!(p[0], 0.0);
            assert!(p.windows(2).all(|w| w[1] >= w[0]));
        }
        let c = simulate_paths(&unit(), &prior, 5, 200, 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.times().len(), 33);
        assert_eq!(a.times()[32], 1.0);
    }

    #[test]
    fn terminal_law_and_half_mean() {
        let prior = PriorLaw::gpd(1.0, 1.0, 0.25).unwrap();
        let e = simulate_paths(&unit(), &prior, 4, 20_000, 7).unwrap();
        let ks = ks_test(&e.terminal(), |x| prior.cdf(x)).unwrap();
        assert!(ks.p_value > 0.001, "{ks:?}");
        let mid = MeanEstimate::from_samples(&e.column(8));
        assert!(mid.agrees(7.0 / 6.0, 4.0), "{mid:?}");
    }

    #[test]
    fn degenerate_prior_midpoint_law() {
        // a very narrow tabulated prior around z = 2 stands in for a point mass
        let z = 2.0;
        let prior = PriorLaw::tabulated(vec![z - 1e-9, z, z + 1e-9], vec![0.0, 1.0, 0.0]).unwrap();
        let e = simulate_paths(&unit(), &prior, 1, 20_000, 5).unwrap();
        let p = unit();
        let ks = ks_test(&e.column(1), |y| bridge_cdf(&p, 0.5, y.min(z), z)).unwrap();
        assert!(ks.p_value > 0.001, "{ks:?}");
        // increments over the two halves have the same law
        let second: Vec<f64> = e.paths().map(|r| r[2] - r[1]).collect();
        let ks2 = ks_test(&second, |y| bridge_cdf(&p, 0.5, y.clamp(0.0, z), z)).unwrap();
        assert!(ks2.p_value > 0.001, "{ks2:?}");
    }

    #[test]
    fn conditional_paths() {
        let prior = Arc::new(PriorLaw::gpd(1.0, 1.0, 0.25).unwrap());
        let law = ConditionalLaw::new(unit(), prior, Observation::new(0.4, 0.8).unwrap()).unwrap();
        let e = simulate_conditional(&law, 4, 20_000, 3).unwrap();
        assert!(e.paths().all(|p| p[0] == 0.8 && p.windows(2).all(|w| w[1] >= w[0])));
        assert!((e.times()[0] - 0.4).abs() < 1e-15);
        let m = MeanEstimate::from_samples(&e.terminal());
        let u = best_estimate(&law).unwrap().value;
        assert!(m.agrees(u, 4.0), "{m:?} vs {u}");
        // the origin anchor reproduces simulate_paths
        let p0 = PriorLaw::gpd(1.0, 1.0, 0.25).unwrap();
        let a = simulate_paths(&unit(), &p0, 3, 50, 9).unwrap();
        let b = simulate_conditional(&ConditionalLaw::unconditional(unit(), Arc::new(p0)).unwrap(), 3, 50, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exports() {
        let prior = PriorLaw::exponential(1.0).unwrap();
        let e = simulate_paths(&unit(), &prior, 2, 3, 1).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path_id,t,value\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 5);
        let mut bin = Vec::new();
        e.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 24 + 8 * 15);
        assert_eq!(u64::from_le_bytes(bin[0..8].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bin[8..16].try_into().unwrap()), 2);
        let last = f64::from_le_bytes(bin[bin.len() - 8..].try_into().unwrap());
        assert_eq!(last, e.path(2)[4]);
        let q = e.quantile_summary(&[0.5]);
        assert_eq!(q.len(), 5);
    }

    #[test]
    fn rejects_bad_sizes() {
        let prior = PriorLaw::exponential(1.0).unwrap();
        assert!(simulate_paths(&unit(), &prior, 0, 3, 1).is_err());
        assert!(simulate_paths(&unit(), &prior, 3, 0, 1).is_err());
    }
}
