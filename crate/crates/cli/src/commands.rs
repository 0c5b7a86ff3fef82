use std::sync::Arc;

use serde::Serialize;
use srbridge_core::lrb::ConditionalLaw;
use srbridge_core::multiline::{a_priori_correlation, best_estimates, simulate_lines, JointObservation, MultiLineConfig};
use srbridge_core::prior::PriorLaw;
use srbridge_core::reserve::{
    best_estimate, conditional_value_at_risk, expected_exceedance, layer_recovery_schedule, report, tail_ratio,
    tail_ratio_limit, tail_ratio_limit_without_time_factor, LayerSpec, ReportRecord,
};
use srbridge_core::sim::{correlation_estimate, simulate_conditional, MeanEstimate};
use srbridge_core::stable::BridgeParams;
use srbridge_core::timechange::TimeChange;

use crate::config::Loaded;
use crate::error::{CliError, CliResult};
use crate::input::{read_observations, Reading};
use crate::output::{csv_bytes, json_bytes, Format, Sink};

pub struct Ctx {
    pub cfg: Loaded,
    pub seed: u64,
    pub sink: Sink,
    pub mc_check: bool,
}

/// Model objects shared by the single-line commands.
struct Model {
    params: BridgeParams,
    prior: Arc<PriorLaw>,
    tc: TimeChange,
    readings: Vec<Reading>,
}

impl Model {
    fn load(ctx: &Ctx) -> CliResult<Self> {
        let params = ctx.cfg.params()?;
        let prior = ctx.cfg.prior()?;
        let tc = ctx.cfg.time_change()?;
        let readings = match ctx.cfg.observations_path() {
            Some(p) => read_observations(&p)?,
            None => Vec::new(),
        };
        if let Some(r) = readings.iter().find(|r| r.t > params.horizon) {
            return Err(CliError::data(Some(r.line), format!("t = {} is beyond the horizon {}", r.t, params.horizon)));
        }
        Ok(Self { params, prior, tc, readings })
    }

    fn unconditional(&self) -> CliResult<ConditionalLaw> {
        ConditionalLaw::unconditional(self.params, Arc::clone(&self.prior)).map_err(CliError::from_config)
    }

    /// Law given one reading; `None` once the horizon is reached.
    fn law_at(&self, r: &Reading) -> CliResult<Option<ConditionalLaw>> {
        if r.t == self.params.horizon {
            return Ok(None);
        }
        self.tc
            .conditional_law(self.params, Arc::clone(&self.prior), r.t, r.paid)
            .map(Some)
            .map_err(|e| CliError::from_data(e, Some(r.line)))
    }

    /// Law given everything observed (only the latest reading matters).
    fn current_law(&self) -> CliResult<ConditionalLaw> {
        match self.readings.last() {
            None => self.unconditional(),
            Some(r) => self
                .law_at(r)?
                .ok_or_else(|| CliError::data(Some(r.line), "the run-off is complete; nothing is left to value")),
        }
    }

    fn calendar(&self, u: f64) -> CliResult<f64> {
        self.tc.calendar_time(u).map_err(CliError::from_config)
    }
}

fn mc_line(what: &str, m: &MeanEstimate, target: f64) {
    let z = m.z_score(target);
    let verdict = if z.abs() <= 3.0 { "ok" } else { "MISMATCH" };
    eprintln!("mc-check {what}: {target:.6} vs MC {:.6} ± {:.2e} (z = {z:+.2}): {verdict}", m.mean, m.std_error);
}

/// Terminal draws from a conditional law.
fn terminal_draws(law: &ConditionalLaw, paths: usize, seed: u64) -> CliResult<Vec<f64>> {
    simulate_conditional(law, 1, paths, seed).map(|e| e.terminal()).map_err(CliError::from_config)
}

/// Smallest depth whose grid on `[0, 1]` contains `frac`.
fn dyadic_depth(frac: f64) -> Option<(u32, usize)> {
    (1..=16).find_map(|d| {
        let k = frac * f64::from(1u32 << d);
        ((k - k.round()).abs() < 1e-9).then_some((d, k.round() as usize))
    })
}

pub fn reserve(ctx: &Ctx) -> CliResult<()> {
    let m = Model::load(ctx)?;
    let mut rows: Vec<ReportRecord> = Vec::new();
    if m.readings.is_empty() {
        let law = m.unconditional()?;
        rows.push(report(&law).map_err(CliError::from_config)?.record());
    }
    for r in &m.readings {
        let rec = match m.law_at(r)? {
            Some(law) => {
                let mut rec = report(&law).map_err(|e| CliError::from_data(e, Some(r.line)))?.record();
                rec.t = r.t;
                rec
            }
            None => ReportRecord {
                t: r.t,
                paid: r.paid,
                ultimate_best_estimate: r.paid,
                reserve: 0.0,
                variance: 0.0,
                q05: r.paid,
                q25: r.paid,
                q50: r.paid,
                q75: r.paid,
                q95: r.paid,
                quad_err: 0.0,
            },
        };
        rows.push(rec);
    }
    ctx.sink.table("reserve", &rows, None)?;
    if ctx.mc_check {
        match m.current_law() {
            Ok(law) => {
                let u = best_estimate(&law).map_err(CliError::from_config)?.value;
                let draws = terminal_draws(&law, ctx.cfg.raw.mc.paths, ctx.seed)?;
                mc_line("ultimate best estimate", &MeanEstimate::from_samples(&draws), u);
            }
            Err(_) => eprintln!("mc-check: skipped, the run-off is complete"),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PathRow {
    path_id: usize,
    t: f64,
    value: f64,
}

#[derive(Serialize)]
struct PathsDoc<'a> {
    depth: u32,
    count: usize,
    seed: u64,
    times: &'a [f64],
    paths: Vec<&'a [f64]>,
}

#[derive(Serialize)]
struct QuantileDoc<'a> {
    depth: u32,
    count: usize,
    seed: u64,
    levels: &'a [f64],
    times: Vec<f64>,
    quantiles: Vec<Vec<f64>>,
}

pub fn simulate(ctx: &Ctx) -> CliResult<()> {
    let m = Model::load(ctx)?;
    let law = m.current_law()?;
    let opts = &ctx.cfg.raw.simulate;
    let e = simulate_conditional(&law, opts.depth, opts.count, ctx.seed).map_err(CliError::from_config)?;
    let times = e.times().into_iter().map(|u| m.calendar(u)).collect::<CliResult<Vec<f64>>>()?;
    let header = format!("srbridge simulate depth={} count={} seed={}", opts.depth, opts.count, ctx.seed);

    let summary = e.quantile_summary(&opts.quantiles);
    let qdoc = QuantileDoc {
        depth: opts.depth,
        count: opts.count,
        seed: ctx.seed,
        levels: &opts.quantiles,
        times: times.clone(),
        quantiles: summary.iter().map(|(_, q)| q.clone()).collect(),
    };
    let qbytes = match ctx.sink.format {
        Format::Json => json_bytes(&qdoc)?,
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = vec![std::iter::once("t".to_string())
                .chain(opts.quantiles.iter().map(|q| format!("q{q}")))
                .collect()];
            for (t, (_, q)) in times.iter().zip(&summary) {
                rows.push(std::iter::once(t.to_string()).chain(q.iter().map(f64::to_string)).collect());
            }
            csv_bytes(&rows, Some(&header))?
        }
    };
    ctx.sink.raw("simulate_quantiles", &qbytes)?;

    if ctx.sink.has_dir() {
        let bytes = match ctx.sink.format {
            Format::Json => json_bytes(&PathsDoc {
                depth: opts.depth,
                count: opts.count,
                seed: ctx.seed,
                times: &times,
                paths: e.paths().collect(),
            })?,
            Format::Csv => {
                let rows: Vec<PathRow> = e
                    .paths()
                    .enumerate()
                    .flat_map(|(i, p)| times.iter().zip(p).map(move |(&t, &value)| PathRow { path_id: i, t, value }))
                    .collect();
                csv_bytes(&rows, Some(&header))?
            }
        };
        ctx.sink.raw("simulate_paths", &bytes)?;
    } else {
        eprintln!("note: paths are written only with --out; stdout carries the quantile summary");
    }
    if ctx.mc_check {
        let u = best_estimate(&law).map_err(CliError::from_config)?.value;
        mc_line("terminal mean", &MeanEstimate::from_samples(&e.terminal()), u);
    }
    Ok(())
}

#[derive(Serialize)]
struct LayerRow {
    layer: usize,
    attachment: f64,
    limit: Option<f64>,
    date: f64,
    expected_payment: f64,
    quad_err: f64,
}

pub fn reinsure(ctx: &Ctx) -> CliResult<()> {
    let m = Model::load(ctx)?;
    if ctx.cfg.raw.layers.is_empty() {
        return Err(CliError::config("reinsure needs at least one entry in `layers`"));
    }
    let law = m.current_law()?;
    let big_t = m.params.horizon;
    let mut rows = Vec::new();
    let mut mc = None;
    for (i, spec) in ctx.cfg.raw.layers.iter().enumerate() {
        let dates = spec
            .payment_dates
            .iter()
            .map(|&t| m.tc.operational_time(t))
            .collect::<srbridge_core::Result<Vec<f64>>>()
            .map_err(CliError::from_config)?;
        let op = LayerSpec { payment_dates: dates, ..spec.clone() };
        let s = layer_recovery_schedule(&law, &op).map_err(CliError::from_config)?;
        for w in &s.warnings {
            eprintln!("layer {i}: {w}");
        }
        let paid: f64 = s.payments.iter().map(|p| p.expected_payment).sum();
        let d = |k: f64| expected_exceedance(&law, big_t, k).map(|e| e.value).map_err(CliError::from_config);
        let top = match spec.limit {
            Some(l) => d(spec.attachment + l)?,
            None => 0.0,
        };
        let direct = d(spec.attachment)? - top - s.already_recovered;
        let diff = (paid - direct).abs();
        if diff > 1e-9 * direct.abs().max(1.0) {
            return Err(CliError::Numerical {
                message: format!("layer {i}: payments sum to {paid} but the layer is worth {direct}"),
                worst_quad_err: s.payments.iter().map(|p| p.quad_err).reduce(f64::max),
            });
        }
        eprintln!("layer {i}: telescoping check ok (payments {paid:.12}, layer value {direct:.12}, |diff| {diff:.1e})");
        for p in &s.payments {
            rows.push(LayerRow {
                layer: i,
                attachment: spec.attachment,
                limit: spec.limit,
                date: m.calendar(p.date)?,
                expected_payment: p.expected_payment,
                quad_err: p.quad_err,
            });
        }
        if ctx.mc_check {
            let draws = match &mc {
                Some(d) => d,
                None => mc.insert(terminal_draws(&law, ctx.cfg.raw.mc.paths, ctx.seed)?),
            };
            let pay: Vec<f64> = draws
                .iter()
                .map(|z| {
                    let x = (z - spec.attachment).max(0.0);
                    spec.limit.map_or(x, |l| x.min(l)) - s.already_recovered
                })
                .collect();
            mc_line(&format!("layer {i} total recovery"), &MeanEstimate::from_samples(&pay), s.total);
        }
    }
    ctx.sink.table("reinsure", &rows, None)
}

#[derive(Serialize)]
struct CvarRow {
    t: f64,
    threshold: f64,
    cvar: f64,
    quad_err: f64,
}

pub fn cvar(ctx: &Ctx) -> CliResult<()> {
    let m = Model::load(ctx)?;
    let opts = ctx.cfg.raw.cvar.as_ref().ok_or_else(|| CliError::config("cvar needs a `cvar` section"))?;
    let law = m.current_law()?;
    let u = m.tc.operational_time(opts.t).map_err(CliError::from_config)?;
    let mut rows = Vec::new();
    for &theta in &opts.thresholds {
        let e = conditional_value_at_risk(&law, u, theta).map_err(CliError::from_config)?;
        rows.push(CvarRow { t: opts.t, threshold: theta, cvar: e.value, quad_err: e.quad_err });
    }
    ctx.sink.table("cvar", &rows, None)?;
    if ctx.mc_check {
        let a = law.anchor();
        let big_t = m.params.horizon;
        match dyadic_depth((u - a.s) / (big_t - a.s)) {
            Some((depth, j)) => {
                let e = simulate_conditional(&law, depth, ctx.cfg.raw.mc.paths, ctx.seed).map_err(CliError::from_config)?;
                let col = e.column(j);
                for r in &rows {
                    let tail: Vec<f64> = col.iter().copied().filter(|&x| x > r.threshold).collect();
                    if tail.len() < 2 {
                        eprintln!("mc-check cvar at {}: too few paths above the threshold", r.threshold);
                    } else {
                        mc_line(&format!("cvar at threshold {}", r.threshold), &MeanEstimate::from_samples(&tail), r.cvar);
                    }
                }
            }
            None => eprintln!("mc-check: skipped, t is not on a dyadic grid between the anchor and the horizon"),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TailRow {
    quantity: &'static str,
    level: Option<f64>,
    value: Option<f64>,
    quad_err: f64,
}

pub fn tail(ctx: &Ctx) -> CliResult<()> {
    let m = Model::load(ctx)?;
    let law = m.current_law()?;
    let levels: Vec<f64> = if ctx.cfg.raw.tail.levels.is_empty() {
        (1..=6).map(|k| m.prior.scale() * 10f64.powi(k)).collect()
    } else {
        ctx.cfg.raw.tail.levels.clone()
    };
    let finite = |v: f64| v.is_finite().then_some(v);
    let mut rows = Vec::new();
    for &l in &levels {
        let e = tail_ratio(&law, l).map_err(CliError::from_config)?;
        rows.push(TailRow { quantity: "ratio", level: Some(l), value: finite(e.value), quad_err: e.quad_err });
    }
    let err = law.normalizer_error();
    let lim = tail_ratio_limit(&law).map_err(CliError::from_config)?;
    rows.push(TailRow { quantity: "limit", level: None, value: finite(lim), quad_err: err });
    let printed = tail_ratio_limit_without_time_factor(&law).map_err(CliError::from_config)?;
    rows.push(TailRow { quantity: "limit_without_time_factor", level: None, value: finite(printed), quad_err: err });
    if !lim.is_finite() {
        eprintln!("note: the tail ratio grows without bound for this prior; limit rows are left empty");
    }
    if ctx.mc_check {
        eprintln!("mc-check: not available for tail ratios");
    }
    ctx.sink.table("tail", &rows, None)
}

#[derive(Serialize)]
struct LineRow {
    t: f64,
    line: u8,
    paid: f64,
    ultimate_best_estimate: f64,
    reserve: f64,
    quad_err: f64,
}

#[derive(Serialize)]
struct MultiDoc<'a, C: Serialize> {
    reports: &'a [LineRow],
    correlation: &'a C,
}

fn joint_readings(ctx: &Ctx, cfg: &MultiLineConfig) -> CliResult<Vec<(JointObservation, u64)>> {
    let Some(files) = ctx.cfg.raw.multiline.as_ref().and_then(|m| m.observations.as_ref()) else {
        return Ok(Vec::new());
    };
    let a = read_observations(&ctx.cfg.resolve(&files[0]))?;
    let b = read_observations(&ctx.cfg.resolve(&files[1]))?;
    if a.len() != b.len() {
        return Err(CliError::data(None, format!("the two lines have {} and {} readings", a.len(), b.len())));
    }
    a.iter()
        .zip(&b)
        .map(|(x, y)| {
            if x.t != y.t {
                return Err(CliError::data(Some(y.line), format!("line 2 is read at t = {} where line 1 has t = {}", y.t, x.t)));
            }
            if !(x.t < cfg.split) {
                return Err(CliError::data(Some(x.line), format!("t = {} is not before the line horizon {}", x.t, cfg.split)));
            }
            let o = JointObservation::new(x.t, x.paid, y.paid).map_err(|e| CliError::from_data(e, Some(x.line)))?;
            Ok((o, x.line))
        })
        .collect()
}

pub fn multiline(ctx: &Ctx) -> CliResult<()> {
    let opts = ctx.cfg.raw.multiline.as_ref().ok_or_else(|| CliError::config("multiline needs a `multiline` section"))?;
    let cfg = opts.lines;
    let prior = ctx.cfg.prior()?;
    let mut readings = joint_readings(ctx, &cfg)?;
    if readings.is_empty() {
        readings.push((JointObservation::ORIGIN, 0));
    }
    let mut rows = Vec::new();
    for (o, line) in &readings {
        let e = best_estimates(&cfg, &prior, o).map_err(|e| CliError::from_data(e, (*line > 0).then_some(*line)))?;
        for (l, paid, u) in [(1u8, o.xi1, e.u1), (2, o.xi2, e.u2)] {
            rows.push(LineRow { t: o.t, line: l, paid, ultimate_best_estimate: u, reserve: u - paid, quad_err: e.quad_err });
        }
    }
    let corr = a_priori_correlation(&cfg, &prior).map_err(CliError::from_config)?;
    if ctx.sink.has_dir() {
        ctx.sink.table("multiline", &rows, None)?;
        ctx.sink.table("multiline_correlation", &[corr], None)?;
    } else {
        match ctx.sink.format {
            Format::Json => ctx.sink.raw("multiline", &json_bytes(&MultiDoc { reports: &rows, correlation: &corr })?)?,
            Format::Csv => {
                let mut bytes = csv_bytes(&rows, None)?;
                bytes.push(b'\n');
                bytes.extend(csv_bytes(&[corr], None)?);
                ctx.sink.raw("multiline", &bytes)?;
            }
        }
    }
    if ctx.mc_check {
        match dyadic_depth(cfg.split / cfg.master_horizon) {
            Some((depth, _)) => {
                let e = simulate_lines(&cfg, &prior, depth, ctx.cfg.raw.mc.paths, ctx.seed).map_err(CliError::from_config)?;
                let last = e.times.len() - 1;
                let x: Vec<f64> = e.line1.iter().map(|v| v[last]).collect();
                let y: Vec<f64> = e.line2.iter().map(|v| v[last]).collect();
                let m = correlation_estimate(&x, &y, 50).map_err(CliError::from_config)?;
                mc_line("a priori correlation", &m, corr.correlation);
            }
            None => eprintln!("mc-check: skipped, T/T* is not a dyadic fraction"),
        }
    }
    Ok(())
}

/// Runs the acceptance suite; `Ok(false)` when a criterion fails.
pub fn selftest(seed: u64) -> bool {
    let outcomes = srbridge_selftest::run_all(seed);
    for o in &outcomes {
        print!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    println!("{} of {} criteria pass", outcomes.len() - failed, outcomes.len());
    failed == 0
}

