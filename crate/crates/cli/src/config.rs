use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use srbridge_core::multiline::MultiLineConfig;
use srbridge_core::prior::{PriorLaw, PriorSpec};
use srbridge_core::reserve::LayerSpec;
use srbridge_core::stable::BridgeParams;
use srbridge_core::timechange::{ExposureCurve, TimeChange};

use crate::error::{CliError, CliResult};

/// The JSON run configuration. Paths are relative to the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Option<BridgeParams>,
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub timechange: Option<ExposureCurve>,
    #[serde(default)]
    pub observations: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub simulate: SimulateOptions,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub cvar: Option<CvarOptions>,
    #[serde(default)]
    pub tail: TailOptions,
    #[serde(default)]
    pub multiline: Option<MultiLineOptions>,
    #[serde(default)]
    pub mc: McOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOptions {
    pub depth: u32,
    pub count: usize,
    pub quantiles: Vec<f64>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { depth: 10, count: 1000, quantiles: vec![0.05, 0.25, 0.5, 0.75, 0.95] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvarOptions {
    /// Calendar time of the paid-claims level.
    pub t: f64,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailOptions {
    /// Levels `L`; empty means `scale * 10^k`, `k = 1..6`.
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiLineOptions {
    pub lines: MultiLineConfig,
    #[serde(default)]
    pub observations: Option<[PathBuf; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McOptions {
    pub paths: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { paths: 100_000 }
    }
}

/// A configuration with its model objects built and checked.
pub struct Loaded {
    pub raw: RunConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let raw: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { raw, base };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> CliResult<()> {
        if let Some(p) = &self.raw.params {
            p.validate().map_err(CliError::from_config)?;
        }
        let s = &self.raw.simulate;
        if s.depth == 0 || s.depth > srbridge_core::sim::MAX_DEPTH || s.count == 0 {
            return Err(CliError::config(format!(
                "simulate needs 1 <= depth <= {} and count >= 1, got depth {} and count {}",
                srbridge_core::sim::MAX_DEPTH,
                s.depth,
                s.count
            )));
        }
        if s.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(CliError::config("simulate quantile levels must lie in [0, 1]"));
        }
        if self.raw.mc.paths < 2 {
            return Err(CliError::config("mc.paths must be at least 2"));
        }
        if let Some(m) = &self.raw.multiline {
            m.lines.validate().map_err(CliError::from_config)?;
        }
        if self.raw.tail.levels.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(CliError::config("tail levels must be positive and finite"));
        }
        if let Some(c) = &self.raw.timechange {
            c.validate().map_err(CliError::from_config)?;
        }
        Ok(())
    }

    pub fn params(&self) -> CliResult<BridgeParams> {
        self.raw.params.ok_or_else(|| CliError::config("missing `params`"))
    }

    pub fn prior(&self) -> CliResult<Arc<PriorLaw>> {
        let spec = self.raw.prior.clone().ok_or_else(|| CliError::config("missing `prior`"))?;
        PriorLaw::new(spec).map(Arc::new).map_err(CliError::from_config)
    }

    pub fn time_change(&self) -> CliResult<TimeChange> {
        let params = self.params()?;
        match &self.raw.timechange {
            Some(c) => TimeChange::new(c.clone(), params.horizon).map_err(CliError::from_config),
            None => TimeChange::identity(params.horizon).map_err(CliError::from_config),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn observations_path(&self) -> Option<PathBuf> {
        self.raw.observations.as_deref().map(|p| self.resolve(p))
    }
}
