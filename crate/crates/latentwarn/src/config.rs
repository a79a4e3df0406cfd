//! Pipeline configuration. The JSON schema lives in `schema/config.schema.json`.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use latentwarn_core::diffusion::{Dimension, GradientSource, KernelConfig};
use latentwarn_core::indicators::{RegionSpec, SampEnParams};
use latentwarn_core::sde::{DescentMethod, FitOptions};
use latentwarn_core::synthetic::{RegimeShift, SyntheticSpec, Well};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub input: InputConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub sde: SdeConfig,
    #[serde(default)]
    pub indicators: IndicatorConfig,
    #[serde(default)]
    pub extend: Option<ExtendConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputConfig {
    Csv(CsvInput),
    Synthetic(SyntheticInput),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvInput {
    pub path: PathBuf,
    pub sample_rate: f64,
    /// The file holds one channel per row.
    #[serde(default)]
    pub transpose: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInput {
    /// The spec's own `seed` is replaced by one derived from the top-level seed.
    #[serde(default)]
    pub spec: SyntheticSpec,
    #[serde(default)]
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Scenario {
    /// The SDE described by the spec.
    #[default]
    Model,
    /// One well before `t_star`, another after.
    ForcedTransition {
        t_star: usize,
        #[serde(default)]
        before: Option<Well>,
        #[serde(default)]
        after: Option<Well>,
    },
    /// A single well for the whole run.
    StationaryWell { well: Well },
}

impl Scenario {
    pub fn regime_shift(&self) -> Option<RegimeShift> {
        match self {
            Self::ForcedTransition { t_star, before, after } => {
                let mut shift = RegimeShift::standard(*t_star);
                if let Some(b) = before {
                    shift.before = *b;
                }
                if let Some(a) = after {
                    shift.after = *a;
                }
                Some(shift)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub lo: f64,
    pub hi: f64,
    /// Samples averaged per output row; 16 for CSV input and 1 for synthetic
    /// input when absent.
    pub block: Option<usize>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { lo: -0.5, hi: 0.5, block: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimensionSetting {
    Fixed(usize),
    Named(Auto),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Auto {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub epsilon: f64,
    pub directed: bool,
    /// Also embed with the other kernel, for comparison.
    pub compare: bool,
    /// Eigenpairs to compute.
    pub components: usize,
    pub dimension: DimensionSetting,
    /// Upper bound for the spectral-gap choice.
    pub max_dimension: usize,
    /// CSV of drift vectors, one row per time point; replaces the
    /// finite-difference estimate in the directed kernel.
    pub drift_field: Option<PathBuf>,
    pub orient: Orientation,
}

/// Sign convention for the embedding coordinates, whose eigenvector signs
/// are otherwise arbitrary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Flip each coordinate so that its mean over the second half of the
    /// record is at least its mean over the first half.
    #[default]
    Rising,
    /// Keep the eigensolver's sign.
    None,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            directed: true,
            compare: false,
            components: 10,
            dimension: DimensionSetting::Named(Auto::Auto),
            max_dimension: 5,
            drift_field: None,
            orient: Orientation::Rising,
        }
    }
}

impl EmbeddingConfig {
    pub fn kernel(&self, directed: bool) -> KernelConfig {
        let gradient_source =
            if self.drift_field.is_some() { GradientSource::ExplicitField } else { GradientSource::FiniteDifferenceOfData };
        KernelConfig { epsilon: self.epsilon, directed, gradient_source }
    }

    pub fn dimension(&self) -> Dimension {
        match self.dimension {
            DimensionSetting::Fixed(d) => Dimension::Fixed(d),
            DimensionSetting::Named(Auto::Auto) => Dimension::Auto { max: self.max_dimension },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeConfig {
    pub drift_degree: usize,
    pub diffusion_degree: usize,
    pub train_fraction: f64,
    /// Rescale latent coordinates to [-1, 1] before fitting.
    pub rescale: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub window: usize,
    pub method: DescentMethod,
}

impl Default for SdeConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            drift_degree: f.drift_degree,
            diffusion_degree: f.diffusion_degree,
            train_fraction: 0.8,
            rescale: true,
            max_iterations: f.max_iterations,
            tolerance: f.tolerance,
            window: f.window,
            method: f.method,
        }
    }
}

impl SdeConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            drift_degree: self.drift_degree,
            diffusion_degree: self.diffusion_degree,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            window: self.window,
            method: self.method,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndicatorConfig {
    /// Window length `l` of the OM ratio and the standard-deviation baseline.
    pub window: usize,
    pub sample_entropy: SampEnParams,
    pub sample_entropy_stride: usize,
    /// `A = (-inf, split]` on the first coordinate, `B` its complement; ignored
    /// when `regions` is given.
    pub split: f64,
    pub regions: Option<RegionSpec>,
    pub ensemble_size: usize,
    pub monte_carlo: Option<MonteCarloConfig>,
    pub thresholds: Thresholds,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            window: 300,
            sample_entropy: SampEnParams::default(),
            sample_entropy_stride: 1,
            split: -0.75,
            regions: None,
            ensemble_size: 100,
            monte_carlo: None,
            thresholds: Thresholds::default(),
        }
    }
}

impl IndicatorConfig {
    pub fn regions(&self, dim: usize) -> RegionSpec {
        self.regions.clone().unwrap_or_else(|| RegionSpec::split_first(self.split, dim))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub paths_per_origin: usize,
    pub horizon: usize,
}

/// Warning thresholds; a series without one only reports its maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub transition_probability: Option<f64>,
    pub om_ratio: Option<f64>,
    pub sample_entropy: Option<f64>,
    pub std_baseline: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { transition_probability: Some(0.5), om_ratio: None, sample_entropy: None, std_baseline: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendConfig {
    pub path: PathBuf,
    /// Defaults to the training input's rate.
    #[serde(default)]
    pub sample_rate: Option<f64>,
    #[serde(default)]
    pub transpose: bool,
    /// Run the indicators on the extended coordinates with the stored model.
    #[serde(default)]
    pub indicators: bool,
}

impl PipelineConfig {
    /// Reads, checks and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).context("not valid JSON")?;
        match raw.get("version") {
            None => bail!("missing required field `version`"),
            Some(v) if v.as_u64() != Some(u64::from(CONFIG_VERSION)) => {
                bail!("unsupported config version {v}; this build reads version {CONFIG_VERSION}")
            }
            _ => {}
        }
        let cfg: Self = serde_json::from_value(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        if let InputConfig::Csv(c) = &mut self.input {
            join(&mut c.path);
        }
        if let Some(p) = &mut self.embedding.drift_field {
            join(p);
        }
        if let Some(e) = &mut self.extend {
            join(&mut e.path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.input {
            InputConfig::Csv(c) => ensure!(c.sample_rate > 0.0, "input.csv.sample_rate must be positive"),
            InputConfig::Synthetic(s) => {
                s.spec.validate()?;
                if let Scenario::ForcedTransition { t_star, .. } = s.scenario {
                    ensure!(t_star < s.spec.length, "t_star {t_star} beyond the series length {}", s.spec.length);
                }
                if !matches!(s.scenario, Scenario::Model) {
                    ensure!(s.spec.latent_dim == 1, "well scenarios are one-dimensional");
                }
            }
        }
        let p = &self.preprocess;
        ensure!(p.hi > p.lo, "preprocess.hi must exceed preprocess.lo");
        ensure!(p.block != Some(0), "preprocess.block must be at least 1");
        let e = &self.embedding;
        e.kernel(e.directed).validate()?;
        ensure!(e.components >= 1, "embedding.components must be at least 1");
        match e.dimension {
            DimensionSetting::Fixed(d) => ensure!(d >= 1, "embedding.dimension must be at least 1"),
            DimensionSetting::Named(_) => ensure!(e.max_dimension >= 1, "embedding.max_dimension must be at least 1"),
        }
        let s = &self.sde;
        ensure!(s.train_fraction > 0.0 && s.train_fraction < 1.0, "sde.train_fraction must lie in (0, 1)");
        ensure!(s.max_iterations >= 1 && s.window >= 1, "sde.max_iterations and sde.window must be positive");
        let i = &self.indicators;
        ensure!(i.window >= 2, "indicators.window must be at least 2");
        i.sample_entropy.validate()?;
        ensure!(i.sample_entropy_stride >= 1, "indicators.sample_entropy_stride must be at least 1");
        ensure!(i.ensemble_size >= 1, "indicators.ensemble_size must be at least 1");
        if let Some(mc) = &i.monte_carlo {
            ensure!(mc.paths_per_origin >= 1, "indicators.monte_carlo.paths_per_origin must be positive");
        }
        if let Some(x) = &self.extend {
            ensure!(x.sample_rate.is_none_or(|r| r > 0.0), "extend.sample_rate must be positive");
        }
        Ok(())
    }

    pub fn block(&self) -> usize {
        self.preprocess.block.unwrap_or(match self.input {
            InputConfig::Csv(_) => 16,
            InputConfig::Synthetic(_) => 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"version": 1, "input": {"synthetic": {}}}"#;

    #[test]
    fn defaults_fill_in() {
        let c = PipelineConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.embedding.epsilon, 1.0);
        assert_eq!(c.indicators.window, 300);
        assert_eq!(c.indicators.split, -0.75);
        assert_eq!(c.indicators.sample_entropy, SampEnParams { m: 5, p: 10, q: 1, r: 2.0, l: 300 });
        assert_eq!(c.indicators.thresholds.transition_probability, Some(0.5));
        assert_eq!(c.block(), 1);
        assert_eq!(c.embedding.dimension(), Dimension::Auto { max: 5 });
    }

    #[test]
    fn version_is_required() {
        let e = PipelineConfig::from_json(r#"{"input": {"synthetic": {}}}"#).unwrap_err();
        assert!(e.to_string().contains("version"));
        assert!(PipelineConfig::from_json(r#"{"version": 2, "input": {"synthetic": {}}}"#).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_json(r#"{"version": 1, "input": {"synthetic": {}}, "extra": 1}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"version": 1, "input": {"synthetic": {}}, "sde": {"degree": 3}}"#).is_err());
    }

    #[test]
    fn dimension_accepts_number_or_auto() {
        let c = PipelineConfig::from_json(r#"{"version": 1, "input": {"synthetic": {}}, "embedding": {"dimension": 2}}"#).unwrap();
        assert_eq!(c.embedding.dimension(), Dimension::Fixed(2));
        assert!(PipelineConfig::from_json(r#"{"version": 1, "input": {"synthetic": {}}, "embedding": {"dimension": "best"}}"#).is_err());
    }
}
