//! Pipeline stages. Every stage reads its inputs from and writes its outputs
//! to the output directory, so stages can be run one at a time.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use latentwarn_core::diffusion::{
    estimate_drift, kernel_matrix, markov_normalize, spectral_embedding, spectral_gap_dimension, DiffusionEmbedding,
    Dimension, DriftField, KernelConfig,
};
use latentwarn_core::indicators::{
    om_ratio_series, sample_entropy_series_strided, std_baseline, transition_probability_monte_carlo,
    transition_probability_series, warning_point, IndicatorKind, IndicatorSeries,
};
use latentwarn_core::ingest::{preprocess, RawRecording, TimeSeriesMatrix};
use latentwarn_core::sde::{fit, make_snapshots, validate_density, DensityReport, LatentSde, SnapshotOptions};
use latentwarn_core::synthetic::{forced_transition_with, generate, stationary_well, SyntheticData, SyntheticSpec};
use latentwarn_core::{seed, Error, Matrix};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{InputConfig, Orientation, PipelineConfig, Scenario};
use crate::io::{self, numbered};

pub const PREPROCESSED_CSV: &str = "preprocessed.csv";
pub const PREPROCESSED_JSON: &str = "preprocessed.json";
pub const MODEL_JSON: &str = "sde_model.json";
pub const DENSITY_JSON: &str = "density_report.json";
pub const FIT_SUMMARY_JSON: &str = "sde_summary.json";
pub const WARNINGS_JSON: &str = "warnings.json";

/// Resolved output directory plus the top-level seed.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

impl Run {
    /// `seed` and `out` override the config values.
    pub fn new(mut config: PipelineConfig, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        let out = out.unwrap_or_else(|| config.output_dir.clone());
        fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
        Ok(Self { config, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stage_seed(&self, stage: &str) -> u64 {
        seed::derive_labeled(self.config.seed, stage)
    }

    fn require(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.path(name);
        ensure!(p.exists(), "{} not found; run `{stage}` first", p.display());
        Ok(p)
    }
}

fn kind_name(directed: bool) -> &'static str {
    if directed {
        "directed"
    } else {
        "isotropic"
    }
}

pub fn embedding_json(directed: bool) -> String {
    format!("embedding_{}.json", kind_name(directed))
}

pub fn embedding_csv(directed: bool) -> String {
    format!("embedding_{}_coordinates.csv", kind_name(directed))
}

pub fn embedding_state(directed: bool) -> String {
    format!("embedding_{}_state.json", kind_name(directed))
}

pub fn indicator_csv(prefix: &str, kind: IndicatorKind) -> String {
    format!("{prefix}indicator_{}.csv", kind_slug(kind))
}

fn kind_slug(kind: IndicatorKind) -> &'static str {
    match kind {
        IndicatorKind::OmRatio => "om_ratio",
        IndicatorKind::SampleEntropy => "sample_entropy",
        IndicatorKind::TransitionProbability => "transition_probability",
        IndicatorKind::StdBaseline => "std_baseline",
    }
}

#[derive(Debug, Serialize)]
struct SynthMeta<'a> {
    spec: &'a SyntheticSpec,
    scenario: &'a Scenario,
    t_star: Option<usize>,
    rows: usize,
    dt: f64,
}

fn synthetic(run: &Run) -> Result<Option<(SyntheticSpec, SyntheticData)>> {
    let InputConfig::Synthetic(input) = &run.config.input else { return Ok(None) };
    let spec = SyntheticSpec { seed: run.stage_seed("synth"), ..input.spec.clone() };
    let data = match &input.scenario {
        Scenario::Model => generate(&spec)?,
        s @ Scenario::ForcedTransition { .. } => forced_transition_with(&spec, &s.regime_shift().expect("forced transition"))?,
        Scenario::StationaryWell { well } => stationary_well(&spec, *well)?,
    };
    Ok(Some((spec, data)))
}

/// Writes the synthetic dataset: observed channels, latent truth and the
/// injection matrix.
pub fn cmd_synth(run: &Run) -> Result<()> {
    let Some((spec, data)) = synthetic(run)? else { bail!("`synth` needs a synthetic input in the config") };
    let InputConfig::Synthetic(input) = &run.config.input else { unreachable!() };
    io::write_table(&run.path("synthetic_observed.csv"), Some(&numbered("ch", spec.ambient_dim)), data.observed.data())?;
    io::write_table(&run.path("synthetic_latent.csv"), Some(&numbered("z", spec.latent_dim)), data.latent.data())?;
    io::write_table(&run.path("synthetic_injection.csv"), Some(&numbered("ch", spec.ambient_dim)), &data.injection)?;
    io::write_json(
        &run.path("synthetic.json"),
        &SynthMeta { spec: &spec, scenario: &input.scenario, t_star: data.t_star, rows: data.observed.len(), dt: data.observed.dt() },
    )?;
    info!("synthetic data: {} x {} observed, {} latent", data.observed.len(), spec.ambient_dim, spec.latent_dim);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessMeta {
    pub source: String,
    pub sample_rate: f64,
    pub block: usize,
    pub lo: f64,
    pub hi: f64,
    pub dt: f64,
    pub rows: usize,
    pub channels: usize,
    pub channel_names: Option<Vec<String>>,
}

fn load_input(run: &Run) -> Result<(RawRecording, String)> {
    match &run.config.input {
        InputConfig::Csv(c) => Ok((io::load_recording(&c.path, c.sample_rate, c.transpose)?, c.path.display().to_string())),
        InputConfig::Synthetic(_) => {
            let (spec, data) = synthetic(run)?.expect("synthetic input");
            let rec = RawRecording::new(data.observed.into_data(), 1.0 / spec.dt, Some(numbered("ch", spec.ambient_dim)))?;
            Ok((rec, String::from("synthetic")))
        }
    }
}

pub fn cmd_preprocess(run: &Run) -> Result<()> {
    let (rec, source) = load_input(run)?;
    let p = &run.config.preprocess;
    let block = run.config.block();
    let ts = preprocess(&rec, p.lo, p.hi, block).with_context(|| format!("preprocessing {source}"))?;
    let header = rec.channel_names.clone().unwrap_or_else(|| numbered("ch", rec.channels()));
    io::write_table(&run.path(PREPROCESSED_CSV), Some(&header), ts.data())?;
    let meta = PreprocessMeta {
        source,
        sample_rate: rec.sample_rate,
        block,
        lo: p.lo,
        hi: p.hi,
        dt: ts.dt(),
        rows: ts.len(),
        channels: ts.dim(),
        channel_names: rec.channel_names,
    };
    io::write_json(&run.path(PREPROCESSED_JSON), &meta)?;
    info!("preprocessed: {} rows x {} channels, dt = {}", meta.rows, meta.channels, meta.dt);
    Ok(())
}

fn load_preprocessed(run: &Run) -> Result<(TimeSeriesMatrix, PreprocessMeta)> {
    let meta: PreprocessMeta = io::read_json(&run.require(PREPROCESSED_JSON, "preprocess")?)?;
    let table = io::read_table(&run.require(PREPROCESSED_CSV, "preprocess")?)?;
    let ts = TimeSeriesMatrix::new(table.data, meta.dt, latentwarn_core::ingest::Origin::RawPreprocessed)?;
    Ok((ts, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    /// Largest `|row sum - 1|` of the Markov matrix.
    pub max_row_sum_error: f64,
    pub symmetric: bool,
    /// Leading eigenvalue: the stationary one for a symmetric kernel, the
    /// leading nontrivial one for a directed kernel.
    pub lambda_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionChoice {
    pub mode: String,
    /// Gaps `lambda_i - lambda_{i+1}` over the nontrivial eigenvalues.
    pub gaps: Vec<f64>,
    pub chosen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub directed: bool,
    pub kernel: KernelConfig,
    pub eigenvalues: Vec<f64>,
    pub coordinate_offset: usize,
    pub dimension: DimensionChoice,
    pub kernel_summary: KernelSummary,
    /// Coordinates whose sign was flipped by the orientation rule.
    pub flipped: Vec<usize>,
    pub rows: usize,
    pub dt: f64,
}

/// Builds one embedding and its metadata.
pub fn embed_series(ts: &TimeSeriesMatrix, run: &Run, directed: bool, field: Option<&DriftField>) -> Result<(DiffusionEmbedding, EmbeddingMeta)> {
    let e = &run.config.embedding;
    let kernel_cfg = e.kernel(directed);
    let drift = match (directed, field) {
        (false, _) => None,
        (true, Some(f)) => Some(f.clone()),
        (true, None) => Some(estimate_drift(ts)),
    };
    let kernel = kernel_matrix(ts, &kernel_cfg, drift.as_ref())?;
    let symmetric = kernel == kernel.transpose();
    let op = markov_normalize(&kernel)?;
    let max_row_sum_error = (0..op.transition.rows())
        .map(|r| (op.transition.row(r).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let components = e.components.min(ts.len() - 1);
    let spectrum = spectral_embedding(&op, components, &kernel_cfg).context("eigendecomposition failed")?;
    let offset = usize::from(spectrum.includes_stationary);
    let nontrivial = &spectrum.eigenvalues[offset..];
    let gaps: Vec<f64> = nontrivial.windows(2).map(|w| w[0] - w[1]).collect();
    let (mode, chosen) = match e.dimension() {
        Dimension::Fixed(d) => ("fixed", d),
        Dimension::Auto { max } => {
            let d = spectral_gap_dimension(nontrivial, max);
            info!("{} spectral gaps {:?}: largest after eigenvalue {d}, dimension {d}", kind_name(directed), gaps);
            ("auto", d)
        }
    };
    let mut embedding = DiffusionEmbedding::from_spectrum(spectrum, chosen, kernel_cfg, ts.clone(), op.degrees)?;
    let flipped = match e.orient {
        Orientation::Rising => orient_rising(&mut embedding),
        Orientation::None => Vec::new(),
    };
    let meta = EmbeddingMeta {
        directed,
        kernel: kernel_cfg,
        eigenvalues: embedding.eigenvalues.clone(),
        coordinate_offset: offset,
        dimension: DimensionChoice { mode: mode.into(), gaps, chosen },
        kernel_summary: KernelSummary { max_row_sum_error, symmetric, lambda_1: embedding.eigenvalues[0] },
        flipped,
        rows: ts.len(),
        dt: ts.dt(),
    };
    Ok((embedding, meta))
}

fn orient_rising(e: &mut DiffusionEmbedding) -> Vec<usize> {
    let n = e.coordinates.rows();
    let half = n / 2;
    let mut flipped = Vec::new();
    for c in 0..e.dimension() {
        let col = e.coordinates.column(c);
        let early = col[..half].iter().sum::<f64>() / half as f64;
        let late = col[half..].iter().sum::<f64>() / (n - half) as f64;
        if late < early {
            let k = c + e.coordinate_offset;
            for i in 0..n {
                e.coordinates[(i, c)] = -e.coordinates[(i, c)];
                e.eigenvectors[(i, k)] = -e.eigenvectors[(i, k)];
            }
            flipped.push(c);
        }
    }
    flipped
}

pub fn cmd_embed(run: &Run) -> Result<()> {
    let (ts, _) = load_preprocessed(run)?;
    let e = &run.config.embedding;
    let field = match &e.drift_field {
        Some(p) => {
            let g = io::read_table(p)?.data;
            ensure!(
                g.rows() == ts.len() && g.cols() == ts.dim(),
                "drift field {} is {}x{}, data is {}x{}",
                p.display(),
                g.rows(),
                g.cols(),
                ts.len(),
                ts.dim()
            );
            Some(DriftField::from_gradient(g)?)
        }
        None => None,
    };
    let mut kinds = vec![e.directed];
    if e.compare {
        kinds.push(!e.directed);
    }
    for directed in kinds {
        let (embedding, meta) = embed_series(&ts, run, directed, field.as_ref())?;
        io::write_table(&run.path(&embedding_csv(directed)), Some(&numbered("phi", embedding.dimension())), &embedding.coordinates)?;
        io::write_json(&run.path(&embedding_json(directed)), &meta)?;
        io::write_json(&run.path(&embedding_state(directed)), &embedding)?;
        info!(
            "{} embedding: lambda_1 = {}, dimension {}",
            kind_name(directed),
            meta.kernel_summary.lambda_1,
            embedding.dimension()
        );
    }
    Ok(())
}

fn load_coordinates(run: &Run) -> Result<(Matrix, EmbeddingMeta)> {
    let directed = run.config.embedding.directed;
    let meta: EmbeddingMeta = io::read_json(&run.require(&embedding_json(directed), "embed")?)?;
    let coords = io::read_table(&run.require(&embedding_csv(directed), "embed")?)?.data;
    Ok((coords, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// In model coordinates.
    pub model: f64,
    /// In embedding coordinates (undoing the rescale).
    pub embedding: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub embedding: String,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub predictive_l1: f64,
    pub predicted_modes: Vec<usize>,
    pub equilibria: Vec<Equilibrium>,
}

pub fn cmd_fit_sde(run: &Run) -> Result<()> {
    let (coords, meta) = load_coordinates(run)?;
    let s = &run.config.sde;
    let opts = SnapshotOptions { train_fraction: s.train_fraction, seed: run.stage_seed("split"), rescale: s.rescale };
    let set = make_snapshots(&coords, meta.dt, &opts)?;
    let mut model = fit(&set, &run.config.sde.fit_options())?;
    model.rescale = set.rescale.clone();
    let diag = model.diagnostics.clone().expect("fit records diagnostics");
    if !diag.converged {
        warn!("SDE fit stopped after {} iterations without meeting the tolerance", diag.iterations);
    }
    let report: DensityReport = if set.test.is_empty() {
        bail!("no test pairs for the density check; lower sde.train_fraction")
    } else {
        validate_density(&model, &set, run.stage_seed("density"))?
    };
    let equilibria = model
        .equilibria_1d()
        .into_iter()
        .map(|(z, stable)| {
            let embedding = match &model.rescale {
                Some(r) if r.scale[0] != 0.0 => (z - r.offset[0]) / r.scale[0],
                _ => z,
            };
            Equilibrium { model: z, embedding, stable }
        })
        .collect();
    let summary = FitSummary {
        embedding: kind_name(meta.directed).into(),
        train_pairs: set.train.len(),
        test_pairs: set.test.len(),
        converged: diag.converged,
        iterations: diag.iterations,
        predictive_l1: report.l1_distance(),
        predicted_modes: report.components.iter().map(|c| c.predicted_modes).collect(),
        equilibria,
    };
    io::write_json(&run.path(MODEL_JSON), &model)?;
    io::write_json(&run.path(DENSITY_JSON), &report)?;
    io::write_json(&run.path(FIT_SUMMARY_JSON), &summary)?;
    info!("SDE fitted: train loss {}, predictive L1 {}", diag.train_loss, summary.predictive_l1);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub kind: IndicatorKind,
    pub file: Option<String>,
    pub threshold: Option<f64>,
    /// Time index of the first value at or above the threshold.
    pub warning_time: Option<usize>,
    pub argmax_time: Option<usize>,
    pub max: Option<f64>,
    pub len: usize,
    pub undefined: usize,
    pub all_nan: bool,
    /// Why the series is missing or unusable.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningReport {
    pub dt: f64,
    pub series: Vec<SeriesSummary>,
}

impl WarningReport {
    pub fn get(&self, kind: IndicatorKind) -> Option<&SeriesSummary> {
        self.series.iter().find(|s| s.kind == kind)
    }
}

#[derive(Debug, Serialize)]
struct SeriesSidecar<'a> {
    kind: IndicatorKind,
    params: &'a latentwarn_core::indicators::IndicatorParams,
    len: usize,
    /// Times whose NaN stands for an infinite value.
    infinite: &'a [usize],
}

/// Computes the four indicators on model-coordinate data `z`, writes one CSV
/// plus a JSON sidecar per series and returns the warning report.
pub fn indicators_for(run: &Run, z: &Matrix, model: &LatentSde, dt: f64, prefix: &str) -> Result<WarningReport> {
    let ic = &run.config.indicators;
    let th = &ic.thresholds;
    let regions = ic.regions(z.cols());
    let tp = match &ic.monte_carlo {
        None => transition_probability_series(z, &regions, ic.ensemble_size.min(z.rows())),
        Some(mc) => transition_probability_monte_carlo(
            z,
            model,
            &regions,
            ic.ensemble_size.min(z.rows()),
            mc.paths_per_origin,
            mc.horizon,
            dt,
            run.stage_seed("tp-monte-carlo"),
        ),
    };
    let results: Vec<(IndicatorKind, Option<f64>, Result<IndicatorSeries, Error>)> = vec![
        (IndicatorKind::OmRatio, th.om_ratio, om_ratio_series(z, model, ic.window, dt)),
        (IndicatorKind::SampleEntropy, th.sample_entropy, sample_entropy_series_strided(z, &ic.sample_entropy, ic.sample_entropy_stride)),
        (IndicatorKind::TransitionProbability, th.transition_probability, tp),
        (IndicatorKind::StdBaseline, th.std_baseline, std_baseline(z, ic.window)),
    ];
    let mut series = Vec::new();
    for (kind, threshold, result) in results {
        let s = match result {
            Ok(s) => s,
            Err(e @ (Error::NoOriginInRegion | Error::Window { .. } | Error::Shape(_))) => {
                warn!("{}: {e}", kind_slug(kind));
                series.push(SeriesSummary {
                    kind,
                    file: None,
                    threshold,
                    warning_time: None,
                    argmax_time: None,
                    max: None,
                    len: 0,
                    undefined: 0,
                    all_nan: true,
                    flag: Some(e.to_string()),
                });
                continue;
            }
            Err(e) => return Err(e).with_context(|| format!("computing {}", kind_slug(kind))),
        };
        let file = indicator_csv(prefix, kind);
        let table = Matrix::from_vec(
            s.len(),
            2,
            s.times().iter().zip(s.values()).flat_map(|(t, v)| [*t as f64, *v]).collect(),
        )?;
        io::write_table(&run.path(&file), Some(&["time_index".into(), "value".into()]), &table)?;
        io::write_json(
            &run.path(&file.replace(".csv", ".json")),
            &SeriesSidecar { kind, params: s.params(), len: s.len(), infinite: s.infinite() },
        )?;
        let all_nan = s.all_nan();
        if all_nan {
            warn!("{}: every value is undefined", kind_slug(kind));
        }
        let argmax_time = s.argmax_time();
        let max = argmax_time.map(|t| s.values()[s.times().iter().position(|x| *x == t).expect("time present")]);
        let warning_time = threshold.and_then(|t| warning_point(&s, t));
        if let Some(t) = warning_time {
            info!("{} warning at time index {t}", kind_slug(kind));
        }
        series.push(SeriesSummary {
            kind,
            file: Some(file),
            threshold,
            warning_time,
            argmax_time,
            max,
            len: s.len(),
            undefined: s.values().iter().filter(|v| v.is_nan()).count(),
            all_nan,
            flag: all_nan.then(|| String::from("all values undefined")),
        });
    }
    let report = WarningReport { dt, series };
    io::write_json(&run.path(&format!("{prefix}{WARNINGS_JSON}")), &report)?;
    Ok(report)
}

fn load_model(run: &Run) -> Result<LatentSde> {
    io::read_json(&run.require(MODEL_JSON, "fit-sde")?)
}

fn to_model_coordinates(coords: &Matrix, model: &LatentSde) -> Result<Matrix> {
    ensure!(
        coords.cols() == model.dim(),
        "coordinates have {} columns, the SDE model is {}-dimensional",
        coords.cols(),
        model.dim()
    );
    Ok(match &model.rescale {
        Some(r) => r.apply(coords),
        None => coords.clone(),
    })
}

pub fn cmd_indicators(run: &Run) -> Result<WarningReport> {
    let (coords, meta) = load_coordinates(run)?;
    let model = load_model(run)?;
    let z = to_model_coordinates(&coords, &model)?;
    indicators_for(run, &z, &model, meta.dt, "")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendMeta {
    pub source: String,
    pub embedding: String,
    pub rows: usize,
    pub dt: f64,
}

/// Projects new data onto the stored embedding. `input` overrides the path
/// in the config.
pub fn cmd_extend(run: &Run, input: Option<&Path>) -> Result<()> {
    let cfg = &run.config;
    let x = cfg.extend.as_ref();
    let path = match (input, x) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(x)) => x.path.clone(),
        (None, None) => bail!("no data to extend: set `extend` in the config or pass --input"),
    };
    let sample_rate = match (x.and_then(|x| x.sample_rate), &cfg.input) {
        (Some(r), _) => r,
        (None, InputConfig::Csv(c)) => c.sample_rate,
        (None, InputConfig::Synthetic(s)) => 1.0 / s.spec.dt,
    };
    let transpose = x.is_some_and(|x| x.transpose);
    let directed = cfg.embedding.directed;
    let embedding: DiffusionEmbedding = io::read_json(&run.require(&embedding_state(directed), "embed")?)?;
    let rec = io::load_recording(&path, sample_rate, transpose)?;
    let expected = embedding.training_data.dim();
    ensure!(
        rec.channels() == expected,
        "{} has {} channels, the embedding was trained on {expected}",
        path.display(),
        rec.channels()
    );
    let ts = preprocess(&rec, cfg.preprocess.lo, cfg.preprocess.hi, cfg.block())?;
    let coords = embedding.extend(ts.data(), ts.dt())?;
    io::write_table(&run.path("extended_coordinates.csv"), Some(&numbered("phi", coords.cols())), &coords)?;
    io::write_json(
        &run.path("extended.json"),
        &ExtendMeta { source: path.display().to_string(), embedding: kind_name(directed).into(), rows: coords.rows(), dt: ts.dt() },
    )?;
    info!("extended {} new points", coords.rows());
    if x.is_some_and(|x| x.indicators) {
        let model = load_model(run)?;
        let z = to_model_coordinates(&coords, &model)?;
        indicators_for(run, &z, &model, ts.dt(), "extended_")?;
    }
    Ok(())
}

pub fn cmd_run_all(run: &Run) -> Result<()> {
    if matches!(run.config.input, InputConfig::Synthetic(_)) {
        cmd_synth(run)?;
    }
    cmd_preprocess(run)?;
    cmd_embed(run)?;
    cmd_fit_sde(run)?;
    cmd_indicators(run)?;
    if run.config.extend.is_some() {
        cmd_extend(run, None)?;
    }
    Ok(())
}
