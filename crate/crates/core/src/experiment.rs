//! Multi-chain experiments over a grid of OU times, and the stationarity check
//! against the rejection oracle.
//!
//! Configuration is TOML. Unknown keys are rejected.
//!
//! ```toml
//! [chain]
//! beta = 1.0
//! alpha = 1.0
//! epsilon = 1.0
//! n_samples = 5000
//! seed = 2019
//!
//! [chain.leapfrog]
//! step_size = 0.1
//! n_steps = 5
//!
//! [experiment]
//! h_grid = [0.01, 0.1, 1.0, "inf"]
//! n_chains = 20
//! output_dir = "out"
//!
//! [diagnostics]
//! checkpoints = [100, 250, 500, 1000, 2500]
//! bandwidth = 1.0
//! max_lag = 50
//! ```
//!
//! Chain `k` of grid entry `i` draws from [`chain_rng`]`(seed, (i << 32) | k)`,
//! so every output file is a function of the config alone, whatever the
//! number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{
    feature_autocorrelation, ks_critical_value, ks_statistic, mmd_curve, rejection_oracle,
};
use crate::integrator::LeapfrogParams;
use crate::ou::OuTime;
use crate::sampler::{chain_rng, ChainConfig, Init, Sampler, Trace};
use crate::trace_io::{write_trace_file, TraceFileError};

/// Environment variable that overrides `experiment.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "LIE_LANGEVIN_OUT";

/// Chains shorter than this make the stationarity check inconclusive.
pub const MIN_VALIDATION_SAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Trace(#[from] TraceFileError),
    #[error("numerical error: {0}")]
    Numerical(crate::Error),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for runtime and numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<crate::Error> for ExperimentError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidConfig(msg) => ExperimentError::Config(msg),
            other => ExperimentError::Numerical(other),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

type Result<T> = std::result::Result<T, ExperimentError>;

/// Chain parameters shared by every grid entry; `h` comes from the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDefaults {
    pub beta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub leapfrog: LeapfrogParams,
    #[serde(default)]
    pub freeze_diffusion: bool,
}

impl ChainDefaults {
    pub fn with_h(&self, h: OuTime) -> ChainConfig {
        ChainConfig {
            beta: self.beta,
            h,
            leapfrog: self.leapfrog,
            alpha: self.alpha,
            epsilon: self.epsilon,
            n_samples: self.n_samples,
            seed: self.seed,
            freeze_diffusion: self.freeze_diffusion,
            acceptance_scale: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Identity,
    Haar,
}

impl From<InitKind> for Init {
    fn from(k: InitKind) -> Init {
        match k {
            InitKind::Identity => Init::Identity,
            InitKind::Haar => Init::HaarRandom,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub h_grid: Vec<OuTime>,
    pub n_chains: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub init: InitKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub checkpoints: Vec<usize>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    /// Samples dropped from the front of each chain before diagnostics.
    #[serde(default)]
    pub burn_in: usize,
}

fn default_bandwidth() -> f64 {
    1.0
}

fn default_max_lag() -> usize {
    50
}

/// Settings for [`validate_stationarity`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default = "default_validation_h")]
    pub h: OuTime,
    #[serde(default = "default_validation_samples")]
    pub n_samples: usize,
    #[serde(default = "default_validation_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_validation_samples")]
    pub oracle_samples: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_validation_h() -> OuTime {
    OuTime::Finite(0.5)
}

fn default_validation_samples() -> usize {
    50_000
}

fn default_validation_burn_in() -> usize {
    1000
}

fn default_level() -> f64 {
    0.01
}

impl Default for ValidationSection {
    fn default() -> Self {
        ValidationSection {
            h: default_validation_h(),
            n_samples: default_validation_samples(),
            burn_in: default_validation_burn_in(),
            oracle_samples: default_validation_samples(),
            level: default_level(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chain: ChainDefaults,
    pub experiment: GridSection,
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub validation: ValidationSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            ExperimentError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.experiment.h_grid.is_empty() {
            return bad("experiment.h_grid is empty");
        }
        if self.experiment.n_chains == 0 {
            return bad("experiment.n_chains must be at least 1");
        }
        let d = &self.diagnostics;
        if d.checkpoints.is_empty() {
            return bad("diagnostics.checkpoints is empty");
        }
        if d.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("diagnostics.checkpoints must be strictly ascending");
        }
        let usable = self.chain.n_samples.saturating_sub(d.burn_in);
        if d.checkpoints[0] == 0 || *d.checkpoints.last().unwrap() > usable {
            return bad("diagnostics.checkpoints must lie in [1, n_samples - burn_in]");
        }
        if d.max_lag >= usable {
            return bad("diagnostics.max_lag must be below n_samples - burn_in");
        }
        if !(d.bandwidth.is_finite() && d.bandwidth > 0.0) {
            return bad("diagnostics.bandwidth must be positive");
        }
        let v = &self.validation;
        if !(v.level > 0.0 && v.level < 1.0) {
            return bad("validation.level must lie in (0, 1)");
        }
        for h in &self.experiment.h_grid {
            self.chain.with_h(*h).validate()?;
        }
        self.validation_chain().validate()?;
        Ok(())
    }

    pub fn validation_chain(&self) -> ChainConfig {
        ChainConfig {
            n_samples: self.validation.burn_in + self.validation.n_samples,
            ..self.chain.with_h(self.validation.h)
        }
    }
}

/// Column name for a grid entry in the aggregated CSVs; `h = ∞` is `hmc`.
pub fn column_name(h: &OuTime) -> String {
    match h {
        OuTime::Infinite => "hmc".to_string(),
        other => format!("h_{}", other.label()),
    }
}

fn stream_id(h_index: usize, chain: usize) -> u64 {
    ((h_index as u64) << 32) | chain as u64
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainSummary {
    pub h: OuTime,
    pub h_index: usize,
    pub chain: usize,
    pub seed: u64,
    pub stream: u64,
    pub n_samples: usize,
    pub acceptance_rate: f64,
    pub mean_hamiltonian: f64,
    pub mean_trace: f64,
    pub mmd: Vec<f64>,
    pub autocorrelation: Vec<f64>,
    pub trace_file: PathBuf,
}

/// Per-`h` averages over chains.
#[derive(Clone, Debug, Serialize)]
pub struct GridResult {
    pub h: OuTime,
    pub mean_acceptance: f64,
    pub mmd: Vec<f64>,
    pub autocorrelation: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub checkpoints: Vec<usize>,
    pub grid: Vec<GridResult>,
    pub chains: Vec<ChainSummary>,
}

impl ExperimentSummary {
    pub fn result_for(&self, h: OuTime) -> Option<&GridResult> {
        self.grid.iter().find(|g| g.h == h)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a ExperimentConfig,
    output_dir: &'a Path,
    seed_rule: &'static str,
    chains: Vec<ManifestChain<'a>>,
}

#[derive(Serialize)]
struct ManifestChain<'a> {
    h: OuTime,
    h_index: usize,
    chain: usize,
    seed: u64,
    stream: u64,
    trace_file: &'a Path,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn run_one(cfg: &ExperimentConfig, out: &Path, h_index: usize, chain: usize) -> Result<ChainSummary> {
    let h = cfg.experiment.h_grid[h_index];
    let chain_cfg = cfg.chain.with_h(h);
    let stream = stream_id(h_index, chain);
    let sampler = Sampler::new(chain_cfg)?;
    let mut rng = chain_rng(cfg.chain.seed, stream);
    let trace = sampler.run(cfg.experiment.init.into(), &mut rng)?;

    let dir = out.join(format!("h_{}", h.label()));
    let trace_file = dir.join(format!("chain_{chain:02}.csv"));
    write_trace_file(&trace, &trace_file).map_err(io_err(&trace_file))?;

    let d = &cfg.diagnostics;
    let kept = Trace {
        records: trace.records[d.burn_in..].to_vec(),
        config: trace.config.clone(),
    };
    let n = kept.len() as f64;
    let summary = ChainSummary {
        h,
        h_index,
        chain,
        seed: cfg.chain.seed,
        stream,
        n_samples: trace.len(),
        acceptance_rate: trace.acceptance_rate(),
        mean_hamiltonian: kept.records.iter().map(|r| r.hamiltonian).sum::<f64>() / n,
        mean_trace: kept.positions().map(|g| g.trace()).sum::<f64>() / n,
        mmd: mmd_curve(&kept, &d.checkpoints, d.bandwidth).values,
        autocorrelation: feature_autocorrelation(&kept, d.max_lag, 0),
        trace_file,
    };
    write_json(&dir.join(format!("chain_{chain:02}.json")), &summary)?;
    Ok(summary)
}

fn average(rows: &[&Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; rows[0].len()];
    for row in rows {
        for (a, x) in acc.iter_mut().zip(row.iter()) {
            *a += x;
        }
    }
    acc.iter().map(|a| a / rows.len() as f64).collect()
}

fn write_table(path: &Path, first: &str, index: &[usize], grid: &[GridResult], pick: impl Fn(&GridResult) -> &[f64]) -> Result<()> {
    let mut text = String::from(first);
    for g in grid {
        text.push(',');
        text.push_str(&column_name(&g.h));
    }
    text.push('\n');
    for (row, idx) in index.iter().enumerate() {
        write!(text, "{idx}").unwrap();
        for g in grid {
            write!(text, ",{:.16e}", pick(g)[row]).unwrap();
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Runs every (h, chain) pair on `jobs` worker threads (rayon's default when
/// `None`) and writes traces, per-chain summaries, aggregated curves and the
/// manifest under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: Option<usize>) -> Result<ExperimentSummary> {
    cfg.validate()?;
    for h in &cfg.experiment.h_grid {
        let dir = out.join(format!("h_{}", h.label()));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }

    let tasks: Vec<(usize, usize)> = (0..cfg.experiment.h_grid.len())
        .flat_map(|i| (0..cfg.experiment.n_chains).map(move |k| (i, k)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| ExperimentError::Config(format!("cannot start worker pool: {e}")))?;
    let chains: Vec<ChainSummary> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, k)| run_one(cfg, out, i, k))
            .collect::<Result<Vec<_>>>()
    })?;

    let grid: Vec<GridResult> = cfg
        .experiment
        .h_grid
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let mine: Vec<&ChainSummary> = chains.iter().filter(|c| c.h_index == i).collect();
            GridResult {
                h: *h,
                mean_acceptance: mine.iter().map(|c| c.acceptance_rate).sum::<f64>() / mine.len() as f64,
                mmd: average(&mine.iter().map(|c| &c.mmd).collect::<Vec<_>>()),
                autocorrelation: average(&mine.iter().map(|c| &c.autocorrelation).collect::<Vec<_>>()),
            }
        })
        .collect();

    let d = &cfg.diagnostics;
    write_table(&out.join("mmd_curve.csv"), "checkpoint", &d.checkpoints, &grid, |g| &g.mmd)?;
    let lags: Vec<usize> = (0..=d.max_lag).collect();
    write_table(&out.join("autocorr.csv"), "lag", &lags, &grid, |g| &g.autocorrelation)?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        output_dir: out,
        seed_rule: "ChaCha20Rng::seed_from_u64(seed) with stream (h_index << 32) | chain",
        chains: chains
            .iter()
            .map(|c| ManifestChain {
                h: c.h,
                h_index: c.h_index,
                chain: c.chain,
                seed: c.seed,
                stream: c.stream,
                trace_file: &c.trace_file,
            })
            .collect(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    Ok(ExperimentSummary { checkpoints: d.checkpoints.clone(), grid, chains })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    pub chain_samples: usize,
    pub oracle_samples: usize,
    pub statistic: f64,
    pub critical_value: f64,
    pub level: f64,
    pub acceptance_rate: f64,
    pub chain_mean_trace: f64,
    pub oracle_mean_trace: f64,
    pub verdict: Verdict,
}

/// Two-sample KS test of `Tr g` between a long chain (after burn-in) and
/// exact draws from the rejection oracle.
///
/// `chain` carries everything about the sampler, including `n_samples`
/// (burn-in included). The oracle uses its own stream of the same seed.
pub fn validate_stationarity(
    chain: &ChainConfig,
    burn_in: usize,
    oracle_samples: usize,
    level: f64,
) -> std::result::Result<StationarityReport, crate::Error> {
    let sampler = Sampler::new(chain.clone())?;
    let trace = sampler.run(Init::Identity, &mut chain_rng(chain.seed, 0))?;
    let kept: Vec<f64> = trace.records[burn_in.min(trace.len())..]
        .iter()
        .map(|r| r.state.g.trace())
        .collect();
    let oracle: Vec<f64> = rejection_oracle(chain.alpha, chain.beta, oracle_samples, &mut chain_rng(chain.seed, u64::MAX))
        .iter()
        .map(|g| g.trace())
        .collect();

    let statistic = if kept.is_empty() || oracle.is_empty() { f64::NAN } else { ks_statistic(&kept, &oracle) };
    let critical_value = ks_critical_value(level, kept.len().max(1), oracle.len().max(1));
    let verdict = if kept.len() < MIN_VALIDATION_SAMPLES || oracle.len() < MIN_VALIDATION_SAMPLES {
        Verdict::Inconclusive
    } else if statistic < critical_value {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    Ok(StationarityReport {
        chain_samples: kept.len(),
        oracle_samples: oracle.len(),
        statistic,
        critical_value,
        level,
        acceptance_rate: trace.acceptance_rate(),
        chain_mean_trace: mean(&kept),
        oracle_mean_trace: mean(&oracle),
        verdict,
    })
}

/// [`validate_stationarity`] with the `[validation]` section of `cfg`.
pub fn validate_config(cfg: &ExperimentConfig) -> std::result::Result<StationarityReport, crate::Error> {
    let v = &cfg.validation;
    validate_stationarity(&cfg.validation_chain(), v.burn_in, v.oracle_samples, v.level)
}
