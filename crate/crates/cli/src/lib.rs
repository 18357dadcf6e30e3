//! Batch experiment driver: outage and capacity sweeps, table reproduction,
//! the validation suite and operator guessing, written as CSV plus JSON.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use zfhgm::baselines::{
    gamma_approx_measures, gamma_measure, rayleigh_outage, worst_case_los, GammaApprox,
};
use zfhgm::channel::{
    derive_from_los, derive_snr_details, derive_snr_params, derive_stream_params,
    gamma_s_from_gamma_b_db, laplacian_correlation, sample_winner_params, steering_vectors,
    ChannelSpec, CorrelationMatrix, SnrParams,
};
use zfhgm::config::{load_structured, Scenario, WinnerConfig};
use zfhgm::deq::OperatorJson;
use zfhgm::hgm::{expansion_point, find_operator, hgm_params, SolverConfig};
use zfhgm::kernel::MeasureKind;
use zfhgm::mc::{estimate, lemma_checks, SimConfig};
use zfhgm::series::{
    eval_double_series, eval_series, rician_rayleigh_mgf, Precision, TruncationPolicy,
};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "ZFHGM_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] zfhgm::Error),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {total} per-sample evaluations failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Series,
    DoubleSeries,
    Hgm,
    Mc,
    GammaApprox,
    Rayleigh,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Series => "series",
            Engine::DoubleSeries => "double-series",
            Engine::Hgm => "hgm",
            Engine::Mc => "mc",
            Engine::GammaApprox => "gamma-approx",
            Engine::Rayleigh => "rayleigh",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Engine> {
        match s.trim().to_ascii_lowercase().as_str() {
            "series" => Ok(Engine::Series),
            "double-series" | "double" => Ok(Engine::DoubleSeries),
            "hgm" => Ok(Engine::Hgm),
            "mc" => Ok(Engine::Mc),
            "gamma-approx" | "gamma" => Ok(Engine::GammaApprox),
            "rayleigh" => Ok(Engine::Rayleigh),
            other => Err(CliError::Config(format!("unknown engine {other:?}"))),
        }
    }
}

pub fn parse_engines(list: &str) -> Result<Vec<Engine>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    GammaB,
    As,
    K,
    ThetaT,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::GammaB => "gamma_b_db",
            Axis::As => "as_deg",
            Axis::K => "k_db",
            Axis::ThetaT => "theta_t_deg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Per-array receive and transmit antenna counts; multiplied by `n_arrays`.
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_arrays: usize,
    pub k_db: f64,
    pub as_deg: f64,
    pub theta_t_deg: Option<f64>,
    pub theta_r_deg: Option<f64>,
    pub theta_c_deg: Option<f64>,
    /// Lognormal scenario for `outage-averaged`.
    pub winner: Option<Scenario>,
    pub winner_samples: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_rx: 6,
            n_tx: 4,
            n_arrays: 1,
            k_db: 7.0,
            as_deg: 51.0,
            theta_t_deg: None,
            theta_r_deg: None,
            theta_c_deg: None,
            winner: None,
            winner_samples: 2100,
        }
    }
}

impl ScenarioConfig {
    pub fn spec(&self) -> ChannelSpec {
        let mut s = ChannelSpec::new(
            self.n_rx * self.n_arrays,
            self.n_tx * self.n_arrays,
            self.k_db,
            self.as_deg,
        );
        if let Some(t) = self.theta_t_deg {
            s.theta_t_deg = t;
        }
        if let Some(t) = self.theta_r_deg {
            s.theta_r_deg = t;
        }
        if let Some(t) = self.theta_c_deg {
            s.theta_c_deg = t;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOptions {
    pub mc_samples: usize,
    pub lemma_samples: usize,
    /// Mutation probe: negate x₁ before the proportionality check.
    pub inject_x1_sign_error: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            mc_samples: 20_000,
            lemma_samples: 20_000,
            inject_x1_sign_error: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub sweep: Sweep,
    pub engines: Vec<Engine>,
    pub tau_db: f64,
    /// Fixed Γ_b for sweeps along other axes.
    pub gamma_b_db: f64,
    /// Γ_s for capacity sweeps.
    pub gamma_s_db: f64,
    pub seed: u64,
    pub mc: SimConfig,
    /// Series working precision in decimal digits; double precision when unset.
    pub precision_digits: Option<u32>,
    pub solver: SolverConfig,
    pub winner: Option<WinnerConfig>,
    pub validation: ValidationOptions,
    /// In `outage-averaged`, replace failed HGM draws by a long double-precision series when it converges.
    pub averaged_series_fallback: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            sweep: Sweep {
                axis: Axis::GammaB,
                values: vec![5.0, 10.0, 15.0, 20.0, 25.0],
            },
            engines: vec![Engine::Series, Engine::Hgm],
            tau_db: 8.2,
            gamma_b_db: 15.0,
            gamma_s_db: 10.0,
            seed: 1,
            mc: SimConfig::with_samples(100_000, 1),
            precision_digits: None,
            solver: SolverConfig::default(),
            winner: None,
            validation: ValidationOptions::default(),
            averaged_series_fallback: true,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        Ok(load_structured(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.engines.is_empty() {
            return Err(CliError::Config("select at least one engine".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(CliError::Config("sweep grid is empty".into()));
        }
        if self.sweep.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CliError::Config(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        if self.scenario.n_arrays == 0 {
            return Err(CliError::Config("n_arrays must be at least 1".into()));
        }
        self.scenario.spec().validate()?;
        self.mc.validate()?;
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        10f64.powf(self.tau_db / 10.0)
    }

    pub fn policy(&self) -> TruncationPolicy {
        match self.precision_digits {
            Some(d) => TruncationPolicy {
                precision: Precision::Digits(d),
                ..TruncationPolicy::default()
            },
            None => TruncationPolicy::default(),
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.mc.clone()
        }
    }

    pub fn winner_config(&self) -> WinnerConfig {
        self.winner
            .clone()
            .unwrap_or_else(WinnerConfig::placeholder)
    }

    /// Channel and Γ_s at one grid value, for outage (Γ_s from Γ_b) or capacity (fixed Γ_s).
    fn point(&self, x: f64, capacity: bool) -> (ChannelSpec, f64) {
        let mut spec = self.scenario.spec();
        let mut gamma_s = if capacity {
            10f64.powf(self.gamma_s_db / 10.0)
        } else {
            gamma_s_from_gamma_b_db(self.gamma_b_db)
        };
        match self.sweep.axis {
            Axis::GammaB => gamma_s = gamma_s_from_gamma_b_db(x),
            Axis::As => spec.as_deg = x,
            Axis::K => spec.k_db = x,
            Axis::ThetaT => spec.theta_t_deg = x,
        }
        (spec, gamma_s)
    }
}

/// Runs `f` inside a pool sized by the worker environment variable when it is set.
pub fn with_workers<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let n = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    match n.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageRow {
    pub axis: String,
    pub axis_value: f64,
    pub engine: String,
    pub value: Option<f64>,
    pub converged: Option<bool>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub engine: String,
    pub seconds: f64,
}

fn row(axis: Axis, x: f64, engine: Engine) -> OutageRow {
    OutageRow {
        axis: axis.name().into(),
        axis_value: x,
        engine: engine.name().into(),
        value: None,
        converged: None,
        se: None,
        ci_low: None,
        ci_high: None,
        error: None,
    }
}

/// Γ₁ of the same geometry with the LoS removed.
fn rayleigh_params(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
) -> zfhgm::Result<SnrParams> {
    derive_snr_params(&spec.with_k_db(f64::NEG_INFINITY), r_t, gamma_s)
}

fn outage_engine(
    cfg: &ExperimentConfig,
    spec: &ChannelSpec,
    gamma_s: f64,
    engine: Engine,
    out: &mut OutageRow,
) -> zfhgm::Result<()> {
    let r = spec.correlation()?;
    let kind = MeasureKind::OutageProb { tau: cfg.tau() };
    match engine {
        Engine::Series | Engine::DoubleSeries => {
            let p = derive_snr_params(spec, &r, gamma_s)?;
            let s = if engine == Engine::Series {
                eval_series(&kind, &p, &cfg.policy())?
            } else {
                eval_double_series(&kind, &p, &cfg.policy())?
            };
            out.value = Some(s.value);
            out.converged = Some(s.converged && s.trusted);
        }
        Engine::Hgm => {
            let p = derive_snr_params(spec, &r, gamma_s)?;
            out.value = Some(hgm_params(&kind, &p, spec.k_db, &cfg.solver)?.value);
            out.converged = Some(true);
        }
        Engine::Mc => {
            let e = estimate(spec, &r, gamma_s, cfg.tau(), &cfg.sim())?;
            out.value = Some(e.p_out);
            out.se = Some(e.p_out_se);
            out.ci_low = Some((e.p_out - 1.96 * e.p_out_se).max(0.0));
            out.ci_high = Some((e.p_out + 1.96 * e.p_out_se).min(1.0));
        }
        Engine::GammaApprox => out.value = Some(gamma_approx_measures(spec, &r, gamma_s, &kind)?),
        Engine::Rayleigh => {
            let p = rayleigh_params(spec, &r, gamma_s)?;
            out.value = Some(rayleigh_outage(p.n_dof, cfg.tau() / p.gamma1)?);
        }
    }
    Ok(())
}

/// Outage along the sweep axis, one row per grid point and engine, in grid order.
pub fn run_outage_sweep(cfg: &ExperimentConfig) -> Result<(Vec<OutageRow>, Vec<Timing>)> {
    cfg.validate()?;
    let per_point: Vec<Vec<(OutageRow, Timing)>> = with_workers(|| {
        cfg.sweep
            .values
            .par_iter()
            .map(|&x| {
                let (spec, gamma_s) = cfg.point(x, false);
                cfg.engines
                    .iter()
                    .map(|&e| {
                        let mut out = row(cfg.sweep.axis, x, e);
                        let t = Instant::now();
                        if let Err(err) = outage_engine(cfg, &spec, gamma_s, e, &mut out) {
                            out.error = Some(err.to_string());
                        }
                        let timing = Timing {
                            label: format!("{}={x}", cfg.sweep.axis.name()),
                            engine: e.name().into(),
                            seconds: t.elapsed().as_secs_f64(),
                        };
                        (out, timing)
                    })
                    .collect()
            })
            .collect()
    });
    Ok(per_point.into_iter().flatten().unzip())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedRow {
    pub gamma_b_db: f64,
    pub rician_hgm: f64,
    pub rayleigh: f64,
    pub samples: usize,
    /// Draws where HGM failed.
    pub hgm_failures: usize,
    /// HGM failures replaced by a converged, trusted long series.
    pub series_fallbacks: usize,
    /// Draws with no value from either engine.
    pub failures: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SampleValue {
    Hgm(f64),
    Fallback(f64),
    Failed,
}

/// Double-precision series with the outer truncation sized to the Poisson mass at x₂.
pub fn long_series(kind: &MeasureKind, p: &SnrParams) -> zfhgm::Result<Option<f64>> {
    let n_max = (p.x2 + 12.0 * p.x2.sqrt()) as usize + 150;
    let s = eval_series(
        kind,
        p,
        &TruncationPolicy {
            n_max,
            ..TruncationPolicy::default()
        },
    )?;
    Ok((s.converged && s.trusted).then_some(s.value))
}

fn sample_outage(
    kind: &MeasureKind,
    p: &SnrParams,
    k_db: f64,
    cfg: &ExperimentConfig,
) -> SampleValue {
    match hgm_params(kind, p, k_db, &cfg.solver) {
        Ok(v) if v.value.is_finite() => SampleValue::Hgm(v.value),
        _ if cfg.averaged_series_fallback => match long_series(kind, p) {
            Ok(Some(v)) => SampleValue::Fallback(v),
            _ => SampleValue::Failed,
        },
        _ => SampleValue::Failed,
    }
}

/// Per-Γ_b average of the per-(K, AS) HGM outage over lognormal draws, with the
/// matching Rayleigh average (Γ₁ re-derived for each AS draw).
pub fn run_averaged_outage(cfg: &ExperimentConfig) -> Result<Vec<AveragedRow>> {
    cfg.validate()?;
    if cfg.sweep.axis != Axis::GammaB {
        return Err(CliError::Config("outage-averaged sweeps Γ_b".into()));
    }
    let scenario = cfg
        .scenario
        .winner
        .ok_or_else(|| CliError::Config("outage-averaged needs scenario.winner".into()))?;
    let draws = sample_winner_params(
        scenario,
        cfg.scenario.winner_samples,
        cfg.seed,
        &cfg.winner_config(),
    )?;
    if draws.is_empty() {
        return Err(CliError::Config("winner_samples must be positive".into()));
    }
    let mut unique: Vec<(f64, f64)> = Vec::new();
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let slots: Vec<usize> = draws
        .iter()
        .map(|&(k, a)| {
            *index.entry((k.to_bits(), a.to_bits())).or_insert_with(|| {
                unique.push((k, a));
                unique.len() - 1
            })
        })
        .collect();
    let tau = cfg.tau();
    let kind = MeasureKind::OutageProb { tau };
    let mut rows = Vec::new();
    for &gb in &cfg.sweep.values {
        let gamma_s = gamma_s_from_gamma_b_db(gb);
        let vals: Vec<(SampleValue, f64)> = with_workers(|| {
            unique
                .par_iter()
                .map(|&(k_db, as_deg)| {
                    let spec = ScenarioConfig {
                        k_db,
                        as_deg,
                        ..cfg.scenario.clone()
                    }
                    .spec();
                    let eval = || -> zfhgm::Result<(SampleValue, f64)> {
                        let r = spec.correlation()?;
                        let p = derive_snr_params(&spec, &r, gamma_s)?;
                        let h = sample_outage(&kind, &p, k_db, cfg);
                        let pr = rayleigh_params(&spec, &r, gamma_s)?;
                        Ok((h, rayleigh_outage(pr.n_dof, tau / pr.gamma1)?))
                    };
                    eval().unwrap_or((SampleValue::Failed, f64::NAN))
                })
                .collect()
        });
        let mut row = AveragedRow {
            gamma_b_db: gb,
            rician_hgm: 0.0,
            rayleigh: 0.0,
            samples: 0,
            hgm_failures: 0,
            series_fallbacks: 0,
            failures: 0,
        };
        for &s in &slots {
            let (h, r) = vals[s];
            let v = match h {
                SampleValue::Hgm(v) => Some(v),
                SampleValue::Fallback(v) => {
                    row.hgm_failures += 1;
                    row.series_fallbacks += 1;
                    Some(v)
                }
                SampleValue::Failed => {
                    row.hgm_failures += 1;
                    None
                }
            };
            match v {
                Some(v) if r.is_finite() => {
                    row.rician_hgm += v;
                    row.rayleigh += r;
                    row.samples += 1;
                }
                _ => row.failures += 1,
            }
        }
        if row.failures * 100 > draws.len() {
            return Err(CliError::TooManyFailures {
                failed: row.failures,
                total: draws.len(),
            });
        }
        row.rician_hgm /= row.samples as f64;
        row.rayleigh /= row.samples as f64;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub axis: String,
    pub axis_value: f64,
    pub engine: String,
    pub zf_sum_rate: Option<f64>,
    pub zf_se: Option<f64>,
    pub ml_sum_rate: Option<f64>,
    pub ml_se: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

fn capacity_engine(
    cfg: &ExperimentConfig,
    spec: &ChannelSpec,
    gamma_s: f64,
    engine: Engine,
    out: &mut CapacityRow,
) -> zfhgm::Result<()> {
    let r = spec.correlation()?;
    let kind = MeasureKind::Capacity;
    let streams = 0..spec.n_tx;
    match engine {
        Engine::Series | Engine::DoubleSeries => {
            let (mut sum, mut ok) = (0.0, true);
            for k in streams {
                let p = derive_stream_params(spec, &r, gamma_s, k)?;
                let s = if engine == Engine::Series {
                    eval_series(&kind, &p, &cfg.policy())?
                } else {
                    eval_double_series(&kind, &p, &cfg.policy())?
                };
                sum += s.value;
                ok &= s.converged && s.trusted;
            }
            out.zf_sum_rate = Some(sum);
            out.converged = Some(ok);
        }
        Engine::Hgm => {
            let mut sum = 0.0;
            for k in streams {
                let p = derive_stream_params(spec, &r, gamma_s, k)?;
                sum += hgm_params(&kind, &p, spec.k_db, &cfg.solver)?.value;
            }
            out.zf_sum_rate = Some(sum);
            out.converged = Some(true);
        }
        Engine::Mc => {
            let e = estimate(spec, &r, gamma_s, cfg.tau(), &cfg.sim())?;
            out.zf_sum_rate = Some(e.zf_sum_rate.mean);
            out.zf_se = Some(e.zf_sum_rate.se);
            out.ml_sum_rate = Some(e.ml_sum_rate.mean);
            out.ml_se = Some(e.ml_sum_rate.se);
        }
        Engine::GammaApprox => {
            let los = steering_vectors(spec)?;
            let mut sum = 0.0;
            for k in streams {
                sum += GammaApprox::with_los(spec, &los.rotated(k), &r.rotated(k), gamma_s)?
                    .measure(&kind)?;
            }
            out.zf_sum_rate = Some(sum);
        }
        Engine::Rayleigh => {
            let flat = spec.with_k_db(f64::NEG_INFINITY);
            let mut sum = 0.0;
            for k in streams {
                let p = derive_stream_params(&flat, &r, gamma_s, k)?;
                sum += gamma_measure(p.n_dof, p.gamma1, &kind)?;
            }
            out.zf_sum_rate = Some(sum);
        }
    }
    Ok(())
}

/// ZF sum rate (sum of per-stream ergodic capacities) along the sweep axis; MC rows add the ML rate.
pub fn run_capacity_sweep(cfg: &ExperimentConfig) -> Result<(Vec<CapacityRow>, Vec<Timing>)> {
    cfg.validate()?;
    let per_point: Vec<Vec<(CapacityRow, Timing)>> = with_workers(|| {
        cfg.sweep
            .values
            .par_iter()
            .map(|&x| {
                let (spec, gamma_s) = cfg.point(x, true);
                cfg.engines
                    .iter()
                    .map(|&e| {
                        let mut out = CapacityRow {
                            axis: cfg.sweep.axis.name().into(),
                            axis_value: x,
                            engine: e.name().into(),
                            zf_sum_rate: None,
                            zf_se: None,
                            ml_sum_rate: None,
                            ml_se: None,
                            converged: None,
                            error: None,
                        };
                        let t = Instant::now();
                        if let Err(err) = capacity_engine(cfg, &spec, gamma_s, e, &mut out) {
                            out.error = Some(err.to_string());
                        }
                        let timing = Timing {
                            label: format!("{}={x}", cfg.sweep.axis.name()),
                            engine: e.name().into(),
                            seconds: t.elapsed().as_secs_f64(),
                        };
                        (out, timing)
                    })
                    .collect()
            })
            .collect()
    });
    Ok(per_point.into_iter().flatten().unzip())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub config: String,
    pub gamma_b_db: f64,
    pub reference: f64,
    pub engine: String,
    pub value: Option<f64>,
    pub converged: Option<bool>,
    pub se: Option<f64>,
    pub error: Option<String>,
}

/// One configuration of the reference table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableCase {
    pub label: &'static str,
    pub scenario: Scenario,
    pub n_arrays: usize,
    /// (Γ_b dB, reference outage) pairs.
    pub points: [(f64, f64); 2],
}

pub fn table1_cases() -> Vec<TableCase> {
    let case = |label, scenario, n_arrays, points| TableCase {
        label,
        scenario,
        n_arrays,
        points,
    };
    vec![
        case(
            "A1 Na=1",
            Scenario::A1,
            1,
            [(15.0, 1.53e-2), (25.0, 2.15e-5)],
        ),
        case(
            "A1 Na=2",
            Scenario::A1,
            2,
            [(11.0, 1.74e-2), (17.0, 4.26e-5)],
        ),
        case(
            "C2 Na=1",
            Scenario::C2,
            1,
            [(23.0, 1.12e-2), (32.0, 3.01e-5)],
        ),
    ]
}

/// Outage at the table's points for the selected engines, with wall-clock timings.
pub fn table1(cfg: &ExperimentConfig) -> Result<(Vec<Table1Row>, Vec<Timing>)> {
    if cfg.engines.is_empty() {
        return Err(CliError::Config("select at least one engine".into()));
    }
    let winner = cfg.winner_config();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for TableCase {
        label,
        scenario,
        n_arrays: arrays,
        points,
    } in table1_cases()
    {
        let law = winner
            .get(scenario)
            .ok_or_else(|| CliError::Config(format!("no lognormal law for {scenario:?}")))?;
        let sc = ScenarioConfig {
            n_arrays: arrays,
            k_db: law.k_db_mean,
            as_deg: law.as_deg_mean,
            ..ScenarioConfig::default()
        };
        let spec = sc.spec();
        for (gb, reference) in points {
            for &e in &cfg.engines {
                let mut out = row(Axis::GammaB, gb, e);
                let t = Instant::now();
                if let Err(err) =
                    outage_engine(cfg, &spec, gamma_s_from_gamma_b_db(gb), e, &mut out)
                {
                    out.error = Some(err.to_string());
                }
                timings.push(Timing {
                    label: format!("{label} Γb={gb}"),
                    engine: e.name().into(),
                    seconds: t.elapsed().as_secs_f64(),
                });
                rows.push(Table1Row {
                    config: label.into(),
                    gamma_b_db: gb,
                    reference,
                    engine: e.name().into(),
                    value: out.value,
                    converged: out.converged,
                    se: out.se,
                    error: out.error,
                });
            }
        }
    }
    Ok((rows, timings))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, f: impl FnOnce() -> zfhgm::Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check {
            name: name.into(),
            passed,
            detail,
        },
        Err(e) => Check {
            name: name.into(),
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Aggregated self-checks: reductions, identities, lemma statistics and operator certification.
pub fn run_validation_suite(cfg: &ExperimentConfig) -> ValidationReport {
    let opts = &cfg.validation;
    let tau = cfg.tau();
    let mut checks = Vec::new();

    checks.push(check("z0_mapping", || {
        let s = ChannelSpec::new(6, 4, 7.0, 51.0);
        let x2 = derive_snr_params(&s, &CorrelationMatrix::identity(4), 1.0)?.x2;
        let z0 = expansion_point(x2, 7.0, -25.0);
        Ok((format!("{z0:.3e}") == "5.692e-2", format!("z0 = {z0:.5}")))
    }));

    checks.push(check("correlation_anchors", || {
        let low = laplacian_correlation(51.0, 5.0, 4, 0.5)?.r12_abs();
        let high = laplacian_correlation(11.0, 5.0, 4, 0.5)?.r12_abs();
        Ok((
            (low - 0.12).abs() <= 0.02 && (high - 0.83).abs() <= 0.02,
            format!("|r12| = {low:.4} at 51°, {high:.4} at 11°"),
        ))
    }));

    checks.push(check("x_proportionality", || {
        let mut worst = 0.0f64;
        for (k_db, as_deg, theta) in [(7.0, 51.0, 5.0), (3.0, 20.0, -10.0), (12.0, 11.0, 20.0)] {
            let mut s = ChannelSpec::new(6, 4, k_db, as_deg);
            s.theta_t_deg = theta;
            let r = s.correlation()?;
            let d = derive_snr_details(&s, &r, 1.0)?;
            let x1 = if opts.inject_x1_sign_error {
                -d.params.x1
            } else {
                d.params.x1
            };
            let w = zfhgm::baselines::worst_case_condition(&s, &r)?;
            worst = worst.max(rel(x1, d.rtk_inv11 * w.residual * w.residual));
        }
        Ok((worst < 1e-10, format!("max relative gap {worst:e}")))
    }));

    checks.push(check("reduction_rician_rayleigh", || {
        let mut worst = 0.0f64;
        for s_arg in [-0.5, -0.05, 0.02] {
            let p = SnrParams::new(2.5, 3.7, 0.0, 6, 4);
            let kind = MeasureKind::Mgf { s: s_arg };
            let closed = rician_rayleigh_mgf(s_arg, &p)?;
            worst = worst.max(rel(
                eval_series(&kind, &p, &TruncationPolicy::default())?.value,
                closed,
            ));
            worst = worst.max(rel(
                eval_double_series(&kind, &p, &TruncationPolicy::default())?.value,
                closed,
            ));
        }
        Ok((worst < 1e-10, format!("max relative gap {worst:e}")))
    }));

    checks.push(check("reduction_rayleigh", || {
        let mut worst = 0.0f64;
        for g in [0.5, 4.0, 60.0] {
            let p = SnrParams::new(g, 0.0, 0.0, 6, 4);
            let s = eval_series(
                &MeasureKind::OutageProb { tau },
                &p,
                &TruncationPolicy::default(),
            )?
            .value;
            worst = worst.max(rel(s, rayleigh_outage(3, tau / g)?));
        }
        Ok((worst < 1e-10, format!("max relative gap {worst:e}")))
    }));

    checks.push(check("dual_formula_audit", || {
        let s = ChannelSpec::new(6, 4, 7.0, 51.0);
        let sim = SimConfig {
            n_samples: opts.mc_samples.max(1),
            seed: cfg.seed,
            audit_every: 1,
            ..SimConfig::default()
        };
        let e = estimate(&s, &s.correlation()?, 20.0, tau, &sim)?;
        Ok((
            e.max_dual_discrepancy < 1e-9,
            format!(
                "{} audits, max relative gap {:e}",
                e.audited, e.max_dual_discrepancy
            ),
        ))
    }));

    checks.push(check("lemma_statistics", || {
        let s = ChannelSpec::new(6, 4, 7.0, 51.0);
        let rep = lemma_checks(
            &s,
            &s.correlation()?,
            &SimConfig::with_samples(opts.lemma_samples.max(2), cfg.seed),
        )?;
        let zmax = rep
            .beta1_moments
            .iter()
            .map(|m| m.z_score().abs())
            .fold(0.0, f64::max);
        let ks = rep.ks_pvalue.unwrap_or(1.0);
        let corr_ok = rep.corr.abs() < 3.0 / (rep.n_samples as f64).sqrt();
        Ok((
            zmax < 3.0 && ks > 0.01 && corr_ok && rep.max_identity_error < 1e-10,
            format!(
                "max |z| {zmax:.2}, KS p {ks:.3}, corr {:.2e}, identity {:e}",
                rep.corr, rep.max_identity_error
            ),
        ))
    }));

    checks.push(check("operator_certification", || {
        let s = ChannelSpec::new(6, 4, 7.0, 51.0);
        let p = derive_snr_params(&s, &s.correlation()?, gamma_s_from_gamma_b_db(15.0))?;
        let z0 = expansion_point(p.x2, 7.0, cfg.solver.z0_k_db);
        let f = find_operator(&MeasureKind::OutageProb { tau }, &p, z0, p.x2, &cfg.solver)?;
        Ok((
            f.max_residual < cfg.solver.cert_tol && f.fit_count >= 80,
            format!(
                "order {} degree {} fit {} residual {:e}",
                f.order, f.degree, f.fit_count, f.max_residual
            ),
        ))
    }));

    checks.push(check("engine_coherence_k0", || {
        let s = ChannelSpec::new(6, 4, 0.0, 51.0);
        let p = derive_snr_params(&s, &s.correlation()?, gamma_s_from_gamma_b_db(15.0))?;
        let kind = MeasureKind::OutageProb { tau };
        let a = eval_series(&kind, &p, &TruncationPolicy::default())?.value;
        let b = eval_double_series(&kind, &p, &TruncationPolicy::default())?.value;
        let c = hgm_params(&kind, &p, 0.0, &cfg.solver)?.value;
        let worst = rel(a, c).max(rel(b, c)).max(rel(a, b));
        Ok((
            worst < 1e-6,
            format!("series {a:e}, double {b:e}, hgm {c:e}"),
        ))
    }));

    checks.push(check("gamma_exactness", || {
        let s = ChannelSpec::new(6, 4, 7.0, 51.0);
        let r = s.correlation()?;
        let los = worst_case_los(&s, &r)?;
        let gs = gamma_s_from_gamma_b_db(15.0);
        let p = derive_from_los(&s, &los, &r, gs)?.params;
        let kind = MeasureKind::OutageProb { tau };
        let exact = eval_series(
            &kind,
            &p,
            &TruncationPolicy {
                n_max: 2000,
                ..TruncationPolicy::default()
            },
        )?
        .value;
        let approx = GammaApprox::with_los(&s, &los, &r, gs)?.measure(&kind)?;
        Ok((
            rel(approx, exact) < 1e-8,
            format!("approx {approx:e}, exact {exact:e}"),
        ))
    }));

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { passed, checks }
}

/// Parses "outage", "capacity", "mgf:<s>" or "pdf:<t>"; outage uses the config's τ.
pub fn parse_measure(text: &str, tau: f64) -> Result<MeasureKind> {
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (text, None),
    };
    let num = |a: Option<&str>| -> Result<f64> {
        a.ok_or_else(|| CliError::Config(format!("{name} needs an argument, e.g. {name}:0.5")))?
            .parse::<f64>()
            .map_err(|e| CliError::Config(e.to_string()))
    };
    match name {
        "outage" => Ok(MeasureKind::OutageProb {
            tau: arg.map(|a| num(Some(a))).transpose()?.unwrap_or(tau),
        }),
        "capacity" => Ok(MeasureKind::Capacity),
        "mgf" => Ok(MeasureKind::Mgf { s: num(arg)? }),
        "pdf" => Ok(MeasureKind::Pdf { t: num(arg)? }),
        other => Err(CliError::Config(format!("unknown measure {other:?}"))),
    }
}

/// Guesses and certifies the annihilator of `kind` at the scenario point and returns its JSON form.
pub fn guess_ode(
    cfg: &ExperimentConfig,
    kind: &MeasureKind,
    gamma_b_db: f64,
) -> Result<OperatorJson> {
    let spec = cfg.scenario.spec();
    let p = derive_snr_params(
        &spec,
        &spec.correlation()?,
        gamma_s_from_gamma_b_db(gamma_b_db),
    )?;
    let z0 = expansion_point(p.x2, spec.k_db, cfg.solver.z0_k_db);
    let mut found = find_operator(kind, &p, z0, p.x2, &cfg.solver)?;
    let prov = found.op.provenance.get_or_insert_with(Default::default);
    prov.measure = Some(*kind);
    prov.params = Some(p);
    Ok(found.op.to_json())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes `<stem>.csv`, the resolved config as `<stem>.config.json` and timings as `<stem>.timing.json`.
pub fn write_outputs<T: Serialize>(
    cfg: &ExperimentConfig,
    stem: &str,
    rows: &[T],
    timings: &[Timing],
) -> Result<PathBuf> {
    let csv_path = cfg.out_dir.join(format!("{stem}.csv"));
    write_csv(&csv_path, rows)?;
    write_json(&cfg.out_dir.join(format!("{stem}.config.json")), cfg)?;
    if !timings.is_empty() {
        write_json(&cfg.out_dir.join(format!("{stem}.timing.json")), &timings)?;
    }
    Ok(csv_path)
}
