//! Configuration-driven benchmark harness: many seeded runs per
//! (objective, noise, estimator) cell, aggregated into report tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::objectives::{objective_by_name, NoiseModel, NoisyObjective, ObjectiveSpec};
use crate::optimizer::{run, RunRecord, ScheduleConfig, StopReason, DEFAULT_EPSILON};
use crate::perturbations::PerturbationKind;
use crate::rng::{derive_seed, label_hash, Stream};
use crate::stats::Running;

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Which step-size/smoothing parameterization a benchmark uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// `γ_k = k^{-0.6}`, `δ_k = k^{-0.09}`.
    Diminishing,
    /// `γ = 1e-4`, `δ = 1e-3`.
    Constant,
}

impl Setting {
    pub fn label(self) -> &'static str {
        match self {
            Setting::Diminishing => "diminishing",
            Setting::Constant => "constant",
        }
    }

    pub fn schedule(self, horizon: usize, epsilon: f64) -> ScheduleConfig {
        match self {
            Setting::Diminishing => ScheduleConfig::benchmark_diminishing(horizon),
            Setting::Constant => ScheduleConfig::benchmark_constant(horizon),
        }
        .with_epsilon(epsilon)
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diminishing" => Ok(Setting::Diminishing),
            "constant" => Ok(Setting::Constant),
            _ => Err(config_err(
                "setting",
                format!("expected diminishing|constant, got `{s}`"),
            )),
        }
    }
}

/// Default horizons per objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizons {
    pub rastrigin: usize,
    pub quadratic: usize,
    pub rosenbrock: usize,
}

impl Default for Horizons {
    fn default() -> Self {
        Self {
            rastrigin: 1000,
            quadratic: 3000,
            rosenbrock: 10_000,
        }
    }
}

impl Horizons {
    pub fn for_objective(&self, name: &str) -> Option<usize> {
        match name {
            "rastrigin" => Some(self.rastrigin),
            "quadratic" => Some(self.quadratic),
            "rosenbrock" => Some(self.rosenbrock),
            _ => None,
        }
    }
}

/// Benchmark suite configuration, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub master_seed: u64,
    pub n_runs: usize,
    pub setting: Setting,
    /// Objective identifiers, in report order.
    pub objectives: Vec<String>,
    /// Noise models (`type1`, `type1:<sigma>`, `type2`, `type3`,
    /// `additive:<sigma>`, `none`), in report order.
    pub noises: Vec<String>,
    /// Estimator labels, in report order.
    pub estimators: Vec<String>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Direction law for the truncated Cauchy estimators.
    #[serde(default = "default_tcsf_perturbation")]
    pub tcsf_perturbation: PerturbationKind,
    #[serde(default)]
    pub horizons: Horizons,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Per-coordinate initial-point box; defaults to each objective's domain box.
    #[serde(default)]
    pub init_box: Option<Vec<[f64; 2]>>,
}

fn default_dim() -> usize {
    4
}

fn default_tcsf_perturbation() -> PerturbationKind {
    PerturbationKind::TProjectedSphere
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            master_seed: 20_240_501,
            n_runs: 100,
            setting: Setting::Diminishing,
            objectives: vec!["rastrigin".into(), "rosenbrock".into(), "quadratic".into()],
            noises: vec!["type1".into(), "type2".into(), "type3".into()],
            estimators: EstimatorKind::benchmark_set()
                .iter()
                .map(|k| k.label().to_string())
                .collect(),
            dim: default_dim(),
            tcsf_perturbation: default_tcsf_perturbation(),
            horizons: Horizons::default(),
            epsilon: DEFAULT_EPSILON,
            init_box: None,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Check every field; errors carry the offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(config_err("n_runs", "must be at least 1"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(config_err("epsilon", "must be non-negative"));
        }
        self.tcsf_perturbation
            .validate()
            .map_err(|e| config_err("tcsf_perturbation", e.to_string()))?;
        for (i, o) in self.objectives.iter().enumerate() {
            let spec = objective_by_name(o, self.dim)
                .map_err(|e| config_err(&format!("objectives[{i}]"), e.to_string()))?;
            if self.horizons.for_objective(o).is_none() {
                return Err(config_err(
                    &format!("objectives[{i}]"),
                    format!("no horizon configured for `{o}`"),
                ));
            }
            if let Some(b) = &self.init_box {
                check_init_box(b, &spec).map_err(|m| config_err("init_box", m))?;
            }
        }
        for (i, n) in self.noises.iter().enumerate() {
            NoiseModel::parse(n).map_err(|e| config_err(&format!("noises[{i}]"), e.to_string()))?;
        }
        for (i, e) in self.estimators.iter().enumerate() {
            EstimatorKind::parse(e)
                .map_err(|err| config_err(&format!("estimators[{i}]"), err.to_string()))?;
        }
        for (name, h) in [
            ("horizons.rastrigin", self.horizons.rastrigin),
            ("horizons.quadratic", self.horizons.quadratic),
            ("horizons.rosenbrock", self.horizons.rosenbrock),
        ] {
            if h == 0 {
                return Err(config_err(name, "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Expand into one experiment per (objective, noise), in report order.
    pub fn experiments(&self) -> Result<Vec<ExperimentConfig>> {
        self.validate()?;
        let estimators: Vec<EstimatorKind> = self
            .estimators
            .iter()
            .map(|e| EstimatorKind::parse(e))
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for o in &self.objectives {
            let horizon = self.horizons.for_objective(o).expect("validated");
            for n in &self.noises {
                out.push(ExperimentConfig {
                    objective: o.clone(),
                    dim: self.dim,
                    noise: NoiseModel::parse(n)?,
                    estimators: estimators.clone(),
                    tcsf_perturbation: self.tcsf_perturbation,
                    schedule: self.setting.schedule(horizon, self.epsilon),
                    setting_label: self.setting.label().to_string(),
                    n_runs: self.n_runs,
                    init_box: self.init_box.clone(),
                    master_seed: self.master_seed,
                });
            }
        }
        Ok(out)
    }
}

fn check_init_box(b: &[[f64; 2]], spec: &ObjectiveSpec) -> std::result::Result<(), String> {
    if b.len() != spec.dim {
        return Err(format!("expected {} intervals, got {}", spec.dim, b.len()));
    }
    for (i, ([lo, hi], (dlo, dhi))) in b.iter().zip(&spec.domain_box).enumerate() {
        if !(lo <= hi) {
            return Err(format!("interval {i} has lo > hi"));
        }
        if lo < dlo || hi > dhi {
            return Err(format!(
                "interval {i} [{lo}, {hi}] leaves the domain box [{dlo}, {dhi}]"
            ));
        }
    }
    Ok(())
}

/// One (objective, noise) experiment across several estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: String,
    pub dim: usize,
    pub noise: NoiseModel,
    pub estimators: Vec<EstimatorKind>,
    pub tcsf_perturbation: PerturbationKind,
    pub schedule: ScheduleConfig,
    pub setting_label: String,
    pub n_runs: usize,
    pub init_box: Option<Vec<[f64; 2]>>,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// Seed of the shared initial point for run `i`; independent of noise
    /// model and estimator so every cell sees the same starts.
    pub fn init_seed(&self, run: usize) -> u64 {
        derive_seed(
            self.master_seed,
            &[label_hash(&self.objective), label_hash("init"), run as u64],
        )
    }

    /// Seed of the optimization stream for run `i` of `estimator`.
    pub fn run_seed(&self, estimator: EstimatorKind, run: usize) -> u64 {
        derive_seed(
            self.master_seed,
            &[
                label_hash(&self.objective),
                label_hash(self.noise.label()),
                label_hash(&format!("{:?}", self.noise)),
                label_hash(estimator.label()),
                run as u64,
            ],
        )
    }
}

/// Aggregates for one (objective, noise, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub objective: String,
    pub noise: String,
    pub setting: String,
    pub estimator: String,
    pub n_runs: usize,
    /// Runs included in the means (stop reason other than `NumericError`).
    pub n_included: usize,
    pub n_excluded: usize,
    pub mean_f_true: f64,
    pub se_f_true: f64,
    /// Mean of `|f − f*|`; absent when `f*` is unknown.
    pub mean_abs_error: Option<f64>,
    pub se_abs_error: Option<f64>,
    pub mean_iterations: f64,
    pub se_iterations: f64,
    /// Runs that stopped on the epsilon criterion.
    pub n_epsilon_stops: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub master_seed: u64,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn empty(master_seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed,
            cells: Vec::new(),
        }
    }

    pub fn cell(&self, objective: &str, noise: &str, estimator: &str) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.objective == objective && c.noise == noise && c.estimator == estimator)
    }
}

/// Run every estimator of `cfg` for `n_runs` seeds; `pool` bounds the
/// parallelism. Results are folded in seed order so they do not depend on
/// scheduling.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(Vec<CellReport>, Vec<RunRecord>)> {
    if cfg.n_runs == 0 {
        return Err(config_err("n_runs", "must be at least 1"));
    }
    let spec = objective_by_name(&cfg.objective, cfg.dim)?;
    let bounds: Vec<(f64, f64)> = match &cfg.init_box {
        Some(b) => {
            check_init_box(b, &spec).map_err(|m| config_err("init_box", m))?;
            b.iter().map(|[lo, hi]| (*lo, *hi)).collect()
        }
        None => spec.domain_box.clone(),
    };
    let obj = NoisyObjective::new(spec.clone(), cfg.noise)?;
    cfg.schedule.validate()?;
    let starts: Vec<Vec<f64>> = (0..cfg.n_runs)
        .map(|i| spec.sample_point(Some(&bounds), &mut Stream::new(cfg.init_seed(i))))
        .collect();

    let mut cells = Vec::with_capacity(cfg.estimators.len());
    let mut records = Vec::with_capacity(cfg.estimators.len() * cfg.n_runs);
    for &kind in &cfg.estimators {
        let est = EstimatorConfig::new(kind).with_perturbation(cfg.tcsf_perturbation);
        let job = || -> Result<Vec<RunRecord>> {
            (0..cfg.n_runs)
                .into_par_iter()
                .map(|i| {
                    let mut rng = Stream::new(cfg.run_seed(kind, i));
                    run(&obj, est, &starts[i], &cfg.schedule, &mut rng)
                })
                .collect()
        };
        let runs = match pool {
            Some(p) => p.install(job)?,
            None => job()?,
        };
        cells.push(aggregate(cfg, &spec, kind, &runs));
        records.extend(runs);
    }
    Ok((cells, records))
}

fn aggregate(
    cfg: &ExperimentConfig,
    spec: &ObjectiveSpec,
    kind: EstimatorKind,
    runs: &[RunRecord],
) -> CellReport {
    let included: Vec<&RunRecord> = runs
        .iter()
        .filter(|r| r.stop_reason != StopReason::NumericError)
        .collect();
    let f: Running = included.iter().map(|r| r.final_f_true).collect();
    let iters: Running = included.iter().map(|r| r.iterations_used as f64).collect();
    let abs_err: Option<Running> = spec.known_min_value.map(|m| {
        included
            .iter()
            .map(|r| (r.final_f_true - m).abs())
            .collect()
    });
    CellReport {
        objective: cfg.objective.clone(),
        noise: noise_label(&cfg.noise),
        setting: cfg.setting_label.clone(),
        estimator: kind.label().to_string(),
        n_runs: runs.len(),
        n_included: included.len(),
        n_excluded: runs.len() - included.len(),
        mean_f_true: f.mean(),
        se_f_true: f.se(),
        mean_abs_error: abs_err.map(|r| r.mean()),
        se_abs_error: abs_err.map(|r| r.se()),
        mean_iterations: iters.mean(),
        se_iterations: iters.se(),
        n_epsilon_stops: included
            .iter()
            .filter(|r| r.stop_reason == StopReason::EpsilonReached)
            .count(),
        seeds: runs.iter().map(|r| r.seed).collect(),
    }
}

/// Canonical text label of a noise model, e.g. `type1:5`.
pub fn noise_label(n: &NoiseModel) -> String {
    match *n {
        NoiseModel::Type1 { sigma } => format!("type1:{sigma}"),
        NoiseModel::Additive { sigma } => format!("additive:{sigma}"),
        other => other.label().to_string(),
    }
}

/// Run the whole suite. `jobs` bounds the worker pool (0 means rayon's default).
pub fn run_bench(cfg: &BenchConfig, jobs: usize) -> Result<(ExperimentReport, Vec<RunRecord>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| crate::error::invalid(format!("cannot build worker pool: {e}")))?;
    let mut report = ExperimentReport::empty(cfg.master_seed);
    let mut records = Vec::new();
    for exp in cfg.experiments()? {
        let (cells, runs) = run_experiment(&exp, Some(&pool))?;
        report.cells.extend(cells);
        records.extend(runs);
    }
    Ok((report, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(config_err(
                "format",
                format!("expected text|csv|json, got `{s}`"),
            )),
        }
    }
}

/// Scientific notation with four significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn opt_sci(v: Option<f64>) -> String {
    v.map(sci).unwrap_or_default()
}

const COLUMNS: [&str; 14] = [
    "objective",
    "noise",
    "setting",
    "estimator",
    "n_runs",
    "n_included",
    "n_excluded",
    "mean_f_true",
    "se_f_true",
    "mean_abs_error",
    "se_abs_error",
    "mean_iterations",
    "se_iterations",
    "n_epsilon_stops",
];

fn row(c: &CellReport) -> [String; 14] {
    [
        c.objective.clone(),
        c.noise.clone(),
        c.setting.clone(),
        c.estimator.clone(),
        c.n_runs.to_string(),
        c.n_included.to_string(),
        c.n_excluded.to_string(),
        sci(c.mean_f_true),
        sci(c.se_f_true),
        opt_sci(c.mean_abs_error),
        opt_sci(c.se_abs_error),
        sci(c.mean_iterations),
        sci(c.se_iterations),
        c.n_epsilon_stops.to_string(),
    ]
}

/// Render a report. Rows keep the report's objective × noise × estimator order.
pub fn emit_tables(report: &ExperimentReport, format: Format) -> Result<String> {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for c in &report.cells {
                out.push_str(&row(c).join(","));
                out.push('\n');
            }
        }
        Format::Json => {
            out = serde_json::to_string_pretty(report)?;
            out.push('\n');
        }
        Format::Text => {
            let rows: Vec<[String; 14]> = report.cells.iter().map(row).collect();
            let widths: Vec<usize> = (0..COLUMNS.len())
                .map(|j| {
                    rows.iter()
                        .map(|r| r[j].len())
                        .chain([COLUMNS[j].len()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |cells: Vec<&str>, out: &mut String| {
                let parts: Vec<String> = cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect();
                let _ = writeln!(out, "{}", parts.join("  ").trim_end());
            };
            line(COLUMNS.to_vec(), &mut out);
            for r in &rows {
                line(r.iter().map(String::as_str).collect(), &mut out);
            }
        }
    }
    Ok(out)
}

/// Write `report.csv`, `report.json`, `runs.jsonl` and `resolved-config.toml`
/// into `dir`.
pub fn write_outputs(
    dir: &std::path::Path,
    cfg: &BenchConfig,
    report: &ExperimentReport,
    runs: &[RunRecord],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), emit_tables(report, Format::Csv)?)?;
    std::fs::write(dir.join("report.json"), emit_tables(report, Format::Json)?)?;
    let mut lines = String::new();
    for r in runs {
        lines.push_str(&r.to_json_line()?);
        lines.push('\n');
    }
    std::fs::write(dir.join("runs.jsonl"), lines)?;
    std::fs::write(dir.join("resolved-config.toml"), cfg.to_toml()?)?;
    Ok(())
}
