//! Experiment runner: flat `key = value` configuration, seeded trials over a
//! sweep grid, bound tables and CSV/JSON emission.
//!
//! Every trial derives its randomness from `(seed, trial, stream)` (see
//! [`crate::seed`]), and results are collected in task order, so output files
//! do not depend on the number of worker threads.

use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LweError, Result};
use crate::fq::{self, check_modulus, is_prime, FieldElement};
use crate::instance::{ErrorDistribution, ErrorKind, LweInstance};
use crate::oracle::{self, bound_report, prob_iii_bound};
use crate::qsim::{self, KernelSampler, TwoQuditState};
use crate::reduce::{self, InputSet, ReductionMode, TestSource};
use crate::seed::{self, derive_rng};
use crate::solver::{c_constant, choose_parameters, test_trials_for, MAX_TEST_TRIALS, solve, KernelPath, SolveOptions, SolveParameters};
use crate::verify::m_trial_test;

/// One sweep axis: a config key and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl FromStr for SweepAxis {
    type Err = LweError;
    /// `key=v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| LweError::Parse(format!("sweep axis `{s}` must look like key=v1,v2")))?;
        let values: Vec<String> = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(String::from)
            .collect();
        if values.is_empty() {
            return Err(LweError::Parse(format!("sweep axis `{key}` has no values")));
        }
        Ok(SweepAxis {
            key: key.trim().to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub q: u64,
    pub xi: u64,
    pub sigma: Option<f64>,
    pub chi_kind: ErrorKind,
    pub gamma: f64,
    pub delta: f64,
    pub mode: ReductionMode,
    pub trials: usize,
    pub seed: u64,
    /// Amplification assumed by the solver; defaults to 1 (controlled) or
    /// `n^3` (elimination).
    pub kappa: Option<f64>,
    /// Overrides `ceil(kappa * xi)`.
    pub xi_prime: Option<u64>,
    /// `|v_j|`; defaults to `q`.
    pub batch_size: Option<usize>,
    /// Overrides the retry budget from `choose_parameters`.
    pub l: Option<usize>,
    /// Overrides the number of test trials from `choose_parameters`.
    pub m: Option<usize>,
    pub dedup: bool,
    pub kernel: KernelPath,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Random batches per grid point (bounds tables).
    pub batches: usize,
    /// Kernel shots per batch for empirical rates (bounds tables).
    pub shots: usize,
    pub timing: bool,
    pub sweep: Vec<SweepAxis>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 8,
            q: 401,
            xi: 2,
            sigma: None,
            chi_kind: ErrorKind::UniformBounded,
            gamma: 0.125,
            delta: 0.2,
            mode: ReductionMode::Controlled,
            trials: 100,
            seed: 1,
            kappa: None,
            xi_prime: None,
            batch_size: None,
            l: None,
            m: None,
            dedup: false,
            kernel: KernelPath::Sampled,
            workers: 0,
            batches: 1,
            shots: 10_000,
            timing: false,
            sweep: Vec::new(),
        }
    }
}

fn parse_value<T: FromStr>(name: &'static str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| LweError::param(name, format!("cannot parse `{value}`")))
}

fn parse_opt<T: FromStr>(name: &'static str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "none" | "auto" => Ok(None),
        v => parse_value(name, v).map(Some),
    }
}

fn parse_bool(name: &'static str, value: &str) -> Result<bool> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        other => Err(LweError::param(name, format!("expected a boolean, got `{other}`"))),
    }
}

impl ExperimentConfig {
    /// Sets one field by name. This is the single entry point used by config
    /// files, `--set` overrides and sweep expansion.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "n" => self.n = parse_value("n", value)?,
            "q" => self.q = parse_value("q", value)?,
            "xi" => self.xi = parse_value("xi", value)?,
            "sigma" => self.sigma = parse_opt("sigma", value)?,
            "chi_kind" | "chi" => {
                self.chi_kind = value
                    .trim()
                    .parse()
                    .map_err(|e: LweError| LweError::param("chi_kind", e.to_string()))?
            }
            "gamma" => self.gamma = parse_value("gamma", value)?,
            "delta" => self.delta = parse_value("delta", value)?,
            "mode" => {
                self.mode = value
                    .trim()
                    .parse()
                    .map_err(|e: LweError| LweError::param("mode", e.to_string()))?
            }
            "trials" => self.trials = parse_value("trials", value)?,
            "seed" => self.seed = parse_value("seed", value)?,
            "kappa" => self.kappa = parse_opt("kappa", value)?,
            "xi_prime" => self.xi_prime = parse_opt("xi_prime", value)?,
            "batch_size" => self.batch_size = parse_opt("batch_size", value)?,
            "L" | "l" => self.l = parse_opt("L", value)?,
            "M" | "m" => self.m = parse_opt("M", value)?,
            "dedup" => self.dedup = parse_bool("dedup", value)?,
            "kernel" => {
                self.kernel = match value.trim() {
                    "sampled" => KernelPath::Sampled,
                    "dense" => KernelPath::Dense,
                    other => return Err(LweError::param("kernel", format!("unknown kernel path `{other}`"))),
                }
            }
            "workers" => self.workers = parse_value("workers", value)?,
            "batches" => self.batches = parse_value("batches", value)?,
            "shots" => self.shots = parse_value("shots", value)?,
            "timing" => self.timing = parse_bool("timing", value)?,
            other => {
                return Err(LweError::InvalidParameter {
                    name: "config",
                    reason: format!("unknown key `{other}`"),
                })
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment; `sweep.<key> = a,b`
    /// adds a sweep axis.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LweError::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if let Some(axis) = key.strip_prefix("sweep.") {
                self.add_sweep(&format!("{axis}={value}"))?;
            } else {
                self.set(key, value)?;
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn add_sweep(&mut self, arg: &str) -> Result<()> {
        let axis: SweepAxis = arg.parse()?;
        // reject bad keys and values up front
        let mut probe = self.clone();
        for v in &axis.values {
            probe.set(&axis.key, v)?;
        }
        self.sweep.retain(|a| a.key != axis.key);
        self.sweep.push(axis);
        Ok(())
    }

    pub fn effective_kappa(&self) -> f64 {
        self.kappa.unwrap_or(match self.mode {
            ReductionMode::Controlled => 1.0,
            ReductionMode::Elimination => (self.n as f64).powi(3),
        })
    }

    pub fn effective_xi_prime(&self) -> u64 {
        self.xi_prime
            .unwrap_or_else(|| (self.effective_kappa() * self.xi as f64).ceil() as u64)
    }

    pub fn inputs(&self) -> InputSet {
        InputSet::of_size(self.batch_size.unwrap_or(self.q as usize), self.q)
    }

    pub fn chi(&self) -> Result<ErrorDistribution> {
        ErrorDistribution::of_kind(self.chi_kind, self.xi, self.sigma)
    }

    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            mode: self.mode,
            inputs: self.inputs(),
            kernel: self.kernel,
            dedup: self.dedup,
        }
    }

    /// Field-level validation, including the `kappa * xi < q/2` gate.
    pub fn validate(&self) -> Result<()> {
        if self.q < 3 || !is_prime(self.q) {
            return Err(LweError::param("q", format!("{} is not an odd prime", self.q)));
        }
        check_modulus(self.q).map_err(|e| LweError::param("q", e.to_string()))?;
        if self.n == 0 {
            return Err(LweError::param("n", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(LweError::param("trials", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 0.25) {
            return Err(LweError::param("gamma", format!("must lie in (0, 1/4), got {}", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LweError::param("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if 2 * self.xi >= self.q {
            return Err(LweError::param("xi", format!("{} is not below q/2", self.xi)));
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(LweError::param("sigma", format!("must be positive, got {s}")));
            }
        }
        if let Some(k) = self.batch_size {
            if k == 0 {
                return Err(LweError::param("batch_size", "must be at least 1"));
            }
        }
        if self.m == Some(0) {
            return Err(LweError::param("M", "must be at least 1"));
        }
        let xi_prime = self.effective_xi_prime();
        if 2 * xi_prime >= self.q {
            return Err(LweError::param(
                "kappa",
                format!("kappa * xi = {xi_prime} is not below q/2 = {}", self.q as f64 / 2.0),
            ));
        }
        Ok(())
    }

    /// Solver parameters: `choose_parameters` unless `L` and `M` are both
    /// given, with single overrides applied on top.
    pub fn solve_parameters(&self) -> Result<SolveParameters> {
        let xi_prime = self.effective_xi_prime();
        if let (Some(l), Some(m)) = (self.l, self.m) {
            return SolveParameters::manual(self.gamma, l, m, xi_prime, self.q);
        }
        let mut p = choose_parameters(self.n, self.q, xi_prime, 1.0, self.delta, self.gamma)?;
        if let Some(l) = self.l {
            p = SolveParameters::manual(self.gamma, l, p.m, xi_prime, self.q)?;
        }
        if let Some(m) = self.m {
            p = SolveParameters::manual(self.gamma, p.l, m, xi_prime, self.q)?;
        }
        Ok(p)
    }

    /// Cartesian product of the sweep axes, first axis slowest. Each entry
    /// carries a `key=value;...` label.
    pub fn expand(&self) -> Result<Vec<(String, ExperimentConfig)>> {
        let mut points = vec![(String::new(), ExperimentConfig { sweep: Vec::new(), ..self.clone() })];
        for axis in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for (label, cfg) in &points {
                for v in &axis.values {
                    let mut c = cfg.clone();
                    c.set(&axis.key, v)?;
                    let tag = format!("{}={}", axis.key, v);
                    let label = if label.is_empty() { tag } else { format!("{label};{tag}") };
                    next.push((label, c));
                }
            }
            points = next;
        }
        Ok(points)
    }
}

/// Rounds to 12 significant digits so emitted numbers and parsed-back
/// records agree exactly.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// [`sig12`] as text, in exponent form outside `[1e-5, 1e16)`.
pub fn fmt12(x: f64) -> String {
    let r = sig12(x);
    if r != 0.0 && (r.abs() < 1e-5 || r.abs() >= 1e16) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub point: usize,
    pub sweep_point: String,
    pub trial: u64,
    pub trial_seed: u64,
    pub n: usize,
    pub q: u64,
    pub xi: u64,
    pub sigma: Option<f64>,
    pub chi_kind: String,
    pub gamma: f64,
    pub delta: f64,
    pub mode: String,
    pub kappa: f64,
    pub xi_prime: u64,
    pub l: usize,
    pub m: usize,
    pub batch_size: usize,
    pub outcome: String,
    pub quantum_samples: usize,
    pub test_samples: usize,
    pub null_count: usize,
    pub candidates_tried: usize,
    pub rejected: usize,
    pub true_rejections: usize,
    pub bound_violations: usize,
    pub test_bound_violations: usize,
    /// Per-coordinate kernel shots, `;`-separated.
    pub coord_shots: String,
    /// Per-coordinate null outcomes, `;`-separated.
    pub coord_nulls: String,
    /// Per-coordinate tested candidates, `;`-separated.
    pub coord_candidates: String,
    /// Only filled when timing is requested, since it breaks determinism.
    pub wall_time_us: Option<u64>,
}

impl ExperimentRecord {
    pub fn is_success(&self) -> bool {
        self.outcome == "success"
    }
}

fn joined(values: impl Iterator<Item = usize>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn run_trial(
    point: usize,
    label: &str,
    cfg: &ExperimentConfig,
    params: &SolveParameters,
    trial: u64,
    preloaded: Option<&LweInstance>,
) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let generated;
    let instance = match preloaded {
        Some(inst) => inst,
        None => {
            generated = generate_instance(cfg, trial)?;
            &generated
        }
    };
    let chi = *instance.chi();
    let outcome = solve(instance, params, &cfg.options(), cfg.seed, trial)?;

    let budget = cfg.n * params.l;
    if outcome.quantum_samples() > budget {
        return Err(LweError::InvariantViolation(format!(
            "trial {trial} used {} quantum samples, budget n*L = {budget}",
            outcome.quantum_samples()
        )));
    }
    let coords = &outcome.per_coordinate;
    Ok(ExperimentRecord {
        point,
        sweep_point: label.to_string(),
        trial,
        trial_seed: seed::trial_seed(cfg.seed, trial),
        n: cfg.n,
        q: cfg.q,
        xi: cfg.xi,
        sigma: chi.sigma().map(sig12),
        chi_kind: cfg.chi_kind.to_string(),
        gamma: sig12(cfg.gamma),
        delta: sig12(cfg.delta),
        mode: cfg.mode.to_string(),
        kappa: sig12(cfg.effective_kappa()),
        xi_prime: params.xi_prime,
        l: params.l,
        m: params.m,
        batch_size: cfg.inputs().size(cfg.q),
        outcome: outcome.class.to_string(),
        quantum_samples: outcome.quantum_samples(),
        test_samples: outcome.test_samples(),
        null_count: outcome.null_count(),
        candidates_tried: outcome.candidates_tried(),
        rejected: coords.iter().map(|c| c.rejected.len()).sum(),
        true_rejections: outcome.true_rejections(instance.secret()),
        bound_violations: coords.iter().map(|c| c.bound_violations).sum(),
        test_bound_violations: coords.iter().map(|c| c.test_bound_violations).sum(),
        coord_shots: joined(coords.iter().map(|c| c.shots)),
        coord_nulls: joined(coords.iter().map(|c| c.null_count)),
        coord_candidates: joined(coords.iter().map(|c| c.candidates_tried)),
        wall_time_us: cfg.timing.then(|| started.elapsed().as_micros() as u64),
    })
}

/// The instance trial `trial` of `cfg` runs against.
pub fn generate_instance(cfg: &ExperimentConfig, trial: u64) -> Result<LweInstance> {
    let mut rng = derive_rng(cfg.seed, trial, seed::stream::INSTANCE);
    LweInstance::generate(cfg.n, cfg.q, cfg.chi()?, &mut rng)
}

/// One solve of trial 0, against `instance` if given (its `n`, `q`, `xi`
/// and error distribution take precedence over the config).
pub fn run_single(config: &ExperimentConfig, instance: Option<&LweInstance>) -> Result<ExperimentRecord> {
    let mut cfg = ExperimentConfig {
        trials: 1,
        sweep: Vec::new(),
        ..config.clone()
    };
    if let Some(inst) = instance {
        cfg.n = inst.n();
        cfg.q = inst.q();
        cfg.xi = inst.xi();
        cfg.chi_kind = inst.chi().kind();
        cfg.sigma = inst.chi().sigma();
    }
    cfg.validate()?;
    let params = cfg.solve_parameters()?;
    run_trial(0, "", &cfg, &params, 0, instance)
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LweError::param("workers", e.to_string()))?;
    Ok(pool.install(job))
}

/// Runs `trials` solves at every sweep point. Output order is
/// `(point, trial)` regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let points = config.expand()?;
    let mut prepared = Vec::with_capacity(points.len());
    for (label, cfg) in points {
        cfg.validate()?;
        let params = cfg.solve_parameters()?;
        prepared.push((label, cfg, params));
    }
    let tasks: Vec<(usize, u64)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(p, (_, cfg, _))| (0..cfg.trials as u64).map(move |t| (p, t)))
        .collect();
    with_pool(config.workers, || {
        tasks
            .par_iter()
            .map(|&(p, t)| {
                let (label, cfg, params) = &prepared[p];
                run_trial(p, label, cfg, params, t, None)
            })
            .collect::<Result<Vec<_>>>()
    })?
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = LweError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(LweError::Parse(format!("unknown format `{other}`"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

/// Writes records as CSV (header + one row each) or as one JSON array of
/// flat objects.
pub fn emit_to<T: Serialize, W: Write>(records: &[T], format: OutputFormat, out: W) -> Result<()> {
    if records.is_empty() {
        return Err(LweError::EmptyResult);
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, records)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// [`emit_to`] a file, or stdout when `path` is `None`.
pub fn emit<T: Serialize>(records: &[T], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => emit_to(records, format, io::BufWriter::new(File::create(p)?)),
        None => emit_to(records, format, io::stdout().lock()),
    }
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(LweError::from)).collect()
}

/// One row of the bound table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub q: u64,
    pub xi_prime: u64,
    pub gamma: f64,
    pub batch_size: usize,
    pub exact_p: f64,
    pub lower_bound: f64,
    pub violated: bool,
    pub real_part_p: f64,
    pub restricted_p: f64,
    pub empirical_p: f64,
    pub empirical_lo: f64,
    pub empirical_hi: f64,
    pub empirical_within_3sigma: bool,
    pub l: usize,
    pub m: usize,
    pub prob_iii_paper: f64,
    pub prob_iii_exact: f64,
    pub sweep_point: String,
}

/// Exact vs. bound values over the sweep grid, with a Monte Carlo estimate
/// of the on-support probability for each batch.
pub fn report_bounds(config: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    let points = config.expand()?;
    let mut tasks = Vec::new();
    for (p, (label, cfg)) in points.iter().enumerate() {
        if cfg.q < 3 || !is_prime(cfg.q) {
            return Err(LweError::param("q", format!("{} is not an odd prime", cfg.q)));
        }
        let xi_prime = cfg.effective_xi_prime();
        if xi_prime == 0 {
            return Err(LweError::param("xi_prime", "bound tables need xi' >= 1"));
        }
        if 2 * xi_prime >= cfg.q {
            return Err(LweError::param("xi_prime", format!("{xi_prime} is not below q/2")));
        }
        if !(0.0..0.25).contains(&cfg.gamma) {
            return Err(LweError::param("gamma", format!("must lie in [0, 1/4), got {}", cfg.gamma)));
        }
        for b in 0..cfg.batches.max(1) {
            tasks.push((p, label.clone(), cfg.clone(), xi_prime, b as u64));
        }
    }
    with_pool(config.workers, || {
        tasks
            .par_iter()
            .map(|(p, label, cfg, xi_prime, b)| bound_row(*p, label, cfg, *xi_prime, *b))
            .collect::<Result<Vec<_>>>()
    })?
}

const BOUNDS_STREAM: u64 = 3 << 32;

fn bound_row(point: usize, label: &str, cfg: &ExperimentConfig, xi_prime: u64, b: u64) -> Result<BoundRow> {
    let q = cfg.q;
    let mut rng = derive_rng(cfg.seed, b, BOUNDS_STREAM + point as u64);
    let s_j = FieldElement::new_unchecked(rng.gen_range(0..q), q);
    let chi_prime = cfg.chi()?.with_bound(xi_prime);
    let v_j = cfg.inputs().draw(q, &mut rng);
    let batch = reduce::synth_reduced_batch(0, s_j, &v_j, cfg.xi.max(1), &chi_prime, &mut rng)?;
    let report = bound_report(&batch, cfg.gamma)?;

    let mut sampler = KernelSampler::new(q);
    let mut hits = 0usize;
    for _ in 0..cfg.shots {
        let o = sampler.sample(&batch, &mut rng)?;
        if o.k_d == -(s_j * o.k_star) {
            hits += 1;
        }
    }
    let shots = cfg.shots.max(1) as f64;
    let empirical_p = hits as f64 / shots;
    let band = 3.0 * (report.exact_p * (1.0 - report.exact_p) / shots).sqrt();

    let c = c_constant(cfg.gamma);
    let (l, m) = match choose_parameters(cfg.n, q, xi_prime, 1.0, cfg.delta, cfg.gamma.max(1e-9)) {
        Ok(p) => (cfg.l.unwrap_or(p.l), cfg.m.unwrap_or(p.m)),
        Err(_) => {
            let raw = (xi_prime as f64 / c * (cfg.n as f64 / cfg.delta).ln()).ceil();
            let l = cfg.l.unwrap_or(raw as usize);
            let m = test_trials_for(l, xi_prime, q, cfg.delta / cfg.n as f64).unwrap_or(MAX_TEST_TRIALS);
            (l, cfg.m.unwrap_or(m))
        }
    };
    let kappa = xi_prime as f64 / cfg.xi.max(1) as f64;
    let alpha = cfg.xi.max(1) as f64 / q as f64;
    let p3 = prob_iii_bound(l, kappa, alpha, m as u32, q);

    Ok(BoundRow {
        q,
        xi_prime,
        gamma: sig12(cfg.gamma),
        batch_size: batch.len(),
        exact_p: sig12(report.exact_p),
        lower_bound: sig12(report.lower_bound),
        violated: report.violated,
        real_part_p: sig12(report.real_part_p),
        restricted_p: sig12(report.restricted_p),
        empirical_p: sig12(empirical_p),
        empirical_lo: sig12(report.exact_p - band),
        empirical_hi: sig12(report.exact_p + band),
        empirical_within_3sigma: (empirical_p - report.exact_p).abs() <= band + 1e-12,
        l,
        m,
        prob_iii_paper: sig12(p3.paper_form),
        prob_iii_exact: sig12(p3.exact_form),
        sweep_point: label.to_string(),
    })
}

/// QRAM call costs for the four (form, scheme) combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QramRow {
    pub q: u64,
    pub n: usize,
    pub d: u32,
    pub full_primitive: f64,
    pub full_bucket_brigade: f64,
    pub divided_primitive: f64,
    pub divided_bucket_brigade: f64,
    pub divided_over_full_primitive: f64,
}

pub fn qram_table(q: u64, n: usize, d: u32) -> Result<QramRow> {
    use oracle::{qram_cost, QramScheme as S, SampleForm as F};
    let fp = qram_cost(q, n, d, S::Primitive, F::Full)?;
    let dp = qram_cost(q, n, d, S::Primitive, F::Divided)?;
    Ok(QramRow {
        q,
        n,
        d,
        full_primitive: sig12(fp),
        full_bucket_brigade: sig12(qram_cost(q, n, d, S::BucketBrigade, F::Full)?),
        divided_primitive: sig12(dp),
        divided_bucket_brigade: sig12(qram_cost(q, n, d, S::BucketBrigade, F::Divided)?),
        divided_over_full_primitive: sig12(dp / fp),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, result: std::result::Result<String, String>) -> SelftestCheck {
    match result {
        Ok(detail) => SelftestCheck {
            name: name.into(),
            passed: true,
            detail,
        },
        Err(detail) => SelftestCheck {
            name: name.into(),
            passed: false,
            detail,
        },
    }
}

const SMALL_PRIMES: [u64; 10] = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31];

/// Norm drift of the kernel over random normalized two-register states.
pub fn unitarity_check(states: usize, seed: u64) -> std::result::Result<String, String> {
    let mut rng = derive_rng(seed, 0, 10);
    let mut worst = 0.0f64;
    for i in 0..states {
        let q = SMALL_PRIMES[i % SMALL_PRIMES.len()];
        let raw: Vec<num_complex::Complex64> = (0..q * q)
            .map(|_| num_complex::Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let state = TwoQuditState::from_amplitudes(q, raw.into_iter().map(|c| c / norm).collect())
            .map_err(|e| e.to_string())?;
        let out = qsim::bv_kernel(&state);
        worst = worst.max((out.norm_sqr() - 1.0).abs());
    }
    if worst < 1e-10 {
        Ok(format!("{states} states, max drift {worst:.2e}"))
    } else {
        Err(format!("max drift {worst:.2e} over {states} states"))
    }
}

/// `x * inv(x) = 1` for every nonzero `x` and every prime `q <= max_q`.
pub fn inverse_check(max_q: u64) -> std::result::Result<String, String> {
    let mut count = 0usize;
    for q in (3..=max_q).filter(|&q| is_prime(q)) {
        for x in 1..q {
            let y = FieldElement::new_unchecked(x, q).inv().map_err(|e| e.to_string())?;
            if fq::mul_mod(x, y.value(), q) != 1 {
                return Err(format!("inv({x}) mod {q} = {} is wrong", y.value()));
            }
            count += 1;
        }
    }
    Ok(format!("{count} inverses checked"))
}

/// `b' = a' s_j + eta'` on elimination-mode pairs from random instances.
pub fn elimination_identity_check(instances: usize, seed: u64) -> std::result::Result<String, String> {
    let mut pairs = 0usize;
    for t in 0..instances as u64 {
        let mut rng = derive_rng(seed, t, 11);
        let n = 2 + (t as usize % 5);
        let q = [31u64, 101, 401][t as usize % 3];
        let inst = LweInstance::generate(n, q, ErrorDistribution::uniform(2), &mut rng).map_err(|e| e.to_string())?;
        let mut src = reduce::EliminationSource::new(&inst, InputSet::Random(8), 2);
        for j in 0..n {
            for _ in 0..8 {
                let a = FieldElement::new_unchecked(rng.gen_range(0..q), q);
                let pair = src.reduce_one(j, a, &mut rng).map_err(|e| e.to_string())?;
                if !pair.is_consistent_with(inst.secret().get(j)) {
                    return Err(format!("pair {pair:?} inconsistent at j = {j}, q = {q}"));
                }
                if pair.eta_prime.abs() > pair.coeff_l1 * 2 {
                    return Err(format!("|eta'| exceeds coeff_l1 * xi for {pair:?}"));
                }
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} elimination pairs consistent"))
}

/// The true coordinate is never rejected by the test.
pub fn completeness_check(runs: usize, seed: u64) -> std::result::Result<String, String> {
    let mut tested = 0usize;
    for t in 0..runs as u64 {
        let mut rng = derive_rng(seed, t, 12);
        let q = [101u64, 401][t as usize % 2];
        let xi = 1 + t % 4;
        let inst = LweInstance::generate(4, q, ErrorDistribution::uniform(xi), &mut rng).map_err(|e| e.to_string())?;
        let mut src = reduce::ControlledSource::new(&inst, InputSet::Full, 2 * xi).map_err(|e| e.to_string())?;
        for j in 0..4 {
            let verdict = m_trial_test(inst.secret().get(j), 8, 2 * xi, j, &mut src, &mut rng).map_err(|e| e.to_string())?;
            if !verdict.accepted {
                return Err(format!("true s_{j} rejected: deltas {:?}", verdict.deltas));
            }
            tested += 1;
            let pair = src.next_test_pair(j, &mut rng).map_err(|e| e.to_string())?;
            if pair.eta_prime.abs() > 2 * xi {
                return Err("test pair outside bound".into());
            }
        }
    }
    Ok(format!("{tested} true coordinates accepted"))
}

/// Kernel probability mass on `k_d = -s k*` against the closed form.
pub fn oracle_agreement_check(batches: usize, seed: u64) -> std::result::Result<String, String> {
    let mut worst = 0.0f64;
    for t in 0..batches as u64 {
        let mut rng = derive_rng(seed, t, 13);
        let q = SMALL_PRIMES[2 + t as usize % 8];
        let xi = 1 + t % 2;
        let s = FieldElement::new_unchecked(rng.gen_range(0..q), q);
        let v: Vec<u64> = (0..q).collect();
        let batch = reduce::synth_reduced_batch(0, s, &v, 1, &ErrorDistribution::uniform(xi), &mut rng)
            .map_err(|e| e.to_string())?;
        let out = qsim::bv_kernel(&qsim::prepare_sample_state(&batch).map_err(|e| e.to_string())?);
        let mass: f64 = (0..q).map(|k| out.probability((-(s * FieldElement::new_unchecked(k, q))).value(), k)).sum();
        worst = worst.max((mass - oracle::exact_success_probability(&batch)).abs());
    }
    if worst < 1e-10 {
        Ok(format!("{batches} batches, max |diff| {worst:.2e}"))
    } else {
        Err(format!("max |diff| {worst:.2e}"))
    }
}

/// The structural invariant suite behind `qlwe selftest`.
pub fn selftest(seed: u64) -> Vec<SelftestCheck> {
    vec![
        check("kernel_unitarity", unitarity_check(1000, seed)),
        check("modular_inverse_exhaustive", inverse_check(101)),
        check("elimination_identity", elimination_identity_check(60, seed)),
        check("test_completeness", completeness_check(200, seed)),
        check("oracle_simulator_agreement", oracle_agreement_check(40, seed)),
    ]
}
