use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qlwe::experiment::{self, ExperimentConfig, OutputFormat};
use qlwe::instance::{self, LweInstance};
use qlwe::qsim;
use qlwe::reduce::{BatchSource, ControlledSource, EliminationSource};
use qlwe::seed;
use qlwe::{LweError, ReductionMode};

#[derive(Parser)]
#[command(name = "qlwe", version, about = "Divide-and-conquer quantum LWE simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print its record.
    Solve(SolveArgs),
    /// Run `trials` solves at every point of the sweep grid.
    Sweep(RunArgs),
    /// Exact vs. bound success probabilities over the sweep grid.
    Bounds(RunArgs),
    /// QRAM call costs for full and divided samples.
    QramCost(QramArgs),
    /// Structural invariant suite.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Flags mirroring the config keys. Each one overrides the config file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    /// `uniform` or `gaussian`.
    #[arg(long)]
    chi_kind: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// `controlled` or `elimination`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    xi_prime: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long = "M")]
    m: Option<String>,
    #[arg(long)]
    dedup: Option<String>,
    /// `sampled` or `dense`.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    batches: Option<String>,
    #[arg(long)]
    shots: Option<String>,
    /// Record wall time per trial (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    /// Any config key, `key=value`; applied after the named flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Sweep axis `key=v1,v2,...`; repeat for a grid.
    #[arg(long = "sweep", value_name = "KEY=V1,V2")]
    sweep: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> qlwe::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let named = [
            ("n", &self.n),
            ("q", &self.q),
            ("xi", &self.xi),
            ("sigma", &self.sigma),
            ("chi_kind", &self.chi_kind),
            ("gamma", &self.gamma),
            ("delta", &self.delta),
            ("mode", &self.mode),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("kappa", &self.kappa),
            ("xi_prime", &self.xi_prime),
            ("batch_size", &self.batch_size),
            ("L", &self.l),
            ("M", &self.m),
            ("dedup", &self.dedup),
            ("kernel", &self.kernel),
            ("workers", &self.workers),
            ("batches", &self.batches),
            ("shots", &self.shots),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.timing {
            cfg.timing = true;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| LweError::Parse(format!("--set expects key=value, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        for axis in &self.sweep {
            cfg.add_sweep(axis)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// `csv` or `json`.
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Read the instance from a sample file; the secret is read from
    /// `<file>.secret`.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Write the generated instance (`2n` samples) and its `.secret` sidecar.
    #[arg(long)]
    write_instance: Option<PathBuf>,
    /// Write the first reduced batch for coordinate 0.
    #[arg(long)]
    dump_batch: Option<PathBuf>,
    /// Write the post-kernel state of that batch.
    #[arg(long)]
    dump_state: Option<PathBuf>,
}

#[derive(Args)]
struct QramArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [401u64])]
    q: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [8usize])]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 4, 8])]
    d: Vec<u32>,
    #[command(flatten)]
    output: OutputArgs,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".secret");
    PathBuf::from(s)
}

fn load_instance(path: &Path) -> qlwe::Result<LweInstance> {
    let (header, pairs) = instance::read_samples(BufReader::new(File::open(path)?))?;
    let secret = instance::read_secret(BufReader::new(File::open(sidecar(path))?), header.q)?;
    if secret.len() != header.n {
        return Err(LweError::DimensionMismatch {
            expected: header.n,
            got: secret.len(),
        });
    }
    let inst = LweInstance::new(secret, header.chi)?;
    for (a, b) in pairs {
        let s = instance::Sample::from_public(a, b, inst.secret())?;
        if s.ground_truth_error().abs() > inst.xi() {
            return Err(LweError::InvariantViolation(format!(
                "sample error {} exceeds xi = {}",
                s.ground_truth_error().value(),
                inst.xi()
            )));
        }
    }
    Ok(inst)
}

fn write_instance(path: &Path, inst: &LweInstance, cfg: &ExperimentConfig) -> qlwe::Result<()> {
    let mut rng = seed::derive_rng(cfg.seed, 0, seed::stream::BASELINE);
    let samples = inst.gen_samples(2 * inst.n(), &mut rng);
    let mut out = BufWriter::new(File::create(path)?);
    instance::write_samples(&mut out, inst, cfg.seed, &samples)?;
    out.flush()?;
    let mut out = BufWriter::new(File::create(sidecar(path))?);
    instance::write_secret(&mut out, inst.secret())?;
    out.flush()?;
    Ok(())
}

fn dump_debug(args: &SolveArgs, inst: &LweInstance, cfg: &ExperimentConfig) -> qlwe::Result<()> {
    if args.dump_batch.is_none() && args.dump_state.is_none() {
        return Ok(());
    }
    let xi_prime = cfg.effective_xi_prime();
    let mut rng = seed::coordinate_rng(cfg.seed, 0, 0);
    let batch = match cfg.mode {
        ReductionMode::Controlled => ControlledSource::new(inst, cfg.inputs(), xi_prime)?.next_batch(0, &mut rng)?,
        ReductionMode::Elimination => EliminationSource::new(inst, cfg.inputs(), xi_prime).next_batch(0, &mut rng)?,
    };
    if let Some(p) = &args.dump_batch {
        let mut out = BufWriter::new(File::create(p)?);
        batch.dump(&mut out)?;
        out.flush()?;
    }
    if let Some(p) = &args.dump_state {
        let state = qsim::bv_kernel(&qsim::prepare_sample_state(&batch)?);
        let mut out = BufWriter::new(File::create(p)?);
        state.dump(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn run_solve(args: &SolveArgs) -> qlwe::Result<()> {
    let cfg = args.config.resolve()?;
    let loaded = args.instance.as_deref().map(load_instance).transpose()?;
    let inst = match loaded {
        Some(i) => i,
        None => {
            cfg.validate()?;
            experiment::generate_instance(&cfg, 0)?
        }
    };
    if let Some(p) = &args.write_instance {
        write_instance(p, &inst, &cfg)?;
    }
    dump_debug(args, &inst, &cfg)?;
    let record = experiment::run_single(&cfg, Some(&inst))?;
    if record.true_rejections > 0 {
        return Err(LweError::InvariantViolation(format!(
            "true coordinate rejected {} times",
            record.true_rejections
        )));
    }
    experiment::emit(&[record], args.output.format, args.output.out.as_deref())
}

fn run_sweep(args: &RunArgs) -> qlwe::Result<()> {
    let cfg = args.config.resolve()?;
    let records = experiment::run_experiment(&cfg)?;
    experiment::emit(&records, args.output.format, args.output.out.as_deref())
}

fn run_bounds(args: &RunArgs) -> qlwe::Result<()> {
    let cfg = args.config.resolve()?;
    let rows = experiment::report_bounds(&cfg)?;
    experiment::emit(&rows, args.output.format, args.output.out.as_deref())?;
    let violated = rows.iter().filter(|r| r.violated).count();
    if violated > 0 {
        return Err(LweError::InvariantViolation(format!("{violated} bound violations")));
    }
    Ok(())
}

fn run_qram(args: &QramArgs) -> qlwe::Result<()> {
    let mut rows = Vec::new();
    for &q in &args.q {
        for &n in &args.n {
            for &d in &args.d {
                rows.push(experiment::qram_table(q, n, d)?);
            }
        }
    }
    experiment::emit(&rows, args.output.format, args.output.out.as_deref())
}

fn run_selftest(seed: u64) -> qlwe::Result<()> {
    let checks = experiment::selftest(seed);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(LweError::InvariantViolation(failed.join(", ")))
    }
}

fn exit_code(err: &LweError) -> u8 {
    match err {
        LweError::InvariantViolation(_) => 3,
        LweError::Io(_) | LweError::Csv(_) | LweError::Json(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Bounds(a) => run_bounds(a),
        Command::QramCost(a) => run_qram(a),
        Command::Selftest { seed } => run_selftest(*seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qlwe: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
