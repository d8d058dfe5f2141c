//! Command-line front end. Every subcommand writes a [`RunManifest`] next to
//! its outputs, including when the run fails part way.

pub mod commands;
pub mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::engine::{Engine, EngineConfig, EngineError, Mode, DEFAULT_DRAW_CAP};
use crate::permutation::{factorial, DataArray};
use crate::prng::DEFAULT_SHIFT;
use crate::statistics::{
    compound_time_moments, max_uniform_deviation, negbin_moments, negbin_pmf, wrapped_residue_pmf,
    StatsError, Verdict,
};
use crate::timing::{RuntimeModel, TimingError};

pub use commands::{GridRow, DEFAULT_GRID};
pub use manifest::RunManifest;

pub const OUT_DIR_ENV: &str = "RPSS_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for bad input, 3 for a failed statistical check, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Json(_) => 1,
            Self::Validation(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rpss",
    version,
    about = "Random permutation sorting entropy source"
)]
pub struct Cli {
    /// Directory for data files and manifests.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Emit packed random bytes from the feedback loop.
    Gen(GenArgs),
    /// Histograms of raw permutation counts and cycle ticks.
    Dist(SampleArgs),
    /// Residue histograms and a uniformity report.
    Mod(SampleArgs),
    /// Uniformity verdicts over a grid of (N, m, n).
    Convergence(ConvergenceArgs),
    /// Re-time a frozen pad sequence across runs.
    Conjugate(ConjugateArgs),
    /// Exact distributions and moments.
    Oracle(OracleArgs),
    /// Grade a packed byte file.
    Validate(ValidateArgs),
    /// Re-run the invocation recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gen(_) => "gen",
            Self::Dist(_) => "dist",
            Self::Mod(_) => "mod",
            Self::Convergence(_) => "convergence",
            Self::Conjugate(_) => "conjugate",
            Self::Oracle(_) => "oracle",
            Self::Validate(_) => "validate",
            Self::Replay(_) => "replay",
        }
    }

    /// Fills in a fresh seed wherever one was left unspecified, so the
    /// recorded invocation replays exactly.
    pub fn resolve_seed(&mut self) {
        let slot = match self {
            Self::Gen(a) => &mut a.engine.seed,
            Self::Dist(a) | Self::Mod(a) => &mut a.engine.seed,
            Self::Convergence(a) => &mut a.seed,
            Self::Conjugate(a) => &mut a.engine.seed,
            _ => return,
        };
        if slot.is_none() {
            *slot = Some(format!("{:#018x}", fresh_seed()));
        }
    }
}

fn fresh_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos() as u64);
    nanos ^ crate::timing::read_counter().rotate_left(32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Hardware,
    Sim,
}

/// Engine parameters shared by the sampling commands.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EngineArgs {
    /// Array size N.
    #[arg(long = "n", default_value_t = 4)]
    pub n: usize,
    /// Successes per cycle.
    #[arg(long, default_value_t = 4)]
    pub m: u32,
    /// Symbol width in bits.
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    /// Initial pad seed, hex; random when omitted.
    #[arg(long)]
    pub seed: Option<String>,
    /// Clock source; the default depends on the command.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Simulated runtime model: default, constant:C, geometric:P:OFFSET or
    /// empirical:T=P,T=P,...
    #[arg(long)]
    pub model: Option<String>,
    /// Reseed shift.
    #[arg(long, default_value_t = DEFAULT_SHIFT)]
    pub k_shift: u32,
    /// Draw budget per cycle.
    #[arg(long, default_value_t = DEFAULT_DRAW_CAP)]
    pub draw_cap: u64,
    /// Disordered array as comma-separated integers.
    #[arg(long)]
    pub array: Option<String>,
}

pub fn parse_seed(text: &str) -> Result<u64, CliError> {
    let digits = text.trim();
    let digits = digits
        .strip_prefix("0x")
        .or_else(|| digits.strip_prefix("0X"))
        .unwrap_or(digits);
    u64::from_str_radix(&digits.replace('_', ""), 16)
        .map_err(|_| CliError::Usage(format!("seed {text:?} is not a 64-bit hex value")))
}

fn resolve_mode(
    mode: Option<ModeArg>,
    model: Option<&str>,
    default: ModeArg,
) -> Result<Mode, CliError> {
    match (mode.unwrap_or(default), model) {
        (ModeArg::Hardware, Some(_)) => {
            Err(CliError::Usage("--model only applies to --mode sim".into()))
        }
        (ModeArg::Hardware, None) => Ok(Mode::Hardware),
        (ModeArg::Sim, model) => {
            let model = match model {
                Some(text) => text
                    .parse::<RuntimeModel>()
                    .map_err(|e| CliError::Usage(e.to_string()))?,
                None => RuntimeModel::default(),
            };
            Ok(Mode::Simulated { model })
        }
    }
}

impl EngineArgs {
    pub fn build(&self, default_mode: ModeArg) -> Result<(EngineConfig, u64), CliError> {
        let seed = match &self.seed {
            Some(s) => parse_seed(s)?,
            None => fresh_seed(),
        };
        let mode = resolve_mode(self.mode, self.model.as_deref(), default_mode)?;
        let mut cfg = EngineConfig::new(self.n, self.m, self.bits)
            .map_err(|e| CliError::Usage(e.to_string()))?
            .with_mode(mode);
        cfg.k_shift = self.k_shift;
        cfg.draw_cap = self.draw_cap;
        if let Some(text) = &self.array {
            let values = text
                .split(',')
                .map(|v| v.trim().parse::<i64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| {
                    CliError::Usage(format!("array {text:?} is not a list of integers"))
                })?;
            cfg.disordered = DataArray::new(&values).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((cfg, seed))
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub engine: EngineArgs,
    /// Number of bytes to emit.
    #[arg(long)]
    pub bytes: usize,
    /// Output file, or - for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub engine: EngineArgs,
    /// Number of cycles.
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ConvergenceArgs {
    /// Comma-separated N:m:n rows; defaults to the reference seven.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<GridRow>,
    /// Symbols generated per row.
    #[arg(long, default_value_t = 1_000_000)]
    pub symbols: u64,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ConjugateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub engine: EngineArgs,
    /// Pads per run.
    #[arg(long, default_value_t = 26)]
    pub pads: usize,
    /// Repeated runs over the same pads.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleDist {
    Negbin,
    Wrapped,
    Compound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub dist: OracleDist,
    #[arg(long, default_value_t = 1)]
    pub m: u64,
    /// Success probability as a decimal or a fraction such as 1/24.
    #[arg(long)]
    pub p: Option<String>,
    /// Take p = 1/N! instead.
    #[arg(long = "n", conflicts_with = "p")]
    pub n: Option<usize>,
    /// Residue width for the wrapped law.
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    /// First k for the count law.
    #[arg(long, default_value_t = 1)]
    pub k_min: u64,
    /// Last k for the count law.
    #[arg(long, default_value_t = 10)]
    pub k_max: u64,
    /// Per-draw runtime mean for the compound law.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Per-draw runtime variance for the compound law.
    #[arg(long)]
    pub var: Option<f64>,
    /// Runtime model supplying mu and var.
    #[arg(long, conflicts_with_all = ["mu", "var"])]
    pub model: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Requirement {
    Good,
    Excellent,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    /// Packed byte file to grade.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    /// Lowest verdict that passes.
    #[arg(long, value_enum, default_value_t = Requirement::Good)]
    pub require: Requirement,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest to replay.
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => report(run(&cli)),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

fn report(result: Result<(), CliError>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rpss: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    execute(cli.command.clone(), &cli.out_dir)
}

/// Runs one command and writes its manifest, whatever the outcome.
pub fn execute(mut command: Command, out_dir: &Path) -> Result<(), CliError> {
    if let Command::Replay(args) = &command {
        return replay(&args.manifest, out_dir);
    }
    command.resolve_seed();
    let mut manifest = RunManifest::start(command.clone());
    let manifest_path = match &command {
        Command::Gen(a) if a.out != Path::new("-") => {
            let mut name = a.out.clone().into_os_string();
            name.push(".manifest.json");
            PathBuf::from(name)
        }
        other => out_dir.join(format!("{}.manifest.json", other.name())),
    };
    let result = match &command {
        Command::Gen(a) => gen(a, &mut manifest),
        Command::Dist(a) => dist(a, out_dir, &mut manifest),
        Command::Mod(a) => modular(a, out_dir, &mut manifest),
        Command::Convergence(a) => convergence(a, out_dir, &mut manifest),
        Command::Conjugate(a) => conjugate(a, out_dir, &mut manifest),
        Command::Oracle(a) => oracle(a, &mut manifest),
        Command::Validate(a) => validate(a, &mut manifest),
        Command::Replay(_) => unreachable!(),
    };
    manifest.finish(&result);
    let written = manifest.write(&manifest_path);
    result.and(written)
}

fn replay(path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let recorded = RunManifest::read(path)?;
    let mut command = recorded.invocation;
    // Never overwrite the original artifact.
    if let Command::Gen(a) = &mut command {
        if a.out != Path::new("-") {
            let name = a
                .out
                .file_name()
                .map(PathBuf::from)
                .unwrap_or_else(|| "gen.bin".into());
            a.out = out_dir.join(name);
        }
    }
    execute(command, out_dir)
}

fn write_file(path: PathBuf, contents: &str, manifest: &mut RunManifest) -> Result<(), CliError> {
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    manifest.outputs.push(path);
    Ok(())
}

fn write_json<T: Serialize>(
    path: PathBuf,
    value: &T,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_file(path, &text, manifest)
}

fn warn(manifest: &RunManifest) {
    for w in &manifest.warnings {
        eprintln!("rpss: warning: {w}");
    }
}

fn gen(args: &GenArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let (cfg, seed) = args.engine.build(ModeArg::Hardware)?;
    manifest.set_config(&cfg, seed);
    manifest.trials = Some(args.bytes as u64);
    if ![1, 2, 4, 8].contains(&cfg.n_bits) {
        return Err(CliError::Usage(
            EngineError::UnsupportedPacking(cfg.n_bits).to_string(),
        ));
    }
    warn(manifest);
    let mut engine = Engine::new(cfg, seed)?;
    if args.out == Path::new("-") {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        engine.write_bytes(args.bytes, &mut lock)?;
    } else {
        let file = File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
        manifest.outputs.push(args.out.clone());
        let mut w = BufWriter::new(file);
        engine.write_bytes(args.bytes, &mut w)?;
        w.flush().map_err(|e| CliError::io(&args.out, e))?;
    }
    Ok(())
}

fn dist(args: &SampleArgs, out_dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let (cfg, seed) = args.engine.build(ModeArg::Sim)?;
    manifest.set_config(&cfg, seed);
    manifest.trials = Some(args.trials);
    let out = commands::dist(&cfg, seed, args.trials)?;
    write_file(
        out_dir.join("dist_n_p.csv"),
        &out.sample.n_p.to_csv(None),
        manifest,
    )?;
    write_file(
        out_dir.join("dist_t.csv"),
        &out.sample.t.to_csv(None),
        manifest,
    )?;
    write_json(out_dir.join("dist_summary.json"), &out.summary, manifest)?;
    let s = &out.summary;
    println!(
        "n_p: mean {:.4} variance {:.4} mode {:?} (theory mean {:.4})",
        s.n_p.mean,
        s.n_p.variance,
        s.n_p.mode,
        s.n_p.theory_mean.unwrap_or(f64::NAN)
    );
    println!(
        "t:   mean {:.4} variance {:.4} mode {:?}",
        s.t.mean, s.t.variance, s.t.mode
    );
    println!("Pr[n_p = m] = {:.6}", s.head_frequency);
    Ok(())
}

fn modular(args: &SampleArgs, out_dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let (cfg, seed) = args.engine.build(ModeArg::Sim)?;
    manifest.set_config(&cfg, seed);
    manifest.trials = Some(args.trials);
    warn(manifest);
    let cells = Some(cfg.modulus() as usize);
    let out = commands::modular(&cfg, seed, args.trials)?;
    write_file(
        out_dir.join("mod_n_p.csv"),
        &out.sample.n_p_mod.to_csv(cells),
        manifest,
    )?;
    write_file(
        out_dir.join("mod_t.csv"),
        &out.sample.t_mod.to_csv(cells),
        manifest,
    )?;
    write_json(out_dir.join("mod_report.json"), &out.summary, manifest)?;
    let s = &out.summary;
    println!(
        "n_p mod {}: residue mean {:.4} (ideal {:.2}) chi-square p {:.4} min-entropy {:.4} -> {}",
        cfg.modulus(),
        s.n_p.residue_mean,
        (cfg.modulus() - 1) as f64 / 2.0,
        s.n_p.p_value,
        s.n_p.min_entropy_bits,
        s.n_p_verdict
    );
    println!(
        "t   mod {}: residue mean {:.4} chi-square p {:.4} min-entropy {:.4} -> {}",
        cfg.modulus(),
        s.t.residue_mean,
        s.t.p_value,
        s.t.min_entropy_bits,
        s.t_verdict
    );
    Ok(())
}

/// Runs every row; simulated rows in parallel, hardware rows one at a time.
pub fn convergence_rows(
    rows: &[GridRow],
    symbols: u64,
    seed: u64,
    mode: &Mode,
) -> Vec<commands::ConvergenceRow> {
    if mode.is_hardware() {
        return rows
            .iter()
            .map(|&r| commands::convergence_row(r, symbols, seed, mode))
            .collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = rows
            .iter()
            .map(|&r| s.spawn(move || commands::convergence_row(r, symbols, seed, mode)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("convergence worker panicked"))
            .collect()
    })
}

fn convergence(
    args: &ConvergenceArgs,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let seed = parse_seed(args.seed.as_deref().unwrap_or("0"))?;
    let mode = resolve_mode(args.mode, args.model.as_deref(), ModeArg::Sim)?;
    let grid = if args.grid.is_empty() {
        DEFAULT_GRID.to_vec()
    } else {
        args.grid.clone()
    };
    manifest.seed = Some(format!("{seed:#018x}"));
    manifest.mode = Some(
        if mode.is_hardware() {
            "hardware"
        } else {
            "simulated"
        }
        .into(),
    );
    manifest.trials = Some(args.symbols * grid.len() as u64);
    let rows = convergence_rows(&grid, args.symbols, seed, &mode);
    write_file(
        out_dir.join("convergence.csv"),
        &commands::convergence_csv(&rows),
        manifest,
    )?;
    write_json(out_dir.join("convergence.json"), &rows, manifest)?;
    println!(
        "{:>3} {:>3} {:>6} {:>3} {:>10} {:>9}  verdict",
        "N", "m", "M", "n", "p-value", "H_min"
    );
    for r in &rows {
        let (p, h) = r
            .n_p
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |x| (x.p_value, x.min_entropy_bits));
        println!(
            "{:>3} {:>3} {:>6} {:>3} {:>10.4} {:>9.4}  {}",
            r.row.size, r.row.successes, r.characteristic_scale, r.row.n_bits, p, h, r.verdict
        );
    }
    let errors: Vec<String> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("row {}: {e}", r.row)))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        manifest.warnings.extend(errors.iter().cloned());
        Err(CliError::Engine(EngineError::Config(errors.join("; "))))
    }
}

fn conjugate(
    args: &ConjugateArgs,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let (cfg, seed) = args.engine.build(ModeArg::Hardware)?;
    manifest.set_config(&cfg, seed);
    manifest.trials = Some((args.pads * args.runs) as u64);
    let table = commands::conjugate(&cfg, seed, args.pads, args.runs)?;
    write_file(
        out_dir.join("conjugate_raw.csv"),
        &table.raw_csv(),
        manifest,
    )?;
    write_file(
        out_dir.join("conjugate_mod.csv"),
        &table.reduced_csv(),
        manifest,
    )?;
    write_json(out_dir.join("conjugate.json"), &table, manifest)?;
    print!("{}", table.raw_csv());
    println!(
        "timing {} across runs",
        if table.timing_varies() {
            "varies"
        } else {
            "is identical"
        }
    );
    Ok(())
}

/// Parses `0.25`, `1/24` or `1e-3`.
pub fn parse_probability(text: &str) -> Result<f64, CliError> {
    let bad = || CliError::Usage(format!("probability {text:?} is not a number or fraction"));
    let p = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if p > 0.0 && p <= 1.0 {
        Ok(p)
    } else {
        Err(CliError::Usage(format!(
            "probability {text:?} is outside (0, 1]"
        )))
    }
}

/// Evaluates the requested law as JSON or CSV text.
pub fn oracle_output(args: &OracleArgs) -> Result<String, CliError> {
    let domain = |e: StatsError| CliError::Usage(e.to_string());
    let p = match (&args.p, args.n) {
        (Some(p), _) => parse_probability(p)?,
        (None, Some(n)) if (2..=20).contains(&n) => 1.0 / factorial(n) as f64,
        (None, Some(n)) => return Err(CliError::Usage(format!("--n {n} outside 2..=20"))),
        (None, None) => return Err(CliError::Usage("one of --p or --n is required".into())),
    };
    let m = args.m;
    Ok(match args.dist {
        OracleDist::Negbin => {
            if args.k_min > args.k_max {
                return Err(CliError::Usage("--k-min exceeds --k-max".into()));
            }
            let (mean, variance) = negbin_moments(m, p).map_err(domain)?;
            let values = (args.k_min..=args.k_max)
                .map(|k| negbin_pmf(k, m, p).map(|v| (k, v)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(domain)?;
            match args.format {
                Format::Csv => csv_rows("k,probability", &values),
                Format::Json => json_text(&json!({
                    "dist": "negbin", "m": m, "p": p, "mean": mean, "variance": variance,
                    "values": values.iter().map(|&(k, v)| json!({"k": k, "probability": v})).collect::<Vec<_>>(),
                }))?,
            }
        }
        OracleDist::Wrapped => {
            if !(1..=16).contains(&args.bits) {
                return Err(CliError::Usage(format!(
                    "--bits {} outside 1..=16",
                    args.bits
                )));
            }
            let modulus = 1usize << args.bits;
            let pmf = wrapped_residue_pmf(m, p, modulus).map_err(domain)?;
            let values: Vec<(u64, f64)> = pmf
                .iter()
                .enumerate()
                .map(|(r, &v)| (r as u64, v))
                .collect();
            match args.format {
                Format::Csv => csv_rows("residue,probability", &values),
                Format::Json => json_text(&json!({
                    "dist": "wrapped", "m": m, "p": p, "modulus": modulus,
                    "sum": pmf.iter().sum::<f64>(),
                    "max_deviation": max_uniform_deviation(&pmf),
                    "probabilities": pmf,
                }))?,
            }
        }
        OracleDist::Compound => {
            let (mu, var) = match (&args.model, args.mu, args.var) {
                (Some(text), _, _) => {
                    let model: RuntimeModel = text
                        .parse()
                        .map_err(|e: TimingError| CliError::Usage(e.to_string()))?;
                    (model.mean(), model.variance())
                }
                (None, Some(mu), Some(var)) => (mu, var),
                _ => {
                    return Err(CliError::Usage(
                        "compound needs --mu and --var, or --model".into(),
                    ))
                }
            };
            let (mean, variance) = compound_time_moments(m, p, mu, var).map_err(domain)?;
            match args.format {
                Format::Csv => format!("quantity,value\nmean,{mean}\nvariance,{variance}\n"),
                Format::Json => json_text(&json!({
                    "dist": "compound", "m": m, "p": p, "mu": mu, "var": var,
                    "mean": mean, "variance": variance,
                }))?,
            }
        }
    })
}

fn csv_rows(header: &str, rows: &[(u64, f64)]) -> String {
    use std::fmt::Write as _;
    let mut out = format!("{header}\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v:e}");
    }
    out
}

fn json_text(value: &serde_json::Value) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn oracle(args: &OracleArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let text = oracle_output(args)?;
    match &args.out {
        Some(path) => write_file(path.clone(), &text, manifest),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate(args: &ValidateArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let bytes = std::fs::read(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    manifest.trials = Some(bytes.len() as u64);
    let report = commands::validate_bytes(&bytes, args.bits).map_err(|e| match e {
        CliError::Engine(EngineError::UnsupportedPacking(_)) => CliError::Usage(e.to_string()),
        other => other,
    })?;
    let verdict = report.verdict();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "report": report, "verdict": verdict }))?
    );
    let needed = match args.require {
        Requirement::Good => Verdict::Good,
        Requirement::Excellent => Verdict::Excellent,
    };
    if verdict >= needed {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} graded {verdict}, below {needed}",
            args.input.display()
        )))
    }
}
