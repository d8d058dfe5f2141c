//! Experiment drivers behind the CLI subcommands. These return plain data so
//! the same runs can be checked programmatically.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::engine::{Engine, EngineConfig, EngineError, Mode};
use crate::permutation::factorial;
use crate::statistics::{
    compound_time_moments, max_uniform_deviation, negbin_moments, wrapped_residue_pmf, Histogram,
    UniformityReport, Verdict,
};

/// Histograms of raw and reduced observables over a run of open-loop cycles.
#[derive(Debug, Clone, Default)]
pub struct CycleSample {
    pub n_p: Histogram,
    pub t: Histogram,
    pub n_p_mod: Histogram,
    pub t_mod: Histogram,
}

/// Runs `trials` cycles without reseeding; the pad generator advances
/// continuously from `seed`.
pub fn sample_cycles(
    cfg: &EngineConfig,
    seed: u64,
    trials: u64,
) -> Result<CycleSample, EngineError> {
    let mut engine = Engine::new(cfg.clone(), seed)?;
    let mut out = CycleSample::default();
    for _ in 0..trials {
        let r = engine.run_cycle()?;
        out.n_p.add(r.n_p);
        out.t.add(r.t.ticks());
        out.n_p_mod.add(r.n_p_mod);
        out.t_mod.add(r.t_mod);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSummary {
    pub mean: f64,
    pub variance: f64,
    pub mode: Option<u64>,
    /// Closed-form mean, when the law is known.
    pub theory_mean: Option<f64>,
    pub theory_variance: Option<f64>,
}

impl ObservableSummary {
    fn of(h: &Histogram, theory: Option<(f64, f64)>) -> Self {
        Self {
            mean: h.mean(),
            variance: h.variance(),
            mode: h.mode(),
            theory_mean: theory.map(|t| t.0),
            theory_variance: theory.map(|t| t.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistSummary {
    pub size: usize,
    pub successes: u32,
    pub trials: u64,
    pub characteristic_scale: u64,
    pub n_p: ObservableSummary,
    pub t: ObservableSummary,
    /// Empirical `Pr[n_p = m]`.
    pub head_frequency: f64,
}

#[derive(Debug, Clone)]
pub struct DistOutcome {
    pub sample: CycleSample,
    pub summary: DistSummary,
}

pub fn dist(cfg: &EngineConfig, seed: u64, trials: u64) -> Result<DistOutcome, CliError> {
    let sample = sample_cycles(cfg, seed, trials)?;
    let m = cfg.successes as u64;
    let p = cfg.success_probability();
    let count_law = negbin_moments(m, p)?;
    let time_law = match &cfg.mode {
        Mode::Simulated { model } => {
            Some(compound_time_moments(m, p, model.mean(), model.variance())?)
        }
        Mode::Hardware => None,
    };
    let summary = DistSummary {
        size: cfg.size,
        successes: cfg.successes,
        trials,
        characteristic_scale: cfg.characteristic_scale(),
        n_p: ObservableSummary::of(&sample.n_p, Some(count_law)),
        t: ObservableSummary::of(&sample.t, time_law),
        head_frequency: sample.n_p.count(m) as f64 / trials.max(1) as f64,
    };
    Ok(DistOutcome { sample, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModSummary {
    pub size: usize,
    pub successes: u32,
    pub n_bits: u32,
    pub trials: u64,
    pub characteristic_scale: u64,
    pub scale_ratio: f64,
    pub n_p: UniformityReport,
    pub n_p_verdict: Verdict,
    pub t: UniformityReport,
    pub t_verdict: Verdict,
    /// Exact `max_r |S_r - 1/R|` of the count residues.
    pub oracle_max_deviation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ModOutcome {
    pub sample: CycleSample,
    pub summary: ModSummary,
}

pub fn modular(cfg: &EngineConfig, seed: u64, trials: u64) -> Result<ModOutcome, CliError> {
    let sample = sample_cycles(cfg, seed, trials)?;
    let n_p = UniformityReport::evaluate(&sample.n_p_mod, cfg.n_bits)?;
    let t = UniformityReport::evaluate(&sample.t_mod, cfg.n_bits)?;
    let oracle = wrapped_residue_pmf(
        cfg.successes as u64,
        cfg.success_probability(),
        1 << cfg.n_bits,
    )
    .ok()
    .map(|s| max_uniform_deviation(&s));
    let summary = ModSummary {
        size: cfg.size,
        successes: cfg.successes,
        n_bits: cfg.n_bits,
        trials,
        characteristic_scale: cfg.characteristic_scale(),
        scale_ratio: cfg.characteristic_scale() as f64 / cfg.modulus() as f64,
        n_p_verdict: n_p.verdict(),
        n_p,
        t_verdict: t.verdict(),
        t,
        oracle_max_deviation: oracle,
    };
    Ok(ModOutcome { sample, summary })
}

/// One `(N, m, n)` configuration, written `N:m:n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRow {
    pub size: usize,
    pub successes: u32,
    pub n_bits: u32,
}

impl FromStr for GridRow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(format!("grid row {s:?} is not N:m:n"));
        };
        let bad = |_| format!("grid row {s:?} is not N:m:n");
        Ok(Self {
            size: a.trim().parse().map_err(bad)?,
            successes: b.trim().parse().map_err(bad)?,
            n_bits: c.trim().parse().map_err(bad)?,
        })
    }
}

impl std::fmt::Display for GridRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.size, self.successes, self.n_bits)
    }
}

/// The seven configurations of the reference convergence table.
pub const DEFAULT_GRID: [GridRow; 7] = [
    GridRow {
        size: 3,
        successes: 15,
        n_bits: 4,
    },
    GridRow {
        size: 3,
        successes: 20,
        n_bits: 4,
    },
    GridRow {
        size: 4,
        successes: 3,
        n_bits: 4,
    },
    GridRow {
        size: 4,
        successes: 4,
        n_bits: 4,
    },
    GridRow {
        size: 5,
        successes: 2,
        n_bits: 4,
    },
    GridRow {
        size: 5,
        successes: 4,
        n_bits: 8,
    },
    GridRow {
        size: 5,
        successes: 5,
        n_bits: 8,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub row: GridRow,
    pub characteristic_scale: u64,
    pub modulus: u64,
    pub symbols: u64,
    pub verdict: Verdict,
    /// Report on the emitted symbols `n_p mod 2^n`.
    pub n_p: Option<UniformityReport>,
    /// Report on the reseed residues `t mod 2^n`.
    pub t: Option<UniformityReport>,
    pub oracle_max_deviation: Option<f64>,
    pub error: Option<String>,
}

/// Generates `symbols` outputs of the feedback loop for one grid row and
/// grades them. Failures are recorded in the row rather than returned.
pub fn convergence_row(row: GridRow, symbols: u64, seed: u64, mode: &Mode) -> ConvergenceRow {
    let scale = (row.successes as u64).saturating_mul(factorial(row.size.min(20)));
    let mut out = ConvergenceRow {
        row,
        characteristic_scale: scale,
        modulus: 1u64 << row.n_bits.min(63),
        symbols,
        verdict: Verdict::Fail,
        n_p: None,
        t: None,
        oracle_max_deviation: None,
        error: None,
    };
    let run = || -> Result<(UniformityReport, UniformityReport), CliError> {
        let cfg = EngineConfig::new(row.size, row.successes, row.n_bits)?.with_mode(mode.clone());
        let mut engine = Engine::new(cfg, seed)?;
        let mut n_p = Histogram::new();
        let mut t = Histogram::new();
        for _ in 0..symbols {
            let r = engine.step()?;
            n_p.add(r.n_p_mod);
            t.add(r.t_mod);
        }
        Ok((
            UniformityReport::evaluate(&n_p, row.n_bits)?,
            UniformityReport::evaluate(&t, row.n_bits)?,
        ))
    };
    match run() {
        Ok((n_p, t)) => {
            out.verdict = n_p.verdict();
            out.n_p = Some(n_p);
            out.t = Some(t);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    if (1..=16).contains(&row.n_bits) && row.size >= 2 && row.size <= 12 && row.successes > 0 {
        out.oracle_max_deviation = wrapped_residue_pmf(
            row.successes as u64,
            1.0 / factorial(row.size) as f64,
            1 << row.n_bits,
        )
        .ok()
        .map(|s| max_uniform_deviation(&s));
    }
    out
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(
        "N,m,M,n,R,symbols,chi_square,p_value,min_entropy_bits,clt_within_3sigma,t_p_value,t_min_entropy_bits,oracle_max_deviation,verdict,error\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.row.size,
            r.row.successes,
            r.characteristic_scale,
            r.row.n_bits,
            r.modulus,
            r.symbols,
            opt(r.n_p.as_ref().map(|x| x.chi_square)),
            opt(r.n_p.as_ref().map(|x| x.p_value)),
            opt(r.n_p.as_ref().map(|x| x.min_entropy_bits)),
            opt(r.n_p.as_ref().map(|x| x.clt_fraction_within[2])),
            opt(r.t.as_ref().map(|x| x.p_value)),
            opt(r.t.as_ref().map(|x| x.min_entropy_bits)),
            opt(r.oracle_max_deviation),
            r.verdict,
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    out
}

/// Repeated timing of a frozen pad sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateTable {
    pub n_bits: u32,
    /// Permutation count per pad, shared by every run.
    pub n_p: Vec<u64>,
    /// `ticks[pad][run]`.
    pub ticks: Vec<Vec<u64>>,
}

/// Runs the same `pads` cycles `runs` times from a fresh generator seeded
/// with `seed`. Counts repeat exactly; only the timing can differ.
pub fn conjugate(
    cfg: &EngineConfig,
    seed: u64,
    pads: usize,
    runs: usize,
) -> Result<ConjugateTable, CliError> {
    let mut n_p: Vec<u64> = Vec::with_capacity(pads);
    let mut ticks = vec![Vec::with_capacity(runs); pads];
    for run in 0..runs {
        let mut engine = Engine::new(cfg.clone(), seed)?;
        for (pad, row) in ticks.iter_mut().enumerate() {
            let r = engine.run_cycle()?;
            if run == 0 {
                n_p.push(r.n_p);
            } else if n_p[pad] != r.n_p {
                return Err(CliError::Validation(format!(
                    "pad {} count changed between runs: {} vs {}",
                    pad + 1,
                    n_p[pad],
                    r.n_p
                )));
            }
            row.push(r.t.ticks());
        }
    }
    Ok(ConjugateTable {
        n_bits: cfg.n_bits,
        n_p,
        ticks,
    })
}

impl ConjugateTable {
    pub fn runs(&self) -> usize {
        self.ticks.first().map_or(0, Vec::len)
    }

    fn csv(&self, reduce: bool) -> String {
        let mask = if reduce {
            (1u64 << self.n_bits) - 1
        } else {
            u64::MAX
        };
        let mut out = String::from("pad,n_p");
        for r in 1..=self.runs() {
            let _ = write!(out, ",t_run{r}");
        }
        out.push('\n');
        for (i, (n, ts)) in self.n_p.iter().zip(&self.ticks).enumerate() {
            let _ = write!(out, "QPP_{},{}", i + 1, n & mask);
            for t in ts {
                let _ = write!(out, ",{}", t & mask);
            }
            out.push('\n');
        }
        out
    }

    /// `pad,n_p,t_run1..` with raw values.
    pub fn raw_csv(&self) -> String {
        self.csv(false)
    }

    /// Same layout with every value reduced modulo `2^n`.
    pub fn reduced_csv(&self) -> String {
        self.csv(true)
    }

    /// Whether any pad's timing differs across runs.
    pub fn timing_varies(&self) -> bool {
        self.ticks.iter().any(|ts| ts.iter().any(|&t| t != ts[0]))
    }
}

/// Grades a packed byte stream of `n_bits`-wide symbols.
pub fn validate_bytes(bytes: &[u8], n_bits: u32) -> Result<UniformityReport, CliError> {
    let symbols = crate::engine::unpack_symbols(bytes, n_bits)?;
    let h: Histogram = symbols.into_iter().collect();
    Ok(UniformityReport::evaluate(&h, n_bits)?)
}
