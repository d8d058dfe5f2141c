//! Elapsed-time measurement in raw clock ticks.
//!
//! A [`TickSource`] times a unit of work. The work reports every permutation
//! it performs through a [`Meter`]; the hardware source ignores those reports
//! and reads the counter around the whole span, while the mock and simulated
//! sources charge one per-permutation cost per report.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;
#[cfg(not(target_arch = "x86_64"))]
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prng::WordSource;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimingError {
    #[error("mock schedule exhausted after {consumed} entries")]
    ScheduleExhausted { consumed: usize },
    #[error("mock schedule entry {index} is zero; every permutation costs at least one tick")]
    ZeroScheduleEntry { index: usize },
    #[error("invalid mock schedule: {0}")]
    InvalidSchedule(String),
    #[error("malformed runtime model: {0}")]
    MalformedModel(String),
}

/// Elapsed clock units for one measured span.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TickSpan(pub u64);

impl TickSpan {
    pub fn ticks(self) -> u64 {
        self.0
    }
}

/// Reads the finest monotonic counter the platform offers, in its own units.
///
/// On x86_64 this is the time-stamp counter; elsewhere it falls back to
/// `Instant`, reported as nanoseconds since the first call.
#[inline]
pub fn read_counter() -> u64 {
    #[cfg(target_arch = "x86_64")]
    {
        #[allow(unused_unsafe)]
        // SAFETY: rdtsc has no memory effects and is available on every x86_64 CPU.
        unsafe {
            core::arch::x86_64::_rdtsc()
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        static ORIGIN: OnceLock<Instant> = OnceLock::new();
        ORIGIN.get_or_init(Instant::now).elapsed().as_nanos() as u64
    }
}

/// Granularity of [`read_counter`]: the gcd of a few thousand back-to-back
/// deltas, measured once per process.
///
/// Some virtualized time-stamp counters only ever advance in steps of two or
/// more; hardware spans are reported in these steps so that the low bits of a
/// span are not structurally constant.
pub fn counter_step() -> u64 {
    static STEP: OnceLock<u64> = OnceLock::new();
    *STEP.get_or_init(|| {
        let mut g = 0u64;
        let mut sink = 0u64;
        for i in 0..4096u64 {
            let a = read_counter();
            for j in 0..(i % 7) {
                sink = std::hint::black_box(sink.wrapping_mul(31).wrapping_add(j));
            }
            let b = read_counter();
            g = gcd(g, b.saturating_sub(a));
            if g == 1 {
                break;
            }
        }
        g.max(1)
    })
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Replayable list of per-permutation tick costs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockSchedule {
    entries: Vec<u64>,
    cursor: usize,
}

impl MockSchedule {
    pub fn new(entries: Vec<u64>) -> Result<Self, TimingError> {
        if let Some(index) = entries.iter().position(|&e| e == 0) {
            return Err(TimingError::ZeroScheduleEntry { index });
        }
        Ok(Self { entries, cursor: 0 })
    }

    /// Parses a JSON array of positive integers.
    pub fn from_json(text: &str) -> Result<Self, TimingError> {
        let entries: Vec<u64> =
            serde_json::from_str(text).map_err(|e| TimingError::InvalidSchedule(e.to_string()))?;
        Self::new(entries)
    }

    /// `count` copies of the same cost.
    pub fn repeat(cost: u64, count: usize) -> Result<Self, TimingError> {
        Self::new(vec![cost; count])
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.cursor
    }

    fn take(&mut self) -> Result<u64, TimingError> {
        let e = *self
            .entries
            .get(self.cursor)
            .ok_or(TimingError::ScheduleExhausted {
                consumed: self.cursor,
            })?;
        self.cursor += 1;
        Ok(e)
    }
}

/// Distribution of the tick cost of a single permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuntimeModel {
    Constant {
        ticks: u64,
    },
    /// `offset + F` where `F` counts failures before the first success of a
    /// Bernoulli(p) sequence.
    GeometricShifted {
        p: f64,
        offset: u64,
    },
    /// `(ticks, probability)` pairs.
    Empirical {
        table: Vec<(u64, f64)>,
    },
}

impl Default for RuntimeModel {
    /// Mode at three ticks, with some mass at one and two.
    fn default() -> Self {
        Self::Empirical {
            table: vec![(1, 0.05), (2, 0.15), (3, 0.55), (4, 0.15), (5, 0.10)],
        }
    }
}

impl RuntimeModel {
    pub fn validate(&self) -> Result<(), TimingError> {
        let bad = |s: String| Err(TimingError::MalformedModel(s));
        match self {
            Self::Constant { ticks } if *ticks == 0 => bad("constant cost must be >= 1".into()),
            Self::Constant { .. } => Ok(()),
            Self::GeometricShifted { p, offset } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    bad(format!("geometric p = {p} outside (0, 1]"))
                } else if *offset == 0 {
                    bad("geometric offset must be >= 1".into())
                } else {
                    Ok(())
                }
            }
            Self::Empirical { table } => {
                if table.is_empty() {
                    return bad("empirical table is empty".into());
                }
                let mut sum = 0.0;
                for (i, &(ticks, prob)) in table.iter().enumerate() {
                    if ticks == 0 {
                        return bad(format!("entry {i} has zero ticks"));
                    }
                    if !(prob > 0.0 && prob <= 1.0) {
                        return bad(format!("entry {i} has probability {prob}"));
                    }
                    if table[..i].iter().any(|&(t, _)| t == ticks) {
                        return bad(format!("duplicate tick value {ticks}"));
                    }
                    sum += prob;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return bad(format!("probabilities sum to {sum}"));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Constant { ticks } => *ticks as f64,
            Self::GeometricShifted { p, offset } => *offset as f64 + (1.0 - p) / p,
            Self::Empirical { table } => table.iter().map(|&(t, q)| t as f64 * q).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::GeometricShifted { p, .. } => (1.0 - p) / (p * p),
            Self::Empirical { table } => {
                let mean = self.mean();
                table
                    .iter()
                    .map(|&(t, q)| q * (t as f64 - mean).powi(2))
                    .sum()
            }
        }
    }

    /// Finite support as `(ticks, probability)` sorted by ticks, or `None`
    /// for the unbounded geometric model.
    pub fn finite_pmf(&self) -> Option<Vec<(u64, f64)>> {
        match self {
            Self::Constant { ticks } => Some(vec![(*ticks, 1.0)]),
            Self::GeometricShifted { .. } => None,
            Self::Empirical { table } => {
                let mut t = table.clone();
                t.sort_by_key(|&(ticks, _)| ticks);
                Some(t)
            }
        }
    }

    /// Draws one cost, always `>= 1` for a valid model.
    pub fn sample<S: WordSource + ?Sized>(&self, rng: &mut S) -> u64 {
        match self {
            Self::Constant { ticks } => *ticks,
            Self::GeometricShifted { p, offset } => {
                if *p >= 1.0 {
                    return *offset;
                }
                let u = unit_interval(rng);
                // inverse CDF of failures-before-success
                let failures = ((1.0 - u).ln() / (1.0 - p).ln()).floor();
                offset + failures as u64
            }
            Self::Empirical { table } => {
                let thresholds = empirical_thresholds(table);
                pick(&thresholds, table, rng.next_u64())
            }
        }
    }
}

/// Cumulative probabilities scaled to `2^64`, one per entry but the last.
fn empirical_thresholds(table: &[(u64, f64)]) -> Vec<u64> {
    let scale = 18_446_744_073_709_551_616.0; // 2^64
    let mut acc = 0.0;
    table[..table.len() - 1]
        .iter()
        .map(|&(_, q)| {
            acc += q;
            (acc * scale) as u64
        })
        .collect()
}

/// Inverse CDF on a uniform 64-bit word, branch-free over the thresholds.
#[inline]
fn pick(thresholds: &[u64], table: &[(u64, f64)], u: u64) -> u64 {
    let idx = thresholds.iter().filter(|&&t| u >= t).count();
    table[idx].0
}

/// Uniform on `[0, 1)` with 53 bits of resolution.
fn unit_interval<S: WordSource + ?Sized>(rng: &mut S) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl fmt::Display for RuntimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { ticks } => write!(f, "constant:{ticks}"),
            Self::GeometricShifted { p, offset } => write!(f, "geometric:{p}:{offset}"),
            Self::Empirical { table } => {
                write!(f, "empirical:")?;
                for (i, (t, q)) in table.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}={q}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for RuntimeModel {
    type Err = TimingError;

    /// `constant:C`, `geometric:P:OFFSET`, `empirical:T=P,T=P,...` or `default`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || TimingError::MalformedModel(s.to_string());
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let model = match kind {
            "default" if rest.is_empty() => Self::default(),
            "constant" => Self::Constant {
                ticks: rest.parse().map_err(|_| malformed())?,
            },
            "geometric" => {
                let (p, offset) = rest.split_once(':').ok_or_else(malformed)?;
                Self::GeometricShifted {
                    p: p.parse().map_err(|_| malformed())?,
                    offset: offset.parse().map_err(|_| malformed())?,
                }
            }
            "empirical" => {
                let table = rest
                    .split(',')
                    .map(|pair| {
                        let (t, q) = pair.split_once('=').ok_or_else(malformed)?;
                        Ok((
                            t.trim().parse().map_err(|_| malformed())?,
                            q.trim().parse().map_err(|_| malformed())?,
                        ))
                    })
                    .collect::<Result<Vec<_>, TimingError>>()?;
                Self::Empirical { table }
            }
            _ => return Err(malformed()),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Draws per-permutation costs from a [`RuntimeModel`] with its own
/// ChaCha8 stream, independent of the pad generator.
#[derive(Debug, Clone)]
pub struct SimulatedClock {
    model: RuntimeModel,
    thresholds: Vec<u64>,
    rng: ChaCha8Rng,
}

impl SimulatedClock {
    pub fn new(model: RuntimeModel, seed: u64) -> Result<Self, TimingError> {
        model.validate()?;
        let thresholds = match &model {
            RuntimeModel::Empirical { table } => empirical_thresholds(table),
            _ => Vec::new(),
        };
        Ok(Self {
            model,
            thresholds,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Same law and word consumption as [`RuntimeModel::sample`].
    #[inline]
    fn draw(&mut self) -> u64 {
        match &self.model {
            RuntimeModel::Empirical { table } => pick(&self.thresholds, table, self.rng.next_u64()),
            other => other.sample(&mut self.rng),
        }
    }

    pub fn model(&self) -> &RuntimeModel {
        &self.model
    }
}

// One per engine and charged on every draw, so the clock stays inline.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum TickSource {
    /// The platform counter from [`read_counter`], in units of
    /// [`counter_step`].
    Hardware,
    Mock(MockSchedule),
    Simulated(SimulatedClock),
}

impl TickSource {
    pub fn is_hardware(&self) -> bool {
        matches!(self, Self::Hardware)
    }

    /// Runs `work` and returns its result with the elapsed ticks.
    ///
    /// Hardware spans are `(end - start) / counter_step()` with no overhead
    /// correction. Mock and simulated spans are the sum of the costs charged
    /// through the meter, so empty work measures zero.
    pub fn measure<T, E>(
        &mut self,
        work: impl FnOnce(&mut Meter<'_>) -> Result<T, E>,
    ) -> Result<(T, TickSpan), E> {
        match self {
            Self::Hardware => {
                let step = counter_step();
                let mut meter = Meter {
                    kind: MeterKind::Hardware,
                    charged: 0,
                };
                let start = read_counter();
                let out = work(&mut meter)?;
                let end = read_counter();
                Ok((out, TickSpan(end.saturating_sub(start) / step)))
            }
            Self::Mock(schedule) => {
                let mut meter = Meter {
                    kind: MeterKind::Mock(schedule),
                    charged: 0,
                };
                let out = work(&mut meter)?;
                Ok((out, TickSpan(meter.charged)))
            }
            Self::Simulated(sim) => {
                let mut meter = Meter {
                    kind: MeterKind::Simulated(sim),
                    charged: 0,
                };
                let out = work(&mut meter)?;
                Ok((out, TickSpan(meter.charged)))
            }
        }
    }
}

enum MeterKind<'a> {
    Hardware,
    Mock(&'a mut MockSchedule),
    Simulated(&'a mut SimulatedClock),
}

/// Handed to measured work; call [`Meter::charge`] once per permutation.
pub struct Meter<'a> {
    kind: MeterKind<'a>,
    charged: u64,
}

impl Meter<'_> {
    #[inline]
    pub fn charge(&mut self) -> Result<(), TimingError> {
        match &mut self.kind {
            MeterKind::Hardware => {}
            MeterKind::Mock(schedule) => self.charged += schedule.take()?,
            MeterKind::Simulated(sim) => self.charged += sim.draw(),
        }
        Ok(())
    }
}
