//! The sorting cycle, modular reduction, and the self-reseeding symbol loop.
//!
//! One cycle repeatedly draws a uniform permutation, multiplies it onto the
//! running pad, and checks whether the pad sorts the disordered array. Every
//! draw counts toward `n_p`; each success resets the pad to the identity, and
//! the cycle ends at the `m`-th success. Per draw the success probability is
//! `1/N!`, so `n_p` is negative binomial with mean `m * N!`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::permutation::{factorial, DataArray, Permutation, PermutationError, MAX_SIZE, MIN_SIZE};
use crate::prng::{Lcg, LcgError, DEFAULT_INCREMENT, DEFAULT_MULTIPLIER, DEFAULT_SHIFT};
use crate::timing::{RuntimeModel, SimulatedClock, TickSource, TickSpan, TimingError};

pub const DEFAULT_DRAW_CAP: u64 = 1_000_000_000;
pub const MAX_BITS: u32 = 16;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("draw budget of {cap} permutations exceeded before the cycle completed")]
    DrawCapExceeded { cap: u64 },
    #[error("{0}-bit symbols cannot be packed into bytes; use 1, 2, 4 or 8")]
    UnsupportedPacking(u32),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error(transparent)]
    Permutation(#[from] PermutationError),
    #[error(transparent)]
    Lcg(#[from] LcgError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Hardware,
    Simulated { model: RuntimeModel },
}

impl Mode {
    pub fn simulated_default() -> Self {
        Self::Simulated {
            model: RuntimeModel::default(),
        }
    }

    pub fn is_hardware(&self) -> bool {
        matches!(self, Self::Hardware)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Array size N.
    pub size: usize,
    /// Successes per cycle, m.
    pub successes: u32,
    /// Output symbol width n; symbols live in `[0, 2^n)`.
    pub n_bits: u32,
    /// Reseed shift k.
    pub k_shift: u32,
    pub disordered: DataArray,
    pub mode: Mode,
    pub draw_cap: u64,
    pub multiplier: u64,
    pub increment: u64,
}

impl EngineConfig {
    /// Simulated mode with the default runtime model and default array.
    pub fn new(size: usize, successes: u32, n_bits: u32) -> Result<Self, EngineError> {
        let cfg = Self {
            size,
            successes,
            n_bits,
            k_shift: DEFAULT_SHIFT,
            disordered: DataArray::default_disordered(size)?,
            mode: Mode::simulated_default(),
            draw_cap: DEFAULT_DRAW_CAP,
            multiplier: DEFAULT_MULTIPLIER,
            increment: DEFAULT_INCREMENT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |s: String| Err(EngineError::Config(s));
        if !(MIN_SIZE..=MAX_SIZE).contains(&self.size) {
            return bad(format!("N = {} outside {MIN_SIZE}..={MAX_SIZE}", self.size));
        }
        if self.successes == 0 {
            return bad("m must be at least 1".into());
        }
        if !(1..=MAX_BITS).contains(&self.n_bits) {
            return bad(format!("n = {} outside 1..={MAX_BITS}", self.n_bits));
        }
        if self.k_shift >= 64 {
            return bad(format!("shift {} must be below 64", self.k_shift));
        }
        if self.disordered.len() != self.size {
            return bad(format!(
                "disordered array has {} elements, expected {}",
                self.disordered.len(),
                self.size
            ));
        }
        if self.disordered.is_sorted() {
            return bad("disordered array is already sorted".into());
        }
        if self.draw_cap == 0 {
            return bad("draw cap must be positive".into());
        }
        Lcg::with_constants(0, self.multiplier, self.increment)?;
        if let Mode::Simulated { model } = &self.mode {
            model.validate()?;
        }
        Ok(())
    }

    /// Per-draw success probability `1/N!`.
    pub fn success_probability(&self) -> f64 {
        1.0 / factorial(self.size) as f64
    }

    /// `M = m * N!`, the mean permutation count.
    pub fn characteristic_scale(&self) -> u64 {
        self.successes as u64 * factorial(self.size)
    }

    /// `R = 2^n`.
    pub fn modulus(&self) -> u64 {
        1 << self.n_bits
    }

    /// Set when `log2(M) <= n + 2`, outside the regime where residues are
    /// close to uniform.
    pub fn convergence_warning(&self) -> Option<String> {
        let log_m = (self.characteristic_scale() as f64).log2();
        (log_m <= self.n_bits as f64 + 2.0).then(|| {
            format!(
                "log2(M) = {log_m:.3} <= n + 2 = {}; residues will not be close to uniform",
                self.n_bits + 2
            )
        })
    }
}

/// Observables of one sorting cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleResult {
    pub n_p: u64,
    pub t: TickSpan,
    pub n_p_mod: u64,
    pub t_mod: u64,
}

#[inline]
pub fn modular_reduce(value: u64, n_bits: u32) -> u64 {
    debug_assert!((1..=MAX_BITS).contains(&n_bits));
    value & ((1u64 << n_bits) - 1)
}

/// One full cycle: draws until the `m`-th success, timed as a single span.
pub fn run_cycle(
    cfg: &EngineConfig,
    rng: &mut Lcg,
    clock: &mut TickSource,
) -> Result<CycleResult, EngineError> {
    let n = cfg.size;
    let target = cfg.successes;
    let cap = cfg.draw_cap;
    let disordered = cfg.disordered;
    let identity = Permutation::identity(n)?;

    let (n_p, t) = clock.measure(|meter| {
        let mut pad = identity;
        let mut draws = 0u64;
        let mut successes = 0u32;
        while successes < target {
            if draws == cap {
                return Err(EngineError::DrawCapExceeded { cap });
            }
            let q = Permutation::random_unchecked(n, rng);
            pad = pad.compose_unchecked(&q);
            draws += 1;
            meter.charge()?;
            if pad.sorts(&disordered) {
                successes += 1;
                pad = identity;
            }
        }
        Ok(draws)
    })?;

    Ok(CycleResult {
        n_p,
        t,
        n_p_mod: modular_reduce(n_p, cfg.n_bits),
        t_mod: modular_reduce(t.ticks(), cfg.n_bits),
    })
}

/// Packs `n_bits`-wide symbols into bytes, first symbol in the low bits.
pub fn pack_symbols(symbols: &[u64], n_bits: u32) -> Result<Vec<u8>, EngineError> {
    let per_byte = symbols_per_byte(n_bits)?;
    let mask = (1u64 << n_bits) - 1;
    Ok(symbols
        .chunks(per_byte)
        .map(|chunk| {
            chunk.iter().enumerate().fold(0u8, |b, (i, &s)| {
                b | (((s & mask) as u8) << (i as u32 * n_bits))
            })
        })
        .collect())
}

/// Inverse of [`pack_symbols`] for whole bytes.
pub fn unpack_symbols(bytes: &[u8], n_bits: u32) -> Result<Vec<u64>, EngineError> {
    let per_byte = symbols_per_byte(n_bits)?;
    let mask = (1u16 << n_bits) - 1;
    Ok(bytes
        .iter()
        .flat_map(|&b| {
            (0..per_byte).map(move |i| ((b as u16 >> (i as u32 * n_bits)) & mask) as u64)
        })
        .collect())
}

fn symbols_per_byte(n_bits: u32) -> Result<usize, EngineError> {
    match n_bits {
        1 | 2 | 4 | 8 => Ok(8 / n_bits as usize),
        other => Err(EngineError::UnsupportedPacking(other)),
    }
}

/// Audit record of an engine's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub initial_seed: u64,
    pub seed: u64,
    pub multiplier: u64,
    pub increment: u64,
    pub cycle_index: u64,
    pub config: EngineConfig,
}

/// An engine instance: one pad generator, one clock, one thread.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    lcg: Lcg,
    clock: TickSource,
    initial_seed: u64,
    cycles: u64,
}

impl Engine {
    /// Builds the clock from the configured mode. In simulated mode the
    /// runtime model draws from a ChaCha8 stream seeded with the same seed.
    pub fn new(config: EngineConfig, seed: u64) -> Result<Self, EngineError> {
        let clock = match &config.mode {
            Mode::Hardware => TickSource::Hardware,
            Mode::Simulated { model } => {
                TickSource::Simulated(SimulatedClock::new(model.clone(), seed)?)
            }
        };
        Self::with_clock(config, seed, clock)
    }

    /// Uses the given clock regardless of `config.mode`.
    pub fn with_clock(
        config: EngineConfig,
        seed: u64,
        clock: TickSource,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let lcg = Lcg::with_constants(seed, config.multiplier, config.increment)?;
        Ok(Self {
            config,
            lcg,
            clock,
            initial_seed: seed,
            cycles: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn lcg(&self) -> &Lcg {
        &self.lcg
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// One cycle without feedback; the pad generator simply advances.
    pub fn run_cycle(&mut self) -> Result<CycleResult, EngineError> {
        let r = run_cycle(&self.config, &mut self.lcg, &mut self.clock)?;
        self.cycles += 1;
        Ok(r)
    }

    /// One feedback step: run a cycle, then inject `t mod 2^n` into the seed
    /// with the shift-add rule. The cycle's `n_p_mod` is the output symbol.
    pub fn step(&mut self) -> Result<CycleResult, EngineError> {
        let r = self.run_cycle()?;
        self.lcg.reseed_shift_add(r.t_mod, self.config.k_shift)?;
        Ok(r)
    }

    pub fn next_symbol(&mut self) -> Result<u64, EngineError> {
        self.step().map(|r| r.n_p_mod)
    }

    pub fn symbols(&mut self, count: usize) -> Result<Vec<u64>, EngineError> {
        (0..count).map(|_| self.next_symbol()).collect()
    }

    /// Exactly `count` bytes of packed symbols.
    pub fn byte_stream(&mut self, count: usize) -> Result<Vec<u8>, EngineError> {
        let per_byte = symbols_per_byte(self.config.n_bits)?;
        let symbols = self.symbols(count * per_byte)?;
        pack_symbols(&symbols, self.config.n_bits)
    }

    /// Streams `count` bytes to `out` in 4 KiB blocks.
    pub fn write_bytes<W: Write>(&mut self, count: usize, out: &mut W) -> Result<(), EngineError> {
        symbols_per_byte(self.config.n_bits)?;
        let mut left = count;
        while left > 0 {
            let chunk = left.min(4096);
            out.write_all(&self.byte_stream(chunk)?)?;
            left -= chunk;
        }
        out.flush()?;
        Ok(())
    }

    pub fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            initial_seed: self.initial_seed,
            seed: self.lcg.seed(),
            multiplier: self.lcg.multiplier(),
            increment: self.lcg.increment(),
            cycle_index: self.cycles,
            config: self.config.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::MockSchedule;

    #[test]
    fn modular_reduce_examples() {
        assert_eq!(modular_reduce(77, 4), 13);
        assert_eq!(modular_reduce(46, 4), 14);
        assert_eq!(modular_reduce(0, 4), 0);
        assert_eq!(modular_reduce(u64::MAX, 16), 0xFFFF);
    }

    #[test]
    fn packing_examples() {
        assert_eq!(pack_symbols(&[13, 2], 4).unwrap(), vec![0x2D]);
        assert_eq!(pack_symbols(&[0xAB], 8).unwrap(), vec![0xAB]);
        assert_eq!(pack_symbols(&[], 4).unwrap(), Vec::<u8>::new());
        assert_eq!(
            pack_symbols(&[1, 0, 1, 1, 0, 0, 0, 1], 1).unwrap(),
            vec![0b1000_1101]
        );
        assert!(matches!(
            pack_symbols(&[1], 3),
            Err(EngineError::UnsupportedPacking(3))
        ));
        assert_eq!(unpack_symbols(&[0x2D], 4).unwrap(), vec![13, 2]);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::new(1, 1, 4).is_err());
        assert!(EngineConfig::new(4, 0, 4).is_err());
        assert!(EngineConfig::new(4, 1, 0).is_err());
        assert!(EngineConfig::new(4, 1, 17).is_err());
        let mut cfg = EngineConfig::new(4, 1, 4).unwrap();
        cfg.disordered = DataArray::new(&[0, 1, 2, 3]).unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = EngineConfig::new(4, 1, 4).unwrap();
        cfg.multiplier = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = EngineConfig::new(4, 1, 4).unwrap();
        cfg.mode = Mode::Simulated {
            model: RuntimeModel::Constant { ticks: 0 },
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_array_for_four() {
        let cfg = EngineConfig::new(4, 1, 4).unwrap();
        assert_eq!(cfg.disordered.as_slice(), &[3, 2, 0, 1]);
        assert_eq!(cfg.characteristic_scale(), 24);
    }

    #[test]
    fn convergence_warning_threshold() {
        // log2(24) = 4.58 <= 6 + 2
        assert!(EngineConfig::new(4, 1, 6)
            .unwrap()
            .convergence_warning()
            .is_some());
        // log2(96) = 6.58 > 4 + 2
        assert!(EngineConfig::new(4, 4, 4)
            .unwrap()
            .convergence_warning()
            .is_none());
    }

    #[test]
    fn cycle_invariants() {
        let cfg = EngineConfig::new(4, 3, 4).unwrap();
        let mut e = Engine::new(cfg, 5).unwrap();
        for _ in 0..200 {
            let r = e.run_cycle().unwrap();
            assert!(r.n_p >= 3);
            assert!(r.t.ticks() >= r.n_p);
            assert_eq!(r.n_p_mod, r.n_p % 16);
            assert_eq!(r.t_mod, r.t.ticks() % 16);
        }
        assert_eq!(e.cycles(), 200);
    }

    #[test]
    fn constant_runtime_gives_degenerate_sum() {
        let cfg = EngineConfig::new(4, 2, 4)
            .unwrap()
            .with_mode(Mode::Simulated {
                model: RuntimeModel::Constant { ticks: 3 },
            });
        let mut e = Engine::new(cfg, 11).unwrap();
        for _ in 0..500 {
            let r = e.run_cycle().unwrap();
            assert_eq!(r.t.ticks(), 3 * r.n_p);
        }
    }

    #[test]
    fn draw_cap_is_reported() {
        let mut cfg = EngineConfig::new(6, 5, 4).unwrap();
        cfg.draw_cap = 10;
        let mut e = Engine::new(cfg, 1).unwrap();
        assert!(matches!(
            e.run_cycle(),
            Err(EngineError::DrawCapExceeded { cap: 10 })
        ));
    }

    #[test]
    fn mock_exhaustion_propagates() {
        let cfg = EngineConfig::new(4, 1, 4).unwrap();
        let clock = TickSource::Mock(MockSchedule::repeat(1, 0).unwrap());
        let mut e = Engine::with_clock(cfg, 1, clock).unwrap();
        assert!(matches!(
            e.run_cycle(),
            Err(EngineError::Timing(TimingError::ScheduleExhausted { .. }))
        ));
    }

    #[test]
    fn mock_clock_streams_are_identical() {
        let cfg = EngineConfig::new(4, 1, 4).unwrap();
        let clock = || {
            TickSource::Mock(MockSchedule::new((0..100_000).map(|i| 1 + i % 5).collect()).unwrap())
        };
        let mut a = Engine::with_clock(cfg.clone(), 77, clock()).unwrap();
        let mut b = Engine::with_clock(cfg, 77, clock()).unwrap();
        assert_eq!(a.symbols(500).unwrap(), b.symbols(500).unwrap());
    }

    #[test]
    fn feedback_keeps_constants() {
        let cfg = EngineConfig::new(3, 4, 4).unwrap();
        let mut e = Engine::new(cfg, 0xABCD).unwrap();
        for _ in 0..1000 {
            e.next_symbol().unwrap();
            assert_eq!(e.lcg().multiplier(), DEFAULT_MULTIPLIER);
            assert_eq!(e.lcg().increment(), DEFAULT_INCREMENT);
        }
    }

    #[test]
    fn byte_stream_counts() {
        let cfg = EngineConfig::new(3, 2, 4).unwrap();
        let mut e = Engine::new(cfg.clone(), 3).unwrap();
        assert!(e.byte_stream(0).unwrap().is_empty());
        assert_eq!(e.byte_stream(37).unwrap().len(), 37);
        let mut bad = cfg;
        bad.n_bits = 5;
        let mut e = Engine::new(bad, 3).unwrap();
        assert!(matches!(
            e.byte_stream(1),
            Err(EngineError::UnsupportedPacking(5))
        ));
    }

    #[test]
    fn snapshot_serializes() {
        let cfg = EngineConfig::new(4, 4, 4).unwrap();
        let mut e = Engine::new(cfg, 0x5EED).unwrap();
        e.symbols(3).unwrap();
        let snap = e.snapshot();
        assert_eq!(snap.cycle_index, 3);
        assert_eq!(snap.initial_seed, 0x5EED);
        let json = serde_json::to_string(&snap).unwrap();
        let back: EngineSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, snap);
    }
}
