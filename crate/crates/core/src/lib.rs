//! Random permutation sorting as an entropy source.
//!
//! A sorting cycle draws uniform permutations until a disordered array has
//! been sorted `m` times. The number of draws `n_p` and the elapsed ticks `t`
//! are the cycle's observables; reduced modulo `2^n` they become close to
//! uniform `n`-bit symbols once `m * N!` is large relative to `2^n`. Feeding
//! `t mod 2^n` back into the pad generator's seed closes the loop into a
//! self-reseeding generator.

pub mod cli;
pub mod engine;
pub mod permutation;
pub mod prng;
pub mod statistics;
pub mod timing;

pub use engine::{CycleResult, Engine, EngineConfig, EngineError, Mode};
pub use permutation::{DataArray, Permutation};
pub use prng::{Lcg, WordSource};
pub use timing::{RuntimeModel, TickSource, TickSpan};
