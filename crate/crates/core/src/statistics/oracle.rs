//! Exact laws of the cycle observables: the negative binomial count, its
//! wrapped residues, and the compound elapsed-time moments and tail bound.

use super::special::ln_gamma;
use super::StatsError;
use crate::timing::RuntimeModel;

/// Neglected tail mass allowed when truncating infinite sums.
pub const TRUNCATION_TOLERANCE: f64 = 1e-12;
/// Upper limit on terms visited by any truncated sum.
pub const ITERATION_CAP: u64 = 100_000_000;
/// Largest tick value a finite runtime model may take for exact convolution.
pub const MAX_CONVOLUTION_SUPPORT: u64 = 64;
const MAX_CONVOLUTION_LEN: u64 = 10_000_000;

fn check_probability(p: f64) -> Result<(), StatsError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(StatsError::Domain(format!(
            "success probability {p} outside (0, 1]"
        )))
    }
}

fn check_successes(m: u64) -> Result<(), StatsError> {
    if m == 0 {
        Err(StatsError::Domain("m must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `ln C(k-1, m-1)`; exact product form for small `m`.
fn ln_binomial_km(k: u64, m: u64) -> f64 {
    if m == 1 {
        return 0.0;
    }
    if m <= 64 {
        let base = (k - m) as f64;
        (1..m).map(|i| ((base + i as f64) / i as f64).ln()).sum()
    } else {
        ln_gamma(k as f64) - ln_gamma(m as f64) - ln_gamma((k - m + 1) as f64)
    }
}

/// `ln Pr[n_p = k]` for trials-until-the-`m`-th-success.
pub fn negbin_ln_pmf(k: u64, m: u64, p: f64) -> Result<f64, StatsError> {
    check_successes(m)?;
    check_probability(p)?;
    if k < m {
        return Err(StatsError::Domain(format!("k = {k} below m = {m}")));
    }
    if p == 1.0 {
        return Ok(if k == m { 0.0 } else { f64::NEG_INFINITY });
    }
    let failures = (k - m) as f64;
    Ok(ln_binomial_km(k, m) + failures * (-p).ln_1p() + m as f64 * p.ln())
}

/// `Pr[n_p = k] = C(k-1, m-1) (1-p)^(k-m) p^m`, evaluated in log space.
pub fn negbin_pmf(k: u64, m: u64, p: f64) -> Result<f64, StatsError> {
    negbin_ln_pmf(k, m, p).map(f64::exp)
}

/// Mean `m/p` and variance `m(1-p)/p^2`.
pub fn negbin_moments(m: u64, p: f64) -> Result<(f64, f64), StatsError> {
    check_successes(m)?;
    check_probability(p)?;
    let m = m as f64;
    Ok((m / p, m * (1.0 - p) / (p * p)))
}

/// Visits `(k, pmf(k))` for `k = m, m+1, ..` until the remaining tail is below
/// [`TRUNCATION_TOLERANCE`].
///
/// Past the mode the ratio `pmf(k+1)/pmf(k) = (1-p) k/(k-m+1)` is below one
/// and decreasing, so the tail after `k` is at most `pmf(k) r/(1-r)`.
fn for_each_truncated(m: u64, p: f64, mut visit: impl FnMut(u64, f64)) -> Result<(), StatsError> {
    check_successes(m)?;
    check_probability(p)?;
    if p == 1.0 {
        visit(m, 1.0);
        return Ok(());
    }
    let mut k = m;
    loop {
        let pk = negbin_pmf(k, m, p)?;
        visit(k, pk);
        let ratio = (1.0 - p) * k as f64 / (k - m + 1) as f64;
        if ratio < 1.0 && pk * ratio / (1.0 - ratio) < TRUNCATION_TOLERANCE {
            return Ok(());
        }
        k += 1;
        if k - m >= ITERATION_CAP {
            return Err(StatsError::TruncationCap {
                terms: ITERATION_CAP,
            });
        }
    }
}

/// Exact residue law `S_r = sum_s Pr[n_p = r + sR]` for `R = modulus`.
pub fn wrapped_residue_pmf(m: u64, p: f64, modulus: usize) -> Result<Vec<f64>, StatsError> {
    if !modulus.is_power_of_two() || modulus > 1 << 16 {
        return Err(StatsError::Domain(format!(
            "modulus {modulus} is not a power of two up to 2^16"
        )));
    }
    let mask = modulus as u64 - 1;
    let mut residues = vec![0.0; modulus];
    for_each_truncated(m, p, |k, pk| residues[(k & mask) as usize] += pk)?;
    Ok(residues)
}

/// `max_r |S_r - 1/R|`.
pub fn max_uniform_deviation(pmf: &[f64]) -> f64 {
    let u = 1.0 / pmf.len() as f64;
    pmf.iter().map(|s| (s - u).abs()).fold(0.0, f64::max)
}

/// Moments of `T = X_1 + .. + X_{n_p}` with i.i.d. per-draw costs:
/// `E[T] = (m/p) mu`, `Var(T) = (m/p) var + m(1-p)/p^2 mu^2`.
pub fn compound_time_moments(
    m: u64,
    p: f64,
    mu_x: f64,
    var_x: f64,
) -> Result<(f64, f64), StatsError> {
    if mu_x.is_nan() || mu_x <= 0.0 || var_x.is_nan() || var_x < 0.0 {
        return Err(StatsError::Domain(format!(
            "runtime mean {mu_x} must be positive and variance {var_x} non-negative"
        )));
    }
    let (mean_n, var_n) = negbin_moments(m, p)?;
    Ok((mean_n * mu_x, mean_n * var_x + var_n * mu_x * mu_x))
}

/// `Pr[X_1 + .. + X_k > t]` for i.i.d. draws of `model`.
pub fn runtime_sum_tail(model: &RuntimeModel, k: u64, t: u64) -> Result<f64, StatsError> {
    model
        .validate()
        .map_err(|e| StatsError::Domain(e.to_string()))?;
    match model {
        RuntimeModel::GeometricShifted { p, offset } => {
            // The sum is k*offset plus the failures before the k-th success.
            let floor = k * offset;
            if t < floor {
                return Ok(1.0);
            }
            if k == 0 {
                return Ok(0.0);
            }
            let slack = t - floor;
            if slack >= ITERATION_CAP {
                return Err(StatsError::TruncationCap {
                    terms: ITERATION_CAP,
                });
            }
            let mut cdf = 0.0;
            for trials in k..=k + slack {
                cdf += negbin_pmf(trials, k, *p)?;
            }
            Ok((1.0 - cdf).max(0.0))
        }
        _ => {
            let pmf = model.finite_pmf().expect("finite model");
            let lo = pmf.first().unwrap().0;
            let hi = pmf.last().unwrap().0;
            if hi > MAX_CONVOLUTION_SUPPORT {
                return Err(StatsError::SupportOverflow {
                    max_ticks: hi,
                    limit: MAX_CONVOLUTION_SUPPORT,
                });
            }
            if t < k * lo {
                return Ok(1.0);
            }
            if t >= k * hi {
                return Ok(0.0);
            }
            let len = k * hi + 1;
            if len > MAX_CONVOLUTION_LEN {
                return Err(StatsError::SupportOverflow {
                    max_ticks: k * hi,
                    limit: MAX_CONVOLUTION_LEN,
                });
            }
            let mut dist = vec![0.0; len as usize];
            dist[0] = 1.0;
            let mut reach = 0usize;
            for _ in 0..k {
                let mut next = vec![0.0; len as usize];
                for (s, &w) in dist[..=reach].iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for &(x, q) in &pmf {
                        next[s + x as usize] += w * q;
                    }
                }
                reach += hi as usize;
                dist = next;
            }
            Ok(dist[t as usize + 1..].iter().sum::<f64>().min(1.0))
        }
    }
}

/// `Pr[T > t] >= Pr[n_p = k] Pr[X_1 + .. + X_k > t]` for any `k >= m`.
pub fn tail_lower_bound(
    m: u64,
    p: f64,
    model: &RuntimeModel,
    k: u64,
    t: u64,
) -> Result<f64, StatsError> {
    let head = negbin_pmf(k, m, p)?;
    Ok(head * runtime_sum_tail(model, k, t)?)
}

/// Inverse-CDF sampler over a finite probability vector.
#[derive(Debug, Clone)]
pub struct DiscreteSampler {
    cdf: Vec<f64>,
}

impl DiscreteSampler {
    pub fn new(pmf: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|&q| {
                acc += q;
                acc
            })
            .collect();
        Self { cdf }
    }

    /// Index for a uniform `u` in `[0, 1)`.
    pub fn index(&self, u: f64) -> usize {
        let scaled = u * self.cdf.last().copied().unwrap_or(1.0);
        self.cdf
            .partition_point(|&c| c <= scaled)
            .min(self.cdf.len() - 1)
    }
}
