//! Uniformity validators for residue histograms: chi-square goodness of fit,
//! the most-common-value min-entropy bound, per-cell z-score residuals, and
//! Shannon entropy.

use serde::{Deserialize, Serialize};

use super::special::chi_square_sf;
use super::{Histogram, StatsError};

/// Upper 99% normal quantile used by the most-common-value bound.
pub const MCV_Z: f64 = 2.576;
pub const MCV_MIN_SAMPLES: u64 = 1000;

fn require(got: u64, needed: u64) -> Result<(), StatsError> {
    if got < needed {
        Err(StatsError::InsufficientSample { needed, got })
    } else {
        Ok(())
    }
}

/// Chi-square statistic and p-value against the uniform law on `cells`
/// residues, with `cells - 1` degrees of freedom.
pub fn chi_square_uniform(h: &Histogram, cells: usize) -> Result<(f64, f64), StatsError> {
    if cells < 2 {
        return Err(StatsError::Domain("need at least two cells".into()));
    }
    require(h.total(), 5 * cells as u64)?;
    let counts = h.cell_counts(cells)?;
    let expected = h.total() as f64 / cells as f64;
    let stat: f64 = counts
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    Ok((stat, chi_square_sf(stat, (cells - 1) as f64)))
}

/// Goodness of fit of observed counts to arbitrary expected counts, with
/// `observed.len() - 1 - fitted` degrees of freedom.
pub fn chi_square_gof(
    observed: &[f64],
    expected: &[f64],
    fitted: usize,
) -> Result<(f64, f64, usize), StatsError> {
    if observed.len() != expected.len() || observed.len() < 2 + fitted {
        return Err(StatsError::Domain("mismatched or too few cells".into()));
    }
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e.is_nan() || e <= 0.0 {
            return Err(StatsError::Domain(format!(
                "expected count {e} is not positive"
            )));
        }
        stat += (o - e) * (o - e) / e;
    }
    let df = observed.len() - 1 - fitted;
    Ok((stat, chi_square_sf(stat, df as f64), df))
}

/// `-log2(p_u)` where `p_u = min(1, p + 2.576 sqrt(p(1-p)/(n-1)))` and `p` is
/// the modal frequency; clamped to `[0, n_bits]`.
pub fn min_entropy_mcv(h: &Histogram, n_bits: u32) -> Result<f64, StatsError> {
    require(h.total(), MCV_MIN_SAMPLES)?;
    let n = h.total() as f64;
    let max = h.bins().values().copied().max().unwrap_or(0) as f64;
    let p_hat = max / n;
    let p_u = (p_hat + MCV_Z * (p_hat * (1.0 - p_hat) / (n - 1.0)).sqrt()).min(1.0);
    Ok((-p_u.log2()).clamp(0.0, n_bits as f64))
}

/// Shares of cells whose z-score `(O - E)/sqrt(E(1 - 1/R))` lies within 1, 2
/// and 3 standard deviations.
pub fn clt_residuals(h: &Histogram, cells: usize) -> Result<[f64; 3], StatsError> {
    if cells < 2 {
        return Err(StatsError::Domain("need at least two cells".into()));
    }
    require(h.total(), 5 * cells as u64)?;
    let counts = h.cell_counts(cells)?;
    let expected = h.total() as f64 / cells as f64;
    let sd = (expected * (1.0 - 1.0 / cells as f64)).sqrt();
    let mut within = [0usize; 3];
    for &o in &counts {
        let z = ((o as f64 - expected) / sd).abs();
        for (s, w) in within.iter_mut().enumerate() {
            if z <= (s + 1) as f64 {
                *w += 1;
            }
        }
    }
    Ok(within.map(|w| w as f64 / cells as f64))
}

pub fn shannon_entropy(h: &Histogram) -> f64 {
    let n = h.total() as f64;
    h.bins()
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.log2()
        })
        .sum()
}

pub fn shannon_entropy_pmf(pmf: &[f64]) -> f64 {
    pmf.iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| -q * q.log2())
        .sum()
}

/// All validators over one residue histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub n_bits: u32,
    pub cells: usize,
    pub total: u64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub min_entropy_bits: f64,
    pub shannon_entropy_bits: f64,
    pub clt_fraction_within: [f64; 3],
    pub residue_mean: f64,
}

impl UniformityReport {
    pub fn evaluate(h: &Histogram, n_bits: u32) -> Result<Self, StatsError> {
        let cells = 1usize << n_bits;
        let (chi_square, p_value) = chi_square_uniform(h, cells)?;
        Ok(Self {
            n_bits,
            cells,
            total: h.total(),
            chi_square,
            degrees_of_freedom: cells - 1,
            p_value,
            min_entropy_bits: min_entropy_mcv(h, n_bits)?,
            shannon_entropy_bits: shannon_entropy(h),
            clt_fraction_within: clt_residuals(h, cells)?,
            residue_mean: h.mean(),
        })
    }

    pub fn verdict(&self) -> Verdict {
        Verdict::classify(self.p_value, self.min_entropy_bits, self.n_bits)
    }
}

/// Uniformity grade of a residue stream.
///
/// Excellent: chi-square p > 0.01 and min-entropy >= n - 0.1 bits.
/// Good: p > 0.001 and min-entropy >= n - 0.25 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Fail,
    Good,
    Excellent,
}

impl Verdict {
    pub fn classify(p_value: f64, min_entropy_bits: f64, n_bits: u32) -> Self {
        let n = n_bits as f64;
        if p_value > 0.01 && min_entropy_bits >= n - 0.1 {
            Self::Excellent
        } else if p_value > 0.001 && min_entropy_bits >= n - 0.25 {
            Self::Good
        } else {
            Self::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fail => "Fail",
            Self::Good => "Good",
            Self::Excellent => "Excellent",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Fail" => Ok(Self::Fail),
            "Good" => Ok(Self::Good),
            "Excellent" => Ok(Self::Excellent),
            _ => Err(StatsError::Format(format!("unknown verdict {s}"))),
        }
    }
}
