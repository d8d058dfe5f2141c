use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Integer-valued bin counts. Serializes as
/// `{"bins": {"<value>": count, ..}, "total": n}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHistogram")]
pub struct Histogram {
    bins: BTreeMap<u64, u64>,
    total: u64,
}

#[derive(Deserialize)]
struct RawHistogram {
    bins: BTreeMap<u64, u64>,
    total: u64,
}

impl TryFrom<RawHistogram> for Histogram {
    type Error = StatsError;

    fn try_from(raw: RawHistogram) -> Result<Self, Self::Error> {
        let sum: u64 = raw.bins.values().sum();
        if sum != raw.total {
            return Err(StatsError::Format(format!(
                "total {} does not match bin sum {sum}",
                raw.total
            )));
        }
        Ok(Self {
            bins: raw.bins,
            total: raw.total,
        })
    }
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts for values `0..counts.len()`.
    pub fn from_cells(counts: &[u64]) -> Self {
        let mut h = Self::new();
        for (v, &c) in counts.iter().enumerate() {
            h.add_count(v as u64, c);
        }
        h
    }

    #[inline]
    pub fn add(&mut self, value: u64) {
        self.add_count(value, 1);
    }

    pub fn add_count(&mut self, value: u64, count: u64) {
        if count > 0 {
            *self.bins.entry(value).or_insert(0) += count;
            self.total += count;
        }
    }

    pub fn count(&self, value: u64) -> u64 {
        self.bins.get(&value).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bins(&self) -> &BTreeMap<u64, u64> {
        &self.bins
    }

    pub fn max_value(&self) -> Option<u64> {
        self.bins.keys().next_back().copied()
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        self.bins
            .iter()
            .map(|(&v, &c)| v as f64 * c as f64)
            .sum::<f64>()
            / self.total as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.bins
            .iter()
            .map(|(&v, &c)| c as f64 * (v as f64 - mean).powi(2))
            .sum::<f64>()
            / self.total as f64
    }

    /// Most frequent value, smallest on ties.
    pub fn mode(&self) -> Option<u64> {
        let max = self.bins.values().max()?;
        self.bins.iter().find(|(_, c)| *c == max).map(|(&v, _)| v)
    }

    /// Dense counts for `0..cells`; fails if any value falls outside.
    pub fn cell_counts(&self, cells: usize) -> Result<Vec<u64>, StatsError> {
        let mut out = vec![0u64; cells];
        for (&v, &c) in &self.bins {
            let slot = out
                .get_mut(v as usize)
                .ok_or(StatsError::ValueOutOfRange { value: v, cells })?;
            *slot = c;
        }
        Ok(out)
    }

    /// `value,count` rows in ascending order. With `cells`, every value in
    /// `0..cells` is written, zeros included.
    pub fn to_csv(&self, cells: Option<usize>) -> String {
        let mut out = String::from("value,count\n");
        match cells {
            Some(r) => {
                for v in 0..r as u64 {
                    let _ = writeln!(out, "{v},{}", self.count(v));
                }
                for (&v, &c) in self.bins.range(r as u64..) {
                    let _ = writeln!(out, "{v},{c}");
                }
            }
            None => {
                for (&v, &c) in &self.bins {
                    let _ = writeln!(out, "{v},{c}");
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, StatsError> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("value,count") => {}
            other => return Err(StatsError::Format(format!("bad CSV header {other:?}"))),
        }
        let mut h = Self::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse = || -> Option<(u64, u64)> {
                let (v, c) = line.split_once(',')?;
                Some((v.trim().parse().ok()?, c.trim().parse().ok()?))
            };
            let (v, c) = parse()
                .ok_or_else(|| StatsError::Format(format!("bad CSV row {}: {line}", i + 2)))?;
            h.add_count(v, c);
        }
        Ok(h)
    }
}

impl FromIterator<u64> for Histogram {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut h = Self::new();
        for v in iter {
            h.add(v);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn summary_statistics() {
        let h: Histogram = [1, 2, 2, 3, 3, 3].into_iter().collect();
        assert_eq!(h.total(), 6);
        assert_eq!(h.mode(), Some(3));
        assert!((h.mean() - 14.0 / 6.0).abs() < 1e-12);
        assert_eq!(h.cell_counts(4).unwrap(), vec![0, 1, 2, 3]);
        assert!(matches!(
            h.cell_counts(3),
            Err(StatsError::ValueOutOfRange { value: 3, cells: 3 })
        ));
    }

    #[test]
    fn csv_fills_missing_residues() {
        let h: Histogram = [0, 2, 2].into_iter().collect();
        assert_eq!(h.to_csv(Some(4)), "value,count\n0,1\n1,0\n2,2\n3,0\n");
        assert_eq!(h.to_csv(None), "value,count\n0,1\n2,2\n");
    }

    #[test]
    fn json_uses_string_keys_and_checks_total() {
        let h: Histogram = [5, 5, 7].into_iter().collect();
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, r#"{"bins":{"5":2,"7":1},"total":3}"#);
        assert!(serde_json::from_str::<Histogram>(r#"{"bins":{"5":2},"total":3}"#).is_err());
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(Histogram::from_csv("v,c\n1,2\n").is_err());
        assert!(Histogram::from_csv("value,count\n1;2\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_and_json_agree(values in proptest::collection::vec(0u64..300, 0..400)) {
            let h: Histogram = values.into_iter().collect();
            let from_csv = Histogram::from_csv(&h.to_csv(Some(64))).unwrap();
            let from_json: Histogram = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
            prop_assert_eq!(&from_csv, &h);
            prop_assert_eq!(&from_json, &from_csv);
        }
    }
}
