//! Permutation arithmetic on the symmetric group S_N for small N.
//!
//! A [`Permutation`] acts on a [`DataArray`] by position gather:
//! `apply(p, a)[i] = a[p[i]]`. Under this convention `p.compose(&q)` is
//! "apply `p`, then apply `q`", so a running pad built as
//! `pad = pad.compose(&next)` is the left-to-right product of its draws.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prng::WordSource;

/// Smallest supported array size.
pub const MIN_SIZE: usize = 2;
/// Largest supported array size; 12! still fits comfortably in a `u64`.
pub const MAX_SIZE: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermutationError {
    #[error("array size {0} is outside the supported range {MIN_SIZE}..={MAX_SIZE}")]
    SizeOutOfRange(usize),
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("mapping is not a bijection on 0..{0}")]
    NotBijection(usize),
    #[error("data array values must be pairwise distinct")]
    DuplicateValues,
}

fn check_size(n: usize) -> Result<(), PermutationError> {
    if (MIN_SIZE..=MAX_SIZE).contains(&n) {
        Ok(())
    } else {
        Err(PermutationError::SizeOutOfRange(n))
    }
}

/// Exact `n!` for `n <= 20`.
pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// A bijection on `{0, .., N-1}` stored inline.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Permutation {
    len: u8,
    map: [u8; MAX_SIZE],
}

impl Permutation {
    pub fn identity(n: usize) -> Result<Self, PermutationError> {
        check_size(n)?;
        Ok(Self::identity_unchecked(n))
    }

    fn identity_unchecked(n: usize) -> Self {
        // Slots past `n` stay zero so derived equality only sees the mapping.
        let mut map = [0u8; MAX_SIZE];
        for (i, slot) in map.iter_mut().take(n).enumerate() {
            *slot = i as u8;
        }
        Self { len: n as u8, map }
    }

    /// Builds a permutation from its image table, rejecting non-bijections.
    pub fn from_mapping(mapping: &[usize]) -> Result<Self, PermutationError> {
        let n = mapping.len();
        check_size(n)?;
        let mut seen = [false; MAX_SIZE];
        let mut map = [0u8; MAX_SIZE];
        for (i, &v) in mapping.iter().enumerate() {
            if v >= n || seen[v] {
                return Err(PermutationError::NotBijection(n));
            }
            seen[v] = true;
            map[i] = v as u8;
        }
        Ok(Self { len: n as u8, map })
    }

    /// Uniformly random element of S_N via Fisher–Yates.
    ///
    /// Starting from the identity, for `i = N-1` down to `1` draw
    /// `j = next_bounded(i + 1)` and swap positions `i` and `j`. Each of the
    /// `N!` outcomes corresponds to exactly one draw sequence, so the result is
    /// exactly uniform whenever the bounded draws are.
    pub fn random<S: WordSource + ?Sized>(
        n: usize,
        source: &mut S,
    ) -> Result<Self, PermutationError> {
        check_size(n)?;
        Ok(Self::random_unchecked(n, source))
    }

    #[inline]
    pub(crate) fn random_unchecked<S: WordSource + ?Sized>(n: usize, source: &mut S) -> Self {
        let mut p = Self::identity_unchecked(n);
        for i in (1..n).rev() {
            let j = source.next_bounded(i as u64 + 1) as usize;
            p.map.swap(i, j);
        }
        p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.map[..self.len()]
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.as_slice().iter().map(|&v| v as usize).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.as_slice()
            .iter()
            .enumerate()
            .all(|(i, &v)| i == v as usize)
    }

    /// `result[i] = self[other[i]]`; applying the result equals applying
    /// `self` and then `other`.
    pub fn compose(&self, other: &Self) -> Result<Self, PermutationError> {
        if self.len != other.len {
            return Err(PermutationError::SizeMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(self.compose_unchecked(other))
    }

    #[inline]
    pub(crate) fn compose_unchecked(&self, other: &Self) -> Self {
        let mut map = [0u8; MAX_SIZE];
        for (slot, &j) in map.iter_mut().zip(other.as_slice()) {
            *slot = self.map[j as usize];
        }
        Self { len: self.len, map }
    }

    pub fn inverse(&self) -> Self {
        let mut map = [0u8; MAX_SIZE];
        for i in 0..self.len() {
            map[self.map[i] as usize] = i as u8;
        }
        Self { len: self.len, map }
    }

    /// Position gather: `result[i] = a[self[i]]`.
    pub fn apply(&self, a: &DataArray) -> Result<DataArray, PermutationError> {
        if self.len() != a.len() {
            return Err(PermutationError::SizeMismatch {
                left: self.len(),
                right: a.len(),
            });
        }
        let mut values = [0i64; MAX_SIZE];
        for (slot, &j) in values.iter_mut().zip(self.as_slice()) {
            *slot = a.values[j as usize];
        }
        Ok(DataArray {
            len: self.len,
            values,
        })
    }

    /// Equivalent to `is_sorted(&self.apply(a)?)` without materializing the
    /// gathered array. Sizes must already agree.
    #[inline]
    pub(crate) fn sorts(&self, a: &DataArray) -> bool {
        let n = self.len();
        let mut prev = a.values[self.map[0] as usize];
        for i in 1..n {
            let cur = a.values[self.map[i] as usize];
            if cur <= prev {
                return false;
            }
            prev = cur;
        }
        true
    }

    /// Every element of S_N in lexicographic order of the image table.
    pub fn all(n: usize) -> Result<Vec<Self>, PermutationError> {
        check_size(n)?;
        let mut out = Vec::with_capacity(factorial(n) as usize);
        let mut current: Vec<usize> = (0..n).collect();
        loop {
            out.push(Self::from_mapping(&current)?);
            // next lexicographic permutation
            let Some(i) = (0..n - 1).rev().find(|&i| current[i] < current[i + 1]) else {
                break;
            };
            let j = (i + 1..n).rev().find(|&j| current[j] > current[i]).unwrap();
            current.swap(i, j);
            current[i + 1..].reverse();
        }
        Ok(out)
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Serialize for Permutation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(deserializer)?;
        Self::from_mapping(&v).map_err(serde::de::Error::custom)
    }
}

/// An array of pairwise distinct integers whose sorting is the success event.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct DataArray {
    len: u8,
    values: [i64; MAX_SIZE],
}

impl DataArray {
    pub fn new(values: &[i64]) -> Result<Self, PermutationError> {
        let n = values.len();
        check_size(n)?;
        for i in 0..n {
            if values[i + 1..].contains(&values[i]) {
                return Err(PermutationError::DuplicateValues);
            }
        }
        let mut buf = [0i64; MAX_SIZE];
        buf[..n].copy_from_slice(values);
        Ok(Self {
            len: n as u8,
            values: buf,
        })
    }

    /// `{3, 2, 0, 1}` for N = 4, otherwise the descending array `N-1, .., 0`.
    pub fn default_disordered(n: usize) -> Result<Self, PermutationError> {
        if n == 4 {
            return Self::new(&[3, 2, 0, 1]);
        }
        check_size(n)?;
        let values: Vec<i64> = (0..n as i64).rev().collect();
        Self::new(&values)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.values[..self.len()]
    }

    /// Strictly ascending.
    pub fn is_sorted(&self) -> bool {
        self.as_slice().windows(2).all(|w| w[0] < w[1])
    }
}

impl fmt::Debug for DataArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Serialize for DataArray {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DataArray {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<i64>::deserialize(deserializer)?;
        Self::new(&v).map_err(serde::de::Error::custom)
    }
}

pub fn is_sorted(a: &DataArray) -> bool {
    a.is_sorted()
}
