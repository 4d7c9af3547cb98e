//! Count vectors and rectangular boxes of count vectors.

use std::fmt;
use std::ops::{Deref, DerefMut};

/// A vector of non-negative event counts, one entry per component.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountVector(Vec<u32>);

impl CountVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0; d])
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).sum()
    }
}

impl From<Vec<u32>> for CountVector {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

impl From<&[u32]> for CountVector {
    fn from(v: &[u32]) -> Self {
        Self(v.to_vec())
    }
}

impl Deref for CountVector {
    type Target = [u32];
    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl DerefMut for CountVector {
    fn deref_mut(&mut self) -> &mut [u32] {
        &mut self.0
    }
}

impl fmt::Display for CountVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// The box `{0..=max_1} x ... x {0..=max_d}`, indexed in row-major order
/// (last component varies fastest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateBox {
    maxima: Vec<u32>,
    strides: Vec<usize>,
    volume: usize,
}

impl StateBox {
    /// Returns `None` when the volume overflows `usize`.
    pub fn new(maxima: Vec<u32>) -> Option<Self> {
        let d = maxima.len();
        let mut strides = vec![0; d];
        let mut volume: usize = 1;
        for k in (0..d).rev() {
            strides[k] = volume;
            volume = volume.checked_mul(maxima[k] as usize + 1)?;
        }
        Some(Self {
            maxima,
            strides,
            volume,
        })
    }

    pub fn dim(&self) -> usize {
        self.maxima.len()
    }

    pub fn maxima(&self) -> &[u32] {
        &self.maxima
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn contains(&self, y: &[u32]) -> bool {
        y.len() == self.maxima.len() && y.iter().zip(&self.maxima).all(|(a, b)| a <= b)
    }

    pub fn index_of(&self, y: &[u32]) -> Option<usize> {
        if !self.contains(y) {
            return None;
        }
        Some(y.iter().zip(&self.strides).map(|(&c, &s)| c as usize * s).sum())
    }

    /// Writes the state with flat index `idx` into `out`.
    pub fn state_into(&self, mut idx: usize, out: &mut [u32]) {
        debug_assert!(idx < self.volume);
        for (k, &s) in self.strides.iter().enumerate() {
            out[k] = (idx / s) as u32;
            idx %= s;
        }
    }

    pub fn state(&self, idx: usize) -> CountVector {
        let mut out = vec![0; self.dim()];
        self.state_into(idx, &mut out);
        CountVector(out)
    }

    /// Index of `y + e_i` given the index of `y`, if it stays in the box.
    pub fn step_up(&self, idx: usize, y: &[u32], i: usize) -> Option<usize> {
        (y[i] < self.maxima[i]).then(|| idx + self.strides[i])
    }

    /// Index of `y - e_i` given the index of `y`, if `y_i >= 1`.
    pub fn step_down(&self, idx: usize, y: &[u32], i: usize) -> Option<usize> {
        (y[i] > 0).then(|| idx - self.strides[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = CountVector> + '_ {
        (0..self.volume).map(move |idx| self.state(idx))
    }
}
