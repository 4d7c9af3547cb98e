//! Holding-time weighted samples of a jump process.

use thiserror::Error;

use crate::lattice::CountVector;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("sample has length {got}, trace dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weights must be finite and positive, got {0}")]
    BadWeight(f64),
}

/// Receives one `(state before the jump, holding time)` pair per jump.
pub trait TraceSink {
    fn push(&mut self, state: &[u32], weight: f64);
}

/// Discards everything; useful for burn-in.
#[derive(Clone, Copy, Debug, Default)]
pub struct Discard;

impl TraceSink for Discard {
    #[inline]
    fn push(&mut self, _state: &[u32], _weight: f64) {}
}

impl<S: TraceSink + ?Sized> TraceSink for &mut S {
    #[inline]
    fn push(&mut self, state: &[u32], weight: f64) {
        (**self).push(state, weight);
    }
}

/// Samples stored contiguously, row `t` holding the state of sample `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTrace {
    dim: usize,
    states: Vec<u32>,
    weights: Vec<f64>,
}

impl WeightedTrace {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            states: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            states: Vec::with_capacity(dim * n),
            weights: Vec::with_capacity(n),
        }
    }

    /// Validating constructor from explicit samples.
    pub fn from_samples<I, S>(dim: usize, samples: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<[u32]>,
    {
        let mut trace = Self::new(dim);
        for (s, w) in samples {
            trace.try_push(s.as_ref(), w)?;
        }
        Ok(trace)
    }

    pub fn try_push(&mut self, state: &[u32], weight: f64) -> Result<(), TraceError> {
        if state.len() != self.dim {
            return Err(TraceError::DimensionMismatch {
                expected: self.dim,
                got: state.len(),
            });
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(TraceError::BadWeight(weight));
        }
        self.states.extend_from_slice(state);
        self.weights.push(weight);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clear(&mut self) {
        self.states.clear();
        self.weights.clear();
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn state(&self, t: usize) -> &[u32] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.weights[t]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[u32], f64)> + '_ {
        // chunks_exact yields nothing useful for dim 0, so go by index
        (0..self.len()).map(move |t| (self.state(t), self.weights[t]))
    }

    pub fn samples(&self) -> Vec<(CountVector, f64)> {
        self.iter().map(|(s, w)| (CountVector::from(s), w)).collect()
    }
}

impl TraceSink for WeightedTrace {
    #[inline]
    fn push(&mut self, state: &[u32], weight: f64) {
        debug_assert_eq!(state.len(), self.dim);
        debug_assert!(weight >= 0.0);
        self.states.extend_from_slice(state);
        self.weights.push(weight);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validating_push() {
        let mut t = WeightedTrace::new(2);
        assert!(t.try_push(&[1, 2], 0.5).is_ok());
        assert_eq!(
            t.try_push(&[1], 0.5),
            Err(TraceError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(t.try_push(&[1, 2], 0.0), Err(TraceError::BadWeight(0.0)));
        assert_eq!(t.len(), 1);
        assert_eq!(t.state(0), &[1, 2]);
        assert_eq!(t.total_weight(), 0.5);
    }
}
