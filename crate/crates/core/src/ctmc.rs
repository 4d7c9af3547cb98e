//! Nearest-neighbour continuous-time Markov chain baselines.
//!
//! Both samplers move between count vectors that differ by one standard
//! basis vector and are simulated with the race-of-exponentials method:
//! hold for an `Exp(total rate)` time, then jump to a neighbour chosen in
//! proportion to its rate.
//!
//! * Birth-death: birth rate `m^-1 f(y + e_i)/f(y)`, death rate `m^-1 y_i`.
//! * Zanella process: rate `bal(pi(y')/pi(y))` towards each neighbour `y'`,
//!   for a balancing function `bal` with `bal(z) = z bal(1/z)`.

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::pps::pick;
use crate::targets::{FieldCache, Target, TargetError};
use crate::trace::{Discard, TraceSink, WeightedTrace};

#[derive(Debug, Error)]
pub enum CtmcError {
    #[error("absorbing state: every transition rate is zero")]
    Absorbing,
    #[error("window length must be positive and finite, got {0}")]
    BadWindow(f64),
    #[error("frozen mask has length {got}, expected {expected}")]
    MaskMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Target(#[from] TargetError),
}

/// Locally balanced functions used for the Zanella proposals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Balancing {
    /// `z^(1/2)`
    Sqrt,
    /// `min(1, z)`
    Min1,
    /// `z / (1 + z)`
    Ratio,
}

impl Balancing {
    pub const ALL: [Balancing; 3] = [Balancing::Sqrt, Balancing::Min1, Balancing::Ratio];

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Self::Sqrt => z.sqrt(),
            Self::Min1 => z.min(1.0),
            Self::Ratio => {
                if z.is_infinite() {
                    1.0
                } else {
                    z / (1.0 + z)
                }
            }
        }
    }

    /// `log bal(exp(log_z))`, stable over the whole extended real line.
    #[inline]
    pub fn log_apply(self, log_z: f64) -> f64 {
        match self {
            Self::Sqrt => 0.5 * log_z,
            Self::Min1 => log_z.min(0.0),
            // -log(1 + exp(-log_z))
            Self::Ratio => {
                if log_z == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else if log_z > 0.0 {
                    -(-log_z).exp().ln_1p()
                } else {
                    log_z - log_z.exp().ln_1p()
                }
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::Sqrt => "sqrt",
            Self::Min1 => "min",
            Self::Ratio => "ratio",
        }
    }
}

/// Birth (`up`) and death (`down`) rates out of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct RateVector {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl RateVector {
    pub fn zeros(d: usize) -> Self {
        Self {
            up: vec![0.0; d],
            down: vec![0.0; d],
        }
    }

    pub fn total(&self) -> f64 {
        self.up.iter().sum::<f64>() + self.down.iter().sum::<f64>()
    }
}

/// Which neighbour-jump chain to run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CtmcKind {
    /// Birth-death process with base intensity `1/m`.
    BirthDeath { m: f64 },
    Zanella(Balancing),
}

impl CtmcKind {
    pub const BIRTH_DEATH: CtmcKind = CtmcKind::BirthDeath { m: 1.0 };

    /// Fills `out` with the rates out of `y`. Frozen components get zero
    /// rates in both directions.
    #[inline]
    pub fn fill_rates<T: Target + ?Sized>(
        &self,
        target: &T,
        y: &[u32],
        cache: &FieldCache,
        frozen: Option<&[bool]>,
        out: &mut RateVector,
    ) {
        for i in 0..y.len() {
            if frozen.is_some_and(|f| f[i]) {
                out.up[i] = 0.0;
                out.down[i] = 0.0;
                continue;
            }
            let yi = f64::from(y[i]);
            match *self {
                CtmcKind::BirthDeath { m } => {
                    out.up[i] = cache.log_ratio_up(target, y, i).exp() / m;
                    out.down[i] = yi / m;
                }
                CtmcKind::Zanella(bal) => {
                    let log_up = cache.log_ratio_up(target, y, i) - (yi + 1.0).ln();
                    out.up[i] = bal.log_apply(log_up).exp();
                    out.down[i] = if y[i] == 0 {
                        0.0
                    } else {
                        let log_down = yi.ln() - cache.log_ratio_down(target, y, i);
                        bal.log_apply(log_down).exp()
                    };
                }
            }
        }
    }

    /// Rates out of `y` with full validation.
    pub fn rates<T: Target + ?Sized>(&self, target: &T, y: &[u32]) -> Result<RateVector, CtmcError> {
        target.check_dim(y)?;
        if !target.in_support(y) {
            return Err(TargetError::NotInSupport(y.into()).into());
        }
        if let CtmcKind::BirthDeath { m } = *self {
            if !(m.is_finite() && m > 0.0) {
                return Err(CtmcError::BadWindow(m));
            }
        }
        let cache = FieldCache::new(target, y);
        let mut out = RateVector::zeros(y.len());
        self.fill_rates(target, y, &cache, None, &mut out);
        Ok(out)
    }
}

/// Birth-death rates with base intensity `1/m`.
pub fn bd_rates<T: Target + ?Sized>(target: &T, y: &[u32], m: f64) -> Result<RateVector, CtmcError> {
    CtmcKind::BirthDeath { m }.rates(target, y)
}

/// Zanella process rates for balancing function `bal`.
pub fn zanella_rates<T: Target + ?Sized>(
    target: &T,
    y: &[u32],
    bal: Balancing,
) -> Result<RateVector, CtmcError> {
    CtmcKind::Zanella(bal).rates(target, y)
}

/// State of one CTMC chain.
#[derive(Clone, Debug)]
pub struct CtmcState {
    kind: CtmcKind,
    counts: Vec<u32>,
    cache: FieldCache,
    frozen: Option<Vec<bool>>,
    rates: RateVector,
}

impl CtmcState {
    pub fn new<T: Target + ?Sized>(
        target: &T,
        kind: CtmcKind,
        initial: &[u32],
    ) -> Result<Self, CtmcError> {
        Self::build(target, kind, initial, None)
    }

    /// Chain that never moves the `frozen` components.
    pub fn with_frozen<T: Target + ?Sized>(
        target: &T,
        kind: CtmcKind,
        initial: &[u32],
        frozen: Vec<bool>,
    ) -> Result<Self, CtmcError> {
        if frozen.len() != initial.len() {
            return Err(CtmcError::MaskMismatch {
                expected: initial.len(),
                got: frozen.len(),
            });
        }
        Self::build(target, kind, initial, Some(frozen))
    }

    fn build<T: Target + ?Sized>(
        target: &T,
        kind: CtmcKind,
        initial: &[u32],
        frozen: Option<Vec<bool>>,
    ) -> Result<Self, CtmcError> {
        // validates dimension, support and m
        kind.rates(target, initial)?;
        Ok(Self {
            kind,
            counts: initial.to_vec(),
            cache: FieldCache::new(target, initial),
            rates: RateVector::zeros(initial.len()),
            frozen,
        })
    }

    pub fn kind(&self) -> CtmcKind {
        self.kind
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Whether every rate out of the current state is zero.
    pub fn is_absorbing<T: Target + ?Sized>(&mut self, target: &T) -> bool {
        self.kind.fill_rates(
            target,
            &self.counts,
            &self.cache,
            self.frozen.as_deref(),
            &mut self.rates,
        );
        self.rates.total() <= 0.0
    }

    /// One jump; the pre-jump state and its holding time go to `sink`.
    pub fn step_into<T, R, S>(&mut self, target: &T, rng: &mut R, sink: &mut S) -> Result<(), CtmcError>
    where
        T: Target + ?Sized,
        R: Rng + ?Sized,
        S: TraceSink + ?Sized,
    {
        self.kind.fill_rates(
            target,
            &self.counts,
            &self.cache,
            self.frozen.as_deref(),
            &mut self.rates,
        );
        let up: f64 = self.rates.up.iter().sum();
        let down: f64 = self.rates.down.iter().sum();
        let total = up + down;
        debug_assert!(!total.is_nan());
        if total <= 0.0 {
            return Err(CtmcError::Absorbing);
        }
        let holding = rng.sample::<f64, _>(Exp1) / total;
        sink.push(&self.counts, holding);
        if rng.gen::<f64>() * total < up {
            let i = pick(&self.rates.up, up, rng);
            self.counts[i] += 1;
            self.cache.moved(target, &self.counts, i, true);
        } else {
            let i = pick(&self.rates.down, down, rng);
            self.counts[i] -= 1;
            self.cache.moved(target, &self.counts, i, false);
        }
        debug_assert!(target.in_support(&self.counts));
        Ok(())
    }

    pub fn run<T, R, S>(&mut self, target: &T, steps: u64, rng: &mut R, sink: &mut S) -> Result<(), CtmcError>
    where
        T: Target + ?Sized,
        R: Rng + ?Sized,
        S: TraceSink + ?Sized,
    {
        for _ in 0..steps {
            self.step_into(target, rng, sink)?;
        }
        Ok(())
    }

    pub fn step<T, R>(&mut self, target: &T, rng: &mut R) -> Result<(), CtmcError>
    where
        T: Target + ?Sized,
        R: Rng + ?Sized,
    {
        self.step_into(target, rng, &mut Discard)
    }
}

/// Runs `steps` jumps of `kind` from `initial` and collects the trace.
pub fn ctmc_run<T, R>(
    target: &T,
    kind: CtmcKind,
    initial: &[u32],
    steps: usize,
    rng: &mut R,
) -> Result<WeightedTrace, CtmcError>
where
    T: Target + ?Sized,
    R: Rng + ?Sized,
{
    let mut state = CtmcState::new(target, kind, initial)?;
    let mut trace = WeightedTrace::with_capacity(initial.len(), steps);
    state.run(target, steps as u64, rng, &mut trace)?;
    Ok(trace)
}
