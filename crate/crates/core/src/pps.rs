//! Point-process sampler with constant base intensity.
//!
//! Each component is an infinite-server queue with deterministic service
//! time `m`. New points arrive on component `i` at rate
//! `m^-1 * f(s + e_i) / f(s)`, where `s` is the vector of points currently in
//! the sliding window `(t - m, t]`, and every point leaves the window exactly
//! `m` time units after it arrived. Simulation races an exponential arrival
//! clock against the expiry of the oldest point, so a step is either one
//! arrival or one departure.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::lattice::CountVector;
use crate::targets::{FieldCache, Target, TargetError};
use crate::trace::{Discard, TraceSink, WeightedTrace};

#[derive(Debug, Error)]
pub enum PpsError {
    #[error("window length must be positive and finite, got {0}")]
    BadWindow(f64),
    #[error("the support is a single state; there is nothing to sample")]
    SingletonSupport,
    #[error("absorbing state at t = {0}: no arrivals possible and the window is empty")]
    Absorbing(f64),
    #[error("frozen mask has length {got}, expected {expected}")]
    MaskMismatch { expected: usize, got: usize },
    #[error("initial counts must be zero on sampled components (component {0})")]
    NonEmptyStart(usize),
    #[error(transparent)]
    Target(#[from] TargetError),
}

/// FIFO record of the points in the current window.
#[derive(Clone, Debug)]
pub struct PointWindow {
    points: VecDeque<(f64, u32)>,
    m: f64,
}

impl PointWindow {
    fn new(m: f64) -> Self {
        Self {
            points: VecDeque::new(),
            m,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.m
    }

    /// `(arrival time, component)` pairs, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.points.iter().map(|&(t, c)| (t, c as usize))
    }

    /// Time at which the oldest point leaves, if any.
    pub fn next_expiry(&self) -> Option<f64> {
        self.points.front().map(|&(t, _)| t + self.m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpKind {
    Arrival,
    Departure,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub kind: JumpKind,
    pub component: usize,
    /// Time spent in the state before this jump.
    pub holding: f64,
    /// Time at which the jump happened.
    pub time: f64,
}

/// Arrival and departure counts of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunTally {
    pub arrivals: u64,
    pub departures: u64,
}

/// State of one point-process chain.
#[derive(Clone, Debug)]
pub struct PpsState {
    now: f64,
    counts: Vec<u32>,
    window: PointWindow,
    cache: FieldCache,
    frozen: Vec<bool>,
    intensities: Vec<f64>,
}

impl PpsState {
    /// Empty window at time `m`, zero counts.
    pub fn new<T: Target + ?Sized>(target: &T, m: f64) -> Result<Self, PpsError> {
        let d = target.dim();
        Self::with_frozen(target, m, &vec![0; d], vec![false; d])
    }

    /// Chain whose `frozen` components keep the counts given in `initial`
    /// forever; every other component starts at zero with an empty window.
    pub fn with_frozen<T: Target + ?Sized>(
        target: &T,
        m: f64,
        initial: &[u32],
        frozen: Vec<bool>,
    ) -> Result<Self, PpsError> {
        if !(m.is_finite() && m > 0.0) {
            return Err(PpsError::BadWindow(m));
        }
        target.check_dim(initial)?;
        if frozen.len() != initial.len() {
            return Err(PpsError::MaskMismatch {
                expected: initial.len(),
                got: frozen.len(),
            });
        }
        if let Some(i) = (0..initial.len()).find(|&i| !frozen[i] && initial[i] != 0) {
            return Err(PpsError::NonEmptyStart(i));
        }
        if !target.in_support(initial) {
            return Err(TargetError::NotInSupport(initial.into()).into());
        }
        let free_to_move = (0..initial.len())
            .any(|i| !frozen[i] && target.log_ratio_up_unchecked(initial, i) > f64::NEG_INFINITY);
        if !free_to_move && frozen.iter().all(|f| !f) {
            return Err(PpsError::SingletonSupport);
        }
        Ok(Self {
            now: m,
            counts: initial.to_vec(),
            window: PointWindow::new(m),
            cache: FieldCache::new(target, initial),
            intensities: vec![0.0; initial.len()],
            frozen,
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn window(&self) -> &PointWindow {
        &self.window
    }

    /// Whether no further event can ever happen.
    pub fn is_absorbing<T: Target + ?Sized>(&self, target: &T) -> bool {
        self.window.is_empty()
            && (0..self.counts.len()).all(|i| {
                self.frozen[i]
                    || self.cache.log_ratio_up(target, &self.counts, i) == f64::NEG_INFINITY
            })
    }

    /// Advances by one event, reporting the pre-jump state to `sink`.
    pub fn step_into<T, R, S>(
        &mut self,
        target: &T,
        rng: &mut R,
        sink: &mut S,
    ) -> Result<JumpEvent, PpsError>
    where
        T: Target + ?Sized,
        R: Rng + ?Sized,
        S: TraceSink + ?Sized,
    {
        let inv_m = 1.0 / self.window.m;
        let mut total = 0.0;
        for i in 0..self.counts.len() {
            let rate = if self.frozen[i] {
                0.0
            } else {
                self.cache.log_ratio_up(target, &self.counts, i).exp() * inv_m
            };
            debug_assert!(!rate.is_nan(), "NaN intensity on component {i}");
            self.intensities[i] = rate;
            total += rate;
        }
        let wait = if total > 0.0 {
            rng.sample::<f64, _>(Exp1) / total
        } else {
            f64::INFINITY
        };

        let arrival = match self.window.next_expiry() {
            None if total > 0.0 => true,
            None => return Err(PpsError::Absorbing(self.now)),
            // ties go to the expiry
            Some(expiry) => self.now + wait < expiry,
        };

        let event = if arrival {
            let c = pick(&self.intensities, total, rng);
            sink.push(&self.counts, wait);
            self.now += wait;
            self.counts[c] += 1;
            self.window.points.push_back((self.now, c as u32));
            self.cache.moved(target, &self.counts, c, true);
            JumpEvent {
                kind: JumpKind::Arrival,
                component: c,
                holding: wait,
                time: self.now,
            }
        } else {
            let (t0, c) = self.window.points.pop_front().expect("non-empty window");
            let c = c as usize;
            let expiry = t0 + self.window.m;
            let holding = expiry - self.now;
            sink.push(&self.counts, holding);
            self.now = expiry;
            self.counts[c] -= 1;
            self.cache.moved(target, &self.counts, c, false);
            JumpEvent {
                kind: JumpKind::Departure,
                component: c,
                holding,
                time: self.now,
            }
        };
        #[cfg(any(test, debug_assertions))]
        if let Err(msg) = self.check_invariants(target) {
            panic!("point-process state invariant violated: {msg}");
        }
        Ok(event)
    }

    pub fn step<T, R>(&mut self, target: &T, rng: &mut R) -> Result<JumpEvent, PpsError>
    where
        T: Target + ?Sized,
        R: Rng + ?Sized,
    {
        self.step_into(target, rng, &mut Discard)
    }

    /// Runs `steps` events, emitting one weighted sample per event.
    pub fn run<T, R, S>(
        &mut self,
        target: &T,
        steps: u64,
        rng: &mut R,
        sink: &mut S,
    ) -> Result<RunTally, PpsError>
    where
        T: Target + ?Sized,
        R: Rng + ?Sized,
        S: TraceSink + ?Sized,
    {
        let mut tally = RunTally::default();
        for _ in 0..steps {
            match self.step_into(target, rng, sink)?.kind {
                JumpKind::Arrival => tally.arrivals += 1,
                JumpKind::Departure => tally.departures += 1,
            }
        }
        Ok(tally)
    }

    /// Convenience wrapper collecting the run into a trace.
    pub fn run_trace<T, R>(
        &mut self,
        target: &T,
        steps: usize,
        rng: &mut R,
    ) -> Result<WeightedTrace, PpsError>
    where
        T: Target + ?Sized,
        R: Rng + ?Sized,
    {
        let mut trace = WeightedTrace::with_capacity(self.counts.len(), steps);
        self.run(target, steps as u64, rng, &mut trace)?;
        Ok(trace)
    }

    /// Full consistency check of the window against the counts.
    pub fn check_invariants<T: Target + ?Sized>(&self, target: &T) -> Result<(), String> {
        let mut tally = vec![0u32; self.counts.len()];
        let mut prev = f64::NEG_INFINITY;
        for (t, c) in self.window.iter() {
            if t <= prev {
                return Err(format!("arrival times not increasing: {prev} then {t}"));
            }
            if !(t <= self.now && t + self.window.m > self.now) {
                return Err(format!("point at {t} outside window ending at {}", self.now));
            }
            if self.frozen[c] {
                return Err(format!("point on frozen component {c}"));
            }
            tally[c] += 1;
            prev = t;
        }
        for i in 0..self.counts.len() {
            if !self.frozen[i] && tally[i] != self.counts[i] {
                return Err(format!(
                    "component {i}: count {} but {} points in window",
                    self.counts[i], tally[i]
                ));
            }
        }
        if !target.in_support(&self.counts) {
            return Err(format!("state {} left the support", CountVector::from(&self.counts[..])));
        }
        Ok(())
    }
}

/// Index drawn with probability proportional to `weights`.
#[inline]
pub(crate) fn pick<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    // round-off at the top end
    last
}

/// `pps_init`: the zero state with an empty window at time `m`.
pub fn pps_init<T: Target + ?Sized>(target: &T, m: f64) -> Result<PpsState, PpsError> {
    PpsState::new(target, m)
}
