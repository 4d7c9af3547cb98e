//! Exact answers for small instances.
//!
//! Everything here works on a finite box of count vectors: exact target
//! PMFs by enumeration, stationary distributions of truncated CTMC
//! generators by linear solve, time-weighted empirical PMFs of traces, total
//! variation distances, and a two-time symmetry statistic for checking
//! reversibility of a simulated trajectory.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ctmc::{CtmcKind, RateVector};
use crate::lattice::{CountVector, StateBox};
use crate::targets::{FieldCache, Target, TargetError};
use crate::trace::WeightedTrace;

/// Largest box `enumerate_pmf` will visit.
pub const MAX_ENUMERATION_STATES: usize = 10_000_000;
/// Largest state space `ctmc_stationary` will solve.
pub const MAX_GENERATOR_STATES: usize = 10_000;
/// Above this size the generator is solved iteratively instead of by LU.
const DENSE_SOLVE_LIMIT: usize = 2_500;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("box has {volume} states, limit is {limit}")]
    BoxTooLarge { volume: usize, limit: usize },
    #[error("no state in the box has positive mass")]
    ZeroMass,
    #[error("chain is reducible on the box: {0} cannot be reached from or cannot reach the origin")]
    Reducible(CountVector),
    #[error("stationary system is singular")]
    Singular,
    #[error("iterative stationary solve did not converge")]
    NotConverged,
    #[error("distributions live on different boxes")]
    BoxMismatch,
    #[error("box dimension {expected} does not match {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace spans {span} time units, lag {lag} does not fit")]
    LagTooLong { span: f64, lag: f64 },
    #[error("state {0} lies outside the box")]
    OutsideBox(CountVector),
    #[error(transparent)]
    Target(#[from] TargetError),
}

/// Probability table over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPmf {
    states: StateBox,
    probs: Vec<f64>,
}

impl ExactPmf {
    pub fn new(states: StateBox, probs: Vec<f64>) -> Self {
        assert_eq!(states.volume(), probs.len());
        Self { states, probs }
    }

    pub fn states(&self) -> &StateBox {
        &self.states
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, y: &[u32]) -> f64 {
        self.states.index_of(y).map_or(0.0, |i| self.probs[i])
    }

    pub fn dim(&self) -> usize {
        self.states.dim()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CountVector, f64)> + '_ {
        self.states.iter().zip(self.probs.iter().copied())
    }
}

/// Time-weighted occupation of a trace on a box.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalPmf {
    pub pmf: ExactPmf,
    /// Fraction of time spent outside the box.
    pub overflow: f64,
}

fn make_box(dim: usize, maxima: &[u32], limit: usize) -> Result<StateBox, OracleError> {
    if maxima.len() != dim {
        return Err(OracleError::DimensionMismatch {
            expected: dim,
            got: maxima.len(),
        });
    }
    let states = StateBox::new(maxima.to_vec()).ok_or(OracleError::BoxTooLarge {
        volume: usize::MAX,
        limit,
    })?;
    if states.volume() > limit {
        return Err(OracleError::BoxTooLarge {
            volume: states.volume(),
            limit,
        });
    }
    Ok(states)
}

fn ln_factorials(max: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(max as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for n in 1..=max {
        acc += f64::from(n).ln();
        out.push(acc);
    }
    out
}

/// `log pi(y) + log Z` for every state of the box: `log f(y) - sum log y_i!`.
fn log_weights<T: Target + ?Sized>(target: &T, states: &StateBox) -> Vec<f64> {
    let lnf = ln_factorials(states.maxima().iter().copied().max().unwrap_or(0));
    let mut y = vec![0; states.dim()];
    (0..states.volume())
        .map(|idx| {
            states.state_into(idx, &mut y);
            let lf = target.log_f_unchecked(&y);
            if lf == f64::NEG_INFINITY {
                lf
            } else {
                lf - y.iter().map(|&c| lnf[c as usize]).sum::<f64>()
            }
        })
        .collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Exact `pi` restricted to the box `{0..=maxima}` and renormalised there.
pub fn enumerate_pmf<T: Target + ?Sized>(target: &T, maxima: &[u32]) -> Result<ExactPmf, OracleError> {
    let states = make_box(target.dim(), maxima, MAX_ENUMERATION_STATES)?;
    let lw = log_weights(target, &states);
    let lz = log_sum_exp(&lw);
    if lz == f64::NEG_INFINITY {
        return Err(OracleError::ZeroMass);
    }
    let probs = lw.iter().map(|v| (v - lz).exp()).collect();
    Ok(ExactPmf::new(states, probs))
}

/// Fraction of the unnormalised mass of the box `{0..=2*max_i+1}` that lies
/// inside `{0..=max_i}`. A heuristic truncation check for unbounded targets.
pub fn truncation_coverage<T: Target + ?Sized>(target: &T, maxima: &[u32]) -> Result<f64, OracleError> {
    let inner = make_box(target.dim(), maxima, MAX_ENUMERATION_STATES)?;
    let doubled: Vec<u32> = maxima.iter().map(|&m| 2 * m + 1).collect();
    let outer = make_box(target.dim(), &doubled, MAX_ENUMERATION_STATES)?;
    let lw_outer = log_weights(target, &outer);
    let lz_outer = log_sum_exp(&lw_outer);
    if lz_outer == f64::NEG_INFINITY {
        return Err(OracleError::ZeroMass);
    }
    let lz_inner = log_sum_exp(&log_weights(target, &inner));
    Ok((lz_inner - lz_outer).exp())
}

/// Stationary distribution of the chain `kind` truncated to the box: moves
/// that would leave the box are removed.
pub fn ctmc_stationary<T: Target + ?Sized>(
    target: &T,
    kind: CtmcKind,
    maxima: &[u32],
) -> Result<ExactPmf, OracleError> {
    let states = make_box(target.dim(), maxima, MAX_GENERATOR_STATES)?;
    let d = states.dim();
    let mut y = vec![0; d];

    // in-support states of the box, numbered densely
    let mut dense = vec![usize::MAX; states.volume()];
    let mut members = Vec::new();
    for idx in 0..states.volume() {
        states.state_into(idx, &mut y);
        if target.in_support(&y) {
            dense[idx] = members.len();
            members.push(idx);
        }
    }
    if members.is_empty() {
        return Err(OracleError::ZeroMass);
    }
    let n = members.len();

    // sparse off-diagonal rates: (from, to, rate)
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut rates = RateVector::zeros(d);
    for (from, &idx) in members.iter().enumerate() {
        states.state_into(idx, &mut y);
        let cache = FieldCache::new(target, &y);
        kind.fill_rates(target, &y, &cache, None, &mut rates);
        for i in 0..d {
            if let Some(up) = states.step_up(idx, &y, i) {
                if rates.up[i] > 0.0 && dense[up] != usize::MAX {
                    edges[from].push((dense[up], rates.up[i]));
                }
            }
            if let Some(down) = states.step_down(idx, &y, i) {
                if rates.down[i] > 0.0 {
                    edges[from].push((dense[down], rates.down[i]));
                }
            }
        }
    }
    check_irreducible(&edges, &states, &members)?;

    let pi = if n <= DENSE_SOLVE_LIMIT {
        solve_dense(&edges)?
    } else {
        solve_iterative(&edges)?
    };
    let mut probs = vec![0.0; states.volume()];
    for (k, &idx) in members.iter().enumerate() {
        probs[idx] = pi[k];
    }
    Ok(ExactPmf::new(states, probs))
}

fn check_irreducible(
    edges: &[Vec<(usize, f64)>],
    states: &StateBox,
    members: &[usize],
) -> Result<(), OracleError> {
    let n = edges.len();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (from, out) in edges.iter().enumerate() {
        for &(to, _) in out {
            reverse[to].push(from);
        }
    }
    // the origin is always in a downward-closed support
    for forward in [true, false] {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            let next: Box<dyn Iterator<Item = usize>> = if forward {
                Box::new(edges[v].iter().map(|&(to, _)| to))
            } else {
                Box::new(reverse[v].iter().copied())
            };
            for w in next {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(bad) = seen.iter().position(|s| !s) {
            return Err(OracleError::Reducible(states.state(members[bad])));
        }
    }
    Ok(())
}

fn solve_dense(edges: &[Vec<(usize, f64)>]) -> Result<Vec<f64>, OracleError> {
    let n = edges.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Q^T pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (from, out) in edges.iter().enumerate() {
        for &(to, rate) in out {
            a[(to, from)] += rate;
            a[(from, from)] -= rate;
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or(OracleError::Singular)?;
    normalise(pi.iter().copied().collect())
}

fn solve_iterative(edges: &[Vec<(usize, f64)>]) -> Result<Vec<f64>, OracleError> {
    // Gauss-Seidel on the global balance equations
    let n = edges.len();
    let mut inflow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut outrate = vec![0.0; n];
    for (from, out) in edges.iter().enumerate() {
        for &(to, rate) in out {
            inflow[to].push((from, rate));
            outrate[from] += rate;
        }
    }
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut change: f64 = 0.0;
        for j in 0..n {
            let v: f64 = inflow[j].iter().map(|&(i, r)| pi[i] * r).sum::<f64>() / outrate[j];
            change = change.max((v - pi[j]).abs() / v.max(f64::MIN_POSITIVE));
            pi[j] = v;
        }
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= s);
        if change < 1e-14 {
            return normalise(pi);
        }
    }
    Err(OracleError::NotConverged)
}

fn normalise(mut pi: Vec<f64>) -> Result<Vec<f64>, OracleError> {
    if pi.iter().any(|p| !p.is_finite()) {
        return Err(OracleError::Singular);
    }
    // clear round-off negatives
    pi.iter_mut().for_each(|p| *p = p.max(0.0));
    let s: f64 = pi.iter().sum();
    if s <= 0.0 {
        return Err(OracleError::Singular);
    }
    pi.iter_mut().for_each(|p| *p /= s);
    Ok(pi)
}

/// Fraction of time the trace spends in each state of the box.
pub fn empirical_pmf(trace: &WeightedTrace, maxima: &[u32]) -> Result<EmpiricalPmf, OracleError> {
    if trace.is_empty() {
        return Err(OracleError::EmptyTrace);
    }
    let states = make_box(trace.dim(), maxima, MAX_ENUMERATION_STATES)?;
    let mut mass = vec![0.0; states.volume()];
    let mut overflow = 0.0;
    let mut total = 0.0;
    for (y, w) in trace.iter() {
        total += w;
        match states.index_of(y) {
            Some(idx) => mass[idx] += w,
            None => overflow += w,
        }
    }
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(EmpiricalPmf {
        pmf: ExactPmf::new(states, mass),
        overflow: overflow / total,
    })
}

/// `1/2 sum |p - q|` over slices of equal length.
pub fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Total variation distance of two tables on the same box.
pub fn tv_distance(p: &ExactPmf, q: &ExactPmf) -> Result<f64, OracleError> {
    if p.states != q.states {
        return Err(OracleError::BoxMismatch);
    }
    Ok(tv_slices(&p.probs, &q.probs))
}

/// Time-weighted joint occupation of `(S(t), S(t + lag))` over the box,
/// normalised to total mass 1. Entry `[a * n + b]` is for the pair `(a, b)`.
pub fn lagged_joint(trace: &WeightedTrace, lag: f64, maxima: &[u32]) -> Result<Vec<f64>, OracleError> {
    if trace.is_empty() {
        return Err(OracleError::EmptyTrace);
    }
    let states = make_box(trace.dim(), maxima, MAX_GENERATOR_STATES)?;
    let n = states.volume();
    let index: Vec<usize> = trace
        .iter()
        .map(|(y, _)| {
            states
                .index_of(y)
                .ok_or_else(|| OracleError::OutsideBox(y.into()))
        })
        .collect::<Result<_, _>>()?;
    // jump times: state k occupies [times[k], times[k + 1])
    let mut times = Vec::with_capacity(trace.len() + 1);
    let mut acc = 0.0;
    times.push(0.0);
    for &w in trace.weights() {
        acc += w;
        times.push(acc);
    }
    let span = acc;
    if !(lag >= 0.0 && lag < span) {
        return Err(OracleError::LagTooLong { span, lag });
    }
    let end = span - lag;
    let mut joint = vec![0.0; n * n];
    let (mut i, mut j) = (0usize, 0usize);
    // advance j so that t + lag lies in interval j at t = 0
    while times[j + 1] <= lag {
        j += 1;
    }
    let mut t = 0.0;
    while t < end {
        let i_end = times[i + 1];
        let j_end = times[j + 1] - lag;
        let next = i_end.min(j_end).min(end);
        joint[index[i] * n + index[j]] += next - t;
        t = next;
        if i_end <= t {
            i += 1;
        }
        if j_end <= t {
            j += 1;
        }
    }
    let total: f64 = joint.iter().sum();
    if total > 0.0 {
        joint.iter_mut().for_each(|v| *v /= total);
    }
    Ok(joint)
}

/// Total variation distance between the lag-`lag` joint occupation of the
/// trace and its transpose. Near zero for a reversible process in
/// equilibrium.
pub fn two_time_symmetry(trace: &WeightedTrace, lag: f64, maxima: &[u32]) -> Result<f64, OracleError> {
    let joint = lagged_joint(trace, lag, maxima)?;
    let n = (joint.len() as f64).sqrt().round() as usize;
    let mut defect = 0.0;
    for a in 0..n {
        for b in 0..n {
            defect += (joint[a * n + b] - joint[b * n + a]).abs();
        }
    }
    Ok(0.5 * defect)
}

/// Mean vector and covariance matrix of a table.
pub fn exact_moments(pmf: &ExactPmf) -> (Vec<f64>, DMatrix<f64>) {
    let d = pmf.dim();
    let mut mean = vec![0.0; d];
    let mut y = vec![0; d];
    for (idx, &p) in pmf.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        pmf.states.state_into(idx, &mut y);
        for k in 0..d {
            mean[k] += p * f64::from(y[k]);
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (idx, &p) in pmf.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        pmf.states.state_into(idx, &mut y);
        for a in 0..d {
            let da = f64::from(y[a]) - mean[a];
            for b in a..d {
                cov[(a, b)] += p * da * (f64::from(y[b]) - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    (mean, cov)
}
