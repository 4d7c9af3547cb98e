//! Inference and learning for the stochastic neural network target.
//!
//! Components are split into observed and latent units. Inference clamps the
//! observed counts and samples the latent ones; learning follows the
//! negated gradient of `KL(psi || pi_O)`, whose component for a parameter
//! `theta` is
//!
//! `E_pi[d log f / d theta] - E_{o ~ psi, latent ~ pi(. | o)}[d log f / d theta]`
//!
//! with sufficient statistics `y_i y_j` (for `w_ij`, `i < j`),
//! `y_i (y_i - 1) / 2` (for `w_ii`) and `y_i` (for `b_i`). The refractory
//! coefficients are hyperparameters and are never updated.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::CountVector;
use crate::oracle::{enumerate_pmf, OracleError};
use crate::sampler::{SamplerError, SamplerKind};
use crate::targets::{NeuralTarget, Target, TargetError};
use crate::text::parse_tuple_line;
use crate::trace::{TraceSink, WeightedTrace};

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("observed index {index} out of range for d = {dim}")]
    BadIndex { index: usize, dim: usize },
    #[error("observed index {0} listed twice")]
    DuplicateIndex(usize),
    #[error("observed vector has length {got}, partition observes {expected} units")]
    ObservedMismatch { expected: usize, got: usize },
    #[error("data distribution: {0}")]
    BadData(String),
    #[error("step size must be finite and >= 0, got {0}")]
    BadStepSize(f64),
    #[error("sampler budget needs at least one measured step")]
    EmptyBudget,
    #[error("exact KL rose for {0} consecutive iterations")]
    Diverged(usize, Box<FitTrajectory>),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Split of the units into observed and latent sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    observed: Vec<usize>,
    latent: Vec<usize>,
    is_observed: Vec<bool>,
}

impl Partition {
    pub fn new(d: usize, mut observed: Vec<usize>) -> Result<Self, LearningError> {
        observed.sort_unstable();
        for w in observed.windows(2) {
            if w[0] == w[1] {
                return Err(LearningError::DuplicateIndex(w[0]));
            }
        }
        let mut is_observed = vec![false; d];
        for &i in &observed {
            if i >= d {
                return Err(LearningError::BadIndex { index: i, dim: d });
            }
            is_observed[i] = true;
        }
        let latent = (0..d).filter(|&i| !is_observed[i]).collect();
        Ok(Self {
            observed,
            latent,
            is_observed,
        })
    }

    pub fn all_observed(d: usize) -> Self {
        Self::new(d, (0..d).collect()).expect("valid indices")
    }

    pub fn dim(&self) -> usize {
        self.is_observed.len()
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn latent(&self) -> &[usize] {
        &self.latent
    }

    /// Full vector with `o` on the observed units and zeros elsewhere.
    pub fn embed(&self, o: &[u32]) -> Result<Vec<u32>, LearningError> {
        if o.len() != self.observed.len() {
            return Err(LearningError::ObservedMismatch {
                expected: self.observed.len(),
                got: o.len(),
            });
        }
        let mut y = vec![0; self.dim()];
        for (&i, &v) in self.observed.iter().zip(o) {
            y[i] = v;
        }
        Ok(y)
    }

    pub fn project(&self, y: &[u32]) -> Vec<u32> {
        self.observed.iter().map(|&i| y[i]).collect()
    }
}

/// Gradient (or statistic) in the parameter space `(W upper triangle, b)`,
/// stored as a full symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub dw: DMatrix<f64>,
    pub db: Vec<f64>,
}

impl ParamGradient {
    pub fn zeros(d: usize) -> Self {
        Self {
            dw: DMatrix::zeros(d, d),
            db: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.db.len()
    }

    /// Number of free parameters, `d (d + 1) / 2 + d`.
    pub fn len(&self) -> usize {
        let d = self.dim();
        d * (d + 1) / 2 + d
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    /// Coordinates in the order `w_00, w_01, .., w_0(d-1), w_11, .., b_0, ..`.
    pub fn coords(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.len());
        for i in 0..d {
            for j in i..d {
                out.push(self.dw[(i, j)]);
            }
        }
        out.extend_from_slice(&self.db);
        out
    }

    pub fn from_coords(d: usize, coords: &[f64]) -> Self {
        let mut g = Self::zeros(d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                g.dw[(i, j)] = coords[k];
                g.dw[(j, i)] = coords[k];
                k += 1;
            }
        }
        g.db.copy_from_slice(&coords[k..k + d]);
        g
    }

    fn axpy(&mut self, a: f64, other: &ParamGradient) {
        self.dw += &other.dw * a;
        for (x, y) in self.db.iter_mut().zip(&other.db) {
            *x += a * y;
        }
    }
}

/// Sufficient statistics of a single state.
pub fn sufficient_stats(y: &[u32]) -> ParamGradient {
    let d = y.len();
    let mut g = ParamGradient::zeros(d);
    for i in 0..d {
        let yi = f64::from(y[i]);
        g.db[i] = yi;
        g.dw[(i, i)] = yi * (yi - 1.0) / 2.0;
        for j in (i + 1)..d {
            let v = yi * f64::from(y[j]);
            g.dw[(i, j)] = v;
            g.dw[(j, i)] = v;
        }
    }
    g
}

fn stats_into(y: &[u32], out: &mut [f64]) {
    let d = y.len();
    let mut k = 0;
    for i in 0..d {
        let yi = f64::from(y[i]);
        out[k] = yi * (yi - 1.0) / 2.0;
        k += 1;
        for j in (i + 1)..d {
            out[k] = yi * f64::from(y[j]);
            k += 1;
        }
    }
    for (o, &c) in out[k..].iter_mut().zip(y) {
        *o = f64::from(c);
    }
}

/// Empirical distribution over observed count vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DataDistribution {
    entries: Vec<(CountVector, f64)>,
}

impl DataDistribution {
    /// Probabilities must be non-negative and sum to one within 1e-9;
    /// zero-probability entries are dropped and duplicate vectors merged.
    pub fn new(entries: Vec<(CountVector, f64)>) -> Result<Self, LearningError> {
        let Some(width) = entries.first().map(|(o, _)| o.len()) else {
            return Err(LearningError::BadData("no entries".into()));
        };
        let mut merged: BTreeMap<CountVector, f64> = BTreeMap::new();
        for (o, p) in entries {
            if o.len() != width {
                return Err(LearningError::BadData(format!(
                    "vector {o} has {} entries, expected {width}",
                    o.len()
                )));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(LearningError::BadData(format!("probability {p} for {o}")));
            }
            *merged.entry(o).or_insert(0.0) += p;
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LearningError::BadData(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self {
            entries: merged.into_iter().filter(|(_, p)| *p > 0.0).collect(),
        })
    }

    /// Parses `count-tuple probability` lines.
    pub fn parse(text: &str) -> Result<Self, LearningError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let parsed = parse_tuple_line(line).map_err(|msg| LearningError::Parse {
                line: lineno + 1,
                msg,
            })?;
            if let Some((o, p)) = parsed {
                entries.push((CountVector::from(o), p));
            }
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LearningError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[(CountVector, f64)] {
        &self.entries
    }

    pub fn width(&self) -> usize {
        self.entries[0].0.len()
    }
}

/// Burn-in and measured steps of each chain, and which sampler runs it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainBudget {
    pub burn_in: u64,
    pub steps: u64,
    pub sampler: SamplerKind,
}

impl Default for ChainBudget {
    fn default() -> Self {
        Self {
            burn_in: 10_000,
            steps: 100_000,
            sampler: SamplerKind::Pps,
        }
    }
}

/// Runs a chain with the observed units held at `o`. The returned trace
/// holds full `d`-vectors. If no latent unit can ever move (in particular
/// when every unit is observed) the trace is `steps` unit-weight copies of
/// the clamped state.
pub fn clamped_run<T, R>(
    target: &T,
    partition: &Partition,
    o: &[u32],
    budget: ChainBudget,
    rng: &mut R,
) -> Result<WeightedTrace, LearningError>
where
    T: Target + ?Sized,
    R: Rng + ?Sized,
{
    let mut trace = WeightedTrace::with_capacity(target.dim(), budget.steps as usize);
    clamped_into(target, partition, o, budget, rng, &mut trace)?;
    Ok(trace)
}

fn clamped_into<T, R, S>(
    target: &T,
    partition: &Partition,
    o: &[u32],
    budget: ChainBudget,
    rng: &mut R,
    sink: &mut S,
) -> Result<(), LearningError>
where
    T: Target + ?Sized,
    R: Rng + ?Sized,
    S: TraceSink + ?Sized,
{
    if partition.dim() != target.dim() {
        return Err(TargetError::DimensionMismatch {
            expected: target.dim(),
            got: partition.dim(),
        }
        .into());
    }
    let initial = partition.embed(o)?;
    let mut chain = budget
        .sampler
        .start_frozen(target, &initial, partition.is_observed.clone())?;
    if chain.is_absorbing(target) {
        for _ in 0..budget.steps {
            sink.push(&initial, 1.0);
        }
        return Ok(());
    }
    chain.run(target, budget.burn_in, rng, &mut crate::trace::Discard)?;
    chain.run(target, budget.steps, rng, sink)?;
    Ok(())
}

/// Time-weighted mean of the sufficient statistics with a batch-means
/// standard error per coordinate.
struct StatsSink {
    buf: Vec<f64>,
    batch: usize,
    filled: usize,
    batch_w: f64,
    batch_sum: Vec<f64>,
    batch_means: Vec<Vec<f64>>,
    batch_weights: Vec<f64>,
}

const STAT_BATCHES: u64 = 25;

impl StatsSink {
    fn new(d: usize, steps: u64) -> Self {
        let p = d * (d + 1) / 2 + d;
        Self {
            buf: vec![0.0; p],
            batch: (steps / STAT_BATCHES).max(1) as usize,
            filled: 0,
            batch_w: 0.0,
            batch_sum: vec![0.0; p],
            batch_means: Vec::new(),
            batch_weights: Vec::new(),
        }
    }

    fn close(&mut self) {
        if self.filled == 0 || self.batch_w <= 0.0 {
            return;
        }
        let w = self.batch_w;
        self.batch_means
            .push(self.batch_sum.iter().map(|s| s / w).collect());
        self.batch_weights.push(w);
        self.batch_sum.iter_mut().for_each(|s| *s = 0.0);
        self.batch_w = 0.0;
        self.filled = 0;
    }

    /// (mean, standard error) per coordinate; trailing samples join the
    /// last batch.
    fn finish(mut self) -> (Vec<f64>, Vec<f64>) {
        self.close();
        let p = self.buf.len();
        let total: f64 = self.batch_weights.iter().sum();
        let mut mean = vec![0.0; p];
        for (m, &w) in self.batch_means.iter().zip(&self.batch_weights) {
            for k in 0..p {
                mean[k] += w * m[k] / total;
            }
        }
        let nb = self.batch_means.len();
        let mut se = vec![0.0; p];
        if nb >= 2 {
            for k in 0..p {
                let var: f64 = self
                    .batch_means
                    .iter()
                    .map(|m| (m[k] - mean[k]).powi(2))
                    .sum::<f64>()
                    / (nb - 1) as f64;
                se[k] = (var / nb as f64).sqrt();
            }
        }
        (mean, se)
    }
}

impl TraceSink for StatsSink {
    fn push(&mut self, state: &[u32], weight: f64) {
        stats_into(state, &mut self.buf);
        for (s, &v) in self.batch_sum.iter_mut().zip(&self.buf) {
            *s += weight * v;
        }
        self.batch_w += weight;
        self.filled += 1;
        if self.filled == self.batch {
            self.close();
        }
    }
}

type MeanAndError = (Vec<f64>, Vec<f64>);

/// Observed vector -> (marginal mass, conditional mean statistics).
type ObservedGroups = BTreeMap<Vec<u32>, (f64, ParamGradient)>;

/// Monte-Carlo gradient with per-coordinate standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub gradient: ParamGradient,
    pub std_err: ParamGradient,
}

/// Monte-Carlo estimate of the gradient of `KL(psi || pi_O)`.
///
/// One free-running chain gives the model term; one clamped chain per
/// support point of `psi` gives the data term. Chains get independent
/// streams seeded from `rng` in a fixed order and run in parallel.
pub fn kl_gradient<T, R>(
    target: &T,
    partition: &Partition,
    psi: &DataDistribution,
    budget: ChainBudget,
    rng: &mut R,
) -> Result<GradientEstimate, LearningError>
where
    T: Target + ?Sized,
    R: Rng + ?Sized,
{
    let d = target.dim();
    if budget.steps == 0 {
        return Err(LearningError::EmptyBudget);
    }
    if psi.width() != partition.observed().len() {
        return Err(LearningError::ObservedMismatch {
            expected: partition.observed().len(),
            got: psi.width(),
        });
    }
    let free = Partition::new(d, Vec::new())?;
    // job 0 is the free-running chain
    let jobs: Vec<(u64, Option<usize>)> = std::iter::once((rng.gen(), None))
        .chain((0..psi.entries().len()).map(|k| (rng.gen(), Some(k))))
        .collect();
    let results: Vec<Result<MeanAndError, LearningError>> = jobs
        .par_iter()
        .map(|&(seed, entry)| {
            let mut chain_rng = Pcg64::seed_from_u64(seed);
            let mut sink = StatsSink::new(d, budget.steps);
            match entry {
                None => clamped_into(target, &free, &[], budget, &mut chain_rng, &mut sink)?,
                Some(k) => {
                    let o = &psi.entries()[k].0;
                    clamped_into(target, partition, o, budget, &mut chain_rng, &mut sink)?
                }
            }
            Ok(sink.finish())
        })
        .collect();

    let p = ParamGradient::zeros(d).len();
    let mut grad = vec![0.0; p];
    let mut var = vec![0.0; p];
    for (job, res) in jobs.iter().zip(results) {
        let (mean, se) = res?;
        let weight = match job.1 {
            None => 1.0,
            Some(k) => -psi.entries()[k].1,
        };
        for k in 0..p {
            grad[k] += weight * mean[k];
            var[k] += weight * weight * se[k] * se[k];
        }
    }
    let se: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    Ok(GradientEstimate {
        gradient: reorder(d, &grad),
        std_err: reorder(d, &se),
    })
}

/// Stats are laid out row by row with the diagonal first in each row, the
/// same order as `ParamGradient::coords`.
fn reorder(d: usize, flat: &[f64]) -> ParamGradient {
    ParamGradient::from_coords(d, flat)
}

/// Exact distribution of the truncated model grouped by observed vector:
/// for every observed vector, its marginal mass and the conditional
/// expectation of the sufficient statistics.
fn exact_tables<T: Target + ?Sized>(
    target: &T,
    partition: &Partition,
    maxima: &[u32],
) -> Result<(ParamGradient, ObservedGroups), LearningError> {
    let pmf = enumerate_pmf(target, maxima)?;
    let d = target.dim();
    let mut model = ParamGradient::zeros(d);
    let mut groups = ObservedGroups::new();
    for (y, p) in pmf.iter() {
        if p == 0.0 {
            continue;
        }
        let s = sufficient_stats(&y);
        model.axpy(p, &s);
        let entry = groups
            .entry(partition.project(&y))
            .or_insert_with(|| (0.0, ParamGradient::zeros(d)));
        entry.0 += p;
        entry.1.axpy(p, &s);
    }
    for (mass, stats) in groups.values_mut() {
        // divide rather than scale by 1/mass, which overflows for subnormal mass
        let m = *mass;
        stats.dw.iter_mut().for_each(|x| *x /= m);
        stats.db.iter_mut().for_each(|x| *x /= m);
    }
    Ok((model, groups))
}

/// Gradient of `KL(psi || pi_O)` with expectations computed exactly on the
/// box `{0..=maxima}`.
pub fn exact_kl_gradient<T: Target + ?Sized>(
    target: &T,
    partition: &Partition,
    psi: &DataDistribution,
    maxima: &[u32],
) -> Result<ParamGradient, LearningError> {
    let (mut grad, groups) = exact_tables(target, partition, maxima)?;
    for (o, q) in psi.entries() {
        let (_, cond) = groups.get(&o[..]).ok_or_else(|| {
            LearningError::BadData(format!("observed vector {o} has zero model mass in the box"))
        })?;
        grad.axpy(-q, cond);
    }
    Ok(grad)
}

/// `KL(psi || pi_O)` for the model truncated to the box.
pub fn exact_kl<T: Target + ?Sized>(
    target: &T,
    partition: &Partition,
    psi: &DataDistribution,
    maxima: &[u32],
) -> Result<f64, LearningError> {
    let pmf = enumerate_pmf(target, maxima)?;
    let mut marginal: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (y, p) in pmf.iter() {
        *marginal.entry(partition.project(&y)).or_insert(0.0) += p;
    }
    Ok(psi
        .entries()
        .iter()
        .map(|(o, q)| {
            let m = marginal.get(&o[..]).copied().unwrap_or(0.0);
            q * (q.ln() - m.ln())
        })
        .sum())
}

/// Exact conditional distribution of the latent units given `o`, as a map
/// from full state to probability.
pub fn exact_conditional<T: Target + ?Sized>(
    target: &T,
    partition: &Partition,
    o: &[u32],
    maxima: &[u32],
) -> Result<BTreeMap<CountVector, f64>, LearningError> {
    let pmf = enumerate_pmf(target, maxima)?;
    let mut out = BTreeMap::new();
    let mut total = 0.0;
    for (y, p) in pmf.iter() {
        if partition.project(&y) == o && p > 0.0 {
            total += p;
            out.insert(y, p);
        }
    }
    if total == 0.0 {
        return Err(LearningError::BadData("clamped state has zero mass".into()));
    }
    out.values_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Settings of the gradient-descent loop.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub step_size: f64,
    pub budget: ChainBudget,
    /// Box on which to track the exact KL; enables divergence detection.
    pub monitor_box: Option<Vec<u32>>,
}

/// Consecutive exact-KL increases that count as divergence.
pub const DIVERGENCE_PATIENCE: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct FitPoint {
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
    pub exact_kl: Option<f64>,
}

/// Parameters after each iteration, starting with the initial ones.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FitTrajectory {
    pub points: Vec<FitPoint>,
}

impl FitTrajectory {
    pub fn last(&self) -> &FitPoint {
        self.points.last().expect("trajectory holds the initial point")
    }
}

/// Plain gradient descent on `(W, b)` with Monte-Carlo gradients.
pub fn fit<R: Rng + ?Sized>(
    initial: &NeuralTarget,
    partition: &Partition,
    psi: &DataDistribution,
    config: &FitConfig,
    rng: &mut R,
) -> Result<FitTrajectory, LearningError> {
    if !(config.step_size.is_finite() && config.step_size >= 0.0) {
        return Err(LearningError::BadStepSize(config.step_size));
    }
    let monitor = |t: &NeuralTarget| -> Result<Option<f64>, LearningError> {
        config
            .monitor_box
            .as_ref()
            .map(|b| exact_kl(t, partition, psi, b))
            .transpose()
    };
    let mut target = initial.clone();
    let mut trajectory = FitTrajectory {
        points: vec![FitPoint {
            weights: target.weights(),
            bias: target.bias().to_vec(),
            exact_kl: monitor(&target)?,
        }],
    };
    let mut rising = 0;
    for _ in 0..config.iterations {
        let est = kl_gradient(&target, partition, psi, config.budget, rng)?;
        let mut w = target.weights();
        let d = w.nrows();
        for i in 0..d {
            for j in i..d {
                let v = w[(i, j)] - config.step_size * est.gradient.dw[(i, j)];
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let b: Vec<f64> = target
            .bias()
            .iter()
            .zip(&est.gradient.db)
            .map(|(b, g)| b - config.step_size * g)
            .collect();
        target = target.with_params(&w, b)?;
        let kl = monitor(&target)?;
        if let (Some(now), Some(prev)) = (kl, trajectory.last().exact_kl) {
            rising = if now > prev { rising + 1 } else { 0 };
        }
        trajectory.points.push(FitPoint {
            weights: w,
            bias: target.bias().to_vec(),
            exact_kl: kl,
        });
        if rising >= DIVERGENCE_PATIENCE {
            return Err(LearningError::Diverged(rising, Box::new(trajectory)));
        }
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::EvalMode;

    #[test]
    fn stats_examples() {
        let g = sufficient_stats(&[2, 3]);
        assert_eq!(g.dw[(0, 1)], 6.0);
        assert_eq!(g.dw[(1, 0)], 6.0);
        assert_eq!(g.dw[(0, 0)], 1.0);
        assert_eq!(g.dw[(1, 1)], 3.0);
        assert_eq!(g.db, vec![2.0, 3.0]);
        assert_eq!(sufficient_stats(&[0, 0, 0]), ParamGradient::zeros(3));
        let bin = sufficient_stats(&[1, 0, 1, 1]);
        for i in 0..4 {
            assert_eq!(bin.dw[(i, i)], 0.0);
        }
    }

    #[test]
    fn flat_stats_follow_coord_order() {
        let y = [3u32, 1, 4];
        let mut flat = vec![0.0; 9];
        stats_into(&y, &mut flat);
        assert_eq!(flat, sufficient_stats(&y).coords());
    }

    #[test]
    fn partition_checks() {
        let p = Partition::new(4, vec![2, 0]).unwrap();
        assert_eq!(p.observed(), &[0, 2]);
        assert_eq!(p.latent(), &[1, 3]);
        assert_eq!(p.embed(&[5, 6]).unwrap(), vec![5, 0, 6, 0]);
        assert!(matches!(Partition::new(2, vec![2]), Err(LearningError::BadIndex { .. })));
        assert!(matches!(Partition::new(2, vec![1, 1]), Err(LearningError::DuplicateIndex(1))));
        assert!(p.embed(&[1]).is_err());
    }

    #[test]
    fn data_file_parsing() {
        let psi = DataDistribution::parse("# o p\n0 0.25\n1 0.5\n2 0.25\n").unwrap();
        assert_eq!(psi.entries().len(), 3);
        assert!(DataDistribution::parse("0 0.5\n1 0.4\n").is_err());
        assert!(DataDistribution::parse("0 1.5\n1 -0.5\n").is_err());
        assert!(DataDistribution::parse("0 0.5\n0 1 0.5\n").is_err());
    }

    #[test]
    fn fully_observed_clamp_is_constant() {
        let t = NeuralTarget::new(&DMatrix::zeros(2, 2), vec![0.5, 0.5], 0.0, 1.0, EvalMode::Full)
            .unwrap();
        let p = Partition::all_observed(2);
        let mut rng = Pcg64::seed_from_u64(1);
        let budget = ChainBudget {
            burn_in: 10,
            steps: 50,
            sampler: SamplerKind::Pps,
        };
        let tr = clamped_run(&t, &p, &[2, 1], budget, &mut rng).unwrap();
        assert_eq!(tr.len(), 50);
        assert!(tr.iter().all(|(y, _)| y == [2, 1]));
    }

    #[test]
    fn single_unit_gradient_collapses_to_mean_difference() {
        let t = NeuralTarget::new(&DMatrix::zeros(1, 1), vec![0.7], 0.0, 1.0, EvalMode::Full)
            .unwrap();
        let p = Partition::all_observed(1);
        let psi = DataDistribution::new(vec![(vec![0].into(), 0.3), (vec![2].into(), 0.7)]).unwrap();
        let g = exact_kl_gradient(&t, &p, &psi, &[25]).unwrap();
        let pmf = enumerate_pmf(&t, &[25]).unwrap();
        let model_mean: f64 = pmf.iter().map(|(y, q)| q * f64::from(y[0])).sum();
        assert!((g.db[0] - (model_mean - 1.4)).abs() < 1e-12);
    }

    #[test]
    fn exact_psi_is_a_stationary_point() {
        let w = DMatrix::from_row_slice(2, 2, &[0.2, -0.3, -0.3, 0.1]);
        let t = NeuralTarget::new(&w, vec![0.4, 0.9], 0.0, 1.0, EvalMode::Full).unwrap();
        let p = Partition::all_observed(2);
        let pmf = enumerate_pmf(&t, &[12, 12]).unwrap();
        let psi = DataDistribution::new(
            pmf.iter().filter(|(_, q)| *q > 0.0).collect(),
        )
        .unwrap();
        let g = exact_kl_gradient(&t, &p, &psi, &[12, 12]).unwrap();
        assert!(g.coords().iter().all(|v| v.abs() < 1e-12), "{:?}", g.coords());
        assert!(exact_kl(&t, &p, &psi, &[12, 12]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_and_zero_step() {
        let t = NeuralTarget::new(&DMatrix::zeros(2, 2), vec![0.0, 0.0], 0.0, 1.0, EvalMode::Full)
            .unwrap();
        let p = Partition::new(2, vec![0]).unwrap();
        let psi = DataDistribution::new(vec![(vec![1].into(), 1.0)]).unwrap();
        let mut rng = Pcg64::seed_from_u64(2);
        let budget = ChainBudget {
            burn_in: 100,
            steps: 1000,
            sampler: SamplerKind::Pps,
        };
        let cfg = FitConfig {
            iterations: 0,
            step_size: 0.1,
            budget,
            monitor_box: None,
        };
        let tr = fit(&t, &p, &psi, &cfg, &mut rng).unwrap();
        assert_eq!(tr.points.len(), 1);
        let cfg = FitConfig {
            iterations: 3,
            step_size: 0.0,
            ..cfg
        };
        let tr = fit(&t, &p, &psi, &cfg, &mut rng).unwrap();
        assert_eq!(tr.points.len(), 4);
        assert!(tr.points.iter().all(|pt| pt.weights == tr.points[0].weights && pt.bias == tr.points[0].bias));
        let bad = FitConfig {
            step_size: -1.0,
            ..cfg
        };
        assert!(matches!(fit(&t, &p, &psi, &bad, &mut rng), Err(LearningError::BadStepSize(_))));
    }
}
