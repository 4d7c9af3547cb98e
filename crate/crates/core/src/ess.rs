//! Multivariate effective sample size for holding-time weighted traces.
//!
//! For a trace of `k` weighted samples,
//! `ess = k * (det Xi / det Sigma)^(1/d)` where `Xi` is the (time-weighted)
//! covariance of the samples and `Sigma` the asymptotic covariance of their
//! time-weighted mean, estimated by batch means.
//!
//! Batches are formed from `b` consecutive jump samples; each batch mean is
//! the time-weighted mean of its samples and
//! `Sigma = b / (B - 1) * sum_j (m_j - m)(m_j - m)^T`. With equal weights this
//! is ordinary batch means. Only the first `B * b` samples are used, for both
//! `Xi` and `Sigma`, and `k` is reported as `B * b`.

use std::time::Instant;

use cpu_time::ThreadTime;
use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use crate::sampler::{Chain, SamplerError};
use crate::targets::Target;
use crate::trace::{TraceSink, WeightedTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Covariance {
    /// Sample covariance `Xi`.
    Sample,
    /// Batch-means asymptotic covariance `Sigma`.
    Asymptotic,
}

#[derive(Debug, Error, PartialEq)]
pub enum EssError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("batch size must be >= 1")]
    ZeroBatch,
    #[error("need at least two full batches: {k} samples with batch size {b}")]
    TooFewSamples { k: usize, b: usize },
    #[error("{0:?} covariance is not positive definite")]
    NotPositiveDefinite(Covariance),
    #[error("total holding time is zero")]
    ZeroWeight,
}

/// Outcome of one ESS evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EssReport {
    /// Samples used, `batch_count * batch_size`.
    pub k: usize,
    pub ess: f64,
    pub log_det_xi: f64,
    pub log_det_sigma: f64,
    pub batch_size: usize,
    pub batch_count: usize,
    pub cpu_seconds: Option<f64>,
    pub ess_per_second: Option<f64>,
}

impl EssReport {
    pub fn with_timing(mut self, seconds: f64) -> Self {
        self.cpu_seconds = Some(seconds);
        self.ess_per_second = Some(self.ess / seconds);
        self
    }
}

/// Time-weighted mean and population covariance of the first `n` samples.
fn moments_prefix(trace: &WeightedTrace, n: usize) -> Result<(Vec<f64>, DMatrix<f64>), EssError> {
    if n == 0 {
        return Err(EssError::EmptyTrace);
    }
    let d = trace.dim();
    let mut total = 0.0;
    let mut mean = vec![0.0; d];
    for t in 0..n {
        let w = trace.weight(t);
        total += w;
        for (m, &s) in mean.iter_mut().zip(trace.state(t)) {
            *m += w * f64::from(s);
        }
    }
    if total <= 0.0 {
        return Err(EssError::ZeroWeight);
    }
    mean.iter_mut().for_each(|m| *m /= total);

    let mut cov = DMatrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for t in 0..n {
        let w = trace.weight(t);
        for ((x, &s), &m) in diff.iter_mut().zip(trace.state(t)).zip(&mean) {
            *x = f64::from(s) - m;
        }
        for i in 0..d {
            let wi = w * diff[i];
            for j in i..d {
                cov[(i, j)] += wi * diff[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / total;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

/// Time-weighted mean and covariance (population convention) of the trace.
pub fn weighted_moments(trace: &WeightedTrace) -> Result<(Vec<f64>, DMatrix<f64>), EssError> {
    moments_prefix(trace, trace.len())
}

fn batch_count(k: usize, b: usize) -> Result<usize, EssError> {
    if b == 0 {
        return Err(EssError::ZeroBatch);
    }
    let batches = k / b;
    if batches < 2 {
        return Err(EssError::TooFewSamples { k, b });
    }
    Ok(batches)
}

/// Batch-means estimate of the asymptotic covariance of the weighted mean.
pub fn batch_means_cov(trace: &WeightedTrace, b: usize) -> Result<DMatrix<f64>, EssError> {
    let batches = batch_count(trace.len(), b)?;
    let d = trace.dim();
    let mut means = Vec::with_capacity(batches);
    let mut weights = Vec::with_capacity(batches);
    for j in 0..batches {
        let mut wsum = 0.0;
        let mut m = vec![0.0; d];
        for t in j * b..(j + 1) * b {
            let w = trace.weight(t);
            wsum += w;
            for (mk, &s) in m.iter_mut().zip(trace.state(t)) {
                *mk += w * f64::from(s);
            }
        }
        if wsum <= 0.0 {
            return Err(EssError::ZeroWeight);
        }
        m.iter_mut().for_each(|x| *x /= wsum);
        means.push(m);
        weights.push(wsum);
    }
    Ok(sigma_from_batches(&means, &weights, b, d))
}

fn sigma_from_batches(means: &[Vec<f64>], weights: &[f64], b: usize, d: usize) -> DMatrix<f64> {
    let total: f64 = weights.iter().sum();
    let mut grand = vec![0.0; d];
    for (m, &w) in means.iter().zip(weights) {
        for (g, &x) in grand.iter_mut().zip(m) {
            *g += w * x;
        }
    }
    grand.iter_mut().for_each(|g| *g /= total);
    let mut sigma = DMatrix::zeros(d, d);
    for m in means {
        for i in 0..d {
            let di = m[i] - grand[i];
            for j in i..d {
                sigma[(i, j)] += di * (m[j] - grand[j]);
            }
        }
    }
    let scale = b as f64 / (means.len() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = sigma[(i, j)] * scale;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    sigma
}

/// Log-determinant of a symmetric positive definite matrix by Cholesky.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = nalgebra::Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let v = l[(i, i)];
        if !(v > 0.0 && v.is_finite()) {
            return None;
        }
        acc += v.ln();
    }
    Some(2.0 * acc)
}

fn report_from(
    xi: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    k: usize,
    b: usize,
    batches: usize,
) -> Result<EssReport, EssError> {
    let d = xi.nrows();
    let log_det_xi = log_det_spd(xi).ok_or(EssError::NotPositiveDefinite(Covariance::Sample))?;
    let log_det_sigma =
        log_det_spd(sigma).ok_or(EssError::NotPositiveDefinite(Covariance::Asymptotic))?;
    let ess = k as f64 * ((log_det_xi - log_det_sigma) / d as f64).exp();
    Ok(EssReport {
        k,
        ess,
        log_det_xi,
        log_det_sigma,
        batch_size: b,
        batch_count: batches,
        cpu_seconds: None,
        ess_per_second: None,
    })
}

/// Multivariate ESS of a stored trace with batch size `b`.
pub fn multivariate_ess(trace: &WeightedTrace, b: usize) -> Result<EssReport, EssError> {
    let batches = batch_count(trace.len(), b)?;
    let k = batches * b;
    let (_, xi) = moments_prefix(trace, k)?;
    let sigma = batch_means_cov(trace, b)?;
    report_from(&xi, &sigma, k, b, batches)
}

/// Streaming version of [`multivariate_ess`]: consumes samples one at a
/// time and keeps only per-batch summaries.
#[derive(Clone, Debug)]
pub struct EssAccumulator {
    d: usize,
    b: usize,
    // current batch, accumulated relative to its first sample
    origin: Vec<u32>,
    filled: usize,
    w: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    diff: Vec<f64>,
    // completed batches
    means: Vec<Vec<f64>>,
    weights: Vec<f64>,
    scatter: Vec<f64>,
}

impl EssAccumulator {
    pub fn new(d: usize, b: usize) -> Result<Self, EssError> {
        if b == 0 {
            return Err(EssError::ZeroBatch);
        }
        Ok(Self {
            d,
            b,
            origin: vec![0; d],
            filled: 0,
            w: 0.0,
            s1: vec![0.0; d],
            s2: vec![0.0; d * d],
            diff: vec![0.0; d],
            means: Vec::new(),
            weights: Vec::new(),
            scatter: vec![0.0; d * d],
        })
    }

    pub fn batches(&self) -> usize {
        self.means.len()
    }

    fn close_batch(&mut self) {
        let d = self.d;
        let w = self.w;
        // batch mean relative to origin
        let rel: Vec<f64> = self.s1.iter().map(|s| s / w).collect();
        for i in 0..d {
            for j in i..d {
                self.scatter[i * d + j] += self.s2[i * d + j] - w * rel[i] * rel[j];
            }
        }
        let mean = rel
            .iter()
            .zip(&self.origin)
            .map(|(r, &o)| r + f64::from(o))
            .collect();
        self.means.push(mean);
        self.weights.push(w);
        self.filled = 0;
        self.w = 0.0;
        self.s1.iter_mut().for_each(|x| *x = 0.0);
        self.s2.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn finish(&self) -> Result<EssReport, EssError> {
        let batches = self.means.len();
        let k = batches * self.b;
        if batches < 2 {
            let seen = k + self.filled;
            return Err(if seen == 0 {
                EssError::EmptyTrace
            } else {
                EssError::TooFewSamples { k: seen, b: self.b }
            });
        }
        let d = self.d;
        let total: f64 = self.weights.iter().sum();
        if total <= 0.0 {
            return Err(EssError::ZeroWeight);
        }
        let mut grand = vec![0.0; d];
        for (m, &w) in self.means.iter().zip(&self.weights) {
            for (g, &x) in grand.iter_mut().zip(m) {
                *g += w * x;
            }
        }
        grand.iter_mut().for_each(|g| *g /= total);
        let mut xi = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let mut v = self.scatter[i * d + j];
                for (m, &w) in self.means.iter().zip(&self.weights) {
                    v += w * (m[i] - grand[i]) * (m[j] - grand[j]);
                }
                xi[(i, j)] = v / total;
                xi[(j, i)] = v / total;
            }
        }
        let sigma = sigma_from_batches(&self.means, &self.weights, self.b, d);
        report_from(&xi, &sigma, k, self.b, batches)
    }
}

impl TraceSink for EssAccumulator {
    fn push(&mut self, state: &[u32], weight: f64) {
        let d = self.d;
        if self.filled == 0 {
            self.origin.copy_from_slice(state);
        }
        for ((x, &s), &o) in self.diff.iter_mut().zip(state).zip(&self.origin) {
            *x = f64::from(s) - f64::from(o);
        }
        self.w += weight;
        for i in 0..d {
            let wi = weight * self.diff[i];
            if wi == 0.0 {
                continue;
            }
            self.s1[i] += wi;
            for j in i..d {
                self.s2[i * d + j] += wi * self.diff[j];
            }
        }
        self.filled += 1;
        if self.filled == self.b {
            self.close_batch();
        }
    }
}

/// Which clock produced a timing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockKind {
    /// CPU time of the calling thread.
    ThreadCpu,
    /// Wall clock; used only when no CPU clock is available.
    Wall,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub seconds: f64,
    pub clock: ClockKind,
}

enum Stopwatch {
    Cpu(ThreadTime),
    Wall(Instant),
}

impl Stopwatch {
    fn start() -> Self {
        match ThreadTime::try_now() {
            Ok(t) => Self::Cpu(t),
            Err(_) => Self::Wall(Instant::now()),
        }
    }

    fn elapsed(&self) -> f64 {
        match self {
            Self::Cpu(t) => t.try_elapsed().map_or(0.0, |d| d.as_secs_f64()),
            Self::Wall(t) => t.elapsed().as_secs_f64(),
        }
    }

    fn kind(&self) -> ClockKind {
        match self {
            Self::Cpu(_) => ClockKind::ThreadCpu,
            Self::Wall(_) => ClockKind::Wall,
        }
    }
}

const TIMED_CHUNK: usize = 4096;

/// Runs `steps` jumps of `chain`, timing only the simulation. Samples are
/// buffered in chunks and handed to `sink` outside the timed sections, so
/// whatever the sink does (ESS accumulation, storage) is not charged.
pub fn timed_run<T, R, S>(
    chain: &mut Chain,
    target: &T,
    steps: u64,
    rng: &mut R,
    sink: &mut S,
) -> Result<Timing, SamplerError>
where
    T: Target + ?Sized,
    R: Rng + ?Sized,
    S: TraceSink + ?Sized,
{
    let d = chain.counts().len();
    let mut buffer = WeightedTrace::with_capacity(d, TIMED_CHUNK);
    let mut seconds = 0.0;
    let mut clock = ClockKind::ThreadCpu;
    let mut remaining = steps;
    while remaining > 0 {
        let n = remaining.min(TIMED_CHUNK as u64);
        buffer.clear();
        let watch = Stopwatch::start();
        chain.run(target, n, rng, &mut buffer)?;
        seconds += watch.elapsed();
        if watch.kind() == ClockKind::Wall {
            clock = ClockKind::Wall;
        }
        for (s, w) in buffer.iter() {
            sink.push(s, w);
        }
        remaining -= n;
    }
    Ok(Timing { seconds, clock })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_1d(values: &[(u32, f64)]) -> WeightedTrace {
        WeightedTrace::from_samples(1, values.iter().map(|&(v, w)| ([v], w))).unwrap()
    }

    #[test]
    fn constant_trace_has_zero_covariance() {
        let t = trace_1d(&[(3, 1.0), (3, 0.5), (3, 2.0)]);
        let (m, c) = weighted_moments(&t).unwrap();
        assert_eq!(m, vec![3.0]);
        assert_eq!(c[(0, 0)], 0.0);
    }

    #[test]
    fn two_point_population_variance() {
        let t = trace_1d(&[(0, 1.0), (2, 1.0)]);
        let (m, c) = weighted_moments(&t).unwrap();
        assert_eq!(m, vec![1.0]);
        assert_eq!(c[(0, 0)], 1.0);
        assert_eq!(weighted_moments(&WeightedTrace::new(1)), Err(EssError::EmptyTrace));
    }

    #[test]
    fn alternating_chain_with_even_batches_has_zero_sigma() {
        let vals: Vec<(u32, f64)> = (0..40).map(|t| ((t % 2) as u32, 1.0)).collect();
        let t = trace_1d(&vals);
        let s = batch_means_cov(&t, 2).unwrap();
        assert_eq!(s[(0, 0)], 0.0);
        assert_eq!(
            multivariate_ess(&t, 2),
            Err(EssError::NotPositiveDefinite(Covariance::Asymptotic))
        );
    }

    #[test]
    fn batch_errors() {
        let t = trace_1d(&[(0, 1.0), (1, 1.0), (0, 1.0)]);
        assert_eq!(
            batch_means_cov(&t, 2),
            Err(EssError::TooFewSamples { k: 3, b: 2 })
        );
        assert_eq!(batch_means_cov(&t, 0), Err(EssError::ZeroBatch));
        let constant = trace_1d(&[(1, 1.0); 10]);
        assert_eq!(
            multivariate_ess(&constant, 2),
            Err(EssError::NotPositiveDefinite(Covariance::Sample))
        );
    }

    #[test]
    fn remainder_is_discarded() {
        let vals: Vec<(u32, f64)> = (0..25).map(|t| ((t * 7 % 5) as u32, 1.0 + (t % 3) as f64)).collect();
        let t = trace_1d(&vals);
        let r = multivariate_ess(&t, 4).unwrap();
        assert_eq!(r.batch_count, 6);
        assert_eq!(r.k, 24);
        let head = trace_1d(&vals[..24]);
        assert_eq!(multivariate_ess(&head, 4).unwrap(), r);
    }

    #[test]
    fn hand_computed_sigma() {
        // batches (0,2) (4,4) (1,1) with weights making means 1.5, 4, 1
        let t = trace_1d(&[(0, 1.0), (2, 3.0), (4, 1.0), (4, 2.0), (1, 5.0), (1, 1.0)]);
        let s = batch_means_cov(&t, 2).unwrap();
        let means = [1.5, 4.0, 1.0];
        let grand = (1.5 * 4.0 + 4.0 * 3.0 + 6.0) / 13.0;
        let want: f64 = 2.0 / 2.0 * means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>();
        assert!((s[(0, 0)] - want).abs() < 1e-14);
    }
}
