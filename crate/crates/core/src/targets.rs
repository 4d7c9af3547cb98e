//! Target distributions over count vectors.
//!
//! A target is given by an unnormalised function `f` on `Z^d_{>=0}` whose
//! positive set is downward closed. The sampled probability mass function is
//! `pi(y) = f(y) / Z * prod_i 1 / y_i!`, so `f` carries everything except the
//! factorial weights. All arithmetic is done on `log f`.
//!
//! Samplers only ever need the log up-ratio `log f(y + e_i) - log f(y)`.
//! Pairwise targets (SK and the neural model) additionally expose a cached
//! "field" `W y` so that all `d` ratios of a state cost `O(d)` after one
//! `O(d^2)` product. How that cache is maintained between moves is governed
//! by [`EvalMode`].

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::lattice::{CountVector, StateBox};
use crate::text::parse_tuple_line;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("dimension mismatch: target has d = {expected}, got a vector of length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component index {index} out of range for d = {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("state {0} is not in the support")]
    NotInSupport(CountVector),
    #[error("weight matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("weight matrix has nonzero diagonal entry at {0}")]
    NonZeroDiagonal(usize),
    #[error("support is not downward closed: {state} has positive mass but {missing} does not")]
    NotDownwardClosed {
        state: CountVector,
        missing: CountVector,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How cached per-state quantities are refreshed after a move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalMode {
    /// Recompute from scratch after every state change (the quadratic form
    /// `W y` is re-multiplied each time; single ratios are two `log_f` calls).
    #[default]
    Full,
    /// Update `W y` by adding or subtracting one column of `W`.
    Incremental,
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Self::Full),
            "incremental" => Ok(Self::Incremental),
            other => Err(format!("unknown recompute mode `{other}`")),
        }
    }
}

/// An unnormalised target over `Z^d_{>=0}` with downward-closed support.
///
/// The `*_unchecked` and `*_from_field` methods skip all validation and are
/// what the samplers call in their inner loops.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    /// `log f(y)`, or `-inf` off the support. `y.len()` must equal `dim()`.
    fn log_f_unchecked(&self, y: &[u32]) -> f64;

    /// `log f(y + e_i) - log f(y)` for `y` on the support.
    fn log_ratio_up_unchecked(&self, y: &[u32], i: usize) -> f64 {
        let mut up = y.to_vec();
        up[i] += 1;
        self.log_f_unchecked(&up) - self.log_f_unchecked(y)
    }

    fn eval_mode(&self) -> EvalMode {
        EvalMode::Full
    }

    /// Componentwise maximum of the support when it is bounded.
    fn support_bound(&self) -> Option<Vec<u32>> {
        None
    }

    /// Length of the cached field (0 for targets without one).
    fn field_len(&self) -> usize {
        0
    }

    fn compute_field(&self, _y: &[u32], _field: &mut [f64]) {}

    /// Field update after `y_i` moved by +1 (`up`) or -1.
    fn shift_field(&self, _field: &mut [f64], _i: usize, _up: bool) {}

    /// `log f(y + e_i) - log f(y)` given the field of `y`.
    fn log_ratio_up_from_field(&self, y: &[u32], _field: &[f64], i: usize) -> f64 {
        self.log_ratio_up_unchecked(y, i)
    }

    /// `log f(y) - log f(y - e_i)` given the field of `y`; requires `y_i >= 1`.
    fn log_ratio_down_from_field(&self, y: &[u32], _field: &[f64], i: usize) -> f64 {
        let mut down = y.to_vec();
        down[i] -= 1;
        self.log_ratio_up_unchecked(&down, i)
    }

    fn check_dim(&self, y: &[u32]) -> Result<(), TargetError> {
        if y.len() == self.dim() {
            Ok(())
        } else {
            Err(TargetError::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            })
        }
    }

    fn log_f(&self, y: &[u32]) -> Result<f64, TargetError> {
        self.check_dim(y)?;
        Ok(self.log_f_unchecked(y))
    }

    fn in_support(&self, y: &[u32]) -> bool {
        y.len() == self.dim() && self.log_f_unchecked(y) > f64::NEG_INFINITY
    }

    /// `log f(y + e_i) - log f(y)`; `-inf` exactly when `y + e_i` leaves the
    /// support.
    fn log_ratio_up(&self, y: &[u32], i: usize) -> Result<f64, TargetError> {
        self.check_dim(y)?;
        if i >= self.dim() {
            return Err(TargetError::IndexOutOfRange {
                index: i,
                dim: self.dim(),
            });
        }
        if !self.in_support(y) {
            return Err(TargetError::NotInSupport(y.into()));
        }
        Ok(self.log_ratio_up_unchecked(y, i))
    }
}

/// Per-state cache of a target's field, owned by a sampler chain.
#[derive(Clone, Debug)]
pub struct FieldCache {
    field: Vec<f64>,
}

impl FieldCache {
    pub fn new<T: Target + ?Sized>(target: &T, y: &[u32]) -> Self {
        let mut field = vec![0.0; target.field_len()];
        target.compute_field(y, &mut field);
        Self { field }
    }

    /// Bring the cache in line with `y`, which differs from the previous
    /// state only in component `i`.
    #[inline]
    pub fn moved<T: Target + ?Sized>(&mut self, target: &T, y: &[u32], i: usize, up: bool) {
        if self.field.is_empty() {
            return;
        }
        match target.eval_mode() {
            EvalMode::Full => target.compute_field(y, &mut self.field),
            EvalMode::Incremental => target.shift_field(&mut self.field, i, up),
        }
    }

    #[inline]
    pub fn log_ratio_up<T: Target + ?Sized>(&self, target: &T, y: &[u32], i: usize) -> f64 {
        target.log_ratio_up_from_field(y, &self.field, i)
    }

    #[inline]
    pub fn log_ratio_down<T: Target + ?Sized>(&self, target: &T, y: &[u32], i: usize) -> f64 {
        target.log_ratio_down_from_field(y, &self.field, i)
    }

    pub fn values(&self) -> &[f64] {
        &self.field
    }
}

fn check_square(w: &DMatrix<f64>) -> Result<usize, TargetError> {
    if w.nrows() != w.ncols() {
        return Err(TargetError::InvalidParameter(format!(
            "weight matrix must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(TargetError::InvalidParameter(
            "weight matrix has non-finite entries".into(),
        ));
    }
    Ok(w.nrows())
}

fn check_symmetric(w: &DMatrix<f64>) -> Result<(), TargetError> {
    let d = w.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let (a, b) = (w[(i, j)], w[(j, i)]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(TargetError::NotSymmetric(i, j));
            }
        }
    }
    Ok(())
}

/// Row-major copy of `w` with the two triangles averaged.
fn symmetric_row_major(w: &DMatrix<f64>) -> Vec<f64> {
    let d = w.nrows();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = 0.5 * (w[(i, j)] + w[(j, i)]);
        }
    }
    out
}

#[inline]
fn mat_vec(w: &[f64], d: usize, y: &[u32], out: &mut [f64]) {
    for (row, o) in w.chunks_exact(d).zip(out.iter_mut()) {
        *o = row
            .iter()
            .zip(y)
            .filter(|(_, &c)| c != 0)
            .map(|(&wij, &c)| wij * f64::from(c))
            .sum();
    }
}

#[inline]
fn row_dot(w: &[f64], d: usize, i: usize, y: &[u32]) -> f64 {
    w[i * d..(i + 1) * d]
        .iter()
        .zip(y)
        .map(|(&wij, &c)| wij * f64::from(c))
        .sum()
}

#[inline]
fn quadratic_form(w: &[f64], d: usize, y: &[u32]) -> f64 {
    let mut q = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        if yi != 0 {
            q += f64::from(yi) * row_dot(w, d, i, y);
        }
    }
    q
}

// ---------------------------------------------------------------------------

/// Independent Poisson components: `f(y) = prod_i rate_i^{y_i}`.
#[derive(Clone, Debug)]
pub struct PoissonTarget {
    rates: Vec<f64>,
    log_rates: Vec<f64>,
}

impl PoissonTarget {
    /// `d` components sharing the rate `lambda`.
    pub fn new(d: usize, lambda: f64) -> Result<Self, TargetError> {
        Self::with_rates(vec![lambda; d])
    }

    pub fn with_rates(rates: Vec<f64>) -> Result<Self, TargetError> {
        if rates.is_empty() {
            return Err(TargetError::InvalidParameter("dimension must be >= 1".into()));
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(TargetError::InvalidParameter(format!(
                "Poisson rate must be positive and finite, got {r}"
            )));
        }
        let log_rates = rates.iter().map(|r| r.ln()).collect();
        Ok(Self { rates, log_rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

impl Target for PoissonTarget {
    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn log_f_unchecked(&self, y: &[u32]) -> f64 {
        y.iter()
            .zip(&self.log_rates)
            .map(|(&c, &lr)| f64::from(c) * lr)
            .sum()
    }

    #[inline]
    fn log_ratio_up_unchecked(&self, _y: &[u32], i: usize) -> f64 {
        self.log_rates[i]
    }

    #[inline]
    fn log_ratio_down_from_field(&self, _y: &[u32], _field: &[f64], i: usize) -> f64 {
        self.log_rates[i]
    }
}

// ---------------------------------------------------------------------------

/// Row sums of a symmetric, zero-diagonal coupling matrix.
pub fn sk_bias(w: &DMatrix<f64>) -> Result<Vec<f64>, TargetError> {
    let d = check_square(w)?;
    check_symmetric(w)?;
    for i in 0..d {
        if w[(i, i)] != 0.0 {
            return Err(TargetError::NonZeroDiagonal(i));
        }
    }
    Ok((0..d).map(|i| w.row(i).sum()).collect())
}

/// Symmetric coupling matrix with zero diagonal and off-diagonal entries
/// drawn i.i.d. from `N(0, 4/d)`.
pub fn sk_weights<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let normal = Normal::new(0.0, (4.0 / d as f64).sqrt()).expect("finite std");
    let mut w = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = normal.sample(rng);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

/// Sherrington-Kirkpatrick model mapped onto `{0,1}^d`:
/// `f(y) = exp(beta (y^T W y - b^T y))` with `b_i = sum_j W_ij`.
#[derive(Clone, Debug)]
pub struct SkTarget {
    d: usize,
    beta: f64,
    w: Vec<f64>,
    bias: Vec<f64>,
    mode: EvalMode,
}

impl SkTarget {
    pub fn new(beta: f64, w: &DMatrix<f64>, mode: EvalMode) -> Result<Self, TargetError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(TargetError::InvalidParameter(format!(
                "inverse temperature must be finite and >= 0, got {beta}"
            )));
        }
        let bias = sk_bias(w)?;
        let d = w.nrows();
        if d == 0 {
            return Err(TargetError::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(Self {
            d,
            beta,
            w: symmetric_row_major(w),
            bias,
            mode,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.mode = mode;
        self
    }
}

impl Target for SkTarget {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_f_unchecked(&self, y: &[u32]) -> f64 {
        if y.iter().any(|&c| c > 1) {
            return f64::NEG_INFINITY;
        }
        let q = quadratic_form(&self.w, self.d, y);
        let lin: f64 = y
            .iter()
            .zip(&self.bias)
            .map(|(&c, &b)| f64::from(c) * b)
            .sum();
        self.beta * (q - lin)
    }

    fn log_ratio_up_unchecked(&self, y: &[u32], i: usize) -> f64 {
        if y[i] >= 1 {
            return f64::NEG_INFINITY;
        }
        match self.mode {
            EvalMode::Full => {
                let mut up = y.to_vec();
                up[i] += 1;
                self.log_f_unchecked(&up) - self.log_f_unchecked(y)
            }
            EvalMode::Incremental => {
                self.beta * (2.0 * row_dot(&self.w, self.d, i, y) - self.bias[i])
            }
        }
    }

    fn eval_mode(&self) -> EvalMode {
        self.mode
    }

    fn support_bound(&self) -> Option<Vec<u32>> {
        Some(vec![1; self.d])
    }

    fn field_len(&self) -> usize {
        self.d
    }

    fn compute_field(&self, y: &[u32], field: &mut [f64]) {
        mat_vec(&self.w, self.d, y, field);
    }

    fn shift_field(&self, field: &mut [f64], i: usize, up: bool) {
        // W is symmetric, so column i is row i.
        let col = &self.w[i * self.d..(i + 1) * self.d];
        if up {
            field.iter_mut().zip(col).for_each(|(f, w)| *f += w);
        } else {
            field.iter_mut().zip(col).for_each(|(f, w)| *f -= w);
        }
    }

    #[inline]
    fn log_ratio_up_from_field(&self, y: &[u32], field: &[f64], i: usize) -> f64 {
        if y[i] >= 1 {
            return f64::NEG_INFINITY;
        }
        self.beta * (2.0 * field[i] - self.bias[i])
    }

    #[inline]
    fn log_ratio_down_from_field(&self, _y: &[u32], field: &[f64], i: usize) -> f64 {
        // zero diagonal: (W (y - e_i))_i = (W y)_i
        self.beta * (2.0 * field[i] - self.bias[i])
    }
}

// ---------------------------------------------------------------------------

/// Symmetric matrix with all entries (diagonal included) drawn i.i.d. from
/// `N(0, 1/d)`.
pub fn neural_weights<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("finite std");
    let mut w = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = normal.sample(rng);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

/// Stochastic neural network target on all of `Z^d_{>=0}`:
///
/// `log f(y) = 1/2 y^T W y + (b - 1/2 diag W)^T y - sum_i exp(a1 y_i + a0) / (exp(a1) - 1)`.
///
/// Its up-ratio is `(W y)_i + b_i - exp(a1 y_i + a0)`.
#[derive(Clone, Debug)]
pub struct NeuralTarget {
    d: usize,
    w: Vec<f64>,
    bias: Vec<f64>,
    a0: f64,
    a1: f64,
    refractory_scale: f64,
    mode: EvalMode,
}

impl NeuralTarget {
    pub fn new(
        w: &DMatrix<f64>,
        bias: Vec<f64>,
        a0: f64,
        a1: f64,
        mode: EvalMode,
    ) -> Result<Self, TargetError> {
        let d = check_square(w)?;
        check_symmetric(w)?;
        if d == 0 {
            return Err(TargetError::InvalidParameter("dimension must be >= 1".into()));
        }
        if bias.len() != d {
            return Err(TargetError::DimensionMismatch {
                expected: d,
                got: bias.len(),
            });
        }
        if bias.iter().any(|b| !b.is_finite()) || !a0.is_finite() {
            return Err(TargetError::InvalidParameter(
                "bias and a0 must be finite".into(),
            ));
        }
        if !(a1.is_finite() && a1 > 0.0) {
            return Err(TargetError::InvalidParameter(format!(
                "refractory coefficient a1 must be positive, got {a1}"
            )));
        }
        Ok(Self {
            d,
            w: symmetric_row_major(w),
            bias,
            a0,
            a1,
            refractory_scale: 1.0 / a1.exp_m1(),
            mode,
        })
    }

    pub fn weights(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, self.d, &self.w)
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.d + j]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.mode = mode;
        self
    }

    /// Same refractory coefficients and mode, new `W` and `b`.
    pub fn with_params(&self, w: &DMatrix<f64>, bias: Vec<f64>) -> Result<Self, TargetError> {
        Self::new(w, bias, self.a0, self.a1, self.mode)
    }

    #[inline]
    fn refractory(&self, c: u32) -> f64 {
        (self.a1 * f64::from(c) + self.a0).exp() * self.refractory_scale
    }
}

impl Target for NeuralTarget {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_f_unchecked(&self, y: &[u32]) -> f64 {
        let q = quadratic_form(&self.w, self.d, y);
        let mut lin = 0.0;
        let mut refr = 0.0;
        for (i, &c) in y.iter().enumerate() {
            let diag = self.w[i * self.d + i];
            lin += (self.bias[i] - 0.5 * diag) * f64::from(c);
            refr += self.refractory(c);
        }
        let v = 0.5 * q + lin - refr;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn log_ratio_up_unchecked(&self, y: &[u32], i: usize) -> f64 {
        match self.mode {
            EvalMode::Full => {
                let mut up = y.to_vec();
                up[i] += 1;
                self.log_f_unchecked(&up) - self.log_f_unchecked(y)
            }
            EvalMode::Incremental => {
                row_dot(&self.w, self.d, i, y) + self.bias[i]
                    - (self.a1 * f64::from(y[i]) + self.a0).exp()
            }
        }
    }

    fn eval_mode(&self) -> EvalMode {
        self.mode
    }

    fn field_len(&self) -> usize {
        self.d
    }

    fn compute_field(&self, y: &[u32], field: &mut [f64]) {
        mat_vec(&self.w, self.d, y, field);
    }

    fn shift_field(&self, field: &mut [f64], i: usize, up: bool) {
        let col = &self.w[i * self.d..(i + 1) * self.d];
        if up {
            field.iter_mut().zip(col).for_each(|(f, w)| *f += w);
        } else {
            field.iter_mut().zip(col).for_each(|(f, w)| *f -= w);
        }
    }

    #[inline]
    fn log_ratio_up_from_field(&self, y: &[u32], field: &[f64], i: usize) -> f64 {
        field[i] + self.bias[i] - (self.a1 * f64::from(y[i]) + self.a0).exp()
    }

    #[inline]
    fn log_ratio_down_from_field(&self, y: &[u32], field: &[f64], i: usize) -> f64 {
        field[i] - self.w[i * self.d + i] + self.bias[i]
            - (self.a1 * f64::from(y[i] - 1) + self.a0).exp()
    }
}

// ---------------------------------------------------------------------------

/// Explicit table of `log f` over a box; everything outside the box has zero
/// mass.
#[derive(Clone, Debug)]
pub struct TableTarget {
    states: StateBox,
    log_f: Vec<f64>,
}

impl TableTarget {
    /// `log_f` is indexed in the box's row-major order. Fails if the positive
    /// set is not downward closed or if no state has positive mass.
    pub fn new(maxima: Vec<u32>, log_f: Vec<f64>) -> Result<Self, TargetError> {
        if maxima.is_empty() {
            return Err(TargetError::InvalidParameter("dimension must be >= 1".into()));
        }
        let states = StateBox::new(maxima)
            .ok_or_else(|| TargetError::InvalidParameter("table box too large".into()))?;
        if log_f.len() != states.volume() {
            return Err(TargetError::InvalidParameter(format!(
                "table has {} entries but the box has {} states",
                log_f.len(),
                states.volume()
            )));
        }
        if let Some(v) = log_f.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
            return Err(TargetError::InvalidParameter(format!(
                "log f entries must be finite or -inf, got {v}"
            )));
        }
        if log_f.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(TargetError::InvalidParameter(
                "table assigns zero mass everywhere".into(),
            ));
        }
        let mut y = vec![0; states.dim()];
        for idx in 0..states.volume() {
            if log_f[idx] == f64::NEG_INFINITY {
                continue;
            }
            states.state_into(idx, &mut y);
            for i in 0..y.len() {
                if let Some(below) = states.step_down(idx, &y, i) {
                    if log_f[below] == f64::NEG_INFINITY {
                        let mut missing = y.clone();
                        missing[i] -= 1;
                        return Err(TargetError::NotDownwardClosed {
                            state: y.into(),
                            missing: missing.into(),
                        });
                    }
                }
            }
        }
        Ok(Self { states, log_f })
    }

    /// Builds the table by evaluating `log_f` at every state of the box.
    pub fn from_fn(
        maxima: Vec<u32>,
        mut log_f: impl FnMut(&[u32]) -> f64,
    ) -> Result<Self, TargetError> {
        let states = StateBox::new(maxima.clone())
            .ok_or_else(|| TargetError::InvalidParameter("table box too large".into()))?;
        let values = states.iter().map(|y| log_f(&y)).collect();
        Self::new(maxima, values)
    }

    /// Parses `count-tuple log-f` lines. The box is the componentwise maximum
    /// of the listed tuples; unlisted states get `-inf`.
    pub fn parse(text: &str) -> Result<Self, TargetError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let parsed = parse_tuple_line(line).map_err(|msg| TargetError::Parse {
                line: lineno + 1,
                msg,
            })?;
            if let Some((y, v)) = parsed {
                if let Some((first, _)) = entries.first() {
                    let first: &Vec<u32> = first;
                    if first.len() != y.len() {
                        return Err(TargetError::Parse {
                            line: lineno + 1,
                            msg: format!(
                                "tuple has {} components, expected {}",
                                y.len(),
                                first.len()
                            ),
                        });
                    }
                }
                entries.push((y, v));
            }
        }
        if entries.is_empty() {
            return Err(TargetError::Parse {
                line: 0,
                msg: "no entries".into(),
            });
        }
        let d = entries[0].0.len();
        let maxima: Vec<u32> = (0..d)
            .map(|k| entries.iter().map(|(y, _)| y[k]).max().unwrap_or(0))
            .collect();
        let states = StateBox::new(maxima.clone())
            .ok_or_else(|| TargetError::InvalidParameter("table box too large".into()))?;
        let mut table = vec![f64::NEG_INFINITY; states.volume()];
        let mut seen = vec![false; states.volume()];
        for (y, v) in entries {
            let idx = states.index_of(&y).expect("box covers every entry");
            if seen[idx] {
                return Err(TargetError::Parse {
                    line: 0,
                    msg: format!("duplicate entry for {}", CountVector::from(y)),
                });
            }
            seen[idx] = true;
            table[idx] = v;
        }
        Self::new(maxima, table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TargetError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn states(&self) -> &StateBox {
        &self.states
    }

    pub fn log_f_table(&self) -> &[f64] {
        &self.log_f
    }

    #[inline]
    fn lookup(&self, y: &[u32]) -> f64 {
        self.states
            .index_of(y)
            .map_or(f64::NEG_INFINITY, |idx| self.log_f[idx])
    }
}

impl Target for TableTarget {
    fn dim(&self) -> usize {
        self.states.dim()
    }

    fn log_f_unchecked(&self, y: &[u32]) -> f64 {
        self.lookup(y)
    }

    fn log_ratio_up_unchecked(&self, y: &[u32], i: usize) -> f64 {
        let Some(idx) = self.states.index_of(y) else {
            return f64::NEG_INFINITY;
        };
        match self.states.step_up(idx, y, i) {
            Some(up) => self.log_f[up] - self.log_f[idx],
            None => f64::NEG_INFINITY,
        }
    }

    fn log_ratio_down_from_field(&self, y: &[u32], _field: &[f64], i: usize) -> f64 {
        let idx = self.states.index_of(y).expect("state inside table box");
        let below = self.states.step_down(idx, y, i).expect("y_i >= 1");
        self.log_f[idx] - self.log_f[below]
    }

    fn support_bound(&self) -> Option<Vec<u32>> {
        Some(self.states.maxima().to_vec())
    }
}

// ---------------------------------------------------------------------------

/// Closed set of target families, statically dispatched.
#[derive(Clone, Debug)]
pub enum TargetModel {
    Poisson(PoissonTarget),
    Sk(SkTarget),
    Neural(NeuralTarget),
    Table(TableTarget),
}

macro_rules! dispatch {
    ($self:ident, $t:ident => $e:expr) => {
        match $self {
            TargetModel::Poisson($t) => $e,
            TargetModel::Sk($t) => $e,
            TargetModel::Neural($t) => $e,
            TargetModel::Table($t) => $e,
        }
    };
}

impl Target for TargetModel {
    fn dim(&self) -> usize {
        dispatch!(self, t => t.dim())
    }
    fn log_f_unchecked(&self, y: &[u32]) -> f64 {
        dispatch!(self, t => t.log_f_unchecked(y))
    }
    fn log_ratio_up_unchecked(&self, y: &[u32], i: usize) -> f64 {
        dispatch!(self, t => t.log_ratio_up_unchecked(y, i))
    }
    fn eval_mode(&self) -> EvalMode {
        dispatch!(self, t => t.eval_mode())
    }
    fn support_bound(&self) -> Option<Vec<u32>> {
        dispatch!(self, t => t.support_bound())
    }
    fn field_len(&self) -> usize {
        dispatch!(self, t => t.field_len())
    }
    fn compute_field(&self, y: &[u32], field: &mut [f64]) {
        dispatch!(self, t => t.compute_field(y, field))
    }
    fn shift_field(&self, field: &mut [f64], i: usize, up: bool) {
        dispatch!(self, t => t.shift_field(field, i, up))
    }
    fn log_ratio_up_from_field(&self, y: &[u32], field: &[f64], i: usize) -> f64 {
        dispatch!(self, t => t.log_ratio_up_from_field(y, field, i))
    }
    fn log_ratio_down_from_field(&self, y: &[u32], field: &[f64], i: usize) -> f64 {
        dispatch!(self, t => t.log_ratio_down_from_field(y, field, i))
    }
}

impl From<PoissonTarget> for TargetModel {
    fn from(t: PoissonTarget) -> Self {
        Self::Poisson(t)
    }
}
impl From<SkTarget> for TargetModel {
    fn from(t: SkTarget) -> Self {
        Self::Sk(t)
    }
}
impl From<NeuralTarget> for TargetModel {
    fn from(t: NeuralTarget) -> Self {
        Self::Neural(t)
    }
}
impl From<TableTarget> for TargetModel {
    fn from(t: TableTarget) -> Self {
        Self::Table(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_pcg::Pcg64;
    use std::f64::consts::{E, LN_2};

    fn neural_unit(mode: EvalMode) -> NeuralTarget {
        NeuralTarget::new(&DMatrix::zeros(1, 1), vec![0.0], 0.0, 1.0, mode).unwrap()
    }

    #[test]
    fn poisson_log_f_and_ratio() {
        let t = PoissonTarget::new(1, 2.0).unwrap();
        assert!((t.log_f(&[3]).unwrap() - 3.0 * LN_2).abs() < 1e-15);
        for y in 0..5 {
            assert_eq!(t.log_ratio_up(&[y], 0).unwrap(), LN_2);
        }
        assert!(matches!(
            t.log_f(&[1, 2]),
            Err(TargetError::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(PoissonTarget::new(1, 0.0).is_err());
    }

    #[test]
    fn sk_zero_state_and_boundary() {
        let mut rng = Pcg64::seed_from_u64(7);
        let w = sk_weights(5, &mut rng);
        let t = SkTarget::new(0.7, &w, EvalMode::Full).unwrap();
        assert_eq!(t.log_f(&[0; 5]).unwrap(), 0.0);
        let y = [0, 1, 0, 0, 1];
        assert_eq!(t.log_ratio_up(&y, 1).unwrap(), f64::NEG_INFINITY);
        assert!(t.log_ratio_up(&y, 0).unwrap().is_finite());
        assert_eq!(t.log_f(&[2, 0, 0, 0, 0]).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(
            t.log_ratio_up(&[2, 0, 0, 0, 0], 0),
            Err(TargetError::NotInSupport(_))
        ));
    }

    #[test]
    fn neural_unit_values() {
        for mode in [EvalMode::Full, EvalMode::Incremental] {
            let t = neural_unit(mode);
            let expect = -1.0 / (E - 1.0);
            assert!((t.log_f(&[0]).unwrap() - expect).abs() < 1e-15);
            for y in 0..6u32 {
                let r = t.log_ratio_up(&[y], 0).unwrap();
                let want = -f64::from(y).exp();
                assert!((r - want).abs() < 1e-12 * want.abs().max(1.0), "{y}: {r} vs {want}");
            }
        }
    }

    #[test]
    fn sk_bias_examples() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0]);
        assert_eq!(sk_bias(&w).unwrap(), vec![0.3, 0.3]);
        assert_eq!(sk_bias(&DMatrix::zeros(3, 3)).unwrap(), vec![0.0; 3]);

        let mut rng = Pcg64::seed_from_u64(3);
        let w = sk_weights(3, &mut rng);
        let b = sk_bias(&w).unwrap();
        for i in 0..3 {
            let col: f64 = (0..3).map(|r| w[(r, i)]).sum();
            assert!((b[i] - col).abs() < 1e-15);
        }

        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(sk_bias(&asym), Err(TargetError::NotSymmetric(0, 1))));
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(sk_bias(&diag), Err(TargetError::NonZeroDiagonal(0))));
    }

    #[test]
    fn table_rejects_holes_below_mass() {
        // (1,1) positive but (0,1) has zero mass
        let err = TableTarget::new(
            vec![1, 1],
            vec![0.0, f64::NEG_INFINITY, 0.0, 0.0],
        )
        .unwrap_err();
        match err {
            TargetError::NotDownwardClosed { state, missing } => {
                assert_eq!(&*state, &[1, 1]);
                assert_eq!(&*missing, &[0, 1]);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(TableTarget::new(vec![1], vec![f64::NEG_INFINITY; 2]).is_err());
        assert!(TableTarget::new(vec![1], vec![0.0]).is_err());
    }

    #[test]
    fn table_parses_text() {
        let t = TableTarget::parse("# y log f\n0,0 0\n0,1 -0.5\n1,0 0.25\n(1, 1) -inf\n")
            .unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.log_f(&[0, 1]).unwrap(), -0.5);
        assert_eq!(t.log_f(&[1, 1]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(t.log_f(&[2, 0]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(t.log_ratio_up(&[0, 0], 0).unwrap(), 0.25);
        assert_eq!(t.log_ratio_up(&[1, 0], 0).unwrap(), f64::NEG_INFINITY);
        assert!(TableTarget::parse("0 0 1\n1 2\n").is_err());
        assert!(TableTarget::parse("0 0 1\n0 0 2\n").is_err());
        // (1) without (0) is not downward closed
        assert!(TableTarget::parse("1 0.0\n").is_err());
    }

    #[test]
    fn neural_matches_boltzmann_form_on_binary_states() {
        let mut rng = Pcg64::seed_from_u64(11);
        let d = 4;
        let w = neural_weights(d, &mut rng);
        let b: Vec<f64> = (0..d).map(|i| 0.1 * i as f64 - 0.2).collect();
        let t = NeuralTarget::new(&w, b.clone(), 0.3, 1.5, EvalMode::Full).unwrap();
        let refr = d as f64 * (0.3f64).exp() / (1.5f64).exp_m1();
        for idx in 0..(1u32 << d) {
            let y: Vec<u32> = (0..d).map(|k| (idx >> k) & 1).collect();
            let mut boltz = 0.0;
            for i in 0..d {
                boltz += b[i] * f64::from(y[i]);
                for j in (i + 1)..d {
                    boltz += w[(i, j)] * f64::from(y[i] * y[j]);
                }
            }
            // the refractory sum over binary states only depends on sum(y)
            let ones = y.iter().filter(|&&c| c == 1).count() as f64;
            let refr_y = refr + ones * (0.3f64).exp() * ((1.5f64).exp() - 1.0) / (1.5f64).exp_m1();
            let got = t.log_f(&y).unwrap();
            assert!((got - (boltz - refr_y)).abs() < 1e-12, "{y:?}");
        }
    }
}
