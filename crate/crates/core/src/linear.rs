//! Sparse linear binary classifiers.
//!
//! Training minimizes
//!
//! ```text
//! (1/n) Σ max(0, 1 - y_i (w·x_i + b))²  +  λ‖w‖₁  +  (ρ/2)‖w‖²
//! ```
//!
//! over `(w, b)` with `y_i ∈ {-1, +1}` by cyclic coordinate descent. Each
//! weight update is the soft-thresholded Newton step on the coordinate's
//! piecewise-quadratic restriction, guarded by a backtracking line search so
//! the objective never increases. The bias is an unpenalized coordinate.
//! `ρ` defaults to zero (pure ℓ1 model).

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.05;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Relative magnitude below which a weight counts as zero.
pub const NONZERO_RELATIVE: f64 = 1e-6;

const HESSIAN_FLOOR: f64 = 1e-12;
const LINE_SEARCH_SIGMA: f64 = 0.01;
const LINE_SEARCH_STEPS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    /// ℓ1 penalty strength.
    pub lambda: f64,
    /// ℓ2 penalty strength.
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// z-score columns before training; the transform is kept in the model.
    pub standardize: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lambda: DEFAULT_LAMBDA,
            ridge: 0.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            standardize: true,
        }
    }
}

/// Per-column affine transform `(x - mean) / scale`; constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(var.sqrt());
        }
        Standardizer { mean, scale }
    }

    #[inline]
    pub fn apply(&self, j: usize, v: f64) -> f64 {
        let s = self.scale[j];
        if s > 0.0 {
            (v - self.mean[j]) / s
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverTrace {
    pub epochs: usize,
    pub converged: bool,
    /// Penalized objective after each epoch, starting with the initial point.
    pub objectives: Vec<f64>,
    /// Largest optimality violation at the returned point.
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLinearModel {
    weights: Vec<f64>,
    bias: f64,
    lambda: f64,
    ridge: f64,
    nonzero_count: usize,
    standardizer: Option<Standardizer>,
    #[serde(skip)]
    trace: SolverTrace,
}

impl SparseLinearModel {
    /// Builds a model from explicit parameters (no input transform).
    pub fn from_parts(weights: Vec<f64>, bias: f64, lambda: f64) -> Self {
        let nonzero_count = count_nonzero(&weights);
        SparseLinearModel {
            weights,
            bias,
            lambda,
            ridge: 0.0,
            nonzero_count,
            standardizer: None,
            trace: SolverTrace::default(),
        }
    }

    /// Weights in the (possibly standardized) training space.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn nonzero_count(&self) -> usize {
        self.nonzero_count
    }

    pub fn p(&self) -> usize {
        self.weights.len()
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn trace(&self) -> &SolverTrace {
        &self.trace
    }

    /// Indices `j` whose weight is nonzero under the relative-magnitude rule.
    pub fn support(&self) -> Vec<usize> {
        let max = max_abs(&self.weights);
        (0..self.weights.len())
            .filter(|&j| is_nonzero(self.weights[j], max))
            .collect()
    }

    /// `w·x + b`, applying the stored standardization first.
    pub fn decision_value(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(self.decision_value_unchecked(x))
    }

    pub(crate) fn decision_value_unchecked(&self, x: ArrayView1<'_, f64>) -> f64 {
        let dot: f64 = match &self.standardizer {
            Some(s) => self
                .weights
                .iter()
                .zip(x.iter())
                .enumerate()
                .filter(|(_, (w, _))| **w != 0.0)
                .map(|(j, (w, v))| w * s.apply(j, *v))
                .sum(),
            None => self.weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum(),
        };
        dot + self.bias
    }
}

fn max_abs(w: &[f64]) -> f64 {
    w.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[inline]
fn is_nonzero(w: f64, max_abs: f64) -> bool {
    w != 0.0 && w.abs() > NONZERO_RELATIVE * max_abs
}

pub fn count_nonzero(w: &[f64]) -> usize {
    let max = max_abs(w);
    w.iter().filter(|&&v| is_nonzero(v, max)).count()
}

/// Penalized training objective at `(w, b)` on raw (already transformed)
/// columns. Used by tests and by the solver trace.
pub fn objective(cols: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, lambda: f64, ridge: f64) -> f64 {
    let n = y.len();
    let mut loss = 0.0;
    for i in 0..n {
        let f: f64 = cols.iter().zip(w).map(|(c, wj)| c[i] * wj).sum::<f64>() + b;
        let s = 1.0 - y[i] * f;
        if s > 0.0 {
            loss += s * s;
        }
    }
    loss / n as f64 + penalty(w, lambda, ridge)
}

fn penalty(w: &[f64], lambda: f64, ridge: f64) -> f64 {
    lambda * w.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * ridge * w.iter().map(|v| v * v).sum::<f64>()
}

fn check_inputs(x: ArrayView2<'_, f64>, y: &[bool]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

/// Trains an ℓ1-regularized squared-hinge linear classifier.
pub fn train_l1_linear(x: ArrayView2<'_, f64>, y: &[bool], params: &TrainParams) -> Result<SparseLinearModel> {
    if params.lambda.is_nan() || params.lambda <= 0.0 {
        return Err(Error::Config(format!("lambda must be positive, got {}", params.lambda)));
    }
    train_linear(x, y, params)
}

/// Trains with arbitrary non-negative ℓ1 and ℓ2 strengths (at least one
/// positive). The ℓ2-only case backs the one-vs-rest evaluation classifier.
pub fn train_linear(x: ArrayView2<'_, f64>, y: &[bool], params: &TrainParams) -> Result<SparseLinearModel> {
    check_inputs(x, y)?;
    let total = params.lambda + params.ridge;
    if params.lambda < 0.0 || params.ridge < 0.0 || total.is_nan() || total <= 0.0 {
        return Err(Error::Config(format!(
            "penalties must be non-negative with a positive total, got lambda={} ridge={}",
            params.lambda, params.ridge
        )));
    }
    if params.tol.is_nan() || params.tol <= 0.0 || params.max_iter == 0 {
        return Err(Error::Config("tol must be positive and max_iter at least 1".into()));
    }
    let standardizer = params.standardize.then(|| Standardizer::fit(x));
    let cols: Vec<Vec<f64>> = x
        .columns()
        .into_iter()
        .enumerate()
        .map(|(j, c)| match &standardizer {
            Some(s) => c.iter().map(|&v| s.apply(j, v)).collect(),
            None => c.to_vec(),
        })
        .collect();
    let signs: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
    let (weights, bias, trace) = CoordinateDescent::new(&cols, &signs, params.lambda, params.ridge).run(params);
    Ok(SparseLinearModel {
        nonzero_count: count_nonzero(&weights),
        weights,
        bias,
        lambda: params.lambda,
        ridge: params.ridge,
        standardizer,
        trace,
    })
}

struct CoordinateDescent<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    lambda: f64,
    ridge: f64,
    w: Vec<f64>,
    b: f64,
    /// `1 - y_i f(x_i)` for every sample.
    slack: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> CoordinateDescent<'a> {
    fn new(cols: &'a [Vec<f64>], y: &'a [f64], lambda: f64, ridge: f64) -> Self {
        let n = y.len();
        CoordinateDescent {
            cols,
            y,
            lambda,
            ridge,
            w: vec![0.0; cols.len()],
            b: 0.0,
            slack: vec![1.0; n],
            scratch: vec![0.0; n],
        }
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn loss(slack: &[f64]) -> f64 {
        slack.iter().filter(|&&s| s > 0.0).map(|s| s * s).sum()
    }

    fn objective(&self) -> f64 {
        Self::loss(&self.slack) / self.n() + penalty(&self.w, self.lambda, self.ridge)
    }

    /// Loss gradient and generalized second derivative along a direction
    /// `col` (`None` for the bias).
    fn derivatives(&self, col: Option<&[f64]>) -> (f64, f64) {
        let mut g = 0.0;
        let mut h = 0.0;
        for i in 0..self.slack.len() {
            let s = self.slack[i];
            if s > 0.0 {
                let xi = col.map_or(1.0, |c| c[i]);
                g -= self.y[i] * xi * s;
                h += xi * xi;
            }
        }
        let scale = 2.0 / self.n();
        (g * scale, h * scale)
    }

    fn violation(&self, j: usize) -> f64 {
        let (g, _) = self.derivatives(Some(&self.cols[j]));
        let g = g + self.ridge * self.w[j];
        let wj = self.w[j];
        if wj > 0.0 {
            (g + self.lambda).abs()
        } else if wj < 0.0 {
            (g - self.lambda).abs()
        } else {
            (g.abs() - self.lambda).max(0.0)
        }
    }

    fn max_violation(&self) -> f64 {
        let bias = self.derivatives(None).0.abs();
        (0..self.cols.len()).map(|j| self.violation(j)).fold(bias, f64::max)
    }

    /// Tries `coord += step * d` with halving; `decrease` is the predicted
    /// change of the penalized objective for the full step. Returns whether
    /// a step was taken.
    fn line_search(&mut self, col: Option<usize>, d: f64, decrease: f64) -> bool {
        let n = self.n();
        let old_loss = Self::loss(&self.slack) / n;
        let (wj, l1, l2) = match col {
            Some(j) => (self.w[j], self.lambda, self.ridge),
            None => (self.b, 0.0, 0.0),
        };
        let old_pen = l1 * wj.abs() + 0.5 * l2 * wj * wj;
        let mut step = 1.0;
        for _ in 0..LINE_SEARCH_STEPS {
            let delta = step * d;
            let new = wj + delta;
            for i in 0..self.slack.len() {
                let xi = col.map_or(1.0, |j| self.cols[j][i]);
                self.scratch[i] = self.slack[i] - self.y[i] * xi * delta;
            }
            let new_obj = Self::loss(&self.scratch) / n + l1 * new.abs() + 0.5 * l2 * new * new;
            if new_obj - (old_loss + old_pen) <= LINE_SEARCH_SIGMA * step * decrease {
                std::mem::swap(&mut self.slack, &mut self.scratch);
                match col {
                    Some(j) => self.w[j] = new,
                    None => self.b = new,
                }
                return true;
            }
            step *= 0.5;
        }
        false
    }

    fn update_weight(&mut self, j: usize) {
        let (g, h) = self.derivatives(Some(&self.cols[j]));
        let wj = self.w[j];
        let g = g + self.ridge * wj;
        let h = (h + self.ridge).max(HESSIAN_FLOOR);
        let d = if g + self.lambda <= h * wj {
            -(g + self.lambda) / h
        } else if g - self.lambda >= h * wj {
            -(g - self.lambda) / h
        } else {
            -wj
        };
        if d == 0.0 {
            return;
        }
        let decrease = g * d + self.lambda * ((wj + d).abs() - wj.abs());
        if decrease >= 0.0 {
            return;
        }
        self.line_search(Some(j), d, decrease);
    }

    fn update_bias(&mut self) {
        let (g, h) = self.derivatives(None);
        if g == 0.0 {
            return;
        }
        let d = -g / h.max(HESSIAN_FLOOR);
        self.line_search(None, d, g * d);
    }

    fn run(mut self, params: &TrainParams) -> (Vec<f64>, f64, SolverTrace) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..self.cols.len()).collect();
        let mut trace = SolverTrace {
            objectives: vec![self.objective()],
            ..SolverTrace::default()
        };
        let mut violation = self.max_violation();
        while violation > params.tol && trace.epochs < params.max_iter {
            order.shuffle(&mut rng);
            for &j in &order {
                self.update_weight(j);
            }
            self.update_bias();
            trace.epochs += 1;
            trace.objectives.push(self.objective());
            violation = self.max_violation();
        }
        trace.converged = violation <= params.tol;
        trace.max_violation = violation;
        if !trace.converged {
            log::debug!(
                "coordinate descent stopped after {} epochs with violation {violation:e}",
                trace.epochs
            );
        }
        (self.w, self.b, trace)
    }
}
