//! Sigmoid (Platt) calibration of linear decision values.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::SparseLinearModel;

/// Slopes closer to zero than this are pushed to `-MIN_SLOPE` so that the
/// probability of the positive value stays strictly increasing in the
/// decision value.
pub const MIN_SLOPE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    base: SparseLinearModel,
    slope: f64,
    intercept: f64,
}

impl CalibratedModel {
    pub fn from_parts(base: SparseLinearModel, slope: f64, intercept: f64) -> Self {
        CalibratedModel {
            base,
            slope: slope.min(-MIN_SLOPE),
            intercept,
        }
    }

    pub fn base(&self) -> &SparseLinearModel {
        &self.base
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// `P(attribute = 1)` for a decision value.
    pub fn probability_of_decision(&self, f: f64) -> f64 {
        sigmoid_predict(f, self.slope, self.intercept)
    }

    /// `P(attribute = target | x)`; the two targets' probabilities sum to one.
    pub fn predict_attribute_probability(&self, x: ArrayView1<'_, f64>, target: u8) -> Result<f64> {
        let p1 = self.probability_of_decision(self.base.decision_value(x)?);
        Ok(match target {
            1 => p1,
            0 => 1.0 - p1,
            other => return Err(Error::Validation(format!("target value must be 0 or 1, got {other}"))),
        })
    }
}

/// Fits the sigmoid over the model's decision values on `(x, y)`.
pub fn calibrate_probability(model: SparseLinearModel, x: ArrayView2<'_, f64>, y: &[bool]) -> Result<CalibratedModel> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let decisions = x
        .rows()
        .into_iter()
        .map(|row| model.decision_value(row))
        .collect::<Result<Vec<_>>>()?;
    let (slope, intercept) = fit_sigmoid(&decisions, y)?;
    Ok(CalibratedModel {
        base: model,
        slope,
        intercept,
    })
}

/// Maximum-likelihood fit of `P(y=1|f) = 1 / (1 + exp(slope·f + intercept))`
/// with smoothed targets, by Newton's method with backtracking. The slope is
/// constrained to be at most `-MIN_SLOPE`.
pub fn fit_sigmoid(decisions: &[f64], y: &[bool]) -> Result<(f64, f64)> {
    let positives = y.iter().filter(|&&v| v).count() as f64;
    let negatives = y.len() as f64 - positives;
    if positives == 0.0 || negatives == 0.0 {
        return Err(Error::DegenerateLabels);
    }
    let hi = (positives + 1.0) / (positives + 2.0);
    let lo = 1.0 / (negatives + 2.0);
    let targets: Vec<f64> = y.iter().map(|&v| if v { hi } else { lo }).collect();

    let (mut a, mut b) = newton(decisions, &targets, 0.0, ((negatives + 1.0) / (positives + 1.0)).ln(), false);
    if a > -MIN_SLOPE {
        (a, b) = newton(decisions, &targets, -MIN_SLOPE, b, true);
    }
    Ok((a, b))
}

fn neg_log_likelihood(f: &[f64], t: &[f64], a: f64, b: f64) -> f64 {
    f.iter()
        .zip(t)
        .map(|(&fi, &ti)| {
            let z = fi * a + b;
            if z >= 0.0 {
                ti * z + (-z).exp().ln_1p()
            } else {
                (ti - 1.0) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

fn newton(f: &[f64], t: &[f64], a0: f64, b0: f64, fix_slope: bool) -> (f64, f64) {
    const MAX_ITER: usize = 100;
    const MIN_STEP: f64 = 1e-10;
    const RIDGE: f64 = 1e-12;
    const EPS: f64 = 1e-5;

    let (mut a, mut b) = (a0, b0);
    let mut fval = neg_log_likelihood(f, t, a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (RIDGE, RIDGE, 0.0, 0.0, 0.0);
        for (&fi, &ti) in f.iter().zip(t) {
            let z = fi * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += fi * fi * d2;
            h22 += d2;
            h21 += fi * d2;
            let d1 = ti - p;
            g1 += fi * d1;
            g2 += d1;
        }
        if fix_slope {
            g1 = 0.0;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let (da, db) = if fix_slope {
            (0.0, -g2 / h22)
        } else {
            let det = h11 * h22 - h21 * h21;
            (-(h22 * g1 - h21 * g2) / det, -(-h21 * g1 + h11 * g2) / det)
        };
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = neg_log_likelihood(f, t, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    (a, b)
}

/// Overflow-safe `1 / (1 + exp(a·f + b))`.
pub fn sigmoid_predict(f: f64, a: f64, b: f64) -> f64 {
    let z = f * a + b;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}
