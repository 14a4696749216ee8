//! Attribute→feature relation: which feature dimensions discriminate each
//! binary attribute among the seen classes.

use std::collections::BTreeSet;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_probability, CalibratedModel};
use crate::data::{AttributeTable, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::linear::{train_l1_linear, TrainParams};

/// Small ℓ2 term added to the per-attribute classifiers. Without it, exactly
/// collinear feature columns (for example several dimensions driven by the
/// same attribute) leave the ℓ1 optimum non-unique and coordinate descent
/// keeps only one of them.
pub const DEFAULT_RELATION_RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationParams {
    pub lambda: f64,
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for RelationParams {
    fn default() -> Self {
        let t = TrainParams::default();
        RelationParams {
            lambda: t.lambda,
            ridge: DEFAULT_RELATION_RIDGE,
            tol: t.tol,
            max_iter: t.max_iter,
            seed: 0,
        }
    }
}

impl RelationParams {
    fn train_params(&self, attribute: usize) -> TrainParams {
        TrainParams {
            lambda: self.lambda,
            ridge: self.ridge,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed.wrapping_add(attribute as u64),
            standardize: true,
        }
    }
}

/// Binary `d × p` matrix; entry `(i, j)` is 1 when feature `j` is relevant to
/// attribute `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMatrix {
    r: Array2<u8>,
    degenerate_rows: BTreeSet<usize>,
}

impl RelationMatrix {
    pub fn new(r: Array2<u8>, degenerate_rows: BTreeSet<usize>) -> Result<Self> {
        if let Some(((i, j), v)) = r.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::Validation(format!("relation entry ({i}, {j}) is {v}")));
        }
        if let Some(&i) = degenerate_rows.iter().find(|&&i| i >= r.nrows()) {
            return Err(Error::OutOfRange {
                index: i,
                limit: r.nrows(),
            });
        }
        if let Some(&i) = degenerate_rows.iter().find(|&&i| r.row(i).iter().any(|&v| v != 0)) {
            return Err(Error::Validation(format!("degenerate relation row {i} is not all-zero")));
        }
        Ok(RelationMatrix { r, degenerate_rows })
    }

    /// Reads a relation stored as a real-valued matrix with 0/1 entries.
    pub fn from_real(m: &Array2<f64>, degenerate_rows: BTreeSet<usize>) -> Result<Self> {
        if let Some(((i, j), v)) = m.indexed_iter().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(Error::Validation(format!("relation entry ({i}, {j}) is {v}")));
        }
        RelationMatrix::new(m.mapv(|v| v as u8), degenerate_rows)
    }

    pub fn matrix(&self) -> &Array2<u8> {
        &self.r
    }

    pub fn to_real(&self) -> Array2<f64> {
        self.r.mapv(f64::from)
    }

    pub fn degenerate_rows(&self) -> &BTreeSet<usize> {
        &self.degenerate_rows
    }

    pub fn d(&self) -> usize {
        self.r.nrows()
    }

    pub fn p(&self) -> usize {
        self.r.ncols()
    }

    pub fn get(&self, attribute: usize, dim: usize) -> bool {
        self.r[[attribute, dim]] == 1
    }

    /// Feature dimensions relevant to `attribute`, ascending.
    pub fn relevant_dims(&self, attribute: usize) -> Vec<usize> {
        self.r
            .row(attribute)
            .iter()
            .enumerate()
            .filter_map(|(j, &v)| (v == 1).then_some(j))
            .collect()
    }

    /// Dimensions relevant to no attribute at all.
    pub fn environment_dims(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|&j| self.r.column(j).iter().all(|&v| v == 0))
            .collect()
    }
}

/// See [`RelationMatrix::environment_dims`].
pub fn environment_dims(rel: &RelationMatrix) -> Vec<usize> {
    rel.environment_dims()
}

/// Per-sample labels of attribute `attr_index` for the seen-class rows of
/// `dataset`, in row order.
pub fn attribute_labels(
    dataset: &Dataset,
    attrs: &AttributeTable,
    split: &SplitSpec,
    attr_index: usize,
) -> Result<Vec<bool>> {
    if attr_index >= attrs.d() {
        return Err(Error::OutOfRange {
            index: attr_index,
            limit: attrs.d(),
        });
    }
    Ok(dataset
        .labels()
        .iter()
        .filter(|c| split.is_seen(**c))
        .map(|&c| attrs.binary_value(c, attr_index) == 1)
        .collect())
}

/// The relation matrix together with the per-attribute classifiers that
/// produced it.
#[derive(Debug, Clone)]
pub struct RelationFit {
    pub relation: RelationMatrix,
    /// Calibrated classifier per attribute; `None` for degenerate attributes.
    pub models: Vec<Option<CalibratedModel>>,
}

/// Trains one sparse classifier per attribute on all seen-class samples and
/// marks its nonzero weights as relevant dimensions.
pub fn build_relation_matrix(
    dataset: &Dataset,
    attrs: &AttributeTable,
    split: &SplitSpec,
    params: &RelationParams,
) -> Result<RelationFit> {
    let rows = dataset.indices_in(split.seen());
    if rows.is_empty() {
        return Err(Error::Validation("no seen-class samples".into()));
    }
    let x = dataset.select_rows(&rows);
    let p = dataset.p();
    let d = attrs.d();

    let fitted: Vec<Option<CalibratedModel>> = (0..d)
        .into_par_iter()
        .map(|i| -> Result<Option<CalibratedModel>> {
            let y = attribute_labels(dataset, attrs, split, i)?;
            let positives = y.iter().filter(|&&v| v).count();
            if positives == 0 || positives == y.len() {
                return Ok(None);
            }
            let model = train_l1_linear(x.view(), &y, &params.train_params(i))?;
            log::debug!(
                "attribute {i}: {} relevant dims, {} epochs",
                model.nonzero_count(),
                model.trace().epochs
            );
            calibrate_probability(model, x.view(), &y).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut r = Array2::zeros((d, p));
    let mut degenerate = BTreeSet::new();
    for (i, model) in fitted.iter().enumerate() {
        match model {
            Some(m) => {
                for j in m.base().support() {
                    r[[i, j]] = 1;
                }
            }
            None => {
                degenerate.insert(i);
            }
        }
    }
    Ok(RelationFit {
        relation: RelationMatrix::new(r, degenerate)?,
        models: fitted,
    })
}

/// Row-wise F1 between a learned and a reference relation. Rows where both
/// supports are empty score 1.
pub fn row_f1(learned: &RelationMatrix, truth: &RelationMatrix) -> Result<Vec<f64>> {
    if learned.matrix().dim() != truth.matrix().dim() {
        return Err(Error::Validation(format!(
            "relation shapes differ: {:?} vs {:?}",
            learned.matrix().dim(),
            truth.matrix().dim()
        )));
    }
    Ok(learned
        .matrix()
        .rows()
        .into_iter()
        .zip(truth.matrix().rows())
        .map(|(a, b)| {
            let tp = a.iter().zip(b.iter()).filter(|(x, y)| **x == 1 && **y == 1).count() as f64;
            let predicted = a.iter().filter(|&&v| v == 1).count() as f64;
            let actual = b.iter().filter(|&&v| v == 1).count() as f64;
            if predicted + actual == 0.0 {
                1.0
            } else {
                2.0 * tp / (predicted + actual)
            }
        })
        .collect())
}
