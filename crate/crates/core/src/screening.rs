//! Dissimilarity-representation screening of constructed samples.
//!
//! A class (or a sample) is described by its squared distances to the seen
//! classes, divided by the sum of squared pairwise distances among the
//! reference classes, then ℓ1-normalized. The same description exists in
//! attribute space (class attribute vectors) and in feature space (seen-class
//! centroids), so a constructed sample can be compared against its target
//! class's attribute-space profile.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::construction::ConstructedSample;
use crate::data::{AttributeTable, ClassId, SplitSpec};
use crate::error::{Error, Result};

pub const DEFAULT_KEEP_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Attribute,
    Feature,
}

impl Space {
    fn name(self) -> &'static str {
        match self {
            Space::Attribute => "attribute",
            Space::Feature => "feature",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityVector {
    /// ℓ1-normalized entries, one per seen class in ascending id order.
    pub values: Vec<f64>,
    /// Unnormalized `‖x - c_j‖² / θ²`.
    pub raw: Vec<f64>,
    pub space: Space,
}

impl DissimilarityVector {
    /// Builds the vector from squared distances and the normalizer `θ²`.
    ///
    /// The normalized entries are computed from the squared distances
    /// directly, so they do not depend on `θ²` at all.
    pub fn from_squared(squared: Vec<f64>, theta_sq: f64, space: Space) -> Result<Self> {
        if theta_sq <= 0.0 || !theta_sq.is_finite() {
            return Err(Error::DegenerateDissimilarity(space.name()));
        }
        let total: f64 = squared.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::DegenerateDissimilarity(space.name()));
        }
        Ok(DissimilarityVector {
            values: squared.iter().map(|d| d / total).collect(),
            raw: squared.iter().map(|d| d / theta_sq).collect(),
            space,
        })
    }
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pairwise_squared_sum<'a>(points: &[ArrayView1<'a, f64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            total += squared_distance(points[i], points[j]);
        }
    }
    total
}

/// Attribute-space profile of class `u` against the seen classes. `θ²` sums
/// over all class pairs of the attribute table.
pub fn dissimilarity_attribute(attrs: &AttributeTable, split: &SplitSpec, u: ClassId) -> Result<DissimilarityVector> {
    if split.seen().len() < 2 {
        return Err(Error::Validation("need at least two seen classes".into()));
    }
    let all: Vec<_> = (0..attrs.k()).map(|c| attrs.continuous_row(c)).collect();
    let theta_sq = pairwise_squared_sum(&all);
    let squared = split
        .seen()
        .iter()
        .map(|&s| squared_distance(attrs.continuous_row(u), attrs.continuous_row(s)))
        .collect();
    DissimilarityVector::from_squared(squared, theta_sq, Space::Attribute)
}

/// Seen-class centroids in ascending class order with their `θ²`.
#[derive(Debug, Clone)]
pub struct CentroidReference {
    pub classes: Vec<ClassId>,
    pub centroids: Vec<Array1<f64>>,
    pub theta_sq: f64,
}

impl CentroidReference {
    pub fn new(centroids: &BTreeMap<ClassId, Array1<f64>>) -> Result<Self> {
        let classes: Vec<ClassId> = centroids.keys().copied().collect();
        let centroids: Vec<Array1<f64>> = centroids.values().cloned().collect();
        let views: Vec<_> = centroids.iter().map(|c| c.view()).collect();
        let theta_sq = pairwise_squared_sum(&views);
        if theta_sq <= 0.0 || !theta_sq.is_finite() {
            return Err(Error::DegenerateDissimilarity(Space::Feature.name()));
        }
        Ok(CentroidReference {
            classes,
            centroids,
            theta_sq,
        })
    }
}

/// Feature-space profile of one sample against the seen-class centroids.
pub fn dissimilarity_feature(sample: ArrayView1<'_, f64>, reference: &CentroidReference) -> Result<DissimilarityVector> {
    if let Some(c) = reference.centroids.first() {
        if c.len() != sample.len() {
            return Err(Error::Dimension {
                expected: c.len(),
                actual: sample.len(),
            });
        }
    }
    let squared = reference
        .centroids
        .iter()
        .map(|c| squared_distance(sample, c.view()))
        .collect();
    DissimilarityVector::from_squared(squared, reference.theta_sq, Space::Feature)
}

/// ℓ1 norm of the component-wise difference.
pub fn difference_value(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenOutcome {
    /// Kept samples in ascending score order.
    pub kept: Vec<ConstructedSample>,
    /// Discarded samples in ascending score order.
    pub rejected: Vec<ConstructedSample>,
}

/// Number of samples kept out of `count`.
pub fn keep_count(count: usize, keep_fraction: f64) -> usize {
    ((keep_fraction * count as f64).ceil() as usize).clamp(1, count.max(1))
}

/// Scores every sample by `|D_f - D_a|₁` and keeps the best
/// `⌈keep_fraction · n⌉` (at least one); ties go to the lower base row.
pub fn screen_samples(
    constructed: Vec<ConstructedSample>,
    target: &DissimilarityVector,
    reference: &CentroidReference,
    keep_fraction: f64,
) -> Result<ScreenOutcome> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep_fraction must be in (0, 1], got {keep_fraction}")));
    }
    if constructed.is_empty() {
        return Err(Error::Validation("no constructed samples to screen".into()));
    }
    let mut scored = constructed
        .into_par_iter()
        .map(|mut s| {
            let df = dissimilarity_feature(ArrayView1::from(&s.feature[..]), reference)?;
            s.screen_score = Some(difference_value(&df.values, &target.values));
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        a.screen_score
            .unwrap()
            .total_cmp(&b.screen_score.unwrap())
            .then(a.base_sample.cmp(&b.base_sample))
    });
    let keep = keep_count(scored.len(), keep_fraction);
    let rejected = scored.split_off(keep);
    Ok(ScreenOutcome {
        kept: scored,
        rejected,
    })
}
