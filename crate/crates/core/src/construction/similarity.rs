//! Standardized class similarity (ℓ2) and attribute difference (ℓ1) over
//! continuous attribute vectors, source ranking and virtual-attribute
//! coverage.

use std::collections::BTreeSet;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeTable, ClassId, SplitSpec};
use crate::error::{Error, Result};

/// Standard deviations below this are treated as zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Mean and population standard deviation of the pairwise ℓ2 (`mu1`,
/// `sigma1`) and ℓ1 (`mu2`, `sigma2`) attribute distances over all
/// unordered class pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseStats {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

pub(crate) fn l2_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn l1_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn pairwise_stats(attrs: &AttributeTable) -> Result<PairwiseStats> {
    let k = attrs.k();
    if k < 2 {
        return Err(Error::DegenerateAttributes(format!("need at least two classes, got {k}")));
    }
    let mut l2 = Vec::with_capacity(k * (k - 1) / 2);
    let mut l1 = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            l2.push(l2_distance(attrs.continuous_row(i), attrs.continuous_row(j)));
            l1.push(l1_distance(attrs.continuous_row(i), attrs.continuous_row(j)));
        }
    }
    let (mu1, sigma1) = mean_std(&l2);
    let (mu2, sigma2) = mean_std(&l1);
    if sigma1 < SIGMA_FLOOR || sigma2 < SIGMA_FLOOR {
        return Err(Error::DegenerateAttributes(format!(
            "pairwise attribute distances are constant (sigma1={sigma1:e}, sigma2={sigma2:e})"
        )));
    }
    Ok(PairwiseStats {
        mu1,
        sigma1,
        mu2,
        sigma2,
    })
}

/// Standardized ℓ2 distance between class attribute vectors; lower means
/// more similar.
pub fn class_similarity(attrs: &AttributeTable, stats: &PairwiseStats, i: ClassId, j: ClassId) -> Result<f64> {
    if i == j {
        return Err(Error::SelfPair(i));
    }
    Ok((l2_distance(attrs.continuous_row(i), attrs.continuous_row(j)) - stats.mu1) / stats.sigma1)
}

/// Standardized total absolute attribute difference.
pub fn attribute_difference(attrs: &AttributeTable, stats: &PairwiseStats, i: ClassId, j: ClassId) -> Result<f64> {
    if i == j {
        return Err(Error::SelfPair(i));
    }
    Ok((l1_distance(attrs.continuous_row(i), attrs.continuous_row(j)) - stats.mu2) / stats.sigma2)
}

/// All seen classes ordered by ascending similarity score to `u`; ties go
/// to the lower class id.
pub fn rank_source_candidates(
    attrs: &AttributeTable,
    stats: &PairwiseStats,
    split: &SplitSpec,
    u: ClassId,
) -> Result<Vec<ClassId>> {
    let mut scored = split
        .seen()
        .iter()
        .map(|&s| class_similarity(attrs, stats, u, s).map(|phi| (phi, s)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, s)| s).collect())
}

/// Number of `u`'s binary attributes that no class in `sources` carries.
///
/// The virtual attribute vector takes `u`'s value wherever some source class
/// shares it and the first source's value elsewhere; the result is its
/// Hamming distance to `u`'s binary row.
pub fn virtual_attribute_hamming(attrs: &AttributeTable, sources: &[ClassId], u: ClassId) -> usize {
    let Some(&first) = sources.first() else {
        return attrs.d();
    };
    (0..attrs.d())
        .filter(|&n| {
            let target = attrs.binary_value(u, n);
            let virtual_value = if sources.iter().any(|&s| attrs.binary_value(s, n) == target) {
                target
            } else {
                attrs.binary_value(first, n)
            };
            virtual_value != target
        })
        .count()
}

/// Whether any seen class carries `value` at `attribute`.
pub fn is_coverable(attrs: &AttributeTable, seen: &BTreeSet<ClassId>, attribute: usize, value: u8) -> bool {
    seen.iter().any(|&s| attrs.binary_value(s, attribute) == value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn table(cont: Array2<f64>, bin: Array2<u8>) -> AttributeTable {
        let k = cont.nrows();
        AttributeTable::new(cont, bin, (0..k).map(|c| format!("c{c}")).collect()).unwrap()
    }

    fn three_classes() -> AttributeTable {
        table(array![[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]], Array2::zeros((3, 2)))
    }

    #[test]
    fn stats_worked_example() {
        let s = pairwise_stats(&three_classes()).unwrap();
        assert!((s.mu1 - 10.0 / 3.0).abs() < 1e-12);
        assert!((s.sigma1 - (50.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!((s.sigma1 - 2.3570).abs() < 1e-4);
        assert!((s.mu2 - 14.0 / 3.0).abs() < 1e-12);
        assert!((s.sigma2 - 3.2998).abs() < 1e-4);
    }

    #[test]
    fn identical_classes_are_degenerate() {
        let t = table(Array2::ones((3, 2)), Array2::zeros((3, 2)));
        assert!(matches!(pairwise_stats(&t), Err(Error::DegenerateAttributes(_))));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn phi_and_psi_worked_example() {
        let t = three_classes();
        let s = pairwise_stats(&t).unwrap();
        let phi = class_similarity(&t, &s, 1, 2).unwrap();
        assert!((phi - 0.7071).abs() < 1e-4);
        let psi = attribute_difference(&t, &s, 1, 2).unwrap();
        assert!((psi - 0.7071).abs() < 1e-4);
        // Classes 0 and 2 share attributes.
        assert_eq!(class_similarity(&t, &s, 0, 2).unwrap(), -s.mu1 / s.sigma1);
        assert_eq!(attribute_difference(&t, &s, 0, 2).unwrap(), -s.mu2 / s.sigma2);
        assert!(matches!(class_similarity(&t, &s, 1, 1), Err(Error::SelfPair(1))));
        assert!(matches!(attribute_difference(&t, &s, 0, 0), Err(Error::SelfPair(0))));
    }

    #[test]
    fn ranking_prefers_twin_and_breaks_ties_by_id() {
        let t = table(
            array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [5.0, 5.0]],
            Array2::zeros((5, 2)),
        );
        let s = pairwise_stats(&t).unwrap();
        let split = SplitSpec::new(BTreeSet::from([1, 2, 3, 4]), BTreeSet::from([0])).unwrap();
        let rank = rank_source_candidates(&t, &s, &split, 0).unwrap();
        assert_eq!(rank, vec![3, 1, 2, 4]);
    }

    #[test]
    fn hamming_coverage() {
        let t = table(
            Array2::zeros((4, 3)),
            array![[1, 0, 1], [1, 0, 0], [0, 0, 1], [1, 0, 1]],
        );
        assert_eq!(virtual_attribute_hamming(&t, &[1, 2], 0), 0);
        assert_eq!(virtual_attribute_hamming(&t, &[3], 0), 0);
        assert_eq!(virtual_attribute_hamming(&t, &[2], 0), 1);

        let t = table(Array2::zeros((2, 2)), array![[1, 1], [0, 0]]);
        assert_eq!(virtual_attribute_hamming(&t, &[1], 0), 2);
    }
}
