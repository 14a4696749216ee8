//! Source-class selection per unseen class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::assignment;
use super::similarity::{attribute_difference, class_similarity, rank_source_candidates, virtual_attribute_hamming, PairwiseStats};
use crate::data::{AttributeTable, ClassId, SplitSpec};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_K_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanParams {
    /// Number of source classes when `auto_k` is off.
    pub k: usize,
    /// Pick the smallest `k` in `2..=k_max` whose sources cover all of the
    /// unseen class's binary attributes.
    pub auto_k: bool,
    pub k_max: usize,
}

impl Default for PlanParams {
    fn default() -> Self {
        PlanParams {
            k: DEFAULT_K,
            auto_k: false,
            k_max: DEFAULT_K_MAX,
        }
    }
}

/// Sources chosen for one unseen class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSources {
    /// `[S1, ..., Sk]`; `S1` is the assigned primary source.
    pub sources: Vec<ClassId>,
    /// `φ + ψ` of the primary assignment.
    pub assignment_cost: f64,
    /// Binary attributes of the unseen class no source carries.
    pub hamming_reference: usize,
}

impl ClassSources {
    pub fn primary(&self) -> ClassId {
        self.sources[0]
    }

    pub fn secondary(&self) -> &[ClassId] {
        &self.sources[1..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePlan {
    pub classes: BTreeMap<ClassId, ClassSources>,
}

impl SourcePlan {
    pub fn get(&self, u: ClassId) -> Result<&ClassSources> {
        self.classes
            .get(&u)
            .ok_or_else(|| Error::Validation(format!("source plan has no entry for class {u}")))
    }

    pub fn total_cost(&self) -> f64 {
        self.classes.values().map(|c| c.assignment_cost).sum()
    }

    /// CSV rows `unseen_id,S1,...,Sk,cost,hamming`. Rows may differ in
    /// length when `k` was chosen per class.
    pub fn to_csv(&self) -> String {
        let k = self.classes.values().map(|c| c.sources.len()).max().unwrap_or(0);
        let mut out = String::from("unseen_id");
        for i in 1..=k {
            out.push_str(&format!(",S{i}"));
        }
        out.push_str(",cost,hamming\n");
        for (u, c) in &self.classes {
            out.push_str(&u.to_string());
            for s in &c.sources {
                out.push_str(&format!(",{s}"));
            }
            out.push_str(&format!(",{},{}\n", c.assignment_cost, c.hamming_reference));
        }
        out
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut classes = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 4 {
                return Err(format!("line {}: expected at least 4 fields", i + 1));
            }
            let bad = |what: &str| format!("line {}: bad {what}", i + 1);
            let u: ClassId = fields[0].parse().map_err(|_| bad("unseen id"))?;
            let sources = fields[1..fields.len() - 2]
                .iter()
                .map(|s| s.parse().map_err(|_| bad("source id")))
                .collect::<std::result::Result<Vec<ClassId>, _>>()?;
            let assignment_cost = fields[fields.len() - 2].parse().map_err(|_| bad("cost"))?;
            let hamming_reference = fields[fields.len() - 1].parse().map_err(|_| bad("hamming"))?;
            classes.insert(
                u,
                ClassSources {
                    sources,
                    assignment_cost,
                    hamming_reference,
                },
            );
        }
        Ok(SourcePlan { classes })
    }
}

/// Cost matrix `φ + ψ` with unseen classes as rows and seen classes as
/// columns, both ascending by id.
pub fn assignment_costs(attrs: &AttributeTable, stats: &PairwiseStats, split: &SplitSpec) -> Result<Vec<Vec<f64>>> {
    split
        .unseen()
        .iter()
        .map(|&u| {
            split
                .seen()
                .iter()
                .map(|&s| Ok(class_similarity(attrs, stats, u, s)? + attribute_difference(attrs, stats, u, s)?))
                .collect()
        })
        .collect()
}

/// Injective unseen→seen map minimizing the summed `φ + ψ`.
pub fn assign_primary_sources(
    attrs: &AttributeTable,
    stats: &PairwiseStats,
    split: &SplitSpec,
) -> Result<BTreeMap<ClassId, ClassId>> {
    let (ks, ku) = (split.seen().len(), split.unseen().len());
    if ks < ku {
        return Err(Error::Infeasible { seen: ks, unseen: ku });
    }
    let costs = assignment_costs(attrs, stats, split)?;
    let seen: Vec<ClassId> = split.seen().iter().copied().collect();
    let chosen = assignment::solve(&costs);
    Ok(split
        .unseen()
        .iter()
        .zip(chosen)
        .map(|(&u, col)| (u, seen[col]))
        .collect())
}

pub fn build_source_plan(
    attrs: &AttributeTable,
    stats: &PairwiseStats,
    split: &SplitSpec,
    params: &PlanParams,
) -> Result<SourcePlan> {
    if params.auto_k && params.k_max < 2 {
        return Err(Error::Config(format!("k_max must be at least 2, got {}", params.k_max)));
    }
    if !params.auto_k && params.k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let primaries = assign_primary_sources(attrs, stats, split)?;
    let mut classes = BTreeMap::new();
    for (&u, &s1) in &primaries {
        let ranked = rank_source_candidates(attrs, stats, split, u)?;
        let mut ordered = vec![s1];
        ordered.extend(ranked.into_iter().filter(|&s| s != s1));

        let k = if params.auto_k {
            let upper = params.k_max.min(ordered.len());
            (2..=upper)
                .find(|&k| virtual_attribute_hamming(attrs, &ordered[..k], u) == 0)
                .unwrap_or(upper)
        } else {
            params.k.min(ordered.len())
        };
        ordered.truncate(k);
        let cost = class_similarity(attrs, stats, u, s1)? + attribute_difference(attrs, stats, u, s1)?;
        classes.insert(
            u,
            ClassSources {
                hamming_reference: virtual_attribute_hamming(attrs, &ordered, u),
                sources: ordered,
                assignment_cost: cost,
            },
        );
    }
    Ok(SourcePlan { classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::similarity::pairwise_stats;
    use ndarray::{array, Array2};
    use std::collections::BTreeSet;

    fn table(cont: Array2<f64>, bin: Array2<u8>) -> AttributeTable {
        let k = cont.nrows();
        AttributeTable::new(cont, bin, (0..k).map(|c| format!("c{c}")).collect()).unwrap()
    }

    fn fixture() -> (AttributeTable, SplitSpec) {
        let bin = array![
            [1u8, 0, 1, 0],
            [1, 1, 0, 0],
            [0, 0, 1, 1],
            [1, 0, 1, 1],
            [0, 1, 0, 1],
            [1, 0, 0, 0],
            [1, 0, 1, 0],
        ];
        let cont = bin.mapv(|v| f64::from(v) * 0.9 + 0.05) + array![[0.0, 0.01, 0.02, 0.03]];
        let split = SplitSpec::new(BTreeSet::from([0, 1, 2, 3, 4]), BTreeSet::from([5, 6])).unwrap();
        (table(cont, bin), split)
    }

    #[test]
    fn infeasible_when_more_unseen_than_seen() {
        let (attrs, _) = fixture();
        let split = SplitSpec::new(BTreeSet::from([0, 1]), BTreeSet::from([2, 3, 4])).unwrap();
        let stats = pairwise_stats(&attrs).unwrap();
        assert!(matches!(
            assign_primary_sources(&attrs, &stats, &split),
            Err(Error::Infeasible { seen: 2, unseen: 3 })
        ));
    }

    #[test]
    fn single_unseen_takes_row_minimum() {
        let (attrs, _) = fixture();
        let split = SplitSpec::new(BTreeSet::from([0, 1, 2, 3, 4]), BTreeSet::from([6])).unwrap();
        let stats = pairwise_stats(&attrs).unwrap();
        let costs = assignment_costs(&attrs, &stats, &split).unwrap();
        let best = costs[0]
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(assign_primary_sources(&attrs, &stats, &split).unwrap()[&6], best);
    }

    #[test]
    fn plan_with_k_one_and_k_default() {
        let (attrs, split) = fixture();
        let stats = pairwise_stats(&attrs).unwrap();
        let p1 = build_source_plan(&attrs, &stats, &split, &PlanParams { k: 1, ..Default::default() }).unwrap();
        assert!(p1.classes.values().all(|c| c.sources.len() == 1));
        let p5 = build_source_plan(&attrs, &stats, &split, &PlanParams::default()).unwrap();
        for (u, c) in &p5.classes {
            assert_eq!(c.sources.len(), 5);
            assert_eq!(c.primary(), p1.classes[u].primary());
            let distinct: BTreeSet<_> = c.sources.iter().collect();
            assert_eq!(distinct.len(), 5);
        }
        let s1: BTreeSet<_> = p5.classes.values().map(|c| c.primary()).collect();
        assert_eq!(s1.len(), 2);
    }

    #[test]
    fn auto_k_stops_at_two_when_twin_covers_everything() {
        let (attrs, _) = fixture();
        // Class 6 is the binary twin of class 0.
        let split = SplitSpec::new(BTreeSet::from([0, 1, 2, 3, 4]), BTreeSet::from([6])).unwrap();
        let stats = pairwise_stats(&attrs).unwrap();
        let plan = build_source_plan(
            &attrs,
            &stats,
            &split,
            &PlanParams {
                auto_k: true,
                k_max: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let c = &plan.classes[&6];
        assert_eq!(c.primary(), 0);
        assert_eq!(c.sources.len(), 2);
        assert_eq!(c.hamming_reference, 0);
    }

    #[test]
    fn csv_round_trip() {
        let (attrs, split) = fixture();
        let stats = pairwise_stats(&attrs).unwrap();
        let plan = build_source_plan(&attrs, &stats, &split, &PlanParams::default()).unwrap();
        assert_eq!(SourcePlan::from_csv(&plan.to_csv()).unwrap(), plan);
    }
}
