//! Donor selection and feature splicing.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::plan::SourcePlan;
use super::similarity::{is_coverable, rank_source_candidates, PairwiseStats};
use crate::calibration::CalibratedModel;
use crate::data::{AttributeTable, ClassId, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::relation::RelationMatrix;

pub const DEFAULT_SHORTLIST: usize = 10;

/// Where a constructed feature value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Kept from the base (`S1`) sample.
    Retained,
    /// Copied from the dataset row with this index.
    Donor(usize),
    /// Drawn at random (baseline constructions only).
    Drawn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructedSample {
    pub feature: Vec<f64>,
    pub target_class: ClassId,
    /// Dataset row of the `S1` sample the splice started from.
    pub base_sample: usize,
    pub provenance: Vec<Provenance>,
    pub screen_score: Option<f64>,
}

impl ConstructedSample {
    /// Dataset row that supplied dimension `dim`; `None` for drawn values.
    pub fn source_of(&self, dim: usize) -> Option<usize> {
        match self.provenance[dim] {
            Provenance::Retained => Some(self.base_sample),
            Provenance::Donor(d) => Some(d),
            Provenance::Drawn => None,
        }
    }

    /// Dimensions overwritten by donors, ascending.
    pub fn spliced_dims(&self) -> Vec<usize> {
        self.provenance
            .iter()
            .enumerate()
            .filter_map(|(j, p)| matches!(p, Provenance::Donor(_)).then_some(j))
            .collect()
    }
}

/// Constructed samples of one unseen class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConstruction {
    pub samples: Vec<ConstructedSample>,
    /// Differing attributes whose target value no seen class carries.
    pub skipped_attributes: Vec<usize>,
}

/// Read-only inputs shared by donor selection and splicing.
#[derive(Clone, Copy)]
pub struct SpliceContext<'a> {
    pub dataset: &'a Dataset,
    pub attrs: &'a AttributeTable,
    pub split: &'a SplitSpec,
    pub stats: &'a PairwiseStats,
    pub relation: &'a RelationMatrix,
    pub plan: &'a SourcePlan,
    /// Calibrated per-attribute classifier; `None` for degenerate attributes.
    pub models: &'a [Option<CalibratedModel>],
    /// Shortlist size after environment matching.
    pub shortlist: usize,
}

impl<'a> SpliceContext<'a> {
    fn check(&self) -> Result<()> {
        if self.relation.d() != self.attrs.d() || self.relation.p() != self.dataset.p() {
            return Err(Error::Validation(format!(
                "relation is {}x{} but data has {} attributes and {} features",
                self.relation.d(),
                self.relation.p(),
                self.attrs.d(),
                self.dataset.p()
            )));
        }
        if self.models.len() != self.attrs.d() {
            return Err(Error::Dimension {
                expected: self.attrs.d(),
                actual: self.models.len(),
            });
        }
        if self.shortlist == 0 {
            return Err(Error::Config("shortlist size must be at least 1".into()));
        }
        Ok(())
    }
}

fn env_distance_sq(dataset: &Dataset, a: usize, b: usize, env: &[usize]) -> f64 {
    let (ra, rb) = (dataset.row(a), dataset.row(b));
    env.iter().map(|&j| (ra[j] - rb[j]) * (ra[j] - rb[j])).sum()
}

/// Candidate donor classes for `attr_index`, best first: sources `S2..Sk`
/// carrying the target value, or, failing that, every seen class carrying
/// it by ascending similarity.
fn donor_classes(ctx: &SpliceContext<'_>, u: ClassId, attr_index: usize) -> Result<Vec<ClassId>> {
    let target = ctx.attrs.binary_value(u, attr_index);
    if !is_coverable(ctx.attrs, ctx.split.seen(), attr_index, target) {
        return Err(Error::UncoverableAttribute {
            class: u,
            attribute: attr_index,
            value: target,
        });
    }
    let carries = |s: &ClassId| ctx.attrs.binary_value(*s, attr_index) == target;
    let from_plan: Vec<ClassId> = ctx.plan.get(u)?.secondary().iter().copied().filter(carries).collect();
    if !from_plan.is_empty() {
        return Ok(from_plan);
    }
    Ok(rank_source_candidates(ctx.attrs, ctx.stats, ctx.split, u)?
        .into_iter()
        .filter(carries)
        .collect())
}

/// Picks the donor row for replacing `attr_index` in base row `base`.
///
/// Samples of the best donor class are shortlisted by environment distance
/// to the base sample (`m` closest); the shortlist member with the highest
/// calibrated probability of the target attribute value wins, ties going to
/// the lowest row index.
pub fn select_donor_sample(
    ctx: &SpliceContext<'_>,
    env: &[usize],
    u: ClassId,
    base: usize,
    attr_index: usize,
    m: usize,
) -> Result<usize> {
    let target = ctx.attrs.binary_value(u, attr_index);
    let candidates = donor_classes(ctx, u, attr_index)?
        .into_iter()
        .map(|c| ctx.dataset.indices_of(c))
        .find(|rows| !rows.is_empty())
        .ok_or(Error::UncoverableAttribute {
            class: u,
            attribute: attr_index,
            value: target,
        })?;

    let mut shortlist: Vec<(f64, usize)> = candidates
        .into_iter()
        .map(|row| (env_distance_sq(ctx.dataset, base, row, env), row))
        .collect();
    shortlist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    shortlist.truncate(m.max(1));

    let model = ctx.models[attr_index].as_ref();
    let mut best: Option<(f64, usize)> = None;
    for &(_, row) in &shortlist {
        let p = match model {
            Some(model) => model.predict_attribute_probability(ctx.dataset.row(row), target)?,
            None => 0.0,
        };
        best = match best {
            Some((bp, br)) if bp > p || (bp == p && br < row) => Some((bp, br)),
            _ => Some((p, row)),
        };
    }
    Ok(best.expect("shortlist is non-empty").1)
}

/// Differing attributes between `u` and its primary source that some seen
/// class can supply, ascending, plus the ones that no seen class can.
pub fn coverable_differences(attrs: &AttributeTable, split: &SplitSpec, u: ClassId, s1: ClassId) -> (Vec<usize>, Vec<usize>) {
    attrs
        .differing_attributes(u, s1)
        .into_iter()
        .partition(|&n| is_coverable(attrs, split.seen(), n, attrs.binary_value(u, n)))
}

/// Feature dimensions a splice for `u` overwrites: the union of relevant
/// dimensions over coverable differing attributes.
pub fn replaced_dims(
    attrs: &AttributeTable,
    split: &SplitSpec,
    relation: &RelationMatrix,
    u: ClassId,
    s1: ClassId,
) -> BTreeSet<usize> {
    coverable_differences(attrs, split, u, s1)
        .0
        .into_iter()
        .flat_map(|n| relation.relevant_dims(n))
        .collect()
}

/// One constructed sample per `S1` sample of `u`.
///
/// Differing attributes are processed in ascending index; each copies the
/// chosen donor's values on the attribute's relevant dimensions, so later
/// attributes overwrite earlier ones where relevant dimensions overlap.
pub fn construct_class_samples(ctx: &SpliceContext<'_>, u: ClassId) -> Result<ClassConstruction> {
    ctx.check()?;
    let s1 = ctx.plan.get(u)?.primary();
    let bases = ctx.dataset.indices_of(s1);
    if bases.is_empty() {
        return Err(Error::EmptyClass(s1));
    }
    let env = ctx.relation.environment_dims();
    let (active, skipped) = coverable_differences(ctx.attrs, ctx.split, u, s1);
    for &n in &skipped {
        log::warn!("class {u}: attribute {n} cannot be supplied by any seen class; skipped");
    }
    let dims: Vec<Vec<usize>> = active.iter().map(|&n| ctx.relation.relevant_dims(n)).collect();

    let samples = bases
        .par_iter()
        .map(|&base| {
            let mut feature = ctx.dataset.row(base).to_vec();
            let mut provenance = vec![Provenance::Retained; feature.len()];
            for (&n, dims) in active.iter().zip(&dims) {
                if dims.is_empty() {
                    continue;
                }
                let donor = select_donor_sample(ctx, &env, u, base, n, ctx.shortlist)?;
                let row = ctx.dataset.row(donor);
                for &j in dims {
                    feature[j] = row[j];
                    provenance[j] = Provenance::Donor(donor);
                }
            }
            Ok(ConstructedSample {
                feature,
                target_class: u,
                base_sample: base,
                provenance,
                screen_score: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassConstruction {
        samples,
        skipped_attributes: skipped,
    })
}

/// Constructs samples for every unseen class in the plan.
pub fn construct_all(ctx: &SpliceContext<'_>) -> Result<BTreeMap<ClassId, ClassConstruction>> {
    ctx.check()?;
    let classes: Vec<ClassId> = ctx.split.unseen().iter().copied().collect();
    let built = classes
        .par_iter()
        .map(|&u| construct_class_samples(ctx, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(classes.into_iter().zip(built).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CalibratedModel;
    use crate::construction::plan::ClassSources;
    use crate::construction::similarity::pairwise_stats;
    use crate::linear::SparseLinearModel;
    use ndarray::{array, Array2};

    struct Fixture {
        dataset: Dataset,
        attrs: AttributeTable,
        split: SplitSpec,
        stats: PairwiseStats,
        relation: RelationMatrix,
        plan: SourcePlan,
        models: Vec<Option<CalibratedModel>>,
    }

    impl Fixture {
        fn ctx(&self) -> SpliceContext<'_> {
            SpliceContext {
                dataset: &self.dataset,
                attrs: &self.attrs,
                split: &self.split,
                stats: &self.stats,
                relation: &self.relation,
                plan: &self.plan,
                models: &self.models,
                shortlist: DEFAULT_SHORTLIST,
            }
        }
    }

    /// Model whose probability of attribute value 1 rises with feature `dim`.
    fn probe_model(p: usize, dim: usize) -> CalibratedModel {
        let mut w = vec![0.0; p];
        w[dim] = 1.0;
        CalibratedModel::from_parts(SparseLinearModel::from_parts(w, 0.0, 1.0), -1.0, 0.0)
    }

    /// Classes: 0 = S1 (1,2,3,4 base), 1 = donor class, 2 = another seen
    /// class, 3 = unseen target. Binary rows: c0=(0,0), c1=(1,0), c2=(1,1),
    /// c3=(1,0). Attribute 0 relevant dims {0,1}, attribute 1 dims {2}.
    fn fixture(donor_rows: Array2<f64>) -> Fixture {
        let bin = array![[0u8, 0], [1, 0], [1, 1], [1, 0]];
        let cont = array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.9, 0.1]];
        let attrs = AttributeTable::new(cont, bin, (0..4).map(|c| format!("c{c}")).collect()).unwrap();
        let mut rows = vec![array![1.0, 2.0, 3.0, 4.0]];
        let mut labels = vec![0];
        for r in donor_rows.rows() {
            rows.push(r.to_owned());
            labels.push(1);
        }
        rows.push(array![-5.0, -5.0, -5.0, -5.0]);
        labels.push(2);
        let mut x = Array2::zeros((rows.len(), 4));
        for (i, r) in rows.iter().enumerate() {
            x.row_mut(i).assign(r);
        }
        let dataset = Dataset::with_class_count(x, labels, 4).unwrap();
        let split = SplitSpec::new([0, 1, 2].into(), [3].into()).unwrap();
        let stats = pairwise_stats(&attrs).unwrap();
        let relation = RelationMatrix::new(array![[1, 1, 0, 0], [0, 0, 1, 0]], BTreeSet::new()).unwrap();
        let plan = SourcePlan {
            classes: [(
                3,
                ClassSources {
                    sources: vec![0, 1, 2],
                    assignment_cost: 0.0,
                    hamming_reference: 0,
                },
            )]
            .into(),
        };
        let models = vec![Some(probe_model(4, 3)), Some(probe_model(4, 3))];
        Fixture {
            dataset,
            attrs,
            split,
            stats,
            relation,
            plan,
            models,
        }
    }

    #[test]
    fn mechanical_splice() {
        let f = fixture(array![[9.0, 8.0, 7.0, 6.0]]);
        let out = construct_class_samples(&f.ctx(), 3).unwrap();
        assert_eq!(out.samples.len(), 1);
        let s = &out.samples[0];
        assert_eq!(s.feature, vec![9.0, 8.0, 3.0, 4.0]);
        assert_eq!(s.base_sample, 0);
        assert_eq!(s.provenance[0], Provenance::Donor(1));
        assert_eq!(s.provenance[2], Provenance::Retained);
        assert!(out.skipped_attributes.is_empty());
    }

    #[test]
    fn single_candidate_is_returned() {
        let f = fixture(array![[9.0, 8.0, 7.0, -100.0]]);
        let env = f.relation.environment_dims();
        assert_eq!(select_donor_sample(&f.ctx(), &env, 3, 0, 0, 10).unwrap(), 1);
    }

    #[test]
    fn probability_breaks_environment_ties() {
        // Environment dim is 3; make both donors equally far from the base
        // (4.0) in it but give them different probe values via symmetry:
        // donor rows 1 and 2 have env values 5 and 3.
        let f = fixture(array![[0.0, 0.0, 0.0, 3.0], [0.0, 0.0, 0.0, 5.0]]);
        let env = f.relation.environment_dims();
        assert_eq!(env, vec![3]);
        let ctx = f.ctx();
        let p1 = f.models[0].as_ref().unwrap().predict_attribute_probability(f.dataset.row(1), 1).unwrap();
        let p2 = f.models[0].as_ref().unwrap().predict_attribute_probability(f.dataset.row(2), 1).unwrap();
        assert!(p2 > p1);
        assert_eq!(select_donor_sample(&ctx, &env, 3, 0, 0, 10).unwrap(), 2);
        // A shortlist of one keeps only the lowest-index tie.
        assert_eq!(select_donor_sample(&ctx, &env, 3, 0, 0, 1).unwrap(), 1);
    }

    #[test]
    fn uncoverable_attribute_is_reported_and_skipped() {
        let mut f = fixture(array![[9.0, 8.0, 7.0, 6.0]]);
        // Give the target a value at attribute 1 that no seen class has... by
        // making every seen class carry 0 there and the target 1.
        let bin = array![[0u8, 0], [1, 0], [1, 0], [1, 1]];
        f.attrs = AttributeTable::new(f.attrs.continuous().clone(), bin, f.attrs.class_names().to_vec()).unwrap();
        let env = f.relation.environment_dims();
        assert!(matches!(
            select_donor_sample(&f.ctx(), &env, 3, 0, 1, 10),
            Err(Error::UncoverableAttribute { class: 3, attribute: 1, value: 1 })
        ));
        let out = construct_class_samples(&f.ctx(), 3).unwrap();
        assert_eq!(out.skipped_attributes, vec![1]);
        assert_eq!(out.samples[0].feature, vec![9.0, 8.0, 3.0, 4.0]);
    }

    #[test]
    fn identical_attributes_copy_base_verbatim() {
        let mut f = fixture(array![[9.0, 8.0, 7.0, 6.0]]);
        let bin = array![[0u8, 0], [1, 0], [1, 1], [0, 0]];
        f.attrs = AttributeTable::new(f.attrs.continuous().clone(), bin, f.attrs.class_names().to_vec()).unwrap();
        let out = construct_class_samples(&f.ctx(), 3).unwrap();
        assert_eq!(out.samples[0].feature, f.dataset.row(0).to_vec());
        assert!(out.samples[0].spliced_dims().is_empty());
    }

    #[test]
    fn overlapping_dims_take_the_later_attribute() {
        let mut f = fixture(array![[9.0, 8.0, 7.0, 6.0]]);
        // Target differs from S1 in both attributes; class 2 carries (1,1).
        let bin = array![[0u8, 0], [1, 0], [1, 1], [1, 1]];
        f.attrs = AttributeTable::new(f.attrs.continuous().clone(), bin, f.attrs.class_names().to_vec()).unwrap();
        f.relation = RelationMatrix::new(array![[1, 1, 0, 0], [0, 1, 1, 0]], BTreeSet::new()).unwrap();
        let out = construct_class_samples(&f.ctx(), 3).unwrap();
        let s = &out.samples[0];
        // Attribute 0 donor: class 1 (row 1); attribute 1 donor: class 2 (row 2).
        assert_eq!(s.feature, vec![9.0, -5.0, -5.0, 4.0]);
        assert_eq!(s.provenance[1], Provenance::Donor(2));
        assert_eq!(s.provenance[0], Provenance::Donor(1));
    }

    #[test]
    fn replaced_dims_union() {
        let f = fixture(array![[9.0, 8.0, 7.0, 6.0]]);
        assert_eq!(replaced_dims(&f.attrs, &f.split, &f.relation, 3, 0), BTreeSet::from([0, 1]));
    }
}
