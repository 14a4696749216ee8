//! In-memory composition of the stages: relation learning, construction,
//! screening and strategy evaluation.

use std::collections::BTreeMap;

use crate::calibration::CalibratedModel;
use crate::config::PipelineParams;
use crate::construction::{
    build_source_plan, construct_all, pairwise_stats, ClassConstruction, ConstructedSample, PairwiseStats, SourcePlan,
    SpliceContext,
};
use crate::data::{class_centroids, AttributeTable, ClassId, Dataset, SplitSpec};
use crate::error::Result;
use crate::eval::{compare_strategies, EvalReport, Strategy, StrategyInputs};
use crate::relation::{build_relation_matrix, RelationFit, RelationMatrix};
use crate::screening::{dissimilarity_attribute, screen_samples, CentroidReference, ScreenOutcome};

/// Source plan and spliced samples for every unseen class.
pub fn construct(
    dataset: &Dataset,
    attrs: &AttributeTable,
    split: &SplitSpec,
    relation: &RelationMatrix,
    models: &[Option<CalibratedModel>],
    params: &PipelineParams,
) -> Result<(PairwiseStats, SourcePlan, BTreeMap<ClassId, ClassConstruction>)> {
    split.validate(attrs, dataset)?;
    let stats = pairwise_stats(attrs)?;
    let plan = build_source_plan(attrs, &stats, split, &params.plan_params())?;
    let ctx = SpliceContext {
        dataset,
        attrs,
        split,
        stats: &stats,
        relation,
        plan: &plan,
        models,
        shortlist: params.shortlist,
    };
    let built = construct_all(&ctx)?;
    Ok((stats, plan, built))
}

/// Screens each unseen class's samples against its attribute-space profile.
pub fn screen_all(
    dataset: &Dataset,
    attrs: &AttributeTable,
    split: &SplitSpec,
    constructed: &BTreeMap<ClassId, Vec<ConstructedSample>>,
    keep_fraction: f64,
) -> Result<BTreeMap<ClassId, ScreenOutcome>> {
    let reference = CentroidReference::new(&class_centroids(dataset, split.seen())?)?;
    constructed
        .iter()
        .map(|(&u, samples)| {
            let target = dissimilarity_attribute(attrs, split, u)?;
            Ok((u, screen_samples(samples.clone(), &target, &reference, keep_fraction)?))
        })
        .collect()
}

pub fn kept_samples(screened: &BTreeMap<ClassId, ScreenOutcome>) -> BTreeMap<ClassId, Vec<ConstructedSample>> {
    screened.iter().map(|(&u, o)| (u, o.kept.clone())).collect()
}

pub fn constructed_samples(built: &BTreeMap<ClassId, ClassConstruction>) -> BTreeMap<ClassId, Vec<ConstructedSample>> {
    built.iter().map(|(&u, c)| (u, c.samples.clone())).collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub relation: RelationFit,
    pub stats: PairwiseStats,
    pub plan: SourcePlan,
    pub constructions: BTreeMap<ClassId, ClassConstruction>,
    pub screened: BTreeMap<ClassId, ScreenOutcome>,
}

impl PipelineOutput {
    pub fn constructed(&self) -> BTreeMap<ClassId, Vec<ConstructedSample>> {
        constructed_samples(&self.constructions)
    }

    pub fn kept(&self) -> BTreeMap<ClassId, Vec<ConstructedSample>> {
        kept_samples(&self.screened)
    }

    /// Evaluates `strategies` and wraps them in a report.
    pub fn evaluate(
        &self,
        dataset: &Dataset,
        attrs: &AttributeTable,
        split: &SplitSpec,
        params: &PipelineParams,
        strategies: &[Strategy],
        config_echo: serde_json::Value,
    ) -> Result<EvalReport> {
        let constructed = self.constructed();
        let screened = self.kept();
        let inputs = StrategyInputs {
            dataset,
            attrs,
            split,
            relation: &self.relation.relation,
            plan: &self.plan,
            constructed: &constructed,
            screened: &screened,
        };
        let results = compare_strategies(&inputs, strategies, params.classifier, params.seed)?;
        Ok(EvalReport {
            strategies: results.into_iter().map(|(s, r)| (s.name().to_string(), r)).collect(),
            config: config_echo,
            seed: params.seed,
        })
    }
}

/// Runs relation learning, construction and screening.
pub fn run(dataset: &Dataset, attrs: &AttributeTable, split: &SplitSpec, params: &PipelineParams) -> Result<PipelineOutput> {
    params.validate()?;
    split.validate(attrs, dataset)?;
    let relation = build_relation_matrix(dataset, attrs, split, &params.relation_params())?;
    let (stats, plan, constructions) = construct(dataset, attrs, split, &relation.relation, &relation.models, params)?;
    let screened = screen_all(dataset, attrs, split, &constructed_samples(&constructions), params.keep_fraction)?;
    Ok(PipelineOutput {
        relation,
        stats,
        plan,
        constructions,
        screened,
    })
}
