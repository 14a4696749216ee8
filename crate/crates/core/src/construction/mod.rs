//! Unseen-class sample construction: source selection, optimal primary
//! assignment, donor choice and feature splicing.

pub mod assignment;
pub mod plan;
pub mod similarity;
pub mod splice;

pub use plan::{assign_primary_sources, build_source_plan, ClassSources, PlanParams, SourcePlan};
pub use similarity::{
    attribute_difference, class_similarity, pairwise_stats, rank_source_candidates, virtual_attribute_hamming,
    PairwiseStats,
};
pub use splice::{
    construct_all, construct_class_samples, replaced_dims, select_donor_sample, ClassConstruction, ConstructedSample,
    Provenance, SpliceContext,
};
