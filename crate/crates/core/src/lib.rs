//! Zero-shot classification by constructing labeled samples for unseen
//! classes out of spliced seen-class feature vectors.
//!
//! The pipeline learns which feature dimensions encode each binary attribute
//! ([`relation`]), picks similar seen classes for every unseen class and
//! splices donor features into their samples ([`construction`]), keeps the
//! constructed samples whose dissimilarity profile best matches the target
//! class ([`screening`]) and finally trains an ordinary supervised classifier
//! on them ([`eval`]).

pub mod calibration;
pub mod cli;
pub mod config;
pub mod construction;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod linear;
pub mod pipeline;
pub mod relation;
pub mod screening;
pub mod synth;

pub use data::{class_centroids, AttributeTable, ClassId, Dataset, SplitSpec};
pub use error::{Error, Result};
