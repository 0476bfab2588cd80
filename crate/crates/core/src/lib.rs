//! Circular-substructure fingerprints, Sort & Slice tokenisation, a small
//! graph isomorphism network with reverse-mode autodiff, gradient-boosted
//! trees and the evaluation statistics used to compare molecular
//! representations on grouped cross-validation splits.

pub mod chem;
pub mod datasets;
pub mod fingerprints;
pub mod gin;
pub mod hash;
pub mod importance;
pub mod metrics;
pub mod vocab;
pub mod par;
pub mod pipeline;
pub mod predictor;
pub mod stats;
pub mod toy;

pub use par::Exec;
