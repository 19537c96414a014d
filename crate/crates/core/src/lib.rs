//! Multistakeholder-aware visual art recommendation.
//!
//! Personal relevance comes from similarity to a handful of rated
//! paintings; the crowd enters through a popularity boost; curators enter
//! through a concave reward for covering their story groups. The
//! [`selector`] module solves the resulting size-`r` selection exactly.

pub mod cli;
pub mod dataset;
pub mod engines;
pub mod metrics;
pub mod scoring;
pub mod selector;
pub mod service;
pub mod simharness;
pub mod similarity;
