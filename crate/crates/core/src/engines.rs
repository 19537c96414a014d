//! The eight recommendation engines: four policies on two backbones.
//!
//! | policy   | scores fed to the selector          | selector                |
//! |----------|-------------------------------------|-------------------------|
//! | `base`   | personal                            | top-r                   |
//! | `pop`    | personal + beta * popularity        | top-r                   |
//! | `fair`   | personal                            | exact (xi-scalarised)   |
//! | `mosaic` | personal + beta * popularity        | exact (xi-scalarised)   |
//!
//! With [`AggregationMode::Normalized`] the personal scores are min-max
//! normalised before entering any selector that trades them off against
//! another term, so `mosaic` with `beta = 0` and `fair` see identical input.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::Collection;
use crate::scoring::{
    aggregate_with_popularity, relevance_scores, user_scores, AggregationMode, ScoringError, UserProfile,
};
use crate::selector::{
    select_top_r, solve_selection, RecommendationSet, SelectionInstance, SelectorError, SolverOptions,
};
use crate::similarity::{SimilarityError, SimilarityMatrix};

pub const DEFAULT_R: usize = 9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("no similarity matrix registered for backbone {0}")]
    Unregistered(Backbone),
    #[error("unknown engine id {0:?}")]
    UnknownEngine(String),
    #[error("rated painting {0:?} is not in the collection")]
    UnknownPainting(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    A,
    B,
}

impl Backbone {
    fn slot(self) -> usize {
        match self {
            Backbone::A => 0,
            Backbone::B => 1,
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::A => "a",
            Backbone::B => "b",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Base,
    Pop,
    Fair,
    Mosaic,
}

impl Policy {
    pub fn uses_beta(self) -> bool {
        matches!(self, Policy::Pop | Policy::Mosaic)
    }

    pub fn uses_xi(self) -> bool {
        matches!(self, Policy::Fair | Policy::Mosaic)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Base => "base",
            Policy::Pop => "pop",
            Policy::Fair => "fair",
            Policy::Mosaic => "mosaic",
        })
    }
}

/// `<policy>-<backbone>`, e.g. `mosaic-b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EngineId {
    pub policy: Policy,
    pub backbone: Backbone,
}

impl EngineId {
    pub const fn new(policy: Policy, backbone: Backbone) -> Self {
        Self { policy, backbone }
    }
}

pub const ALL_ENGINES: [EngineId; 8] = [
    EngineId::new(Policy::Base, Backbone::A),
    EngineId::new(Policy::Base, Backbone::B),
    EngineId::new(Policy::Pop, Backbone::A),
    EngineId::new(Policy::Pop, Backbone::B),
    EngineId::new(Policy::Fair, Backbone::A),
    EngineId::new(Policy::Fair, Backbone::B),
    EngineId::new(Policy::Mosaic, Backbone::A),
    EngineId::new(Policy::Mosaic, Backbone::B),
];

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.policy, self.backbone)
    }
}

impl FromStr for EngineId {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_ENGINES
            .iter()
            .copied()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| EngineError::UnknownEngine(s.to_owned()))
    }
}

impl Serialize for EngineId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineSpec {
    pub id: EngineId,
    pub r: usize,
}

impl EngineSpec {
    pub fn new(id: EngineId) -> Self {
        Self { id, r: DEFAULT_R }
    }

    pub fn with_r(mut self, r: usize) -> Self {
        self.r = r;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EngineOptions {
    pub aggregation: AggregationMode,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineParams {
    pub backbone: Backbone,
    pub policy: Policy,
    pub r: usize,
    pub beta: f64,
    pub xi: f64,
    pub aggregation: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedItem {
    pub id: String,
    pub score: f64,
    pub groups: Vec<u32>,
}

/// Engine output with enough provenance to audit the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRecommendation {
    pub engine: EngineId,
    pub params: EngineParams,
    pub items: Vec<RankedItem>,
    pub objective: f64,
    pub solver: &'static str,
    pub optimal: bool,
    /// Painting indices in rank order.
    #[serde(skip)]
    pub indices: Vec<usize>,
}

impl RankedRecommendation {
    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.id.as_str()).collect()
    }
}

/// Binds similarity matrices to backbones over one collection.
#[derive(Debug, Clone)]
pub struct Recommender {
    collection: Arc<Collection>,
    matrices: [Option<Arc<SimilarityMatrix>>; 2],
    options: EngineOptions,
}

impl Recommender {
    pub fn new(collection: Arc<Collection>) -> Self {
        Self {
            collection,
            matrices: [None, None],
            options: EngineOptions::default(),
        }
    }

    pub fn with_options(mut self, options: EngineOptions) -> Self {
        self.options = options;
        self
    }

    /// Registers a matrix for a backbone, reordering it into collection order.
    pub fn register(&mut self, backbone: Backbone, matrix: &SimilarityMatrix) -> Result<(), EngineError> {
        let aligned = matrix.align_to(&self.collection)?;
        self.matrices[backbone.slot()] = Some(Arc::new(aligned));
        Ok(())
    }

    pub fn collection(&self) -> &Arc<Collection> {
        &self.collection
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn has_backbone(&self, backbone: Backbone) -> bool {
        self.matrices[backbone.slot()].is_some()
    }

    pub fn matrix(&self, backbone: Backbone) -> Option<&SimilarityMatrix> {
        self.matrices[backbone.slot()].as_deref()
    }

    pub fn recommend(&self, spec: EngineSpec, profile: &UserProfile) -> Result<RankedRecommendation, EngineError> {
        profile.validate()?;
        if let Some(id) = profile
            .ratings
            .keys()
            .find(|id| self.collection.index_of(id).is_none())
        {
            return Err(EngineError::UnknownPainting(id.clone()));
        }
        let matrix = self
            .matrix(spec.id.backbone)
            .ok_or(EngineError::Unregistered(spec.id.backbone))?;
        let collection = &self.collection;
        let mode = self.options.aggregation;

        let personal = user_scores(matrix, profile)?;
        let set = match spec.id.policy {
            Policy::Base => select_top_r(&personal.values, spec.r)?,
            Policy::Pop => {
                let aggregated = aggregate_with_popularity(&personal, collection.popularity(), profile.beta, mode)?;
                select_top_r(&aggregated.values, spec.r)?
            }
            Policy::Fair => {
                let scores = relevance_scores(&personal, mode);
                self.solve(&scores, profile.xi, spec.r)?
            }
            Policy::Mosaic => {
                let aggregated = aggregate_with_popularity(&personal, collection.popularity(), profile.beta, mode)?;
                self.solve(&aggregated.values, profile.xi, spec.r)?
            }
        };
        Ok(self.package(spec, profile, set))
    }

    fn solve(&self, scores: &[f64], xi: f64, r: usize) -> Result<RecommendationSet, EngineError> {
        let instance = SelectionInstance {
            scores,
            groups: self.collection.group_members(),
            gamma: self.collection.gamma(),
            xi,
            r,
        };
        Ok(solve_selection(&instance, &self.options.solver)?)
    }

    fn package(&self, spec: EngineSpec, profile: &UserProfile, set: RecommendationSet) -> RankedRecommendation {
        let items = set
            .items
            .iter()
            .zip(&set.item_scores)
            .map(|(&i, &score)| RankedItem {
                id: self.collection.id(i).to_owned(),
                score,
                groups: self.collection.group_ids_of(i),
            })
            .collect();
        RankedRecommendation {
            engine: spec.id,
            params: EngineParams {
                backbone: spec.id.backbone,
                policy: spec.id.policy,
                r: spec.r,
                beta: profile.beta,
                xi: profile.xi,
                aggregation: match self.options.aggregation {
                    AggregationMode::Normalized => "normalized",
                    AggregationMode::Raw => "raw",
                },
            },
            items,
            objective: set.objective_value,
            solver: set.solver.as_str(),
            optimal: set.optimal,
            indices: set.items,
        }
    }
}
