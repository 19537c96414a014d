//! Exact size-`r` set selection.
//!
//! The objective over a candidate set `R` is
//!
//! ```text
//! (1 - xi) * sum_{i in R} s_i  +  xi * psi(R)
//! psi(R) = sum_a sqrt( sum_{i in S_a ∩ R} gamma_i )
//! ```
//!
//! Three exact solvers share one candidate ordering so that they agree on
//! ties: the objective first, then the plain score sum, then the
//! lexicographically smallest sorted index list. Indices are painting
//! positions in a [`crate::dataset::Collection`], which are sorted by id,
//! so the last key is the ascending-id tie-break.
//!
//! * [`select_top_r`] for `xi = 0`,
//! * a dynamic program when groups are disjoint and gamma is constant
//!   inside each group ([`dp`]),
//! * best-first branch and bound otherwise ([`bnb`]),
//! * exhaustive enumeration as the verification oracle ([`brute`]).

mod bnb;
mod brute;
mod dp;

use std::cmp::Ordering;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::scoring::rank_indices;

pub use brute::{brute_force_select, MAX_ENUMERATION};

pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;

/// Relative tolerance under which two objective values count as tied.
pub(crate) const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SelectorError {
    #[error("cannot select {r} of {m} paintings")]
    Infeasible { r: usize, m: usize },
    #[error("selection size must be positive")]
    EmptySelection,
    #[error("xi = {0} is outside [0, 1]")]
    InvalidXi(f64),
    #[error("{0} candidate sets exceed the enumeration limit")]
    TooLarge(u128),
    #[error("{what} has {found} entries, expected {expected}")]
    SizeMismatch {
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("group member {0} is out of range")]
    BadMember(usize),
    #[error("invalid gamma {0}")]
    BadGamma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiSense {
    #[default]
    Maximise,
    /// Penalise story coverage instead of rewarding it.
    Minimise,
}

impl PsiSense {
    fn sign(self) -> f64 {
        match self {
            PsiSense::Maximise => 1.0,
            PsiSense::Minimise => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub node_budget: u64,
    pub psi_sense: PsiSense,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            node_budget: DEFAULT_NODE_BUDGET,
            psi_sense: PsiSense::Maximise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    TopR,
    Dp,
    Bnb,
    Brute,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::TopR => "topr",
            SolverKind::Dp => "dp",
            SolverKind::Bnb => "bnb",
            SolverKind::Brute => "brute",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionInstance<'a> {
    pub scores: &'a [f64],
    /// Member indices per story group.
    pub groups: &'a [Vec<usize>],
    pub gamma: &'a [f64],
    pub xi: f64,
    pub r: usize,
}

impl SelectionInstance<'_> {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn validate(&self) -> Result<(), SelectorError> {
        let m = self.scores.len();
        if self.r == 0 {
            return Err(SelectorError::EmptySelection);
        }
        if self.r > m {
            return Err(SelectorError::Infeasible { r: self.r, m });
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(SelectorError::InvalidXi(self.xi));
        }
        if self.gamma.len() != m {
            return Err(SelectorError::SizeMismatch {
                what: "gamma",
                found: self.gamma.len(),
                expected: m,
            });
        }
        if let Some(&g) = self.gamma.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(SelectorError::BadGamma(g));
        }
        for members in self.groups {
            if let Some(&i) = members.iter().find(|&&i| i >= m) {
                return Err(SelectorError::BadMember(i));
            }
        }
        Ok(())
    }

    /// Group positions per painting.
    pub(crate) fn memberships(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.scores.len()];
        for (a, members) in self.groups.iter().enumerate() {
            for &i in members {
                if !out[i].contains(&a) {
                    out[i].push(a);
                }
            }
        }
        out
    }
}

/// Ranked output of a selector.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationSet {
    /// Painting indices, best score first, ties by ascending index.
    pub items: Vec<usize>,
    pub item_scores: Vec<f64>,
    pub objective_value: f64,
    pub solver: SolverKind,
    /// False when branch and bound stopped on its node budget.
    pub optimal: bool,
}

impl RecommendationSet {
    pub(crate) fn from_set(
        instance: &SelectionInstance<'_>,
        evaluator: &Evaluator<'_>,
        set: &[usize],
        solver: SolverKind,
        optimal: bool,
    ) -> Self {
        let mut items = set.to_vec();
        items.sort_by(|&a, &b| {
            instance.scores[b]
                .total_cmp(&instance.scores[a])
                .then(a.cmp(&b))
        });
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        let objective_value = evaluator.evaluate(&sorted).objective;
        Self {
            item_scores: items.iter().map(|&i| instance.scores[i]).collect(),
            items,
            objective_value,
            solver,
            optimal,
        }
    }

    pub fn score_sum(&self) -> f64 {
        self.item_scores.iter().sum()
    }
}

/// Representativeness of a selection: sum over groups of the square root
/// of the selected gamma mass in that group.
pub fn psi(selected: &[usize], groups: &[Vec<usize>], gamma: &[f64]) -> f64 {
    let mut chosen = vec![false; gamma.len()];
    for &i in selected {
        chosen[i] = true;
    }
    groups
        .iter()
        .map(|members| {
            members
                .iter()
                .filter(|&&i| chosen[i])
                .map(|&i| gamma[i])
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// ψ from per-group masses.
pub(crate) fn psi_of_masses(masses: &[f64]) -> f64 {
    masses.iter().map(|m| m.sqrt()).sum()
}

/// Objective and score sum of a complete candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Value {
    pub objective: f64,
    pub score_sum: f64,
}

/// Canonical evaluation shared by every solver: same summation order for
/// the same set, so identical sets get bit-identical objectives.
pub(crate) struct Evaluator<'a> {
    instance: SelectionInstance<'a>,
    memberships: Vec<Vec<usize>>,
    sign: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(instance: SelectionInstance<'a>, sense: PsiSense) -> Self {
        Self {
            memberships: instance.memberships(),
            instance,
            sign: sense.sign(),
        }
    }

    pub fn memberships(&self) -> &[Vec<usize>] {
        &self.memberships
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// `sorted` must be ascending.
    pub fn evaluate(&self, sorted: &[usize]) -> Value {
        debug_assert!(sorted.windows(2).all(|w| w[0] < w[1]));
        let inst = &self.instance;
        let mut masses = vec![0.0; inst.groups.len()];
        let mut score_sum = 0.0;
        for &i in sorted {
            score_sum += inst.scores[i];
            for &a in &self.memberships[i] {
                masses[a] += inst.gamma[i];
            }
        }
        let objective = self.combine(score_sum, psi_of_masses(&masses));
        Value {
            objective,
            score_sum,
        }
    }

    pub fn combine(&self, score_sum: f64, psi: f64) -> f64 {
        (1.0 - self.instance.xi) * score_sum + self.sign * self.instance.xi * psi
    }
}

pub(crate) fn tie_tol(a: f64, b: f64) -> f64 {
    TIE_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Orders candidates: higher objective, then higher score sum, then the
/// lexicographically smaller sorted index list. `Less` means `a` is better.
pub(crate) fn compare_candidates(a: Value, a_set: &[usize], b: Value, b_set: &[usize]) -> Ordering {
    let tol = tie_tol(a.objective, b.objective);
    if a.objective > b.objective + tol {
        return Ordering::Less;
    }
    if b.objective > a.objective + tol {
        return Ordering::Greater;
    }
    let tol = tie_tol(a.score_sum, b.score_sum);
    if a.score_sum > b.score_sum + tol {
        return Ordering::Less;
    }
    if b.score_sum > a.score_sum + tol {
        return Ordering::Greater;
    }
    a_set.cmp(b_set)
}

/// Best complete candidate seen so far.
#[derive(Debug, Clone)]
pub(crate) struct Incumbent {
    pub set: Vec<usize>,
    pub value: Value,
}

impl Incumbent {
    /// Replaces the incumbent when `set` (ascending) is strictly better.
    pub fn offer(slot: &mut Option<Incumbent>, set: &[usize], value: Value) -> bool {
        let better = match slot {
            None => true,
            Some(inc) => compare_candidates(value, set, inc.value, &inc.set) == Ordering::Less,
        };
        if better {
            *slot = Some(Incumbent {
                set: set.to_vec(),
                value,
            });
        }
        better
    }
}

/// The `r` highest scores, ties by ascending index.
pub fn select_top_r(scores: &[f64], r: usize) -> Result<RecommendationSet, SelectorError> {
    let m = scores.len();
    if r == 0 {
        return Err(SelectorError::EmptySelection);
    }
    if r > m {
        return Err(SelectorError::Infeasible { r, m });
    }
    let items: Vec<usize> = rank_indices(scores).into_iter().take(r).collect();
    let item_scores: Vec<f64> = items.iter().map(|&i| scores[i]).collect();
    let mut sorted = items.clone();
    sorted.sort_unstable();
    Ok(RecommendationSet {
        objective_value: sorted.iter().map(|&i| scores[i]).sum(),
        items,
        item_scores,
        solver: SolverKind::TopR,
        optimal: true,
    })
}

/// True when the dynamic program applies: no painting in two groups and a
/// single gamma value inside each group.
pub fn partition_path_applies(instance: &SelectionInstance<'_>) -> bool {
    let mut seen = vec![false; instance.scores.len()];
    for members in instance.groups {
        for &i in members {
            if std::mem::replace(&mut seen[i], true) {
                return false;
            }
        }
        if let Some(&first) = members.first() {
            if members.iter().any(|&i| instance.gamma[i] != instance.gamma[first]) {
                return false;
            }
        }
    }
    true
}

/// Exact maximiser of the scalarised objective over all size-`r` subsets.
pub fn solve_selection(instance: &SelectionInstance<'_>, options: &SolverOptions) -> Result<RecommendationSet, SelectorError> {
    instance.validate()?;
    if instance.xi == 0.0 {
        return select_top_r(instance.scores, instance.r);
    }
    let evaluator = Evaluator::new(*instance, options.psi_sense);
    if partition_path_applies(instance) {
        let set = dp::solve(instance, &evaluator);
        Ok(RecommendationSet::from_set(instance, &evaluator, &set, SolverKind::Dp, true))
    } else {
        let (set, optimal) = bnb::solve(instance, &evaluator, options.node_budget);
        Ok(RecommendationSet::from_set(instance, &evaluator, &set, SolverKind::Bnb, optimal))
    }
}

/// Forces the branch-and-bound path regardless of group structure.
pub fn solve_with_branch_and_bound(
    instance: &SelectionInstance<'_>,
    options: &SolverOptions,
) -> Result<RecommendationSet, SelectorError> {
    instance.validate()?;
    let evaluator = Evaluator::new(*instance, options.psi_sense);
    let (set, optimal) = bnb::solve(instance, &evaluator, options.node_budget);
    Ok(RecommendationSet::from_set(instance, &evaluator, &set, SolverKind::Bnb, optimal))
}

/// Marginal-gain greedy. Not exact; kept as a baseline comparator and as
/// the warm start for branch and bound.
pub fn greedy_select(instance: &SelectionInstance<'_>, sense: PsiSense) -> Result<Vec<usize>, SelectorError> {
    instance.validate()?;
    let evaluator = Evaluator::new(*instance, sense);
    Ok(greedy(instance, &evaluator))
}

pub(crate) fn greedy(instance: &SelectionInstance<'_>, evaluator: &Evaluator<'_>) -> Vec<usize> {
    let m = instance.scores.len();
    let memberships = evaluator.memberships();
    let mut masses = vec![0.0; instance.groups.len()];
    let mut taken = vec![false; m];
    let mut set = Vec::with_capacity(instance.r);
    for _ in 0..instance.r {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..m).filter(|&i| !taken[i]) {
            let delta: f64 = memberships[i]
                .iter()
                .map(|&a| (masses[a] + instance.gamma[i]).sqrt() - masses[a].sqrt())
                .sum();
            let gain = evaluator.combine(instance.scores[i], delta);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (i, _) = best.expect("r <= m");
        taken[i] = true;
        for &a in &memberships[i] {
            masses[a] += instance.gamma[i];
        }
        set.push(i);
    }
    set.sort_unstable();
    set
}
