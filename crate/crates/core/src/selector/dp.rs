//! Capacity allocation across disjoint story groups.
//!
//! With disjoint groups and constant gamma per group, the ψ term of a group
//! depends only on how many of its paintings are taken, so the best choice
//! of `k` paintings from one group is its score-descending prefix of length
//! `k`. The program allocates the `r` slots across the groups plus one
//! pseudo-group holding ungrouped paintings (no ψ contribution).

use std::cmp::Ordering;

use super::{compare_candidates, Evaluator, SelectionInstance, Value};

struct Entry {
    value: Value,
    set: Vec<usize>,
}

/// Per-group prefix options: for each `k`, the additive value and the
/// chosen indices.
struct PseudoGroup {
    order: Vec<usize>,
    score_prefix: Vec<f64>,
    gain: Vec<f64>,
}

fn pseudo_groups(instance: &SelectionInstance<'_>, evaluator: &Evaluator<'_>) -> Vec<PseudoGroup> {
    let scores = instance.scores;
    let by_score = |members: &mut Vec<usize>| {
        members.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    };
    let mut grouped = vec![false; scores.len()];
    let mut out = Vec::with_capacity(instance.groups.len() + 1);
    for members in instance.groups {
        let mut order = members.clone();
        by_score(&mut order);
        for &i in &order {
            grouped[i] = true;
        }
        out.push(build(order, instance, evaluator, true));
    }
    let mut rest: Vec<usize> = (0..scores.len()).filter(|&i| !grouped[i]).collect();
    by_score(&mut rest);
    out.push(build(rest, instance, evaluator, false));
    out
}

fn build(order: Vec<usize>, instance: &SelectionInstance<'_>, evaluator: &Evaluator<'_>, counts_for_psi: bool) -> PseudoGroup {
    let limit = order.len().min(instance.r);
    let mut score_prefix = Vec::with_capacity(limit + 1);
    let mut gain = Vec::with_capacity(limit + 1);
    let (mut s, mut mass) = (0.0, 0.0);
    score_prefix.push(0.0);
    gain.push(0.0);
    for &i in &order[..limit] {
        s += instance.scores[i];
        mass += instance.gamma[i];
        score_prefix.push(s);
        let psi = if counts_for_psi { mass.sqrt() } else { 0.0 };
        gain.push(evaluator.combine(s, psi));
    }
    PseudoGroup {
        order,
        score_prefix,
        gain,
    }
}

fn merged(base: &[usize], extra: &[usize]) -> Vec<usize> {
    let mut set = Vec::with_capacity(base.len() + extra.len());
    set.extend_from_slice(base);
    set.extend_from_slice(extra);
    set.sort_unstable();
    set
}

/// Returns the optimal set, ascending.
pub(super) fn solve(instance: &SelectionInstance<'_>, evaluator: &Evaluator<'_>) -> Vec<usize> {
    let r = instance.r;
    let mut best: Vec<Option<Entry>> = (0..=r).map(|_| None).collect();
    best[0] = Some(Entry {
        value: Value {
            objective: 0.0,
            score_sum: 0.0,
        },
        set: Vec::new(),
    });

    for group in pseudo_groups(instance, evaluator) {
        let max_k = group.gain.len() - 1;
        let mut next: Vec<Option<Entry>> = (0..=r).map(|_| None).collect();
        for (c, slot) in next.iter_mut().enumerate() {
            for k in 0..=max_k.min(c) {
                let Some(prev) = &best[c - k] else { continue };
                let value = Value {
                    objective: prev.value.objective + group.gain[k],
                    score_sum: prev.value.score_sum + group.score_prefix[k],
                };
                let set = merged(&prev.set, &group.order[..k]);
                let better = match slot {
                    None => true,
                    Some(cur) => compare_candidates(value, &set, cur.value, &cur.set) == Ordering::Less,
                };
                if better {
                    *slot = Some(Entry { value, set });
                }
            }
        }
        best = next;
    }

    best[r]
        .take()
        .expect("r <= m guarantees a feasible allocation")
        .set
}
