//! Best-first branch and bound over include/exclude decisions.
//!
//! Paintings are branched on in score-descending order. The bound at a node
//! with chosen set `C` and `q` slots left uses submodularity of the
//! objective: the gain of any `q` remaining paintings is at most the sum of
//! their individual marginal gains with respect to `C`, so the `q` largest
//! marginal gains bound the subtree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{greedy, psi_of_masses, tie_tol, Evaluator, Incumbent, SelectionInstance, TIE_TOL};

struct Node {
    chosen: Vec<usize>,
    next: usize,
    score_sum: f64,
    masses: Vec<f64>,
}

struct Queued {
    bound: f64,
    score_bound: f64,
    seq: u64,
    node: Node,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a, 'b> {
    instance: &'a SelectionInstance<'b>,
    evaluator: &'a Evaluator<'b>,
    order: Vec<usize>,
    prefix: Vec<f64>,
    incumbent: Option<Incumbent>,
    scratch: Vec<f64>,
}

impl Search<'_, '_> {
    fn top_scores(&self, from: usize, q: usize) -> f64 {
        self.prefix[from + q] - self.prefix[from]
    }

    /// Upper bounds on the objective and on the score sum of any completion.
    fn bound(&mut self, node: &Node) -> (f64, f64) {
        let inst = self.instance;
        let q = inst.r - node.chosen.len();
        let score_bound = node.score_sum + self.top_scores(node.next, q);
        let base = self.evaluator.combine(node.score_sum, psi_of_masses(&node.masses));
        let extra = if self.evaluator.sign() < 0.0 {
            (1.0 - inst.xi) * self.top_scores(node.next, q)
        } else {
            let memberships = self.evaluator.memberships();
            self.scratch.clear();
            for &j in &self.order[node.next..] {
                let gamma = inst.gamma[j];
                let delta: f64 = memberships[j]
                    .iter()
                    .map(|&a| (node.masses[a] + gamma).sqrt() - node.masses[a].sqrt())
                    .sum();
                self.scratch.push((1.0 - inst.xi) * inst.scores[j] + inst.xi * delta);
            }
            if q < self.scratch.len() {
                self.scratch
                    .select_nth_unstable_by(q, |a, b| b.total_cmp(a));
            }
            self.scratch[..q].iter().sum()
        };
        (base + extra, score_bound)
    }

    fn prunable(&self, bound: f64, score_bound: f64) -> bool {
        let Some(inc) = &self.incumbent else {
            return false;
        };
        let obj = inc.value.objective;
        if bound < obj - tie_tol(bound, obj) {
            return true;
        }
        // Cannot beat the objective; can only tie it, and then loses on the
        // score sum.
        bound <= obj + TIE_TOL && score_bound < inc.value.score_sum - tie_tol(score_bound, inc.value.score_sum)
    }

    fn offer(&mut self, mut set: Vec<usize>) {
        set.sort_unstable();
        let value = self.evaluator.evaluate(&set);
        Incumbent::offer(&mut self.incumbent, &set, value);
    }

    fn child(&self, parent: &Node, include: bool) -> Node {
        let mut node = Node {
            chosen: parent.chosen.clone(),
            next: parent.next + 1,
            score_sum: parent.score_sum,
            masses: parent.masses.clone(),
        };
        if include {
            let j = self.order[parent.next];
            node.chosen.push(j);
            node.score_sum += self.instance.scores[j];
            for &a in &self.evaluator.memberships()[j] {
                node.masses[a] += self.instance.gamma[j];
            }
        }
        node
    }
}

/// Returns the best set found (ascending) and whether it is proven optimal.
pub(super) fn solve(instance: &SelectionInstance<'_>, evaluator: &Evaluator<'_>, node_budget: u64) -> (Vec<usize>, bool) {
    let m = instance.len();
    let r = instance.r;
    let scores = instance.scores;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0.0);
    for &i in &order {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + scores[i]);
    }

    let mut search = Search {
        instance,
        evaluator,
        order,
        prefix,
        incumbent: None,
        scratch: Vec::with_capacity(m),
    };
    search.offer(search.order[..r].to_vec());
    if evaluator.sign() > 0.0 {
        search.offer(greedy(instance, evaluator));
    }

    let root = Node {
        chosen: Vec::with_capacity(r),
        next: 0,
        score_sum: 0.0,
        masses: vec![0.0; instance.groups.len()],
    };
    let mut heap = BinaryHeap::new();
    let (bound, score_bound) = search.bound(&root);
    heap.push(Queued {
        bound,
        score_bound,
        seq: 0,
        node: root,
    });
    let mut seq = 1u64;
    let mut expanded = 0u64;

    while let Some(Queued {
        bound,
        score_bound,
        node,
        ..
    }) = heap.pop()
    {
        let inc = search.incumbent.as_ref().expect("seeded above").value.objective;
        if bound < inc - tie_tol(bound, inc) {
            // every queued bound is lower still
            heap.clear();
            break;
        }
        if search.prunable(bound, score_bound) {
            continue;
        }
        if expanded >= node_budget {
            heap.push(Queued {
                bound,
                score_bound,
                seq,
                node,
            });
            break;
        }
        expanded += 1;

        for include in [true, false] {
            let need = r - node.chosen.len();
            if include && need == 0 {
                continue;
            }
            let child = search.child(&node, include);
            let q = r - child.chosen.len();
            let remaining = m - child.next;
            if q == 0 {
                search.offer(child.chosen);
            } else if remaining == q {
                let mut set = child.chosen.clone();
                set.extend_from_slice(&search.order[child.next..]);
                search.offer(set);
            } else if remaining > q {
                let (b, sb) = search.bound(&child);
                if !search.prunable(b, sb) {
                    heap.push(Queued {
                        bound: b,
                        score_bound: sb,
                        seq,
                        node: child,
                    });
                    seq += 1;
                }
            }
        }
    }

    let optimal = heap.is_empty();
    let best = search.incumbent.expect("seeded above");
    (best.set, optimal)
}
