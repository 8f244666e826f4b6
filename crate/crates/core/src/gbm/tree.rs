//! Depth-limited regression trees grown level by level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{min_gain, Split, SplitScan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Number of split nodes using each feature, accumulated into `counts`.
    pub fn count_splits(&self, counts: &mut [usize]) {
        if let TreeNode::Split {
            feature,
            left,
            right,
            ..
        } = self
        {
            counts[*feature] += 1;
            left.count_splits(counts);
            right.count_splits(counts);
        }
    }
}

/// Training matrix stored column-major with a per-feature ascending row order.
pub(crate) struct Columns {
    pub(crate) cols: Vec<Vec<f64>>,
    pub(crate) order: Vec<Vec<u32>>,
}

impl Columns {
    pub(crate) fn new(rows: &[Vec<f64>], n_features: usize) -> Self {
        let cols: Vec<Vec<f64>> = (0..n_features)
            .map(|f| rows.iter().map(|r| r[f]).collect())
            .collect();
        let order = cols
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { cols, order }
    }

    fn n_rows(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }
}

const UNASSIGNED: u32 = u32::MAX;

enum Arena {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Clone, Copy)]
struct Open {
    arena: usize,
    count: usize,
    sum: f64,
    sum_sq: f64,
}

/// Fits one tree to `targets` using the rows flagged in `in_sample`.
/// Leaves hold the mean target of their rows.
pub(crate) fn grow(
    x: &Columns,
    targets: &[f64],
    in_sample: &[bool],
    max_depth: usize,
    min_leaf: usize,
) -> TreeNode {
    let n = x.n_rows();
    let mut slot_of = vec![UNASSIGNED; n];
    let mut root = Open {
        arena: 0,
        count: 0,
        sum: 0.0,
        sum_sq: 0.0,
    };
    for r in 0..n {
        if in_sample[r] {
            slot_of[r] = 0;
            root.count += 1;
            root.sum += targets[r];
            root.sum_sq += targets[r] * targets[r];
        }
    }
    let mut arena = vec![Arena::Leaf(0.0)];
    let mut open = vec![root];

    for depth in 0..=max_depth {
        if open.is_empty() {
            break;
        }
        let can_split = |o: &Open| depth < max_depth && o.count >= 2 * min_leaf;
        let best = if open.iter().any(can_split) && !x.cols.is_empty() {
            best_splits(x, targets, &slot_of, &open, min_leaf)
        } else {
            vec![None; open.len()]
        };

        let mut next = Vec::new();
        let mut remap = vec![UNASSIGNED; open.len()];
        for (s, node) in open.iter().enumerate() {
            let chosen = best[s]
                .filter(|(_, sp)| can_split(node) && sp.gain > min_gain(node.count, node.sum_sq));
            match chosen {
                Some((feature, sp)) => {
                    let left = arena.len();
                    arena.push(Arena::Leaf(0.0));
                    arena.push(Arena::Leaf(0.0));
                    arena[node.arena] = Arena::Split {
                        feature,
                        threshold: sp.threshold,
                        left,
                        right: left + 1,
                    };
                    remap[s] = next.len() as u32;
                    for child in [left, left + 1] {
                        next.push(Open {
                            arena: child,
                            count: 0,
                            sum: 0.0,
                            sum_sq: 0.0,
                        });
                    }
                }
                None => {
                    let value = if node.count > 0 {
                        node.sum / node.count as f64
                    } else {
                        0.0
                    };
                    arena[node.arena] = Arena::Leaf(value);
                }
            }
        }

        for r in 0..n {
            let s = slot_of[r];
            if s == UNASSIGNED {
                continue;
            }
            let base = remap[s as usize];
            if base == UNASSIGNED {
                slot_of[r] = UNASSIGNED;
                continue;
            }
            let Arena::Split {
                feature, threshold, ..
            } = arena[open[s as usize].arena]
            else {
                unreachable!("remapped slot is a split");
            };
            let child = if x.cols[feature][r] <= threshold {
                base
            } else {
                base + 1
            };
            slot_of[r] = child;
            let c = &mut next[child as usize];
            c.count += 1;
            c.sum += targets[r];
            c.sum_sq += targets[r] * targets[r];
        }
        open = next;
    }

    fn nest(arena: &[Arena], i: usize) -> TreeNode {
        match arena[i] {
            Arena::Leaf(value) => TreeNode::Leaf { value },
            Arena::Split {
                feature,
                threshold,
                left,
                right,
            } => TreeNode::Split {
                feature,
                threshold,
                left: Box::new(nest(arena, left)),
                right: Box::new(nest(arena, right)),
            },
        }
    }
    nest(&arena, 0)
}

/// Best `(feature, split)` per open node. Features are scanned in parallel;
/// the merge keeps the lowest feature index among equal gains.
fn best_splits(
    x: &Columns,
    targets: &[f64],
    slot_of: &[u32],
    open: &[Open],
    min_leaf: usize,
) -> Vec<Option<(usize, Split)>> {
    let per_feature: Vec<Vec<Option<Split>>> = (0..x.cols.len())
        .into_par_iter()
        .map(|f| {
            let col = &x.cols[f];
            let mut scans = vec![SplitScan::new(); open.len()];
            for &r in &x.order[f] {
                let s = slot_of[r as usize];
                if s == UNASSIGNED {
                    continue;
                }
                let node = &open[s as usize];
                scans[s as usize].push(
                    col[r as usize],
                    targets[r as usize],
                    node.count,
                    node.sum,
                    min_leaf,
                );
            }
            scans.into_iter().map(|s| s.best).collect()
        })
        .collect();

    (0..open.len())
        .map(|s| {
            let mut best: Option<(usize, Split)> = None;
            for (f, splits) in per_feature.iter().enumerate() {
                if let Some(sp) = splits[s] {
                    if best.is_none_or(|(_, b)| sp.gain > b.gain) {
                        best = Some((f, sp));
                    }
                }
            }
            best
        })
        .collect()
}
