use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForestConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes are stored in creation order with the root at index 0; children
/// always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    /// How often each training row was drawn into this tree's sample.
    pub in_bag_counts: Vec<u32>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn is_in_bag(&self, row: usize) -> bool {
        self.in_bag_counts[row] > 0
    }

    pub fn oob_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.in_bag_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

pub fn predict_tree(tree: &RegressionTree, x: &[f64]) -> f64 {
    tree.predict(x)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

pub(super) fn grow(
    x: &DMatrix<f64>,
    y: &[f64],
    config: &ForestConfig,
    mtry: usize,
    tree_index: usize,
) -> RegressionTree {
    let n = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(tree_index as u64);

    let sample: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut in_bag_counts = vec![0u32; n];
    for &i in &sample {
        in_bag_counts[i] += 1;
    }

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![(0usize, sample, 0usize)];
    let mut buf = Vec::new();
    while let Some((at, rows, depth)) = stack.pop() {
        let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
        let can_split = rows.len() >= 2 * config.min_node_size
            && config.max_depth.is_none_or(|m| depth < m)
            && rows.iter().any(|&i| y[i] != y[rows[0]]);
        let choice = if can_split {
            best_split(x, y, &rows, mean, config.min_node_size, mtry, &mut rng, &mut buf)
        } else {
            None
        };
        match choice {
            None => nodes[at] = Node::Leaf { value: mean },
            Some(s) => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| x[(i, s.feature)] <= s.threshold);
                let l = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[at] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: l,
                    right: l + 1,
                };
                stack.push((l + 1, right, depth + 1));
                stack.push((l, left, depth + 1));
            }
        }
    }
    RegressionTree { nodes, in_bag_counts }
}

/// Variance-reduction split over `mtry` features drawn without replacement.
/// Candidates are midpoints between consecutive distinct values; exact ties
/// go to the lowest feature index, then the lowest threshold.
#[allow(clippy::too_many_arguments)]
fn best_split(
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    mean: f64,
    min_node_size: usize,
    mtry: usize,
    rng: &mut ChaCha8Rng,
    buf: &mut Vec<(f64, f64)>,
) -> Option<SplitChoice> {
    let d = x.ncols();
    let mut features = index::sample(rng, d, mtry).into_vec();
    features.sort_unstable();

    let m = rows.len();
    let sse_parent: f64 = rows.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    let mut best: Option<SplitChoice> = None;
    for &f in &features {
        let col = x.column(f);
        buf.clear();
        buf.extend(rows.iter().map(|&i| (col[i], y[i] - mean)));
        buf.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = buf.iter().map(|p| p.1).sum();

        let mut left_sum = 0.0;
        for k in 0..m - 1 {
            left_sum += buf[k].1;
            let (lo, hi) = (buf[k].0, buf[k + 1].0);
            if lo == hi {
                continue;
            }
            let nl = k + 1;
            let nr = m - nl;
            if nl < min_node_size || nr < min_node_size {
                continue;
            }
            let right_sum = total - left_sum;
            let decrease = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64
                - total * total / m as f64;
            if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    decrease,
                });
            }
        }
    }
    best.filter(|b| b.decrease > 1e-10 * sse_parent && b.decrease > 0.0)
}

/// Midpoint of `lo < hi` that still sends `lo` left and `hi` right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || !mid.is_finite() {
        lo
    } else {
        mid
    }
}
