//! CART regression trees with exact, presorted split search.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: Some(10),
            min_leaf: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    /// Total squared-error reduction per feature, normalized to sum to 1
    /// (all zero when the tree never splits).
    pub importances: Vec<f64>,
}

struct Frame {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

impl RegressionTree {
    /// Fits a tree minimizing the weighted child variance at every split.
    ///
    /// Candidate splits are scanned feature by feature in ascending threshold
    /// order; a later candidate wins only with a strictly larger gain, so ties
    /// go to the lowest feature index and then the lowest threshold.
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], params: &TreeParams) -> RegressionTree {
        let (n, k) = x.dim();
        assert_eq!(n, y.len(), "feature rows and targets differ in length");
        let min_leaf = params.min_leaf.max(1);
        let max_depth = params.max_depth.unwrap_or(usize::MAX);

        let columns: Vec<Vec<f64>> = (0..k).map(|f| x.column(f).to_vec()).collect();
        let mut sorted: Vec<Vec<u32>> = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();

        let mut nodes = vec![TreeNode::Leaf {
            value: 0.0,
            samples: n,
        }];
        let mut importances = vec![0.0; k];
        let mut goes_left = vec![false; n];
        let mut scratch: Vec<u32> = Vec::with_capacity(n);
        let mut stack = vec![Frame {
            node: 0,
            start: 0,
            end: n,
            depth: 0,
        }];

        while let Some(Frame {
            node,
            start,
            end,
            depth,
        }) = stack.pop()
        {
            let count = end - start;
            let segment = &sorted[0][start..end];
            let sum: f64 = segment.iter().map(|&i| y[i as usize]).sum();
            let mean = if count > 0 { sum / count as f64 } else { 0.0 };
            nodes[node] = TreeNode::Leaf {
                value: mean,
                samples: count,
            };
            if depth >= max_depth || count < 2 * min_leaf {
                continue;
            }
            let sse: f64 = segment
                .iter()
                .map(|&i| (y[i as usize] - mean).powi(2))
                .sum();
            if sse <= 0.0 {
                continue;
            }

            // gain = SSE(parent) - SSE(left) - SSE(right), from centered sums
            let mut best: Option<(usize, usize, f64)> = None;
            for (f, col) in columns.iter().enumerate() {
                let seg = &sorted[f][start..end];
                let mut left_sum = 0.0;
                for pos in 0..count - 1 {
                    let i = seg[pos] as usize;
                    left_sum += y[i] - mean;
                    let nl = pos + 1;
                    let nr = count - nl;
                    if nl < min_leaf {
                        continue;
                    }
                    if nr < min_leaf {
                        break;
                    }
                    if col[i] >= col[seg[pos + 1] as usize] {
                        continue;
                    }
                    let gain = left_sum * left_sum / nl as f64
                        + left_sum * left_sum / nr as f64;
                    let better = match best {
                        None => gain > 0.0,
                        Some((_, _, g)) => gain > g * (1.0 + 1e-12) + 1e-300,
                    };
                    if better {
                        best = Some((f, pos, gain));
                    }
                }
            }
            let Some((feature, pos, gain)) = best else {
                continue;
            };
            if gain <= sse * 1e-12 {
                continue;
            }
            let col = &columns[feature];
            let seg = &sorted[feature][start..end];
            let lo = col[seg[pos] as usize];
            let hi = col[seg[pos + 1] as usize];
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            for (p, &i) in seg.iter().enumerate() {
                goes_left[i as usize] = p <= pos;
            }
            for order in sorted.iter_mut() {
                let seg = &mut order[start..end];
                scratch.clear();
                scratch.extend(seg.iter().copied().filter(|&i| goes_left[i as usize]));
                scratch.extend(seg.iter().copied().filter(|&i| !goes_left[i as usize]));
                seg.copy_from_slice(&scratch);
            }
            importances[feature] += gain;

            let left = nodes.len();
            let right = left + 1;
            nodes.push(TreeNode::Leaf {
                value: 0.0,
                samples: pos + 1,
            });
            nodes.push(TreeNode::Leaf {
                value: 0.0,
                samples: count - pos - 1,
            });
            nodes[node] = TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            };
            let mid = start + pos + 1;
            stack.push(Frame {
                node: right,
                start: mid,
                end,
                depth: depth + 1,
            });
            stack.push(Frame {
                node: left,
                start,
                end: mid,
                depth: depth + 1,
            });
        }

        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            for v in &mut importances {
                *v /= total;
            }
        }
        RegressionTree { nodes, importances }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| match r.as_slice() {
                Some(s) => self.predict_row(s),
                None => self.predict_row(&r.to_vec()),
            })
            .collect()
    }

    pub fn split_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Split { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}
