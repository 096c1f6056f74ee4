use serde::{Deserialize, Serialize};

/// CART regression tree node; children are indices into the node vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
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

struct Builder<'a> {
    z: &'a [Vec<f64>],
    y: &'a [f64],
    max_depth: Option<usize>,
    nodes: Vec<TreeNode>,
    gains: Vec<f64>,
}

fn sse(y: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    idx.iter().map(|&i| (y[i] - mean).powi(2)).sum()
}

impl Builder<'_> {
    /// Best (feature, threshold, gain) by SSE reduction. Ties keep the earliest candidate.
    fn best_split(&self, idx: &[usize], parent_sse: f64) -> Option<(usize, f64, f64)> {
        let width = self.z[idx[0]].len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for feature in 0..width {
            order.sort_by(|&a, &b| self.z[a][feature].total_cmp(&self.z[b][feature]).then(a.cmp(&b)));
            let total: f64 = order.iter().map(|&i| self.y[i]).sum();
            let total_sq: f64 = order.iter().map(|&i| self.y[i] * self.y[i]).sum();
            let n = order.len() as f64;
            let (mut left_sum, mut left_sq) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let yi = self.y[order[k]];
                left_sum += yi;
                left_sq += yi * yi;
                let here = self.z[order[k]][feature];
                let next = self.z[order[k + 1]][feature];
                if here == next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                let right_sum = total - left_sum;
                let right_sq = total_sq - left_sq;
                let child_sse = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
                let gain = parent_sse - child_sse;
                if best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((feature, here + (next - here) / 2.0, gain));
                }
            }
        }
        best.filter(|&(_, _, g)| g > 1e-12 * parent_sse.max(1e-300))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let node_id = self.nodes.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(TreeNode::Leaf {
            value: mean,
            samples: idx.len(),
        });
        let parent_sse = sse(self.y, &idx);
        if idx.len() < 2 || parent_sse == 0.0 || self.max_depth.is_some_and(|m| depth >= m) {
            return node_id;
        }
        let Some((feature, threshold, _)) = self.best_split(&idx, parent_sse) else {
            return node_id;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.z[i][feature] <= threshold);
        // float rounding can leave one side empty when neighbours are one ulp apart
        if left_idx.is_empty() || right_idx.is_empty() {
            return node_id;
        }
        let gain = parent_sse - sse(self.y, &left_idx) - sse(self.y, &right_idx);
        self.gains[feature] += gain.max(0.0);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[node_id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        node_id
    }
}

/// Fits a tree and returns it with the impurity reduction accumulated per feature.
pub(super) fn fit(z: &[Vec<f64>], y: &[f64], max_depth: Option<usize>) -> (Vec<TreeNode>, Vec<f64>) {
    let width = z.first().map_or(0, Vec::len);
    let mut b = Builder {
        z,
        y,
        max_depth,
        nodes: Vec::new(),
        gains: vec![0.0; width],
    };
    b.grow((0..z.len()).collect(), 0);
    (b.nodes, b.gains)
}

pub(super) fn predict(nodes: &[TreeNode], z: &[f64]) -> f64 {
    let mut i = 0;
    loop {
        match &nodes[i] {
            TreeNode::Leaf { value, .. } => return *value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => i = if z[*feature] <= *threshold { *left } else { *right },
        }
    }
}

#[cfg(test)]
pub(super) fn depth(nodes: &[TreeNode]) -> usize {
    fn walk(nodes: &[TreeNode], i: usize) -> usize {
        match &nodes[i] {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
        }
    }
    walk(nodes, 0)
}
