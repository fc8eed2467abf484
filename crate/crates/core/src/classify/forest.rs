use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{derive_seed, rng_from_seed, Exec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        bot: bool,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART tree stored as a flat node list with the root at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { bot } => return bot,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Bagged Gini trees, `floor(sqrt(dim))` candidate features per split.
    pub fn fit(points: &[Vec<f64>], is_bot: &[bool], n_trees: usize, max_depth: Option<usize>, seed: u64, exec: Exec) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        let mtry = ((dim as f64).sqrt().floor() as usize).max(1);
        let trees = exec.map_range(n_trees, |t| {
            let mut rng = rng_from_seed(derive_seed(seed, t as u64));
            let n = points.len();
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut builder = Builder {
                points,
                is_bot,
                mtry,
                max_depth,
                nodes: Vec::new(),
                rng,
            };
            builder.grow(sample, 0);
            DecisionTree { nodes: builder.nodes }
        });
        Self { trees }
    }

    /// Fraction of trees voting bot.
    pub fn score(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(x)).count();
        votes as f64 / self.trees.len().max(1) as f64
    }
}

struct Builder<'a, R> {
    points: &'a [Vec<f64>],
    is_bot: &'a [bool],
    mtry: usize,
    max_depth: Option<usize>,
    nodes: Vec<TreeNode>,
    rng: R,
}

/// `n * gini` for a node with `bots` of `n` positives. The integer product
/// keeps it exactly symmetric under swapping the two classes.
fn weighted_gini(bots: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (2 * bots * (n - bots)) as f64 / n as f64
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        let bots = idx.iter().filter(|&&i| self.is_bot[i]).count();
        let leaf = TreeNode::Leaf { bot: 2 * bots > idx.len() };
        self.nodes.push(leaf.clone());
        if bots == 0 || bots == idx.len() || self.max_depth.is_some_and(|d| depth >= d) {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.points[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    /// Lowest weighted child impurity among `mtry` random features. When
    /// all of them are constant on this node the remaining features are
    /// tried before giving up.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let dim = self.points[0].len();
        let mut order: Vec<usize> = (0..dim).collect();
        order.shuffle(&mut self.rng);
        let total_bots = idx.iter().filter(|&&i| self.is_bot[i]).count();
        let n = idx.len();
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let mut vals: Vec<(f64, bool)> = idx.iter().map(|&i| (self.points[i][f], self.is_bot[i])).collect();
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_bots = 0;
            for k in 1..n {
                left_bots += vals[k - 1].1 as usize;
                if vals[k].0 <= vals[k - 1].0 {
                    continue;
                }
                let impurity = (weighted_gini(left_bots, k) + weighted_gini(total_bots - left_bots, n - k)) / n as f64;
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    let mid = 0.5 * (vals[k - 1].0 + vals[k].0);
                    let threshold = if mid < vals[k].0 { mid } else { vals[k - 1].0 };
                    best = Some((impurity, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tree_separates_threshold() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let f = RandomForest::fit(&pts, &labels, 25, None, 3, Exec::Sequential);
        assert!(f.score(&[19.0]) > 0.5);
        assert!(f.score(&[0.0]) < 0.5);
    }

    #[test]
    fn exec_modes_agree() {
        let pts: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.3).sin(), (i as f64 * 0.7).cos(), i as f64]).collect();
        let labels: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
        let a = RandomForest::fit(&pts, &labels, 10, Some(4), 11, Exec::Sequential);
        let b = RandomForest::fit(&pts, &labels, 10, Some(4), 11, Exec::Parallel);
        assert_eq!(a, b);
    }
}
