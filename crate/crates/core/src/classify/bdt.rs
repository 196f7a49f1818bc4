//! Bootstrap-aggregated CART classification trees with majority voting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Index of the subtree for `x[feature] <= threshold`.
        left: usize,
        right: usize,
    },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Grows a Gini-impurity CART tree on `sample` (indices into `rows`).
    pub fn grow(rows: &[Vec<f64>], labels: &[usize], classes: usize, sample: Vec<usize>, max_depth: usize) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        tree.build(rows, labels, classes, sample, max_depth);
        tree
    }

    fn build(&mut self, rows: &[Vec<f64>], labels: &[usize], classes: usize, sample: Vec<usize>, depth_left: usize) -> usize {
        let at = self.nodes.len();
        let counts = class_counts(&sample, labels, classes);
        let majority = argmax_count(&counts);
        self.nodes.push(Node::Leaf { class: majority });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth_left == 0 || sample.len() < 2 {
            return at;
        }
        let Some((feature, threshold)) = best_split(rows, labels, classes, &sample, &counts) else {
            return at;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            sample.into_iter().partition(|&i| rows[i][feature] <= threshold);
        let left = self.build(rows, labels, classes, left, depth_left - 1);
        let right = self.build(rows, labels, classes, right, depth_left - 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

fn class_counts(sample: &[usize], labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &i in sample {
        counts[labels[i]] += 1;
    }
    counts
}

/// Index of the largest count, lowest index on ties.
fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn gini_sum(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    // total * gini impurity
    t - sq / t
}

fn best_split(rows: &[Vec<f64>], labels: &[usize], classes: usize, sample: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
    let n = sample.len();
    let parent = gini_sum(counts, n);
    let dim = rows[sample[0]].len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted = sample.to_vec();
    let mut left = vec![0usize; classes];
    let mut right = vec![0usize; classes];

    for feature in 0..dim {
        sorted.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]).then(a.cmp(&b)));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(counts);
        for k in 0..n - 1 {
            let i = sorted[k];
            left[labels[i]] += 1;
            right[labels[i]] -= 1;
            let here = rows[i][feature];
            let next = rows[sorted[k + 1]][feature];
            if next <= here {
                continue;
            }
            let impurity = gini_sum(&left, k + 1) + gini_sum(&right, n - k - 1);
            if impurity < parent - 1e-12 && best.is_none_or(|(b, _, _)| impurity < b - 1e-12) {
                let mid = here + (next - here) / 2.0;
                // midpoint can round up to `next` for adjacent floats
                let threshold = if mid < next { mid } else { here };
                best = Some((impurity, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedTrees {
    pub classes: usize,
    pub trees: Vec<Tree>,
}

impl BaggedTrees {
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], classes: usize, trees: usize, max_depth: usize, seed: u64) -> Self {
        let n = rows.len();
        let trees = (0..trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, t as u64));
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                Tree::grow(rows, labels, classes, sample, max_depth)
            })
            .collect();
        BaggedTrees { classes, trees }
    }

    /// Fraction of trees voting for each class.
    pub fn vote_fractions(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.classes];
        for tree in &self.trees {
            votes[tree.predict(x)] += 1.0;
        }
        let count = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= count);
        votes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_depth_tree_fits_distinct_points() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 40) as f64, (i % 3) as f64]).collect();
        let labels: Vec<usize> = (0..40).map(|i| (i * 13 % 5) % 3).collect();
        let tree = Tree::grow(&rows, &labels, 3, (0..40).collect(), 64);
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(tree.predict(r), l);
        }
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let tree = Tree::grow(&rows, &labels, 2, (0..64).collect(), 3);
        assert!(tree.depth() <= 3);
    }

    #[test]
    fn vote_fractions_sum_to_one() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let labels: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let forest = BaggedTrees::fit(&rows, &labels, 3, 7, 8, 5);
        let v = forest.vote_fractions(&[12.0, 3.0]);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|&f| (f * 7.0 - (f * 7.0).round()).abs() < 1e-12));
    }
}
