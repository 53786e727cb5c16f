//! Bagged CART regression trees.
//!
//! Trees split on squared-error reduction. On a 0/1 target this is the Gini
//! criterion, and leaf means are class frequencies, so the same ensemble
//! serves as a probability forest.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_leaf: 5,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    n_features: usize,
}

struct Columns<'a> {
    data: &'a [f64],
    n: usize,
}

impl Columns<'_> {
    fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.n + row]
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    split_at: usize,
    score: f64,
}

impl Forest {
    /// Fits `params.n_trees` trees on bootstrap resamples, drawing
    /// `⌈√d⌉` candidate features per split. Tree `k` uses the random stream
    /// `(seed, k)`, so the result does not depend on thread scheduling.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        let n = x.nrows();
        if n != y.len() || n == 0 {
            return Err(Error::ShapeMismatch(format!(
                "design has {} rows, target has {}",
                n,
                y.len()
            )));
        }
        if params.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateDesign("non-finite input".into()));
        }
        let d = x.ncols();
        let mtry = ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1));
        let cols = Columns {
            data: x.as_slice(),
            n,
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng::stream(&[seed], k as u64);
                let sample: Vec<usize> = (0..n)
                    .map(|_| ((rng::uniform(&mut rng) * n as f64) as usize).min(n - 1))
                    .collect();
                grow(&cols, d, y, sample, params, mtry, &mut rng)
            })
            .collect();
        Ok(Forest {
            trees,
            n_features: d,
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features);
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                self.predict(&row)
            })
            .collect()
    }
}

fn mean_of(y: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

fn grow(
    cols: &Columns<'_>,
    d: usize,
    y: &[f64],
    sample: Vec<usize>,
    params: &ForestParams,
    mtry: usize,
    rng: &mut impl rand::Rng,
) -> Tree {
    let min_leaf = params.min_leaf.max(1);
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut stack = vec![(0usize, sample, 0usize)];
    let mut features: Vec<usize> = (0..d).collect();
    let mut pairs: Vec<(f64, f64)> = Vec::new();

    while let Some((at, idx, depth)) = stack.pop() {
        let m = idx.len();
        let leaf = Node::Leaf(mean_of(y, &idx));
        let depth_capped = params.max_depth.is_some_and(|md| depth >= md);
        if m < 2 * min_leaf || depth_capped || d == 0 {
            nodes[at] = leaf;
            continue;
        }

        let total: f64 = idx.iter().map(|&i| y[i]).sum();
        let parent_score = total * total / m as f64;

        // partial Fisher–Yates: the first `mtry` entries are the candidates
        for k in 0..mtry {
            let j = k + ((rng::uniform(rng) * (d - k) as f64) as usize).min(d - k - 1);
            features.swap(k, j);
        }

        let mut best: Option<Best> = None;
        for &f in &features[..mtry] {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (cols.get(i, f), y[i])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for s in 0..m - 1 {
                left_sum += pairs[s].1;
                let n_left = s + 1;
                if n_left < min_leaf || m - n_left < min_leaf {
                    continue;
                }
                if pairs[s].0 == pairs[s + 1].0 {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (m - n_left) as f64;
                if best.as_ref().map_or(true, |b| score > b.score) {
                    let (lo, hi) = (pairs[s].0, pairs[s + 1].0);
                    best = Some(Best {
                        feature: f,
                        threshold: lo + (hi - lo) / 2.0,
                        split_at: n_left,
                        score,
                    });
                }
            }
        }

        match best {
            Some(b) if b.score - parent_score > 1e-12 * (parent_score.abs() + 1.0) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| cols.get(i, b.feature) <= b.threshold);
                debug_assert_eq!(left_idx.len(), b.split_at);
                let left = nodes.len();
                nodes.push(Node::Leaf(0.0));
                nodes.push(Node::Leaf(0.0));
                nodes[at] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right: left + 1,
                };
                stack.push((left, left_idx, depth + 1));
                stack.push((left + 1, right_idx, depth + 1));
            }
            _ => nodes[at] = leaf,
        }
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target() {
        let x = DMatrix::from_fn(40, 3, |i, j| (i * (j + 1)) as f64);
        let f = Forest::fit(&x, &[2.5; 40], &ForestParams::default(), 1).unwrap();
        assert!((f.predict(&[1.0, 2.0, 3.0]) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn learns_a_step() {
        let x = DMatrix::from_fn(200, 1, |i, _| i as f64 / 200.0);
        let y: Vec<f64> = (0..200).map(|i| if i < 100 { 0.0 } else { 1.0 }).collect();
        let params = ForestParams {
            n_trees: 30,
            ..Default::default()
        };
        let f = Forest::fit(&x, &y, &params, 9).unwrap();
        assert!(f.predict(&[0.1]) < 0.05);
        assert!(f.predict(&[0.9]) > 0.95);
    }

    #[test]
    fn seeded_determinism() {
        let x = DMatrix::from_fn(100, 2, |i, j| ((i * 7 + j * 13) % 17) as f64);
        let y: Vec<f64> = (0..100).map(|i| (i % 5) as f64).collect();
        let p = ForestParams {
            n_trees: 10,
            min_leaf: 2,
            max_depth: Some(4),
        };
        let a = Forest::fit(&x, &y, &p, 3).unwrap();
        let b = Forest::fit(&x, &y, &p, 3).unwrap();
        assert_eq!(a, b);
        let c = Forest::fit(&x, &y, &p, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn max_depth_zero_is_the_bootstrap_mean() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = ForestParams {
            n_trees: 1,
            min_leaf: 1,
            max_depth: Some(0),
        };
        let f = Forest::fit(&x, &y, &p, 0).unwrap();
        assert_eq!(f.predict(&[0.0]), f.predict(&[9.0]));
    }
}
