//! Bagged CART classifier for binary labels.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::seed::{derive_seed, rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(n_trees: usize, max_depth: usize, seed: u64) -> Self {
        ForestParams {
            n_trees,
            max_depth,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { counts: [u32; 2] },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Nodes in an arena; index 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Majority class of the reached leaf, ties to 0.
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return u8::from(counts[1] > counts[0]),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<Tree>,
    n_features: usize,
    params: ForestParams,
}

impl RandomForest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> ForestParams {
        self.params
    }
}

/// Trains `params.n_trees` trees, each on its own bootstrap sample with
/// `floor(sqrt(F))` candidate features per node.
pub fn rf_train(x: &[Vec<f64>], y: &[u8], params: ForestParams, exec: Execution) -> Result<RandomForest> {
    if x.len() != y.len() {
        return Err(Error::Input(format!("{} feature rows but {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Input("a forest needs at least two samples".into()));
    }
    if let Some(bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::Input(format!("labels must be 0 or 1, found {bad}")));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::Input("attack dataset contains a single class".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Input("a forest needs at least one tree".into()));
    }
    let n_features = x[0].len();
    if n_features == 0 || x.iter().any(|r| r.len() != n_features) {
        return Err(Error::Input("feature rows must be nonempty and of equal length".into()));
    }
    let mtry = ((n_features as f64).sqrt().floor() as usize).max(1);
    let trees = exec.map_range(params.n_trees, |t| {
        let mut rng = rng_for(params.seed, Stream::Forest, &[t as u64]);
        let rows: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
        grow(x, y, rows, mtry, params.max_depth, &mut rng)
    });
    Ok(RandomForest {
        trees,
        n_features,
        params,
    })
}

/// Majority vote with ties going to 0, and the share of trees voting for
/// the returned label.
pub fn rf_predict(forest: &RandomForest, x: &[f64]) -> Result<(u8, f64)> {
    if x.len() != forest.n_features {
        return Err(Error::Input(format!(
            "feature vector has length {}, forest expects {}",
            x.len(),
            forest.n_features
        )));
    }
    let ones = forest.trees.iter().filter(|t| t.predict(x) == 1).count();
    let zeros = forest.trees.len() - ones;
    let label = u8::from(ones > zeros);
    let votes = if label == 1 { ones } else { zeros };
    Ok((label, votes as f64 / forest.trees.len() as f64))
}

fn counts(y: &[u8], rows: &[usize]) -> [u32; 2] {
    let mut c = [0u32; 2];
    rows.iter().for_each(|&r| c[y[r] as usize] += 1);
    c
}

fn gini(c: [u32; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[0] as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct Best {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

fn grow<R: Rng>(x: &[Vec<f64>], y: &[u8], rows: Vec<usize>, mtry: usize, max_depth: usize, rng: &mut R) -> Tree {
    let mut nodes = Vec::new();
    // (node slot, rows, depth); children are filled in depth-first order.
    let mut stack = vec![(0usize, rows, 0usize)];
    nodes.push(Node::Leaf { counts: [0, 0] });
    let mut sorted = Vec::new();
    while let Some((slot, rows, depth)) = stack.pop() {
        let c = counts(y, &rows);
        nodes[slot] = Node::Leaf { counts: c };
        if depth >= max_depth || c[0] == 0 || c[1] == 0 || rows.len() < 2 {
            continue;
        }
        let n_features = x[0].len();
        let mut candidates = sample(rng, n_features, mtry.min(n_features)).into_vec();
        candidates.sort_unstable();
        let mut best: Option<Best> = None;
        for &f in &candidates {
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (x[r][f], y[r])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0u32; 2];
            for i in 0..sorted.len() - 1 {
                left[sorted[i].1 as usize] += 1;
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let right = [c[0] - left[0], c[1] - left[1]];
                let nl = (left[0] + left[1]) as f64;
                let nr = (right[0] + right[1]) as f64;
                let impurity = (nl * gini(left) + nr * gini(right)) / (nl + nr);
                let threshold = sorted[i].0 + (sorted[i + 1].0 - sorted[i].0) / 2.0;
                // Candidates are visited in increasing feature order and
                // increasing threshold, so strict improvement keeps the
                // lowest feature and threshold among equal impurities.
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(Best {
                        impurity,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        let Some(b) = best else { continue };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { counts: [0, 0] });
        nodes.push(Node::Leaf { counts: [0, 0] });
        nodes[slot] = Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            left: li,
            right: ri,
        };
        stack.push((ri, r, depth + 1));
        stack.push((li, l, depth + 1));
    }
    Tree { nodes }
}

/// Seed for the forest trained on fold `fold` of repetition `rep`.
pub(crate) fn fold_seed(seed: u64, rep: usize, fold: usize) -> u64 {
    derive_seed(seed, Stream::Forest, &[rep as u64, fold as u64])
}
