//! CART classification tree on weighted Gini impurity.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node<F> {
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
    Leaf {
        positive: F,
        negative: F,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<F> {
    pub nodes: Vec<Node<F>>,
}

/// Laplace-smoothed positive fraction of a leaf.
pub fn leaf_probability<F: Scalar>(positive: F, negative: F) -> F {
    (positive + F::one()) / (positive + negative + F::lit(2.0))
}

impl<F: Scalar> Tree<F> {
    pub fn predict_proba(&self, x: &[F]) -> F {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { positive, negative } => return leaf_probability(*positive, *negative),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<F>(nodes: &[Node<F>], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    /// Features examined per split; `None` means all of them.
    pub max_features: Option<usize>,
}

struct Builder<'a, F> {
    x: &'a [Vec<F>],
    y: &'a [u8],
    w: &'a [F],
    dim: usize,
    params: &'a TreeParams,
    nodes: Vec<Node<F>>,
}

fn gini<F: Scalar>(pos: F, total: F) -> F {
    if total <= F::zero() {
        return F::zero();
    }
    let p = pos / total;
    F::lit(2.0) * p * (F::one() - p)
}

/// Fits a tree. Zero-weight examples are dropped up front, so giving an
/// example weight zero is the same as deleting it.
pub(crate) fn fit_tree<F: Scalar>(
    x: &[Vec<F>],
    y: &[u8],
    w: &[F],
    params: &TreeParams,
    rng: &mut Rng,
) -> Tree<F> {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] > F::zero()).collect();
    let mut b = Builder {
        x,
        y,
        w,
        dim: x.first().map_or(0, Vec::len),
        params,
        nodes: Vec::new(),
    };
    b.grow(idx, 0, rng);
    Tree { nodes: b.nodes }
}

impl<F: Scalar> Builder<'_, F> {
    fn totals(&self, idx: &[usize]) -> (F, F) {
        idx.iter().fold((F::zero(), F::zero()), |(p, n), &i| {
            if self.y[i] == 1 {
                (p + self.w[i], n)
            } else {
                (p, n + self.w[i])
            }
        })
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let (pos, neg) = self.totals(&idx);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf {
            positive: pos,
            negative: neg,
        });
        if depth >= self.params.max_depth || idx.len() < 2 || pos == F::zero() || neg == F::zero() {
            return me;
        }
        let Some((feature, threshold)) = self.best_split(&idx, pos, neg, rng) else {
            return me;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    /// Highest weighted Gini gain; ties go to the lowest feature index, then
    /// the lowest threshold.
    fn best_split(&self, idx: &[usize], pos: F, neg: F, rng: &mut Rng) -> Option<(usize, F)> {
        let total = pos + neg;
        let parent = gini(pos, total);
        let features: Vec<usize> = match self.params.max_features {
            Some(k) if k < self.dim => {
                let mut f = index::sample(rng, self.dim, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.dim).collect(),
        };
        let eps = F::lit(1e-12);
        let mut best: Option<(F, usize, F)> = None;
        let mut order = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| {
                self.x[a][f]
                    .partial_cmp(&self.x[b][f])
                    .expect("finite features")
                    .then(a.cmp(&b))
            });
            let (mut lp, mut ln) = (F::zero(), F::zero());
            for k in 0..order.len() - 1 {
                let i = order[k];
                if self.y[i] == 1 {
                    lp = lp + self.w[i];
                } else {
                    ln = ln + self.w[i];
                }
                let (a, b) = (self.x[i][f], self.x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let lw = lp + ln;
                let rw = total - lw;
                let child = (lw * gini(lp, lw) + rw * gini(pos - lp, rw)) / total;
                let gain = parent - child;
                if gain > eps && best.is_none_or(|(g, _, _)| gain > g) {
                    let mut thr = a + (b - a) * F::lit(0.5);
                    if thr >= b {
                        thr = a;
                    }
                    best = Some((gain, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
