use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub(crate) fn check(&self, num_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Data("empty tree".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature, left, right, ..
            } = *n
            {
                if feature >= num_features || left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                    return Err(Error::Data(format!("malformed tree node {i}")));
                }
            }
        }
        Ok(())
    }
}

/// Row indices of each column, sorted by value.
pub(crate) struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: ArrayView2<'_, f64>) -> Self {
        let order = x
            .columns()
            .into_iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                idx
            })
            .collect();
        Self { order }
    }
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub colsample_bylevel: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy, Default)]
struct Sweep {
    g: f64,
    h: f64,
    last: f64,
    seen: bool,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn build_tree<R: Rng + ?Sized>(
    cols: &SortedColumns,
    x: ArrayView2<'_, f64>,
    grad: &[f64],
    hess: &[f64],
    in_sample: &[bool],
    features: &[usize],
    p: &TreeParams,
    rng: &mut R,
) -> Tree {
    let n = grad.len();
    // position of each row's node in `frontier`, or NONE
    const NONE: u32 = u32::MAX;
    let mut slot: Vec<u32> = in_sample.iter().map(|&s| if s { 0 } else { NONE }).collect();
    let (g0, h0) = (0..n)
        .filter(|&i| in_sample[i])
        .fold((0.0, 0.0), |(g, h), i| (g + grad[i], h + hess[i]));
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // (node index, G, H)
    let mut frontier: Vec<(usize, f64, f64)> = vec![(0, g0, h0)];
    let leaf = |g: f64, h: f64| Node::Leaf {
        value: -g / (h + p.lambda) * p.learning_rate,
    };

    for _depth in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        let k = ((p.colsample_bylevel * features.len() as f64) as usize).max(1);
        let level_features: Vec<usize> = if k < features.len() {
            let mut v: Vec<usize> = sample(rng, features.len(), k).into_iter().map(|i| features[i]).collect();
            v.sort_unstable();
            v
        } else {
            features.to_vec()
        };
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut sweep = vec![Sweep::default(); frontier.len()];
        for &f in &level_features {
            sweep.iter_mut().for_each(|s| *s = Sweep::default());
            for &r in &cols.order[f] {
                let r = r as usize;
                let s = slot[r];
                if s == NONE {
                    continue;
                }
                let s = s as usize;
                let v = x[[r, f]];
                let (_, gt, ht) = frontier[s];
                let sw = &mut sweep[s];
                if sw.seen && v > sw.last {
                    let (gl, hl) = (sw.g, sw.h);
                    let (gr, hr) = (gt - gl, ht - hl);
                    if hl >= p.min_child_weight && hr >= p.min_child_weight {
                        let gain = 0.5 * (score(gl, hl, p.lambda) + score(gr, hr, p.lambda) - score(gt, ht, p.lambda)) - p.gamma;
                        if gain > 1e-12 && best[s].is_none_or(|b| gain > b.gain) {
                            best[s] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold: sw.last + (v - sw.last) / 2.0,
                            });
                        }
                    }
                }
                sw.g += grad[r];
                sw.h += hess[r];
                sw.last = v;
                sw.seen = true;
            }
        }
        // materialize splits
        let mut next: Vec<(usize, f64, f64)> = Vec::new();
        let mut child_slot: Vec<Option<(u32, u32)>> = vec![None; frontier.len()];
        let mut child_stats: Vec<(f64, f64, f64, f64)> = vec![(0.0, 0.0, 0.0, 0.0); frontier.len()];
        for r in 0..n {
            let s = slot[r];
            if s == NONE {
                continue;
            }
            if let Some(c) = best[s as usize] {
                let st = &mut child_stats[s as usize];
                if x[[r, c.feature]] < c.threshold {
                    st.0 += grad[r];
                    st.1 += hess[r];
                } else {
                    st.2 += grad[r];
                    st.3 += hess[r];
                }
            }
        }
        for (s, &(node, g, h)) in frontier.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let left = nodes.len();
                    let (gl, hl, gr, hr) = child_stats[s];
                    nodes.push(leaf(gl, hl));
                    nodes.push(leaf(gr, hr));
                    nodes[node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    child_slot[s] = Some((next.len() as u32, next.len() as u32 + 1));
                    next.push((left, gl, hl));
                    next.push((left + 1, gr, hr));
                }
                None => nodes[node] = leaf(g, h),
            }
        }
        for r in 0..n {
            let s = slot[r];
            if s == NONE {
                continue;
            }
            slot[r] = match (child_slot[s as usize], best[s as usize]) {
                (Some((l, rt)), Some(c)) => {
                    if x[[r, c.feature]] < c.threshold {
                        l
                    } else {
                        rt
                    }
                }
                _ => NONE,
            };
        }
        frontier = next;
    }
    for &(node, g, h) in &frontier {
        nodes[node] = leaf(g, h);
    }
    Tree { nodes }
}
