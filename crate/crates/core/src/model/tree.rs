//! Second-order regression trees grown level by level.
//!
//! Each feature column is sorted once per training set. Growing a level is
//! then one scan of every sorted column, with each instance's running sums
//! routed to the node it currently sits in, so split search costs
//! `O(n * features)` per level instead of a sort per node.

use rayon::prelude::*;

/// Splits must improve the second-order objective by more than this.
const MIN_GAIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Instances with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn is_stump_leaf(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

/// Row-major feature matrix.
#[derive(Debug, Clone, Copy)]
pub struct Matrix<'a> {
    pub values: &'a [f64],
    pub n_features: usize,
}

impl<'a> Matrix<'a> {
    pub fn get(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features + feature]
    }

    pub fn row(&self, row: usize) -> &'a [f64] {
        &self.values[row * self.n_features..(row + 1) * self.n_features]
    }
}

/// Per-feature orderings of a fixed instance subset, ascending by value
/// with ties by instance index.
pub struct SortedColumns {
    pub order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: Matrix<'_>, rows: &[usize]) -> Self {
        let order = (0..x.n_features)
            .into_par_iter()
            .map(|f| {
                let mut idx: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, f)
                        .total_cmp(&x.get(b as usize, f))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        SortedColumns { order }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// L2 penalty on leaf values.
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    g: f64,
    h: f64,
    n: usize,
}

impl Sums {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn score(&self, l2: f64) -> f64 {
        self.g * self.g / (self.h + l2)
    }

    fn leaf_value(&self, l2: f64) -> f64 {
        -self.g / (self.h + l2)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best split of each open node along one feature.
fn scan_feature(
    x: Matrix<'_>,
    feature: usize,
    order: &[u32],
    slot_of: &[i32],
    totals: &[Sums],
    grad: &[f64],
    hess: &[f64],
    p: &TreeParams,
) -> Vec<Option<Candidate>> {
    let mut left = vec![Sums::default(); totals.len()];
    let mut last: Vec<Option<f64>> = vec![None; totals.len()];
    let mut best: Vec<Option<Candidate>> = vec![None; totals.len()];
    for &i in order {
        let i = i as usize;
        let slot = slot_of[i];
        if slot < 0 {
            continue;
        }
        let s = slot as usize;
        let v = x.get(i, feature);
        if let Some(prev) = last[s] {
            if v > prev {
                let l = left[s];
                let t = totals[s];
                let r = Sums {
                    g: t.g - l.g,
                    h: t.h - l.h,
                    n: t.n - l.n,
                };
                if l.n >= p.min_leaf && r.n >= p.min_leaf {
                    let gain = l.score(p.l2) + r.score(p.l2) - t.score(p.l2);
                    if gain > MIN_GAIN && best[s].is_none_or(|b| gain > b.gain) {
                        let mut threshold = prev + (v - prev) / 2.0;
                        if threshold >= v {
                            threshold = prev;
                        }
                        best[s] = Some(Candidate {
                            gain,
                            feature,
                            threshold,
                        });
                    }
                }
            }
        }
        left[s].add(grad[i], hess[i]);
        last[s] = Some(v);
    }
    best
}

/// Fits one tree to gradients/hessians over the instances in `sorted`.
pub fn fit_tree(
    x: Matrix<'_>,
    sorted: &SortedColumns,
    grad: &[f64],
    hess: &[f64],
    p: &TreeParams,
) -> RegressionTree {
    let n = x.values.len() / x.n_features.max(1);
    // Open-node slot per instance; -1 for instances outside the tree or in
    // finished leaves.
    let mut slot_of = vec![-1i32; n];
    let mut root = Sums::default();
    if let Some(first) = sorted.order.first() {
        for &i in first {
            slot_of[i as usize] = 0;
            root.add(grad[i as usize], hess[i as usize]);
        }
    }
    let mut nodes = vec![Node::Leaf {
        value: root.leaf_value(p.l2),
    }];
    // (node index, sums) for each open slot.
    let mut open: Vec<(usize, Sums)> = vec![(0, root)];

    for _depth in 0..p.max_depth {
        if open.is_empty() || x.n_features == 0 {
            break;
        }
        let totals: Vec<Sums> = open.iter().map(|o| o.1).collect();
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..x.n_features)
            .into_par_iter()
            .map(|f| scan_feature(x, f, &sorted.order[f], &slot_of, &totals, grad, hess, p))
            .collect();

        // Lowest feature index wins ties.
        let mut chosen: Vec<Option<Candidate>> = vec![None; open.len()];
        for cands in &per_feature {
            for (s, c) in cands.iter().enumerate() {
                if let Some(c) = c {
                    if chosen[s].is_none_or(|b| c.gain > b.gain) {
                        chosen[s] = Some(*c);
                    }
                }
            }
        }

        let mut next_open = Vec::new();
        // Old slot -> (left slot, right slot) in the next level.
        let mut remap: Vec<Option<(i32, i32)>> = vec![None; open.len()];
        for (s, c) in chosen.iter().enumerate() {
            let Some(c) = c else { continue };
            let node = open[s].0;
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[node] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: l,
                right: r,
            };
            let ls = next_open.len() as i32;
            next_open.push((l, Sums::default()));
            next_open.push((r, Sums::default()));
            remap[s] = Some((ls, ls + 1));
        }
        for i in 0..n {
            let s = slot_of[i];
            if s < 0 {
                continue;
            }
            match (remap[s as usize], chosen[s as usize]) {
                (Some((l, r)), Some(c)) => {
                    let dest = if x.get(i, c.feature) <= c.threshold { l } else { r };
                    slot_of[i] = dest;
                    next_open[dest as usize].1.add(grad[i], hess[i]);
                }
                _ => slot_of[i] = -1,
            }
        }
        for &(node, sums) in &next_open {
            nodes[node] = Node::Leaf {
                value: sums.leaf_value(p.l2),
            };
        }
        open = next_open;
    }
    RegressionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_split_on_clean_feature() {
        // feature 0 is noise, feature 1 separates
        let values = vec![5.0, 0.0, 1.0, 0.0, 5.0, 1.0, 1.0, 1.0];
        let x = Matrix {
            values: &values,
            n_features: 2,
        };
        let grad = [1.0, 1.0, -1.0, -1.0];
        let hess = [1.0; 4];
        let rows = [0, 1, 2, 3];
        let sorted = SortedColumns::new(x, &rows);
        let t = fit_tree(
            x,
            &sorted,
            &grad,
            &hess,
            &TreeParams {
                max_depth: 3,
                min_leaf: 1,
                l2: 0.0,
            },
        );
        assert_eq!(t.depth(), 1);
        match &t.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => assert_eq!((*feature, *threshold), (1, 0.5)),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.predict(&[0.0, 0.0]), -1.0);
        assert_eq!(t.predict(&[0.0, 1.0]), 1.0);
    }

    #[test]
    fn constant_features_give_root_leaf() {
        let values = vec![3.0; 10];
        let x = Matrix {
            values: &values,
            n_features: 1,
        };
        let rows: Vec<usize> = (0..10).collect();
        let sorted = SortedColumns::new(x, &rows);
        let grad: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let t = fit_tree(
            x,
            &sorted,
            &grad,
            &[0.25; 10],
            &TreeParams {
                max_depth: 4,
                min_leaf: 1,
                l2: 1.0,
            },
        );
        assert!(t.is_stump_leaf());
    }

    #[test]
    fn min_leaf_respected() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        let x = Matrix {
            values: &values,
            n_features: 1,
        };
        let rows: Vec<usize> = (0..10).collect();
        let sorted = SortedColumns::new(x, &rows);
        let grad: Vec<f64> = (0..10).map(|i| if i == 0 { -5.0 } else { 0.5 }).collect();
        let t = fit_tree(
            x,
            &sorted,
            &grad,
            &[1.0; 10],
            &TreeParams {
                max_depth: 1,
                min_leaf: 3,
                l2: 0.0,
            },
        );
        if let Node::Split { threshold, .. } = t.nodes[0] {
            assert!(threshold >= 2.0 && threshold <= 6.5, "{threshold}");
        }
    }
}
