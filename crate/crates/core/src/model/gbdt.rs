//! Gradient boosting with logistic loss.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::{fit_tree, Matrix, Node, RegressionTree, SortedColumns, TreeParams};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "clickroles-gbdt";
pub const MODEL_VERSION: u32 = 1;

/// Leaf values are halved this many times looking for a loss decrease
/// before a stage is dropped.
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// L2 penalty on leaf values.
    pub l2: f64,
    /// Fraction of training rows drawn (without replacement) per tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 20,
            l2: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::usage("max_depth must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::usage("min_leaf must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::usage("learning_rate must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::usage("l2 must be non-negative"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::usage("subsample must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub feature_names: Vec<String>,
    /// Prior log-odds of the positive class.
    pub initial: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Set when no split was possible at all; predictions are the prior.
    pub degenerate: bool,
    /// Mean training loss before the first stage and after each kept stage.
    pub train_loss: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z) - y z`
fn logistic_loss(z: f64, y: u8) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - if y == 1 { z } else { 0.0 }
}

fn mean_loss(scores: &[f64], labels: &[u8], rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&r| logistic_loss(scores[r], labels[r]))
        .sum::<f64>()
        / rows.len() as f64
}

/// Fits a boosted ensemble on `rows` of the row-major matrix `x`.
pub fn train_gbdt(
    x: &[f64],
    n_features: usize,
    labels: &[u8],
    rows: &[usize],
    feature_names: &[String],
    cfg: &GbdtConfig,
) -> Result<GbdtModel> {
    cfg.validate()?;
    if feature_names.len() != n_features {
        return Err(Error::usage("feature name count does not match matrix width"));
    }
    if x.len() != labels.len() * n_features {
        return Err(Error::usage("feature matrix and label lengths disagree"));
    }
    let pos = rows.iter().filter(|&&r| labels[r] == 1).count();
    let neg = rows.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(Error::domain(format!(
            "training needs at least 2 instances per class (got {pos} positive, {neg} negative)"
        )));
    }
    if rows.iter().any(|&r| x[r * n_features..(r + 1) * n_features].iter().any(|v| !v.is_finite())) {
        return Err(Error::domain("feature matrix contains non-finite values"));
    }

    let m = Matrix {
        values: x,
        n_features,
    };
    let prior = pos as f64 / rows.len() as f64;
    let initial = (prior / (1.0 - prior)).ln();
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        l2: cfg.l2,
    };

    let mut scores = vec![0.0; labels.len()];
    for &r in rows {
        scores[r] = initial;
    }
    let mut grad = vec![0.0; labels.len()];
    let mut hess = vec![0.0; labels.len()];
    let mut loss = mean_loss(&scores, labels, rows);
    let mut train_loss = vec![loss];
    let mut trees = Vec::new();
    let mut degenerate = false;

    let full_sorted = (cfg.subsample >= 1.0).then(|| SortedColumns::new(m, rows));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = ((rows.len() as f64 * cfg.subsample).round() as usize).max(1);

    for stage in 0..cfg.n_trees {
        for &r in rows {
            let p = sigmoid(scores[r]);
            grad[r] = p - labels[r] as f64;
            hess[r] = (p * (1.0 - p)).max(1e-16);
        }
        let sub_sorted;
        let sorted = match &full_sorted {
            Some(s) => s,
            None => {
                let mut pick: Vec<usize> = sample(&mut rng, rows.len(), draw)
                    .into_iter()
                    .map(|i| rows[i])
                    .collect();
                pick.sort_unstable();
                sub_sorted = SortedColumns::new(m, &pick);
                &sub_sorted
            }
        };
        let mut tree = fit_tree(m, sorted, &grad, &hess, &params);
        if tree.is_stump_leaf() {
            if stage == 0 && full_sorted.is_some() {
                degenerate = true;
            }
            break;
        }
        let step: Vec<f64> = rows.iter().map(|&r| tree.predict(m.row(r))).collect();
        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: f64 = rows
                .iter()
                .zip(&step)
                .map(|(&r, s)| logistic_loss(scores[r] + cfg.learning_rate * factor * s, labels[r]))
                .sum::<f64>()
                / rows.len() as f64;
            if trial <= loss {
                accepted = Some(trial);
                break;
            }
            factor *= 0.5;
        }
        let Some(new_loss) = accepted else { break };
        if factor != 1.0 {
            tree.scale_leaves(factor);
        }
        for (&r, s) in rows.iter().zip(&step) {
            scores[r] += cfg.learning_rate * factor * s;
        }
        loss = new_loss;
        train_loss.push(loss);
        trees.push(tree);
    }

    Ok(GbdtModel {
        feature_names: feature_names.to_vec(),
        initial,
        learning_rate: cfg.learning_rate,
        trees,
        degenerate,
        train_loss,
    })
}

impl GbdtModel {
    /// Raw log-odds score.
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.initial + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    pub fn decisions(&self, x: &[f64], rows: &[usize]) -> Vec<f64> {
        let nf = self.feature_names.len();
        rows.iter()
            .map(|&r| self.decision(&x[r * nf..(r + 1) * nf]))
            .collect()
    }

    /// Writes the model as a line-oriented text file:
    ///
    /// ```text
    /// clickroles-gbdt 1
    /// features <name>...
    /// initial <f64>
    /// learning_rate <f64>
    /// degenerate <0|1>
    /// trees <count>
    /// tree <index> <node count>
    /// S <feature id> <threshold> <left> <right>
    /// L <leaf value>
    /// ```
    ///
    /// Fields are tab-separated, node ids index the lines of their tree, and
    /// node 0 is the root. Floats are written in shortest round-trip form.
    pub fn write(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "{MODEL_MAGIC}\t{MODEL_VERSION}")?;
        write!(out, "features")?;
        for f in &self.feature_names {
            write!(out, "\t{f}")?;
        }
        writeln!(out)?;
        writeln!(out, "initial\t{}", self.initial)?;
        writeln!(out, "learning_rate\t{}", self.learning_rate)?;
        writeln!(out, "degenerate\t{}", u8::from(self.degenerate))?;
        writeln!(out, "trees\t{}", self.trees.len())?;
        for (i, t) in self.trees.iter().enumerate() {
            writeln!(out, "tree\t{i}\t{}", t.nodes.len())?;
            for n in &t.nodes {
                match n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "S\t{feature}\t{threshold}\t{left}\t{right}")?,
                    Node::Leaf { value } => writeln!(out, "L\t{value}")?,
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("model text is UTF-8")
    }

    pub fn read(reader: impl BufRead) -> Result<GbdtModel> {
        let mut lines = Vec::new();
        for (i, l) in reader.lines().enumerate() {
            let l = l.map_err(|e| Error::Malformed {
                line: i as u64 + 1,
                reason: e.to_string(),
            })?;
            lines.push((i as u64 + 1, l.split('\t').map(str::to_string).collect::<Vec<_>>()));
        }
        let mut cursor = lines.into_iter();
        let mut next = |what: &str| -> Result<(u64, Vec<String>)> {
            cursor.next().ok_or_else(|| Error::Malformed {
                line: 0,
                reason: format!("unexpected end of model file, expected {what}"),
            })
        };
        let bad = |line: u64, reason: String| Error::Malformed { line, reason };
        fn num<T: std::str::FromStr>(s: Option<&String>, line: u64, what: &str) -> Result<T> {
            s.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Malformed {
                line,
                reason: format!("invalid {what}"),
            })
        }
        fn expect(line: (u64, Vec<String>), key: &str) -> Result<(u64, Vec<String>)> {
            if line.1.first().map(String::as_str) != Some(key) {
                return Err(Error::Malformed {
                    line: line.0,
                    reason: format!("expected {key}"),
                });
            }
            Ok(line)
        }

        let (n, head) = next("header")?;
        if head.first().map(String::as_str) != Some(MODEL_MAGIC) {
            return Err(bad(n, "not a clickroles model file".into()));
        }
        let version: u32 = num(head.get(1), n, "version")?;
        if version != MODEL_VERSION {
            return Err(bad(n, format!("unsupported model version {version}")));
        }
        let (_, features) = expect(next("features")?, "features")?;
        let feature_names: Vec<String> = features[1..].to_vec();
        let (n, p) = expect(next("initial")?, "initial")?;
        let initial: f64 = num(p.get(1), n, "initial score")?;
        let (n, p) = expect(next("learning_rate")?, "learning_rate")?;
        let learning_rate: f64 = num(p.get(1), n, "learning rate")?;
        let (n, p) = expect(next("degenerate")?, "degenerate")?;
        let degenerate = num::<u8>(p.get(1), n, "degenerate flag")? == 1;
        let (n, p) = expect(next("trees")?, "trees")?;
        let n_trees: usize = num(p.get(1), n, "tree count")?;

        let mut trees = Vec::with_capacity(n_trees);
        for i in 0..n_trees {
            let (n, p) = expect(next("tree")?, "tree")?;
            let idx: usize = num(p.get(1), n, "tree index")?;
            if idx != i {
                return Err(bad(n, format!("expected tree {i}, found {idx}")));
            }
            let count: usize = num(p.get(2), n, "node count")?;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, p) = next("node")?;
                match p.first().map(String::as_str) {
                    Some("S") => {
                        let feature: usize = num(p.get(1), n, "feature id")?;
                        let left: usize = num(p.get(3), n, "left child")?;
                        let right: usize = num(p.get(4), n, "right child")?;
                        if feature >= feature_names.len() || left >= count || right >= count {
                            return Err(bad(n, "split refers outside the model".into()));
                        }
                        nodes.push(Node::Split {
                            feature,
                            threshold: num(p.get(2), n, "threshold")?,
                            left,
                            right,
                        });
                    }
                    Some("L") => nodes.push(Node::Leaf {
                        value: num(p.get(1), n, "leaf value")?,
                    }),
                    _ => return Err(bad(n, "expected S or L node".into())),
                }
            }
            trees.push(RegressionTree { nodes });
        }
        Ok(GbdtModel {
            feature_names,
            initial,
            learning_rate,
            trees,
            degenerate,
            train_loss: Vec::new(),
        })
    }
}
