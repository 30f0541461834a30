//! ROC AUC, balancing and stratified cross-validation.

use std::io::Write;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dataset::Dataset;
use super::gbdt::{train_gbdt, GbdtConfig};
use crate::error::{Error, Result};

/// Mann-Whitney AUC with ties counted half. The statistic is accumulated
/// as an integer (twice U) so the result equals pair counting exactly.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::usage("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::domain("AUC needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        twice_u += 2 * p * neg_below + p * q;
        neg_below += q;
        i = j;
    }
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// Downsamples the majority class of `instances` to the minority size.
/// Returns indices in ascending order.
pub fn balance(instances: &[usize], labels: &[u8], seed: u64) -> Result<Vec<usize>> {
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        instances.iter().partition(|&&i| labels[i] == 1);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::domain("balancing needs both classes present"));
    }
    pos.sort_unstable();
    neg.sort_unstable();
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = minority.clone();
    out.extend(
        sample(&mut rng, majority.len(), minority.len())
            .into_iter()
            .map(|i| majority[i]),
    );
    out.sort_unstable();
    Ok(out)
}

/// Fold number of every instance. Each class is shuffled separately and
/// dealt round-robin, with the dealing position carried from the negative
/// class into the positive class.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::usage("need at least 2 folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::domain(format!(
                "class {class} has {} instances, need at least {folds}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    Ok(fold_of)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub balance: bool,
    pub gbdt: GbdtConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            seed: 0,
            balance: true,
            gbdt: GbdtConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: String,
    pub feature_group: String,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
    pub seed: u64,
}

/// Seed for fold-local randomness, decorrelated from the fold assignment.
fn fold_seed(seed: u64, fold: usize, stream: u64) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.rotate_left(32)
}

/// Stratified k-fold evaluation. Training folds are balanced before
/// fitting; test folds are scored as they are.
pub fn cross_validate(data: &Dataset, cfg: &CvConfig) -> Result<EvalReport> {
    let fold_of = stratified_folds(&data.labels, cfg.folds, cfg.seed)?;
    let aucs: Vec<Result<f64>> = (0..cfg.folds)
        .into_par_iter()
        .map(|k| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| fold_of[i] == k);
            let train = if cfg.balance {
                balance(&train, &data.labels, fold_seed(cfg.seed, k, 1))?
            } else {
                train
            };
            let gbdt = GbdtConfig {
                seed: fold_seed(cfg.gbdt.seed, k, 2),
                ..cfg.gbdt
            };
            let model = train_gbdt(
                &data.x,
                data.n_features(),
                &data.labels,
                &train,
                &data.feature_names,
                &gbdt,
            )?;
            let scores = model.decisions(&data.x, &test);
            let labels: Vec<u8> = test.iter().map(|&i| data.labels[i]).collect();
            roc_auc(&scores, &labels)
        })
        .collect();
    let fold_aucs = aucs.into_iter().collect::<Result<Vec<f64>>>()?;
    let mean_auc = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
    Ok(EvalReport {
        task: data.task.clone(),
        feature_group: data.group.clone(),
        fold_aucs,
        mean_auc,
        seed: cfg.seed,
    })
}

/// CSV with one row per fold and a trailing `mean` row per report.
pub fn write_reports_csv(out: &mut dyn Write, reports: &[EvalReport]) -> std::io::Result<()> {
    writeln!(out, "task,feature_group,fold,auc")?;
    for r in reports {
        for (k, auc) in r.fold_aucs.iter().enumerate() {
            writeln!(out, "{},{},{k},{auc}", r.task, r.feature_group)?;
        }
        writeln!(out, "{},{},mean,{}", r.task, r.feature_group, r.mean_auc)?;
    }
    Ok(())
}
