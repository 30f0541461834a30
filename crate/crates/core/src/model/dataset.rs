//! Labeled feature matrices for the classification tasks.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{ArticleFeatures, Feature, TargetMetric};
use crate::metrics::TrafficMetrics;

/// Default searchshare cut: label 1 above it.
pub const SEARCHSHARE_THRESHOLD: f64 = 0.66;
/// Default resistance cut: label 1 (relay) at or below it.
pub const RESISTANCE_THRESHOLD: f64 = 0.88;

pub fn default_threshold(task: TargetMetric) -> f64 {
    match task {
        TargetMetric::Searchshare => SEARCHSHARE_THRESHOLD,
        TargetMetric::Resistance => RESISTANCE_THRESHOLD,
    }
}

/// searchshare: 1 iff `value > threshold`. resistance: 1 (relay) iff
/// `value <= threshold`.
pub fn binarize(value: f64, task: TargetMetric, threshold: f64) -> u8 {
    match task {
        TargetMetric::Searchshare => u8::from(value > threshold),
        TargetMetric::Resistance => u8::from(value <= threshold),
    }
}

pub fn binarize_target(rows: &[TrafficMetrics], task: TargetMetric, threshold: f64) -> Vec<u8> {
    rows.iter()
        .map(|m| {
            let v = match task {
                TargetMetric::Searchshare => m.searchshare,
                TargetMetric::Resistance => m.resistance,
            };
            binarize(v, task, threshold)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureGroup {
    Network,
    ContentEdit,
    Topic,
    All,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Network,
        FeatureGroup::ContentEdit,
        FeatureGroup::Topic,
        FeatureGroup::All,
    ];

    pub const NETWORK: [Feature; 3] = [Feature::InDegree, Feature::OutDegree, Feature::Kcore];
    pub const CONTENT_EDIT: [Feature; 8] = [
        Feature::Revisions,
        Feature::Editors,
        Feature::Size,
        Feature::Tables,
        Feature::Figures,
        Feature::Lists,
        Feature::Sections,
        Feature::Age,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Network => "network",
            FeatureGroup::ContentEdit => "content-edit",
            FeatureGroup::Topic => "topic",
            FeatureGroup::All => "all",
        }
    }

    fn numeric(self) -> &'static [Feature] {
        match self {
            FeatureGroup::Network => &Self::NETWORK,
            FeatureGroup::ContentEdit => &Self::CONTENT_EDIT,
            FeatureGroup::Topic => &[],
            FeatureGroup::All => &[
                Feature::InDegree,
                Feature::OutDegree,
                Feature::Kcore,
                Feature::Revisions,
                Feature::Editors,
                Feature::Size,
                Feature::Tables,
                Feature::Figures,
                Feature::Lists,
                Feature::Sections,
                Feature::Age,
            ],
        }
    }

    fn uses_topic(self) -> bool {
        matches!(self, FeatureGroup::Topic | FeatureGroup::All)
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown feature group {s:?} (expected network, content-edit, topic or all)"
                ))
            })
    }
}

/// How the topic enters the feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum TopicEncoding {
    /// Indicator of the dominant topic.
    OneHot { topics: usize },
    /// Full per-article topic mixture, keyed by article.
    Theta {
        topics: usize,
        theta: HashMap<String, Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: String,
    pub group: String,
    pub feature_names: Vec<String>,
    /// Row-major, `len() * n_features()` values.
    pub x: Vec<f64>,
    pub labels: Vec<u8>,
    pub articles: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let nf = self.n_features();
        &self.x[i * nf..(i + 1) * nf]
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Builds the labeled matrix for one task and feature group. Rows missing
/// any required value are skipped; the skip count is returned alongside.
pub fn build_dataset(
    rows: &[ArticleFeatures],
    task: TargetMetric,
    threshold: f64,
    group: FeatureGroup,
    topics: &TopicEncoding,
) -> Result<(Dataset, usize)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::usage(format!("threshold {threshold} outside [0, 1]")));
    }
    let numeric = group.numeric();
    let mut names: Vec<String> = numeric.iter().map(|f| f.name().to_string()).collect();
    let k = match topics {
        TopicEncoding::OneHot { topics } | TopicEncoding::Theta { topics, .. } => *topics,
    };
    if group.uses_topic() {
        if k == 0 {
            return Err(Error::usage("topic features need at least one topic"));
        }
        let prefix = match topics {
            TopicEncoding::OneHot { .. } => "topic",
            TopicEncoding::Theta { .. } => "theta",
        };
        names.extend((0..k).map(|t| format!("{prefix}_{t}")));
    }

    let mut x = Vec::new();
    let mut labels = Vec::new();
    let mut articles = Vec::new();
    let mut skipped = 0;
    let mut buf = Vec::with_capacity(names.len());
    'rows: for r in rows {
        buf.clear();
        for f in numeric {
            match f.value(r) {
                Some(v) => buf.push(v),
                None => {
                    skipped += 1;
                    continue 'rows;
                }
            }
        }
        if group.uses_topic() {
            match topics {
                TopicEncoding::OneHot { .. } => {
                    let Some(t) = r.topic_id() else {
                        skipped += 1;
                        continue;
                    };
                    if t >= k {
                        return Err(Error::data(format!(
                            "article {:?} has topic {t} but only {k} topics are configured",
                            r.article
                        )));
                    }
                    buf.extend((0..k).map(|i| if i == t { 1.0 } else { 0.0 }));
                }
                TopicEncoding::Theta { theta, .. } => {
                    let Some(v) = theta.get(&r.article) else {
                        skipped += 1;
                        continue;
                    };
                    if v.len() != k {
                        return Err(Error::data(format!(
                            "article {:?} has {} topic weights, expected {k}",
                            r.article,
                            v.len()
                        )));
                    }
                    buf.extend_from_slice(v);
                }
            }
        }
        x.extend_from_slice(&buf);
        labels.push(binarize(task.value(r), task, threshold));
        articles.push(r.article.clone());
    }
    Ok((
        Dataset {
            task: task.name().to_string(),
            group: group.as_str().to_string(),
            feature_names: names,
            x,
            labels,
            articles,
        },
        skipped,
    ))
}
