//! Joins traffic metrics with network, content/edit and topic features and
//! summarises the traffic roles against them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io;
use crate::linkgraph::NetworkFeatures;
use crate::metrics::{self, Grid, LabeledMetrics, Quadrant, TrafficMetrics};
use crate::stats;

/// Content and edit-history attributes of an article.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentFeatures {
    pub article: String,
    pub sections: u32,
    pub figures: u32,
    pub lists: u32,
    pub tables: u32,
    pub revisions: u32,
    pub editors: u32,
    /// Years since creation.
    pub age: f64,
    /// Kilobytes.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicAssignment {
    pub article: String,
    pub topic_id: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkCounts {
    pub in_degree: u32,
    pub out_degree: u32,
    pub degree: u32,
    pub kcore: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentCounts {
    pub sections: u32,
    pub figures: u32,
    pub lists: u32,
    pub tables: u32,
    pub revisions: u32,
    pub editors: u32,
    pub age: f64,
    pub size: f64,
}

/// One joined row: traffic role plus whichever feature families matched.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleFeatures {
    pub article: String,
    pub searchshare: f64,
    pub resistance: f64,
    pub total_views: u64,
    pub quadrant: Quadrant,
    pub network: Option<NetworkCounts>,
    pub content: Option<ContentCounts>,
    pub topic: Option<(usize, f64)>,
}

impl ArticleFeatures {
    pub fn topic_id(&self) -> Option<usize> {
        self.topic.map(|(t, _)| t)
    }

    pub fn metrics(&self) -> TrafficMetrics {
        TrafficMetrics {
            article: self.article.clone(),
            searchshare: self.searchshare,
            resistance: self.resistance,
            total_views: self.total_views,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureFamily {
    Network,
    Content,
    Topic,
}

impl FromStr for FeatureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "network" => Ok(FeatureFamily::Network),
            "content" | "content-edit" => Ok(FeatureFamily::Content),
            "topic" => Ok(FeatureFamily::Topic),
            _ => Err(Error::usage(format!("unknown feature family {s:?}"))),
        }
    }
}

/// Rows of each input that did not make it into the join.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinStats {
    pub joined: usize,
    pub metrics_dropped: usize,
    pub network_dropped: usize,
    pub content_dropped: usize,
    pub topics_dropped: usize,
}

fn index_unique<'a, T>(
    rows: &'a [T],
    key: impl Fn(&T) -> &str,
    table: &str,
) -> Result<HashMap<&'a str, &'a T>> {
    let mut map = HashMap::with_capacity(rows.len());
    for r in rows {
        if map.insert(key(r), r).is_some() {
            return Err(Error::DuplicateKey {
                table: table.to_owned(),
                key: key(r).to_owned(),
            });
        }
    }
    // key() borrows from rows, so the map's lifetime follows them.
    Ok(map)
}

/// Inner join on article title. Metrics rows lacking any family listed in
/// `require` are dropped; families not required are attached when present.
/// The output is sorted by title.
pub fn join_features(
    metrics: &[LabeledMetrics],
    network: &[NetworkFeatures],
    content: &[ContentFeatures],
    topics: &[TopicAssignment],
    require: &[FeatureFamily],
) -> Result<(Vec<ArticleFeatures>, JoinStats)> {
    index_unique(metrics, |m| m.metrics.article.as_str(), "metrics")?;
    let net = index_unique(network, |n| n.article.as_str(), "network")?;
    let con = index_unique(content, |c| c.article.as_str(), "content")?;
    let top = index_unique(topics, |t| t.article.as_str(), "topics")?;

    let mut rows = Vec::new();
    let (mut n_used, mut c_used, mut t_used) = (0, 0, 0);
    for lm in metrics {
        let m = &lm.metrics;
        let key = m.article.as_str();
        let n = net.get(key).map(|n| NetworkCounts {
            in_degree: n.in_degree,
            out_degree: n.out_degree,
            degree: n.degree,
            kcore: n.kcore,
        });
        let c = con.get(key).map(|c| ContentCounts {
            sections: c.sections,
            figures: c.figures,
            lists: c.lists,
            tables: c.tables,
            revisions: c.revisions,
            editors: c.editors,
            age: c.age,
            size: c.size,
        });
        let t = top.get(key).map(|t| (t.topic_id, t.weight));
        let complete = require.iter().all(|f| match f {
            FeatureFamily::Network => n.is_some(),
            FeatureFamily::Content => c.is_some(),
            FeatureFamily::Topic => t.is_some(),
        });
        if !complete {
            continue;
        }
        n_used += usize::from(n.is_some());
        c_used += usize::from(c.is_some());
        t_used += usize::from(t.is_some());
        rows.push(ArticleFeatures {
            article: m.article.clone(),
            searchshare: m.searchshare,
            resistance: m.resistance,
            total_views: m.total_views,
            quadrant: lm.quadrant,
            network: n,
            content: c,
            topic: t,
        });
    }
    rows.sort_by(|a, b| a.article.cmp(&b.article));
    let stats = JoinStats {
        joined: rows.len(),
        metrics_dropped: metrics.len() - rows.len(),
        network_dropped: network.len() - n_used,
        content_dropped: content.len() - c_used,
        topics_dropped: topics.len() - t_used,
    };
    Ok((rows, stats))
}

/// A numeric per-article feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    InDegree,
    OutDegree,
    Degree,
    Kcore,
    Sections,
    Figures,
    Lists,
    Tables,
    Revisions,
    Editors,
    Age,
    Size,
}

impl Feature {
    pub const NETWORK: [Feature; 4] = [
        Feature::InDegree,
        Feature::OutDegree,
        Feature::Degree,
        Feature::Kcore,
    ];
    pub const CONTENT: [Feature; 8] = [
        Feature::Sections,
        Feature::Figures,
        Feature::Lists,
        Feature::Tables,
        Feature::Revisions,
        Feature::Editors,
        Feature::Age,
        Feature::Size,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::InDegree => "in_degree",
            Feature::OutDegree => "out_degree",
            Feature::Degree => "degree",
            Feature::Kcore => "kcore",
            Feature::Sections => "sections",
            Feature::Figures => "figures",
            Feature::Lists => "lists",
            Feature::Tables => "tables",
            Feature::Revisions => "revisions",
            Feature::Editors => "editors",
            Feature::Age => "age",
            Feature::Size => "size",
        }
    }

    pub fn value(self, row: &ArticleFeatures) -> Option<f64> {
        let n = row.network.as_ref();
        let c = row.content.as_ref();
        match self {
            Feature::InDegree => n.map(|n| n.in_degree as f64),
            Feature::OutDegree => n.map(|n| n.out_degree as f64),
            Feature::Degree => n.map(|n| n.degree as f64),
            Feature::Kcore => n.map(|n| n.kcore as f64),
            Feature::Sections => c.map(|c| c.sections as f64),
            Feature::Figures => c.map(|c| c.figures as f64),
            Feature::Lists => c.map(|c| c.lists as f64),
            Feature::Tables => c.map(|c| c.tables as f64),
            Feature::Revisions => c.map(|c| c.revisions as f64),
            Feature::Editors => c.map(|c| c.editors as f64),
            Feature::Age => c.map(|c| c.age),
            Feature::Size => c.map(|c| c.size),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::NETWORK
            .into_iter()
            .chain(Feature::CONTENT)
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown feature {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetMetric {
    Searchshare,
    Resistance,
}

impl TargetMetric {
    pub fn name(self) -> &'static str {
        match self {
            TargetMetric::Searchshare => "searchshare",
            TargetMetric::Resistance => "resistance",
        }
    }

    pub fn value(self, row: &ArticleFeatures) -> f64 {
        match self {
            TargetMetric::Searchshare => row.searchshare,
            TargetMetric::Resistance => row.resistance,
        }
    }
}

impl fmt::Display for TargetMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "searchshare" => Ok(TargetMetric::Searchshare),
            "resistance" => Ok(TargetMetric::Resistance),
            _ => Err(Error::usage(format!("unknown target metric {s:?}"))),
        }
    }
}

/// Median of each feature per group, plus the overall median. Columns
/// follow [`Quadrant::ALL`] with the overall value last.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMedianTable {
    pub features: Vec<Feature>,
    pub values: Vec<[Option<f64>; 5]>,
}

pub fn group_medians(rows: &[ArticleFeatures], features: &[Feature]) -> GroupMedianTable {
    let values = features
        .iter()
        .map(|&f| {
            let mut groups: [Vec<f64>; 4] = Default::default();
            let mut all = Vec::new();
            for r in rows {
                if let Some(v) = f.value(r) {
                    groups[r.quadrant.index()].push(v);
                    all.push(v);
                }
            }
            let mut out = [None; 5];
            for (slot, g) in out.iter_mut().zip(&groups) {
                *slot = stats::median(g);
            }
            out[4] = stats::median(&all);
            out
        })
        .collect();
    GroupMedianTable {
        features: features.to_vec(),
        values,
    }
}

impl GroupMedianTable {
    pub fn get(&self, feature: Feature, group: Option<Quadrant>) -> Option<f64> {
        let row = self.features.iter().position(|&f| f == feature)?;
        self.values[row][group.map_or(4, Quadrant::index)]
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "# statistic=median")?;
        writeln!(out, "feature,search-exit,search-relay,nav-relay,nav-exit,overall")?;
        for (f, vals) in self.features.iter().zip(&self.values) {
            let cells: Vec<String> = vals
                .iter()
                .map(|v| v.map_or_else(String::new, |x| x.to_string()))
                .collect();
            writeln!(out, "{},{}", f, cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuartileBin {
    pub index: usize,
    pub count: usize,
    pub feature_min: f64,
    pub feature_max: f64,
    /// First, second and third quartile of the target metric.
    pub quartiles: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedQuartiles {
    pub feature: Feature,
    pub target: TargetMetric,
    pub bins: Vec<QuartileBin>,
}

/// Sizes of `n_bins` contiguous bins over `n` items; the first `n % n_bins`
/// bins take one extra item.
pub fn equal_count_bins(n: usize, n_bins: usize) -> Vec<usize> {
    let base = n / n_bins;
    let extra = n % n_bins;
    (0..n_bins).map(|i| base + usize::from(i < extra)).collect()
}

/// Sorts articles by a feature (ties by title), cuts them into `n_bins`
/// equal-count bins and reports target quartiles per bin. Articles without
/// the feature are ignored.
pub fn binned_quartiles(
    rows: &[ArticleFeatures],
    feature: Feature,
    target: TargetMetric,
    n_bins: usize,
) -> Result<BinnedQuartiles> {
    let mut items: Vec<(f64, &str, f64)> = rows
        .iter()
        .filter_map(|r| feature.value(r).map(|v| (v, r.article.as_str(), target.value(r))))
        .collect();
    if n_bins == 0 {
        return Err(Error::domain("need at least one bin"));
    }
    if items.len() < n_bins {
        return Err(Error::domain(format!(
            "{} articles with {feature} cannot fill {n_bins} bins",
            items.len()
        )));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for (index, size) in equal_count_bins(items.len(), n_bins).into_iter().enumerate() {
        let chunk = &items[start..start + size];
        start += size;
        let mut targets: Vec<f64> = chunk.iter().map(|c| c.2).collect();
        stats::sort_floats(&mut targets);
        let q = |p| stats::quantile_sorted(&targets, p).expect("bins are non-empty");
        bins.push(QuartileBin {
            index,
            count: size,
            feature_min: chunk[0].0,
            feature_max: chunk[size - 1].0,
            quartiles: [q(0.25), q(0.5), q(0.75)],
        });
    }
    Ok(BinnedQuartiles {
        feature,
        target,
        bins,
    })
}

impl BinnedQuartiles {
    pub fn write_csv(&self, out: &mut dyn Write, meta: &[(&str, String)]) -> std::io::Result<()> {
        writeln!(out, "# feature={}", self.feature)?;
        writeln!(out, "# target={}", self.target)?;
        writeln!(out, "# bins={}", self.bins.len())?;
        for (k, v) in meta {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "bin,count,feature_min,feature_max,q1,q2,q3")?;
        for b in &self.bins {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                b.index,
                b.count,
                b.feature_min,
                b.feature_max,
                b.quartiles[0],
                b.quartiles[1],
                b.quartiles[2]
            )?;
        }
        Ok(())
    }
}

/// Human-readable topic names keyed by topic id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicLabels(pub BTreeMap<usize, String>);

/// Labels assigned to the 20-topic fit of the 2016-08 English corpus.
/// Topic identity depends on the fit, so these only apply to a model whose
/// topics were matched to them by hand.
const REFERENCE_LABELS: [&str; 20] = [
    "Technology, Stubs",
    "Architecture",
    "Sports",
    "Politics",
    "TV&Movies",
    "Fine Arts&Culture",
    "Biology",
    "Music",
    "Research&Education",
    "Media/Economics",
    "Military",
    "Industry&Chemistry",
    "North America",
    "Space&Racing",
    "Europe",
    "Asia",
    "Latin America&Iberia",
    "UK&Commonwealth",
    "Eastern Europe&Russia",
    "Awards&Celebrities",
];

impl TopicLabels {
    pub fn reference() -> Self {
        TopicLabels(
            REFERENCE_LABELS
                .iter()
                .enumerate()
                .map(|(i, l)| (i, (*l).to_owned()))
                .collect(),
        )
    }

    /// Parses `topic_id<TAB>label` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, label) = line.split_once('\t').ok_or_else(|| Error::Malformed {
                line: i as u64 + 1,
                reason: "expected topic_id<TAB>label".into(),
            })?;
            let id: usize = io::parse_field(id, "topic_id", "topic labels")?;
            map.insert(id, label.trim().to_owned());
        }
        Ok(TopicLabels(map))
    }

    pub fn label(&self, id: usize) -> String {
        self.0.get(&id).cloned().unwrap_or_else(|| format!("topic{id}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicStats {
    pub topic_id: usize,
    pub label: String,
    pub article_pct: f64,
    pub view_pct: f64,
    pub median_age: Option<f64>,
    pub median_editors: Option<f64>,
    pub median_revisions: Option<f64>,
    pub median_size: Option<f64>,
}

/// Article/view shares and median content statistics per topic, over the
/// articles that have a topic. Sorted by topic id.
pub fn topic_statistics(rows: &[ArticleFeatures], labels: &TopicLabels) -> Vec<TopicStats> {
    let mut by_topic: BTreeMap<usize, Vec<&ArticleFeatures>> = BTreeMap::new();
    for r in rows {
        if let Some(t) = r.topic_id() {
            by_topic.entry(t).or_default().push(r);
        }
    }
    let n_articles: usize = by_topic.values().map(Vec::len).sum();
    let n_views: u64 = by_topic.values().flatten().map(|r| r.total_views).sum();
    by_topic
        .into_iter()
        .map(|(topic_id, members)| {
            let views: u64 = members.iter().map(|r| r.total_views).sum();
            let med = |f: Feature| {
                let v: Vec<f64> = members.iter().filter_map(|r| f.value(r)).collect();
                stats::median(&v)
            };
            TopicStats {
                topic_id,
                label: labels.label(topic_id),
                article_pct: 100.0 * members.len() as f64 / n_articles as f64,
                view_pct: if n_views == 0 {
                    0.0
                } else {
                    100.0 * views as f64 / n_views as f64
                },
                median_age: med(Feature::Age),
                median_editors: med(Feature::Editors),
                median_revisions: med(Feature::Revisions),
                median_size: med(Feature::Size),
            }
        })
        .collect()
}

pub fn write_topic_stats_csv(out: &mut dyn Write, stats: &[TopicStats]) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    writeln!(
        out,
        "topic_id,label,articles_pct,views_pct,median_age,median_editors,median_revisions,median_size"
    )?;
    for s in stats {
        writeln!(
            out,
            "{},\"{}\",{:.1},{:.1},{},{},{},{}",
            s.topic_id,
            s.label.replace('"', "\"\""),
            s.article_pct,
            s.view_pct,
            opt(s.median_age),
            opt(s.median_editors),
            opt(s.median_revisions),
            opt(s.median_size)
        )?;
    }
    Ok(())
}

/// Cell-wise ratio of two normalised grids; cells empty in the reference
/// grid are masked as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Option<f64>>,
}

impl RatioGrid {
    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.cells[r * self.cols + c]
    }

    pub fn write_csv(&self, out: &mut dyn Write, meta: &[(&str, String)]) -> std::io::Result<()> {
        metrics::write_matrix_csv(out, meta, self.rows, self.cols, |r, c| {
            self.get(r, c).map_or_else(String::new, |v| v.to_string())
        })
    }
}

/// Divides the topic grid by the overall grid after normalising each to
/// sum 1. A ratio of 1 means the topic matches the overall distribution.
pub fn relative_difference_heatmap(topic: &Grid, overall: &Grid) -> Result<RatioGrid> {
    if topic.rows != overall.rows || topic.cols != overall.cols {
        return Err(Error::usage(format!(
            "grid shapes differ: {}x{} vs {}x{}",
            topic.rows, topic.cols, overall.rows, overall.cols
        )));
    }
    let t_total = topic.total();
    let o_total = overall.total();
    let cells = topic
        .cells
        .iter()
        .zip(&overall.cells)
        .map(|(&t, &o)| {
            if o == 0.0 {
                None
            } else {
                let t_norm = if t_total == 0.0 { 0.0 } else { t / t_total };
                Some(t_norm / (o / o_total))
            }
        })
        .collect();
    Ok(RatioGrid {
        rows: topic.rows,
        cols: topic.cols,
        cells,
    })
}

/// View-weighted searchshare/resistance grid of one topic's articles.
pub fn topic_view_grid(rows: &[ArticleFeatures], topic_id: usize, size: usize) -> Result<Grid> {
    let members: Vec<TrafficMetrics> = rows
        .iter()
        .filter(|r| r.topic_id() == Some(topic_id))
        .map(ArticleFeatures::metrics)
        .collect();
    metrics::heatmap_grid(&members, size, true)
}

/// Uniform sample of `n` titles without replacement. The input order does
/// not matter; the sample is returned sorted.
pub fn sample_articles(titles: &[String], n: usize, seed: u64) -> Result<Vec<String>> {
    if n > titles.len() {
        return Err(Error::domain(format!(
            "cannot sample {n} articles from {}",
            titles.len()
        )));
    }
    let mut sorted: Vec<&String> = titles.iter().collect();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != titles.len() {
        return Err(Error::data("duplicate titles in sampling frame"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<String> = rand::seq::index::sample(&mut rng, sorted.len(), n)
        .into_iter()
        .map(|i| sorted[i].clone())
        .collect();
    picked.sort();
    Ok(picked)
}

const JOINED_HEADER: &str = "article\tsearchshare\tresistance\ttotal_views\tquadrant\t\
in_degree\tout_degree\tdegree\tkcore\t\
sections\tfigures\tlists\ttables\trevisions\teditors\tage\tsize\t\
topic_id\ttopic_weight";

pub fn write_joined_tsv(out: &mut dyn Write, rows: &[ArticleFeatures]) -> std::io::Result<()> {
    writeln!(out, "{JOINED_HEADER}")?;
    for r in rows {
        write!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.article, r.searchshare, r.resistance, r.total_views, r.quadrant
        )?;
        match &r.network {
            Some(n) => write!(out, "\t{}\t{}\t{}\t{}", n.in_degree, n.out_degree, n.degree, n.kcore)?,
            None => write!(out, "\t\t\t\t")?,
        }
        match &r.content {
            Some(c) => write!(
                out,
                "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                c.sections, c.figures, c.lists, c.tables, c.revisions, c.editors, c.age, c.size
            )?,
            None => write!(out, "\t\t\t\t\t\t\t\t")?,
        }
        match r.topic {
            Some((t, w)) => writeln!(out, "\t{t}\t{w}")?,
            None => writeln!(out, "\t\t")?,
        }
    }
    Ok(())
}

pub fn read_joined_tsv(path: &Path) -> Result<Vec<ArticleFeatures>> {
    let (header, records) = io::read_named_tsv(path)?;
    if header.join("\t") != JOINED_HEADER {
        return Err(Error::data(format!(
            "{}: not a joined feature table",
            path.display()
        )));
    }
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let ctx = format!("{} row {}", path.display(), i + 1);
        let u = |j: usize, what: &str| io::parse_opt::<u32>(&rec[j], what, &ctx);
        let f = |j: usize, what: &str| io::parse_opt::<f64>(&rec[j], what, &ctx);
        let network = match (u(5, "in_degree")?, u(6, "out_degree")?, u(7, "degree")?, u(8, "kcore")?) {
            (Some(a), Some(b), Some(c), Some(d)) => Some(NetworkCounts {
                in_degree: a,
                out_degree: b,
                degree: c,
                kcore: d,
            }),
            (None, None, None, None) => None,
            _ => return Err(Error::data(format!("{ctx}: partial network features"))),
        };
        let content = match (
            u(9, "sections")?,
            u(10, "figures")?,
            u(11, "lists")?,
            u(12, "tables")?,
            u(13, "revisions")?,
            u(14, "editors")?,
            f(15, "age")?,
            f(16, "size")?,
        ) {
            (Some(s), Some(fi), Some(l), Some(t), Some(r), Some(e), Some(a), Some(z)) => {
                Some(ContentCounts {
                    sections: s,
                    figures: fi,
                    lists: l,
                    tables: t,
                    revisions: r,
                    editors: e,
                    age: a,
                    size: z,
                })
            }
            (None, None, None, None, None, None, None, None) => None,
            _ => return Err(Error::data(format!("{ctx}: partial content features"))),
        };
        let topic = match (
            io::parse_opt::<usize>(&rec[17], "topic_id", &ctx)?,
            f(18, "topic_weight")?,
        ) {
            (Some(t), Some(w)) => Some((t, w)),
            (None, None) => None,
            _ => return Err(Error::data(format!("{ctx}: partial topic assignment"))),
        };
        out.push(ArticleFeatures {
            article: rec[0].to_owned(),
            searchshare: io::parse_field(&rec[1], "searchshare", &ctx)?,
            resistance: io::parse_field(&rec[2], "resistance", &ctx)?,
            total_views: io::parse_field(&rec[3], "total_views", &ctx)?,
            quadrant: rec[4].parse()?,
            network,
            content,
            topic,
        });
    }
    Ok(out)
}

/// Reads the precomputed content/edit feature table. Required columns:
/// `article, sections, figures, lists, tables, revisions, editors, age, size`
/// (any order, extra columns ignored).
pub fn read_content_tsv(path: &Path) -> Result<Vec<ContentFeatures>> {
    let (header, records) = io::read_named_tsv(path)?;
    let col = |n| io::column(&header, n, path);
    let idx = [
        col("article")?,
        col("sections")?,
        col("figures")?,
        col("lists")?,
        col("tables")?,
        col("revisions")?,
        col("editors")?,
        col("age")?,
        col("size")?,
    ];
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let ctx = format!("{} row {}", path.display(), i + 1);
        let c = ContentFeatures {
            article: rec[idx[0]].to_owned(),
            sections: io::parse_field(&rec[idx[1]], "sections", &ctx)?,
            figures: io::parse_field(&rec[idx[2]], "figures", &ctx)?,
            lists: io::parse_field(&rec[idx[3]], "lists", &ctx)?,
            tables: io::parse_field(&rec[idx[4]], "tables", &ctx)?,
            revisions: io::parse_field(&rec[idx[5]], "revisions", &ctx)?,
            editors: io::parse_field(&rec[idx[6]], "editors", &ctx)?,
            age: io::parse_field(&rec[idx[7]], "age", &ctx)?,
            size: io::parse_field(&rec[idx[8]], "size", &ctx)?,
        };
        if !(c.age >= 0.0 && c.size >= 0.0) {
            return Err(Error::data(format!("{ctx}: age and size must be non-negative")));
        }
        out.push(c);
    }
    Ok(out)
}

/// Reads an `article, topic_id, weight` assignment table.
pub fn read_topics_tsv(path: &Path) -> Result<Vec<TopicAssignment>> {
    let (header, records) = io::read_named_tsv(path)?;
    let col = |n| io::column(&header, n, path);
    let (a, t, w) = (col("article")?, col("topic_id")?, col("weight")?);
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let ctx = format!("{} row {}", path.display(), i + 1);
            Ok(TopicAssignment {
                article: rec[a].to_owned(),
                topic_id: io::parse_field(&rec[t], "topic_id", &ctx)?,
                weight: io::parse_field(&rec[w], "weight", &ctx)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn lm(article: &str, ss: f64, res: f64, views: u64, q: Quadrant) -> LabeledMetrics {
        LabeledMetrics {
            metrics: TrafficMetrics {
                article: article.into(),
                searchshare: ss,
                resistance: res,
                total_views: views,
            },
            quadrant: q,
        }
    }

    fn net(article: &str, k: u32) -> NetworkFeatures {
        NetworkFeatures {
            article: article.into(),
            in_degree: k,
            out_degree: k + 1,
            degree: 2 * k + 1,
            kcore: k,
        }
    }

    fn content(article: &str, revisions: u32) -> ContentFeatures {
        ContentFeatures {
            article: article.into(),
            sections: 3,
            figures: 1,
            lists: 0,
            tables: 2,
            revisions,
            editors: revisions / 2,
            age: 5.5,
            size: 12.25,
        }
    }

    fn topic(article: &str, t: usize) -> TopicAssignment {
        TopicAssignment {
            article: article.into(),
            topic_id: t,
            weight: 0.5,
        }
    }

    fn row(article: &str, q: Quadrant, kcore: Option<u32>, target: f64) -> ArticleFeatures {
        ArticleFeatures {
            article: article.into(),
            searchshare: target,
            resistance: 1.0 - target,
            total_views: 10,
            quadrant: q,
            network: kcore.map(|k| NetworkCounts {
                in_degree: k,
                out_degree: k,
                degree: 2 * k,
                kcore: k,
            }),
            content: None,
            topic: None,
        }
    }

    const ALL: [FeatureFamily; 3] = [FeatureFamily::Network, FeatureFamily::Content, FeatureFamily::Topic];

    #[test]
    fn disjoint_join_is_empty() {
        let m = vec![lm("A", 0.5, 0.5, 1, Quadrant::NavRelay)];
        let (rows, s) = join_features(&m, &[net("B", 1)], &[content("C", 1)], &[topic("D", 0)], &ALL).unwrap();
        assert!(rows.is_empty());
        assert_eq!(
            s,
            JoinStats {
                joined: 0,
                metrics_dropped: 1,
                network_dropped: 1,
                content_dropped: 1,
                topics_dropped: 1
            }
        );
    }

    #[test]
    fn single_row_join() {
        let m = vec![lm("A", 0.5, 0.25, 7, Quadrant::NavRelay)];
        let (rows, s) = join_features(&m, &[net("A", 3)], &[content("A", 10)], &[topic("A", 2)], &ALL).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(s.joined, 1);
        assert_eq!(rows[0].network.unwrap().kcore, 3);
        assert_eq!(rows[0].content.as_ref().unwrap().revisions, 10);
        assert_eq!(rows[0].topic_id(), Some(2));
    }

    #[test]
    fn duplicate_key_names_it() {
        let m = vec![lm("A", 0.5, 0.25, 7, Quadrant::NavRelay)];
        let err = join_features(&m, &[net("A", 3), net("A", 4)], &[], &[], &[]).unwrap_err();
        match err {
            Error::DuplicateKey { table, key } => assert_eq!((table.as_str(), key.as_str()), ("network", "A")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn join_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
                let mut v: Vec<String> = (0..40).filter(|_| rng.gen_bool(0.5)).map(|i| format!("a{i}")).collect();
                v.truncate(n);
                v
            };
            let m: Vec<_> = pick(&mut rng, 40).iter().map(|a| lm(a, 0.1, 0.2, 1, Quadrant::NavExit)).collect();
            let n: Vec<_> = pick(&mut rng, 40).iter().map(|a| net(a, 1)).collect();
            let c: Vec<_> = pick(&mut rng, 40).iter().map(|a| content(a, 2)).collect();
            let t: Vec<_> = pick(&mut rng, 40).iter().map(|a| topic(a, 0)).collect();
            let (rows, _) = join_features(&m, &n, &c, &t, &ALL).unwrap();
            let mut expect = Vec::new();
            for a in &m {
                for b in &n {
                    for d in &c {
                        for e in &t {
                            let k = &a.metrics.article;
                            if *k == b.article && *k == d.article && *k == e.article {
                                expect.push(k.clone());
                            }
                        }
                    }
                }
            }
            expect.sort();
            let got: Vec<String> = rows.into_iter().map(|r| r.article).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn optional_families_attach_when_present() {
        let m = vec![
            lm("A", 0.5, 0.25, 7, Quadrant::NavRelay),
            lm("B", 0.5, 0.25, 7, Quadrant::NavRelay),
        ];
        let (rows, s) = join_features(&m, &[net("A", 3), net("B", 1)], &[], &[topic("A", 1)], &[FeatureFamily::Network])
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].topic_id(), Some(1));
        assert_eq!(rows[1].topic_id(), None);
        assert_eq!(s.topics_dropped, 0);
    }

    #[test]
    fn medians_per_group() {
        let rows = vec![
            row("a", Quadrant::SearchExit, Some(1), 0.1),
            row("b", Quadrant::SearchExit, Some(2), 0.1),
            row("c", Quadrant::SearchExit, Some(3), 0.1),
            row("d", Quadrant::NavRelay, Some(1), 0.1),
            row("e", Quadrant::NavRelay, Some(2), 0.1),
            row("f", Quadrant::NavRelay, Some(3), 0.1),
            row("g", Quadrant::NavRelay, Some(4), 0.1),
            row("h", Quadrant::NavExit, None, 0.1),
        ];
        let t = group_medians(&rows, &[Feature::Kcore]);
        assert_eq!(t.get(Feature::Kcore, Some(Quadrant::SearchExit)), Some(2.0));
        assert_eq!(t.get(Feature::Kcore, Some(Quadrant::NavRelay)), Some(2.5));
        assert_eq!(t.get(Feature::Kcore, Some(Quadrant::SearchRelay)), None);
        assert_eq!(t.get(Feature::Kcore, Some(Quadrant::NavExit)), None);
        assert_eq!(t.get(Feature::Kcore, None), Some(2.0));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("kcore,2,,2.5,,2"));
    }

    #[test]
    fn medians_survive_duplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<_> = (0..101)
            .map(|i| row(&format!("a{i}"), Quadrant::ALL[i % 4], Some(rng.gen_range(0..50)), 0.3))
            .collect();
        let doubled: Vec<_> = rows.iter().chain(rows.iter()).cloned().collect();
        assert_eq!(group_medians(&rows, &[Feature::Kcore]), group_medians(&doubled, &[Feature::Kcore]));
    }

    #[test]
    fn bins_of_four() {
        let rows: Vec<_> = (0..4).map(|i| row(&format!("a{i}"), Quadrant::NavExit, Some(i), 0.5)).collect();
        let b = binned_quartiles(&rows, Feature::Kcore, TargetMetric::Searchshare, 2).unwrap();
        assert_eq!(b.bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 2]);
        assert!(b.bins.iter().all(|b| b.quartiles == [0.5, 0.5, 0.5]));
        assert!(binned_quartiles(&rows, Feature::Kcore, TargetMetric::Searchshare, 5).is_err());
        assert!(binned_quartiles(&rows, Feature::Revisions, TargetMetric::Searchshare, 1).is_err());
    }

    #[test]
    fn bin_sizes_partition() {
        for n in 25..200 {
            let sizes = equal_count_bins(n, 25);
            assert_eq!(sizes.iter().sum::<usize>(), n);
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn topic_shares() {
        let mut a = row("a", Quadrant::NavExit, None, 0.5);
        a.topic = Some((0, 1.0));
        a.total_views = 30;
        let mut b = row("b", Quadrant::NavExit, None, 0.5);
        b.topic = Some((1, 1.0));
        b.total_views = 10;
        let labels = TopicLabels::parse("0\tArchitecture\n").unwrap();
        let s = topic_statistics(&[a.clone(), b], &labels);
        assert_eq!((s[0].view_pct, s[1].view_pct), (75.0, 25.0));
        assert_eq!(s[0].label, "Architecture");
        assert_eq!(s[1].label, "topic1");
        let only = topic_statistics(&[a], &labels);
        assert_eq!((only[0].article_pct, only[0].view_pct), (100.0, 100.0));
    }

    #[test]
    fn ratio_grid_examples() {
        let overall = Grid {
            rows: 2,
            cols: 2,
            cells: vec![1.0, 3.0, 0.0, 4.0],
        };
        let same = relative_difference_heatmap(&overall, &overall).unwrap();
        assert_eq!(same.cells, vec![Some(1.0), Some(1.0), None, Some(1.0)]);

        let topic = Grid {
            rows: 2,
            cols: 2,
            cells: vec![0.0, 5.0, 0.0, 5.0],
        };
        let r = relative_difference_heatmap(&topic, &overall).unwrap();
        assert_eq!(r.get(0, 0), Some(0.0));
        assert_eq!(r.get(1, 0), None);
        // (5/10) / (3/8)
        assert!((r.get(0, 1).unwrap() - 4.0 / 3.0).abs() < 1e-15);

        let small = Grid::zeros(1, 1);
        assert!(relative_difference_heatmap(&small, &overall).unwrap_err().is_usage());
    }

    #[test]
    fn ratio_grid_matches_direct_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let gen = |rng: &mut ChaCha8Rng| Grid {
                rows: 6,
                cols: 5,
                cells: (0..30).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(1..100) as f64 }).collect(),
            };
            let (t, o) = (gen(&mut rng), gen(&mut rng));
            let r = relative_difference_heatmap(&t, &o).unwrap();
            let (ts, os) = (t.cells.iter().sum::<f64>(), o.cells.iter().sum::<f64>());
            for i in 0..30 {
                let expect = (o.cells[i] != 0.0).then(|| (t.cells[i] / ts) / (o.cells[i] / os));
                match (r.cells[i], expect) {
                    (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0)),
                    (a, b) => assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let titles: Vec<String> = (0..1000).map(|i| format!("t{i}")).collect();
        let a = sample_articles(&titles, 50, 7).unwrap();
        let mut rev = titles.clone();
        rev.reverse();
        assert_eq!(a, sample_articles(&rev, 50, 7).unwrap());
        assert_ne!(a, sample_articles(&titles, 50, 8).unwrap());
        assert!(sample_articles(&titles, 1001, 7).is_err());
    }

    #[test]
    fn joined_round_trip() {
        let m = vec![
            lm("A", 0.5, 0.25, 7, Quadrant::NavRelay),
            lm("B", 0.125, 1.0, 9, Quadrant::NavExit),
        ];
        let (rows, _) = join_features(&m, &[net("A", 3)], &[content("B", 10)], &[topic("A", 1)], &[]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("joined.tsv");
        io::write_file(&p, |w| write_joined_tsv(w, &rows)).unwrap();
        assert_eq!(read_joined_tsv(&p).unwrap(), rows);
    }
}
