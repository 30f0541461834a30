//! Searchshare, resistance and the four traffic-role groups.
//!
//! For an article receiving `in_se` search views and `in_nav` navigation
//! views while referring `out_nav` views onward:
//!
//! ```text
//! searchshare = in_se / (in_se + in_nav)
//! resistance  = clamp(1 - out_nav / (in_se + in_nav), 0, 1)
//! ```
//!
//! Articles are split into groups by comparing both values against their
//! unweighted corpus means.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::{ArticleTraffic, TrafficTable};
use crate::io;
use crate::stats;

/// Share of received views that came from search engines.
pub fn searchshare(t: &ArticleTraffic) -> Result<f64> {
    let denom = t.total_views();
    if denom == 0 {
        return Err(Error::domain(format!(
            "searchshare undefined for {:?}: no inbound views",
            t.article
        )));
    }
    Ok(t.in_se as f64 / denom as f64)
}

/// Unclamped `1 - out_nav / (in_se + in_nav)`.
pub fn raw_resistance(t: &ArticleTraffic) -> Result<f64> {
    let denom = t.total_views();
    if denom == 0 {
        return Err(Error::domain(format!(
            "resistance undefined for {:?}: no inbound views",
            t.article
        )));
    }
    Ok(1.0 - t.out_nav as f64 / denom as f64)
}

/// Resistance clamped to `[0, 1]`. Articles forwarding at least as many
/// views as they receive get exactly 0.
pub fn resistance(t: &ArticleTraffic) -> Result<f64> {
    let denom = t.total_views();
    if denom == 0 {
        return Err(Error::domain(format!(
            "resistance undefined for {:?}: no inbound views",
            t.article
        )));
    }
    if t.out_nav >= denom {
        return Ok(0.0);
    }
    Ok((1.0 - t.out_nav as f64 / denom as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMetrics {
    pub article: String,
    pub searchshare: f64,
    pub resistance: f64,
    pub total_views: u64,
}

impl TrafficMetrics {
    pub fn from_traffic(t: &ArticleTraffic) -> Result<Self> {
        Ok(TrafficMetrics {
            article: t.article.clone(),
            searchshare: searchshare(t)?,
            resistance: resistance(t)?,
            total_views: t.total_views(),
        })
    }
}

/// Metrics for every article with inbound views; articles without any are
/// counted in `skipped`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<TrafficMetrics>,
    pub skipped: usize,
}

pub fn compute_metrics(table: &TrafficTable) -> MetricsTable {
    let mut out = MetricsTable::default();
    for t in &table.rows {
        match TrafficMetrics::from_traffic(t) {
            Ok(m) => out.rows.push(m),
            Err(_) => out.skipped += 1,
        }
    }
    out
}

/// Mean searchshare and resistance used as group thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusThresholds {
    pub mean_searchshare: f64,
    pub mean_resistance: f64,
}

impl CorpusThresholds {
    /// Thresholds used when classifying the 2016-08 English corpus.
    pub const REFERENCE: CorpusThresholds = CorpusThresholds {
        mean_searchshare: 0.66,
        mean_resistance: 0.88,
    };

    pub fn to_kv(&self) -> String {
        format!(
            "mean_searchshare={}\nmean_resistance={}\n",
            self.mean_searchshare, self.mean_resistance
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut ss = None;
        let mut res = None;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::data(format!("thresholds: expected key=value, got {line:?}")));
            };
            let v: f64 = io::parse_field(v, k, "thresholds")?;
            match k.trim() {
                "mean_searchshare" => ss = Some(v),
                "mean_resistance" => res = Some(v),
                _ => {}
            }
        }
        match (ss, res) {
            (Some(a), Some(b)) if (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) => {
                Ok(CorpusThresholds {
                    mean_searchshare: a,
                    mean_resistance: b,
                })
            }
            _ => Err(Error::data(
                "thresholds: need mean_searchshare and mean_resistance in [0,1]",
            )),
        }
    }
}

pub fn corpus_thresholds(rows: &[TrafficMetrics]) -> Result<CorpusThresholds> {
    if rows.is_empty() {
        return Err(Error::domain("thresholds of an empty metrics table"));
    }
    let n = rows.len() as f64;
    let ss: f64 = rows.iter().map(|r| r.searchshare).sum();
    let res: f64 = rows.iter().map(|r| r.resistance).sum();
    Ok(CorpusThresholds {
        mean_searchshare: ss / n,
        mean_resistance: res / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrant {
    SearchExit,
    SearchRelay,
    NavRelay,
    NavExit,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::SearchExit,
        Quadrant::SearchRelay,
        Quadrant::NavRelay,
        Quadrant::NavExit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::SearchExit => "search-exit",
            Quadrant::SearchRelay => "search-relay",
            Quadrant::NavRelay => "nav-relay",
            Quadrant::NavExit => "nav-exit",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quadrant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quadrant::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| Error::data(format!("unknown group {s:?}")))
    }
}

/// "Above mean" is strict; a value equal to the mean counts as below.
pub fn assign_quadrant(m: &TrafficMetrics, t: &CorpusThresholds) -> Quadrant {
    let search = m.searchshare > t.mean_searchshare;
    let exit = m.resistance > t.mean_resistance;
    match (search, exit) {
        (true, true) => Quadrant::SearchExit,
        (true, false) => Quadrant::SearchRelay,
        (false, true) => Quadrant::NavExit,
        (false, false) => Quadrant::NavRelay,
    }
}

/// Article and view totals per group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupShares {
    pub articles: [u64; 4],
    pub views: [u64; 4],
}

impl GroupShares {
    pub fn compute(rows: &[TrafficMetrics], t: &CorpusThresholds) -> Self {
        let mut s = GroupShares::default();
        for r in rows {
            let q = assign_quadrant(r, t).index();
            s.articles[q] += 1;
            s.views[q] += r.total_views;
        }
        s
    }

    fn pct(part: u64, whole: u64) -> f64 {
        if whole == 0 {
            0.0
        } else {
            100.0 * part as f64 / whole as f64
        }
    }

    pub fn article_pct(&self, q: Quadrant) -> f64 {
        Self::pct(self.articles[q.index()], self.articles.iter().sum())
    }

    pub fn view_pct(&self, q: Quadrant) -> f64 {
        Self::pct(self.views[q.index()], self.views.iter().sum())
    }

    /// Percentages at 0.1 resolution that sum to exactly 100, by largest
    /// remainder (ties to the earlier group). All zeros for an empty table.
    pub fn rounded_pcts(counts: &[u64; 4]) -> [f64; 4] {
        let total: u128 = counts.iter().map(|&c| c as u128).sum();
        if total == 0 {
            return [0.0; 4];
        }
        let mut tenths = [0u128; 4];
        let mut rem = [0u128; 4];
        for (i, &c) in counts.iter().enumerate() {
            tenths[i] = 1000 * c as u128 / total;
            rem[i] = 1000 * c as u128 % total;
        }
        let short = 1000 - tenths.iter().sum::<u128>();
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
        for &i in order.iter().take(short as usize) {
            tenths[i] += 1;
        }
        tenths.map(|t| t as f64 / 10.0)
    }

    pub fn article_pcts_rounded(&self) -> [f64; 4] {
        Self::rounded_pcts(&self.articles)
    }

    pub fn view_pcts_rounded(&self) -> [f64; 4] {
        Self::rounded_pcts(&self.views)
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "group,articles,articles_pct,views,views_pct")?;
        let (ap, vp) = (self.article_pcts_rounded(), self.view_pcts_rounded());
        for q in Quadrant::ALL {
            let i = q.index();
            writeln!(
                out,
                "{},{},{:.1},{},{:.1}",
                q, self.articles[i], ap[i], self.views[i], vp[i]
            )?;
        }
        writeln!(
            out,
            "total,{},100.0,{},100.0",
            self.articles.iter().sum::<u64>(),
            self.views.iter().sum::<u64>()
        )
    }
}

/// Equal-width bin of `v` in `[0, 1]`; the last bin is closed on the right.
pub(crate) fn unit_bin(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Equal-width histogram over `[0, 1]`. With weights, each value adds its
/// weight instead of one.
pub fn histogram(values: &[f64], weights: Option<&[u64]>, bins: usize) -> Result<Vec<u64>> {
    if bins == 0 {
        return Err(Error::domain("histogram needs at least one bin"));
    }
    if let Some(w) = weights {
        if w.len() != values.len() {
            return Err(Error::usage(format!(
                "{} values but {} weights",
                values.len(),
                w.len()
            )));
        }
    }
    let mut out = vec![0u64; bins];
    for (i, &v) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("histogram value {v} outside [0,1]")));
        }
        out[unit_bin(v, bins)] += weights.map_or(1, |w| w[i]);
    }
    Ok(out)
}

pub fn write_histogram_csv(
    out: &mut dyn Write,
    metric: &str,
    weighted: bool,
    counts: &[u64],
) -> std::io::Result<()> {
    let n = counts.len();
    writeln!(out, "# metric={metric}")?;
    writeln!(out, "# weighted={weighted}")?;
    writeln!(out, "# bins={n}")?;
    writeln!(out, "bin_lo,bin_hi,value")?;
    for (i, c) in counts.iter().enumerate() {
        writeln!(out, "{},{},{}", i as f64 / n as f64, (i + 1) as f64 / n as f64, c)?;
    }
    Ok(())
}

/// Dense row-major grid. Rows index searchshare bins, columns resistance
/// bins, both ascending from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            cells: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.cols + c]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn write_csv(&self, out: &mut dyn Write, meta: &[(&str, String)]) -> std::io::Result<()> {
        write_matrix_csv(out, meta, self.rows, self.cols, |r, c| format!("{}", self.get(r, c)))
    }
}

pub(crate) fn write_matrix_csv(
    out: &mut dyn Write,
    meta: &[(&str, String)],
    rows: usize,
    cols: usize,
    cell: impl Fn(usize, usize) -> String,
) -> std::io::Result<()> {
    writeln!(out, "# rows=searchshare bins ascending, {rows} over [0,1]")?;
    writeln!(out, "# cols=resistance bins ascending, {cols} over [0,1]")?;
    for (k, v) in meta {
        writeln!(out, "# {k}={v}")?;
    }
    for r in 0..rows {
        let line: Vec<String> = (0..cols).map(|c| cell(r, c)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Bins articles by (searchshare, resistance). Cells hold article counts,
/// or view sums when `weighted`.
pub fn heatmap_grid<'a>(
    rows: impl IntoIterator<Item = &'a TrafficMetrics>,
    size: usize,
    weighted: bool,
) -> Result<Grid> {
    if size == 0 {
        return Err(Error::domain("grid size must be at least 1"));
    }
    let mut acc = vec![0u64; size * size];
    for m in rows {
        let r = unit_bin(m.searchshare, size);
        let c = unit_bin(m.resistance, size);
        acc[r * size + c] += if weighted { m.total_views } else { 1 };
    }
    Ok(Grid {
        rows: size,
        cols: size,
        cells: acc.into_iter().map(|v| v as f64).collect(),
    })
}

/// Corpus-level distribution summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub articles: usize,
    pub total_views: u64,
    pub search_views: u64,
    pub navigation_views: u64,
    pub thresholds: CorpusThresholds,
    pub median_searchshare: f64,
    pub median_resistance: f64,
    /// Unweighted correlations between searchshare and resistance.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

impl CorpusSummary {
    pub fn compute(traffic: &TrafficTable, metrics: &MetricsTable) -> Result<Self> {
        let thresholds = corpus_thresholds(&metrics.rows)?;
        let ss: Vec<f64> = metrics.rows.iter().map(|r| r.searchshare).collect();
        let res: Vec<f64> = metrics.rows.iter().map(|r| r.resistance).collect();
        Ok(CorpusSummary {
            articles: metrics.rows.len(),
            total_views: traffic.total_views(),
            search_views: traffic.search_views(),
            navigation_views: traffic.navigation_views(),
            thresholds,
            median_searchshare: stats::median(&ss).unwrap_or(f64::NAN),
            median_resistance: stats::median(&res).unwrap_or(f64::NAN),
            pearson: stats::pearson(&ss, &res),
            spearman: stats::spearman(&ss, &res),
        })
    }

    pub fn search_view_pct(&self) -> f64 {
        GroupShares::pct(self.search_views, self.total_views)
    }

    pub fn to_kv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        format!(
            "articles={}\ntotal_views={}\nsearch_views={}\nnavigation_views={}\nsearch_view_pct={:.2}\n\
             mean_searchshare={}\nmean_resistance={}\nmedian_searchshare={}\nmedian_resistance={}\n\
             pearson={}\nspearman={}\n",
            self.articles,
            self.total_views,
            self.search_views,
            self.navigation_views,
            self.search_view_pct(),
            self.thresholds.mean_searchshare,
            self.thresholds.mean_resistance,
            self.median_searchshare,
            self.median_resistance,
            opt(self.pearson),
            opt(self.spearman),
        )
    }
}

/// Metrics row with its group label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMetrics {
    pub metrics: TrafficMetrics,
    pub quadrant: Quadrant,
}

pub fn label_all(rows: &[TrafficMetrics], t: &CorpusThresholds) -> Vec<LabeledMetrics> {
    rows.iter()
        .map(|m| LabeledMetrics {
            metrics: m.clone(),
            quadrant: assign_quadrant(m, t),
        })
        .collect()
}

pub fn write_metrics_tsv(out: &mut dyn Write, rows: &[LabeledMetrics]) -> std::io::Result<()> {
    writeln!(out, "article\tsearchshare\tresistance\ttotal_views\tquadrant")?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            m.article, m.searchshare, m.resistance, m.total_views, r.quadrant
        )?;
    }
    Ok(())
}

pub fn read_metrics_tsv(path: &Path) -> Result<Vec<LabeledMetrics>> {
    let (header, records) = io::read_named_tsv(path)?;
    let idx = |name| io::column(&header, name, path);
    let (a, ss, res, tv, q) = (
        idx("article")?,
        idx("searchshare")?,
        idx("resistance")?,
        idx("total_views")?,
        idx("quadrant")?,
    );
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let ctx = format!("{} row {}", path.display(), i + 1);
        out.push(LabeledMetrics {
            metrics: TrafficMetrics {
                article: rec[a].to_owned(),
                searchshare: io::parse_field(&rec[ss], "searchshare", &ctx)?,
                resistance: io::parse_field(&rec[res], "resistance", &ctx)?,
                total_views: io::parse_field(&rec[tv], "total_views", &ctx)?,
            },
            quadrant: rec[q].parse()?,
        });
    }
    Ok(out)
}
