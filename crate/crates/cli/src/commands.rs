//! Analysis subcommands.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::Args;

use clickroles_core::features::{
    binned_quartiles, group_medians, join_features, read_content_tsv, read_joined_tsv,
    read_topics_tsv, relative_difference_heatmap, sample_articles, topic_statistics,
    topic_view_grid, write_joined_tsv, write_topic_stats_csv, ArticleFeatures, Feature,
    FeatureFamily, TargetMetric, TopicLabels,
};
use clickroles_core::ingest::{self, ingest_file, AggregateConfig, ParserConfig, ReferrerMapping, TrafficTable};
use clickroles_core::io::{column, read_named_tsv};
use clickroles_core::linkgraph::{
    graph_from_clickstream, network_features, read_edge_file, read_network_tsv, write_network_tsv,
};
use clickroles_core::metrics::{
    compute_metrics, corpus_thresholds, heatmap_grid, histogram, label_all, read_metrics_tsv,
    write_histogram_csv, write_metrics_tsv, CorpusSummary, CorpusThresholds, GroupShares,
    TrafficMetrics,
};
use clickroles_core::model::{
    balance, build_dataset, cross_validate, default_threshold, train_gbdt, write_reports_csv,
    CvConfig, FeatureGroup, GbdtConfig, TopicEncoding,
};
use clickroles_core::overlap::{cumulative_overlap, default_pairs, log_k_schedule, rank_articles, TrafficKey};
use clickroles_core::topics::{build_corpus, document_files, fit_lda, read_documents, read_theta_csv, LdaConfig, StopWords};
use clickroles_core::{Error, Result};

use crate::run::Run;
use crate::settings::Settings;
use crate::Global;

/// Opens a run: loads the config file and resolves the global options.
/// Returns the run and the resolved `--strict` value.
pub fn begin(sub: &'static str, g: &Global) -> Result<(Run, bool)> {
    let mut s = Settings::load(g.config.as_deref())?;
    let seed = s.get("seed", g.seed, 0u64)?;
    let strict = s.flag("strict", g.strict)?;
    let out = s
        .path("out", g.out.as_deref())
        .ok_or_else(|| Error::Usage(format!("{sub}: --out <DIR> is required")))?;
    let mut run = Run::start(sub, &out, seed, s)?;
    if let Some(c) = &g.config {
        run.input(c)?;
    }
    Ok((run, strict))
}

fn read_text(run: &mut Run, path: &Path) -> Result<String> {
    run.input(path)?;
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn mapping(run: &mut Run, flag: Option<&Path>) -> Result<ReferrerMapping> {
    match run.settings.path("mapping", flag) {
        Some(p) => ReferrerMapping::from_kv(&read_text(run, &p)?),
        None => Ok(ReferrerMapping::default()),
    }
}

fn kv(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Clickstream dump: prev, curr, type, n (tab-separated, gzip allowed).
    #[arg(long)]
    pub input: PathBuf,
    /// Referrer mapping file (search=, missing=, external=, internal_type=).
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Rows with a smaller count are tallied as below the publication floor.
    #[arg(long)]
    pub min_count: Option<u64>,
    /// Regex for a header line to skip; empty disables.
    #[arg(long)]
    pub header_regex: Option<String>,
    /// Keep articles that only appear as referrers.
    #[arg(long)]
    pub keep_referrer_only: bool,
}

pub fn ingest(a: IngestArgs, g: &Global) -> Result<()> {
    let (mut run, strict) = begin("ingest", g)?;
    let s = &mut run.settings;
    let min_count = s.get("min-count", a.min_count, ingest::PUBLIC_MIN_COUNT)?;
    let header = s.get_opt("header-regex", a.header_regex)?;
    let keep = s.flag("keep-referrer-only", a.keep_referrer_only)?;
    let mut parser = ParserConfig {
        min_count,
        ..ParserConfig::default()
    }
    .strict(strict);
    if let Some(h) = header {
        parser = parser.header_pattern(&h)?;
    }
    let mapping = mapping(&mut run, a.mapping.as_deref())?;
    let input = run.input(&a.input)?;
    let outcome = ingest_file(
        &input,
        &parser,
        &mapping,
        AggregateConfig {
            keep_referrer_only: keep,
        },
        rayon::current_num_threads(),
    )?;
    let t = &outcome.table;
    let st = &outcome.stats;
    run.write("traffic.tsv", |w| t.write_tsv(w))?;
    run.write_text(
        "ingest_stats.txt",
        &kv(&[
            ("lines", st.lines.to_string()),
            ("records", st.records.to_string()),
            ("malformed", st.malformed.to_string()),
            ("unknown_type", st.unknown_type.to_string()),
            ("below_min_count", st.below_min_count.to_string()),
            ("header_skipped", st.header_skipped.to_string()),
            ("dropped_views", outcome.dropped_views.to_string()),
            ("articles", t.len().to_string()),
            ("total_views", t.total_views().to_string()),
            ("search_views", t.search_views().to_string()),
            ("navigation_views", t.navigation_views().to_string()),
        ]),
    )?;
    run.finish()?;
    Ok(())
}


#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Traffic table written by `ingest`.
    #[arg(long)]
    pub traffic: PathBuf,
    /// Group thresholds: `corpus` (means of this table), `reference`, or a
    /// thresholds file.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// Histogram bins over [0, 1].
    #[arg(long)]
    pub bins: Option<usize>,
    /// Heatmap cells per axis.
    #[arg(long)]
    pub grid: Option<usize>,
}

pub fn metrics(a: MetricsArgs, g: &Global) -> Result<()> {
    let (mut run, _) = begin("metrics", g)?;
    let s = &mut run.settings;
    let mode = s.get("thresholds", a.thresholds, "corpus".to_string())?;
    let bins = s.get("bins", a.bins, 20usize)?;
    let grid = s.get("grid", a.grid, 20usize)?;
    let path = run.input(&a.traffic)?;
    let traffic = TrafficTable::read_tsv(&path)?;
    let table = compute_metrics(&traffic);
    if table.rows.is_empty() {
        return Err(Error::Data(format!(
            "{}: no article has inbound traffic",
            path.display()
        )));
    }
    let thresholds = match mode.as_str() {
        "corpus" => corpus_thresholds(&table.rows)?,
        "reference" => CorpusThresholds::REFERENCE,
        file => CorpusThresholds::from_kv(&read_text(&mut run, Path::new(file))?)?,
    };
    let labeled = label_all(&table.rows, &thresholds);
    run.write("metrics.tsv", |w| write_metrics_tsv(w, &labeled))?;
    run.write_text("thresholds.txt", &thresholds.to_kv())?;
    let summary = CorpusSummary::compute(&traffic, &table)?;
    run.write_text(
        "summary.txt",
        &format!("{}skipped_no_inflow={}\n", summary.to_kv(), table.skipped),
    )?;
    let shares = GroupShares::compute(&table.rows, &thresholds);
    run.write("group_shares.csv", |w| shares.write_csv(w))?;

    let views: Vec<u64> = table.rows.iter().map(|r| r.total_views).collect();
    for (name, values) in [
        ("searchshare", table.rows.iter().map(|r| r.searchshare).collect::<Vec<_>>()),
        ("resistance", table.rows.iter().map(|r| r.resistance).collect()),
    ] {
        let plain = histogram(&values, None, bins)?;
        let weighted = histogram(&values, Some(&views), bins)?;
        run.write(&format!("hist_{name}.csv"), |w| write_histogram_csv(w, name, false, &plain))?;
        run.write(&format!("hist_{name}_weighted.csv"), |w| {
            write_histogram_csv(w, name, true, &weighted)
        })?;
    }
    for (name, weighted) in [("articles", false), ("views", true)] {
        let grid = heatmap_grid(&table.rows, grid, weighted)?;
        let meta = [
            ("rows", "searchshare".to_string()),
            ("cols", "resistance".to_string()),
            ("cells", name.to_string()),
        ];
        run.write(&format!("heatmap_{name}.csv"), |w| grid.write_csv(w, &meta))?;
    }
    run.finish()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// Traffic table written by `ingest`.
    #[arg(long)]
    pub traffic: PathBuf,
    /// Ranking pairs as a:b, comma-separated (keys: total, in_se, in_nav, out_nav).
    #[arg(long)]
    pub pairs: Option<String>,
    /// Comma-separated k values; default 1, 2, 5, 10, ... and the table size.
    #[arg(long)]
    pub ks: Option<String>,
}

fn parse_pair(s: &str) -> Result<(TrafficKey, TrafficKey)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("ranking pair {s:?} must look like in_se:total")))?;
    Ok((a.parse()?, b.parse()?))
}

pub fn overlap(a: OverlapArgs, g: &Global) -> Result<()> {
    let (mut run, _) = begin("overlap", g)?;
    let pairs = match run.settings.list("pairs", a.pairs.as_deref()) {
        Some(list) => list.iter().map(|p| parse_pair(p)).collect::<Result<Vec<_>>>()?,
        None => default_pairs(),
    };
    let ks = run
        .settings
        .list("ks", a.ks.as_deref())
        .map(|list| {
            list.iter()
                .map(|k| k.parse::<usize>().map_err(|_| Error::Usage(format!("invalid k {k:?}"))))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let path = run.input(&a.traffic)?;
    let traffic = TrafficTable::read_tsv(&path)?;
    if traffic.is_empty() {
        return Err(Error::Data(format!("{}: empty traffic table", path.display())));
    }
    let ks = ks.unwrap_or_else(|| log_k_schedule(traffic.len()));
    for (x, y) in pairs {
        let curve = cumulative_overlap(
            &rank_articles(&traffic.rows, x),
            &rank_articles(&traffic.rows, y),
            &ks,
        )?;
        run.write(&format!("overlap_{x}_{y}.csv"), |w| curve.write_csv(w, x, y))?;
    }
    run.finish()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Link graph as source<TAB>target lines.
    #[arg(long, conflicts_with = "clickstream")]
    pub edges: Option<PathBuf>,
    /// Approximate the link graph from a clickstream dump's internal links.
    #[arg(long)]
    pub clickstream: Option<PathBuf>,
    /// Referrer mapping file, for --clickstream.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

pub fn graph(a: GraphArgs, g: &Global) -> Result<()> {
    let (mut run, strict) = begin("graph", g)?;
    let (graph, stats) = match (&a.edges, &a.clickstream) {
        (Some(e), None) => {
            let p = run.input(e)?;
            read_edge_file(&p, strict)?
        }
        (None, Some(c)) => {
            let m = mapping(&mut run, a.mapping.as_deref())?;
            let p = run.input(c)?;
            graph_from_clickstream(&p, &ParserConfig::default().strict(strict), &m)?
        }
        _ => return Err(Error::Usage("graph: give exactly one of --edges or --clickstream".into())),
    };
    let rows = network_features(&graph);
    run.write("network.tsv", |w| write_network_tsv(w, &graph, &rows))?;
    run.write_text(
        "graph_stats.txt",
        &kv(&[
            ("edge_source", graph.source.to_string()),
            ("lines", stats.lines.to_string()),
            ("edges_read", stats.edges_read.to_string()),
            ("malformed", stats.malformed.to_string()),
            ("nodes", graph.node_count().to_string()),
            ("edges", graph.edge_count().to_string()),
            ("max_kcore", rows.iter().map(|r| r.kcore).max().unwrap_or(0).to_string()),
        ]),
    )?;
    run.finish()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Labeled metrics written by `metrics`.
    #[arg(long)]
    pub metrics: PathBuf,
    /// Network table written by `graph`.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Content/edit table: article, sections, figures, lists, tables,
    /// revisions, editors, age, size.
    #[arg(long)]
    pub content: Option<PathBuf>,
    /// Topic assignments written by `topics`.
    #[arg(long)]
    pub topics: Option<PathBuf>,
    /// Topic labels as id<TAB>label lines; default is the built-in table.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Restrict to the titles listed in this file (e.g. from `sample`).
    #[arg(long)]
    pub articles: Option<PathBuf>,
    /// Feature families an article must have: network, content, topic.
    #[arg(long)]
    pub require: Option<String>,
    /// Cells per axis of the per-topic heatmaps.
    #[arg(long)]
    pub grid: Option<usize>,
}

fn read_titles(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn features(a: FeaturesArgs, g: &Global) -> Result<()> {
    let (mut run, _) = begin("features", g)?;
    let require = run
        .settings
        .list("require", a.require.as_deref())
        .unwrap_or_default()
        .iter()
        .map(|f| f.parse::<FeatureFamily>())
        .collect::<Result<Vec<_>>>()?;
    let grid = run.settings.get("grid", a.grid, 20usize)?;

    let mut metrics = read_metrics_tsv(&run.input(&a.metrics)?)?;
    if let Some(p) = run.settings.path("articles", a.articles.as_deref()) {
        let keep = read_titles(&run.input(&p)?)?;
        metrics.retain(|m| keep.contains(&m.metrics.article));
    }
    let network = match run.settings.path("network", a.network.as_deref()) {
        Some(p) => read_network_tsv(&run.input(&p)?)?,
        None => Vec::new(),
    };
    let content = match run.settings.path("content", a.content.as_deref()) {
        Some(p) => read_content_tsv(&run.input(&p)?)?,
        None => Vec::new(),
    };
    let topics = match run.settings.path("topics", a.topics.as_deref()) {
        Some(p) => read_topics_tsv(&run.input(&p)?)?,
        None => Vec::new(),
    };
    let labels = match run.settings.path("labels", a.labels.as_deref()) {
        Some(p) => TopicLabels::parse(&read_text(&mut run, &p)?)?,
        None => TopicLabels::reference(),
    };

    let (rows, st) = join_features(&metrics, &network, &content, &topics, &require)?;
    if rows.is_empty() {
        return Err(Error::Data("no articles left after the join".into()));
    }
    run.write("features.tsv", |w| write_joined_tsv(w, &rows))?;
    run.write_text(
        "join_stats.txt",
        &kv(&[
            ("joined", st.joined.to_string()),
            ("metrics_dropped", st.metrics_dropped.to_string()),
            ("network_dropped", st.network_dropped.to_string()),
            ("content_dropped", st.content_dropped.to_string()),
            ("topics_dropped", st.topics_dropped.to_string()),
        ]),
    )?;
    if !network.is_empty() {
        let t = group_medians(&rows, &Feature::NETWORK);
        run.write("medians_network.csv", |w| t.write_csv(w))?;
    }
    if !content.is_empty() {
        let t = group_medians(&rows, &Feature::CONTENT);
        run.write("medians_content.csv", |w| t.write_csv(w))?;
    }
    if !topics.is_empty() {
        let stats = topic_statistics(&rows, &labels);
        run.write("topic_stats.csv", |w| write_topic_stats_csv(w, &stats))?;
        let with_topic: Vec<TrafficMetrics> = rows
            .iter()
            .filter(|r| r.topic_id().is_some())
            .map(ArticleFeatures::metrics)
            .collect();
        let overall = heatmap_grid(&with_topic, grid, true)?;
        for s in &stats {
            let ratio = relative_difference_heatmap(&topic_view_grid(&rows, s.topic_id, grid)?, &overall)?;
            let meta = [
                ("topic_id", s.topic_id.to_string()),
                ("label", s.label.clone()),
                ("rows", "searchshare".to_string()),
                ("cols", "resistance".to_string()),
                ("cells", "view share relative to all topics".to_string()),
            ];
            run.write(&format!("topic_ratio_{:02}.csv", s.topic_id), |w| ratio.write_csv(w, &meta))?;
        }
    }
    run.finish()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct BinsArgs {
    /// Joined table written by `features`.
    #[arg(long)]
    pub features: PathBuf,
    /// Number of equal-count bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Comma-separated features; default every feature present.
    #[arg(long)]
    pub feature: Option<String>,
    /// Comma-separated targets: searchshare, resistance.
    #[arg(long)]
    pub target: Option<String>,
    /// Only articles of this dominant topic.
    #[arg(long)]
    pub topic: Option<usize>,
}

pub fn bins(a: BinsArgs, g: &Global) -> Result<()> {
    let (mut run, _) = begin("bins", g)?;
    let n_bins = run.settings.get("bins", a.bins, 25usize)?;
    let topic = run.settings.get_opt("topic", a.topic)?;
    let chosen = run
        .settings
        .list("feature", a.feature.as_deref())
        .map(|l| l.iter().map(|f| f.parse::<Feature>()).collect::<Result<Vec<_>>>())
        .transpose()?;
    let targets = match run.settings.list("target", a.target.as_deref()) {
        Some(l) => l.iter().map(|t| t.parse()).collect::<Result<Vec<TargetMetric>>>()?,
        None => vec![TargetMetric::Searchshare, TargetMetric::Resistance],
    };
    let mut rows = read_joined_tsv(&run.input(&a.features)?)?;
    if let Some(t) = topic {
        rows.retain(|r| r.topic_id() == Some(t));
    }
    let feats: Vec<Feature> = match chosen {
        Some(f) => f,
        None => Feature::NETWORK
            .into_iter()
            .chain(Feature::CONTENT)
            .filter(|f| rows.iter().any(|r| f.value(r).is_some()))
            .collect(),
    };
    if feats.is_empty() {
        return Err(Error::Data(
            "no feature columns present; run features with --network or --content first".into(),
        ));
    }
    let prefix = topic.map_or_else(|| "bins".to_string(), |t| format!("bins_topic{t:02}"));
    for target in &targets {
        for f in &feats {
            let b = binned_quartiles(&rows, *f, *target, n_bins)?;
            let mut meta = vec![("feature", f.to_string()), ("target", target.to_string())];
            if let Some(t) = topic {
                meta.push(("topic_id", t.to_string()));
            }
            run.write(&format!("{prefix}_{target}_{f}.csv"), |w| b.write_csv(w, &meta))?;
        }
    }
    run.finish()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct TopicsArgs {
    /// Article texts as article<TAB>text lines, or a directory with one
    /// text file per article.
    #[arg(long)]
    pub docs: PathBuf,
    /// Stop-word list, one per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Number of topics.
    #[arg(long)]
    pub topics: Option<usize>,
    /// Document-topic prior (default 50 / topics).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Topic-word prior.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Gibbs sweeps.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Words listed per topic in top_words.tsv.
    #[arg(long)]
    pub top_words: Option<usize>,
}

pub fn topics(a: TopicsArgs, g: &Global) -> Result<()> {
    let (mut run, _) = begin("topics", g)?;
    let d = LdaConfig::default();
    let s = &mut run.settings;
    let cfg = LdaConfig {
        topics: s.get("topics", a.topics, d.topics)?,
        alpha: s.get_opt("alpha", a.alpha)?,
        beta: s.get("beta", a.beta, d.beta)?,
        iterations: s.get("iterations", a.iterations, d.iterations)?,
        seed: run.seed,
    };
    let top_n = run.settings.get("top-words", a.top_words, 10usize)?;
    let stop = match run.settings.path("stopwords", a.stopwords.as_deref()) {
        Some(p) => StopWords::parse(&read_text(&mut run, &p)?),
        None => StopWords::default(),
    };
    if a.docs.is_dir() {
        for f in document_files(&a.docs)? {
            run.input(&f)?;
        }
    } else {
        run.input(&a.docs)?;
    }
    let docs = read_documents(&a.docs)?;
    let corpus = build_corpus(docs, &stop)?;
    let model = fit_lda(&corpus, &cfg)?;
    run.write("topics.tsv", |w| model.write_assignments(w))?;
    let mut phi = Vec::new();
    model.write_phi_csv(&mut phi).map_err(|e| Error::Data(e.to_string()))?;
    run.write("phi.csv", |w| w.write_all(&phi))?;
    let mut theta = Vec::new();
    model.write_theta_csv(&mut theta).map_err(|e| Error::Data(e.to_string()))?;
    run.write("theta.csv", |w| w.write_all(&theta))?;
    run.write("top_words.tsv", |w| model.write_top_words(w, top_n))?;
    run.write_text(
        "topics_stats.txt",
        &kv(&[
            ("documents", corpus.docs.len().to_string()),
            ("vocabulary", corpus.vocab.len().to_string()),
            ("tokens", corpus.token_count().to_string()),
            ("empty_documents", corpus.empty_documents().len().to_string()),
            ("alpha", cfg.alpha().to_string()),
        ]),
    )?;
    run.finish()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Joined table written by `features`.
    #[arg(long)]
    pub features: PathBuf,
    /// searchshare, resistance or both.
    #[arg(long)]
    pub task: Option<String>,
    /// Comma-separated feature groups: network, content-edit, topic, all.
    #[arg(long)]
    pub groups: Option<String>,
    /// Label cut: a number, or `corpus` for the mean of the target.
    #[arg(long)]
    pub threshold: Option<String>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Boosting stages.
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Smallest number of rows in a leaf.
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Row fraction drawn per tree.
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Number of topics in the one-hot encoding.
    #[arg(long)]
    pub topics: Option<usize>,
    /// Use the topic mixtures from this theta.csv instead of the dominant
    /// topic.
    #[arg(long)]
    pub theta: Option<PathBuf>,
}

pub fn model(a: ModelArgs, g: &Global) -> Result<()> {
    let (mut run, _) = begin("model", g)?;
    let seed = run.seed;
    let s = &mut run.settings;
    let task = s.get("task", a.task, "both".to_string())?;
    let tasks = match task.as_str() {
        "both" => vec![TargetMetric::Searchshare, TargetMetric::Resistance],
        t => vec![t.parse::<TargetMetric>()?],
    };
    let groups = match s.list("groups", a.groups.as_deref()) {
        Some(l) => l.iter().map(|x| x.parse()).collect::<Result<Vec<FeatureGroup>>>()?,
        None => FeatureGroup::ALL.to_vec(),
    };
    let threshold = s.get_opt("threshold", a.threshold)?;
    if let Some(t) = &threshold {
        if t != "corpus" && tasks.len() > 1 {
            return Err(Error::Usage(
                "a numeric --threshold needs a single --task".into(),
            ));
        }
    }
    let d = GbdtConfig::default();
    let gbdt = GbdtConfig {
        n_trees: s.get("n-trees", a.n_trees, d.n_trees)?,
        max_depth: s.get("max-depth", a.max_depth, d.max_depth)?,
        learning_rate: s.get("learning-rate", a.learning_rate, d.learning_rate)?,
        min_leaf: s.get("min-leaf", a.min_leaf, d.min_leaf)?,
        subsample: s.get("subsample", a.subsample, d.subsample)?,
        l2: d.l2,
        seed,
    };
    gbdt.validate()?;
    let cv = CvConfig {
        folds: s.get("folds", a.folds, 10usize)?,
        seed,
        balance: true,
        gbdt,
    };
    let k = s.get("topics", a.topics, 20usize)?;
    let encoding = match run.settings.path("theta", a.theta.as_deref()) {
        Some(p) => TopicEncoding::Theta {
            topics: k,
            theta: read_theta_csv(&run.input(&p)?)?,
        },
        None => TopicEncoding::OneHot { topics: k },
    };
    let rows = read_joined_tsv(&run.input(&a.features)?)?;

    let mut reports = Vec::new();
    let mut stats = String::new();
    for &target in &tasks {
        let cut = match threshold.as_deref() {
            None => default_threshold(target),
            Some("corpus") => {
                rows.iter().map(|r| target.value(r)).sum::<f64>() / rows.len().max(1) as f64
            }
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("invalid threshold {v:?}")))?,
        };
        for &group in &groups {
            let (data, skipped) = build_dataset(&rows, target, cut, group, &encoding)?;
            let pos = data.positives();
            stats.push_str(&format!(
                "{target}.{group}.threshold={cut}\n{target}.{group}.instances={}\n\
                 {target}.{group}.positives={pos}\n{target}.{group}.skipped={skipped}\n",
                data.len()
            ));
            if data.is_empty() {
                return Err(Error::Data(format!(
                    "no article has complete {group} features; rerun features with the missing inputs"
                )));
            }
            let report = cross_validate(&data, &cv)?;
            let all: Vec<usize> = (0..data.len()).collect();
            let train = balance(&all, &data.labels, seed)?;
            let fitted = train_gbdt(&data.x, data.n_features(), &data.labels, &train, &data.feature_names, &gbdt)?;
            run.write(&format!("model_{target}_{group}.txt"), |w| fitted.write(w))?;
            reports.push(report);
        }
    }
    run.write("auc_report.csv", |w| write_reports_csv(w, &reports))?;
    run.write_text("model_stats.txt", &stats)?;
    run.finish()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Any tab-separated table with an `article` column.
    #[arg(long)]
    pub input: PathBuf,
    /// Sample size.
    #[arg(long)]
    pub n: Option<usize>,
}

pub fn sample(a: SampleArgs, g: &Global) -> Result<()> {
    let (mut run, _) = begin("sample", g)?;
    let n = run.settings.get("n", a.n, 50_000usize)?;
    let path = run.input(&a.input)?;
    let (header, records) = read_named_tsv(&path)?;
    let col = column(&header, "article", &path)?;
    let titles: Vec<String> = records.iter().map(|r| r[col].to_string()).collect();
    let picked = sample_articles(&titles, n, run.seed)?;
    run.write("sample.txt", |w| {
        for t in &picked {
            writeln!(w, "{t}")?;
        }
        Ok(())
    })?;
    run.finish()?;
    Ok(())
}
