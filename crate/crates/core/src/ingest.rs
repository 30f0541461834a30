//! Streaming parser and aggregator for clickstream transition dumps.
//!
//! A dump is a tab-separated file of `referrer, resource, type, count`
//! rows. Each row is classified by where its traffic came from and folded
//! into per-article inbound search / inbound navigation / outbound
//! navigation totals.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use regex::Regex;

use crate::error::{Error, Result};
use crate::io;

/// Smallest transition count the public dumps publish.
pub const PUBLIC_MIN_COUNT: u64 = 10;

/// One `(referrer, resource, rawtype, count)` row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransitionRecord {
    pub referrer: String,
    pub resource: String,
    pub rawtype: String,
    pub count: u64,
}

/// Borrowed view of a row, used on the hot aggregation path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionRef<'a> {
    pub referrer: &'a str,
    pub resource: &'a str,
    pub rawtype: &'a str,
    pub count: u64,
}

impl TransitionRecord {
    pub fn as_ref(&self) -> TransitionRef<'_> {
        TransitionRef {
            referrer: &self.referrer,
            resource: &self.resource,
            rawtype: &self.rawtype,
            count: self.count,
        }
    }
}

impl TransitionRef<'_> {
    pub fn to_owned(&self) -> TransitionRecord {
        TransitionRecord {
            referrer: self.referrer.to_owned(),
            resource: self.resource.to_owned(),
            rawtype: self.rawtype.to_owned(),
            count: self.count,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParserConfig {
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
    /// A first line matching this pattern is skipped as a header.
    pub header_pattern: Option<Regex>,
    /// Accepted values of the `rawtype` column.
    pub type_tokens: Vec<String>,
    /// Rows below this count are kept but tallied in [`ParseStats::below_min_count`].
    pub min_count: u64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            strict: false,
            header_pattern: Some(Regex::new(r"^prev\tcurr\ttype\tn$").expect("static regex")),
            type_tokens: vec!["link".into(), "external".into(), "other".into()],
            min_count: PUBLIC_MIN_COUNT,
        }
    }
}

impl ParserConfig {
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    /// Replaces the header pattern; an empty pattern disables header
    /// detection.
    pub fn header_pattern(mut self, pattern: &str) -> Result<Self> {
        self.header_pattern = if pattern.is_empty() {
            None
        } else {
            Some(Regex::new(pattern).map_err(|e| Error::usage(format!("header pattern: {e}")))?)
        };
        Ok(self)
    }
}

/// Counters kept while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub lines: u64,
    pub records: u64,
    pub malformed: u64,
    pub unknown_type: u64,
    pub below_min_count: u64,
    pub header_skipped: bool,
}

impl ParseStats {
    pub fn merge(&mut self, other: &ParseStats) {
        self.lines += other.lines;
        self.records += other.records;
        self.malformed += other.malformed;
        self.unknown_type += other.unknown_type;
        self.below_min_count += other.below_min_count;
        self.header_skipped |= other.header_skipped;
    }
}

enum LineOutcome<'a> {
    Record(TransitionRef<'a>),
    Header,
    Malformed(String),
    UnknownType(&'a str),
}

fn parse_line<'a>(line: &'a str, line_no: u64, cfg: &ParserConfig) -> LineOutcome<'a> {
    if line_no == 1 {
        if let Some(re) = &cfg.header_pattern {
            if re.is_match(line) {
                return LineOutcome::Header;
            }
        }
    }
    let mut fields = line.split('\t');
    let (Some(referrer), Some(resource), Some(rawtype), Some(count), None) = (
        fields.next(),
        fields.next(),
        fields.next(),
        fields.next(),
        fields.next(),
    ) else {
        let n = line.split('\t').count();
        return LineOutcome::Malformed(format!("expected 4 tab-separated fields, found {n}"));
    };
    if resource.is_empty() {
        return LineOutcome::Malformed("empty resource".into());
    }
    let count = match count.parse::<u64>() {
        Ok(c) if !count.starts_with('+') => c,
        _ => return LineOutcome::Malformed(format!("count {count:?} is not a non-negative integer")),
    };
    if !cfg.type_tokens.iter().any(|t| t == rawtype) {
        return LineOutcome::UnknownType(rawtype);
    }
    LineOutcome::Record(TransitionRef {
        referrer,
        resource,
        rawtype,
        count,
    })
}

/// Applies one line to the running stats. Returns the record if the line
/// yields one, or the strict-mode error.
fn accept_line<'a>(
    line: &'a str,
    line_no: u64,
    cfg: &ParserConfig,
    stats: &mut ParseStats,
) -> Result<Option<TransitionRef<'a>>> {
    stats.lines += 1;
    match parse_line(line, line_no, cfg) {
        LineOutcome::Record(r) => {
            stats.records += 1;
            if r.count < cfg.min_count {
                stats.below_min_count += 1;
            }
            Ok(Some(r))
        }
        LineOutcome::Header => {
            stats.header_skipped = true;
            Ok(None)
        }
        LineOutcome::Malformed(reason) => {
            if cfg.strict {
                Err(Error::Malformed {
                    line: line_no,
                    reason,
                })
            } else {
                stats.malformed += 1;
                Ok(None)
            }
        }
        LineOutcome::UnknownType(tok) => {
            if cfg.strict {
                Err(Error::Malformed {
                    line: line_no,
                    reason: format!("unknown transition type {tok:?}"),
                })
            } else {
                stats.unknown_type += 1;
                Ok(None)
            }
        }
    }
}

/// Iterator over the records of a clickstream stream, in input order.
pub struct ClickstreamParser<R> {
    reader: R,
    cfg: ParserConfig,
    stats: ParseStats,
    line_no: u64,
    buf: String,
    failed: bool,
}

impl<R: BufRead> ClickstreamParser<R> {
    pub fn new(reader: R, cfg: ParserConfig) -> Self {
        ClickstreamParser {
            reader,
            cfg,
            stats: ParseStats::default(),
            line_no: 0,
            buf: String::new(),
            failed: false,
        }
    }

    pub fn stats(&self) -> &ParseStats {
        &self.stats
    }
}

impl<R: BufRead> Iterator for ClickstreamParser<R> {
    type Item = Result<TransitionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            let n = match self.reader.read_line(&mut self.buf) {
                Ok(n) => n,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::Malformed {
                        line: self.line_no + 1,
                        reason: e.to_string(),
                    }));
                }
            };
            if n == 0 {
                return None;
            }
            self.line_no += 1;
            let line = trim_newline(&self.buf);
            match accept_line(line, self.line_no, &self.cfg, &mut self.stats) {
                Ok(Some(r)) => return Some(Ok(r.to_owned())),
                Ok(None) => continue,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

fn trim_newline(s: &str) -> &str {
    let s = s.strip_suffix('\n').unwrap_or(s);
    s.strip_suffix('\r').unwrap_or(s)
}

/// Parses an entire stream into memory.
pub fn parse_clickstream(
    reader: impl BufRead,
    cfg: &ParserConfig,
) -> Result<(Vec<TransitionRecord>, ParseStats)> {
    let mut parser = ClickstreamParser::new(reader, cfg.clone());
    let records = parser.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((records, *parser.stats()))
}

/// Where a transition's traffic originated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReferrerClass {
    SearchEngine,
    InternalArticle,
    OtherExternal,
    Missing,
    Other,
}

/// Maps reserved referrer tokens and raw types onto [`ReferrerClass`].
///
/// Reserved tokens are checked before the raw type, so a reserved token is
/// never mistaken for an article even on a `link` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferrerMapping {
    pub search_tokens: Vec<String>,
    pub missing_tokens: Vec<String>,
    pub external_tokens: Vec<String>,
    pub internal_types: Vec<String>,
}

impl Default for ReferrerMapping {
    /// Reserved tokens used by the 2016-08 English dump.
    fn default() -> Self {
        ReferrerMapping {
            search_tokens: vec!["other-search".into()],
            missing_tokens: vec!["other-empty".into()],
            external_tokens: vec!["other-external".into()],
            internal_types: vec!["link".into()],
        }
    }
}

impl ReferrerMapping {
    /// Parses `key=value[,value...]` lines. Recognised keys are `search`,
    /// `missing`, `external` and `internal_type`; each given key replaces
    /// the default list. Blank lines and `#` comments are ignored.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut m = ReferrerMapping::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Malformed {
                line: i as u64 + 1,
                reason: format!("expected key=value, got {line:?}"),
            })?;
            let values: Vec<String> = value
                .split(',')
                .map(|v| v.trim().to_owned())
                .filter(|v| !v.is_empty())
                .collect();
            match key.trim() {
                "search" => m.search_tokens = values,
                "missing" => m.missing_tokens = values,
                "external" => m.external_tokens = values,
                "internal_type" => m.internal_types = values,
                other => {
                    return Err(Error::Malformed {
                        line: i as u64 + 1,
                        reason: format!("unknown referrer mapping key {other:?}"),
                    })
                }
            }
        }
        Ok(m)
    }

    pub fn classify(&self, referrer: &str, rawtype: &str) -> ReferrerClass {
        let has = |list: &[String], tok: &str| list.iter().any(|t| t == tok);
        if has(&self.search_tokens, referrer) {
            ReferrerClass::SearchEngine
        } else if has(&self.missing_tokens, referrer) {
            ReferrerClass::Missing
        } else if has(&self.external_tokens, referrer) {
            ReferrerClass::OtherExternal
        } else if has(&self.internal_types, rawtype) {
            ReferrerClass::InternalArticle
        } else {
            ReferrerClass::Other
        }
    }
}

pub fn classify_referrer(record: &TransitionRecord, mapping: &ReferrerMapping) -> ReferrerClass {
    mapping.classify(&record.referrer, &record.rawtype)
}

/// Per-article traffic aggregates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArticleTraffic {
    pub article: String,
    /// Views referred by search engines.
    pub in_se: u64,
    /// Views referred by other articles.
    pub in_nav: u64,
    /// Views of other articles that this article referred.
    pub out_nav: u64,
}

impl ArticleTraffic {
    pub fn new(article: impl Into<String>, in_se: u64, in_nav: u64, out_nav: u64) -> Self {
        ArticleTraffic {
            article: article.into(),
            in_se,
            in_nav,
            out_nav,
        }
    }

    /// Views received through search or navigation.
    pub fn total_views(&self) -> u64 {
        self.in_se + self.in_nav
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    in_se: u64,
    in_nav: u64,
    out_nav: u64,
}

impl Counts {
    fn add(&mut self, other: &Counts) {
        self.in_se += other.in_se;
        self.in_nav += other.in_nav;
        self.out_nav += other.out_nav;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AggregateConfig {
    /// Retain articles seen only as referrers (no inbound traffic).
    pub keep_referrer_only: bool,
}

/// Accumulates transitions into per-article counts.
///
/// Merging two aggregators is an integer sum, so any sharding of the input
/// produces the same table.
#[derive(Debug, Clone, Default)]
pub struct TrafficAggregator {
    counts: HashMap<Box<str>, Counts>,
    dropped: u64,
}

impl TrafficAggregator {
    pub fn new() -> Self {
        Self::default()
    }

    fn entry(&mut self, article: &str) -> &mut Counts {
        if !self.counts.contains_key(article) {
            self.counts.insert(article.into(), Counts::default());
        }
        self.counts.get_mut(article).expect("inserted above")
    }

    pub fn add(&mut self, record: TransitionRef<'_>, class: ReferrerClass) {
        match class {
            ReferrerClass::SearchEngine => self.entry(record.resource).in_se += record.count,
            ReferrerClass::InternalArticle => {
                self.entry(record.resource).in_nav += record.count;
                self.entry(record.referrer).out_nav += record.count;
            }
            ReferrerClass::Missing | ReferrerClass::OtherExternal | ReferrerClass::Other => {
                self.dropped += record.count;
            }
        }
    }

    /// Views from referrer classes outside search and navigation.
    pub fn dropped_views(&self) -> u64 {
        self.dropped
    }

    pub fn merge(&mut self, other: TrafficAggregator) {
        self.dropped += other.dropped;
        if self.counts.len() < other.counts.len() {
            let mine = std::mem::replace(&mut self.counts, other.counts);
            for (k, v) in mine {
                self.counts.entry(k).or_default().add(&v);
            }
        } else {
            for (k, v) in other.counts {
                self.counts.entry(k).or_default().add(&v);
            }
        }
    }

    /// Produces the traffic table sorted by article title.
    pub fn finish(self, cfg: AggregateConfig) -> TrafficTable {
        let mut rows: Vec<ArticleTraffic> = self
            .counts
            .into_iter()
            .filter(|(_, c)| cfg.keep_referrer_only || c.in_se + c.in_nav > 0)
            .map(|(k, c)| ArticleTraffic {
                article: k.into_string(),
                in_se: c.in_se,
                in_nav: c.in_nav,
                out_nav: c.out_nav,
            })
            .collect();
        rows.par_sort_unstable_by(|a, b| a.article.cmp(&b.article));
        TrafficTable { rows }
    }
}

/// Per-article traffic, one row per article, sorted by title.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficTable {
    pub rows: Vec<ArticleTraffic>,
}

impl TrafficTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_views(&self) -> u64 {
        self.rows.iter().map(ArticleTraffic::total_views).sum()
    }

    pub fn search_views(&self) -> u64 {
        self.rows.iter().map(|r| r.in_se).sum()
    }

    pub fn navigation_views(&self) -> u64 {
        self.rows.iter().map(|r| r.in_nav).sum()
    }

    pub fn write_tsv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "article\tin_se\tin_nav\tout_nav\ttotal_views")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.article,
                r.in_se,
                r.in_nav,
                r.out_nav,
                r.total_views()
            )?;
        }
        Ok(())
    }

    /// Reads a table written by [`TrafficTable::write_tsv`]. The
    /// `total_views` column is checked against `in_se + in_nav`.
    pub fn read_tsv(path: &Path) -> Result<TrafficTable> {
        let reader = io::open_input(path)?;
        let mut rows = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for item in io::numbered_lines(reader, path) {
            let (line_no, line) = item?;
            if line_no == 1 && line.starts_with("article\t") || line.starts_with('#') {
                continue;
            }
            let ctx = format!("{}:{line_no}", path.display());
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::data(format!("{ctx}: expected 5 fields, found {}", f.len())));
            }
            let row = ArticleTraffic {
                article: f[0].to_owned(),
                in_se: io::parse_field(f[1], "in_se", &ctx)?,
                in_nav: io::parse_field(f[2], "in_nav", &ctx)?,
                out_nav: io::parse_field(f[3], "out_nav", &ctx)?,
            };
            let total: u64 = io::parse_field(f[4], "total_views", &ctx)?;
            if total != row.total_views() {
                return Err(Error::data(format!(
                    "{ctx}: total_views {total} != in_se + in_nav {}",
                    row.total_views()
                )));
            }
            if !seen.insert(row.article.clone()) {
                return Err(Error::DuplicateKey {
                    table: path.display().to_string(),
                    key: row.article,
                });
            }
            rows.push(row);
        }
        rows.sort_by(|a, b| a.article.cmp(&b.article));
        Ok(TrafficTable { rows })
    }
}

/// Aggregates an in-memory record list.
pub fn aggregate_traffic(
    records: &[TransitionRecord],
    mapping: &ReferrerMapping,
    cfg: AggregateConfig,
) -> TrafficTable {
    let mut agg = TrafficAggregator::new();
    for r in records {
        agg.add(r.as_ref(), classify_referrer(r, mapping));
    }
    agg.finish(cfg)
}

/// Result of a fused parse-and-aggregate pass.
#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub table: TrafficTable,
    pub stats: ParseStats,
    pub dropped_views: u64,
}

/// Bytes read per batch before the batch is split into shards.
const BATCH_BYTES: usize = 16 << 20;

/// Parses and aggregates a stream in parallel batches without materialising
/// the records. `shards` is the number of pieces each batch is split into
/// (normally the worker count); the result does not depend on it.
pub fn ingest_stream(
    mut reader: impl BufRead,
    parser: &ParserConfig,
    mapping: &ReferrerMapping,
    agg_cfg: AggregateConfig,
    shards: usize,
) -> Result<IngestOutcome> {
    let shards = shards.max(1);
    let mut total = TrafficAggregator::new();
    let mut stats = ParseStats::default();
    let mut next_line: u64 = 1;
    let mut carry: Vec<u8> = Vec::new();

    loop {
        let mut batch = std::mem::take(&mut carry);
        let eof = fill_batch(&mut reader, &mut batch, &mut carry)?;
        if !batch.is_empty() {
            let pieces = split_at_newlines(&batch, shards);
            let mut starts = Vec::with_capacity(pieces.len());
            let mut line = next_line;
            for p in &pieces {
                starts.push(line);
                line += count_lines(p);
            }
            next_line = line;

            let results: Vec<Result<(TrafficAggregator, ParseStats)>> = pieces
                .par_iter()
                .zip(starts.par_iter())
                .map(|(piece, &start)| ingest_piece(piece, start, parser, mapping))
                .collect();
            for r in results {
                let (agg, s) = r?;
                stats.merge(&s);
                total.merge(agg);
            }
        }
        if eof {
            break;
        }
    }
    let dropped_views = total.dropped_views();
    Ok(IngestOutcome {
        table: total.finish(agg_cfg),
        stats,
        dropped_views,
    })
}

/// Reads roughly [`BATCH_BYTES`] into `batch`, moving any trailing partial
/// line into `carry`. Returns true at end of input.
fn fill_batch(reader: &mut impl BufRead, batch: &mut Vec<u8>, carry: &mut Vec<u8>) -> Result<bool> {
    let io_err = |e| Error::io("<clickstream>", e);
    while batch.len() < BATCH_BYTES {
        let n = reader.read_until(b'\n', batch).map_err(io_err)?;
        if n == 0 {
            return Ok(true);
        }
    }
    if batch.last() != Some(&b'\n') {
        // read_until only stops early at EOF, so this is the final line.
        let cut = batch.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        carry.extend_from_slice(&batch[cut..]);
        batch.truncate(cut);
    }
    Ok(false)
}

fn split_at_newlines(buf: &[u8], pieces: usize) -> Vec<&[u8]> {
    let mut out = Vec::with_capacity(pieces);
    let target = buf.len().div_ceil(pieces).max(1);
    let mut start = 0;
    while start < buf.len() {
        let mut end = (start + target).min(buf.len());
        if end < buf.len() {
            end = match buf[end..].iter().position(|&b| b == b'\n') {
                Some(off) => end + off + 1,
                None => buf.len(),
            };
        }
        out.push(&buf[start..end]);
        start = end;
    }
    out
}

fn count_lines(piece: &[u8]) -> u64 {
    let newlines = piece.iter().filter(|&&b| b == b'\n').count() as u64;
    if piece.last().is_some_and(|&b| b != b'\n') {
        newlines + 1
    } else {
        newlines
    }
}

fn ingest_piece(
    piece: &[u8],
    start_line: u64,
    parser: &ParserConfig,
    mapping: &ReferrerMapping,
) -> Result<(TrafficAggregator, ParseStats)> {
    let mut agg = TrafficAggregator::new();
    let mut stats = ParseStats::default();
    let mut line_no = start_line;
    for raw in piece.split_inclusive(|&b| b == b'\n') {
        let raw = raw.strip_suffix(b"\n").unwrap_or(raw);
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        match std::str::from_utf8(raw) {
            Ok(line) => {
                if let Some(r) = accept_line(line, line_no, parser, &mut stats)? {
                    agg.add(r, mapping.classify(r.referrer, r.rawtype));
                }
            }
            Err(_) => {
                stats.lines += 1;
                if parser.strict {
                    return Err(Error::Malformed {
                        line: line_no,
                        reason: "invalid UTF-8".into(),
                    });
                }
                stats.malformed += 1;
            }
        }
        line_no += 1;
    }
    Ok((agg, stats))
}

pub fn ingest_file(
    path: &Path,
    parser: &ParserConfig,
    mapping: &ReferrerMapping,
    agg_cfg: AggregateConfig,
    shards: usize,
) -> Result<IngestOutcome> {
    let reader = io::open_input(path)?;
    ingest_stream(reader, parser, mapping, agg_cfg, shards).map_err(|e| match e {
        Error::Malformed { line, reason } => Error::Malformed {
            line,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(referrer: &str, resource: &str, rawtype: &str, count: u64) -> TransitionRecord {
        TransitionRecord {
            referrer: referrer.into(),
            resource: resource.into(),
            rawtype: rawtype.into(),
            count,
        }
    }

    fn parse(text: &str, cfg: &ParserConfig) -> Result<(Vec<TransitionRecord>, ParseStats)> {
        parse_clickstream(text.as_bytes(), cfg)
    }

    #[test]
    fn parses_single_line() {
        let (recs, stats) = parse(
            "other-search\tRio_de_Janeiro\texternal\t1000\n",
            &ParserConfig::default(),
        )
        .unwrap();
        assert_eq!(recs, vec![rec("other-search", "Rio_de_Janeiro", "external", 1000)]);
        assert_eq!(stats.records, 1);
        assert_eq!(stats.malformed, 0);
    }

    #[test]
    fn three_fields_is_skipped_when_lenient() {
        let (recs, stats) = parse("a\tb\tlink\n", &ParserConfig::default()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(stats.malformed, 1);
    }

    #[test]
    fn strict_reports_line_number() {
        let cfg = ParserConfig::default().strict(true);
        let err = parse("a\tb\tlink\t10\na\tb\tlink\n", &cfg).unwrap_err();
        match err {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input() {
        let (recs, stats) = parse("", &ParserConfig::default()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(stats, ParseStats::default());
    }

    #[test]
    fn bad_counts_are_malformed() {
        for bad in ["-3", "1.5", "ten", "", "+4"] {
            let line = format!("a\tb\tlink\t{bad}\n");
            let (recs, stats) = parse(&line, &ParserConfig::default()).unwrap();
            assert!(recs.is_empty(), "{bad}");
            assert_eq!(stats.malformed, 1, "{bad}");
        }
    }

    #[test]
    fn header_and_unknown_types() {
        let text = "prev\tcurr\ttype\tn\na\tb\tlink\t12\na\tb\tweird\t12\nx\ty\tlink\t3\n";
        let (recs, stats) = parse(text, &ParserConfig::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(stats.header_skipped);
        assert_eq!(stats.unknown_type, 1);
        assert_eq!(stats.below_min_count, 1);
        assert_eq!(stats.lines, 4);
    }

    #[test]
    fn header_only_tolerated_on_first_line() {
        let text = "a\tb\tlink\t12\nprev\tcurr\ttype\tn\n";
        let (_, stats) = parse(text, &ParserConfig::default()).unwrap();
        assert!(!stats.header_skipped);
        assert_eq!(stats.malformed, 1);
    }

    #[test]
    fn default_classification() {
        let m = ReferrerMapping::default();
        assert_eq!(m.classify("other-search", "external"), ReferrerClass::SearchEngine);
        assert_eq!(
            m.classify("Hanging_Gardens_of_Babylon", "link"),
            ReferrerClass::InternalArticle
        );
        assert_eq!(m.classify("other-empty", "other"), ReferrerClass::Missing);
        assert_eq!(m.classify("other-external", "external"), ReferrerClass::OtherExternal);
        assert_eq!(m.classify("other-internal", "other"), ReferrerClass::Other);
    }

    #[test]
    fn mapping_overrides() {
        let m = ReferrerMapping::from_kv("# 2015 style\nsearch=other-google, other-bing\n").unwrap();
        assert_eq!(m.classify("other-bing", "external"), ReferrerClass::SearchEngine);
        assert_eq!(m.classify("other-search", "external"), ReferrerClass::Other);
        assert!(ReferrerMapping::from_kv("bogus=1").is_err());
        assert!(ReferrerMapping::from_kv("no equals sign").is_err());
    }

    #[test]
    fn aggregation_update_rules() {
        let records = vec![
            rec("other-search", "A", "external", 30),
            rec("A", "B", "link", 10),
        ];
        let t = aggregate_traffic(&records, &ReferrerMapping::default(), AggregateConfig::default());
        assert_eq!(
            t.rows,
            vec![ArticleTraffic::new("A", 30, 0, 10), ArticleTraffic::new("B", 0, 10, 0)]
        );
        assert_eq!(t.rows[0].total_views(), 30);
        assert_eq!(t.rows[1].total_views(), 10);
    }

    #[test]
    fn missing_only_is_empty() {
        let records = vec![rec("other-empty", "A", "other", 30), rec("other-empty", "B", "other", 12)];
        let t = aggregate_traffic(&records, &ReferrerMapping::default(), AggregateConfig::default());
        assert!(t.is_empty());
    }

    #[test]
    fn referrer_only_articles_follow_flag() {
        let records = vec![rec("A", "B", "link", 10)];
        let m = ReferrerMapping::default();
        let dropped = aggregate_traffic(&records, &m, AggregateConfig::default());
        assert_eq!(dropped.len(), 1);
        let kept = aggregate_traffic(
            &records,
            &m,
            AggregateConfig {
                keep_referrer_only: true,
            },
        );
        assert_eq!(kept.rows[0], ArticleTraffic::new("A", 0, 0, 10));
    }

    #[test]
    fn titles_are_not_normalised() {
        let records = vec![
            rec("other-search", "Foo_bar", "external", 10),
            rec("other-search", "Foo bar", "external", 10),
            rec("other-search", "foo_bar", "external", 10),
        ];
        let t = aggregate_traffic(&records, &ReferrerMapping::default(), AggregateConfig::default());
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn traffic_table_round_trip() {
        let records = vec![
            rec("other-search", "A", "external", 30),
            rec("A", "B", "link", 10),
            rec("other-search", "C", "external", 5_000_000_000),
        ];
        let t = aggregate_traffic(&records, &ReferrerMapping::default(), AggregateConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traffic.tsv");
        io::write_file(&p, |w| t.write_tsv(w)).unwrap();
        assert_eq!(TrafficTable::read_tsv(&p).unwrap(), t);
    }

    #[test]
    fn traffic_reader_rejects_inconsistent_total() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traffic.tsv");
        std::fs::write(&p, "article\tin_se\tin_nav\tout_nav\ttotal_views\nA\t1\t2\t0\t4\n").unwrap();
        assert!(TrafficTable::read_tsv(&p).is_err());
        std::fs::write(&p, "A\t1\t2\t0\t3\nA\t1\t2\t0\t3\n").unwrap();
        assert!(matches!(
            TrafficTable::read_tsv(&p),
            Err(Error::DuplicateKey { .. })
        ));
    }

    #[test]
    fn streaming_strict_line_numbers_span_shards() {
        let mut text = String::new();
        for i in 0..1000 {
            text.push_str(&format!("other-search\tA{i}\texternal\t10\n"));
        }
        text.push_str("broken line\n");
        let cfg = ParserConfig::default().strict(true);
        for shards in [1, 3, 8] {
            let err = ingest_stream(
                text.as_bytes(),
                &cfg,
                &ReferrerMapping::default(),
                AggregateConfig::default(),
                shards,
            )
            .unwrap_err();
            assert!(matches!(err, Error::Malformed { line: 1001, .. }), "{err}");
        }
    }

    #[test]
    fn split_pieces_cover_buffer() {
        let buf = b"a\nbb\nccc\ndddd\n";
        for n in 1..6 {
            let pieces = split_at_newlines(buf, n);
            assert_eq!(pieces.concat(), buf.to_vec());
            assert!(pieces.iter().all(|p| p.ends_with(b"\n")));
        }
    }

    fn arb_records() -> impl Strategy<Value = Vec<TransitionRecord>> {
        let name = prop::sample::select(vec!["A", "B", "C", "D", "E", "other-search", "other-empty"]);
        let ty = prop::sample::select(vec!["link", "external", "other"]);
        prop::collection::vec((name.clone(), name, ty, 0u64..1000), 0..60).prop_map(|v| {
            v.into_iter()
                .filter(|(_, res, _, _)| !res.starts_with("other-"))
                .map(|(a, b, t, c)| rec(a, b, t, c))
                .collect()
        })
    }

    fn to_text(records: &[TransitionRecord]) -> String {
        records
            .iter()
            .map(|r| format!("{}\t{}\t{}\t{}\n", r.referrer, r.resource, r.rawtype, r.count))
            .collect()
    }

    proptest! {
        #[test]
        fn aggregation_is_order_independent(records in arb_records(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let m = ReferrerMapping::default();
            let base = aggregate_traffic(&records, &m, AggregateConfig::default());
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(base, aggregate_traffic(&shuffled, &m, AggregateConfig::default()));
        }

        #[test]
        fn navigation_is_conserved(records in arb_records()) {
            let cfg = AggregateConfig { keep_referrer_only: true };
            // Only article referrers: reserved tokens never appear on link rows here.
            let records: Vec<_> = records
                .into_iter()
                .filter(|r| !(r.rawtype == "link" && r.referrer.starts_with("other-")))
                .collect();
            let t = aggregate_traffic(&records, &ReferrerMapping::default(), cfg);
            let in_nav: u64 = t.rows.iter().map(|r| r.in_nav).sum();
            let out_nav: u64 = t.rows.iter().map(|r| r.out_nav).sum();
            prop_assert_eq!(in_nav, out_nav);
        }

        #[test]
        fn adding_a_record_never_decreases_counts(records in arb_records(), extra in arb_records()) {
            let m = ReferrerMapping::default();
            let cfg = AggregateConfig { keep_referrer_only: true };
            let before = aggregate_traffic(&records, &m, cfg);
            let mut more = records.clone();
            more.extend(extra.into_iter().take(1));
            let after = aggregate_traffic(&more, &m, cfg);
            for b in &before.rows {
                let a = after.rows.iter().find(|r| r.article == b.article).unwrap();
                prop_assert!(a.in_se >= b.in_se && a.in_nav >= b.in_nav && a.out_nav >= b.out_nav);
            }
        }

        #[test]
        fn fused_streaming_equals_two_phase(records in arb_records(), shards in 1usize..6) {
            let m = ReferrerMapping::default();
            let cfg = ParserConfig { min_count: 0, ..ParserConfig::default() };
            let text = to_text(&records);
            let (parsed, stats) = parse_clickstream(text.as_bytes(), &cfg).unwrap();
            let two_phase = aggregate_traffic(&parsed, &m, AggregateConfig::default());
            let fused = ingest_stream(text.as_bytes(), &cfg, &m, AggregateConfig::default(), shards).unwrap();
            prop_assert_eq!(fused.table, two_phase);
            prop_assert_eq!(fused.stats, stats);
        }
    }
}
