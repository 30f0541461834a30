//! Pageview rankings and their cumulative top-k overlap.
//!
//! `overlap(k) = |top_k(A) ∩ top_k(B)| / k`, an unweighted variant of
//! rank-biased overlap with no persistence parameter.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::ArticleTraffic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrafficKey {
    Total,
    InSe,
    InNav,
    OutNav,
}

impl TrafficKey {
    pub const ALL: [TrafficKey; 4] = [
        TrafficKey::Total,
        TrafficKey::InSe,
        TrafficKey::InNav,
        TrafficKey::OutNav,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficKey::Total => "total",
            TrafficKey::InSe => "in_se",
            TrafficKey::InNav => "in_nav",
            TrafficKey::OutNav => "out_nav",
        }
    }

    pub fn value(self, t: &ArticleTraffic) -> u64 {
        match self {
            TrafficKey::Total => t.total_views(),
            TrafficKey::InSe => t.in_se,
            TrafficKey::InNav => t.in_nav,
            TrafficKey::OutNav => t.out_nav,
        }
    }
}

impl fmt::Display for TrafficKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrafficKey::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown ranking key {s:?} (expected total, in_se, in_nav or out_nav)"
                ))
            })
    }
}

/// Articles in descending order of a traffic key, ties broken by ascending
/// title.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub key: TrafficKey,
    pub articles: Vec<String>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }
}

pub fn rank_articles(table: &[ArticleTraffic], key: TrafficKey) -> Ranking {
    let mut order: Vec<&ArticleTraffic> = table.iter().collect();
    order.sort_by(|a, b| {
        key.value(b)
            .cmp(&key.value(a))
            .then_with(|| a.article.cmp(&b.article))
    });
    Ranking {
        key,
        articles: order.into_iter().map(|t| t.article.clone()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapCurve {
    pub points: Vec<(usize, f64)>,
}

impl OverlapCurve {
    pub fn write_csv(&self, out: &mut dyn Write, a: TrafficKey, b: TrafficKey) -> std::io::Result<()> {
        writeln!(out, "# pair={a}&{b}")?;
        writeln!(out, "k,overlap")?;
        for (k, v) in &self.points {
            writeln!(out, "{k},{v}")?;
        }
        Ok(())
    }
}

/// Overlap at each requested `k`, computed in a single pass over both
/// rankings.
pub fn cumulative_overlap(a: &Ranking, b: &Ranking, ks: &[usize]) -> Result<OverlapCurve> {
    let limit = a.len().min(b.len());
    for w in ks.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::usage("k values must be strictly increasing"));
        }
    }
    if let Some(&k) = ks.first() {
        if k == 0 {
            return Err(Error::domain("k must be positive"));
        }
    }
    if let Some(&k) = ks.last() {
        if k > limit {
            return Err(Error::domain(format!(
                "k = {k} exceeds ranking length {limit}"
            )));
        }
    }

    let mut seen_a: HashSet<&str> = HashSet::new();
    let mut seen_b: HashSet<&str> = HashSet::new();
    let mut shared = 0usize;
    let mut points = Vec::with_capacity(ks.len());
    let mut wanted = ks.iter().peekable();
    for i in 0..limit {
        let Some(&&next_k) = wanted.peek() else { break };
        let (x, y) = (a.articles[i].as_str(), b.articles[i].as_str());
        if x == y {
            shared += 1;
        } else {
            if seen_b.contains(x) {
                shared += 1;
            }
            if seen_a.contains(y) {
                shared += 1;
            }
        }
        seen_a.insert(x);
        seen_b.insert(y);
        if i + 1 == next_k {
            points.push((next_k, shared as f64 / next_k as f64));
            wanted.next();
        }
    }
    Ok(OverlapCurve { points })
}

/// 1, 2, 5, 10, 20, 50, ... below `n`, followed by `n` itself.
pub fn log_k_schedule(n: usize) -> Vec<usize> {
    let mut ks = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let k = decade.saturating_mul(m);
            if k >= n {
                break 'outer;
            }
            ks.push(k);
        }
        decade = decade.saturating_mul(10);
    }
    if n > 0 {
        ks.push(n);
    }
    ks
}

/// Ranking pairs plotted by default: every key against `total`, then the
/// mixed search/navigation pairs.
pub fn default_pairs() -> Vec<(TrafficKey, TrafficKey)> {
    use TrafficKey::*;
    vec![
        (InSe, Total),
        (InNav, Total),
        (OutNav, Total),
        (InSe, InNav),
        (InSe, OutNav),
        (InNav, OutNav),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(items: &[&str]) -> Ranking {
        Ranking {
            key: TrafficKey::Total,
            articles: items.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn ranks_by_key_then_title() {
        let t = vec![ArticleTraffic::new("A", 5, 0, 0), ArticleTraffic::new("B", 9, 0, 0)];
        assert_eq!(rank_articles(&t, TrafficKey::Total).articles, vec!["B", "A"]);
        let tie = vec![ArticleTraffic::new("B", 5, 0, 0), ArticleTraffic::new("A", 5, 0, 0)];
        assert_eq!(rank_articles(&tie, TrafficKey::Total).articles, vec!["A", "B"]);
        let zero = vec![ArticleTraffic::new("Z", 0, 3, 0), ArticleTraffic::new("A", 0, 1, 7)];
        assert_eq!(rank_articles(&zero, TrafficKey::InSe).articles, vec!["A", "Z"]);
        assert_eq!(rank_articles(&zero, TrafficKey::OutNav).articles, vec!["A", "Z"]);
    }

    #[test]
    fn unknown_key_is_usage_error() {
        assert!("pageviews".parse::<TrafficKey>().unwrap_err().is_usage());
    }

    #[test]
    fn overlap_examples() {
        let a = ranking(&["a", "b", "c"]);
        let b = ranking(&["b", "a", "d"]);
        let c = cumulative_overlap(&a, &b, &[1, 2, 3]).unwrap();
        assert_eq!(c.points, vec![(1, 0.0), (2, 1.0), (3, 2.0 / 3.0)]);

        let same = cumulative_overlap(&a, &a, &[1, 2, 3]).unwrap();
        assert!(same.points.iter().all(|&(_, v)| v == 1.0));

        let disjoint = cumulative_overlap(&a, &ranking(&["x", "y", "z"]), &[1, 2, 3]).unwrap();
        assert!(disjoint.points.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn overlap_rejects_bad_k() {
        let a = ranking(&["a", "b"]);
        assert!(cumulative_overlap(&a, &a, &[3]).is_err());
        assert!(cumulative_overlap(&a, &a, &[2, 1]).is_err());
        assert!(cumulative_overlap(&a, &a, &[0, 1]).is_err());
    }

    #[test]
    fn schedule() {
        assert_eq!(log_k_schedule(120), vec![1, 2, 5, 10, 20, 50, 100, 120]);
        assert_eq!(log_k_schedule(100), vec![1, 2, 5, 10, 20, 50, 100]);
        assert_eq!(log_k_schedule(1), vec![1]);
        assert!(log_k_schedule(0).is_empty());
    }
}
