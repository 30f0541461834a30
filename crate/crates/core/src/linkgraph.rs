//! Directed article link network with degree and k-core features.
//!
//! Nodes get dense `u32` ids in order of first appearance; adjacency is
//! stored in compressed sparse row form so the full link dump fits in
//! memory.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{ClickstreamParser, ParserConfig, ReferrerClass, ReferrerMapping};
use crate::io;

/// Where the edges of a graph came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSource {
    LinkDump,
    /// Edges inferred from clickstream `link` transitions. Links that were
    /// never clicked often enough to be published are missing, so degrees
    /// are underestimated.
    ClickstreamApprox,
}

impl fmt::Display for EdgeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeSource::LinkDump => "link-dump",
            EdgeSource::ClickstreamApprox => "clickstream-approximation",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LinkGraph {
    titles: Vec<String>,
    index: HashMap<String, u32>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    pub source: EdgeSource,
}

/// Collects raw edges before deduplication.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    titles: Vec<String>,
    index: HashMap<String, u32>,
    edges: Vec<(u32, u32)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, title: &str) -> u32 {
        if let Some(&id) = self.index.get(title) {
            return id;
        }
        let id = u32::try_from(self.titles.len()).expect("more than u32::MAX nodes");
        self.titles.push(title.to_owned());
        self.index.insert(title.to_owned(), id);
        id
    }

    pub fn add_edge(&mut self, source: &str, target: &str) {
        let s = self.intern(source);
        let t = self.intern(target);
        if s != t {
            self.edges.push((s, t));
        }
    }

    pub fn finish(self, source: EdgeSource) -> LinkGraph {
        let GraphBuilder {
            titles,
            index,
            mut edges,
        } = self;
        edges.par_sort_unstable();
        edges.dedup();
        let (offsets, targets) = to_csr(titles.len(), &edges);
        LinkGraph {
            titles,
            index,
            offsets,
            targets,
            source,
        }
    }
}

/// Sorted, deduplicated edge list to CSR.
fn to_csr(n: usize, edges: &[(u32, u32)]) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; n + 1];
    for &(s, _) in edges {
        offsets[s as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let targets = edges.iter().map(|&(_, t)| t).collect();
    (offsets, targets)
}

pub fn build_graph<'a>(edges: impl IntoIterator<Item = (&'a str, &'a str)>) -> LinkGraph {
    let mut b = GraphBuilder::new();
    for (s, t) in edges {
        b.add_edge(s, t);
    }
    b.finish(EdgeSource::LinkDump)
}

impl LinkGraph {
    pub fn node_count(&self) -> usize {
        self.titles.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn title(&self, id: u32) -> &str {
        &self.titles[id as usize]
    }

    pub fn id(&self, title: &str) -> Option<u32> {
        self.index.get(title).copied()
    }

    pub fn successors(&self, id: u32) -> &[u32] {
        let i = id as usize;
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn has_edge(&self, s: u32, t: u32) -> bool {
        self.successors(s).binary_search(&t).is_ok()
    }

    /// Neighbour lists of the undirected projection, in CSR form.
    pub fn undirected(&self) -> (Vec<usize>, Vec<u32>) {
        let mut both: Vec<(u32, u32)> = Vec::with_capacity(2 * self.edge_count());
        for s in 0..self.node_count() as u32 {
            for &t in self.successors(s) {
                both.push((s, t));
                both.push((t, s));
            }
        }
        both.par_sort_unstable();
        both.dedup();
        to_csr(self.node_count(), &both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Degree {
    pub in_degree: u32,
    pub out_degree: u32,
}

impl Degree {
    pub fn total(&self) -> u32 {
        self.in_degree + self.out_degree
    }
}

/// In/out degree per node id.
pub fn degrees(g: &LinkGraph) -> Vec<Degree> {
    let mut d: Vec<Degree> = (0..g.node_count() as u32)
        .map(|v| Degree {
            in_degree: 0,
            out_degree: g.successors(v).len() as u32,
        })
        .collect();
    for &t in &g.targets {
        d[t as usize].in_degree += 1;
    }
    d
}

/// Core number of every node on an undirected graph given as CSR.
///
/// Bucket peeling: nodes are kept sorted by current degree in `vert`, with
/// `bin[d]` the first position of degree `d`. Removing the lowest-degree
/// node decrements each remaining neighbour by swapping it to the front of
/// its bucket, so the whole pass is `O(n + m)`.
pub fn core_numbers(offsets: &[usize], neighbors: &[u32]) -> Vec<u32> {
    let n = offsets.len().saturating_sub(1);
    if n == 0 {
        return Vec::new();
    }
    let mut deg: Vec<usize> = (0..n).map(|v| offsets[v + 1] - offsets[v]).collect();
    let max_deg = deg.iter().copied().max().unwrap_or(0);

    let mut bin = vec![0usize; max_deg + 1];
    for &d in &deg {
        bin[d] += 1;
    }
    let mut start = 0;
    for b in bin.iter_mut() {
        let count = *b;
        *b = start;
        start += count;
    }
    let mut pos = vec![0usize; n];
    let mut vert = vec![0usize; n];
    for v in 0..n {
        pos[v] = bin[deg[v]];
        vert[pos[v]] = v;
        bin[deg[v]] += 1;
    }
    for d in (1..=max_deg).rev() {
        bin[d] = bin[d - 1];
    }
    bin[0] = 0;

    for i in 0..n {
        let v = vert[i];
        for &u in &neighbors[offsets[v]..offsets[v + 1]] {
            let u = u as usize;
            if deg[u] > deg[v] {
                let du = deg[u];
                let pu = pos[u];
                let pw = bin[du];
                let w = vert[pw];
                if u != w {
                    pos[u] = pw;
                    vert[pu] = w;
                    pos[w] = pu;
                    vert[pw] = u;
                }
                bin[du] += 1;
                deg[u] -= 1;
            }
        }
    }
    deg.into_iter().map(|d| d as u32).collect()
}

/// Core numbers on the undirected projection, indexed by node id.
pub fn kcore_decomposition(g: &LinkGraph) -> Vec<u32> {
    let (offsets, nbrs) = g.undirected();
    core_numbers(&offsets, &nbrs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkFeatures {
    pub article: String,
    pub in_degree: u32,
    pub out_degree: u32,
    pub degree: u32,
    pub kcore: u32,
}

/// Degree and core features for every node, sorted by title.
pub fn network_features(g: &LinkGraph) -> Vec<NetworkFeatures> {
    let deg = degrees(g);
    let core = kcore_decomposition(g);
    let mut rows: Vec<NetworkFeatures> = (0..g.node_count())
        .map(|i| NetworkFeatures {
            article: g.titles[i].clone(),
            in_degree: deg[i].in_degree,
            out_degree: deg[i].out_degree,
            degree: deg[i].total(),
            kcore: core[i],
        })
        .collect();
    rows.par_sort_unstable_by(|a, b| a.article.cmp(&b.article));
    rows
}

pub fn write_network_tsv(
    out: &mut dyn Write,
    g: &LinkGraph,
    rows: &[NetworkFeatures],
) -> std::io::Result<()> {
    writeln!(out, "# edge_source={}", g.source)?;
    writeln!(out, "# nodes={}", g.node_count())?;
    writeln!(out, "# edges={}", g.edge_count())?;
    writeln!(out, "article\tin_degree\tout_degree\tdegree\tkcore")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.article, r.in_degree, r.out_degree, r.degree, r.kcore
        )?;
    }
    Ok(())
}

pub fn read_network_tsv(path: &Path) -> Result<Vec<NetworkFeatures>> {
    let (header, records) = io::read_named_tsv(path)?;
    let col = |n| io::column(&header, n, path);
    let (a, i, o, d, k) = (
        col("article")?,
        col("in_degree")?,
        col("out_degree")?,
        col("degree")?,
        col("kcore")?,
    );
    records
        .iter()
        .enumerate()
        .map(|(row, rec)| {
            let ctx = format!("{} row {}", path.display(), row + 1);
            Ok(NetworkFeatures {
                article: rec[a].to_owned(),
                in_degree: io::parse_field(&rec[i], "in_degree", &ctx)?,
                out_degree: io::parse_field(&rec[o], "out_degree", &ctx)?,
                degree: io::parse_field(&rec[d], "degree", &ctx)?,
                kcore: io::parse_field(&rec[k], "kcore", &ctx)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeListStats {
    pub lines: u64,
    pub edges_read: u64,
    pub malformed: u64,
}

/// Reads a `source<TAB>target` edge list. A first line of
/// `source<TAB>target` is skipped as a header.
pub fn read_edge_list(reader: impl BufRead, path: &Path, strict: bool) -> Result<(LinkGraph, EdgeListStats)> {
    let mut b = GraphBuilder::new();
    let mut stats = EdgeListStats::default();
    for item in io::numbered_lines(reader, path) {
        let (line_no, line) = item?;
        stats.lines += 1;
        if line_no == 1 && line == "source\ttarget" {
            continue;
        }
        let mut f = line.split('\t');
        match (f.next(), f.next(), f.next()) {
            (Some(s), Some(t), None) if !s.is_empty() && !t.is_empty() => {
                stats.edges_read += 1;
                b.add_edge(s, t);
            }
            _ if strict => {
                return Err(Error::Malformed {
                    line: line_no,
                    reason: format!("{}: expected source<TAB>target", path.display()),
                })
            }
            _ => stats.malformed += 1,
        }
    }
    Ok((b.finish(EdgeSource::LinkDump), stats))
}

pub fn read_edge_file(path: &Path, strict: bool) -> Result<(LinkGraph, EdgeListStats)> {
    read_edge_list(io::open_input(path)?, path, strict)
}

/// Approximates the link graph by the article-to-article transitions of a
/// clickstream dump.
pub fn graph_from_clickstream(
    path: &Path,
    parser: &ParserConfig,
    mapping: &ReferrerMapping,
) -> Result<(LinkGraph, EdgeListStats)> {
    let mut p = ClickstreamParser::new(io::open_input(path)?, parser.clone());
    let mut b = GraphBuilder::new();
    for rec in p.by_ref() {
        let rec = rec?;
        if mapping.classify(&rec.referrer, &rec.rawtype) == ReferrerClass::InternalArticle {
            b.add_edge(&rec.referrer, &rec.resource);
        }
    }
    let s = p.stats();
    let stats = EdgeListStats {
        lines: s.lines,
        edges_read: s.records,
        malformed: s.malformed + s.unknown_type,
    };
    Ok((b.finish(EdgeSource::ClickstreamApprox), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Repeatedly delete nodes of degree < k until stable, for each k.
    fn brute_force_cores(n: usize, edges: &[(usize, usize)]) -> Vec<u32> {
        let mut adj = vec![std::collections::BTreeSet::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        let mut core = vec![0u32; n];
        for k in 1..=n {
            let mut alive = vec![true; n];
            loop {
                let mut changed = false;
                for v in 0..n {
                    if alive[v] && adj[v].iter().filter(|&&u| alive[u]).count() < k {
                        alive[v] = false;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            if !alive.iter().any(|&a| a) {
                break;
            }
            for v in 0..n {
                if alive[v] {
                    core[v] = k as u32;
                }
            }
        }
        core
    }

    fn cores_by_title(g: &LinkGraph) -> Vec<(String, u32)> {
        let core = kcore_decomposition(g);
        let mut v: Vec<_> = (0..g.node_count())
            .map(|i| (g.title(i as u32).to_owned(), core[i]))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn dedup_and_self_loops() {
        let g = build_graph([("A", "B"), ("A", "B"), ("A", "A")]);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(0, 1));
        assert!(!g.has_edge(1, 0));
    }

    #[test]
    fn empty_graph() {
        let g = build_graph(std::iter::empty());
        assert_eq!((g.node_count(), g.edge_count()), (0, 0));
        assert!(kcore_decomposition(&g).is_empty());
        assert!(network_features(&g).is_empty());
    }

    #[test]
    fn cycle_and_full_triangle_degrees() {
        let cycle = build_graph([("A", "B"), ("B", "C"), ("C", "A")]);
        assert!(degrees(&cycle).iter().all(|d| d.in_degree == 1 && d.out_degree == 1));
        let full = build_graph([
            ("A", "B"),
            ("B", "A"),
            ("B", "C"),
            ("C", "B"),
            ("C", "A"),
            ("A", "C"),
        ]);
        assert!(degrees(&full).iter().all(|d| d.in_degree == 2 && d.out_degree == 2));
        assert!(kcore_decomposition(&cycle).iter().all(|&c| c == 2));
        assert!(kcore_decomposition(&full).iter().all(|&c| c == 2));
    }

    #[test]
    fn star() {
        let g = build_graph((1..=5).map(|i| ("hub", ["a", "b", "c", "d", "e"][i - 1])));
        let d = degrees(&g);
        let hub = g.id("hub").unwrap() as usize;
        assert_eq!((d[hub].out_degree, d[hub].in_degree), (5, 0));
        for leaf in ["a", "b", "c", "d", "e"] {
            let l = g.id(leaf).unwrap() as usize;
            assert_eq!((d[l].in_degree, d[l].out_degree), (1, 0));
        }
        assert!(kcore_decomposition(&g).iter().all(|&c| c == 1));
    }

    #[test]
    fn degrees_match_adjacency_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(1..=100);
            let mut m = vec![vec![false; n]; n];
            let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            let mut edges = Vec::new();
            for _ in 0..rng.gen_range(0..400) {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                edges.push((names[a].as_str(), names[b].as_str()));
                if a != b {
                    m[a][b] = true;
                }
            }
            let g = build_graph(edges);
            let d = degrees(&g);
            for (i, name) in names.iter().enumerate() {
                let Some(id) = g.id(name) else { continue };
                let out = m[i].iter().filter(|&&x| x).count() as u32;
                let inn = (0..n).filter(|&r| m[r][i]).count() as u32;
                assert_eq!(d[id as usize], Degree { in_degree: inn, out_degree: out });
            }
        }
    }

    #[test]
    fn cores_match_iterative_deletion() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.gen_range(2..=60);
            let p: f64 = rng.gen_range(0.02..0.4);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in 0..n {
                    if a != b && rng.gen_bool(p / 2.0) {
                        edges.push((a, b));
                    }
                }
            }
            let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
            let mut builder = GraphBuilder::new();
            for name in &names {
                builder.intern(name);
            }
            for &(a, b) in &edges {
                builder.add_edge(&names[a], &names[b]);
            }
            let g = builder.finish(EdgeSource::LinkDump);
            assert_eq!(kcore_decomposition(&g), brute_force_cores(n, &edges));
        }
    }

    #[test]
    fn core_numbers_ignore_node_order() {
        let edges = [("a", "b"), ("b", "c"), ("c", "a"), ("c", "d"), ("d", "e")];
        let forward = build_graph(edges);
        let reversed = build_graph(edges.iter().rev().map(|&(s, t)| (t, s)));
        assert_eq!(cores_by_title(&forward), cores_by_title(&reversed));
    }

    #[test]
    fn edge_list_lenient_and_strict() {
        let text = "source\ttarget\nA\tB\nbroken\nB\tC\n";
        let p = Path::new("edges.tsv");
        let (g, s) = read_edge_list(text.as_bytes(), p, false).unwrap();
        assert_eq!((g.node_count(), g.edge_count(), s.malformed), (3, 2, 1));
        let err = read_edge_list(text.as_bytes(), p, true).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 3, .. }));
    }

    #[test]
    fn network_table_round_trip() {
        let g = build_graph([("A", "B"), ("B", "C"), ("C", "A"), ("C", "D")]);
        let rows = network_features(&g);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("network.tsv");
        io::write_file(&p, |w| write_network_tsv(w, &g, &rows)).unwrap();
        assert_eq!(read_network_tsv(&p).unwrap(), rows);
        let d = rows.iter().find(|r| r.article == "D").unwrap();
        assert_eq!((d.in_degree, d.out_degree, d.degree, d.kcore), (1, 0, 1, 1));
    }
}
