//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Token-topic assignments are resampled one token at a time from
//!
//! ```text
//! p(z = k) ∝ (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)
//! ```
//!
//! with the token's own assignment removed from the counts. Topic-word and
//! document-topic distributions are point estimates from the final state.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io;

/// Lowercased alphabetic runs of at least two characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| w.chars().nth(1).is_some())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, Default)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// One word per line; case-insensitive, `#` comments allowed.
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub article: String,
    /// `(token id, count)` sorted by token id; counts are positive.
    pub counts: Vec<(u32, u32)>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.counts.iter().map(|&(_, c)| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Token strings by id, in order of first appearance.
    pub vocab: Vec<String>,
    pub docs: Vec<Document>,
}

impl Corpus {
    pub fn token_count(&self) -> usize {
        self.docs.iter().map(Document::len).sum()
    }

    /// Articles whose text had no tokens left after filtering.
    pub fn empty_documents(&self) -> Vec<&str> {
        self.docs
            .iter()
            .filter(|d| d.is_empty())
            .map(|d| d.article.as_str())
            .collect()
    }
}

/// Builds bag-of-words vectors. Documents that end up empty are kept (see
/// [`Corpus::empty_documents`]).
pub fn build_corpus<I, A, T>(texts: I, stop: &StopWords) -> Result<Corpus>
where
    I: IntoIterator<Item = (A, T)>,
    A: Into<String>,
    T: AsRef<str>,
{
    let mut vocab = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut docs = Vec::new();
    for (article, text) in texts {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for tok in tokenize(text.as_ref()) {
            if stop.contains(&tok) {
                continue;
            }
            let id = match index.get(&tok) {
                Some(&id) => id,
                None => {
                    let id = vocab.len() as u32;
                    vocab.push(tok.clone());
                    index.insert(tok, id);
                    id
                }
            };
            *counts.entry(id).or_default() += 1;
        }
        let mut counts: Vec<(u32, u32)> = counts.into_iter().collect();
        counts.sort_unstable();
        docs.push(Document {
            article: article.into(),
            counts,
        });
    }
    if docs.is_empty() || vocab.is_empty() {
        return Err(Error::domain("empty corpus: no documents with usable tokens"));
    }
    Ok(Corpus { vocab, docs })
}

/// Regular files of a document directory, sorted by name.
pub fn document_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads `article<TAB>text` lines, or one document per file when `path` is
/// a directory (the article is the file name without its extension).
pub fn read_documents(path: &Path) -> Result<Vec<(String, String)>> {
    if path.is_dir() {
        return document_files(path)?
            .into_iter()
            .map(|f| {
                let mut text = String::new();
                io::open_input(&f)?
                    .read_to_string(&mut text)
                    .map_err(|e| Error::io(&f, e))?;
                let stem = f.file_stem().unwrap_or_default().to_string_lossy();
                let article = stem.strip_suffix(".txt").unwrap_or(&stem).to_string();
                Ok((article, text))
            })
            .collect();
    }
    let mut out = Vec::new();
    for item in io::numbered_lines(io::open_input(path)?, path) {
        let (line_no, line) = item?;
        if line.is_empty() {
            continue;
        }
        let (article, text) = line.split_once('\t').ok_or_else(|| Error::Malformed {
            line: line_no,
            reason: format!("{}: expected article<TAB>text", path.display()),
        })?;
        out.push((article.to_owned(), text.to_owned()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaConfig {
    pub topics: usize,
    /// Document-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: 20,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

/// Count totals, for conservation checks between sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountTotals {
    pub tokens: u64,
    pub doc_topic: u64,
    pub topic_word: u64,
    pub topic: u64,
}

/// Sampler state. Usually driven through [`fit_lda`]; exposed so callers
/// can inspect the counts between sweeps.
pub struct GibbsSampler<'c> {
    corpus: &'c Corpus,
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    /// Token word ids, documents laid end to end.
    words: Vec<u32>,
    doc_start: Vec<usize>,
    z: Vec<u32>,
    n_dk: Vec<u32>,
    /// Word-major: `n_wk[w * k + t]`.
    n_wk: Vec<u32>,
    n_k: Vec<u32>,
    probs: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'c> GibbsSampler<'c> {
    pub fn new(corpus: &'c Corpus, cfg: &LdaConfig) -> Result<Self> {
        let k = cfg.topics;
        let v = corpus.vocab.len();
        if k < 2 {
            return Err(Error::domain("need at least two topics"));
        }
        if k > v {
            return Err(Error::domain(format!(
                "{k} topics exceed vocabulary size {v}"
            )));
        }
        if cfg.iterations == 0 {
            return Err(Error::domain("need at least one iteration"));
        }
        if !(cfg.alpha() > 0.0 && cfg.beta > 0.0) {
            return Err(Error::domain("alpha and beta must be positive"));
        }
        let mut words = Vec::with_capacity(corpus.token_count());
        let mut doc_start = Vec::with_capacity(corpus.docs.len() + 1);
        for d in &corpus.docs {
            doc_start.push(words.len());
            for &(w, c) in &d.counts {
                words.extend(std::iter::repeat(w).take(c as usize));
            }
        }
        doc_start.push(words.len());

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut s = GibbsSampler {
            corpus,
            k,
            v,
            alpha: cfg.alpha(),
            beta: cfg.beta,
            seed: cfg.seed,
            z: Vec::with_capacity(words.len()),
            n_dk: vec![0; corpus.docs.len() * k],
            n_wk: vec![0; v * k],
            n_k: vec![0; k],
            probs: vec![0.0; k],
            words,
            doc_start,
            rng: ChaCha8Rng::seed_from_u64(0),
        };
        for d in 0..corpus.docs.len() {
            for i in s.doc_start[d]..s.doc_start[d + 1] {
                let t = rng.gen_range(0..k) as u32;
                s.z.push(t);
                s.add(d, s.words[i] as usize, t as usize);
            }
        }
        s.rng = rng;
        Ok(s)
    }

    fn add(&mut self, d: usize, w: usize, t: usize) {
        self.n_dk[d * self.k + t] += 1;
        self.n_wk[w * self.k + t] += 1;
        self.n_k[t] += 1;
    }

    fn remove(&mut self, d: usize, w: usize, t: usize) {
        self.n_dk[d * self.k + t] -= 1;
        self.n_wk[w * self.k + t] -= 1;
        self.n_k[t] -= 1;
    }

    /// Resamples every token once, documents in order.
    pub fn sweep(&mut self) {
        let k = self.k;
        let vbeta = self.v as f64 * self.beta;
        for d in 0..self.doc_start.len() - 1 {
            for i in self.doc_start[d]..self.doc_start[d + 1] {
                let w = self.words[i] as usize;
                let old = self.z[i] as usize;
                self.remove(d, w, old);

                let dk = &self.n_dk[d * k..(d + 1) * k];
                let wk = &self.n_wk[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    total += (dk[t] as f64 + self.alpha) * (wk[t] as f64 + self.beta)
                        / (self.n_k[t] as f64 + vbeta);
                    self.probs[t] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let new = self.probs.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.z[i] = new as u32;
                self.add(d, w, new);
            }
        }
    }

    pub fn totals(&self) -> CountTotals {
        let sum = |v: &[u32]| v.iter().map(|&x| x as u64).sum();
        CountTotals {
            tokens: self.words.len() as u64,
            doc_topic: sum(&self.n_dk),
            topic_word: sum(&self.n_wk),
            topic: sum(&self.n_k),
        }
    }

    /// Recounts all matrices from the assignments and compares.
    pub fn counts_consistent(&self) -> bool {
        let mut dk = vec![0u32; self.n_dk.len()];
        let mut wk = vec![0u32; self.n_wk.len()];
        let mut nk = vec![0u32; self.k];
        for d in 0..self.doc_start.len() - 1 {
            for i in self.doc_start[d]..self.doc_start[d + 1] {
                let t = self.z[i] as usize;
                dk[d * self.k + t] += 1;
                wk[self.words[i] as usize * self.k + t] += 1;
                nk[t] += 1;
            }
        }
        dk == self.n_dk && wk == self.n_wk && nk == self.n_k
    }

    pub fn into_model(self) -> TopicModel {
        let (k, v) = (self.k, self.v);
        let vbeta = v as f64 * self.beta;
        let mut phi = vec![0.0; k * v];
        for t in 0..k {
            let denom = self.n_k[t] as f64 + vbeta;
            for w in 0..v {
                phi[t * v + w] = (self.n_wk[w * k + t] as f64 + self.beta) / denom;
            }
        }
        let kalpha = k as f64 * self.alpha;
        let n_docs = self.doc_start.len() - 1;
        let mut theta = vec![0.0; n_docs * k];
        for d in 0..n_docs {
            let len = (self.doc_start[d + 1] - self.doc_start[d]) as f64;
            for t in 0..k {
                theta[d * k + t] = (self.n_dk[d * k + t] as f64 + self.alpha) / (len + kalpha);
            }
        }
        TopicModel {
            topics: k,
            alpha: self.alpha,
            beta: self.beta,
            seed: self.seed,
            vocab: self.corpus.vocab.clone(),
            articles: self.corpus.docs.iter().map(|d| d.article.clone()).collect(),
            phi,
            theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub vocab: Vec<String>,
    pub articles: Vec<String>,
    /// Topic-word distributions, `topics x vocab` row-major.
    pub phi: Vec<f64>,
    /// Document-topic distributions, `docs x topics` row-major.
    pub theta: Vec<f64>,
}

pub fn fit_lda(corpus: &Corpus, cfg: &LdaConfig) -> Result<TopicModel> {
    let mut s = GibbsSampler::new(corpus, cfg)?;
    for _ in 0..cfg.iterations {
        s.sweep();
    }
    Ok(s.into_model())
}

/// Index of the largest weight, lowest index on ties.
pub fn dominant_topic(theta_row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in theta_row.iter().enumerate() {
        if w > theta_row[best] {
            best = i;
        }
    }
    best
}

impl TopicModel {
    pub fn phi_row(&self, topic: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.phi[topic * v..(topic + 1) * v]
    }

    pub fn theta_row(&self, doc: usize) -> &[f64] {
        &self.theta[doc * self.topics..(doc + 1) * self.topics]
    }

    pub fn dominant_topics(&self) -> Vec<usize> {
        (0..self.articles.len())
            .map(|d| dominant_topic(self.theta_row(d)))
            .collect()
    }

    /// The `n` most probable words of a topic, ties broken by token id.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<&str>> {
        if topic >= self.topics {
            return Err(Error::domain(format!("no topic {topic}")));
        }
        if n > self.vocab.len() {
            return Err(Error::domain(format!(
                "asked for {n} words from a vocabulary of {}",
                self.vocab.len()
            )));
        }
        let row = self.phi_row(topic);
        let mut ids: Vec<usize> = (0..row.len()).collect();
        ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        Ok(ids[..n].iter().map(|&i| self.vocab[i].as_str()).collect())
    }

    /// Estimates the topic mixture of an unseen document by Gibbs sampling
    /// its assignments against the fitted, frozen topic-word distributions.
    /// Tokens are ids into this model's vocabulary.
    pub fn fold_in(&self, doc: &[(u32, u32)], sweeps: usize, seed: u64) -> Vec<f64> {
        let k = self.topics;
        let words: Vec<usize> = doc
            .iter()
            .flat_map(|&(w, c)| std::iter::repeat(w as usize).take(c as usize))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n_k = vec![0u32; k];
        let mut z: Vec<usize> = words
            .iter()
            .map(|_| {
                let t = rng.gen_range(0..k);
                n_k[t] += 1;
                t
            })
            .collect();
        let mut probs = vec![0.0; k];
        for _ in 0..sweeps {
            for (i, &w) in words.iter().enumerate() {
                n_k[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (n_k[t] as f64 + self.alpha) * self.phi[t * self.vocab.len() + w];
                    probs[t] = total;
                }
                let u = rng.gen::<f64>() * total;
                z[i] = probs.iter().position(|&c| u < c).unwrap_or(k - 1);
                n_k[z[i]] += 1;
            }
        }
        let denom = words.len() as f64 + k as f64 * self.alpha;
        n_k.iter().map(|&c| (c as f64 + self.alpha) / denom).collect()
    }

    /// `article, topic_id, weight` rows, weight being the dominant topic's
    /// share.
    pub fn write_assignments(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "article\ttopic_id\tweight")?;
        for (d, a) in self.articles.iter().enumerate() {
            let row = self.theta_row(d);
            let t = dominant_topic(row);
            writeln!(out, "{a}\t{t}\t{}", row[t])?;
        }
        Ok(())
    }

    pub fn write_phi_csv(&self, out: &mut dyn Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["topic".to_owned()];
        header.extend(self.vocab.iter().cloned());
        w.write_record(&header)?;
        for t in 0..self.topics {
            let mut rec = vec![t.to_string()];
            rec.extend(self.phi_row(t).iter().map(|p| p.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_theta_csv(&self, out: &mut dyn Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["article".to_owned()];
        header.extend((0..self.topics).map(|t| format!("topic{t}")));
        w.write_record(&header)?;
        for (d, a) in self.articles.iter().enumerate() {
            let mut rec = vec![a.clone()];
            rec.extend(self.theta_row(d).iter().map(|p| p.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_top_words(&self, out: &mut dyn Write, n: usize) -> std::io::Result<()> {
        let n = n.min(self.vocab.len());
        for t in 0..self.topics {
            let words = self.top_words(t, n).expect("n clamped to vocabulary");
            writeln!(out, "topic {t}: {}", words.join(" "))?;
        }
        Ok(())
    }
}

/// Reads a theta matrix written by [`TopicModel::write_theta_csv`].
pub fn read_theta_csv(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(io::open_input(path)?);
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let ctx = format!("{} row {}", path.display(), i + 1);
        let weights = rec
            .iter()
            .skip(1)
            .map(|f| io::parse_field::<f64>(f, "theta", &ctx))
            .collect::<Result<Vec<_>>>()?;
        let article = rec.get(0).unwrap_or_default().to_owned();
        if out.insert(article.clone(), weights).is_some() {
            return Err(Error::DuplicateKey {
                table: path.display().to_string(),
                key: article,
            });
        }
    }
    Ok(out)
}
