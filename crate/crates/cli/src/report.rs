//! Plot-ready bundle of earlier outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use clickroles_core::{Error, Result};

use crate::commands::begin;
use crate::run::{sha256_file, RunManifest};
use crate::Global;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directories of earlier runs.
    #[arg(long, num_args = 1..)]
    pub from: Vec<PathBuf>,
}

/// Subcommands whose CSV outputs feed the bundle.
const PRODUCERS: [&str; 6] = ["metrics", "overlap", "features", "bins", "topics", "model"];

#[derive(Debug, Serialize)]
struct IndexEntry {
    file: String,
    kind: &'static str,
    subcommand: String,
    source: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Index {
    tool: &'static str,
    version: &'static str,
    entries: Vec<IndexEntry>,
}

fn kind_of(name: &str) -> &'static str {
    let stem = name.trim_end_matches(".csv");
    [
        ("overlap_", "overlap_curve"),
        ("hist_", "histogram"),
        ("heatmap_", "heatmap"),
        ("group_shares", "group_shares"),
        ("medians_", "median_table"),
        ("topic_stats", "topic_table"),
        ("topic_ratio_", "topic_heatmap"),
        ("bins_", "binned_quartiles"),
        ("auc_report", "auc_report"),
        ("phi", "topic_word"),
        ("theta", "document_topic"),
    ]
    .into_iter()
    .find(|(p, _)| stem.starts_with(p))
    .map_or("table", |(_, k)| k)
}

fn nothing_to_report() -> Error {
    Error::Data(format!(
        "nothing to report; run one of {} with --out <DIR> first and pass the directories with --from",
        PRODUCERS.join(", ")
    ))
}

pub fn report(a: ReportArgs, g: &Global) -> Result<()> {
    if a.from.is_empty() {
        return Err(nothing_to_report());
    }
    // Check every source before touching the bundle directory.
    let mut sources: BTreeMap<String, (PathBuf, Vec<String>)> = BTreeMap::new();
    for dir in &a.from {
        let manifest = RunManifest::read(dir)?.ok_or_else(|| {
            Error::Data(format!(
                "{} has no run manifest; run one of {} with --out {} first",
                dir.display(),
                PRODUCERS.join(", "),
                dir.display()
            ))
        })?;
        if !PRODUCERS.contains(&manifest.subcommand.as_str()) {
            continue;
        }
        let mut csvs = Vec::new();
        for f in &manifest.outputs {
            if !f.ends_with(".csv") {
                continue;
            }
            if !dir.join(f).is_file() {
                return Err(Error::Data(format!(
                    "{} lists {f} but it is missing; rerun `{}`",
                    dir.display(),
                    manifest.subcommand
                )));
            }
            csvs.push(f.clone());
        }
        if sources
            .insert(manifest.subcommand.clone(), (dir.clone(), csvs))
            .is_some()
        {
            return Err(Error::Usage(format!(
                "more than one `{}` directory given to --from",
                manifest.subcommand
            )));
        }
    }
    if sources.values().all(|(_, f)| f.is_empty()) {
        return Err(nothing_to_report());
    }

    let (mut run, _) = begin("report", g)?;
    let mut entries = Vec::new();
    for (sub, (dir, files)) in &sources {
        for f in files {
            let src = dir.join(f);
            run.input(&src)?;
            let bytes = std::fs::read(&src).map_err(|e| Error::io(&src, e))?;
            let name = format!("{sub}/{f}");
            run.write(&name, |w| w.write_all(&bytes))?;
            entries.push(IndexEntry {
                kind: kind_of(f),
                sha256: sha256_file(&run.out.join(&name))?.0,
                file: name,
                subcommand: sub.clone(),
                source: rel(dir, f),
            });
        }
    }
    let index = Index {
        tool: "clickroles",
        version: env!("CARGO_PKG_VERSION"),
        entries,
    };
    let json = serde_json::to_string_pretty(&index).expect("index serializes");
    run.write_text("index.json", &format!("{json}\n"))?;
    run.finish()?;
    Ok(())
}

fn rel(dir: &Path, f: &str) -> String {
    dir.join(f).display().to_string()
}
