use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const N: usize = 200;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clickroles"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn title(i: usize) -> String {
    format!("Article_{:03}", i % N)
}

/// Writes a small synthetic corpus and returns the paths by name.
fn fixtures(dir: &Path) -> BTreeMap<&'static str, PathBuf> {
    let mut click = String::from("prev\tcurr\ttype\tn\n");
    for i in 0..N {
        let t = title(i);
        writeln!(click, "other-search\t{t}\texternal\t{}", 10 + (i * 37) % 400).unwrap();
        writeln!(click, "other-empty\t{t}\texternal\t{}", 10 + (i * 13) % 50).unwrap();
        writeln!(click, "{}\t{t}\tlink\t{}", title(i + N - 1), 10 + (i * 53) % 300).unwrap();
        if i % 3 == 0 {
            writeln!(click, "{t}\t{}\tlink\t{}", title(i * 7 + 3), 10 + (i * 29) % 600).unwrap();
        }
    }
    click.push_str("broken line\n");

    let mut edges = String::new();
    for i in 0..N {
        for j in [i + 1, i + 7, i * 3] {
            if j % N != i {
                writeln!(edges, "{}\t{}", title(i), title(j)).unwrap();
            }
        }
    }

    let mut content = String::from("article\tsections\tfigures\tlists\ttables\trevisions\teditors\tage\tsize\n");
    for i in 0..N {
        writeln!(
            content,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            title(i),
            i % 17,
            i % 5,
            i % 4,
            i % 3,
            (i * 11) % 500,
            (i * 7) % 90,
            (i * 19) % 4000,
            1000 + (i * 131) % 50000
        )
        .unwrap();
    }

    let mut docs = String::new();
    let a = ["river", "mountain", "valley", "lake", "forest"];
    let b = ["guitar", "album", "singer", "concert", "band"];
    for i in 0..N {
        let words = if i % 2 == 0 { &a } else { &b };
        let text: Vec<&str> = (0..30).map(|k| words[(i + k * 3) % 5]).collect();
        writeln!(docs, "{}\t{}", title(i), text.join(" ")).unwrap();
    }

    let mut paths = BTreeMap::new();
    for (name, body) in [
        ("clickstream", click),
        ("edges", edges),
        ("content", content),
        ("docs", docs),
    ] {
        let path = dir.join(format!("{name}.tsv"));
        std::fs::write(&path, body).unwrap();
        paths.insert(name, path);
    }
    paths
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every file under `dir`, relative path to bytes. Manifests lose their
/// timestamp and input locations, keeping the digests.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            let mut bytes = std::fs::read(&path).unwrap();
            if rel.ends_with("manifest.json") {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("created_unix");
                for input in v["inputs"].as_array_mut().unwrap() {
                    input.as_object_mut().unwrap().remove("path");
                }
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.insert(rel, bytes);
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn assert_manifest_complete(dir: &Path) {
    let m = manifest(dir);
    let listed: Vec<String> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    for file in snapshot(dir).keys() {
        if file != "manifest.json" {
            assert!(listed.contains(file), "{file} missing from manifest of {}", dir.display());
        }
    }
}

/// Runs every analysis step; returns the output directories by subcommand.
fn pipeline(root: &Path, inputs: &BTreeMap<&str, PathBuf>, threads: &str) -> BTreeMap<&'static str, PathBuf> {
    let d = |n: &str| root.join(n);
    let t = ["--threads", threads, "--seed", "3"];
    let with = |args: &[&str]| {
        let mut v: Vec<&str> = args.to_vec();
        v.extend_from_slice(&t);
        ok(&v);
    };
    with(&["ingest", "--input", p(&inputs["clickstream"]), "--out", p(&d("ingest"))]);
    let traffic = d("ingest").join("traffic.tsv");
    with(&["metrics", "--traffic", p(&traffic), "--out", p(&d("metrics"))]);
    with(&["overlap", "--traffic", p(&traffic), "--out", p(&d("overlap"))]);
    with(&["graph", "--edges", p(&inputs["edges"]), "--out", p(&d("graph"))]);
    with(&[
        "topics", "--docs", p(&inputs["docs"]), "--topics", "2", "--iterations", "50", "--out",
        p(&d("topics")),
    ]);
    with(&[
        "features",
        "--metrics",
        p(&d("metrics").join("metrics.tsv")),
        "--network",
        p(&d("graph").join("network.tsv")),
        "--content",
        p(&inputs["content"]),
        "--topics",
        p(&d("topics").join("topics.tsv")),
        "--grid",
        "5",
        "--out",
        p(&d("features")),
    ]);
    let joined = d("features").join("features.tsv");
    with(&["bins", "--features", p(&joined), "--bins", "10", "--out", p(&d("bins"))]);
    with(&[
        "model", "--features", p(&joined), "--topics", "2", "--n-trees", "15", "--out",
        p(&d("model")),
    ]);
    ["ingest", "metrics", "overlap", "graph", "topics", "features", "bins", "model"]
        .into_iter()
        .map(|s| (s, d(s)))
        .collect()
}

#[test]
fn metrics_on_three_rows() {
    let tmp = TempDir::new().unwrap();
    let traffic = tmp.path().join("t.tsv");
    std::fs::write(
        &traffic,
        "article\tin_se\tin_nav\tout_nav\ttotal_views\nA\t80\t20\t10\t100\nB\t10\t90\t95\t100\nC\t50\t50\t200\t100\n",
    )
    .unwrap();
    let out = tmp.path().join("m");
    ok(&["metrics", "--traffic", p(&traffic), "--out", p(&out)]);
    let table = std::fs::read_to_string(out.join("metrics.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "article\tsearchshare\tresistance\ttotal_views\tquadrant");
    assert!(lines[3].starts_with("C\t0.5\t0\t100\t"));
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "metrics");
    assert_eq!(m["inputs"][0]["bytes"], std::fs::metadata(&traffic).unwrap().len());
    assert_manifest_complete(&out);
}

#[test]
fn sample_is_seeded() {
    let tmp = TempDir::new().unwrap();
    let titles = tmp.path().join("titles.tsv");
    let mut body = String::from("article\n");
    for i in 0..60_000 {
        writeln!(body, "Page_{i}").unwrap();
    }
    std::fs::write(&titles, body).unwrap();
    let draw = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&["sample", "--input", p(&titles), "--n", "50000", "--seed", seed, "--out", p(&out)]);
        std::fs::read_to_string(out.join("sample.txt")).unwrap()
    };
    let a = draw("a", "7");
    assert_eq!(a.lines().count(), 50_000);
    assert_eq!(a, draw("b", "7"));
    assert_ne!(a, draw("c", "8"));

    let cfg = tmp.path().join("run.conf");
    std::fs::write(&cfg, "seed=7\nn=50000\n").unwrap();
    let out = tmp.path().join("d");
    ok(&["sample", "--input", p(&titles), "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(a, std::fs::read_to_string(out.join("sample.txt")).unwrap());
    let out = tmp.path().join("e");
    ok(&["sample", "--input", p(&titles), "--config", p(&cfg), "--seed", "8", "--out", p(&out)]);
    assert_eq!(draw("c2", "8"), std::fs::read_to_string(out.join("sample.txt")).unwrap());
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["metrics", "--bogus"]).status.code(), Some(2));
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.tsv");
    let out = run(&["metrics", "--traffic", p(&missing), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.tsv"));
    let out = run(&["overlap", "--traffic", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn strict_ingest_rejects_malformed_line() {
    let tmp = TempDir::new().unwrap();
    let inputs = fixtures(tmp.path());
    let o = tmp.path().join("i");
    ok(&["ingest", "--input", p(&inputs["clickstream"]), "--out", p(&o)]);
    let stats = std::fs::read_to_string(o.join("ingest_stats.txt")).unwrap();
    assert!(stats.contains("malformed=1\n"), "{stats}");
    assert!(stats.contains("header_skipped=true\n"));
    let out = run(&["ingest", "--strict", "--input", p(&inputs["clickstream"]), "--out", p(&tmp.path().join("s"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn full_pipeline_and_report() {
    let tmp = TempDir::new().unwrap();
    let inputs = fixtures(tmp.path());
    let dirs = pipeline(&tmp.path().join("run"), &inputs, "2");
    for d in dirs.values() {
        assert_manifest_complete(d);
    }
    let auc = std::fs::read_to_string(dirs["model"].join("auc_report.csv")).unwrap();
    assert!(auc.starts_with("task,feature_group,fold,auc\n"));
    assert_eq!(auc.lines().filter(|l| l.contains(",mean,")).count(), 8);

    let bundle = tmp.path().join("bundle");
    let from: Vec<&str> = dirs.values().map(|d| p(d)).collect();
    let mut args = vec!["report", "--out", p(&bundle), "--from"];
    args.extend(&from);
    ok(&args);
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(bundle.join("index.json")).unwrap()).unwrap();
    let kinds: Vec<&str> = index["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["kind"].as_str().unwrap())
        .collect();
    for k in [
        "overlap_curve",
        "histogram",
        "heatmap",
        "median_table",
        "auc_report",
        "binned_quartiles",
        "topic_heatmap",
        "group_shares",
    ] {
        assert!(kinds.contains(&k), "bundle lacks {k}");
    }
    assert!(bundle.join("model/auc_report.csv").is_file());
    assert!(bundle.join("overlap/overlap_in_se_total.csv").is_file());
    assert_manifest_complete(&bundle);

    let first = snapshot(&bundle);
    ok(&args);
    assert_eq!(first, snapshot(&bundle));

    // the trained model files load back
    let model = std::fs::read_to_string(dirs["model"].join("model_resistance_all.txt")).unwrap();
    assert!(model.starts_with("clickroles-gbdt\t1\n"));
}

#[test]
fn report_needs_inputs() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["report", "--out", p(&tmp.path().join("b"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run one of"));

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = run(&["report", "--out", p(&tmp.path().join("b")), "--from", p(&empty)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metrics"));
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let tmp = TempDir::new().unwrap();
    let inputs = fixtures(tmp.path());
    let one = pipeline(&tmp.path().join("one"), &inputs, "1");
    let four = pipeline(&tmp.path().join("four"), &inputs, "4");
    for (sub, d) in &one {
        let (a, b) = (snapshot(d), snapshot(&four[sub]));
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
        for (file, bytes) in &a {
            assert!(
                bytes == &b[file],
                "{sub}/{file} differs across thread counts:\n{}\n---\n{}",
                String::from_utf8_lossy(bytes),
                String::from_utf8_lossy(&b[file])
            );
        }
    }
}

#[test]
fn output_dirs_are_not_shared_between_subcommands() {
    let tmp = TempDir::new().unwrap();
    let inputs = fixtures(tmp.path());
    let o = tmp.path().join("shared");
    ok(&["graph", "--edges", p(&inputs["edges"]), "--out", p(&o)]);
    let out = run(&["ingest", "--input", p(&inputs["clickstream"]), "--out", p(&o)]);
    assert_eq!(out.status.code(), Some(1));
    ok(&["graph", "--edges", p(&inputs["edges"]), "--out", p(&o)]);
}
