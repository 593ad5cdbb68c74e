use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hgcae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgcae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two loosely linked 12-node communities with 4-dimensional attributes.
fn write_dataset(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let n = 24;
    let mut edges = String::new();
    let mut attrs = String::new();
    let mut labels = String::new();
    for i in 0..n {
        for j in i + 1..n {
            let same = i / 12 == j / 12;
            if (same && (i * 7 + j * 3) % 4 != 0) || (!same && (i + j) % 23 == 0) {
                edges.push_str(&format!("{i} {j}\n"));
            }
        }
        let c = i / 12;
        let row: Vec<String> = (0..4)
            .map(|d| {
                format!(
                    "{}",
                    f64::from(u8::from(d / 2 == c)) + 0.01 * (i * d) as f64
                )
            })
            .collect();
        attrs.push_str(&(row.join(",") + "\n"));
        labels.push_str(&format!("{c}\n"));
    }
    let e = dir.join("edges.txt");
    let x = dir.join("attrs.csv");
    let l = dir.join("labels.txt");
    std::fs::write(&e, edges).unwrap();
    std::fs::write(&x, attrs).unwrap();
    std::fs::write(&l, labels).unwrap();
    (e, x, l)
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn run_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(&dir.join("run.json"))).unwrap()
}

#[test]
fn split_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (e, _, _) = write_dataset(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = hgcae(&["split", "--edges", s(&e), "--seed", "7", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "train.txt",
        "val.txt",
        "test.txt",
        "train_neg.txt",
        "val_neg.txt",
        "test_neg.txt",
    ] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let c = dir.path().join("c");
    hgcae(&["split", "--edges", s(&e), "--seed", "8", "--out", s(&c)]);
    assert_ne!(read(&a.join("test.txt")), read(&c.join("test.txt")));
}

#[test]
fn missing_checkpoint_fails_clearly() {
    let dir = tempfile::tempdir().unwrap();
    let (e, _, _) = write_dataset(dir.path());
    let missing = dir.path().join("nope.json");
    let o = hgcae(&[
        "eval-lp",
        "--checkpoint",
        s(&missing),
        "--edges",
        s(&e),
        "--split",
        s(dir.path()),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("checkpoint") && err.contains("nope.json"),
        "{err}"
    );
}

#[test]
fn invalid_values_are_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let (e, x, _) = write_dataset(dir.path());
    let out = dir.path().join("o");
    let o = hgcae(&[
        "train",
        "--edges",
        s(&e),
        "--attrs",
        s(&x),
        "--lambda",
        "-1",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
    assert!(!out.join("checkpoint.json").exists());

    let o = hgcae(&[
        "train",
        "--edges",
        s(&e),
        "--fixed-k",
        "-0.5",
        "--epochs",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epochs"));
    let o = hgcae(&[
        "train",
        "--edges",
        s(&e),
        "--learning-rate",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(!o.status.success());
    let o = hgcae(&["train", "--attrs", s(&x), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--edges"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (e, x, _) = write_dataset(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "lr = 0.01\nepochs = 2\nmanifold = hyperboloid\n").unwrap();
    let out = dir.path().join("o");
    let o = hgcae(&[
        "train",
        "--config",
        s(&cfg),
        "--edges",
        s(&e),
        "--attrs",
        s(&x),
        "--lr",
        "0.001",
        "--dims",
        "8,3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = run_json(&out);
    assert_eq!(r["settings"]["lr"], "0.001");
    assert_eq!(r["sources"]["lr"], "flag");
    assert_eq!(r["settings"]["epochs"], "2");
    assert_eq!(r["sources"]["epochs"], "file");
    assert_eq!(r["sources"]["patience"], "default");
    let ckpt: serde_json::Value =
        serde_json::from_str(&read(&out.join("checkpoint.json"))).unwrap();
    assert_eq!(ckpt["config"]["manifold"], "hyperboloid");
    assert_eq!(read(&out.join("trace.csv")).lines().count(), 3);
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (e, x, l) = write_dataset(dir.path());
    let run = dir.path().join("run");
    let o = hgcae(&[
        "train",
        "--edges",
        s(&e),
        "--attrs",
        s(&x),
        "--dims",
        "8,4",
        "--epochs",
        "15",
        "--seed",
        "1",
        "--out",
        s(&run),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = run.join("checkpoint.json");
    let split = run.join("split");
    assert!(split.join("test.txt").exists());

    let lp = dir.path().join("lp");
    let o = hgcae(&[
        "eval-lp",
        "--checkpoint",
        s(&ckpt),
        "--edges",
        s(&e),
        "--attrs",
        s(&x),
        "--split",
        s(&split),
        "--out",
        s(&lp),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&read(&lp.join("link_prediction.json"))).unwrap();
    let auc = m["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));

    let cl = dir.path().join("cl");
    let o = hgcae(&[
        "eval-cluster",
        "--checkpoint",
        s(&ckpt),
        "--edges",
        s(&e),
        "--attrs",
        s(&x),
        "--labels",
        s(&l),
        "--out",
        s(&cl),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&cl.join("clustering.txt")).contains("nmi: "));
    assert_eq!(read(&cl.join("clusters.txt")).lines().count(), 24);

    let hd = dir.path().join("hdo");
    let o = hgcae(&[
        "hdo",
        "--checkpoint",
        s(&ckpt),
        "--edges",
        s(&e),
        "--attrs",
        s(&x),
        "--split",
        s(&split),
        "--percent",
        "25",
        "--bins",
        "5",
        "--out",
        s(&hd),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hist = read(&hd.join("hdo_histogram.csv"));
    assert_eq!(hist.lines().next(), Some("bin_lo,bin_hi,count"));
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 24);
    for mode in ["high", "middle", "low"] {
        assert_eq!(read(&hd.join(format!("hdo_{mode}.txt"))).lines().count(), 6);
    }
    let emb = read(&hd.join("embeddings.csv"));
    assert_eq!(
        emb.lines().next(),
        Some("node,dim_0,dim_1,dim_2,dim_3,curvature,hdo")
    );
    assert_eq!(emb.lines().count(), 25);

    let em = dir.path().join("embed");
    let o = hgcae(&[
        "embed",
        "--checkpoint",
        s(&ckpt),
        "--edges",
        s(&e),
        "--attrs",
        s(&x),
        "--split",
        s(&split),
        "--out",
        s(&em),
    ]);
    assert!(o.status.success());
    assert_eq!(read(&em.join("embeddings.csv")), emb);

    let wrong = dir.path().join("wrong");
    let o = hgcae(&[
        "eval-lp",
        "--checkpoint",
        s(&ckpt),
        "--edges",
        s(&e),
        "--split",
        s(&split),
        "--out",
        s(&wrong),
    ]);
    assert!(
        !o.status.success(),
        "identity features do not fit a 4-column checkpoint"
    );
}

#[test]
fn knn_graph_writes_edges() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.csv");
    std::fs::write(&f, "0,0\n0,1\n5,5\n5,6\n").unwrap();
    let out = dir.path().join("o");
    let o = hgcae(&[
        "knn-graph",
        "--features",
        s(&f),
        "--k",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("edges.txt")), "0 1\n2 3\n");
    assert_eq!(run_json(&out)["settings"]["k"], "1");
}

#[test]
fn ablate_reports_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let (e, x, _) = write_dataset(dir.path());
    let out = dir.path().join("o");
    let o = hgcae(&[
        "ablate",
        "--edges",
        s(&e),
        "--attrs",
        s(&x),
        "--dims",
        "8,4",
        "--epochs",
        "3",
        "--seeds",
        "2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read(&out.join("ablation.csv"));
    let names: Vec<&str> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "baseline-like",
            "+recX",
            "+hyperbolic",
            "+attention",
            "full-fixed-k",
            "full"
        ]
    );
    assert_eq!(
        read(&out.join("ablation_runs.csv")).lines().count(),
        1 + 6 * 2
    );
}
