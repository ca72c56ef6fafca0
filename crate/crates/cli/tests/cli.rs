//! End-to-end exercise of every subcommand against a small generated corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sc2t() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sc2t"))
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Fixture {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Fixture { dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn small_train_args(corpus: &Path, out: &Path) -> Vec<String> {
    [
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
        "--epochs",
        "2",
        "--batch",
        "64",
        "--ctx-dim",
        "8",
        "--char-dim",
        "8",
        "--token-len",
        "8",
        "--h-window",
        "5",
        "--v-window",
        "3",
        "--filters",
        "8",
        "--char-fc",
        "4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn build_fixture(f: &Fixture) {
    let csv = f.path("retail.csv");
    ok(&sc2t()
        .args(["gen-data", "--out", csv.to_str().unwrap(), "--invoices", "12", "--seed", "3"])
        .output()
        .unwrap());
    ok(&sc2t()
        .args([
            "synth",
            "--csv",
            csv.to_str().unwrap(),
            "--out",
            f.path("corpus").to_str().unwrap(),
        ])
        .output()
        .unwrap());
    ok(&sc2t()
        .args(small_train_args(&f.path("corpus"), &f.path("run")))
        .output()
        .unwrap());
}

#[test]
fn full_pipeline_runs() {
    let f = Fixture::new();
    build_fixture(&f);
    assert!(f.path("corpus/labels.tsv").exists());
    assert!(f.path("run/model.bin").exists());
    assert!(f.path("run/train_report.txt").exists());
    let report = std::fs::read_to_string(f.path("run/train_report.txt")).unwrap();
    assert!(report.contains("epoch_loss_2"));
    assert!(!report.contains("wall"), "report must not embed timings");

    // disrupt
    ok(&sc2t()
        .args([
            "disrupt",
            "--corpus",
            f.path("corpus").to_str().unwrap(),
            "--out",
            f.path("corrupted").to_str().unwrap(),
            "--del",
            "0.3",
            "--cr",
            "0.1",
            "--seed",
            "9",
        ])
        .output()
        .unwrap());
    assert!(f.path("corrupted/labels.tsv").exists());

    // embed, NoK and K
    ok(&sc2t()
        .args([
            "embed",
            "--corpus",
            f.path("corpus").to_str().unwrap(),
            "--model",
            f.path("run/model.bin").to_str().unwrap(),
            "--out",
            f.path("emb.tsv").to_str().unwrap(),
        ])
        .output()
        .unwrap());
    let emb = std::fs::read_to_string(f.path("emb.tsv")).unwrap();
    let first = emb.lines().next().unwrap();
    assert_eq!(first.split('\t').count(), 4 + 16); // meta + ch_e + s_e
    ok(&sc2t()
        .args([
            "embed",
            "--corpus",
            f.path("corpus").to_str().unwrap(),
            "--model",
            f.path("run/model.bin").to_str().unwrap(),
            "--out",
            f.path("emb_k.tsv").to_str().unwrap(),
            "--k",
            "0.5",
        ])
        .output()
        .unwrap());

    // cluster tokens with ground-truth labels attached
    ok(&sc2t()
        .args([
            "cluster",
            "--embeddings",
            f.path("emb.tsv").to_str().unwrap(),
            "--clusters",
            "8",
            "--seed",
            "1",
            "--out",
            f.path("clusters.tsv").to_str().unwrap(),
            "--labels",
            f.path("corpus").to_str().unwrap(),
        ])
        .output()
        .unwrap());
    let clusters = std::fs::read_to_string(f.path("clusters.tsv")).unwrap();
    let row = clusters.lines().next().unwrap();
    assert_eq!(row.split('\t').count(), 6);
    assert!(row.split('\t').nth(4).unwrap() != "-"); // label resolved

    // cluster lines
    ok(&sc2t()
        .args([
            "cluster",
            "--embeddings",
            f.path("emb.tsv").to_str().unwrap(),
            "--clusters",
            "3",
            "--seed",
            "1",
            "--out",
            f.path("line_clusters.tsv").to_str().unwrap(),
            "--lines",
        ])
        .output()
        .unwrap());

    // eval
    let out = sc2t()
        .args([
            "eval",
            "--corpus",
            f.path("corpus").to_str().unwrap(),
            "--model",
            f.path("run/model.bin").to_str().unwrap(),
            "--nc",
            "8",
            "--runs",
            "3",
            "--seed",
            "2",
            "--out",
            f.path("eval.tsv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean_h"));
    let tsv = std::fs::read_to_string(f.path("eval.tsv")).unwrap();
    assert!(tsv.starts_with("8\t"));

    // realign one message
    let msg = std::fs::read_dir(f.path("corrupted"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.extension().map(|e| e == "txt").unwrap_or(false))
        .unwrap();
    let out = sc2t()
        .args([
            "realign",
            "--message",
            msg.to_str().unwrap(),
            "--model",
            f.path("run/model.bin").to_str().unwrap(),
            "--seed",
            "4",
            "--all-lines",
            "--cells",
            f.path("cells.tsv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    ok(&out);
    assert!(!out.stdout.is_empty());
    assert!(f.path("cells.tsv").exists());
}

#[test]
fn train_and_eval_are_byte_deterministic() {
    let f = Fixture::new();
    build_fixture(&f);
    ok(&sc2t()
        .args(small_train_args(&f.path("corpus"), &f.path("run2")))
        .output()
        .unwrap());
    assert_eq!(
        std::fs::read(f.path("run/model.bin")).unwrap(),
        std::fs::read(f.path("run2/model.bin")).unwrap()
    );
    assert_eq!(
        std::fs::read(f.path("run/train_report.txt")).unwrap(),
        std::fs::read(f.path("run2/train_report.txt")).unwrap()
    );

    for out in ["eval_a.tsv", "eval_b.tsv"] {
        ok(&sc2t()
            .args([
                "eval",
                "--corpus",
                f.path("corpus").to_str().unwrap(),
                "--model",
                f.path("run/model.bin").to_str().unwrap(),
                "--nc",
                "4,8",
                "--runs",
                "3",
                "--seed",
                "2",
                "--out",
                f.path(out).to_str().unwrap(),
            ])
            .output()
            .unwrap());
    }
    assert_eq!(
        std::fs::read(f.path("eval_a.tsv")).unwrap(),
        std::fs::read(f.path("eval_b.tsv")).unwrap()
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let f = Fixture::new();

    // usage error: unknown flag
    let out = sc2t().args(["synth", "--nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // usage error: missing required seed
    let out = sc2t()
        .args([
            "disrupt",
            "--corpus",
            f.path("nowhere").to_str().unwrap(),
            "--out",
            f.path("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // data error: missing csv, and no partial output
    let out = sc2t()
        .args([
            "synth",
            "--csv",
            f.path("missing.csv").to_str().unwrap(),
            "--out",
            f.path("corpus").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!f.path("corpus").exists());

    // usage error: K outside [0, 1] surfaces before outputs are written
    build_fixture(&f);
    let out = sc2t()
        .args([
            "embed",
            "--corpus",
            f.path("corpus").to_str().unwrap(),
            "--model",
            f.path("run/model.bin").to_str().unwrap(),
            "--out",
            f.path("emb.tsv").to_str().unwrap(),
            "--k",
            "1.5",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // data error: realigning an empty message
    std::fs::write(f.path("empty.txt"), "\n\n").unwrap();
    let out = sc2t()
        .args([
            "realign",
            "--message",
            f.path("empty.txt").to_str().unwrap(),
            "--model",
            f.path("run/model.bin").to_str().unwrap(),
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // --help exits 0
    let out = sc2t().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let f = Fixture::new();
    let csv = f.path("retail.csv");
    ok(&sc2t()
        .args(["gen-data", "--out", csv.to_str().unwrap(), "--invoices", "6", "--seed", "3"])
        .output()
        .unwrap());
    ok(&sc2t()
        .args([
            "synth",
            "--csv",
            csv.to_str().unwrap(),
            "--out",
            f.path("corpus").to_str().unwrap(),
        ])
        .output()
        .unwrap());
    std::fs::write(
        f.path("sc2t.conf"),
        "seed = 5\nepochs = 1\nbatch = 64\nctx-dim = 8\nchar-dim = 8\ntoken-len = 8\nh-window = 5\nv-window = 3\nfilters = 8\nchar-fc = 4\n",
    )
    .unwrap();
    // train entirely from the config file
    ok(&sc2t()
        .args([
            "train",
            "--corpus",
            f.path("corpus").to_str().unwrap(),
            "--out",
            f.path("run_conf").to_str().unwrap(),
            "--config",
            f.path("sc2t.conf").to_str().unwrap(),
        ])
        .output()
        .unwrap());
    let report = std::fs::read_to_string(f.path("run_conf/train_report.txt")).unwrap();
    assert!(report.contains("epochs = 1"));
    assert!(report.contains("seed = 5"));
    // a flag overrides the config value
    ok(&sc2t()
        .args([
            "train",
            "--corpus",
            f.path("corpus").to_str().unwrap(),
            "--out",
            f.path("run_flag").to_str().unwrap(),
            "--config",
            f.path("sc2t.conf").to_str().unwrap(),
            "--epochs",
            "2",
        ])
        .output()
        .unwrap());
    let report = std::fs::read_to_string(f.path("run_flag/train_report.txt")).unwrap();
    assert!(report.contains("epochs = 2"));
}
