use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use temt_core::text::{EmbeddingTable, SentenceKey};

const ERAS: [&str; 5] = ["alpha", "bravo", "charlie", "delta", "echo"];

/// 80 entities, 3 relations, 600 distinct facts whose interval depends on the era
/// word in the subject name. Dates carry masked month/day parts.
fn write_raw(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let mut ents = String::new();
    let mut descs = String::new();
    for i in 0..60 {
        ents += &format!("Q{i}\tperson{i}_{}\n", ERAS[i % 5]);
        descs += &format!("Q{i}\tsomeone from the {} period\n", ERAS[i % 5]);
    }
    for j in 0..20 {
        ents += &format!("P{j}\tplace{j}\n");
    }
    let rels: String = (0..3).map(|r| format!("R{r}\trel_{r}\n")).collect();
    let mut splits = [String::new(), String::new(), String::new()];
    for i in 0..600 {
        let (a, s) = (i / 60, i % 60);
        let (r, o, e) = (a % 3, (a + 7 * s) % 20, s % 5);
        let line = format!(
            "Q{s}\tR{r}\tP{o}\t{}-03-##\t{}-##-##\n",
            1900 + 10 * e,
            1910 + 10 * e
        );
        splits[if i % 10 == 8 {
            1
        } else if i % 10 == 9 {
            2
        } else {
            0
        }] += &line;
    }
    fs::write(dir.join("entities.tsv"), ents).unwrap();
    fs::write(dir.join("descriptions.tsv"), descs).unwrap();
    fs::write(dir.join("relations.tsv"), rels).unwrap();
    for (name, text) in ["train.tsv", "valid.tsv", "test.tsv"].iter().zip(&splits) {
        fs::write(dir.join(name), text).unwrap();
    }
}

struct Ws {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Ws {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        write_raw(&root.join("raw"));
        Self { _tmp: tmp, root }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_env(args, &[])
    }

    fn run_env(&self, args: &[&str], env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_temt"));
        cmd.current_dir(&self.root).args(args).env("RUST_LOG", "warn");
        for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("TEMT_")) {
            cmd.env_remove(k);
        }
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn prep(&self) {
        self.ok(&["preprocess", "--data", "raw", "--out", "prep"]);
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.p(rel)).unwrap()
    }
}

const QUICK_TRAIN: [&str; 6] = ["--epochs", "2", "--text-dim", "32", "--negatives", "16"];

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pipeline_runs_end_to_end() {
    let w = Ws::new();
    w.prep();
    assert_eq!(
        w.read("prep/train.tsv").lines().next().unwrap(),
        "Q0\tR0\tP0\t1900\t1910"
    );
    assert!(w.read("prep/manifest.txt").contains("t_min=1900"));

    w.ok(&[
        "split-inductive",
        "--data",
        "prep",
        "--out",
        "ind",
        "--valid-entities",
        "4",
        "--test-entities",
        "4",
        "--min-relation-edges",
        "20",
    ]);
    assert!(w.read("ind/split_report.txt").contains("removed_test_count=4"));

    w.ok(&["emit-sentences", "--data", "prep", "--out", "sent"]);
    assert_eq!(w.read("sent/sentences.ND.tsv").lines().count(), 600);

    let mut args = vec!["train", "--data", "prep", "--out", "model"];
    args.extend(QUICK_TRAIN);
    w.ok(&args);
    assert!(w.p("model/checkpoint.params").is_file());
    assert_eq!(w.read("model/train_losses.tsv").lines().count(), 3);

    w.ok(&["predict", "--data", "prep", "--out", "model"]);
    let preds = w.read("model/predictions.tsv");
    assert!(preds.starts_with("fact_id\trank\tstart\tend\tcum_prob\n"));

    let out = w.ok(&[
        "evaluate", "--data", "prep", "--out", "model", "--k", "1", "--k", "10",
    ]);
    let metrics = w.read("model/metrics.tsv");
    assert_eq!(metrics.lines().count(), 1 + 6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("gaeIOU@10"));

    w.ok(&[
        "classify-triples",
        "--data",
        "prep",
        "--out",
        "cls",
        "--text-dim",
        "32",
        "--max-iter",
        "20",
    ]);
    assert!(w.read("cls/classification.tsv").starts_with("accuracy\t"));

    let report = w.read("model/run_report.train.txt");
    for section in ["[config]", "[inputs]", "[outputs]", "[warnings]", "wall_time_s="] {
        assert!(report.contains(section), "missing {section}");
    }
    assert!(report.contains("prep/train.tsv"));
    assert!(report.contains("init:"), "training choices are recorded");
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with("run_report"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical_across_execution_modes() {
    let w = Ws::new();
    w.prep();
    for (out, mode) in [("a", "parallel"), ("b", "sequential"), ("c", "parallel")] {
        let mut args = vec!["train", "--data", "prep", "--out", out, "--execution", mode];
        args.extend(QUICK_TRAIN);
        w.ok(&args);
        w.ok(&["predict", "--data", "prep", "--out", out, "--execution", mode]);
        w.ok(&["evaluate", "--data", "prep", "--out", out]);
    }
    let a = artifacts(&w.p("a"));
    assert_eq!(a.len(), 5);
    assert_eq!(a, artifacts(&w.p("b")));
    assert_eq!(a, artifacts(&w.p("c")));

    w.ok(&["preprocess", "--data", "raw", "--out", "prep2"]);
    assert_eq!(artifacts(&w.p("prep")), artifacts(&w.p("prep2")));
}

#[test]
fn usage_errors_exit_2() {
    let w = Ws::new();
    w.prep();
    let o = w.run(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = w.run(&["train", "--data", "prep", "--out", "m", "--epochs", "many"]);
    assert_eq!(o.status.code(), Some(2));
    let o = w.run(&["train", "--data", "prep", "--out", "m", "--margin=-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("margin"));
    let o = w.run(&["train", "--out", "m"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--data"));
    let o = w.run(&["predict", "--data", "prep", "--out", "m", "--theta", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!w.p("m").exists(), "nothing is written before validation passes");
}

#[test]
fn missing_artifacts_name_the_producer() {
    let w = Ws::new();
    let o = w.run(&["train", "--data", "raw_missing", "--out", "m"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("temt preprocess"));

    w.prep();
    let o = w.run(&["predict", "--data", "prep", "--out", "m"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("temt train"));

    let o = w.run(&["evaluate", "--data", "prep", "--out", "m"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("temt predict"));

    let o = w.run(&[
        "train",
        "--data",
        "prep",
        "--out",
        "m",
        "--encoder",
        "table:emb.bin",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("temt emit-sentences"));
}

#[test]
fn numeric_failure_exits_4() {
    let w = Ws::new();
    w.prep();
    let o = w.run(&[
        "train",
        "--data",
        "prep",
        "--out",
        "m",
        "--learning-rate",
        "1e300",
        "--epochs",
        "3",
        "--text-dim",
        "16",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

fn echo_line(report: &str, key: &str) -> String {
    report
        .lines()
        .find(|l| l.starts_with(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} not echoed"))
        .to_string()
}

#[test]
fn precedence_is_flag_then_env_then_file_then_default() {
    let w = Ws::new();
    w.prep();
    fs::write(
        w.p("run.cfg"),
        "# quick run\nepochs = 1\ntext_dim=16\nmargin=3\nnegatives=8\n",
    )
    .unwrap();
    let o = w.run_env(
        &[
            "train", "--config", "run.cfg", "--data", "prep", "--out", "m", "--margin", "1.5",
        ],
        &[("TEMT_EPOCHS", "2"), ("TEMT_MARGIN", "9")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = w.read("m/run_report.train.txt");
    assert_eq!(echo_line(&r, "margin"), "margin=1.5\t# flag");
    assert_eq!(echo_line(&r, "epochs"), "epochs=2\t# env");
    assert_eq!(echo_line(&r, "text-dim"), "text-dim=16\t# config");
    assert_eq!(echo_line(&r, "hidden"), "hidden=64\t# default");
    assert_eq!(w.read("m/train_losses.tsv").lines().count(), 3);
    assert!(w.read("m/checkpoint.manifest").contains("config.margin=1.5"));
}

#[test]
fn config_file_problems_are_usage_errors() {
    let w = Ws::new();
    w.prep();
    fs::write(w.p("bad.cfg"), "epochs=1\nepoch_count=3\n").unwrap();
    let o = w.run(&["train", "--config", "bad.cfg", "--data", "prep", "--out", "m"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch_count"));

    fs::write(w.p("bad2.cfg"), "variant=NX\n").unwrap();
    let o = w.run(&["train", "--config", "bad2.cfg", "--data", "prep", "--out", "m"]);
    assert_eq!(o.status.code(), Some(2));

    let o = w.run(&["train", "--config", "absent.cfg", "--data", "prep", "--out", "m"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn k_list_from_config_file() {
    let w = Ws::new();
    w.prep();
    let mut args = vec!["train", "--data", "prep", "--out", "m"];
    args.extend(QUICK_TRAIN);
    w.ok(&args);
    fs::write(w.p("k.cfg"), "k=1,3,5\n").unwrap();
    w.ok(&["predict", "--config", "k.cfg", "--data", "prep", "--out", "m"]);
    w.ok(&["evaluate", "--config", "k.cfg", "--data", "prep", "--out", "m"]);
    let rows: Vec<String> = w
        .read("m/metrics.tsv")
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[2].starts_with("gIOU\t5\t"));
    let max_rank = w
        .read("m/predictions.tsv")
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse::<usize>().unwrap())
        .max()
        .unwrap();
    assert!(max_rank <= 5);
}

#[test]
fn sentence_files_follow_the_variant() {
    let w = Ws::new();
    w.prep();
    w.ok(&["emit-sentences", "--data", "prep", "--out", "s", "--variant", "N"]);
    w.ok(&[
        "emit-sentences",
        "--data",
        "prep",
        "--out",
        "s",
        "--variant",
        "ND",
    ]);
    let n = w.read("s/sentences.N.tsv");
    let nd = w.read("s/sentences.ND.tsv");
    assert_eq!(n.lines().count(), 600);
    let first_n = n.lines().next().unwrap();
    let first_nd = nd.lines().next().unwrap();
    assert_eq!(first_n.split('\t').nth(1).unwrap(), "person0 alpha rel 0 place0");
    assert_ne!(first_n.split('\t').next(), first_nd.split('\t').next());
    for line in nd.lines() {
        let (key, text) = line.split_once('\t').unwrap();
        assert_eq!(SentenceKey::parse(key), Some(SentenceKey::of(text)));
    }

    let empty = w.p("empty");
    fs::create_dir_all(&empty).unwrap();
    fs::write(empty.join("entities.tsv"), "a\tA\n").unwrap();
    fs::write(empty.join("relations.tsv"), "r\tR\n").unwrap();
    for f in ["train.tsv", "valid.tsv", "test.tsv"] {
        fs::write(empty.join(f), "").unwrap();
    }
    w.ok(&["emit-sentences", "--data", "empty", "--out", "s0"]);
    assert_eq!(w.read("s0/sentences.ND.tsv"), "");
    let o = w.run(&["train", "--data", "empty", "--out", "m0"]);
    assert_eq!(o.status.code(), Some(3));
}

/// Stands in for the extractor: reads the sentence file and writes a table keyed the
/// same way.
fn fake_extract(sentences: &Path, table: &Path, dim: usize) {
    let mut t = EmbeddingTable::new(dim);
    for line in fs::read_to_string(sentences).unwrap().lines() {
        let (key, text) = line.split_once('\t').unwrap();
        let h = temt_core::text::fnv1a64(text.as_bytes());
        let v = (0..dim)
            .map(|i| (((h >> (i % 64)) & 0xff) as f32 / 255.0) - 0.5)
            .collect();
        t.insert(SentenceKey::parse(key).unwrap(), v).unwrap();
    }
    t.write(table).unwrap();
}

#[test]
fn table_encoder_consumes_extracted_sentences() {
    let w = Ws::new();
    w.prep();
    w.ok(&[
        "emit-sentences",
        "--data",
        "prep",
        "--out",
        "s",
        "--with-classification",
    ]);
    fake_extract(&w.p("s/sentences.ND.tsv"), &w.p("s/emb.bin"), 24);

    let mut args = vec![
        "train",
        "--data",
        "prep",
        "--out",
        "m",
        "--encoder",
        "table:s/emb.bin",
    ];
    args.extend(&QUICK_TRAIN[..2]);
    w.ok(&args);
    assert!(w.read("m/checkpoint.manifest").contains("text_dim=24"));
    w.ok(&["predict", "--data", "prep", "--out", "m"]);
    w.ok(&["evaluate", "--data", "prep", "--out", "m", "--k", "1"]);
    w.ok(&[
        "classify-triples",
        "--data",
        "prep",
        "--out",
        "c",
        "--encoder",
        "table:s/emb.bin",
        "--max-iter",
        "5",
    ]);

    // without the classification negatives the table lacks rows for corrupted triples
    w.ok(&["emit-sentences", "--data", "prep", "--out", "s2"]);
    fake_extract(&w.p("s2/sentences.ND.tsv"), &w.p("s2/emb.tsv"), 24);
    let o = w.run(&[
        "classify-triples",
        "--data",
        "prep",
        "--out",
        "c2",
        "--encoder",
        "table:s2/emb.tsv",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no embedding for sentence key"));
}
