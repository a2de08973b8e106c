mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use taboo_core::corpus::{LabeledSentence, ParseTree};
use taboo_core::evalkit::{gen_redundant_synthetic, INFO_TYPE};

fn taboo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taboo"))
        .args(args)
        .env_remove("TABOO_MODELS_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = taboo(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn last_stderr_json(out: &Output) -> Value {
    let err = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(err.lines().last().unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

/// Ten records: one too short for `--min-len 3`, two conflicting copies, seven kept.
fn write_raw_fixture(path: &Path) {
    let mut s = Vec::new();
    for i in 0..7 {
        let words = ["alpha", "beta", "gamma", "delta"];
        let w: Vec<String> = words.iter().map(|x| format!("{x}{i}")).collect();
        let w: Vec<&str> = w.iter().map(String::as_str).collect();
        s.push(common::sentence(
            &format!("k{i}"),
            "PPAY",
            (i % 2) as u8,
            &w,
        ));
    }
    s.push(common::sentence("short", "PPAY", 1, &["hi", "there"]));
    s.push(common::sentence(
        "amb1",
        "PPAY",
        1,
        &["same", "words", "again"],
    ));
    s.push(common::sentence(
        "amb2",
        "PPAY",
        0,
        &["same", "words", "again"],
    ));
    common::write_sentences(path, &s);
}

#[test]
fn prepare_splits_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.tsv");
    write_raw_fixture(&raw);
    let out1 = dir.path().join("a");
    let report: Value = serde_json::from_str(&ok(&[
        "prepare",
        "--input",
        p(&raw),
        "--min-len",
        "3",
        "--seed",
        "4",
        "--out",
        p(&out1),
    ]))
    .unwrap();
    assert_eq!(report["read"], 10);
    assert_eq!(report["too_short"], 1);
    assert_eq!(report["ambiguous"], 2);
    assert_eq!(report["kept"], 7);
    let total: usize = ["train", "dev", "test"]
        .iter()
        .map(|n| line_count(&out1.join(format!("{n}.tsv"))))
        .sum();
    assert_eq!(total, 7);

    let out2 = dir.path().join("b");
    ok(&[
        "prepare",
        "--input",
        p(&raw),
        "--min-len",
        "3",
        "--seed",
        "4",
        "--out",
        p(&out2),
    ]);
    for n in ["train.tsv", "dev.tsv", "test.tsv"] {
        assert_eq!(
            std::fs::read(out1.join(n)).unwrap(),
            std::fs::read(out2.join(n)).unwrap()
        );
    }

    let out3 = dir.path().join("c");
    ok(&[
        "prepare",
        "--input",
        p(&raw),
        "--min-len",
        "3",
        "--splits",
        "1,0,0",
        "--out",
        p(&out3),
    ]);
    assert_eq!(line_count(&out3.join("train.tsv")), 7);
    assert_eq!(line_count(&out3.join("dev.tsv")), 0);
}

#[test]
fn silver_prepare_is_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.tsv");
    let mut s = Vec::new();
    for i in 0..12 {
        let it = if i < 4 { "PPAY" } else { "FAS" };
        let a = format!("w{i}");
        s.push(common::sentence(&format!("s{i}"), it, 1, &[&a, "x", "y"]));
    }
    common::write_sentences(&raw, &s);
    let out = dir.path().join("silver");
    let report: Value = serde_json::from_str(&ok(&[
        "prepare",
        "--input",
        p(&raw),
        "--min-len",
        "2",
        "--silver",
        "PPAY",
        "--splits",
        "1,0,0",
        "--out",
        p(&out),
    ]))
    .unwrap();
    assert_eq!(report["train"], 8);
    let text = std::fs::read_to_string(out.join("train.tsv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("1\t")).count(), 4);
    assert!(text.lines().all(|l| l.split('\t').nth(1) == Some("PPAY")));
}

#[test]
fn exit_codes_and_error_lines() {
    let out = taboo(&["prepare", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let e = last_stderr_json(&out);
    assert_eq!(
        (e["kind"].as_str(), e["code"].as_i64()),
        (Some("usage"), Some(2))
    );

    let out = taboo(&[
        "prepare",
        "--input",
        "x",
        "--out",
        "y",
        "--splits",
        "0.5,0.5,0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = taboo(&[
        "eval",
        "--model",
        "/no/such/model.json",
        "--data",
        "/no/such.tsv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let e = last_stderr_json(&out);
    assert_eq!(e["kind"], "data");
    assert!(e["error"].as_str().unwrap().contains("/no/such/model.json"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "1\tPPAY\td1\t(S (NP the\n").unwrap();
    let out = taboo(&["prepare", "--input", p(&bad), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(last_stderr_json(&out)["error"]
        .as_str()
        .unwrap()
        .contains("line 1"));

    assert_eq!(taboo(&["--help"]).status.code(), Some(0));
}

#[test]
fn infrule_thresholds_are_stored() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_redundant_synthetic(2, 100, 0.5);
    let train = dir.path().join("train.tsv");
    common::write_sentences(&train, &data.splits.train);
    let model = dir.path().join("rules.json");
    ok(&[
        "train",
        "--model",
        "infrule",
        "--train",
        p(&train),
        "--min-support",
        "2",
        "--min-confidence",
        "0.6",
        "--out",
        p(&model),
    ]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(v["magic"], "TABOO1");
    assert_eq!(v["kind"], "infrule");
    assert_eq!(v["payload"]["min_support_count"], 2);
    assert_eq!(v["payload"]["min_confidence"], 0.6);
}

#[test]
fn eval_of_constant_model_matches_majority_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.json");
    common::constant_zero().save(&model).unwrap();
    let tree = ParseTree::right_branching(&["a", "b"]).unwrap();
    let test: Vec<LabeledSentence> = (0..960)
        .map(|i| {
            LabeledSentence::new(format!("t{i}"), "d", "PPAY", u8::from(i < 322), &tree).unwrap()
        })
        .collect();
    let data = dir.path().join("test.tsv");
    common::write_sentences(&data, &test);

    let table = ok(&["eval", "--model", p(&model), "--data", p(&data)]);
    assert!(table.contains("accuracy     0.6646"), "{table}");
    assert!(table.contains("precision    N/A"), "{table}");
    let v: Value = serde_json::from_str(&ok(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--json",
    ]))
    .unwrap();
    assert!((v["accuracy"].as_f64().unwrap() - 0.6646).abs() < 1e-4);
    assert_eq!(v["precision"], "N/A");
}

#[test]
fn compare_model_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    common::write_models(dir.path());
    let data = gen_redundant_synthetic(3, 80, 0.5);
    let path = dir.path().join("d.tsv");
    common::write_sentences(&path, &data.splits.train);
    let m = dir.path().join("rules.json");
    let v: Value = serde_json::from_str(&ok(&[
        "compare",
        "--model-a",
        p(&m),
        "--model-b",
        p(&m),
        "--data",
        p(&path),
        "--json",
    ]))
    .unwrap();
    assert_eq!(
        (v["only_a"].as_f64(), v["only_b"].as_f64()),
        (Some(0.0), Some(0.0))
    );
    assert_eq!(v["errors_only_a"], 0);
    let table = ok(&[
        "compare",
        "--model-a",
        p(&m),
        "--model-b",
        p(&m),
        "--data",
        p(&path),
    ]);
    assert!(
        table.contains("only_a       0.0000") && table.contains("only_b       0.0000"),
        "{table}"
    );
}

#[test]
fn config_file_defaults_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.tsv");
    write_raw_fixture(&raw);
    let out = dir.path().join("out");
    let conf = dir.path().join("prepare.conf");
    std::fs::write(
        &conf,
        format!(
            "# defaults\ninput = {}\nout = \"{}\"\nmin_len = 5\nsplits = 1,0,0\n",
            p(&raw),
            p(&out)
        ),
    )
    .unwrap();
    // min_len 5 from the file drops every sentence
    let v: Value = serde_json::from_str(&ok(&["prepare", "--config", p(&conf)])).unwrap();
    assert_eq!(v["kept"], 0);
    // the command line wins
    let v: Value =
        serde_json::from_str(&ok(&["prepare", "--config", p(&conf), "--min-len", "3"])).unwrap();
    assert_eq!(v["kept"], 7);

    std::fs::write(&conf, "colour = blue\n").unwrap();
    let out = taboo(&["prepare", "--config", p(&conf)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn network_training_and_raw_text_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_redundant_synthetic(4, 200, 0.6);
    let split = taboo_core::corpus::split(&data, [0.7, 0.3, 0.0], 4).unwrap();
    let train = dir.path().join("train.tsv");
    let dev = dir.path().join("dev.tsv");
    common::write_sentences(&train, &split.splits.train);
    common::write_sentences(&dev, &split.splits.dev);

    let recnn = dir.path().join("models/recnn.json");
    let common_flags = [
        "--train",
        p(&train),
        "--dev",
        p(&dev),
        "--random-embeddings",
        "6",
        "--hidden",
        "6",
        "--learning-rates",
        "0.1",
        "--max-epochs",
        "3",
    ];
    let mut args = vec!["train", "--model", "recnn", "--out", p(&recnn)];
    args.extend(common_flags);
    let v: Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(v["kind"], "recnn");
    assert_eq!(v["info_type"], INFO_TYPE);

    let sel = dir.path().join("models/selective.json");
    let mut args = vec![
        "train",
        "--model",
        "selective",
        "--out",
        p(&sel),
        "--clusters",
        "6",
        "--pretrain",
        "20",
    ];
    args.extend(common_flags);
    let v: Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(v["kind"], "selective");
    let s = &v["summary"];
    assert_eq!(
        s["total_minibatches"].as_u64().unwrap(),
        s["pretrain_minibatches"].as_u64().unwrap() + s["resume_minibatches"].as_u64().unwrap()
    );

    let tuned = dir.path().join("models/tuned.json");
    let mut args = vec![
        "train",
        "--model",
        "recnn",
        "--out",
        p(&tuned),
        "--base-model",
        p(&recnn),
    ];
    args.extend(common_flags);
    ok(&args);

    let data = p(&dev);
    for m in [&recnn, &sel, &tuned] {
        let v: Value =
            serde_json::from_str(&ok(&["eval", "--model", p(m), "--data", data, "--json"]))
                .unwrap();
        assert_eq!(v["n"], split.splits.dev.len());
    }
    let text = "the wire to account 7 is approved. join us for lunch on friday.";
    let first = ok(&["predict", "--model", p(&recnn), "--text", text]);
    let v: Value = serde_json::from_str(&first).unwrap();
    // a lowercase word after the period does not start a new sentence
    assert_eq!(v["sentences"].as_array().unwrap().len(), 1);
    assert_eq!(
        first,
        ok(&["predict", "--model", p(&recnn), "--text", text])
    );

    let out = taboo(&[
        "train",
        "--model",
        "recnn",
        "--train",
        p(&train),
        "--dev",
        p(&dev),
        "--out",
        p(&recnn),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "missing word vectors is a usage error"
    );
}

#[test]
fn serve_answers_over_http() {
    let dir = tempfile::tempdir().unwrap();
    common::write_models(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_taboo"))
        .args(["serve", "--port", "0"])
        .env("TABOO_MODELS_DIR", dir.path())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .expect(&line)
        .to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "GET /api/models HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(
        resp.contains(r#"{"id":"rules","kind":"infrule","info_type":"SYNTH"}"#),
        "{resp}"
    );
}
