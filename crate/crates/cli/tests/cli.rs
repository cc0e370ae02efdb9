//! CLI contract tests: exit codes, file outputs, config-file overrides.

use std::path::Path;
use std::process::{Command, Output};

fn sscdiar(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sscdiar"))
        .args(args)
        .current_dir(cwd)
        .env("SSC_LOG", "off")
        .output()
        .expect("binary runs")
}

fn make_data(root: &Path) {
    let out = sscdiar(
        &[
            "synth",
            "--out-dir",
            "data",
            "--total-windows",
            "90",
            "--num-speakers",
            "2",
            "--seed",
            "3",
        ],
        root,
    );
    assert!(out.status.success());
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    make_data(root);

    // success -> 0
    let ok = sscdiar(
        &[
            "cluster",
            "--embeddings",
            "data/embeddings.csv",
            "--segments",
            "data/segments.csv",
            "--out",
            "out",
            "--system",
            "ahc",
            "--num-speakers",
            "2",
        ],
        root,
    );
    assert_eq!(ok.status.code(), Some(0));

    // config error -> 2
    let bad_system = sscdiar(
        &[
            "cluster",
            "--embeddings",
            "data/embeddings.csv",
            "--segments",
            "data/segments.csv",
            "--out",
            "out",
            "--system",
            "kmeans",
        ],
        root,
    );
    assert_eq!(bad_system.status.code(), Some(2));

    // usage error (unknown flag) -> 2, from the argument parser
    let bad_flag = sscdiar(&["cluster", "--nope"], root);
    assert_eq!(bad_flag.status.code(), Some(2));

    // runtime failure (missing file) -> 1
    let missing = sscdiar(
        &[
            "score",
            "--reference",
            "data/absent.rttm",
            "--hypothesis",
            "data/reference.rttm",
        ],
        root,
    );
    assert_eq!(missing.status.code(), Some(1));

    // ssc command rejects non-SSC systems with a config error
    let wrong_command = sscdiar(
        &[
            "ssc",
            "--embeddings",
            "data/embeddings.csv",
            "--segments",
            "data/segments.csv",
            "--out",
            "out",
            "--system",
            "pic",
        ],
        root,
    );
    assert_eq!(wrong_command.status.code(), Some(2));
}

#[test]
fn score_prints_four_decimal_breakdown() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    make_data(root);
    let out = sscdiar(
        &[
            "score",
            "--reference",
            "data/reference.rttm",
            "--hypothesis",
            "data/reference.rttm",
        ],
        root,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in [
        "missed-speech ",
        "false-alarm ",
        "speaker-confusion ",
        "scored-speech ",
        "der ",
    ] {
        let line = text
            .lines()
            .find(|l| l.starts_with(key))
            .unwrap_or_else(|| panic!("missing {key} line in {text:?}"));
        let value = line.strip_prefix(key).unwrap();
        let decimals = value.split('.').nth(1).unwrap_or("");
        assert_eq!(decimals.len(), 4, "{line}");
        value.parse::<f64>().unwrap();
    }
    assert!(text.contains("der 0.0000"));
}

#[test]
fn config_file_values_apply_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    std::fs::write(
        root.join("synth.cfg"),
        "num-speakers = 2\ntotal-windows = 90\nseed = 11\n",
    )
    .unwrap();

    // file values drive the generator
    let from_file = sscdiar(&["synth", "--config", "synth.cfg", "--out-dir", "a"], root);
    assert!(from_file.status.success());
    let text = String::from_utf8(from_file.stdout).unwrap();
    assert!(text.contains("windows 90"), "{text}");
    assert!(text.contains("speakers 2"), "{text}");
    assert!(text.contains("recording synth-11"), "{text}");

    // an explicit flag overrides the file
    let flag_wins = sscdiar(
        &[
            "synth",
            "--config",
            "synth.cfg",
            "--out-dir",
            "b",
            "--seed",
            "12",
        ],
        root,
    );
    assert!(flag_wins.status.success());
    let text = String::from_utf8(flag_wins.stdout).unwrap();
    assert!(text.contains("recording synth-12"), "{text}");
}

#[test]
fn cluster_outputs_load_back() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    make_data(root);
    let out = sscdiar(
        &[
            "cluster",
            "--embeddings",
            "data/embeddings.csv",
            "--segments",
            "data/segments.csv",
            "--reference",
            "data/reference.rttm",
            "--out",
            "out",
            "--system",
            "pic",
            "--num-speakers",
            "2",
            "--rec-id",
            "rec1",
        ],
        root,
    );
    assert!(out.status.success());
    let rttm = std::fs::read_to_string(root.join("out/rec1.rttm")).unwrap();
    assert!(rttm.lines().all(|l| l.starts_with("SPEAKER rec1 1 ")));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("clusters 2"), "{text}");
}

#[test]
fn compare_csv_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let out = sscdiar(
        &[
            "compare",
            "--out",
            "cmp",
            "--systems",
            "pic",
            "--seeds",
            "4",
            "--total-windows",
            "90",
            "--num-speakers",
            "2",
        ],
        root,
    );
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().next().unwrap().contains("system"), "{table}");
    assert_eq!(
        table.lines().filter(|l| l.starts_with("pic")).count(),
        1,
        "one table row per system: {table}"
    );
    let csv = std::fs::read_to_string(root.join("cmp/compare.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "system,seed,der,missed,false_alarm,confusion,scored,clusters"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "pic");
    assert_eq!(row[1], "4");
    row[2].parse::<f64>().unwrap();
    row[7].parse::<usize>().unwrap();
}

#[test]
fn compare_marks_failed_cells_and_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    // four windows covered by a single long turn: the known-count run
    // degenerates to singleton clusters and triplet sampling fails
    let out = sscdiar(
        &[
            "compare",
            "--out",
            "cmp",
            "--systems",
            "ssc-pic",
            "--seeds",
            "0",
            "--total-windows",
            "4",
            "--num-speakers",
            "4",
            "--expected-turn-windows",
            "50",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(root.join("cmp/compare.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("ssc-pic,0,ERR")), "{csv}");
}

#[test]
fn ssc_writes_trace_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    make_data(root);
    let out = sscdiar(
        &[
            "ssc",
            "--embeddings",
            "data/embeddings.csv",
            "--segments",
            "data/segments.csv",
            "--out",
            "out",
            "--num-speakers",
            "2",
            "--rec-id",
            "rec1",
        ],
        root,
    );
    assert!(out.status.success());
    let trace = std::fs::read_to_string(root.join("out/rec1.trace.jsonl")).unwrap();
    assert!(trace.lines().count() >= 2);
    for line in trace.lines() {
        assert!(line.starts_with('{') && line.ends_with('}'), "{line}");
        assert!(line.contains("\"q\":"), "{line}");
        assert!(line.contains("\"num_clusters\":"), "{line}");
    }
}
