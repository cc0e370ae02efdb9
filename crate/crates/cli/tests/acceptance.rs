//! Acceptance criterion 10: every CLI command with a fixed seed is
//! byte-identical across two runs (stdout and all produced files).

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn sscdiar(args: &[&str], cwd: &Path) -> (Vec<u8>, bool) {
    let output = Command::new(env!("CARGO_BIN_EXE_sscdiar"))
        .args(args)
        .current_dir(cwd)
        .env("SSC_LOG", "off")
        .output()
        .expect("binary runs");
    (output.stdout, output.status.success())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    if !dir.exists() {
        return out;
    }
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            out.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
    }
    out
}

fn assert_deterministic(label: &str, args: &[&str], cwd: &Path, outputs: &Path) {
    let (stdout_a, ok_a) = sscdiar(args, cwd);
    assert!(ok_a, "{label}: first run failed");
    let files_a = snapshot(outputs);
    let (stdout_b, ok_b) = sscdiar(args, cwd);
    assert!(ok_b, "{label}: second run failed");
    let files_b = snapshot(outputs);
    assert_eq!(stdout_a, stdout_b, "{label}: stdout differs between runs");
    assert_eq!(
        files_a.keys().collect::<Vec<_>>(),
        files_b.keys().collect::<Vec<_>>(),
        "{label}: file sets differ"
    );
    for (name, bytes) in &files_a {
        assert_eq!(
            bytes, &files_b[name],
            "{label}: {name} differs between runs"
        );
    }
    assert!(!files_a.is_empty() || label == "score", "{label}: no outputs produced");
}

#[test]
fn criterion_10_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();

    assert_deterministic(
        "synth",
        &[
            "synth",
            "--out-dir",
            "data",
            "--total-windows",
            "120",
            "--seed",
            "7",
        ],
        root,
        &root.join("data"),
    );

    assert_deterministic(
        "cluster",
        &[
            "cluster",
            "--embeddings",
            "data/embeddings.csv",
            "--segments",
            "data/segments.csv",
            "--reference",
            "data/reference.rttm",
            "--out",
            "out-cluster",
            "--system",
            "pic",
            "--num-speakers",
            "3",
            "--seed",
            "7",
        ],
        root,
        &root.join("out-cluster"),
    );

    assert_deterministic(
        "ssc",
        &[
            "ssc",
            "--embeddings",
            "data/embeddings.csv",
            "--segments",
            "data/segments.csv",
            "--reference",
            "data/reference.rttm",
            "--out",
            "out-ssc",
            "--num-speakers",
            "3",
            "--seed",
            "7",
        ],
        root,
        &root.join("out-ssc"),
    );

    assert_deterministic(
        "score",
        &[
            "score",
            "--reference",
            "data/reference.rttm",
            "--hypothesis",
            "out-ssc/embeddings.rttm",
        ],
        root,
        &root.join("nowhere"),
    );

    assert_deterministic(
        "compare",
        &[
            "compare",
            "--out",
            "out-compare",
            "--systems",
            "pic,ssc-pic",
            "--seeds",
            "0,1",
            "--total-windows",
            "120",
        ],
        root,
        &root.join("out-compare"),
    );

    println!("criterion 10 (CLI determinism): PASS");
}
