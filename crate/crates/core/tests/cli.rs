use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pomdpkit::scenario::{sha256_hex, Manifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pomdpkit"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn manifest_hashes_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("detect");
    let o = run(&scenario("detect"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let mut on_disk: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let listed: Vec<String> = manifest.files.iter().map(|f| f.name.clone()).collect();
    assert_eq!(listed, on_disk);
    for f in &manifest.files {
        let bytes = std::fs::read(out.join(&f.name)).unwrap();
        assert_eq!(f.sha256, sha256_hex(&bytes));
        assert_eq!(f.bytes, bytes.len());
    }
}

#[test]
fn csv_outputs_have_headers_and_plain_decimals() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("filter");
    assert!(run(&scenario("filter"), &out, &[]).status.success());
    let text = std::fs::read_to_string(out.join("filter.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "k,state,y,pi_1,pi_2,pi_3");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 6);
    for cell in &row[3..] {
        assert!(cell.parse::<f64>().is_ok());
        assert!(!cell.contains(' '));
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert!(run(&scenario("ruler"), &a, &[]).status.success());
    assert!(run(&scenario("ruler"), &b, &["--seed", "5"]).status.success());
    assert!(run(&scenario("ruler"), &c, &["--seed", "6"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("trace.csv")).unwrap();
    // the bundled config uses seed 5
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");

    let bogus = write_config(tmp.path(), r#"{"scenario":"bogus","model":{}}"#);
    assert_eq!(run(&bogus, &out, &[]).status.code(), Some(4));

    let bad = write_config(tmp.path(), r#"{"scenario":"game","model":{"kind":"matrix","payoffs":[[1,2],[3]]}}"#);
    let o = run(&bad, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/model"));

    let missing = tmp.path().join("missing.json");
    assert_eq!(run(&missing, &out, &[]).status.code(), Some(2));

    let numerical = write_config(
        tmp.path(),
        r#"{"scenario":"game","model":{"kind":"normal_form","players":2,"actions":2,"rewards":[[1,0,0,1],[1,0,0,1]]},"params":{"mu":0.001}}"#,
    );
    assert_eq!(run(&numerical, &out, &[]).status.code(), Some(3));
}

#[test]
fn matching_pennies_value_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("game");
    assert!(run(&scenario("game"), &out, &[]).status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("value.json")).unwrap()).unwrap();
    assert!(v["value"].as_f64().unwrap().abs() <= 1e-8);
}
