use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qvlasov(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvlasov"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let args = ["pipeline", "--ngr", "16", "--trials", "4", "--seed", "11"];
    let first = qvlasov(&args, &out);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let a = snapshot(&out);
    let second = qvlasov(&args, &out);
    assert_eq!(second.status.code(), Some(0));
    let b = snapshot(&out);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between runs");
    }
    assert_eq!(manifest(&out)["all_checks_passed"], true);
}

#[test]
fn manifest_lists_written_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("spec");
    let o = qvlasov(&["spectrum", "--ngr", "16"], &out);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&out);
    let files = m["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let name = f["name"].as_str().unwrap();
        let len = fs::metadata(out.join(name)).unwrap().len();
        assert_eq!(f["bytes"].as_u64().unwrap(), len, "{name}");
    }
}

#[test]
fn different_seeds_change_trials_only() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let common = ["estimate", "--ngr", "16", "--trials", "20", "--eps", "0.2"];
    assert!(qvlasov(&[&common[..], &["--seed", "1"]].concat(), &a).status.success());
    assert!(qvlasov(&[&common[..], &["--seed", "2"]].concat(), &b).status.success());
    let ta = fs::read_to_string(a.join("trials_0.csv")).unwrap();
    let tb = fs::read_to_string(b.join("trials_0.csv")).unwrap();
    assert_ne!(ta, tb);
}

#[test]
fn config_errors_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["evolve", "--ngr", "12"][..],
        &["evolve", "--backend", "rk4"][..],
        &["estimate", "--scheme", "bogus"][..],
        &["evolve", "--dim", "4"][..],
        &["estimate", "--target", "0", "--ngr", "8"][..],
    ] {
        let o = qvlasov(args, &tmp.path().join("x"));
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# small grid\nngr = 8\ntmax = 0.1\nnt = 2\n").unwrap();
    let out = tmp.path().join("o");
    let o = qvlasov(&["evolve", "--config", cfg.to_str().unwrap(), "--ngr", "16"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["ngr"], 16);
    assert_eq!(m["config"]["nt"], 2);
}

#[test]
fn missing_force_file_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qvlasov(&["evolve", "--force-file", "/nonexistent/f.vqff"], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_oracles_reports_bound_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let weak = tmp.path().join("weak");
    let o = qvlasov(&["verify-oracles", "--dim", "2", "--ngr", "4", "--force-analytic", "0.1,3.14159"], &weak);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&weak)["all_checks_passed"], true);
}

#[test]
fn resources_sweep_writes_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = qvlasov(&["resources", "--sweep", "ngr=16:256:*2"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6, "{csv}");
}
