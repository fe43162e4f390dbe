use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_resonance");

fn config(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("resonance-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn resonance(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).arg("--out").arg(out).output().unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn zero_kernel_full_pass() {
    let dir = scratch("zero");
    let out = resonance(&["resonances", "--config", &config("zero.json")], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "timings.json", "resonances.csv", "contour.csv", "numrange.csv", "spectrum_Z.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let res = read(dir.join("resonances.csv"));
    let mut lines = res.lines();
    assert_eq!(lines.next(), Some("re,im,sheet,tag"));
    let re: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(re.len(), 2);
    assert!((re[0] - 1.6).abs() < 1e-12 && (re[1] - 2.4).abs() < 1e-12);
    let report: serde_json::Value = serde_json::from_str(&read(dir.join("report.json"))).unwrap();
    assert_eq!(report["status"]["outcome"], "pass");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn strong_coupling_exits_two() {
    let dir = scratch("strong");
    let out = resonance(
        &[
            "resonances",
            "--config",
            &config("scalar_exp.json"),
            "--override",
            "model.scale=10.0",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&read(dir.join("report.json"))).unwrap();
    let adm = &report["admissibility"];
    assert_eq!(adm["admissible"], false);
    assert!(adm["best2_lhs"].as_f64().unwrap() > adm["best2_rhs"].as_f64().unwrap());
    assert_eq!(report["status"]["reason"]["kind"], "not_admissible");
    assert!(report["factorization"].is_null());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn thousandfold_channel_coupling_exits_two() {
    let dir = scratch("channel1000");
    let out = resonance(
        &[
            "admissible",
            "--config",
            &config("channel.json"),
            "--override",
            "model.channel.s.amplitude=15.0",
            "--override",
            "model.channel.q.amplitude=15.0",
            "--override",
            "model.channel.points=61",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&read(dir.join("report.json"))).unwrap();
    assert!(report["solutions"].as_array().unwrap().is_empty());
    assert_eq!(report["status"]["reason"]["kind"], "model_rejected");
    assert_eq!(report["validation"]["hull_pass"], false);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn invalid_config_exits_four() {
    let dir = scratch("invalid");
    let out = resonance(
        &["solve", "--config", &config("zero.json"), "--override", "solver.tol=0.5"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(4));
    let out = resonance(&["solve", "--config", "/nonexistent/config.json"], &dir);
    assert_eq!(out.status.code(), Some(4));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn early_stage_writes_header_only_resonances() {
    let dir = scratch("early");
    let out = resonance(&["admissible", "--config", &config("zero.json")], &dir);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(dir.join("resonances.csv")), "re,im,sheet,tag\n");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn verify_and_eval() {
    let out = Command::new(BIN).arg("verify").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.matches("PASS").count(), 4, "{table}");

    let out = Command::new(BIN)
        .args(["eval", "--config", &config("scalar_exp.json"), "--z", "2.0,-0.1", "--z", "-10,0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let pts = v.as_array().unwrap();
    assert_eq!(pts.len(), 2);
    assert!(pts[0]["residue"]["relative"].as_f64().unwrap() <= 1e-8);
    assert!(pts[1]["residue"].is_null());
    assert!(pts[1]["inverse_norm"].as_f64().unwrap() > 0.0);
}
