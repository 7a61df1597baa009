//! End-to-end checks of the installed binary: flag handling, exit codes,
//! and the artifact layout a consumer sees.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kolmo3"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kolmo3-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn write_cfg(tag: &str, text: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("kolmo3-cfg-{tag}-{}.txt", std::process::id()));
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn classify_defaults_report_the_symmetric_census() {
    let out = scratch("classify");
    let o = bin().args(["classify", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("case I"), "{text}");
    assert!(text.contains("5 isolated"), "{text}");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "classify");
    assert!(manifest["claim"].as_str().unwrap().len() > 20);
    let level = manifest["summary"]["critical_cone_level"].as_f64().unwrap();
    assert!((level - 3.0).abs() < 1e-12);

    // The recorded checksum must match the file on disk.
    let entry = &manifest["files"][0];
    assert_eq!(entry["name"], "regime.json");
    let bytes = std::fs::read(out.join("regime.json")).unwrap();
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    assert_eq!(entry["checksum"], format!("fnv1a64:{h:016x}"));
}

#[test]
fn unknown_config_key_exits_with_validation_code() {
    let cfg = write_cfg("badkey", "alpha = 1\nripple = 3\n");
    let o = bin()
        .args(["classify", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(scratch("badkey"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ripple"), "{err}");
}

#[test]
fn missing_config_file_exits_with_validation_code() {
    let o = bin()
        .args(["flow", "--config", "/nonexistent-kolmo3.cfg", "--out"])
        .arg(scratch("nofile"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dominant_noise_density_request_exits_with_validation_code() {
    // The closed-form radial law needs sigma^2 < 2 alpha.
    let cfg = write_cfg("dom", "alpha = 1\nsigma2 = 4\n");
    let o = bin()
        .args(["logistic-density", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(scratch("dom"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn blow_up_exits_with_numerical_code() {
    // Coarse explicit steps from a distant start overshoot into the
    // superlinear drift and trip the norm guard.
    let cfg = write_cfg("blowup", "sigma2 = 0.5\nx0 = 40, 40, 40\ndt = 0.5\nt_end = 5\nscheme = euler\n");
    let o = bin()
        .args(["sde", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(scratch("blowup"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn rerun_of_the_same_config_is_byte_identical() {
    let cfg = write_cfg("rerun", "alpha = 1\nsigma2 = 0.5\nt_end = 4\nseed = 5\n");
    let read_all = |dir: &PathBuf| {
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort_by(|a, b| a.0.cmp(&b.0));
        files
    };
    let run_once = |tag: &str| {
        let out = scratch(tag);
        let o = bin().args(["sde", "--config"]).arg(&cfg).args(["--out"]).arg(&out).output().unwrap();
        assert!(o.status.success());
        read_all(&out)
    };
    assert_eq!(run_once("rerun-a"), run_once("rerun-b"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let cfg = write_cfg("seedflag", "alpha = 1\nsigma2 = 0.5\nt_end = 4\nseed = 5\n");
    let csv = |tag: &str, extra: &[&str]| {
        let out = scratch(tag);
        let mut c = bin();
        c.args(["sde", "--config"]).arg(&cfg).args(["--out"]).arg(&out);
        c.args(extra);
        assert!(c.output().unwrap().status.success());
        std::fs::read(out.join("trajectory.csv")).unwrap()
    };
    let from_cfg = csv("sf-a", &[]);
    let overridden = csv("sf-b", &["--seed", "9"]);
    assert_ne!(from_cfg, overridden);
}
