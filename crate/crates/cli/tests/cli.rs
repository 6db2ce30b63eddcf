use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_czlab"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn czlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn checksums(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["file"].as_str().unwrap().to_string(),
                e["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

const ZERO_FAMILY: &str = r#"
seed = 1

[fk_check]
grid = { n = 1, half_width = 2.0, points = 32 }
family = [{ kind = "zero" }, { kind = "zero" }]
p = 2.0
tail_radii = [0.5, 1.0, 2.0]
shift_steps = [1, 2]
"#;

#[test]
fn zero_family_gives_zero_curves_and_pass() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "zero.toml", ZERO_FAMILY);
    let out = tmp.path().join("out");
    let o = run(&[
        "fk-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: pass"));
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let mut lines = curves.lines();
    assert_eq!(lines.next(), Some("curve,parameter,value"));
    let mut rows = 0;
    for l in lines {
        let value: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(value, 0.0, "{l}");
        rows += 1;
    }
    // bound + 3 tail radii + 4 shifts
    assert_eq!(rows, 8);
    assert!(std::fs::read_to_string(out.join("verdict.txt"))
        .unwrap()
        .starts_with("verdict: pass"));
}

#[test]
fn reruns_reproduce_checksums_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("net_build.toml");
    let cfg = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, threads) in [(&a, "1"), (&b, "4"), (&c, "4")] {
        let o = run(&[
            "net-build",
            "--config",
            cfg,
            "--out",
            dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(checksums(&a), checksums(&b));
    assert_eq!(checksums(&b), checksums(&c));
    assert_eq!(
        std::fs::read(a.join("distances.csv")).unwrap(),
        std::fs::read(b.join("distances.csv")).unwrap()
    );
    assert_eq!(manifest(&a)["config_sha256"], manifest(&b)["config_sha256"]);
}

#[test]
fn manifest_checksums_match_files() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("run_operator.toml");
    let o = run(&[
        "run-operator",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["scenario"], "run-operator");
    assert_eq!(m["rng"], "chacha8-seed_from_u64-v1");
    for (file, sum) in checksums(&out) {
        let bytes = std::fs::read(out.join(&file)).unwrap();
        let hex: String = {
            use sha2::{Digest, Sha256};
            Sha256::digest(&bytes)
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect()
        };
        assert_eq!(hex, sum, "{file}");
    }
}

#[test]
fn csv_floats_carry_17_significant_digits() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("run_operator.toml");
    assert_eq!(
        code(&run(&[
            "run-operator",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])),
        0
    );
    let text = std::fs::read_to_string(out.join("values.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x_0,value"));
    for l in lines {
        for field in l.split(',') {
            let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.replace('.', "").len(), 17, "{field}");
            field.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn unknown_field_is_a_config_error_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let bad = ZERO_FAMILY.replace("p = 2.0", "p = 2.0\ncolour = 3");
    let cfg = write(tmp.path(), "bad.toml", &bad);
    let out = tmp.path().join("out");
    let o = run(&[
        "fk-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("fk_check") && err.contains("colour"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_section_seed_or_config_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "zero.toml", ZERO_FAMILY);
    let o = run(&[
        "net-build",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let unseeded = write(
        tmp.path(),
        "unseeded.toml",
        &ZERO_FAMILY.replace("seed = 1", ""),
    );
    let o = run(&[
        "fk-check",
        "--config",
        unseeded.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let o = run(&["fk-check", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    // --seed supplies the missing seed
    let o = run(&[
        "fk-check",
        "--config",
        unseeded.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(manifest(&out)["seed"], 5);
}

#[test]
fn invalid_values_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    for (from, to) in [
        ("points = 32", "points = 31"),
        ("tail_radii = [0.5, 1.0, 2.0]", "tail_radii = []"),
        (
            "{ kind = \"zero\" }, { kind = \"zero\" }",
            "{ kind = \"bump\", center = [0.0, 0.0], radius = 1.0 }",
        ),
    ] {
        let cfg = write(tmp.path(), "c.toml", &ZERO_FAMILY.replace(from, to));
        let o = run(&[
            "fk-check",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 2, "{to}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists());
    }
}

#[test]
fn seed_override_changes_samples_and_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("verify_kernel.toml");
    let cfg = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(
        code(&run(&[
            "verify-kernel",
            "--config",
            cfg,
            "--out",
            a.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "verify-kernel",
            "--config",
            cfg,
            "--out",
            b.to_str().unwrap(),
            "--seed",
            "8"
        ])),
        0
    );
    assert_eq!(manifest(&a)["seed"], 7);
    assert_eq!(manifest(&b)["seed"], 8);
    assert_ne!(
        std::fs::read(a.join("ratios.csv")).unwrap(),
        std::fs::read(b.join("ratios.csv")).unwrap()
    );
}

#[test]
fn failed_certificate_exits_one() {
    let tmp = TempDir::new().unwrap();
    let text = std::fs::read_to_string(configs().join("verify_kernel.toml"))
        .unwrap()
        .replace("constant = 16.0", "constant = 0.5");
    let cfg = write(tmp.path(), "vk.toml", &text);
    let out = tmp.path().join("out");
    let o = run(&[
        "verify-kernel",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    // a failed check is still a finished run
    assert_eq!(manifest(&out)["pass"], false);
    assert!(std::fs::read_to_string(out.join("certificate.txt"))
        .unwrap()
        .contains("pass = false"));
}

#[test]
fn module_error_during_run_exits_one_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let text = std::fs::read_to_string(configs().join("net_build.toml"))
        .unwrap()
        .replace("tail_radius = 3.0", "tail_radius = 3.0\nepsilon = 1e-6");
    let cfg = write(tmp.path(), "net.toml", &text);
    let out = tmp.path().join("out");
    let o = run(&[
        "net-build",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mollification"));
    assert!(!out.exists());
}

#[test]
fn acceptance_subset_writes_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "acc.toml", "[acceptance]\ncriteria = [3]\n");
    let out = tmp.path().join("out");
    let o = run(&[
        "acceptance",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    let table = std::fs::read_to_string(out.join("acceptance.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("criterion,name,pass,summary"));
    assert!(lines.next().unwrap().starts_with("3,"));
    assert!(out.join("criterion_03.txt").exists());
    assert_eq!(manifest(&out)["seed"], 20_160_101);
}

#[test]
fn shipped_configs_run() {
    let tmp = TempDir::new().unwrap();
    let mut names: Vec<String> = std::fs::read_dir(configs())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml") && n != "acceptance.toml")
        .collect();
    names.sort();
    assert_eq!(names.len(), 11);
    for name in names {
        let stem = name.trim_end_matches(".toml");
        let out = tmp.path().join(stem);
        let cfg = configs().join(&name);
        let o = run(&[
            &stem.replace('_', "-"),
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            code(&o),
            0,
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(out.join("manifest.json").exists());
    }
}
