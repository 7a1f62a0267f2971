use std::path::Path;
use std::process::{Command, Output};

use isac_core::channel::steering;
use isac_core::model_file::Container;
use isac_core::sensing::{crlb_d, crlb_theta};
use isac_core::SimConfig;

fn isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = isac(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

const SMALL: &[&str] = &["--set", "n_slots=10", "--set", "n_tx=8", "--set", "n_rx=8", "--set", "n_vehicles=2", "--set", "history_len=3"];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(SMALL.iter().copied()).collect()
}

#[test]
fn help_exits_zero() {
    let out = isac(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["gen-data", "train", "eval", "sweep", "crlb"] {
        assert!(text.contains(sub), "{sub} missing from usage");
    }
}

#[test]
fn eval_without_model_is_descriptive_error() {
    let out = isac(&["eval"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model file required"));
}

#[test]
fn unknown_flag_and_key_fail() {
    let out = isac(&["crlb", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = isac(&["crlb", "--theta", "1", "--dist", "10", "--power", "1", "--set", "nonsense=3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
}

#[test]
fn crlb_agrees_with_sensing_module() {
    let text = ok(&["crlb", "--theta", "0.9273", "--dist", "25", "--power", "1"]);
    let cfg = SimConfig::default();
    let w = steering(0.9273, cfg.n_tx);
    let ct: f64 = value(&text, "crlb_theta").parse().unwrap();
    let cd: f64 = value(&text, "crlb_d").parse().unwrap();
    assert_eq!(ct, crlb_theta(0.9273, 25.0, &w, &cfg).unwrap());
    assert_eq!(cd, crlb_d(0.9273, 25.0, &w, &cfg).unwrap());
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.conf");
    std::fs::write(&cfg_path, "[array]\nn_tx = 16\nn_rx = 16\n").unwrap();
    let c = cfg_path.to_str().unwrap();
    let a = ok(&["crlb", "--config", c, "--theta", "1", "--dist", "20", "--power", "1"]);
    let b = ok(&["crlb", "--config", c, "--set", "n_tx=64", "--set", "n_rx=64", "--theta", "1", "--dist", "20", "--power", "1"]);
    let cfg16 = SimConfig {
        n_tx: 16,
        n_rx: 16,
        ..SimConfig::default()
    };
    assert_eq!(
        value(&a, "crlb_theta").parse::<f64>().unwrap(),
        crlb_theta(1.0, 20.0, &steering(1.0, 16), &cfg16).unwrap()
    );
    assert_ne!(value(&a, "crlb_theta"), value(&b, "crlb_theta"));
}

fn pipeline(dir: &Path) -> (String, Vec<u8>, String, String) {
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let gen = ok(&with_small(&["gen-data", "--examples", "24", "--seed", "5", "--out", &p("d.bin")]));
    ok(&["train", "--data", &p("d.bin"), "--iters", "6", "--batch-size", "8", "--out", &p("h.bin")]);
    ok(&["train", "--data", &p("d.bin"), "--arch", "naive", "--iters", "6", "--batch-size", "8", "--out", &p("n.bin")]);
    ok(&["eval", "--model", &p("h.bin"), "--model", &p("n.bin"), "--realizations", "6", "--out", &p("e.csv")]);
    (
        value(&gen, "sha256"),
        std::fs::read(p("d.bin")).unwrap(),
        std::fs::read_to_string(p("h.bin.trace.json")).unwrap(),
        std::fs::read_to_string(p("e.csv")).unwrap(),
    )
}

#[test]
fn pipeline_is_bit_reproducible_and_self_describing() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    assert_eq!(first, second);

    let csv = &first.3;
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "method,P,rate_mean,rate_ci,crlb_theta_sqrt,crlb_d_sqrt,n");
    let methods: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["genie", "hcl_net", "naive_dl", "random"]);

    // Every artifact carries the effective configuration, seed included.
    let model = Container::read(&a.path().join("h.bin")).unwrap();
    assert_eq!(model.config().unwrap().rng_seed, 5);
    assert_eq!(model.config().unwrap().n_tx, 8);
    let mirror: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("e.csv.json")).unwrap()).unwrap();
    assert_eq!(mirror["seed"], 5);
    assert!(mirror["config"].as_array().unwrap().iter().any(|kv| kv[0] == "n_vehicles" && kv[1] == "2"));
    let trace: serde_json::Value = serde_json::from_str(&first.2).unwrap();
    assert_eq!(trace["loss_trace"].as_array().unwrap().len(), 6);
    assert_eq!(trace["seed"], 5);
}

#[test]
fn sweep_rows_follow_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    ok(&with_small(&["sweep", "--power-grid", "0.5,1,2", "--realizations", "3", "--out", out.to_str().unwrap()]));
    let text = std::fs::read_to_string(&out).unwrap();
    let powers: Vec<&str> = text.lines().skip(1).map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(powers, ["0.5", "0.5", "1", "1", "2", "2"]);
}

#[test]
fn eval_rejects_dataset_as_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.bin");
    ok(&with_small(&["gen-data", "--examples", "2", "--out", d.to_str().unwrap()]));
    let out = isac(&["eval", "--model", d.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));
}
