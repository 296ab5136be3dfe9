use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str =
    "epoch,step,train_loss,test_acc,kappa_mean,kappa_stderr,rho_mean,rho_stderr,cond_mean,wall_ms";

fn wopt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wopt"))
        .args(args)
        .current_dir(dir)
        .env_remove("WOPT_SEED")
        .output()
        .unwrap()
}

const SMALL: &str = "method = evd\nepochs = 3\nsynthetic.dim = 8\nsynthetic.classes = 3\nsynthetic.samples_train = 256\nsynthetic.samples_test = 64\nhidden = 16\nbatch_size = 16\neta = 0.05\n";

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.cfg"), SMALL).unwrap();
    let out = wopt(
        &["run", "--config", "a.cfg", "--threads", "1", "--out", "res"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("res/metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 4);
    let losses: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(losses[2] < losses[0]);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["method"], "evd");
    assert_eq!(summary["steps"], 48);
    assert!(summary["final_test_acc"].as_f64().unwrap() > 0.0);
    assert!(summary["macs"]["gradient_transform"].as_u64().unwrap() > 0);
    assert!(summary["macs"]["whitening_build"].as_u64().unwrap() > 0);
}

fn strip_wall(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.cfg"), SMALL).unwrap();
    for out in ["r1", "r2"] {
        assert!(wopt(
            &["run", "--config", "a.cfg", "--threads", "1", "--out", out],
            dir.path()
        )
        .status
        .success());
    }
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("metrics.csv")).unwrap();
    assert_eq!(strip_wall(&read("r1")), strip_wall(&read("r2")));
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.cfg"), SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_wopt"))
        .args(["run", "--config", "a.cfg", "--out", "r"])
        .current_dir(dir.path())
        .env("WOPT_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 77);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("a.cfg", "eta = fast\n"),
        ("b.cfg", "no equals sign\n"),
        ("c.cfg", "colour = red\n"),
    ] {
        fs::write(dir.path().join(name), text).unwrap();
        let out = wopt(&["run", "--config", name, "--out", "res"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(!dir.path().join("res").exists(), "{name}");
    }
    let out = wopt(
        &["run", "--config", "missing.cfg", "--out", "res"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("eta = 0.05", "eta = 1e6");
    fs::write(dir.path().join("a.cfg"), text).unwrap();
    let out = wopt(&["run", "--config", "a.cfg", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("block"), "{err}");
}

#[test]
fn gen_data_roundtrips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.spec"),
        "dim = 6\nclasses = 3\nsamples_train = 96\nsamples_test = 30\n",
    )
    .unwrap();
    let out = wopt(
        &[
            "gen-data",
            "--spec",
            "s.spec",
            "--out",
            "train.wopt",
            "--test-out",
            "test.wopt",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let bytes = fs::read(dir.path().join("train.wopt")).unwrap();
    assert_eq!(&bytes[..5], b"WOPT1");
    assert_eq!(bytes.len(), 5 + 12 + 96 * (4 + 6 * 8));

    let cfg = "method = recursive\ndataset = files\ntrain_file = train.wopt\ntest_file = test.wopt\nbatch_size = 8\nepochs = 2\nhidden = 8\n";
    fs::write(dir.path().join("f.cfg"), cfg).unwrap();
    let out = wopt(&["run", "--config", "f.cfg", "--out", "res"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = wopt(&["run", "--config", "f.cfg", "--out", "res2"], dir.path());
    assert!(out.status.success());
    fs::write(
        dir.path().join("g.cfg"),
        format!("{cfg}architecture = convnet\n"),
    )
    .unwrap();
    let out = wopt(&["run", "--config", "g.cfg", "--out", "res3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_suites() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["equivalence", "recursiveq", "whitening"] {
        let out = wopt(&["verify", suite], dir.path());
        assert!(out.status.success(), "{suite}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.lines().all(|l| l.contains("PASS")), "{text}");
    }
    assert_eq!(
        wopt(&["verify", "nonsense"], dir.path()).status.code(),
        Some(2)
    );
}
