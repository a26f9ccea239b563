use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn qseal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qseal")).current_dir(dir).args(args).output().expect("spawn qseal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value of `key=` in a key=value report.
fn field(text: &str, key: &str) -> String {
    let prefix = format!("{key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in:\n{text}"))
        .to_string()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,p_a,method,value_bits,stderr"));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn run_derives_shot_count_and_decodes() {
    let dir = TempDir::new().unwrap();
    let o = qseal(dir.path(), &["run", "--p-a", "0.1", "--c-m", "0.95", "--strategy", "passive", "--seed", "7", "--out", "t.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = stdout(&o);
    assert_eq!(field(&summary, "shots"), "59");
    assert_eq!(field(&summary, "p_a"), "0.100000000000");
    assert_eq!(field(&summary, "decoded"), field(&summary, "message"));
    let transcript = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    assert!(transcript.lines().next().unwrap().contains(r#""shots":59"#));

    let again = qseal(dir.path(), &["run", "--p-a", "0.1", "--c-m", "0.95", "--seed", "7", "--out", "u.jsonl"]);
    assert_eq!(std::fs::read(dir.path().join("u.jsonl")).unwrap(), transcript.as_bytes());
    assert_eq!(field(&stdout(&again), "decoded"), field(&summary, "decoded"));
}

#[test]
fn missing_p_a_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let o = qseal(dir.path(), &["run", "--c-m", "0.95"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`p_a`"), "{}", stderr(&o));
    assert!(!dir.path().join("transcript.jsonl").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("session.conf"), "# test session\np_a = 0.5\nC_m = 0.95\nseed = 3\nout = from_file.jsonl\n").unwrap();
    let o = qseal(dir.path(), &["run", "--config", "session.conf", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = stdout(&o);
    assert_eq!(field(&summary, "shots"), "11");
    assert_eq!(field(&summary, "seed"), "4");
    assert!(dir.path().join("from_file.jsonl").exists());

    std::fs::write(dir.path().join("bad.conf"), "p_a = 0.5\nshots = 10\n").unwrap();
    let o = qseal(dir.path(), &["run", "--config", "bad.conf"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`shots`"));
}

#[test]
fn intercept_resend_error_rate_near_a_quarter() {
    let dir = TempDir::new().unwrap();
    let o = qseal(
        dir.path(),
        &["run", "--p-a", "0.1", "--n", "4000", "--strategy", "intercept_resend basis=random", "--seed", "1", "--out", "ir.jsonl"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = stdout(&o);
    let rate: f64 = field(&summary, "error_rate").parse().unwrap();
    let matched: f64 = field(&summary, "matched_results").parse().unwrap();
    // Four binomial standard errors.
    assert!((rate - 0.25).abs() <= 4.0 * (0.25 * 0.75 / matched).sqrt(), "{rate} over {matched}");
}

#[test]
fn exposure_separates_clean_and_attacked_transcripts() {
    let dir = TempDir::new().unwrap();
    for (strategy, out) in [("passive", "clean.jsonl"), ("intercept_resend basis=random", "attacked.jsonl")] {
        let o = qseal(dir.path(), &["run", "--p-a", "0.1", "--c-m", "0.95", "--strategy", strategy, "--seed", "7", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }

    let clean = qseal(dir.path(), &["exposure", "clean.jsonl", "--delta", "0.1", "--out", "clean.report"]);
    assert!(clean.status.success(), "{}", stderr(&clean));
    let report = std::fs::read_to_string(dir.path().join("clean.report")).unwrap();
    assert!(field(&report, "exposure_bits").parse::<f64>().unwrap() <= 0.01);
    assert_eq!(field(&report, "family"), "stationary");
    assert_eq!(field(&report, "argmax").split(',').count(), 59);

    let attacked = qseal(dir.path(), &["exposure", "attacked.jsonl", "--delta", "0.1"]);
    assert!(attacked.status.success(), "{}", stderr(&attacked));
    assert!(field(&stdout(&attacked), "exposure_bits").parse::<f64>().unwrap() > 0.1);

    let empty = qseal(dir.path(), &["exposure", "clean.jsonl", "--delta", "1.5"]);
    assert_eq!(empty.status.code(), Some(3), "{}", stderr(&empty));

    std::fs::write(dir.path().join("junk.jsonl"), "{\"format\":\"something-else\"}\n").unwrap();
    let junk = qseal(dir.path(), &["exposure", "junk.jsonl"]);
    assert_eq!(junk.status.code(), Some(1));
}

#[test]
fn mi_tables() {
    let dir = TempDir::new().unwrap();
    let passive = qseal(dir.path(), &["mi", "--strategy", "passive", "--n", "1..=4", "--p-a", "0.2,0.8", "--method", "direct,factored"]);
    assert!(passive.status.success(), "{}", stderr(&passive));
    let rows = csv_rows(&stdout(&passive));
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r[3] == "0"));

    let sweep = qseal(
        dir.path(),
        &["mi", "--strategy", "intercept_resend basis=z", "--n", "3", "--p-a", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", "--method", "factored"],
    );
    let values: Vec<f64> = csv_rows(&stdout(&sweep)).iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(values.len(), 9);
    assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");

    let out = dir.path().join("mi.csv");
    let both = qseal(
        dir.path(),
        &["mi", "--strategy", "intercept_resend basis=random", "--n", "4", "--p-a", "0.4", "--method", "direct,mc", "--samples", "20000", "--seed", "5", "--out", out.to_str().unwrap()],
    );
    assert!(both.status.success(), "{}", stderr(&both));
    let rows = csv_rows(&std::fs::read_to_string(&out).unwrap());
    let exact: f64 = rows[0][3].parse().unwrap();
    let (mc, se): (f64, f64) = (rows[1][3].parse().unwrap(), rows[1][4].parse().unwrap());
    assert_eq!(rows[1][2], "mc");
    assert!((mc - exact).abs() <= 3.0 * se, "{mc} vs {exact} (stderr {se})");

    let capped = qseal(dir.path(), &["mi", "--strategy", "intercept_resend basis=z", "--n", "9", "--method", "direct"]);
    assert!(!capped.status.success());
    assert!(stderr(&capped).contains("--method mc"), "{}", stderr(&capped));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn network_session_matches_local_run() {
    let dir = TempDir::new().unwrap();
    let endpoint = format!("127.0.0.1:{}", free_port());
    let alice = Command::new(env!("CARGO_BIN_EXE_qseal"))
        .current_dir(dir.path())
        .args(["run", "--mode", "network", "--role", "alice", "--endpoint", &endpoint, "--out", "alice.jsonl"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // Bob retries the connection while Alice starts listening.
    let bob = qseal(
        dir.path(),
        &["run", "--mode", "network", "--role", "bob", "--endpoint", &endpoint, "--p-a", "0.3", "--c-m", "0.95", "--seed", "12", "--out", "bob.jsonl"],
    );
    let alice = alice.wait_with_output().unwrap();
    assert!(bob.status.success(), "{}", stderr(&bob));
    assert!(alice.status.success(), "{}", stderr(&alice));

    let local = qseal(dir.path(), &["run", "--p-a", "0.3", "--c-m", "0.95", "--seed", "12", "--out", "local.jsonl"]);
    assert!(local.status.success());
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("alice.jsonl"), read("local.jsonl"));
    assert_eq!(read("bob.jsonl"), read("local.jsonl"));
    assert_eq!(stdout(&alice), stdout(&local).replace("local.jsonl", "alice.jsonl"));
}

#[test]
fn bob_refuses_an_embedded_eavesdropper() {
    let dir = TempDir::new().unwrap();
    let o = qseal(
        dir.path(),
        &["run", "--mode", "network", "--role", "bob", "--endpoint", "127.0.0.1:9", "--p-a", "0.3", "--n", "5", "--strategy", "intercept_resend basis=x"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`strategy`"));
}

#[test]
fn selftest_passes_and_repeats() {
    let dir = TempDir::new().unwrap();
    let first = qseal(dir.path(), &["selftest"]);
    assert!(first.status.success(), "{}", stdout(&first));
    assert!(stdout(&first).contains("selftest: 10 passed, 0 failed"));
    let second = qseal(dir.path(), &["selftest"]);
    assert_eq!(stdout(&first), stdout(&second));
}
