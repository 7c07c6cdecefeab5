//! Behavior of the `gsa` binary itself: exit codes, JSON output, argument
//! validation, and a full two-process wire session.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gsa() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gsa"))
}

fn run(args: &[&str]) -> Output {
    gsa().args(args).output().expect("spawn gsa")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad json: {e}\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gsa-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn make_fixture(dir: &Path) -> PathBuf {
    let path = dir.join("fixture.json");
    let out = run(&[
        "fixture", "--k", "4", "--u", "2", "--s", "2", "--q", "7", "--l", "8", "--seed", "11",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn rates_json_and_infeasible_group_size() {
    let out = run(&["rates", "--k", "5", "--u", "2", "--s", "3", "--json"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["r1"]["text"], "6/5");
    assert_eq!(v["r2"]["text"], "1/2");
    assert_eq!(v["round1_overhead"]["text"], "1/5");

    let out = run(&["rates", "--k", "5", "--u", "2", "--s", "1", "--json"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["feasible"], false);

    let out = run(&["rates", "--k", "5", "--u", "4", "--s", "3", "--json"]);
    let v = stdout_json(&out);
    assert_eq!(v["r1"]["text"], "1");
    assert_eq!(v["round1_overhead"]["text"], "0");
    assert_eq!(v["large_group_regime"], true);
}

#[test]
fn simulate_rejects_bad_survivor_arguments_before_running() {
    let dir = tempdir("simulate-args");
    let fixture = make_fixture(&dir);
    let out = run(&[
        "simulate",
        "--fixture",
        fixture.to_str().unwrap(),
        "--u1",
        "1,2",
        "--u2",
        "1,3",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("subset"));

    let out = run(&[
        "simulate",
        "--fixture",
        fixture.to_str().unwrap(),
        "--u1",
        "1,2,3",
        "--u2",
        "2",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least"));
}

#[test]
fn simulate_and_replay_roundtrip() {
    let dir = tempdir("simulate-replay");
    let fixture = make_fixture(&dir);
    let dump = dir.join("transcript.json");
    let out = run(&[
        "simulate",
        "--fixture",
        fixture.to_str().unwrap(),
        "--u1",
        "1,2,4",
        "--u2",
        "2,4",
        "--seed",
        "5",
        "--dump",
        dump.to_str().unwrap(),
        "--json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["decoded_matches_direct_sum"], true);
    assert_eq!(v["seed"], 5);

    let out = run(&[
        "replay",
        "--transcript",
        dump.to_str().unwrap(),
        "--fixture",
        fixture.to_str().unwrap(),
        "--json",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["replayed_matches_recorded"], true);
}

#[test]
fn verify_passes_on_good_fixture_and_fails_on_corrupted_one() {
    let dir = tempdir("verify");
    let fixture = make_fixture(&dir);
    let out = run(&[
        "verify",
        "--fixture",
        fixture.to_str().unwrap(),
        "--mode",
        "all",
        "--json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["pass"], true);

    // corrupt one matrix row: duplicate user 1's first row into its second
    let content = std::fs::read_to_string(&fixture).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&content).unwrap();
    let first = doc["Sk"]["1"][0].clone();
    doc["Sk"]["1"][1] = first;
    let bad = dir.join("bad.json");
    std::fs::write(&bad, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = run(&["verify", "--fixture", bad.to_str().unwrap(), "--mode", "decode"]);
    assert!(!out.status.success());
}

#[test]
fn witness_json_reports_permutation_identity() {
    let out = run(&[
        "witness", "--k", "5", "--u", "2", "--s", "3", "--u2", "2,4", "--pivot", "1", "--json",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["decode_matrix_is_permutation_identity"], true);
    assert_eq!(v["urns"], 5);
    assert_eq!(v["balls"], 10);
}

#[test]
fn bench_writes_the_timing_table() {
    let dir = tempdir("bench");
    let config = dir.join("bench.json");
    std::fs::write(
        &config,
        r#"{ "cases": [ { "k": 4, "u": 2, "s": 2, "q": 7, "l": 16, "seed": 2, "repeats": 2 } ] }"#,
    )
    .unwrap();
    let csv_path = dir.join("rows.csv");
    let out = run(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,u,s,l,q,repeat,round1_ms,round2_ms,decode_ms,total_ms,bytes_r1,bytes_r2"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn serve_and_clients_over_processes() {
    let dir = tempdir("serve");
    let fixture = make_fixture(&dir);
    let keys_dir = dir.join("keys");
    let out = run(&[
        "keygen",
        "--fixture",
        fixture.to_str().unwrap(),
        "--seed",
        "8",
        "--out-dir",
        keys_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let record_path = dir.join("record.json");
    let port = 39600 + (std::process::id() % 200) as u16;
    let addr = format!("127.0.0.1:{port}");
    let mut server = gsa()
        .args([
            "serve",
            "--listen",
            &addr,
            "--fixture",
            fixture.to_str().unwrap(),
            "--timeout-ms",
            "8000",
            "--out",
            record_path.to_str().unwrap(),
            "--json",
        ])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();

    let mut clients = Vec::new();
    for user in 1..=4 {
        let keyfile = keys_dir.join(format!("user{user}.keys.json"));
        let plan = if user == 3 { "before-round2" } else { "never" };
        clients.push(
            gsa()
                .args([
                    "client",
                    "--connect",
                    &addr,
                    "--fixture",
                    fixture.to_str().unwrap(),
                    "--keys",
                    keyfile.to_str().unwrap(),
                    "--user",
                    &user.to_string(),
                    "--input-seed",
                    "44",
                    "--drop-plan",
                    plan,
                ])
                .stdout(std::process::Stdio::null())
                .spawn()
                .unwrap(),
        );
    }
    for mut c in clients {
        assert!(c.wait().unwrap().success());
    }
    assert!(server.wait().unwrap().success());

    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&record_path).unwrap()).unwrap();
    assert_eq!(record["u1"], serde_json::json!([1, 2, 3, 4]));
    assert_eq!(record["u2"], serde_json::json!([1, 2, 4]));
    assert_eq!(record["result"].as_array().unwrap().len(), 8);
}
