//! `gsa`: groupwise-key secure aggregation from the command line.
//!
//! One binary, subcommand style. Every run prints the seeds it used, every
//! command takes `--json` for machine consumption, and verification
//! commands exit nonzero on any failed check.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gsa_core::combin::binom;
use gsa_core::fixture;
use gsa_core::keys::KeyMaterial;
use gsa_core::leakage::{brute_force_mi, leakage_rank};
use gsa_core::params::{groupwise_overhead, rate_region, ParamsError, Rate, SchemeParams};
use gsa_core::rounds::InputVector;
use gsa_core::sweep::{exhaustive_dropout_sweep, SweepOptions, DEFAULT_PATTERN_BUDGET};
use gsa_core::transcript::{direct_sum, run_aggregation};
use gsa_core::usermatrix::{build_validated, decodability_matrix, ValidatedScheme};
use gsa_core::view::{build_view_system, VerifyError};
use gsa_core::witness::{build_witness, is_permutation_of_identity};
use gsa_net::bench::{mean_total_ms, rows_to_csv, run_case, BenchCase};
use gsa_net::client::{run_client, ClientOptions};
use gsa_net::config::{DropPlan, SessionConfig};
use gsa_net::frame::Packing;
use gsa_net::server::{serve_once, ServerOptions};

#[derive(Parser)]
#[command(
    name = "gsa",
    about = "Two-round secure aggregation with groupwise keys over a prime field",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the optimal rate pair for (k, u, s) and the groupwise overhead
    Rates(RatesArgs),
    /// Build a validated scheme fixture and write it as JSON
    Fixture(FixtureArgs),
    /// Cut per-user key files for an existing fixture
    Keygen(KeygenArgs),
    /// Run one aggregation epoch in memory and check it against the direct sum
    Simulate(SimulateArgs),
    /// Re-decode a dumped transcript and compare with its recorded sum
    Replay(ReplayArgs),
    /// Verify a fixture: dropout sweep, leakage ranks, enumeration oracle
    Verify(VerifyArgs),
    /// Build the deterministic unit witness for one survivor set
    Witness(WitnessArgs),
    /// Serve one aggregation epoch over TCP
    Serve(ServeArgs),
    /// Run one user against a server
    Client(ClientArgs),
    /// Run the benchmark matrix from a config file and emit CSV
    Bench(BenchArgs),
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    u: usize,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    u: usize,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 2147483647)]
    q: u64,
    #[arg(long)]
    l: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    max_attempts: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    fixture: PathBuf,
    /// Comma-separated first-round survivors, e.g. 1,2,3
    #[arg(long)]
    u1: String,
    /// Comma-separated second-round survivors (subset of --u1)
    #[arg(long)]
    u2: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the transcript dump here
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    fixture: PathBuf,
    /// decode | leak | mi | all
    #[arg(long, default_value = "all")]
    mode: String,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lift the pattern budget for long sweeps
    #[arg(long)]
    force: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct WitnessArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    u: usize,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 2147483647)]
    q: u64,
    /// Input length; defaults to the smallest legal value
    #[arg(long)]
    l: Option<usize>,
    /// Comma-separated survivor set of size u
    #[arg(long)]
    u2: String,
    /// Pivot user outside the survivor set
    #[arg(long)]
    pivot: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Attach the transcript dump to the record
    #[arg(long)]
    dump_transcript: bool,
    /// Write the aggregation record here
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long)]
    connect: String,
    #[arg(long)]
    fixture: PathBuf,
    /// Per-user key file produced by keygen
    #[arg(long)]
    keys: PathBuf,
    #[arg(long)]
    user: usize,
    /// Input vector JSON; absent inputs are generated from --input-seed
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    input_seed: u64,
    /// never | after-round1 | before-round2 | p=0.25
    #[arg(long, default_value = "never")]
    drop_plan: String,
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV output path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Rates(a) => cmd_rates(&a),
        Command::Fixture(a) => cmd_fixture(&a),
        Command::Keygen(a) => cmd_keygen(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Replay(a) => cmd_replay(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Witness(a) => cmd_witness(&a),
        Command::Serve(a) => cmd_serve(&a),
        Command::Client(a) => cmd_client(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn rate_json(r: Rate) -> serde_json::Value {
    json!({ "num": r.num, "den": r.den, "text": r.to_string() })
}

fn cmd_rates(a: &RatesArgs) -> Result<bool> {
    match rate_region(a.k, a.u, a.s) {
        Ok((r1, r2)) => {
            let overhead = groupwise_overhead(a.k, a.u, a.s)?;
            let collapsed = a.s > a.k - a.u;
            if a.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "feasible": true,
                        "k": a.k, "u": a.u, "s": a.s,
                        "r1": rate_json(r1),
                        "r2": rate_json(r2),
                        "unconstrained_keys": { "r1": rate_json(Rate::new(1, 1)), "r2": rate_json(Rate::new(1, a.u as u64)) },
                        "round1_overhead": rate_json(overhead),
                        "large_group_regime": collapsed,
                    }))?
                );
            } else {
                println!("(k, u, s) = ({}, {}, {})", a.k, a.u, a.s);
                println!("optimal rates:        r1 = {r1}, r2 = {r2}");
                println!("unconstrained keys:   r1 = 1, r2 = 1/{}", a.u);
                println!("round-1 overhead:     {overhead}");
                if collapsed {
                    println!("s > k - u: every group always has a survivor; no key-only blocks needed");
                }
            }
            Ok(true)
        }
        Err(ParamsError::GroupSizeOne) => {
            if a.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "feasible": false,
                        "k": a.k, "u": a.u, "s": a.s,
                        "reason": "with groups of size 1 no key is shared, so secure aggregation is not possible",
                    }))?
                );
            } else {
                println!(
                    "(k, u, s) = ({}, {}, {}): infeasible; with groups of size 1 no key is shared, so secure aggregation is not possible",
                    a.k, a.u, a.s
                );
            }
            Ok(true)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_fixture(a: &FixtureArgs) -> Result<bool> {
    let params = SchemeParams::new(a.k, a.u, a.s, a.q, a.l)?;
    let scheme = build_validated(&params, a.seed, a.max_attempts)?;
    fixture::save_fixture(&scheme, &a.out)?;
    let digest = fixture::checksum_hex(std::fs::read(&a.out)?.as_slice());
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "out": a.out.display().to_string(),
                "seed": a.seed,
                "attempts": scheme.attempts,
                "checksum": digest,
                "r1": rate_json(params.rate1()),
                "r2": rate_json(params.rate2()),
            }))?
        );
    } else {
        println!(
            "fixture written to {} (seed {}, validated on attempt {}, checksum {})",
            a.out.display(),
            a.seed,
            scheme.attempts,
            digest
        );
    }
    Ok(true)
}

fn load_fixture_with_digest(path: &Path) -> Result<(ValidatedScheme, String, u64)> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading fixture {}", path.display()))?;
    let scheme = fixture::fixture_from_json(&content)?;
    let digest = fixture::checksum(content.as_bytes());
    Ok((scheme, content, digest))
}

fn cmd_keygen(a: &KeygenArgs) -> Result<bool> {
    let (scheme, content, _) = load_fixture_with_digest(&a.fixture)?;
    let params = scheme.family.params().clone();
    let keys = KeyMaterial::generate(&params, a.seed);
    std::fs::create_dir_all(&a.out_dir)?;
    let mut files = Vec::new();
    for k in 1..=params.k {
        let path = a.out_dir.join(format!("user{k}.keys.json"));
        std::fs::write(&path, fixture::keyfile_to_json(&params, &keys, k, &content))?;
        files.push(path.display().to_string());
    }
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({ "seed": a.seed, "files": files }))?
        );
    } else {
        println!("key files for {} users written under {} (seed {})", params.k, a.out_dir.display(), a.seed);
    }
    Ok(true)
}

fn parse_user_list(s: &str) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| anyhow!("bad user id {p:?}")))
        .collect::<Result<_>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<bool> {
    let (scheme, _, _) = load_fixture_with_digest(&a.fixture)?;
    let params = scheme.family.params().clone();
    let u1 = parse_user_list(&a.u1)?;
    let u2 = parse_user_list(&a.u2)?;
    // validate the survivor arguments before any protocol work
    if u1.iter().any(|&k| k < 1 || k > params.k) {
        bail!("--u1 contains ids outside 1..={}", params.k);
    }
    if !u2.iter().all(|k| u1.contains(k)) {
        bail!("--u2 must be a subset of --u1");
    }
    if u2.len() < params.u {
        bail!("--u2 needs at least u = {} survivors", params.u);
    }

    let key_seed = a.seed.wrapping_add(0x6b65797373);
    let input_seed = a.seed.wrapping_add(0x696e70757473);
    let keys = KeyMaterial::generate(&params, key_seed);
    let inputs: Vec<InputVector> = (1..=params.k)
        .map(|k| InputVector::random(&params, k, input_seed.wrapping_add(k as u64)))
        .collect();
    let t = run_aggregation(&params, &scheme.family, &scheme.ums, &keys, &inputs, &u1, &u2)?;
    let expected = direct_sum(&params, &inputs, &u1);
    let ok = t.decoded.as_deref() == Some(expected.as_slice());
    if let Some(dump) = &a.dump {
        let seeds = std::collections::BTreeMap::from([
            ("run".to_string(), a.seed),
            ("keys".to_string(), key_seed),
            ("inputs".to_string(), input_seed),
        ]);
        std::fs::write(dump, fixture::transcript_to_json_with_seeds(&params, &t, &seeds))?;
    }
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "seed": a.seed,
                "u1": u1, "u2": u2,
                "decoded_matches_direct_sum": ok,
                "decoded_digest": format!("{:016x}", sum_digest(t.decoded.as_deref().unwrap_or(&[]))),
            }))?
        );
    } else {
        println!("seed {}: u1 = {u1:?}, u2 = {u2:?}", a.seed);
        println!(
            "decoded sum {} the direct sum over u1",
            if ok { "matches" } else { "DOES NOT match" }
        );
    }
    Ok(ok)
}

fn sum_digest(symbols: &[u64]) -> u64 {
    let bytes: Vec<u8> = symbols.iter().flat_map(|&s| (s as u32).to_le_bytes()).collect();
    fixture::checksum(&bytes)
}

fn cmd_replay(a: &ReplayArgs) -> Result<bool> {
    let (scheme, _, _) = load_fixture_with_digest(&a.fixture)?;
    let json = std::fs::read_to_string(&a.transcript)?;
    let (params, transcript) = fixture::transcript_from_json(&json)?;
    if &params != scheme.family.params() {
        bail!("transcript parameters do not match the fixture");
    }
    let redecoded = transcript.decode(&params, &scheme.ums)?;
    let ok = transcript.decoded.as_deref() == Some(redecoded.as_slice());
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "replayed_matches_recorded": ok,
                "decoded_digest": format!("{:016x}", sum_digest(&redecoded)),
            }))?
        );
    } else {
        println!(
            "replayed decode {} the recorded sum",
            if ok { "matches" } else { "DOES NOT match" }
        );
    }
    Ok(ok)
}

fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let (scheme, _, _) = load_fixture_with_digest(&a.fixture)?;
    let params = scheme.family.params().clone();
    let mut checks: Vec<(String, String, bool)> = Vec::new();

    let want_decode = matches!(a.mode.as_str(), "decode" | "all");
    let want_leak = matches!(a.mode.as_str(), "leak" | "all");
    let want_mi = matches!(a.mode.as_str(), "mi" | "all");
    if !(want_decode || want_leak || want_mi) {
        bail!("unknown mode {:?} (expected decode, leak, mi, or all)", a.mode);
    }

    checks.push((
        "construction".into(),
        "security rank, aligned rank, zero structure".into(),
        scheme.family.verify_security_rank()
            && scheme.family.verify_alignment_rank()
            && gsa_core::usermatrix::verify_zero_structure(&scheme.family, &scheme.ums)
            && gsa_core::usermatrix::verify_decodability(&params, &scheme.ums),
    ));

    if want_decode {
        let opts = SweepOptions {
            trials_per_pattern: a.trials,
            seed: a.seed,
            max_patterns: if a.force { usize::MAX } else { DEFAULT_PATTERN_BUDGET },
        };
        match exhaustive_dropout_sweep(&params, &scheme.family, &scheme.ums, &opts) {
            Ok(report) => checks.push((
                "decode-sweep".into(),
                format!(
                    "{} patterns x {} trials, {} failures",
                    report.patterns,
                    a.trials,
                    report.failures.len()
                ),
                report.all_passed(),
            )),
            Err(VerifyError::SweepBudgetExceeded { patterns, budget }) => {
                bail!("sweep of {patterns} patterns exceeds the budget of {budget}; pass --force to run anyway")
            }
            Err(e) => return Err(e.into()),
        }
    }

    if want_leak {
        let subsets_total: usize = (params.u..=params.k)
            .map(|m| binom(params.k as i64, m as i64) as usize)
            .sum();
        if subsets_total > 4096 && !a.force {
            bail!("{subsets_total} survivor sets exceed the leakage budget; pass --force to run anyway");
        }
        let mut all_pass = true;
        let mut worst = String::new();
        for m in params.u..=params.k {
            for u1 in gsa_core::combin::subsets(params.k, m) {
                let vs = build_view_system(&params, &scheme.family, &scheme.ums, u1.members(), None)?;
                let report = leakage_rank(&params, &vs);
                if !report.pass {
                    all_pass = false;
                    worst = format!(
                        "u1 = {:?}: marginal {} (want {}), conditional {}",
                        report.u1, report.i_w_view, params.l, report.i_w_view_given_sum
                    );
                }
            }
        }
        checks.push((
            "leakage-rank".into(),
            if all_pass {
                format!("{subsets_total} survivor sets, all reveal exactly the sum")
            } else {
                worst
            },
            all_pass,
        ));
    }

    if want_mi {
        match brute_force_mi(&params, &scheme.family, &scheme.ums, &(1..=params.k).collect::<Vec<_>>(), None) {
            Ok(mi) => checks.push((
                "enumeration-oracle".into(),
                format!("I(W; view | sum) = {mi}"),
                mi.is_zero(),
            )),
            Err(VerifyError::TooLargeToEnumerate { symbols, budget_bits }) => {
                let note = format!("skipped: {symbols} symbols exceed the 2^{budget_bits} enumeration budget");
                if a.mode == "mi" {
                    bail!(note);
                }
                checks.push(("enumeration-oracle".into(), note, true));
            }
            Err(e) => return Err(e.into()),
        }
    }

    let all_ok = checks.iter().all(|(_, _, ok)| *ok);
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "seed": a.seed,
                "checks": checks.iter().map(|(name, detail, ok)| json!({
                    "name": name, "detail": detail, "pass": ok,
                })).collect::<Vec<_>>(),
                "pass": all_ok,
            }))?
        );
    } else {
        println!("seed {}", a.seed);
        for (name, detail, ok) in &checks {
            println!("{:<20} {}  [{}]", name, detail, if *ok { "PASS" } else { "FAIL" });
        }
        println!("overall: {}", if all_ok { "PASS" } else { "FAIL" });
    }
    Ok(all_ok)
}

fn cmd_witness(a: &WitnessArgs) -> Result<bool> {
    let probe = rate_region(a.k, a.u, a.s)?;
    let _ = probe;
    let n_pieces = (binom(a.k as i64 - 1, a.s as i64 - 1)
        - binom(a.k as i64 - 1 - a.u as i64, a.s as i64 - 1)) as usize;
    let l = a.l.unwrap_or(a.u * n_pieces);
    let params = SchemeParams::new(a.k, a.u, a.s, a.q, l)?;
    let u2 = parse_user_list(&a.u2)?;
    let w = build_witness(&params, &u2, a.pivot)?;
    let m = decodability_matrix(&params, &w.ums, &w.u2);
    let ok = is_permutation_of_identity(&m);
    let ball_total: usize = w.urns.iter().map(Vec::len).sum();
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "u2": w.u2, "pivot": w.pivot,
                "urns": w.urns.len(),
                "balls": ball_total,
                "decode_matrix_is_permutation_identity": ok,
            }))?
        );
    } else {
        println!(
            "survivors {:?}, pivot {}: {} urns, {} balls ({} per urn)",
            w.u2,
            w.pivot,
            w.urns.len(),
            ball_total,
            params.u
        );
        println!("decode system dimensions: {} x {}", m.rows(), m.cols());
        println!(
            "decode matrix is {} a row permutation of the identity",
            if ok { "exactly" } else { "NOT" }
        );
        if m.rows() <= 16 {
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(u64::to_string).collect();
                println!("  [{}]", row.join(" "));
            }
        }
    }
    Ok(ok)
}

fn load_session_config(path: Option<&PathBuf>) -> Result<SessionConfig> {
    match path {
        Some(p) => {
            let content = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            Ok(serde_json::from_str(&content)?)
        }
        None => Ok(SessionConfig::default()),
    }
}

fn cmd_serve(a: &ServeArgs) -> Result<bool> {
    let mut cfg = load_session_config(a.config.as_ref())?;
    if let Some(listen) = &a.listen {
        cfg.listen = listen.clone();
    }
    if let Some(t) = a.timeout_ms {
        cfg.round1_timeout_ms = t;
        cfg.round2_timeout_ms = t;
    }
    let fixture_path = a
        .fixture
        .clone()
        .or_else(|| cfg.fixture.clone().map(PathBuf::from))
        .ok_or_else(|| anyhow!("--fixture or a config fixture path is required"))?;
    let (scheme, _, digest) = load_fixture_with_digest(&fixture_path)?;
    let params = scheme.family.params().clone();

    let listener = TcpListener::bind(&cfg.listen)
        .with_context(|| format!("binding {}", cfg.listen))?;
    let addr = listener.local_addr()?;
    eprintln!("listening on {addr} for {} users", params.k);
    let opts = ServerOptions {
        round1_timeout_ms: cfg.round1_timeout_ms,
        round2_timeout_ms: cfg.round2_timeout_ms,
        fixture_checksum: digest,
        dump_transcript: a.dump_transcript,
    };
    let record = serve_once(listener, &params, &scheme.ums, &opts)?;
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&record)?)?;
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&record)?);
    } else {
        println!("u1 = {:?}, u2 = {:?}", record.u1, record.u2);
        println!(
            "round1 {:.1} ms, round2 {:.1} ms, decode {:.1} ms, total {:.1} ms",
            record.round1_ms, record.round2_ms, record.decode_ms, record.total_ms
        );
        println!("result digest {:016x}", sum_digest(&record.result));
        for v in &record.violations {
            println!("violation: {v}");
        }
    }
    Ok(true)
}

fn cmd_client(a: &ClientArgs) -> Result<bool> {
    let (scheme, content, digest) = load_fixture_with_digest(&a.fixture)?;
    let params = scheme.family.params().clone();
    let keyfile = std::fs::read_to_string(&a.keys)?;
    let (owner, keys) = fixture::keyfile_from_json(&params, &keyfile, &content)?;
    if owner != a.user {
        bail!("key file belongs to user {owner}, not {}", a.user);
    }
    let input = match &a.input {
        Some(path) => {
            let input = fixture::input_from_json(&params, &std::fs::read_to_string(path)?)?;
            if input.owner != a.user {
                bail!("input file belongs to user {}, not {}", input.owner, a.user);
            }
            input
        }
        None => InputVector::random(&params, a.user, a.input_seed.wrapping_add(a.user as u64)),
    };
    let opts = ClientOptions {
        addr: a.connect.clone(),
        user_id: a.user,
        drop_plan: a.drop_plan.parse::<DropPlan>()?,
        packing: Packing::for_modulus(params.q),
        fixture_checksum: digest,
        timeout_ms: a.timeout_ms,
        seed: a.input_seed,
        connect_retries: 50,
    };
    let record = run_client(&opts, &params, &scheme.family, &scheme.ums, &keys, &input)?;
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&record)?)?;
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&record)?);
    } else {
        println!(
            "user {}: sent {} + {} wire bytes{}",
            record.user_id,
            record.bytes_r1,
            record.bytes_r2,
            record
                .dropped_at
                .as_deref()
                .map(|j| format!(", dropped {j}"))
                .unwrap_or_default()
        );
    }
    Ok(true)
}

fn cmd_bench(a: &BenchArgs) -> Result<bool> {
    let content = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading config {}", a.config.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&content)?;
    let cases: Vec<BenchCase> = serde_json::from_value(
        doc.get("cases")
            .cloned()
            .ok_or_else(|| anyhow!("config must contain a \"cases\" array"))?,
    )?;
    let mut all_rows = Vec::new();
    let mut summaries = Vec::new();
    for case in &cases {
        let (rows, _) = run_case(case).map_err(|e| anyhow!("case (k={}, u={}, s={}, l={}): {e}", case.k, case.u, case.s, case.l))?;
        summaries.push(json!({
            "k": case.k, "u": case.u, "s": case.s, "l": case.l, "q": case.q,
            "seed": case.seed,
            "repeats": case.repeats,
            "mean_total_ms": mean_total_ms(&rows),
        }));
        all_rows.extend(rows);
    }
    let csv = rows_to_csv(&all_rows);
    match &a.out {
        Some(path) => std::fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&json!({ "cases": summaries }))?);
    } else if a.out.is_some() {
        for s in &summaries {
            println!(
                "(k={}, u={}, s={}, l={}): mean total {:.2} ms over {} repeats",
                s["k"], s["u"], s["s"], s["l"], s["mean_total_ms"].as_f64().unwrap_or(0.0), s["repeats"]
            );
        }
    }
    Ok(true)
}
