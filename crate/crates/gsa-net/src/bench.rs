//! Loopback benchmark harness: one embedded server plus `k` client threads
//! per repeat, timing rows in CSV form.

use std::collections::BTreeMap;
use std::net::TcpListener;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use gsa_core::fixture::{checksum, fixture_to_json};
use gsa_core::keys::KeyMaterial;
use gsa_core::params::SchemeParams;
use gsa_core::rounds::InputVector;
use gsa_core::usermatrix::{build_validated, ValidatedScheme};

use crate::client::{run_client, ClientOptions, ClientRecord};
use crate::config::DropPlan;
use crate::frame::Packing;
use crate::server::{serve_once, AggregationRecord, ServerOptions};
use crate::NetError;

/// One benchmark configuration; matrices of cases live in the config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchCase {
    pub k: usize,
    pub u: usize,
    pub s: usize,
    pub q: u64,
    /// Input symbols per user.
    pub l: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub drop_plan: BTreeMap<usize, DropPlan>,
    #[serde(default = "default_build_attempts")]
    pub build_attempts: u32,
    #[serde(default = "default_bench_timeout")]
    pub timeout_ms: u64,
}

fn default_repeats() -> usize {
    1
}

fn default_build_attempts() -> u32 {
    400
}

fn default_bench_timeout() -> u64 {
    10_000
}

/// One CSV row.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub k: usize,
    pub u: usize,
    pub s: usize,
    pub l: usize,
    pub q: u64,
    pub repeat: usize,
    pub round1_ms: f64,
    pub round2_ms: f64,
    pub decode_ms: f64,
    pub total_ms: f64,
    /// Largest per-user wire load in each round, headers included.
    pub bytes_r1: u64,
    pub bytes_r2: u64,
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out =
        String::from("k,u,s,l,q,repeat,round1_ms,round2_ms,decode_ms,total_ms,bytes_r1,bytes_r2\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{},{}\n",
            r.k,
            r.u,
            r.s,
            r.l,
            r.q,
            r.repeat,
            r.round1_ms,
            r.round2_ms,
            r.decode_ms,
            r.total_ms,
            r.bytes_r1,
            r.bytes_r2
        ));
    }
    out
}

/// Outcome of one in-process epoch.
#[derive(Debug)]
pub struct LoopbackOutcome {
    pub record: AggregationRecord,
    pub clients: Vec<Result<ClientRecord, NetError>>,
}

/// Runs one epoch over loopback: binds an ephemeral port, spawns the server
/// and `k` clients on threads, and joins everything.
#[allow(clippy::too_many_arguments)]
pub fn run_loopback_epoch(
    params: &SchemeParams,
    scheme: &ValidatedScheme,
    keys: &KeyMaterial,
    inputs: &[InputVector],
    drop_plan: &BTreeMap<usize, DropPlan>,
    timeout_ms: u64,
    seed: u64,
    dump_transcript: bool,
) -> Result<LoopbackOutcome, NetError> {
    let fixture_digest = checksum(fixture_to_json(scheme).as_bytes());
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server_params = params.clone();
    let server_ums = scheme.ums.clone();
    let opts = ServerOptions {
        round1_timeout_ms: timeout_ms,
        round2_timeout_ms: timeout_ms,
        fixture_checksum: fixture_digest,
        dump_transcript,
    };
    let server = std::thread::spawn(move || serve_once(listener, &server_params, &server_ums, &opts));

    let shared = Arc::new((params.clone(), scheme.family.clone(), scheme.ums.clone()));
    let packing = Packing::for_modulus(params.q);
    let mut handles = Vec::new();
    for k in 1..=params.k {
        let shared = Arc::clone(&shared);
        let keys = keys.restrict_to_user(k);
        let input = inputs[k - 1].clone();
        let copts = ClientOptions {
            addr: addr.to_string(),
            user_id: k,
            drop_plan: drop_plan.get(&k).copied().unwrap_or_default(),
            packing,
            fixture_checksum: fixture_digest,
            timeout_ms,
            seed: seed.wrapping_add(k as u64),
            connect_retries: 50,
        };
        handles.push(std::thread::spawn(move || {
            let (params, family, ums) = &*shared;
            run_client(&copts, params, family, ums, &keys, &input)
        }));
    }
    let clients: Vec<Result<ClientRecord, NetError>> =
        handles.into_iter().map(|h| h.join().expect("client thread")).collect();
    let record = server.join().expect("server thread")?;
    Ok(LoopbackOutcome { record, clients })
}

/// Runs a full benchmark case: builds (or is handed) a fixture, then one
/// loopback epoch per repeat with fresh seeded keys and inputs.
pub fn run_case(case: &BenchCase) -> Result<(Vec<BenchRow>, Vec<AggregationRecord>), NetError> {
    let params = SchemeParams::new(case.k, case.u, case.s, case.q, case.l)
        .map_err(|e| NetError::Config(e.to_string()))?;
    let scheme = build_validated(&params, case.seed, case.build_attempts)
        .map_err(|e| NetError::Config(e.to_string()))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for repeat in 0..case.repeats {
        let epoch_seed = case.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(repeat as u64);
        let keys = KeyMaterial::generate(&params, epoch_seed);
        let inputs: Vec<InputVector> = (1..=case.k)
            .map(|k| InputVector::random(&params, k, epoch_seed.wrapping_add(1000 + k as u64)))
            .collect();
        let outcome = run_loopback_epoch(
            &params,
            &scheme,
            &keys,
            &inputs,
            &case.drop_plan,
            case.timeout_ms,
            epoch_seed,
            false,
        )?;
        rows.push(BenchRow {
            k: case.k,
            u: case.u,
            s: case.s,
            l: case.l,
            q: case.q,
            repeat,
            round1_ms: outcome.record.round1_ms,
            round2_ms: outcome.record.round2_ms,
            decode_ms: outcome.record.decode_ms,
            total_ms: outcome.record.total_ms,
            bytes_r1: outcome.record.bytes_r1.values().copied().max().unwrap_or(0),
            bytes_r2: outcome.record.bytes_r2.values().copied().max().unwrap_or(0),
        });
        records.push(outcome.record);
    }
    Ok((rows, records))
}

/// Mean total time of a run, for size-sweep comparisons.
pub fn mean_total_ms(rows: &[BenchRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| r.total_ms).sum::<f64>() / rows.len() as f64
}
