//! In-process loopback sessions: full epochs, dropout injection, protocol
//! abuse, and determinism.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::{TcpListener, TcpStream};

use gsa_core::fixture::{checksum, fixture_to_json, transcript_from_json};
use gsa_core::keys::KeyMaterial;
use gsa_core::params::SchemeParams;
use gsa_core::rounds::InputVector;
use gsa_core::transcript::direct_sum;
use gsa_core::usermatrix::{build_validated, ValidatedScheme};
use gsa_net::bench::{run_case, run_loopback_epoch, BenchCase};
use gsa_net::config::DropPlan;
use gsa_net::frame::{write_frame, MsgType, Packing, HEADER_LEN};
use gsa_net::server::{serve_once, ServerOptions};
use gsa_net::NetError;

fn small_scheme() -> (SchemeParams, ValidatedScheme) {
    let params = SchemeParams::new(5, 2, 3, 7, 20).unwrap();
    let scheme = build_validated(&params, 60, 400).unwrap();
    (params, scheme)
}

fn seeded_epoch_data(params: &SchemeParams, seed: u64) -> (KeyMaterial, Vec<InputVector>) {
    let keys = KeyMaterial::generate(params, seed);
    let inputs = (1..=params.k)
        .map(|k| InputVector::random(params, k, seed + 100 + k as u64))
        .collect();
    (keys, inputs)
}

#[test]
fn clean_epoch_decodes_the_sum() {
    let (params, scheme) = small_scheme();
    let (keys, inputs) = seeded_epoch_data(&params, 1);
    let out = run_loopback_epoch(
        &params,
        &scheme,
        &keys,
        &inputs,
        &BTreeMap::new(),
        5000,
        1,
        true,
    )
    .unwrap();
    assert_eq!(out.record.u1, vec![1, 2, 3, 4, 5]);
    assert_eq!(out.record.u2, vec![1, 2, 3, 4, 5]);
    assert_eq!(out.record.result, direct_sum(&params, &inputs, &out.record.u1));
    // every client heard the same result back
    for c in &out.clients {
        let c = c.as_ref().unwrap();
        assert_eq!(c.result.as_ref(), Some(&out.record.result));
    }
}

#[test]
fn dropouts_after_round_one_still_decode() {
    let (params, scheme) = small_scheme();
    let (keys, inputs) = seeded_epoch_data(&params, 2);
    let drop_plan: BTreeMap<usize, DropPlan> = [
        (2, DropPlan::AfterRound1),
        (4, DropPlan::BeforeRound2),
        (5, DropPlan::AfterRound1),
    ]
    .into();
    let out =
        run_loopback_epoch(&params, &scheme, &keys, &inputs, &drop_plan, 700, 2, false).unwrap();
    // all five made round one, only {1, 3} finished round two
    assert_eq!(out.record.u1, vec![1, 2, 3, 4, 5]);
    assert_eq!(out.record.u2, vec![1, 3]);
    assert_eq!(out.record.result, direct_sum(&params, &inputs, &out.record.u1));
}

#[test]
fn too_many_second_round_drops_abort() {
    let (params, scheme) = small_scheme();
    let (keys, inputs) = seeded_epoch_data(&params, 3);
    let drop_plan: BTreeMap<usize, DropPlan> = (2..=5).map(|k| (k, DropPlan::AfterRound1)).collect();
    let err = run_loopback_epoch(&params, &scheme, &keys, &inputs, &drop_plan, 500, 3, false)
        .unwrap_err();
    assert!(
        matches!(err, NetError::TooFewSurvivors { round: "round two", got: 1, need: 2 }),
        "{err:?}"
    );
}

#[test]
fn absent_clients_abort_round_one() {
    let (params, scheme) = small_scheme();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let opts = ServerOptions {
        round1_timeout_ms: 200,
        round2_timeout_ms: 200,
        fixture_checksum: 0,
        dump_transcript: false,
    };
    // only one of five users shows up at u = 2
    let addr = listener.local_addr().unwrap();
    let digest = checksum(fixture_to_json(&scheme).as_bytes());
    let params2 = params.clone();
    let scheme2 = scheme.clone();
    let client = std::thread::spawn(move || {
        let (keys, inputs) = seeded_epoch_data(&params2, 4);
        let copts = gsa_net::client::ClientOptions {
            addr: addr.to_string(),
            user_id: 1,
            drop_plan: DropPlan::Never,
            packing: Packing::Byte,
            fixture_checksum: digest,
            timeout_ms: 2000,
            seed: 0,
            connect_retries: 50,
        };
        gsa_net::client::run_client(
            &copts,
            &params2,
            &scheme2.family,
            &scheme2.ums,
            &keys.restrict_to_user(1),
            &inputs[0],
        )
    });
    let opts = ServerOptions {
        fixture_checksum: digest,
        ..opts
    };
    let err = serve_once(listener, &params, &scheme.ums, &opts).unwrap_err();
    assert!(
        matches!(err, NetError::TooFewSurvivors { round: "round one", got: 1, need: 2 }),
        "{err:?}"
    );
    // the lone client is told the epoch died
    let client_err = client.join().unwrap().unwrap_err();
    assert!(matches!(client_err, NetError::ServerAbort(_)), "{client_err:?}");
}

#[test]
fn oversized_frame_disqualifies_only_its_sender() {
    let (params, scheme) = small_scheme();
    let digest = checksum(fixture_to_json(&scheme).as_bytes());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let opts = ServerOptions {
        round1_timeout_ms: 800,
        round2_timeout_ms: 800,
        fixture_checksum: digest,
        dump_transcript: false,
    };

    // A rogue connection declares an enormous round-one payload.
    let rogue = std::thread::spawn(move || {
        let mut stream = loop {
            match TcpStream::connect(addr) {
                Ok(s) => break s,
                Err(_) => std::thread::sleep(std::time::Duration::from_millis(10)),
            }
        };
        write_frame(
            &mut stream,
            MsgType::Hello,
            9,
            &gsa_net::frame::hello_payload(Packing::Byte, digest),
        )
        .unwrap();
        // header claims 64 MiB; the server must refuse without reading it
        let mut header = Vec::new();
        header.extend_from_slice(b"GSA1");
        header.push(2);
        header.extend_from_slice(&9u16.to_be_bytes());
        header.extend_from_slice(&(64 * 1024 * 1024u32).to_be_bytes());
        stream.write_all(&header).unwrap();
        stream
    });

    // Five honest clients run a normal epoch alongside the rogue.
    let (keys, inputs) = seeded_epoch_data(&params, 5);
    let shared = std::sync::Arc::new((params.clone(), scheme.family.clone(), scheme.ums.clone()));
    let mut handles = Vec::new();
    for k in 1..=params.k {
        let shared = std::sync::Arc::clone(&shared);
        let keys = keys.restrict_to_user(k);
        let input = inputs[k - 1].clone();
        let copts = gsa_net::client::ClientOptions {
            addr: addr.to_string(),
            user_id: k,
            drop_plan: DropPlan::Never,
            packing: Packing::Byte,
            fixture_checksum: digest,
            timeout_ms: 2000,
            seed: k as u64,
            connect_retries: 50,
        };
        handles.push(std::thread::spawn(move || {
            let (params, family, ums) = &*shared;
            gsa_net::client::run_client(&copts, params, family, ums, &keys, &input)
        }));
    }

    let record = serve_once(listener, &params, &scheme.ums, &opts).unwrap();
    let _ = rogue.join();
    for h in handles {
        h.join().unwrap().unwrap();
    }
    assert_eq!(record.u1, vec![1, 2, 3, 4, 5]);
    assert_eq!(record.result, direct_sum(&params, &inputs, &record.u1));
    assert!(
        record.violations.iter().any(|v| v.contains("exceeds")),
        "violations: {:?}",
        record.violations
    );
}

#[test]
fn mismatched_fixture_checksum_is_turned_away() {
    let (params, scheme) = small_scheme();
    let digest = checksum(fixture_to_json(&scheme).as_bytes());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let opts = ServerOptions {
        round1_timeout_ms: 600,
        round2_timeout_ms: 600,
        fixture_checksum: digest,
        dump_transcript: false,
    };
    let (keys, inputs) = seeded_epoch_data(&params, 9);
    let shared = std::sync::Arc::new((params.clone(), scheme.family.clone(), scheme.ums.clone()));
    let mut handles = Vec::new();
    for k in 1..=params.k {
        let shared = std::sync::Arc::clone(&shared);
        let keys = keys.restrict_to_user(k);
        let input = inputs[k - 1].clone();
        // user 2 holds stale offline material
        let client_digest = if k == 2 { digest ^ 1 } else { digest };
        let copts = gsa_net::client::ClientOptions {
            addr: addr.to_string(),
            user_id: k,
            drop_plan: DropPlan::Never,
            packing: Packing::Byte,
            fixture_checksum: client_digest,
            timeout_ms: 2000,
            seed: k as u64,
            connect_retries: 50,
        };
        handles.push(std::thread::spawn(move || {
            let (params, family, ums) = &*shared;
            gsa_net::client::run_client(&copts, params, family, ums, &keys, &input)
        }));
    }
    let record = serve_once(listener, &params, &scheme.ums, &opts).unwrap();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(record.u1, vec![1, 3, 4, 5]);
    assert_eq!(record.result, direct_sum(&params, &inputs, &record.u1));
    assert!(record.violations.iter().any(|v| v.contains("checksum")));
    assert!(matches!(results[1], Err(NetError::ServerAbort(_))));
}

#[test]
fn payloads_are_deterministic_across_runs() {
    let (params, scheme) = small_scheme();
    let (keys, inputs) = seeded_epoch_data(&params, 6);
    let run = || {
        run_loopback_epoch(&params, &scheme, &keys, &inputs, &BTreeMap::new(), 5000, 6, false)
            .unwrap()
    };
    let a = run();
    let b = run();
    for (ca, cb) in a.clients.iter().zip(&b.clients) {
        let (ca, cb) = (ca.as_ref().unwrap(), cb.as_ref().unwrap());
        assert_eq!(ca.r1_payload_digest, cb.r1_payload_digest);
        assert_eq!(ca.r2_payload_digest, cb.r2_payload_digest);
    }
    assert_eq!(a.record.result, b.record.result);
}

#[test]
fn live_result_equals_transcript_replay() {
    let (params, scheme) = small_scheme();
    let (keys, inputs) = seeded_epoch_data(&params, 7);
    let drop_plan: BTreeMap<usize, DropPlan> = [(3, DropPlan::BeforeRound2)].into();
    let out =
        run_loopback_epoch(&params, &scheme, &keys, &inputs, &drop_plan, 700, 7, true).unwrap();
    let json = out.record.transcript_json.as_ref().expect("dump requested");
    let (tparams, transcript) = transcript_from_json(json).unwrap();
    assert_eq!(tparams, params);
    assert_eq!(transcript.decoded.as_ref(), Some(&out.record.result));
    let replayed = transcript.decode(&params, &scheme.ums).unwrap();
    assert_eq!(replayed, out.record.result);
}

#[test]
fn wire_bytes_match_the_rates_exactly() {
    let (params, scheme) = small_scheme();
    let (keys, inputs) = seeded_epoch_data(&params, 8);
    let out = run_loopback_epoch(&params, &scheme, &keys, &inputs, &BTreeMap::new(), 5000, 8, false)
        .unwrap();
    let width = Packing::for_modulus(params.q).width() as u64;
    let r1_expected = params.rate1().scale_exact(params.l) as u64 * width + HEADER_LEN as u64;
    let r2_expected = (params.l / params.u) as u64 * width + HEADER_LEN as u64;
    for k in 1..=params.k {
        assert_eq!(out.record.bytes_r1[&k], r1_expected);
        assert_eq!(out.record.bytes_r2[&k], r2_expected);
    }
    for c in &out.clients {
        let c = c.as_ref().unwrap();
        assert_eq!(c.bytes_r1, r1_expected);
        assert_eq!(c.bytes_r2, r2_expected);
    }
}

#[test]
fn bench_case_produces_rows() {
    let case = BenchCase {
        k: 4,
        u: 2,
        s: 2,
        q: 7,
        l: 16,
        seed: 9,
        repeats: 3,
        drop_plan: BTreeMap::new(),
        build_attempts: 400,
        timeout_ms: 5000,
    };
    let (rows, records) = run_case(&case).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(records.len(), 3);
    let csv = gsa_net::bench::rows_to_csv(&rows);
    assert!(csv.starts_with("k,u,s,l,q,repeat,"));
    assert_eq!(csv.lines().count(), 4);
    for row in &rows {
        assert!(row.total_ms >= row.decode_ms);
        assert!(row.bytes_r1 > 0 && row.bytes_r2 > 0);
    }
}
