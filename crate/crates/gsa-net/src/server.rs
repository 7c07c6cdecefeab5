//! The aggregation server: collects round-one messages until a deadline,
//! announces the survivor set, collects round-two messages, decodes, and
//! answers with the sum.
//!
//! Survivor membership is operational: a user is in `u1` exactly when its
//! round-one message arrived before the deadline, and in `u2` when its
//! round-two message did. Each connection runs on its own thread; round
//! barriers are the synchronization points. A malformed or oversized frame
//! disqualifies only its own connection; the epoch proceeds with everyone
//! else.

use std::collections::BTreeMap;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use gsa_core::params::SchemeParams;
use gsa_core::rounds::{server_decode, server_round1_aggregate, Round1Message, Round2Message};
use gsa_core::transcript::Transcript;
use gsa_core::usermatrix::UserMatrixSet;

use crate::frame::{
    read_frame, survivors_payload, write_frame, Frame, MsgType, parse_hello,
    pack_symbols, unpack_symbols, HEADER_LEN,
};
use crate::NetError;

#[derive(Clone, Debug)]
pub struct ServerOptions {
    pub round1_timeout_ms: u64,
    pub round2_timeout_ms: u64,
    /// Checksum of the fixture JSON; HELLOs carrying anything else are
    /// turned away before any symbol is accepted.
    pub fixture_checksum: u64,
    /// Attach the full transcript dump to the record.
    pub dump_transcript: bool,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            round1_timeout_ms: 5_000,
            round2_timeout_ms: 5_000,
            fixture_checksum: 0,
            dump_transcript: false,
        }
    }
}

/// Everything measured in one epoch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregationRecord {
    pub u1: Vec<usize>,
    pub u2: Vec<usize>,
    pub result: Vec<u64>,
    pub round1_ms: f64,
    pub round2_ms: f64,
    pub decode_ms: f64,
    pub total_ms: f64,
    /// Wire bytes received per user in each round, headers included.
    pub bytes_r1: BTreeMap<usize, u64>,
    pub bytes_r2: BTreeMap<usize, u64>,
    pub violations: Vec<String>,
    pub transcript_json: Option<String>,
}

enum Event {
    Round1 {
        conn: usize,
        user: usize,
        symbols: Vec<u64>,
        wire_bytes: u64,
    },
    Round2 {
        conn: usize,
        user: usize,
        symbols: Vec<u64>,
        wire_bytes: u64,
    },
    Round2Missing {
        user: usize,
        reason: String,
    },
    Violation {
        conn: usize,
        reason: String,
    },
}

enum Directive {
    Survivors(Vec<usize>),
    Result(Vec<u64>),
    Abort(String),
}

struct Conn {
    directives: Sender<Directive>,
}

/// Runs one aggregation epoch on an already-bound listener.
pub fn serve_once(
    listener: TcpListener,
    params: &SchemeParams,
    ums: &UserMatrixSet,
    opts: &ServerOptions,
) -> Result<AggregationRecord, NetError> {
    let start = Instant::now();
    let (events_tx, events_rx) = std::sync::mpsc::channel::<Event>();
    let stop = Arc::new(AtomicBool::new(false));
    let mut conns: BTreeMap<usize, Conn> = BTreeMap::new();
    let mut violations = Vec::new();

    listener.set_nonblocking(true)?;
    let acceptor = spawn_acceptor(
        listener,
        params.clone(),
        opts.clone(),
        events_tx.clone(),
        Arc::clone(&stop),
    );

    // Conn registration arrives through the same event channel to keep a
    // single receive loop; handlers announce themselves with their first
    // event. Directive senders are registered out of band.
    let registry = acceptor.registry;

    // Round one: wait for k distinct users or the deadline.
    let r1_deadline = start + Duration::from_millis(opts.round1_timeout_ms);
    let mut round1: BTreeMap<usize, (usize, Vec<u64>, u64)> = BTreeMap::new();
    loop {
        if round1.len() == params.k {
            break;
        }
        let Some(timeout) = r1_deadline.checked_duration_since(Instant::now()) else {
            break;
        };
        refresh_conns(&registry, &mut conns);
        match events_rx.recv_timeout(timeout) {
            Ok(Event::Round1 {
                conn,
                user,
                symbols,
                wire_bytes,
            }) => {
                refresh_conns(&registry, &mut conns);
                if user < 1 || user > params.k || round1.contains_key(&user) {
                    let reason = format!("rejected round-one sender {user} on conn {conn}");
                    violations.push(reason.clone());
                    abort_conn(&conns, conn, reason);
                    continue;
                }
                round1.insert(user, (conn, symbols, wire_bytes));
            }
            Ok(Event::Violation { conn, reason }) => {
                violations.push(reason.clone());
                refresh_conns(&registry, &mut conns);
                abort_conn(&conns, conn, reason);
            }
            Ok(_) => {}
            Err(RecvTimeoutError::Timeout) => break,
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    stop.store(true, Ordering::SeqCst);
    refresh_conns(&registry, &mut conns);
    let u1: Vec<usize> = round1.keys().copied().collect();
    let round1_ms = elapsed_ms(start);

    if u1.len() < params.u {
        broadcast(&conns, || Directive::Abort("too few first-round survivors".into()));
        return Err(NetError::TooFewSurvivors {
            round: "round one",
            got: u1.len(),
            need: params.u,
        });
    }

    // Announce survivors to their connections, turn everyone else away.
    let survivor_conns: Vec<usize> = u1.iter().map(|k| round1[k].0).collect();
    for (&conn_id, conn) in &conns {
        if survivor_conns.contains(&conn_id) {
            let _ = conn.directives.send(Directive::Survivors(u1.clone()));
        } else {
            let _ = conn
                .directives
                .send(Directive::Abort("not in the survivor set".into()));
        }
    }
    let r2_start = Instant::now();

    // Round two.
    let r2_deadline = r2_start + Duration::from_millis(opts.round2_timeout_ms);
    let mut round2: BTreeMap<usize, (Vec<u64>, u64)> = BTreeMap::new();
    let mut accounted: usize = 0;
    loop {
        if accounted == u1.len() {
            break;
        }
        let Some(timeout) = r2_deadline.checked_duration_since(Instant::now()) else {
            break;
        };
        match events_rx.recv_timeout(timeout) {
            Ok(Event::Round2 {
                conn,
                user,
                symbols,
                wire_bytes,
            }) => {
                if !u1.contains(&user) || round2.contains_key(&user) {
                    let reason = format!("rejected round-two sender {user}");
                    violations.push(reason.clone());
                    abort_conn(&conns, conn, reason);
                    continue;
                }
                round2.insert(user, (symbols, wire_bytes));
                accounted += 1;
            }
            Ok(Event::Round2Missing { user, reason }) => {
                if u1.contains(&user) && !round2.contains_key(&user) {
                    violations.push(format!("user {user}: {reason}"));
                    accounted += 1;
                }
            }
            Ok(Event::Violation { conn, reason }) => {
                violations.push(reason.clone());
                abort_conn(&conns, conn, reason);
            }
            Ok(_) => {}
            Err(RecvTimeoutError::Timeout) => break,
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    let u2: Vec<usize> = round2.keys().copied().collect();
    let round2_ms = elapsed_ms(r2_start);

    if u2.len() < params.u {
        broadcast(&conns, || Directive::Abort("too few second-round survivors".into()));
        return Err(NetError::TooFewSurvivors {
            round: "round two",
            got: u2.len(),
            need: params.u,
        });
    }

    // Decode.
    let decode_start = Instant::now();
    let r1_msgs: Vec<Round1Message> = u1
        .iter()
        .map(|&k| Round1Message::from_flat(params, k, &round1[&k].1))
        .collect::<Result<_, _>>()?;
    let agg = server_round1_aggregate(params, &r1_msgs)?;
    let r2_msgs: Vec<Round2Message> = u2
        .iter()
        .map(|&k| Round2Message::from_flat(params, k, u1.clone(), &round2[&k].0))
        .collect::<Result<_, _>>()?;
    let result = server_decode(params, ums, &agg, &r2_msgs)?;
    let decode_ms = elapsed_ms(decode_start);

    broadcast(&conns, || Directive::Result(result.clone()));

    let transcript_json = opts.dump_transcript.then(|| {
        let t = Transcript {
            u1: u1.clone(),
            u2: u2.clone(),
            round1: r1_msgs.iter().map(|m| (m.sender, m.clone())).collect(),
            round2: r2_msgs.iter().map(|m| (m.sender, m.clone())).collect(),
            decoded: Some(result.clone()),
        };
        gsa_core::fixture::transcript_to_json(params, &t)
    });

    Ok(AggregationRecord {
        u1,
        u2: u2.clone(),
        result,
        round1_ms,
        round2_ms,
        decode_ms,
        total_ms: elapsed_ms(start),
        bytes_r1: round1.iter().map(|(&k, v)| (k, v.2)).collect(),
        bytes_r2: round2.iter().map(|(&k, v)| (k, v.1)).collect(),
        violations,
        transcript_json,
    })
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn broadcast(conns: &BTreeMap<usize, Conn>, mut make: impl FnMut() -> Directive) {
    for conn in conns.values() {
        let _ = conn.directives.send(make());
    }
}

fn abort_conn(conns: &BTreeMap<usize, Conn>, conn: usize, reason: String) {
    if let Some(c) = conns.get(&conn) {
        let _ = c.directives.send(Directive::Abort(reason));
    }
}

struct Acceptor {
    registry: Receiver<(usize, Sender<Directive>)>,
}

fn refresh_conns(
    registry: &Receiver<(usize, Sender<Directive>)>,
    conns: &mut BTreeMap<usize, Conn>,
) {
    while let Ok((id, directives)) = registry.try_recv() {
        conns.insert(id, Conn { directives });
    }
}

fn spawn_acceptor(
    listener: TcpListener,
    params: SchemeParams,
    opts: ServerOptions,
    events: Sender<Event>,
    stop: Arc<AtomicBool>,
) -> Acceptor {
    let (registry_tx, registry_rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let mut next_conn = 0usize;
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let conn = next_conn;
                    next_conn += 1;
                    let (dir_tx, dir_rx) = std::sync::mpsc::channel();
                    if registry_tx.send((conn, dir_tx)).is_err() {
                        return;
                    }
                    let events = events.clone();
                    let params = params.clone();
                    let opts = opts.clone();
                    std::thread::spawn(move || {
                        handle_connection(stream, conn, &params, &opts, &events, &dir_rx);
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(_) => return,
            }
        }
    });
    Acceptor {
        registry: registry_rx,
    }
}

fn handle_connection(
    mut stream: TcpStream,
    conn: usize,
    params: &SchemeParams,
    opts: &ServerOptions,
    events: &Sender<Event>,
    directives: &Receiver<Directive>,
) {
    let violation = |reason: String, stream: &mut TcpStream| {
        let _ = write_frame(stream, MsgType::Error, 0, reason.as_bytes());
        let _ = events.send(Event::Violation { conn, reason });
    };
    let _ = stream.set_nodelay(true);
    let _ = stream.set_read_timeout(Some(Duration::from_millis(
        opts.round1_timeout_ms.max(10),
    )));

    // HELLO: negotiate packing, check the fixture checksum.
    let hello = match expect_frame(&mut stream, MsgType::Hello, 64) {
        Ok(f) => f,
        Err(e) => return violation(format!("conn {conn}: {e}"), &mut stream),
    };
    let user = hello.user_id as usize;
    let (packing, checksum) = match parse_hello(&hello.payload, params.q) {
        Ok(p) => p,
        Err(e) => return violation(format!("user {user}: {e}"), &mut stream),
    };
    if checksum != opts.fixture_checksum {
        return violation(
            format!("user {user}: fixture checksum mismatch"),
            &mut stream,
        );
    }

    // ROUND1: exact size or nothing.
    let r1_bytes = params.round1_symbols() * packing.width();
    let frame = match expect_frame(&mut stream, MsgType::Round1, r1_bytes) {
        Ok(f) => f,
        Err(e) => return violation(format!("user {user}: {e}"), &mut stream),
    };
    if frame.user_id as usize != user {
        return violation(format!("user id changed mid-session on conn {conn}"), &mut stream);
    }
    if frame.payload.len() != r1_bytes {
        return violation(
            format!(
                "user {user}: round-one payload of {} bytes, expected {r1_bytes}",
                frame.payload.len()
            ),
            &mut stream,
        );
    }
    let symbols = match unpack_symbols(&frame.payload, packing, params.q) {
        Ok(s) => s,
        Err(e) => return violation(format!("user {user}: {e}"), &mut stream),
    };
    if events
        .send(Event::Round1 {
            conn,
            user,
            symbols,
            wire_bytes: (HEADER_LEN + r1_bytes) as u64,
        })
        .is_err()
    {
        return;
    }

    // Barrier: wait for the survivor announcement.
    let u1 = match directives.recv() {
        Ok(Directive::Survivors(u1)) => u1,
        Ok(Directive::Abort(reason)) => {
            let _ = write_frame(&mut stream, MsgType::Error, 0, reason.as_bytes());
            return;
        }
        Ok(Directive::Result(_)) | Err(_) => return,
    };
    if write_frame(&mut stream, MsgType::Survivors, 0, &survivors_payload(&u1)).is_err() {
        let _ = events.send(Event::Round2Missing {
            user,
            reason: "connection lost before the survivor announcement".into(),
        });
        return wait_for_final(directives);
    }

    // ROUND2: exact size, within the deadline.
    let _ = stream.set_read_timeout(Some(Duration::from_millis(
        opts.round2_timeout_ms.max(10),
    )));
    let r2_bytes = params.round2_symbols() * packing.width();
    match expect_frame(&mut stream, MsgType::Round2, r2_bytes) {
        Ok(frame) if frame.payload.len() == r2_bytes => {
            match unpack_symbols(&frame.payload, packing, params.q) {
                Ok(symbols) => {
                    let _ = events.send(Event::Round2 {
                        conn,
                        user,
                        symbols,
                        wire_bytes: (HEADER_LEN + r2_bytes) as u64,
                    });
                }
                Err(e) => violation(format!("user {user}: {e}"), &mut stream),
            }
        }
        Ok(frame) => violation(
            format!(
                "user {user}: round-two payload of {} bytes, expected {r2_bytes}",
                frame.payload.len()
            ),
            &mut stream,
        ),
        Err(_) => {
            let _ = events.send(Event::Round2Missing {
                user,
                reason: "no round-two message before the deadline".into(),
            });
        }
    }

    // Final: result or abort.
    match directives.recv() {
        Ok(Directive::Result(symbols)) => {
            let payload = pack_symbols(&symbols, packing);
            let _ = write_frame(&mut stream, MsgType::Result, 0, &payload);
        }
        Ok(Directive::Abort(reason)) => {
            let _ = write_frame(&mut stream, MsgType::Error, 0, reason.as_bytes());
        }
        _ => {}
    }
}

fn wait_for_final(directives: &Receiver<Directive>) {
    // Drain until the collector finishes so the sender never blocks.
    while let Ok(d) = directives.recv() {
        if matches!(d, Directive::Result(_) | Directive::Abort(_)) {
            return;
        }
    }
}

fn expect_frame(
    stream: &mut TcpStream,
    want: MsgType,
    max_payload: usize,
) -> Result<Frame, NetError> {
    let frame = read_frame(stream, max_payload)?;
    if frame.msg_type != want {
        return Err(NetError::ProtocolViolation(format!(
            "expected {want:?} frame, got {:?}",
            frame.msg_type
        )));
    }
    Ok(frame)
}
