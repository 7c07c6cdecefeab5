//! The user side: one sequential connection through the two rounds, with
//! deliberate dropout injection for fault testing.

use std::net::TcpStream;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use gsa_core::family::CoefficientFamily;
use gsa_core::fixture::checksum;
use gsa_core::keys::KeyMaterial;
use gsa_core::params::SchemeParams;
use gsa_core::rounds::{round1_encode, round2_encode, InputVector};
use gsa_core::usermatrix::UserMatrixSet;

use crate::config::DropPlan;
use crate::frame::{
    hello_payload, pack_symbols, parse_survivors, read_frame, unpack_symbols, write_frame,
    MsgType, Packing,
};
use crate::NetError;

/// Room for a server-side diagnostic in an ERROR frame.
const ERROR_TEXT_CAP: usize = 512;

#[derive(Clone, Debug)]
pub struct ClientOptions {
    pub addr: String,
    pub user_id: usize,
    pub drop_plan: DropPlan,
    pub packing: Packing,
    pub fixture_checksum: u64,
    pub timeout_ms: u64,
    /// Seed for probabilistic drop decisions.
    pub seed: u64,
    /// Reconnect attempts while the server socket comes up.
    pub connect_retries: u32,
}

/// What one client measured and saw.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClientRecord {
    pub user_id: usize,
    /// Wire bytes sent per round, headers included.
    pub bytes_r1: u64,
    pub bytes_r2: u64,
    /// FNV digests of the two payloads, for replay-determinism checks.
    pub r1_payload_digest: u64,
    pub r2_payload_digest: Option<u64>,
    /// Which juncture the drop plan fired at, if any.
    pub dropped_at: Option<String>,
    pub u1: Option<Vec<usize>>,
    pub result: Option<Vec<u64>>,
}

/// Runs one user through an epoch: HELLO, ROUND1, survivor wait, ROUND2
/// (unless the drop plan fires), RESULT.
pub fn run_client(
    opts: &ClientOptions,
    params: &SchemeParams,
    family: &CoefficientFamily,
    ums: &UserMatrixSet,
    keys: &KeyMaterial,
    input: &InputVector,
) -> Result<ClientRecord, NetError> {
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut stream = connect(&opts.addr, opts.connect_retries)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_millis(opts.timeout_ms.max(10))))?;

    let mut record = ClientRecord {
        user_id: opts.user_id,
        bytes_r1: 0,
        bytes_r2: 0,
        r1_payload_digest: 0,
        r2_payload_digest: None,
        dropped_at: None,
        u1: None,
        result: None,
    };

    write_frame(
        &mut stream,
        MsgType::Hello,
        opts.user_id as u16,
        &hello_payload(opts.packing, opts.fixture_checksum),
    )?;

    if fires(&mut rng, opts.drop_plan, Juncture::BeforeRound1) {
        record.dropped_at = Some("before-round1".into());
        return Ok(record);
    }

    let msg = round1_encode(params, family, keys, input)?;
    let payload = pack_symbols(&msg.flatten(), opts.packing);
    record.r1_payload_digest = checksum(&payload);
    record.bytes_r1 =
        write_frame(&mut stream, MsgType::Round1, opts.user_id as u16, &payload)? as u64;

    if matches!(opts.drop_plan, DropPlan::AfterRound1) {
        record.dropped_at = Some("after-round1".into());
        return Ok(record);
    }

    // caps sized for the expected frame or a short diagnostic
    let survivors = match read_frame(&mut stream, (2 * params.k).max(ERROR_TEXT_CAP)) {
        Ok(f) if f.msg_type == MsgType::Survivors => parse_survivors(&f.payload)?,
        Ok(f) if f.msg_type == MsgType::Error => {
            return Err(NetError::ServerAbort(
                String::from_utf8_lossy(&f.payload).into_owned(),
            ));
        }
        Ok(f) => {
            return Err(NetError::ProtocolViolation(format!(
                "expected survivor list, got {:?}",
                f.msg_type
            )));
        }
        Err(NetError::Io(e)) if e.kind() == std::io::ErrorKind::WouldBlock => {
            return Err(NetError::Timeout("survivor list"));
        }
        Err(e) => return Err(e),
    };
    record.u1 = Some(survivors.clone());

    if fires(&mut rng, opts.drop_plan, Juncture::BeforeRound2)
        || matches!(opts.drop_plan, DropPlan::BeforeRound2)
    {
        record.dropped_at = Some("before-round2".into());
        return Ok(record);
    }

    let msg = round2_encode(params, family, ums, keys, opts.user_id, &survivors)?;
    let payload = pack_symbols(&msg.flatten(), opts.packing);
    record.r2_payload_digest = Some(checksum(&payload));
    record.bytes_r2 =
        write_frame(&mut stream, MsgType::Round2, opts.user_id as u16, &payload)? as u64;

    // The result is best-effort from the client's perspective.
    match read_frame(&mut stream, (params.l * opts.packing.width()).max(ERROR_TEXT_CAP)) {
        Ok(f) if f.msg_type == MsgType::Result => {
            record.result = Some(unpack_symbols(&f.payload, opts.packing, params.q)?);
        }
        Ok(f) if f.msg_type == MsgType::Error => {
            return Err(NetError::ServerAbort(
                String::from_utf8_lossy(&f.payload).into_owned(),
            ));
        }
        _ => {}
    }
    Ok(record)
}

enum Juncture {
    BeforeRound1,
    BeforeRound2,
}

fn fires(rng: &mut ChaCha20Rng, plan: DropPlan, _at: Juncture) -> bool {
    match plan {
        DropPlan::Probability(p) => rng.gen_bool(p),
        _ => false,
    }
}

fn connect(addr: &str, retries: u32) -> Result<TcpStream, NetError> {
    let mut last = None;
    for _ in 0..=retries {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => {
                last = Some(e);
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    }
    Err(NetError::Io(last.expect("at least one attempt")))
}
