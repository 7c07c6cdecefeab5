//! JSON interchange: scheme fixtures, per-user key files, and transcript
//! dumps.
//!
//! Fixtures carry the parameters, the build seed, the full coefficient map
//! `a` keyed by group (`"1,2,3"`), and the per-user matrices `Sk`, with all
//! residues as decimal strings so any consumer can parse them without
//! integer-width concerns. Transcripts carry hex-encoded symbol blocks
//! (little-endian four bytes per symbol, independent of wire packing).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combin::Group;
use crate::family::CoefficientFamily;
use crate::keys::KeyMaterial;
use crate::matrix::FieldMatrix;
use crate::params::SchemeParams;
use crate::rounds::{Round1Message, Round2Message};
use crate::transcript::Transcript;
use crate::usermatrix::{UserMatrixSet, ValidatedScheme};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad residue string {0:?}")]
    BadResidue(String),
    #[error("bad group key {0:?}")]
    BadGroupKey(String),
    #[error("bad hex block: {0}")]
    BadHex(#[from] hex::FromHexError),
    #[error("hex block length is not a multiple of 4 bytes")]
    BadBlockLength,
    #[error("params: {0}")]
    Params(#[from] crate::params::ParamsError),
    #[error("family: {0}")]
    Family(#[from] crate::family::FamilyError),
    #[error("matrices: {0}")]
    Build(#[from] crate::usermatrix::BuildError),
    #[error("keys: {0}")]
    Key(#[from] crate::keys::KeyError),
    #[error("key file checksum {got} does not match fixture checksum {want}")]
    ChecksumMismatch { got: String, want: String },
    #[error("user id {0} out of range")]
    BadUser(usize),
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    k: usize,
    u: usize,
    s: usize,
    q: u64,
    l: usize,
}

/// On-disk fixture document.
#[derive(Serialize, Deserialize)]
struct FixtureDoc {
    params: ParamsDoc,
    seed: u64,
    attempts: u32,
    a: BTreeMap<String, Vec<String>>,
    #[serde(rename = "Sk")]
    sk: BTreeMap<String, Vec<Vec<String>>>,
}

fn residues_to_strings(v: &[u64]) -> Vec<String> {
    v.iter().map(u64::to_string).collect()
}

fn strings_to_residues(v: &[String], q: u64) -> Result<Vec<u64>, FixtureError> {
    v.iter()
        .map(|s| {
            s.parse::<u64>()
                .ok()
                .filter(|&x| x < q)
                .ok_or_else(|| FixtureError::BadResidue(s.clone()))
        })
        .collect()
}

/// Serializes a validated scheme to the fixture JSON document.
pub fn fixture_to_json(scheme: &ValidatedScheme) -> String {
    let params = scheme.family.params();
    let doc = FixtureDoc {
        params: ParamsDoc {
            k: params.k,
            u: params.u,
            s: params.s,
            q: params.q,
            l: params.l,
        },
        seed: scheme.family.seed().unwrap_or(0),
        attempts: scheme.attempts,
        a: scheme
            .family
            .vectors()
            .iter()
            .map(|(g, v)| (g.key(), residues_to_strings(v)))
            .collect(),
        sk: (1..=params.k)
            .map(|k| {
                let m = scheme.ums.sk(k);
                let rows = (0..m.rows())
                    .map(|r| residues_to_strings(m.row(r)))
                    .collect();
                (k.to_string(), rows)
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("fixture serialization cannot fail")
}

/// Parses and revalidates a fixture document: the coefficient map must
/// satisfy the alternating construction and the matrices must have the
/// right shapes.
pub fn fixture_from_json(json: &str) -> Result<ValidatedScheme, FixtureError> {
    let doc: FixtureDoc = serde_json::from_str(json)?;
    let params = SchemeParams::new(doc.params.k, doc.params.u, doc.params.s, doc.params.q, doc.params.l)?;
    let mut vectors = BTreeMap::new();
    for (key, vals) in &doc.a {
        let group =
            Group::parse_key(key).ok_or_else(|| FixtureError::BadGroupKey(key.clone()))?;
        vectors.insert(group, strings_to_residues(vals, params.q)?);
    }
    let family = CoefficientFamily::from_vectors(&params, vectors, Some(doc.seed))?;
    let mut sks = Vec::with_capacity(params.k);
    for k in 1..=params.k {
        let rows = doc
            .sk
            .get(&k.to_string())
            .ok_or(FixtureError::BadUser(k))?;
        let rows: Result<Vec<Vec<u64>>, _> =
            rows.iter().map(|r| strings_to_residues(r, params.q)).collect();
        sks.push(FieldMatrix::from_rows(params.q, rows?));
    }
    let ums = UserMatrixSet::from_matrices(&family, sks, None)?;
    Ok(ValidatedScheme {
        family,
        ums,
        attempts: doc.attempts,
    })
}

pub fn save_fixture(scheme: &ValidatedScheme, path: &Path) -> Result<(), FixtureError> {
    std::fs::write(path, fixture_to_json(scheme))?;
    Ok(())
}

pub fn load_fixture(path: &Path) -> Result<ValidatedScheme, FixtureError> {
    fixture_from_json(&std::fs::read_to_string(path)?)
}

/// FNV-1a 64-bit digest; used to tie key files to the fixture they were cut
/// for.
pub fn checksum(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn checksum_hex(bytes: &[u8]) -> String {
    format!("{:016x}", checksum(bytes))
}

/// Per-user key file.
#[derive(Serialize, Deserialize)]
struct KeyFileDoc {
    user: usize,
    fixture_checksum: String,
    keys: BTreeMap<String, Vec<String>>,
}

/// Serializes `user`'s restriction of `keys`, stamped with the checksum of
/// the fixture JSON it belongs to.
pub fn keyfile_to_json(
    params: &SchemeParams,
    keys: &KeyMaterial,
    user: usize,
    fixture_json: &str,
) -> String {
    let _ = params;
    let mine = keys.restrict_to_user(user);
    let doc = KeyFileDoc {
        user,
        fixture_checksum: checksum_hex(fixture_json.as_bytes()),
        keys: mine
            .into_map()
            .iter()
            .map(|(g, v)| (g.key(), residues_to_strings(v)))
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("key file serialization cannot fail")
}

/// Loads a key file, verifying it was cut for the given fixture JSON.
pub fn keyfile_from_json(
    params: &SchemeParams,
    json: &str,
    fixture_json: &str,
) -> Result<(usize, KeyMaterial), FixtureError> {
    let doc: KeyFileDoc = serde_json::from_str(json)?;
    let want = checksum_hex(fixture_json.as_bytes());
    if doc.fixture_checksum != want {
        return Err(FixtureError::ChecksumMismatch {
            got: doc.fixture_checksum,
            want,
        });
    }
    if doc.user < 1 || doc.user > params.k {
        return Err(FixtureError::BadUser(doc.user));
    }
    let mut map = BTreeMap::new();
    for (key, vals) in &doc.keys {
        let group =
            Group::parse_key(key).ok_or_else(|| FixtureError::BadGroupKey(key.clone()))?;
        map.insert(group, strings_to_residues(vals, params.q)?);
    }
    Ok((doc.user, KeyMaterial::from_symbols(params, map)?))
}

/// Input-vector file.
#[derive(Serialize, Deserialize)]
struct InputDoc {
    owner: usize,
    symbols: Vec<String>,
}

pub fn input_to_json(input: &crate::rounds::InputVector) -> String {
    let doc = InputDoc {
        owner: input.owner,
        symbols: residues_to_strings(&input.symbols),
    };
    serde_json::to_string_pretty(&doc).expect("input serialization cannot fail")
}

pub fn input_from_json(
    params: &SchemeParams,
    json: &str,
) -> Result<crate::rounds::InputVector, FixtureError> {
    let doc: InputDoc = serde_json::from_str(json)?;
    if doc.owner < 1 || doc.owner > params.k {
        return Err(FixtureError::BadUser(doc.owner));
    }
    let symbols = strings_to_residues(&doc.symbols, params.q)?;
    crate::rounds::InputVector::new(params, doc.owner, symbols)
        .map_err(|_| FixtureError::BadBlockLength)
}

fn symbols_to_hex(symbols: &[u64]) -> String {
    let mut bytes = Vec::with_capacity(symbols.len() * 4);
    for &s in symbols {
        bytes.extend_from_slice(&(s as u32).to_le_bytes());
    }
    hex::encode(bytes)
}

fn hex_to_symbols(s: &str) -> Result<Vec<u64>, FixtureError> {
    let bytes = hex::decode(s)?;
    if bytes.len() % 4 != 0 {
        return Err(FixtureError::BadBlockLength);
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as u64)
        .collect())
}

/// Transcript dump document.
#[derive(Serialize, Deserialize)]
struct TranscriptDoc {
    params: ParamsDoc,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    seeds: BTreeMap<String, u64>,
    u1: Vec<usize>,
    u2: Vec<usize>,
    round1: BTreeMap<String, String>,
    round2: BTreeMap<String, String>,
    decoded: Option<String>,
}

pub fn transcript_to_json(params: &SchemeParams, t: &Transcript) -> String {
    transcript_to_json_with_seeds(params, t, &BTreeMap::new())
}

/// Like [`transcript_to_json`], recording the seeds the run was driven by
/// (live sessions have none; simulations record theirs).
pub fn transcript_to_json_with_seeds(
    params: &SchemeParams,
    t: &Transcript,
    seeds: &BTreeMap<String, u64>,
) -> String {
    let doc = TranscriptDoc {
        params: ParamsDoc {
            k: params.k,
            u: params.u,
            s: params.s,
            q: params.q,
            l: params.l,
        },
        seeds: seeds.clone(),
        u1: t.u1.clone(),
        u2: t.u2.clone(),
        round1: t
            .round1
            .iter()
            .map(|(k, m)| (k.to_string(), symbols_to_hex(&m.flatten())))
            .collect(),
        round2: t
            .round2
            .iter()
            .map(|(k, m)| (k.to_string(), symbols_to_hex(&m.flatten())))
            .collect(),
        decoded: t.decoded.as_ref().map(|d| symbols_to_hex(d)),
    };
    serde_json::to_string_pretty(&doc).expect("transcript serialization cannot fail")
}

pub fn transcript_from_json(json: &str) -> Result<(SchemeParams, Transcript), FixtureError> {
    let doc: TranscriptDoc = serde_json::from_str(json)?;
    let params = SchemeParams::new(doc.params.k, doc.params.u, doc.params.s, doc.params.q, doc.params.l)?;
    let mut round1 = BTreeMap::new();
    for (k, hex_block) in &doc.round1 {
        let user: usize = k.parse().map_err(|_| FixtureError::BadGroupKey(k.clone()))?;
        let flat = hex_to_symbols(hex_block)?;
        round1.insert(
            user,
            Round1Message::from_flat(&params, user, &flat)
                .map_err(|_| FixtureError::BadBlockLength)?,
        );
    }
    let mut round2 = BTreeMap::new();
    for (k, hex_block) in &doc.round2 {
        let user: usize = k.parse().map_err(|_| FixtureError::BadGroupKey(k.clone()))?;
        let flat = hex_to_symbols(hex_block)?;
        round2.insert(
            user,
            Round2Message::from_flat(&params, user, doc.u1.clone(), &flat)
                .map_err(|_| FixtureError::BadBlockLength)?,
        );
    }
    let decoded = doc.decoded.as_deref().map(hex_to_symbols).transpose()?;
    Ok((
        params,
        Transcript {
            u1: doc.u1,
            u2: doc.u2,
            round1,
            round2,
            decoded,
        },
    ))
}
