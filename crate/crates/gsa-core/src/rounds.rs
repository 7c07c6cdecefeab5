//! The two round encoders and the server-side aggregation and decode.
//!
//! Round one: user `k` splits its input into `n_pieces` pieces and sends
//! `n_combos` blocks of `piece_len` symbols. The first `n_pieces` blocks are
//! pieces masked by coefficient-weighted sub-keys; the remaining blocks are
//! key-only combinations (absent when `s > k - u`). Round two: each
//! first-round survivor sends `S_k` applied to the stacked coded-key
//! combinations, evaluating unknowable coded keys as zero, which by the
//! structural zeroes of `S_k` changes nothing.
//!
//! The server sums round-one messages, recovers the key-only combination
//! entries directly, solves the survivors' square system for the rest, and
//! subtracts.

use thiserror::Error;

use crate::combin::{subsets_containing, Group};
use crate::field::Fq;
use crate::keys::{KeyError, KeyMaterial};
use crate::matrix::{FieldMatrix, LinalgError};
use crate::params::SchemeParams;
use crate::usermatrix::UserMatrixSet;
use crate::CoefficientFamily;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemeError {
    #[error("input for user {user} has {got} symbols, expected {want}")]
    LengthMismatch {
        user: usize,
        got: usize,
        want: usize,
    },
    #[error("only {got} survivors, need at least {need}")]
    TooFewSurvivors { got: usize, need: usize },
    #[error("user {0} is not a first-round survivor")]
    NotASurvivor(usize),
    #[error("second-round survivors must be first-round survivors")]
    SurvivorsNotNested,
    #[error("decode system is singular; the user matrices were not validated")]
    SingularDecodeMatrix,
    #[error("transcript is missing the {round} message of user {user}")]
    MissingMessage { round: &'static str, user: usize },
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("symbol not reduced mod q")]
    UnreducedSymbol,
}

/// One user's input: `l` symbols, sliced into `n_pieces` contiguous pieces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputVector {
    pub owner: usize,
    pub symbols: Vec<u64>,
}

impl InputVector {
    pub fn new(params: &SchemeParams, owner: usize, symbols: Vec<u64>) -> Result<Self, SchemeError> {
        if symbols.len() != params.l {
            return Err(SchemeError::LengthMismatch {
                user: owner,
                got: symbols.len(),
                want: params.l,
            });
        }
        if symbols.iter().any(|&v| v >= params.q) {
            return Err(SchemeError::UnreducedSymbol);
        }
        Ok(InputVector { owner, symbols })
    }

    pub fn random(params: &SchemeParams, owner: usize, seed: u64) -> InputVector {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        InputVector {
            owner,
            symbols: (0..params.l).map(|_| rng.gen_range(0..params.q)).collect(),
        }
    }

    pub fn piece(&self, params: &SchemeParams, j: usize) -> &[u64] {
        &self.symbols[j * params.piece_len..(j + 1) * params.piece_len]
    }
}

/// Round-one message: `n_combos` blocks of `piece_len` symbols each, so
/// `r1 * l` symbols in total.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Round1Message {
    pub sender: usize,
    pub blocks: Vec<Vec<u64>>,
}

impl Round1Message {
    pub fn symbol_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<u64> {
        self.blocks.concat()
    }

    pub fn from_flat(params: &SchemeParams, sender: usize, flat: &[u64]) -> Result<Self, SchemeError> {
        if flat.len() != params.round1_symbols() {
            return Err(SchemeError::LengthMismatch {
                user: sender,
                got: flat.len(),
                want: params.round1_symbols(),
            });
        }
        let blocks = flat.chunks(params.piece_len).map(<[u64]>::to_vec).collect();
        Ok(Round1Message { sender, blocks })
    }
}

/// Round-two message: `n_pieces` blocks of `codedkey_len` symbols, so `l/u`
/// symbols in total.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Round2Message {
    pub sender: usize,
    pub u1: Vec<usize>,
    pub blocks: Vec<Vec<u64>>,
}

impl Round2Message {
    pub fn symbol_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<u64> {
        self.blocks.concat()
    }

    pub fn from_flat(
        params: &SchemeParams,
        sender: usize,
        u1: Vec<usize>,
        flat: &[u64],
    ) -> Result<Self, SchemeError> {
        if flat.len() != params.round2_symbols() {
            return Err(SchemeError::LengthMismatch {
                user: sender,
                got: flat.len(),
                want: params.round2_symbols(),
            });
        }
        let blocks = flat.chunks(params.codedkey_len).map(<[u64]>::to_vec).collect();
        Ok(Round2Message { sender, u1, blocks })
    }
}

/// Encodes user `k`'s round-one message: block `j` is
/// `W_{k,j} + sum_V a_{V,j} Z_{V,k}` for piece blocks, the key-only sum for
/// the rest. `keys` may be restricted to user `k`'s groups.
pub fn round1_encode(
    params: &SchemeParams,
    family: &CoefficientFamily,
    keys: &KeyMaterial,
    input: &InputVector,
) -> Result<Round1Message, SchemeError> {
    if input.symbols.len() != params.l {
        return Err(SchemeError::LengthMismatch {
            user: input.owner,
            got: input.symbols.len(),
            want: params.l,
        });
    }
    let k = input.owner;
    let f = Fq::new(params.q);
    let my_groups = subsets_containing(params.k, params.s, k);
    let mut blocks = Vec::with_capacity(params.n_combos);
    for j in 0..params.n_combos {
        let mut block = if j < params.n_pieces {
            input.piece(params, j).to_vec()
        } else {
            vec![0u64; params.piece_len]
        };
        for g in &my_groups {
            let coeff = family.coefficient(g, j);
            if coeff == 0 {
                continue;
            }
            let sub = keys.subkey(params, g, k)?;
            for (acc, &z) in block.iter_mut().zip(sub) {
                *acc = f.add(*acc, f.mul(coeff, z));
            }
        }
        blocks.push(block);
    }
    Ok(Round1Message { sender: k, blocks })
}

/// What the server extracts from round one: the `n_pieces` masked sums, and
/// the stacked-combination entries it already knows (index
/// `replica * n_combos + block` for key-only blocks), each a
/// `codedkey_len`-symbol slice of the key-only sums.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Round1Aggregate {
    pub u1: Vec<usize>,
    pub masked_sums: Vec<Vec<u64>>,
    pub known_f: Vec<(usize, Vec<u64>)>,
}

pub fn server_round1_aggregate(
    params: &SchemeParams,
    msgs: &[Round1Message],
) -> Result<Round1Aggregate, SchemeError> {
    if msgs.len() < params.u {
        return Err(SchemeError::TooFewSurvivors {
            got: msgs.len(),
            need: params.u,
        });
    }
    let f = Fq::new(params.q);
    let mut u1: Vec<usize> = msgs.iter().map(|m| m.sender).collect();
    u1.sort_unstable();
    u1.dedup();
    assert_eq!(u1.len(), msgs.len(), "duplicate round-one sender");
    let mut sums = vec![vec![0u64; params.piece_len]; params.n_combos];
    for msg in msgs {
        if msg.symbol_count() != params.round1_symbols() {
            return Err(SchemeError::LengthMismatch {
                user: msg.sender,
                got: msg.symbol_count(),
                want: params.round1_symbols(),
            });
        }
        for (sum, block) in sums.iter_mut().zip(&msg.blocks) {
            for (acc, &v) in sum.iter_mut().zip(block) {
                *acc = f.add(*acc, v);
            }
        }
    }
    let key_only = sums.split_off(params.n_pieces);
    let mut known_f = Vec::new();
    for (offset, sum) in key_only.iter().enumerate() {
        let block = params.n_pieces + offset;
        let w = params.codedkey_len;
        for replica in 0..params.u {
            known_f.push((
                params.f_index(replica, block),
                sum[replica * w..(replica + 1) * w].to_vec(),
            ));
        }
    }
    known_f.sort_by_key(|&(idx, _)| idx);
    Ok(Round1Aggregate {
        u1,
        masked_sums: sums,
        known_f,
    })
}

/// Encodes user `k`'s round-two message `S_k * F`, where the stacked vector
/// `F` is evaluated with every coded key of a foreign group set to zero.
/// The structural zeroes of `S_k` make this equal to the true product; with
/// full key material available the equality is asserted in debug builds.
pub fn round2_encode(
    params: &SchemeParams,
    family: &CoefficientFamily,
    ums: &UserMatrixSet,
    keys: &KeyMaterial,
    k: usize,
    u1: &[usize],
) -> Result<Round2Message, SchemeError> {
    if u1.len() < params.u {
        return Err(SchemeError::TooFewSurvivors {
            got: u1.len(),
            need: params.u,
        });
    }
    if !u1.contains(&k) {
        return Err(SchemeError::NotASurvivor(k));
    }
    let my_groups = subsets_containing(params.k, params.s, k);
    let f_vec = stack_coded_combinations(params, family, keys, u1, &my_groups)?;
    let blocks = apply_sk(params, ums.sk(k), &f_vec);

    #[cfg(debug_assertions)]
    if keys.has_all_groups(params) {
        let all_groups = crate::combin::subsets(params.k, params.s);
        let full = stack_coded_combinations(params, family, keys, u1, &all_groups)?;
        assert_eq!(
            blocks,
            apply_sk(params, ums.sk(k), &full),
            "zero-masked and full-knowledge encodings diverge for user {k}"
        );
    }

    Ok(Round2Message {
        sender: k,
        u1: u1.to_vec(),
        blocks,
    })
}

/// The stacked vector of coded-key combinations restricted to `groups`:
/// entry `(replica, block)` is `sum_V a_{V,block} Z^{U1}_{V,replica}`.
fn stack_coded_combinations(
    params: &SchemeParams,
    family: &CoefficientFamily,
    keys: &KeyMaterial,
    u1: &[usize],
    groups: &[Group],
) -> Result<Vec<Vec<u64>>, SchemeError> {
    let f = Fq::new(params.q);
    let mut stacked = vec![vec![0u64; params.codedkey_len]; params.f_len()];
    let mut summed = vec![0u64; params.subkey_len()];
    for g in groups {
        let survivors: Vec<usize> = g.members().iter().copied().filter(|m| u1.contains(m)).collect();
        if survivors.is_empty() {
            continue;
        }
        summed.fill(0);
        for m in survivors {
            for (acc, &z) in summed.iter_mut().zip(keys.subkey(params, g, m)?) {
                *acc = f.add(*acc, z);
            }
        }
        let w = params.codedkey_len;
        for replica in 0..params.u {
            let slice = &summed[replica * w..(replica + 1) * w];
            for block in 0..params.n_combos {
                let coeff = family.coefficient(g, block);
                if coeff == 0 {
                    continue;
                }
                let entry = &mut stacked[params.f_index(replica, block)];
                for (acc, &z) in entry.iter_mut().zip(slice) {
                    *acc = f.add(*acc, f.mul(coeff, z));
                }
            }
        }
    }
    Ok(stacked)
}

/// Block-wise product `sk * f_vec` where each entry of `f_vec` is a
/// `codedkey_len`-symbol block.
fn apply_sk(params: &SchemeParams, sk: &FieldMatrix, f_vec: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let f = Fq::new(params.q);
    (0..sk.rows())
        .map(|r| {
            let mut out = vec![0u64; params.codedkey_len];
            for (c, block) in f_vec.iter().enumerate() {
                let coeff = sk.get(r, c);
                if coeff == 0 {
                    continue;
                }
                for (acc, &v) in out.iter_mut().zip(block) {
                    *acc = f.add(*acc, f.mul(coeff, v));
                }
            }
            out
        })
        .collect()
}

/// Decodes the sum of the first-round survivors' inputs from a round-one
/// aggregate and at least `u` round-two messages. Uses the `u`
/// lowest-indexed second-round survivors; any further messages are redundant
/// and, in debug builds, verified consistent with the solved system.
pub fn server_decode(
    params: &SchemeParams,
    ums: &UserMatrixSet,
    agg: &Round1Aggregate,
    round2: &[Round2Message],
) -> Result<Vec<u64>, SchemeError> {
    if round2.len() < params.u {
        return Err(SchemeError::TooFewSurvivors {
            got: round2.len(),
            need: params.u,
        });
    }
    let mut u2: Vec<usize> = round2.iter().map(|m| m.sender).collect();
    u2.sort_unstable();
    u2.dedup();
    assert_eq!(u2.len(), round2.len(), "duplicate round-two sender");
    if u2.iter().any(|k| !agg.u1.contains(k)) {
        return Err(SchemeError::SurvivorsNotNested);
    }
    let selected: Vec<usize> = u2[..params.u].to_vec();
    let f = Fq::new(params.q);

    let mut rows: Vec<Vec<u64>> = Vec::with_capacity(params.f_len());
    let mut rhs: Vec<Vec<u64>> = Vec::with_capacity(params.f_len());
    for &k in &selected {
        let msg = round2
            .iter()
            .find(|m| m.sender == k)
            .expect("selected senders come from round2");
        if msg.symbol_count() != params.round2_symbols() {
            return Err(SchemeError::LengthMismatch {
                user: k,
                got: msg.symbol_count(),
                want: params.round2_symbols(),
            });
        }
        for r in 0..params.n_pieces {
            rows.push(ums.sk(k).row(r).to_vec());
            rhs.push(msg.blocks[r].clone());
        }
    }
    for (idx, block) in &agg.known_f {
        let mut unit = vec![0u64; params.f_len()];
        unit[*idx] = 1;
        rows.push(unit);
        rhs.push(block.clone());
    }
    let system = FieldMatrix::from_rows(params.q, rows);
    let rhs = FieldMatrix::from_rows(params.q, rhs);
    let solved = match system.solve_square(&rhs) {
        Ok(m) => m,
        Err(LinalgError::SingularMatrix { .. }) => return Err(SchemeError::SingularDecodeMatrix),
        Err(LinalgError::DimensionMismatch(_)) => unreachable!("square by construction"),
    };

    #[cfg(debug_assertions)]
    for msg in round2.iter().filter(|m| !selected.contains(&m.sender)) {
        let sk = ums.sk(msg.sender);
        for r in 0..params.n_pieces {
            for t in 0..params.codedkey_len {
                let mut acc = 0u64;
                for c in 0..params.f_len() {
                    acc = f.add(acc, f.mul(sk.get(r, c), solved.get(c, t)));
                }
                assert_eq!(
                    acc, msg.blocks[r][t],
                    "redundant round-two message of user {} is inconsistent",
                    msg.sender
                );
            }
        }
    }

    // Reassemble each key combination from its u coded slices and strip it
    // from the masked sum.
    let mut out = Vec::with_capacity(params.l);
    for (j, masked) in agg.masked_sums.iter().enumerate() {
        for replica in 0..params.u {
            let fidx = params.f_index(replica, j);
            let w = params.codedkey_len;
            for t in 0..w {
                let masked_sym = masked[replica * w + t];
                out.push(f.sub(masked_sym, solved.get(fidx, t)));
            }
        }
    }
    Ok(out)
}
