//! The adversary's view as an exact linear system.
//!
//! Everything a curious server can possibly see in one epoch (all `k`
//! round-one messages (a "dropped" user may merely be slow) plus the
//! round-two messages of every first-round survivor) is a linear function
//! of the input symbols and the key symbols. This module assembles that
//! function symbolically as a pair of matrices and cross-checks it against
//! the concrete encoders on random draws, so the rank-based leakage
//! accounting in [`crate::leakage`] provably talks about the same bytes the
//! protocol transmits.

use thiserror::Error;

use crate::combin::{subsets, Group};
use crate::family::CoefficientFamily;
use crate::field::Fq;
use crate::keys::KeyMaterial;
use crate::matrix::FieldMatrix;
use crate::params::SchemeParams;
use crate::rounds::{round1_encode, round2_encode, InputVector, SchemeError};
use crate::usermatrix::UserMatrixSet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("symbolic view disagrees with the concrete encoders at view row {row}")]
    TraceMismatch { row: usize },
    #[error("state space of {symbols} q-ary symbols exceeds the enumeration budget of 2^{budget_bits}")]
    TooLargeToEnumerate { symbols: usize, budget_bits: u32 },
    #[error("joint count {0} is not a power of q; the view is not a linear system")]
    NonPowerOfQCount(u64),
    #[error("view of {bits} packed bits cannot be keyed in 64 bits")]
    ViewTooWide { bits: u32 },
    #[error("{patterns} dropout patterns exceed the sweep budget of {budget}")]
    SweepBudgetExceeded { patterns: usize, budget: usize },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// Deliberate defects for negative testing. A verifier that cannot flag a
/// broken scheme is not trustworthy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sabotage {
    /// Replace round-one block `block` of `user` with the bare input piece.
    UnmaskedPiece { user: usize, block: usize },
    /// Run the whole protocol with all-zero keys.
    ZeroKeys,
}

/// The view as matrices: `view = a_w * w + a_z * z` where `w` stacks all
/// `k * l` input symbols and `z` stacks all key symbols, group by group.
/// `t_w` maps inputs to the aggregation target, the survivor sum.
#[derive(Clone, Debug)]
pub struct ViewSystem {
    pub params: SchemeParams,
    pub u1: Vec<usize>,
    pub sabotage: Option<Sabotage>,
    pub a_w: FieldMatrix,
    pub a_z: FieldMatrix,
    pub t_w: FieldMatrix,
}

impl ViewSystem {
    pub fn input_symbols(&self) -> usize {
        self.a_w.cols()
    }

    pub fn key_symbols(&self) -> usize {
        self.a_z.cols()
    }

    pub fn view_symbols(&self) -> usize {
        self.a_w.rows()
    }
}

/// Column of input symbol `t` of `user` in the stacked input layout.
fn w_col(params: &SchemeParams, user: usize, t: usize) -> usize {
    (user - 1) * params.l + t
}

/// Column of key symbol `t` of group index `g` (lexicographic) in the
/// stacked key layout.
fn z_col(params: &SchemeParams, g: usize, t: usize) -> usize {
    g * params.group_key_len() + t
}

/// Assembles the view system for survivor set `u1`, optionally sabotaged,
/// and verifies it against the concrete encoders on ten random draws.
pub fn build_view_system(
    params: &SchemeParams,
    family: &CoefficientFamily,
    ums: &UserMatrixSet,
    u1: &[usize],
    sabotage: Option<Sabotage>,
) -> Result<ViewSystem, VerifyError> {
    let mut u1 = u1.to_vec();
    u1.sort_unstable();
    if u1.len() < params.u {
        return Err(SchemeError::TooFewSurvivors {
            got: u1.len(),
            need: params.u,
        }
        .into());
    }
    let groups = subsets(params.k, params.s);
    let n_w = params.k * params.l;
    let n_z = groups.len() * params.group_key_len();
    let view_rows = params.k * params.round1_symbols() + u1.len() * params.round2_symbols();
    let f = Fq::new(params.q);
    let mut a_w = FieldMatrix::zeros(view_rows, n_w, params.q);
    let mut a_z = FieldMatrix::zeros(view_rows, n_z, params.q);
    let zero_keys = sabotage == Some(Sabotage::ZeroKeys);

    // Round one: for every user, n_combos blocks of piece_len symbols.
    let mut row = 0;
    for k in 1..=params.k {
        for j in 0..params.n_combos {
            let unmasked = sabotage == Some(Sabotage::UnmaskedPiece { user: k, block: j });
            for t in 0..params.piece_len {
                if j < params.n_pieces {
                    a_w.set(row, w_col(params, k, j * params.piece_len + t), 1);
                }
                if !zero_keys && !unmasked {
                    for (g_idx, g) in groups.iter().enumerate() {
                        if !g.contains(k) {
                            continue;
                        }
                        let coeff = family.coefficient(g, j);
                        if coeff == 0 {
                            continue;
                        }
                        let pos = g.position(k).unwrap();
                        let col = z_col(params, g_idx, pos * params.subkey_len() + t);
                        a_z.set(row, col, f.add(a_z.get(row, col), coeff));
                    }
                }
                row += 1;
            }
        }
    }

    // Round two: for every survivor, S_k applied to the stacked coded-key
    // combinations; pure key dependence.
    for &k in &u1 {
        let sk = ums.sk(k);
        for r in 0..params.n_pieces {
            for t in 0..params.codedkey_len {
                if !zero_keys {
                    for replica in 0..params.u {
                        for block in 0..params.n_combos {
                            let s_coeff = sk.get(r, params.f_index(replica, block));
                            if s_coeff == 0 {
                                continue;
                            }
                            for (g_idx, g) in groups.iter().enumerate() {
                                let a_coeff = family.coefficient(g, block);
                                if a_coeff == 0 {
                                    continue;
                                }
                                let weight = f.mul(s_coeff, a_coeff);
                                for &m in g.members() {
                                    if !u1.contains(&m) {
                                        continue;
                                    }
                                    let pos = g.position(m).unwrap();
                                    let col = z_col(
                                        params,
                                        g_idx,
                                        pos * params.subkey_len()
                                            + replica * params.codedkey_len
                                            + t,
                                    );
                                    a_z.set(row, col, f.add(a_z.get(row, col), weight));
                                }
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    debug_assert_eq!(row, view_rows);

    // Target map: the survivor sum.
    let mut t_w = FieldMatrix::zeros(params.l, n_w, params.q);
    for &k in &u1 {
        for t in 0..params.l {
            t_w.set(t, w_col(params, k, t), 1);
        }
    }

    let vs = ViewSystem {
        params: params.clone(),
        u1,
        sabotage,
        a_w,
        a_z,
        t_w,
    };
    trace_check(&vs, family, ums)?;
    Ok(vs)
}

/// Evaluates the concrete encoders on the same `(w, z)` assignment the
/// symbolic system describes.
pub fn concrete_view(
    params: &SchemeParams,
    family: &CoefficientFamily,
    ums: &UserMatrixSet,
    u1: &[usize],
    sabotage: Option<Sabotage>,
    keys: &KeyMaterial,
    inputs: &[InputVector],
) -> Result<Vec<u64>, SchemeError> {
    let effective_keys = if sabotage == Some(Sabotage::ZeroKeys) {
        KeyMaterial::zeros(params)
    } else {
        keys.clone()
    };
    let mut view = Vec::new();
    for k in 1..=params.k {
        let input = inputs.iter().find(|w| w.owner == k).expect("input per user");
        let mut msg = round1_encode(params, family, &effective_keys, input)?;
        if let Some(Sabotage::UnmaskedPiece { user, block }) = sabotage {
            if user == k {
                msg.blocks[block] = if block < params.n_pieces {
                    input.piece(params, block).to_vec()
                } else {
                    vec![0u64; params.piece_len]
                };
            }
        }
        view.extend(msg.flatten());
    }
    for &k in u1 {
        let msg = round2_encode(params, family, ums, &effective_keys, k, u1)?;
        view.extend(msg.flatten());
    }
    Ok(view)
}

/// Ten-draw agreement check between the symbolic matrices and the concrete
/// encoders.
fn trace_check(
    vs: &ViewSystem,
    family: &CoefficientFamily,
    ums: &UserMatrixSet,
) -> Result<(), VerifyError> {
    use rand::{Rng, SeedableRng};
    let params = &vs.params;
    let f = Fq::new(params.q);
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0x747261636531);
    for _ in 0..10 {
        let w: Vec<u64> = (0..vs.input_symbols()).map(|_| rng.gen_range(0..params.q)).collect();
        let z: Vec<u64> = (0..vs.key_symbols()).map(|_| rng.gen_range(0..params.q)).collect();
        let symbolic: Vec<u64> = (0..vs.view_symbols())
            .map(|r| {
                let mut acc = 0u64;
                for (c, &x) in w.iter().enumerate() {
                    acc = f.add(acc, f.mul(vs.a_w.get(r, c), x));
                }
                for (c, &x) in z.iter().enumerate() {
                    acc = f.add(acc, f.mul(vs.a_z.get(r, c), x));
                }
                acc
            })
            .collect();
        let inputs: Vec<InputVector> = (1..=params.k)
            .map(|k| InputVector {
                owner: k,
                symbols: w[(k - 1) * params.l..k * params.l].to_vec(),
            })
            .collect();
        let keys = keys_from_flat(params, &z);
        let concrete =
            concrete_view(params, family, ums, &vs.u1, vs.sabotage, &keys, &inputs)?;
        if symbolic != concrete {
            let row = symbolic
                .iter()
                .zip(&concrete)
                .position(|(a, b)| a != b)
                .unwrap_or(0);
            return Err(VerifyError::TraceMismatch { row });
        }
    }
    Ok(())
}

/// Rebuilds key material from the stacked key-symbol layout.
pub fn keys_from_flat(params: &SchemeParams, z: &[u64]) -> KeyMaterial {
    let groups = subsets(params.k, params.s);
    let w = params.group_key_len();
    let map: std::collections::BTreeMap<Group, Vec<u64>> = groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, z[i * w..(i + 1) * w].to_vec()))
        .collect();
    KeyMaterial::from_symbols(params, map).expect("layout is exact")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::usermatrix::build_validated;

    const Q: u64 = 2147483647;

    #[test]
    fn view_dimensions_are_message_totals() {
        let params = SchemeParams::new(5, 2, 3, Q, 10).unwrap();
        let v = build_validated(&params, 8, 16).unwrap();
        let u1 = vec![1, 3, 5];
        let vs = build_view_system(&params, &v.family, &v.ums, &u1, None).unwrap();
        // k * r1 * l round-one symbols plus |u1| * l / u round-two symbols
        assert_eq!(vs.view_symbols(), 5 * 12 + 3 * 5);
        assert_eq!(vs.input_symbols(), 5 * 10);
        assert_eq!(vs.key_symbols(), 10 * 6);
    }

    #[test]
    fn dropped_users_still_appear_in_the_view() {
        // Round-one messages of non-survivors are part of the worst case.
        let params = SchemeParams::new(4, 2, 2, 7, 4).unwrap();
        let v = build_validated(&params, 9, 100).unwrap();
        let vs = build_view_system(&params, &v.family, &v.ums, &[1, 2], None).unwrap();
        let rows_of_user4: Vec<usize> =
            (3 * params.round1_symbols()..4 * params.round1_symbols()).collect();
        let touched = rows_of_user4
            .iter()
            .any(|&r| (0..vs.input_symbols()).any(|c| vs.a_w.get(r, c) != 0));
        assert!(touched, "user 4 input must appear via its round-one rows");
    }

    #[test]
    fn round_one_is_a_per_user_pad() {
        // For each user the map from its own sub-keys to its round-one
        // key contribution has full rank, so one round-one message alone is
        // an exact one-time pad of the input.
        let params = SchemeParams::new(5, 2, 3, Q, 10).unwrap();
        let v = build_validated(&params, 10, 16).unwrap();
        let vs = build_view_system(&params, &v.family, &v.ums, &[1, 2, 3, 4, 5], None).unwrap();
        let groups = subsets(params.k, params.s);
        for k in 1..=params.k {
            let rows: Vec<usize> =
                ((k - 1) * params.round1_symbols()..k * params.round1_symbols()).collect();
            let mut cols = Vec::new();
            for (g_idx, g) in groups.iter().enumerate() {
                if let Some(pos) = g.position(k) {
                    for t in 0..params.subkey_len() {
                        cols.push(z_col(&params, g_idx, pos * params.subkey_len() + t));
                    }
                }
            }
            let mut sub = FieldMatrix::zeros(rows.len(), cols.len(), params.q);
            for (ri, &r) in rows.iter().enumerate() {
                for (ci, &c) in cols.iter().enumerate() {
                    sub.set(ri, ci, vs.a_z.get(r, c));
                }
            }
            assert_eq!(sub.rank(), params.round1_symbols(), "user {k}");
        }
    }
}
