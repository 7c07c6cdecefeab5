//! A deterministic construction whose decode system is a permutation of the
//! identity, for one chosen survivor set.
//!
//! Random coefficient draws make the decode system invertible only with high
//! probability. This module exhibits, for any `u`-subset `u2` and any pivot
//! user `u` outside it, an explicit choice that works with certainty: assign
//! unit vectors to the coefficient vectors of the groups containing the
//! pivot (groups meeting `u2` first, then the rest), derive every other
//! vector through the pivot's alternating identity, and pick each survivor's
//! matrix rows as unit rows according to a ball-and-urn schedule. The
//! resulting decodability matrix for `u2` has exactly one 1 per row and
//! per column, which also certifies that the random construction succeeds
//! for a generic draw.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::combin::{subsets_containing, Group};
use crate::family::{CoefficientFamily, FamilyError};
use crate::matrix::FieldMatrix;
use crate::params::SchemeParams;
use crate::usermatrix::{BuildError, UserMatrixSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WitnessError {
    #[error("survivor set must contain exactly u={u} distinct users in 1..=k, got {got:?}")]
    BadSurvivorSet { u: usize, got: Vec<usize> },
    #[error("pivot user {0} must lie outside the survivor set and within 1..=k")]
    BadPivot(usize),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// The deterministic construction plus the bookkeeping that proves it.
#[derive(Clone, Debug)]
pub struct WitnessData {
    pub family: CoefficientFamily,
    pub ums: UserMatrixSet,
    /// Groups containing the pivot that meet the survivor set, in
    /// lexicographic order; these index both the unit coordinates and the
    /// urns.
    pub c1: Vec<Group>,
    /// Groups containing the pivot that avoid the survivor set.
    pub c2: Vec<Group>,
    /// Per urn (aligned with `c1`): the color of each ball, as a 1-based
    /// position into `u2`, in assignment order.
    pub urns: Vec<Vec<usize>>,
    pub u2: Vec<usize>,
    pub pivot: usize,
}

/// Builds the witness for survivor set `u2` and pivot `u`.
pub fn build_witness(
    params: &SchemeParams,
    u2: &[usize],
    pivot: usize,
) -> Result<WitnessData, WitnessError> {
    let mut u2: Vec<usize> = u2.to_vec();
    u2.sort_unstable();
    u2.dedup();
    if u2.len() != params.u || u2.iter().any(|&m| m < 1 || m > params.k) {
        return Err(WitnessError::BadSurvivorSet {
            u: params.u,
            got: u2,
        });
    }
    if pivot < 1 || pivot > params.k || u2.contains(&pivot) {
        return Err(WitnessError::BadPivot(pivot));
    }

    // Unit-vector assignment for the pivot's groups: survivor-meeting
    // groups take the first n_pieces coordinates, the rest follow.
    let (c1, c2): (Vec<Group>, Vec<Group>) = subsets_containing(params.k, params.s, pivot)
        .into_iter()
        .partition(|g| g.intersects(&u2));
    debug_assert_eq!(c1.len(), params.n_pieces);
    debug_assert_eq!(c2.len(), params.n_combos - params.n_pieces);
    let mut assigned: BTreeMap<Group, Vec<u64>> = BTreeMap::new();
    for (i, g) in c1.iter().chain(c2.iter()).enumerate() {
        let mut unit = vec![0u64; params.n_combos];
        unit[i] = 1;
        assigned.insert(g.clone(), unit);
    }
    let family = CoefficientFamily::from_pivot_assignment(params, pivot, assigned)?;

    // Ball-and-urn schedule. Color s (1-based position into u2) owns
    // n_pieces balls, placed over u steps: at step t the ball may not land
    // in a group containing any of the t-1 survivors that follow s
    // cyclically. Each urn ends up with exactly u balls.
    let mut urns: Vec<Vec<usize>> = vec![Vec::new(); c1.len()];
    for s in 1..=params.u {
        let user = u2[s - 1];
        for t in 1..=params.u {
            let excluded: Vec<usize> = (1..t).map(|d| u2[(s + d - 1) % params.u]).collect();
            for (i, g) in c1.iter().enumerate() {
                if g.contains(user) && !g.intersects(&excluded) {
                    urns[i].push(s);
                }
            }
        }
    }
    debug_assert!(urns.iter().all(|balls| balls.len() == params.u));

    // One unit row per ball: the ball of color s sitting in urn i at slot j
    // becomes row e_{j * n_combos + i} of survivor u2[s-1]'s matrix.
    let mut unit_rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); params.u];
    for (i, balls) in urns.iter().enumerate() {
        let mut sorted = balls.clone();
        sorted.sort_unstable();
        for (slot, &color) in sorted.iter().enumerate() {
            unit_rows[color - 1].push((i, slot));
        }
    }

    let mut sks: Vec<FieldMatrix> = Vec::with_capacity(params.k);
    for k in 1..=params.k {
        if let Some(pos) = u2.iter().position(|&m| m == k) {
            let mut rows = unit_rows[pos].clone();
            rows.sort_unstable();
            let m = FieldMatrix::from_rows(
                params.q,
                rows.iter()
                    .map(|&(i, slot)| {
                        let mut row = vec![0u64; params.f_len()];
                        row[params.f_index(slot, i)] = 1;
                        row
                    })
                    .collect(),
            );
            sks.push(m);
        } else {
            sks.push(filler_matrix(params, &family, k));
        }
    }
    let ums = UserMatrixSet::from_matrices(&family, sks, None)?;
    Ok(WitnessData {
        family,
        ums,
        c1,
        c2,
        urns,
        u2,
        pivot,
    })
}

/// Deterministic matrix for a user outside the survivor set: cycles through
/// the block-diagonal null-basis rows. Not used by the witness check itself
/// but keeps the returned set complete and well-formed.
fn filler_matrix(params: &SchemeParams, family: &CoefficientFamily, k: usize) -> FieldMatrix {
    let basis = family.avoiding_matrix(k).left_null_basis();
    let rows = (0..params.n_pieces)
        .map(|r| {
            let idx = r % (params.u * basis.rows());
            let (replica, src) = (idx / basis.rows(), idx % basis.rows());
            let mut row = vec![0u64; params.f_len()];
            for c in 0..params.n_combos {
                row[params.f_index(replica, c)] = basis.get(src, c);
            }
            row
        })
        .collect();
    FieldMatrix::from_rows(params.q, rows)
}

/// True iff `m` is a row permutation of the identity: exactly one 1 per
/// row and per column, zeros elsewhere.
pub fn is_permutation_of_identity(m: &FieldMatrix) -> bool {
    if m.rows() != m.cols() {
        return false;
    }
    let mut col_seen = vec![false; m.cols()];
    for r in 0..m.rows() {
        let mut ones = 0;
        for (c, seen) in col_seen.iter_mut().enumerate() {
            match m.get(r, c) {
                0 => {}
                1 => {
                    if *seen {
                        return false;
                    }
                    *seen = true;
                    ones += 1;
                }
                _ => return false,
            }
        }
        if ones != 1 {
            return false;
        }
    }
    true
}
