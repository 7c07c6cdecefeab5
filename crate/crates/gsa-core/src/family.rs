//! The coefficient family `{a_V}`: one column vector per group, weighting
//! that group's sub-keys across a user's round-one blocks.
//!
//! Construction is two-step: vectors for groups containing user 1 are drawn
//! uniformly at random, and every other vector is the alternating-sign
//! combination of the user-1 vectors obtained by swapping each member in
//! turn. The same alternating identity then holds with any user in place of
//! user 1 ([`CoefficientFamily::pivot_expand`]), which is what aligns the
//! coefficient vectors of the groups a user does not belong to into a
//! lower-dimensional space and frees up null-space rows for round two.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::combin::{binom, subsets, subsets_avoiding, subsets_containing, Group};
use crate::matrix::FieldMatrix;
use crate::params::SchemeParams;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FamilyError {
    #[error("user {user} is a member of {group}, cannot pivot-expand")]
    InvalidPivot { group: Group, user: usize },
    #[error("step-one vectors must cover exactly the groups containing user 1")]
    WrongStepOneGroups,
    #[error("stored vectors do not satisfy the alternating-sign construction")]
    InconsistentDerivedVectors,
    #[error("coefficient vector for {0} has the wrong length")]
    WrongVectorLength(Group),
    #[error("coefficient entry not reduced mod q")]
    UnreducedEntry,
}

/// The map `V -> a_V` for all size-`s` groups, plus the parameters it was
/// built for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoefficientFamily {
    params: SchemeParams,
    seed: Option<u64>,
    vectors: BTreeMap<Group, Vec<u64>>,
}

impl CoefficientFamily {
    /// Draws the user-1 vectors from `seed` and derives the rest.
    pub fn build(params: &SchemeParams, seed: u64) -> CoefficientFamily {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let step_one = subsets_containing(params.k, params.s, 1)
            .into_iter()
            .map(|g| {
                let vec = (0..params.n_combos).map(|_| rng.gen_range(0..params.q)).collect();
                (g, vec)
            })
            .collect();
        let mut fam = CoefficientFamily::from_step_one(params, step_one)
            .expect("internally generated step-one vectors are well-formed");
        fam.seed = Some(seed);
        fam
    }

    /// Builds from explicit user-1 vectors (fixture injection and tests).
    pub fn from_step_one(
        params: &SchemeParams,
        step_one: BTreeMap<Group, Vec<u64>>,
    ) -> Result<CoefficientFamily, FamilyError> {
        let anchored = subsets_containing(params.k, params.s, 1);
        if step_one.len() != anchored.len() || !anchored.iter().all(|g| step_one.contains_key(g)) {
            return Err(FamilyError::WrongStepOneGroups);
        }
        for (g, v) in &step_one {
            if v.len() != params.n_combos {
                return Err(FamilyError::WrongVectorLength(g.clone()));
            }
            if v.iter().any(|&x| x >= params.q) {
                return Err(FamilyError::UnreducedEntry);
            }
        }
        let mut vectors = step_one;
        for v in subsets(params.k, params.s) {
            if v.contains(1) {
                continue;
            }
            let vec = alternating_combination(params, &vectors, &v, 1);
            vectors.insert(v, vec);
        }
        Ok(CoefficientFamily {
            params: params.clone(),
            seed: None,
            vectors,
        })
    }

    /// Builds a family from explicit vectors for the groups containing
    /// `pivot`, deriving every other vector through the pivot's alternating
    /// identity. The result is checked to satisfy the user-1 construction,
    /// so it is a legitimate family whose `pivot`-anchored vectors are
    /// exactly the given assignment.
    pub fn from_pivot_assignment(
        params: &SchemeParams,
        pivot: usize,
        assigned: BTreeMap<Group, Vec<u64>>,
    ) -> Result<CoefficientFamily, FamilyError> {
        let anchored = subsets_containing(params.k, params.s, pivot);
        if assigned.len() != anchored.len() || !anchored.iter().all(|g| assigned.contains_key(g)) {
            return Err(FamilyError::WrongStepOneGroups);
        }
        let mut vectors = assigned;
        for v in subsets(params.k, params.s) {
            if v.contains(pivot) {
                continue;
            }
            let vec = alternating_combination(params, &vectors, &v, pivot);
            vectors.insert(v, vec);
        }
        CoefficientFamily::from_vectors(params, vectors, None)
    }

    /// Rebuilds directly from a full vector map (fixture loading). Verifies
    /// the alternating identity so a corrupted fixture cannot slip through.
    pub fn from_vectors(
        params: &SchemeParams,
        vectors: BTreeMap<Group, Vec<u64>>,
        seed: Option<u64>,
    ) -> Result<CoefficientFamily, FamilyError> {
        let step_one: BTreeMap<Group, Vec<u64>> = vectors
            .iter()
            .filter(|(g, _)| g.contains(1))
            .map(|(g, v)| (g.clone(), v.clone()))
            .collect();
        let mut rebuilt = CoefficientFamily::from_step_one(params, step_one)?;
        if rebuilt.vectors != vectors {
            return Err(FamilyError::InconsistentDerivedVectors);
        }
        rebuilt.seed = seed;
        Ok(rebuilt)
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn vectors(&self) -> &BTreeMap<Group, Vec<u64>> {
        &self.vectors
    }

    pub fn vector(&self, v: &Group) -> &[u64] {
        &self.vectors[v]
    }

    /// Coefficient of group `v` in round-one block `j`.
    pub fn coefficient(&self, v: &Group, block: usize) -> u64 {
        self.vectors[v][block]
    }

    /// Re-derives `a_V` through user `k` instead of user 1: the alternating
    /// combination of the vectors `a_{V \ {m} + {k}}`, with signs split
    /// around the number of members of `V` below `k`. For every family built
    /// by [`CoefficientFamily::build`] this reproduces the stored vector
    /// exactly.
    pub fn pivot_expand(&self, v: &Group, k: usize) -> Result<Vec<u64>, FamilyError> {
        if v.contains(k) {
            return Err(FamilyError::InvalidPivot {
                group: v.clone(),
                user: k,
            });
        }
        Ok(alternating_combination(&self.params, &self.vectors, v, k))
    }

    /// The `n_combos x n_combos` matrix `[a_V : k in V]`, columns in
    /// lexicographic group order. Full rank makes round one a one-time pad
    /// for user `k`.
    pub fn security_matrix(&self, k: usize) -> FieldMatrix {
        let cols: Vec<Vec<u64>> = subsets_containing(self.params.k, self.params.s, k)
            .iter()
            .map(|g| self.vectors[g].clone())
            .collect();
        FieldMatrix::from_cols(self.params.q, &cols)
    }

    /// The `n_combos x C(k-1,s)` matrix `[a_V : k not in V]`, columns in
    /// lexicographic group order.
    pub fn avoiding_matrix(&self, k: usize) -> FieldMatrix {
        let cols: Vec<Vec<u64>> = subsets_avoiding(self.params.k, self.params.s, k)
            .iter()
            .map(|g| self.vectors[g].clone())
            .collect();
        if cols.is_empty() {
            return FieldMatrix::zeros(self.params.n_combos, 0, self.params.q);
        }
        FieldMatrix::from_cols(self.params.q, &cols)
    }

    /// The `n_combos x C(k,s)` matrix of all coefficient vectors, columns in
    /// lexicographic group order.
    pub fn full_matrix(&self) -> FieldMatrix {
        let cols: Vec<Vec<u64>> = subsets(self.params.k, self.params.s)
            .iter()
            .map(|g| self.vectors[g].clone())
            .collect();
        FieldMatrix::from_cols(self.params.q, &cols)
    }

    /// True iff every user's security matrix has full rank `n_combos`.
    pub fn verify_security_rank(&self) -> bool {
        (1..=self.params.k).all(|k| self.security_matrix(k).rank() == self.params.n_combos)
    }

    /// True iff for every user the avoiding matrix has the aligned rank
    /// `C(k-2, s-1)`, i.e. its left null space has the maximal dimension
    /// `C(k-2, s-2)`.
    pub fn verify_alignment_rank(&self) -> bool {
        let target = binom(self.params.k as i64 - 2, self.params.s as i64 - 1) as usize;
        (1..=self.params.k).all(|k| self.avoiding_matrix(k).rank() == target)
    }
}

/// The signed combination of `a_{V \ {V(i)} + {k}}` over all member
/// positions `i`, with sign `(-1)^(i-1)` shifted by the count of members
/// below `k`. For `k = 1` (no member below) this is the plain alternating
/// construction.
fn alternating_combination(
    params: &SchemeParams,
    vectors: &BTreeMap<Group, Vec<u64>>,
    v: &Group,
    k: usize,
) -> Vec<u64> {
    let f = crate::field::Fq::new(params.q);
    let n_below = v.count_smaller(k);
    let s = params.s;
    let mut acc = vec![0u64; params.n_combos];
    for i in 1..=s {
        // positions above k keep sign (-1)^(i - n_below - 1); positions
        // below contribute with sign (-1)^(n_below + i)
        let exp = if i > n_below { i - n_below - 1 } else { n_below + i };
        let sign = f.sign(exp);
        let swapped = v.swap_member(i - 1, k);
        let term = vectors
            .get(&swapped)
            .unwrap_or_else(|| panic!("missing coefficient vector for {swapped}"));
        for (a, &t) in acc.iter_mut().zip(term) {
            *a = f.add(*a, f.mul(sign, t));
        }
    }
    acc
}

/// The six explicit user-1 vectors of the worked `(5, 2, 3)` construction,
/// reduced mod `q`. Fixture for tests and documentation.
pub fn example_5_2_3_step_one(params: &SchemeParams) -> BTreeMap<Group, Vec<u64>> {
    assert_eq!((params.k, params.u, params.s), (5, 2, 3));
    let rows: [(&[usize; 3], [i64; 6]); 6] = [
        (&[1, 2, 3], [0, 1, 0, 0, 1, 1]),
        (&[1, 2, 4], [1, 0, 1, 1, 1, 1]),
        (&[1, 2, 5], [0, 0, 0, 1, 0, 1]),
        (&[1, 3, 4], [0, 1, 1, 1, 0, 1]),
        (&[1, 3, 5], [1, 1, 0, 1, 0, 1]),
        (&[1, 4, 5], [1, 0, 0, 0, 0, 1]),
    ];
    let f = crate::field::Fq::new(params.q);
    rows.iter()
        .map(|(members, vals)| {
            (
                Group::new(members.to_vec()),
                vals.iter().map(|&v| f.reduce_signed(v)).collect(),
            )
        })
        .collect()
}
