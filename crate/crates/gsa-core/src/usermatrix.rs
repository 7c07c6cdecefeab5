//! Per-user second-round matrices `S_k` and the decodability check.
//!
//! For each user `k`, the left null space of the avoiding matrix
//! `[a_V : k not in V]` yields `C(k-2, s-2)` independent row vectors. Stacked
//! block-diagonally `u` times (one block per coded-key replica) they form
//! `S'_k`; the transmitted matrix `S_k` is `n_pieces` seeded random
//! combinations of those rows. By construction every row of `S_k` kills the
//! coefficient columns of groups that `k` does not belong to, so user `k`
//! never needs a coded key it cannot compute.
//!
//! Decodability asks that for every possible set of `u` second-round
//! survivors, their stacked `S_k` blocks plus the unit rows of the entries
//! already known from round one form an invertible square system. Random
//! choices achieve this with high probability; [`build_validated`] resamples
//! until all checks pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::combin::{binom, subsets};
use crate::family::CoefficientFamily;
use crate::matrix::FieldMatrix;
use crate::params::SchemeParams;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("alignment rank condition failed for user {user}")]
    AlignmentRankFailure { user: usize },
    #[error("no valid construction after {attempts} attempts; last failure: {last_failure}")]
    ExhaustedAttempts { attempts: u32, last_failure: ValidationCheck },
    #[error("matrix for user {user} has shape {rows}x{cols}, expected {want_rows}x{want_cols}")]
    WrongShape {
        user: usize,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
}

/// Which of the three construction checks failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationCheck {
    SecurityRank,
    AlignmentRank,
    Decodability,
}

impl std::fmt::Display for ValidationCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ValidationCheck::SecurityRank => "security rank",
            ValidationCheck::AlignmentRank => "alignment rank",
            ValidationCheck::Decodability => "decodability",
        };
        f.write_str(name)
    }
}

/// Null bases and second-round matrices for every user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserMatrixSet {
    seed: Option<u64>,
    /// Per user (index `k - 1`): basis of the left null space of the
    /// avoiding matrix, `C(k-2,s-2) x n_combos`.
    null_bases: Vec<FieldMatrix>,
    /// Per user: the transmitted matrix, `n_pieces x (u * n_combos)`.
    sk: Vec<FieldMatrix>,
}

impl UserMatrixSet {
    pub fn sk(&self, user: usize) -> &FieldMatrix {
        &self.sk[user - 1]
    }

    pub fn null_basis(&self, user: usize) -> &FieldMatrix {
        &self.null_bases[user - 1]
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn sk_matrices(&self) -> &[FieldMatrix] {
        &self.sk
    }

    /// Assembles a set from explicit `S_k` matrices (fixture loading and
    /// externally supplied constructions). Null bases are recomputed from
    /// the family.
    pub fn from_matrices(
        family: &CoefficientFamily,
        sk: Vec<FieldMatrix>,
        seed: Option<u64>,
    ) -> Result<UserMatrixSet, BuildError> {
        let params = family.params();
        assert_eq!(sk.len(), params.k, "one matrix per user");
        for (i, m) in sk.iter().enumerate() {
            if m.rows() != params.n_pieces || m.cols() != params.f_len() {
                return Err(BuildError::WrongShape {
                    user: i + 1,
                    rows: m.rows(),
                    cols: m.cols(),
                    want_rows: params.n_pieces,
                    want_cols: params.f_len(),
                });
            }
        }
        let null_bases = (1..=params.k)
            .map(|k| family.avoiding_matrix(k).left_null_basis())
            .collect();
        Ok(UserMatrixSet {
            seed,
            null_bases,
            sk,
        })
    }
}

/// Builds all `S_k` from seeded random combinations of the block-diagonal
/// null-basis rows. Fails if any user's null space is smaller than the
/// aligned dimension `C(k-2, s-2)`.
pub fn build_user_matrices(
    family: &CoefficientFamily,
    seed: u64,
) -> Result<UserMatrixSet, BuildError> {
    let params = family.params();
    let expected_rows = binom(params.k as i64 - 2, params.s as i64 - 2) as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut null_bases = Vec::with_capacity(params.k);
    let mut sk = Vec::with_capacity(params.k);
    for k in 1..=params.k {
        let basis = family.avoiding_matrix(k).left_null_basis();
        if basis.rows() != expected_rows {
            return Err(BuildError::AlignmentRankFailure { user: k });
        }
        sk.push(combine_blockdiag_rows(params, &basis, &mut rng));
        null_bases.push(basis);
    }
    Ok(UserMatrixSet {
        seed: Some(seed),
        null_bases,
        sk,
    })
}

/// `n_pieces` random row-combinations of the `u`-fold block-diagonal
/// stacking of `basis`, without materializing the stacked matrix.
fn combine_blockdiag_rows(
    params: &SchemeParams,
    basis: &FieldMatrix,
    rng: &mut ChaCha20Rng,
) -> FieldMatrix {
    let f = basis.field();
    let b = params.n_combos;
    let mut out = FieldMatrix::zeros(params.n_pieces, params.f_len(), params.q);
    for row in 0..params.n_pieces {
        for replica in 0..params.u {
            for src in 0..basis.rows() {
                let coeff = rng.gen_range(0..params.q);
                if coeff == 0 {
                    continue;
                }
                for col in 0..b {
                    let v = f.add(
                        out.get(row, replica * b + col),
                        f.mul(coeff, basis.get(src, col)),
                    );
                    out.set(row, replica * b + col, v);
                }
            }
        }
    }
    out
}

/// The square system the server inverts for a given second-round survivor
/// set: the survivors' `S_k` blocks stacked over unit rows for every entry
/// already recovered from round one.
pub fn decodability_matrix(
    params: &SchemeParams,
    ums: &UserMatrixSet,
    u2: &[usize],
) -> FieldMatrix {
    assert_eq!(u2.len(), params.u, "exactly u survivors");
    let n = params.f_len();
    let mut rows: Vec<Vec<u64>> = Vec::with_capacity(n);
    for &k in u2 {
        for r in 0..params.n_pieces {
            rows.push(ums.sk(k).row(r).to_vec());
        }
    }
    for replica in 0..params.u {
        for block in params.n_pieces..params.n_combos {
            let mut unit = vec![0u64; n];
            unit[params.f_index(replica, block)] = 1;
            rows.push(unit);
        }
    }
    FieldMatrix::from_rows(params.q, rows)
}

/// True iff every `u`-subset of users yields a full-rank decode system.
pub fn verify_decodability(params: &SchemeParams, ums: &UserMatrixSet) -> bool {
    subsets(params.k, params.u).iter().all(|u2| {
        let m = decodability_matrix(params, ums, u2.members());
        m.rank() == params.f_len()
    })
}

/// Structural zero check: within each replica block, every row of `S_k`
/// must annihilate the coefficient vector of every group `k` does not
/// belong to, i.e. user `k`'s transmission never references a coded key it
/// cannot compute.
pub fn verify_zero_structure(family: &CoefficientFamily, ums: &UserMatrixSet) -> bool {
    let params = family.params();
    let b = params.n_combos;
    (1..=params.k).all(|k| {
        let avoiding = family.avoiding_matrix(k);
        (0..params.u).all(|replica| {
            let block = ums
                .sk(k)
                .select_columns(&(replica * b..(replica + 1) * b).collect::<Vec<_>>());
            block.matmul(&avoiding).is_zero()
        })
    })
}

/// The five published second-round matrices of the worked `(5, 2, 3)`
/// construction, reduced mod `q`. Companion fixture to
/// [`crate::family::example_5_2_3_step_one`].
pub fn example_5_2_3_matrices(q: u64) -> Vec<FieldMatrix> {
    let rows: [[[i64; 12]; 5]; 5] = [
        [
            [0, -1, -2, 0, 0, 2, 0, 0, 0, 0, 0, 0],
            [-2, -1, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 0, 0, -1, -2, 0, 0, 2],
            [0, 0, 0, 0, 0, 0, -2, -1, 0, 0, 4, 0],
            [0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0],
        ],
        [
            [-1, 0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 0, -1, 0, -1, 0, 0, 1],
            [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0],
            [0, -1, 0, 1, 0, 0, 0, -2, 0, 2, 0, 0],
        ],
        [
            [-1, 0, 1, -1, 0, 1, 0, 0, 0, 0, 0, 0],
            [0, 0, -1, 0, 1, 0, 0, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 0, -1, 0, 1, -1, 0, 1],
            [0, 0, 0, 0, 0, 0, 0, 0, -1, 0, 1, 0],
            [0, 1, 0, 0, 0, 0, 0, 3, 0, 0, 0, 0],
        ],
        [
            [1, -1, 0, -1, 0, 1, 0, 0, 0, 0, 0, 0],
            [1, -1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 0, 1, -1, 0, -1, 0, 1],
            [0, 0, 0, 0, 0, 0, 1, -1, 0, 0, 1, 0],
            [0, 0, 1, 0, 0, 0, 0, 0, 4, 0, 0, 0],
        ],
        [
            [-1, -1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0],
            [-2, -1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 0, -1, -1, 0, 0, 0, 1],
            [0, 0, 0, 0, 0, 0, -2, -1, 1, 0, 1, 0],
            [0, 0, -1, 1, 0, 0, 0, 0, -5, 5, 0, 0],
        ],
    ];
    rows.iter()
        .map(|m| {
            FieldMatrix::from_signed_rows(q, &m.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        })
        .collect()
}

/// A fully checked construction: family plus user matrices that pass the
/// security-rank, alignment-rank, and decodability checks.
#[derive(Clone, Debug)]
pub struct ValidatedScheme {
    pub family: CoefficientFamily,
    pub ums: UserMatrixSet,
    /// 1-based attempt on which validation succeeded.
    pub attempts: u32,
}

/// Draws fresh randomness until a construction passes all three checks. On
/// any failure both the coefficient vectors and the combination
/// coefficients are resampled. Failure after `max_attempts` reports the
/// last check that failed (expected only for tiny moduli).
pub fn build_validated(
    params: &SchemeParams,
    seed: u64,
    max_attempts: u32,
) -> Result<ValidatedScheme, BuildError> {
    assert!(max_attempts >= 1);
    let mut seeder = ChaCha20Rng::seed_from_u64(seed);
    let mut last_failure = ValidationCheck::SecurityRank;
    for attempt in 1..=max_attempts {
        let family_seed = seeder.gen::<u64>();
        let ums_seed = seeder.gen::<u64>();
        let family = CoefficientFamily::build(params, family_seed);
        if !family.verify_security_rank() {
            last_failure = ValidationCheck::SecurityRank;
            continue;
        }
        let ums = match build_user_matrices(&family, ums_seed) {
            Ok(ums) => ums,
            Err(BuildError::AlignmentRankFailure { .. }) => {
                last_failure = ValidationCheck::AlignmentRank;
                continue;
            }
            Err(other) => return Err(other),
        };
        if !verify_decodability(params, &ums) {
            last_failure = ValidationCheck::Decodability;
            continue;
        }
        debug_assert!(verify_zero_structure(&family, &ums));
        return Ok(ValidatedScheme {
            family,
            ums,
            attempts: attempt,
        });
    }
    Err(BuildError::ExhaustedAttempts {
        attempts: max_attempts,
        last_failure,
    })
}
