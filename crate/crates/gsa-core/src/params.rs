//! Scheme parameters and the achievable rate region.
//!
//! For `(k, u, s)` with `2 <= s <= k` and `1 <= u < k`, the optimal per-user
//! rates are `r1 = C(k-1,s-1) / (C(k-1,s-1) - C(k-1-u,s-1))` in round one and
//! `r2 = 1/u` in round two. Group size `s = 1` admits no secure scheme at
//! all, so it is rejected at construction.

use std::fmt;

use thiserror::Error;

use crate::combin::binom;
use crate::field::{is_prime, MAX_MODULUS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("group size 1 cannot hide any input: secure aggregation is not possible")]
    GroupSizeOne,
    #[error("invalid group size s={s} for k={k} users (need 2 <= s <= k)")]
    InvalidGroupSize { k: usize, s: usize },
    #[error("invalid survivor bound u={u} for k={k} users (need 1 <= u < k)")]
    InvalidSurvivorBound { k: usize, u: usize },
    #[error("modulus {0} is not a prime below 2^31")]
    InvalidModulus(u64),
    #[error("input length {l} must be a positive multiple of {required}")]
    LengthNotDivisible { l: usize, required: usize },
}

/// Exact rational, kept reduced. Used for rates so no float ever appears in
/// a rate claim.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub fn new(num: u64, den: u64) -> Rate {
        assert!(den != 0);
        if num == 0 {
            return Rate { num: 0, den: 1 };
        }
        let g = gcd(num, den);
        Rate {
            num: num / g,
            den: den / g,
        }
    }

    /// `self * l`, exact; panics if the product is not an integer.
    pub fn scale_exact(&self, l: usize) -> usize {
        let prod = self.num as u128 * l as u128;
        assert!(prod.is_multiple_of(self.den as u128), "rate * length not integral");
        (prod / self.den as u128) as usize
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// The optimal rate pair `(r1, r2)` for `(k, u, s)`; independent of `l` and
/// `q`. Errors on `s = 1` (infeasible) and on out-of-range `k`, `u`, `s`.
pub fn rate_region(k: usize, u: usize, s: usize) -> Result<(Rate, Rate), ParamsError> {
    if s == 1 {
        return Err(ParamsError::GroupSizeOne);
    }
    if s < 2 || s > k {
        return Err(ParamsError::InvalidGroupSize { k, s });
    }
    if u < 1 || u >= k {
        return Err(ParamsError::InvalidSurvivorBound { k, u });
    }
    let combos = binom(k as i64 - 1, s as i64 - 1);
    let pieces = combos - binom(k as i64 - 1 - u as i64, s as i64 - 1);
    Ok((Rate::new(combos, pieces), Rate::new(1, u as u64)))
}

/// Extra round-one rate paid for the groupwise-key constraint, compared to
/// the unconstrained-keys optimum of `r1 = 1`:
/// `C(k-1-u,s-1) / (C(k-1,s-1) - C(k-1-u,s-1))`. Zero when `s > k - u`.
pub fn groupwise_overhead(k: usize, u: usize, s: usize) -> Result<Rate, ParamsError> {
    let (r1, _) = rate_region(k, u, s)?;
    let combos = binom(k as i64 - 1, s as i64 - 1);
    let pieces = combos - binom(k as i64 - 1 - u as i64, s as i64 - 1);
    let over = combos - pieces;
    debug_assert_eq!(Rate::new(pieces + over, pieces), r1);
    Ok(Rate::new(over, pieces))
}

/// Scheme parameters plus all derived block lengths.
///
/// `l` counts input symbols per user and must be divisible by
/// `u * n_pieces` so that pieces and coded keys slice evenly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemeParams {
    /// Number of users; ids run `1..=k`.
    pub k: usize,
    /// Minimum number of survivors per round.
    pub u: usize,
    /// Group size: each key is shared by exactly `s` users.
    pub s: usize,
    /// Prime modulus.
    pub q: u64,
    /// Input length per user, in field symbols.
    pub l: usize,
    /// `C(k-1, s-1)`: round-one blocks per user and coefficient dimension.
    pub n_combos: usize,
    /// `C(k-1,s-1) - C(k-1-u,s-1)`: input pieces per user.
    pub n_pieces: usize,
    /// Symbols per input piece and per sub-key: `l / n_pieces`.
    pub piece_len: usize,
    /// Symbols per coded key: `l / (u * n_pieces)`.
    pub codedkey_len: usize,
}

impl SchemeParams {
    pub fn new(k: usize, u: usize, s: usize, q: u64, l: usize) -> Result<SchemeParams, ParamsError> {
        rate_region(k, u, s)?;
        if !(q < MAX_MODULUS && is_prime(q)) {
            return Err(ParamsError::InvalidModulus(q));
        }
        let n_combos = binom(k as i64 - 1, s as i64 - 1) as usize;
        let n_pieces = n_combos - binom(k as i64 - 1 - u as i64, s as i64 - 1) as usize;
        let required = u * n_pieces;
        if l == 0 || !l.is_multiple_of(required) {
            return Err(ParamsError::LengthNotDivisible { l, required });
        }
        Ok(SchemeParams {
            k,
            u,
            s,
            q,
            l,
            n_combos,
            n_pieces,
            piece_len: l / n_pieces,
            codedkey_len: l / required,
        })
    }

    /// Round-one rate `r1 = n_combos / n_pieces`, met with equality.
    pub fn rate1(&self) -> Rate {
        Rate::new(self.n_combos as u64, self.n_pieces as u64)
    }

    /// Round-two rate `r2 = 1/u`, met with equality.
    pub fn rate2(&self) -> Rate {
        Rate::new(1, self.u as u64)
    }

    /// Symbols per group key `Z_V`: `s * piece_len`.
    pub fn group_key_len(&self) -> usize {
        self.s * self.piece_len
    }

    /// Sub-key symbols per member: same as `piece_len`.
    pub fn subkey_len(&self) -> usize {
        self.piece_len
    }

    /// Column index of entry `(replica, block)` in the stacked second-round
    /// unknown vector of length `u * n_combos`.
    pub fn f_index(&self, replica: usize, block: usize) -> usize {
        debug_assert!(replica < self.u && block < self.n_combos);
        replica * self.n_combos + block
    }

    /// Total second-round unknowns: `u * n_combos`.
    pub fn f_len(&self) -> usize {
        self.u * self.n_combos
    }

    /// Round-one symbols per user: `n_combos * piece_len == r1 * l`.
    pub fn round1_symbols(&self) -> usize {
        self.n_combos * self.piece_len
    }

    /// Round-two symbols per user: `n_pieces * codedkey_len == l / u`.
    pub fn round2_symbols(&self) -> usize {
        self.n_pieces * self.codedkey_len
    }
}

/// Left side minus right side of the per-user row budget
/// `u * C(k-2,s-2) >= C(k-1,s-1) - C(k-1-u,s-1)`: the block-diagonal
/// second-round matrix always has at least as many rows as combinations are
/// drawn from it.
pub fn row_budget(k: usize, u: usize, s: usize) -> (u64, u64) {
    let lhs = u as u64 * binom(k as i64 - 2, s as i64 - 2);
    let rhs = binom(k as i64 - 1, s as i64 - 1) - binom(k as i64 - 1 - u as i64, s as i64 - 1);
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_rates() {
        let (r1, r2) = rate_region(5, 2, 3).unwrap();
        assert_eq!(r1, Rate::new(6, 5));
        assert_eq!(r2, Rate::new(1, 2));
        let (r1, r2) = rate_region(4, 2, 2).unwrap();
        assert_eq!(r1, Rate::new(3, 2));
        assert_eq!(r2, Rate::new(1, 2));
    }

    #[test]
    fn large_group_rate_collapses_to_one() {
        // s > k - u: every group always has a survivor, round one carries no
        // key-only blocks.
        let (r1, r2) = rate_region(5, 4, 3).unwrap();
        assert_eq!(r1, Rate::new(1, 1));
        assert_eq!(r2, Rate::new(1, 4));
        assert_eq!(groupwise_overhead(5, 4, 3).unwrap(), Rate::new(0, 1));
    }

    #[test]
    fn group_size_one_is_infeasible() {
        assert_eq!(rate_region(5, 2, 1), Err(ParamsError::GroupSizeOne));
    }

    #[test]
    fn overhead_example() {
        assert_eq!(groupwise_overhead(5, 2, 3).unwrap(), Rate::new(1, 5));
    }

    #[test]
    fn derived_lengths_for_5_2_3() {
        let p = SchemeParams::new(5, 2, 3, 2147483647, 20).unwrap();
        assert_eq!(p.n_combos, 6);
        assert_eq!(p.n_pieces, 5);
        assert_eq!(p.piece_len, 4);
        assert_eq!(p.codedkey_len, 2);
        assert_eq!(p.group_key_len(), 12);
        assert_eq!(p.round1_symbols(), 24);
        assert_eq!(p.rate1().scale_exact(p.l), 24);
        assert_eq!(p.round2_symbols(), 10);
        assert_eq!(p.rate2().scale_exact(p.l), 10);
    }

    #[test]
    fn rejects_bad_lengths_and_moduli() {
        assert!(matches!(
            SchemeParams::new(5, 2, 3, 2147483647, 7),
            Err(ParamsError::LengthNotDivisible { required: 10, .. })
        ));
        // k=3,u=2,s=2 needs u * n_pieces = 4 to divide l
        assert!(matches!(
            SchemeParams::new(3, 2, 2, 2, 2),
            Err(ParamsError::LengthNotDivisible { required: 4, .. })
        ));
        assert!(SchemeParams::new(3, 2, 2, 2, 4).is_ok());
        assert!(matches!(
            SchemeParams::new(5, 2, 3, 2147483646, 20),
            Err(ParamsError::InvalidModulus(_))
        ));
        assert!(matches!(
            SchemeParams::new(5, 5, 3, 7, 20),
            Err(ParamsError::InvalidSurvivorBound { .. })
        ));
        assert!(matches!(
            SchemeParams::new(5, 2, 6, 7, 20),
            Err(ParamsError::InvalidGroupSize { .. })
        ));
    }

    #[test]
    fn row_budget_holds_and_tightness_cases() {
        // The inequality holds across the whole small-parameter range.
        for k in 2..=10usize {
            for s in 2..=k {
                for u in 1..k {
                    let (lhs, rhs) = row_budget(k, u, s);
                    assert!(lhs >= rhs, "budget violated at k={k} u={u} s={s}");
                }
            }
        }
        // Tight exactly when u = 1 (Pascal) or s = 2 (all band binomials
        // collapse to 1); strict otherwise, including k = s with u > 1.
        for k in 2..=10usize {
            for s in 2..=k {
                for u in 1..k {
                    let (lhs, rhs) = row_budget(k, u, s);
                    let tight = lhs == rhs;
                    assert_eq!(
                        tight,
                        u == 1 || s == 2,
                        "tightness mismatch at k={k} u={u} s={s}: {lhs} vs {rhs}"
                    );
                }
            }
        }
    }
}
