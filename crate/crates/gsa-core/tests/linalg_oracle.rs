//! Independent checks of the field linear algebra against exact integer
//! arithmetic and against algebraic invariants.

use gsa_core::matrix::FieldMatrix;
use num_bigint::BigInt;
use proptest::prelude::*;

/// Rank over the rationals by fraction-free (Bareiss) elimination. Exact:
/// no modular reduction, no floating point.
fn rational_rank(rows: usize, cols: usize, data: &[u64]) -> usize {
    let mut m: Vec<Vec<BigInt>> = (0..rows)
        .map(|r| (0..cols).map(|c| BigInt::from(data[r * cols + c])).collect())
        .collect();
    let mut rank = 0;
    let mut prev = BigInt::from(1);
    for col in 0..cols {
        let Some(src) = (rank..rows).find(|&r| m[r][col] != BigInt::ZERO) else {
            continue;
        };
        m.swap(rank, src);
        for r2 in rank + 1..rows {
            for c2 in col + 1..cols {
                let num = &m[rank][col] * &m[r2][c2] - &m[r2][col] * &m[rank][c2];
                m[r2][c2] = num / &prev;
            }
            m[r2][col] = BigInt::ZERO;
        }
        prev = m[rank][col].clone();
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

#[test]
fn field_rank_matches_rational_rank_on_random_instances() {
    // Entries below q, rank over F_q vs rank over Q. They can only differ
    // if q divides a pivotal minor, which a fixed random draw avoids.
    let q = 2147483647u64;
    for seed in 0..40u64 {
        let m = FieldMatrix::random(5, 5, q, seed);
        assert_eq!(
            m.rank(),
            rational_rank(5, 5, m.data()),
            "seed {seed}"
        );
    }
    for seed in 100..120u64 {
        let m = FieldMatrix::random(6, 3, q, seed);
        assert_eq!(m.rank(), rational_rank(6, 3, m.data()), "seed {seed}");
    }
}

#[test]
fn low_rank_products_agree_with_oracle() {
    // Products of thin matrices with small entries stay below q, so the
    // field product coincides with the integer product and both ranks are
    // bounded by the inner dimension.
    let q = 2147483647u64;
    for seed in 0..10u64 {
        let a = FieldMatrix::random(6, 2, 997, seed);
        let b = FieldMatrix::random(2, 6, 997, seed + 1000);
        let lift = |m: &FieldMatrix| {
            FieldMatrix::from_rows(q, (0..m.rows()).map(|r| m.row(r).to_vec()).collect())
        };
        let prod = lift(&a).matmul(&lift(&b));
        let expect = rational_rank(6, 6, prod.data());
        assert!(expect <= 2);
        assert_eq!(prod.rank(), expect, "seed {seed}");
    }
}

fn arb_matrix() -> impl Strategy<Value = FieldMatrix> {
    (1usize..6, 1usize..6, prop_oneof![Just(7u64), Just(11), Just(2147483647)], any::<u64>())
        .prop_map(|(rows, cols, q, seed)| FieldMatrix::random(rows, cols, q, seed))
}

proptest! {
    #[test]
    fn rank_is_transpose_invariant(m in arb_matrix()) {
        prop_assert_eq!(m.rank(), m.transpose().rank());
    }

    #[test]
    fn null_basis_spans_the_cokernel(m in arb_matrix()) {
        let basis = m.left_null_basis();
        prop_assert_eq!(basis.rows(), m.rows() - m.rank());
        prop_assert_eq!(basis.rank(), basis.rows());
        prop_assert!(basis.matmul(&m).is_zero());
    }

    #[test]
    fn solve_then_multiply_back(seed in any::<u64>(), q in prop_oneof![Just(7u64), Just(2147483647)]) {
        let a = FieldMatrix::random(4, 4, q, seed);
        let b = FieldMatrix::random(4, 2, q, seed.wrapping_add(1));
        match a.solve_square(&b) {
            Ok(x) => prop_assert_eq!(a.matmul(&x), b),
            Err(_) => prop_assert!(a.rank() < 4),
        }
    }

    #[test]
    fn rref_idempotent_and_rank_stable(m in arb_matrix()) {
        let (r1, p1) = m.rref();
        let (r2, p2) = r1.rref();
        prop_assert_eq!(&r1, &r2);
        prop_assert_eq!(p1.len(), m.rank());
        prop_assert_eq!(p1, p2);
    }
}
