//! Exact leakage accounting: rank identities and a brute-force oracle.
//!
//! All inputs and keys are uniform and mutually independent, and the view is
//! linear in both, so every entropy is a matrix rank counted in q-ary
//! symbols:
//!
//! - `I(W; view) = rank([A_W | A_Z]) - rank(A_Z)`
//! - `I(W; view | sum) = rank([A_W | A_Z; T_W | 0]) - rank(T_W) - rank(A_Z)`
//!
//! A correct scheme reveals exactly the survivor sum: the marginal leakage
//! equals `l` and the conditional leakage is exactly zero, not merely
//! vanishing. The independent check is [`brute_force_mi`], which enumerates
//! every `(w, z)` assignment on a tiny instance, runs the real encoders, and
//! computes the conditional mutual information from raw joint counts.

use std::collections::HashMap;

use crate::family::CoefficientFamily;
use crate::params::SchemeParams;
use crate::rounds::InputVector;
use crate::usermatrix::UserMatrixSet;
use crate::view::{concrete_view, keys_from_flat, Sabotage, VerifyError, ViewSystem};

/// Enumeration budget: at most `2^26` joint states.
const ENUM_BUDGET_BITS: u32 = 26;

/// Rank-based leakage figures for one survivor set, in q-ary symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeakageReport {
    pub u1: Vec<usize>,
    /// `H(view)`.
    pub h_view: usize,
    /// `H(view | W) = rank(A_Z)`.
    pub h_view_given_w: usize,
    /// `I(W; view)`; equals `l` for a correct scheme: the view pins down
    /// the survivor sum and nothing else.
    pub i_w_view: usize,
    /// `I(W; view | sum W)`; zero for a correct scheme.
    pub i_w_view_given_sum: i64,
    /// `i_w_view == l && i_w_view_given_sum == 0`.
    pub pass: bool,
}

/// Computes the report by three rank evaluations on the view system.
pub fn leakage_rank(params: &SchemeParams, vs: &ViewSystem) -> LeakageReport {
    let joint = vs.a_w.hstack(&vs.a_z);
    let h_view = joint.rank();
    let h_view_given_w = vs.a_z.rank();
    let i_w_view = h_view - h_view_given_w;

    let t_padded = vs
        .t_w
        .hstack(&crate::matrix::FieldMatrix::zeros(vs.t_w.rows(), vs.a_z.cols(), params.q));
    let stacked = joint.vstack(&t_padded);
    let h_joint_with_target = stacked.rank();
    let h_target = vs.t_w.rank();
    let i_w_view_given_sum =
        h_joint_with_target as i64 - h_target as i64 - h_view_given_w as i64;

    let pass = i_w_view == params.l && i_w_view_given_sum == 0;
    LeakageReport {
        u1: vs.u1.clone(),
        h_view,
        h_view_given_w,
        i_w_view,
        i_w_view_given_sum,
        pass,
    }
}

/// An exact rational in units of q-ary symbols: `num / q^den_pow`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QaryRational {
    pub num: i128,
    pub den_pow: u32,
    pub q: u64,
}

impl QaryRational {
    fn reduced(mut num: i128, mut den_pow: u32, q: u64) -> QaryRational {
        while den_pow > 0 && num % q as i128 == 0 {
            num /= q as i128;
            den_pow -= 1;
        }
        QaryRational { num, den_pow, q }
    }

    /// Exact comparison against an integer symbol count.
    pub fn equals_integer(&self, symbols: i64) -> bool {
        self.den_pow == 0 && self.num == symbols as i128
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn is_positive(&self) -> bool {
        self.num > 0
    }
}

impl std::fmt::Display for QaryRational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den_pow == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}^{}", self.num, self.q, self.den_pow)
        }
    }
}

/// Exhaustively enumerates all `(w, z)` assignments, runs the concrete
/// encoders on each, and returns `I(W; view | sum W)` from the resulting
/// joint counts, exactly, in q-ary symbols.
///
/// Counts of a linear system come out as powers of `q`, so every log is an
/// integer and the total is an exact rational with denominator `q^N`. The
/// identity used is `I(X;Y|Z) = H(X,Z) + H(Y,Z) - H(X,Y,Z) - H(Z)`.
pub fn brute_force_mi(
    params: &SchemeParams,
    family: &CoefficientFamily,
    ums: &UserMatrixSet,
    u1: &[usize],
    sabotage: Option<Sabotage>,
) -> Result<QaryRational, VerifyError> {
    let n_w = params.k * params.l;
    let groups = crate::combin::subsets(params.k, params.s);
    let n_z = groups.len() * params.group_key_len();
    let total_syms = n_w + n_z;
    let q = params.q;

    let state_bits = (total_syms as f64) * (q as f64).log2();
    if state_bits > ENUM_BUDGET_BITS as f64 {
        return Err(VerifyError::TooLargeToEnumerate {
            symbols: total_syms,
            budget_bits: ENUM_BUDGET_BITS,
        });
    }

    let mut u1 = u1.to_vec();
    u1.sort_unstable();
    let view_syms = params.k * params.round1_symbols() + u1.len() * params.round2_symbols();
    let bits_per_sym = 64 - (q - 1).leading_zeros();
    let packed_bits = (view_syms as u32 + params.l as u32) * bits_per_sym;
    if packed_bits > 60 {
        return Err(VerifyError::ViewTooWide { bits: packed_bits });
    }
    let pack = |syms: &[u64]| -> u64 {
        syms.iter().fold(0u64, |acc, &s| (acc << bits_per_sym) | s)
    };

    // Precompute the key-dependent part of the view for every key
    // assignment: round-one key contributions and the full round-two
    // messages, which never depend on w.
    let n_z_states = (q as u128).pow(n_z as u32) as u64;
    let zero_inputs: Vec<InputVector> = (1..=params.k)
        .map(|k| InputVector {
            owner: k,
            symbols: vec![0; params.l],
        })
        .collect();
    let mut key_views: Vec<Vec<u64>> = Vec::with_capacity(n_z_states as usize);
    let mut z = vec![0u64; n_z];
    loop {
        let keys = keys_from_flat(params, &z);
        // With all-zero inputs the view is exactly the key contribution,
        // except that an unmasked sabotage block is zero either way.
        let kv = concrete_view(params, family, ums, &u1, sabotage, &keys, &zero_inputs)?;
        key_views.push(kv);
        if !increment(&mut z, q) {
            break;
        }
    }
    debug_assert_eq!(key_views.len() as u64, n_z_states);

    // The w-dependent part adds input pieces onto the masked blocks; build
    // the additive stencil once: for each view row, which w symbol it adds.
    let mut w_stencil: Vec<Option<usize>> = vec![None; view_syms];
    {
        let mut row = 0;
        for k in 1..=params.k {
            for j in 0..params.n_combos {
                for t in 0..params.piece_len {
                    if j < params.n_pieces {
                        w_stencil[row] = Some((k - 1) * params.l + j * params.piece_len + t);
                    }
                    row += 1;
                }
            }
        }
    }

    let f = crate::field::Fq::new(q);
    let n_exp = total_syms as i128;
    let mut acc_hwt: i128 = 0; // H(W, T) accumulator
    let mut acc_hwvt: i128 = 0; // H(W, view, T)
    let mut vt_counts: HashMap<u64, u64> = HashMap::new(); // (view, T) joint
    let mut t_counts: HashMap<u64, u64> = HashMap::new();

    let mut w = vec![0u64; n_w];
    let mut local: HashMap<u64, u64> = HashMap::new();
    let mut view_buf = vec![0u64; view_syms];
    loop {
        // target: survivor sum of this w
        let mut target = vec![0u64; params.l];
        for &k in &u1 {
            for t in 0..params.l {
                target[t] = f.add(target[t], w[(k - 1) * params.l + t]);
            }
        }
        let t_packed = pack(&target);

        local.clear();
        for kv in &key_views {
            for (row, v) in view_buf.iter_mut().enumerate() {
                *v = match w_stencil[row] {
                    Some(wi) => f.add(kv[row], w[wi]),
                    None => kv[row],
                };
            }
            // Sabotaged unmasked blocks replace rather than add; the key
            // view already holds zero there, so addition is replacement.
            let key = (pack(&view_buf) << (params.l as u32 * bits_per_sym)) | t_packed;
            *local.entry(key).or_insert(0) += 1;
        }
        for (&key, &count) in &local {
            acc_hwvt += entropy_term(count, n_exp, q)?;
            *vt_counts.entry(key).or_insert(0) += count;
        }
        let w_total: u64 = local.values().sum();
        debug_assert_eq!(w_total, n_z_states);
        acc_hwt += entropy_term(w_total, n_exp, q)?;
        *t_counts.entry(t_packed).or_insert(0) += w_total;

        if !increment(&mut w, q) {
            break;
        }
    }

    let mut acc_hvt: i128 = 0;
    for &count in vt_counts.values() {
        acc_hvt += entropy_term(count, n_exp, q)?;
    }
    let mut acc_ht: i128 = 0;
    for &count in t_counts.values() {
        acc_ht += entropy_term(count, n_exp, q)?;
    }

    // I(W; view | T) = H(W,T) + H(view,T) - H(W,view,T) - H(T)
    let num = acc_hwt + acc_hvt - acc_hwvt - acc_ht;
    Ok(QaryRational::reduced(num, total_syms as u32, q))
}

/// Contribution `count * (N - log_q count)` of one joint cell to an
/// (unnormalized) entropy sum. Errors if the count is not a power of `q`.
fn entropy_term(count: u64, n_exp: i128, q: u64) -> Result<i128, VerifyError> {
    let mut c = count;
    let mut log = 0i128;
    while c > 1 {
        if !c.is_multiple_of(q) {
            return Err(VerifyError::NonPowerOfQCount(count));
        }
        c /= q;
        log += 1;
    }
    Ok(count as i128 * (n_exp - log))
}

/// Odometer increment of a base-`q` digit vector; false on wrap-around.
fn increment(digits: &mut [u64], q: u64) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < q {
            return true;
        }
        *d = 0;
    }
    false
}
