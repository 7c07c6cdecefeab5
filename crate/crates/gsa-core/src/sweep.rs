//! Exhaustive dropout sweep: every legal survivor pair, several random
//! draws each, decode checked against the direct sum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::family::CoefficientFamily;
use crate::keys::KeyMaterial;
use crate::params::SchemeParams;
use crate::rounds::InputVector;
use crate::transcript::{direct_sum, run_aggregation, Transcript};
use crate::usermatrix::UserMatrixSet;
use crate::view::VerifyError;

/// Default hard cap on enumerated `(u1, u2)` patterns.
pub const DEFAULT_PATTERN_BUDGET: usize = 100_000;

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub trials_per_pattern: usize,
    pub seed: u64,
    /// Refuse to run sweeps beyond this many patterns.
    pub max_patterns: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            trials_per_pattern: 3,
            seed: 0,
            max_patterns: DEFAULT_PATTERN_BUDGET,
        }
    }
}

/// A failed pattern, with the transcript kept for replay.
#[derive(Clone, Debug)]
pub struct SweepFailure {
    pub u1: Vec<usize>,
    pub u2: Vec<usize>,
    pub trial: usize,
    pub error: Option<String>,
    pub transcript: Option<Transcript>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepReport {
    pub patterns: usize,
    pub trials: usize,
    pub failures: Vec<SweepFailure>,
}

impl SweepReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Enumerates every `(u1, u2)` with `u2 ⊆ u1 ⊆ {1..k}` and
/// `|u1| >= |u2| >= u`, runs `trials_per_pattern` seeded draws of inputs
/// and keys for each, and records every decode mismatch.
pub fn exhaustive_dropout_sweep(
    params: &SchemeParams,
    family: &CoefficientFamily,
    ums: &UserMatrixSet,
    opts: &SweepOptions,
) -> Result<SweepReport, VerifyError> {
    let patterns = count_patterns(params.k, params.u);
    if patterns > opts.max_patterns {
        return Err(VerifyError::SweepBudgetExceeded {
            patterns,
            budget: opts.max_patterns,
        });
    }

    let mut seeder = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut report = SweepReport {
        patterns,
        ..Default::default()
    };
    for size1 in params.u..=params.k {
        for u1 in crate::combin::subsets(params.k, size1) {
            let u1 = u1.members().to_vec();
            for size2 in params.u..=size1 {
                for u2_local in crate::combin::subsets(size1, size2) {
                    let u2: Vec<usize> =
                        u2_local.members().iter().map(|&i| u1[i - 1]).collect();
                    for trial in 0..opts.trials_per_pattern {
                        report.trials += 1;
                        let key_seed = seeder.gen::<u64>();
                        let input_seed = seeder.gen::<u64>();
                        let keys = KeyMaterial::generate(params, key_seed);
                        let inputs: Vec<InputVector> = (1..=params.k)
                            .map(|k| {
                                InputVector::random(params, k, input_seed.wrapping_add(k as u64))
                            })
                            .collect();
                        let expected = direct_sum(params, &inputs, &u1);
                        match run_aggregation(params, family, ums, &keys, &inputs, &u1, &u2) {
                            Ok(t) if t.decoded.as_deref() == Some(expected.as_slice()) => {}
                            Ok(t) => report.failures.push(SweepFailure {
                                u1: u1.clone(),
                                u2: u2.clone(),
                                trial,
                                error: Some("decoded sum differs from direct sum".into()),
                                transcript: Some(t),
                            }),
                            Err(e) => report.failures.push(SweepFailure {
                                u1: u1.clone(),
                                u2: u2.clone(),
                                trial,
                                error: Some(e.to_string()),
                                transcript: None,
                            }),
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Number of `(u1, u2)` patterns for `k` users and survivor bound `u`.
pub fn count_patterns(k: usize, u: usize) -> usize {
    let mut total = 0usize;
    for size1 in u..=k {
        let n_u1 = crate::combin::binom(k as i64, size1 as i64) as usize;
        let mut nested = 0usize;
        for size2 in u..=size1 {
            nested += crate::combin::binom(size1 as i64, size2 as i64) as usize;
        }
        total += n_u1 * nested;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::usermatrix::build_validated;

    #[test]
    fn pattern_count_5_2() {
        // |u1|=2:10*1, |u1|=3:10*4, |u1|=4:5*11, |u1|=5:1*26
        assert_eq!(count_patterns(5, 2), 10 + 40 + 55 + 26);
    }

    #[test]
    fn budget_is_enforced() {
        let params = SchemeParams::new(5, 2, 3, 7, 10).unwrap();
        let v = build_validated(&params, 20, 200).unwrap();
        let opts = SweepOptions {
            max_patterns: 10,
            ..Default::default()
        };
        assert!(matches!(
            exhaustive_dropout_sweep(&params, &v.family, &v.ums, &opts),
            Err(VerifyError::SweepBudgetExceeded { patterns: 131, budget: 10 })
        ));
    }

    #[test]
    fn small_field_sweep_has_no_failures() {
        let params = SchemeParams::new(4, 2, 2, 7, 4).unwrap();
        let v = build_validated(&params, 21, 200).unwrap();
        let report =
            exhaustive_dropout_sweep(&params, &v.family, &v.ums, &SweepOptions::default())
                .unwrap();
        assert!(report.all_passed(), "failures: {:?}", report.failures);
        assert_eq!(report.patterns, count_patterns(4, 2));
        assert_eq!(report.trials, report.patterns * 3);
    }

    #[test]
    fn corrupted_matrices_produce_failures() {
        let params = SchemeParams::new(4, 2, 2, 7, 4).unwrap();
        let v = build_validated(&params, 22, 200).unwrap();
        // duplicate a row inside user 4's matrix: the zero structure stays
        // intact but any decode system containing user 4 goes singular
        let mut sks: Vec<_> = v.ums.sk_matrices().to_vec();
        let dup = crate::matrix::FieldMatrix::from_rows(
            params.q,
            vec![sks[3].row(0).to_vec(), sks[3].row(0).to_vec()],
        );
        sks[3] = dup;
        let broken = UserMatrixSet::from_matrices(&v.family, sks, None).unwrap();
        let report =
            exhaustive_dropout_sweep(&params, &v.family, &broken, &SweepOptions::default())
                .unwrap();
        assert!(!report.all_passed());
        assert!(report
            .failures
            .iter()
            .all(|fl| fl.u2.contains(&4) || fl.u1.contains(&4)));
    }
}
