//! Full protocol transcripts and the in-memory end-to-end run.

use std::collections::BTreeMap;

use crate::family::CoefficientFamily;
use crate::field::Fq;
use crate::keys::KeyMaterial;
use crate::params::SchemeParams;
use crate::rounds::{
    round1_encode, round2_encode, server_decode, server_round1_aggregate, InputVector,
    Round1Message, Round2Message, SchemeError,
};
use crate::usermatrix::UserMatrixSet;

/// Everything exchanged in one aggregation epoch. Under the worst-case
/// security model all `k` round-one messages exist (a dropped user may
/// merely be slow); in a live session only the received subset is present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub u1: Vec<usize>,
    pub u2: Vec<usize>,
    pub round1: BTreeMap<usize, Round1Message>,
    pub round2: BTreeMap<usize, Round2Message>,
    pub decoded: Option<Vec<u64>>,
}

impl Transcript {
    /// Re-runs the server decode from the stored messages.
    pub fn decode(&self, params: &SchemeParams, ums: &UserMatrixSet) -> Result<Vec<u64>, SchemeError> {
        let msgs: Vec<Round1Message> = self
            .u1
            .iter()
            .map(|k| {
                self.round1
                    .get(k)
                    .cloned()
                    .ok_or(SchemeError::MissingMessage { round: "round-one", user: *k })
            })
            .collect::<Result<_, _>>()?;
        let agg = server_round1_aggregate(params, &msgs)?;
        let round2: Vec<Round2Message> = self
            .u2
            .iter()
            .map(|k| {
                self.round2
                    .get(k)
                    .cloned()
                    .ok_or(SchemeError::MissingMessage { round: "round-two", user: *k })
            })
            .collect::<Result<_, _>>()?;
        server_decode(params, ums, &agg, &round2)
    }
}

/// Element-wise sum of the inputs of `users`.
pub fn direct_sum(params: &SchemeParams, inputs: &[InputVector], users: &[usize]) -> Vec<u64> {
    let f = Fq::new(params.q);
    let mut out = vec![0u64; params.l];
    for w in inputs.iter().filter(|w| users.contains(&w.owner)) {
        for (acc, &v) in out.iter_mut().zip(&w.symbols) {
            *acc = f.add(*acc, v);
        }
    }
    out
}

/// Runs one full epoch in memory: round-one messages from every user in
/// `u1`, the survivor announcement, round-two messages from every user in
/// `u2`, and the decode. Inputs must cover all of `u1`.
pub fn run_aggregation(
    params: &SchemeParams,
    family: &CoefficientFamily,
    ums: &UserMatrixSet,
    keys: &KeyMaterial,
    inputs: &[InputVector],
    u1: &[usize],
    u2: &[usize],
) -> Result<Transcript, SchemeError> {
    if u2.iter().any(|k| !u1.contains(k)) {
        return Err(SchemeError::SurvivorsNotNested);
    }
    let mut u1 = u1.to_vec();
    u1.sort_unstable();
    let mut u2 = u2.to_vec();
    u2.sort_unstable();

    let mut round1 = BTreeMap::new();
    for &k in &u1 {
        let input = inputs
            .iter()
            .find(|w| w.owner == k)
            .ok_or(SchemeError::MissingMessage { round: "input", user: k })?;
        round1.insert(k, round1_encode(params, family, keys, input)?);
    }
    let msgs: Vec<Round1Message> = round1.values().cloned().collect();
    let agg = server_round1_aggregate(params, &msgs)?;

    let mut round2 = BTreeMap::new();
    for &k in &u2 {
        round2.insert(k, round2_encode(params, family, ums, keys, k, &u1)?);
    }
    let r2: Vec<Round2Message> = round2.values().cloned().collect();
    let decoded = server_decode(params, ums, &agg, &r2)?;

    Ok(Transcript {
        u1,
        u2,
        round1,
        round2,
        decoded: Some(decoded),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::usermatrix::build_validated;

    const Q: u64 = 2147483647;

    #[test]
    fn full_epoch_recovers_survivor_sum() {
        let params = SchemeParams::new(5, 2, 3, Q, 20).unwrap();
        let v = build_validated(&params, 2, 16).unwrap();
        let keys = KeyMaterial::generate(&params, 100);
        let inputs: Vec<InputVector> =
            (1..=5).map(|k| InputVector::random(&params, k, 200 + k as u64)).collect();
        let u1 = vec![1, 2, 3, 4, 5];
        for u2 in [vec![1, 2], vec![2, 5], vec![1, 2, 3, 4, 5]] {
            let t = run_aggregation(&params, &v.family, &v.ums, &keys, &inputs, &u1, &u2).unwrap();
            assert_eq!(t.decoded.as_deref(), Some(direct_sum(&params, &inputs, &u1).as_slice()));
        }
    }

    #[test]
    fn dropout_after_round_one_changes_the_target_sum() {
        let params = SchemeParams::new(5, 2, 3, Q, 20).unwrap();
        let v = build_validated(&params, 3, 16).unwrap();
        let keys = KeyMaterial::generate(&params, 101);
        let inputs: Vec<InputVector> =
            (1..=5).map(|k| InputVector::random(&params, k, 300 + k as u64)).collect();
        let u1 = vec![1, 2, 3, 4];
        let t = run_aggregation(&params, &v.family, &v.ums, &keys, &inputs, &u1, &[2, 3]).unwrap();
        assert_eq!(t.decoded.as_deref(), Some(direct_sum(&params, &inputs, &u1).as_slice()));
    }

    #[test]
    fn all_zero_inputs_decode_to_zero() {
        let params = SchemeParams::new(4, 2, 2, 7, 8).unwrap();
        let v = build_validated(&params, 4, 100).unwrap();
        let keys = KeyMaterial::generate(&params, 102);
        let inputs: Vec<InputVector> = (1..=4)
            .map(|k| InputVector::new(&params, k, vec![0; params.l]).unwrap())
            .collect();
        let t = run_aggregation(&params, &v.family, &v.ums, &keys, &inputs, &[1, 2, 3, 4], &[1, 4])
            .unwrap();
        assert_eq!(t.decoded, Some(vec![0u64; params.l]));
    }

    #[test]
    fn nested_survivors_enforced() {
        let params = SchemeParams::new(5, 2, 3, Q, 20).unwrap();
        let v = build_validated(&params, 5, 16).unwrap();
        let keys = KeyMaterial::generate(&params, 103);
        let inputs: Vec<InputVector> =
            (1..=5).map(|k| InputVector::random(&params, k, k as u64)).collect();
        let err =
            run_aggregation(&params, &v.family, &v.ums, &keys, &inputs, &[1, 2, 3], &[1, 4])
                .unwrap_err();
        assert_eq!(err, SchemeError::SurvivorsNotNested);
    }

    #[test]
    fn decode_is_independent_of_the_survivor_subset_used() {
        let params = SchemeParams::new(5, 2, 3, Q, 20).unwrap();
        let v = build_validated(&params, 6, 16).unwrap();
        let keys = KeyMaterial::generate(&params, 104);
        let inputs: Vec<InputVector> =
            (1..=5).map(|k| InputVector::random(&params, k, 400 + k as u64)).collect();
        let u1 = vec![1, 2, 3, 4, 5];
        let t = run_aggregation(&params, &v.family, &v.ums, &keys, &inputs, &u1, &u1).unwrap();
        let expected = t.decoded.clone().unwrap();
        // decode from every 2-subset of round-two messages
        for a in 1..=5usize {
            for b in (a + 1)..=5 {
                let msgs: Vec<Round1Message> = t.round1.values().cloned().collect();
                let agg = server_round1_aggregate(&params, &msgs).unwrap();
                let r2 = vec![t.round2[&a].clone(), t.round2[&b].clone()];
                let got = server_decode(&params, &v.ums, &agg, &r2).unwrap();
                assert_eq!(got, expected, "subset {{{a},{b}}}");
            }
        }
    }
}
