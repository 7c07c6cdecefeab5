//! Group keys, per-member sub-keys, and survivor-dependent coded keys.
//!
//! Every size-`s` group `V` shares one key `Z_V` of `s * piece_len` uniform
//! symbols, generated independently of all inputs. `Z_V` splits into `s`
//! contiguous sub-keys, one per member in ascending id order. After round
//! one the relevant quantity is `Z^{U1}_V`, the sum of the sub-keys of the
//! surviving members, which slices into `u` contiguous coded keys.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::combin::{subsets, Group};
use crate::field::Fq;
use crate::params::SchemeParams;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("key for {0} has the wrong length")]
    WrongKeyLength(Group),
    #[error("key symbols must be reduced mod q")]
    UnreducedSymbol,
    #[error("missing key for group {0}")]
    MissingGroup(Group),
}

/// Keys for some or all groups. A server-side or test instance holds every
/// group; a user's key file holds only the groups that user belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMaterial {
    seed: Option<u64>,
    keys: BTreeMap<Group, Vec<u64>>,
}

impl KeyMaterial {
    /// Uniform i.i.d. keys for all groups; deterministic per seed. The key
    /// stream is separate from any input stream, so keys and inputs stay
    /// independent by construction.
    pub fn generate(params: &SchemeParams, seed: u64) -> KeyMaterial {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys = subsets(params.k, params.s)
            .into_iter()
            .map(|g| {
                let key = (0..params.group_key_len())
                    .map(|_| rng.gen_range(0..params.q))
                    .collect();
                (g, key)
            })
            .collect();
        KeyMaterial {
            seed: Some(seed),
            keys,
        }
    }

    /// All-zero keys: a test hook that turns round one into plaintext.
    pub fn zeros(params: &SchemeParams) -> KeyMaterial {
        let keys = subsets(params.k, params.s)
            .into_iter()
            .map(|g| (g, vec![0u64; params.group_key_len()]))
            .collect();
        KeyMaterial { seed: None, keys }
    }

    /// Builds from explicit symbols (enumeration oracles, key-file loading).
    pub fn from_symbols(
        params: &SchemeParams,
        keys: BTreeMap<Group, Vec<u64>>,
    ) -> Result<KeyMaterial, KeyError> {
        for (g, key) in &keys {
            if key.len() != params.group_key_len() {
                return Err(KeyError::WrongKeyLength(g.clone()));
            }
            if key.iter().any(|&v| v >= params.q) {
                return Err(KeyError::UnreducedSymbol);
            }
        }
        Ok(KeyMaterial { seed: None, keys })
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.keys.keys()
    }

    pub fn group_key(&self, v: &Group) -> Result<&[u64], KeyError> {
        self.keys
            .get(v)
            .map(Vec::as_slice)
            .ok_or_else(|| KeyError::MissingGroup(v.clone()))
    }

    /// Sub-key of member `k` within `Z_V`: the member's contiguous
    /// `piece_len`-symbol slice, in ascending member order.
    pub fn subkey(&self, params: &SchemeParams, v: &Group, k: usize) -> Result<&[u64], KeyError> {
        let key = self.group_key(v)?;
        let pos = v
            .position(k)
            .unwrap_or_else(|| panic!("user {k} not in {v}"));
        let w = params.subkey_len();
        Ok(&key[pos * w..(pos + 1) * w])
    }

    /// Only the groups `user` belongs to: the content of that user's key
    /// file.
    pub fn restrict_to_user(&self, user: usize) -> KeyMaterial {
        KeyMaterial {
            seed: None,
            keys: self
                .keys
                .iter()
                .filter(|(g, _)| g.contains(user))
                .map(|(g, k)| (g.clone(), k.clone()))
                .collect(),
        }
    }

    /// True iff keys for all `C(k, s)` groups are present.
    pub fn has_all_groups(&self, params: &SchemeParams) -> bool {
        let all = subsets(params.k, params.s);
        all.len() == self.keys.len() && all.iter().all(|g| self.keys.contains_key(g))
    }

    pub fn into_map(self) -> BTreeMap<Group, Vec<u64>> {
        self.keys
    }
}

/// Survivor-summed coded keys: for every group meeting `u1`, the sum of the
/// surviving members' sub-keys, sliced into `u` contiguous
/// `codedkey_len`-symbol blocks indexed `0..u`.
pub fn coded_keys(
    params: &SchemeParams,
    keys: &KeyMaterial,
    u1: &[usize],
) -> Result<BTreeMap<(Group, usize), Vec<u64>>, KeyError> {
    let f = Fq::new(params.q);
    let mut out = BTreeMap::new();
    for g in subsets(params.k, params.s) {
        let survivors: Vec<usize> = g.members().iter().copied().filter(|m| u1.contains(m)).collect();
        if survivors.is_empty() {
            continue;
        }
        let mut sum = vec![0u64; params.subkey_len()];
        for m in survivors {
            for (acc, &v) in sum.iter_mut().zip(keys.subkey(params, &g, m)?) {
                *acc = f.add(*acc, v);
            }
        }
        let w = params.codedkey_len;
        for replica in 0..params.u {
            out.insert((g.clone(), replica), sum[replica * w..(replica + 1) * w].to_vec());
        }
    }
    Ok(out)
}
