//! Subset enumeration and binomial coefficients.
//!
//! Users are numbered `1..=k` throughout, and groups are sorted member lists.
//! Subset enumerations are lexicographic on the sorted members everywhere, so
//! every column layout derived from them is reproducible.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Binomial coefficient with the convention `binom(n, r) = 0` whenever
/// `n < 0`, `r < 0`, or `n < r`.
pub fn binom(n: i64, r: i64) -> u64 {
    if n < 0 || r < 0 || n < r {
        return 0;
    }
    let n = n as u128;
    let r = (r as u128).min(n - r as u128);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) / (i + 1);
    }
    u64::try_from(acc).expect("binomial overflow")
}

/// A group of users: a sorted list of distinct ids in `1..=k`.
///
/// The derived `Ord` is lexicographic on the members, which is exactly the
/// subset order used for every enumeration in this crate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Group(Vec<usize>);

impl Group {
    /// Builds a group from member ids; sorts them and panics on duplicates
    /// or a zero id.
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        assert!(
            members.windows(2).all(|w| w[0] < w[1]),
            "group members must be distinct"
        );
        assert!(members.first().is_none_or(|&m| m >= 1), "user ids are 1-based");
        Group(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, user: usize) -> bool {
        self.0.binary_search(&user).is_ok()
    }

    /// Position of `user` within the sorted member list.
    pub fn position(&self, user: usize) -> Option<usize> {
        self.0.binary_search(&user).ok()
    }

    /// Number of members strictly smaller than `user`.
    pub fn count_smaller(&self, user: usize) -> usize {
        self.0.partition_point(|&m| m < user)
    }

    /// The group with member at `idx` replaced by `user`, re-sorted.
    pub fn swap_member(&self, idx: usize, user: usize) -> Group {
        let mut m = self.0.clone();
        m[idx] = user;
        Group::new(m)
    }

    pub fn intersects(&self, users: &[usize]) -> bool {
        users.iter().any(|&u| self.contains(u))
    }

    /// Canonical string key used in JSON maps, e.g. `"1,2,3"`.
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses the canonical `"1,2,3"` form.
    pub fn parse_key(key: &str) -> Option<Group> {
        let members: Option<Vec<usize>> = key.split(',').map(|p| p.trim().parse().ok()).collect();
        let members = members?;
        if members.is_empty() || members.windows(2).any(|w| w[0] >= w[1]) || members[0] == 0 {
            return None;
        }
        Some(Group(members))
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

/// All size-`s` subsets of `{1, ..., k}` in lexicographic order.
pub fn subsets(k: usize, s: usize) -> Vec<Group> {
    let mut out = Vec::with_capacity(binom(k as i64, s as i64) as usize);
    if s == 0 || s > k {
        return out;
    }
    let mut cur: Vec<usize> = (1..=s).collect();
    loop {
        out.push(Group(cur.clone()));
        // advance to the next combination in lex order
        let mut i = s;
        while i > 0 {
            i -= 1;
            if cur[i] < k - (s - 1 - i) {
                cur[i] += 1;
                for j in i + 1..s {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return out;
            }
        }
    }
}

/// Size-`s` subsets of `{1, ..., k}` containing `user`, in lexicographic order.
pub fn subsets_containing(k: usize, s: usize, user: usize) -> Vec<Group> {
    subsets(k, s).into_iter().filter(|g| g.contains(user)).collect()
}

/// Size-`s` subsets of `{1, ..., k}` avoiding `user`, in lexicographic order.
pub fn subsets_avoiding(k: usize, s: usize, user: usize) -> Vec<Group> {
    subsets(k, s).into_iter().filter(|g| !g.contains(user)).collect()
}

/// Index of `group` within the lexicographic enumeration `subsets(k, s)`.
pub fn subset_index(all: &[Group], group: &Group) -> usize {
    all.binary_search(group).expect("group not in enumeration")
}
