//! Scalar arithmetic in a prime field `F_q`.
//!
//! The modulus is a runtime parameter carried by the surrounding context
//! (matrix or scheme parameters), never by individual elements. Moduli are
//! restricted to primes below `2^31` so that every product of two reduced
//! residues fits a `u64` without overflow.

/// Largest supported modulus (exclusive). `(2^31 - 1)^2 < 2^64`.
pub const MAX_MODULUS: u64 = 1 << 31;

/// Deterministic primality test by trial division; sufficient for `q < 2^31`.
pub fn is_prime(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    if q.is_multiple_of(2) {
        return q == 2;
    }
    let mut d = 3;
    while d * d <= q {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Arithmetic context for one prime modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fq {
    q: u64,
}

impl Fq {
    /// Callers are expected to have validated primality (see
    /// [`crate::params::SchemeParams`]); this only checks the range.
    pub fn new(q: u64) -> Fq {
        assert!((2..MAX_MODULUS).contains(&q), "modulus out of range");
        Fq { q }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        a * b % self.q
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    /// Reduces a possibly negative integer into `[0, q)`.
    #[inline]
    pub fn reduce_signed(&self, a: i64) -> u64 {
        let q = self.q as i64;
        (a.rem_euclid(q)) as u64
    }

    /// `(-1)^exp` as a residue: `1` for even `exp`, `q - 1` for odd.
    #[inline]
    pub fn sign(&self, exp: usize) -> u64 {
        if exp.is_multiple_of(2) {
            1
        } else {
            self.q - 1
        }
    }

    /// Multiplicative inverse by extended Euclid. Panics on zero.
    pub fn inv(&self, a: u64) -> u64 {
        assert!(a != 0, "inverse of zero");
        let (mut r0, mut r1) = (self.q as i64, a as i64);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let d = r0 / r1;
            (r0, r1) = (r1, r0 - d * r1);
            (t0, t1) = (t1, t0 - d * t1);
        }
        debug_assert_eq!(r0, 1, "modulus not prime");
        self.reduce_signed(t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality() {
        assert!(is_prime(2));
        assert!(is_prime(7));
        assert!(is_prime(251));
        assert!(is_prime(2147483647));
        assert!(!is_prime(1));
        assert!(!is_prime(9));
        assert!(!is_prime(2147483645));
    }

    #[test]
    fn arithmetic_mod_7() {
        let f = Fq::new(7);
        assert_eq!(f.add(5, 4), 2);
        assert_eq!(f.sub(2, 5), 4);
        assert_eq!(f.mul(3, 5), 1);
        assert_eq!(f.neg(3), 4);
        assert_eq!(f.reduce_signed(-1), 6);
        assert_eq!(f.reduce_signed(-8), 6);
        assert_eq!(f.sign(0), 1);
        assert_eq!(f.sign(3), 6);
    }

    #[test]
    fn inverses() {
        for q in [2u64, 7, 11, 2147483647] {
            let f = Fq::new(q);
            for a in [1u64, 2, q - 1, q / 2 + 1] {
                let a = a % q;
                if a == 0 {
                    continue;
                }
                assert_eq!(f.mul(a, f.inv(a)), 1, "q={q} a={a}");
            }
        }
    }
}
