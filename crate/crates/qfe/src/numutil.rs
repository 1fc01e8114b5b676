//! Small number-theory helpers shared by the classical precomputation:
//! bit-length conventions, deterministic primality for `u64`, prime sieves,
//! modular inverses and generator finding for small primes.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// Bits needed to store an integer in `[0, a)`, i.e. `ceil(log2(max(1, a)))`.
pub fn len_bits(a: u64) -> u32 {
    if a <= 1 {
        0
    } else {
        64 - (a - 1).leading_zeros()
    }
}

/// Same convention for big integers.
pub fn len_bits_big(a: &BigUint) -> u64 {
    if a <= &BigUint::one() {
        0
    } else {
        (a - 1u32).bits()
    }
}

/// Deterministic Miller-Rabin for `n < 2^64`.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    // This base set is known to be exact for all n < 2^64.
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod_u64(a % n, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// All primes in `[lo, hi)` by a simple segmented odd sieve.
pub fn primes_in_range(lo: u64, hi: u64) -> Vec<u64> {
    if hi <= lo {
        return Vec::new();
    }
    let mut base = vec![true; ((hi as f64).sqrt() as usize) + 2];
    let mut small = Vec::new();
    for i in 2..base.len() {
        if base[i] {
            small.push(i as u64);
            let mut j = i * i;
            while j < base.len() {
                base[j] = false;
                j += i;
            }
        }
    }
    let span = (hi - lo) as usize;
    let mut seg = vec![true; span];
    for &p in &small {
        let start = lo.div_ceil(p).max(2) * p;
        let mut j = start;
        while j < hi {
            seg[(j - lo) as usize] = false;
            j += p;
        }
    }
    (0..span)
        .filter(|&i| seg[i] && lo + i as u64 >= 2)
        .map(|i| lo + i as u64)
        .collect()
}

/// Factor a small number by trial division; returns the distinct prime factors.
pub fn distinct_prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Least generator of the multiplicative group mod prime `p`, found by
/// checking candidates against every prime-order subgroup of `p - 1`.
pub fn find_generator(p: u64) -> Option<u64> {
    if p == 2 {
        return Some(1);
    }
    if !is_prime_u64(p) {
        return None;
    }
    let phi = p - 1;
    let factors = distinct_prime_factors(phi);
    'cand: for g in 2..p {
        for &q in &factors {
            if pow_mod_u64(g, phi / q, p) == 1 {
                continue 'cand;
            }
        }
        return Some(g);
    }
    None
}

/// Multiplicative order of `a` mod `n`, given the group exponent `lambda`
/// (any multiple of the order works). Small-number use only.
pub fn order_dividing(a: u64, n: u64, lambda: u64) -> u64 {
    debug_assert_eq!(pow_mod_u64(a, lambda, n), 1);
    let mut ord = lambda;
    for q in distinct_prime_factors(lambda) {
        while ord % q == 0 && pow_mod_u64(a, ord / q, n) == 1 {
            ord /= q;
        }
    }
    ord
}

/// Baby-step giant-step discrete log: returns `x` with `g^x = target (mod p)`,
/// for prime `p` where `g` has order `ord`.
pub fn bsgs_dlog(g: u64, target: u64, p: u64, ord: u64) -> Option<u64> {
    if target == 0 {
        return None;
    }
    let m = (ord as f64).sqrt().ceil() as u64 + 1;
    let mut table = std::collections::HashMap::with_capacity(m as usize);
    let mut cur = 1u64;
    for j in 0..m {
        table.entry(cur).or_insert(j);
        cur = mul_mod_u64(cur, g, p);
    }
    // giant step factor: g^(-m)
    let gm_inv = pow_mod_u64(mod_inverse_u64(g, p)?, m, p);
    let mut gamma = target % p;
    for i in 0..=m {
        if let Some(&j) = table.get(&gamma) {
            return Some((i * m + j) % ord);
        }
        gamma = mul_mod_u64(gamma, gm_inv, p);
    }
    None
}

/// Inverse of `a` mod `m` (u64), via extended Euclid.
pub fn mod_inverse_u64(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Inverse of `a` mod `m` for big integers. `None` when gcd != 1.
pub fn mod_inverse_big(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    use num_integer::Integer;
    let a = BigInt::from(a.clone());
    let m_i = BigInt::from(m.clone());
    let e = a.extended_gcd(&m_i);
    if !e.gcd.is_one() {
        return None;
    }
    let x = e.x.mod_floor(&m_i);
    x.to_biguint()
}

/// `min(a mod n, n - a mod n)` as the numerator of the modular deviation.
pub fn deviation_numerator(a: &BigUint, n: &BigUint) -> BigUint {
    let r = a % n;
    if r.is_zero() {
        r
    } else {
        (n - &r).min(r)
    }
}

/// Parse an unsigned big integer from decimal or `0x` hex.
pub fn parse_big(s: &str) -> Option<BigUint> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        BigUint::parse_bytes(hex.as_bytes(), 16)
    } else {
        BigUint::parse_bytes(s.as_bytes(), 10)
    }
}

/// Big integer to u64, panicking on overflow (caller guarantees range).
pub fn big_to_u64(a: &BigUint) -> u64 {
    a.to_u64().expect("value exceeds u64 range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn len_bits_matches_convention() {
        assert_eq!(len_bits(1), 0);
        assert_eq!(len_bits(2), 1);
        assert_eq!(len_bits(3), 2);
        assert_eq!(len_bits(1280), 11);
        assert_eq!(len_bits_big(&BigUint::from(1280u32)), 11);
    }

    #[test]
    fn small_primality() {
        let known: Vec<u64> = primes_in_range(2, 100);
        assert_eq!(known[..5], [2, 3, 5, 7, 11]);
        assert!(is_prime_u64(4294967291));
        assert!(!is_prime_u64(4294967297)); // 641 * 6700417
    }

    #[test]
    fn generator_of_7_is_3() {
        assert_eq!(find_generator(7), Some(3));
    }

    #[test]
    fn bsgs_small_case() {
        // 3^4 = 81 = 4 mod 7
        assert_eq!(bsgs_dlog(3, 4, 7, 6), Some(4));
        assert_eq!(bsgs_dlog(3, 1, 7, 6), Some(0));
    }

    #[test]
    fn bsgs_against_exhaustive_powers() {
        let p = 10007;
        let g = find_generator(p).unwrap();
        let mut val = 1u64;
        for x in 0..200 {
            assert_eq!(bsgs_dlog(g, val, p, p - 1), Some(x));
            val = mul_mod_u64(val, g, p);
        }
    }

    #[test]
    fn inverse_round_trips() {
        for a in [3u64, 17, 65537, 123456789] {
            let m = 1000000007;
            let inv = mod_inverse_u64(a, m).unwrap();
            assert_eq!(mul_mod_u64(a, inv, m), 1);
        }
    }
}
