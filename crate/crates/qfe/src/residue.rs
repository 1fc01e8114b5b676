//! Residue number systems with certified small modular deviation, plus the
//! classical per-prime precomputation the exponentiation loops consume:
//! CRT contribution factors, truncated contribution constants, generators,
//! and windowed discrete-log tables.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::numutil::{
    bsgs_dlog, deviation_numerator, find_generator, is_prime_u64, len_bits, len_bits_big,
    mod_inverse_big, primes_in_range,
};
use crate::rng::{stream, u64_below};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResidueError {
    /// Deviation target not reached within the sample budget. Carries the
    /// best deviation found, as an exact fraction.
    BudgetExhausted { best_num: BigUint, best_den: BigUint },
    /// Exclusions removed too many candidates; caller should increment ell.
    InsufficientPrimes { have: usize, need: usize },
    LengthMismatch { expected: usize, got: usize },
    NoGenerator { p: u64 },
    DlogUndefined { p: u64, window: usize, value: u64 },
    InvalidParams(String),
    ParseError(String),
}

impl fmt::Display for ResidueError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResidueError::BudgetExhausted { best_num, best_den } => {
                write!(f, "deviation target not reached in budget (best {best_num}/{best_den})")
            }
            ResidueError::InsufficientPrimes { have, need } => {
                write!(f, "only {have} admissible primes, need {need}; increment ell")
            }
            ResidueError::LengthMismatch { expected, got } => {
                write!(f, "expected {expected} residues, got {got}")
            }
            ResidueError::NoGenerator { p } => write!(f, "no generator mod {p} (not prime?)"),
            ResidueError::DlogUndefined { p, window, value } => {
                write!(f, "dlog undefined: multiplier window {window} value {value} is 0 mod {p}")
            }
            ResidueError::InvalidParams(s) => write!(f, "invalid params: {s}"),
            ResidueError::ParseError(s) => write!(f, "parse error: {s}"),
        }
    }
}

impl std::error::Error for ResidueError {}

/// The number being factored, with its bit length `n = ceil(log2 N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modulus {
    value: BigUint,
    bits: u64,
}

impl Modulus {
    pub fn new(value: BigUint) -> Result<Self, ResidueError> {
        if value < BigUint::from(3u32) {
            return Err(ResidueError::InvalidParams("modulus must be >= 3".into()));
        }
        if (&value % 2u32).is_zero() {
            return Err(ResidueError::InvalidParams("modulus must be odd".into()));
        }
        let bits = len_bits_big(&value);
        Ok(Modulus { value, bits })
    }

    pub fn from_u64(value: u64) -> Result<Self, ResidueError> {
        Self::new(BigUint::from(value))
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// `n`, the minimum bits needed to store a value in `[0, N)`.
    pub fn bits(&self) -> u64 {
        self.bits
    }
}

/// Exact modular deviation `min(a mod N, -a mod N) / N`.
pub fn modular_deviation(a: &BigInt, n: &Modulus) -> Deviation {
    let n_big = BigInt::from(n.value.clone());
    let mut r = a % &n_big;
    if r.is_negative() {
        r += &n_big;
    }
    let r = r.to_biguint().expect("reduced residue is nonnegative");
    Deviation {
        num: deviation_numerator(&r, &n.value),
        den: n.value.clone(),
    }
}

/// An exact rational in `[0, 1/2]`, kept as numerator/denominator so the
/// `2^-f` certificate is an integer comparison rather than a float one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deviation {
    pub num: BigUint,
    pub den: BigUint,
}

impl Deviation {
    /// `self < 2^-f`, exactly.
    pub fn below_2pow_neg(&self, f: u32) -> bool {
        (&self.num << f) < self.den
    }

    pub fn to_f64(&self) -> f64 {
        // Scale into a range where the quotient is representable.
        let shift = 80u32;
        let scaled = (&self.num << shift) / &self.den;
        scaled.to_f64().unwrap_or(f64::INFINITY) / 2f64.powi(shift as i32)
    }
}

/// A set of distinct `ell`-bit primes whose product `L` exceeds `N^w1` and
/// deviates from a multiple of `N` by less than `2^-f_target`.
#[derive(Debug, Clone)]
pub struct ResidueSystem {
    primes: Vec<u64>,
    ell: u32,
    f_target: u32,
    w1_count: u32,
    l: BigUint,
    /// `L mod N` as maintained incrementally during the swap search.
    l_mod_n: BigUint,
    deviation: Deviation,
}

impl ResidueSystem {
    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn f_target(&self) -> u32 {
        self.f_target
    }

    pub fn w1_count(&self) -> u32 {
        self.w1_count
    }

    pub fn l(&self) -> &BigUint {
        &self.l
    }

    pub fn l_mod_n(&self) -> &BigUint {
        &self.l_mod_n
    }

    pub fn deviation(&self) -> &Deviation {
        &self.deviation
    }

    /// Independent recomputation of the certificate: rebuilds `L` and
    /// `L mod N` from scratch and checks every stored invariant.
    pub fn verify(&self, n: &Modulus) -> Result<(), ResidueError> {
        let mut seen = std::collections::HashSet::new();
        for &p in &self.primes {
            if !is_prime_u64(p) {
                return Err(ResidueError::InvalidParams(format!("{p} is not prime")));
            }
            if len_bits(p) != self.ell {
                return Err(ResidueError::InvalidParams(format!("{p} is not {} bits", self.ell)));
            }
            if !seen.insert(p) {
                return Err(ResidueError::InvalidParams(format!("{p} appears twice")));
            }
        }
        let l = product_tree(&self.primes);
        if l != self.l {
            return Err(ResidueError::InvalidParams("stored L mismatch".into()));
        }
        if &l % n.value() != self.l_mod_n {
            return Err(ResidueError::InvalidParams("stored L mod N mismatch".into()));
        }
        let n_pow = n.value().pow(self.w1_count);
        if l < n_pow {
            return Err(ResidueError::InvalidParams("L < N^W1".into()));
        }
        let dev = Deviation {
            num: deviation_numerator(&self.l_mod_n, n.value()),
            den: n.value().clone(),
        };
        if dev != self.deviation {
            return Err(ResidueError::InvalidParams("stored deviation mismatch".into()));
        }
        if !dev.below_2pow_neg(self.f_target) {
            return Err(ResidueError::InvalidParams("deviation certificate fails".into()));
        }
        Ok(())
    }

    /// Build a system directly from a prime list (used by tests and by the
    /// paper-published reproduction set). Certifies nothing beyond computing
    /// the exact deviation; `verify` performs the full check.
    pub fn from_primes(
        primes: Vec<u64>,
        n: &Modulus,
        ell: u32,
        f_target: u32,
        w1_count: u32,
    ) -> Self {
        let l = product_tree(&primes);
        let l_mod_n = &l % n.value();
        let deviation = Deviation {
            num: deviation_numerator(&l_mod_n, n.value()),
            den: n.value().clone(),
        };
        ResidueSystem { primes, ell, f_target, w1_count, l, l_mod_n, deviation }
    }

    /// Versioned text serialization.
    pub fn to_text(&self, n: &Modulus) -> String {
        let mut out = String::new();
        out.push_str("qfe-residue-system v1\n");
        out.push_str(&format!("modulus-hex {:x}\n", n.value()));
        out.push_str(&format!("ell {}\n", self.ell));
        out.push_str(&format!("f {}\n", self.f_target));
        out.push_str(&format!("w1 {}\n", self.w1_count));
        out.push_str(&format!("prime-count {}\n", self.primes.len()));
        for p in &self.primes {
            out.push_str(&format!("{p}\n"));
        }
        out.push_str(&format!("deviation {}/{}\n", self.deviation.num, self.deviation.den));
        out
    }

    pub fn from_text(text: &str) -> Result<(Self, Modulus), ResidueError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "qfe-residue-system v1" {
            return Err(ResidueError::ParseError(format!("bad header: {header}")));
        }
        let mut field = |name: &str| -> Result<String, ResidueError> {
            let line = lines
                .next()
                .ok_or_else(|| ResidueError::ParseError(format!("missing {name}")))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| ResidueError::ParseError(format!("bad line: {line}")))?;
            if k != name {
                return Err(ResidueError::ParseError(format!("expected {name}, got {k}")));
            }
            Ok(v.trim().to_string())
        };
        let n_hex = field("modulus-hex")?;
        let n_val = BigUint::parse_bytes(n_hex.as_bytes(), 16)
            .ok_or_else(|| ResidueError::ParseError("bad modulus hex".into()))?;
        let n = Modulus::new(n_val)?;
        let parse_u32 = |s: String| {
            s.parse::<u32>()
                .map_err(|_| ResidueError::ParseError(format!("bad integer {s}")))
        };
        let ell = parse_u32(field("ell")?)?;
        let f = parse_u32(field("f")?)?;
        let w1 = parse_u32(field("w1")?)?;
        let count = field("prime-count")?
            .parse::<usize>()
            .map_err(|_| ResidueError::ParseError("bad prime-count".into()))?;
        let mut primes = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| ResidueError::ParseError("truncated prime list".into()))?;
            primes.push(
                line.trim()
                    .parse::<u64>()
                    .map_err(|_| ResidueError::ParseError(format!("bad prime {line}")))?,
            );
        }
        let sys = ResidueSystem::from_primes(primes, &n, ell, f, w1);
        // The deviation line is a recomputable certificate; check it agrees.
        let dev_line = lines
            .next()
            .ok_or_else(|| ResidueError::ParseError("missing deviation".into()))?;
        let dev = dev_line
            .strip_prefix("deviation ")
            .ok_or_else(|| ResidueError::ParseError("missing deviation prefix".into()))?;
        let (num, den) = dev
            .split_once('/')
            .ok_or_else(|| ResidueError::ParseError("bad deviation fraction".into()))?;
        let num = BigUint::parse_bytes(num.as_bytes(), 10)
            .ok_or_else(|| ResidueError::ParseError("bad deviation numerator".into()))?;
        let den = BigUint::parse_bytes(den.as_bytes(), 10)
            .ok_or_else(|| ResidueError::ParseError("bad deviation denominator".into()))?;
        if sys.deviation.num != num || sys.deviation.den != den {
            return Err(ResidueError::ParseError("deviation does not match prime list".into()));
        }
        Ok((sys, n))
    }
}

fn product_tree(values: &[u64]) -> BigUint {
    fn go(v: &[u64]) -> BigUint {
        match v.len() {
            0 => BigUint::one(),
            1 => BigUint::from(v[0]),
            _ => {
                let mid = v.len() / 2;
                go(&v[..mid]) * go(&v[mid..])
            }
        }
    }
    go(values)
}

/// Options for the deviation search.
#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub seed: u64,
    /// Total swap-trial budget across all workers.
    pub budget: u64,
    /// Number of independent worker streams. The result is deterministic
    /// for a fixed (seed, workers) pair.
    pub workers: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { seed: 0, budget: 1 << 24, workers: 8 }
    }
}

/// Find a residue system for `n` with `L >= N^w1_count`, all primes exactly
/// `ell` bits, every prime passing `admissible`, and modular deviation below
/// `2^-f`.
///
/// The search seeds each worker with a random admissible subset and then
/// random-walks by single-prime swaps, updating `L mod N` with a multiply by
/// `p_new * p_old^-1 mod N` instead of recomputing the product. Every swap
/// re-randomizes `L mod N`, so each trial is a fresh deviation sample; the
/// best set seen is kept. Workers stop at the end of the first batch in
/// which any worker reached the target; ties are broken by worker index so
/// the outcome is reproducible.
pub fn find_prime_set(
    n: &Modulus,
    w1_count: u32,
    ell: u32,
    f: u32,
    admissible: &(dyn Fn(u64) -> bool + Sync),
    opts: &SearchOptions,
) -> Result<ResidueSystem, ResidueError> {
    if ell < 2 || w1_count == 0 {
        return Err(ResidueError::InvalidParams("need ell >= 2 and w1_count >= 1".into()));
    }
    let lo = 1u64 << (ell - 1);
    let hi = 1u64 << ell;
    let pool: Vec<u64> = primes_in_range(lo, hi)
        .into_iter()
        .filter(|&p| p > 2 && len_bits(p) == ell && admissible(p))
        .collect();

    // Number of primes needed so that the product certainly reaches N^w1:
    // each prime contributes at least ell0 = ell - 1 bits.
    let target_bits = w1_count as u64 * n.bits() + 1;
    let count = (target_bits.div_ceil((ell - 1) as u64)).max(1) as usize;
    let slack = (count / 16).max(8);
    if pool.len() < count + slack {
        return Err(ResidueError::InsufficientPrimes { have: pool.len(), need: count + slack });
    }

    // Shared precomputation: p^-1 mod N for every candidate.
    let inverses: Vec<BigUint> = {
        use rayon::prelude::*;
        pool.par_iter()
            .map(|&p| {
                mod_inverse_big(&BigUint::from(p), n.value())
                    .expect("prime smaller than N is invertible")
            })
            .collect()
    };

    let workers = opts.workers.max(1);
    let per_worker = opts.budget.div_ceil(workers as u64);
    const BATCH: u64 = 1024;
    let earliest_done = AtomicU64::new(u64::MAX);

    struct WorkerResult {
        found_batch: u64,
        primes: Vec<u64>,
        l_mod_n: BigUint,
        best_num: BigUint,
    }

    let results: Vec<WorkerResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let pool = &pool;
                let inverses = &inverses;
                let earliest_done = &earliest_done;
                scope.spawn(move || {
                    let mut rng = stream(opts.seed, &format!("prime-search/{w}"));
                    // Random initial selection: partial Fisher-Yates over indices.
                    let mut idx: Vec<usize> = (0..pool.len()).collect();
                    for i in 0..count {
                        let j = i + u64_below(&mut rng, (pool.len() - i) as u64) as usize;
                        idx.swap(i, j);
                    }
                    let mut l_mod_n = BigUint::one();
                    for &i in &idx[..count] {
                        l_mod_n = l_mod_n * pool[i] % n.value();
                    }
                    let mut best_num = deviation_numerator(&l_mod_n, n.value());
                    let mut best_primes: Vec<u64> =
                        idx[..count].iter().map(|&i| pool[i]).collect();
                    let mut best_l_mod_n = l_mod_n.clone();
                    let hit = |num: &BigUint| (num << f) < *n.value();

                    let mut trials = 0u64;
                    let mut batch = 0u64;
                    let mut done_at = if hit(&best_num) { Some(0) } else { None };
                    while done_at.is_none() && trials < per_worker {
                        if batch > earliest_done.load(Ordering::Relaxed) {
                            break;
                        }
                        let end = (trials + BATCH).min(per_worker);
                        while trials < end {
                            trials += 1;
                            let slot = u64_below(&mut rng, count as u64) as usize;
                            let repl =
                                count + u64_below(&mut rng, (pool.len() - count) as u64) as usize;
                            let (old_i, new_i) = (idx[slot], idx[repl]);
                            l_mod_n =
                                &l_mod_n * &inverses[old_i] % n.value() * pool[new_i] % n.value();
                            idx.swap(slot, repl);
                            let num = deviation_numerator(&l_mod_n, n.value());
                            if num < best_num {
                                best_num = num;
                                best_primes = idx[..count].iter().map(|&i| pool[i]).collect();
                                best_l_mod_n = l_mod_n.clone();
                                if hit(&best_num) {
                                    done_at = Some(batch);
                                    break;
                                }
                            }
                        }
                        batch += 1;
                    }
                    if let Some(b) = done_at {
                        earliest_done.fetch_min(b, Ordering::Relaxed);
                    }
                    WorkerResult {
                        found_batch: done_at.unwrap_or(u64::MAX),
                        primes: best_primes,
                        l_mod_n: best_l_mod_n,
                        best_num,
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("search worker panicked")).collect()
    });

    let winner = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.found_batch != u64::MAX)
        .min_by_key(|(w, r)| (r.found_batch, *w));

    match winner {
        Some((_, r)) => {
            let mut primes = r.primes.clone();
            primes.sort_unstable();
            let sys = ResidueSystem::from_primes(primes, n, ell, f, w1_count);
            debug_assert_eq!(&sys.l_mod_n, &r.l_mod_n);
            debug_assert!(sys.deviation.below_2pow_neg(f));
            debug_assert!(sys.l >= n.value().pow(w1_count));
            Ok(sys)
        }
        None => {
            let best = results.iter().map(|r| &r.best_num).min().expect("workers >= 1");
            Err(ResidueError::BudgetExhausted {
                best_num: best.clone(),
                best_den: n.value().clone(),
            })
        }
    }
}

/// CRT contribution factors and the truncated constants derived from them.
///
/// `u[j]` is the smallest positive integer that is 1 mod `p_j` and 0 mod
/// every other prime. `c[j][k] = (((u_j << k) mod L mod N) >> t) mod (N >> t)`
/// with `t = n - f`.
#[derive(Debug, Clone)]
pub struct ContributionTable {
    pub u: Vec<BigUint>,
    pub c: Vec<Vec<u64>>,
    pub t: u32,
}

pub fn contribution_table(
    system: &ResidueSystem,
    n: &Modulus,
    f: u32,
) -> Result<ContributionTable, ResidueError> {
    let n_bits = n.bits() as u32;
    if f > n_bits {
        return Err(ResidueError::InvalidParams(format!("f={f} exceeds n={n_bits}")));
    }
    if f > 63 {
        return Err(ResidueError::InvalidParams("truncated constants need f <= 63".into()));
    }
    let t = n_bits - f;
    let n_tilde = n.value() >> t;
    let u = contribution_factors(system);
    let ell = system.ell();
    let c = u
        .iter()
        .map(|uj| {
            (0..ell)
                .map(|k| {
                    let a = ((uj << k) % system.l()) % n.value();
                    ((a >> t) % &n_tilde).to_u64().expect("fits in f bits")
                })
                .collect()
        })
        .collect();
    Ok(ContributionTable { u, c, t })
}

/// The raw contribution factors `u_j` (no truncation).
pub fn contribution_factors(system: &ResidueSystem) -> Vec<BigUint> {
    system
        .primes()
        .iter()
        .map(|&p| {
            let l_over_p = system.l() / p;
            let inv = mod_inverse_big(&(&l_over_p % p), &BigUint::from(p))
                .expect("distinct primes are coprime");
            l_over_p * inv
        })
        .collect()
}

/// CRT reconstruction to `[0, L)`: the unique value matching every residue.
pub fn crt_reconstruct_mod_l(
    system: &ResidueSystem,
    residues: &[u64],
) -> Result<BigUint, ResidueError> {
    if residues.len() != system.len() {
        return Err(ResidueError::LengthMismatch {
            expected: system.len(),
            got: residues.len(),
        });
    }
    for (j, (&r, &p)) in residues.iter().zip(system.primes()).enumerate() {
        if r >= p {
            return Err(ResidueError::InvalidParams(format!("residue {j} not below its prime")));
        }
    }
    let u = contribution_factors(system);
    let mut acc = BigUint::zero();
    for (uj, &r) in u.iter().zip(residues) {
        acc += uj * r;
    }
    Ok(acc % system.l())
}

/// The dot-product reconstruction reduced mod N, as used by the algorithm.
pub fn crt_reconstruct(
    system: &ResidueSystem,
    n: &Modulus,
    residues: &[u64],
) -> Result<BigUint, ResidueError> {
    Ok(crt_reconstruct_mod_l(system, residues)? % n.value())
}

/// Windowed multiplier products: `window_products[w][v]` is
/// `prod_{b in window w, bit b of v set} M_{w*w1+b} mod N`, the combined
/// constant a window of exponent qubits multiplies into the running product.
pub fn window_products(multipliers: &[BigUint], n: &Modulus, w1: u32) -> Vec<Vec<BigUint>> {
    assert!(w1 >= 1);
    let m = multipliers.len();
    let windows = m.div_ceil(w1 as usize);
    (0..windows)
        .map(|w| {
            let base = w * w1 as usize;
            let width = w1.min((m - base) as u32);
            let mut tbl = Vec::with_capacity(1 << width);
            tbl.push(BigUint::one());
            for v in 1usize..1 << width {
                let b = v.trailing_zeros() as usize;
                let rest = v & (v - 1);
                let prod = &tbl[rest] * &multipliers[base + b] % n.value();
                tbl.push(prod);
            }
            tbl
        })
        .collect()
}

/// Per-prime discrete logs of the window products, plus the difference rows
/// used when one prime's running sum is mutated into the next prime's.
#[derive(Debug, Clone)]
pub struct DlogTable {
    /// Generator per prime.
    pub generators: Vec<u64>,
    /// `win[j][w][v]`: dlog base `g_{p_j}` of window product `w` at value
    /// `v`, reduced into `[0, p_j - 1)`.
    pub win: Vec<Vec<Vec<u64>>>,
    /// `diff[j][w][v] = win[j][w][v] - win[j-1][w][v]` encoded mod
    /// `2^sum_width`, with all-zero virtual rows at both ends. `diff` has
    /// `|P| + 1` entries; row `|P|` returns the register to zero.
    pub diff: Vec<Vec<Vec<u64>>>,
    pub sum_width: u32,
}

/// Build dlog tables for every prime of `system` against the given window
/// products (from [`window_products`]).
pub fn dlog_tables(
    system: &ResidueSystem,
    products: &[Vec<BigUint>],
    sum_width: u32,
) -> Result<DlogTable, ResidueError> {
    use rayon::prelude::*;
    assert!(sum_width <= 63);
    let per_prime: Result<Vec<(u64, Vec<Vec<u64>>)>, ResidueError> = system
        .primes()
        .par_iter()
        .map(|&p| {
            let g = find_generator(p).ok_or(ResidueError::NoGenerator { p })?;
            let ord = p - 1;
            let mut rows = Vec::with_capacity(products.len());
            for (w, tbl) in products.iter().enumerate() {
                let mut row = Vec::with_capacity(tbl.len());
                for (v, k) in tbl.iter().enumerate() {
                    let target = (k % p).to_u64().expect("residue fits");
                    if target == 0 {
                        return Err(ResidueError::DlogUndefined { p, window: w, value: v as u64 });
                    }
                    let d = bsgs_dlog(g, target, p, ord)
                        .ok_or(ResidueError::DlogUndefined { p, window: w, value: v as u64 })?;
                    debug_assert_eq!(crate::numutil::pow_mod_u64(g, d, p), target);
                    row.push(d);
                }
                rows.push(row);
            }
            Ok((g, rows))
        })
        .collect();
    let per_prime = per_prime?;

    let mask = if sum_width == 63 { (1u64 << 63) - 1 + (1u64 << 63) } else { (1u64 << sum_width) - 1 };
    let zero_rows: Vec<Vec<u64>> = products.iter().map(|t| vec![0; t.len()]).collect();
    let mut diff = Vec::with_capacity(per_prime.len() + 1);
    for j in 0..=per_prime.len() {
        let cur = if j < per_prime.len() { &per_prime[j].1 } else { &zero_rows };
        let prev = if j > 0 { &per_prime[j - 1].1 } else { &zero_rows };
        let rows: Vec<Vec<u64>> = cur
            .iter()
            .zip(prev)
            .map(|(c, p)| {
                c.iter().zip(p).map(|(&a, &b)| a.wrapping_sub(b) & mask).collect()
            })
            .collect();
        diff.push(rows);
    }

    Ok(DlogTable {
        generators: per_prime.iter().map(|(g, _)| *g).collect(),
        win: per_prime.into_iter().map(|(_, rows)| rows).collect(),
        diff,
        sum_width,
    })
}

/// Admissibility predicate for the prime search: no window product may be
/// divisible by the candidate prime, since those values must have discrete
/// logs mod every prime in the system.
pub fn exclusion_predicate(products: &[Vec<BigUint>]) -> impl Fn(u64) -> bool + Sync + '_ {
    move |p: u64| {
        products.iter().all(|tbl| {
            // Check the full-window generators only; a product of values
            // coprime to p stays coprime to p only if each factor is, and
            // conversely compositions can vanish mod p even when single
            // multipliers do not, so every table entry is checked.
            tbl.iter().all(|k| !(k % p).is_zero())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numutil::pow_mod_u64;
    use num_bigint::BigInt;

    fn modulus(v: u64) -> Modulus {
        Modulus::from_u64(v).unwrap()
    }

    #[test]
    fn deviation_of_multiples_is_zero() {
        let n = modulus(7);
        let d = modular_deviation(&BigInt::from(7), &n);
        assert!(d.num.is_zero());
    }

    #[test]
    fn deviation_takes_nearest_side() {
        let n = modulus(7);
        let d = modular_deviation(&BigInt::from(13), &n);
        assert_eq!(d.num, BigUint::from(1u32)); // min(6, 1) = 1
        assert_eq!(d.den, BigUint::from(7u32));
        let d = modular_deviation(&BigInt::from(-13), &n);
        assert_eq!(d.num, BigUint::from(1u32));
    }

    #[test]
    fn contribution_factors_small() {
        // P = {3, 5, 7}: u for 3 is 70.
        let n = modulus(1009);
        let sys = ResidueSystem::from_primes(vec![3, 5, 7], &n, 3, 0, 1);
        let u = contribution_factors(&sys);
        assert_eq!(u[0], BigUint::from(70u32));
        for (j, uj) in u.iter().enumerate() {
            for (i, &p) in sys.primes().iter().enumerate() {
                let want = if i == j { 1u32 } else { 0 };
                assert_eq!(uj % p, BigUint::from(want));
            }
        }
    }

    #[test]
    fn contribution_single_prime_is_one() {
        let n = modulus(1009);
        let sys = ResidueSystem::from_primes(vec![11], &n, 4, 0, 1);
        assert_eq!(contribution_factors(&sys), vec![BigUint::one()]);
    }

    #[test]
    fn contribution_no_truncation_matches_exact() {
        // t = 0 (f = n): C_{j,k} = (u_j << k) mod L mod N exactly.
        let n = modulus(101);
        let sys = ResidueSystem::from_primes(vec![11, 13], &n, 4, 0, 1);
        let tab = contribution_table(&sys, &n, n.bits() as u32).unwrap();
        assert_eq!(tab.t, 0);
        let u = contribution_factors(&sys);
        for (j, uj) in u.iter().enumerate() {
            for k in 0..sys.ell() {
                let exact = ((uj << k) % sys.l()) % n.value();
                assert_eq!(BigUint::from(tab.c[j][k as usize]), exact);
            }
        }
    }

    #[test]
    fn crt_small_cases() {
        let n = modulus(1009);
        let sys = ResidueSystem::from_primes(vec![3, 5], &n, 3, 0, 1);
        // Brute force over [0, 15): 8 is the unique value with (2, 3).
        let got = crt_reconstruct_mod_l(&sys, &[2, 3]).unwrap();
        let brute = (0u32..15).find(|x| x % 3 == 2 && x % 5 == 3).unwrap();
        assert_eq!(got, BigUint::from(brute));
        assert_eq!(brute, 8);

        assert!(crt_reconstruct_mod_l(&sys, &[0, 0]).unwrap().is_zero());

        let sys3 = ResidueSystem::from_primes(vec![3, 5, 7], &n, 3, 0, 1);
        let r: Vec<u64> = vec![52 % 3, 52 % 5, 52 % 7];
        assert_eq!(crt_reconstruct_mod_l(&sys3, &r).unwrap(), BigUint::from(52u32));
    }

    #[test]
    fn crt_random_round_trip() {
        let n = modulus(10007);
        let sys = ResidueSystem::from_primes(vec![11, 13, 17, 19], &n, 5, 0, 1);
        let l = sys.l().to_u64().unwrap();
        let mut rng = stream(3, "crt");
        for _ in 0..200 {
            let x = u64_below(&mut rng, l);
            let rs: Vec<u64> = sys.primes().iter().map(|&p| x % p).collect();
            assert_eq!(crt_reconstruct_mod_l(&sys, &rs).unwrap(), BigUint::from(x));
        }
        assert!(matches!(
            crt_reconstruct_mod_l(&sys, &[1, 2, 3]),
            Err(ResidueError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn dlog_tables_verify_by_exponentiation() {
        let n = modulus(10007);
        let sys = ResidueSystem::from_primes(vec![11, 13], &n, 4, 0, 1);
        let mults = vec![BigUint::from(5u32), BigUint::from(9u32), BigUint::from(23u32)];
        let prods = window_products(&mults, &n, 2);
        let tab = dlog_tables(&sys, &prods, 10).unwrap();
        for (j, &p) in sys.primes().iter().enumerate() {
            let g = tab.generators[j];
            for (w, tbl) in prods.iter().enumerate() {
                for (v, k) in tbl.iter().enumerate() {
                    let d = tab.win[j][w][v];
                    assert_eq!(
                        pow_mod_u64(g, d, p),
                        (k % p).to_u64().unwrap(),
                        "prime {p} window {w} value {v}"
                    );
                }
            }
        }
        // M = 1 rows have dlog 0.
        for j in 0..sys.len() {
            for w in 0..prods.len() {
                assert_eq!(tab.win[j][w][0], 0);
            }
        }
    }

    #[test]
    fn dlog_diff_rows_telescope() {
        let n = modulus(10007);
        let sys = ResidueSystem::from_primes(vec![11, 13, 17], &n, 5, 0, 1);
        let mults = vec![BigUint::from(3u32), BigUint::from(7u32)];
        let prods = window_products(&mults, &n, 1);
        let width = 12;
        let tab = dlog_tables(&sys, &prods, width).unwrap();
        let mask = (1u64 << width) - 1;
        for w in 0..prods.len() {
            for v in 0..prods[w].len() {
                let mut acc = 0u64;
                for j in 0..=sys.len() {
                    acc = acc.wrapping_add(tab.diff[j][w][v]) & mask;
                    let want = if j < sys.len() { tab.win[j][w][v] } else { 0 };
                    assert_eq!(acc, want);
                }
            }
        }
    }

    #[test]
    fn dlog_rejects_multiplier_divisible_by_prime() {
        let n = modulus(10007);
        let sys = ResidueSystem::from_primes(vec![11, 13], &n, 4, 0, 1);
        let mults = vec![BigUint::from(22u32)]; // 0 mod 11
        let prods = window_products(&mults, &n, 1);
        assert!(matches!(
            dlog_tables(&sys, &prods, 8),
            Err(ResidueError::DlogUndefined { p: 11, .. })
        ));
    }

    #[test]
    fn search_single_prime_trivial() {
        // W1 low enough that one prime suffices; f = 0 makes the deviation
        // bound vacuous.
        let n = modulus(5);
        let opts = SearchOptions { seed: 1, budget: 1 << 12, workers: 2 };
        let sys = find_prime_set(&n, 1, 8, 0, &|_| true, &opts).unwrap();
        assert!(sys.verify(&n).is_ok());
        assert!(!sys.is_empty());
    }

    #[test]
    fn search_small_modulus_hits_target() {
        let n = modulus(0xfff1_usize as u64 | 1); // odd 16-bit value
        let opts = SearchOptions { seed: 7, budget: 1 << 18, workers: 4 };
        let sys = find_prime_set(&n, 2, 9, 8, &|_| true, &opts).unwrap();
        sys.verify(&n).unwrap();
        assert!(sys.deviation().below_2pow_neg(8));
        assert!(sys.l() >= &n.value().pow(2));
        // Independent recomputation of the incrementally maintained L mod N.
        let direct = sys.primes().iter().fold(BigUint::one(), |acc, &p| acc * p % n.value());
        assert_eq!(&direct, sys.l_mod_n());
    }

    #[test]
    fn search_deterministic_given_seed() {
        let n = modulus(100003);
        let opts = SearchOptions { seed: 42, budget: 1 << 16, workers: 3 };
        let a = find_prime_set(&n, 1, 8, 6, &|_| true, &opts).unwrap();
        let b = find_prime_set(&n, 1, 8, 6, &|_| true, &opts).unwrap();
        assert_eq!(a.primes(), b.primes());
    }

    #[test]
    fn search_respects_exclusions() {
        let n = modulus(100003);
        let banned = |p: u64| p % 10 != 1;
        let opts = SearchOptions { seed: 5, budget: 1 << 16, workers: 2 };
        let sys = find_prime_set(&n, 1, 9, 4, &banned, &opts).unwrap();
        assert!(sys.primes().iter().all(|&p| p % 10 != 1));
    }

    #[test]
    fn search_insufficient_primes_errors() {
        let n = modulus(u32::MAX as u64); // needs many primes at tiny ell
        let opts = SearchOptions::default();
        assert!(matches!(
            find_prime_set(&n, 4, 5, 4, &|_| true, &opts),
            Err(ResidueError::InsufficientPrimes { .. })
        ));
    }

    #[test]
    fn serialization_round_trip() {
        let n = modulus(100003);
        let opts = SearchOptions { seed: 9, budget: 1 << 16, workers: 2 };
        let sys = find_prime_set(&n, 1, 8, 6, &|_| true, &opts).unwrap();
        let text = sys.to_text(&n);
        let (back, n2) = ResidueSystem::from_text(&text).unwrap();
        assert_eq!(back.primes(), sys.primes());
        assert_eq!(n2, n);
        assert_eq!(back.to_text(&n2), text);
    }
}
