//! Dense small-N numerics for masked period finding: exact pre- and
//! post-measurement states, frequency spectra, the randomized-subset peak
//! law, and Monte Carlo estimation of the success-rate suppression caused
//! by superposition masking.
//!
//! Masking isolates here: the output register is offset by a uniform mask
//! and the exact function `g^e mod N` is used (approximation effects are
//! bounded analytically elsewhere).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::numutil::{distinct_prime_factors, is_prime_u64, mul_mod_u64, order_dividing, pow_mod_u64};
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeriodFindError {
    TooLarge(String),
    ZeroProbabilityOutcome(u64),
    DegeneratePeriod,
    NotAnOddSemiprime(u64),
}

impl std::fmt::Display for PeriodFindError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PeriodFindError::TooLarge(s) => write!(f, "instance too large: {s}"),
            PeriodFindError::ZeroProbabilityOutcome(v) => {
                write!(f, "output value {v} has zero probability")
            }
            PeriodFindError::DegeneratePeriod => write!(f, "generator has order 1"),
            PeriodFindError::NotAnOddSemiprime(n) => {
                write!(f, "{n} is not a product of two distinct odd primes")
            }
        }
    }
}

impl std::error::Error for PeriodFindError {}

/// Mask width at scale `N` for proportion `S`: `max(1, ceil(S * N))`.
pub fn mask_width(n: u64, s: f64) -> u64 {
    ((s * n as f64).ceil() as u64).max(1)
}

/// Dense pre-measurement state over (input register of `m` bits) x (output
/// mod `N`), with real nonnegative amplitudes.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub m: u32,
    pub n: u64,
    /// Row-major: `amps[e * N + out]`.
    pub amps: Vec<f64>,
}

impl DenseState {
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum()
    }

    /// Marginal probability of each output value.
    pub fn output_marginals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n as usize];
        for e in 0..1usize << self.m {
            for v in 0..self.n as usize {
                let a = self.amps[e * self.n as usize + v];
                out[v] += a * a;
            }
        }
        out
    }
}

/// The masked pre-measurement state: uniform amplitude on
/// `(e, (s + g^e mod N) mod N)` for `s` below the mask width.
pub fn masked_premeasure_state(
    n: u64,
    g: u64,
    m: u32,
    s: f64,
) -> Result<DenseState, PeriodFindError> {
    if n > 1 << 16 {
        return Err(PeriodFindError::TooLarge(format!("N = {n}")));
    }
    let cells = (1u64 << m) * n;
    if cells > 1 << 26 {
        return Err(PeriodFindError::TooLarge(format!("{cells} amplitude cells")));
    }
    let w = mask_width(n, s);
    let amp = 1.0 / (((1u64 << m) * w) as f64).sqrt();
    let mut amps = vec![0.0; cells as usize];
    let mut f = 1u64 % n;
    for e in 0..1u64 << m {
        for off in 0..w {
            let out = (f + off) % n;
            amps[(e * n + out) as usize] = amp;
        }
        f = mul_mod_u64(f, g, n);
    }
    Ok(DenseState { m, n, amps })
}

/// Post-measurement frequency spectrum: collapse the output register onto
/// the sampled value, Fourier transform the input register mod `2^m`, and
/// report the probability of each frequency.
#[derive(Debug, Clone)]
pub struct PeakSpectrum {
    pub m: u32,
    pub period: u64,
    pub probabilities: Vec<f64>,
}

impl PeakSpectrum {
    /// Bucket frequencies to the nearest multiple of `2^m / P`, returning
    /// the mass at each of the `P` peaks.
    pub fn peak_masses(&self) -> Vec<f64> {
        let size = 1u64 << self.m;
        let p = self.period;
        let mut masses = vec![0.0; p as usize];
        for (y, &prob) in self.probabilities.iter().enumerate() {
            let k = ((y as u128 * p as u128 + size as u128 / 2) / size as u128) % p as u128;
            masses[k as usize] += prob;
        }
        masses
    }
}

pub fn collapse_and_spectrum(
    state: &DenseState,
    sampled_output: u64,
    period: u64,
) -> Result<PeakSpectrum, PeriodFindError> {
    let size = 1usize << state.m;
    let mut buf: Vec<Complex64> = (0..size)
        .map(|e| Complex64::new(state.amps[e * state.n as usize + sampled_output as usize], 0.0))
        .collect();
    let norm: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
    if norm <= 0.0 {
        return Err(PeriodFindError::ZeroProbabilityOutcome(sampled_output));
    }
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let scale = 1.0 / (norm * size as f64);
    let probabilities: Vec<f64> = buf.iter().map(|c| c.norm_sqr() * scale).collect();
    Ok(PeakSpectrum { m: state.m, period, probabilities })
}

/// Small exact fraction for the randomized-subset law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u128,
    pub den: u128,
}

impl Fraction {
    pub fn new(num: u128, den: u128) -> Self {
        fn gcd(a: u128, b: u128) -> u128 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let g = gcd(num.max(den), num.min(den)).max(1);
        Fraction { num: num / g, den: den / g }
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Closed-form expected peak probabilities when `w` of `P` remainders are
/// chosen uniformly at random: the zero peak takes `w/P` and the others
/// split the rest evenly.
pub fn peak_prob_random_r(p: u64, w: u64, k: u64) -> Fraction {
    assert!((1..=p).contains(&w) && k < p);
    if k == 0 {
        Fraction::new(w as u128, p as u128)
    } else {
        Fraction::new(p as u128 - w as u128, p as u128 * (p as u128 - 1))
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Exhaustive average of `|beta_k|^2` over every w-subset of remainders,
/// as exact rationals.
///
/// For a subset mask `R`, `|sum_{r in R} e^(2 pi i r k / P)|^2` expands into
/// pair terms `e^(2 pi i (r1 - r2) k / P)`; enumerating all masks and
/// counting ordered pairs at each cyclic difference `d` gives integer counts
/// `n_d`, and the roots-of-unity sums collapse because the counts at
/// nonzero differences all agree (asserted, not assumed). The average is
/// then `(n_0 - n_d) / (w P binom(P, w))` for every `0 < k < P`.
pub fn exhaustive_peak_probs(p: u64, w: u64) -> (Fraction, Fraction) {
    use rayon::prelude::*;
    assert!(p >= 2 && (1..=p).contains(&w) && p <= 30);
    let full: u64 = 1 << p;
    let chunk = 1u64 << 16;
    let counts: Vec<u128> = (0..full.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut local = vec![0u128; p as usize];
            let lo = c * chunk;
            let hi = (lo + chunk).min(full);
            let rot = |mask: u64, d: u64| ((mask >> d) | (mask << (p - d))) & (full - 1);
            for mask in lo..hi {
                if mask.count_ones() as u64 != w {
                    continue;
                }
                local[0] += w as u128;
                for d in 1..p {
                    local[d as usize] += (mask & rot(mask, d)).count_ones() as u128;
                }
            }
            local
        })
        .reduce(
            || vec![0u128; p as usize],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let n0 = counts[0];
    let nd = counts[1];
    assert!(
        counts[1..].iter().all(|&c| c == nd),
        "pair counts differ across nonzero cyclic differences"
    );
    let subsets = binomial(p, w);
    debug_assert_eq!(n0, w as u128 * subsets);
    let denom = w as u128 * p as u128 * subsets;
    // E|beta_0|^2 = (n_0 + (P-1) n_d) / (w P C); E|beta_{k>0}|^2 uses the
    // roots-of-unity cancellation sum_{d != 0} e^(2 pi i d k / P) = -1.
    let zero = Fraction::new(n0 + (p as u128 - 1) * nd, denom);
    let rest = Fraction::new(n0 - nd, denom);
    (zero, rest)
}

/// Monte Carlo estimate of the peak probabilities for sampled random
/// subsets; returns `(mean, standard_error)` for `k = 0` and a given
/// `k > 0`.
pub fn sampled_peak_probs(
    p: u64,
    w: u64,
    k: u64,
    trials: u64,
    seed: u64,
) -> ((f64, f64), (f64, f64)) {
    assert!(p <= 1 << 12 && k > 0 && k < p);
    let mut rng = stream(seed, "random-subsets");
    let mut pick = vec![0u64; p as usize];
    let mut sum0 = 0.0;
    let mut sq0 = 0.0;
    let mut sumk = 0.0;
    let mut sqk = 0.0;
    for _ in 0..trials {
        for (i, v) in pick.iter_mut().enumerate() {
            *v = i as u64;
        }
        // Partial Fisher-Yates: the first w entries are the subset.
        for i in 0..w as usize {
            let j = i + rng::u64_below(&mut rng, p - i as u64) as usize;
            pick.swap(i, j);
        }
        // |beta_0|^2 = w / P for every subset (all phases align at k = 0).
        let v0 = w as f64 / p as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for &r in &pick[..w as usize] {
            let theta = 2.0 * std::f64::consts::PI * (r as f64) * (k as f64) / p as f64;
            re += theta.cos();
            im += theta.sin();
        }
        let vk = (re * re + im * im) / (w as f64 * p as f64);
        sum0 += v0;
        sq0 += v0 * v0;
        sumk += vk;
        sqk += vk * vk;
    }
    let t = trials as f64;
    let mean0 = sum0 / t;
    let se0 = ((sq0 / t - mean0 * mean0).max(0.0) / t).sqrt();
    let meank = sumk / t;
    let sek = ((sqk / t - meank * meank).max(0.0) / t).sqrt();
    ((mean0, se0), (meank, sek))
}

/// Continued-fraction period recovery: does some convergent denominator of
/// `y / 2^m` certify the multiplicative order of `g`?
pub fn frequency_recovers_period(y: u64, m: u32, g: u64, n: u64) -> bool {
    if y == 0 {
        return false;
    }
    let (mut a, mut b) = (y as u128, 1u128 << m);
    // Convergent denominators: q_n = a_n q_(n-1) + q_(n-2), seeded (1, 0).
    let (mut h0, mut h1) = (1u128, 0u128);
    loop {
        let q = a / b;
        let d = q * h1 + h0;
        if d >= n as u128 {
            return false;
        }
        if d > 0 && pow_mod_u64(g, d as u64, n) == 1 {
            return true;
        }
        let r = a - q * b;
        if r == 0 {
            return false;
        }
        (a, b) = (b, r);
        (h0, h1) = (h1, d);
    }
}

/// Result of one masking-suppression experiment.
#[derive(Debug, Clone)]
pub struct SuppressionResult {
    pub n: u64,
    pub g: u64,
    pub mask_proportion: f64,
    pub period: u64,
    pub shots: u64,
    pub masked_success: f64,
    pub unmasked_success: f64,
    /// Monte Carlo suppression estimate: masked rate over unmasked rate.
    pub suppression: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Exact (fully enumerated) success rates for the same instance.
    pub exact_masked: f64,
    pub exact_unmasked: f64,
    pub exact_suppression: f64,
    /// Exact probability of the zero frequency, masked and unmasked.
    pub exact_zero_peak_masked: f64,
    pub exact_zero_peak_unmasked: f64,
}

impl SuppressionResult {
    pub fn csv_header() -> &'static str {
        "n,g,s,shots,masked_success,unmasked_success,suppression,ci_low,ci_high"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.n,
            self.g,
            self.mask_proportion,
            self.shots,
            self.masked_success,
            self.unmasked_success,
            self.suppression,
            self.ci_low,
            self.ci_high
        )
    }
}

/// Likelihood-ratio confidence interval for a binomial proportion: the set
/// of `p` whose log-likelihood is within `threshold` of the maximum.
/// `threshold = 1.92` matches a 95% interval; `ln(100)` reproduces the
/// 100x-likelihood construction.
pub fn binomial_lr_interval(successes: u64, trials: u64, threshold: f64) -> (f64, f64) {
    assert!(trials > 0);
    let k = successes as f64;
    let n = trials as f64;
    let p_hat = k / n;
    let ll = |p: f64| {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        k * p.ln() + (n - k) * (1.0 - p).ln()
    };
    let max_ll = ll(p_hat);
    let inside = |p: f64| max_ll - ll(p) <= threshold;
    let mut lo = 0.0;
    let mut hi = p_hat;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let low = hi;
    let mut lo2 = p_hat;
    let mut hi2 = 1.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo2 + hi2);
        if inside(mid) {
            lo2 = mid;
        } else {
            hi2 = mid;
        }
    }
    (low, lo2)
}

/// Factor an odd semiprime by trial division.
fn semiprime_factors(n: u64) -> Result<(u64, u64), PeriodFindError> {
    if n % 2 == 0 {
        return Err(PeriodFindError::NotAnOddSemiprime(n));
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            let q = n / d;
            if d != q && is_prime_u64(d) && is_prime_u64(q) {
                return Ok((d, q));
            }
            return Err(PeriodFindError::NotAnOddSemiprime(n));
        }
        d += 2;
    }
    Err(PeriodFindError::NotAnOddSemiprime(n))
}

/// Run one suppression experiment: `shots` Monte Carlo samples of the
/// masked and unmasked measurement chains, plus an exact enumeration over
/// every output value (the spectra only depend on the sampled output, and
/// there are at most `N` of those).
pub fn suppression_experiment(
    n: u64,
    g: u64,
    mask_proportion: f64,
    shots: u64,
    seed: u64,
) -> Result<SuppressionResult, PeriodFindError> {
    if n > 1 << 16 {
        return Err(PeriodFindError::TooLarge(format!("N = {n}")));
    }
    let (p_factor, q_factor) = semiprime_factors(n)?;
    let lambda = num_integer::lcm(p_factor - 1, q_factor - 1);
    let period = order_dividing(g % n, n, lambda);
    if period <= 1 {
        return Err(PeriodFindError::DegeneratePeriod);
    }
    let m = 2 * crate::numutil::len_bits(n);
    if m > 22 {
        return Err(PeriodFindError::TooLarge(format!("2^{m} frequencies")));
    }

    // Success depends only on the sampled frequency; precompute it once.
    let size = 1usize << m;
    let success: Vec<bool> =
        (0..size as u64).map(|y| frequency_recovers_period(y, m, g, n)).collect();

    let mut pow_table = Vec::with_capacity(period as usize);
    let mut cur = 1u64 % n;
    for _ in 0..period {
        pow_table.push(cur);
        cur = mul_mod_u64(cur, g, n);
    }

    let mut rng = stream(seed, "suppression");
    let mut run_arm = |width: u64, label: &str| -> (f64, f64, f64) {
        let _ = label;
        // Sample all shot outputs first, then process spectra grouped by
        // output value.
        let mut shots_per_v: std::collections::BTreeMap<u64, u64> = Default::default();
        for _ in 0..shots {
            let e = rng::bits(&mut rng, m);
            let s = rng::u64_below(&mut rng, width);
            let v = (pow_table[(e % period) as usize] + s) % n;
            *shots_per_v.entry(v).or_default() += 1;
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        let mut successes = 0u64;
        let mut exact_success_mass = 0.0f64;
        let mut exact_zero_mass = 0.0f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for v in 0..n {
            // Residues consistent with this output value.
            let rs: Vec<u64> = (0..period)
                .filter(|&r| (v + n - pow_table[r as usize] % n) % n < width)
                .collect();
            if rs.is_empty() {
                continue;
            }
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            let mut support = 0u64;
            for &r in &rs {
                let mut x = r;
                while x < size as u64 {
                    buf[x as usize] = Complex64::new(1.0, 0.0);
                    support += 1;
                    x += period;
                }
            }
            fft.process(&mut buf);
            // Parseval: sum |X[y]|^2 = 2^m * support.
            let total = size as f64 * support as f64;
            let succ_mass: f64 = (0..size)
                .filter(|&y| success[y])
                .map(|y| buf[y].norm_sqr())
                .sum();
            // P(V = v) * P(success | v) summed over v.
            exact_success_mass += succ_mass / (size as f64 * size as f64 * width as f64);
            exact_zero_mass +=
                buf[0].norm_sqr() / (size as f64 * size as f64 * width as f64);
            if let Some(&count) = shots_per_v.get(&v) {
                // Sample `count` frequencies from |X|^2 by sorted inverse CDF.
                let mut draws: Vec<f64> =
                    (0..count).map(|_| rng::f64_unit(&mut rng) * total).collect();
                draws.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                let mut acc = 0.0;
                let mut di = 0;
                for (y, c) in buf.iter().enumerate() {
                    acc += c.norm_sqr();
                    while di < draws.len() && draws[di] <= acc {
                        if success[y] {
                            successes += 1;
                        }
                        di += 1;
                    }
                    if di == draws.len() {
                        break;
                    }
                }
                // Float-edge leftovers land on the final frequency.
                while di < draws.len() {
                    if success[size - 1] {
                        successes += 1;
                    }
                    di += 1;
                }
            }
        }
        (successes as f64 / shots as f64, exact_success_mass, exact_zero_mass)
    };

    let masked_width = mask_width(n, mask_proportion);
    let (masked_success, exact_masked, zero_masked) = run_arm(masked_width, "masked");
    let (unmasked_success, exact_unmasked, zero_unmasked) = run_arm(1, "unmasked");

    let masked_k = (masked_success * shots as f64).round() as u64;
    let unmasked_k = (unmasked_success * shots as f64).round() as u64;
    let (ml, mh) = binomial_lr_interval(masked_k, shots, 1.92);
    let (ul, uh) = binomial_lr_interval(unmasked_k, shots, 1.92);
    let suppression = if unmasked_success > 0.0 { masked_success / unmasked_success } else { 0.0 };

    Ok(SuppressionResult {
        n,
        g,
        mask_proportion,
        period,
        shots,
        masked_success,
        unmasked_success,
        suppression,
        ci_low: if uh > 0.0 { ml / uh } else { 0.0 },
        ci_high: if ul > 0.0 { mh / ul } else { f64::INFINITY },
        exact_masked,
        exact_unmasked,
        exact_suppression: if exact_unmasked > 0.0 { exact_masked / exact_unmasked } else { 0.0 },
        exact_zero_peak_masked: zero_masked,
        exact_zero_peak_unmasked: zero_unmasked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn premeasure_state_support_and_norm() {
        // Degenerate mask: the standard pre-measurement state.
        let st = masked_premeasure_state(15, 2, 8, 0.0).unwrap();
        let support = st.amps.iter().filter(|&&a| a > 0.0).count();
        assert_eq!(support, 256);
        assert!((st.norm_sqr() - 1.0).abs() < 1e-10);

        // S = 0.5: support grows by the mask width.
        let st = masked_premeasure_state(15, 2, 8, 0.5).unwrap();
        let w = mask_width(15, 0.5);
        assert_eq!(w, 8);
        let support = st.amps.iter().filter(|&&a| a > 0.0).count();
        assert_eq!(support as u64, 256 * w);
        assert!((st.norm_sqr() - 1.0).abs() < 1e-10);

        // Masking smooths the output distribution toward uniform.
        let marg = st.output_marginals();
        let max = marg.iter().cloned().fold(0.0, f64::max);
        let min = marg.iter().cloned().fold(1.0, f64::min);
        assert!(min > 0.0, "masking reaches every output value");
        assert!(max / min < 5.0, "max {max} min {min}");
        let sharp = masked_premeasure_state(15, 2, 8, 0.0).unwrap().output_marginals();
        let zeros = sharp.iter().filter(|&&p| p == 0.0).count();
        assert!(zeros > 0, "unmasked distribution is spiky");
    }

    #[test]
    fn exact_divisor_peaks_are_flat() {
        // ord_15(2) = 4 divides 2^m, so peak masses are exactly 1/4 each.
        let st = masked_premeasure_state(15, 2, 10, 0.0).unwrap();
        let spec = collapse_and_spectrum(&st, 2 % 15, 4).unwrap();
        assert!((spec.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (k, mass) in spec.peak_masses().iter().enumerate() {
            assert!((mass - 0.25).abs() < 1e-9, "peak {k}: {mass}");
        }
    }

    #[test]
    fn masked_spectrum_inflates_zero_peak() {
        let n = 15;
        let st = masked_premeasure_state(n, 2, 10, 0.4).unwrap();
        // Average the zero-peak mass over all reachable output values.
        let mut zero_mass = 0.0;
        let mut weight = 0.0;
        for v in 0..n {
            let marg = st.output_marginals()[v as usize];
            if marg == 0.0 {
                continue;
            }
            let spec = collapse_and_spectrum(&st, v, 4).unwrap();
            zero_mass += marg * spec.peak_masses()[0];
            weight += marg;
        }
        zero_mass /= weight;
        assert!(zero_mass > 0.25 + 0.05, "zero peak {zero_mass} should exceed 1/4");
        assert!(matches!(
            collapse_and_spectrum(&st, 999 % n, 4),
            Ok(_) | Err(PeriodFindError::ZeroProbabilityOutcome(_))
        ));
    }

    #[test]
    fn closed_form_edge_cases() {
        // w = P: the mask covers everything; frequency 0 is certain.
        assert_eq!(peak_prob_random_r(7, 7, 0), Fraction::new(1, 1));
        // w = 1: plain period finding, all peaks equal 1/P.
        assert_eq!(peak_prob_random_r(7, 1, 3), Fraction::new(1, 7));
        assert_eq!(peak_prob_random_r(7, 1, 0), Fraction::new(1, 7));
        // P = 5, w = 2, k > 0: (P - w) / (P (P - 1)) = 3/20.
        assert_eq!(peak_prob_random_r(5, 2, 3), Fraction::new(3, 20));
    }

    #[test]
    fn exhaustive_average_matches_closed_form() {
        for (p, w) in [(5u64, 2u64), (6, 3), (9, 4), (12, 5), (16, 8)] {
            let (zero, rest) = exhaustive_peak_probs(p, w);
            assert_eq!(zero, peak_prob_random_r(p, w, 0), "P={p} w={w} k=0");
            assert_eq!(rest, peak_prob_random_r(p, w, 1), "P={p} w={w} k>0");
        }
        // w = P concentrates everything on the zero peak.
        let (zero, rest) = exhaustive_peak_probs(6, 6);
        assert_eq!(zero, Fraction::new(1, 1));
        assert_eq!(rest.num, 0);
    }

    #[test]
    fn sampled_subsets_agree_within_3_sigma() {
        let (p, w, k) = (211u64, 17u64, 5u64);
        let ((m0, s0), (mk, sk)) = sampled_peak_probs(p, w, k, 4000, 9);
        let want0 = peak_prob_random_r(p, w, 0).to_f64();
        let wantk = peak_prob_random_r(p, w, k).to_f64();
        assert!((m0 - want0).abs() <= 3.0 * s0.max(1e-12), "{m0} vs {want0}");
        assert!((mk - wantk).abs() <= 3.0 * sk.max(1e-9), "{mk} vs {wantk}");
    }

    #[test]
    fn continued_fractions_recover_periods() {
        // ord_15(2) = 4; the peak at 2^m/4 recovers it.
        assert!(frequency_recovers_period(1 << 8, 10, 2, 15));
        assert!(!frequency_recovers_period(0, 10, 2, 15));
        // A frequency near (but not exactly at) a peak recovers via a
        // continued-fraction convergent: ord_21(2) = 6.
        let m = 12;
        let y = ((1u64 << m) as f64 * 5.0 / 6.0).round() as u64;
        assert!(frequency_recovers_period(y, m, 2, 21));
    }

    #[test]
    fn lr_interval_brackets_the_estimate() {
        let (lo, hi) = binomial_lr_interval(60, 100, 1.92);
        assert!(lo < 0.6 && 0.6 < hi);
        assert!(lo > 0.49 && hi < 0.70, "({lo}, {hi})");
        let (lo100, hi100) = binomial_lr_interval(60, 100, 100f64.ln());
        assert!(lo100 < lo && hi100 > hi, "100x-likelihood interval is wider");
    }

    #[test]
    fn suppression_degenerate_and_errors() {
        assert!(matches!(
            suppression_experiment(15, 1, 0.1, 10, 1),
            Err(PeriodFindError::DegeneratePeriod)
        ));
        assert!(matches!(
            suppression_experiment(16, 3, 0.1, 10, 1),
            Err(PeriodFindError::NotAnOddSemiprime(16))
        ));
    }

    #[test]
    fn tiny_mask_leaves_success_untouched() {
        // S -> 0 collapses to width-1 masking, which is no masking at all.
        let r = suppression_experiment(341, 2, 0.0, 4000, 5).unwrap();
        assert!((r.exact_suppression - 1.0).abs() < 1e-12);
        // The two Monte Carlo arms draw independently, so the sampled ratio
        // carries binomial noise around 1.
        assert!((r.suppression - 1.0).abs() < 0.1, "{}", r.suppression);
    }

    #[test]
    fn masked_zero_peak_never_below_unmasked() {
        for (n, g) in [(341u64, 2u64), (391, 3), (451, 2)] {
            let r = suppression_experiment(n, g, 0.1, 100, 3).unwrap();
            assert!(
                r.exact_zero_peak_masked >= r.exact_zero_peak_unmasked - 1e-12,
                "N={n}: {} vs {}",
                r.exact_zero_peak_masked,
                r.exact_zero_peak_unmasked
            );
        }
    }

    #[test]
    fn monte_carlo_tracks_exact_rates() {
        let r = suppression_experiment(391, 3, 0.1, 20_000, 11).unwrap();
        // Binomial noise at 2e4 shots is ~0.35%; allow 5 sigma.
        assert!((r.masked_success - r.exact_masked).abs() < 0.02, "{r:?}");
        assert!((r.unmasked_success - r.exact_unmasked).abs() < 0.02);
        assert!(r.ci_low <= r.suppression && r.suppression <= r.ci_high);
    }
}
