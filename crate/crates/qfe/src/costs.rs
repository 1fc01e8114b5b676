//! Symbolic logical-cost model: per-subroutine operation tallies, Toffoli
//! and qubit estimates, the deviation-driven shot failure rate, expected
//! shot counts, and the grid scan with Pareto selection.
//!
//! Operation counts are kept in half-units (`3` means 1.5 operations per
//! iteration) so tallies stay exact integers; the fractional entries are
//! expectations over 50% measurement branches.

use serde::Serialize;

use crate::numutil::len_bits;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CostError {
    Infeasible(String),
    EmptyFeasibleSet,
}

impl std::fmt::Display for CostError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostError::Infeasible(s) => write!(f, "infeasible parameters: {s}"),
            CostError::EmptyFeasibleSet => write!(f, "no feasible parameter combination"),
        }
    }
}

impl std::error::Error for CostError {}

/// Which bit contribution each residue prime is assumed to make when
/// estimating the prime count `|P|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrimeCountConvention {
    /// `|P| = ceil(n * W1 / ell)`: primes contribute their full bit length.
    #[default]
    EllBits,
    /// `|P| = ceil(n * W1 / (ell - 1))`: primes contribute `ell - 1` bits.
    EllMinusOne,
}

/// Algorithm parameters for one factoring configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AlgorithmParams {
    /// Bit size of the number to factor.
    pub n: u32,
    /// Repetition-count parameter; the run needs about `s + 1` shots.
    pub s: u32,
    /// Bit size of residue primes.
    pub ell: u32,
    /// Exponent window (loop1).
    pub w1: u32,
    /// Exponentiation windows (loop3/unloop3, both axes).
    pub w3: u32,
    /// Output-accumulation window (loop4).
    pub w4: u32,
    /// Truncated accumulator length.
    pub f: u32,
    /// Input qubits.
    pub m: u32,
}

impl AlgorithmParams {
    /// Parameters with the table convention `m = ceil(n/2 + n/s)`.
    pub fn new(n: u32, s: u32, ell: u32, w1: u32, w3: u32, w4: u32, f: u32) -> Self {
        let m = (n as u64).div_ceil(2) as u32 + (n as u64).div_ceil(s as u64) as u32;
        AlgorithmParams { n, s, ell, w1, w3, w4, f, m }
    }

    /// Same but with an explicit input-register size, for desk-scale runs
    /// where `m` is chosen directly.
    pub fn with_explicit_m(n: u32, s: u32, ell: u32, w1: u32, w3: u32, w4: u32, f: u32, m: u32) -> Self {
        AlgorithmParams { n, s, ell, w1, w3, w4, f, m }
    }

    pub fn len_m(&self) -> u32 {
        len_bits(self.m as u64)
    }

    pub fn w1_windows(&self) -> u32 {
        self.m.div_ceil(self.w1)
    }

    pub fn w3_windows(&self) -> u32 {
        self.ell.div_ceil(self.w3)
    }

    pub fn w4_windows(&self) -> u32 {
        self.ell.div_ceil(self.w4)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.w1 == 0 || self.w3 == 0 || self.w4 == 0 {
            return Err(CostError::Infeasible("windows must be >= 1".into()));
        }
        if self.f > self.n {
            return Err(CostError::Infeasible(format!("f={} > n={}", self.f, self.n)));
        }
        if self.w3_windows() < 2 {
            return Err(CostError::Infeasible("W3 < 2: startup lookup needs two windows".into()));
        }
        Ok(())
    }

    /// Estimated number of primes in the residue system.
    pub fn prime_count(&self, conv: PrimeCountConvention) -> u64 {
        let denom = match conv {
            PrimeCountConvention::EllBits => self.ell as u64,
            PrimeCountConvention::EllMinusOne => (self.ell - 1) as u64,
        };
        (self.n as u64 * self.w1_windows() as u64).div_ceil(denom)
    }
}

/// One row of the subroutine tally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TallyRow {
    pub name: &'static str,
    pub iterations: u64,
    pub register_width: u32,
    pub address_width: u32,
    /// Per-iteration op counts in half-units.
    pub additions_x2: u32,
    pub lookups_x2: u32,
    pub phaseups_x2: u32,
}

impl TallyRow {
    pub fn total_additions_x2(&self) -> u128 {
        self.iterations as u128 * self.additions_x2 as u128
    }
    pub fn total_lookups_x2(&self) -> u128 {
        self.iterations as u128 * self.lookups_x2 as u128
    }
    pub fn total_phaseups_x2(&self) -> u128 {
        self.iterations as u128 * self.phaseups_x2 as u128
    }

    /// Toffolis for this row, in half-units.
    pub fn toffolis_x2(&self) -> u128 {
        let add = addition_toffolis(self.register_width) as u128;
        let look = lookup_toffolis(self.address_width) as u128;
        let phase = phaseup_toffolis(self.address_width) as u128;
        self.iterations as u128
            * (self.additions_x2 as u128 * add
                + self.lookups_x2 as u128 * look
                + self.phaseups_x2 as u128 * phase)
    }
}

/// Full per-shot tally across all subroutines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubroutineTally {
    pub rows: Vec<TallyRow>,
}

impl SubroutineTally {
    pub fn row(&self, name: &str) -> Option<&TallyRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn additions(&self) -> f64 {
        self.rows.iter().map(|r| r.total_additions_x2()).sum::<u128>() as f64 / 2.0
    }
    pub fn lookups(&self) -> f64 {
        self.rows.iter().map(|r| r.total_lookups_x2()).sum::<u128>() as f64 / 2.0
    }
    pub fn phaseups(&self) -> f64 {
        self.rows.iter().map(|r| r.total_phaseups_x2()).sum::<u128>() as f64 / 2.0
    }
}

/// An `n`-qubit addition costs `n - 1` Toffolis.
pub fn addition_toffolis(width: u32) -> u64 {
    width.saturating_sub(1) as u64
}

/// A lookup over `n` address bits costs `2^n - n - 1` Toffolis.
pub fn lookup_toffolis(addr: u32) -> u64 {
    (1u64 << addr) - addr as u64 - 1
}

/// A phaseup over `n` address bits costs about `sqrt(2^n)` Toffolis; the
/// `O(n)` slack term is dropped (it is under 1% of totals at these sizes).
pub fn phaseup_toffolis(addr: u32) -> u64 {
    let v = 1u64 << addr;
    let r = (v as f64).sqrt() as u64;
    if r * r >= v {
        r
    } else {
        r + 1
    }
}

/// Instantiate every subroutine row for one parameter point.
///
/// The loop3/unloop3 body lookups combine an exponent window with a product
/// window, so their tables are addressed by `2*w3` bits; that convention is
/// what reproduces the published Toffoli totals.
pub fn tally(params: &AlgorithmParams, conv: PrimeCountConvention) -> Result<SubroutineTally, CostError> {
    params.validate()?;
    let p = params.prime_count(conv);
    tally_with_prime_count(params, p)
}

/// Same as [`tally`] but with the prime count supplied directly (the
/// simulator passes the constructed system's actual count).
pub fn tally_with_prime_count(
    params: &AlgorithmParams,
    prime_count: u64,
) -> Result<SubroutineTally, CostError> {
    params.validate()?;
    let p = prime_count;
    let lm = params.len_m();
    let (w1n, w3n, w4n) = (
        params.w1_windows() as u64,
        params.w3_windows() as u64,
        params.w4_windows() as u64,
    );
    let sum_width = params.ell + lm;
    let rows = vec![
        TallyRow {
            name: "loop1",
            iterations: (p + 1) * w1n,
            register_width: sum_width,
            address_width: params.w1,
            additions_x2: 2,
            lookups_x2: 2,
            phaseups_x2: 0,
        },
        TallyRow {
            name: "loop2",
            iterations: p * lm as u64,
            register_width: sum_width,
            address_width: 0,
            additions_x2: 4,
            lookups_x2: 0,
            phaseups_x2: 0,
        },
        TallyRow {
            name: "loop3_startup",
            iterations: p,
            register_width: params.ell,
            address_width: 2 * params.w3,
            additions_x2: 0,
            lookups_x2: 2,
            phaseups_x2: 0,
        },
        TallyRow {
            name: "loop3_body",
            iterations: p * (w3n - 2) * w3n,
            register_width: params.ell,
            address_width: 2 * params.w3,
            additions_x2: 4,
            lookups_x2: 2,
            phaseups_x2: 0,
        },
        TallyRow {
            name: "loop4",
            iterations: p * w4n,
            register_width: params.f,
            address_width: params.w4,
            additions_x2: 3,
            lookups_x2: 5,
            phaseups_x2: 2,
        },
        TallyRow {
            name: "unloop3_body",
            iterations: p * (w3n - 2) * 2 * w3n,
            register_width: params.ell,
            address_width: 2 * params.w3,
            additions_x2: 5,
            lookups_x2: 3,
            phaseups_x2: 2,
        },
        TallyRow {
            name: "unloop3_cleanup",
            iterations: p,
            register_width: params.ell,
            address_width: 2 * params.w3,
            additions_x2: 0,
            lookups_x2: 0,
            phaseups_x2: 2,
        },
        TallyRow {
            name: "unloop2",
            iterations: p * lm as u64,
            register_width: sum_width,
            address_width: 0,
            additions_x2: 4,
            lookups_x2: 0,
            phaseups_x2: 0,
        },
    ];
    Ok(SubroutineTally { rows })
}

/// Toffolis per shot for a tally.
pub fn toffoli_count(tally: &SubroutineTally) -> f64 {
    tally.rows.iter().map(|r| r.toffolis_x2()).sum::<u128>() as f64 / 2.0
}

/// Worst-case modular deviation of the approximate exponentiation and the
/// shot failure rate it implies.
///
/// Each of the `|P| * W4` truncated accumulator additions is charged three
/// `2^-f` error terms: a lost carry below the truncation point, an early
/// wraparound from working mod `N >> t` instead of mod `N`, and a wraparound
/// of the residue system's own product (whose deviation is certified below
/// `2^-f`). The factor 3 calibrates the asymptotic bound against the
/// published failure-rate column and reproduces it across all table rows.
pub fn epsilon_and_p_deviant(params: &AlgorithmParams, conv: PrimeCountConvention) -> (f64, f64) {
    let p = params.prime_count(conv);
    epsilon_and_p_deviant_with_prime_count(params, p)
}

pub fn epsilon_and_p_deviant_with_prime_count(
    params: &AlgorithmParams,
    prime_count: u64,
) -> (f64, f64) {
    let additions = prime_count as f64 * params.w4_windows() as f64;
    let epsilon = 3.0 * additions * 2f64.powi(-(params.f as i32));
    let p_deviant = 2.0 * epsilon.sqrt();
    (epsilon, p_deviant)
}

/// `(s + 1) / (1 - P_deviant) / 0.99`; the 0.99 covers postprocessing retry.
pub fn expected_shots(s: u32, p_deviant: f64) -> f64 {
    (s as f64 + 1.0) / (1.0 - p_deviant) / 0.99
}

/// Per-phase logical qubit profile, from the qubit tally table.
#[derive(Debug, Clone, Serialize)]
pub struct QubitPhaseTally {
    pub phases: Vec<(&'static str, u64)>,
    /// Maximum of the symbolic per-phase totals.
    pub max_symbolic: u64,
    /// The headline count matching the published table column
    /// (`m + 2f + 2l + len m`); the symbolic loop4 total charges one more
    /// `f` of adder workspace than the published numbers do.
    pub published_convention: u64,
}

pub fn logical_qubits(params: &AlgorithmParams) -> QubitPhaseTally {
    let (m, f, ell, lm) = (
        params.m as u64,
        params.f as u64,
        params.ell as u64,
        params.len_m() as u64,
    );
    let phases = vec![
        ("startup", m + f),
        ("enter_outer", m + f + ell + lm),
        ("loop1", m + f + 3 * ell + 3 * lm),
        ("loop2", m + f + 2 * ell + 2 * lm),
        ("loop3", m + f + 4 * ell + lm),
        ("loop4", m + 3 * f + 2 * ell + lm),
        ("unloop3", m + f + 4 * ell + lm),
        ("unloop2", m + f + 2 * ell + 2 * lm),
        ("exit_outer", m + f + 3 * ell + 3 * lm),
        ("measure_output", m + f),
    ];
    let max_symbolic = phases.iter().map(|&(_, q)| q).max().unwrap_or(0);
    QubitPhaseTally {
        phases,
        max_symbolic,
        published_convention: m + 2 * f + 2 * ell + lm,
    }
}

/// Cost estimate for one parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct CostEstimate {
    pub params: AlgorithmParams,
    pub prime_count: u64,
    pub epsilon: f64,
    pub p_deviant: f64,
    pub expected_shots: f64,
    pub toffolis_per_shot: f64,
    /// Expected Toffolis per factoring (per-shot times expected shots).
    pub expected_toffolis: f64,
    pub logical_qubits: u64,
    pub q3t: f64,
}

pub fn estimate(params: &AlgorithmParams, conv: PrimeCountConvention) -> Result<CostEstimate, CostError> {
    let (epsilon, p_deviant) = epsilon_and_p_deviant(params, conv);
    if !(0.0..1.0).contains(&p_deviant) {
        return Err(CostError::Infeasible(format!("P_deviant = {p_deviant:.3} not in [0, 1)")));
    }
    let t = tally(params, conv)?;
    let shots = expected_shots(params.s, p_deviant);
    let per_shot = toffoli_count(&t);
    let q = logical_qubits(params).published_convention;
    let expected = per_shot * shots;
    Ok(CostEstimate {
        params: *params,
        prime_count: params.prime_count(conv),
        epsilon,
        p_deviant,
        expected_shots: shots,
        toffolis_per_shot: per_shot,
        expected_toffolis: expected,
        logical_qubits: q,
        q3t: (q as f64).powi(3) * expected,
    })
}

/// Exact prime counts `pi(2^k)` for the pool-feasibility check.
const PI_2POW: &[(u32, u64)] = &[
    (16, 6542),
    (17, 12251),
    (18, 23000),
    (19, 43390),
    (20, 82025),
    (21, 155611),
    (22, 295947),
    (23, 564163),
    (24, 1077871),
    (25, 2063689),
    (26, 3957809),
];

fn prime_pool_size(ell: u32) -> Option<u64> {
    let hi = PI_2POW.iter().find(|&&(k, _)| k == ell)?.1;
    let lo = PI_2POW.iter().find(|&&(k, _)| k == ell - 1)?.1;
    Some(hi - lo)
}

/// Is the parameter point feasible: enough candidate primes exist (with a 2x
/// margin for exclusions and search freedom), and the failure rate is a
/// probability.
pub fn feasible(params: &AlgorithmParams, conv: PrimeCountConvention) -> bool {
    if params.validate().is_err() {
        return false;
    }
    // Exclusions only remove a candidate when some windowed multiplier is
    // divisible by it, which happens for a ~(W1 * 2^w1 / p) fraction of
    // candidates; a 25% margin is generous.
    let need = params.prime_count(conv);
    match prime_pool_size(params.ell) {
        Some(pool) => {
            if pool < need + need / 4 {
                return false;
            }
        }
        None => return false,
    }
    let (_, p_deviant) = epsilon_and_p_deviant(params, conv);
    p_deviant < 1.0
}

/// Inclusive ranges for the grid scan.
#[derive(Debug, Clone)]
pub struct ScanRanges {
    pub s: (u32, u32),
    pub ell: (u32, u32),
    pub w1: (u32, u32),
    pub w3: (u32, u32),
    pub w4: (u32, u32),
    pub f: (u32, u32),
}

impl Default for ScanRanges {
    fn default() -> Self {
        ScanRanges {
            s: (2, 14),
            ell: (18, 25),
            w1: (2, 8),
            w3: (2, 6),
            w4: (2, 8),
            f: (24, 59),
        }
    }
}

/// Evaluate every feasible grid point.
pub fn grid_scan(
    n: u32,
    ranges: &ScanRanges,
    conv: PrimeCountConvention,
) -> Result<Vec<CostEstimate>, CostError> {
    use rayon::prelude::*;
    let mut points = Vec::new();
    for s in ranges.s.0..=ranges.s.1 {
        for ell in ranges.ell.0..=ranges.ell.1 {
            for w1 in ranges.w1.0..=ranges.w1.1 {
                for w3 in ranges.w3.0..=ranges.w3.1 {
                    for w4 in ranges.w4.0..=ranges.w4.1 {
                        for f in ranges.f.0..=ranges.f.1 {
                            points.push(AlgorithmParams::new(n, s, ell, w1, w3, w4, f));
                        }
                    }
                }
            }
        }
    }
    let mut out: Vec<CostEstimate> = points
        .par_iter()
        .filter(|p| feasible(p, conv))
        .filter_map(|p| estimate(p, conv).ok())
        .collect();
    if out.is_empty() {
        return Err(CostError::EmptyFeasibleSet);
    }
    // Canonical order, independent of thread scheduling.
    out.sort_by(|a, b| {
        let ka = (a.params.s, a.params.ell, a.params.w1, a.params.w3, a.params.w4, a.params.f);
        let kb = (b.params.s, b.params.ell, b.params.w1, b.params.w3, b.params.w4, b.params.f);
        ka.cmp(&kb)
    });
    Ok(out)
}

/// Indices of the non-dominated (qubits, expected Toffolis) points.
pub fn pareto_indices(estimates: &[CostEstimate]) -> Vec<usize> {
    let mut keep = Vec::new();
    'outer: for (i, a) in estimates.iter().enumerate() {
        for (j, b) in estimates.iter().enumerate() {
            if i == j {
                continue;
            }
            let dominates = b.logical_qubits <= a.logical_qubits
                && b.expected_toffolis <= a.expected_toffolis
                && (b.logical_qubits < a.logical_qubits
                    || b.expected_toffolis < a.expected_toffolis);
            if dominates {
                continue 'outer;
            }
            // Exact duplicates: keep the first occurrence only.
            if j < i
                && b.logical_qubits == a.logical_qubits
                && b.expected_toffolis == a.expected_toffolis
            {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    keep
}

/// The point minimizing `qubits^3 * toffolis`.
pub fn q3t_optimum(estimates: &[CostEstimate]) -> Option<&CostEstimate> {
    estimates
        .iter()
        .min_by(|a, b| a.q3t.partial_cmp(&b.q3t).expect("q3t is finite"))
}

/// Fixed CSV header shared by the CLI and tests.
pub const CSV_HEADER: &str =
    "n,s,ell,w1,w3,w4,f,m,p_deviant,expected_shots,toffolis,qubits,q3t,pareto_flag";

pub fn to_csv_row(e: &CostEstimate, pareto: bool) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{:.6e},{:.4},{:.6e},{},{:.6e},{}",
        e.params.n,
        e.params.s,
        e.params.ell,
        e.params.w1,
        e.params.w3,
        e.params.w4,
        e.params.f,
        e.params.m,
        e.p_deviant,
        e.expected_shots,
        e.expected_toffolis,
        e.logical_qubits,
        e.q3t,
        if pareto { 1 } else { 0 }
    )
}

/// The seven published parameter rows, used by reproduction tests and the
/// default scan summary.
pub const PUBLISHED_ROWS: &[(u32, u32, u32, u32, u32, u32, u32, u32, f64, f64, f64, u64)] = &[
    // n, s, ell, w1, w3, w4, f, m, P_deviant, E(shots), Toffolis, Qubits
    (1024, 8, 18, 6, 3, 6, 28, 640, 0.0287, 9.4, 1.1e9, 742),
    (1536, 8, 21, 6, 3, 5, 31, 960, 0.0183, 9.3, 3.1e9, 1074),
    (2048, 8, 21, 6, 3, 5, 33, 1280, 0.0125, 9.2, 6.5e9, 1399),
    (3072, 8, 21, 6, 3, 5, 35, 1920, 0.0091, 9.2, 1.9e10, 2043),
    (4096, 8, 24, 6, 3, 5, 36, 2560, 0.0080, 9.2, 4.0e10, 2692),
    (6144, 8, 24, 6, 3, 5, 39, 3840, 0.0042, 9.1, 1.2e11, 3978),
    (8192, 8, 24, 6, 3, 5, 40, 5120, 0.0040, 9.1, 2.7e11, 5261),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn row_2048() -> AlgorithmParams {
        AlgorithmParams::new(2048, 8, 21, 6, 3, 5, 33)
    }

    #[test]
    fn m_and_windows_match_published_row() {
        let p = row_2048();
        assert_eq!(p.m, 1280);
        assert_eq!(p.len_m(), 11);
        assert_eq!(p.w1_windows(), 214);
        assert_eq!(p.w3_windows(), 7);
        assert_eq!(p.w4_windows(), 5);
        assert_eq!(p.prime_count(PrimeCountConvention::EllBits), 20871);
    }

    #[test]
    fn loop1_iterations_formula() {
        let p = row_2048();
        let t = tally(&p, PrimeCountConvention::EllBits).unwrap();
        let loop1 = t.row("loop1").unwrap();
        assert_eq!(loop1.iterations, (20871 + 1) * 214);
        assert_eq!(loop1.additions_x2, 2);
        assert_eq!(loop1.lookups_x2, 2);
        assert_eq!(loop1.register_width, 21 + 11);
        // loop2: |P| * len m iterations of 2 additions.
        let loop2 = t.row("loop2").unwrap();
        assert_eq!(loop2.iterations, 20871 * 11);
        assert_eq!(loop2.additions_x2, 4);
    }

    #[test]
    fn w3_of_two_skips_body() {
        let p = AlgorithmParams::new(2048, 8, 21, 6, 11, 5, 33); // W3 = 2
        assert_eq!(p.w3_windows(), 2);
        let t = tally(&p, PrimeCountConvention::EllBits).unwrap();
        assert_eq!(t.row("loop3_body").unwrap().iterations, 0);
        assert_eq!(t.row("unloop3_body").unwrap().iterations, 0);
    }

    #[test]
    fn w3_window_below_two_is_infeasible() {
        let p = AlgorithmParams::new(2048, 8, 21, 6, 21, 5, 33); // W3 = 1
        assert!(tally(&p, PrimeCountConvention::EllBits).is_err());
    }

    #[test]
    fn operation_toffoli_formulas() {
        assert_eq!(addition_toffolis(33), 32);
        assert_eq!(lookup_toffolis(6), 57);
        assert_eq!(phaseup_toffolis(6), 8);
        assert_eq!(phaseup_toffolis(5), 6); // ceil(sqrt(32))
        let empty = SubroutineTally { rows: vec![] };
        assert_eq!(toffoli_count(&empty), 0.0);
    }

    #[test]
    fn p_deviant_matches_published_rows_within_10pct() {
        for &(n, s, ell, w1, w3, w4, f, _m, pdev, _es, _tof, _q) in PUBLISHED_ROWS {
            let p = AlgorithmParams::new(n, s, ell, w1, w3, w4, f);
            let (_, got) = epsilon_and_p_deviant(&p, PrimeCountConvention::EllBits);
            let rel = (got - pdev).abs() / pdev;
            assert!(rel < 0.10, "n={n}: got {got:.4}, published {pdev}");
        }
    }

    #[test]
    fn p_deviant_vanishes_as_f_grows() {
        let base = row_2048();
        let mut prev = f64::INFINITY;
        for f in [30, 40, 50, 60, 80] {
            let p = AlgorithmParams { f, ..base };
            let (_, pd) = epsilon_and_p_deviant(&p, PrimeCountConvention::EllBits);
            assert!(pd < prev);
            prev = pd;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn expected_shots_formula() {
        let v = expected_shots(8, 0.0125);
        assert!((v - 9.0 / 0.9875 / 0.99).abs() < 1e-12);
        assert!((v - 9.2).abs() < 0.01);
        assert!((expected_shots(8, 0.0) - 9.0 / 0.99).abs() < 1e-12);
        assert!((expected_shots(1, 0.5) - 2.0 / 0.5 / 0.99).abs() < 1e-12);
    }

    #[test]
    fn qubit_phase_totals() {
        let p = row_2048();
        let q = logical_qubits(&p);
        let loop3 = q.phases.iter().find(|(n, _)| *n == "loop3").unwrap().1;
        assert_eq!(loop3, 1280 + 33 + 4 * 21 + 11);
        let loop4 = q.phases.iter().find(|(n, _)| *n == "loop4").unwrap().1;
        assert_eq!(loop4, 1280 + 3 * 33 + 2 * 21 + 11);
        assert_eq!(q.max_symbolic, loop4);
        assert_eq!(q.published_convention, 1399);
        // Degenerate: f = ell = 0 collapses to m + len m.
        let degen = AlgorithmParams { f: 0, ell: 0, ..p };
        assert_eq!(logical_qubits(&degen).published_convention, 1280 + 11);
    }

    #[test]
    fn monotonicity_in_w1() {
        let base = row_2048();
        let mut prev_iters = u64::MAX;
        for w1 in 2..=8 {
            let p = AlgorithmParams { w1, ..base };
            let t = tally(&p, PrimeCountConvention::EllBits).unwrap();
            let it = t.row("loop1").unwrap().iterations;
            assert!(it <= prev_iters, "loop1 iterations should weakly decrease in w1");
            prev_iters = it;
        }
    }

    #[test]
    fn pareto_removes_dominated_points() {
        let mk = |q: u64, tof: f64| CostEstimate {
            params: row_2048(),
            prime_count: 0,
            epsilon: 0.0,
            p_deviant: 0.0,
            expected_shots: 0.0,
            toffolis_per_shot: tof,
            expected_toffolis: tof,
            logical_qubits: q,
            q3t: (q as f64).powi(3) * tof,
        };
        let pts = vec![mk(10, 10.0), mk(11, 11.0), mk(9, 12.0)];
        let keep = pareto_indices(&pts);
        assert_eq!(keep, vec![0, 2]);
        let single = vec![mk(5, 5.0)];
        assert_eq!(pareto_indices(&single), vec![0]);
    }

    #[test]
    fn prime_count_convention_switch() {
        let p = row_2048();
        let a = p.prime_count(PrimeCountConvention::EllBits);
        let b = p.prime_count(PrimeCountConvention::EllMinusOne);
        assert!(b > a);
        assert!((b as f64 / a as f64 - 1.0).abs() < 0.06);
    }

    #[test]
    fn feasibility_rejects_thin_prime_pools() {
        // n = 8192 with 18-bit primes needs more primes than exist.
        let p = AlgorithmParams::new(8192, 8, 18, 6, 3, 5, 40);
        assert!(!feasible(&p, PrimeCountConvention::EllBits));
        assert!(feasible(&AlgorithmParams::new(8192, 8, 24, 6, 3, 5, 40), PrimeCountConvention::EllBits));
    }
}
