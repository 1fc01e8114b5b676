//! The approximate modular exponentiation: classical table construction, a
//! pure big-integer oracle, and the windowed shot execution
//! (loop1 → loop2 → loop3 → loop4 → unloop3 → unloop2 per residue prime)
//! on the trajectory simulator.
//!
//! Value flow per prime `p` with generator `g_p`:
//!
//! * loop1 mutates the running-sum register from `S_{p_{j-1}}` to `S_{p_j}`,
//!   the sum of windowed dlogs of the exponent, one lookup-and-add per
//!   exponent window against difference tables between consecutive primes.
//! * loop2 reduces the sum mod `p - 1` by shifted conditional subtraction,
//!   parking the branch bits in the freed top bits of the same register.
//! * loop3 computes `V_p = g_p^(S mod (p-1)) mod p` by windowed
//!   multiply-accumulate; superseded product registers are erased by
//!   measurement with every phase correction deferred to unloop3.
//! * loop4 subtracts complement window tables of the CRT contribution
//!   constants from the truncated accumulator; the conditional add-back of
//!   the truncated modulus folds into the next window's table via the
//!   previous underflow qubit.
//! * unloop3/unloop2 run the inverses, settling the deferred corrections.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::costs::AlgorithmParams;
use crate::numutil::{len_bits, mul_mod_u64, pow_mod_u64};
use crate::qsim::{QuintView, SimState, UncomputeInfo, VentId};
use crate::residue::{
    contribution_table, dlog_tables, exclusion_predicate, find_prime_set, window_products,
    ContributionTable, DlogTable, Modulus, ResidueError, ResidueSystem, SearchOptions,
};

#[derive(Debug)]
pub enum ModexpError {
    Residue(ResidueError),
    Sim(crate::qsim::SimError),
    InvalidParams(String),
    ParseError(String),
}

impl std::fmt::Display for ModexpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModexpError::Residue(e) => write!(f, "residue: {e}"),
            ModexpError::Sim(e) => write!(f, "simulation: {e}"),
            ModexpError::InvalidParams(s) => write!(f, "invalid params: {s}"),
            ModexpError::ParseError(s) => write!(f, "parse: {s}"),
        }
    }
}

impl std::error::Error for ModexpError {}

impl From<ResidueError> for ModexpError {
    fn from(e: ResidueError) -> Self {
        ModexpError::Residue(e)
    }
}

impl From<crate::qsim::SimError> for ModexpError {
    fn from(e: crate::qsim::SimError) -> Self {
        ModexpError::Sim(e)
    }
}

fn window_bounds(total: u32, w: u32, idx: u32) -> (u32, u32) {
    let lo = idx * w;
    (lo, ((idx + 1) * w).min(total))
}

/// Everything one shot needs: the modulus, parameters, residue system, and
/// all classically precomputed tables.
pub struct ExecutionConfig {
    pub modulus: Modulus,
    pub params: AlgorithmParams,
    pub system: ResidueSystem,
    pub contributions: ContributionTable,
    pub dlogs: DlogTable,
    /// Windowed multiplier products `K_w(v) mod N` (shared across primes).
    pub products: Vec<Vec<BigUint>>,
    /// `N >> t`, the truncated modulus the accumulator works under.
    pub n_tilde: u64,
    pub t: u32,
    /// Worst-case modular deviation bound for this configuration.
    pub epsilon: f64,
    /// `ceil(sqrt(epsilon) * (N >> t))`, at least 1: the mask width at
    /// truncated scale.
    pub mask_bound: u64,
    /// Width of the running-sum register: `ell + len m`.
    pub sum_width: u32,

    // loop3: startup tables g_p^v, complement product tables for the body
    // stages, and their inverse-factor twins: [prime][stage-2][window].
    start_tables: Vec<Vec<u64>>,
    body_tables: Vec<Vec<Vec<Vec<u64>>>>,
    body_inv_tables: Vec<Vec<Vec<Vec<u64>>>>,
    // loop4: merged complement window tables, [prime][window]; entry index
    // (u << wv) | v except the shot's first table, which has no u bit.
    loop4_tables: Vec<Vec<Vec<u64>>>,
    /// Raw window sums `Sw` of contribution constants, for the oracle.
    loop4_sums: Vec<Vec<Vec<u64>>>,
}

impl ExecutionConfig {
    /// Standard multipliers for period finding against `g^e mod N`:
    /// `M_k = g^(2^k) mod N`.
    pub fn shor_multipliers(n: &Modulus, g: &BigUint, m: u32) -> Vec<BigUint> {
        let mut out = Vec::with_capacity(m as usize);
        let mut cur = g % n.value();
        for _ in 0..m {
            out.push(cur.clone());
            cur = &cur * &cur % n.value();
        }
        out
    }

    /// Multipliers for the two-register variant: an `x_len`-bit register of
    /// powers of `g` followed by a `y_len`-bit register of powers of
    /// `h = g^(N-1) mod N`, packed into one exponent register.
    pub fn ekera_hastad_multipliers(
        n: &Modulus,
        g: &BigUint,
        x_len: u32,
        y_len: u32,
    ) -> Vec<BigUint> {
        let h = g.modpow(&(n.value() - 1u32), n.value());
        let mut out = Self::shor_multipliers(n, g, x_len);
        out.extend(Self::shor_multipliers(n, &h, y_len));
        out
    }

    /// Build all tables for one shot, searching a fresh residue system (its
    /// exclusion criteria depend on the multipliers, hence on `g`).
    pub fn build(
        modulus: Modulus,
        multipliers: Vec<BigUint>,
        params: AlgorithmParams,
        search: &SearchOptions,
    ) -> Result<ExecutionConfig, ModexpError> {
        params.validate().map_err(|e| ModexpError::InvalidParams(e.to_string()))?;
        let products = window_products(&multipliers, &modulus, params.w1);
        let admissible = exclusion_predicate(&products);
        let system = find_prime_set(
            &modulus,
            params.w1_windows(),
            params.ell,
            params.f,
            &admissible,
            search,
        )?;
        Self::with_system(modulus, multipliers, params, system)
    }

    /// Build the tables against an already-constructed residue system.
    pub fn with_system(
        modulus: Modulus,
        multipliers: Vec<BigUint>,
        params: AlgorithmParams,
        system: ResidueSystem,
    ) -> Result<ExecutionConfig, ModexpError> {
        use rayon::prelude::*;
        params.validate().map_err(|e| ModexpError::InvalidParams(e.to_string()))?;
        let n_bits = modulus.bits() as u32;
        if params.n != n_bits {
            return Err(ModexpError::InvalidParams(format!(
                "params.n = {} but modulus has {n_bits} bits",
                params.n
            )));
        }
        if multipliers.len() != params.m as usize {
            return Err(ModexpError::InvalidParams("multiplier count != m".into()));
        }
        if params.m > 63 || params.f >= 63 || params.ell + len_bits(params.m as u64) > 63 {
            return Err(ModexpError::InvalidParams("desk-scale widths exceed u64 range".into()));
        }

        let products = window_products(&multipliers, &modulus, params.w1);
        debug_assert_eq!(products.len(), params.w1_windows() as usize);
        let sum_width = params.ell + len_bits(params.m as u64);
        let dlogs = dlog_tables(&system, &products, sum_width)?;
        let contributions = contribution_table(&system, &modulus, params.f)?;

        let t = contributions.t;
        let n_tilde = (modulus.value() >> t)
            .to_u64()
            .ok_or_else(|| ModexpError::InvalidParams("N >> t exceeds u64".into()))?;

        let prime_count = system.len() as u64;
        let (epsilon, _) =
            crate::costs::epsilon_and_p_deviant_with_prime_count(&params, prime_count);
        if epsilon >= 1.0 {
            return Err(ModexpError::InvalidParams(format!(
                "epsilon = {epsilon:.3} >= 1; increase f"
            )));
        }
        let mask_bound = ((epsilon.sqrt() * n_tilde as f64).ceil() as u64).max(1);

        let ell = params.ell;
        let w3 = params.w3;
        let w3n = params.w3_windows();
        let start_width = (2 * w3).min(ell);

        struct PrimeTables {
            start: Vec<u64>,
            body: Vec<Vec<Vec<u64>>>,
            body_inv: Vec<Vec<Vec<u64>>>,
        }
        let per_prime: Vec<PrimeTables> = system
            .primes()
            .par_iter()
            .zip(&dlogs.generators)
            .map(|(&p, &g_p)| {
                let start: Vec<u64> =
                    (0..1u64 << start_width).map(|v| pow_mod_u64(g_p, v, p)).collect();
                let mut body = Vec::new();
                let mut body_inv = Vec::new();
                for stage in 2..w3n {
                    let (alo, ahi) = window_bounds(ell, w3, stage);
                    let wa = ahi - alo;
                    let mut stage_tbls = Vec::new();
                    let mut stage_inv = Vec::new();
                    for tw in 0..w3n {
                        let (blo, bhi) = window_bounds(ell, w3, tw);
                        let wb = bhi - blo;
                        let mut tbl = vec![0u64; 1 << (wa + wb)];
                        let mut inv_tbl = vec![0u64; 1 << (wa + wb)];
                        for a in 0..1u64 << wa {
                            let e = ((a as u128) << alo) % (p as u128 - 1);
                            let factor = pow_mod_u64(g_p, e as u64, p);
                            let factor_inv = pow_mod_u64(g_p, (p - 1) - e as u64, p);
                            for b in 0..1u64 << wb {
                                let shifted = (((b as u128) << blo) % p as u128) as u64;
                                let term = mul_mod_u64(shifted, factor, p);
                                let term_inv = mul_mod_u64(shifted, factor_inv, p);
                                let idx = ((a << wb) | b) as usize;
                                tbl[idx] = (p - term) % p;
                                inv_tbl[idx] = (p - term_inv) % p;
                            }
                        }
                        stage_tbls.push(tbl);
                        stage_inv.push(inv_tbl);
                    }
                    body.push(stage_tbls);
                    body_inv.push(stage_inv);
                }
                PrimeTables { start, body, body_inv }
            })
            .collect();

        // loop4 window tables. The merged entry handles the previous
        // window's pending underflow u: with invariant
        // acc = true + u * (2^f - n_tilde), subtracting
        // (u * (2^f - n_tilde) + n_tilde - Sw) restores the invariant with
        // the new underflow landing in the fresh top qubit.
        let f = params.f;
        let w4 = params.w4;
        let w4n = params.w4_windows();
        let u_factors = crate::residue::contribution_factors(&system);
        let wrap = 1u128 << (f + 1);
        let loop4_pair: Vec<(Vec<Vec<u64>>, Vec<Vec<u64>>)> = system
            .primes()
            .par_iter()
            .enumerate()
            .map(|(j, _)| {
                let uj = &u_factors[j];
                let mut tables = Vec::new();
                let mut sums = Vec::new();
                for w in 0..w4n {
                    let (lo, hi) = window_bounds(ell, w4, w);
                    let wv = hi - lo;
                    let mut sw = vec![0u64; 1 << wv];
                    for v in 0..1u64 << wv {
                        let mut chunk = BigUint::zero();
                        for k in 0..wv {
                            if v >> k & 1 == 1 {
                                chunk += uj << (lo + k);
                            }
                        }
                        let reduced = (chunk % system.l()) % modulus.value();
                        sw[v as usize] =
                            ((reduced >> t) % n_tilde).to_u64().expect("fits in f bits");
                    }
                    let first_of_shot = j == 0 && w == 0;
                    let entries = if first_of_shot { 1usize << wv } else { 1usize << (wv + 1) };
                    let mut tbl = vec![0u64; entries];
                    for (idx, slot) in tbl.iter_mut().enumerate() {
                        let v = idx as u64 & ((1 << wv) - 1);
                        let u = (idx >> wv) as u128;
                        *slot = ((u * ((1u128 << f) - n_tilde as u128) + n_tilde as u128
                            - sw[v as usize] as u128)
                            % wrap) as u64;
                    }
                    tables.push(tbl);
                    sums.push(sw);
                }
                (tables, sums)
            })
            .collect();
        let (loop4_tables, loop4_sums) = loop4_pair.into_iter().unzip();

        Ok(ExecutionConfig {
            modulus,
            params,
            system,
            contributions,
            dlogs,
            products,
            n_tilde,
            t,
            epsilon,
            mask_bound,
            sum_width,
            start_tables: per_prime.iter().map(|p| p.start.clone()).collect(),
            body_tables: per_prime.iter().map(|p| p.body.clone()).collect(),
            body_inv_tables: per_prime.into_iter().map(|p| p.body_inv).collect(),
            loop4_tables,
            loop4_sums,
        })
    }

    /// The exact value the approximation chases: `prod_w K_w(e_w) mod N`
    /// (equal to `g^e mod N` in the single-generator mode).
    pub fn true_value(&self, e: u64) -> BigUint {
        let mut acc = BigUint::one();
        for (w, tbl) in self.products.iter().enumerate() {
            let v = self.exponent_window(e, w);
            acc = acc * &tbl[v as usize] % self.modulus.value();
        }
        acc
    }

    fn exponent_window(&self, e: u64, w: usize) -> u64 {
        let (lo, hi) = window_bounds(self.params.m, self.params.w1, w as u32);
        (e >> lo) & ((1u64 << (hi - lo)) - 1)
    }

    /// Residue of the represented product mod prime `j`, via big-integer
    /// reduction of the window products (independent of the dlog tables).
    fn residue_of(&self, e: u64, j: usize) -> u64 {
        let p = self.system.primes()[j];
        let mut acc = 1u64;
        for (w, tbl) in self.products.iter().enumerate() {
            let v = self.exponent_window(e, w);
            let kw = (&tbl[v as usize] % p).to_u64().expect("fits");
            acc = mul_mod_u64(acc, kw, p);
        }
        acc
    }

    /// The running-sum value loop1 should produce for prime `j`.
    fn expected_sum(&self, e: u64, j: usize) -> u64 {
        (0..self.products.len())
            .map(|w| self.dlogs.win[j][w][self.exponent_window(e, w) as usize])
            .sum()
    }
}

/// Pure classical oracle for the truncated approximation: the f-bit dot
/// product of residue bits against the contribution constants, evaluated
/// with the same window sums the quantum loops consume.
pub fn classical_oracle(config: &ExecutionConfig, e: u64) -> u64 {
    assert!(config.params.m == 64 || e < (1u64 << config.params.m));
    let mut acc: u64 = 0;
    for j in 0..config.system.len() {
        let r = config.residue_of(e, j);
        for (w, sums) in config.loop4_sums[j].iter().enumerate() {
            let (lo, hi) = window_bounds(config.params.ell, config.params.w4, w as u32);
            let v = (r >> lo) & ((1u64 << (hi - lo)) - 1);
            acc = (acc + sums[v as usize]) % config.n_tilde;
        }
    }
    acc
}

/// Per-shot record: sampled inputs, the masked measurement, per-subroutine
/// operation counters, and the allocation high-water mark.
#[derive(Debug, Clone)]
pub struct ShotRecord {
    pub seed: u64,
    pub e: u64,
    pub mask: u64,
    pub measurement: u64,
    pub counters: BTreeMap<&'static str, crate::qsim::OpCounter>,
    pub high_water: u64,
    pub clean_finish: bool,
}

impl ShotRecord {
    pub fn totals(&self) -> (u64, u64, u64) {
        let mut t = (0, 0, 0);
        for c in self.counters.values() {
            t.0 += c.additions;
            t.1 += c.lookups;
            t.2 += c.phaseups;
        }
        t
    }

    /// Line-oriented text form consumed by the CLI and test harness.
    pub fn to_line(&self) -> String {
        let (a, l, p) = self.totals();
        format!(
            "shot seed={} e={} mask={} meas={} adds={} lookups={} phaseups={} clean={}",
            self.seed, self.e, self.mask, self.measurement, a, l, p, self.clean_finish as u8
        )
    }

    /// Parse the fields back out of a record line:
    /// `(seed, e, mask, measurement, clean)`.
    pub fn parse_line(line: &str) -> Result<(u64, u64, u64, u64, bool), ModexpError> {
        let mut fields = BTreeMap::new();
        for part in line.trim().split_whitespace().skip(1) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| ModexpError::ParseError(format!("bad field {part}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<u64, ModexpError> {
            fields
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ModexpError::ParseError(format!("missing field {k}")))
        };
        Ok((get("seed")?, get("e")?, get("mask")?, get("meas")?, get("clean")? == 1))
    }
}

/// Fault injection for mutation tests: a skipped phase correction must
/// surface as a dirty finish.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShotFaults {
    /// Drop the deferred correction of the first erased product register.
    pub skip_deferred_fix: bool,
}

/// Execute one full shot with the default sampling.
pub fn run_shot(config: &ExecutionConfig, seed: u64) -> Result<ShotRecord, ModexpError> {
    run_shot_detailed(config, seed, None, None, ShotFaults::default(), None)
}

/// Full-control variant: force the sampled exponent or mask, inject faults,
/// or attach an operation trace sink.
pub fn run_shot_detailed(
    config: &ExecutionConfig,
    seed: u64,
    force_e: Option<u64>,
    force_mask: Option<u64>,
    faults: ShotFaults,
    trace: Option<Box<dyn FnMut(String) + Send>>,
) -> Result<ShotRecord, ModexpError> {
    let params = &config.params;
    let mut qpu = SimState::new(seed);
    if let Some(t) = trace {
        qpu.set_trace(t);
    }

    let exponent = qpu.alloc_uniform(params.m)?;
    if let Some(v) = force_e {
        qpu.force_value(&exponent, v);
    }
    let e = qpu.value_of(&exponent);

    let acc = qpu.alloc_uniform_range_padded(config.mask_bound, params.f)?;
    if let Some(v) = force_mask {
        qpu.force_value(&acc, v);
    }
    let mask = qpu.value_of(&acc);

    let sum = qpu.alloc(config.sum_width)?;

    // One vent per exponent window; loop1 erasures merge into them across
    // all passes and the epilogue resolves them while the register is live.
    let w1n = params.w1_windows() as usize;
    let exp_vents: Vec<VentId> = (0..w1n)
        .map(|w| {
            let (lo, hi) = window_bounds(params.m, params.w1, w as u32);
            qpu.new_vent(hi - lo)
        })
        .collect();

    let mut shot = Shot { config, qpu, exponent, acc, sum, exp_vents, pending_top: None, faults };

    for j in 0..config.system.len() {
        shot.loop1(j)?;
        shot.loop2(j)?;
        let v = shot.loop3(j)?;
        shot.loop4(j, &v)?;
        shot.unloop3(j, v)?;
        shot.unloop2(j)?;
    }
    // The final pass returns the running sum to zero.
    shot.loop1(config.system.len())?;
    shot.qpu.section("epilogue");
    let sum_view = shot.sum.clone();
    shot.qpu.del_by_equal_to(&sum_view, 0)?;
    for w in 0..w1n {
        let addr = shot.exponent_window_view(w);
        shot.qpu.phaseup(&addr, shot.exp_vents[w], &[])?;
    }

    // Measure the masked output. The last window's fold-in correction never
    // ran on the quantum side; it applies classically to the measured bits.
    let acc_view = shot.acc.clone();
    let acc_raw = shot.qpu.measure_and_free(&acc_view, "output")?;
    let pending = match shot.pending_top.take() {
        Some(top) => shot.qpu.measure_and_free(&top, "pending-underflow")?,
        None => 0,
    };
    let displaced =
        acc_raw as i128 - pending as i128 * ((1i128 << params.f) - config.n_tilde as i128);
    let measurement = displaced.rem_euclid(config.n_tilde as i128) as u64;
    // The input register heads to frequency-basis readout, which trajectory
    // simulation cannot express; it is released here.
    let exp_view = shot.exponent.clone();
    shot.qpu.measure_and_free(&exp_view, "exponent")?;

    let clean = shot.qpu.verify_clean_finish();
    let record = ShotRecord {
        seed,
        e,
        mask,
        measurement,
        counters: shot.qpu.counters().clone(),
        high_water: shot.qpu.high_water(),
        clean_finish: clean.is_ok(),
    };
    clean?;
    Ok(record)
}

struct Shot<'a> {
    config: &'a ExecutionConfig,
    qpu: SimState,
    exponent: QuintView,
    acc: QuintView,
    sum: QuintView,
    exp_vents: Vec<VentId>,
    /// The not-yet-erased underflow qubit of the latest loop4 subtraction.
    pending_top: Option<QuintView>,
    faults: ShotFaults,
}

impl Shot<'_> {
    fn exponent_window_view(&self, w: usize) -> QuintView {
        let (lo, hi) = window_bounds(self.config.params.m, self.config.params.w1, w as u32);
        self.exponent.slice(lo, hi)
    }

    /// Window views over the reduced exponent in the low `ell` sum bits.
    fn sum_window_view(&self, idx: u32) -> QuintView {
        let (lo, hi) = window_bounds(self.config.params.ell, self.config.params.w3, idx);
        self.sum.slice(lo, hi)
    }

    fn loop1(&mut self, j: usize) -> Result<(), ModexpError> {
        self.qpu.section("loop1");
        let diff = &self.config.dlogs.diff[j];
        for w in 0..self.config.products.len() {
            self.qpu.charge(2, 2, 0);
            let addr = self.exponent_window_view(w);
            let out = self.qpu.alloc(self.config.sum_width)?;
            self.qpu.lookup(&diff[w], &addr, &out)?;
            self.qpu.iadd_quint(&self.sum, &out)?;
            self.qpu.erase_lookup_output(&diff[w], &addr, &out, self.exp_vents[w])?;
            self.qpu.del_by_equal_to(&out, 0)?;
        }
        if j < self.config.system.len() {
            debug_assert_eq!(
                self.qpu.value_of(&self.sum),
                self.config.expected_sum(self.qpu.value_of(&self.exponent), j)
            );
        }
        Ok(())
    }

    fn loop2(&mut self, j: usize) -> Result<(), ModexpError> {
        self.qpu.section("loop2");
        let ell = self.config.params.ell;
        let p = self.config.system.primes()[j];
        let rounds = len_bits(self.config.params.m as u64);
        for k in (0..rounds).rev() {
            self.qpu.charge(4, 0, 0);
            let x = self.sum.slice(k, k + ell + 1);
            self.qpu.isub_const(&x, p - 1);
            let top = self.sum.slice(k + ell, k + ell + 1);
            let low = self.sum.slice(k, k + ell);
            self.qpu.iadd_ghz(&low, &top, p - 1)?;
        }
        debug_assert_eq!(self.qpu.value_of(&self.sum.slice(0, ell)), {
            let e = self.qpu.value_of(&self.exponent);
            self.config.expected_sum(e, j) % (p - 1)
        });
        Ok(())
    }

    fn loop3(&mut self, j: usize) -> Result<QuintView, ModexpError> {
        self.qpu.section("loop3_startup");
        self.qpu.charge(0, 2, 0);
        let ell = self.config.params.ell;
        let p = self.config.system.primes()[j];
        let w3n = self.config.params.w3_windows();
        let start_width = (2 * self.config.params.w3).min(ell);
        let start_addr = self.sum.slice(0, start_width);
        let mut v = self.qpu.alloc(ell)?;
        self.qpu.lookup(&self.config.start_tables[j], &start_addr, &v)?;

        self.qpu.section("loop3_body");
        for stage in 2..w3n {
            let mut info = UncomputeInfo::default();
            let stage_tables = &self.config.body_tables[j][(stage - 2) as usize];
            let v_new = self.qpu.alloc(ell)?;
            for tw in 0..w3n {
                self.qpu.charge(4, 2, 0);
                let tbl = &stage_tables[tw as usize];
                let exp_win = self.sum_window_view(stage);
                let (blo, bhi) = window_bounds(ell, self.config.params.w3, tw);
                let addr = v.slice(blo, bhi).concat(&exp_win);
                let out = self.qpu.alloc(ell)?;
                self.qpu.lookup(tbl, &addr, &out)?;
                // Complement subtraction with an underflow bit, then the
                // conditional add-back of the prime.
                let top = self.qpu.alloc(1)?;
                let x = v_new.concat(&top);
                self.qpu.isub_quint(&x, &out)?;
                self.qpu.iadd_ghz(&v_new, &top, p)?;
                // Defer the erased output's corrections and the underflow
                // bit's phase fix to unloop3.
                let vent = self.qpu.new_vent(addr.len());
                self.qpu.erase_lookup_output(tbl, &addr, &out, vent)?;
                self.qpu.del_by_equal_to(&out, 0)?;
                info.vents.push(vent);
                let u_val = self.qpu.value_of(&top);
                let r = self.qpu.mx_rz(&top);
                info.fixes.push(r & u_val == 1);
                self.qpu.del_by_equal_to(&top, 0)?;
            }
            // Erase the superseded product register; its correction pattern
            // rewrites into this stage's unloop3 resolution.
            let v_val = self.qpu.value_of(&v);
            let r = self.qpu.mx_rz(&v);
            info.fixes.push((r & v_val).count_ones() % 2 == 1);
            self.qpu.del_by_equal_to(&v, 0)?;
            self.qpu.push_uncompute_info(info);
            v = v_new;
        }
        debug_assert_eq!(self.qpu.value_of(&v), {
            let e = self.qpu.value_of(&self.exponent);
            let s = self.config.expected_sum(e, j) % (p - 1);
            pow_mod_u64(self.config.dlogs.generators[j], s, p)
        });
        Ok(v)
    }

    fn loop4(&mut self, j: usize, v: &QuintView) -> Result<(), ModexpError> {
        self.qpu.section("loop4");
        let ell = self.config.params.ell;
        let w4 = self.config.params.w4;
        let f = self.config.params.f;
        for w in 0..self.config.params.w4_windows() {
            self.qpu.charge(3, 5, 2);
            let tbl = &self.config.loop4_tables[j][w as usize];
            let (lo, hi) = window_bounds(ell, w4, w);
            let v_win = v.slice(lo, hi);
            let addr = match &self.pending_top {
                Some(top) => v_win.concat(top),
                None => v_win,
            };
            let out = self.qpu.alloc(f + 1)?;
            self.qpu.lookup(tbl, &addr, &out)?;
            let top = self.qpu.alloc(1)?;
            let x = self.acc.concat(&top);
            self.qpu.isub_quint(&x, &out)?;
            // Measurement-based uncompute of the offset, priced as a lookup,
            // with the phaseup resolving its corrections right away.
            let vent = self.qpu.new_vent(addr.len());
            self.qpu.erase_lookup_output(tbl, &addr, &out, vent)?;
            self.qpu.count_uncompute_lookup();
            self.qpu.del_by_equal_to(&out, 0)?;
            self.qpu.phaseup(&addr, vent, &[])?;
            // The previous underflow qubit's fold-in is consumed; erase it.
            // Half the measurement outcomes require a comparison-based phase
            // fix, with a rewritten half-table lookup alongside.
            if let Some(prev) = self.pending_top.take() {
                let u_val = self.qpu.value_of(&prev);
                let r = self.qpu.mx_rz(&prev);
                if r == 1 {
                    self.qpu.phase_flip_if(u_val == 1);
                    self.qpu.count_uncompute_lookup();
                }
                self.qpu.del_by_equal_to(&prev, 0)?;
            }
            self.pending_top = Some(top);
        }
        Ok(())
    }

    fn unloop3(&mut self, j: usize, v: QuintView) -> Result<(), ModexpError> {
        let ell = self.config.params.ell;
        let p = self.config.system.primes()[j];
        let w3 = self.config.params.w3;
        let w3n = self.config.params.w3_windows();
        let mut v_cur = v;
        for stage in (2..w3n).rev() {
            self.qpu.section("unloop3_body");
            let mut info = self.qpu.pop_uncompute_info()?;
            let stage_tables = &self.config.body_tables[j][(stage - 2) as usize];
            let inv_tables = &self.config.body_inv_tables[j][(stage - 2) as usize];
            let mut old_v_fix = info.fixes.pop().expect("old register fix");
            if self.faults.skip_deferred_fix && j == 0 && stage == 2 {
                old_v_fix = false;
            }
            let forward_fixes = info.fixes;
            let forward_vents = info.vents;

            // Recompute half: assemble the previous product register as
            // V_cur times the stage's inverse factor, the same accumulation
            // shape against the inverse tables. Corrections recorded here
            // are rewritten by the uncompute half, so their sign debt is
            // carried as recorded flips.
            let v_prev = self.qpu.alloc(ell)?;
            let mut rec_vents: Vec<(VentId, bool)> = Vec::new();
            let mut rec_fixes: Vec<bool> = Vec::new();
            for tw in 0..w3n {
                self.qpu.charge(5, 3, 2);
                let tbl = &inv_tables[tw as usize];
                let exp_win = self.sum_window_view(stage);
                let (blo, bhi) = window_bounds(ell, w3, tw);
                let addr = v_cur.slice(blo, bhi).concat(&exp_win);
                let out = self.qpu.alloc(ell)?;
                self.qpu.lookup(tbl, &addr, &out)?;
                let top = self.qpu.alloc(1)?;
                let x = v_prev.concat(&top);
                self.qpu.isub_quint(&x, &out)?;
                self.qpu.iadd_ghz(&v_prev, &top, p)?;
                let vent = self.qpu.new_vent(addr.len());
                let kicked = self.qpu.erase_lookup_output(tbl, &addr, &out, vent)?;
                self.qpu.del_by_equal_to(&out, 0)?;
                rec_vents.push((vent, kicked));
                let u_val = self.qpu.value_of(&top);
                let r = self.qpu.mx_rz(&top);
                rec_fixes.push(r & u_val == 1);
                self.qpu.del_by_equal_to(&top, 0)?;
            }

            // Uncompute half: reverse the forward accumulation window by
            // window. The comparison recomputing each underflow bit absorbs
            // the forward deferred fix; two phaseups per window resolve one
            // forward vent (against the recomputed register, whose windows
            // now hold the erasure-time address values) and one rewritten
            // recompute vent.
            let mut spare_fixes: Vec<bool> = rec_fixes;
            spare_fixes.push(old_v_fix);
            for tw in (0..w3n).rev() {
                self.qpu.charge(5, 3, 2);
                let tbl = &stage_tables[tw as usize];
                let exp_win = self.sum_window_view(stage);
                let (blo, bhi) = window_bounds(ell, w3, tw);
                let addr = v_prev.slice(blo, bhi).concat(&exp_win);
                let out = self.qpu.alloc(ell)?;
                self.qpu.lookup(tbl, &addr, &out)?;
                // Recompute the underflow bit: the forward subtraction of
                // entry = (p - term) underflowed exactly when the partial
                // value now sitting in V_cur is at least term (entry = 0
                // subtracts nothing and never underflows).
                let entry = self.qpu.value_of(&out);
                let term = if entry == 0 { 0 } else { p - entry };
                let partial = self.qpu.value_of(&v_cur);
                let u_bit = entry != 0 && partial >= term;
                let top = self.qpu.alloc(1)?;
                self.qpu.set_bit_by_comparison(&top, u_bit)?;
                self.qpu.sign_flip_if(forward_fixes[tw as usize]);
                self.qpu.isub_ghz(&v_cur, &top, p)?;
                let x = v_cur.concat(&top);
                self.qpu.iadd_quint(&x, &out)?;
                self.qpu.unlookup(tbl, &addr, &out)?;
                self.qpu.del_by_equal_to(&out, 0)?;
                self.qpu.del_by_equal_to(&top, 0)?;
                self.qpu.phaseup(&addr, forward_vents[tw as usize], &[])?;
                let (rec_vent, rec_kick) = rec_vents[tw as usize];
                let mut flips = vec![rec_kick];
                if tw == 0 {
                    flips.append(&mut spare_fixes);
                }
                self.qpu.phaseup_deferred(rec_vent, &flips);
            }
            let old = std::mem::replace(&mut v_cur, v_prev);
            self.qpu.del_by_equal_to(&old, 0)?;
        }

        // Cleanup: erase the recomputed startup register. Its value is a
        // lookup of the (static) startup address, so the corrections resolve
        // there with one phaseup.
        self.qpu.section("unloop3_cleanup");
        self.qpu.charge(0, 0, 2);
        let start_width = (2 * w3).min(ell);
        let start_addr = self.sum.slice(0, start_width);
        let vent = self.qpu.new_vent(start_width);
        self.qpu.erase_lookup_output(&self.config.start_tables[j], &start_addr, &v_cur, vent)?;
        self.qpu.phaseup(&start_addr, vent, &[])?;
        self.qpu.del_by_equal_to(&v_cur, 0)?;
        Ok(())
    }

    fn unloop2(&mut self, j: usize) -> Result<(), ModexpError> {
        self.qpu.section("unloop2");
        let ell = self.config.params.ell;
        let p = self.config.system.primes()[j];
        let rounds = len_bits(self.config.params.m as u64);
        for k in 0..rounds {
            self.qpu.charge(4, 0, 0);
            let top = self.sum.slice(k + ell, k + ell + 1);
            let low = self.sum.slice(k, k + ell);
            self.qpu.isub_ghz(&low, &top, p - 1)?;
            let x = self.sum.slice(k, k + ell + 1);
            self.qpu.iadd_const(&x, p - 1);
        }
        debug_assert_eq!(self.qpu.value_of(&self.sum), {
            let e = self.qpu.value_of(&self.exponent);
            self.config.expected_sum(e, j)
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::tally_with_prime_count;
    use crate::residue::modular_deviation;
    use num_bigint::BigInt;

    fn desk_config(seed: u64) -> ExecutionConfig {
        // 24-bit semiprime: 3851 * 2887.
        let n = Modulus::from_u64(3851 * 2887).unwrap();
        let params = AlgorithmParams::with_explicit_m(
            n.bits() as u32, // n = 24
            2,
            9,  // ell
            3,  // w1
            3,  // w3
            3,  // w4
            14, // f
            24, // m
        );
        let g = BigUint::from(5u32);
        let mults = ExecutionConfig::shor_multipliers(&n, &g, params.m);
        let search = SearchOptions { seed, budget: 1 << 20, workers: 4 };
        ExecutionConfig::build(n, mults, params, &search).unwrap()
    }

    #[test]
    fn oracle_exact_when_untruncated() {
        // f = n means t = 0: with exact handling of L (one reduction of the
        // full dot product, i.e. CRT reconstruction), the approximated value
        // equals g^e mod N exactly.
        let n = Modulus::from_u64(77).unwrap();
        let params = AlgorithmParams::with_explicit_m(7, 2, 8, 2, 2, 2, 7, 6);
        let g = BigUint::from(2u32);
        let mults = ExecutionConfig::shor_multipliers(&n, &g, params.m);
        // W1 = 3, so L must reach 77^3; four 8-bit primes are plenty.
        let system = crate::residue::ResidueSystem::from_primes(
            vec![131, 137, 139, 149],
            &n,
            8,
            0,
            params.w1_windows(),
        );
        let config = ExecutionConfig::with_system(n, mults, params, system).unwrap();
        assert_eq!(config.t, 0);
        for e in 0..64u64 {
            let residues: Vec<u64> =
                (0..config.system.len()).map(|j| config.residue_of(e, j)).collect();
            let exact =
                crate::residue::crt_reconstruct(&config.system, &config.modulus, &residues)
                    .unwrap();
            let want = BigUint::from(2u32).modpow(&BigUint::from(e), config.modulus.value());
            assert_eq!(exact, want, "e = {e}");
            if e == 5 {
                assert_eq!(exact, BigUint::from(32u32));
            }
            if e == 0 {
                assert_eq!(exact, BigUint::one(), "empty product");
            }
        }
    }

    #[test]
    fn oracle_deviation_within_epsilon() {
        let config = desk_config(11);
        let mut rng = crate::rng::stream(4, "oracle-dev");
        let mut worst = 0f64;
        for _ in 0..1000 {
            let e = crate::rng::bits(&mut rng, config.params.m);
            let truth = config.true_value(e);
            let approx = BigUint::from(classical_oracle(&config, e)) << config.t;
            let dev = modular_deviation(
                &(BigInt::from(truth) - BigInt::from(approx)),
                &config.modulus,
            );
            worst = worst.max(dev.to_f64());
        }
        assert!(
            worst <= config.epsilon,
            "worst deviation {worst:.3e} vs epsilon {:.3e}",
            config.epsilon
        );
    }

    #[test]
    fn shot_matches_oracle_and_finishes_clean() {
        let config = desk_config(21);
        for seed in 0..30 {
            let rec = run_shot(&config, seed).unwrap();
            assert!(rec.clean_finish);
            let want = (rec.mask + classical_oracle(&config, rec.e)) % config.n_tilde;
            assert_eq!(rec.measurement, want, "seed {seed}");
        }
    }

    #[test]
    fn forced_zero_exponent_and_mask() {
        let config = desk_config(22);
        let rec = run_shot_detailed(&config, 1, Some(0), Some(0), ShotFaults::default(), None)
            .unwrap();
        assert_eq!(rec.e, 0);
        assert_eq!(rec.mask, 0);
        assert_eq!(rec.measurement, classical_oracle(&config, 0));
    }

    #[test]
    fn shot_replay_is_identical() {
        let config = desk_config(23);
        let a = run_shot(&config, 77).unwrap();
        let b = run_shot(&config, 77).unwrap();
        assert_eq!(a.to_line(), b.to_line());
        assert_eq!(a.counters, b.counters);
        assert_eq!(a.high_water, b.high_water);
    }

    #[test]
    fn charged_counters_equal_symbolic_tally() {
        let config = desk_config(24);
        let rec = run_shot(&config, 5).unwrap();
        let tally =
            tally_with_prime_count(&config.params, config.system.len() as u64).unwrap();
        for row in &tally.rows {
            let c = rec.counters.get(row.name).copied().unwrap_or_default();
            assert_eq!(
                c.charged_additions_x2 as u128,
                row.total_additions_x2(),
                "{} additions",
                row.name
            );
            assert_eq!(
                c.charged_lookups_x2 as u128,
                row.total_lookups_x2(),
                "{} lookups",
                row.name
            );
            assert_eq!(
                c.charged_phaseups_x2 as u128,
                row.total_phaseups_x2(),
                "{} phaseups",
                row.name
            );
        }
        // Deterministic subroutines also match with sampled counts.
        for name in
            ["loop1", "loop2", "loop3_startup", "loop3_body", "unloop3_body", "unloop3_cleanup", "unloop2"]
        {
            let c = rec.counters.get(name).copied().unwrap_or_default();
            assert_eq!(c.additions * 2, c.charged_additions_x2, "{name}");
            assert_eq!(c.lookups * 2, c.charged_lookups_x2, "{name}");
            assert_eq!(c.phaseups * 2, c.charged_phaseups_x2, "{name}");
        }
        // The epilogue's vent resolution is the one cost outside the table.
        let ep = rec.counters["epilogue"];
        assert_eq!(ep.phaseups, config.params.w1_windows() as u64);
    }

    #[test]
    fn loop4_branch_counts_converge() {
        let config = desk_config(25);
        let tally =
            tally_with_prime_count(&config.params, config.system.len() as u64).unwrap();
        let row = tally.row("loop4").unwrap();
        let iters = row.iterations;
        // Coins happen at every previous-top erasure: one per iteration
        // except the shot's first, and the last top is measured instead.
        let coins = iters - 1;
        let n_shots = 200u64;
        let mut extra_adds = 0u64;
        let mut extra_looks = 0u64;
        for seed in 0..n_shots {
            let rec = run_shot(&config, seed).unwrap();
            let c = rec.counters["loop4"];
            extra_adds += c.additions - iters; // base: 1 subtract per iter
            extra_looks += c.lookups - 2 * iters; // base: lookup + uncompute
        }
        let trials = (coins * n_shots) as f64;
        let mean = 0.5;
        let sd = (trials * 0.25).sqrt();
        for (label, got) in [("adds", extra_adds), ("lookups", extra_looks)] {
            let z = (got as f64 - trials * mean) / sd;
            assert!(z.abs() < 3.0, "{label}: z = {z:.2}");
        }
    }

    #[test]
    fn skipped_correction_detected_across_seeds() {
        let config = desk_config(26);
        let faults = ShotFaults { skip_deferred_fix: true };
        let mut dirty = 0;
        for seed in 0..40 {
            match run_shot_detailed(&config, seed, None, None, faults, None) {
                Ok(_) => {}
                Err(ModexpError::Sim(crate::qsim::SimError::DirtyFinish(msg))) => {
                    assert!(msg.contains("sign"), "{msg}");
                    dirty += 1;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(dirty > 0, "fault injection never detected");
    }

    #[test]
    fn ekera_hastad_mode_runs_identically() {
        let n = Modulus::from_u64(3851 * 2887).unwrap();
        // x register 16 bits, y register 8 bits.
        let params = AlgorithmParams::with_explicit_m(24, 2, 9, 3, 3, 3, 14, 24);
        let g = BigUint::from(7u32);
        let mults = ExecutionConfig::ekera_hastad_multipliers(&n, &g, 16, 8);
        let search = SearchOptions { seed: 9, budget: 1 << 20, workers: 4 };
        let config = ExecutionConfig::build(n, mults, params, &search).unwrap();
        for seed in 0..10 {
            let rec = run_shot(&config, seed).unwrap();
            let want = (rec.mask + classical_oracle(&config, rec.e)) % config.n_tilde;
            assert_eq!(rec.measurement, want);
            // The represented product is g^x h^y mod N.
            let x = rec.e & 0xffff;
            let y = rec.e >> 16;
            let h = g.modpow(&(config.modulus.value() - 1u32), config.modulus.value());
            let want_true = g.modpow(&BigUint::from(x), config.modulus.value())
                * h.modpow(&BigUint::from(y), config.modulus.value())
                % config.modulus.value();
            assert_eq!(config.true_value(rec.e), want_true);
        }
    }

    #[test]
    fn record_line_round_trips() {
        let config = desk_config(27);
        let rec = run_shot(&config, 3).unwrap();
        let line = rec.to_line();
        let (seed, e, mask, meas, clean) = ShotRecord::parse_line(&line).unwrap();
        assert_eq!((seed, e, mask, meas, clean), (3, rec.e, rec.mask, rec.measurement, true));
    }

    #[test]
    fn high_water_stays_within_phase_model() {
        let config = desk_config(28);
        let q = crate::costs::logical_qubits(&config.params);
        let mut hw = None;
        for seed in 0..5 {
            let rec = run_shot(&config, seed).unwrap();
            // Allocation order is seed-independent.
            match hw {
                None => hw = Some(rec.high_water),
                Some(h) => assert_eq!(h, rec.high_water),
            }
            // Slack of 2 for the persistent underflow qubits the phase
            // model folds into adder workspace.
            assert!(rec.high_water <= q.max_symbolic + 2, "{} vs {}", rec.high_water, q.max_symbolic);
        }
    }
}
