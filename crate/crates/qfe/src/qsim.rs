//! Trajectory simulator for reversible integer registers ("quints").
//!
//! The simulator tracks one classical trajectory: the sampled value of every
//! allocated register plus a global ±1 sign. Measurement-based uncomputation
//! kicks the sign according to the measured bits, and the deferred
//! corrections are routed into vents that later phaseups must resolve; a
//! shot only passes [`SimState::verify_clean_finish`] if every register was
//! deallocated, every vent resolved, and the sign returned to +1. This can't
//! see interference, but it fuzzes classical correctness and phase-fixup
//! bookkeeping, and its operation counters are cross-checked against the
//! symbolic cost tallies.

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha12Rng;

use crate::numutil::len_bits;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimError {
    ValueMismatch { register: usize, expected: u64, got: u64 },
    OverlappingViews,
    NonzeroLookupTarget { got: u64 },
    TableSizeMismatch { expected: usize, got: usize },
    UnbalancedStack,
    DirtyFinish(String),
    WidthTooLarge(u32),
    DeadRegister(usize),
    UnlookupMismatch { got: u64 },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::ValueMismatch { register, expected, got } => {
                write!(f, "register {register}: expected {expected}, found {got}")
            }
            SimError::OverlappingViews => write!(f, "views overlap"),
            SimError::NonzeroLookupTarget { got } => {
                write!(f, "lookup target must be zero, found {got}")
            }
            SimError::TableSizeMismatch { expected, got } => {
                write!(f, "table has {got} entries, address needs {expected}")
            }
            SimError::UnbalancedStack => write!(f, "pop_uncompute_info on empty stack"),
            SimError::DirtyFinish(s) => write!(f, "dirty finish: {s}"),
            SimError::WidthTooLarge(w) => write!(f, "register width {w} exceeds 64"),
            SimError::DeadRegister(r) => write!(f, "register {r} is not live"),
            SimError::UnlookupMismatch { got } => {
                write!(f, "unlookup left residue {got} in output register")
            }
        }
    }
}

impl std::error::Error for SimError {}

/// A view of a contiguous or concatenated range of register bits. Slicing
/// and concatenation build new views without touching simulator state;
/// part 0 holds the least significant bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuintView {
    parts: Vec<(usize, u32, u32)>, // (register id, bit offset, bit length)
}

impl QuintView {
    pub fn len(&self) -> u32 {
        self.parts.iter().map(|&(_, _, l)| l).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sub-view of bits `[lo, hi)`.
    pub fn slice(&self, lo: u32, hi: u32) -> QuintView {
        assert!(lo <= hi && hi <= self.len(), "slice {lo}..{hi} of {}", self.len());
        let mut parts = Vec::new();
        let mut pos = 0u32;
        for &(reg, off, len) in &self.parts {
            let start = lo.saturating_sub(pos).min(len);
            let end = hi.saturating_sub(pos).min(len);
            if start < end {
                parts.push((reg, off + start, end - start));
            }
            pos += len;
        }
        QuintView { parts }
    }

    /// Concatenate: `high`'s bits become the most significant.
    pub fn concat(&self, high: &QuintView) -> QuintView {
        let mut parts = self.parts.clone();
        parts.extend(high.parts.iter().copied());
        QuintView { parts }
    }

    fn masks(&self) -> BTreeMap<usize, u64> {
        let mut m: BTreeMap<usize, u64> = BTreeMap::new();
        for &(reg, off, len) in &self.parts {
            let mask = if len == 0 { 0 } else { (u64::MAX >> (64 - len)) << off };
            *m.entry(reg).or_default() |= mask;
        }
        m
    }

    pub fn overlaps(&self, other: &QuintView) -> bool {
        let a = self.masks();
        let b = other.masks();
        a.iter().any(|(reg, mask)| b.get(reg).is_some_and(|m2| mask & m2 != 0))
    }

    /// Self-consistency: concatenated views must reference disjoint bits.
    pub fn self_overlapping(&self) -> bool {
        let mut seen: BTreeMap<usize, u64> = BTreeMap::new();
        for &(reg, off, len) in &self.parts {
            let mask = if len == 0 { 0 } else { (u64::MAX >> (64 - len)) << off };
            let e = seen.entry(reg).or_default();
            if *e & mask != 0 {
                return true;
            }
            *e |= mask;
        }
        false
    }
}

/// Deferred phase-flip corrections over an address space, produced by
/// measurement-based erasure of lookup outputs. The set is stored as a
/// bitmask over the `2^width` address values; corrections from repeated
/// erasures on the same address merge by symmetric difference.
#[derive(Debug, Clone)]
pub struct Vent {
    width: u32,
    words: Vec<u64>,
}

impl Vent {
    fn new(width: u32) -> Self {
        assert!(width <= 24, "vent address space too large to materialize");
        Vent { width, words: vec![0; (1usize << width).div_ceil(64)] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn contains(&self, v: u64) -> bool {
        self.words[(v >> 6) as usize] >> (v & 63) & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn xor_in(&mut self, other: &[u64]) {
        for (a, b) in self.words.iter_mut().zip(other) {
            *a ^= b;
        }
    }
}

/// Correction set from erasing a lookup output: the addresses `a` for which
/// an odd number of measured-1 bits intersect `table[a]`.
pub fn lookup_erasure_corrections(table: &[u64], measured: u64) -> Vec<u64> {
    let mut words = vec![0u64; table.len().div_ceil(64)];
    for (a, &t) in table.iter().enumerate() {
        if (t & measured).count_ones() % 2 == 1 {
            words[a >> 6] |= 1 << (a & 63);
        }
    }
    words
}

#[derive(Debug, Clone, Copy)]
pub struct VentId(usize);

/// Per-section operation counters. The `charged_*` fields (half-units) are
/// the expectations charged per iteration; the plain fields count operations
/// actually performed on this trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub additions: u64,
    pub lookups: u64,
    pub phaseups: u64,
    pub charged_additions_x2: u64,
    pub charged_lookups_x2: u64,
    pub charged_phaseups_x2: u64,
}

/// Payload deferred from a compute subroutine to its uncompute partner.
#[derive(Debug, Default)]
pub struct UncomputeInfo {
    pub vents: Vec<VentId>,
    /// Whether each deferred single-qubit correction needs a sign flip on
    /// this trajectory (evaluated at erasure time).
    pub fixes: Vec<bool>,
}

struct Register {
    width: u32,
    value: u64,
}

/// One simulated trajectory plus allocator, counters, vents, and log.
pub struct SimState {
    regs: Vec<Option<Register>>,
    sign: i8,
    rng: ChaCha12Rng,
    forced: std::collections::VecDeque<u64>,
    live_qubits: u64,
    high_water: u64,
    counters: BTreeMap<&'static str, OpCounter>,
    section: &'static str,
    vents: Vec<Option<Vent>>,
    stack: Vec<UncomputeInfo>,
    measurements: Vec<(String, u64)>,
    trace: Option<Box<dyn FnMut(String) + Send>>,
}

impl SimState {
    pub fn new(seed: u64) -> Self {
        SimState {
            regs: Vec::new(),
            sign: 1,
            rng: rng::stream(seed, "qsim"),
            forced: Default::default(),
            live_qubits: 0,
            high_water: 0,
            counters: BTreeMap::new(),
            section: "main",
            vents: Vec::new(),
            stack: Vec::new(),
            measurements: Vec::new(),
            trace: None,
        }
    }

    pub fn set_trace(&mut self, f: Box<dyn FnMut(String) + Send>) {
        self.trace = Some(f);
    }

    fn emit(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = &mut self.trace {
            t(line());
        }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn high_water(&self) -> u64 {
        self.high_water
    }

    pub fn live_qubits(&self) -> u64 {
        self.live_qubits
    }

    pub fn measurements(&self) -> &[(String, u64)] {
        &self.measurements
    }

    /// Switch the section label new operations are counted under.
    pub fn section(&mut self, name: &'static str) {
        self.section = name;
    }

    pub fn counters(&self) -> &BTreeMap<&'static str, OpCounter> {
        &self.counters
    }

    fn ctr(&mut self) -> &mut OpCounter {
        self.counters.entry(self.section).or_default()
    }

    /// Charge the expected per-iteration costs (half-units) to the current
    /// section, independent of which branches this trajectory takes.
    pub fn charge(&mut self, additions_x2: u64, lookups_x2: u64, phaseups_x2: u64) {
        let c = self.ctr();
        c.charged_additions_x2 += additions_x2;
        c.charged_lookups_x2 += lookups_x2;
        c.charged_phaseups_x2 += phaseups_x2;
    }

    /// Queue a measurement outcome to be used by the next `mx_rz`.
    pub fn force_next_measurement(&mut self, bits: u64) {
        self.forced.push_back(bits);
    }

    /// Flip a fair coin from the trajectory's stream.
    pub fn coin(&mut self) -> bool {
        self.rng.next_u64() & 1 == 1
    }

    // -- allocation ---------------------------------------------------------

    fn alloc_with(&mut self, width: u32, value: u64) -> Result<QuintView, SimError> {
        if width > 64 {
            return Err(SimError::WidthTooLarge(width));
        }
        debug_assert!(width == 64 || value < (1u64 << width));
        let id = self.regs.len();
        self.regs.push(Some(Register { width, value }));
        self.live_qubits += width as u64;
        self.high_water = self.high_water.max(self.live_qubits);
        self.emit(|| format!("alloc r{id} width={width}"));
        Ok(QuintView { parts: vec![(id, 0, width)] })
    }

    /// Fresh zeroed register.
    pub fn alloc(&mut self, width: u32) -> Result<QuintView, SimError> {
        self.alloc_with(width, 0)
    }

    /// Fresh register sampled uniformly from `[0, 2^width)`.
    pub fn alloc_uniform(&mut self, width: u32) -> Result<QuintView, SimError> {
        let v = rng::bits(&mut self.rng, width.min(64));
        self.alloc_with(width, v)
    }

    /// Fresh register sampled uniformly from `[0, bound)`, width
    /// `ceil(log2 bound)`.
    pub fn alloc_uniform_range(&mut self, bound: u64) -> Result<QuintView, SimError> {
        assert!(bound >= 1);
        self.alloc_uniform_range_padded(bound, len_bits(bound))
    }

    /// Same, but in a register of explicit width (for accumulators wider
    /// than their initial mask value).
    pub fn alloc_uniform_range_padded(
        &mut self,
        bound: u64,
        width: u32,
    ) -> Result<QuintView, SimError> {
        assert!(bound >= 1);
        assert!(len_bits(bound) <= width);
        let v = rng::u64_below(&mut self.rng, bound);
        self.alloc_with(width, v)
    }

    /// Deallocate a register whose value must equal `k` exactly; a mismatch
    /// is an arithmetic bug in the caller, not a sampling effect.
    pub fn del_by_equal_to(&mut self, view: &QuintView, k: u64) -> Result<(), SimError> {
        assert_eq!(view.parts.len(), 1, "del needs a whole-register view");
        let (id, off, len) = view.parts[0];
        let reg = self.regs[id].as_ref().ok_or(SimError::DeadRegister(id))?;
        assert!(off == 0 && len == reg.width, "del needs a whole-register view");
        if reg.value != k {
            return Err(SimError::ValueMismatch { register: id, expected: k, got: reg.value });
        }
        self.live_qubits -= reg.width as u64;
        self.regs[id] = None;
        self.emit(|| format!("del r{id}"));
        Ok(())
    }

    /// Computational-basis measurement of a whole register; logs the value
    /// and frees the register. No phase effect.
    pub fn measure_and_free(&mut self, view: &QuintView, label: &str) -> Result<u64, SimError> {
        assert_eq!(view.parts.len(), 1, "measure needs a whole-register view");
        let (id, off, len) = view.parts[0];
        let reg = self.regs[id].as_ref().ok_or(SimError::DeadRegister(id))?;
        assert!(off == 0 && len == reg.width);
        let v = reg.value;
        self.live_qubits -= reg.width as u64;
        self.regs[id] = None;
        self.measurements.push((label.to_string(), v));
        self.emit(|| format!("measure r{id} -> {v}"));
        Ok(v)
    }

    // -- value access -------------------------------------------------------

    pub fn value_of(&self, view: &QuintView) -> u64 {
        let mut out = 0u64;
        let mut pos = 0u32;
        for &(reg, off, len) in &view.parts {
            let r = self.regs[reg].as_ref().expect("read of dead register");
            let mask = if len == 0 { 0 } else { u64::MAX >> (64 - len) };
            out |= ((r.value >> off) & mask) << pos;
            pos += len;
        }
        out
    }

    fn write_value(&mut self, view: &QuintView, v: u64) {
        let mut pos = 0u32;
        for &(reg, off, len) in &view.parts {
            let r = self.regs[reg].as_mut().expect("write to dead register");
            if len == 0 {
                continue;
            }
            let mask = u64::MAX >> (64 - len);
            r.value = (r.value & !(mask << off)) | (((v >> pos) & mask) << off);
            pos += len;
        }
    }

    // -- arithmetic ---------------------------------------------------------

    fn add_into(&mut self, view: &QuintView, delta: u64, subtract: bool) {
        let len = view.len();
        let mask = if len == 0 { 0 } else { u64::MAX >> (64 - len) };
        let cur = self.value_of(view);
        let next =
            if subtract { cur.wrapping_sub(delta) } else { cur.wrapping_add(delta) } & mask;
        self.write_value(view, next);
        self.ctr().additions += 1;
        self.emit(|| format!("{} width={len}", if subtract { "isub" } else { "iadd" }));
    }

    /// `view += k (mod 2^len)`.
    pub fn iadd_const(&mut self, view: &QuintView, k: u64) {
        self.add_into(view, k, false);
    }

    /// `view -= k (mod 2^len)`.
    pub fn isub_const(&mut self, view: &QuintView, k: u64) {
        self.add_into(view, k, true);
    }

    /// `target += source (mod 2^len(target))`; views must be disjoint.
    pub fn iadd_quint(&mut self, target: &QuintView, source: &QuintView) -> Result<(), SimError> {
        if target.overlaps(source) || target.self_overlapping() {
            return Err(SimError::OverlappingViews);
        }
        let s = self.value_of(source);
        self.add_into(target, s, false);
        Ok(())
    }

    pub fn isub_quint(&mut self, target: &QuintView, source: &QuintView) -> Result<(), SimError> {
        if target.overlaps(source) || target.self_overlapping() {
            return Err(SimError::OverlappingViews);
        }
        let s = self.value_of(source);
        self.add_into(target, s, true);
        Ok(())
    }

    /// GHZ-lookup value `[0, k][ctrl]`: implemented by splitting the single
    /// control qubit, so it is not tallied as a table lookup.
    pub fn ghz_lookup(&mut self, ctrl: &QuintView, k: u64) -> u64 {
        assert_eq!(ctrl.len(), 1, "ghz lookup takes a single-qubit control");
        if self.value_of(ctrl) == 1 {
            k
        } else {
            0
        }
    }

    /// `target += [0, k][ctrl]`: one addition, no lookup.
    pub fn iadd_ghz(
        &mut self,
        target: &QuintView,
        ctrl: &QuintView,
        k: u64,
    ) -> Result<(), SimError> {
        if target.overlaps(ctrl) {
            return Err(SimError::OverlappingViews);
        }
        let delta = self.ghz_lookup(ctrl, k);
        self.add_into(target, delta, false);
        Ok(())
    }

    pub fn isub_ghz(
        &mut self,
        target: &QuintView,
        ctrl: &QuintView,
        k: u64,
    ) -> Result<(), SimError> {
        if target.overlaps(ctrl) {
            return Err(SimError::OverlappingViews);
        }
        let delta = self.ghz_lookup(ctrl, k);
        self.add_into(target, delta, true);
        Ok(())
    }

    // -- phase --------------------------------------------------------------

    /// Phase flip where the predicate holds. Comparisons compile to adder
    /// circuits, so this counts as an addition.
    pub fn phase_flip_if(&mut self, cond: bool) {
        if cond {
            self.sign = -self.sign;
        }
        self.ctr().additions += 1;
        self.emit(|| format!("zcmp hit={cond}"));
    }

    /// Uncounted sign flip, for corrections whose cost is charged elsewhere.
    pub fn sign_flip_if(&mut self, cond: bool) {
        if cond {
            self.sign = -self.sign;
        }
    }

    // -- lookups ------------------------------------------------------------

    fn check_table(table: &[u64], addr: &QuintView) -> Result<(), SimError> {
        let expected = 1usize << addr.len();
        if table.len() != expected {
            return Err(SimError::TableSizeMismatch { expected, got: table.len() });
        }
        Ok(())
    }

    /// `out = table[addr]`; `out` must be zero.
    pub fn lookup(
        &mut self,
        table: &[u64],
        addr: &QuintView,
        out: &QuintView,
    ) -> Result<(), SimError> {
        Self::check_table(table, addr)?;
        if addr.overlaps(out) {
            return Err(SimError::OverlappingViews);
        }
        let cur = self.value_of(out);
        if cur != 0 {
            return Err(SimError::NonzeroLookupTarget { got: cur });
        }
        let a = self.value_of(addr);
        let v = table[a as usize];
        debug_assert!(out.len() == 64 || v < (1u64 << out.len()), "table value too wide");
        self.write_value(out, v);
        self.ctr().lookups += 1;
        self.emit(|| format!("lookup addr_width={} out_width={}", addr.len(), out.len()));
        Ok(())
    }

    /// Deterministic uncompute of a lookup output by XORing the table value
    /// back out; counted as a lookup. The output must return to zero.
    pub fn unlookup(
        &mut self,
        table: &[u64],
        addr: &QuintView,
        out: &QuintView,
    ) -> Result<(), SimError> {
        Self::check_table(table, addr)?;
        let a = self.value_of(addr);
        let v = self.value_of(out) ^ table[a as usize];
        self.write_value(out, v);
        self.ctr().lookups += 1;
        self.emit(|| format!("unlookup addr_width={}", addr.len()));
        if v != 0 {
            return Err(SimError::UnlookupMismatch { got: v });
        }
        Ok(())
    }

    /// Measurement-based erasure of a lookup output: X-basis measurement of
    /// `out` kicks the sign, and the deferred phase corrections (a subset of
    /// address values) are merged into `vent`. Not counted; the deferred
    /// resolution carries the cost. Returns whether this trajectory's sign
    /// was kicked, for corrections that will be rewritten past the address's
    /// lifetime before being resolved.
    pub fn erase_lookup_output(
        &mut self,
        table: &[u64],
        addr: &QuintView,
        out: &QuintView,
        vent: VentId,
    ) -> Result<bool, SimError> {
        Self::check_table(table, addr)?;
        let a = self.value_of(addr);
        let got = self.value_of(out);
        if got != table[a as usize] {
            return Err(SimError::ValueMismatch {
                register: out.parts[0].0,
                expected: table[a as usize],
                got,
            });
        }
        let before = self.sign;
        let measured = self.mx_rz(out);
        let corrections = lookup_erasure_corrections(table, measured);
        let v = self.vents[vent.0].as_mut().expect("vent already closed");
        assert_eq!(1usize << v.width(), table.len(), "vent width matches table");
        v.xor_in(&corrections);
        Ok(self.sign != before)
    }

    /// Tally accounting for the measurement-based uncompute of a windowed
    /// lookup, which the cost model prices as a lookup. The sign effects are
    /// handled by the accompanying erasure and phaseup; this records the
    /// operation's cost.
    pub fn count_uncompute_lookup(&mut self) {
        self.ctr().lookups += 1;
        self.emit(|| "uncompute-lookup".to_string());
    }

    /// Write a comparison result into a fresh bit; compiled as an adder, so
    /// counted as an addition.
    pub fn set_bit_by_comparison(&mut self, bit: &QuintView, cond: bool) -> Result<(), SimError> {
        assert_eq!(bit.len(), 1);
        let cur = self.value_of(bit);
        if cur != 0 {
            return Err(SimError::ValueMismatch { register: bit.parts[0].0, expected: 0, got: cur });
        }
        self.write_value(bit, cond as u64);
        self.ctr().additions += 1;
        self.emit(|| format!("cmp-into-bit {cond}"));
        Ok(())
    }

    /// X-basis measurement of every qubit in the view: uniformly random
    /// result bits (unless forced), sign kickback where both value and
    /// result bits are 1, view cleared to zero. Returns the packed bits.
    pub fn mx_rz(&mut self, view: &QuintView) -> u64 {
        let w = view.len();
        let bits = match self.forced.pop_front() {
            Some(b) => b,
            None => rng::bits(&mut self.rng, w),
        };
        let v = self.value_of(view);
        if (bits & v).count_ones() % 2 == 1 {
            self.sign = -self.sign;
        }
        self.write_value(view, 0);
        self.measurements.push(("mx_rz".to_string(), bits));
        self.emit(|| format!("mx_rz width={w} bits={bits:#x}"));
        bits
    }

    // -- vents and deferred info --------------------------------------------

    pub fn new_vent(&mut self, width: u32) -> VentId {
        self.vents.push(Some(Vent::new(width)));
        VentId(self.vents.len() - 1)
    }

    pub fn vent_xor(&mut self, vent: VentId, words: &[u64]) {
        self.vents[vent.0].as_mut().expect("vent already closed").xor_in(words);
    }

    pub fn vent_contains(&self, vent: VentId, value: u64) -> bool {
        self.vents[vent.0].as_ref().expect("vent already closed").contains(value)
    }

    /// Resolve a vent with a phaseup on the address view: flips the sign if
    /// the trajectory's address value is in the correction set, then closes
    /// the vent (a resolved vent is empty). Counted as one phaseup.
    ///
    /// `merged_fixes` carries corrections rewritten into this phaseup's
    /// table from other erasures; their sign debt settles here at no extra
    /// operation cost.
    pub fn phaseup(
        &mut self,
        addr: &QuintView,
        vent: VentId,
        merged_fixes: &[bool],
    ) -> Result<(), SimError> {
        let v = self.vents[vent.0].take().expect("vent already closed");
        assert_eq!(v.width(), addr.len(), "phaseup address width matches vent");
        let a = self.value_of(addr);
        let mut flip = v.contains(a);
        for &fix in merged_fixes {
            flip ^= fix;
        }
        if flip {
            self.sign = -self.sign;
        }
        self.ctr().phaseups += 1;
        self.emit(|| format!("phaseup addr_width={}", addr.len()));
        Ok(())
    }

    /// Resolve a vent whose correction table has since been rewritten by
    /// wandering corrections: the sign debts recorded at erasure time settle
    /// here. Counted as one phaseup; closes the vent.
    pub fn phaseup_deferred(&mut self, vent: VentId, recorded_flips: &[bool]) {
        let v = self.vents[vent.0].take().expect("vent already closed");
        let _ = v;
        let mut flip = false;
        for &b in recorded_flips {
            flip ^= b;
        }
        if flip {
            self.sign = -self.sign;
        }
        self.ctr().phaseups += 1;
        self.emit(|| "phaseup-deferred".to_string());
    }

    /// Test support: overwrite a freshly allocated register's sampled value.
    pub fn force_value(&mut self, view: &QuintView, v: u64) {
        debug_assert!(view.len() == 64 || v < (1u64 << view.len()));
        self.write_value(view, v);
    }

    pub fn push_uncompute_info(&mut self, info: UncomputeInfo) {
        self.stack.push(info);
    }

    pub fn pop_uncompute_info(&mut self) -> Result<UncomputeInfo, SimError> {
        self.stack.pop().ok_or(SimError::UnbalancedStack)
    }

    // -- finish -------------------------------------------------------------

    /// All registers freed, all vents resolved, stack empty, sign +1.
    pub fn verify_clean_finish(&self) -> Result<(), SimError> {
        let mut problems = Vec::new();
        let leaked: Vec<String> = self
            .regs
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| format!("r{i}({} bits)", r.width)))
            .collect();
        if !leaked.is_empty() {
            problems.push(format!("leaked registers: {}", leaked.join(", ")));
        }
        let open_vents: Vec<String> = self
            .vents
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.as_ref().map(|_| format!("v{i}")))
            .collect();
        if !open_vents.is_empty() {
            problems.push(format!("unresolved vents: {}", open_vents.join(", ")));
        }
        if !self.stack.is_empty() {
            problems.push(format!("uncompute stack depth {}", self.stack.len()));
        }
        if self.sign != 1 {
            problems.push("sign = -1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::DirtyFinish(problems.join("; ")))
        }
    }
}
