//! # qfe
//!
//! Desk-scale tooling for factoring circuits built on residue-number-system
//! arithmetic with truncated accumulators and superposition masking.
//!
//! The crate has three layers:
//!
//! 1. **Classical precomputation** ([`residue`]): residue systems with a
//!    certified small modular deviation, CRT contribution tables, and
//!    per-prime discrete-log tables.
//! 2. **Trajectory simulation** ([`qsim`], [`modexp`]): a classical
//!    value-and-phase simulator for reversible integer registers, and the
//!    windowed approximate modular exponentiation that runs on it. Shots are
//!    checked against a pure big-integer oracle and against the symbolic
//!    operation tallies.
//! 3. **Cost models** ([`costs`], [`physical`], [`periodfind`], [`kernels`]):
//!    logical tallies, Toffoli/qubit estimates, parameter scans with Pareto
//!    selection, surface-code timing and footprint conversion, masked
//!    period-finding numerics, and standalone verification of the circuit
//!    identities used by the arithmetic.

pub mod costs;
pub mod kernels;
pub mod modexp;
pub mod numutil;
pub mod periodfind;
pub mod physical;
pub mod qsim;
pub mod residue;
pub mod rng;

/// The RSA-2048 challenge modulus, used by reproduction runs.
pub const RSA2048_DECIMAL: &str = "2519590847565789349402718324004839857142928212620403202777713783604366202070\
7595556264018525880784406918290641249515082189298559149176184502808489120072\
8449926873928072877767359714183472702618963750149718246911650776133798590957\
0009733045974880842840179742910064245869181719511874612151517265463228221686\
9987549182422433637259085141865462043576798423387184774447920739934236584823\
8242811981638150106748104516603773060562016196762561338441436038339044149526\
3443219011465754445417842402092461651572335077870774981712577246796292638635\
6373289912154831438167899885040445364023527381951378636564391212010397122822\
120720357";
