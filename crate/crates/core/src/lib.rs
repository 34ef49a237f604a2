//! Solver and simulator for the hidden shift problem over `Z_{2^n}`.
//!
//! Given injective `f, g : Z_{2^n} -> {0,1}^m` with `f(x) = g(x + a)`, the
//! crate recovers the hidden shift `a` with the Kuperberg sieve, either from
//! a single oracle or from `2^t` nodes each holding a subfunction of `n - t`
//! input bits. Two backends produce the phase labels the sieve consumes: an
//! exact dense statevector simulation of the full circuits, and an analytic
//! shortcut that samples labels directly from their known distribution.
//! Everything is checked against classical brute force in [`verify`].

pub mod distributed;
pub mod error;
pub mod instances;
pub mod rng;
pub mod sieve;
pub mod statevector;
pub mod verify;

pub use distributed::{CommLedger, ComparatorSchedule, NodeTopology, ResourceReport};
pub use error::Error;
pub use instances::{Decomposition, HiddenShiftInstance, SortedStringTable};
pub use sieve::{Mode, PhaseLabel, SievePool, SieveStats, SolveReport};
pub use statevector::{Backend, MeasurementRecord, RegisterLayout, StateVector};
pub use verify::StatReport;

/// Default ceiling on total qubits for the circuit backend.
pub const DEFAULT_QUBIT_CAP: usize = 26;
