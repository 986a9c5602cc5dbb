//! Joint 3D (uplink user, downlink user, subchannel) assignment and transmit
//! power allocation for a full-duplex base station serving an OFDMA cell.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the scenario, rate equations and the system objective.
//! * [`hungarian`] is a maximum-reward 2D assignment solver.
//! * [`mapping3d`] builds the iterative-Hungarian 3D mapping heuristic and the
//!   exhaustive, random and greedy baselines on top of it.
//! * [`powalloc`] solves the per-triple power subproblem at a fixed dual point.
//! * [`dualopt`] runs the Lagrange dual / subgradient loop with primal recovery.
//! * [`scenario`] generates reproducible instances and the equal-power baseline.
//! * [`experiment`] drives the sweep experiments used by the CLI.

pub mod dualopt;
pub mod error;
pub mod experiment;
pub mod hungarian;
pub mod mapping3d;
pub mod model;
pub mod powalloc;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{Assignment3D, EquivalentGains, PowerAllocation, Scenario, Triple};
