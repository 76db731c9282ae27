//! Simulator of a coherently driven, strongly coupled quantum-dot–cavity
//! system: quantum trajectory ensembles and master-equation evolution on a
//! truncated Fock ⊗ two-level space, photon-number statistics (P(n), g²(0),
//! C²(0)) under pulsed and CW drive, pure dephasing, and QD blinking.

pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod jaynes_cummings;
pub mod lindblad;
pub mod statistics;
pub mod sweep;
pub mod trajectories;
pub mod units;

pub use error::{Error, Result};
pub use hilbert::{DensityMatrix, HilbertDim, Operator, StateVector};
pub use jaynes_cummings::{ExperimentOptics, PulseParams, SystemParams};
pub use lindblad::{ChannelLabel, CollapseChannel, EvolutionResult};
pub use statistics::{BlinkingModel, PhotonStats, Regime};
pub use sweep::{AxisKind, SweepPoint, SweepResult};
pub use trajectories::{CountHistogram, JumpRecord};
