//! Tabulated observables versus a swept parameter — the common result shape
//! for pulsed Monte-Carlo sweeps and CW transmission spectra.

use serde::Serialize;

use crate::statistics::PhotonStats;

/// What the sweep axis physically is. Values inside a [`SweepResult`] are in
/// internal units (rad/ns for detunings and drive amplitudes, W for power);
/// the output layer converts to file units (GHz, nW).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    DeltaC,
    EPeak,
    PAvg,
}

impl AxisKind {
    pub fn file_unit(&self) -> &'static str {
        match self {
            AxisKind::DeltaC | AxisKind::EPeak => "GHz",
            AxisKind::PAvg => "nW",
        }
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    /// Axis value in internal units.
    pub axis_value: f64,
    pub stats: PhotonStats,
    /// Emitted-photon count distribution (empty for CW rows).
    pub p_n: Vec<f64>,
    pub p_n_err: Vec<f64>,
    pub n_traj: u64,
}

/// A full sweep: one row per grid point, plus the seed bookkeeping needed to
/// re-run it bit-identically.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub label: String,
    pub axis: AxisKind,
    pub points: Vec<SweepPoint>,
    /// Base seed; trajectory j of grid point i uses seed0 + i·n_traj + j.
    pub seed0: u64,
    pub n_traj_per_point: u64,
    /// Precondition warnings raised while running (e.g. a CW drive too strong
    /// for the weak-drive assumption).
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn axis_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.axis_value).collect()
    }

    pub fn total_trajectories(&self) -> u64 {
        self.points.iter().map(|p| p.n_traj).sum()
    }
}
