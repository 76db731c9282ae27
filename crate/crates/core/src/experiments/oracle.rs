//! Cross-validation of the trajectory ensemble against the master equation:
//! ⟨a†a⟩(t) at checkpoint times must agree within 3 standard errors, and the
//! mean counted cavity jumps must match ∫2κ⟨a†a⟩dt.

use crate::error::Result;
use crate::hilbert::DensityMatrix;
use crate::jaynes_cummings::pulse_envelope;
use crate::lindblad::{evolve, CollapseChannel};
use crate::trajectories::observe_ensemble;
use crate::units;
use crate::StateVector;

use super::config::ResolvedConfig;

pub const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct OraclePoint {
    /// Laser detuning of this cross-check, rad/ns.
    pub delta_c: f64,
    pub checkpoints: Vec<f64>,
    pub traj_mean: Vec<f64>,
    pub traj_sem: Vec<f64>,
    pub me_mean: Vec<f64>,
    /// |traj − me| / sem per checkpoint.
    pub z_scores: Vec<f64>,
    pub mean_jumps: f64,
    pub me_emission: f64,
    pub jump_z: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub points: Vec<OraclePoint>,
    pub n_traj: u64,
    pub passed: bool,
}

impl OracleReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&format!(
                "detuning {:+.3} GHz: max |z| = {:.2} over {} checkpoints; \
                 jumps {:.4} vs ME emission {:.4} (z = {:.2}) ... {}\n",
                units::ang_to_ghz(p.delta_c),
                p.z_scores.iter().fold(0.0_f64, |a, &b| a.max(b)),
                p.z_scores.len(),
                p.mean_jumps,
                p.me_emission,
                p.jump_z,
                if p.passed { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "oracle-check: {} ({} trajectories per point, limit {} standard errors)\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.n_traj,
            Z_LIMIT
        ));
        out
    }
}

fn z_score(diff: f64, sem: f64, scale: f64) -> f64 {
    if sem > 0.0 {
        diff.abs() / sem
    } else if diff.abs() <= 1e-12 * (1.0 + scale.abs()) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Run the trajectory-vs-master-equation cross-validation at one laser
/// detuning of the config's parameter set.
pub fn oracle_check_point(
    cfg: &ResolvedConfig,
    delta_c: f64,
    n_traj: u64,
    n_checkpoints: usize,
) -> Result<OraclePoint> {
    let params = cfg.params.at_laser_detuning(delta_c, cfg.qd_offset);
    let channels = CollapseChannel::standard(cfg.dim, &params)?;
    let pulse = &cfg.pulse;

    // Interior checkpoints, uniform over the window.
    let span = pulse.t_end - pulse.t_start;
    let checkpoints: Vec<f64> = (1..=n_checkpoints)
        .map(|k| pulse.t_start + span * k as f64 / (n_checkpoints + 1) as f64)
        .collect();

    let obs = observe_ensemble(cfg.dim, &params, pulse, &channels, n_traj, cfg.seed0, &checkpoints)?;

    // Master-equation reference on a dense grid that contains the checkpoints
    // exactly (for the emission integral and the checkpoint values).
    let mut grid: Vec<f64> = (0..=800).map(|k| pulse.t_start + span * k as f64 / 800.0).collect();
    grid.extend_from_slice(&checkpoints);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let rho0 = DensityMatrix::from_pure(&StateVector::ground(cfg.dim));
    let me = evolve(&rho0, &params, |t| pulse_envelope(t, pulse), &channels, &grid)?;

    let me_mean: Vec<f64> = checkpoints
        .iter()
        .map(|&tc| {
            let idx = me
                .times
                .iter()
                .position(|&t| (t - tc).abs() < 1e-9)
                .expect("checkpoint embedded in ME grid");
            me.observables.photon_number[idx]
        })
        .collect();

    let z_scores: Vec<f64> = obs
        .photon_number_mean
        .iter()
        .zip(obs.photon_number_sem.iter())
        .zip(me_mean.iter())
        .map(|((&m, &s), &r)| z_score(m - r, s, r))
        .collect();

    let me_emission = me.integrated_cavity_emission(params.kappa);
    let jump_z = z_score(obs.mean_cavity_jumps - me_emission, obs.sem_cavity_jumps, me_emission);

    let passed = z_scores.iter().all(|&z| z <= Z_LIMIT) && jump_z <= Z_LIMIT;
    Ok(OraclePoint {
        delta_c,
        checkpoints,
        traj_mean: obs.photon_number_mean,
        traj_sem: obs.photon_number_sem,
        me_mean,
        z_scores,
        mean_jumps: obs.mean_cavity_jumps,
        me_emission,
        jump_z,
        passed,
    })
}

/// Cross-validate at every detuning in the config's `[oracle]` section (or at
/// the sweep's extremes and center when none is given).
pub fn oracle_check(cfg: &ResolvedConfig) -> Result<OracleReport> {
    let (detunings, n_traj, n_cp) = match &cfg.oracle {
        Some(o) => (o.detunings.clone(), o.n_traj, o.checkpoints),
        None => {
            let mut d = vec![cfg.grid[0], cfg.grid[cfg.grid.len() / 2], cfg.grid[cfg.grid.len() - 1]];
            d.dedup();
            (d, 2000, 5)
        }
    };
    let mut points = Vec::with_capacity(detunings.len());
    for &delta in &detunings {
        points.push(oracle_check_point(cfg, delta, n_traj, n_cp)?);
    }
    let passed = points.iter().all(|p| p.passed);
    Ok(OracleReport { points, n_traj, passed })
}
