//! Experiment configuration files: TOML schema, validation, and the single
//! point where file units (GHz, ps, MHz, nW) become internal units (rad/ns,
//! ns, W). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::HilbertDim;
use crate::jaynes_cummings::{ExperimentOptics, PulseParams, SystemParams};
use crate::statistics::BlinkingModel;
use crate::sweep::AxisKind;
use crate::units;

/// What a config file runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Pulsed P(n)/g²/C² versus laser detuning for an idealized device, with
    /// optional repeats at several drive amplitudes.
    IdealDetuningScan,
    /// CW transmission spectrum plus pulsed g²/C² versus laser detuning for
    /// measured device parameters, with and without blinking.
    DeviceDetuningScan,
    /// g²(0) at fixed detuning versus average drive power, with and without
    /// blinking.
    DevicePowerScan,
}

/// Either an explicit grid or an inclusive linear space.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Linspace(Linspace),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Linspace(l) => {
                if l.count == 0 {
                    return Err(Error::Config("linspace count must be >= 1".into()));
                }
                if l.count == 1 {
                    vec![l.start]
                } else {
                    let step = (l.stop - l.start) / (l.count - 1) as f64;
                    (0..l.count).map(|k| l.start + k as f64 * step).collect()
                }
            }
        };
        if v.is_empty() {
            return Err(Error::Config("grid must be non-empty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("grid values must be finite".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub g_ghz: f64,
    pub kappa_ghz: f64,
    /// QD spontaneous emission rate; defaults to 0.16 GHz (InAs QD scale).
    #[serde(default = "default_gamma_ghz")]
    pub gamma_ghz: f64,
    #[serde(default)]
    pub gamma_d_ghz: f64,
    /// ω_a − ω_c, fixed while the laser sweeps.
    #[serde(default)]
    pub qd_cavity_offset_ghz: f64,
    /// Absolute frequency anchor for power conversions.
    #[serde(default = "default_wavelength_nm")]
    pub wavelength_nm: f64,
}

fn default_gamma_ghz() -> f64 {
    0.16
}

fn default_wavelength_nm() -> f64 {
    927.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub tau_p_ps: f64,
    /// Peak drive E₀/2π in GHz. Omit to derive it from `[optics]` power.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_peak_ghz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: AxisKindFile,
    /// Grid in GHz for delta_c / e_peak axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_ghz: Option<GridSpec>,
    /// Grid in nW for the p_avg axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_nw: Option<GridSpec>,
    /// Fixed laser detuning for the p_avg axis, GHz.
    #[serde(default)]
    pub delta_c_ghz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKindFile {
    DeltaC,
    EPeak,
    PAvg,
}

impl From<AxisKindFile> for AxisKind {
    fn from(a: AxisKindFile) -> AxisKind {
        match a {
            AxisKindFile::DeltaC => AxisKind::DeltaC,
            AxisKindFile::EPeak => AxisKind::EPeak,
            AxisKindFile::PAvg => AxisKind::PAvg,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_traj: u64,
    pub n_max: usize,
    pub seed0: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsSection {
    pub eta: f64,
    pub q_factor: f64,
    pub f_rep_mhz: f64,
    pub p_avg_nw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlinkingSection {
    pub active_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveScanSection {
    pub e_peak_ghz: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwSection {
    pub drive_ghz: f64,
    pub grid_ghz: GridSpec,
    pub n_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Laser detunings to cross-validate at, GHz.
    pub delta_c_ghz: Vec<f64>,
    pub n_traj: u64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
}

fn default_checkpoints() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub dir: PathBuf,
}

/// The on-disk config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub system: SystemSection,
    pub pulse: PulseSection,
    pub sweep: SweepSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optics: Option<OpticsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blinking: Option<BlinkingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_scan: Option<DriveScanSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cw: Option<CwSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputsSection>,
}

impl FileConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        ResolvedConfig::from_file(self)
    }
}

/// Resolved CW spectrum settings (internal units).
#[derive(Debug, Clone)]
pub struct CwSettings {
    pub drive: f64,
    pub grid: Vec<f64>,
    pub dim: HilbertDim,
}

/// Resolved oracle cross-validation settings (internal units).
#[derive(Debug, Clone)]
pub struct OracleSettings {
    pub detunings: Vec<f64>,
    pub n_traj: u64,
    pub checkpoints: usize,
}

/// A validated config in internal units. Detunings in `params` are zero; the
/// sweep sets them per grid point via `qd_offset`.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub params: SystemParams,
    pub qd_offset: f64,
    pub pulse: PulseParams,
    pub axis: AxisKind,
    /// Grid in internal units (rad/ns, or W for power).
    pub grid: Vec<f64>,
    /// Fixed laser detuning for power scans, rad/ns.
    pub fixed_delta_c: f64,
    pub dim: HilbertDim,
    pub n_traj: u64,
    pub seed0: u64,
    pub optics: Option<ExperimentOptics>,
    pub blinking: Option<BlinkingModel>,
    /// Extra drive amplitudes for repeated detuning scans, rad/ns.
    pub drive_scan: Vec<f64>,
    pub cw: Option<CwSettings>,
    pub oracle: Option<OracleSettings>,
    pub out_dir: PathBuf,
    /// The file form this was resolved from (for metadata and re-runs).
    pub file: FileConfig,
}

impl ResolvedConfig {
    pub fn from_file(file: &FileConfig) -> Result<Self> {
        let sys = &file.system;
        let omega_c = units::wavelength_nm_to_ang(sys.wavelength_nm);
        let params = SystemParams::new(
            units::ghz_to_ang(sys.g_ghz),
            units::ghz_to_ang(sys.kappa_ghz),
            units::ghz_to_ang(sys.gamma_ghz),
            units::ghz_to_ang(sys.gamma_d_ghz),
            0.0,
            0.0,
            omega_c,
        )?;
        let qd_offset = units::ghz_to_ang(sys.qd_cavity_offset_ghz);
        let dim = HilbertDim::new(file.run.n_max)?;
        if file.run.n_traj == 0 {
            return Err(Error::Config("run.n_traj must be >= 1".into()));
        }

        let optics = file
            .optics
            .as_ref()
            .map(|o| {
                ExperimentOptics::new(
                    o.eta,
                    o.q_factor,
                    units::mhz_to_per_ns(o.f_rep_mhz),
                    units::nw_to_watt(o.p_avg_nw),
                )
            })
            .transpose()?;

        let tau_p = units::ps_to_ns(file.pulse.tau_p_ps);
        let e_peak = match (file.pulse.e_peak_ghz, &optics) {
            (Some(e), _) => units::ghz_to_ang(e),
            (None, Some(o)) => {
                // Window extent only depends on tau_p and kappa; build a
                // placeholder pulse to evaluate the power formula.
                let probe = PulseParams::with_ring_down(0.0, tau_p, params.kappa)?;
                crate::jaynes_cummings::peak_drive_from_avg_power(o, &probe)
            }
            (None, None) => {
                return Err(Error::Config(
                    "pulse.e_peak_ghz missing and no [optics] section to derive it from".into(),
                ))
            }
        };
        let pulse = PulseParams::with_ring_down(e_peak, tau_p, params.kappa)?;

        let axis: AxisKind = file.sweep.axis.into();
        let grid = match axis {
            AxisKind::DeltaC | AxisKind::EPeak => {
                let spec = file.sweep.grid_ghz.as_ref().ok_or_else(|| {
                    Error::Config("sweep.grid_ghz required for delta_c / e_peak axes".into())
                })?;
                spec.values()?.into_iter().map(units::ghz_to_ang).collect::<Vec<_>>()
            }
            AxisKind::PAvg => {
                let spec = file.sweep.grid_nw.as_ref().ok_or_else(|| {
                    Error::Config("sweep.grid_nw required for the p_avg axis".into())
                })?;
                if optics.is_none() {
                    return Err(Error::Config("[optics] required for the p_avg axis".into()));
                }
                let v = spec.values()?;
                if v.iter().any(|&p| p < 0.0) {
                    return Err(Error::Config("powers must be >= 0".into()));
                }
                v.into_iter().map(units::nw_to_watt).collect()
            }
        };

        let blinking = file
            .blinking
            .as_ref()
            .map(|b| BlinkingModel::new(b.active_fraction))
            .transpose()?;

        let drive_scan = file
            .drive_scan
            .as_ref()
            .map(|d| d.e_peak_ghz.iter().copied().map(units::ghz_to_ang).collect::<Vec<_>>())
            .unwrap_or_default();

        let cw = file
            .cw
            .as_ref()
            .map(|c| -> Result<CwSettings> {
                Ok(CwSettings {
                    drive: units::ghz_to_ang(c.drive_ghz),
                    grid: c.grid_ghz.values()?.into_iter().map(units::ghz_to_ang).collect(),
                    dim: HilbertDim::new(c.n_max)?,
                })
            })
            .transpose()?;

        let oracle = file
            .oracle
            .as_ref()
            .map(|o| -> Result<OracleSettings> {
                if o.n_traj == 0 || o.checkpoints == 0 {
                    return Err(Error::Config("oracle n_traj and checkpoints must be >= 1".into()));
                }
                Ok(OracleSettings {
                    detunings: o.delta_c_ghz.iter().copied().map(units::ghz_to_ang).collect(),
                    n_traj: o.n_traj,
                    checkpoints: o.checkpoints,
                })
            })
            .transpose()?;

        // Per-kind requirements.
        match file.kind {
            ExperimentKind::IdealDetuningScan => {
                if axis != AxisKind::DeltaC {
                    return Err(Error::Config("ideal-detuning-scan sweeps delta_c".into()));
                }
                if blinking.is_some() {
                    return Err(Error::Config(
                        "ideal-detuning-scan models no blinking; drop the [blinking] section".into(),
                    ));
                }
            }
            ExperimentKind::DeviceDetuningScan => {
                if axis != AxisKind::DeltaC {
                    return Err(Error::Config("device-detuning-scan sweeps delta_c".into()));
                }
                if blinking.is_none() {
                    return Err(Error::Config("device-detuning-scan needs [blinking]".into()));
                }
            }
            ExperimentKind::DevicePowerScan => {
                if axis != AxisKind::PAvg {
                    return Err(Error::Config("device-power-scan sweeps p_avg".into()));
                }
                if blinking.is_none() {
                    return Err(Error::Config("device-power-scan needs [blinking]".into()));
                }
            }
        }

        let out_dir = file
            .outputs
            .as_ref()
            .map(|o| o.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(&file.name));

        Ok(ResolvedConfig {
            kind: file.kind,
            name: file.name.clone(),
            params,
            qd_offset,
            pulse,
            axis,
            grid,
            fixed_delta_c: units::ghz_to_ang(file.sweep.delta_c_ghz),
            dim,
            n_traj: file.run.n_traj,
            seed0: file.run.seed0,
            optics,
            blinking,
            drive_scan,
            cw,
            oracle,
            out_dir,
            file: file.clone(),
        })
    }

    /// Reconstruct the file form from the internal units (used to verify the
    /// conversions are inverses).
    pub fn to_file_config(&self) -> FileConfig {
        let mut file = self.file.clone();
        file.system.g_ghz = units::ang_to_ghz(self.params.g);
        file.system.kappa_ghz = units::ang_to_ghz(self.params.kappa);
        file.system.gamma_ghz = units::ang_to_ghz(self.params.gamma);
        file.system.gamma_d_ghz = units::ang_to_ghz(self.params.gamma_d);
        file.system.qd_cavity_offset_ghz = units::ang_to_ghz(self.qd_offset);
        file.pulse.tau_p_ps = units::ns_to_ps(self.pulse.tau_p);
        if file.pulse.e_peak_ghz.is_some() {
            file.pulse.e_peak_ghz = Some(units::ang_to_ghz(self.pulse.e_peak));
        }
        file.sweep.grid_ghz = match self.axis {
            AxisKind::DeltaC | AxisKind::EPeak => Some(GridSpec::List(
                self.grid.iter().copied().map(units::ang_to_ghz).collect(),
            )),
            AxisKind::PAvg => file.sweep.grid_ghz,
        };
        if self.axis == AxisKind::PAvg {
            file.sweep.grid_nw =
                Some(GridSpec::List(self.grid.iter().copied().map(units::watt_to_nw).collect()));
        }
        file.sweep.delta_c_ghz = units::ang_to_ghz(self.fixed_delta_c);
        if let (Some(o), Some(sec)) = (&self.optics, file.optics.as_mut()) {
            sec.eta = o.eta;
            sec.q_factor = o.q_factor;
            sec.f_rep_mhz = units::per_ns_to_mhz(o.f_rep);
            sec.p_avg_nw = units::watt_to_nw(o.p_avg);
        }
        file
    }
}
