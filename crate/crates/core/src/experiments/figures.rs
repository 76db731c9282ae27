//! Experiment runners: orchestrate the sweeps behind each bundled experiment
//! kind and emit their outputs.
//!
//! Seed layout: with G grid points and N trajectories per point, sweep block
//! k (coupled scan, empty-cavity companion, extra drive amplitudes, …) uses
//! seeds seed0 + k·G·N + i·N + j for grid point i, trajectory j. The blocks
//! are disjoint, so re-running any sweep in isolation reproduces it exactly.

use std::path::PathBuf;

use plotters::style::colors::{BLACK, BLUE, CYAN, GREEN, MAGENTA, RED};
use plotters::style::RGBColor;

use crate::error::Result;
use crate::lindblad::{cw_transmission_spectrum, CollapseChannel};
use crate::statistics::{blinking_mix, mix_probabilities, BlinkingModel};
use crate::sweep::{AxisKind, SweepPoint, SweepResult};
use crate::trajectories::{
    sweep_histograms, sweep_result_from_histograms, CountHistogram, SweepAxis,
};
use crate::units;

use super::config::{ExperimentKind, ResolvedConfig};
use super::output::{sweep_paths, write_csv, write_metadata, write_svg, PlotSpec, Series};

const GREY: RGBColor = RGBColor(128, 128, 128);
const PALETTE: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub write_plots: bool,
    pub quiet: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { write_plots: true, quiet: false }
    }
}

/// Everything a run produced: the sweeps (labelled) and the files written.
#[derive(Debug)]
pub struct RunArtifacts {
    pub sweeps: Vec<SweepResult>,
    pub files: Vec<PathBuf>,
}

impl RunArtifacts {
    pub fn sweep(&self, label: &str) -> Option<&SweepResult> {
        self.sweeps.iter().find(|s| s.label == label)
    }

    pub fn warnings(&self) -> Vec<&str> {
        self.sweeps.iter().flat_map(|s| s.warnings.iter().map(String::as_str)).collect()
    }
}

fn log(opts: &RunOptions, msg: &str) {
    if !opts.quiet {
        eprintln!("{msg}");
    }
}

/// Run the experiment described by a resolved config and write its outputs.
pub fn run_experiment(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<RunArtifacts> {
    match cfg.kind {
        ExperimentKind::IdealDetuningScan => run_ideal_detuning_scan(cfg, opts),
        ExperimentKind::DeviceDetuningScan => run_device_detuning_scan(cfg, opts),
        ExperimentKind::DevicePowerScan => run_device_power_scan(cfg, opts),
    }
}

/// Seed base for sweep block k.
fn block_seed(cfg: &ResolvedConfig, k: u64) -> u64 {
    cfg.seed0 + k * cfg.grid.len() as u64 * cfg.n_traj
}

fn emit_sweep(
    cfg: &ResolvedConfig,
    sweep: &SweepResult,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let (csv_path, meta_path) = sweep_paths(&cfg.out_dir, &sweep.label);
    write_csv(sweep, &csv_path)?;
    write_metadata(sweep, &cfg.file, &meta_path)?;
    files.push(csv_path);
    files.push(meta_path);
    Ok(())
}

/// x-axis for detuning plots: Δ_c in units of g.
fn detuning_over_g(cfg: &ResolvedConfig, v: f64) -> f64 {
    v / cfg.params.g
}

fn g2_series(sweep: &SweepResult, cfg: &ResolvedConfig, label: &str, color: RGBColor, dashed: bool) -> Series {
    Series {
        label: label.into(),
        points: sweep
            .points
            .iter()
            .filter_map(|p| p.stats.g2.map(|g2| (detuning_over_g(cfg, p.axis_value), g2)))
            .collect(),
        color,
        dashed,
    }
}

fn c2_series(sweep: &SweepResult, cfg: &ResolvedConfig, label: &str, color: RGBColor) -> Series {
    Series {
        label: label.into(),
        points: sweep
            .points
            .iter()
            .map(|p| (detuning_over_g(cfg, p.axis_value), p.stats.c2))
            .collect(),
        color,
        dashed: false,
    }
}

fn write_plot(spec: &PlotSpec, path: PathBuf, files: &mut Vec<PathBuf>) -> Result<()> {
    write_svg(spec, &path)?;
    files.push(path);
    Ok(())
}

/// Pulsed photon statistics versus laser detuning at one or more drive
/// amplitudes (idealized device, no blinking).
pub fn run_ideal_detuning_scan(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<RunArtifacts> {
    let channels = CollapseChannel::standard(cfg.dim, &cfg.params)?;
    let axis = SweepAxis::LaserDetuning { qd_offset: cfg.qd_offset };
    let mut sweeps = Vec::new();
    let mut files = Vec::new();

    log(
        opts,
        &format!(
            "pulsed detuning scan: {} points x {} trajectories, E0/2pi = {:.3} GHz",
            cfg.grid.len(),
            cfg.n_traj,
            units::ang_to_ghz(cfg.pulse.e_peak)
        ),
    );
    let mut main = crate::trajectories::sweep_pn(
        cfg.dim,
        &cfg.params,
        &cfg.pulse,
        &channels,
        axis,
        &cfg.grid,
        cfg.n_traj,
        block_seed(cfg, 0),
    )?;
    main.label = "pulsed".into();
    emit_sweep(cfg, &main, &mut files)?;

    let mut drive_sweeps = Vec::new();
    for (k, &e_peak) in cfg.drive_scan.iter().enumerate() {
        let e_ghz = units::ang_to_ghz(e_peak);
        log(opts, &format!("repeat at E0/2pi = {e_ghz:.3} GHz"));
        let pulse = cfg.pulse.with_e_peak(e_peak)?;
        let mut sweep = crate::trajectories::sweep_pn(
            cfg.dim,
            &cfg.params,
            &pulse,
            &channels,
            axis,
            &cfg.grid,
            cfg.n_traj,
            block_seed(cfg, 1 + k as u64),
        )?;
        sweep.label = format!("pulsed_e{e_ghz}ghz");
        emit_sweep(cfg, &sweep, &mut files)?;
        drive_sweeps.push(sweep);
    }

    if opts.write_plots {
        // P(n) components of the main scan.
        let mut pn_series = Vec::new();
        for n in 1..=4 {
            pn_series.push(Series {
                label: format!("P({n})"),
                points: main
                    .points
                    .iter()
                    .map(|p| {
                        (detuning_over_g(cfg, p.axis_value), p.p_n.get(n).copied().unwrap_or(0.0))
                    })
                    .collect(),
                color: PALETTE[n - 1],
                dashed: false,
            });
        }
        write_plot(
            &PlotSpec {
                title: "Emitted Fock components vs laser detuning",
                x_label: "Δ_c/g",
                y_label: "P(n)",
                series: pn_series,
                ref_line: None,
                log_x: false,
            },
            cfg.out_dir.join("pn_vs_detuning.svg"),
            &mut files,
        )?;
        write_plot(
            &PlotSpec {
                title: "Second-order coherence vs laser detuning",
                x_label: "Δ_c/g",
                y_label: "g²(0)",
                series: vec![g2_series(&main, cfg, "pulsed", BLUE, false)],
                ref_line: Some(1.0),
                log_x: false,
            },
            cfg.out_dir.join("g2_vs_detuning.svg"),
            &mut files,
        )?;
        write_plot(
            &PlotSpec {
                title: "Differential correlation vs laser detuning",
                x_label: "Δ_c/g",
                y_label: "C²(0)",
                series: vec![c2_series(&main, cfg, "pulsed", BLUE)],
                ref_line: Some(0.0),
                log_x: false,
            },
            cfg.out_dir.join("c2_vs_detuning.svg"),
            &mut files,
        )?;
        if !drive_sweeps.is_empty() {
            let mut series = Vec::new();
            for (k, sweep) in drive_sweeps.iter().enumerate() {
                let e_ghz = units::ang_to_ghz(cfg.drive_scan[k]);
                series.push(c2_series(sweep, cfg, &format!("E0/2pi = {e_ghz} GHz"), PALETTE[k % PALETTE.len()]));
            }
            write_plot(
                &PlotSpec {
                    title: "Differential correlation vs detuning by drive",
                    x_label: "Δ_c/g",
                    y_label: "C²(0)",
                    series,
                    ref_line: Some(0.0),
                    log_x: false,
                },
                cfg.out_dir.join("c2_vs_detuning_drives.svg"),
                &mut files,
            )?;
        }
    }

    sweeps.push(main);
    sweeps.extend(drive_sweeps);
    Ok(RunArtifacts { sweeps, files })
}

/// Build the blinking-mixed sweep from coupled and empty-cavity histograms.
fn mixed_sweep(
    values: &[f64],
    hists_qd: &[CountHistogram],
    hists_empty: &[CountHistogram],
    model: &BlinkingModel,
    axis: AxisKind,
    seed0: u64,
    n_traj: u64,
) -> SweepResult {
    let points = values
        .iter()
        .zip(hists_qd.iter().zip(hists_empty.iter()))
        .map(|(&value, (hq, he))| {
            let stats = blinking_mix(hq, he, model);
            let p_n = mix_probabilities(hq, he, model.r);
            let p_n_err = {
                let (r, s) = (model.r, 1.0 - model.r);
                let len = hq.counts().len().max(he.counts().len());
                (0..len)
                    .map(|n| {
                        let eq = hq.p_err(n);
                        let ee = he.p_err(n);
                        (r * r * eq * eq + s * s * ee * ee).sqrt()
                    })
                    .collect()
            };
            SweepPoint { axis_value: value, stats, p_n, p_n_err, n_traj }
        })
        .collect();
    SweepResult {
        label: String::new(),
        axis,
        points,
        seed0,
        n_traj_per_point: n_traj,
        warnings: Vec::new(),
    }
}

/// CW transmission doublet plus pulsed g²/C² versus detuning with and without
/// QD blinking (measured device parameters).
pub fn run_device_detuning_scan(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<RunArtifacts> {
    let model = cfg.blinking.expect("validated at resolve");
    let channels = CollapseChannel::standard(cfg.dim, &cfg.params)?;
    let axis = SweepAxis::LaserDetuning { qd_offset: cfg.qd_offset };
    let mut sweeps = Vec::new();
    let mut files = Vec::new();

    if let Some(cw) = &cfg.cw {
        log(opts, &format!("cw transmission spectrum: {} points", cw.grid.len()));
        let mut spectrum =
            cw_transmission_spectrum(cw.dim, &cfg.params, cw.drive, &cw.grid, cfg.qd_offset)?;
        spectrum.label = "cw_transmission".into();
        emit_sweep(cfg, &spectrum, &mut files)?;
        if opts.write_plots {
            let series = Series {
                label: "steady-state <a†a>".into(),
                points: spectrum
                    .points
                    .iter()
                    .map(|p| (detuning_over_g(cfg, p.axis_value), p.stats.n_c))
                    .collect(),
                color: BLUE,
                dashed: false,
            };
            write_plot(
                &PlotSpec {
                    title: "CW transmission spectrum",
                    x_label: "Δ_c/g",
                    y_label: "<a†a>_ss",
                    series: vec![series],
                    ref_line: None,
                    log_x: false,
                },
                cfg.out_dir.join("transmission.svg"),
                &mut files,
            )?;
        }
        sweeps.push(spectrum);
    }

    log(
        opts,
        &format!(
            "pulsed detuning scan (coupled + empty): {} points x {} trajectories",
            cfg.grid.len(),
            cfg.n_traj
        ),
    );
    let hists_qd = sweep_histograms(
        cfg.dim,
        &cfg.params,
        &cfg.pulse,
        &channels,
        axis,
        &cfg.grid,
        cfg.n_traj,
        block_seed(cfg, 0),
    )?;
    let empty_params = cfg.params.decoupled();
    let empty_channels = CollapseChannel::standard(cfg.dim, &empty_params)?;
    let hists_empty = sweep_histograms(
        cfg.dim,
        &empty_params,
        &cfg.pulse,
        &empty_channels,
        axis,
        &cfg.grid,
        cfg.n_traj,
        block_seed(cfg, 1),
    )?;

    let mut unmixed = sweep_result_from_histograms(
        AxisKind::DeltaC,
        &cfg.grid,
        &hists_qd,
        block_seed(cfg, 0),
        cfg.n_traj,
    );
    unmixed.label = "pulsed_unmixed".into();
    emit_sweep(cfg, &unmixed, &mut files)?;

    let mut empty = sweep_result_from_histograms(
        AxisKind::DeltaC,
        &cfg.grid,
        &hists_empty,
        block_seed(cfg, 1),
        cfg.n_traj,
    );
    empty.label = "pulsed_empty".into();
    emit_sweep(cfg, &empty, &mut files)?;

    let mut mixed = mixed_sweep(
        &cfg.grid,
        &hists_qd,
        &hists_empty,
        &model,
        AxisKind::DeltaC,
        cfg.seed0,
        cfg.n_traj,
    );
    mixed.label = "pulsed_mixed".into();
    emit_sweep(cfg, &mixed, &mut files)?;

    if opts.write_plots {
        write_plot(
            &PlotSpec {
                title: "Second-order coherence vs laser detuning",
                x_label: "Δ_c/g",
                y_label: "g²(0)",
                series: vec![
                    g2_series(&unmixed, cfg, "no blinking", GREY, true),
                    g2_series(&mixed, cfg, &format!("blinking r = {}", model.r), BLACK, false),
                ],
                ref_line: Some(1.0),
                log_x: false,
            },
            cfg.out_dir.join("g2_vs_detuning.svg"),
            &mut files,
        )?;
        write_plot(
            &PlotSpec {
                title: "Differential correlation vs laser detuning",
                x_label: "Δ_c/g",
                y_label: "C²(0)",
                series: vec![c2_series(&mixed, cfg, "with blinking", RED)],
                ref_line: Some(0.0),
                log_x: false,
            },
            cfg.out_dir.join("c2_vs_detuning.svg"),
            &mut files,
        )?;
        // Peak-normalized variant of the same curve.
        let peak = mixed
            .points
            .iter()
            .map(|p| p.stats.c2.abs())
            .fold(0.0_f64, f64::max)
            .max(1e-300);
        let series = Series {
            label: "C²(0) / max|C²|".into(),
            points: mixed
                .points
                .iter()
                .map(|p| (detuning_over_g(cfg, p.axis_value), p.stats.c2 / peak))
                .collect(),
            color: RED,
            dashed: false,
        };
        write_plot(
            &PlotSpec {
                title: "Differential correlation vs laser detuning (peak-normalized)",
                x_label: "Δ_c/g",
                y_label: "C²(0), normalized",
                series: vec![series],
                ref_line: Some(0.0),
                log_x: false,
            },
            cfg.out_dir.join("c2_vs_detuning_normalized.svg"),
            &mut files,
        )?;
    }

    sweeps.push(unmixed);
    sweeps.push(empty);
    sweeps.push(mixed);
    Ok(RunArtifacts { sweeps, files })
}

/// g²(0) at fixed detuning versus average drive power, with and without
/// blinking. Powers convert to peak drive amplitudes through the optics.
pub fn run_device_power_scan(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<RunArtifacts> {
    let model = cfg.blinking.expect("validated at resolve");
    let optics = cfg.optics.as_ref().expect("validated at resolve");
    let params = cfg.params.at_laser_detuning(cfg.fixed_delta_c, cfg.qd_offset);
    let channels = CollapseChannel::standard(cfg.dim, &params)?;
    let mut files = Vec::new();

    // Per-point drive amplitudes from the power axis.
    let e_values: Vec<f64> = cfg
        .grid
        .iter()
        .map(|&p_avg| {
            crate::jaynes_cummings::peak_drive_from_avg_power(&optics.with_p_avg(p_avg), &cfg.pulse)
        })
        .collect();

    log(
        opts,
        &format!(
            "power scan at Delta_c = {:.3} GHz: {} powers x {} trajectories (coupled + empty)",
            units::ang_to_ghz(cfg.fixed_delta_c),
            cfg.grid.len(),
            cfg.n_traj
        ),
    );
    let hists_qd = sweep_histograms(
        cfg.dim,
        &params,
        &cfg.pulse,
        &channels,
        SweepAxis::DriveAmplitude,
        &e_values,
        cfg.n_traj,
        block_seed(cfg, 0),
    )?;
    let empty_params = params.decoupled();
    let empty_channels = CollapseChannel::standard(cfg.dim, &empty_params)?;
    let hists_empty = sweep_histograms(
        cfg.dim,
        &empty_params,
        &cfg.pulse,
        &empty_channels,
        SweepAxis::DriveAmplitude,
        &e_values,
        cfg.n_traj,
        block_seed(cfg, 1),
    )?;

    let mut unmixed = sweep_result_from_histograms(
        AxisKind::PAvg,
        &cfg.grid,
        &hists_qd,
        block_seed(cfg, 0),
        cfg.n_traj,
    );
    unmixed.label = "power_unmixed".into();
    emit_sweep(cfg, &unmixed, &mut files)?;

    let mut empty = sweep_result_from_histograms(
        AxisKind::PAvg,
        &cfg.grid,
        &hists_empty,
        block_seed(cfg, 1),
        cfg.n_traj,
    );
    empty.label = "power_empty".into();
    emit_sweep(cfg, &empty, &mut files)?;

    let mut mixed = mixed_sweep(
        &cfg.grid,
        &hists_qd,
        &hists_empty,
        &model,
        AxisKind::PAvg,
        cfg.seed0,
        cfg.n_traj,
    );
    mixed.label = "power_mixed".into();
    emit_sweep(cfg, &mixed, &mut files)?;

    if opts.write_plots {
        let to_nw = |s: &SweepResult| -> Vec<(f64, f64)> {
            s.points
                .iter()
                .filter_map(|p| p.stats.g2.map(|g2| (units::watt_to_nw(p.axis_value), g2)))
                .collect()
        };
        write_plot(
            &PlotSpec {
                title: "Second-order coherence vs drive power",
                x_label: "P_avg (nW)",
                y_label: "g²(0)",
                series: vec![
                    Series { label: "no blinking".into(), points: to_nw(&unmixed), color: GREY, dashed: true },
                    Series {
                        label: format!("blinking r = {}", model.r),
                        points: to_nw(&mixed),
                        color: BLACK,
                        dashed: false,
                    },
                ],
                ref_line: Some(1.0),
                log_x: true,
            },
            cfg.out_dir.join("g2_vs_power.svg"),
            &mut files,
        )?;
    }

    Ok(RunArtifacts { sweeps: vec![unmixed, empty, mixed], files })
}
