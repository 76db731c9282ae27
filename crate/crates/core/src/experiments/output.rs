//! Result emission: CSV tables (fixed column order), JSON metadata sidecars
//! sufficient to re-run a sweep bit-identically, and static SVG line plots.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sweep::{AxisKind, SweepResult};
use crate::units;

use super::config::FileConfig;

/// Number of P(n) columns in the CSV (p0..p8).
pub const CSV_PN_COLUMNS: usize = 9;

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

fn fmt(v: f64) -> String {
    fmt_opt(Some(v))
}

/// Axis value converted from internal to file units.
fn axis_to_file_units(axis: AxisKind, v: f64) -> f64 {
    match axis {
        AxisKind::DeltaC | AxisKind::EPeak => units::ang_to_ghz(v),
        AxisKind::PAvg => units::watt_to_nw(v),
    }
}

/// Write one sweep as CSV with the fixed column order:
/// axis_value, n_c, n_c_err, g2, g2_err, c2, c2_err, p0, p0_err, …, p8,
/// p8_err, n_traj. Detunings and drive amplitudes are in GHz, powers in nW.
pub fn write_csv(result: &SweepResult, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut header = vec![
        "axis_value".to_string(),
        "n_c".into(),
        "n_c_err".into(),
        "g2".into(),
        "g2_err".into(),
        "c2".into(),
        "c2_err".into(),
    ];
    for n in 0..CSV_PN_COLUMNS {
        header.push(format!("p{n}"));
        header.push(format!("p{n}_err"));
    }
    header.push("n_traj".into());
    w.write_record(&header).map_err(|e| Error::Config(e.to_string()))?;

    for point in &result.points {
        let mut row = vec![
            fmt(axis_to_file_units(result.axis, point.axis_value)),
            fmt(point.stats.n_c),
            fmt(point.stats.n_c_err),
            fmt_opt(point.stats.g2),
            fmt_opt(point.stats.g2_err),
            fmt(point.stats.c2),
            fmt(point.stats.c2_err),
        ];
        for n in 0..CSV_PN_COLUMNS {
            match point.p_n.get(n) {
                Some(&p) => {
                    row.push(fmt(p));
                    row.push(fmt(point.p_n_err.get(n).copied().unwrap_or(0.0)));
                }
                None if point.p_n.is_empty() => {
                    // CW rows carry no count distribution.
                    row.push(String::new());
                    row.push(String::new());
                }
                None => {
                    row.push(fmt(0.0));
                    row.push(fmt(0.0));
                }
            }
        }
        row.push(format!("{}", point.n_traj));
        w.write_record(&row).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    code_version: &'static str,
    label: &'a str,
    axis: AxisKind,
    axis_unit: &'static str,
    /// Base seed; grid point i, trajectory j ran with seed0 + i·n_traj + j.
    seed0: u64,
    n_traj_per_point: u64,
    total_trajectories: u64,
    warnings: &'a [String],
    config: &'a FileConfig,
    points: &'a [crate::sweep::SweepPoint],
}

/// Write the JSON metadata sidecar for a sweep. Together with the embedded
/// config this is sufficient to reproduce the CSV bit-identically.
pub fn write_metadata(result: &SweepResult, config: &FileConfig, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let sidecar = Sidecar {
        code_version: env!("CARGO_PKG_VERSION"),
        label: &result.label,
        axis: result.axis,
        axis_unit: result.axis.file_unit(),
        seed0: result.seed0,
        n_traj_per_point: result.n_traj_per_point,
        total_trajectories: result.total_trajectories(),
        warnings: &result.warnings,
        config,
        points: &result.points,
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// One plotted line.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: RGBColor,
    pub dashed: bool,
}

pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series>,
    /// Horizontal reference line (drawn dashed red), e.g. the coherent-state
    /// level g² = 1.
    pub ref_line: Option<f64>,
    pub log_x: bool,
}

/// Emit a static SVG line plot.
pub fn write_svg(spec: &PlotSpec, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let finite = |v: f64| v.is_finite();
    let xs: Vec<f64> = spec
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .filter(|v| finite(*v))
        .collect();
    let mut ys: Vec<f64> = spec
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|v| finite(*v))
        .collect();
    if let Some(r) = spec.ref_line {
        ys.push(r);
    }
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidParameter(format!("nothing to plot for {}", spec.title)));
    }
    let (x_min, x_max) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let (y_min, y_max) = ys.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let y_pad = 0.05 * (y_max - y_min).max(1e-12);
    let x_pad = if spec.log_x { 0.0 } else { 0.02 * (x_max - x_min).max(1e-12) };

    let root = SVGBackend::new(path, (900, 620)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| Error::Config(e.to_string()))?;

    macro_rules! draw {
        ($range:expr) => {{
            let mut chart = ChartBuilder::on(&root)
                .caption(spec.title, ("sans-serif", 26))
                .margin(18)
                .x_label_area_size(46)
                .y_label_area_size(64)
                .build_cartesian_2d($range, (y_min - y_pad)..(y_max + y_pad))
                .map_err(|e| Error::Config(e.to_string()))?;
            chart
                .configure_mesh()
                .x_desc(spec.x_label)
                .y_desc(spec.y_label)
                .label_style(("sans-serif", 16))
                .draw()
                .map_err(|e| Error::Config(e.to_string()))?;
            if let Some(r) = spec.ref_line {
                chart
                    .draw_series(DashedLineSeries::new(
                        [(x_min - x_pad, r), (x_max + x_pad, r)],
                        6,
                        4,
                        RED.stroke_width(1),
                    ))
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            for s in &spec.series {
                let pts: Vec<(f64, f64)> =
                    s.points.iter().copied().filter(|p| finite(p.0) && finite(p.1)).collect();
                let style = s.color.stroke_width(2);
                if s.dashed {
                    chart
                        .draw_series(DashedLineSeries::new(pts.clone(), 8, 5, style))
                        .map_err(|e| Error::Config(e.to_string()))?
                        .label(s.label.clone())
                        .legend({
                            let c = s.color;
                            move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2))
                        });
                } else {
                    chart
                        .draw_series(LineSeries::new(pts.clone(), style))
                        .map_err(|e| Error::Config(e.to_string()))?
                        .label(s.label.clone())
                        .legend({
                            let c = s.color;
                            move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2))
                        });
                }
            }
            if spec.series.iter().any(|s| !s.label.is_empty()) {
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.85))
                    .border_style(BLACK)
                    .label_font(("sans-serif", 15))
                    .draw()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }};
    }

    if spec.log_x {
        draw!(((x_min.max(1e-12))..(x_max.max(2e-12))).log_scale());
    } else {
        draw!((x_min - x_pad)..(x_max + x_pad));
    }
    root.present().map_err(|e| Error::Config(e.to_string()))?;
    Ok(())
}

/// File paths produced for one sweep label inside an output directory.
pub fn sweep_paths(dir: &Path, label: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{label}.csv")), dir.join(format!("{label}.meta.json")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::PhotonStats;
    use crate::sweep::SweepPoint;

    fn tiny_sweep() -> SweepResult {
        let mk = |axis_value: f64| SweepPoint {
            axis_value,
            stats: PhotonStats {
                n_c: 0.5,
                n_c_err: 0.01,
                g2: Some(0.9),
                g2_err: Some(0.02),
                c2: -0.025,
                c2_err: 0.006,
                m1: 0.5,
                m2: 0.225,
                m1_err: 0.01,
                m2_err: 0.01,
            },
            p_n: vec![0.6, 0.3, 0.1],
            p_n_err: vec![0.01, 0.01, 0.005],
            n_traj: 1000,
        };
        SweepResult {
            label: "test".into(),
            axis: AxisKind::DeltaC,
            points: vec![mk(units::ghz_to_ang(-10.0)), mk(0.0), mk(units::ghz_to_ang(10.0))],
            seed0: 5,
            n_traj_per_point: 1000,
            warnings: vec![],
        }
    }

    #[test]
    fn csv_shape_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let sweep = tiny_sweep();
        let path = dir.path().join("s.csv");
        write_csv(&sweep, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // Header + one row per grid point.
        assert_eq!(lines.len(), 1 + sweep.points.len());
        assert_eq!(lines[0].split(',').count(), 7 + 2 * CSV_PN_COLUMNS + 1);
        assert!(lines[1].starts_with("-10,"));
        // Re-writing produces identical bytes.
        let path2 = dir.path().join("s2.csv");
        write_csv(&sweep, &path2).unwrap();
        assert_eq!(text, std::fs::read_to_string(&path2).unwrap());
    }

    #[test]
    fn svg_is_well_formed_xml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        let spec = PlotSpec {
            title: "g2 vs detuning",
            x_label: "Δ_c/g",
            y_label: "g²(0)",
            series: vec![Series {
                label: "pulsed".into(),
                points: vec![(-1.0, 1.4), (0.0, 2.0), (1.0, 0.6)],
                color: BLUE,
                dashed: false,
            }],
            ref_line: Some(1.0),
            log_x: false,
        };
        write_svg(&spec, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // Minimal well-formedness: one root <svg> element, balanced tags.
        assert!(text.trim_start().starts_with("<?xml") || text.trim_start().starts_with("<svg"));
        let opens = text.matches("<svg").count();
        let closes = text.matches("</svg>").count();
        assert_eq!(opens, closes);
        assert!(text.contains("Δ_c/g"));
    }
}
