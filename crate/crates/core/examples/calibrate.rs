use jcpulse::jaynes_cummings::{PulseParams, SystemParams};
use jcpulse::lindblad::CollapseChannel;
use jcpulse::statistics::stats_from_pn;
use jcpulse::trajectories::estimate_pn;
use jcpulse::units;
use jcpulse::HilbertDim;
use std::time::Instant;

fn main() {
    let g = units::ghz_to_ang(40.0);
    for (label, delta_over_g, e_ghz, n_max, n_traj) in [
        ("fig2 d=1.1g E=9", 1.1, 9.0, 12usize, 2000u64),
        ("fig2 d=0.0g E=9", 0.0, 9.0, 12, 2000),
        ("fig2 d=0.7g E=3", 0.7, 3.0, 12, 2000),
    ] {
        let params = SystemParams::new(
            g,
            units::ghz_to_ang(4.0),
            units::ghz_to_ang(0.16),
            0.0,
            delta_over_g * g,
            delta_over_g * g,
            units::wavelength_nm_to_ang(927.0),
        )
        .unwrap();
        let dim = HilbertDim::new(n_max).unwrap();
        let pulse = PulseParams::with_ring_down(
            units::ghz_to_ang(e_ghz),
            units::ps_to_ns(24.4),
            params.kappa,
        )
        .unwrap();
        let channels = CollapseChannel::standard(dim, &params).unwrap();
        let t0 = Instant::now();
        let hist = estimate_pn(dim, &params, &pulse, &channels, n_traj, 1).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let stats = stats_from_pn(&hist);
        println!(
            "{label}: {:.2} ms/traj total {:.1}s | n_c={:.4}±{:.4} g2={:?} c2={:.5}±{:.5} p={:?}",
            dt * 1e3 / n_traj as f64,
            dt,
            stats.n_c,
            stats.n_c_err,
            stats.g2.map(|v| format!("{v:.3}±{:.3}", stats.g2_err.unwrap())),
            stats.c2,
            stats.c2_err,
            hist.probabilities().iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
}
