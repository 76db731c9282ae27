//! Driven Jaynes-Cummings model in the frame rotating at the laser frequency:
//! Hamiltonian assembly, dressed ladder, pulse envelopes, and the conversions
//! between optical power and drive amplitude.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{HilbertDim, Operator, StateVector};
use crate::units;

/// Physical rates and detunings, all in rad/ns (angular frequencies).
///
/// `delta_a = ω_a − ω_l` and `delta_c = ω_c − ω_l` are the detunings of the QD
/// and cavity from the laser. `omega_c` is the absolute cavity frequency; it
/// only enters the power-to-drive conversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub gamma_d: f64,
    pub delta_a: f64,
    pub delta_c: f64,
    pub omega_c: f64,
}

impl SystemParams {
    pub fn new(
        g: f64,
        kappa: f64,
        gamma: f64,
        gamma_d: f64,
        delta_a: f64,
        delta_c: f64,
        omega_c: f64,
    ) -> Result<Self> {
        for (name, v) in [("g", g), ("kappa", kappa), ("gamma", gamma), ("gamma_d", gamma_d)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !delta_a.is_finite() || !delta_c.is_finite() || !omega_c.is_finite() || omega_c < 0.0 {
            return Err(Error::InvalidParameter("detunings/omega_c must be finite (omega_c >= 0)".into()));
        }
        Ok(SystemParams { g, kappa, gamma, gamma_d, delta_a, delta_c, omega_c })
    }

    /// Strong coupling predicate g > κ/2 and g > γ. A query, not enforced.
    pub fn strong_coupling(&self) -> bool {
        self.g > self.kappa / 2.0 && self.g > self.gamma
    }

    /// Copy with both detunings replaced; `qd_offset = ω_a − ω_c` keeps the QD
    /// locked to the cavity as the laser is swept.
    pub fn at_laser_detuning(&self, delta_c: f64, qd_offset: f64) -> Self {
        SystemParams { delta_c, delta_a: delta_c + qd_offset, ..*self }
    }

    /// Copy with the QD decoupled (g = 0); used for the empty-cavity branch of
    /// the blinking mixture.
    pub fn decoupled(&self) -> Self {
        SystemParams { g: 0.0, ..*self }
    }

    /// Relative mismatch between an independently quoted Q and ω_c/2κ, if both
    /// are available. Callers surface this as a warning, never an error.
    pub fn q_factor_mismatch(&self, q: f64) -> Option<f64> {
        if self.kappa > 0.0 && self.omega_c > 0.0 && q > 0.0 {
            let q_from_kappa = self.omega_c / (2.0 * self.kappa);
            Some((q - q_from_kappa).abs() / q_from_kappa)
        } else {
            None
        }
    }
}

/// Gaussian pulse: E(t) = E₀·exp(−t²/2τ_p²), centered at t = 0, plus the
/// simulation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    /// Peak drive amplitude E₀, rad/ns.
    pub e_peak: f64,
    /// Pulse width τ_p, ns.
    pub tau_p: f64,
    /// Window start, ns.
    pub t_start: f64,
    /// Window end, ns.
    pub t_end: f64,
}

impl PulseParams {
    pub fn new(e_peak: f64, tau_p: f64, t_start: f64, t_end: f64) -> Result<Self> {
        if !(tau_p > 0.0) {
            return Err(Error::InvalidParameter(format!("tau_p must be > 0, got {tau_p}")));
        }
        if !(e_peak >= 0.0) {
            return Err(Error::InvalidParameter(format!("e_peak must be >= 0, got {e_peak}")));
        }
        let span = 5.0 * tau_p;
        let tol = 1e-9 * tau_p;
        if t_start > -span + tol || t_end < span - tol {
            return Err(Error::InvalidParameter(format!(
                "window [{t_start}, {t_end}] must span at least ±5·tau_p = ±{span}"
            )));
        }
        Ok(PulseParams { e_peak, tau_p, t_start, t_end })
    }

    /// Window (−5τ_p, 5τ_p + 10/(2κ)): the pulse plus a cavity ring-down tail
    /// so that photons still stored at the end of the pulse are counted.
    pub fn with_ring_down(e_peak: f64, tau_p: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
        }
        Self::new(e_peak, tau_p, -5.0 * tau_p, 5.0 * tau_p + 10.0 / (2.0 * kappa))
    }

    pub fn with_e_peak(&self, e_peak: f64) -> Result<Self> {
        Self::new(e_peak, self.tau_p, self.t_start, self.t_end)
    }

    /// FWHM of the amplitude envelope, 2√(2 ln 2)·τ_p.
    pub fn amplitude_fwhm(&self) -> f64 {
        2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * self.tau_p
    }

    /// FWHM of the intensity envelope E², 2√(ln 2)·τ_p.
    pub fn intensity_fwhm(&self) -> f64 {
        2.0 * std::f64::consts::LN_2.sqrt() * self.tau_p
    }
}

/// Incident optics for converting average pulse-train power to drive amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptics {
    /// Incident coupling efficiency into the cavity.
    pub eta: f64,
    /// Quality factor of the resonator (independent input; see
    /// [`SystemParams::q_factor_mismatch`]).
    pub q_factor: f64,
    /// Pulse repetition rate, 1/ns.
    pub f_rep: f64,
    /// Average optical power, W.
    pub p_avg: f64,
}

impl ExperimentOptics {
    pub fn new(eta: f64, q_factor: f64, f_rep: f64, p_avg: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("eta must be in (0, 1], got {eta}")));
        }
        if !(q_factor > 0.0) {
            return Err(Error::InvalidParameter(format!("q_factor must be > 0, got {q_factor}")));
        }
        if !(f_rep > 0.0) {
            return Err(Error::InvalidParameter(format!("f_rep must be > 0, got {f_rep}")));
        }
        if !(p_avg >= 0.0) {
            return Err(Error::InvalidParameter(format!("p_avg must be >= 0, got {p_avg}")));
        }
        Ok(ExperimentOptics { eta, q_factor, f_rep, p_avg })
    }

    pub fn with_p_avg(&self, p_avg: f64) -> Self {
        ExperimentOptics { p_avg, ..*self }
    }
}

/// Rotating-frame Hamiltonian
/// H = Δ_a σ₊σ₋ + Δ_c a†a + g(a†σ₋ + aσ₊) + E(a + a†), in rad/ns.
///
/// The drive couples only to the cavity mode.
pub fn hamiltonian(dim: HilbertDim, params: &SystemParams, drive: f64) -> Operator {
    let qd = &Operator::excited_projector(dim) * params.delta_a;
    let cavity = &Operator::number(dim) * params.delta_c;
    let a = Operator::annihilation(dim);
    let adag = Operator::creation(dim);
    let jc = &(&(&adag * &Operator::qubit_lowering(dim)) + &(&a * &Operator::qubit_raising(dim)))
        * params.g;
    let pump = &(&a + &adag) * drive;
    &(&(&qd + &cavity) + &jc) + &pump
}

/// Dressed-ladder energies of manifold `n` in the rotating frame:
/// (n·Δ_c + g√n, n·Δ_c − g√n). Returns (0, 0) for n = 0.
pub fn dressed_energies(n: usize, params: &SystemParams) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let split = params.g * (n as f64).sqrt();
    let base = n as f64 * params.delta_c;
    (base + split, base - split)
}

/// Dressed states |n,±⟩ = (|g,n⟩ ± |e,n−1⟩)/√2 for 1 ≤ n ≤ n_max.
pub fn dressed_states(n: usize, dim: HilbertDim) -> Result<(StateVector, StateVector)> {
    if n == 0 || n > dim.n_max() {
        return Err(Error::InvalidParameter(format!(
            "manifold index {n} outside 1..={}",
            dim.n_max()
        )));
    }
    let inv_sqrt2 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut plus = vec![C64::new(0.0, 0.0); dim.size()];
    let mut minus = plus.clone();
    plus[dim.index(n, false)] = inv_sqrt2;
    plus[dim.index(n - 1, true)] = inv_sqrt2;
    minus[dim.index(n, false)] = inv_sqrt2;
    minus[dim.index(n - 1, true)] = -inv_sqrt2;
    Ok((
        StateVector::from_amplitudes(dim, plus)?,
        StateVector::from_amplitudes(dim, minus)?,
    ))
}

/// Gaussian envelope E(t) = E₀·exp(−t²/2τ_p²), rad/ns.
pub fn pulse_envelope(t: f64, pulse: &PulseParams) -> f64 {
    pulse.e_peak * (-t * t / (2.0 * pulse.tau_p * pulse.tau_p)).exp()
}

/// CW drive amplitude from incident power: E = √(κP/2ħω_c), rad/ns.
///
/// `p` is the power actually coupled into the cavity, in W.
pub fn drive_from_cw_power(p: f64, params: &SystemParams) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::InvalidParameter(format!("power must be >= 0, got {p}")));
    }
    if !(params.omega_c > 0.0) {
        return Err(Error::InvalidParameter(
            "omega_c must be > 0 for power conversion".into(),
        ));
    }
    let kappa_si = units::ang_per_ns_to_per_s(params.kappa);
    let omega_si = units::ang_per_ns_to_per_s(params.omega_c);
    let e_si = (kappa_si * p / (2.0 * units::HBAR * omega_si)).sqrt();
    Ok(e_si * 1e-9)
}

/// Peak drive amplitude of a Gaussian pulse train from the average power
/// before the objective: E₀ = √(ηP_avg / (4√π·Q·τ_p·f_rep·ħ)), rad/ns.
pub fn peak_drive_from_avg_power(optics: &ExperimentOptics, pulse: &PulseParams) -> f64 {
    let tau_si = pulse.tau_p * 1e-9;
    let f_rep_si = optics.f_rep * 1e9;
    let denom = 4.0 * std::f64::consts::PI.sqrt() * optics.q_factor * tau_si * f_rep_si * units::HBAR;
    let e_si = (optics.eta * optics.p_avg / denom).sqrt();
    e_si * 1e-9
}
