//! Photon statistics from per-pulse count distributions: g²(0), C²(0), mean
//! photon number, and the QD-blinking statistical mixture.
//!
//! Definitions (per-pulse counting):
//!   m1 = Σ n·P(n),  m2 = Σ n(n−1)·P(n),
//!   g²(0) = m2/m1²,  C²(0) = m2 − m1²,  n_c = m1,
//! so C² = (g² − 1)·n_c² holds by construction.
//!
//! Uncertainties use the first-order delta method with the multinomial
//! covariance of the estimated probabilities, Cov(p_m, p_n) = (δ_mn·p_n −
//! p_m·p_n)/N:
//!   Var(m1) = (Σn²p_n − m1²)/N,
//!   Var(m2) = (Σ[n(n−1)]²p_n − m2²)/N,
//!   Cov(m1, m2) = (Σn·n(n−1)·p_n − m1·m2)/N,
//! then δg² and δC² follow from the gradients of m2/m1² and m2 − m1². For the
//! blinking mixture the two branches are independent, so their (co)variances
//! combine with weights r² and (1−r)².

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trajectories::CountHistogram;

/// Moments of a count distribution together with their sampling covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountMoments {
    pub m1: f64,
    pub m2: f64,
    pub var_m1: f64,
    pub var_m2: f64,
    pub cov_m1_m2: f64,
}

impl CountMoments {
    /// Moments of an exactly known distribution (no sampling uncertainty).
    pub fn exact(p_n: &[f64]) -> Self {
        Self::with_samples(p_n, None)
    }

    /// Moments of a distribution estimated from `n_traj` samples.
    pub fn estimated(p_n: &[f64], n_traj: u64) -> Self {
        Self::with_samples(p_n, Some(n_traj))
    }

    fn with_samples(p_n: &[f64], n_traj: Option<u64>) -> Self {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut s11 = 0.0; // Σ n² p
        let mut s22 = 0.0; // Σ [n(n−1)]² p
        let mut s12 = 0.0; // Σ n·n(n−1) p
        for (n, &p) in p_n.iter().enumerate() {
            let n = n as f64;
            let w2 = n * (n - 1.0);
            m1 += n * p;
            m2 += w2 * p;
            s11 += n * n * p;
            s22 += w2 * w2 * p;
            s12 += n * w2 * p;
        }
        match n_traj {
            Some(n) if n > 0 => {
                let inv_n = 1.0 / n as f64;
                CountMoments {
                    m1,
                    m2,
                    var_m1: (s11 - m1 * m1) * inv_n,
                    var_m2: (s22 - m2 * m2) * inv_n,
                    cov_m1_m2: (s12 - m1 * m2) * inv_n,
                }
            }
            _ => CountMoments { m1, m2, var_m1: 0.0, var_m2: 0.0, cov_m1_m2: 0.0 },
        }
    }

    /// Affine mixture r·a + (1−r)·b of two independent estimates.
    pub fn mix(a: &CountMoments, b: &CountMoments, r: f64) -> Self {
        let s = 1.0 - r;
        CountMoments {
            m1: r * a.m1 + s * b.m1,
            m2: r * a.m2 + s * b.m2,
            var_m1: r * r * a.var_m1 + s * s * b.var_m1,
            var_m2: r * r * a.var_m2 + s * s * b.var_m2,
            cov_m1_m2: r * r * a.cov_m1_m2 + s * s * b.cov_m1_m2,
        }
    }
}

/// Derived photon statistics. `g2` is absent when m1 = 0 (undefined ratio).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhotonStats {
    pub n_c: f64,
    pub n_c_err: f64,
    pub g2: Option<f64>,
    pub g2_err: Option<f64>,
    pub c2: f64,
    pub c2_err: f64,
    pub m1: f64,
    pub m2: f64,
    pub m1_err: f64,
    pub m2_err: f64,
}

impl PhotonStats {
    pub fn from_moments(m: &CountMoments) -> Self {
        let (g2, g2_err) = if m.m1 > 0.0 {
            let g2 = m.m2 / (m.m1 * m.m1);
            // ∂g/∂m2 = 1/m1², ∂g/∂m1 = −2m2/m1³
            let d2 = 1.0 / (m.m1 * m.m1);
            let d1 = -2.0 * m.m2 / (m.m1 * m.m1 * m.m1);
            let var = d2 * d2 * m.var_m2 + d1 * d1 * m.var_m1 + 2.0 * d1 * d2 * m.cov_m1_m2;
            (Some(g2), Some(var.max(0.0).sqrt()))
        } else {
            (None, None)
        };
        let c2 = m.m2 - m.m1 * m.m1;
        // ∂c/∂m2 = 1, ∂c/∂m1 = −2m1
        let c2_var = m.var_m2 + 4.0 * m.m1 * m.m1 * m.var_m1 - 4.0 * m.m1 * m.cov_m1_m2;
        PhotonStats {
            n_c: m.m1,
            n_c_err: m.var_m1.max(0.0).sqrt(),
            g2,
            g2_err,
            c2,
            c2_err: c2_var.max(0.0).sqrt(),
            m1: m.m1,
            m2: m.m2,
            m1_err: m.var_m1.max(0.0).sqrt(),
            m2_err: m.var_m2.max(0.0).sqrt(),
        }
    }

    /// Row carrying only a mean photon number (used by CW transmission sweeps,
    /// where no count distribution exists).
    pub fn mean_only(n_c: f64) -> Self {
        PhotonStats {
            n_c,
            n_c_err: 0.0,
            g2: None,
            g2_err: None,
            c2: f64::NAN,
            c2_err: f64::NAN,
            m1: n_c,
            m2: f64::NAN,
            m1_err: 0.0,
            m2_err: f64::NAN,
        }
    }

    pub fn regime(&self) -> Option<Regime> {
        self.g2.map(|g2| classify_regime_with(g2, 2.0 * self.g2_err.unwrap_or(0.0)))
    }
}

/// Transmission regime read off g²(0): below 1 is blockade, above 1 is
/// tunneling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Blockade,
    Tunneling,
    CoherentLike,
}

/// Classify with an explicit dead band ε around g² = 1.
pub fn classify_regime_with(g2: f64, epsilon: f64) -> Regime {
    if g2 < 1.0 - epsilon {
        Regime::Blockade
    } else if g2 > 1.0 + epsilon {
        Regime::Tunneling
    } else {
        Regime::CoherentLike
    }
}

/// Classify a stats record using ε = 2σ of its propagated g² error.
/// Requires g² to be defined.
pub fn classify_regime(stats: &PhotonStats) -> Result<Regime> {
    stats
        .regime()
        .ok_or_else(|| Error::InvalidParameter("g2 undefined (m1 = 0); regime not classifiable".into()))
}

/// Statistics of a sampled count histogram.
pub fn stats_from_pn(hist: &CountHistogram) -> PhotonStats {
    PhotonStats::from_moments(&CountMoments::estimated(&hist.probabilities(), hist.n_traj()))
}

/// Statistics of an exactly known distribution (Σp = 1, no sampling error).
pub fn stats_from_probabilities(p_n: &[f64]) -> PhotonStats {
    PhotonStats::from_moments(&CountMoments::exact(p_n))
}

/// QD active fraction for the blinking mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlinkingModel {
    pub r: f64,
}

impl BlinkingModel {
    pub fn new(r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("active fraction must be in [0, 1], got {r}")));
        }
        Ok(BlinkingModel { r })
    }
}

/// Blinking statistics: the measured distribution is the per-pulse mixture
/// P_mix(n) = r·P_qd(n) + (1−r)·P_empty(n) of the coupled system and the
/// empty cavity (g = 0) under identical drive. Mixing at the P(n) level and at
/// the moment level coincide because the moments are linear in P(n); blinking
/// is slow compared to the pulse period, so per-pulse mixing applies.
pub fn blinking_mix(
    hist_qd: &CountHistogram,
    hist_empty: &CountHistogram,
    model: &BlinkingModel,
) -> PhotonStats {
    let mq = CountMoments::estimated(&hist_qd.probabilities(), hist_qd.n_traj());
    let me = CountMoments::estimated(&hist_empty.probabilities(), hist_empty.n_traj());
    PhotonStats::from_moments(&CountMoments::mix(&mq, &me, model.r))
}

/// Mixture distribution itself, r·P_qd + (1−r)·P_empty.
pub fn mix_probabilities(hist_qd: &CountHistogram, hist_empty: &CountHistogram, r: f64) -> Vec<f64> {
    let pq = hist_qd.probabilities();
    let pe = hist_empty.probabilities();
    let len = pq.len().max(pe.len());
    (0..len)
        .map(|n| r * pq.get(n).copied().unwrap_or(0.0) + (1.0 - r) * pe.get(n).copied().unwrap_or(0.0))
        .collect()
}

/// Binomial thinning of a sampled histogram: every counted photon survives
/// independently with probability `eta_d`. Normalized g² is invariant under
/// thinning, which is what lets simulated cavity-output statistics be compared
/// against lossy detection.
pub fn binomial_thin(hist: &CountHistogram, eta_d: f64, seed: u64) -> Result<CountHistogram> {
    use rand::Rng;
    use rand::SeedableRng;
    if !(0.0..=1.0).contains(&eta_d) {
        return Err(Error::InvalidParameter(format!("eta_d must be in [0, 1], got {eta_d}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<u64> = Vec::new();
    for (n, &c) in hist.counts().iter().enumerate() {
        for _ in 0..c {
            let mut kept = 0usize;
            for _ in 0..n {
                if rng.gen::<f64>() < eta_d {
                    kept += 1;
                }
            }
            if kept >= counts.len() {
                counts.resize(kept + 1, 0);
            }
            counts[kept] += 1;
        }
    }
    Ok(CountHistogram::from_counts(counts))
}

/// Pearson χ² outcome.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Chi2Outcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi2_p_value(statistic: f64, dof: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if dof == 0 {
        return 1.0;
    }
    let chi = ChiSquared::new(dof as f64).expect("dof > 0");
    1.0 - chi.cdf(statistic)
}

/// Contiguous bin groups (end-exclusive) such that every group's expected
/// count reaches `min_expected`; a deficient tail folds into the last group.
fn group_bins(expected: &[f64], min_expected: f64) -> Vec<(usize, usize)> {
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (k, &e) in expected.iter().enumerate() {
        acc += e;
        if acc >= min_expected {
            groups.push((start, k + 1));
            start = k + 1;
            acc = 0.0;
        }
    }
    if start < expected.len() {
        if let Some(last) = groups.last_mut() {
            last.1 = expected.len();
        } else {
            groups.push((start, expected.len()));
        }
    }
    groups
}

fn group_sum(values: &[f64], groups: &[(usize, usize)]) -> Vec<f64> {
    groups.iter().map(|&(a, b)| values[a..b].iter().sum()).collect()
}

/// Goodness-of-fit χ² of observed counts against a reference distribution
/// (not fitted from the sample), with bins pooled so every group's expected
/// count is at least `min_expected`.
pub fn chi2_gof(hist: &CountHistogram, reference: &[f64], min_expected: f64) -> Result<Chi2Outcome> {
    let n = hist.n_traj() as f64;
    if n == 0.0 {
        return Err(Error::InvalidParameter("empty histogram".into()));
    }
    let len = hist.counts().len().max(reference.len());
    let observed: Vec<f64> = (0..len).map(|k| hist.counts().get(k).copied().unwrap_or(0) as f64).collect();
    let expected: Vec<f64> = (0..len).map(|k| reference.get(k).copied().unwrap_or(0.0) * n).collect();
    let groups = group_bins(&expected, min_expected);
    if groups.len() < 2 {
        return Err(Error::InvalidParameter("fewer than two χ² groups after pooling".into()));
    }
    let obs = group_sum(&observed, &groups);
    let exp = group_sum(&expected, &groups);
    let statistic: f64 = obs
        .iter()
        .zip(exp.iter())
        .map(|(&o, &e)| if e > 0.0 { (o - e) * (o - e) / e } else { 0.0 })
        .sum();
    let dof = groups.len() - 1;
    Ok(Chi2Outcome { statistic, dof, p_value: chi2_p_value(statistic, dof) })
}

/// Two-sample χ² homogeneity test between two count histograms. Group
/// boundaries come from the pooled distribution scaled to the smaller sample.
pub fn chi2_two_sample(
    a: &CountHistogram,
    b: &CountHistogram,
    min_expected: f64,
) -> Result<Chi2Outcome> {
    let (na, nb) = (a.n_traj() as f64, b.n_traj() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidParameter("empty histogram".into()));
    }
    let len = a.counts().len().max(b.counts().len());
    let ca: Vec<f64> = (0..len).map(|k| a.counts().get(k).copied().unwrap_or(0) as f64).collect();
    let cb: Vec<f64> = (0..len).map(|k| b.counts().get(k).copied().unwrap_or(0) as f64).collect();
    let pooled_small: Vec<f64> = (0..len)
        .map(|k| (ca[k] + cb[k]) / (na + nb) * na.min(nb))
        .collect();
    let groups = group_bins(&pooled_small, min_expected);
    if groups.len() < 2 {
        return Err(Error::InvalidParameter("fewer than two χ² groups after pooling".into()));
    }
    let ga = group_sum(&ca, &groups);
    let gb = group_sum(&cb, &groups);
    let mut statistic = 0.0;
    for (&oa, &ob) in ga.iter().zip(gb.iter()) {
        let p = (oa + ob) / (na + nb);
        let (ea, eb) = (p * na, p * nb);
        if ea > 0.0 {
            statistic += (oa - ea) * (oa - ea) / ea;
        }
        if eb > 0.0 {
            statistic += (ob - eb) * (ob - eb) / eb;
        }
    }
    let dof = groups.len() - 1;
    Ok(Chi2Outcome { statistic, dof, p_value: chi2_p_value(statistic, dof) })
}

/// Exact binomial thinning of a probability distribution:
/// P'(m) = Σ_{n≥m} C(n,m)·η^m·(1−η)^{n−m}·P(n).
pub fn thin_probabilities(p_n: &[f64], eta_d: f64) -> Vec<f64> {
    let len = p_n.len();
    let mut out = vec![0.0; len];
    for (n, &p) in p_n.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        // binomial pmf over m = 0..=n
        let mut coeff = (1.0 - eta_d).powi(n as i32); // m = 0 term
        for m in 0..=n {
            if m > 0 {
                // C(n,m)η^m(1−η)^{n−m} from the m−1 term
                coeff *= (n - m + 1) as f64 / m as f64 * eta_d / (1.0 - eta_d);
            }
            out[m] += p * coeff;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn poisson_pn(mean: f64) -> Vec<f64> {
        // Truncated where the tail drops below 1e−12 of the total.
        let mut p = Vec::new();
        let mut term = (-mean).exp();
        let mut n = 0usize;
        loop {
            p.push(term);
            n += 1;
            term *= mean / n as f64;
            if term < 1e-15 && n as f64 > mean {
                break;
            }
        }
        p
    }

    #[test]
    fn poisson_is_coherent() {
        let stats = stats_from_probabilities(&poisson_pn(0.5));
        assert_abs_diff_eq!(stats.g2.unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(stats.c2, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(stats.n_c, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn single_photon() {
        // P(1) = 1: g² = 0, C² = −1.
        let stats = stats_from_probabilities(&[0.0, 1.0]);
        assert_eq!(stats.g2, Some(0.0));
        assert_abs_diff_eq!(stats.c2, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_photon_admixture() {
        // P(0) = 0.9, P(2) = 0.1 → m1 = 0.2, m2 = 0.2, g² = 5, C² = 0.16.
        let stats = stats_from_probabilities(&[0.9, 0.0, 0.1]);
        assert_abs_diff_eq!(stats.m1, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.m2, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.g2.unwrap(), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.c2, 0.16, epsilon = 1e-15);
    }

    #[test]
    fn vacuum_has_no_g2() {
        let stats = stats_from_probabilities(&[1.0]);
        assert_eq!(stats.g2, None);
        assert_eq!(stats.c2, 0.0);
        assert!(classify_regime(&stats).is_err());
    }

    #[test]
    fn regime_classification() {
        assert_eq!(classify_regime_with(0.91, 0.02), Regime::Blockade);
        assert_eq!(classify_regime_with(1.2, 0.02), Regime::Tunneling);
        assert_eq!(classify_regime_with(1.0, 0.0), Regime::CoherentLike);
    }

    #[test]
    fn blinking_trivial_limits() {
        let qd = CountHistogram::from_counts(vec![800, 150, 50]);
        let empty = CountHistogram::from_counts(vec![600, 300, 100]);
        // r = 1 → identical to the bare QD statistics.
        let mixed = blinking_mix(&qd, &empty, &BlinkingModel::new(1.0).unwrap());
        let bare = stats_from_pn(&qd);
        assert_abs_diff_eq!(mixed.g2.unwrap(), bare.g2.unwrap(), epsilon = 1e-14);
        assert_abs_diff_eq!(mixed.c2, bare.c2, epsilon = 1e-14);
        // r = 0 → identical to the empty-cavity statistics.
        let mixed = blinking_mix(&qd, &empty, &BlinkingModel::new(0.0).unwrap());
        let bare = stats_from_pn(&empty);
        assert_abs_diff_eq!(mixed.g2.unwrap(), bare.g2.unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn thinning_exact_transform_preserves_g2() {
        let p = [0.62, 0.2, 0.1, 0.05, 0.03];
        let before = stats_from_probabilities(&p);
        for eta in [0.5, 0.1] {
            let thinned = thin_probabilities(&p, eta);
            let after = stats_from_probabilities(&thinned);
            assert_abs_diff_eq!(after.g2.unwrap(), before.g2.unwrap(), epsilon = 1e-12);
            assert_abs_diff_eq!(after.n_c, eta * before.n_c, epsilon = 1e-12);
        }
    }

    #[test]
    fn error_propagation_matches_bootstrap() {
        // Delta-method errors against a multinomial bootstrap.
        use rand::distributions::Distribution;
        use rand::SeedableRng;
        let p = [0.70, 0.18, 0.08, 0.03, 0.01];
        let n_traj: u64 = 4000;
        let hist = CountHistogram::from_counts(
            p.iter().map(|&x| (x * n_traj as f64).round() as u64).collect(),
        );
        let stats = stats_from_pn(&hist);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let dist = rand::distributions::WeightedIndex::new(hist.probabilities()).unwrap();
        let n_boot = 3000;
        let mut g2s = Vec::with_capacity(n_boot);
        for _ in 0..n_boot {
            let mut counts = vec![0u64; p.len()];
            for _ in 0..n_traj {
                counts[dist.sample(&mut rng)] += 1;
            }
            let s = stats_from_pn(&CountHistogram::from_counts(counts));
            g2s.push(s.g2.unwrap());
        }
        let mean = g2s.iter().sum::<f64>() / n_boot as f64;
        let var = g2s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_boot - 1) as f64;
        let bootstrap_err = var.sqrt();
        let propagated = stats.g2_err.unwrap();
        assert!(
            (propagated - bootstrap_err).abs() / bootstrap_err < 0.15,
            "propagated {propagated} vs bootstrap {bootstrap_err}"
        );
    }

    proptest! {
        #[test]
        fn identity_c2_from_g2(weights in proptest::collection::vec(0.0f64..1.0, 2..10)) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 0.0);
            let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let stats = stats_from_probabilities(&p);
            if let Some(g2) = stats.g2 {
                // C² = (g² − 1)·n_c² to 1e−12.
                prop_assert!((stats.c2 - (g2 - 1.0) * stats.n_c * stats.n_c).abs() < 1e-12);
            }
        }

        #[test]
        fn mixture_moments_affine_in_r(
            wq in proptest::collection::vec(1u64..1000, 3..6),
            we in proptest::collection::vec(1u64..1000, 3..6),
            r in 0.0f64..=1.0,
        ) {
            let hq = CountHistogram::from_counts(wq);
            let he = CountHistogram::from_counts(we);
            let mq = CountMoments::estimated(&hq.probabilities(), hq.n_traj());
            let me = CountMoments::estimated(&he.probabilities(), he.n_traj());
            let mixed = CountMoments::mix(&mq, &me, r);
            prop_assert!((mixed.m1 - (r * mq.m1 + (1.0 - r) * me.m1)).abs() < 1e-14);
            prop_assert!((mixed.m2 - (r * mq.m2 + (1.0 - r) * me.m2)).abs() < 1e-14);
        }

        #[test]
        fn support_01_has_zero_g2(p1 in 0.01f64..1.0) {
            // Any distribution on {0, 1} has m2 = 0, hence g² = 0.
            let stats = stats_from_probabilities(&[1.0 - p1, p1]);
            prop_assert_eq!(stats.g2, Some(0.0));
        }

        #[test]
        fn thinning_invariance_proptest(
            weights in proptest::collection::vec(0.0f64..1.0, 3..8),
            eta in 0.05f64..0.95,
        ) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 1e-6);
            let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let before = stats_from_probabilities(&p);
            prop_assume!(before.m1 > 1e-9);
            let after = stats_from_probabilities(&thin_probabilities(&p, eta));
            if let (Some(a), Some(b)) = (after.g2, before.g2) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
