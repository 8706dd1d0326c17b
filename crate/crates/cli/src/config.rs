//! Run configuration. Every section but `phase` has defaults; unknown keys are rejected.

use modhilbert_core::kernel::{CoeffSequence, DEFAULT_MAX_CORRELATION_SCALE};
use modhilbert_core::phase::{PhaseSpec, VDC_CONSTANT};
use modhilbert_core::random::{sample_sequence, MAX_COVER_SCALE};
use modhilbert_core::{AdmissiblePhase, Distribution};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficients {
    /// `e(p(n))` for the configured phase.
    Modulated,
    One,
    Zero,
    /// Independent draws from `random.distribution`, seeded by `seed`.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub phase: PhaseSpec,
    #[serde(default = "default_coefficients")]
    pub coefficients: Coefficients,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub vdc: VdcConfig,
    #[serde(default)]
    pub maximal: MaximalConfig,
    #[serde(default)]
    pub sparse: SparseSection,
    #[serde(default)]
    pub random: RandomConfig,
    #[serde(default)]
    pub ergodic: ErgodicConfig,
}

fn default_coefficients() -> Coefficients {
    Coefficients::Modulated
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub scales: Vec<u32>,
    pub offdiag_ks: Vec<u32>,
    pub offdiag_top: u32,
    pub separation: u32,
    pub offdiag_bound: f64,
    /// Exponent in the off-diagonal scaling; `null` uses the diagonal fit.
    pub offdiag_eps: Option<f64>,
    pub eps_min: f64,
    pub kappa: f64,
    pub kappa_scales: Vec<u32>,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            scales: (8..=14).collect(),
            offdiag_ks: vec![4, 5, 6],
            offdiag_top: 14,
            separation: 4,
            offdiag_bound: 1.0,
            offdiag_eps: Some(0.05),
            eps_min: 0.05,
            kappa: 0.5,
            kappa_scales: (12..=24).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdcConfig {
    pub s_max: f64,
    pub eta_cap: f64,
    pub starts: Vec<u64>,
    pub lengths: Vec<u64>,
    pub constant: f64,
}

impl Default for VdcConfig {
    fn default() -> Self {
        VdcConfig {
            s_max: 1e6,
            eta_cap: 0.01,
            starts: vec![0, 1000, 100_000],
            lengths: vec![64, 256, 1024, 4096],
            constant: VDC_CONSTANT,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaximalConfig {
    pub rs: Vec<f64>,
    pub sizes: Vec<usize>,
    pub trials: usize,
}

impl Default for MaximalConfig {
    fn default() -> Self {
        MaximalConfig { rs: vec![1.2, 1.5, 2.0, 3.0], sizes: vec![256, 1024], trials: 6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseSection {
    pub level: u32,
    pub instances: u64,
    pub r: f64,
    pub stopping_threshold: f64,
    pub measure_fraction: f64,
    pub cz_threshold: f64,
    pub s_range: Vec<u32>,
    pub c0: f64,
    pub eps_hat: f64,
    pub overlap_constant: f64,
    pub domination_constant: f64,
}

impl Default for SparseSection {
    fn default() -> Self {
        SparseSection {
            level: 10,
            instances: 20,
            r: 1.5,
            stopping_threshold: 10.0,
            measure_fraction: 0.2,
            cz_threshold: 10.0,
            s_range: vec![1, 2, 3, 4],
            c0: 1.0,
            eps_hat: 0.05,
            overlap_constant: 4.0,
            domination_constant: 1.28,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomConfig {
    pub distribution: Distribution,
    pub chernoff_n: usize,
    pub chernoff_trials: usize,
    pub chernoff_grid: Vec<f64>,
    pub c_range: (f64, f64),
    pub correlation_seeds: u64,
    pub fit_scales: Vec<u32>,
    pub check_scales: Vec<u32>,
    pub exceptional_is: Vec<u32>,
    pub exceptional_j: u32,
    pub exceptional_threshold: f64,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            distribution: Distribution::Rademacher,
            chernoff_n: 10_000,
            chernoff_trials: 4000,
            chernoff_grid: vec![1.0, 2.0, 3.0, 4.0],
            c_range: (0.3, 0.6),
            correlation_seeds: 20,
            fit_scales: vec![6, 7],
            check_scales: vec![8, 9, 10],
            exceptional_is: vec![3, 4],
            exceptional_j: 14,
            exceptional_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicConfig {
    pub alpha: f64,
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
    pub kappa: f64,
    pub j_max: u32,
    pub samples: usize,
    pub fit_from: u32,
    pub transference_n: u64,
    pub transference_len: usize,
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        ErgodicConfig {
            alpha: std::f64::consts::SQRT_2 - 1.0,
            breaks: vec![0.5],
            values: vec![0.5, -0.5],
            kappa: 1.0,
            j_max: 16,
            samples: 32,
            fit_from: 4,
            transference_n: 1024,
            transference_len: 256,
        }
    }
}

/// Largest ergodic horizon `(1+kappa)^(j_max+1)` accepted.
pub const MAX_ERGODIC_TERMS: f64 = (1u64 << 26) as f64;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn phase(&self) -> Result<AdmissiblePhase, String> {
        AdmissiblePhase::try_from(self.phase.clone()).map_err(|e| format!("phase: {e}"))
    }

    /// Checks ranges that would otherwise fail deep inside a run.
    pub fn validate(&self) -> Result<(), String> {
        self.phase()?;
        let d = &self.decay;
        if d.scales.len() < 3 {
            return Err("decay.scales needs at least 3 entries".into());
        }
        if d.scales.iter().any(|&j| j > DEFAULT_MAX_CORRELATION_SCALE) {
            return Err(format!("decay scales must not exceed {DEFAULT_MAX_CORRELATION_SCALE}"));
        }
        if d.offdiag_top > DEFAULT_MAX_CORRELATION_SCALE {
            return Err(format!("decay.offdiag_top must not exceed {DEFAULT_MAX_CORRELATION_SCALE}"));
        }
        if let Some(k) = d.offdiag_ks.iter().find(|&&k| k + d.separation > d.offdiag_top) {
            return Err(format!("decay.offdiag_ks: k = {k} leaves no scale j >= k + separation below offdiag_top"));
        }
        if !(d.kappa > 0.0) {
            return Err("decay.kappa must be positive".into());
        }
        let kappa_top = d.kappa_scales.iter().copied().max().unwrap_or(0);
        if (1.0 + d.kappa).powi(kappa_top as i32 + 1) > (1u64 << DEFAULT_MAX_CORRELATION_SCALE) as f64 {
            return Err(format!("decay.kappa_scales reach past 2^{DEFAULT_MAX_CORRELATION_SCALE}"));
        }
        let v = &self.vdc;
        if !(v.s_max > 1.0) || !(v.eta_cap > 0.0) || !(v.constant > 0.0) {
            return Err("vdc.s_max must exceed 1; vdc.eta_cap and vdc.constant must be positive".into());
        }
        if v.lengths.contains(&0) || v.starts.is_empty() || v.lengths.is_empty() {
            return Err("vdc.starts and vdc.lengths must be non-empty with positive lengths".into());
        }
        if self.phase.m + 1 > 8 {
            return Err("vdc needs m + 1 <= 8".into());
        }
        let m = &self.maximal;
        if m.rs.iter().any(|&r| !(r > 1.0 && r.is_finite())) || m.rs.is_empty() {
            return Err("maximal.rs must be non-empty and lie in (1, inf)".into());
        }
        if m.sizes.is_empty() || m.sizes.iter().any(|&s| s == 0 || s > 1 << 16) || m.trials == 0 {
            return Err("maximal.sizes must lie in 1..=65536 and maximal.trials must be positive".into());
        }
        let s = &self.sparse;
        if !(6..=14).contains(&s.level) {
            return Err("sparse.level must lie in 6..=14".into());
        }
        if s.instances == 0 {
            return Err("sparse.instances must be positive".into());
        }
        if !(s.r > 1.0 && s.r < 2.0) {
            return Err("sparse.r must lie in (1, 2)".into());
        }
        if !(s.stopping_threshold > 1.0 && s.cz_threshold > 1.0) {
            return Err("sparse thresholds must exceed 1".into());
        }
        if !(s.measure_fraction > 0.0 && s.measure_fraction < 1.0) {
            return Err("sparse.measure_fraction must lie in (0, 1)".into());
        }
        if s.s_range.is_empty() || s.s_range.contains(&0) {
            return Err("sparse.s_range must be non-empty and start at 1 or above".into());
        }
        if !(s.c0 > 0.0 && s.eps_hat >= 0.0 && s.overlap_constant > 0.0 && s.domination_constant > 0.0) {
            return Err("sparse.c0, overlap_constant and domination_constant must be positive".into());
        }
        let r = &self.random;
        if r.chernoff_trials < 1000 || r.chernoff_n == 0 || r.chernoff_grid.is_empty() {
            return Err("random.chernoff_trials must be >= 1000 with a non-empty grid".into());
        }
        if r.chernoff_grid.iter().any(|&k| !(k > 0.0)) {
            return Err("random.chernoff_grid entries are multiples of sqrt(n) and must be positive".into());
        }
        if r.correlation_seeds == 0 || r.fit_scales.is_empty() {
            return Err("random.correlation_seeds and random.fit_scales must be non-empty".into());
        }
        if r.fit_scales.iter().chain(&r.check_scales).any(|&i| i == 0 || i > DEFAULT_MAX_CORRELATION_SCALE) {
            return Err(format!("random scales must lie in 1..={DEFAULT_MAX_CORRELATION_SCALE}"));
        }
        if r.exceptional_j > MAX_COVER_SCALE {
            return Err(format!("random.exceptional_j must not exceed {MAX_COVER_SCALE}"));
        }
        if let Some(i) = r.exceptional_is.iter().find(|&&i| (r.exceptional_j as f64) < 2.0 * 2f64.powf(i as f64 / 2.0)) {
            return Err(format!("random.exceptional_is: i = {i} is too large for j = {}", r.exceptional_j));
        }
        if !(r.exceptional_threshold > 0.0) {
            return Err("random.exceptional_threshold must be positive".into());
        }
        let e = &self.ergodic;
        if !(e.alpha.is_finite()) || !(e.kappa > 0.0) || e.samples == 0 {
            return Err("ergodic.alpha must be finite, kappa positive and samples non-zero".into());
        }
        if (1.0 + e.kappa).powi(e.j_max as i32 + 1) > MAX_ERGODIC_TERMS {
            return Err("ergodic horizon (1 + kappa)^(j_max + 1) exceeds 2^26".into());
        }
        if e.values.len() != e.breaks.len() + 1 {
            return Err("ergodic.values needs one more entry than ergodic.breaks".into());
        }
        if e.transference_n == 0 || e.transference_n > 1 << 16 || e.transference_len == 0 || e.transference_len > 1 << 14 {
            return Err("ergodic.transference_n must lie in 1..=65536 and transference_len in 1..=16384".into());
        }
        Ok(())
    }

    /// The configured coefficient sequence, with random tables long enough for `n_max`.
    pub fn coefficients(&self, n_max: usize) -> Result<CoeffSequence, String> {
        Ok(match self.coefficients {
            Coefficients::Modulated => CoeffSequence::modulated(self.phase()?),
            Coefficients::One => CoeffSequence::one(),
            Coefficients::Zero => CoeffSequence::zero(),
            Coefficients::Random => CoeffSequence::random(
                sample_sequence(self.random.distribution, self.seed, n_max).map_err(|e| e.to_string())?,
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"phase": {"terms": [[1.0, 1.5, 0]], "m": 1}}"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.coefficients, Coefficients::Modulated);
        assert_eq!(cfg.sparse.level, 10);
        assert_eq!(cfg.phase.delta, 0.1);
    }

    #[test]
    fn missing_phase_is_rejected() {
        let err = RunConfig::parse(r#"{"seed": 3}"#).unwrap_err();
        assert!(err.contains("phase"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"phase": {"terms": [[1.0, 1.5, 0]], "m": 1}, "decay": {"scale": [1]}}"#;
        assert!(RunConfig::parse(text).is_err());
    }

    #[test]
    fn unknown_distribution_is_rejected() {
        let text = r#"{"phase": {"terms": [[1.0, 1.5, 0]], "m": 1}, "random": {"distribution": "cauchy"}}"#;
        assert!(RunConfig::parse(text).is_err());
    }

    #[test]
    fn bad_phase_is_rejected() {
        let text = r#"{"phase": {"terms": [], "m": 1}}"#;
        assert!(RunConfig::parse(text).unwrap_err().contains("phase"));
    }

    #[test]
    fn sparse_exponent_range() {
        let text = r#"{"phase": {"terms": [[1.0, 1.5, 0]], "m": 1}, "sparse": {"r": 2.0}}"#;
        assert!(RunConfig::parse(text).is_err());
    }

    #[test]
    fn shipped_default_parses() {
        RunConfig::parse(include_str!("../../../configs/default.json")).unwrap();
    }
}
