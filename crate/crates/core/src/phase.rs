//! Closed-form phases `p(s) = sum c_i s^{e_i} (log s)^{l_i}`, their exact
//! derivatives, the admissibility sandwich check and the van der Corput bound.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Implied constant of the van der Corput bound, calibrated once by
/// [`calibrate_vdc_constant`] on quadratic phases and frozen here.
pub const VDC_CONSTANT: f64 = 0.75;

/// Default cap on the measured slack `eta`.
pub const DEFAULT_ETA_CAP: f64 = 0.01;

/// `e(t) = exp(2 pi i t)`, reduced mod 1 before the trig evaluation.
pub fn e(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * (t - t.floor()))
}

/// One `c * s^power * (ln s)^log_power` term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTerm {
    pub coeff: f64,
    pub power: f64,
    pub log_power: u32,
}

impl PhaseTerm {
    pub fn new(coeff: f64, power: f64, log_power: u32) -> Self {
        PhaseTerm { coeff, power, log_power }
    }

    fn eval(&self, s: f64) -> f64 {
        let base = self.coeff * s.powf(self.power);
        if self.log_power == 0 {
            base
        } else {
            base * s.ln().powi(self.log_power as i32)
        }
    }

    fn derivative(&self) -> [PhaseTerm; 2] {
        [
            PhaseTerm::new(self.coeff * self.power, self.power - 1.0, self.log_power),
            PhaseTerm::new(self.coeff * self.log_power as f64, self.power - 1.0, self.log_power.saturating_sub(1)),
        ]
    }
}

fn differentiate(terms: &[PhaseTerm]) -> Vec<PhaseTerm> {
    let mut out: Vec<PhaseTerm> = Vec::new();
    for t in terms.iter().flat_map(|t| t.derivative()) {
        if t.coeff == 0.0 {
            continue;
        }
        match out.iter_mut().find(|o| o.power == t.power && o.log_power == t.log_power) {
            Some(o) => o.coeff += t.coeff,
            None => out.push(t),
        }
    }
    out.retain(|t| t.coeff != 0.0);
    out
}

/// Serializable description of a phase: the config-file form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    /// `(coefficient, power, log_power)` triples.
    pub terms: Vec<(f64, f64, u32)>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_big_m")]
    pub big_m: f64,
    /// Integer part of the growth exponent (`m` in the class N_{delta,M,m}).
    pub m: u32,
}

fn default_delta() -> f64 {
    0.1
}

fn default_big_m() -> f64 {
    4.0
}

/// A parametric Hardy-field representative with exact derivatives up to order `m + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhaseSpec", into = "PhaseSpec")]
pub struct AdmissiblePhase {
    terms: Vec<PhaseTerm>,
    delta: f64,
    big_m: f64,
    m: u32,
    derivatives: Vec<Vec<PhaseTerm>>,
}

impl AdmissiblePhase {
    pub fn new(terms: Vec<PhaseTerm>, delta: f64, big_m: f64, m: u32) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("phase needs at least one term".into()));
        }
        if terms.iter().any(|t| !t.coeff.is_finite() || !t.power.is_finite()) {
            return Err(Error::Config("phase terms must be finite".into()));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::Config(format!("delta must lie in (0, 1/2), got {delta}")));
        }
        if !(big_m >= 1.0) {
            return Err(Error::Config(format!("M must be >= 1, got {big_m}")));
        }
        if m < 1 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        let mut derivatives = vec![terms.clone()];
        for _ in 0..(m + 2) {
            let next = differentiate(derivatives.last().unwrap());
            derivatives.push(next);
        }
        Ok(AdmissiblePhase { terms, delta, big_m, m, derivatives })
    }

    /// `t^power` with `m = floor(power)`, `delta = 0.1`, `M = 4`.
    pub fn monomial(power: f64) -> Result<Self> {
        let m = (power.floor() as u32).max(1);
        Self::new(vec![PhaseTerm::new(1.0, power, 0)], default_delta(), default_big_m(), m)
    }

    pub fn terms(&self) -> &[PhaseTerm] {
        &self.terms
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn max_order(&self) -> usize {
        self.m as usize + 2
    }

    pub fn value(&self, s: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(s)).sum()
    }

    /// Exact `j`-th derivative at `s`.
    pub fn eval_deriv(&self, j: usize, s: f64) -> Result<f64> {
        if j > self.max_order() {
            return Err(Error::UnsupportedOrder { order: j, max: self.max_order() });
        }
        if !(s >= 1.0) {
            return Err(Error::Domain(format!("phase derivatives are evaluated for s >= 1, got {s}")));
        }
        Ok(self.derivatives[j].iter().map(|t| t.eval(s)).sum())
    }

    /// Leading-term exponent minus `m`: the value the fitted `alpha` should approach.
    pub fn leading_alpha(&self) -> f64 {
        let lead = self
            .terms
            .iter()
            .filter(|t| t.coeff != 0.0)
            .max_by(|a, b| a.power.total_cmp(&b.power).then(a.log_power.cmp(&b.log_power)))
            .expect("nonempty terms");
        lead.power - self.m as f64
    }
}

impl TryFrom<PhaseSpec> for AdmissiblePhase {
    type Error = Error;

    fn try_from(spec: PhaseSpec) -> Result<Self> {
        let terms = spec.terms.iter().map(|&(c, p, l)| PhaseTerm::new(c, p, l)).collect();
        AdmissiblePhase::new(terms, spec.delta, spec.big_m, spec.m)
    }
}

impl From<AdmissiblePhase> for PhaseSpec {
    fn from(p: AdmissiblePhase) -> Self {
        PhaseSpec {
            terms: p.terms.iter().map(|t| (t.coeff, t.power, t.log_power)).collect(),
            delta: p.delta,
            big_m: p.big_m,
            m: p.m,
        }
    }
}

/// A sampled point where the derivative sandwich fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub s: f64,
    pub order: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityCertificate {
    /// Least-squares slope of `ln p` against `ln s`, minus `m`.
    pub alpha: f64,
    /// Smallest slack making every sampled sandwich hold (given `alpha` and `M`).
    pub eta: f64,
    pub eta_cap: f64,
    pub alpha_in_range: bool,
    /// Sampled points failing the sandwich with slack `eta_cap`.
    pub violations: Vec<Violation>,
    pub samples: usize,
}

impl AdmissibilityCertificate {
    pub fn admissible(&self) -> bool {
        self.alpha_in_range && self.violations.is_empty() && self.eta <= self.eta_cap
    }
}

/// Geometric sample `1, 1.1, 1.21, ...` of `[1, s_max]`, always ending at `s_max`.
pub fn geometric_samples(s_max: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s = 1.0;
    while s < s_max {
        out.push(s);
        s *= ratio;
    }
    out.push(s_max);
    out
}

pub fn check_admissible(p: &AdmissiblePhase, s_max: f64) -> Result<AdmissibilityCertificate> {
    check_admissible_with(p, s_max, DEFAULT_ETA_CAP)
}

/// Tests `M^{-1} s^{m+alpha-eta-j} <= |p^{(j)}(s)| <= M s^{m+alpha+eta-j}` for
/// `j = 0..=m+2` on a ratio-1.1 geometric sample of `[1, s_max]`.
pub fn check_admissible_with(p: &AdmissiblePhase, s_max: f64, eta_cap: f64) -> Result<AdmissibilityCertificate> {
    if !(s_max >= 16.0) {
        return Err(Error::Domain(format!("s_max must be >= 16, got {s_max}")));
    }
    let samples = geometric_samples(s_max, 1.1);
    let mut logs = Vec::with_capacity(samples.len());
    for &s in &samples {
        let v = p.value(s);
        if !(v > 0.0) {
            return Err(Error::Sign { s, value: v });
        }
        logs.push((s.ln(), v.ln()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
    let fit = crate::report::fit_line(&xs, &ys)?;
    let m = p.m() as f64;
    let alpha = fit.slope - m;
    let ln_m = p.big_m().ln();

    let mut eta: f64 = 0.0;
    let mut violations = Vec::new();
    for &s in &samples {
        let ls = s.ln();
        for j in 0..=p.max_order() {
            let value = p.eval_deriv(j, s)?.abs();
            let centre = m + alpha - j as f64;
            let lower = (-ln_m + (centre - eta_cap) * ls).exp();
            let upper = (ln_m + (centre + eta_cap) * ls).exp();
            if value == 0.0 {
                violations.push(Violation { s, order: j, value, lower, upper });
                eta = f64::INFINITY;
                continue;
            }
            let lv = value.ln();
            if ls == 0.0 {
                if lv.abs() > ln_m {
                    violations.push(Violation { s, order: j, value, lower, upper });
                    eta = f64::INFINITY;
                }
                continue;
            }
            let need_low = centre - (lv + ln_m) / ls;
            let need_high = (lv - ln_m) / ls - centre;
            eta = eta.max(need_low).max(need_high);
            if value < lower || value > upper {
                violations.push(Violation { s, order: j, value, lower, upper });
            }
        }
    }
    let alpha_in_range = alpha >= p.delta() && alpha <= 1.0 - p.delta();
    Ok(AdmissibilityCertificate { alpha, eta, eta_cap, alpha_in_range, violations, samples: samples.len() })
}

/// Parameters of the van der Corput estimate for a phase with
/// `0 < lambda <= |f^{(k)}| <= h * lambda` on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdcParams {
    pub k: u32,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub h: f64,
}

impl VdcParams {
    pub fn big_k(&self) -> f64 {
        2f64.powi(self.k as i32)
    }

    /// Measures `lambda` and `h` for the given `k`-th derivative on a dense grid of `[a, b]`.
    pub fn measure(k: u32, a: f64, b: f64, kth_derivative: impl Fn(f64) -> f64) -> Result<Self> {
        if b < a {
            return Err(Error::Domain("vdc interval has b < a".into()));
        }
        const GRID: usize = 512;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..=GRID {
            let x = a + (b - a) * i as f64 / GRID as f64;
            let v = kth_derivative(x).abs();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo > 0.0) {
            return Err(Error::Domain("k-th derivative vanishes on the interval".into()));
        }
        Ok(VdcParams { k, a, b, lambda: lo, h: (hi / lo).max(1.0) })
    }
}

/// `h N (lambda^{1/(K-2)} + N^{-2/K} + (N^k lambda)^{-2/K})` with `K = 2^k`.
pub fn vdc_bound(params: &VdcParams, n: u64) -> Result<f64> {
    if params.k < 2 {
        return Err(Error::Domain(format!("van der Corput needs k >= 2, got {}", params.k)));
    }
    if !(params.lambda > 0.0) || !(params.h >= 1.0) {
        return Err(Error::Domain("need lambda > 0 and h >= 1".into()));
    }
    if n == 0 {
        return Err(Error::Domain("N must be positive".into()));
    }
    if params.b - params.a > n as f64 {
        return Err(Error::Contract(format!("b - a = {} exceeds N = {n}", params.b - params.a)));
    }
    let kk = params.big_k();
    let nf = n as f64;
    let lam = params.lambda;
    Ok(params.h
        * nf
        * (lam.powf(1.0 / (kk - 2.0)) + nf.powf(-2.0 / kk) + (nf.powi(params.k as i32) * lam).powf(-2.0 / kk)))
}

/// `sum_{n in range} e(f(n))`, summed directly.
pub fn exponential_sum(range: std::ops::RangeInclusive<i64>, f: impl Fn(f64) -> f64) -> Complex64 {
    range.map(|n| e(f(n as f64))).sum()
}

/// Largest ratio `|sum_{a < n <= a+N} e(theta n^2)| / vdc_bound` over the
/// quadratic calibration family (`k = 2`, `lambda = 2 theta`, `h = 1`).
pub fn calibrate_vdc_constant() -> f64 {
    let thetas = quadratic_calibration_thetas();
    let lengths = [16u64, 64, 256, 1024, 4096];
    let starts = [0i64, 1000, 77_777];
    let mut worst = 0.0f64;
    for &theta in &thetas {
        for &n in &lengths {
            for &a in &starts {
                let sum = exponential_sum(a + 1..=a + n as i64, |x| theta * x * x);
                let params = VdcParams { k: 2, a: a as f64, b: (a + n as i64) as f64, lambda: 2.0 * theta, h: 1.0 };
                let bound = vdc_bound(&params, n).expect("valid calibration parameters");
                worst = worst.max(sum.norm() / bound);
            }
        }
    }
    worst
}

/// Twelve log-spaced values of `theta` in `[0.001, 0.3]`.
pub fn quadratic_calibration_thetas() -> Vec<f64> {
    let (lo, hi) = (0.001f64.ln(), 0.3f64.ln());
    (0..12).map(|i| (lo + (hi - lo) * i as f64 / 11.0).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> AdmissiblePhase {
        AdmissiblePhase::new(vec![PhaseTerm::new(5.0, std::f64::consts::PI, 0), PhaseTerm::new(1.0, 1.0, 1)], 0.1, 64.0, 3)
            .unwrap()
    }

    #[test]
    fn derivative_examples() {
        let sq = AdmissiblePhase::new(vec![PhaseTerm::new(1.0, 2.0, 0)], 0.1, 4.0, 1).unwrap();
        for s in [1.0, 3.5, 100.0] {
            assert_eq!(sq.eval_deriv(2, s).unwrap(), 2.0);
            assert_eq!(sq.eval_deriv(3, s).unwrap(), 0.0);
        }
        let p = AdmissiblePhase::monomial(1.5).unwrap();
        assert_eq!(p.eval_deriv(1, 4.0).unwrap(), 3.0);
        assert!(matches!(p.eval_deriv(4, 4.0), Err(Error::UnsupportedOrder { order: 4, max: 3 })));
        assert!(p.eval_deriv(0, 0.5).is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let p = mixed();
        for j in 1..=3 {
            for s in [2.0, 10.0, 100.0] {
                let h = 1e-4 * s;
                let fd = (p.eval_deriv(j - 1, s + h).unwrap() - p.eval_deriv(j - 1, s - h).unwrap()) / (2.0 * h);
                let exact = p.eval_deriv(j, s).unwrap();
                assert!(((fd - exact) / exact).abs() < 1e-6, "j={j} s={s} fd={fd} exact={exact}");
            }
        }
    }

    #[test]
    fn central_difference_error_is_second_order() {
        let p = mixed();
        let s = 10.0;
        let err = |h: f64| {
            let fd = (p.eval_deriv(1, s + h).unwrap() - p.eval_deriv(1, s - h).unwrap()) / (2.0 * h);
            (fd - p.eval_deriv(2, s).unwrap()).abs()
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn monomial_three_halves_is_admissible() {
        let cert = check_admissible(&AdmissiblePhase::monomial(1.5).unwrap(), 2f64.powi(20)).unwrap();
        assert!((cert.alpha - 0.5).abs() < 0.01);
        assert!(cert.violations.is_empty());
        assert!(cert.admissible(), "{cert:?}");
    }

    #[test]
    fn eta_shrinks_for_monomials() {
        for power in [1.5, 2.5] {
            let p = AdmissiblePhase::monomial(power).unwrap();
            let etas: Vec<f64> =
                [2f64.powi(8), 2f64.powi(14), 2f64.powi(20)].iter().map(|&s| check_admissible(&p, s).unwrap().eta).collect();
            assert!(etas.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{etas:?}");
            assert!(etas[2] < 1e-6);
        }
    }

    #[test]
    fn square_is_rejected() {
        for m in [1, 2] {
            let p = AdmissiblePhase::new(vec![PhaseTerm::new(1.0, 2.0, 0)], 0.1, 4.0, m).unwrap();
            let cert = check_admissible(&p, 2f64.powi(16)).unwrap();
            assert!(!cert.alpha_in_range);
            assert!(!cert.admissible());
        }
    }

    #[test]
    fn mixed_phase_alpha_approaches_leading_term() {
        let p = mixed();
        let oracle = std::f64::consts::PI - 3.0;
        assert!((p.leading_alpha() - oracle).abs() < 1e-15);
        let errs: Vec<f64> = [2f64.powi(8), 2f64.powi(16), 2f64.powi(30)]
            .iter()
            .map(|&s| (check_admissible(&p, s).unwrap().alpha - oracle).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[2] < 0.01, "{errs:?}");
    }

    #[test]
    fn negative_phase_is_a_sign_error() {
        let p = AdmissiblePhase::new(vec![PhaseTerm::new(-1.0, 1.5, 0)], 0.1, 4.0, 1).unwrap();
        assert!(matches!(check_admissible(&p, 64.0), Err(Error::Sign { .. })));
        assert!(check_admissible(&AdmissiblePhase::monomial(1.5).unwrap(), 8.0).is_err());
    }

    #[test]
    fn vdc_plug_in() {
        let p = VdcParams { k: 2, a: 0.0, b: 1.0, lambda: 1.0, h: 1.0 };
        assert!((vdc_bound(&p, 1).unwrap() - 3.0).abs() < 1e-15);
        assert!(vdc_bound(&VdcParams { k: 1, ..p }, 1).is_err());
        assert!(matches!(vdc_bound(&VdcParams { b: 10.0, ..p }, 4), Err(Error::Contract(_))));
    }

    #[test]
    fn frozen_vdc_constant_covers_calibration() {
        let c = calibrate_vdc_constant();
        assert!(c <= VDC_CONSTANT, "calibrated {c} exceeds frozen {VDC_CONSTANT}");
        assert!(c > 0.5 * VDC_CONSTANT, "frozen constant {VDC_CONSTANT} is stale; calibration gives {c}");
    }

    #[test]
    fn spec_round_trip() {
        let p = mixed();
        let json = serde_json::to_string(&p).unwrap();
        let back: AdmissiblePhase = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<AdmissiblePhase>(r#"{"terms":[],"m":1}"#).is_err());
    }
}
