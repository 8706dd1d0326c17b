//! Block measures `mu_j = sum_{2^{j-1} < n <= 2^j} a(n)/n delta_n`, their
//! correlations `mu_j * mu~_k`, decay reports and Fourier symbol bounds.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{e, AdmissiblePhase};
use crate::random::RandomRealization;
use crate::report::{fit_log_decay, ExperimentReport};
use crate::signal::{convolve, reflect_conj, trig_poly_grid, FiniteSignal, Interval};

/// Largest scale the report operations accept.
pub const MAX_SCALE: u32 = 24;

/// Default scale cap for correlations (work grows like `2^{2j}`).
pub const DEFAULT_MAX_CORRELATION_SCALE: u32 = 18;

/// Default separation `C` in `k + C <= j` for off-diagonal reports.
pub const DEFAULT_OFFDIAG_SEPARATION: u32 = 4;

/// Coefficients `a : Z -> {|z| <= 1}`; only `n >= 1` is ever read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoeffSequence {
    /// `a(n) = e(p(n))`.
    Modulated { phase: AdmissiblePhase },
    Constant { value: Complex64 },
    /// `a(n) = values[n - 1]`, zero past the end.
    Table { values: Vec<Complex64> },
    Random { realization: RandomRealization },
}

impl CoeffSequence {
    pub fn modulated(phase: AdmissiblePhase) -> Self {
        CoeffSequence::Modulated { phase }
    }

    pub fn constant(value: Complex64) -> Result<Self> {
        if !(value.norm() <= 1.0) {
            return Err(Error::Domain(format!("|a(n)| must be <= 1, got {}", value.norm())));
        }
        Ok(CoeffSequence::Constant { value })
    }

    pub fn one() -> Self {
        CoeffSequence::Constant { value: Complex64::new(1.0, 0.0) }
    }

    pub fn zero() -> Self {
        CoeffSequence::Constant { value: Complex64::new(0.0, 0.0) }
    }

    pub fn table(values: Vec<Complex64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.norm() <= 1.0)) {
            return Err(Error::Domain(format!("|a(n)| must be <= 1, got {}", v.norm())));
        }
        Ok(CoeffSequence::Table { values })
    }

    pub fn random(realization: RandomRealization) -> Self {
        CoeffSequence::Random { realization }
    }

    /// Checks `|a(n)| <= 1` for a deserialized sequence.
    pub fn validate(&self) -> Result<()> {
        match self {
            CoeffSequence::Constant { value } => Self::constant(*value).map(|_| ()),
            CoeffSequence::Table { values } => Self::table(values.clone()).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, n: i64) -> Complex64 {
        if n < 1 {
            return Complex64::new(0.0, 0.0);
        }
        match self {
            CoeffSequence::Modulated { phase } => e(phase.value(n as f64)),
            CoeffSequence::Constant { value } => *value,
            CoeffSequence::Table { values } => values.get((n - 1) as usize).copied().unwrap_or_default(),
            CoeffSequence::Random { realization } => Complex64::new(realization.value(n), 0.0),
        }
    }

    /// True when every coefficient is known to vanish.
    pub fn is_identically_zero(&self) -> bool {
        match self {
            CoeffSequence::Constant { value } => *value == Complex64::new(0.0, 0.0),
            CoeffSequence::Table { values } => values.iter().all(|v| *v == Complex64::new(0.0, 0.0)),
            CoeffSequence::Random { realization } => {
                realization.distribution() == crate::random::Distribution::Zero
            }
            CoeffSequence::Modulated { .. } => false,
        }
    }
}

/// Integer block `(2^{j-1}, 2^j]` as the half-open range `[2^{j-1}+1, 2^j+1)`.
pub fn dyadic_block(j: u32) -> Interval {
    Interval::new((1i64 << (j - 1)) + 1, (1i64 << j) + 1)
}

/// Integer block `((1+kappa)^{j-1}, (1+kappa)^j]`; may be empty.
pub fn kappa_block(j: u32, kappa: f64) -> Interval {
    let base = 1.0 + kappa;
    let lo = base.powi(j as i32 - 1).floor() as i64 + 1;
    let hi = base.powi(j as i32).floor() as i64 + 1;
    Interval::new(lo, hi)
}

fn check_scale(j: u32) -> Result<()> {
    if j < 1 || j > MAX_SCALE {
        return Err(Error::Domain(format!("scale j must lie in 1..={MAX_SCALE}, got {j}")));
    }
    Ok(())
}

fn measure_on(a: &CoeffSequence, block: Interval) -> FiniteSignal {
    FiniteSignal::from_fn(block, |n| a.eval(n) / n as f64)
}

/// `mu_j`: entries `a(n)/n` on `(2^{j-1}, 2^j]`.
pub fn block_measure(a: &CoeffSequence, j: u32) -> Result<FiniteSignal> {
    check_scale(j)?;
    Ok(measure_on(a, dyadic_block(j)))
}

/// `mu_{j,kappa}`: entries `a(n)/n` on `((1+kappa)^{j-1}, (1+kappa)^j]`.
pub fn kappa_block_measure(a: &CoeffSequence, j: u32, kappa: f64) -> Result<FiniteSignal> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    if j < 1 || (1.0 + kappa).powi(j as i32) > 2f64.powi(MAX_SCALE as i32) {
        return Err(Error::Domain(format!("kappa block {j} is outside the supported range")));
    }
    Ok(measure_on(a, kappa_block(j, kappa)))
}

/// `mu_j * mu~_k`.
pub fn correlation(a: &CoeffSequence, j: u32, k: u32) -> Result<FiniteSignal> {
    Ok(convolve(&block_measure(a, j)?, &reflect_conj(&block_measure(a, k)?)))
}

/// `sup_{x != 0} |c(x)|`.
pub fn sup_off_zero(c: &FiniteSignal) -> f64 {
    c.iter().filter(|&(x, _)| x != 0).map(|(_, v)| v.norm()).fold(0.0, f64::max)
}

fn check_range(js: &[u32], cap: u32) -> Result<()> {
    if let Some(&j) = js.iter().find(|&&j| j < 1 || j > cap) {
        return Err(Error::Resource(format!("scale {j} outside the budget 1..={cap}")));
    }
    Ok(())
}

/// Fits `log_2 D_j` against `j` for `D_j = sup_{x != 0} |mu_j * mu~_j(x)|`.
///
/// Metrics: `slope`, `eps_hat = -slope - 1`, `c0 = max_j D_j 2^{(1+eps_hat) j}`,
/// and `degenerate = 1` when every `D_j` vanishes.
pub fn diag_decay_report(a: &CoeffSequence, js: &[u32]) -> Result<ExperimentReport> {
    if js.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 scales, got {}", js.len())));
    }
    check_range(js, DEFAULT_MAX_CORRELATION_SCALE)?;
    let sups: Vec<f64> = js
        .par_iter()
        .map(|&j| correlation(a, j, j).map(|c| sup_off_zero(&c)))
        .collect::<Result<_>>()?;
    decay_table("diag_decay", js, &sups, 2.0)
}

/// Shared table/fit logic for diagonal-type reports in base `base`.
fn decay_table(name: &str, js: &[u32], sups: &[f64], base: f64) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(name, &["j", "sup", "fitted_slope", "residual"]);
    let xs: Vec<f64> = js.iter().map(|&j| j as f64).collect();
    let positive = sups.iter().filter(|&&s| s > 0.0).count();
    if positive == 0 {
        for &j in js {
            rep.push_row(vec![j as f64, 0.0, f64::NAN, f64::NAN]);
        }
        rep.set_metric("degenerate", 1.0);
        rep.note("all correlations vanish; no decay rate fitted");
        return Ok(rep);
    }
    if positive < 2 {
        return Err(Error::Fit("fewer than 2 nonzero scales".into()));
    }
    let fit = fit_log_decay(&xs, sups, base)?;
    for (&x, &s) in xs.iter().zip(sups) {
        let resid = if s > 0.0 { s.ln() / base.ln() - fit.predict(x) } else { f64::NAN };
        rep.push_row(vec![x, s, fit.slope, resid]);
    }
    let eps_hat = -fit.slope - 1.0;
    let c0 = xs.iter().zip(sups).map(|(&x, &s)| s * base.powf((1.0 + eps_hat) * x)).fold(0.0, f64::max);
    rep.set_metric("degenerate", 0.0);
    rep.set_metric("slope", fit.slope);
    rep.set_metric("eps_hat", eps_hat);
    rep.set_metric("c0", c0);
    rep.set_metric("max_abs_residual", fit.max_abs_residual());
    Ok(rep)
}

/// Off-diagonal correlations `||mu_j * mu~_k||_inf` for `j in js`, all `j >= k + sep`.
///
/// Metric `max_scaled = max_j 2^j ||mu_j * mu~_k||_inf 2^{eps_hat k}`; flag
/// `bounded` when `bound` is given.
pub fn offdiag_decay_report(
    a: &CoeffSequence,
    k: u32,
    js: &[u32],
    sep: u32,
    eps_hat: f64,
    bound: Option<f64>,
) -> Result<ExperimentReport> {
    if js.is_empty() {
        return Err(Error::Contract("empty scale range".into()));
    }
    if let Some(&j) = js.iter().find(|&&j| j < k + sep) {
        return Err(Error::Contract(format!("off-diagonal scales need j >= k + {sep}; got j = {j}, k = {k}")));
    }
    check_range(js, DEFAULT_MAX_CORRELATION_SCALE)?;
    let norms: Vec<f64> =
        js.par_iter().map(|&j| correlation(a, j, k).map(|c| c.norm_linf())).collect::<Result<_>>()?;
    let mut rep = ExperimentReport::new("offdiag_decay", &["j", "sup", "fitted_slope", "residual"]);
    let xs: Vec<f64> = js.iter().map(|&j| j as f64).collect();
    let fit = fit_log_decay(&xs, &norms, 2.0).ok();
    for (&x, &s) in xs.iter().zip(&norms) {
        let (slope, resid) = match (&fit, s > 0.0) {
            (Some(f), true) => (f.slope, s.log2() - f.predict(x)),
            (Some(f), false) => (f.slope, f64::NAN),
            _ => (f64::NAN, f64::NAN),
        };
        rep.push_row(vec![x, s, slope, resid]);
    }
    let max_scaled = xs
        .iter()
        .zip(&norms)
        .map(|(&x, &s)| 2f64.powf(x) * s * 2f64.powf(eps_hat * k as f64))
        .fold(0.0, f64::max);
    rep.set_metric("k", k as f64);
    rep.set_metric("eps_hat", eps_hat);
    rep.set_metric("max_scaled", max_scaled);
    if let Some(b) = bound {
        rep.set_metric("bound", b);
        rep.set_flag("bounded", max_scaled <= b);
    }
    Ok(rep)
}

/// Correlations of the `kappa` blocks against
/// `C[(1+kappa)^{-j} delta_0 + (1+kappa)^{-(1+eps) j}]`.
///
/// Metrics: `eps_hat` and `slope` fitted in base `1+kappa`, `worst_ratio`
/// (the smallest admissible `C`), `empty_blocks`.
pub fn kappa_decay_report(a: &CoeffSequence, kappa: f64, js: &[u32]) -> Result<ExperimentReport> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    let base = 1.0 + kappa;
    let rows: Vec<(f64, f64)> = js
        .par_iter()
        .map(|&j| {
            let mu = kappa_block_measure(a, j, kappa)?;
            let c = convolve(&mu, &reflect_conj(&mu));
            Ok((c.get(0).norm(), sup_off_zero(&c)))
        })
        .collect::<Result<_>>()?;
    let empty = js.iter().filter(|&&j| kappa_block(j, kappa).is_empty()).count();
    let sups: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (fit_js, fit_sups): (Vec<u32>, Vec<f64>) =
        js.iter().zip(&sups).filter(|(&j, _)| !kappa_block(j, kappa).is_empty()).map(|(&j, &s)| (j, s)).unzip();
    let mut rep = if fit_js.len() >= 2 {
        decay_table("kappa_decay", &fit_js, &fit_sups, base)?
    } else {
        let mut r = ExperimentReport::new("kappa_decay", &["j", "sup", "fitted_slope", "residual"]);
        r.set_metric("degenerate", 1.0);
        r
    };
    rep.set_metric("kappa", kappa);
    rep.set_metric("empty_blocks", empty as f64);
    if empty > 0 {
        rep.note(format!("{empty} empty kappa blocks"));
    }
    if let Some(eps) = rep.metric("eps_hat") {
        let worst = js
            .iter()
            .zip(&rows)
            .map(|(&j, &(at0, sup))| {
                let j = j as f64;
                let tail = base.powf(-(1.0 + eps) * j);
                (at0 / (base.powf(-j) + tail)).max(sup / tail)
            })
            .fold(0.0, f64::max);
        rep.set_metric("worst_ratio", worst);
    }
    Ok(rep)
}

/// Maximum of `|sum_n mu(n) e(n theta)|` over `theta = t / grid_points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSup {
    pub sup: f64,
    /// Bound on how far the true supremum can exceed `sup`.
    pub modulus: f64,
    pub warning: Option<String>,
}

pub fn symbol_sup(mu: &FiniteSignal, grid_points: usize) -> Result<SymbolSup> {
    if grid_points < 2 {
        return Err(Error::Domain("grid needs at least 2 points".into()));
    }
    if mu.is_zero() {
        return Ok(SymbolSup { sup: 0.0, modulus: 0.0, warning: None });
    }
    let values = trig_poly_grid(mu, grid_points);
    let sup = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let moment: f64 = mu.iter().map(|(n, v)| (n as f64).abs() * v.norm()).sum();
    let modulus = std::f64::consts::PI * moment / grid_points as f64;
    let need = 16 * (mu.end() - 1).unsigned_abs().max(mu.start().unsigned_abs()).next_power_of_two() as usize;
    let warning = (grid_points < need)
        .then(|| format!("grid of {grid_points} points is coarser than the recommended {need}"));
    Ok(SymbolSup { sup, modulus, warning })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn t32() -> CoeffSequence {
        CoeffSequence::modulated(AdmissiblePhase::monomial(1.5).unwrap())
    }

    #[test]
    fn small_blocks() {
        let one = CoeffSequence::one();
        assert_eq!(block_measure(&one, 1).unwrap(), FiniteSignal::new(2, vec![c(0.5)]));
        assert_eq!(block_measure(&one, 2).unwrap(), FiniteSignal::new(3, vec![c(1.0 / 3.0), c(0.25)]));
        assert!(block_measure(&CoeffSequence::zero(), 5).unwrap().is_zero());
        assert!(block_measure(&one, 0).is_err());
    }

    #[test]
    fn small_correlations() {
        let one = CoeffSequence::one();
        assert_eq!(correlation(&one, 1, 1).unwrap(), FiniteSignal::new(0, vec![c(0.25)]));
        let c21 = correlation(&one, 2, 1).unwrap();
        assert_eq!(c21.start(), 1);
        assert!((c21.get(1) - c(1.0 / 6.0)).norm() < 1e-15);
        assert!((c21.get(2) - c(1.0 / 8.0)).norm() < 1e-15);
        assert_eq!(c21.len(), 2);
    }

    #[test]
    fn correlation_at_zero_is_l2_norm() {
        for a in [t32(), CoeffSequence::one()] {
            for j in 1..10 {
                let mu = block_measure(&a, j).unwrap();
                let c0 = correlation(&a, j, j).unwrap().get(0);
                assert!(c0.im.abs() < 1e-15);
                assert!((c0.re - mu.norm_l2().powi(2)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn block_norm_bounds() {
        let a = t32();
        for j in 1..16 {
            let mu = block_measure(&a, j).unwrap();
            assert!(mu.norm_l1() <= 1.0);
            assert!(mu.norm_l2().powi(2) <= 2f64.powi(1 - j as i32));
            let corr = correlation(&a, j, j).unwrap();
            assert!(corr.norm_l1() <= mu.norm_l1().powi(2) * (1.0 + 1e-12));
            let zero = correlation(&CoeffSequence::one(), j, j).unwrap().get(0).re;
            assert!(zero >= 2f64.powi(-(j as i32) - 1) && zero <= 2f64.powi(1 - j as i32));
        }
    }

    #[test]
    fn adjoint_symmetry() {
        let a = t32();
        for (j, k) in [(5, 3), (6, 6), (7, 2)] {
            let jk = correlation(&a, j, k).unwrap();
            let kj = correlation(&a, k, j).unwrap();
            for x in -300..300 {
                assert!((jk.get(x) - kj.get(-x).conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn correlation_support() {
        let a = t32();
        let (j, k) = (7u32, 4u32);
        let corr = correlation(&a, j, k).unwrap();
        assert!(corr.start() >= (1 << (j - 1)) - (1 << k));
        assert!(corr.end() - 1 <= (1 << j) - (1 << (k - 1)));
    }

    #[test]
    fn zero_sequence_reports() {
        let rep = diag_decay_report(&CoeffSequence::zero(), &[4, 5, 6]).unwrap();
        assert_eq!(rep.metric("degenerate"), Some(1.0));
        assert!(diag_decay_report(&CoeffSequence::zero(), &[4, 5]).is_err());
        let off = offdiag_decay_report(&CoeffSequence::zero(), 4, &[8, 9], 4, 0.05, None).unwrap();
        assert_eq!(off.metric("max_scaled"), Some(0.0));
        assert!(offdiag_decay_report(&t32(), 6, &[5], 4, 0.05, None).is_err());
        assert!(offdiag_decay_report(&t32(), 6, &[9], 4, 0.05, None).is_err());
    }

    #[test]
    fn kappa_one_reproduces_dyadic_blocks() {
        let a = t32();
        for j in 1..12 {
            assert_eq!(kappa_block_measure(&a, j, 1.0).unwrap(), block_measure(&a, j).unwrap());
        }
        let js: Vec<u32> = (6..11).collect();
        let k1 = kappa_decay_report(&a, 1.0, &js).unwrap();
        let d = diag_decay_report(&a, &js).unwrap();
        assert_eq!(k1.rows, d.rows);
    }

    #[test]
    fn empty_kappa_block_is_flagged() {
        assert!(kappa_block(1, 0.5).is_empty());
        assert!(kappa_block_measure(&CoeffSequence::one(), 1, 0.5).unwrap().is_zero());
        let rep = kappa_decay_report(&CoeffSequence::one(), 0.5, &[1, 2, 8, 9, 10]).unwrap();
        assert!(rep.metric("empty_blocks").unwrap() >= 1.0);
    }

    #[test]
    fn symbol_examples() {
        let mu1 = block_measure(&CoeffSequence::one(), 1).unwrap();
        let s = symbol_sup(&mu1, 64).unwrap();
        assert!((s.sup - 0.5).abs() < 1e-15);
        assert_eq!(symbol_sup(&FiniteSignal::zero(), 64).unwrap().sup, 0.0);
        assert!(symbol_sup(&block_measure(&t32(), 8).unwrap(), 64).unwrap().warning.is_some());
    }

    #[test]
    fn symbol_sup_is_a_max_over_its_grid() {
        let mu = block_measure(&t32(), 6).unwrap();
        let grid = 1 << 10;
        let s = symbol_sup(&mu, grid).unwrap();
        assert!(s.warning.is_none());
        for t in (0..grid).step_by(37) {
            let theta = t as f64 / grid as f64;
            let direct: Complex64 = mu.iter().map(|(n, v)| v * e(n as f64 * theta)).sum();
            assert!(direct.norm() <= s.sup + 1e-12);
        }
    }

    #[test]
    fn symbol_square_below_correlation_l1() {
        let a = t32();
        for j in 6..=12 {
            let mu = block_measure(&a, j).unwrap();
            let s = symbol_sup(&mu, 1 << (j + 4)).unwrap();
            let corr = correlation(&a, j, j).unwrap();
            assert!(s.sup.powi(2) <= corr.norm_l1() * (1.0 + 1e-10));
        }
    }
}
