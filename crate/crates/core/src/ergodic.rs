//! Modulated one-sided ergodic sums `sum_{n <= N} a(n)/n f(tau^n x)` on simple
//! measure-preserving systems, lacunary tail profiles, and transference to the
//! discrete operator on the integers.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::CoeffSequence;
use crate::operators::{kernel_table, truncated_sum};
use crate::report::{fit_log_decay, ExperimentReport, LineFit};
use crate::signal::{FiniteSignal, Interval};

/// Above this many terms the sums are Neumaier-compensated.
pub const COMPENSATION_THRESHOLD: u64 = 100_000;
/// Agreement required between the ergodic and discrete sums.
pub const TRANSFERENCE_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub trait MPSystem: Sync {
    type Point: Copy + Send + Sync;

    /// `tau^n x`.
    fn orbit(&self, x: Self::Point, n: u64) -> Self::Point;

    /// Coordinate used when tabulating results.
    fn coord(&self, x: Self::Point) -> f64;
}

/// `x -> x + alpha mod 1` on `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    alpha: f64,
}

impl Rotation {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("rotation number must be finite, got {alpha}")));
        }
        let alpha = alpha.rem_euclid(1.0);
        if alpha == 0.0 {
            return Err(Error::Domain("rotation by 0 is the identity".into()));
        }
        Ok(Rotation { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl MPSystem for Rotation {
    type Point = f64;

    fn orbit(&self, x: f64, n: u64) -> f64 {
        (x + (n as f64 * self.alpha).fract()).rem_euclid(1.0)
    }

    fn coord(&self, x: f64) -> f64 {
        x
    }
}

/// `tau x = x - 1` on the integers, so `f(tau^n x) = f(x - n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntegerShift;

impl MPSystem for IntegerShift {
    type Point = i64;

    fn orbit(&self, x: i64, n: u64) -> i64 {
        x - n as i64
    }

    fn coord(&self, x: i64) -> f64 {
        x as f64
    }
}

/// A permutation `sigma` of `{0, .., M-1}` with counting measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FinitePermutation {
    perm: Vec<usize>,
    /// `(cycle, position)` of each point.
    place: Vec<(usize, usize)>,
    cycles: Vec<Vec<usize>>,
}

impl FinitePermutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let m = perm.len();
        if m == 0 {
            return Err(Error::Domain("empty permutation".into()));
        }
        let mut seen = vec![false; m];
        for &p in &perm {
            if p >= m || seen[p] {
                return Err(Error::Domain("not a bijection of {0, .., M-1}".into()));
            }
            seen[p] = true;
        }
        let mut place = vec![(0, 0); m];
        let mut cycles = Vec::new();
        let mut done = vec![false; m];
        for start in 0..m {
            if done[start] {
                continue;
            }
            let mut cyc = Vec::new();
            let mut x = start;
            while !done[x] {
                done[x] = true;
                place[x] = (cycles.len(), cyc.len());
                cyc.push(x);
                x = perm[x];
            }
            cycles.push(cyc);
        }
        Ok(FinitePermutation { perm, place, cycles })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }
}

impl TryFrom<Vec<usize>> for FinitePermutation {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        FinitePermutation::new(v)
    }
}

impl From<FinitePermutation> for Vec<usize> {
    fn from(p: FinitePermutation) -> Vec<usize> {
        p.perm
    }
}

impl MPSystem for FinitePermutation {
    type Point = usize;

    fn orbit(&self, x: usize, n: u64) -> usize {
        let (c, pos) = self.place[x];
        let cyc = &self.cycles[c];
        cyc[((pos as u64 + n) % cyc.len() as u64) as usize]
    }

    fn coord(&self, x: usize) -> f64 {
        x as f64
    }
}

/// Right-continuous step function on `[0, 1)`: `values[k]` on `[breaks[k-1], breaks[k])`
/// with `breaks[-1] = 0` and `breaks[len] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::Domain(format!("{} breakpoints need {} values", breaks.len(), breaks.len() + 1)));
        }
        if breaks.iter().any(|b| !(*b > 0.0 && *b < 1.0)) || breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("breakpoints must increase strictly inside (0, 1)".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("step values must be finite".into()));
        }
        Ok(StepFunction { breaks, values })
    }

    /// `1_{[0, 1/2)} - 1/2`.
    pub fn centered_half() -> Self {
        StepFunction { breaks: vec![0.5], values: vec![0.5, -0.5] }
    }

    pub fn zero() -> Self {
        StepFunction { breaks: Vec::new(), values: vec![0.0] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        self.values[self.breaks.partition_point(|&b| b <= x)]
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Running Neumaier sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: Complex64,
    carry: Complex64,
}

impl Compensated {
    fn add(&mut self, v: Complex64) {
        let re = two_sum(self.sum.re, v.re);
        let im = two_sum(self.sum.im, v.im);
        self.sum = Complex64::new(re.0, im.0);
        self.carry += Complex64::new(re.1, im.1);
    }

    fn value(&self) -> Complex64 {
        self.sum + self.carry
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = if a.abs() >= b.abs() { (a - s) + b } else { (b - s) + a };
    (s, err)
}

/// Partial sums `S_1..S_N` from a kernel table `k[n] = a(n)/n`.
fn partial_sums<S: MPSystem, F>(sys: &S, table: &[Complex64], f: &F, x: S::Point, n: u64) -> Vec<Complex64>
where
    F: Fn(S::Point) -> Complex64 + Sync,
{
    let mut out = Vec::with_capacity(n as usize);
    if n > COMPENSATION_THRESHOLD {
        let mut acc = Compensated::default();
        for m in 1..=n {
            acc.add(table[m as usize] * f(sys.orbit(x, m)));
            out.push(acc.value());
        }
    } else {
        let mut acc = ZERO;
        for m in 1..=n {
            acc += table[m as usize] * f(sys.orbit(x, m));
            out.push(acc);
        }
    }
    out
}

/// `sum_{n=1}^N a(n)/n f(tau^n x)`.
pub fn modulated_sum<S: MPSystem, F>(sys: &S, a: &CoeffSequence, f: &F, x: S::Point, n: u64) -> Complex64
where
    F: Fn(S::Point) -> Complex64 + Sync,
{
    if n > COMPENSATION_THRESHOLD {
        let mut acc = Compensated::default();
        for m in 1..=n {
            acc.add(a.eval(m as i64) / m as f64 * f(sys.orbit(x, m)));
        }
        acc.value()
    } else {
        (1..=n).map(|m| a.eval(m as i64) / m as f64 * f(sys.orbit(x, m))).sum()
    }
}

/// Lacunary block `j` in `1..=N`: `[1, floor(1+kappa)]` for `j = 0`, then
/// `(floor((1+kappa)^j), floor((1+kappa)^{j+1})]`.
pub fn lacunary_block(j: u32, kappa: f64) -> (u64, u64) {
    let lo = if j == 0 { 1 } else { (1.0 + kappa).powi(j as i32).floor() as u64 + 1 };
    (lo, (1.0 + kappa).powi(j as i32 + 1).floor() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub kappa: f64,
    pub j_max: u32,
    pub xs: Vec<f64>,
    /// `block[x][j]`: sum over lacunary block `j`.
    pub block: Vec<Vec<Complex64>>,
    /// `partial[x][j]`: partial sum through the end of block `j`.
    pub partial: Vec<Vec<Complex64>>,
    /// `tail_sup[x][j] = max_{M_j < N <= N_max} |S_N - S_{M_j}|` with `M_j` the
    /// last index before block `j`.
    pub tail_sup: Vec<Vec<f64>>,
    /// Fit of `log_{1+kappa} max_x |block_j|` against `j`, over `j >= fit_from`.
    pub fit: Option<LineFit>,
    pub fit_from: u32,
}

impl TailProfile {
    pub fn max_block(&self, j: u32) -> f64 {
        self.block.iter().map(|b| b[j as usize].norm()).fold(0.0, f64::max)
    }

    pub fn max_tail_sup(&self, j: u32) -> f64 {
        self.tail_sup.iter().map(|t| t[j as usize]).fold(0.0, f64::max)
    }

    /// `(1+kappa)^{intercept + slope j}` from the fitted decay.
    pub fn predicted(&self, j: u32) -> Option<f64> {
        self.fit.as_ref().map(|f| (1.0 + self.kappa).powf(f.predict(j as f64)))
    }

    /// Rows `(x, j, block_sum_abs, running_tail_sup)`.
    pub fn to_report(&self) -> ExperimentReport {
        let mut rep = ExperimentReport::new("tail_profile", &["x", "j", "block_sum_abs", "running_tail_sup"]);
        for (ix, x) in self.xs.iter().enumerate() {
            for j in 0..=self.j_max as usize {
                rep.push_row(vec![*x, j as f64, self.block[ix][j].norm(), self.tail_sup[ix][j]]);
            }
        }
        rep.set_metric("kappa", self.kappa);
        if let Some(fit) = &self.fit {
            rep.set_metric("exponent", fit.slope);
            rep.set_flag("decay", fit.slope < 0.0);
        }
        let last = self.max_tail_sup(self.j_max);
        rep.set_metric("max_tail_sup_last", last);
        if let Some(p) = self.predicted(self.j_max) {
            rep.set_metric("predicted_last", p);
            rep.set_metric("tail_to_model", if p > 0.0 { last / p } else { f64::INFINITY });
        }
        rep
    }
}

/// Lacunary block sums and running tail oscillation at each sample point.
pub fn tail_profile<S: MPSystem, F>(
    sys: &S,
    a: &CoeffSequence,
    f: &F,
    xs: &[S::Point],
    kappa: f64,
    j_max: u32,
    fit_from: u32,
) -> Result<TailProfile>
where
    F: Fn(S::Point) -> Complex64 + Sync,
{
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    let n_max = lacunary_block(j_max, kappa).1;
    if n_max > 1 << 26 {
        return Err(Error::Resource(format!("{n_max} terms per point exceeds 2^26")));
    }
    let table = kernel_table(a, n_max as usize);
    let blocks: Vec<(u64, u64)> = (0..=j_max).map(|j| lacunary_block(j, kappa)).collect();
    let per_x: Vec<(Vec<Complex64>, Vec<Complex64>, Vec<f64>)> = xs
        .par_iter()
        .map(|&x| {
            let s = partial_sums(sys, &table, f, x, n_max);
            let at = |m: u64| if m == 0 { ZERO } else { s[m as usize - 1] };
            let mut block = Vec::with_capacity(blocks.len());
            let mut partial = Vec::with_capacity(blocks.len());
            let mut sup = Vec::with_capacity(blocks.len());
            for &(lo, hi) in &blocks {
                let base = at(lo - 1);
                block.push(at(hi) - base);
                partial.push(at(hi));
                let best = s[lo as usize - 1..].iter().map(|v| (v - base).norm_sqr()).fold(0.0, f64::max);
                sup.push(best.sqrt());
            }
            (block, partial, sup)
        })
        .collect();
    let mut prof = TailProfile {
        kappa,
        j_max,
        xs: xs.iter().map(|&x| sys.coord(x)).collect(),
        block: Vec::new(),
        partial: Vec::new(),
        tail_sup: Vec::new(),
        fit: None,
        fit_from,
    };
    for (b, p, t) in per_x {
        prof.block.push(b);
        prof.partial.push(p);
        prof.tail_sup.push(t);
    }
    let js: Vec<f64> = (fit_from..=j_max).map(|j| j as f64).collect();
    let ys: Vec<f64> = (fit_from..=j_max).map(|j| prof.max_block(j)).collect();
    prof.fit = fit_log_decay(&js, &ys, 1.0 + kappa).ok();
    Ok(prof)
}

/// `n`-point midpoint grid on `[0, 1)` shifted by `offset`.
pub fn sample_points(n: usize, offset: f64) -> Vec<f64> {
    (0..n).map(|k| ((k as f64 + 0.5) / n as f64 + offset).rem_euclid(1.0)).collect()
}

/// On the shift system, `sum_{n <= N} a(n)/n f(x - n)` against
/// `T_1 f(x) - T_{N+1} f(x)` built from the discrete truncations, at every `x` of `window`.
/// The maximal variant compares `max |S_M|` over `M` in `{1, 2, 4, .., N}`.
///
/// Rows `(x, ergodic_re, ergodic_im, discrete_re, discrete_im, abs_diff)`.
pub fn transference_check(a: &CoeffSequence, f: &FiniteSignal, n: u64, window: Interval) -> Result<ExperimentReport> {
    if n == 0 {
        return Err(Error::Domain("N must be >= 1".into()));
    }
    let full = truncated_sum(a, f, 1, window);
    let tail = truncated_sum(a, f, n + 1, window);
    let table = kernel_table(a, n as usize);
    let fx = |y: i64| f.get(y);
    let xs: Vec<i64> = window.iter().collect();
    let cuts: Vec<u64> = (0..64).map(|k| 1u64 << k).take_while(|&c| c < n).chain([n]).collect();
    let ergodic: Vec<Vec<Complex64>> = xs
        .par_iter()
        .map(|&x| {
            let s = partial_sums(&IntegerShift, &table, &fx, x, n);
            cuts.iter().map(|&c| s[c as usize - 1]).collect()
        })
        .collect();
    let mut rep = ExperimentReport::new(
        "transference",
        &["x", "ergodic_re", "ergodic_im", "discrete_re", "discrete_im", "abs_diff"],
    );
    let mut worst = 0.0f64;
    for (&x, e) in xs.iter().zip(&ergodic) {
        let e = *e.last().unwrap();
        let d = full.get(x) - tail.get(x);
        let diff = (e - d).norm();
        worst = worst.max(diff);
        rep.push_row(vec![x as f64, e.re, e.im, d.re, d.im, diff]);
    }
    // maximal variant over the cuts N = 1, 2, 4, .., N
    let tails: Vec<FiniteSignal> = cuts.iter().map(|&c| truncated_sum(a, f, c + 1, window)).collect();
    let mut worst_max = 0.0f64;
    for (&x, e) in xs.iter().zip(&ergodic) {
        let emax = e.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let dmax = tails.iter().map(|t| (full.get(x) - t.get(x)).norm()).fold(0.0, f64::max);
        worst_max = worst_max.max((emax - dmax).abs());
    }
    rep.set_metric("max_abs_diff", worst);
    rep.set_metric("max_abs_diff_maximal", worst_max);
    rep.set_flag("exact", worst <= TRANSFERENCE_TOLERANCE && worst_max <= TRANSFERENCE_TOLERANCE);
    Ok(rep)
}
