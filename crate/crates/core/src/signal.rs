//! Finitely supported signals on the integers and dyadic interval arithmetic.
//!
//! A [`FiniteSignal`] is stored densely over its trimmed support window, so two
//! signals are equal exactly when their `(start, values)` pairs are equal.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest level whose intervals can carry a localized operator (`|I| >= 16`).
pub const MIN_OPERATOR_LEVEL: u32 = 4;

/// Default support size above which [`convolve`] switches to the FFT path.
pub const DEFAULT_FFT_THRESHOLD: usize = 256;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Half-open integer interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub start: i64,
    pub end: i64,
}

impl Interval {
    pub fn new(start: i64, end: i64) -> Self {
        Interval { start, end: end.max(start) }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, x: i64) -> bool {
        self.start <= x && x < self.end
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.is_empty() || (self.start <= other.start && other.end <= self.end)
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.start.max(other.start), self.end.min(other.end))
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        Interval::new(self.start.min(other.start), self.end.max(other.end))
    }

    pub fn iter(&self) -> std::ops::Range<i64> {
        self.start..self.end
    }
}

/// `[offset + index * 2^level, offset + (index + 1) * 2^level)`.
///
/// Intervals sharing an offset are nested or disjoint. Level 0 (single points)
/// is allowed so stopping intervals of any length can be represented; the
/// localized operators additionally require `level >= MIN_OPERATOR_LEVEL`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: i64,
    pub offset: i64,
}

impl DyadicInterval {
    pub fn new(level: u32, index: i64, offset: i64) -> Result<Self> {
        if level > 62 {
            return Err(Error::Domain(format!("dyadic level {level} is too large")));
        }
        Ok(DyadicInterval { level, index, offset })
    }

    /// The interval of the given level and grid offset containing `x`.
    pub fn containing(x: i64, level: u32, offset: i64) -> Self {
        let index = (x - offset).div_euclid(1i64 << level);
        DyadicInterval { level, index, offset }
    }

    pub fn len(&self) -> usize {
        1usize << self.level
    }

    pub fn start(&self) -> i64 {
        self.offset + self.index * (1i64 << self.level)
    }

    pub fn end(&self) -> i64 {
        self.start() + (1i64 << self.level)
    }

    pub fn span(&self) -> Interval {
        Interval::new(self.start(), self.end())
    }

    pub fn contains(&self, x: i64) -> bool {
        self.span().contains(x)
    }

    /// Whether `other` is a (not necessarily proper) subinterval.
    pub fn contains_interval(&self, other: &DyadicInterval) -> bool {
        self.span().contains_interval(&other.span())
    }

    pub fn is_disjoint(&self, other: &DyadicInterval) -> bool {
        self.span().intersect(&other.span()).is_empty()
    }

    pub fn parent(&self) -> DyadicInterval {
        DyadicInterval { level: self.level + 1, index: self.index.div_euclid(2), offset: self.offset }
    }

    /// Left and right halves; `None` at level 0.
    pub fn children(&self) -> Option<[DyadicInterval; 2]> {
        if self.level == 0 {
            return None;
        }
        let level = self.level - 1;
        Some([
            DyadicInterval { level, index: 2 * self.index, offset: self.offset },
            DyadicInterval { level, index: 2 * self.index + 1, offset: self.offset },
        ])
    }

    /// All grid intervals of `level` contained in `self` (empty if `level > self.level`).
    pub fn descendants_at(&self, level: u32) -> Vec<DyadicInterval> {
        if level > self.level {
            return Vec::new();
        }
        let factor = 1i64 << (self.level - level);
        (self.index * factor..(self.index + 1) * factor)
            .map(|index| DyadicInterval { level, index, offset: self.offset })
            .collect()
    }
}

impl From<DyadicInterval> for Interval {
    fn from(d: DyadicInterval) -> Self {
        d.span()
    }
}

impl From<std::ops::Range<i64>> for Interval {
    fn from(r: std::ops::Range<i64>) -> Self {
        Interval::new(r.start, r.end)
    }
}

/// One scale of the translated dyadic grid: the intervals of length `2^level`
/// meeting `range`, in increasing order. They are disjoint and cover `range`.
pub fn scale_partition(level: u32, offset: i64, range: Interval) -> Result<Vec<DyadicInterval>> {
    if level < MIN_OPERATOR_LEVEL {
        return Err(Error::Domain(format!("scale partition requires level >= {MIN_OPERATOR_LEVEL}, got {level}")));
    }
    if range.is_empty() {
        return Ok(Vec::new());
    }
    let first = DyadicInterval::containing(range.start, level, offset).index;
    let last = DyadicInterval::containing(range.end - 1, level, offset).index;
    Ok((first..=last).map(|index| DyadicInterval { level, index, offset }).collect())
}

/// A finitely supported complex function on the integers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FiniteSignal {
    start: i64,
    values: Vec<Complex64>,
}

impl FiniteSignal {
    /// Builds a signal whose value at `start + i` is `values[i]`, trimming zeros at both ends.
    pub fn new(start: i64, values: Vec<Complex64>) -> Self {
        let mut s = FiniteSignal { start, values };
        s.trim();
        s
    }

    pub fn from_real(start: i64, values: &[f64]) -> Self {
        Self::new(start, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zero() -> Self {
        FiniteSignal { start: 0, values: Vec::new() }
    }

    /// Unit mass at `a`.
    pub fn delta(a: i64) -> Self {
        FiniteSignal { start: a, values: vec![Complex64::new(1.0, 0.0)] }
    }

    pub fn indicator(range: Interval) -> Self {
        Self::new(range.start, vec![Complex64::new(1.0, 0.0); range.len()])
    }

    pub fn from_fn(range: Interval, mut f: impl FnMut(i64) -> Complex64) -> Self {
        Self::new(range.start, range.iter().map(&mut f).collect())
    }

    fn trim(&mut self) {
        let lead = self.values.iter().take_while(|v| **v == ZERO).count();
        if lead == self.values.len() {
            self.values.clear();
            self.start = 0;
            return;
        }
        let trail = self.values.iter().rev().take_while(|v| **v == ZERO).count();
        self.values.truncate(self.values.len() - trail);
        if lead > 0 {
            self.values.drain(..lead);
            self.start += lead as i64;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    /// First support point (0 for the zero signal).
    pub fn start(&self) -> i64 {
        self.start
    }

    /// One past the last support point.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    /// Number of stored samples (the support diameter).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// The trimmed support window, or `None` for the zero signal.
    pub fn support(&self) -> Option<Interval> {
        (!self.is_zero()).then(|| Interval::new(self.start, self.end()))
    }

    pub fn window(&self) -> Interval {
        Interval::new(self.start, self.end())
    }

    pub fn get(&self, x: i64) -> Complex64 {
        let i = x - self.start;
        if i < 0 || i >= self.values.len() as i64 {
            ZERO
        } else {
            self.values[i as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.values.iter().enumerate().map(move |(i, v)| (self.start + i as i64, *v))
    }

    /// Samples over an arbitrary window, zero-filled outside the support.
    pub fn to_dense(&self, range: Interval) -> Vec<Complex64> {
        range.iter().map(|x| self.get(x)).collect()
    }

    /// `f * 1_range`.
    pub fn restrict(&self, range: Interval) -> FiniteSignal {
        let w = self.window().intersect(&range);
        if w.is_empty() {
            return FiniteSignal::zero();
        }
        let lo = (w.start - self.start) as usize;
        let hi = (w.end - self.start) as usize;
        FiniteSignal::new(w.start, self.values[lo..hi].to_vec())
    }

    pub fn scale(&self, c: Complex64) -> FiniteSignal {
        FiniteSignal::new(self.start, self.values.iter().map(|v| v * c).collect())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> FiniteSignal {
        FiniteSignal::new(self.start, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn add(&self, other: &FiniteSignal) -> FiniteSignal {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &FiniteSignal) -> FiniteSignal {
        self.combine(other, |a, b| a - b)
    }

    fn combine(&self, other: &FiniteSignal, op: impl Fn(Complex64, Complex64) -> Complex64) -> FiniteSignal {
        if other.is_zero() {
            return self.map(|a| op(a, ZERO));
        }
        if self.is_zero() {
            return other.map(|b| op(ZERO, b));
        }
        let w = self.window().hull(&other.window());
        FiniteSignal::from_fn(w, |x| op(self.get(x), other.get(x)))
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn norm_lr(&self, r: f64) -> f64 {
        if r == 1.0 {
            return self.norm_l1();
        }
        if r == 2.0 {
            return self.norm_l2();
        }
        self.values.iter().map(|v| v.norm().powf(r)).sum::<f64>().powf(1.0 / r)
    }

    /// Largest pointwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &FiniteSignal) -> f64 {
        let w = self.window().hull(&other.window());
        w.iter().map(|x| (self.get(x) - other.get(x)).norm()).fold(0.0, f64::max)
    }

    /// `sum_x f(x) conj(g(x))`.
    pub fn inner(&self, other: &FiniteSignal) -> Complex64 {
        let w = self.window().intersect(&other.window());
        w.iter().map(|x| self.get(x) * other.get(x).conj()).sum()
    }

    /// True when every value is real (imaginary part exactly zero) and nonnegative.
    pub fn is_real_nonnegative(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0 && v.re >= 0.0)
    }

    /// Fixture text format: one `x value_re value_im` line per support point.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (x, v) in self.iter() {
            let _ = writeln!(out, "{x} {:e} {:e}", v.re, v.im);
        }
        out
    }

    /// Parses the fixture format. Points may come in any order; missing points are zero.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Parse { line: lineno + 1, msg: msg.to_string() };
            let mut parts = line.split_whitespace();
            let x: i64 = parts.next().ok_or_else(|| bad("missing x"))?.parse().map_err(|_| bad("bad x"))?;
            let re: f64 = parts.next().ok_or_else(|| bad("missing real part"))?.parse().map_err(|_| bad("bad real part"))?;
            let im: f64 = parts.next().ok_or_else(|| bad("missing imaginary part"))?.parse().map_err(|_| bad("bad imaginary part"))?;
            if parts.next().is_some() {
                return Err(bad("trailing fields"));
            }
            points.push((x, Complex64::new(re, im)));
        }
        if points.is_empty() {
            return Ok(FiniteSignal::zero());
        }
        let lo = points.iter().map(|p| p.0).min().unwrap();
        let hi = points.iter().map(|p| p.0).max().unwrap();
        let mut values = vec![ZERO; (hi - lo + 1) as usize];
        for (x, v) in points {
            values[(x - lo) as usize] = v;
        }
        Ok(FiniteSignal::new(lo, values))
    }
}

/// `<f>_{I,r} = (|I|^{-1} sum_{x in I} |f(x)|^r)^{1/r}`, treating `f` as zero off its support.
pub fn average(f: &FiniteSignal, interval: impl Into<Interval>, r: f64) -> Result<f64> {
    let interval = interval.into();
    if !(r >= 1.0) {
        return Err(Error::Domain(format!("average exponent must be >= 1, got {r}")));
    }
    if interval.is_empty() {
        return Err(Error::Domain("average over an empty interval".into()));
    }
    let n = interval.len() as f64;
    let w = f.window().intersect(&interval);
    let vals = w.iter().map(|x| f.get(x).norm());
    Ok(if r == 1.0 {
        vals.sum::<f64>() / n
    } else if r == 2.0 {
        (vals.map(|v| v * v).sum::<f64>() / n).sqrt()
    } else {
        (vals.map(|v| v.powf(r)).sum::<f64>() / n).powf(1.0 / r)
    })
}

/// `g~(x) = conj(g(-x))`.
pub fn reflect_conj(g: &FiniteSignal) -> FiniteSignal {
    if g.is_zero() {
        return FiniteSignal::zero();
    }
    let values = g.values.iter().rev().map(|v| v.conj()).collect();
    FiniteSignal::new(-(g.end() - 1), values)
}

/// Convolution strategy knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolveConfig {
    /// Direct evaluation is used while the shorter operand has at most this many samples.
    pub fft_threshold: usize,
}

impl Default for ConvolveConfig {
    fn default() -> Self {
        ConvolveConfig { fft_threshold: DEFAULT_FFT_THRESHOLD }
    }
}

/// Exact discrete convolution with the default strategy.
pub fn convolve(f: &FiniteSignal, g: &FiniteSignal) -> FiniteSignal {
    convolve_with(f, g, &ConvolveConfig::default())
}

pub fn convolve_with(f: &FiniteSignal, g: &FiniteSignal, cfg: &ConvolveConfig) -> FiniteSignal {
    if f.is_zero() || g.is_zero() {
        return FiniteSignal::zero();
    }
    let start = f.start + g.start;
    let values = if f.len().min(g.len()) <= cfg.fft_threshold {
        convolve_direct(&f.values, &g.values)
    } else {
        convolve_fft(&f.values, &g.values)
    };
    FiniteSignal::new(start, values)
}

fn convolve_direct(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (j, &s) in short.iter().enumerate() {
        if s == ZERO {
            continue;
        }
        for (o, &l) in out[j..j + long.len()].iter_mut().zip(long) {
            *o += l * s;
        }
    }
    out
}

fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

fn convolve_fft(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let (fwd, inv) = fft_pair(n);
    let mut fa = a.to_vec();
    fa.resize(n, ZERO);
    let mut fb = b.to_vec();
    fb.resize(n, ZERO);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.truncate(out_len);
    for v in fa.iter_mut() {
        *v *= scale;
    }
    fa
}

/// Dense trigonometric sums `sum_n c(n) e(n t / grid)` for `t = 0..grid`.
pub(crate) fn trig_poly_grid(f: &FiniteSignal, grid: usize) -> Vec<Complex64> {
    let mut buf = vec![ZERO; grid];
    for (n, v) in f.iter() {
        buf[n.rem_euclid(grid as i64) as usize] += v;
    }
    let (_, inv) = fft_pair(grid);
    inv.process(&mut buf);
    buf
}
