//! The maximal truncation `H*_a`, localized pieces `T_I`, maximal sums over
//! interval families and Monte Carlo operator-norm estimates.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{block_measure, CoeffSequence};
use crate::report::{fit_line, ExperimentReport};
use crate::signal::{convolve, DyadicInterval, FiniteSignal, Interval, MIN_OPERATOR_LEVEL};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `k[n] = a(n)/n` for `n = 0..=n_max` (`k[0] = 0`).
pub fn kernel_table(a: &CoeffSequence, n_max: usize) -> Vec<Complex64> {
    let mut t: Vec<Complex64> = (0..=n_max as i64).into_par_iter().map(|n| a.eval(n) / n.max(1) as f64).collect();
    t[0] = ZERO;
    t
}

/// `x -> max_{N >= 1} |sum_{n >= N} a(n)/n f(x - n)|` on `window`.
///
/// For each `x` the nonzero terms have `x - n` in the support of `f`; the
/// suffix sums are accumulated from the largest such `n` downward, which
/// visits every distinct truncation.
pub fn hilbert_maximal(a: &CoeffSequence, f: &FiniteSignal, window: Interval) -> FiniteSignal {
    truncation_scan(a, f, window, 1, true)
}

/// `x -> sum_{n >= n_min} a(n)/n f(x - n)` on `window`.
pub fn truncated_sum(a: &CoeffSequence, f: &FiniteSignal, n_min: u64, window: Interval) -> FiniteSignal {
    truncation_scan(a, f, window, n_min.max(1) as i64, false)
}

fn truncation_scan(a: &CoeffSequence, f: &FiniteSignal, window: Interval, n_min: i64, maximal: bool) -> FiniteSignal {
    if f.is_zero() || window.is_empty() || a.is_identically_zero() {
        return FiniteSignal::zero();
    }
    let n_max = window.end - 1 - f.start();
    if n_max < n_min {
        return FiniteSignal::zero();
    }
    let table = kernel_table(a, n_max as usize);
    let fv = f.values();
    let f0 = f.start();
    let out: Vec<Complex64> = window
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&x| {
            // y = x - n ranges over supp f with n >= n_min, i.e. y <= x - n_min.
            let y_hi = (x - n_min).min(f.end() - 1);
            if y_hi < f0 {
                return ZERO;
            }
            let mut acc = ZERO;
            let mut best = 0.0f64;
            for y in f0..=y_hi {
                let v = fv[(y - f0) as usize];
                if v == ZERO {
                    continue;
                }
                acc += table[(x - y) as usize] * v;
                if maximal {
                    best = best.max(acc.norm());
                }
            }
            if maximal {
                Complex64::new(best, 0.0)
            } else {
                acc
            }
        })
        .collect();
    FiniteSignal::new(window.start, out)
}

/// `T_I` for `|I| = 2^{i+3}`: `f -> 1_I (mu_i * (f 1_{I~}))` with
/// `I~ = [start(I) - 2^i, end(I))`.
#[derive(Debug, Clone)]
pub struct LocalizedOp {
    interval: DyadicInterval,
    scale: u32,
    mu: Arc<FiniteSignal>,
}

impl LocalizedOp {
    pub fn new(a: &CoeffSequence, interval: DyadicInterval) -> Result<Self> {
        if interval.level < MIN_OPERATOR_LEVEL {
            return Err(Error::Contract(format!("localized operators need |I| >= 16, got level {}", interval.level)));
        }
        let scale = interval.level - 3;
        Ok(LocalizedOp { interval, scale, mu: Arc::new(block_measure(a, scale)?) })
    }

    /// Builds from a precomputed `mu_i`; fails unless `|I| = 2^{i+3}`.
    pub fn with_measure(interval: DyadicInterval, scale: u32, mu: Arc<FiniteSignal>) -> Result<Self> {
        if interval.level != scale + 3 || interval.level < MIN_OPERATOR_LEVEL {
            return Err(Error::Contract(format!(
                "interval level {} does not match scale {scale} (need level = scale + 3 >= 4)",
                interval.level
            )));
        }
        Ok(LocalizedOp { interval, scale, mu })
    }

    pub fn interval(&self) -> DyadicInterval {
        self.interval
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn measure(&self) -> &FiniteSignal {
        &self.mu
    }

    /// `I~`, the left enlargement of `I` by `|I|/8`.
    pub fn enlarged(&self) -> Interval {
        enlarged(&self.interval)
    }
}

pub fn enlarged(i: &DyadicInterval) -> Interval {
    Interval::new(i.start() - (1i64 << i.level.saturating_sub(3)), i.end())
}

pub fn apply_localized(op: &LocalizedOp, f: &FiniteSignal) -> FiniteSignal {
    convolve(&op.mu, &f.restrict(op.enlarged())).restrict(op.interval.span())
}

/// A finite family of same-grid dyadic intervals of length at least 16, bucketed by level.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationFamily {
    offset: i64,
    buckets: BTreeMap<u32, Vec<DyadicInterval>>,
}

impl TruncationFamily {
    pub fn new(intervals: impl IntoIterator<Item = DyadicInterval>) -> Result<Self> {
        let mut buckets: BTreeMap<u32, Vec<DyadicInterval>> = BTreeMap::new();
        let mut offset = None;
        for i in intervals {
            if i.level < MIN_OPERATOR_LEVEL {
                return Err(Error::Contract(format!("interval {i:?} is shorter than 16")));
            }
            match offset {
                None => offset = Some(i.offset),
                Some(o) if o != i.offset => {
                    return Err(Error::Contract(format!("interval {i:?} is on a different grid (offset {o})")));
                }
                _ => {}
            }
            buckets.entry(i.level).or_default().push(i);
        }
        for b in buckets.values_mut() {
            b.sort_by_key(|i| i.start());
            b.dedup();
        }
        Ok(TruncationFamily { offset: offset.unwrap_or(0), buckets })
    }

    pub fn empty() -> Self {
        TruncationFamily { offset: 0, buckets: BTreeMap::new() }
    }

    /// Every interval of the given levels (on grid `offset`) inside `within`.
    pub fn inside(within: Interval, offset: i64, levels: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut all = Vec::new();
        for level in levels {
            let len = 1i64 << level;
            let first = (within.start - offset).div_euclid(len) + i64::from((within.start - offset).rem_euclid(len) != 0);
            let last = (within.end - offset).div_euclid(len);
            for m in first..last {
                all.push(DyadicInterval::new(level, m, offset)?);
            }
        }
        Self::new(all)
    }

    /// All intervals of length at least 16 contained in `i0`.
    pub fn all_within(i0: &DyadicInterval) -> Result<Self> {
        Self::inside(i0.span(), i0.offset, MIN_OPERATOR_LEVEL..=i0.level)
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.buckets.keys().copied()
    }

    pub fn at_level(&self, level: u32) -> &[DyadicInterval] {
        self.buckets.get(&level).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &DyadicInterval> {
        self.buckets.values().flatten()
    }

    /// Smallest interval containing every member.
    pub fn hull(&self) -> Interval {
        self.iter().fold(Interval::new(0, 0), |acc, i| if acc.is_empty() { i.span() } else { acc.hull(&i.span()) })
    }
}

/// `sum_{I in family at level} T_I f`, evaluated as `mu_i * f` masked to the union of the intervals.
pub fn level_sum(family: &TruncationFamily, level: u32, mu: &FiniteSignal, f: &FiniteSignal) -> FiniteSignal {
    let intervals = family.at_level(level);
    if intervals.is_empty() || f.is_zero() {
        return FiniteSignal::zero();
    }
    let lo = intervals.first().unwrap().start();
    let hi = intervals.last().unwrap().end();
    let conv = convolve(mu, &f.restrict(Interval::new(lo - (1i64 << (level - 3)), hi)));
    let mut dense = vec![ZERO; (hi - lo) as usize];
    for i in intervals {
        for x in i.span().iter() {
            dense[(x - lo) as usize] = conv.get(x);
        }
    }
    FiniteSignal::new(lo, dense)
}

/// `x -> sup_eps |sum_{I in family, |I| < eps} T_I f(x)|`.
///
/// Partial sums accumulate whole scales from the smallest upward; the empty sum is included.
pub fn t_star(family: &TruncationFamily, a: &CoeffSequence, f: &FiniteSignal) -> Result<FiniteSignal> {
    let levels: Vec<u32> = family.levels().collect();
    let pieces: Vec<FiniteSignal> = levels
        .par_iter()
        .map(|&l| Ok(level_sum(family, l, &block_measure(a, l - 3)?, f)))
        .collect::<Result<_>>()?;
    Ok(running_max(&pieces, family.hull()))
}

/// Pointwise `max_m |sum_{l <= m} pieces[l]|` on `window`, including the empty sum.
pub fn running_max(pieces: &[FiniteSignal], window: Interval) -> FiniteSignal {
    if window.is_empty() {
        return FiniteSignal::zero();
    }
    let out: Vec<Complex64> = window
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&x| {
            let mut acc = ZERO;
            let mut best = 0.0f64;
            for p in pieces {
                acc += p.get(x);
                best = best.max(acc.norm());
            }
            Complex64::new(best, 0.0)
        })
        .collect();
    FiniteSignal::new(window.start, out)
}

/// Test-signal families for operator-norm estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSignal {
    Rademacher,
    Gaussian,
    Spike,
}

pub fn test_signal(kind: TestSignal, size: usize, rng: &mut impl Rng) -> FiniteSignal {
    let values: Vec<f64> = match kind {
        TestSignal::Rademacher => (0..size).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect(),
        TestSignal::Gaussian => (0..size)
            .map(|_| {
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect(),
        TestSignal::Spike => {
            let mut v = vec![0.0; size];
            v[rng.random_range(0..size)] = 1.0;
            v
        }
    };
    FiniteSignal::from_real(0, &values)
}

/// Lower estimate of `||H*_a||_{l^r -> l^r}` from random test signals on `[0, size)`.
///
/// Output is measured on `[0, 2 size)`. Rows `(r, size, estimate)`; metrics
/// `max_estimate`, `max_envelope_ratio` (estimate over `max(r, 1/(r-1))`) and,
/// with several sizes, `size_spread_r{r}` (largest over smallest estimate).
pub fn opnorm_estimate(
    a: &CoeffSequence,
    rs: &[f64],
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    if let Some(r) = rs.iter().find(|&&r| !(r > 1.0 && r.is_finite())) {
        return Err(Error::Domain(format!("r must lie in (1, inf), got {r}")));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::Domain("signal size must be positive".into()));
    }
    let mut rep = ExperimentReport::new("opnorm", &["r", "size", "estimate"]);
    let kinds = [TestSignal::Rademacher, TestSignal::Gaussian, TestSignal::Spike];
    let mut max_est = 0.0f64;
    let mut max_env = 0.0f64;
    for &size in sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ size as u64);
        let signals: Vec<FiniteSignal> = (0..trials).map(|t| test_signal(kinds[t % kinds.len()], size, &mut rng)).collect();
        let window = Interval::new(0, 2 * size as i64);
        let outputs: Vec<FiniteSignal> = signals.iter().map(|f| hilbert_maximal(a, f, window)).collect();
        for &r in rs {
            let est = signals
                .iter()
                .zip(&outputs)
                .map(|(f, hf)| if f.is_zero() { 0.0 } else { hf.norm_lr(r) / f.norm_lr(r) })
                .fold(0.0, f64::max);
            rep.push_row(vec![r, size as f64, est]);
            max_est = max_est.max(est);
            max_env = max_env.max(est / r.max(1.0 / (r - 1.0)));
        }
    }
    rep.set_metric("max_estimate", max_est);
    rep.set_metric("max_envelope_ratio", max_env);
    if sizes.len() > 1 {
        for &r in rs {
            let ests: Vec<f64> = rep.rows.iter().filter(|row| row[0] == r).map(|row| row[2]).collect();
            let lo = ests.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ests.iter().copied().fold(0.0, f64::max);
            rep.set_metric(&format!("size_spread_r{r}"), if lo > 0.0 { hi / lo } else { f64::NAN });
        }
        let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).log2()).collect();
        let ys: Vec<f64> = rep.rows.iter().filter(|row| row[0] == rs[0]).map(|row| row[2]).collect();
        if let Ok(fit) = fit_line(&xs, &ys) {
            rep.set_metric("size_slope", fit.slope);
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::phase::AdmissiblePhase;

    fn t32() -> CoeffSequence {
        CoeffSequence::modulated(AdmissiblePhase::monomial(1.5).unwrap())
    }

    fn rand_signal(rng: &mut ChaCha8Rng, start: i64, len: usize) -> FiniteSignal {
        FiniteSignal::new(
            start,
            (0..len).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
        )
    }

    #[test]
    fn harmonic_kernel_on_a_delta() {
        let w = Interval::new(-5, 40);
        let h = hilbert_maximal(&CoeffSequence::one(), &FiniteSignal::delta(0), w);
        let t = truncated_sum(&CoeffSequence::one(), &FiniteSignal::delta(0), 1, w);
        for x in w.iter() {
            let expect = if x >= 1 { 1.0 / x as f64 } else { 0.0 };
            assert!((h.get(x).re - expect).abs() < 1e-15);
            assert!((t.get(x).re - expect).abs() < 1e-15);
        }
        assert!(hilbert_maximal(&CoeffSequence::zero(), &FiniteSignal::delta(0), w).is_zero());
        assert!(truncated_sum(&CoeffSequence::one(), &FiniteSignal::delta(0), 100, w).is_zero());
    }

    #[test]
    fn maximal_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let f = rand_signal(&mut rng, -20, 100);
            let w = Interval::new(-30, 150);
            let fast = hilbert_maximal(&t32(), &f, w);
            let slow = oracle::hilbert_maximal(&t32(), &f, w);
            assert!(fast.max_abs_diff(&slow) < 1e-12);
        }
    }

    #[test]
    fn maximal_dominates_truncations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = rand_signal(&mut rng, 0, 64);
        let w = Interval::new(0, 200);
        let h = hilbert_maximal(&t32(), &f, w);
        for n in [1, 2, 5, 17, 63, 64, 150] {
            let t = truncated_sum(&t32(), &f, n, w);
            for x in w.iter() {
                assert!(t.get(x).norm() <= h.get(x).re + 1e-12);
            }
        }
    }

    #[test]
    fn localized_contract_and_locality() {
        let a = t32();
        assert!(LocalizedOp::new(&a, DyadicInterval::new(3, 0, 0).unwrap()).is_err());
        let mu = Arc::new(block_measure(&a, 2).unwrap());
        assert!(LocalizedOp::with_measure(DyadicInterval::new(6, 0, 0).unwrap(), 2, mu).is_err());
        let op = LocalizedOp::new(&a, DyadicInterval::new(6, 1, 3).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = rand_signal(&mut rng, 0, 200);
        let out = apply_localized(&op, &f);
        let span = op.interval().span();
        assert!(out.iter().all(|(x, _)| span.contains(x)));
        let outside = FiniteSignal::from_fn(Interval::new(-50, 250), |x| {
            if op.enlarged().contains(x) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, -2.0)
            }
        });
        assert!(apply_localized(&op, &f.add(&outside)).max_abs_diff(&out) < 1e-13);
    }

    #[test]
    fn per_scale_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = t32();
        for i in 1..=6u32 {
            let f = rand_signal(&mut rng, 37, 300);
            let full = convolve(&block_measure(&a, i).unwrap(), &f);
            let w = full.window();
            let level = i + 3;
            let fam = TruncationFamily::inside(
                Interval::new(w.start - (1 << level), w.end + (1 << level)),
                5,
                [level],
            )
            .unwrap();
            let mut total = FiniteSignal::zero();
            for iv in fam.iter() {
                total = total.add(&apply_localized(&LocalizedOp::new(&a, *iv).unwrap(), &f));
            }
            assert!(total.max_abs_diff(&full) < 1e-10);
        }
    }

    #[test]
    fn t_star_examples() {
        let a = CoeffSequence::one();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = rand_signal(&mut rng, 0, 256);
        assert!(t_star(&TruncationFamily::empty(), &a, &f).unwrap().is_zero());

        let single = TruncationFamily::inside(Interval::new(0, 256), 0, [6]).unwrap();
        let ts = t_star(&single, &a, &f).unwrap();
        let sum = level_sum(&single, 6, &block_measure(&a, 3).unwrap(), &f);
        assert!(ts.max_abs_diff(&sum.map(|v| Complex64::new(v.norm(), 0.0))) < 1e-12);

        let i0 = DyadicInterval::new(8, 0, 0).unwrap();
        let fam = TruncationFamily::all_within(&i0).unwrap();
        let ts = t_star(&fam, &a, &f).unwrap();
        let mut full = FiniteSignal::zero();
        for iv in fam.iter() {
            full = full.add(&apply_localized(&LocalizedOp::new(&a, *iv).unwrap(), &f));
        }
        for x in i0.span().iter() {
            assert!(ts.get(x).re + 1e-12 >= full.get(x).norm());
        }
        assert!(ts.max_abs_diff(&oracle::t_star(&fam, &a, &f)) < 1e-12);
    }

    #[test]
    fn family_grid_checks() {
        let a = DyadicInterval::new(4, 0, 0).unwrap();
        let b = DyadicInterval::new(4, 0, 1).unwrap();
        assert!(TruncationFamily::new([a, b]).is_err());
        assert!(TruncationFamily::new([DyadicInterval::new(2, 0, 0).unwrap()]).is_err());
        let fam = TruncationFamily::all_within(&DyadicInterval::new(6, 0, 0).unwrap()).unwrap();
        assert_eq!(fam.len(), 4 + 2 + 1);
    }

    #[test]
    fn opnorm_zero_and_positive() {
        let rep = opnorm_estimate(&CoeffSequence::zero(), &[2.0], &[64], 3, 1).unwrap();
        assert_eq!(rep.metric("max_estimate"), Some(0.0));
        let rep = opnorm_estimate(&t32(), &[1.5, 2.0], &[256, 512], 3, 1).unwrap();
        assert!(rep.metric("max_estimate").unwrap() > 0.0);
        assert!(opnorm_estimate(&t32(), &[1.0], &[64], 1, 1).is_err());
        assert!(opnorm_estimate(&t32(), &[2.0], &[64], 0, 1).is_err());
    }
}
