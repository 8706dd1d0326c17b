//! Slow reference implementations. Each one evaluates a definition literally,
//! with no shared code path beyond coefficient evaluation, and exists to be
//! compared against the fast routines.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::kernel::{dyadic_block, CoeffSequence};
use crate::operators::{enlarged, LocalizedOp, TruncationFamily};
use crate::signal::{DyadicInterval, FiniteSignal, Interval};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Direct double loop.
pub fn convolve(f: &FiniteSignal, g: &FiniteSignal) -> FiniteSignal {
    if f.is_zero() || g.is_zero() {
        return FiniteSignal::zero();
    }
    let start = f.start() + g.start();
    let mut out = vec![ZERO; f.len() + g.len() - 1];
    for (x, u) in f.iter() {
        for (y, v) in g.iter() {
            out[(x + y - start) as usize] += u * v;
        }
    }
    FiniteSignal::new(start, out)
}

/// `(mu_j * mu~_k)(x) = sum_n a(n)/n conj(a(n - x)/(n - x))` over `n` in block `j`, `n - x` in block `k`.
pub fn correlation_at(a: &CoeffSequence, j: u32, k: u32, x: i64) -> Complex64 {
    let bk = dyadic_block(k);
    dyadic_block(j)
        .iter()
        .filter(|n| bk.contains(n - x))
        .map(|n| a.eval(n) / n as f64 * (a.eval(n - x) / (n - x) as f64).conj())
        .sum()
}

/// `sum_{n >= n_min} a(n)/n f(x - n)`, one term at a time.
pub fn truncated_sum_at(a: &CoeffSequence, f: &FiniteSignal, n_min: i64, x: i64) -> Complex64 {
    let n_hi = x - f.start();
    (n_min.max(1)..=n_hi).map(|n| a.eval(n) / n as f64 * f.get(x - n)).sum()
}

/// `max_{N >= 1} |sum_{n >= N} a(n)/n f(x - n)|`, each tail taken as the
/// total minus an ascending prefix.
pub fn hilbert_maximal_at(a: &CoeffSequence, f: &FiniteSignal, x: i64) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    let n_hi = x - f.start();
    if n_hi < 1 {
        return 0.0;
    }
    let terms: Vec<Complex64> = (1..=n_hi).map(|n| a.eval(n) / n as f64 * f.get(x - n)).collect();
    let total: Complex64 = terms.iter().sum();
    let mut prefix = ZERO;
    let mut best = 0.0f64;
    for t in &terms {
        best = best.max((total - prefix).norm());
        prefix += t;
    }
    best
}

pub fn hilbert_maximal(a: &CoeffSequence, f: &FiniteSignal, window: Interval) -> FiniteSignal {
    let xs: Vec<i64> = window.iter().collect();
    let vals: Vec<Complex64> =
        xs.par_iter().map(|&x| Complex64::new(hilbert_maximal_at(a, f, x), 0.0)).collect();
    FiniteSignal::new(window.start, vals)
}

/// `T_I f(x) = sum_{y in I~} mu_i(x - y) f(y)` for `x` in `I`.
pub fn apply_localized(a: &CoeffSequence, interval: &DyadicInterval, f: &FiniteSignal) -> FiniteSignal {
    let block = dyadic_block(interval.level - 3);
    let mu: Vec<Complex64> = block.iter().map(|n| a.eval(n) / n as f64).collect();
    localized_with(&mu, block, interval, f)
}

fn localized_with(mu: &[Complex64], block: Interval, interval: &DyadicInterval, f: &FiniteSignal) -> FiniteSignal {
    let src = enlarged(interval);
    FiniteSignal::from_fn(interval.span(), |x| {
        src.iter()
            .filter(|y| block.contains(x - y))
            .map(|y| mu[(x - y - block.start) as usize] * f.get(y))
            .sum()
    })
}

pub fn apply_localized_op(a: &CoeffSequence, op: &LocalizedOp, f: &FiniteSignal) -> FiniteSignal {
    apply_localized(a, &op.interval(), f)
}

/// Maximal partial sums of `T_I f` over the family, every interval applied separately.
pub fn t_star(family: &TruncationFamily, a: &CoeffSequence, f: &FiniteSignal) -> FiniteSignal {
    let window = family.hull();
    if window.is_empty() {
        return FiniteSignal::zero();
    }
    let per_level: Vec<Vec<Complex64>> = family
        .levels()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&level| {
            let mut acc = vec![ZERO; window.len()];
            let block = dyadic_block(level - 3);
            let mu: Vec<Complex64> = block.iter().map(|n| a.eval(n) / n as f64).collect();
            for iv in family.at_level(level) {
                for (x, v) in localized_with(&mu, block, iv, f).iter() {
                    acc[(x - window.start) as usize] += v;
                }
            }
            acc
        })
        .collect();
    FiniteSignal::from_fn(window, |x| {
        let i = (x - window.start) as usize;
        let mut best = 0.0f64;
        for end in 0..=per_level.len() {
            let s: Complex64 = per_level[..end].iter().map(|l| l[i]).sum();
            best = best.max(s.norm());
        }
        Complex64::new(best, 0.0)
    })
}

/// Maximal dyadic `J` inside `i0` with `<f>_J >= k <f>_{I_0}`, by averaging
/// every dyadic subinterval directly and discarding those under a stopping ancestor.
pub fn cz_bad_intervals(f: &FiniteSignal, i0: &DyadicInterval, k: f64) -> Vec<DyadicInterval> {
    let avg = |j: &DyadicInterval| j.span().iter().map(|x| f.get(x).re).sum::<f64>() / j.len() as f64;
    let avg0 = avg(i0);
    if avg0 == 0.0 {
        return Vec::new();
    }
    let stopping: Vec<DyadicInterval> = (0..i0.level)
        .flat_map(|l| i0.descendants_at(l))
        .filter(|j| avg(j) >= k * avg0)
        .collect();
    let mut out: Vec<DyadicInterval> = stopping
        .iter()
        .filter(|j| !stopping.iter().any(|p| p != *j && p.contains_interval(j)))
        .copied()
        .collect();
    out.sort_by_key(|j| j.start());
    out
}

/// `sum_S |S| <f>_{S,r} <g>_{S,s}`, each average summed point by point.
pub fn sparse_form(intervals: &[DyadicInterval], f: &FiniteSignal, g: &FiniteSignal, r: f64, s: f64) -> f64 {
    let avg = |h: &FiniteSignal, j: &DyadicInterval, p: f64| {
        (j.span().iter().map(|x| h.get(x).norm().powf(p)).sum::<f64>() / j.len() as f64).powf(1.0 / p)
    };
    intervals.iter().map(|j| j.len() as f64 * avg(f, j, r) * avg(g, j, s)).sum()
}

/// `sum_{n=1}^N e(p(n))/n h(x + n alpha mod 1)` summed from `n = N` down in
/// pairwise blocks, each term built from its polar form.
pub fn modulated_rotation_sum(
    phase: &crate::phase::AdmissiblePhase,
    alpha: f64,
    h: impl Fn(f64) -> f64,
    x: f64,
    n: u64,
) -> Complex64 {
    let terms: Vec<Complex64> = (1..=n)
        .rev()
        .map(|m| {
            let t = phase.value(m as f64);
            let angle = std::f64::consts::TAU * (t - t.floor());
            let y = (x + (m as f64 * alpha).fract()).rem_euclid(1.0);
            Complex64::from_polar(h(y) / m as f64, angle)
        })
        .collect();
    pairwise(&terms)
}

fn pairwise(v: &[Complex64]) -> Complex64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise(a) + pairwise(b)
    }
}
