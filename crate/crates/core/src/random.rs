//! Random one-sided kernels: reproducible coefficient sequences, Chernoff tails,
//! random block correlations and exceptional-set covers.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{block_measure, correlation, sup_off_zero, CoeffSequence, DEFAULT_MAX_CORRELATION_SCALE};
use crate::operators::enlarged;
use crate::report::{fit_line, ExperimentReport};
use crate::signal::{convolve, reflect_conj, DyadicInterval, FiniteSignal, MIN_OPERATOR_LEVEL};
use crate::sparse::{build_sparse_collection, SparseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Distribution {
    Rademacher,
    /// Uniform on `[-1, 1]`.
    Uniform,
    /// `1_{U < p} - p`.
    Bernoulli(f64),
    /// Degenerate `X = 0`.
    Zero,
}

impl Distribution {
    /// Maps one uniform 64-bit word to a sample.
    fn sample(&self, word: u64) -> f64 {
        match *self {
            Distribution::Rademacher => {
                if word >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Distribution::Uniform => unit(word) * 2.0 - 1.0,
            Distribution::Bernoulli(p) => {
                if unit(word) < p {
                    1.0 - p
                } else {
                    -p
                }
            }
            Distribution::Zero => 0.0,
        }
    }

    /// Variance of one sample.
    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Rademacher => 1.0,
            Distribution::Uniform => 1.0 / 3.0,
            Distribution::Bernoulli(p) => p * (1.0 - p),
            Distribution::Zero => 0.0,
        }
    }
}

fn unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "rademacher" => Ok(Distribution::Rademacher),
            "uniform" => Ok(Distribution::Uniform),
            "zero" => Ok(Distribution::Zero),
            _ => {
                if let Some(p) = s.strip_prefix("bernoulli:") {
                    let p: f64 = p.parse().map_err(|_| Error::Config(format!("bad bernoulli parameter '{p}'")))?;
                    if !(p > 0.0 && p < 1.0) {
                        return Err(Error::Config(format!("bernoulli parameter must lie in (0,1), got {p}")));
                    }
                    Ok(Distribution::Bernoulli(p))
                } else {
                    Err(Error::Config(format!("unknown distribution '{s}'")))
                }
            }
        }
    }
}

impl TryFrom<String> for Distribution {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Distribution> for String {
    fn from(d: Distribution) -> String {
        d.to_string()
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Rademacher => write!(f, "rademacher"),
            Distribution::Uniform => write!(f, "uniform"),
            Distribution::Bernoulli(p) => write!(f, "bernoulli:{p}"),
            Distribution::Zero => write!(f, "zero"),
        }
    }
}

/// `n -> X_n(omega)` for a fixed seed. Word `n` of the ChaCha8 stream keyed by
/// `seed` drives `X_n`, so any `n` can be evaluated without the others; the
/// first `n_max` values are cached.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "RealizationSpec", into = "RealizationSpec")]
pub struct RandomRealization {
    seed: u64,
    dist: Distribution,
    cache: Arc<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RealizationSpec {
    seed: u64,
    dist: Distribution,
    n_max: usize,
}

impl From<RealizationSpec> for RandomRealization {
    fn from(s: RealizationSpec) -> Self {
        RandomRealization::new(s.dist, s.seed, s.n_max.max(1))
    }
}

impl From<RandomRealization> for RealizationSpec {
    fn from(r: RandomRealization) -> Self {
        RealizationSpec { seed: r.seed, dist: r.dist, n_max: r.cache.len() }
    }
}

impl PartialEq for RandomRealization {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.dist == other.dist
    }
}

impl RandomRealization {
    fn new(dist: Distribution, seed: u64, n_max: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cache = (0..n_max).map(|_| dist.sample(rng.next_u64())).collect();
        RandomRealization { seed, dist, cache: Arc::new(cache) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn distribution(&self) -> Distribution {
        self.dist
    }

    pub fn cached_len(&self) -> usize {
        self.cache.len()
    }

    /// `X_n` for `n >= 1`; zero for `n < 1`.
    pub fn value(&self, n: i64) -> f64 {
        if n < 1 {
            return 0.0;
        }
        match self.cache.get((n - 1) as usize) {
            Some(&v) => v,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_word_pos(2 * (n as u128 - 1));
                self.dist.sample(rng.next_u64())
            }
        }
    }
}

/// Builds a reproducible realization with `X_1..X_{n_max}` cached.
pub fn sample_sequence(dist: Distribution, seed: u64, n_max: usize) -> Result<RandomRealization> {
    if n_max == 0 {
        return Err(Error::Domain("n_max must be >= 1".into()));
    }
    Ok(RandomRealization::new(dist, seed, n_max))
}

/// Bit-sliced sum of `n` Rademacher signs from one stream.
fn rademacher_sum(rng: &mut ChaCha8Rng, n: usize) -> f64 {
    let mut total: i64 = 0;
    let mut left = n;
    while left > 0 {
        let take = left.min(64);
        let word = if take == 64 { rng.next_u64() } else { rng.next_u64() & ((1u64 << take) - 1) };
        total += 2 * word.count_ones() as i64 - take as i64;
        left -= take;
    }
    total as f64
}

/// Monte Carlo tail `P(|sum_{n <= N} Z_n| >= A)` against
/// `prefactor * max(e^{-c A^2 / V_N}, e^{-c A})` with `V_N = N Var Z`.
///
/// `c` is minus the least-squares slope of `ln P` in `A^2 / V_N` over the
/// points with positive empirical probability; the prefactor is then the least
/// value making the bound dominate every empirical point. Trial `t` reads
/// stream `t` of the ChaCha8 generator keyed by `seed`.
///
/// Rows `(a, x, empirical, bound)` with `x = A^2 / V_N`.
pub fn chernoff_check(dist: Distribution, n: usize, a_grid: &[f64], trials: usize, seed: u64) -> Result<ExperimentReport> {
    if trials < 1000 {
        return Err(Error::Domain(format!("need at least 1000 trials, got {trials}")));
    }
    if n == 0 {
        return Err(Error::Domain("N must be >= 1".into()));
    }
    let sums: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            match dist {
                Distribution::Rademacher => rademacher_sum(&mut rng, n),
                Distribution::Zero => 0.0,
                d => (0..n).map(|_| d.sample(rng.next_u64())).sum(),
            }
            .abs()
        })
        .collect();
    let v_n = n as f64 * dist.variance();
    let mut rep = ExperimentReport::new("chernoff", &["a", "x", "empirical", "bound"]);
    let mut xs = Vec::new();
    let mut ps = Vec::new();
    for &a in a_grid {
        let hits = sums.iter().filter(|&&s| s >= a).count();
        let p = hits as f64 / trials as f64;
        let x = if v_n > 0.0 { a * a / v_n } else { f64::INFINITY };
        xs.push(x);
        ps.push(p);
    }
    let monotone = {
        let mut order: Vec<usize> = (0..a_grid.len()).collect();
        order.sort_by(|&i, &j| a_grid[i].total_cmp(&a_grid[j]));
        order.windows(2).all(|w| ps[w[1]] <= ps[w[0]])
    };
    let (fx, fy): (Vec<f64>, Vec<f64>) =
        xs.iter().zip(&ps).filter(|(x, p)| **p > 0.0 && x.is_finite()).map(|(x, p)| (*x, p.ln())).unzip();
    let c = match fit_line(&fx, &fy) {
        Ok(fit) => -fit.slope,
        Err(_) => 0.0,
    };
    let shape = |a: f64, x: f64| (-c * x).exp().max((-c * a).exp());
    let prefactor = a_grid
        .iter()
        .zip(xs.iter().zip(&ps))
        .map(|(&a, (&x, &p))| if p > 0.0 { p / shape(a, x) } else { 0.0 })
        .fold(0.0, f64::max);
    let mut margin = f64::INFINITY;
    for (&a, (&x, &p)) in a_grid.iter().zip(xs.iter().zip(&ps)) {
        let bound = prefactor * shape(a, x);
        if p > 0.0 {
            margin = margin.min(bound / p);
        }
        rep.push_row(vec![a, x, p, bound]);
    }
    rep.set_metric("c", c);
    rep.set_metric("prefactor", prefactor);
    rep.set_metric("margin", margin);
    rep.set_metric("v_n", v_n);
    rep.set_metric("trials", trials as f64);
    rep.set_metric("fitted_points", fx.len() as f64);
    rep.set_flag("monotone", monotone);
    Ok(rep)
}

/// Reference size of `sup |mu~_i * mu_j|`: `2^{-5i/4}` on the diagonal (sup
/// over `x != 0`) and `sqrt(j) 2^{-i/2-j}` off it.
pub fn correlation_reference(i: u32, j: u32) -> f64 {
    if i == j {
        2f64.powf(-1.25 * i as f64)
    } else {
        (j as f64).sqrt() * 2f64.powf(-(i as f64) / 2.0 - j as f64)
    }
}

/// `(sup, ||mu_i||_1)` of the random correlation `mu~_i * mu_j` for one seed.
fn correlation_sup(dist: Distribution, seed: u64, i: u32, j: u32) -> Result<(f64, f64)> {
    let real = sample_sequence(dist, seed, (1usize << j) + 1)?;
    let a = CoeffSequence::random(real);
    let c = correlation(&a, j, i)?;
    let sup = if i == j { sup_off_zero(&c) } else { c.norm_linf() };
    Ok((sup, block_measure(&a, i)?.norm_l1()))
}

/// Per-seed sup of `|mu~_i * mu_j|` for the random kernel `X_n / n`, scaled by
/// [`correlation_reference`].
///
/// Rows `(seed, i, j, sup, bound, pass)` where `bound = C * reference` when a
/// constant is supplied (otherwise the reference itself) and `pass` is
/// `sup <= bound`. The trivial bound `sup <= 2^{1-j} ||mu_i||_1` is checked
/// for every seed and reported as the flag `trivial_bound`.
pub fn random_correlation_report(
    dist: Distribution,
    i: u32,
    j: u32,
    seeds: &[u64],
    constant: Option<f64>,
) -> Result<ExperimentReport> {
    if i > j {
        return Err(Error::Domain(format!("need i <= j, got i = {i}, j = {j}")));
    }
    if j > DEFAULT_MAX_CORRELATION_SCALE {
        return Err(Error::Resource(format!("scale {j} exceeds {DEFAULT_MAX_CORRELATION_SCALE}")));
    }
    let sups: Vec<(f64, f64)> =
        seeds.par_iter().map(|&s| correlation_sup(dist, s, i, j)).collect::<Result<_>>()?;
    let reference = correlation_reference(i, j);
    let bound = constant.unwrap_or(1.0) * reference;
    let mut rep = ExperimentReport::new("random_correlation", &["seed", "i", "j", "sup", "bound", "pass"]);
    let mut trivial = true;
    let mut max_ratio = 0.0f64;
    let mut passed = 0usize;
    for (&seed, &(sup, l1)) in seeds.iter().zip(&sups) {
        trivial &= sup <= 2f64.powi(1 - j as i32) * l1 * (1.0 + 1e-12);
        max_ratio = max_ratio.max(sup / reference);
        let ok = sup <= bound;
        passed += ok as usize;
        rep.push_row(vec![seed as f64, i as f64, j as f64, sup, bound, ok as u8 as f64]);
    }
    let fraction = if seeds.is_empty() { 1.0 } else { passed as f64 / seeds.len() as f64 };
    rep.set_metric("max_ratio", max_ratio);
    rep.set_metric("fraction_within", fraction);
    rep.set_metric("reference", reference);
    rep.set_flag("trivial_bound", trivial);
    if let Some(c) = constant {
        rep.set_metric("constant", c);
        rep.set_flag("quantile", fraction >= QUANTILE);
    }
    Ok(rep)
}

/// Fraction of seeds that must satisfy a bound for an almost-sure claim to count as held.
pub const QUANTILE: f64 = 0.95;
/// Largest `j` scanned by [`exceptional_cover`].
pub const MAX_COVER_SCALE: u32 = 22;
/// `j >= SEPARATION * 2^{i/2}` is required for the exceptional cover.
pub const COVER_SEPARATION: f64 = 2.0;

/// Disjoint length-`2^i` dyadic intervals covering
/// `Z = {x in [0, 2^j) : |mu~_i * mu_j(x)| > threshold 2^{-i/4-j}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalCover {
    pub i: u32,
    pub j: u32,
    pub threshold: f64,
    /// Number of flagged points.
    pub flagged: usize,
    pub intervals: Vec<DyadicInterval>,
}

impl ExceptionalCover {
    pub fn cutoff(&self) -> f64 {
        self.threshold * 2f64.powf(-(self.i as f64) / 4.0 - self.j as f64)
    }

    /// `e^{-c_0 2^{i/2}} 2^{j-i}`.
    pub fn count_bound(&self, c0: f64) -> f64 {
        (-c0 * 2f64.powf(self.i as f64 / 2.0)).exp() * 2f64.powi(self.j as i32 - self.i as i32)
    }

    /// Largest `c_0` with `count <= count_bound(c_0)`; infinite for an empty cover.
    pub fn fitted_c0(&self) -> f64 {
        let n = self.intervals.len() as f64;
        if n == 0.0 {
            return f64::INFINITY;
        }
        -(n / 2f64.powi(self.j as i32 - self.i as i32)).ln() / 2f64.powf(self.i as f64 / 2.0)
    }

    /// Every flagged point of `corr` on `[0, 2^j)` lies in a listed interval and
    /// the intervals are pairwise disjoint.
    pub fn verify(&self, corr: &FiniteSignal) -> bool {
        let cut = self.cutoff();
        let covered = (0..1i64 << self.j)
            .filter(|&x| corr.get(x).norm() > cut)
            .all(|x| {
                let k = self.intervals.partition_point(|iv| iv.end() <= x);
                self.intervals.get(k).is_some_and(|iv| iv.contains(x))
            });
        let disjoint = self.intervals.windows(2).all(|w| w[0].end() <= w[1].start());
        covered && disjoint
    }
}

pub fn exceptional_cover(real: &RandomRealization, i: u32, j: u32, threshold: f64) -> Result<ExceptionalCover> {
    let a = CoeffSequence::random(real.clone());
    exceptional_cover_of(&correlation(&a, j, i)?, i, j, threshold)
}

/// Cover for a precomputed correlation `mu~_i * mu_j`.
pub fn exceptional_cover_of(corr: &FiniteSignal, i: u32, j: u32, threshold: f64) -> Result<ExceptionalCover> {
    if j > MAX_COVER_SCALE {
        return Err(Error::Resource(format!("scan over 2^{j} points exceeds 2^{MAX_COVER_SCALE}")));
    }
    if (j as f64) < COVER_SEPARATION * 2f64.powf(i as f64 / 2.0) {
        return Err(Error::Contract(format!("j = {j} is not large against 2^(i/2) for i = {i}")));
    }
    let mut cover = ExceptionalCover { i, j, threshold, flagged: 0, intervals: Vec::new() };
    let cut = cover.cutoff();
    for x in 0..1i64 << j {
        if corr.get(x).norm() > cut {
            cover.flagged += 1;
            let iv = DyadicInterval::containing(x, i, 0);
            if cover.intervals.last() != Some(&iv) {
                cover.intervals.push(iv);
            }
        }
    }
    Ok(cover)
}

/// Pairs `I` strictly inside `J` of working intervals: the bilinear term
/// `sum_{y, y'} f 1_{I~}(y) g 1_{J~}(y') C(y - y')`, `C = mu~_u * mu_v`, is split
/// exactly into the part where `|C| <= theta 2^{-u/4-v}` (Main) and the part
/// where it is larger (Exceptional); `u, v` are the scales of `I, J`.
///
/// Rows `(u, pairs, main, exceptional, exceptional_fraction)` sum absolute
/// pair contributions per scale `u`. Metrics include the measured domination
/// ratio of the sparse construction with `a = X_n` and its `(r - 1)` multiple.
pub fn random_sparse_experiment(
    real: &RandomRealization,
    f: &FiniteSignal,
    g: &FiniteSignal,
    i0: DyadicInterval,
    r: f64,
    theta: f64,
) -> Result<ExperimentReport> {
    let a = CoeffSequence::random(real.clone());
    let (_, build) = build_sparse_collection(&a, f, g, i0, r, &SparseConfig::default())?;
    let mut rep =
        ExperimentReport::new("random_sparse", &["u", "pairs", "main", "exceptional", "exceptional_fraction"]);
    rep.set_metric("ratio", build.ratio);
    rep.set_metric("scaled_ratio", build.ratio * (r - 1.0));
    rep.set_flag("certified", build.certified);
    let levels: Vec<u32> = (MIN_OPERATOR_LEVEL..=i0.level).collect();
    let per_u: Vec<(u32, usize, f64, f64)> = levels
        .par_iter()
        .filter(|&&li| li < i0.level)
        .map(|&li| -> Result<(u32, usize, f64, f64)> {
            let u = li - 3;
            let (mut pairs, mut main_abs, mut exc_abs) = (0usize, 0.0, 0.0);
            for lj in li + 1..=i0.level {
                let v = lj - 3;
                let c = correlation(&a, v, u)?;
                let cut = theta * 2f64.powf(-(u as f64) / 4.0 - v as f64);
                let exc = FiniteSignal::from_fn(c.window(), |x| {
                    let z = c.get(x);
                    if z.norm() > cut { z } else { Complex64::new(0.0, 0.0) }
                });
                let main = c.sub(&exc);
                let (main_r, exc_r) = (reflect_conj(&main), reflect_conj(&exc));
                for iv in i0.descendants_at(li) {
                    let phi = f.restrict(enlarged(&iv));
                    if phi.is_zero() {
                        continue;
                    }
                    let hm = convolve(&phi, &main_r);
                    let he = convolve(&phi, &exc_r);
                    let jv = DyadicInterval::containing(iv.start(), lj, i0.offset);
                    let psi = g.restrict(enlarged(&jv));
                    let pm: Complex64 = psi.iter().map(|(y, w)| w * hm.get(y)).sum();
                    let pe: Complex64 = psi.iter().map(|(y, w)| w * he.get(y)).sum();
                    if pm.norm() + pe.norm() > 0.0 {
                        pairs += 1;
                        main_abs += pm.norm();
                        exc_abs += pe.norm();
                    }
                }
            }
            Ok((u, pairs, main_abs, exc_abs))
        })
        .collect::<Result<_>>()?;
    let mut us = Vec::new();
    let mut fracs = Vec::new();
    for (u, pairs, m, e) in per_u {
        let frac = if m + e > 0.0 { e / (m + e) } else { 0.0 };
        if m + e > 0.0 {
            us.push(u as f64);
            fracs.push(frac);
        }
        rep.push_row(vec![u as f64, pairs as f64, m, e, frac]);
    }
    if let Ok(fit) = fit_line(&us, &fracs) {
        rep.set_metric("exceptional_slope", fit.slope);
        rep.set_flag("exceptional_decays", fit.slope < 0.0);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_names() {
        assert_eq!("rademacher".parse::<Distribution>().unwrap(), Distribution::Rademacher);
        assert_eq!("bernoulli:0.25".parse::<Distribution>().unwrap(), Distribution::Bernoulli(0.25));
        assert!("gauss".parse::<Distribution>().is_err());
        assert!("bernoulli:1.5".parse::<Distribution>().is_err());
        for d in [Distribution::Uniform, Distribution::Bernoulli(0.5), Distribution::Zero] {
            assert_eq!(d.to_string().parse::<Distribution>().unwrap(), d);
        }
    }

    #[test]
    fn rademacher_values_are_signs() {
        let r = sample_sequence(Distribution::Rademacher, 3, 1000).unwrap();
        assert!((1..=1000).all(|n| r.value(n).abs() == 1.0));
        assert!(sample_sequence(Distribution::Rademacher, 3, 0).is_err());
    }

    #[test]
    fn random_access_matches_cache() {
        let short = sample_sequence(Distribution::Uniform, 11, 10).unwrap();
        let long = sample_sequence(Distribution::Uniform, 11, 5000).unwrap();
        for n in [1, 7, 10, 11, 999, 5000] {
            assert_eq!(short.value(n), long.value(n));
        }
        assert_eq!(long.value(0), 0.0);
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = sample_sequence(Distribution::Bernoulli(0.3), 42, 2000).unwrap();
        let b = sample_sequence(Distribution::Bernoulli(0.3), 42, 2000).unwrap();
        assert!((1..=2000).all(|n| a.value(n) == b.value(n)));
        let c = sample_sequence(Distribution::Bernoulli(0.3), 43, 2000).unwrap();
        assert!((1..=2000).any(|n| a.value(n) != c.value(n)));
    }

    #[test]
    fn empirical_means_are_within_four_standard_errors() {
        let n = 100_000usize;
        for dist in [Distribution::Rademacher, Distribution::Uniform, Distribution::Bernoulli(0.2)] {
            let r = sample_sequence(dist, 7, n).unwrap();
            let mean = (1..=n as i64).map(|k| r.value(k)).sum::<f64>() / n as f64;
            let se = (dist.variance() / n as f64).sqrt();
            assert!(mean.abs() <= 4.0 * se, "{dist}: mean {mean}, se {se}");
            assert!((1..=n as i64).all(|k| r.value(k).abs() <= 1.0));
        }
    }

    #[test]
    fn chernoff_degenerate_points() {
        let rep = chernoff_check(Distribution::Rademacher, 1, &[0.0, 1.0], 1000, 1).unwrap();
        assert_eq!(rep.column("empirical").unwrap(), vec![1.0, 1.0]);
        assert!(rep.metric("prefactor").unwrap() >= 1.0);
        assert!(rep.metric("margin").unwrap() >= 1.0 - 1e-12);
        assert!(chernoff_check(Distribution::Rademacher, 1, &[1.0], 999, 1).is_err());
    }

    #[test]
    fn chernoff_small_run_is_monotone_and_dominated() {
        let grid: Vec<f64> = (0..=4).map(|k| k as f64 * 10.0).collect();
        let rep = chernoff_check(Distribution::Uniform, 300, &grid, 2000, 5).unwrap();
        assert_eq!(rep.flag("monotone"), Some(true));
        for row in &rep.rows {
            assert!(row[3] >= row[2] * (1.0 - 1e-12));
        }
        let again = chernoff_check(Distribution::Uniform, 300, &grid, 2000, 5).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn bit_sliced_sum_has_right_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in [1usize, 63, 64, 65, 1000] {
            let s = rademacher_sum(&mut rng, n);
            assert_eq!((s as i64 - n as i64).rem_euclid(2), 0);
            assert!(s.abs() <= n as f64);
        }
    }

    #[test]
    fn zero_realization_correlations_vanish() {
        let rep = random_correlation_report(Distribution::Zero, 5, 5, &[1, 2, 3], Some(1.0)).unwrap();
        assert!(rep.column("sup").unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(rep.flag("quantile"), Some(true));
        assert!(random_correlation_report(Distribution::Zero, 6, 5, &[1], None).is_err());
    }

    #[test]
    fn trivial_correlation_bound_holds() {
        let seeds: Vec<u64> = (0..10).collect();
        for (i, j) in [(4, 4), (4, 9), (6, 10)] {
            let rep = random_correlation_report(Distribution::Rademacher, i, j, &seeds, None).unwrap();
            assert_eq!(rep.flag("trivial_bound"), Some(true));
        }
    }

    #[test]
    fn exceptional_cover_is_complete() {
        let zero = sample_sequence(Distribution::Zero, 0, 10).unwrap();
        assert!(exceptional_cover(&zero, 3, 12, 1.0).unwrap().intervals.is_empty());
        let real = sample_sequence(Distribution::Rademacher, 8, 1 << 12).unwrap();
        let a = CoeffSequence::random(real.clone());
        let corr = correlation(&a, 12, 3).unwrap();
        for theta in [0.25, 1.0] {
            let cover = exceptional_cover(&real, 3, 12, theta).unwrap();
            assert!(cover.verify(&corr));
            assert!(cover.intervals.len() <= 1 << 9);
        }
        assert!(matches!(exceptional_cover(&real, 6, 12, 1.0), Err(Error::Contract(_))));
        assert!(matches!(exceptional_cover(&real, 3, 23, 1.0), Err(Error::Resource(_))));
    }

    #[test]
    fn zero_realization_sparse_experiment() {
        let i0 = DyadicInterval::new(8, 0, 0).unwrap();
        let one = FiniteSignal::indicator(i0.span());
        let zero = sample_sequence(Distribution::Zero, 0, 300).unwrap();
        let rep = random_sparse_experiment(&zero, &one, &one, i0, 1.5, 1.0).unwrap();
        assert_eq!(rep.metric("ratio"), Some(0.0));
        assert!(rep.column("pairs").unwrap().iter().all(|&p| p == 0.0));
    }
}
