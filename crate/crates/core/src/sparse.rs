//! Sparse collections and forms, Calderón–Zygmund stopping intervals, the
//! recursive construction of a dominating sparse collection, the
//! standard/non-standard split with Carleson packing, and dyadic chaining for
//! running maxima.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{block_measure, CoeffSequence};
use crate::operators::{enlarged, running_max, t_star, TruncationFamily};
use crate::report::{fit_log_decay, ExperimentReport};
use crate::signal::{average, convolve, DyadicInterval, FiniteSignal, Interval, MIN_OPERATOR_LEVEL};

pub const DEFAULT_STOPPING_THRESHOLD: f64 = 10.0;
pub const DEFAULT_MEASURE_FRACTION: f64 = 0.2;
pub const DEFAULT_CZ_THRESHOLD: f64 = 10.0;
/// Multiplier `C` in `F_t = {sum 1_I > C 2^t}`.
pub const DEFAULT_OVERLAP_CONSTANT: f64 = 4.0;
pub const DEFAULT_BESSEL_PATTERNS: usize = 256;

/// One member `S` of a sparse collection with its designated set `E_S`
/// (stored as sorted disjoint ranges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMember {
    pub interval: DyadicInterval,
    pub e_set: Vec<Interval>,
}

impl SparseMember {
    pub fn e_len(&self) -> usize {
        self.e_set.iter().map(Interval::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseCollection {
    pub members: Vec<SparseMember>,
    pub certified: bool,
}

impl SparseCollection {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn intervals(&self) -> Vec<DyadicInterval> {
        self.members.iter().map(|m| m.interval).collect()
    }

    /// Exact re-check: every `E_S` inside `S`, `4 |E_S| >= |S|`, and the `E_S` pairwise disjoint.
    pub fn verify(&self) -> bool {
        let mut all: Vec<Interval> = Vec::new();
        for m in &self.members {
            if 4 * m.e_len() < m.interval.len() {
                return false;
            }
            if m.e_set.iter().any(|e| !m.interval.span().contains_interval(e) || e.is_empty()) {
                return false;
            }
            all.extend(m.e_set.iter().copied());
        }
        all.sort_by_key(|e| e.start);
        all.windows(2).all(|w| w[0].end <= w[1].start)
    }

    /// Rows `(level, index, offset, e_len)`.
    pub fn to_report(&self) -> ExperimentReport {
        let mut rep = ExperimentReport::new("sparse_collection", &["level", "index", "offset", "e_len"]);
        for m in &self.members {
            let i = m.interval;
            rep.push_row(vec![i.level as f64, i.index as f64, i.offset as f64, m.e_len() as f64]);
        }
        rep.set_flag("certified", self.certified);
        rep
    }
}

/// First member whose designated set came out too small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFailure {
    pub interval: DyadicInterval,
    pub e_len: usize,
    pub required: usize,
}

/// Greedy certification: members are processed from the shortest up, each
/// taking `E_S = S` minus every point claimed so far and then claiming all of `S`.
pub fn certify_sparse(intervals: &[DyadicInterval]) -> std::result::Result<SparseCollection, SparseFailure> {
    let mut order: Vec<DyadicInterval> = intervals.to_vec();
    order.sort_by_key(|i| (i.level, i.start()));
    let mut claimed: BTreeMap<i64, i64> = BTreeMap::new();
    let mut members = Vec::with_capacity(order.len());
    for s in order {
        let span = s.span();
        let mut taken: Vec<Interval> = claimed
            .range(..span.end)
            .rev()
            .take_while(|(_, &end)| end > span.start)
            .map(|(&a, &b)| Interval::new(a.max(span.start), b.min(span.end)))
            .collect();
        taken.reverse();
        let mut e_set = Vec::new();
        let mut cursor = span.start;
        for t in &taken {
            if t.start > cursor {
                e_set.push(Interval::new(cursor, t.start));
            }
            cursor = cursor.max(t.end);
        }
        if cursor < span.end {
            e_set.push(Interval::new(cursor, span.end));
        }
        let member = SparseMember { interval: s, e_set };
        let e_len = member.e_len();
        if 4 * e_len < s.len() {
            return Err(SparseFailure { interval: s, e_len, required: s.len().div_ceil(4) });
        }
        claim(&mut claimed, span);
        members.push(member);
    }
    Ok(SparseCollection { members, certified: true })
}

fn claim(claimed: &mut BTreeMap<i64, i64>, span: Interval) {
    let (mut lo, mut hi) = (span.start, span.end);
    let overlapping: Vec<i64> = claimed
        .range(..=hi)
        .rev()
        .take_while(|(_, &end)| end >= lo)
        .map(|(&a, _)| a)
        .collect();
    for a in overlapping {
        let b = claimed.remove(&a).unwrap();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    claimed.insert(lo, hi);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseFormValue {
    pub value: f64,
    /// False when the collection was never certified; the value is still computed.
    pub certified: bool,
}

/// `sum_S |S| <f>_{S,r} <g>_{S,s}`.
pub fn sparse_form(coll: &SparseCollection, f: &FiniteSignal, g: &FiniteSignal, r: f64, s: f64) -> Result<SparseFormValue> {
    let mut value = 0.0;
    for m in &coll.members {
        let span = m.interval.span();
        value += m.interval.len() as f64 * average(f, span, r)? * average(g, span, s)?;
    }
    Ok(SparseFormValue { value, certified: coll.certified })
}

/// Interval sums of a nonnegative signal over every dyadic subinterval of `i0`,
/// built bottom-up.
#[derive(Debug, Clone)]
struct DyadicSums {
    i0: DyadicInterval,
    sums: Vec<Vec<f64>>,
}

impl DyadicSums {
    fn new(f: &FiniteSignal, i0: DyadicInterval) -> Self {
        let base: Vec<f64> = i0.span().iter().map(|x| f.get(x).re).collect();
        let mut sums = vec![base];
        for _ in 0..i0.level {
            let prev = sums.last().unwrap();
            sums.push(prev.chunks(2).map(|c| c[0] + c[1]).collect());
        }
        DyadicSums { i0, sums }
    }

    fn sum(&self, j: &DyadicInterval) -> f64 {
        let rel = (j.start() - self.i0.start()) >> j.level;
        self.sums[j.level as usize][rel as usize]
    }

    fn avg(&self, j: &DyadicInterval) -> f64 {
        self.sum(j) / j.len() as f64
    }
}

fn check_nonnegative(f: &FiniteSignal, i0: &DyadicInterval, what: &str) -> Result<()> {
    if !f.is_real_nonnegative() {
        return Err(Error::Domain(format!("{what} must be real and nonnegative")));
    }
    if !f.is_zero() && !i0.span().contains_interval(&f.window()) {
        return Err(Error::Contract(format!("{what} is not supported inside {:?}", i0.span())));
    }
    Ok(())
}

/// Maximal strict dyadic subintervals `J` of `top` where `stop(J)` holds, by top-down scan.
fn maximal_stopping(top: &DyadicInterval, stop: impl Fn(&DyadicInterval) -> bool) -> Vec<DyadicInterval> {
    let mut out = Vec::new();
    let mut stack: Vec<DyadicInterval> = top.children().map(|c| vec![c[1], c[0]]).unwrap_or_default();
    while let Some(j) = stack.pop() {
        if stop(&j) {
            out.push(j);
        } else if let Some([l, r]) = j.children() {
            stack.push(r);
            stack.push(l);
        }
    }
    out
}

/// `f = gamma + sum_s b_s` with `b_s = sum_{J in B, |J| = 2^s} f 1_J`, where `B`
/// are the maximal dyadic `J` in `I_0` with `<f>_J >= K <f>_{I_0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzDecomposition {
    pub i0: DyadicInterval,
    pub threshold: f64,
    /// `<f>_{I_0}`.
    pub avg0: f64,
    /// Stopping intervals, sorted by position.
    pub bad: Vec<DyadicInterval>,
    pub gamma: FiniteSignal,
    /// `b_s` keyed by `s = log_2 |J|`.
    pub levels: BTreeMap<u32, FiniteSignal>,
}

impl CzDecomposition {
    pub fn b_level(&self, s: i64) -> FiniteSignal {
        if s < 0 {
            return FiniteSignal::zero();
        }
        self.levels.get(&(s as u32)).cloned().unwrap_or_default()
    }

    pub fn bad_part(&self) -> FiniteSignal {
        self.levels.values().fold(FiniteSignal::zero(), |acc, b| acc.add(b))
    }

    pub fn reconstruct(&self) -> FiniteSignal {
        self.gamma.add(&self.bad_part())
    }

    pub fn invariants(&self, f: &FiniteSignal) -> CzInvariants {
        let reconstruction_error = self.reconstruct().max_abs_diff(f);
        let mut max_level_ratio = 0.0f64;
        let mut l1_total = 0.0;
        for (&s, b) in &self.levels {
            if self.avg0 > 0.0 {
                max_level_ratio = max_level_ratio.max(b.norm_linf() / (2f64.powi(s as i32) * self.avg0));
            }
            l1_total += b.norm_l1();
        }
        let mut sorted = self.bad.clone();
        sorted.sort_by_key(|j| j.start());
        let disjoint = sorted.windows(2).all(|w| w[0].end() <= w[1].start());
        let maximal = self.bad.iter().all(|j| {
            let p = j.parent();
            !self.i0.contains_interval(&p) || p == self.i0 || p.len() as f64 * self.avg0 * self.threshold > 0.0 && {
                let sum: f64 = p.span().iter().map(|x| f.get(x).re).sum();
                sum < self.threshold * self.avg0 * p.len() as f64
            }
        });
        CzInvariants {
            reconstruction_error,
            max_level_ratio,
            l1_total,
            l1_budget: self.i0.len() as f64 * self.avg0,
            gamma_linf: self.gamma.norm_linf(),
            disjoint,
            maximal,
        }
    }
}

/// Measured quantities for the decomposition invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzInvariants {
    /// `max |gamma + sum_s b_s - f|`.
    pub reconstruction_error: f64,
    /// `max_s ||b_s||_inf / (2^s <f>_{I_0})`.
    pub max_level_ratio: f64,
    /// `sum_s ||b_s||_1`.
    pub l1_total: f64,
    /// `|I_0| <f>_{I_0}`.
    pub l1_budget: f64,
    pub gamma_linf: f64,
    pub disjoint: bool,
    pub maximal: bool,
}

pub fn cz_decompose(f: &FiniteSignal, i0: DyadicInterval, threshold: f64) -> Result<CzDecomposition> {
    if !(threshold > 1.0) {
        return Err(Error::Domain(format!("stopping threshold must exceed 1, got {threshold}")));
    }
    check_nonnegative(f, &i0, "f")?;
    let sums = DyadicSums::new(f, i0);
    let avg0 = sums.avg(&i0);
    let bad = if avg0 > 0.0 {
        let mut b = maximal_stopping(&i0, |j| sums.sum(j) >= threshold * avg0 * j.len() as f64);
        b.sort_by_key(|j| j.start());
        b
    } else {
        Vec::new()
    };
    let mut levels: BTreeMap<u32, FiniteSignal> = BTreeMap::new();
    let mut in_bad = vec![false; i0.len()];
    for j in &bad {
        let piece = f.restrict(j.span());
        let entry = levels.entry(j.level).or_default();
        *entry = entry.add(&piece);
        for x in j.span().iter() {
            in_bad[(x - i0.start()) as usize] = true;
        }
    }
    let gamma = FiniteSignal::from_fn(i0.span(), |x| {
        if in_bad[(x - i0.start()) as usize] {
            Complex64::new(0.0, 0.0)
        } else {
            f.get(x)
        }
    });
    Ok(CzDecomposition { i0, threshold, avg0, bad, gamma, levels })
}

/// Knobs of the recursive construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseConfig {
    pub stopping_threshold: f64,
    pub measure_fraction: f64,
}

impl Default for SparseConfig {
    fn default() -> Self {
        SparseConfig { stopping_threshold: DEFAULT_STOPPING_THRESHOLD, measure_fraction: DEFAULT_MEASURE_FRACTION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub interval: DyadicInterval,
    pub depth: usize,
    pub children: usize,
    /// `sum |J|` over the stopping children.
    pub stopping_total: usize,
    /// `stopping_total <= measure_fraction |I|`.
    pub measure_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseBuildReport {
    pub nodes: Vec<NodeRecord>,
    pub max_depth: usize,
    /// `<T*_{I_0} f, g>` over all intervals of length >= 16 inside `I_0`.
    pub pairing: f64,
    /// `Lambda_{S,1,r}(f, g)`.
    pub form: f64,
    pub ratio: f64,
    pub certified: bool,
    pub failure: Option<SparseFailure>,
}

impl SparseBuildReport {
    pub fn measure_ok(&self) -> bool {
        self.nodes.iter().all(|n| n.measure_ok)
    }
}

/// `<T*_{I_0} f, g>` where the maximal sum runs over every interval of length
/// at least 16 inside `I_0`.
pub fn t_star_pairing(a: &CoeffSequence, f: &FiniteSignal, g: &FiniteSignal, i0: &DyadicInterval) -> Result<f64> {
    if i0.level < MIN_OPERATOR_LEVEL {
        return Ok(0.0);
    }
    let fam = TruncationFamily::all_within(i0)?;
    let ts = t_star(&fam, a, f)?;
    Ok(ts.iter().map(|(x, v)| v.re * g.get(x).re).sum())
}

/// Recursive sparse collection for `<T* f, g>`: admit `I`, stop on the maximal
/// `J` with `<f>_J >= 10 <f>_I` or `<g>_J >= 10 <g>_I`, recurse into each `J`.
pub fn build_sparse_collection(
    a: &CoeffSequence,
    f: &FiniteSignal,
    g: &FiniteSignal,
    i0: DyadicInterval,
    r: f64,
    cfg: &SparseConfig,
) -> Result<(SparseCollection, SparseBuildReport)> {
    check_nonnegative(f, &i0, "f")?;
    check_nonnegative(g, &i0, "g")?;
    if !(r >= 1.0) {
        return Err(Error::Domain(format!("r must be >= 1, got {r}")));
    }
    let fs = DyadicSums::new(f, i0);
    let gs = DyadicSums::new(g, i0);
    if fs.sum(&i0) == 0.0 || gs.sum(&i0) == 0.0 {
        let rep = SparseBuildReport {
            nodes: Vec::new(),
            max_depth: 0,
            pairing: 0.0,
            form: 0.0,
            ratio: 0.0,
            certified: true,
            failure: None,
        };
        return Ok((SparseCollection { members: Vec::new(), certified: true }, rep));
    }
    let guard = i0.level as usize;
    let mut nodes = Vec::new();
    let mut stack = vec![(i0, 0usize)];
    while let Some((node, depth)) = stack.pop() {
        if depth > guard {
            return Err(Error::Internal(format!("recursion depth {depth} exceeds log2|I_0| = {guard}")));
        }
        let (fa, ga) = (fs.avg(&node), gs.avg(&node));
        let children = if fa == 0.0 || ga == 0.0 {
            Vec::new()
        } else {
            let k = cfg.stopping_threshold;
            maximal_stopping(&node, |j| fs.avg(j) >= k * fa || gs.avg(j) >= k * ga)
        };
        let total: usize = children.iter().map(DyadicInterval::len).sum();
        nodes.push(NodeRecord {
            interval: node,
            depth,
            children: children.len(),
            stopping_total: total,
            measure_ok: total as f64 <= cfg.measure_fraction * node.len() as f64,
        });
        stack.extend(children.into_iter().rev().map(|j| (j, depth + 1)));
    }
    let intervals: Vec<DyadicInterval> = nodes.iter().map(|n| n.interval).collect();
    let (coll, failure) = match certify_sparse(&intervals) {
        Ok(c) => (c, None),
        Err(e) => (
            SparseCollection {
                members: intervals
                    .iter()
                    .map(|&i| SparseMember { interval: i, e_set: Vec::new() })
                    .collect(),
                certified: false,
            },
            Some(e),
        ),
    };
    let pairing = t_star_pairing(a, f, g, &i0)?;
    let form = sparse_form(&coll, f, g, 1.0, r)?.value;
    let max_depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
    let rep = SparseBuildReport {
        nodes,
        max_depth,
        pairing,
        form,
        ratio: if form > 0.0 { pairing / form } else { 0.0 },
        certified: coll.certified,
        failure,
    };
    Ok((coll, rep))
}

/// A nonnegative test signal on `i0`: a sparse background plus a few bumps of
/// length `2^u`, `u` in `0..=7`, some of them tall enough to force stopping.
pub fn random_nonnegative(rng: &mut impl Rng, i0: &DyadicInterval) -> FiniteSignal {
    let n = i0.len();
    let density: f64 = rng.random_range(0.05..1.0);
    let mut v: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < density { rng.random::<f64>() } else { 0.0 }).collect();
    let bumps = rng.random_range(0..=4);
    for _ in 0..bumps {
        let u = rng.random_range(0..=7u32).min(i0.level);
        let len = 1usize << u;
        let start = rng.random_range(0..=n - len);
        let height: f64 = rng.random_range(1.0..100.0);
        for x in &mut v[start..start + len] {
            *x += height;
        }
    }
    FiniteSignal::from_real(i0.start(), &v)
}

/// Random `(f, g)` pairs on `i0` from a seed.
pub fn random_pair(seed: u64, i0: &DyadicInterval) -> (FiniteSignal, FiniteSignal) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_nonnegative(&mut rng, i0);
    let g = random_nonnegative(&mut rng, i0);
    (f, g)
}

/// Intervals of length >= 16 inside `I_0` that are not inside any stopping interval.
pub fn working_family(decomp: &CzDecomposition) -> Vec<DyadicInterval> {
    let mut out = Vec::new();
    for level in MIN_OPERATOR_LEVEL..=decomp.i0.level {
        for i in decomp.i0.descendants_at(level) {
            if !decomp.bad.iter().any(|j| j.contains_interval(&i)) {
                out.push(i);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedInterval {
    pub interval: DyadicInterval,
    /// Scale `k` with `|I| = 2^{k+3}`.
    pub k: u32,
    /// `||T_I b_{k-s}||_2^2`.
    pub norm_sq: f64,
    /// `||b_{k-s} 1_I||_1`.
    pub mass_inside: f64,
    /// `||b_{k-s} 1_{I~}||_1`.
    pub mass_enlarged: f64,
    /// `64 C_0 |I|^{-1-eps} ||b_{k-s} 1_I||_1^2`.
    pub threshold: f64,
    pub standard: bool,
    /// Density class for non-standard intervals.
    pub t: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalClassification {
    pub s: u32,
    pub i0: DyadicInterval,
    pub entries: Vec<ClassifiedInterval>,
    /// Indices into `entries` of the non-standard intervals, by `t`.
    pub buckets: BTreeMap<i32, Vec<usize>>,
    /// `max (t - s)` over non-standard intervals.
    pub max_t_minus_s: Option<i32>,
}

impl IntervalClassification {
    pub fn standard_count(&self) -> usize {
        self.entries.iter().filter(|e| e.standard).count()
    }

    pub fn nonstandard_count(&self) -> usize {
        self.entries.len() - self.standard_count()
    }

    pub fn bucket(&self, t: i32) -> Vec<DyadicInterval> {
        self.buckets.get(&t).map(|ix| ix.iter().map(|&i| self.entries[i].interval).collect()).unwrap_or_default()
    }

    /// `|F_t|` for `F_t = {x : sum_{I in N_{s,t}} 1_I(x) > C 2^t}`.
    pub fn overlap_set_size(&self, t: i32, c: f64) -> usize {
        let i0 = self.i0;
        let mut count = vec![0u32; i0.len()];
        for iv in self.bucket(t) {
            for x in iv.span().iter() {
                count[(x - i0.start()) as usize] += 1;
            }
        }
        let cut = c * 2f64.powi(t);
        count.iter().filter(|&&n| n as f64 > cut).count()
    }

    /// Layers of minimal elements of the bucket members not contained in `F_t`.
    pub fn layers(&self, t: i32, c: f64) -> Vec<Vec<DyadicInterval>> {
        let i0 = self.i0;
        let mut count = vec![0u32; i0.len()];
        let bucket = self.bucket(t);
        for iv in &bucket {
            for x in iv.span().iter() {
                count[(x - i0.start()) as usize] += 1;
            }
        }
        let cut = c * 2f64.powi(t);
        let mut rest: Vec<DyadicInterval> = bucket
            .into_iter()
            .filter(|iv| iv.span().iter().any(|x| count[(x - i0.start()) as usize] as f64 <= cut))
            .collect();
        let mut layers = Vec::new();
        while !rest.is_empty() {
            let (minimal, others): (Vec<_>, Vec<_>) = rest
                .iter()
                .partition(|i| !rest.iter().any(|j| j != *i && i.contains_interval(j)));
            layers.push(minimal.into_iter().copied().collect());
            rest = others.into_iter().copied().collect();
        }
        layers
    }
}

/// `mu_k * b_{k-s}` for every scale `k` of the working family (levels `k + 3`).
fn scale_convolutions(decomp: &CzDecomposition, a: &CoeffSequence, s: u32) -> Result<BTreeMap<u32, FiniteSignal>> {
    let levels: Vec<u32> = (MIN_OPERATOR_LEVEL..=decomp.i0.level).collect();
    levels
        .par_iter()
        .map(|&level| {
            let k = level - 3;
            let b = decomp.b_level(k as i64 - s as i64);
            let conv = if b.is_zero() { FiniteSignal::zero() } else { convolve(&block_measure(a, k)?, &b) };
            Ok((level, conv))
        })
        .collect()
}

/// Splits the working family into standard and non-standard intervals for a
/// fixed `s` and buckets the non-standard ones by density class `t`, where
/// `2^{-t} <= ||b_{k-s} 1_{I~}||_1 / (|I| <f>_{I_0}) < 2^{-t+1}`.
pub fn classify_intervals(
    decomp: &CzDecomposition,
    a: &CoeffSequence,
    s: u32,
    c0: f64,
    eps_hat: f64,
) -> Result<IntervalClassification> {
    let family = working_family(decomp);
    for i in &family {
        for j in &decomp.bad {
            if !i.is_disjoint(j) && !(i.contains_interval(j) && i != j) {
                return Err(Error::Internal(format!("stopping interval {j:?} meets {i:?} without being inside it")));
            }
        }
    }
    let convs = scale_convolutions(decomp, a, s)?;
    let mut entries = Vec::with_capacity(family.len());
    for i in family {
        let k = i.level - 3;
        let conv = &convs[&i.level];
        let b = decomp.b_level(k as i64 - s as i64);
        let norm_sq: f64 = i.span().iter().map(|x| conv.get(x).norm_sqr()).sum();
        let mass_inside: f64 = i.span().iter().map(|x| b.get(x).norm()).sum();
        let mass_enlarged: f64 = enlarged(&i).iter().map(|x| b.get(x).norm()).sum();
        let threshold = 64.0 * c0 * (i.len() as f64).powf(-1.0 - eps_hat) * mass_inside * mass_inside;
        let standard = norm_sq <= threshold;
        let t = if standard || decomp.avg0 == 0.0 {
            None
        } else {
            let d = mass_enlarged / (i.len() as f64 * decomp.avg0);
            Some(-(d.log2().floor() as i32))
        };
        entries.push(ClassifiedInterval { interval: i, k, norm_sq, mass_inside, mass_enlarged, threshold, standard, t });
    }
    let mut buckets: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (ix, e) in entries.iter().enumerate() {
        if let Some(t) = e.t {
            buckets.entry(t).or_default().push(ix);
        }
    }
    let max_t_minus_s = buckets.keys().next_back().map(|&t| t - s as i32);
    Ok(IntervalClassification { s, i0: decomp.i0, entries, buckets, max_t_minus_s })
}

/// Packing of each density bucket: `max_K sum_{J in bucket, J inside K} |J| / |K|`.
///
/// Rows `(t, size, max_ratio, ratio_over_2t, overlap_fraction)`, the last being `|F_t| / |I_0|`.
pub fn carleson_check(class: &IntervalClassification, overlap_constant: f64) -> ExperimentReport {
    let mut rep =
        ExperimentReport::new("carleson", &["t", "size", "max_ratio", "ratio_over_2t", "overlap_fraction"]);
    let mut worst = 0.0f64;
    let mut worst_overlap = 0.0f64;
    for &t in class.buckets.keys() {
        let bucket = class.bucket(t);
        let max_ratio = bucket
            .iter()
            .map(|k| {
                let inside: usize = bucket.iter().filter(|j| k.contains_interval(j)).map(DyadicInterval::len).sum();
                inside as f64 / k.len() as f64
            })
            .fold(0.0, f64::max);
        let scaled = max_ratio / 2f64.powi(t);
        let overlap = class.overlap_set_size(t, overlap_constant) as f64 / class.i0.len() as f64;
        rep.push_row(vec![t as f64, bucket.len() as f64, max_ratio, scaled, overlap]);
        worst = worst.max(scaled);
        worst_overlap = worst_overlap.max(overlap);
    }
    rep.set_metric("max_ratio_over_2t", worst);
    rep.set_metric("max_overlap_fraction", worst_overlap);
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmCertificate {
    pub n: usize,
    /// Chaining levels used, `floor(log2 N) + 1`.
    pub levels: usize,
    /// `1 + ceil(log2 N)`.
    pub log_factor: f64,
    /// Sampled Bessel constant: largest `||sum c_j phi_j||_2` seen.
    pub a_hat: f64,
    /// The same maximum over the random patterns only.
    pub a_hat_random: f64,
    pub bound_l2: f64,
    pub true_max_l2: f64,
    /// Chaining bound is at least the running maximum at every point.
    pub dominates: bool,
    /// `bound_l2 <= log_factor * a_hat`.
    pub within_log_factor: bool,
}

pub fn rm_maximal(phis: &[FiniteSignal]) -> Result<(FiniteSignal, RmCertificate)> {
    rm_maximal_with(phis, DEFAULT_BESSEL_PATTERNS, 0)
}

/// Dyadic chaining bound `sum_l max_m |sum_{j in block(l, m)} phi_j|` for the
/// running maximum `max_n |sum_{j <= n} phi_j|`.
///
/// The Bessel constant is estimated from `patterns` random `{0, +-1}` vectors
/// together with one vector per chaining level whose block signs are chosen
/// greedily so that `||sum_m c_m B_m||_2^2 >= sum_m ||B_m||_2^2`.
pub fn rm_maximal_with(phis: &[FiniteSignal], patterns: usize, seed: u64) -> Result<(FiniteSignal, RmCertificate)> {
    let n = phis.len();
    if n == 0 {
        return Err(Error::Domain("chaining needs at least one function".into()));
    }
    let window = phis
        .iter()
        .filter(|p| !p.is_zero())
        .fold(Interval::new(0, 0), |acc, p| if acc.is_empty() { p.window() } else { acc.hull(&p.window()) });
    let w = window.len();
    let dense: Vec<Vec<Complex64>> = phis.iter().map(|p| p.to_dense(window)).collect();
    let zero = Complex64::new(0.0, 0.0);

    let levels = (usize::BITS - 1 - n.leading_zeros()) as usize + 1;
    let mut bound = vec![0.0f64; w];
    let mut a_level = 0.0f64;
    for l in 0..levels {
        let size = 1usize << l;
        let blocks: Vec<Vec<Complex64>> = (0..n / size)
            .map(|m| {
                let mut acc = vec![zero; w];
                for phi in &dense[m * size..(m + 1) * size] {
                    for (a, v) in acc.iter_mut().zip(phi) {
                        *a += v;
                    }
                }
                acc
            })
            .collect();
        for x in 0..w {
            bound[x] += blocks.iter().map(|b| b[x].norm()).fold(0.0, f64::max);
        }
        let mut signed = vec![zero; w];
        for b in &blocks {
            let cross: f64 = signed.iter().zip(b).map(|(s, v)| (s * v.conj()).re).sum();
            let sign = if cross >= 0.0 { 1.0 } else { -1.0 };
            for (s, v) in signed.iter_mut().zip(b) {
                *s += v * sign;
            }
        }
        a_level = a_level.max(l2(&signed));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_random = (0..patterns)
        .map(|_| {
            let mut acc = vec![zero; w];
            for phi in &dense {
                let c = rng.random_range(-1i32..=1) as f64;
                if c != 0.0 {
                    for (a, v) in acc.iter_mut().zip(phi) {
                        *a += v * c;
                    }
                }
            }
            l2(&acc)
        })
        .fold(0.0, f64::max);
    let a_hat = a_random.max(a_level);

    let mut running = vec![zero; w];
    let mut true_max = vec![0.0f64; w];
    for phi in &dense {
        for x in 0..w {
            running[x] += phi[x];
            true_max[x] = true_max[x].max(running[x].norm());
        }
    }
    let dominates = bound.iter().zip(&true_max).all(|(b, t)| *t <= b * (1.0 + 1e-12) + 1e-300);
    let bound_l2 = bound.iter().map(|b| b * b).sum::<f64>().sqrt();
    let true_max_l2 = true_max.iter().map(|b| b * b).sum::<f64>().sqrt();
    let log_factor = 1.0 + (n as f64).log2().ceil();
    let cert = RmCertificate {
        n,
        levels,
        log_factor,
        a_hat,
        a_hat_random: a_random,
        bound_l2,
        true_max_l2,
        dominates,
        within_log_factor: bound_l2 <= log_factor * a_hat * (1.0 + 1e-12),
    };
    let out = if window.is_empty() { FiniteSignal::zero() } else { FiniteSignal::from_real(window.start, &bound) };
    Ok((out, cert))
}

fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Per-`s` norms of the maximal truncations of `sum_k T_{I(k)} b_{k-s}` over the
/// standard and non-standard intervals, normalized by `<f>_{I_0}`.
///
/// Rows `(s, standard_norm, nonstandard_norm, nonstandard_pairing, n_standard, n_nonstandard)`:
/// the standard branch in `l^{r'}`, the non-standard branch in `l^2`, and
/// `<T*_{N_s,s} b, g> / (|I_0| <f>_{I_0} <g>_{I_0})`.
#[allow(clippy::too_many_arguments)]
pub fn decay_in_s_report(
    a: &CoeffSequence,
    f: &FiniteSignal,
    g: &FiniteSignal,
    i0: DyadicInterval,
    s_range: &[u32],
    r: f64,
    c0: f64,
    eps_hat: f64,
    cz_threshold: f64,
) -> Result<ExperimentReport> {
    if !(r > 1.0 && r < 2.0) {
        return Err(Error::Domain(format!("r must lie in (1, 2), got {r}")));
    }
    check_nonnegative(g, &i0, "g")?;
    let decomp = cz_decompose(f, i0, cz_threshold)?;
    let r_dual = r / (r - 1.0);
    let g_avg = average(g, i0.span(), 1.0)?;
    let mut rep = ExperimentReport::new(
        "decay_in_s",
        &["s", "standard_norm", "nonstandard_norm", "nonstandard_pairing", "n_standard", "n_nonstandard"],
    );
    let norm = if decomp.avg0 > 0.0 { decomp.avg0 } else { 1.0 };
    for &s in s_range {
        let class = classify_intervals(&decomp, a, s, c0, eps_hat)?;
        let convs = scale_convolutions(&decomp, a, s)?;
        let mut std_pieces = Vec::new();
        let mut non_pieces = Vec::new();
        for (&level, conv) in &convs {
            let mut std_mask = Vec::new();
            let mut non_mask = Vec::new();
            for e in class.entries.iter().filter(|e| e.interval.level == level) {
                if e.standard {
                    std_mask.push(e.interval);
                } else {
                    non_mask.push(e.interval);
                }
            }
            std_pieces.push(mask(conv, &std_mask));
            non_pieces.push(mask(conv, &non_mask));
        }
        let st = running_max(&std_pieces, i0.span());
        let ns = running_max(&non_pieces, i0.span());
        let pairing: f64 = ns.iter().map(|(x, v)| v.re * g.get(x).re).sum();
        let denom = i0.len() as f64 * decomp.avg0 * g_avg;
        rep.push_row(vec![
            s as f64,
            st.norm_lr(r_dual) / norm,
            ns.norm_l2() / norm,
            if denom > 0.0 { pairing / denom } else { 0.0 },
            class.standard_count() as f64,
            class.nonstandard_count() as f64,
        ]);
    }
    let xs = rep.column("s").unwrap();
    for (col, key, shape) in [
        ("standard_norm", "standard", -1.0 / (3.0 * (r - 1.0))),
        ("nonstandard_norm", "nonstandard", -1.0 / 3.0),
    ] {
        let ys = rep.column(col).unwrap();
        rep.set_metric(&format!("shape_{key}"), shape);
        match fit_log_decay(&xs, &ys, 2.0) {
            Ok(fit) => {
                rep.set_metric(&format!("slope_{key}"), fit.slope);
                rep.set_metric(&format!("trivial_fit_{key}"), 0.0);
            }
            Err(_) => {
                rep.set_metric(&format!("trivial_fit_{key}"), 1.0);
                rep.note(format!("{key} branch has fewer than two nonzero scales"));
            }
        }
    }
    rep.set_metric("r", r);
    rep.set_metric(
        "max_nonstandard_pairing",
        rep.column("nonstandard_pairing").unwrap().into_iter().fold(0.0, f64::max),
    );
    Ok(rep)
}

fn mask(conv: &FiniteSignal, intervals: &[DyadicInterval]) -> FiniteSignal {
    intervals.iter().fold(FiniteSignal::zero(), |acc, i| acc.add(&conv.restrict(i.span())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::AdmissiblePhase;

    fn di(level: u32, index: i64) -> DyadicInterval {
        DyadicInterval::new(level, index, 0).unwrap()
    }

    fn t32() -> CoeffSequence {
        CoeffSequence::modulated(AdmissiblePhase::monomial(1.5).unwrap())
    }

    #[test]
    fn disjoint_intervals_certify() {
        let c = certify_sparse(&[di(4, 0), di(4, 3), di(5, 4)]).unwrap();
        assert!(c.verify());
        for m in &c.members {
            assert_eq!(m.e_set, vec![m.interval.span()]);
        }
    }

    #[test]
    fn four_children_fail() {
        let parent = di(6, 0);
        let mut list = parent.descendants_at(4);
        list.push(parent);
        let fail = certify_sparse(&list).unwrap_err();
        assert_eq!(fail.interval, parent);
        assert_eq!(fail.e_len, 0);
    }

    #[test]
    fn nested_chain_certifies() {
        let c = certify_sparse(&[di(8, 0), di(5, 0), di(2, 0)]).unwrap();
        assert!(c.verify());
        let top = c.members.iter().find(|m| m.interval == di(8, 0)).unwrap();
        assert_eq!(top.e_len(), 256 - 32);
    }

    #[test]
    fn sparse_form_examples() {
        let i = di(5, 0);
        let one = FiniteSignal::indicator(i.span());
        let c = certify_sparse(&[i]).unwrap();
        assert_eq!(sparse_form(&c, &one, &one, 1.0, 1.0).unwrap().value, 32.0);
        assert_eq!(sparse_form(&SparseCollection::default(), &one, &one, 1.0, 1.0).unwrap().value, 0.0);
        let uncertified = SparseCollection { members: c.members.clone(), certified: false };
        assert!(!sparse_form(&uncertified, &one, &one, 1.0, 1.0).unwrap().certified);
    }

    #[test]
    fn cz_constant_and_spike() {
        let i0 = di(8, 0);
        let flat = FiniteSignal::indicator(i0.span());
        let d = cz_decompose(&flat, i0, 10.0).unwrap();
        assert!(d.bad.is_empty());
        assert_eq!(d.gamma, flat);

        let spike = FiniteSignal::from_real(37, &[256.0]);
        let d = cz_decompose(&spike, i0, 10.0).unwrap();
        // first level where 256 / |J| >= 10 is |J| = 16
        assert_eq!(d.bad, vec![DyadicInterval::containing(37, 4, 0)]);
        assert!(d.gamma.is_zero());
        assert!(cz_decompose(&spike, i0, 1.0).is_err());
        assert!(cz_decompose(&FiniteSignal::from_real(300, &[1.0]), i0, 10.0).is_err());
        assert!(cz_decompose(&FiniteSignal::from_real(3, &[-1.0]), i0, 10.0).is_err());
    }

    #[test]
    fn cz_matches_scan() {
        let i0 = di(9, 0);
        for seed in 0..10 {
            let (f, _) = random_pair(seed, &i0);
            let d = cz_decompose(&f, i0, 10.0).unwrap();
            assert_eq!(d.bad, crate::oracle::cz_bad_intervals(&f, &i0, 10.0));
        }
        let spike = FiniteSignal::from_real(200, &[512.0]);
        assert_eq!(cz_decompose(&spike, i0, 10.0).unwrap().bad, crate::oracle::cz_bad_intervals(&spike, &i0, 10.0));
    }

    #[test]
    fn nested_pair_form_matches_enumeration() {
        let i0 = di(6, 0);
        let (f, g) = random_pair(4, &i0);
        let pair = [i0, di(3, 2)];
        let c = certify_sparse(&pair).unwrap();
        for (r, s) in [(1.0, 1.0), (1.5, 1.2)] {
            let fast = sparse_form(&c, &f, &g, r, s).unwrap().value;
            let slow = crate::oracle::sparse_form(&pair, &f, &g, r, s);
            assert!((fast - slow).abs() <= 1e-12 * slow);
        }
    }

    #[test]
    fn cz_random_invariants() {
        let i0 = di(10, 0);
        for seed in 0..20 {
            let (f, _) = random_pair(seed, &i0);
            let d = cz_decompose(&f, i0, 10.0).unwrap();
            let inv = d.invariants(&f);
            assert_eq!(inv.reconstruction_error, 0.0);
            assert!(inv.disjoint && inv.maximal);
            assert!(inv.l1_total <= inv.l1_budget * (1.0 + 1e-12));
            assert!(inv.gamma_linf < 10.0 * d.avg0);
            assert!(inv.max_level_ratio < 20.0);
        }
    }

    #[test]
    fn flat_inputs_give_single_member() {
        let i0 = di(8, 0);
        let one = FiniteSignal::indicator(i0.span());
        let (c, rep) = build_sparse_collection(&t32(), &one, &one, i0, 1.5, &SparseConfig::default()).unwrap();
        assert_eq!(c.intervals(), vec![i0]);
        assert_eq!(c.members[0].e_set, vec![i0.span()]);
        assert!(rep.certified && rep.measure_ok());
    }

    #[test]
    fn zero_inputs_give_empty_collection() {
        let i0 = di(8, 0);
        let one = FiniteSignal::indicator(i0.span());
        let (c, _) = build_sparse_collection(&t32(), &FiniteSignal::zero(), &one, i0, 1.5, &SparseConfig::default()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn spike_gives_nested_chain() {
        let i0 = di(10, 0);
        let spike = FiniteSignal::from_real(300, &[1.0]);
        let one = FiniteSignal::indicator(i0.span());
        let (c, rep) = build_sparse_collection(&t32(), &spike, &one, i0, 1.5, &SparseConfig::default()).unwrap();
        assert!(c.verify());
        // each stop shrinks the length by 16: 1024, 64, 4
        assert_eq!(rep.max_depth, 2);
        let mut levels: Vec<u32> = c.intervals().iter().map(|i| i.level).collect();
        levels.sort();
        assert_eq!(levels, vec![2, 6, 10]);
        assert!(c.intervals().iter().all(|i| i.contains(300)));
    }

    #[test]
    fn random_builds_certify() {
        let i0 = di(10, 0);
        for seed in 0..10 {
            let (f, g) = random_pair(seed, &i0);
            let (c, rep) = build_sparse_collection(&t32(), &f, &g, i0, 1.5, &SparseConfig::default()).unwrap();
            assert!(c.certified && c.verify());
            assert!(rep.nodes.iter().all(|n| 5 * n.stopping_total <= n.interval.len()));
            assert!(rep.ratio.is_finite());
        }
    }

    #[test]
    fn classification_partitions() {
        let i0 = di(10, 0);
        let (f, _) = random_pair(3, &i0);
        let d = cz_decompose(&f, i0, 10.0).unwrap();
        let class = classify_intervals(&d, &t32(), 2, 1.0, 0.4).unwrap();
        let bucketed: usize = class.buckets.values().map(Vec::len).sum();
        assert_eq!(bucketed, class.nonstandard_count());
        assert_eq!(class.entries.len(), working_family(&d).len());
        if let Some(c) = class.max_t_minus_s {
            assert!(c <= 0);
        }
        let rep = carleson_check(&class, DEFAULT_OVERLAP_CONSTANT);
        assert!(rep.rows.iter().all(|r| r[2] >= 1.0));
    }

    #[test]
    fn zero_bad_part_is_all_standard() {
        let i0 = di(8, 0);
        let flat = FiniteSignal::indicator(i0.span());
        let d = cz_decompose(&flat, i0, 10.0).unwrap();
        let class = classify_intervals(&d, &t32(), 1, 1.0, 0.4).unwrap();
        assert_eq!(class.nonstandard_count(), 0);
        assert!(class.entries.iter().all(|e| e.norm_sq == 0.0));
    }

    #[test]
    fn tall_spike_is_nonstandard() {
        let i0 = di(10, 0);
        let x0 = 517;
        let f = FiniteSignal::from_real(x0, &[4096.0]);
        let d = cz_decompose(&f, i0, 10.0).unwrap();
        let j = d.bad[0];
        let s = 1;
        let class = classify_intervals(&d, &t32(), s, 1.0, 0.4).unwrap();
        let level = j.level + s + 3;
        let e = class
            .entries
            .iter()
            .find(|e| e.interval.level == level && e.interval.contains(x0))
            .expect("interval at the matching scale");
        let direct = crate::oracle::apply_localized(&t32(), &e.interval, &d.b_level(j.level as i64)).norm_l2().powi(2);
        assert!((direct - e.norm_sq).abs() <= 1e-9 * direct.max(1.0));
        assert!(!e.standard);
    }

    #[test]
    fn singleton_bucket_ratio_is_one() {
        let class = IntervalClassification {
            s: 1,
            i0: di(8, 0),
            entries: vec![ClassifiedInterval {
                interval: di(5, 1),
                k: 2,
                norm_sq: 1.0,
                mass_inside: 1.0,
                mass_enlarged: 1.0,
                threshold: 0.0,
                standard: false,
                t: Some(3),
            }],
            buckets: BTreeMap::from([(3, vec![0])]),
            max_t_minus_s: Some(2),
        };
        let rep = carleson_check(&class, 4.0);
        assert_eq!(rep.rows[0][2], 1.0);
        assert_eq!(class.layers(3, 4.0), vec![vec![di(5, 1)]]);
    }

    #[test]
    fn chaining_single_and_orthogonal() {
        let phi = FiniteSignal::from_real(0, &[3.0, 4.0]);
        let (b, cert) = rm_maximal(std::slice::from_ref(&phi)).unwrap();
        assert_eq!(b, phi);
        assert!((cert.a_hat - 5.0).abs() < 1e-12);
        assert!(rm_maximal(&[]).is_err());

        let n = 32;
        let spikes: Vec<FiniteSignal> = (0..n).map(|j| FiniteSignal::delta(j as i64)).collect();
        let (_, cert) = rm_maximal(&spikes).unwrap();
        assert!((cert.true_max_l2 - (n as f64).sqrt()).abs() < 1e-12);
        assert!(cert.dominates && cert.within_log_factor);
    }

    #[test]
    fn chaining_dominates_random_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let n = rng.random_range(1..=64);
            let phis: Vec<FiniteSignal> = (0..n)
                .map(|_| {
                    let start = rng.random_range(-10..10);
                    let vals: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
                    FiniteSignal::from_real(start, &vals)
                })
                .collect();
            let (_, cert) = rm_maximal(&phis).unwrap();
            assert!(cert.dominates && cert.within_log_factor, "{cert:?}");
        }
    }

    #[test]
    fn decay_in_s_zero_and_spike() {
        let i0 = di(10, 0);
        let flat = FiniteSignal::indicator(i0.span());
        let rep = decay_in_s_report(&t32(), &flat, &flat, i0, &[1, 2, 3], 1.5, 1.0, 0.4, 10.0).unwrap();
        assert!(rep.column("standard_norm").unwrap().iter().all(|&v| v == 0.0));
        assert!(rep.column("nonstandard_norm").unwrap().iter().all(|&v| v == 0.0));

        // one stopping interval at level 6: only s = 1 reaches a working scale
        let mut v = vec![0.01; 1024];
        for x in &mut v[64..128] {
            *x = 100.0;
        }
        let f = FiniteSignal::from_real(0, &v);
        let d = cz_decompose(&f, i0, 10.0).unwrap();
        assert_eq!(d.bad.len(), 1);
        assert_eq!(d.bad[0].level, 6);
        let rep = decay_in_s_report(&t32(), &f, &flat, i0, &[1, 2, 3], 1.5, 1.0, 0.4, 10.0).unwrap();
        assert_eq!(rep.metric("trivial_fit_standard").unwrap() + rep.metric("trivial_fit_nonstandard").unwrap(), 2.0);
    }
}
