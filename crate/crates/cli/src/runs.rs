//! One function per subcommand. Each returns its tables in a fixed order and
//! writes nothing; the caller decides where artifacts go.

use modhilbert_core::acceptance::{run_all, CriterionOutcome};
use modhilbert_core::ergodic::{sample_points, tail_profile, transference_check};
use modhilbert_core::kernel::{correlation, diag_decay_report, kappa_decay_report, offdiag_decay_report};
use modhilbert_core::operators::{hilbert_maximal, opnorm_estimate};
use modhilbert_core::oracle;
use modhilbert_core::phase::{check_admissible_with, exponential_sum, vdc_bound};
use modhilbert_core::random::{
    chernoff_check, exceptional_cover_of, random_correlation_report, sample_sequence,
};
use modhilbert_core::sparse::{
    build_sparse_collection, carleson_check, classify_intervals, cz_decompose, decay_in_s_report, random_pair,
};
use modhilbert_core::{
    Complex64, CoeffSequence, DyadicInterval, ExperimentReport, FiniteSignal, Interval, Rotation, SparseConfig,
    StepFunction, VdcParams,
};
use rayon::prelude::*;

use crate::config::RunConfig;

/// Agreement required between fast routines and their oracles.
const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Default)]
pub struct Outcome {
    /// `(file stem, table)` pairs.
    pub tables: Vec<(String, ExperimentReport)>,
    pub acceptance: Option<Vec<CriterionOutcome>>,
}

impl Outcome {
    fn push(&mut self, stem: impl Into<String>, rep: ExperimentReport) {
        self.tables.push((stem.into(), rep));
    }

    pub fn passed(&self) -> bool {
        self.tables.iter().all(|(_, r)| r.passed())
            && self.acceptance.as_ref().is_none_or(|a| a.iter().all(|c| c.passed))
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn decay(cfg: &RunConfig) -> Result<Outcome, String> {
    let d = &cfg.decay;
    let top = d.scales.iter().copied().max().unwrap_or(0).max(d.offdiag_top);
    let kappa_top = d.kappa_scales.iter().copied().max().unwrap_or(0);
    let n_max = (1usize << top).max((1.0 + d.kappa).powi(kappa_top as i32) as usize) + 2;
    let a = cfg.coefficients(n_max)?;
    let mut out = Outcome::default();

    let mut diag = diag_decay_report(&a, &d.scales).map_err(err)?;
    let degenerate = diag.metric("degenerate") == Some(1.0);
    let eps = diag.metric("eps_hat").unwrap_or(0.0);
    if !degenerate {
        diag.set_metric("eps_min", d.eps_min);
        diag.set_flag("eps_min", eps >= d.eps_min);
    }
    out.push("decay_diag", diag);

    let off_eps = d.offdiag_eps.unwrap_or(eps.max(0.0));

    for &k in &d.offdiag_ks {
        let js: Vec<u32> = (k + d.separation..=d.offdiag_top).collect();
        let rep = offdiag_decay_report(&a, k, &js, d.separation, off_eps, Some(d.offdiag_bound)).map_err(err)?;
        out.push(format!("decay_offdiag_k{k}"), rep);
    }
    if !d.kappa_scales.is_empty() {
        out.push("decay_kappa", kappa_decay_report(&a, d.kappa, &d.kappa_scales).map_err(err)?);
    }
    Ok(out)
}

pub fn vdc(cfg: &RunConfig) -> Result<Outcome, String> {
    let v = &cfg.vdc;
    let phase = cfg.phase()?;
    let cert = check_admissible_with(&phase, v.s_max, v.eta_cap).map_err(err)?;
    let mut adm = ExperimentReport::new("admissibility", &["s", "order", "value", "lower", "upper"]);
    for viol in &cert.violations {
        adm.push_row(vec![viol.s, viol.order as f64, viol.value, viol.lower, viol.upper]);
    }
    adm.set_metric("alpha", cert.alpha);
    adm.set_metric("eta", cert.eta);
    adm.set_metric("eta_cap", cert.eta_cap);
    adm.set_metric("samples", cert.samples as f64);
    adm.set_flag("admissible", cert.admissible());

    let k = phase.m() + 1;
    let cells: Vec<(u64, u64)> = v.starts.iter().flat_map(|&s| v.lengths.iter().map(move |&n| (s, n))).collect();
    let rows: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(start, n)| -> Result<Vec<f64>, String> {
            let lo = start as i64 + 1;
            let hi = start as i64 + n as i64;
            let sum = exponential_sum(lo..=hi, |x| phase.value(x));
            let params = VdcParams::measure(k, lo as f64, hi as f64, |x| phase.eval_deriv(k as usize, x).unwrap_or(0.0))
                .map_err(err)?;
            let bound = vdc_bound(&params, n).map_err(err)?;
            Ok(vec![start as f64, n as f64, k as f64, sum.norm(), bound, sum.norm() / bound])
        })
        .collect::<Result<_, _>>()?;
    let mut sums = ExperimentReport::new("vdc", &["start", "length", "k", "sum_abs", "bound", "ratio"]);
    let worst = rows.iter().map(|r| r[5]).fold(0.0, f64::max);
    for row in rows {
        sums.push_row(row);
    }
    sums.set_metric("max_ratio", worst);
    sums.set_metric("constant", v.constant);
    sums.set_flag("dominated", worst <= v.constant);

    let mut out = Outcome::default();
    out.push("vdc_admissibility", adm);
    out.push("vdc_sums", sums);
    Ok(out)
}

/// A deterministic oscillating test signal on `[0, len)`.
fn probe_signal(len: usize) -> FiniteSignal {
    FiniteSignal::from_fn(Interval::new(0, len as i64), |x| {
        let t = x as f64;
        Complex64::new((1.3 * t).sin() + 0.5, (0.07 * t * t).cos())
    })
}

pub fn maximal(cfg: &RunConfig) -> Result<Outcome, String> {
    let m = &cfg.maximal;
    let top = m.sizes.iter().copied().max().unwrap_or(0);
    let a = cfg.coefficients(2 * top + 2)?;
    let mut out = Outcome::default();
    out.push("maximal_opnorm", opnorm_estimate(&a, &m.rs, &m.sizes, m.trials, cfg.seed).map_err(err)?);

    let f = probe_signal(64);
    let window = Interval::new(-8, 136);
    let fast = hilbert_maximal(&a, &f, window);
    let slow = oracle::hilbert_maximal(&a, &f, window);
    let mut cmp = ExperimentReport::new("maximal_oracle", &["x", "fast", "oracle"]);
    for x in window.iter() {
        cmp.push_row(vec![x as f64, fast.get(x).re, slow.get(x).re]);
    }
    let diff = fast.max_abs_diff(&slow);
    let scale = slow.norm_linf().max(1.0);
    cmp.set_metric("max_abs_diff", diff);
    cmp.set_flag("oracle_agrees", diff <= ORACLE_TOLERANCE * scale);
    out.push("maximal_oracle", cmp);
    Ok(out)
}

pub fn sparse(cfg: &RunConfig) -> Result<Outcome, String> {
    let s = &cfg.sparse;
    let i0 = DyadicInterval::new(s.level, 0, 0).map_err(err)?;
    let a = cfg.coefficients(1 << (s.level + 2))?;
    let build_cfg = SparseConfig { stopping_threshold: s.stopping_threshold, measure_fraction: s.measure_fraction };
    let seeds: Vec<u64> = (0..s.instances).map(|k| cfg.seed.wrapping_add(k)).collect();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = seeds
        .par_iter()
        .map(|&seed| -> Result<_, String> {
            let (f, g) = random_pair(seed, &i0);
            let (coll, rep) = build_sparse_collection(&a, &f, &g, i0, s.r, &build_cfg).map_err(err)?;
            let cz = cz_decompose(&f, i0, s.cz_threshold).map_err(err)?;
            let inv = cz.invariants(&f);
            let build = vec![
                seed as f64,
                coll.len() as f64,
                rep.max_depth as f64,
                (coll.certified && coll.verify()) as u8 as f64,
                rep.measure_ok() as u8 as f64,
                rep.pairing,
                rep.form,
                rep.ratio,
                (s.r - 1.0) * rep.ratio,
            ];
            let czrow = vec![
                seed as f64,
                cz.bad.len() as f64,
                inv.reconstruction_error / cz.avg0.max(f64::MIN_POSITIVE),
                inv.max_level_ratio,
                inv.l1_total,
                inv.l1_budget,
                (inv.disjoint && inv.maximal) as u8 as f64,
            ];
            Ok((build, czrow))
        })
        .collect::<Result<_, _>>()?;

    let mut builds = ExperimentReport::new(
        "sparse_builds",
        &["seed", "members", "max_depth", "certified", "measure_ok", "pairing", "form", "ratio", "scaled_ratio"],
    );
    let mut czs = ExperimentReport::new(
        "cz_invariants",
        &["seed", "bad", "relative_reconstruction_error", "max_level_ratio", "l1_total", "l1_budget", "maximal"],
    );
    for (b, c) in rows {
        builds.push_row(b);
        czs.push_row(c);
    }
    let col = |r: &ExperimentReport, name: &str| r.column(name).unwrap_or_default();
    let worst_scaled = col(&builds, "scaled_ratio").into_iter().fold(0.0, f64::max);
    builds.set_metric("max_scaled_ratio", worst_scaled);
    builds.set_metric("domination_constant", s.domination_constant);
    builds.set_flag("certified", col(&builds, "certified").iter().all(|&v| v == 1.0));
    builds.set_flag("measure_ok", col(&builds, "measure_ok").iter().all(|&v| v == 1.0));
    builds.set_flag("dominated", worst_scaled <= s.domination_constant);

    let worst_rec = col(&czs, "relative_reconstruction_error").into_iter().fold(0.0, f64::max);
    let worst_level = col(&czs, "max_level_ratio").into_iter().fold(0.0, f64::max);
    let l1_ok = czs.rows.iter().all(|r| r[4] <= r[5] * (1.0 + 1e-12));
    czs.set_metric("max_relative_reconstruction_error", worst_rec);
    czs.set_metric("max_level_ratio", worst_level);
    czs.set_flag("reconstruction", worst_rec <= ORACLE_TOLERANCE);
    czs.set_flag("l1_budget", l1_ok);
    czs.set_flag("level_ratio_within_2k", worst_level <= 2.0 * s.cz_threshold);
    czs.set_flag("maximal", col(&czs, "maximal").iter().all(|&v| v == 1.0));

    let mut out = Outcome::default();
    out.push("sparse_builds", builds);
    out.push("sparse_cz", czs);

    let (f, g) = random_pair(seeds[0], &i0);
    let (coll, _) = build_sparse_collection(&a, &f, &g, i0, s.r, &build_cfg).map_err(err)?;
    out.push("sparse_collection", coll.to_report());
    let decomp = cz_decompose(&f, i0, s.cz_threshold).map_err(err)?;
    let class = classify_intervals(&decomp, &a, s.s_range[0], s.c0, s.eps_hat).map_err(err)?;
    out.push("sparse_carleson", carleson_check(&class, s.overlap_constant));
    let in_s = decay_in_s_report(&a, &f, &g, i0, &s.s_range, s.r, s.c0, s.eps_hat, s.cz_threshold).map_err(err)?;
    out.push("sparse_decay_in_s", in_s);
    Ok(out)
}

pub fn random(cfg: &RunConfig) -> Result<Outcome, String> {
    let r = &cfg.random;
    let dist = r.distribution;
    let mut out = Outcome::default();

    let root = (r.chernoff_n as f64).sqrt();
    let grid: Vec<f64> = r.chernoff_grid.iter().map(|k| k * root).collect();
    let mut chern = chernoff_check(dist, r.chernoff_n, &grid, r.chernoff_trials, cfg.seed).map_err(err)?;
    let c = chern.metric("c").unwrap_or(f64::NAN);
    chern.set_metric("c_min", r.c_range.0);
    chern.set_metric("c_max", r.c_range.1);
    chern.set_flag("c_in_range", c >= r.c_range.0 && c <= r.c_range.1);
    out.push("random_chernoff", chern);

    let seeds: Vec<u64> = (0..r.correlation_seeds).map(|k| cfg.seed.wrapping_add(k)).collect();
    let mut constant = 0.0f64;
    for &i in &r.fit_scales {
        let rep = random_correlation_report(dist, i, i, &seeds, None).map_err(err)?;
        constant = constant.max(rep.metric("max_ratio").unwrap_or(f64::INFINITY));
        out.push(format!("random_corr_fit_i{i}"), rep);
    }
    for &i in &r.check_scales {
        let rep = random_correlation_report(dist, i, i, &seeds, Some(constant)).map_err(err)?;
        out.push(format!("random_corr_check_i{i}"), rep);
    }

    let j = r.exceptional_j;
    let cover_seeds: Vec<u64> = seeds.iter().copied().take(10).collect();
    let rows: Vec<Vec<Vec<f64>>> = cover_seeds
        .par_iter()
        .map(|&seed| -> Result<_, String> {
            let a = CoeffSequence::random(sample_sequence(dist, seed, (1 << j) + 1).map_err(err)?);
            r.exceptional_is
                .iter()
                .map(|&i| {
                    let corr = correlation(&a, j, i).map_err(err)?;
                    let cover = exceptional_cover_of(&corr, i, j, r.exceptional_threshold).map_err(err)?;
                    Ok(vec![
                        seed as f64,
                        i as f64,
                        j as f64,
                        cover.flagged as f64,
                        cover.intervals.len() as f64,
                        cover.fitted_c0(),
                        cover.verify(&corr) as u8 as f64,
                    ])
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut covers =
        ExperimentReport::new("exceptional_cover", &["seed", "i", "j", "flagged", "intervals", "fitted_c0", "complete"]);
    for row in rows.into_iter().flatten() {
        covers.push_row(row);
    }
    for &i in &r.exceptional_is {
        let c0 = covers.rows.iter().filter(|row| row[1] == i as f64).map(|row| row[5]).fold(f64::INFINITY, f64::min);
        covers.set_metric(&format!("c0_i{i}"), c0);
    }
    if let [first, .., last] = r.exceptional_is[..] {
        let (c_first, c_last) = (covers.metric(&format!("c0_i{first}")), covers.metric(&format!("c0_i{last}")));
        if let (Some(lo), Some(hi)) = (c_first, c_last) {
            covers.set_metric("relative_drift", hi / lo - 1.0);
        }
    }
    covers.set_flag("complete", covers.rows.iter().all(|row| row[6] == 1.0));
    out.push("random_exceptional", covers);
    Ok(out)
}

pub fn ergodic(cfg: &RunConfig) -> Result<Outcome, String> {
    let e = &cfg.ergodic;
    let horizon = (1.0 + e.kappa).powi(e.j_max as i32 + 1) as usize;
    let n_max = horizon.max(e.transference_n as usize + 3 * e.transference_len) + 2;
    let a = cfg.coefficients(n_max)?;
    let sys = Rotation::new(e.alpha).map_err(err)?;
    let step = StepFunction::new(e.breaks.clone(), e.values.clone()).map_err(err)?;
    let f = |x: f64| Complex64::new(step.eval(x), 0.0);
    let prof = tail_profile(&sys, &a, &f, &sample_points(e.samples, 0.0), e.kappa, e.j_max, e.fit_from).map_err(err)?;
    let mut tail = prof.to_report();
    if prof.fit.is_none() {
        tail.set_flag("decay", prof.max_tail_sup(e.j_max) == 0.0);
    }

    let len = e.transference_len as i64;
    let n = e.transference_n as i64;
    let window = Interval::new(-len, len + 3 * n);
    let trans = transference_check(&a, &probe_signal(e.transference_len), e.transference_n, window).map_err(err)?;

    let mut out = Outcome::default();
    out.push("ergodic_tail", tail);
    out.push("ergodic_transference", trans);
    Ok(out)
}

pub fn all() -> Result<Outcome, String> {
    let results = run_all().map_err(err)?;
    Ok(Outcome { tables: Vec::new(), acceptance: Some(results) })
}
