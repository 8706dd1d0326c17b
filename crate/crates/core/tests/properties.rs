use modhilbert_core::kernel::correlation;
use modhilbert_core::operators::{hilbert_maximal, truncated_sum};
use modhilbert_core::phase::{vdc_bound, VdcParams};
use modhilbert_core::sparse::{certify_sparse, cz_decompose, rm_maximal};
use modhilbert_core::*;
use proptest::prelude::*;

fn signal() -> impl Strategy<Value = FiniteSignal> {
    (-20i64..20, prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40))
        .prop_map(|(s, v)| FiniteSignal::new(s, v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()))
}

fn close(a: &FiniteSignal, b: &FiniteSignal, tol: f64) -> bool {
    a.max_abs_diff(b) <= tol
}

fn t32() -> CoeffSequence {
    CoeffSequence::modulated(AdmissiblePhase::monomial(1.5).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn average_is_homogeneous_and_monotone(f in signal(), re in -3.0f64..3.0, im in -3.0f64..3.0, r in 1.0f64..4.0, dr in 0.0f64..3.0) {
        let c = Complex64::new(re, im);
        let iv = Interval::new(f.start() - 3, f.end() + 2);
        let lhs = average(&f.scale(c), iv, r).unwrap();
        let rhs = c.norm() * average(&f, iv, r).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        prop_assert!(average(&f, iv, r).unwrap() <= average(&f, iv, r + dr).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn convolution_algebra(f in signal(), g in signal(), h in signal()) {
        prop_assert!(close(&convolve(&f, &g), &convolve(&g, &f), 1e-12));
        prop_assert!(close(&convolve(&f, &g.add(&h)), &convolve(&f, &g).add(&convolve(&f, &h)), 1e-12));
        prop_assert!(convolve(&f, &g).norm_l1() <= f.norm_l1() * g.norm_l1() * (1.0 + 1e-12));
        prop_assert!(close(&reflect_conj(&convolve(&f, &g)), &convolve(&reflect_conj(&f), &reflect_conj(&g)), 1e-12));
    }

    #[test]
    fn dyadic_intervals_nest_or_are_disjoint(l1 in 0u32..9, i1 in -8i64..8, l2 in 0u32..9, i2 in -8i64..8, off in -5i64..5) {
        let a = DyadicInterval::new(l1, i1, off).unwrap();
        let b = DyadicInterval::new(l2, i2, off).unwrap();
        prop_assert!(a.is_disjoint(&b) || a.contains_interval(&b) || b.contains_interval(&a));
    }

    #[test]
    fn maximal_truncation_properties(f in signal(), g in signal(), n in 1u64..60, re in -2.0f64..2.0) {
        let a = t32();
        let w = Interval::new(-30, 90);
        let hf = hilbert_maximal(&a, &f, w);
        let tn = truncated_sum(&a, &f, n, w);
        for x in w.iter() {
            prop_assert!(tn.get(x).norm() <= hf.get(x).re * (1.0 + 1e-12) + 1e-15);
        }
        let c = Complex64::new(re, 0.5);
        prop_assert!(close(&hilbert_maximal(&a, &f.scale(c), w), &hf.scale(Complex64::new(c.norm(), 0.0)), 1e-12));
        let sum = hilbert_maximal(&a, &f.add(&g), w);
        let hg = hilbert_maximal(&a, &g, w);
        for x in w.iter() {
            prop_assert!(sum.get(x).re <= hf.get(x).re + hg.get(x).re + 1e-12);
        }
    }

    #[test]
    fn correlation_adjoint_symmetry(j in 1u32..8, k in 1u32..8) {
        let a = t32();
        let cjk = correlation(&a, j, k).unwrap();
        let ckj = correlation(&a, k, j).unwrap();
        for x in -300i64..300 {
            prop_assert!((cjk.get(x) - ckj.get(-x).conj()).norm() <= 1e-15);
        }
    }

    #[test]
    fn vdc_bound_is_monotone(k in 2u32..5, lambda in 1e-6f64..1e-1, h in 1.0f64..4.0, dh in 0.0f64..3.0, n in 64u64..4096, dn in 0u64..4096) {
        let p = VdcParams { k, a: 0.0, b: 32.0, lambda, h };
        let base = vdc_bound(&p, n).unwrap();
        let wider = VdcParams { h: h + dh, ..p };
        prop_assert!(vdc_bound(&wider, n).unwrap() >= base);
        prop_assert!(vdc_bound(&p, n + dn).unwrap() >= base * (1.0 - 1e-12));
    }

    #[test]
    fn certified_collections_verify(levels in prop::collection::vec((0u32..7, 0i64..16), 1..30)) {
        let list: Vec<DyadicInterval> = levels
            .into_iter()
            .map(|(l, i)| DyadicInterval::new(l, i % (1 << (7 - l)).max(1), 0).unwrap())
            .collect();
        if let Ok(c) = certify_sparse(&list) {
            prop_assert!(c.verify());
        }
    }

    #[test]
    fn cz_reconstruction_is_exact(vals in prop::collection::vec(0.0f64..1.0, 256), spikes in prop::collection::vec((0usize..256, 1.0f64..500.0), 0..5)) {
        let mut v = vals;
        for (x, h) in spikes {
            v[x] += h;
        }
        let f = FiniteSignal::from_real(0, &v);
        let i0 = DyadicInterval::new(8, 0, 0).unwrap();
        let d = cz_decompose(&f, i0, 10.0).unwrap();
        let inv = d.invariants(&f);
        prop_assert_eq!(inv.reconstruction_error, 0.0);
        prop_assert!(inv.disjoint && inv.maximal);
        prop_assert!(inv.max_level_ratio < 2.0 * d.threshold);
    }

    #[test]
    fn chaining_dominates(phis in prop::collection::vec(signal(), 1..40)) {
        let (_, cert) = rm_maximal(&phis).unwrap();
        prop_assert!(cert.dominates);
        prop_assert!(cert.within_log_factor);
    }
}
