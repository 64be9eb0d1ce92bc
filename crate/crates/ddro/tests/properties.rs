mod common;

use common::{chi2_divergence, cvar_breakpoints, dot};
use ddro::data::{upper_order_statistic, Dataset};
use ddro::queue::simulate_lindley;
use ddro::scalar::{cvar_discrete, wce_chi2};
use ddro::sets::{fit_discrete, SetKind, UncertaintySet};
use proptest::prelude::*;

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2)
}

fn closed_form_set() -> impl Strategy<Value = UncertaintySet> {
    let cs = (vec2(), 0.05..2.0f64, 0.05..2.0f64, -0.5..0.5f64, 0.0..0.5f64, 0.0..0.5f64).prop_map(
        |(mu, a, b, rho, g1, g2)| {
            let c = rho * (a * b).sqrt();
            UncertaintySet::cs_from_parts(mu, vec![a, c, c, b], g1, g2).unwrap()
        },
    );
    let fb = (vec2(), prop::collection::vec(0.0..1.0f64, 2), prop::collection::vec(0.0..2.0f64, 4)).prop_map(
        |(m_b, gap, s)| {
            let m_f = m_b.iter().zip(&gap).map(|(a, g)| a + g).collect();
            UncertaintySet::fb_from_parts(m_b, m_f, s[..2].to_vec(), s[2..].to_vec()).unwrap()
        },
    );
    prop_oneof![cs, fb]
}

fn discrete_set() -> impl Strategy<Value = UncertaintySet> {
    (prop::collection::vec(1usize..30, 4), any::<bool>()).prop_map(|(counts, chi2)| {
        let pts = [[0.0, 0.0], [1.0, 0.2], [-0.4, 1.0], [0.3, -1.2]];
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .zip(&counts)
            .flat_map(|(p, &k)| std::iter::repeat(p.to_vec()).take(k))
            .collect();
        let kind = if chi2 { SetKind::Chi2 } else { SetKind::G };
        fit_discrete(&Dataset::from_rows(&rows).unwrap(), None, kind, 0.1).unwrap()
    })
}

fn scale(v: &[f64]) -> f64 {
    1.0 + 4.0 * dot(v, v).sqrt()
}

fn check_support(set: &UncertaintySet, v: &[f64], w: &[f64], lam: f64, e1: f64, e2: f64) -> Result<(), TestCaseError> {
    let (e1, e2) = (e1.min(e2), e1.max(e2));
    let s = |x: &[f64], e: f64| set.support(x, e).unwrap().value;
    let sv = s(v, e1);
    let lv: Vec<f64> = v.iter().map(|x| lam * x).collect();
    prop_assert!((s(&lv, e1) - lam * sv).abs() <= 1e-8 * lam * scale(v));
    let vw: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
    prop_assert!(s(&vw, e1) <= sv + s(w, e1) + 1e-8 * (scale(v) + scale(w)));
    prop_assert!(s(v, e2) <= sv + 1e-8 * scale(v));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_supports_are_sublinear_and_shrink_in_eps(
        set in closed_form_set(), v in vec2(), w in vec2(), lam in 0.1..10.0f64, e1 in 0.01..0.6f64, e2 in 0.01..0.6f64,
    ) {
        check_support(&set, &v, &w, lam, e1, e2)?;
    }

    #[test]
    fn discrete_supports_are_sublinear_and_shrink_in_eps(
        set in discrete_set(), v in vec2(), w in vec2(), lam in 0.1..10.0f64, e1 in 0.01..0.9f64, e2 in 0.01..0.9f64,
    ) {
        check_support(&set, &v, &w, lam, e1, e2)?;
    }

    #[test]
    fn support_dominates_every_member_maximizer(set in closed_form_set(), v in vec2(), w in vec2(), eps in 0.01..0.6f64) {
        // The maximizer for w is a member of the set, so it cannot beat δ*(v).
        let u = set.support(&w, eps).unwrap().maximizer;
        let sv = set.support(&v, eps).unwrap();
        prop_assert!(dot(&u, &v) <= sv.value + 1e-8 * scale(&v));
        prop_assert!((dot(&sv.maximizer, &v) - sv.value).abs() <= 1e-7 * scale(&v));
    }

    #[test]
    fn sets_survive_json(set in closed_form_set(), v in vec2()) {
        let back = UncertaintySet::from_json(&set.to_json()).unwrap();
        prop_assert_eq!(set.support(&v, 0.1).unwrap().value, back.support(&v, 0.1).unwrap().value);
    }

    #[test]
    fn cvar_matches_breakpoints(raw in prop::collection::vec((0.01..1.0f64, -5.0..5.0f64), 1..12), eps in 0.01..1.0f64) {
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let p: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
        let c: Vec<f64> = raw.iter().map(|r| r.1).collect();
        let got = cvar_discrete(&p, &c, eps);
        prop_assert!((got - cvar_breakpoints(&p, &c, eps)).abs() <= 1e-10 * (1.0 + got.abs()));
    }

    #[test]
    fn chi2_worst_case_is_feasible_and_beats_center(
        raw in prop::collection::vec((0.05..1.0f64, -3.0..3.0f64), 2..8), rho in 0.001..0.5f64,
    ) {
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let ph: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
        let c: Vec<f64> = raw.iter().map(|r| r.1).collect();
        let wc = wce_chi2(&ph, &c, rho).unwrap();
        prop_assert!(chi2_divergence(&ph, &wc.p) <= rho + 1e-9);
        prop_assert!(wc.value >= dot(&ph, &c) - 1e-12);
        prop_assert!(wc.value <= c.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-12);
    }

    #[test]
    fn lindley_equals_double_max(pairs in prop::collection::vec((0u32..200, 0u32..200), 1..60)) {
        let s: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 32.0).collect();
        let a: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 32.0).collect();
        let w = simulate_lindley(&s, &a).unwrap();
        for m in 0..s.len() {
            let best = (0..m).map(|j| (j..m).map(|l| s[l] - a[l + 1]).sum::<f64>()).fold(0.0f64, f64::max);
            prop_assert_eq!(w[m], best);
        }
    }

    #[test]
    fn bootstrap_threshold_is_monotone_in_alpha(mut xs in prop::collection::vec(-10.0..10.0f64, 5..200), a in 0.01..0.99f64, b in 0.01..0.99f64) {
        let mut ys = xs.clone();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(upper_order_statistic(&mut xs, lo) >= upper_order_statistic(&mut ys, hi));
    }
}
