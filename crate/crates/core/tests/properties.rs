use std::sync::OnceLock;

use proptest::prelude::*;

use hybridqos::bounds::{bounds, ArrivalCurve, BoundQuery, ServiceCurve, ThetaGrid};
use hybridqos::channel::{dbm_to_watts, watts_to_dbm, RfChannelSpec, VlcChannelSpec};
use hybridqos::qos::{LinkSet, Strategy};
use hybridqos::rates::{FrameSpec, PowerBudget};
use hybridqos::sim::lindley;
use hybridqos::source::SourceSpec;

fn links(distance: f64, rx_x: f64, p_dbm: f64, ratio: f64) -> LinkSet {
    let rf = RfChannelSpec {
        distance_m: distance,
        ..Default::default()
    };
    let vlc = VlcChannelSpec {
        rx_position_m: [rx_x, 0.0, -2.5],
        ..Default::default()
    };
    let budget = PowerBudget {
        avg_power_dbm: p_dbm,
        avg_to_peak_ratio: ratio,
    };
    LinkSet::new(&rf, &vlc, &budget, &FrameSpec::default()).unwrap()
}

fn rf_curve() -> &'static (LinkSet, ServiceCurve) {
    static CURVE: OnceLock<(LinkSet, ServiceCurve)> = OnceLock::new();
    CURVE.get_or_init(|| {
        let l = links(10.0, 1.66, 30.0, 0.7);
        let c = ServiceCurve::for_strategy(&l, Strategy::Rf, &ThetaGrid::SERVICE).unwrap();
        (l, c)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rates_fall_with_theta_and_hybrid_dominates(
        d in 2.0f64..30.0, x in 0.0f64..3.0, p in 20.0f64..40.0, nu in 0.1f64..1.0,
        a in 0.05f64..0.95, b in 0.05f64..0.95, lt in -4.0f64..-0.5,
    ) {
        let l = links(d, x, p, nu);
        let src = SourceSpec::new(a, b, 1.0).unwrap();
        let (lo, hi) = (10f64.powf(lt), 10f64.powf(lt + 0.5));
        for s in Strategy::ALL {
            let r_lo = l.rho(s, &src, lo).unwrap().rho;
            let r_hi = l.rho(s, &src, hi).unwrap().rho;
            prop_assert!(r_hi <= r_lo * (1.0 + 1e-9) + 1e-9, "{s}: {r_lo} -> {r_hi}");
            prop_assert!(r_lo <= l.mean_service(s).unwrap() * (1.0 + 1e-9));
        }
        let r = |s| l.rho(s, &src, lo).unwrap().rho;
        prop_assert!(r(Strategy::Hybrid1) >= r(Strategy::Rf).max(r(Strategy::Vlc)) - 1e-9);
        prop_assert!(r(Strategy::Hybrid2) >= r(Strategy::Hybrid1) * (1.0 - 1e-6));
    }

    #[test]
    fn selection_matches_rate_comparison(
        d in 2.0f64..30.0, x in 0.0f64..3.0, p in 20.0f64..40.0, nu in 0.1f64..1.0,
        a in 0.05f64..0.95, b in 0.05f64..0.95, lt in -4.0f64..0.0,
    ) {
        let l = links(d, x, p, nu);
        let src = SourceSpec::new(a, b, 1.0).unwrap();
        let th = 10f64.powf(lt);
        let rv = l.rho(Strategy::Vlc, &src, th).unwrap().rho;
        let rr = l.rho(Strategy::Rf, &src, th).unwrap().rho;
        let pick = l.select_link(&src, th).unwrap().choose_vlc;
        // Near-ties can go either way within rounding.
        if (rv - rr).abs() > 1e-9 * rv.max(rr) {
            prop_assert_eq!(pick, rv >= rr);
        }
    }

    #[test]
    fn service_lmgf_vanishes_at_zero_and_is_convex(
        d in 2.0f64..30.0, p in 20.0f64..40.0, nu in 0.1f64..1.0, th in 1e-4f64..0.05,
    ) {
        let l = links(d, 1.66, p, nu);
        for s in Strategy::ALL {
            prop_assert!(l.lmgf(s, 0.0).unwrap().abs() < 1e-12);
            let f = |t: f64| l.lmgf(s, t).unwrap();
            let mid = f(-th);
            prop_assert!(mid <= 0.5 * (f(-2.0 * th) + f(0.0)) + 1e-9 * mid.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn effective_bandwidth_grows_with_theta(
        a in 0.01f64..1.0, b in 0.01f64..1.0, lam in 1.0f64..1e4, t1 in 1e-6f64..1e-2, k in 1.0f64..10.0,
    ) {
        let s = SourceSpec::new(a, b, lam).unwrap();
        let t2 = t1 * k;
        prop_assert!(s.lmgf(t2) / t2 >= s.lmgf(t1) / t1 * (1.0 - 1e-9));
        prop_assert!(s.lmgf(t1) / t1 >= s.mean_rate() * (1.0 - 1e-9));
        prop_assert!(s.lmgf(t1) / t1 <= lam * (1.0 + 1e-9));
    }

    #[test]
    fn steady_state_sums_to_one(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        prop_assume!(a + b > 0.0);
        let s = SourceSpec::new(a, b, 1.0).unwrap();
        prop_assert!((s.p_on() + s.p_off() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lindley_matches_max_plus_form(steps in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..60)) {
        let (a, s): (Vec<f64>, Vec<f64>) = steps.into_iter().unzip();
        let q = lindley(&a, &s);
        for n in 0..q.len() {
            // Q_n = max(0, max_k sum_{i=k..=n} (a_i - s_i))
            let mut best = 0.0f64;
            let mut acc = 0.0;
            for i in (0..=n).rev() {
                acc += a[i] - s[i];
                best = best.max(acc);
            }
            prop_assert!(q[n] >= 0.0);
            prop_assert!((q[n] - best).abs() <= 1e-9 * (1.0 + best));
        }
    }

    #[test]
    fn dbm_round_trip(p in -60.0f64..60.0) {
        prop_assert!((watts_to_dbm(dbm_to_watts(p)) - p).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bounds_grow_with_load_and_shrink_with_epsilon(u1 in 0.1f64..0.8, du in 0.02f64..0.15, le in -5.0f64..-1.5) {
        let (l, curve) = rf_curve();
        let mean = l.mean_service(Strategy::Rf).unwrap();
        let base = SourceSpec::new(0.3, 0.7, 1.0).unwrap();
        let eval = |u: f64, eps: f64| {
            let src = base.with_lambda(u * mean / base.p_on());
            let arr = ArrivalCurve::new(&src, &ThetaGrid::ARRIVAL, 10_000);
            let q = BoundQuery { epsilon: eps, ..Default::default() };
            bounds(curve, &arr, &q).unwrap()
        };
        let eps = 10f64.powf(le);
        let lo = eval(u1, eps);
        let hi = eval(u1 + du, eps);
        prop_assert!(hi.q_bits >= lo.q_bits * (1.0 - 1e-3), "{} {}", lo.q_bits, hi.q_bits);
        prop_assert!(hi.d_frames >= lo.d_frames * (1.0 - 1e-3), "{} {}", lo.d_frames, hi.d_frames);
        let loose = eval(u1, eps * 10.0);
        prop_assert!(loose.q_bits <= lo.q_bits * (1.0 + 1e-3));
        prop_assert!(loose.d_frames <= lo.d_frames * (1.0 + 1e-3));
        prop_assert!(lo.q_bits >= 0.0 && lo.d_frames >= 0.0);
    }
}
