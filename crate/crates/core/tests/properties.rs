//! Property tests for the pure algorithmic layers: region geometry, pacing
//! bounds, penalty curves, forecast noise, and kernel weights.

use proptest::prelude::*;

use drsteel_core::config::{HistoryLibrary, PenaltyMechanism, ScenarioRow};
use drsteel_core::eaf_region::EafState;
use drsteel_core::fixtures;
use drsteel_core::metrics;
use drsteel_core::rolling_engine::{self, PacingMode};
use drsteel_core::scheduler::penalty_phi_exact;

fn row(t: usize, scale: f64) -> ScenarioRow {
    ScenarioRow {
        t,
        wind_mw: 100.0 * scale,
        solar_mw: 50.0 * scale,
        price_buy: 40.0 * scale,
        price_sell: 34.0 * scale,
        h2_demand_t: scale,
        heat_demand_mwh: 5.0 * scale,
    }
}

proptest! {
    // convexity: any blend of two feasible EAF states stays feasible
    #[test]
    fn polytope_blend_stays_member(
        a in [0.0f64..=1.0, 0.0..=1.0],
        b in [0.0f64..=1.0, 0.0..=1.0],
        w in 0.0f64..=1.0,
    ) {
        let steel = 1000.0;
        let region = fixtures::calibrated_polytope(steel);
        let close = |frac: [f64; 2]| -> Option<EafState> {
            let x2 = region.z_min[1] + frac[0] * (region.z_max[1] - region.z_min[1]);
            let x3 = region.z_min[2] + frac[1] * (region.z_max[2] - region.z_min[2]);
            let x1 = (region.b_eq[1] - region.a_eq[1][1] * x2 - region.a_eq[1][2] * x3)
                / region.a_eq[1][0];
            let p = region.a_eq[0][0] * x1 + region.a_eq[0][1] * x2 + region.a_eq[0][2] * x3;
            let state = EafState { x: [x1, x2, x3], p_eaf: p };
            region.membership(&state).is_member.then_some(state)
        };
        if let (Some(sa), Some(sb)) = (close(a), close(b)) {
            let mix = EafState {
                x: [
                    w * sa.x[0] + (1.0 - w) * sb.x[0],
                    w * sa.x[1] + (1.0 - w) * sb.x[1],
                    w * sa.x[2] + (1.0 - w) * sb.x[2],
                ],
                p_eaf: w * sa.p_eaf + (1.0 - w) * sb.p_eaf,
            };
            prop_assert!(region.membership(&mix).is_member);
        }
    }

    // pacing bounds form a nonempty interval whenever the capacity
    // precondition holds, and the terminal window pins the full residual
    #[test]
    fn pacing_bounds_nonempty(
        k in 1usize..=24,
        lookahead in 1usize..=24,
        m_bar in 1.0f64..500.0,
        r_frac in 0.0f64..=1.0,
    ) {
        let t_total = 24usize;
        prop_assume!(k <= t_total);
        let remaining = t_total - k + 1;
        let l = lookahead.min(remaining);
        let residual = r_frac * remaining as f64 * m_bar;
        for mode in [PacingMode::Arm, PacingMode::Fcfb] {
            let (lo, hi) =
                rolling_engine::pacing_bounds(mode, residual, l, t_total, k, m_bar).unwrap();
            prop_assert!(lo >= 0.0);
            prop_assert!(lo <= hi + 1e-12);
            prop_assert!(lo <= l as f64 * m_bar + 1e-9);
            if l == remaining {
                prop_assert!((lo - residual).abs() <= 1e-9);
            }
        }
    }

    // the ARM floor never drops below the FCFB floor's feasibility needs:
    // both leave a residual the remaining periods can still absorb
    #[test]
    fn pacing_residual_stays_absorbable(
        m_bar in 1.0f64..500.0,
        r_frac in 0.0f64..=1.0,
        lookahead in 1usize..=24,
    ) {
        let t_total = 24usize;
        let order = r_frac * t_total as f64 * m_bar;
        for mode in [PacingMode::Arm, PacingMode::Fcfb] {
            let mut residual = order;
            for k in 1..=t_total {
                let l = lookahead.min(t_total - k + 1);
                let (lo, _) =
                    rolling_engine::pacing_bounds(mode, residual, l, t_total, k, m_bar).unwrap();
                // deliver exactly the floor's first-step share
                residual -= (lo / l as f64).min(m_bar);
            }
            prop_assert!(residual.abs() <= 1e-6 * order.max(1.0));
        }
    }

    // penalties are nonnegative, zero in the deadband, and monotone in the
    // deviation magnitude
    #[test]
    fn penalty_curve_shape(d1 in -1.0f64..=1.0, d2 in -1.0f64..=1.0) {
        let table = fixtures::penalty_table(100.0);
        for mech in [PenaltyMechanism::M1, PenaltyMechanism::M2, PenaltyMechanism::M3] {
            let p1 = penalty_phi_exact(mech, &table, d1);
            prop_assert!(p1 >= 0.0);
            if mech != PenaltyMechanism::M1 && d1.abs() <= 0.05 {
                prop_assert_eq!(p1, 0.0);
            }
            if d1.abs() >= d2.abs() && d1.signum() == d2.signum() {
                prop_assert!(p1 >= penalty_phi_exact(mech, &table, d2) - 1e-12);
            }
        }
    }

    // forecast noise is deterministic per seed and preserves nonnegativity
    #[test]
    fn forecast_noise_deterministic(seed in any::<u64>(), error in 0.0f64..=0.5) {
        let truth: Vec<ScenarioRow> = (0..8).map(|t| row(t, 1.0 + t as f64 * 0.1)).collect();
        let a = rolling_engine::simulate_forecast(&truth, error, seed);
        let b = rolling_engine::simulate_forecast(&truth, error, seed);
        prop_assert_eq!(&a, &b);
        for (f, t) in a.iter().zip(&truth) {
            prop_assert!(f.wind_mw >= 0.0 && f.solar_mw >= 0.0);
            prop_assert!((f.wind_mw - t.wind_mw).abs() <= error * t.wind_mw + 1e-9);
        }
    }

    // kernel weights are a probability distribution over the library
    #[test]
    fn kernel_weights_are_distribution(prefix in 1usize..=8, shift in -0.5f64..=0.5) {
        let cfg = fixtures::toy_config(8);
        let rows: Vec<ScenarioRow> = (0..8).map(|t| row(t, 1.0)).collect();
        let lib: HistoryLibrary = fixtures::flat_history_library(&cfg, &rows, 3);
        let observed: Vec<ScenarioRow> = rows[..prefix]
            .iter()
            .map(|r| ScenarioRow { wind_mw: r.wind_mw * (1.0 + shift), ..r.clone() })
            .collect();
        let (w, _) = rolling_engine::kernel_weights(&lib, &observed);
        prop_assert_eq!(w.len(), lib.scenarios.len());
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    // the matching degree is bounded and symmetric in its arguments
    #[test]
    fn matching_degree_bounded_symmetric(
        load in prop::collection::vec(-500.0f64..=500.0, 2..12),
        res in prop::collection::vec(-500.0f64..=500.0, 2..12),
    ) {
        let n = load.len().min(res.len());
        let (eta, _) = metrics::matching_degree(&load[..n], &res[..n]).unwrap();
        let (eta_rev, _) = metrics::matching_degree(&res[..n], &load[..n]).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&eta));
        prop_assert!((eta - eta_rev).abs() <= 1e-12);
    }

    // total variation is invariant to level shifts and homogeneous in scale
    #[test]
    fn nri_shift_and_scale(
        series in prop::collection::vec(0.0f64..=100.0, 2..10),
        shift in -50.0f64..=50.0,
        scale in 0.1f64..=10.0,
    ) {
        let base = metrics::nri(&series, 100.0);
        let shifted: Vec<f64> = series.iter().map(|v| v + shift).collect();
        prop_assert!((metrics::nri(&shifted, 100.0) - base).abs() <= 1e-9);
        let scaled: Vec<f64> = series.iter().map(|v| v * scale).collect();
        prop_assert!((metrics::nri(&scaled, 100.0) - base * scale).abs() <= 1e-6);
    }
}
