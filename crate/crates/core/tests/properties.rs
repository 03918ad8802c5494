use asr_core::bounds::{check_surface, lower_coeffs};
use asr_core::lattice::{child, max_zeta, z_of};
use asr_core::{backward_solve, solve_price, Models, SolveConfig, TerminalPenalty, VolumeCurve};
use proptest::prelude::*;

fn small_models(horizon: usize, gamma: f64, eta: f64, sigma: f64, quadratic: bool) -> Models {
    let mut m = Models::reference();
    m.contract.horizon = horizon;
    m.contract.nominal = 2e5;
    m.contract.exercise_dates = (horizon / 2..horizon).collect();
    if quadratic {
        m.contract.penalty = TerminalPenalty::Quadratic { coefficient: 1e-3 };
    }
    m.market.volume = VolumeCurve::Flat(1e5);
    m.market.sigma = sigma;
    m.costs.eta = eta;
    m.risk.gamma = gamma;
    m
}

fn models_strategy() -> impl Strategy<Value = Models> {
    (
        3usize..9,
        prop_oneof![Just(0.0), 1e-8f64..1e-4],
        0.01f64..0.5,
        0.1f64..2.0,
        any::<bool>(),
    )
        .prop_map(|(n, g, e, s, quad)| small_models(n, g, e, s, quad))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn children_stay_in_range(n in 1usize..80, frac in 0.0f64..1.0, j in 0usize..5) {
        let zeta = (frac * max_zeta(n) as f64).floor() as i64;
        let c = child(n, zeta, j, n + 1).unwrap();
        prop_assert!(c.zeta >= 0 && c.zeta <= max_zeta(n + 1));
        let expected = n as f64 / (n as f64 + 1.0) * (z_of(n, zeta) + j as f64 - 2.0);
        prop_assert!((z_of(n + 1, c.zeta) - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn surfaces_respect_bounds(m in models_strategy(), steps in 2usize..12) {
        let c = SolveConfig { inventory_steps: steps, ..Default::default() };
        let (surface, _) = backward_solve(&m, &c).unwrap();
        let report = check_surface(&surface, &lower_coeffs(&m).unwrap(), &m).unwrap();
        prop_assert_eq!(report.violations, 0);
    }

    #[test]
    fn buy_only_never_cheaper(m in models_strategy(), steps in 2usize..12) {
        let free = SolveConfig { inventory_steps: steps, ..Default::default() };
        let constrained = SolveConfig { buy_only: true, ..free };
        prop_assert!(solve_price(&m, &constrained).unwrap().pi >= solve_price(&m, &free).unwrap().pi);
    }

    #[test]
    fn risk_neutral_policy_never_sells(m in models_strategy(), steps in 2usize..12) {
        let mut m = m;
        m.risk.gamma = 0.0;
        let c = SolveConfig { inventory_steps: steps, ..Default::default() };
        let (surface, policy) = backward_solve(&m, &c).unwrap();
        for n in 1..surface.horizon {
            for zeta in 0..=max_zeta(n) {
                for i in 0..=steps {
                    prop_assert!(policy.layer(n).next_index(zeta, i) <= i);
                }
            }
        }
    }

    #[test]
    fn theta_decreases_in_the_spread(m in models_strategy(), steps in 2usize..10) {
        // a higher spot relative to the average lowers the remaining cost
        let c = SolveConfig { inventory_steps: steps, ..Default::default() };
        let (surface, _) = backward_solve(&m, &c).unwrap();
        for n in 1..=surface.horizon {
            for zeta in 0..max_zeta(n) {
                for i in 0..=steps {
                    let (a, b) = (surface.theta(n, zeta, i), surface.theta(n, zeta + 1, i));
                    prop_assert!(a.is_infinite() || b <= a + 1e-9 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn price_is_worker_independent(m in models_strategy(), steps in 2usize..12) {
        let one = SolveConfig { inventory_steps: steps, workers: Some(1), ..Default::default() };
        let four = SolveConfig { workers: Some(4), ..one };
        let (a, _) = backward_solve(&m, &one).unwrap();
        let (b, _) = backward_solve(&m, &four).unwrap();
        for (x, y) in a.layers.iter().zip(&b.layers) {
            prop_assert!(x.values.iter().zip(&y.values).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
