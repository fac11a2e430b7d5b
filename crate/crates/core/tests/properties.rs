//! Structural invariants of the model checked over randomized instances.

use proptest::collection::vec;
use proptest::prelude::*;

use streamharvest_core::asymptotics::effective_net_flow;
use streamharvest_core::{origin_spectral_bound, Model};

/// Random irreducible model: a directed ring guarantees strong
/// connectivity, extra edges are sprinkled on top.
fn arb_model() -> impl Strategy<Value = Model> {
    (2usize..=5)
        .prop_flat_map(|n| {
            (
                vec(-2.0..5.0f64, n),
                vec(0.2..3.0f64, n),
                vec(0.1..2.0f64, n),
                vec(vec(0.0..1.0f64, n), n),
                vec(0.0..1.5f64, n),
            )
        })
        .prop_map(|(growth, competition, ring, extra, _)| {
            let n = growth.len();
            let mut movement = vec![vec![0.0; n]; n];
            for i in 0..n {
                let j = (i + 1) % n;
                movement[j][i] = ring[i];
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j && extra[i][j] > 0.5 {
                        movement[i][j] += extra[i][j] - 0.5;
                    }
                }
            }
            Model::new(growth, competition, movement).expect("ring keeps the graph connected")
        })
}

fn arb_state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.0..10.0f64, n)
}

fn arb_harvest(n: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.0..3.0f64, n)
}

proptest! {
    #[test]
    fn zero_state_is_always_fixed((model, h) in arb_model().prop_flat_map(|m| {
        let n = m.n();
        (Just(m), arb_harvest(n))
    })) {
        let zero = vec![0.0; model.n()];
        let f = model.rhs(&h, &zero).unwrap();
        prop_assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn movement_exchanges_conserve_mass((model, u) in arb_model().prop_flat_map(|m| {
        let n = m.n();
        (Just(m), arb_state(n))
    })) {
        let n = model.n();
        let mut net = 0.0;
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let term = model.rate_from_to(j, i) * u[j] - model.rate_from_to(i, j) * u[i];
                net += term;
                scale = scale.max(term.abs());
            }
        }
        prop_assert!(net.abs() <= 1e-12 * scale.max(1.0), "net = {net}, scale = {scale}");
    }

    #[test]
    fn jacobian_matches_central_differences((model, h, u) in arb_model().prop_flat_map(|m| {
        let n = m.n();
        (Just(m), arb_harvest(n), arb_state(n))
    })) {
        let n = model.n();
        let jac = model.jacobian(&h, &u).unwrap();
        let eps = 1e-5;
        for j in 0..n {
            let mut up = u.clone();
            let mut down = u.clone();
            up[j] += eps;
            down[j] -= eps;
            let f_up = model.rhs(&h, &up).unwrap();
            let f_down = model.rhs(&h, &down).unwrap();
            for i in 0..n {
                let fd = (f_up[i] - f_down[i]) / (2.0 * eps);
                prop_assert!(
                    (jac[(i, j)] - fd).abs() <= 1e-6,
                    "entry ({i},{j}): analytic {} vs fd {fd}",
                    jac[(i, j)]
                );
            }
        }
    }

    #[test]
    fn raising_any_effort_never_helps_persistence((model, h, patch, bump) in
        arb_model().prop_flat_map(|m| {
            let n = m.n();
            (Just(m), arb_harvest(n), 0..n, 0.01..2.0f64)
        })
    ) {
        let base = origin_spectral_bound(&model, &h).unwrap();
        let mut harder = h.clone();
        harder[patch] += bump;
        let bound = origin_spectral_bound(&model, &harder).unwrap();
        prop_assert!(bound <= base + 1e-9, "bound rose from {base} to {bound}");
    }

    #[test]
    fn net_flows_always_sum_to_zero(model in arb_model()) {
        let report = effective_net_flow(&model);
        let total: f64 = report.flows.iter().sum();
        let scale = report.flows.iter().fold(1.0f64, |m, &x| m.max(x.abs()));
        prop_assert!(total.abs() <= 1e-12 * scale);
    }

    #[test]
    fn allocations_returned_by_sweep_are_feasible(
        (r, d, q, h) in (0.5..6.0f64, 0.3..2.0f64, 0.3..4.0f64, 0.2..2.0f64)
    ) {
        use streamharvest_core::optimizer::sweep_theta;
        use streamharvest_core::two_patch::TwoPatchScenario;
        use streamharvest_core::Objective;
        let s = TwoPatchScenario::new([r, r], [1.0, 1.0], d, q, h).unwrap();
        let res = sweep_theta(&s, Objective::Biomass, 1e-2).unwrap();
        let efforts = res.h_star.efforts();
        prop_assert!(efforts.iter().all(|&x| x >= 0.0));
        let total: f64 = efforts.iter().sum();
        prop_assert!((total - h).abs() <= 1e-12 * h.max(1.0));
    }
}
