use proptest::prelude::*;

use softland::energy::mechanical_energy;
use softland::model::{from_dimensionless, grf, to_dimensionless};
use softland::{simulate_outcome, Controller, Params, Phase, PhysicalParams, SimOptions};

fn phase() -> impl Strategy<Value = Phase> {
    prop_oneof![Just(Phase::Flight), Just(Phase::Yielding), Just(Phase::Static)]
}

proptest! {
    #[test]
    fn ground_pushes_within_capacity(x_f in -20.0..5.0f64, v_f in -5.0..5.0f64, ph in phase(), need in -10.0..10.0f64) {
        let g = grf(x_f, v_f, ph, need);
        prop_assert!(g >= 0.0);
        prop_assert!(g <= (-x_f).max(0.0));
    }

    #[test]
    fn scaling_round_trips(
        m_b in 0.1..50.0f64,
        m_f in 0.05..10.0f64,
        k_g in 10.0..1e5f64,
        stroke in 0.01..1.0f64,
        u_max in 1.0..500.0f64,
        v0 in -5.0..=0.0f64,
    ) {
        let p = PhysicalParams { m_b, m_f, k_g, g: 9.81, stroke, u_max, v0 };
        let (d, dv0, scales) = to_dimensionless(&p).unwrap();
        let back = from_dimensionless(&d, dv0, &scales);
        for (a, b) in [
            (p.m_b, back.m_b),
            (p.m_f, back.m_f),
            (p.k_g, back.k_g),
            (p.g, back.g),
            (p.stroke, back.stroke),
            (p.u_max, back.u_max),
            (p.v0, back.v0),
        ] {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn feasible_runs_never_beat_static_support(k_p in 0.0..1.0f64, k_d in 0.0..1.0f64, v0 in -10.0..=0.0f64) {
        let p = Params::new(5.0, 20.0).unwrap();
        let out = simulate_outcome(&Controller::impedance(k_p, k_d), &p, v0, &SimOptions::events_only()).unwrap();
        if out.is_feasible() {
            prop_assert!(out.depth >= 1.0 - 1e-6, "depth {}", out.depth);
        }
    }

    #[test]
    fn energy_lost_is_energy_absorbed(k_p in 0.0..1.0f64, k_d in 0.0..1.0f64, v0 in -10.0..=0.0f64, r_m in 0.5..20.0f64) {
        let p = Params::new(r_m, 20.0).unwrap();
        let out = simulate_outcome(&Controller::impedance(k_p, k_d), &p, v0, &SimOptions::events_only()).unwrap();
        let lost = mechanical_energy(&out.initial_state, r_m) - mechanical_energy(&out.final_state, r_m);
        prop_assert!((lost - (out.e_act + out.e_gnd)).abs() < 1e-6 * (1.0 + lost.abs()));
        prop_assert!(out.e_gnd >= -1e-12);
    }
}
