use proptest::prelude::*;

use fastslow::experiment::{default_config, run_model, ModelKind};
use fastslow::integrate::{marcus_step_closed, predictor_corrector_step, Execution};
use fastslow::reduction::{n_plus_approx, Anchor};
use fastslow::stats::histogram_pdf;
use fastslow::systems::{linear, nonlinear1, nonlinear2, nonlinear3};
use fastslow::{ScalarSde, StableParams};

#[test]
fn runs_are_deterministic_and_order_independent() {
    let sys = nonlinear2(2.0, 0.01, 1.7, 0.0).unwrap();
    for model in [ModelKind::Full, ModelKind::NPlus, ModelKind::Linearized] {
        let cfg = default_config(&sys, model, 4000, 99).with_chunks(4);
        let seq = run_model(
            &sys,
            model,
            Anchor::Stationary,
            &cfg.clone().with_execution(Execution::Sequential),
        )
        .unwrap();
        let again = run_model(
            &sys,
            model,
            Anchor::Stationary,
            &cfg.clone().with_execution(Execution::Sequential),
        )
        .unwrap();
        let par = run_model(&sys, model, Anchor::Stationary, &cfg.with_execution(Execution::Parallel)).unwrap();
        assert_eq!(seq.values, again.values, "{model}");
        assert_eq!(seq.values, par.values, "{model}");
    }
}

#[test]
fn different_seeds_differ() {
    let sys = linear(0.2, 0.7, 1.0, 0.01, 1.9, 0.0, 0.0).unwrap();
    let run = |seed| {
        run_model(
            &sys,
            ModelKind::Full,
            Anchor::Stationary,
            &default_config(&sys, ModelKind::Full, 500, seed),
        )
        .unwrap()
    };
    assert_ne!(run(1).values, run(2).values);
}

#[test]
fn density_of_a_run_integrates_to_one() {
    let sys = nonlinear3(1.0, 0.3, 0.01, 1.9).unwrap();
    let s = run_model(
        &sys,
        ModelKind::NPlus,
        Anchor::Stationary,
        &default_config(&sys, ModelKind::NPlus, 20_000, 5),
    )
    .unwrap();
    let d = histogram_pdf(&s.values, 60, (-3.0, 3.0)).unwrap();
    let inside = (d.n_samples - d.out_of_range) as f64 / d.n_samples as f64;
    assert!((d.integral() - inside).abs() < 1e-12);
}

proptest! {
    #[test]
    fn closed_marcus_step_keeps_nonlinear1_positive(z in 1e-8f64..20.0, dl in -1e3f64..1e3, alpha in 1.1f64..2.0) {
        let sys = nonlinear1(1.0, 0.1, 1.0, 0.01, alpha, 1.0).unwrap();
        let n = n_plus_approx(&sys).unwrap();
        let next = marcus_step_closed(&n.sde, z, dl, 0.01).unwrap();
        prop_assert!(next > 0.0 || (next == 0.0 && (0.1 * dl) < -700.0));
    }

    #[test]
    fn cubic_drift_survives_large_jumps(z in -3.0f64..3.0, dl in -1e6f64..1e6) {
        let sys = nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap();
        let sde = ScalarSde::additive("c", sys.averaged_drift(), 1.0, StableParams::unit(1.7, 0.0).unwrap(), 0.0);
        let next = predictor_corrector_step(&sde, z, dl, 0.01);
        prop_assert!(next.is_finite());
        prop_assert!(next.abs() <= z.abs() + dl.abs() + 1.0);
    }

    #[test]
    fn stable_cf_symmetries(alpha in 0.2f64..2.0, beta in -1.0f64..1.0, k in -20.0f64..20.0) {
        prop_assume!((alpha - 1.0).abs() > 1e-3);
        let p = StableParams::unit(alpha, beta).unwrap();
        let (a, b) = (p.cf(k), p.cf(-k));
        prop_assert!(a.norm() <= 1.0 + 1e-15);
        prop_assert!((a - b.conj()).norm() < 1e-14);
        prop_assert!((p.cf(0.0).re - 1.0).abs() < 1e-15);
    }
}
