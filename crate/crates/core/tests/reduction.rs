use chemostat_core::integrator::{integrate, EventKind, IntegrationOptions};
use chemostat_core::reduction::{extinction_threshold, verify_exclusion_limit, ComparisonOde, LVParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example() -> LVParams {
    LVParams {
        intrinsic_rate: 1.0,
        self_limitation: [1.0, 1.0],
        cross_limitation: [0.5, 0.5],
        removal: [0.5, 1.0],
        retained_fraction: 0.5,
        extraction_rate: 0.2,
        extraction_exponent: 0.5,
    }
}

#[test]
fn example_threshold_against_direct_integration() {
    let params = example();
    let cert = extinction_threshold(&params).unwrap();
    assert!((cert.threshold - 0.04).abs() < 1e-14);
    let traj = integrate(&params, &[0.5, 0.039], &IntegrationOptions::default()).unwrap();
    let t = traj.extinction_time(1).expect("x2 should vanish");
    assert!(t.is_finite() && t > 0.0);
    let after = traj.times.iter().position(|&s| s > t).unwrap();
    assert!(traj.states[after..].iter().all(|y| y[1] == 0.0));
}

#[test]
fn comparison_equation_splits_at_critical_value() {
    let cert = extinction_threshold(&example()).unwrap();
    let ode = ComparisonOde::from_certificate(&cert);
    let critical = ode.critical_value();
    assert!((critical - 25.0).abs() < 1e-12);
    assert!((critical - cert.transformed_threshold).abs() < 1e-12);

    let opts = IntegrationOptions {
        t_end: 1e3,
        blowup_bound: 1e8,
        ..IntegrationOptions::default()
    };
    let above = integrate(&ode, &[1.01 * critical], &opts).unwrap();
    assert!(above.blew_up());
    let blowup = above.events.iter().find(|e| e.kind == EventKind::Blowup).unwrap();
    assert!(blowup.time < 100.0, "blow-up at {}", blowup.time);

    let below = integrate(&ode, &[0.99 * critical], &opts).unwrap();
    assert!(!below.blew_up());
    assert!(below.final_state()[0] < 1e-6);
}

#[test]
fn linear_rate_below_zero_gives_unbounded_threshold() {
    let mut params = example();
    params.retained_fraction = 0.9;
    params.removal[1] = 2.0;
    let cert = extinction_threshold(&params).unwrap();
    assert!(cert.threshold.is_infinite());
    // Any density dies out.
    let report = verify_exclusion_limit(&params, 0.3, 5.0, &IntegrationOptions::default()).unwrap();
    assert!(report.extinction_time.is_finite());
}

fn random_params(rng: &mut ChaCha8Rng) -> LVParams {
    loop {
        let a = rng.gen_range(1.0..3.0);
        let params = LVParams {
            intrinsic_rate: a,
            self_limitation: [rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0)],
            cross_limitation: [rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
            removal: [a * rng.gen_range(0.1..0.9), rng.gen_range(0.1..3.0)],
            retained_fraction: rng.gen_range(0.0..0.95),
            extraction_rate: rng.gen_range(0.05..2.0),
            extraction_exponent: rng.gen_range(0.1..0.9),
        };
        let c2 = a - params.retained_fraction * params.removal[1];
        if c2 > 0.0 {
            return params;
        }
    }
}

#[test]
fn extinction_below_threshold_for_random_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let opts = IntegrationOptions::default();
    for _ in 0..100 {
        let params = random_params(&mut rng);
        let cert = extinction_threshold(&params).unwrap();
        let x1 = rng.gen_range(0.1..3.0);
        let report = verify_exclusion_limit(&params, x1, 0.9 * cert.threshold, &opts)
            .unwrap_or_else(|e| panic!("{params:?}: {e}"));
        assert!(report.extinction_time.is_finite());
        assert!(report.trajectory.states.iter().flatten().all(|&v| v >= -1e-12));
    }
}
