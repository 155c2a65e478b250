use approx::assert_abs_diff_eq;
use attfis_core::dynamics::{euler_to_quat, quat_to_euler, quaternion_error, EulerAngles, Quaternion, Vec3};
use attfis_core::optim::{nelder_mead, NelderMeadConfig};
use attfis_core::pid::PidGains;
use attfis_core::sensors::NoiseSpec;
use attfis_core::sim::{metrics, run_closed_loop, tuning_objective, Bundles, ModulatorKind, SimConfig};

#[test]
fn euler_round_trip_and_error_identity() {
    for e in [EulerAngles::new(10.0, 5.0, 10.0), EulerAngles::new(-170.0, 45.0, 120.0)] {
        let q = euler_to_quat(&e);
        let back = quat_to_euler(&q).angles;
        assert_abs_diff_eq!(back.phi, e.phi, epsilon = 1e-9);
        assert_abs_diff_eq!(back.theta, e.theta, epsilon = 1e-9);
        assert_abs_diff_eq!(back.psi, e.psi, epsilon = 1e-9);
        let qe = quaternion_error(&q, &q);
        assert_abs_diff_eq!(qe.dot(&Quaternion::IDENTITY).abs(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn nelder_mead_finds_rosenbrock_minimum() {
    let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let m = nelder_mead(&mut f, &[-1.2, 1.0], &NelderMeadConfig { budget: 2000, ..NelderMeadConfig::default() });
    assert!(m.value < 1e-8, "{}", m.value);
    assert!(m.evaluations <= 2000);
    assert_abs_diff_eq!(m.x[0], 1.0, epsilon = 1e-3);
    assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn default_gains_bring_the_nominal_case_to_rest() {
    let record = run_closed_loop(&SimConfig::default(), &Bundles::default()).unwrap();
    let m = metrics(&record);
    assert_eq!(record.samples.len(), 2001);
    assert!(m.final_error.iter().all(|e| e.abs() < 0.5), "{:?}", m.final_error);
    assert!(record.samples.iter().all(|s| (s.state.q.norm() - 1.0).abs() < 1e-12));
}

#[test]
fn noisy_runs_repeat_for_a_seed_and_differ_across_seeds() {
    let config = SimConfig { noise: NoiseSpec::default(), seed: 5, ..SimConfig::default() };
    let a = run_closed_loop(&config, &Bundles::default()).unwrap();
    let b = run_closed_loop(&config, &Bundles::default()).unwrap();
    let c = run_closed_loop(&SimConfig { seed: 6, ..config }, &Bundles::default()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn modulated_commands_are_on_off() {
    let config = SimConfig { modulator: ModulatorKind::Pwpf, ..SimConfig::default() };
    let thrust = config.pwpf.thrust;
    let record = run_closed_loop(&config, &Bundles::default()).unwrap();
    for s in &record.samples {
        for v in s.applied.to_array() {
            assert!(v == 0.0 || v.abs() == thrust, "{v}");
        }
    }
    assert!(record.samples.iter().any(|s| s.applied.to_array() != [0.0; 3]));
}

#[test]
fn tuning_scores_positive_feedback_as_infinite() {
    let config = SimConfig::default();
    let gains = PidGains { kp: Vec3::new(1.0, -2.0, -2.0), ..PidGains::default() };
    assert!(!gains.is_negative_feedback());
    assert_eq!(tuning_objective(&config, &gains), f64::INFINITY);
    assert!(tuning_objective(&config, &PidGains::default()).is_finite());
}
