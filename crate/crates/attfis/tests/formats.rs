use std::path::Path;

use attfis::bundle::{load_bundle, manifest_path, save_bundle};
use attfis::dataset::{read_dataset, write_dataset};
use attfis::model::{load_model, model_from_str, model_to_string, save_model, ModelTraining};
use attfis::record::{read_record, write_record};
use attfis::Error;
use attfis_core::anfis::{grid_partition_init, AnfisModel, MembershipFunction, TrainConfig};
use attfis_core::pid::PidGains;
use attfis_core::roles::{generate_controller_data, BundleMeta, DataGenConfig, Role, RoleBundle};
use attfis_core::sim::{metrics, run_closed_loop, Bundles, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(rng: &mut ChaCha8Rng, mfs: &[usize]) -> AnfisModel {
    let ranges: Vec<(f64, f64)> =
        mfs.iter().map(|_| (rng.random_range(-3.0..-0.5), rng.random_range(0.5..3.0))).collect();
    let init = grid_partition_init(&ranges, mfs).unwrap();
    let premise = init
        .premise()
        .iter()
        .map(|row| {
            row.iter()
                .map(|m| {
                    MembershipFunction::new(
                        m.a * rng.random_range(0.7..1.3),
                        m.b + rng.random_range(-0.5..0.5),
                        m.c + rng.random_range(-0.1..0.1),
                    )
                    .unwrap()
                })
                .collect()
        })
        .collect();
    let consequents = (0..init.consequents().len()).map(|_| rng.random_range(-2.0..2.0) / 3.0).collect();
    AnfisModel::from_parts(init.grid().clone(), premise, consequents, ranges).unwrap()
}

#[test]
fn model_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = random_model(&mut rng, &[3, 2, 1, 2]);
    let training = ModelTraining { epochs: 7, final_rmse: 1.0 / 7.0, seed: 3 };
    let path = dir.path().join("m.toml");
    save_model(&path, &model, Some(&training)).unwrap();
    let (back, meta) = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(meta, Some(training));
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-4.0..4.0)).collect();
        assert_eq!(back.evaluate(&x).unwrap().to_bits(), model.evaluate(&x).unwrap().to_bits());
    }
}

#[test]
fn truncated_model_is_a_format_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let text = model_to_string(&random_model(&mut rng, &[2, 2]), None);
    let p = Path::new("m.toml");
    for cut in [text.len() / 3, text.len() / 2, text.len() - 20] {
        let err = model_from_str(&text[..cut], p).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "cut {cut}: {err}");
    }
}

#[test]
fn unknown_model_version_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let text = model_to_string(&random_model(&mut rng, &[2]), None).replace("version = 1", "version = 7");
    let err = model_from_str(&text, Path::new("m.toml")).unwrap_err();
    assert!(matches!(err, Error::Version { found: 7, expected: 1, .. }), "{err}");
}

fn toy_bundle(rng: &mut ChaCha8Rng) -> RoleBundle {
    let models = (0..3).map(|_| random_model(rng, &[2, 1, 2])).collect();
    let meta = BundleMeta {
        train: TrainConfig::default(),
        stride: 2,
        training_rows: 100,
        holdout_rows: 0,
        train_rmse: vec![0.1, 0.2, 0.3],
        holdout_rmse: vec![f64::NAN; 3],
        output_limit: Some(1.0),
    };
    RoleBundle::new(Role::Controller, vec![0, 2, 4], vec![(-0.2, 0.2), (-0.1, 0.3), (-1.0, 1.0)], models, meta).unwrap()
}

#[test]
fn bundle_round_trip_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bundle = toy_bundle(&mut rng);
    save_bundle(dir.path(), &bundle).unwrap();
    let back = load_bundle(dir.path(), Some(Role::Controller)).unwrap();
    assert_eq!(back.channels(), bundle.channels());
    assert_eq!(back.models(), bundle.models());
    assert!(back.meta.holdout_rmse.iter().all(|v| v.is_nan()));
    for _ in 0..50 {
        let raw: Vec<f64> = (0..6).map(|_| rng.random_range(-0.3..0.3)).collect();
        let a = bundle.predict(&raw).unwrap();
        let b = back.predict(&raw).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
    let err = load_bundle(dir.path(), Some(Role::Estimator)).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
}

#[test]
fn missing_bundle_files_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_bundle(dir.path(), None).unwrap_err();
    assert!(err.to_string().contains(&manifest_path(dir.path()).display().to_string()), "{err}");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    save_bundle(dir.path(), &toy_bundle(&mut rng)).unwrap();
    let gone = dir.path().join("mc2.toml");
    std::fs::remove_file(&gone).unwrap();
    let err = load_bundle(dir.path(), None).unwrap_err();
    assert!(matches!(err, Error::MissingArtifact { .. }));
    assert!(err.to_string().contains(&gone.display().to_string()), "{err}");
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gen = DataGenConfig { n_conditions: 2, duration: 0.5, ..DataGenConfig::default() };
    let base = SimConfig { noise: Default::default(), ..SimConfig::default() };
    let data = generate_controller_data(&base, &PidGains::tuning_start(), &gen).unwrap();
    let path = dir.path().join("controller.csv");
    write_dataset(&path, &data).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("run,qe1,qe2,qe3,w1,w2,w3,mc1,mc2,mc3\n"));
    assert_eq!(read_dataset(&path, Role::Controller).unwrap(), data);
    assert!(matches!(read_dataset(&path, Role::Integrated), Err(Error::Format { .. })));
}

#[test]
fn record_metrics_recompute_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = SimConfig { noise: Default::default(), seed: 4, ..SimConfig::default() };
    let record = run_closed_loop(&config, &Bundles::default()).unwrap();
    let path = dir.path().join("run.csv");
    write_record(&path, &record).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,q1,q2,q3,q4,w1,w2,w3,qe1,qe2,qe3,mc1,mc2,mc3,applied1,applied2,applied3,phi,theta,psi,\
         est_q1,est_q2,est_q3,est_q4,est_w1,est_w2,est_w3"
    );
    let logged = read_record(&path).unwrap();
    assert_eq!(logged.samples.len(), 2001);
    assert_eq!(logged.dt(), config.dt);
    let online = metrics(&record);
    assert_eq!(logged.fuel(), online.fuel);
    assert_eq!(logged.fuel().per_axis, record.fuel);
    assert_eq!(logged.cost().to_bits(), record.cost.to_bits());
    for (a, b) in logged.samples.iter().zip(&record.samples) {
        assert_eq!(a.state, b.state);
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.applied, b.applied);
    }
}
