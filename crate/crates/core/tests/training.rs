use carbonlace::case::Partition;
use carbonlace::dispatch::DispatchModel;
use carbonlace::fixtures;
use carbonlace::nn::{project_balance, zonal_forward_and_losses, NetworkModel, NnError};
use carbonlace::training::*;
use nalgebra::DMatrix;

fn small_dataset(seed: u64, n: usize) -> Dataset {
    let case = fixtures::case14_tight();
    generate_dataset(
        &case,
        &DatasetConfig {
            n_samples: n,
            seed,
            ..DatasetConfig::default()
        },
    )
    .unwrap()
}

fn small_spec(seed: u64) -> ModelSpec {
    ModelSpec {
        hidden: vec![12, 12, 12],
        seed,
        ..ModelSpec::default()
    }
}

fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        seed,
        patience: 1000,
        ..TrainConfig::default()
    }
}

#[test]
fn clustering_recovers_the_three_areas() {
    let ds = small_dataset(1, 300);
    let p = cluster_loads(&ds, 3, 0).unwrap();
    assert_eq!(p.canonical_groups(), vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
    assert_eq!(cluster_loads(&ds, 1, 0).unwrap().count, 1);
    assert!(matches!(cluster_loads(&ds, 7, 0), Err(TrainError::TooManyClusters { .. })));
}

#[test]
fn training_is_deterministic_and_keeps_masks() {
    let ds = small_dataset(2, 200);
    let part = fixtures::case14_tight().clusters.unwrap();
    let norm = Normalization::from_dataset(&ds).unwrap();
    let model = nodal_model(&norm, 0.95, &small_spec(4), Some(&part)).unwrap();
    let a = train(&model, &ds, &quick(12, 9), &part).unwrap();
    let b = train(&model, &ds, &quick(12, 9), &part).unwrap();
    assert_eq!(loss_log_csv(&a.log), loss_log_csv(&b.log));
    assert_eq!(a.model, b.model);
    for layer in &a.model.layers {
        if let Some(mask) = &layer.mask {
            for (w, m) in layer.weights.iter().zip(mask) {
                if *m == 0 {
                    assert_eq!(*w, 0.0);
                }
            }
        }
    }
    assert_eq!(a.log.len(), a.stage_epochs.iter().sum::<usize>());
    assert!(loss_log_csv(&a.log).starts_with(LOSS_LOG_HEADER));
}

#[test]
fn stage_one_matches_the_system_average() {
    let ds = small_dataset(3, 400);
    let part = Partition::single(6);
    let norm = Normalization::from_dataset(&ds).unwrap();
    let model = nodal_model(&norm, 0.95, &small_spec(1), None).unwrap();
    let cfg = TrainConfig {
        last_stage: 1,
        epochs: 600,
        dropout_rate: 0.0,
        ..quick(600, 2)
    };
    let out = train(&model, &ds, &cfg, &part).unwrap();
    let mut err = 0.0;
    let mut n = 0.0;
    for &i in &ds.test {
        let s = &ds.scenarios[i];
        let eta = s.e / s.d.iter().sum::<f64>();
        for v in out.model.forward(&s.d).unwrap() {
            err += (v - eta).abs();
            n += 1.0;
        }
    }
    assert!(err / n <= 0.02, "mean |λ̂ − η| = {}", err / n);
}

#[test]
fn stage_losses_do_not_rise_over_long_windows() {
    let ds = small_dataset(5, 200);
    let part = fixtures::case14_tight().clusters.unwrap();
    let norm = Normalization::from_dataset(&ds).unwrap();
    let model = nodal_model(&norm, 0.95, &small_spec(2), Some(&part)).unwrap();
    let cfg = TrainConfig {
        dropout_rate: 0.0,
        ..quick(200, 3)
    };
    let out = train(&model, &ds, &cfg, &part).unwrap();
    for stage in 1..=4 {
        let v: Vec<f64> = out.log.iter().filter(|r| r.stage == stage).map(|r| r.objective).collect();
        for w in v.windows(21) {
            let start = w[0];
            let end = w[20];
            assert!(end <= start + 1e-6, "stage {stage}: {start} → {end}");
        }
    }
}

#[test]
fn zonal_model_is_smaller_and_single_zone_gives_ace() {
    let case = fixtures::case30();
    let nominal = case.nominal_loads();
    let norm = Normalization::nominal(&nominal);
    let spec = ModelSpec::default();
    let nodal = nodal_model(&norm, 0.9143, &spec, case.clusters.as_ref()).unwrap();
    let zonal = zonal_model(&norm, 0.9143, &spec, case.zones.as_ref().unwrap()).unwrap();
    assert!(zonal.trainable_parameters() < nodal.trainable_parameters());

    let one = Partition::single(nominal.len());
    let z1 = zonal_model(&norm, 0.9143, &spec, &one).unwrap();
    let market = DispatchModel::new(&case).unwrap();
    let d: Vec<f64> = nominal.iter().map(|v| v * 1.15).collect();
    let (res, lm) = market.solve_with_lmce(&d).unwrap();
    let out = zonal_forward_and_losses(&z1, &d, &one, res.total_emissions, &lm.mu, 0.0).unwrap();
    let ace = res.total_emissions / d.iter().sum::<f64>();
    assert_eq!(out.lambda_tilde.len(), 1);
    assert!((out.lambda_tilde[0] - ace).abs() < 1e-12);
}

#[test]
fn zonal_training_runs_and_reports() {
    let ds = small_dataset(6, 200);
    let zones = fixtures::case14_tight().zones.unwrap();
    let norm = Normalization::from_dataset(&ds).unwrap();
    let model = zonal_model(&norm, 0.95, &small_spec(3), &zones).unwrap();
    let out = train_zonal(&model, &ds, &quick(30, 1), &zones).unwrap();
    assert_eq!(out.stage_epochs.len(), 3);
    let rep = evaluate_zonal(&out.model, &ds, &ds.test, &zones).unwrap();
    assert_eq!(rep.rows.len(), ds.test.len());
    assert!(rep.balance_avg.is_finite());
}

/// Returns balanced allocations with a Jacobian chosen so that `μ̂ = μ`.
struct Oracle<'a>(&'a Dataset);

impl Surrogate for Oracle<'_> {
    fn outputs(&self, d: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), NnError> {
        let s = self.0.scenarios.iter().find(|s| s.d == d).unwrap();
        let eta = s.e / d.iter().sum::<f64>();
        let lam = vec![eta; d.len()];
        let n2: f64 = d.iter().map(|v| v * v).sum();
        let jac = DMatrix::from_fn(d.len(), d.len(), |i, j| d[i] * (s.mu[j] - eta) / n2);
        Ok((lam, jac))
    }
}

#[test]
fn perfect_oracle_has_zero_deviation() {
    let ds = small_dataset(7, 50);
    let rep = evaluate(&Oracle(&ds), &ds, &ds.test, &Partition::single(6)).unwrap();
    assert!(rep.balance_max < 1e-12);
    assert!(rep.sensitivity_max < 1e-12);
}

#[test]
fn evaluation_matches_a_reloaded_checkpoint() {
    let ds = small_dataset(8, 100);
    let part = fixtures::case14_tight().clusters.unwrap();
    let norm = Normalization::from_dataset(&ds).unwrap();
    let model = nodal_model(&norm, 0.95, &small_spec(5), Some(&part)).unwrap();
    let out = train(&model, &ds, &quick(8, 4), &part).unwrap();
    let text = out.model.to_checkpoint(&[("seed".into(), "4".into())]);
    let (back, meta) = NetworkModel::from_checkpoint(&text).unwrap();
    assert_eq!(meta, vec![("seed".to_string(), "4".to_string())]);
    let a = evaluate(&out.model, &ds, &ds.test, &part).unwrap();
    let b = evaluate(&back, &ds, &ds.test, &part).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn projection_is_exact_on_trained_outputs() {
    let ds = small_dataset(9, 60);
    let norm = Normalization::from_dataset(&ds).unwrap();
    let model = nodal_model(&norm, 0.95, &small_spec(6), None).unwrap();
    for s in &ds.scenarios {
        let lt = project_balance(&model.forward(&s.d).unwrap(), &s.d, s.e).unwrap();
        let dl: f64 = s.d.iter().zip(&lt).map(|(a, b)| a * b).sum();
        assert!((dl - s.e).abs() <= 1e-9 * s.e.max(1.0));
        let again = project_balance(&lt, &s.d, s.e).unwrap();
        for (a, b) in lt.iter().zip(&again) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn sweep_emits_one_row_per_grid_point_and_penalty_bites() {
    let ds = small_dataset(10, 150);
    let part = fixtures::case14_tight().clusters.unwrap();
    let cfg = SweepConfig {
        gamma1_grid: vec![0.0, 0.5, 5.0],
        gamma2_grid: vec![0.0, 0.5],
        seeds: vec![1, 2, 3],
        tolerance: 10.0,
        train: TrainConfig {
            dropout_rate: 0.0,
            ..quick(40, 0)
        },
        model: ModelSpec {
            hidden: vec![8, 8],
            ..ModelSpec::default()
        },
    };
    let norm = Normalization::from_dataset(&ds).unwrap();
    let r = gamma_sweep(&ds, &norm, 0.95, &Partition::single(6), &cfg).unwrap();
    assert_eq!(r.points.len(), 5);
    assert_eq!(r.to_csv().lines().count(), 6);
    // With a single group the block penalty is zero; with the area split it
    // is what the sweep drives down.
    let r = gamma_sweep(&ds, &norm, 0.95, &part, &cfg);
    let r = r.unwrap();
    let bd: Vec<f64> = r.points[..3].iter().map(|p| p.block_diag).collect();
    assert!(bd[2] <= bd[0], "L_bd along the sweep: {bd:?}");
}
