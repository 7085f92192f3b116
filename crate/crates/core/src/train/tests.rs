use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{make_synthetic_dataset, AnalyticScene, SyntheticSpec};
use crate::model::{ModelConfig, ModelParams, Variant};

fn tiny_dataset() -> Dataset {
    let spec = SyntheticSpec {
        n_views: 2,
        width: 8,
        height: 6,
        n_dense: 1024,
        ..SyntheticSpec::default()
    };
    make_synthetic_dataset(&AnalyticScene::preset("sphere").unwrap(), &spec, "train").unwrap()
}

fn tiny_model(variant: Variant) -> Model {
    Model::init(ModelConfig::for_variant(variant, 3, 8), 1).unwrap()
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        iterations: 3,
        batch_size: 12,
        anneal: AnnealConfig {
            n_max: 6,
            n_start: 4,
            eta: 1,
        },
        eval_every: 1,
        chunk_points: 20,
        ..TrainConfig::default()
    }
}

#[test]
fn anneal_examples() {
    let cfg = AnnealConfig::default();
    assert_eq!(anneal_sample_count(0, &cfg), 16);
    assert_eq!(anneal_sample_count(150, &cfg), 17);
    assert_eq!(anneal_sample_count(1_000_000, &cfg), 256);
    assert_eq!(anneal_sample_count(usize::MAX, &cfg), 256);
}

proptest! {
    #[test]
    fn anneal_is_monotone_and_capped(u in 0usize..100_000, n_start in 1usize..64, extra in 0usize..300, eta in 1usize..500) {
        let cfg = AnnealConfig { n_max: n_start + extra, n_start, eta };
        let a = anneal_sample_count(u, &cfg);
        prop_assert!(a <= anneal_sample_count(u + 1, &cfg));
        prop_assert!((n_start..=n_start + extra).contains(&a));
        if u / eta + n_start >= cfg.n_max {
            prop_assert_eq!(a, cfg.n_max);
            prop_assert_eq!(anneal_sample_count(u + 1000, &cfg), cfg.n_max);
        }
    }
}

#[test]
fn batch_composition() {
    let ds = tiny_dataset();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let none = sample_ray_batch(&ds, 40, 0.0, &mut rng);
    assert!(none.outside.is_empty());
    assert_eq!(none.inside.len(), 40);

    let b = sample_ray_batch(&ds, 41, 0.25, &mut rng);
    assert_eq!(b.outside.len(), 11);
    assert_eq!(b.inside.len(), 30);
    for p in &b.outside {
        assert!((-4.0..12.0).contains(&p.px) && (-3.0..9.0).contains(&p.py));
        assert!(!((0.0..8.0).contains(&p.px) && (0.0..6.0).contains(&p.py)));
    }
    for (p, t) in b.inside.iter().zip(&b.targets) {
        assert_eq!(ds.images[p.view].get(p.px as usize, p.py as usize), *t);
    }
}

#[test]
fn loss_values() {
    let mut tape = Tape::new();
    let target = Matrix::from_rows(&[[0.2, 0.4, 0.6], [1.0, 0.0, 0.5]]).unwrap();
    let same = tape.constant(target.clone()).unwrap();
    let l = reconstruction_loss(&mut tape, same, &target).unwrap();
    assert_eq!(tape.scalar(l), 0.0);

    let one = tape.constant(Matrix::row_vector(&[0.1, 0.0, 0.0]).unwrap()).unwrap();
    let l = reconstruction_loss(&mut tape, one, &Matrix::zeros(1, 3)).unwrap();
    assert!((tape.scalar(l) - 0.01).abs() < 1e-15);

    let black = tape.constant(Matrix::zeros(1, 3)).unwrap();
    let l = background_reg_loss(&mut tape, black, [1.0; 3]).unwrap();
    assert_eq!(tape.scalar(l), 3.0);
    let empty = tape.constant(Matrix::zeros(0, 3)).unwrap();
    let l = background_reg_loss(&mut tape, empty, [1.0; 3]).unwrap();
    assert_eq!(tape.scalar(l), 0.0);
    let white = tape.constant(Matrix::filled(4, 3, 1.0)).unwrap();
    let l = background_reg_loss(&mut tape, white, [1.0; 3]).unwrap();
    assert_eq!(tape.scalar(l), 0.0);
}

proptest! {
    #[test]
    fn loss_matches_direct_sum(seed in 0u64..500, rays in 1usize..40) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = Matrix::from_fn(rays, 3, |_, _| rng.gen());
        let target = Matrix::from_fn(rays, 3, |_, _| rng.gen());
        let mut tape = Tape::new();
        let p = tape.constant(pred.clone()).unwrap();
        let l = reconstruction_loss(&mut tape, p, &target).unwrap();
        let mut direct = 0.0;
        for r in 0..rays {
            direct += (0..3).map(|c| (pred.get(r, c) - target.get(r, c)).powi(2)).sum::<f64>();
        }
        prop_assert!((tape.scalar(l) - direct / rays as f64).abs() < 1e-12);
    }
}

#[test]
fn adam_first_step_is_signed_lr() {
    let mut params = ModelParams::new();
    params.push("w".into(), Matrix::row_vector(&[1.0, -2.0, 0.5, 3.0]).unwrap());
    let g = Matrix::row_vector(&[0.3, -1e-3, 40.0, 0.0]).unwrap();
    let mut state = AdamState::new(&params);
    let before = params.values()[0].clone();
    adam_step(&mut params, std::slice::from_ref(&g), &mut state, 1e-2).unwrap();
    for i in 0..3 {
        let step = before.as_slice()[i] - params.values()[0].as_slice()[i];
        let want = 1e-2 * g.as_slice()[i].signum();
        assert!(((step - want) / want).abs() < 1e-4, "{step} vs {want}");
    }
    assert_eq!(params.values()[0].as_slice()[3], 3.0);
    assert_eq!(state.step, 1);
}

#[test]
fn adam_rejects_bad_gradients() {
    let mut params = ModelParams::new();
    params.push("w".into(), Matrix::zeros(2, 2));
    let mut state = AdamState::new(&params);
    assert!(adam_step(&mut params, &[Matrix::zeros(2, 3)], &mut state, 0.1).is_err());
    let mut bad = Matrix::zeros(2, 2);
    bad.as_mut_slice()[1] = f64::NAN;
    let err = adam_step(&mut params, &[bad], &mut state, 0.1).unwrap_err().to_string();
    assert!(err.contains("w") && err.contains("entry 1"), "{err}");
    assert_eq!(state.step, 0);
    adam_step(&mut params, &[Matrix::zeros(2, 2)], &mut state, 0.1).unwrap();
    assert_eq!(params.values()[0], Matrix::zeros(2, 2));
}

#[test]
fn config_problems_are_exhaustive() {
    let cfg = TrainConfig {
        batch_size: 0,
        out_fraction: 1.0,
        anneal: AnnealConfig {
            n_max: 4,
            n_start: 8,
            eta: 0,
        },
        ..TrainConfig::default()
    };
    assert_eq!(cfg.problems().len(), 4);
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn learning_rate_decays_exponentially() {
    let cfg = TrainConfig {
        iterations: 100,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.learning_rate(0), 5e-4);
    assert!((cfg.learning_rate(50) - (5e-4f64 * 5e-5).sqrt()).abs() < 1e-15);
    assert!((cfg.learning_rate(100) - 5e-5).abs() < 1e-18);
}

#[test]
fn zero_iterations_returns_initial_model() {
    let model = tiny_model(Variant::Mi);
    let cfg = TrainConfig {
        iterations: 0,
        ..tiny_config()
    };
    let out = train(model.clone(), &tiny_dataset(), None, &cfg).unwrap();
    assert_eq!(out.model, model);
    assert!(out.telemetry.rows.is_empty());
}

#[test]
fn first_logged_loss_matches_direct_evaluation() {
    let ds = tiny_dataset();
    let model = tiny_model(Variant::Dual);
    let cfg = tiny_config();
    let out = train(model.clone(), &ds, None, &cfg).unwrap();

    let n = anneal_sample_count(0, &cfg.anneal);
    let batch = sample_ray_batch(&ds, cfg.batch_size, cfg.out_fraction, &mut stream(cfg.seed, Stream::Sampling));
    let mut jitter = stream(cfg.seed, Stream::Jitter);
    let mut ts_for = |rays: &[Ray]| -> Vec<Vec<f64>> {
        rays.iter().map(|r| stratified_samples(r.t_near, r.t_far, n, Some(&mut jitter))).collect()
    };
    let inside = batch_rays(&ds, &batch.inside, cfg.near, cfg.far).unwrap();
    let outside = batch_rays(&ds, &batch.outside, cfg.near, cfg.far).unwrap();
    let (ts_in, ts_out) = (ts_for(&inside), ts_for(&outside));

    let mut tape = Tape::new();
    let nodes = model.params.register(&mut tape, false).unwrap();
    let pred_in = render_on_tape(&mut tape, &nodes, &model, &inside, &ts_in, cfg.background).unwrap();
    let target = Matrix::from_rows(&batch.targets).unwrap();
    let rec = reconstruction_loss(&mut tape, pred_in, &target).unwrap();
    let pred_out = render_on_tape(&mut tape, &nodes, &model, &outside, &ts_out, cfg.background).unwrap();
    let br = background_reg_loss(&mut tape, pred_out, cfg.background).unwrap();
    let expected = tape.scalar(rec) + cfg.lambda_br * tape.scalar(br);
    let logged = out.telemetry.rows[0].train_loss;
    assert!((logged - expected).abs() < 1e-12 * expected.max(1.0), "{logged} vs {expected}");
    assert_eq!(out.telemetry.rows.len(), 3);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let ds = tiny_dataset();
    let cfg = tiny_config();
    let run = || train(tiny_model(Variant::Mi), &ds, Some(&ds), &cfg).unwrap();
    let a = run();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(run);
    assert_eq!(a.model, b.model);
    assert_eq!(a.telemetry.to_csv(), b.telemetry.to_csv());
    assert_ne!(a.model, tiny_model(Variant::Mi));
    assert!(a.telemetry.rows.iter().all(|r| r.test_psnr.is_some() && r.grad_norms.len() == 3));
}

#[test]
fn zero_background_weight_skips_outside_rays() {
    let ds = tiny_dataset();
    let off = TrainConfig {
        lambda_br: 0.0,
        ..tiny_config()
    };
    assert_eq!(off.outside_rays(), 0);
    let a = train(tiny_model(Variant::Vanilla), &ds, None, &off).unwrap();
    let b = train(
        tiny_model(Variant::Vanilla),
        &ds,
        None,
        &TrainConfig {
            out_fraction: 0.0,
            ..off
        },
    )
    .unwrap();
    assert_eq!(a.model, b.model);
}

#[test]
fn telemetry_csv_layout() {
    let out = train(tiny_model(Variant::Vanilla), &tiny_dataset(), None, &tiny_config()).unwrap();
    let csv = out.telemetry.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,n_samples,learning_rate,train_loss,test_psnr,grad_1,grad_2,grad_3"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn non_finite_loss_reports_parameters() {
    let mut model = tiny_model(Variant::Vanilla);
    let last = model.params.len() - 1;
    model.params.values_mut()[last].as_mut_slice()[0] = f64::NAN;
    match train(model.clone(), &tiny_dataset(), None, &tiny_config()) {
        Err(Error::NonFiniteLoss { iteration, params, .. }) => {
            assert_eq!(iteration, 0);
            assert_eq!(params.names(), model.params.names());
        }
        other => panic!("expected a non-finite loss, got {other:?}"),
    }
}

#[test]
fn overflowing_gradients_are_rejected_before_the_update() {
    let mut model = tiny_model(Variant::Vanilla);
    for v in model.params.values_mut() {
        *v = Matrix::filled(v.rows(), v.cols(), 1e300);
    }
    let err = train(model, &tiny_dataset(), None, &tiny_config()).unwrap_err().to_string();
    assert!(err.contains("non-finite gradient") && err.contains("step 0"), "{err}");
}

#[test]
fn background_artifact_of_empty_field_is_zero() {
    let mut model = tiny_model(Variant::Dual);
    // σ head bias far below zero: no density anywhere
    for (name, v) in model.params.names().to_vec().iter().zip(model.params.values_mut()) {
        if name.starts_with("density.") {
            *v = Matrix::zeros(v.rows(), v.cols());
        }
    }
    let intr = Intrinsics::new(8, 8, 10.0).unwrap();
    let pose = CameraPose::look_at([0.0, -3.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0]).unwrap();
    let cfg = RenderConfig {
        samples: 8,
        ..RenderConfig::default()
    };
    assert_eq!(background_artifact(&model, &pose, &intr, &cfg, 2).unwrap(), 0.0);
}
