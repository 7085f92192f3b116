use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::oracles::{central_difference, max_relative_error};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Runs `build` once on a tape for the analytic gradient and repeatedly for the oracle.
fn check(params: &[Matrix], build: impl Fn(&mut Tape, &[NodeId]) -> NodeId) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.param(p.clone()).unwrap()).collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).unwrap();
    let analytic: Vec<Matrix> = ids.iter().map(|&id| tape.grad(id).unwrap().clone()).collect();
    let numeric = central_difference(params, 1e-5, |ps| {
        let mut t = Tape::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| t.param(p.clone()).unwrap()).collect();
        let loss = build(&mut t, &ids);
        (t.scalar(loss), t.relu_pattern())
    });
    max_relative_error(&analytic, &numeric.gradients)
}

#[test]
fn leaves_are_numbered_sequentially() {
    let mut tape = Tape::new();
    assert_eq!(tape.leaf(Matrix::identity(2), false).unwrap().index(), 0);
    for _ in 0..2 {
        tape.leaf(Matrix::zeros(1, 1), true).unwrap();
    }
    assert_eq!(tape.leaf(Matrix::zeros(1, 1), true).unwrap().index(), 3);
}

#[test]
fn leaf_rejects_nan() {
    let mut bad = Matrix::zeros(2, 2);
    bad.set(1, 0, f64::NAN);
    let mut tape = Tape::new();
    assert!(matches!(tape.leaf(bad, true), Err(AutodiffError::NonFinite { .. })));
}

#[test]
fn matmul_values() {
    let mut tape = Tape::new();
    let m = Matrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
    let i = tape.constant(Matrix::identity(2)).unwrap();
    let x = tape.constant(m.clone()).unwrap();
    let y = tape.matmul(i, x).unwrap();
    assert_eq!(tape.value(y), &m);

    let a = tape.constant(Matrix::new(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
    let b = tape.constant(Matrix::new(2, 1, vec![3.0, 4.0]).unwrap()).unwrap();
    let ab = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(ab).as_slice(), &[11.0]);
    assert!(matches!(tape.matmul(a, a), Err(AutodiffError::Shape { .. })));
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(3, 4, &mut rng);
    let b = random(4, 2, &mut rng);
    let err = check(&[a, b], |t, ids| {
        let p = t.matmul(ids[0], ids[1]).unwrap();
        t.sum(p).unwrap()
    });
    assert!(err < 1e-8, "relative error {err}");
}

#[test]
fn add_zero_and_shape_errors() {
    let mut tape = Tape::new();
    let m = Matrix::from_fn(2, 3, |r, c| r as f64 - c as f64);
    let a = tape.constant(m.clone()).unwrap();
    let z = tape.constant(Matrix::zeros(2, 3)).unwrap();
    let s = tape.add(a, z).unwrap();
    assert_eq!(tape.value(s), &m);
    let bad = tape.constant(Matrix::zeros(3, 2)).unwrap();
    assert!(tape.add(a, bad).is_err());
}

#[test]
fn broadcast_bias_gradient_is_column_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(5, 3, &mut rng);
    let bias = random(1, 3, &mut rng);

    let mut tape = Tape::new();
    let xi = tape.constant(x.clone()).unwrap();
    let bi = tape.param(bias.clone()).unwrap();
    let y = tape.add(xi, bi).unwrap();
    let loss = tape.sum(y).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(bi).unwrap().as_slice(), &[5.0, 5.0, 5.0]);

    let err = check(&[x, bias], |t, ids| {
        let y = t.add(ids[0], ids[1]).unwrap();
        let s = t.sin(y).unwrap();
        t.sum(s).unwrap()
    });
    assert!(err < 1e-8, "relative error {err}");
}

#[test]
fn concat_shapes_and_gradient() {
    let mut tape = Tape::new();
    let a = tape.constant(Matrix::zeros(1, 2)).unwrap();
    let b = tape.constant(Matrix::zeros(1, 3)).unwrap();
    let c = tape.concat_cols(a, b).unwrap();
    assert_eq!(tape.value(c).shape(), (1, 5));

    let x = Matrix::from_fn(2, 2, |r, c| (r + 2 * c) as f64);
    let xi = tape.constant(x.clone()).unwrap();
    let e = tape.constant(Matrix::zeros(2, 0)).unwrap();
    let xe = tape.concat_cols(xi, e).unwrap();
    assert_eq!(tape.value(xe), &x);
    let wrong = tape.constant(Matrix::zeros(3, 1)).unwrap();
    assert!(tape.concat_cols(xi, wrong).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random(3, 2, &mut rng);
    let q = random(3, 4, &mut rng);
    let w = random(6, 1, &mut rng);
    let err = check(&[p, q, w], |t, ids| {
        let c = t.concat_cols(ids[0], ids[1]).unwrap();
        let s = t.cos(c).unwrap();
        let y = t.matmul(s, ids[2]).unwrap();
        t.sum(y).unwrap()
    });
    assert!(err < 1e-8, "relative error {err}");
}

#[test]
fn elementwise_values() {
    let mut tape = Tape::new();
    let x = tape.constant(Matrix::new(1, 3, vec![-1.0, 0.0, 2.0]).unwrap()).unwrap();
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.value(r).as_slice(), &[0.0, 0.0, 2.0]);
    let z = tape.constant(Matrix::zeros(1, 1)).unwrap();
    let s = tape.sigmoid(z).unwrap();
    assert_eq!(tape.scalar(s), 0.5);
    let sp = tape.softplus(z).unwrap();
    assert!((tape.scalar(sp) - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn relu_derivative_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.param(Matrix::new(1, 3, vec![-1.0, 0.0, 2.0]).unwrap()).unwrap();
    let r = tape.relu(x).unwrap();
    let l = tape.sum(r).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
}

#[test]
fn mse_of_identical_is_zero_with_zero_gradient() {
    let m = Matrix::from_fn(3, 2, |r, c| r as f64 * 0.3 - c as f64);
    let mut tape = Tape::new();
    let x = tape.param(m.clone()).unwrap();
    let l = tape.mse(x, m).unwrap();
    assert_eq!(tape.scalar(l), 0.0);
    tape.backward(l).unwrap();
    assert!(tape.grad(x).unwrap().as_slice().iter().all(|&g| g == 0.0));
}

#[test]
fn smooth_unary_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(4, 3, &mut rng);
    let target = random(4, 3, &mut rng);
    let err = check(&[x], |t, ids| {
        let a = t.sigmoid(ids[0]).unwrap();
        let b = t.softplus(ids[0]).unwrap();
        let c = t.add(a, b).unwrap();
        let d = t.scale(c, -1.7).unwrap();
        t.mse(d, target.clone()).unwrap()
    });
    assert!(err < 1e-8, "relative error {err}");
}

#[test]
fn linear_case_gradient_is_replicated_input() {
    let w = Matrix::from_fn(3, 2, |r, c| (r as f64) * 0.5 + c as f64);
    let x = Matrix::new(2, 1, vec![0.25, -2.0]).unwrap();
    let mut tape = Tape::new();
    let wi = tape.param(w).unwrap();
    let xi = tape.constant(x).unwrap();
    let y = tape.matmul(wi, xi).unwrap();
    let l = tape.sum(y).unwrap();
    tape.backward(l).unwrap();
    let g = tape.grad(wi).unwrap();
    for r in 0..3 {
        assert_eq!(g.row(r), &[0.25, -2.0]);
    }
    assert!(tape.grad(xi).is_none());
}

#[test]
fn second_backward_requires_reset() {
    let mut tape = Tape::new();
    let w = tape.param(Matrix::filled(1, 1, 3.0)).unwrap();
    let l = tape.scale(w, 2.0).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.backward(l), Err(AutodiffError::GradientsPending));
    tape.zero_grad();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(w).unwrap().as_slice(), &[2.0]);
}

#[test]
fn loss_must_be_scalar() {
    let mut tape = Tape::new();
    let w = tape.param(Matrix::zeros(2, 1)).unwrap();
    assert_eq!(tape.backward(w), Err(AutodiffError::NonScalarLoss((2, 1))));
}

#[test]
fn unreachable_parameter_gets_exact_zero() {
    let mut tape = Tape::new();
    let used = tape.param(Matrix::filled(2, 2, 1.0)).unwrap();
    let unused = tape.param(Matrix::filled(2, 3, 5.0)).unwrap();
    let _later = tape.sin(unused).unwrap();
    let l = tape.sum(used).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(unused).unwrap(), &Matrix::zeros(2, 3));
}

#[test]
fn evaluation_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tape = Tape::new();
        let w = tape.param(random(7, 5, &mut rng)).unwrap();
        let x = tape.constant(random(11, 7, &mut rng)).unwrap();
        let h = tape.matmul(x, w).unwrap();
        let h = tape.relu(h).unwrap();
        let l = tape.mse(h, Matrix::filled(11, 5, 0.1)).unwrap();
        tape.backward(l).unwrap();
        (tape.scalar(l).to_bits(), tape.grad(w).unwrap().clone())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn two_layer_network_gradients_match(seed in any::<u64>(), rows in 1usize..6, hidden in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(rows, 3, &mut rng);
        let w1 = random(3, hidden, &mut rng);
        let b1 = random(1, hidden, &mut rng);
        let w2 = random(hidden + 3, 2, &mut rng);
        let target = random(rows, 2, &mut rng);
        let err = check(&[w1, b1, w2], |t, ids| {
            let xi = t.constant(x.clone()).unwrap();
            let h = t.matmul(xi, ids[0]).unwrap();
            let h = t.add(h, ids[1]).unwrap();
            let h = t.relu(h).unwrap();
            let h = t.concat_cols(h, xi).unwrap();
            let y = t.matmul(h, ids[2]).unwrap();
            let y = t.sigmoid(y).unwrap();
            t.mse(y, target.clone()).unwrap()
        });
        prop_assert!(err < 1e-5, "relative error {}", err);
    }
}
