//! Seeded inputs shared by the benchmarks.

use minerf_core::render::{stratified_samples, RaySamples};
use minerf_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Positions in the scene cube and unit directions, `n × 3` each.
pub fn query_points(n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(n, 3, |_, _| rng.gen_range(-1.5..1.5));
    let mut d = Matrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
    for r in 0..n {
        let norm = d.row(r).iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for c in 0..3 {
            d.set(r, c, d.get(r, c) / norm);
        }
    }
    (x, d)
}

/// One ray of `n` jittered samples with random densities and colours.
pub fn ray_samples(n: usize, seed: u64) -> RaySamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = stratified_samples(2.0, 6.0, n, Some(&mut rng));
    let sigma = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let rgb = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    RaySamples::new(t, 6.0, sigma, rgb).expect("valid samples")
}
