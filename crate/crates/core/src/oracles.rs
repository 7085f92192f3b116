//! Slow reference implementations used to verify the fast paths.
//!
//! Nothing here shares code with the routines it checks: gradients are
//! compared against central differences of the forward pass, SSIM against a
//! per-window double loop.

use crate::autodiff::Matrix;
use crate::img::Image;

/// Central-difference gradient of a scalar function of several parameter matrices.
#[derive(Debug, Clone)]
pub struct FiniteDifference {
    pub gradients: Vec<Matrix>,
    /// Entries whose stencil crossed a ReLU kink at the nominal step and had to be refined.
    pub refined_entries: usize,
}

/// Evaluates `f` at `θ ± h` for every entry of every parameter.
///
/// `f` returns the loss together with the ReLU sign pattern of that
/// evaluation. When the pattern at either stencil point differs from the
/// base point, the function is not smooth over the stencil, so the step is
/// divided by ten (up to four times) until both stencil points lie on the
/// base point's linear piece.
pub fn central_difference<F>(params: &[Matrix], step: f64, mut f: F) -> FiniteDifference
where
    F: FnMut(&[Matrix]) -> (f64, Vec<bool>),
{
    let mut work: Vec<Matrix> = params.to_vec();
    let (_, base_pattern) = f(&work);
    let mut gradients = Vec::with_capacity(params.len());
    let mut refined_entries = 0;
    for p in 0..params.len() {
        let mut g = Matrix::zeros(params[p].rows(), params[p].cols());
        for k in 0..params[p].len() {
            let original = params[p].as_slice()[k];
            let mut h = step;
            let mut refined = false;
            let estimate = loop {
                work[p].as_mut_slice()[k] = original + h;
                let (plus, pattern_plus) = f(&work);
                work[p].as_mut_slice()[k] = original - h;
                let (minus, pattern_minus) = f(&work);
                let smooth = pattern_plus == base_pattern && pattern_minus == base_pattern;
                if smooth || h < step * 1e-4 {
                    break (plus - minus) / (2.0 * h);
                }
                refined = true;
                h /= 10.0;
            };
            work[p].as_mut_slice()[k] = original;
            if refined {
                refined_entries += 1;
            }
            g.as_mut_slice()[k] = estimate;
        }
        gradients.push(g);
    }
    FiniteDifference {
        gradients,
        refined_entries,
    }
}

/// Largest per-matrix relative error `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)`.
///
/// Matrices whose gradients are both identically zero contribute zero.
pub fn max_relative_error(analytic: &[Matrix], numeric: &[Matrix]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            assert_eq!(a.shape(), n.shape());
            let diff = a
                .as_slice()
                .iter()
                .zip(n.as_slice())
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            let scale = a.max_abs().max(n.max_abs());
            if scale == 0.0 {
                0.0
            } else {
                diff / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Single-scale SSIM evaluated window by window with an explicit 11×11
/// Gaussian (σ = 1.5), valid region only, averaged over windows and channels.
pub fn naive_ssim(a: &Image, b: &Image) -> f64 {
    assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    const SIZE: usize = 11;
    let sigma: f64 = 1.5;
    let mut kernel = [[0.0_f64; SIZE]; SIZE];
    let mut total = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let di = i as f64 - 5.0;
            let dj = j as f64 - 5.0;
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let c1 = 0.01_f64.powi(2);
    let c2 = 0.03_f64.powi(2);
    let (w, h) = (a.width(), a.height());
    let mut acc = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for y0 in 0..=(h - SIZE) {
            for x0 in 0..=(w - SIZE) {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SIZE {
                    for j in 0..SIZE {
                        let k = kernel[i][j] / total;
                        let va = a.get(x0 + j, y0 + i)[ch];
                        let vb = b.get(x0 + j, y0 + i)[ch];
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                let var_a = saa - ma * ma;
                let var_b = sbb - mb * mb;
                let cov = sab - ma * mb;
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
    }
    acc / count as f64
}
