use rand::Rng;

use crate::autodiff::{AutodiffError, CustomOp, Matrix, NodeId, Tape};
use crate::Error;

/// `n` stratified distances in `[t_near, t_far]`: bin midpoints, or one
/// uniform draw per bin when `jitter` is given.
pub fn stratified_samples<R: Rng>(t_near: f64, t_far: f64, n: usize, jitter: Option<&mut R>) -> Vec<f64> {
    let width = (t_far - t_near) / n as f64;
    match jitter {
        None => (0..n).map(|k| t_near + (k as f64 + 0.5) * width).collect(),
        Some(rng) => (0..n)
            .map(|k| {
                let u: f64 = rng.gen();
                // never past the upper bin edge, even after rounding
                (t_near + (k as f64 + u) * width).min(t_near + (k + 1) as f64 * width)
            })
            .collect(),
    }
}

/// Segment lengths `t_{k+1} − t_k`, closed by `t_far − t_last`.
pub fn segment_lengths(t: &[f64], t_far: f64) -> Vec<f64> {
    let mut d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(&last) = t.last() {
        d.push(t_far - last);
    }
    d
}

/// Samples along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rgb: Vec<[f64; 3]>,
}

impl RaySamples {
    pub fn new(t: Vec<f64>, t_far: f64, sigma: Vec<f64>, rgb: Vec<[f64; 3]>) -> Result<Self, Error> {
        let delta = segment_lengths(&t, t_far);
        let s = Self { t, delta, sigma, rgb };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let n = self.t.len();
        if n == 0 || self.sigma.len() != n || self.rgb.len() != n || self.delta.len() != n {
            return Err(Error::Invalid("ray samples need equal, non-zero lengths".into()));
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("sample distances must be strictly ascending".into()));
        }
        if self.delta.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Invalid("segment lengths must be non-negative".into()));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Invalid("densities must be finite and non-negative".into()));
        }
        if self.rgb.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Invalid("colours must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

pub const DEPTH_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Composited {
    pub rgb: [f64; 3],
    pub depth: f64,
    /// `1 − T_final`.
    pub acc: f64,
    pub weights: Vec<f64>,
    /// Transmittance past the last sample.
    pub t_final: f64,
}

/// Alpha compositing of one ray over `background`.
pub fn composite(samples: &RaySamples, background: [f64; 3]) -> Result<Composited, Error> {
    samples.validate()?;
    Ok(composite_unchecked(&samples.t, &samples.delta, &samples.sigma, &samples.rgb, background))
}

pub(crate) fn composite_unchecked(
    t: &[f64],
    delta: &[f64],
    sigma: &[f64],
    rgb: &[[f64; 3]],
    background: [f64; 3],
) -> Composited {
    let mut trans = 1.0;
    let mut weights = Vec::with_capacity(t.len());
    let mut color = [0.0; 3];
    let mut depth = 0.0;
    for k in 0..t.len() {
        let alpha = -(-sigma[k] * delta[k]).exp_m1();
        let w = trans * alpha;
        for c in 0..3 {
            color[c] += w * rgb[k][c];
        }
        depth += w * t[k];
        weights.push(w);
        trans *= (-sigma[k] * delta[k]).exp();
    }
    for c in 0..3 {
        color[c] += trans * background[c];
    }
    let acc = 1.0 - trans;
    Composited {
        rgb: color,
        depth: depth / acc.max(DEPTH_EPSILON),
        acc,
        weights,
        t_final: trans,
    }
}

/// Differentiable compositing of a batch of rays with the same sample
/// count. Inputs are densities `(R·n)×1` and colours `(R·n)×3` in ray-major
/// order; the output is `R×3`.
pub struct CompositeOp {
    n: usize,
    delta: Vec<f64>,
    background: [f64; 3],
}

impl CompositeOp {
    /// `delta` holds `n` segment lengths per ray, ray-major.
    pub fn new(n: usize, delta: Vec<f64>, background: [f64; 3]) -> Result<Self, Error> {
        if n == 0 || delta.len() % n != 0 {
            return Err(Error::Invalid("segment lengths must come in whole rays".into()));
        }
        Ok(Self { n, delta, background })
    }

    pub fn apply(self, tape: &mut Tape, sigma: NodeId, rgb: NodeId) -> Result<NodeId, AutodiffError> {
        tape.custom(self, &[sigma, rgb])
    }

    fn rays(&self) -> usize {
        self.delta.len() / self.n
    }

    fn check(&self, sigma: &Matrix, rgb: &Matrix) -> Result<(), AutodiffError> {
        let m = self.delta.len();
        if sigma.shape() != (m, 1) || rgb.shape() != (m, 3) {
            return Err(AutodiffError::Shape {
                op: "composite",
                lhs: sigma.shape(),
                rhs: rgb.shape(),
            });
        }
        Ok(())
    }
}

impl CustomOp for CompositeOp {
    fn name(&self) -> &'static str {
        "composite"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix, AutodiffError> {
        let (sigma, rgb) = (inputs[0], inputs[1]);
        self.check(sigma, rgb)?;
        let mut out = Matrix::zeros(self.rays(), 3);
        for r in 0..self.rays() {
            let mut trans = 1.0;
            let mut acc = [0.0; 3];
            for k in r * self.n..(r + 1) * self.n {
                let s = sigma.as_slice()[k];
                let w = trans * -(-s * self.delta[k]).exp_m1();
                for c in 0..3 {
                    acc[c] += w * rgb.get(k, c);
                }
                trans *= (-s * self.delta[k]).exp();
            }
            for c in 0..3 {
                out.set(r, c, acc[c] + trans * self.background[c]);
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Matrix], _output: &Matrix, grad: &Matrix) -> Vec<Matrix> {
        let (sigma, rgb) = (inputs[0], inputs[1]);
        let mut g_sigma = Matrix::zeros(sigma.rows(), 1);
        let mut g_rgb = Matrix::zeros(rgb.rows(), 3);
        let mut trans = vec![0.0; self.n + 1];
        for r in 0..self.rays() {
            let base = r * self.n;
            let g = grad.row(r);
            trans[0] = 1.0;
            for k in 0..self.n {
                trans[k + 1] = trans[k] * (-sigma.as_slice()[base + k] * self.delta[base + k]).exp();
            }
            // `after` is the part of the pixel colour contributed behind
            // sample k: later samples plus the background.
            let mut after: [f64; 3] = std::array::from_fn(|c| trans[self.n] * self.background[c]);
            for k in (0..self.n).rev() {
                let i = base + k;
                let alpha = -(-sigma.as_slice()[i] * self.delta[i]).exp_m1();
                let w = trans[k] * alpha;
                let mut gs = 0.0;
                for c in 0..3 {
                    let ck = rgb.get(i, c);
                    gs += g[c] * (trans[k + 1] * ck - after[c]);
                    g_rgb.set(i, c, w * g[c]);
                    after[c] += w * ck;
                }
                g_sigma.set(i, 0, self.delta[i] * gs);
            }
        }
        vec![g_sigma, g_rgb]
    }
}
