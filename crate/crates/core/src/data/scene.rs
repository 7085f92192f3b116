use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::autodiff::Matrix;
use crate::img::Image;
use crate::render::{image_rays, CameraPose, Intrinsics, RadianceField, Vec3};
use crate::rng::{stream, Stream};
use crate::Error;

/// Primitives must sit inside `[−SCENE_EXTENT, SCENE_EXTENT]³`.
pub const SCENE_EXTENT: f64 = 1.5;
pub const DEFAULT_DENSE_SAMPLES: usize = 16384;
pub const MIN_DENSE_SAMPLES: usize = 1024;

/// Gaussian density blob `σ₀·exp(−‖x − c‖²/r²)` with a constant albedo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub center: Vec3,
    pub radius: f64,
    pub density: f64,
    pub albedo: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
    /// Colour reported where the density vanishes.
    pub background: [f64; 3],
}

impl AnalyticScene {
    pub const PRESETS: [&'static str; 3] = ["sphere", "cluster", "empty"];

    pub fn new(primitives: Vec<Primitive>, background: [f64; 3]) -> Result<Self, Error> {
        for (i, p) in primitives.iter().enumerate() {
            if !(p.density >= 0.0 && p.density.is_finite()) || !(p.radius > 0.0 && p.radius.is_finite()) {
                return Err(Error::Invalid(format!("primitive {i}: need density >= 0 and radius > 0")));
            }
            if p.center.iter().any(|c| !(c.abs() + p.radius <= SCENE_EXTENT)) {
                return Err(Error::Invalid(format!("primitive {i} leaves the scene cube")));
            }
            if p.albedo.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Invalid(format!("primitive {i}: albedo outside [0, 1]")));
            }
        }
        Ok(Self { primitives, background })
    }

    /// One of [`AnalyticScene::PRESETS`].
    pub fn preset(name: &str) -> Result<Self, Error> {
        let p = |center: Vec3, radius: f64, density: f64, albedo: [f64; 3]| Primitive {
            center,
            radius,
            density,
            albedo,
        };
        let prims = match name {
            "sphere" => vec![p([0.0; 3], 0.6, 30.0, [0.85, 0.35, 0.2])],
            "cluster" => vec![
                p([0.0, 0.0, 0.0], 0.45, 40.0, [0.9, 0.25, 0.2]),
                p([0.55, 0.2, 0.3], 0.3, 40.0, [0.2, 0.7, 0.3]),
                p([-0.45, 0.35, -0.25], 0.32, 40.0, [0.2, 0.3, 0.85]),
                p([0.1, -0.55, -0.35], 0.28, 40.0, [0.95, 0.8, 0.2]),
                p([-0.2, -0.3, 0.55], 0.25, 40.0, [0.6, 0.2, 0.7]),
            ],
            "empty" => Vec::new(),
            other => {
                return Err(Error::Config(format!(
                    "unknown scene preset {other:?}; available: {}",
                    Self::PRESETS.join(", ")
                )))
            }
        };
        Self::new(prims, [1.0; 3])
    }
}

/// Density and view-independent colour at `x`.
pub fn scene_field(scene: &AnalyticScene, x: Vec3) -> (f64, [f64; 3]) {
    let mut sigma = 0.0;
    let mut weighted = [0.0; 3];
    for p in &scene.primitives {
        let d2 = (0..3).map(|k| (x[k] - p.center[k]).powi(2)).sum::<f64>();
        let s = p.density * (-d2 / (p.radius * p.radius)).exp();
        sigma += s;
        for c in 0..3 {
            weighted[c] += s * p.albedo[c];
        }
    }
    if sigma == 0.0 {
        return (0.0, scene.background);
    }
    (sigma, weighted.map(|w| (w / sigma).clamp(0.0, 1.0)))
}

impl RadianceField for AnalyticScene {
    fn query(&self, x: &Matrix, _d: &Matrix) -> Result<(Vec<f64>, Matrix), Error> {
        let mut sigma = Vec::with_capacity(x.rows());
        let mut rgb = Matrix::zeros(x.rows(), 3);
        for r in 0..x.rows() {
            let (s, c) = scene_field(self, [x.get(r, 0), x.get(r, 1), x.get(r, 2)]);
            sigma.push(s);
            for k in 0..3 {
                rgb.set(r, k, c[k]);
            }
        }
        Ok((sigma, rgb))
    }
}

/// Ground-truth image by brute-force quadrature of the rendering integral.
///
/// `[near, far]` is cut into `n_dense` equal segments. Transmittance is
/// carried exactly from segment to segment (`T ← T·e^{−σh}`) and each
/// segment contributes `h·σ(m)·c(m)·T(m)` evaluated at its midpoint `m`,
/// with `T(m)` the transmittance half way through the segment.
pub fn render_oracle(
    scene: &AnalyticScene,
    pose: &CameraPose,
    intr: &Intrinsics,
    near: f64,
    far: f64,
    background: [f64; 3],
    n_dense: usize,
) -> Result<Image, Error> {
    if n_dense < MIN_DENSE_SAMPLES {
        return Err(Error::Invalid(format!("oracle needs at least {MIN_DENSE_SAMPLES} samples, got {n_dense}")));
    }
    let rays = image_rays(pose, intr, near, far);
    let h = (far - near) / n_dense as f64;
    let pixels: Vec<[f64; 3]> = rays
        .par_iter()
        .map(|ray| {
            let mut trans = 1.0;
            let mut color = [0.0; 3];
            for k in 0..n_dense {
                let (sigma, c) = scene_field(scene, ray.at(near + (k as f64 + 0.5) * h));
                if sigma > 0.0 {
                    let t_mid = trans * (-0.5 * sigma * h).exp();
                    for ch in 0..3 {
                        color[ch] += h * sigma * c[ch] * t_mid;
                    }
                    trans *= (-sigma * h).exp();
                }
            }
            std::array::from_fn(|ch| color[ch] + trans * background[ch])
        })
        .collect();
    Image::new(intr.width, intr.height, pixels.into_iter().flatten().collect())
}

/// `n` cameras at distance `radius` on a golden spiral, each looking at the
/// origin with `+z` up. The seed only rotates the spiral about the z axis.
pub fn golden_spiral_poses(n: usize, radius: f64, seed: u64) -> Result<Vec<CameraPose>, Error> {
    let offset = stream(seed, Stream::Scene).gen_range(0.0..std::f64::consts::TAU);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            // stay clear of the poles, where +z up is degenerate
            let z = 0.85 * (1.0 - (2 * i + 1) as f64 / n as f64);
            let r = (1.0 - z * z).sqrt();
            let theta = offset + golden * i as f64;
            let eye = [radius * r * theta.cos(), radius * r * theta.sin(), radius * z];
            CameraPose::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0])
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    pub camera_angle_x: f64,
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
    pub n_dense: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_views: 4,
            width: 64,
            height: 64,
            radius: 3.0,
            camera_angle_x: 0.6911112,
            near: 0.5,
            far: 6.0,
            background: [1.0; 3],
            n_dense: DEFAULT_DENSE_SAMPLES,
            seed: 0,
        }
    }
}

/// Oracle renders of `scene` from a golden spiral of cameras.
pub fn make_synthetic_dataset(scene: &AnalyticScene, spec: &SyntheticSpec, split: &str) -> Result<Dataset, Error> {
    if spec.n_views == 0 {
        return Err(Error::Config("n_views must be at least 1".into()));
    }
    let poses = golden_spiral_poses(spec.n_views, spec.radius, spec.seed)?;
    let intr = Intrinsics::from_camera_angle(spec.width, spec.height, spec.camera_angle_x)?;
    let images = poses
        .iter()
        .map(|pose| render_oracle(scene, pose, &intr, spec.near, spec.far, spec.background, spec.n_dense))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(images, poses, spec.camera_angle_x, split)
}
