//! Pinhole rays, stratified sampling and volume compositing.

mod camera;
mod composite;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use camera::{pixel_ray, CameraPose, Intrinsics, Ray, Vec3, RIGID_TOLERANCE};
pub use composite::{
    composite, segment_lengths, stratified_samples, CompositeOp, Composited, RaySamples, DEPTH_EPSILON,
};

use crate::autodiff::Matrix;
use crate::img::{save_gray16, Image, Normalization};
use crate::model::Model;
use crate::rng::{substream, Stream};
use crate::Error;

/// Anything that maps positions and unit directions to `(σ, rgb)`.
pub trait RadianceField: Sync {
    /// `x`, `d`: N×3. Returns N densities and an N×3 colour matrix.
    fn query(&self, x: &Matrix, d: &Matrix) -> Result<(Vec<f64>, Matrix), Error>;
}

impl RadianceField for Model {
    fn query(&self, x: &Matrix, d: &Matrix) -> Result<(Vec<f64>, Matrix), Error> {
        Model::query(self, x, d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    /// Jittered instead of midpoint stratification.
    #[serde(default)]
    pub jitter: bool,
    pub background: [f64; 3],
    /// Rays per work item.
    pub chunk: usize,
    /// Seed of the jitter stream.
    #[serde(default)]
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            near: 0.5,
            far: 6.0,
            samples: 64,
            jitter: false,
            background: [1.0; 3],
            chunk: 256,
            seed: 0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.near >= 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(Error::Config(format!("need 0 <= near < far, got {} and {}", self.near, self.far)));
        }
        if self.samples == 0 || self.chunk == 0 {
            return Err(Error::Config("samples and chunk must be positive".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("background must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Positions `o + t·d` and repeated directions for every sample, ray-major.
pub fn sample_points(rays: &[Ray], ts: &[Vec<f64>]) -> (Matrix, Matrix) {
    let total: usize = ts.iter().map(Vec::len).sum();
    let mut x = Matrix::zeros(total, 3);
    let mut d = Matrix::zeros(total, 3);
    let mut row = 0;
    for (ray, t) in rays.iter().zip(ts) {
        for &tk in t {
            let p = ray.at(tk);
            for c in 0..3 {
                x.set(row, c, p[c]);
                d.set(row, c, ray.direction[c]);
            }
            row += 1;
        }
    }
    (x, d)
}

/// Composited colour, depth and opacity of each ray.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RayBatch {
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub acc: Vec<f64>,
}

/// Renders `rays` in chunks of `cfg.chunk`. Jitter for chunk `i` comes from
/// its own sub-stream, so the result does not depend on scheduling.
pub fn render_rays(field: &dyn RadianceField, rays: &[Ray], cfg: &RenderConfig) -> Result<RayBatch, Error> {
    cfg.validate()?;
    let parts: Vec<Result<RayBatch, Error>> = rays
        .par_chunks(cfg.chunk)
        .enumerate()
        .map(|(i, chunk)| render_chunk(field, chunk, cfg, i as u64))
        .collect();
    let mut out = RayBatch::default();
    for part in parts {
        let part = part?;
        out.rgb.extend(part.rgb);
        out.depth.extend(part.depth);
        out.acc.extend(part.acc);
    }
    Ok(out)
}

fn render_chunk(field: &dyn RadianceField, rays: &[Ray], cfg: &RenderConfig, index: u64) -> Result<RayBatch, Error> {
    let mut rng = substream(cfg.seed, Stream::Jitter, index);
    let ts: Vec<Vec<f64>> = rays
        .iter()
        .map(|r| stratified_samples(r.t_near, r.t_far, cfg.samples, cfg.jitter.then_some(&mut rng)))
        .collect();
    let (x, d) = sample_points(rays, &ts);
    let (sigma, rgb) = field.query(&x, &d)?;
    let n = cfg.samples;
    let mut out = RayBatch::default();
    for (r, (ray, t)) in rays.iter().zip(&ts).enumerate() {
        let delta = segment_lengths(t, ray.t_far);
        let colors: Vec<[f64; 3]> = (r * n..(r + 1) * n).map(|i| [rgb.get(i, 0), rgb.get(i, 1), rgb.get(i, 2)]).collect();
        let c = composite::composite_unchecked(t, &delta, &sigma[r * n..(r + 1) * n], &colors, cfg.background);
        out.rgb.push(c.rgb);
        out.depth.push(c.depth);
        out.acc.push(c.acc);
    }
    Ok(out)
}

/// Rays through every pixel centre, row-major.
pub fn image_rays(pose: &CameraPose, intr: &Intrinsics, near: f64, far: f64) -> Vec<Ray> {
    let mut rays = Vec::with_capacity(intr.pixel_count());
    for py in 0..intr.height {
        for px in 0..intr.width {
            rays.push(pixel_ray(pose, intr, px as f64, py as f64, near, far));
        }
    }
    rays
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub rgb: Image,
    pub depth: Vec<f64>,
    pub acc: Vec<f64>,
}

/// Range sidecar written next to the 16-bit depth and opacity maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapRanges {
    pub depth: Normalization,
    pub acc: Normalization,
}

impl RenderOutput {
    /// Writes `{stem}.png`, `{stem}_depth.png`, `{stem}_acc.png` and `{stem}_maps.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), Error> {
        let (w, h) = (self.rgb.width(), self.rgb.height());
        self.rgb.save_png(&dir.join(format!("{stem}.png")))?;
        let ranges = MapRanges {
            depth: save_gray16(&self.depth, w, h, &dir.join(format!("{stem}_depth.png")))?,
            acc: save_gray16(&self.acc, w, h, &dir.join(format!("{stem}_acc.png")))?,
        };
        let path = dir.join(format!("{stem}_maps.json"));
        let text = serde_json::to_string_pretty(&ranges).expect("ranges serialise");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn render_image(
    field: &dyn RadianceField,
    pose: &CameraPose,
    intr: &Intrinsics,
    cfg: &RenderConfig,
) -> Result<RenderOutput, Error> {
    let rays = image_rays(pose, intr, cfg.near, cfg.far);
    let batch = render_rays(field, &rays, cfg)?;
    let data: Vec<f64> = batch.rgb.iter().flatten().copied().collect();
    Ok(RenderOutput {
        rgb: Image::new(intr.width, intr.height, data)?,
        depth: batch.depth,
        acc: batch.acc,
    })
}
