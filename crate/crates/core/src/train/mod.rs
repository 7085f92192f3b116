//! Optimisation: losses, sampling schedule, Adam and the training loop.

mod adam;
mod batch;

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use batch::{sample_ray_batch, PixelBatch, PixelSample};

use crate::autodiff::{AutodiffError, Matrix, NodeId, Tape};
use crate::data::Dataset;
use crate::metrics::psnr;
use crate::model::{activation_heads, Model};
use crate::render::{
    pixel_ray, render_image, sample_points, segment_lengths, stratified_samples, CameraPose, CompositeOp, Intrinsics,
    Ray, RenderConfig,
};
use crate::rng::{stream, Stream};
use crate::Error;

/// Sample-count schedule `N_t = min(N_max, ⌊u/η⌋ + N_start)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub n_max: usize,
    pub n_start: usize,
    pub eta: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            n_max: 256,
            n_start: 16,
            eta: 100,
        }
    }
}

pub fn anneal_sample_count(u: usize, cfg: &AnnealConfig) -> usize {
    (u / cfg.eta).saturating_add(cfg.n_start).min(cfg.n_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Rays per iteration, inside and outside the images together.
    pub batch_size: usize,
    pub lr_start: f64,
    /// Learning rate reached at the last iteration (exponential decay).
    pub lr_end: f64,
    /// Weight of the background term; zero disables outside rays entirely.
    pub lambda_br: f64,
    pub out_fraction: f64,
    pub anneal: AnnealConfig,
    pub seed: u64,
    /// Telemetry and checkpoint cadence in iterations; zero means only the
    /// first and last iteration.
    pub eval_every: usize,
    /// Samples per ray when rendering held-out views for telemetry.
    pub eval_samples: usize,
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
    pub jitter: bool,
    /// Sample points per parallel work item.
    pub chunk_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            batch_size: 1024,
            lr_start: 5e-4,
            lr_end: 5e-5,
            lambda_br: 0.1,
            out_fraction: 0.25,
            anneal: AnnealConfig::default(),
            seed: 0,
            eval_every: 1000,
            eval_samples: 64,
            near: 0.5,
            far: 6.0,
            background: [1.0; 3],
            jitter: true,
            chunk_points: 16_384,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.batch_size == 0 {
            p.push("batch_size must be at least 1".to_string());
        }
        if self.anneal.n_start == 0 {
            p.push("anneal.n_start must be at least 1".to_string());
        }
        if self.anneal.n_start > self.anneal.n_max {
            p.push(format!("anneal.n_start {} exceeds anneal.n_max {}", self.anneal.n_start, self.anneal.n_max));
        }
        if self.anneal.eta == 0 {
            p.push("anneal.eta must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.out_fraction) {
            p.push(format!("out_fraction {} outside [0, 1)", self.out_fraction));
        }
        if !(self.lambda_br >= 0.0 && self.lambda_br.is_finite()) {
            p.push(format!("lambda_br {} must be finite and non-negative", self.lambda_br));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.lr_start.is_finite() && self.lr_end.is_finite()) {
            p.push("learning rates must be positive".to_string());
        }
        if !(self.near >= 0.0 && self.near < self.far && self.far.is_finite()) {
            p.push(format!("need 0 <= near < far, got {} and {}", self.near, self.far));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            p.push("background must lie in [0, 1]".to_string());
        }
        if self.eval_samples == 0 {
            p.push("eval_samples must be at least 1".to_string());
        }
        if self.chunk_points == 0 {
            p.push("chunk_points must be at least 1".to_string());
        }
        p
    }

    pub fn validate(&self) -> Result<(), Error> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    /// `lr_start·(lr_end/lr_start)^{u/iterations}`.
    pub fn learning_rate(&self, u: usize) -> f64 {
        let frac = if self.iterations == 0 { 0.0 } else { u as f64 / self.iterations as f64 };
        self.lr_start * (self.lr_end / self.lr_start).powf(frac)
    }

    /// Outside rays per batch; zero when the background term is off.
    pub fn outside_rays(&self) -> usize {
        if self.lambda_br == 0.0 {
            0
        } else {
            (self.out_fraction * self.batch_size as f64).ceil() as usize
        }
    }

    fn is_eval_iteration(&self, u: usize) -> bool {
        u == 0 || u + 1 == self.iterations || (self.eval_every > 0 && u % self.eval_every == 0)
    }
}

/// `(1/|R|)·Σ‖pred − target‖²` with the three channels summed inside the norm.
pub fn reconstruction_loss(tape: &mut Tape, pred: NodeId, target: &Matrix) -> Result<NodeId, AutodiffError> {
    scaled_squared_error(tape, pred, target, 1.0 / target.rows().max(1) as f64)
}

/// The reconstruction loss against a constant background; zero for no rays.
pub fn background_reg_loss(tape: &mut Tape, pred: NodeId, background: [f64; 3]) -> Result<NodeId, AutodiffError> {
    let n = tape.value(pred).rows();
    let target = Matrix::from_fn(n, 3, |_, c| background[c]);
    reconstruction_loss(tape, pred, &target)
}

/// `scale·Σ‖pred − target‖²`.
fn scaled_squared_error(tape: &mut Tape, pred: NodeId, target: &Matrix, scale: f64) -> Result<NodeId, AutodiffError> {
    let mse = tape.mse(pred, target.clone())?;
    tape.scale(mse, scale * target.len() as f64)
}

/// Rays of one parallel work item and their share of the loss.
struct Chunk {
    rays: Vec<Ray>,
    ts: Vec<Vec<f64>>,
    target: Matrix,
    /// Multiplies `Σ‖pred − target‖²` over this chunk.
    scale: f64,
}

/// Pixel colours of `rays` rendered through the model on `tape`.
pub fn render_on_tape(
    tape: &mut Tape,
    nodes: &[NodeId],
    model: &Model,
    rays: &[Ray],
    ts: &[Vec<f64>],
    background: [f64; 3],
) -> Result<NodeId, Error> {
    let n = ts.first().map_or(0, Vec::len);
    if ts.iter().any(|t| t.len() != n) {
        return Err(Error::Invalid("every ray needs the same sample count".into()));
    }
    let (x, d) = sample_points(rays, ts);
    let (raw_sigma, logits) = model.forward(tape, nodes, &x, &d)?;
    let (sigma, rgb) = activation_heads(tape, raw_sigma, logits)?;
    let delta: Vec<f64> = rays.iter().zip(ts).flat_map(|(r, t)| segment_lengths(t, r.t_far)).collect();
    Ok(CompositeOp::new(n, delta, background)?.apply(tape, sigma, rgb)?)
}

fn chunk_gradients(model: &Model, chunk: &Chunk, background: [f64; 3]) -> Result<(f64, Vec<Matrix>), Error> {
    let mut tape = Tape::new();
    let nodes = model.params.register(&mut tape, true)?;
    let pred = render_on_tape(&mut tape, &nodes, model, &chunk.rays, &chunk.ts, background)?;
    let loss = scaled_squared_error(&mut tape, pred, &chunk.target, chunk.scale)?;
    tape.backward(loss)?;
    let value = tape.scalar(loss);
    let grads = nodes.iter().map(|&n| tape.take_grad(n).expect("parameter leaf")).collect();
    Ok((value, grads))
}

/// One telemetry record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub iteration: usize,
    pub n_samples: usize,
    pub learning_rate: f64,
    /// Total loss of this iteration's batch, before the update.
    pub train_loss: f64,
    /// Mean PSNR over the held-out views, when any were supplied.
    pub test_psnr: Option<f64>,
    /// Mean absolute gradient of each hidden weight matrix, shallowest first.
    pub grad_norms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Telemetry {
    pub rows: Vec<TelemetryRow>,
}

impl Telemetry {
    pub fn to_csv(&self) -> String {
        let layers = self.rows.first().map_or(0, |r| r.grad_norms.len());
        let mut out = String::from("iteration,n_samples,learning_rate,train_loss,test_psnr");
        for i in 1..=layers {
            let _ = write!(out, ",grad_{i}");
        }
        out.push('\n');
        for r in &self.rows {
            let psnr = r.test_psnr.map_or(String::new(), |p| format!("{p:?}"));
            let _ = write!(out, "{},{},{:?},{:?},{}", r.iteration, r.n_samples, r.learning_rate, r.train_loss, psnr);
            for g in &r.grad_norms {
                let _ = write!(out, ",{g:?}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub telemetry: Telemetry,
}

/// Rays through the given pixels.
pub fn batch_rays(dataset: &Dataset, pixels: &[PixelSample], near: f64, far: f64) -> Result<Vec<Ray>, Error> {
    let intr = dataset.intrinsics()?;
    Ok(pixels
        .iter()
        .map(|p| pixel_ray(&dataset.poses[p.view], &intr, p.px, p.py, near, far))
        .collect())
}

/// Mean PSNR of midpoint-sampled renders of `views` against their images.
pub fn evaluate_psnr(model: &Model, views: &Dataset, cfg: &TrainConfig) -> Result<f64, Error> {
    let intr: Intrinsics = views.intrinsics()?;
    let rcfg = RenderConfig {
        near: cfg.near,
        far: cfg.far,
        samples: cfg.eval_samples,
        jitter: false,
        background: cfg.background,
        chunk: (cfg.chunk_points / cfg.eval_samples).max(1),
        seed: cfg.seed,
    };
    let mut total = 0.0;
    for (img, pose) in views.images.iter().zip(&views.poses) {
        let out = render_image(model, pose, &intr, &rcfg)?;
        total += psnr(&out.rgb, img)?;
    }
    Ok(total / views.len() as f64)
}

/// Trains from `model` without checkpoints or callbacks.
pub fn train(model: Model, dataset: &Dataset, test: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainOutcome, Error> {
    train_with(model, dataset, test, cfg, |_, _| Ok(()))
}

/// The training loop. `observe` runs after each telemetry record with the
/// parameters as they were when the row's batch was drawn.
pub fn train_with(
    mut model: Model,
    dataset: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&Model, &TelemetryRow) -> Result<(), Error>,
) -> Result<TrainOutcome, Error> {
    cfg.validate()?;
    model.config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let intr = dataset.intrinsics()?;
    let hidden = model.config.hidden_weight_indices();
    let mut state = AdamState::new(&model.params);
    let mut sampling = stream(cfg.seed, Stream::Sampling);
    let mut jitter = stream(cfg.seed, Stream::Jitter);
    let mut telemetry = Telemetry::default();
    let n_out = cfg.outside_rays().min(cfg.batch_size);
    let n_in = cfg.batch_size - n_out;

    for u in 0..cfg.iterations {
        let n_t = anneal_sample_count(u, &cfg.anneal);
        let batch = batch::draw_pixels(dataset, n_in, n_out, &mut sampling);
        let chunks = build_chunks(dataset, &intr, &batch, n_t, cfg, &mut jitter)?;

        let parts: Vec<Result<(f64, Vec<Matrix>), Error>> =
            chunks.par_iter().map(|c| chunk_gradients(&model, c, cfg.background)).collect();
        let mut loss = 0.0;
        let mut grads: Option<Vec<Matrix>> = None;
        for part in parts {
            let (l, g) = match part {
                Ok(v) => v,
                // a non-finite intermediate means the loss itself is not finite
                Err(Error::Autodiff(AutodiffError::NonFinite { .. })) => {
                    return Err(Error::NonFiniteLoss {
                        iteration: u,
                        loss: f64::NAN,
                        params: Box::new(model.params.clone()),
                    })
                }
                Err(e) => return Err(e),
            };
            loss += l;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        a.add_assign(b);
                    }
                }
            }
        }
        let grads = grads.unwrap_or_else(|| model.params.values().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect());
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: u,
                loss,
                params: Box::new(model.params.clone()),
            });
        }

        let lr = cfg.learning_rate(u);
        if cfg.is_eval_iteration(u) {
            let row = TelemetryRow {
                iteration: u,
                n_samples: n_t,
                learning_rate: lr,
                train_loss: loss,
                test_psnr: test.map(|t| evaluate_psnr(&model, t, cfg)).transpose()?,
                grad_norms: hidden.iter().map(|&i| grads[i].mean_abs()).collect(),
            };
            observe(&model, &row)?;
            telemetry.rows.push(row);
        }
        adam_step(&mut model.params, &grads, &mut state, lr)?;
    }
    Ok(TrainOutcome { model, telemetry })
}

fn build_chunks(
    dataset: &Dataset,
    intr: &Intrinsics,
    batch: &PixelBatch,
    n: usize,
    cfg: &TrainConfig,
    jitter: &mut impl Rng,
) -> Result<Vec<Chunk>, Error> {
    let rays_per_chunk = (cfg.chunk_points / n).max(1);
    let mut chunks = Vec::new();
    let groups = [
        (&batch.inside, 1.0, false),
        (&batch.outside, cfg.lambda_br, true),
    ];
    for (pixels, weight, outside) in groups {
        if pixels.is_empty() {
            continue;
        }
        let scale = weight / pixels.len() as f64;
        for part in pixels.chunks(rays_per_chunk) {
            let rays: Vec<Ray> = part
                .iter()
                .map(|p| pixel_ray(&dataset.poses[p.view], intr, p.px, p.py, cfg.near, cfg.far))
                .collect();
            let ts = rays
                .iter()
                .map(|r| stratified_samples(r.t_near, r.t_far, n, cfg.jitter.then_some(&mut *jitter)))
                .collect();
            let target = if outside {
                Matrix::from_fn(part.len(), 3, |_, c| cfg.background[c])
            } else {
                let mut t = Matrix::zeros(part.len(), 3);
                for (i, p) in part.iter().enumerate() {
                    let rgb = dataset.images[p.view].get(p.px as usize, p.py as usize);
                    for c in 0..3 {
                        t.set(i, c, rgb[c]);
                    }
                }
                t
            };
            chunks.push(Chunk { rays, ts, target, scale });
        }
    }
    Ok(chunks)
}

/// Renders rays through the extrapolated band of `pose` and reports the mean
/// absolute deviation from `background`, a measure of floaters outside the
/// training images.
pub fn background_artifact(
    model: &Model,
    pose: &CameraPose,
    intr: &Intrinsics,
    cfg: &RenderConfig,
    stride: usize,
) -> Result<f64, Error> {
    let (w, h) = (intr.width as i64, intr.height as i64);
    let mut rays = Vec::new();
    let step = stride.max(1);
    for py in (-h / 2..h + h / 2).step_by(step) {
        for px in (-w / 2..w + w / 2).step_by(step) {
            if (0..w).contains(&px) && (0..h).contains(&py) {
                continue;
            }
            rays.push(pixel_ray(pose, intr, px as f64, py as f64, cfg.near, cfg.far));
        }
    }
    let out = crate::render::render_rays(model, &rays, cfg)?;
    let total: f64 = out
        .rgb
        .iter()
        .map(|c| (0..3).map(|k| (c[k] - cfg.background[k]).abs()).sum::<f64>())
        .sum();
    Ok(total / (3 * out.rgb.len()).max(1) as f64)
}

#[cfg(test)]
mod tests;
