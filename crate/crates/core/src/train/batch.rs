use rand::Rng;

use crate::data::Dataset;

/// A pixel of one view; coordinates address pixel corners as in
/// [`crate::render::pixel_ray`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelSample {
    pub view: usize,
    pub px: f64,
    pub py: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PixelBatch {
    pub inside: Vec<PixelSample>,
    /// Image colour of each inside pixel.
    pub targets: Vec<[f64; 3]>,
    /// Pixels of the band `[−W/2, 3W/2) × [−H/2, 3H/2)` outside the image.
    pub outside: Vec<PixelSample>,
}

/// `⌈out_fraction·batch_size⌉` outside pixels and the rest inside, all
/// uniform over views.
pub fn sample_ray_batch(dataset: &Dataset, batch_size: usize, out_fraction: f64, rng: &mut impl Rng) -> PixelBatch {
    let n_out = ((out_fraction * batch_size as f64).ceil() as usize).min(batch_size);
    draw_pixels(dataset, batch_size - n_out, n_out, rng)
}

pub(crate) fn draw_pixels(dataset: &Dataset, n_in: usize, n_out: usize, rng: &mut impl Rng) -> PixelBatch {
    let mut batch = PixelBatch::default();
    if dataset.is_empty() {
        return batch;
    }
    let (w, h) = (dataset.images[0].width() as i64, dataset.images[0].height() as i64);
    for _ in 0..n_in {
        let view = rng.gen_range(0..dataset.len());
        let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
        batch.inside.push(PixelSample {
            view,
            px: x as f64,
            py: y as f64,
        });
        batch.targets.push(dataset.images[view].get(x as usize, y as usize));
    }
    while batch.outside.len() < n_out {
        let view = rng.gen_range(0..dataset.len());
        let x = rng.gen_range(-w / 2..w + w / 2);
        let y = rng.gen_range(-h / 2..h + h / 2);
        if (0..w).contains(&x) && (0..h).contains(&y) {
            continue;
        }
        batch.outside.push(PixelSample {
            view,
            px: x as f64,
            py: y as f64,
        });
    }
    batch
}
