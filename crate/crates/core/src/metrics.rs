//! PSNR, SSIM and their combined score.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::img::Image;
use crate::Error;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn same_size(a: &Image, b: &Image) -> Result<(), Error> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64, Error> {
    same_size(a, b)?;
    let n = a.as_slice().len() as f64;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `−10·log₁₀(MSE)`; identical images give `+∞`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, Error> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-region separable filter of a `w×h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), stride 1, valid
/// windows only, computed per channel and averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, Error> {
    same_size(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}")));
    }
    if a == b {
        return Ok(1.0);
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        let pa: Vec<f64> = a.as_slice().iter().skip(c).step_by(3).copied().collect();
        let pb: Vec<f64> = b.as_slice().iter().skip(c).step_by(3).copied().collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<f64>>();
        let mu_a = filter_valid(&pa, w, h, &taps);
        let mu_b = filter_valid(&pb, w, h, &taps);
        let aa = filter_valid(&prod(&pa, &pa), w, h, &taps);
        let bb = filter_valid(&prod(&pb, &pb), w, h, &taps);
        let ab = filter_valid(&prod(&pa, &pb), w, h, &taps);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Geometric mean of `10^{−PSNR/10}` and `√(1 − SSIM)`, without an LPIPS
/// factor. Lower is better; a perfect image scores 0.
pub fn average_score(psnr: f64, ssim: f64) -> f64 {
    let mse = 10f64.powf(-psnr / 10.0);
    (mse * (1.0 - ssim).max(0.0).sqrt()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// dB; `+∞` is written as the string `"inf"`.
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr: f64,
    pub ssim: f64,
    /// Combined score of PSNR and SSIM only (no LPIPS).
    pub average_no_lpips: f64,
}

impl MetricReport {
    pub fn compute(pred: &Image, target: &Image) -> Result<Self, Error> {
        let p = psnr(pred, target)?;
        let s = ssim(pred, target)?;
        Ok(Self {
            psnr: p,
            ssim: s,
            average_no_lpips: average_score(p, s),
        })
    }

    /// Component-wise arithmetic mean.
    pub fn mean(reports: &[MetricReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some(Self {
            psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
            average_no_lpips: reports.iter().map(|r| r.average_no_lpips).sum::<f64>() / n,
        })
    }
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if *v == f64::INFINITY {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid psnr {t:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::naive_ssim;
    use proptest::prelude::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    #[test]
    fn psnr_values() {
        let a = random(4, 4, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let half = Image::filled(3, 2, [0.5; 3]);
        let black = Image::filled(3, 2, [0.0; 3]);
        assert!((psnr(&half, &black).unwrap() - 6.020599913279624).abs() < 1e-12);
        let tenth = Image::filled(3, 2, [0.1; 3]);
        assert!((psnr(&tenth, &black).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &black).is_err());
    }

    #[test]
    fn ssim_identity_and_size_checks() {
        let a = random(16, 12, 2);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert!(ssim(&random(10, 20, 1), &random(10, 20, 2)).is_err());
    }

    #[test]
    fn inverted_checkerboard_scores_low() {
        let a = Image::from_fn(24, 24, |x, y| if (x / 3 + y / 3) % 2 == 0 { [0.95; 3] } else { [0.05; 3] });
        let inv = Image::from_fn(24, 24, |x, y| a.get(x, y).map(|v| 1.0 - v));
        let s = ssim(&a, &inv).unwrap();
        assert!(s < 0.5, "{s}");
        // regression value
        assert!((s - -0.9875).abs() < 1e-3, "{s}");
    }

    #[test]
    fn ssim_matches_window_loop() {
        for seed in 0..5 {
            let (a, b) = (random(32, 32, seed), random(32, 32, seed + 100));
            assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-10);
        }
    }

    #[test]
    fn average_score_values() {
        assert!((average_score(20.0, 0.75) - 0.07071067811865475).abs() < 1e-12);
        assert_eq!(average_score(f64::INFINITY, 1.0), 0.0);
    }

    #[test]
    fn report_json_round_trip() {
        let r = MetricReport {
            psnr: f64::INFINITY,
            ssim: 1.0,
            average_no_lpips: 0.0,
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<MetricReport>(&text).unwrap(), r);
        let finite = MetricReport::compute(&random(12, 12, 3), &random(12, 12, 4)).unwrap();
        let back: MetricReport = serde_json::from_str(&serde_json::to_string(&finite).unwrap()).unwrap();
        assert_eq!(back, finite);
    }

    proptest! {
        #[test]
        fn symmetric(seed in 0u64..1000) {
            let (a, b) = (random(12, 13, seed), random(12, 13, seed + 7));
            prop_assert!(psnr(&a, &b).unwrap() == psnr(&b, &a).unwrap());
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(ssim(&a, &b).unwrap() <= 1.0);
        }

        #[test]
        fn average_score_decreases(p in 1.0f64..60.0, s in -0.99f64..0.99, dp in 0.01f64..5.0, ds in 0.001f64..0.009) {
            prop_assert!(average_score(p + dp, s) < average_score(p, s));
            prop_assert!(average_score(p, s + ds) < average_score(p, s));
        }
    }
}
