//! RGB float images and PNG encoding.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::Error;

/// Row-major RGB image with `f64` channels, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, Error> {
        if data.len() != width * height * 3 {
            return Err(Error::Invalid(format!(
                "image data length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rounds every channel to the nearest 8-bit level, as written by [`Image::save_png`].
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(to_u8(v)) / 255.0).collect(),
        }
    }

    /// 8-bit RGB PNG: clamp to `[0, 1]`, scale by 255, round half up.
    pub fn save_png(&self, path: &Path) -> Result<(), Error> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, bytes)
                .ok_or_else(|| Error::Invalid("image buffer size".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image(path.display().to_string(), e.to_string()))
    }

    /// Decodes a PNG; an alpha channel is composited over `background`.
    pub fn load_png(path: &Path, background: [f64; 3]) -> Result<Image, Error> {
        let decoded = image::open(path).map_err(|e| Error::Image(path.display().to_string(), e.to_string()))?;
        let has_alpha = decoded.color().has_alpha();
        let (w, h) = (decoded.width(), decoded.height());
        // 8-bit sources divide by 255 exactly so a save/load round trip is lossless
        let pixels: Vec<[f64; 4]> = if decoded.color().bytes_per_pixel() / decoded.color().channel_count() == 1 {
            let rgba = decoded.to_rgba8();
            rgba.pixels().map(|p| p.0.map(|v| f64::from(v) / 255.0)).collect()
        } else {
            let rgba = decoded.to_rgba16();
            rgba.pixels().map(|p| p.0.map(|v| f64::from(v) / 65535.0)).collect()
        };
        let mut data = Vec::with_capacity(w as usize * h as usize * 3);
        for px in pixels {
            let alpha = if has_alpha { px[3] } else { 1.0 };
            for (c, bg) in background.iter().enumerate() {
                data.push((px[c] * alpha + bg * (1.0 - alpha)).clamp(0.0, 1.0));
            }
        }
        Image::new(w as usize, h as usize, data)
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Min-max range used to normalise a scalar map into 16-bit grayscale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

/// Writes a scalar map as 16-bit grayscale after min-max normalisation and
/// returns the range so callers can record it next to the image.
pub fn save_gray16(values: &[f64], width: usize, height: usize, path: &Path) -> Result<Normalization, Error> {
    if values.len() != width * height {
        return Err(Error::Invalid("scalar map size".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let px: Vec<u16> = values
        .iter()
        .map(|&v| {
            let n = if span > 0.0 { (v - min) / span } else { 0.0 };
            (n.clamp(0.0, 1.0) * 65535.0 + 0.5).floor() as u16
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(width as u32, height as u32, px)
        .ok_or_else(|| Error::Invalid("gray buffer size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(path.display().to_string(), e.to_string()))?;
    Ok(Normalization { min, max })
}
