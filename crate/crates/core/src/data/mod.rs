//! Datasets: the Blender `transforms_{split}.json` layout and procedural
//! scenes with a brute-force ground truth.

mod scene;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use scene::{
    golden_spiral_poses, make_synthetic_dataset, render_oracle, scene_field, AnalyticScene, Primitive, SyntheticSpec,
    DEFAULT_DENSE_SAMPLES, MIN_DENSE_SAMPLES, SCENE_EXTENT,
};

use crate::img::Image;
use crate::render::{CameraPose, Intrinsics};
use crate::Error;

/// Posed images of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub poses: Vec<CameraPose>,
    /// Horizontal field of view in radians; kept verbatim so a save/load
    /// round trip reproduces the focal length bit for bit.
    pub camera_angle_x: f64,
    pub split: String,
}

impl Dataset {
    pub fn new(images: Vec<Image>, poses: Vec<CameraPose>, camera_angle_x: f64, split: &str) -> Result<Self, Error> {
        if images.len() != poses.len() {
            return Err(Error::Invalid(format!("{} images but {} poses", images.len(), poses.len())));
        }
        if let Some(first) = images.first() {
            if images.iter().any(|i| i.width() != first.width() || i.height() != first.height()) {
                return Err(Error::Invalid("dataset images have mixed sizes".into()));
            }
        }
        let ds = Self {
            images,
            poses,
            camera_angle_x,
            split: split.to_string(),
        };
        ds.intrinsics()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn intrinsics(&self) -> Result<Intrinsics, Error> {
        let (w, h) = self.images.first().map_or((1, 1), |i| (i.width(), i.height()));
        Intrinsics::from_camera_angle(w, h, self.camera_angle_x)
    }
}

/// Views at `indices`, in that order.
pub fn select_input_views(dataset: &Dataset, indices: &[usize]) -> Result<Dataset, Error> {
    if indices.is_empty() {
        return Err(Error::Config("view selection is empty".into()));
    }
    let mut seen = HashSet::new();
    for &i in indices {
        if i >= dataset.len() {
            return Err(Error::Config(format!("view {i} out of range for {} views", dataset.len())));
        }
        if !seen.insert(i) {
            return Err(Error::Config(format!("view {i} selected twice")));
        }
    }
    Ok(Dataset {
        images: indices.iter().map(|&i| dataset.images[i].clone()).collect(),
        poses: indices.iter().map(|&i| dataset.poses[i]).collect(),
        camera_angle_x: dataset.camera_angle_x,
        split: dataset.split.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct TransformsFile {
    camera_angle_x: f64,
    frames: Vec<Frame>,
}

#[derive(Serialize, Deserialize)]
struct Frame {
    file_path: String,
    transform_matrix: Vec<Vec<f64>>,
}

pub fn transforms_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("transforms_{split}.json"))
}

/// Reads `transforms_{split}.json` and its frames. Transparent pixels are
/// composited over `background`.
pub fn load_blender(dir: &Path, split: &str, background: [f64; 3]) -> Result<Dataset, Error> {
    let path = transforms_path(dir, split);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: TransformsFile =
        serde_json::from_str(&text).map_err(|e| Error::Json(path.display().to_string(), e.to_string()))?;
    let mut images = Vec::with_capacity(file.frames.len());
    let mut poses = Vec::with_capacity(file.frames.len());
    for (i, frame) in file.frames.iter().enumerate() {
        let pose = CameraPose::from_matrix(&frame.transform_matrix)
            .map_err(|e| Error::Invalid(format!("{}: frame {i}: {e}", path.display())))?;
        let mut img_path = dir.join(frame.file_path.trim_start_matches("./"));
        if img_path.extension().is_none() {
            img_path.set_extension("png");
        }
        images.push(Image::load_png(&img_path, background)?);
        poses.push(pose);
    }
    Dataset::new(images, poses, file.camera_angle_x, split)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// Writes `dir/{split}/r_{i}.png` and `dir/transforms_{split}.json`.
pub fn save_blender(dataset: &Dataset, dir: &Path) -> Result<(), Error> {
    let img_dir = dir.join(&dataset.split);
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    for (i, img) in dataset.images.iter().enumerate() {
        img.save_png(&img_dir.join(format!("r_{i}.png")))?;
    }
    write_transforms(dir, &dataset.split, dataset.camera_angle_x, &dataset.poses)
}

/// Writes `dir/transforms_{split}.json` with frame `i` at `./{split}/r_{i}`;
/// the images themselves are the caller's business.
pub fn write_transforms(dir: &Path, split: &str, camera_angle_x: f64, poses: &[CameraPose]) -> Result<(), Error> {
    let frames = poses
        .iter()
        .enumerate()
        .map(|(i, pose)| Frame {
            file_path: format!("./{split}/r_{i}"),
            transform_matrix: pose.to_matrix(),
        })
        .collect();
    let file = TransformsFile { camera_angle_x, frames };
    let path = transforms_path(dir, split);
    let text = serde_json::to_string_pretty(&file).expect("transforms serialise");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
