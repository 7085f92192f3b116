use std::path::PathBuf;

use minerf_core::data::{load_blender, write_transforms};
use minerf_core::render::render_image;
use minerf_core::{CameraPose, Error, Intrinsics, RenderConfig};
use serde::{Deserialize, Serialize};

use super::{create_dir, load_model, render_config, timed};
use crate::args::RenderArgs;
use crate::manifest::{hash_dir, hash_file, RunManifest};
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RenderSettings {
    checkpoint: PathBuf,
    data: Option<PathBuf>,
    split: String,
    orbit: Option<Orbit>,
    width: usize,
    height: usize,
    camera_angle_x: f64,
    render: RenderConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Orbit {
    frames: usize,
    radius: f64,
    elevation_deg: f64,
}

/// `n` cameras evenly spaced in azimuth at a fixed elevation, looking at
/// the origin with `+z` up.
pub fn orbit_poses(n: usize, radius: f64, elevation_deg: f64) -> Result<Vec<CameraPose>, Error> {
    let e = elevation_deg.to_radians();
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            let eye = [radius * e.cos() * a.cos(), radius * e.cos() * a.sin(), radius * e.sin()];
            CameraPose::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0])
        })
        .collect()
}

/// Writes `{split}/r_{i}.png` plus depth and opacity maps per pose, and a
/// `transforms_{split}.json`, so the output loads back as a dataset.
pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    let rcfg = render_config(&a.sampling)?;
    let model = load_model(&a.checkpoint)?;
    let (split, poses, intr, settings) = match (&a.data, a.orbit) {
        (Some(data), _) => {
            let ds = load_blender(data, &a.split, rcfg.background)?;
            let intr = ds.intrinsics()?;
            let settings = RenderSettings {
                checkpoint: a.checkpoint.clone(),
                data: Some(data.clone()),
                split: a.split.clone(),
                orbit: None,
                width: intr.width,
                height: intr.height,
                camera_angle_x: ds.camera_angle_x,
                render: rcfg,
            };
            (a.split.clone(), ds.poses, intr, settings)
        }
        (None, Some(frames)) => {
            if frames == 0 {
                return Err(CliError::Config("orbit needs at least one frame".into()));
            }
            let intr = Intrinsics::from_camera_angle(a.width, a.height, a.camera_angle_x)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let orbit = Orbit {
                frames,
                radius: a.radius,
                elevation_deg: a.elevation,
            };
            let settings = RenderSettings {
                checkpoint: a.checkpoint.clone(),
                data: None,
                split: "orbit".into(),
                orbit: Some(orbit),
                width: a.width,
                height: a.height,
                camera_angle_x: a.camera_angle_x,
                render: rcfg,
            };
            let poses = orbit_poses(frames, a.radius, a.elevation).map_err(|e| CliError::Config(e.to_string()))?;
            ("orbit".to_string(), poses, intr, settings)
        }
        (None, None) => return Err(CliError::Config("give --data or --orbit".into())),
    };

    let mut manifest = RunManifest::new("render", &settings, 0);
    manifest.inputs.insert("checkpoint".into(), hash_file(&a.checkpoint)?);
    if let Some(d) = &settings.data {
        manifest.inputs.insert("data".into(), hash_dir(d)?);
    }
    create_dir(&a.out)?;
    let frame_dir = a.out.join(&split);
    create_dir(&frame_dir)?;
    timed(&mut manifest.timings, "render", || -> Result<(), CliError> {
        for (i, pose) in poses.iter().enumerate() {
            let out = render_image(&model, pose, &intr, &rcfg)?;
            out.save(&frame_dir, &format!("r_{i}"))?;
        }
        Ok(())
    })?;
    write_transforms(&a.out, &split, settings.camera_angle_x, &poses)?;
    manifest.artifacts.push(format!("transforms_{split}.json"));
    for i in 0..poses.len() {
        for suffix in ["", "_depth", "_acc"] {
            manifest.artifacts.push(format!("{split}/r_{i}{suffix}.png"));
        }
        manifest.artifacts.push(format!("{split}/r_{i}_maps.json"));
    }
    manifest.write(&a.out)?;
    println!("rendered {} frames to {}", poses.len(), frame_dir.display());
    Ok(())
}
