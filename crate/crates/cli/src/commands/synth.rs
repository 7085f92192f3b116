use minerf_core::data::{make_synthetic_dataset, save_blender, SyntheticSpec};
use minerf_core::AnalyticScene;
use serde::{Deserialize, Serialize};

use super::{create_dir, timed};
use crate::args::SynthArgs;
use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub scene: String,
    pub train: SyntheticSpec,
    pub test_views: usize,
    /// Seed of the test split's camera spiral.
    pub test_seed: u64,
}

impl SynthSettings {
    fn from_args(a: &SynthArgs) -> Self {
        let mut spec = SyntheticSpec {
            n_views: a.views,
            width: a.width,
            height: a.height,
            seed: a.seed,
            ..SyntheticSpec::default()
        };
        if let Some(r) = a.radius {
            spec.radius = r;
        }
        if let Some(c) = a.camera_angle_x {
            spec.camera_angle_x = c;
        }
        if let Some(n) = a.dense_samples {
            spec.n_dense = n;
        }
        Self {
            scene: a.scene.clone(),
            train: spec,
            test_views: a.test_views,
            test_seed: a.seed.wrapping_add(1),
        }
    }
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let s = SynthSettings::from_args(a);
    let scene = AnalyticScene::preset(&s.scene)?;
    if s.train.n_views == 0 || s.train.width == 0 || s.train.height == 0 {
        return Err(CliError::Config("views, width and height must be positive".into()));
    }
    create_dir(&a.out)?;
    let mut manifest = RunManifest::new("synth", &s, s.train.seed);
    let mut splits = vec![("train", s.train)];
    if s.test_views > 0 {
        splits.push((
            "test",
            SyntheticSpec {
                n_views: s.test_views,
                seed: s.test_seed,
                ..s.train
            },
        ));
    }
    for (split, spec) in splits {
        let ds = timed(&mut manifest.timings, split, || make_synthetic_dataset(&scene, &spec, split))?;
        save_blender(&ds, &a.out)?;
        manifest.artifacts.push(format!("transforms_{split}.json"));
        manifest.artifacts.extend((0..ds.len()).map(|i| format!("{split}/r_{i}.png")));
        println!("{split}: {} views of {}x{}", ds.len(), spec.width, spec.height);
    }
    manifest.write(&a.out)?;
    Ok(())
}
