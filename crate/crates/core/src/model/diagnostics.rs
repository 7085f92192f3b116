//! Per-layer gradient amplitudes at initialisation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InitScheme, Mlp, MlpConfig, MlpVariant, ModelParams};
use crate::autodiff::{AutodiffError, Matrix, NodeId, Tape};
use crate::encoding::EncodingConfig;
use crate::rng::{stream, Stream};

/// Gradient of one weight matrix, summarised.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGradient {
    /// 1-based layer index.
    pub layer: usize,
    /// Sum of absolute entries.
    pub l1: f64,
    /// Mean absolute entry.
    pub mean_abs: f64,
}

/// Runs one backward pass of `loss` and summarises the gradients of the
/// weights at `weight_indices`.
pub fn gradient_layer_norms(
    params: &ModelParams,
    weight_indices: &[usize],
    loss: impl FnOnce(&mut Tape, &[NodeId]) -> Result<NodeId, AutodiffError>,
) -> Result<Vec<LayerGradient>, AutodiffError> {
    let mut tape = Tape::new();
    let nodes = params.register(&mut tape, true)?;
    let l = loss(&mut tape, &nodes)?;
    tape.backward(l)?;
    Ok(weight_indices
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let g = tape.grad(nodes[w]).expect("registered as parameter");
            LayerGradient {
                layer: i + 1,
                l1: g.l1_norm(),
                mean_abs: g.mean_abs(),
            }
        })
        .collect())
}

/// Adjacent ratios `‖∂L/∂W_i‖₁ / ‖∂L/∂W_{i−1}‖₁`.
pub fn layer_ratios(norms: &[LayerGradient]) -> Vec<f64> {
    norms.windows(2).map(|w| w[1].l1 / w[0].l1).collect()
}

/// Setup of the initialisation experiment: a bare MLP on encoded random
/// points, regressed onto random colours with the reconstruction loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnoseConfig {
    pub depth: usize,
    pub width: usize,
    pub batch: usize,
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub init: InitScheme,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            depth: 8,
            width: 64,
            batch: 128,
            encoding: EncodingConfig::new(10),
            init: InitScheme::FanOut,
        }
    }
}

impl DiagnoseConfig {
    pub fn mlp(&self, variant: MlpVariant) -> Mlp {
        Mlp::new(
            MlpConfig {
                depth: self.depth,
                width: self.width,
                input_dim: self.encoding.output_dim(3),
                output_dim: 3,
                activation: Default::default(),
                variant,
                skip_layer: None,
            },
            0,
        )
    }

    /// Per-layer weight gradients of `variant` for one seed. The batch and
    /// targets depend only on the seed, so both variants see the same data.
    pub fn run(&self, variant: MlpVariant, seed: u64) -> Result<Vec<LayerGradient>, AutodiffError> {
        let mut data_rng = stream(seed, Stream::Diagnose);
        let x = Matrix::from_fn(self.batch, 3, |_, _| data_rng.gen_range(-1.5..1.5));
        let target = Matrix::from_fn(self.batch, 3, |_, _| data_rng.gen_range(0.0..1.0));
        let enc = self.encoding.encode_rows(&x);

        let mlp = self.mlp(variant);
        let mut params = ModelParams::new();
        mlp.init("mlp", self.init, &mut stream(seed, Stream::Init), &mut params);
        let indices: Vec<usize> = (0..self.depth).map(|i| mlp.weight_index(i)).collect();
        gradient_layer_norms(&params, &indices, |tape, nodes| {
            let input = tape.constant(enc)?;
            let out = mlp.forward(tape, nodes, input)?;
            // mean over rays of the squared colour error summed over channels
            let mse = tape.mse(out, target)?;
            tape.scale(mse, 3.0)
        })
    }
}
