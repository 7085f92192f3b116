use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InitScheme, ModelParams};
use crate::autodiff::{AutodiffError, Matrix, NodeId, Tape};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    /// No nonlinearity; used for analysing linear networks.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpVariant {
    /// Plain stack, optionally with one concatenated skip of the input.
    Vanilla,
    /// Every layer after the first also receives the encoded input.
    MultiInput,
}

/// Shape of one MLP trunk.
///
/// Weights are stored input-major (`in × out`) so that a batch of row
/// vectors `X` maps to `X·W + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Number of hidden layers.
    pub depth: usize,
    pub width: usize,
    pub input_dim: usize,
    /// Width of the linear head; zero for a trunk without head.
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    pub variant: MlpVariant,
    /// Vanilla only: the output of this (1-based) layer is concatenated with
    /// the input before entering the next layer.
    #[serde(default)]
    pub skip_layer: Option<usize>,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.depth < 2 {
            return Err(Error::Config(format!("depth must be at least 2, got {}", self.depth)));
        }
        if self.width == 0 {
            return Err(Error::Config("width must be positive".into()));
        }
        if let Some(s) = self.skip_layer {
            if self.variant != MlpVariant::Vanilla {
                return Err(Error::Config("skip_layer only applies to the vanilla variant".into()));
            }
            if s <= 1 || s >= self.depth {
                return Err(Error::Config(format!(
                    "skip_layer {s} must lie strictly between 1 and depth {}",
                    self.depth
                )));
            }
        }
        Ok(())
    }
}

/// An MLP trunk bound to a slice of a [`ModelParams`] table.
///
/// `side_dim` is the width of the per-layer input of the multi-input
/// variant; for a plain multi-input MLP it equals `input_dim`, while the
/// colour branch feeds the encoded direction there instead.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub cfg: MlpConfig,
    pub side_dim: usize,
    pub offset: usize,
}

impl Mlp {
    pub fn new(cfg: MlpConfig, offset: usize) -> Self {
        Self {
            cfg,
            side_dim: cfg.input_dim,
            offset,
        }
    }

    pub fn with_side_input(cfg: MlpConfig, side_dim: usize, offset: usize) -> Self {
        Self { cfg, side_dim, offset }
    }

    /// Input width of each hidden layer (0-based).
    pub fn layer_input_dims(&self) -> Vec<usize> {
        (0..self.cfg.depth)
            .map(|i| {
                if i == 0 {
                    self.cfg.input_dim
                } else {
                    match self.cfg.variant {
                        MlpVariant::MultiInput => self.cfg.width + self.side_dim,
                        MlpVariant::Vanilla if self.cfg.skip_layer == Some(i) => self.cfg.width + self.cfg.input_dim,
                        MlpVariant::Vanilla => self.cfg.width,
                    }
                }
            })
            .collect()
    }

    /// Number of entries (weight + bias per layer) this trunk occupies.
    pub fn param_count(&self) -> usize {
        2 * (self.cfg.depth + usize::from(self.cfg.output_dim > 0))
    }

    /// Index of hidden layer `i`'s (0-based) weight in the parameter table.
    pub fn weight_index(&self, i: usize) -> usize {
        self.offset + 2 * i
    }

    pub fn init(&self, prefix: &str, scheme: InitScheme, rng: &mut impl Rng, params: &mut ModelParams) {
        debug_assert_eq!(params.len(), self.offset);
        for (i, in_dim) in self.layer_input_dims().into_iter().enumerate() {
            push_linear(params, &format!("{prefix}.{}", i + 1), in_dim, self.cfg.width, scheme, rng);
        }
        if self.cfg.output_dim > 0 {
            push_linear(params, &format!("{prefix}.head"), self.cfg.width, self.cfg.output_dim, scheme, rng);
        }
    }

    /// Hidden features `f_1 … f_D`.
    ///
    /// `inject = Some((layer, feature))` adds `feature` to the activated
    /// output of that 1-based layer before it feeds the next one.
    pub fn hidden(
        &self,
        tape: &mut Tape,
        nodes: &[NodeId],
        input: NodeId,
        side: NodeId,
        inject: Option<(usize, NodeId)>,
    ) -> Result<Vec<NodeId>, AutodiffError> {
        let mut feats: Vec<NodeId> = Vec::with_capacity(self.cfg.depth);
        for i in 0..self.cfg.depth {
            let x = match feats.last() {
                None => input,
                Some(&prev) => match self.cfg.variant {
                    MlpVariant::MultiInput => tape.concat_cols(prev, side)?,
                    MlpVariant::Vanilla if self.cfg.skip_layer == Some(i) => tape.concat_cols(prev, input)?,
                    MlpVariant::Vanilla => prev,
                },
            };
            let mut f = linear(tape, nodes, self.weight_index(i), x)?;
            if self.cfg.activation == Activation::Relu {
                f = tape.relu(f)?;
            }
            if let Some((layer, feature)) = inject {
                if layer == i + 1 {
                    f = tape.add(f, feature)?;
                }
            }
            feats.push(f);
        }
        Ok(feats)
    }

    /// Linear head on the last feature.
    pub fn head(&self, tape: &mut Tape, nodes: &[NodeId], last: NodeId) -> Result<NodeId, AutodiffError> {
        debug_assert!(self.cfg.output_dim > 0);
        linear(tape, nodes, self.weight_index(self.cfg.depth), last)
    }

    /// Hidden stack followed by the head, with the input doubling as side input.
    pub fn forward(&self, tape: &mut Tape, nodes: &[NodeId], input: NodeId) -> Result<NodeId, AutodiffError> {
        let feats = self.hidden(tape, nodes, input, input, None)?;
        let last = *feats.last().expect("depth >= 2");
        self.head(tape, nodes, last)
    }
}

/// `x·W + b` with `W = nodes[index]`, `b = nodes[index + 1]`.
pub(crate) fn linear(tape: &mut Tape, nodes: &[NodeId], index: usize, x: NodeId) -> Result<NodeId, AutodiffError> {
    let z = tape.matmul(x, nodes[index])?;
    tape.add(z, nodes[index + 1])
}

pub(crate) fn push_linear(
    params: &mut ModelParams,
    name: &str,
    in_dim: usize,
    out_dim: usize,
    scheme: InitScheme,
    rng: &mut impl Rng,
) {
    let bound = scheme.bound(in_dim, out_dim);
    let mut sample = || loop {
        let v = rng.gen_range(-bound..bound);
        // open interval
        if v != -bound {
            break v;
        }
    };
    let weight = Matrix::from_fn(in_dim, out_dim, |_, _| sample());
    let bias = Matrix::from_fn(1, out_dim, |_, _| sample());
    params.push(format!("{name}.weight"), weight);
    params.push(format!("{name}.bias"), bias);
}
