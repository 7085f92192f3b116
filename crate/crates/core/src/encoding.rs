//! Sinusoidal positional encoding.
//!
//! Each input scalar `x` becomes
//! `(sin 2⁰x, cos 2⁰x, …, sin 2^{L−1}x, cos 2^{L−1}x)`, optionally preceded by
//! `x` itself. Scalars are encoded independently and their blocks laid out
//! in input order.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, CustomOp, Matrix, NodeId, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Number of octaves `L`.
    pub frequencies: usize,
    /// Prepend the raw input to each scalar's block.
    #[serde(default)]
    pub include_identity: bool,
}

impl EncodingConfig {
    pub const fn new(frequencies: usize) -> Self {
        Self {
            frequencies,
            include_identity: false,
        }
    }

    /// Width of one scalar's block.
    pub fn per_scalar(&self) -> usize {
        2 * self.frequencies + usize::from(self.include_identity)
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * self.per_scalar()
    }

    fn encode_into(&self, x: &[f64], out: &mut Vec<f64>) {
        for &v in x {
            if self.include_identity {
                out.push(v);
            }
            let mut freq = 1.0;
            for _ in 0..self.frequencies {
                let (s, c) = (freq * v).sin_cos();
                out.push(s);
                out.push(c);
                freq *= 2.0;
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim(x.len()));
        self.encode_into(x, &mut out);
        out
    }

    /// Encodes every row of `x`.
    pub fn encode_rows(&self, x: &Matrix) -> Matrix {
        let cols = self.output_dim(x.cols());
        let mut data = Vec::with_capacity(x.rows() * cols);
        for r in 0..x.rows() {
            self.encode_into(x.row(r), &mut data);
        }
        Matrix::from_raw(x.rows(), cols, data)
    }

    /// Differentiable encoding of a tape node.
    pub fn encode_node(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, AutodiffError> {
        tape.custom(EncodeOp(*self), &[x])
    }
}

struct EncodeOp(EncodingConfig);

impl CustomOp for EncodeOp {
    fn name(&self) -> &'static str {
        "positional_encoding"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix, AutodiffError> {
        Ok(self.0.encode_rows(inputs[0]))
    }

    fn backward(&self, inputs: &[&Matrix], output: &Matrix, grad: &Matrix) -> Vec<Matrix> {
        let x = inputs[0];
        let block = self.0.per_scalar();
        let id = usize::from(self.0.include_identity);
        let mut gx = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let (y, g) = (output.row(r), grad.row(r));
            for c in 0..x.cols() {
                let base = c * block;
                let mut acc = if id == 1 { g[base] } else { 0.0 };
                let mut freq = 1.0;
                for k in 0..self.0.frequencies {
                    let (s, co) = (y[base + id + 2 * k], y[base + id + 2 * k + 1]);
                    acc += freq * (co * g[base + id + 2 * k] - s * g[base + id + 2 * k + 1]);
                    freq *= 2.0;
                }
                gx.set(r, c, acc);
            }
        }
        vec![gx]
    }
}

/// The three encoding widths of the dual-branch network: density position,
/// colour position and colour direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub density_position: EncodingConfig,
    pub color_position: EncodingConfig,
    pub color_direction: EncodingConfig,
}

impl FrequencyProfile {
    /// 360° object-centric scenes: 2, 6, 10.
    pub const fn object_centric() -> Self {
        Self {
            density_position: EncodingConfig::new(2),
            color_position: EncodingConfig::new(6),
            color_direction: EncodingConfig::new(10),
        }
    }

    /// Forward-facing scenes: 2, 8, 10.
    pub const fn forward_facing() -> Self {
        Self {
            density_position: EncodingConfig::new(2),
            color_position: EncodingConfig::new(8),
            color_direction: EncodingConfig::new(10),
        }
    }

    /// Reports when `L_dir ≤ L_density ≤ L_color` does not hold. The preset
    /// profiles themselves break it (`L_dir = 10 > L_density = 2`), so this
    /// is a warning and never an error.
    pub fn ordering_warning(&self) -> Option<String> {
        let (l1, l2, l3) = (
            self.density_position.frequencies,
            self.color_position.frequencies,
            self.color_direction.frequencies,
        );
        (!(l3 <= l1 && l1 <= l2)).then(|| {
            format!("frequency counts L1={l1}, L2={l2}, L3={l3} do not satisfy L3 <= L1 <= L2")
        })
    }
}

impl Default for FrequencyProfile {
    fn default() -> Self {
        Self::object_centric()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{central_difference, max_relative_error};
    use proptest::prelude::*;

    #[test]
    fn zero_encodes_to_sin_cos_pairs() {
        assert_eq!(EncodingConfig::new(2).encode(&[0.0]), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn half_pi_single_octave() {
        let e = EncodingConfig::new(1).encode(&[std::f64::consts::FRAC_PI_2]);
        assert!((e[0] - 1.0).abs() < 1e-12 && e[1].abs() < 1e-12);
    }

    #[test]
    fn dimensions() {
        let cfg = EncodingConfig::new(10);
        assert_eq!(cfg.encode(&[0.1, 0.2, 0.3]).len(), 60);
        let id = EncodingConfig {
            frequencies: 10,
            include_identity: true,
        };
        assert_eq!(id.output_dim(3), 63);
        assert_eq!(id.encode(&[0.7])[0], 0.7);
        assert!(EncodingConfig::new(0).encode(&[1.0, 2.0]).is_empty());
    }

    #[test]
    fn published_profiles_trip_the_ordering_check() {
        assert!(FrequencyProfile::object_centric().ordering_warning().is_some());
        assert!(FrequencyProfile::forward_facing().ordering_warning().is_some());
        let ordered = FrequencyProfile {
            density_position: EncodingConfig::new(4),
            color_position: EncodingConfig::new(6),
            color_direction: EncodingConfig::new(2),
        };
        assert!(ordered.ordering_warning().is_none());
    }

    #[test]
    fn encode_node_gradient_matches_finite_differences() {
        for include_identity in [false, true] {
            let cfg = EncodingConfig {
                frequencies: 4,
                include_identity,
            };
            let x = Matrix::from_fn(3, 2, |r, c| 0.37 * r as f64 - 0.61 * c as f64 + 0.2);
            let w = Matrix::from_fn(cfg.output_dim(2), 1, |r, _| ((r * 7 % 5) as f64 - 2.0) * 0.3);
            let build = |t: &mut Tape, ps: &[Matrix]| {
                let xi = t.param(ps[0].clone()).unwrap();
                let wi = t.constant(w.clone()).unwrap();
                let e = cfg.encode_node(t, xi).unwrap();
                let y = t.matmul(e, wi).unwrap();
                (xi, t.sum(y).unwrap())
            };
            let mut tape = Tape::new();
            let (xi, loss) = build(&mut tape, std::slice::from_ref(&x));
            tape.backward(loss).unwrap();
            let fd = central_difference(std::slice::from_ref(&x), 1e-5, |ps| {
                let mut t = Tape::new();
                let (_, l) = build(&mut t, ps);
                (t.scalar(l), t.relu_pattern())
            });
            let err = max_relative_error(&[tape.grad(xi).unwrap().clone()], &fd.gradients);
            assert!(err < 1e-8, "relative error {err}");
        }
    }

    proptest! {
        #[test]
        fn outputs_bounded_and_scalar_independent(x in prop::collection::vec(-1e3f64..1e3, 1..6), l in 0usize..12) {
            let cfg = EncodingConfig::new(l);
            let out = cfg.encode(&x);
            prop_assert_eq!(out.len(), cfg.output_dim(x.len()));
            prop_assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
            for (i, &v) in x.iter().enumerate() {
                let alone = cfg.encode(&[v]);
                prop_assert_eq!(&out[i * 2 * l..(i + 1) * 2 * l], &alone[..]);
            }
        }
    }
}
