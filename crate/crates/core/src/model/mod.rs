//! Classifier family, loss and gradients, optimizers and local training.

mod checkpoint;
mod net;
mod optim;
mod train;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub(crate) use net::{argmax as net_argmax, log_probs as net_log_probs};
pub use net::{forward, loss_and_grad, LossReport};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState};
pub use train::local_train;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// Multinomial logistic regression on raw pixels.
    Softmax,
    /// One ReLU hidden layer.
    Mlp { hidden: usize },
    /// 3x3 conv (zero pad 1) -> ReLU -> 2x2 max-pool -> dense.
    TinyConv { filters: usize },
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Softmax => write!(f, "softmax"),
            Architecture::Mlp { hidden } => write!(f, "mlp({hidden})"),
            Architecture::TinyConv { filters } => write!(f, "tiny_conv({filters})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }
}

/// Named weight tensors of one classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    image_shape: (usize, usize),
    num_classes: usize,
    tensors: Vec<Tensor>,
}

fn layer_shapes(
    arch: Architecture,
    image_shape: (usize, usize),
    num_classes: usize,
) -> Result<Vec<(&'static str, Vec<usize>)>> {
    let (h, w) = image_shape;
    if h == 0 || w == 0 || num_classes == 0 {
        return invalid(format!(
            "image shape {h}x{w} with {num_classes} classes has a zero dimension"
        ));
    }
    let d = h * w;
    let c = num_classes;
    Ok(match arch {
        Architecture::Softmax => vec![("dense.weight", vec![c, d]), ("dense.bias", vec![c])],
        Architecture::Mlp { hidden } => {
            if hidden == 0 {
                return invalid("mlp hidden width must be at least 1");
            }
            vec![
                ("hidden.weight", vec![hidden, d]),
                ("hidden.bias", vec![hidden]),
                ("output.weight", vec![c, hidden]),
                ("output.bias", vec![c]),
            ]
        }
        Architecture::TinyConv { filters } => {
            if filters == 0 {
                return invalid("tiny_conv needs at least one filter");
            }
            if h < 2 || w < 2 {
                return invalid(format!(
                    "tiny_conv needs images of at least 2x2, got {h}x{w}"
                ));
            }
            let pooled = filters * (h / 2) * (w / 2);
            vec![
                ("conv.weight", vec![filters, 3, 3]),
                ("conv.bias", vec![filters]),
                ("dense.weight", vec![c, pooled]),
                ("dense.bias", vec![c]),
            ]
        }
    })
}

impl ModelParams {
    pub fn zeros(
        arch: Architecture,
        image_shape: (usize, usize),
        num_classes: usize,
    ) -> Result<Self> {
        let tensors = layer_shapes(arch, image_shape, num_classes)?
            .into_iter()
            .map(|(name, shape)| Tensor::zeros(name, &shape))
            .collect();
        Ok(Self {
            arch,
            image_shape,
            num_classes,
            tensors,
        })
    }

    /// Rebuilds params from tensors, checking names and shapes.
    pub fn from_tensors(
        arch: Architecture,
        image_shape: (usize, usize),
        num_classes: usize,
        tensors: Vec<Tensor>,
    ) -> Result<Self> {
        let expected = layer_shapes(arch, image_shape, num_classes)?;
        if expected.len() != tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{arch} has {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product() {
                return Err(Error::ShapeMismatch(format!(
                    "expected {name} {shape:?}, got {} {:?} with {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
        }
        Ok(Self {
            arch,
            image_shape,
            num_classes,
            tensors,
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub(crate) fn tensor(&self, i: usize) -> &[f64] {
        &self.tensors[i].data
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// All values, tensors concatenated in order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    pub fn check_compatible(&self, other: &ModelParams) -> Result<()> {
        let same = self.arch == other.arch
            && self.image_shape == other.image_shape
            && self.num_classes == other.num_classes
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape == b.shape);
        if same {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{} on {:?}/{} vs {} on {:?}/{}",
                self.arch,
                self.image_shape,
                self.num_classes,
                other.arch,
                other.image_shape,
                other.num_classes
            )))
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.values_mut().for_each(|v| *v = 0.0);
        out
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, factor: f64) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn l2_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(
    arch: Architecture,
    image_shape: (usize, usize),
    num_classes: usize,
    rng: &mut RngStream,
) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch, image_shape, num_classes)?;
    for t in &mut params.tensors {
        if t.name.ends_with(".bias") {
            continue;
        }
        let (fan_in, fan_out) = match t.shape.as_slice() {
            // conv kernels: one input channel
            [filters, kh, kw] => (kh * kw, filters * kh * kw),
            [rows, cols] => (*cols, *rows),
            _ => unreachable!("weights are 2-d or 3-d"),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut t.data {
            *v = rng.gen_range(-limit..=limit);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    #[test]
    fn softmax_shapes_and_zero_bias() {
        let p = init_params(
            Architecture::Softmax,
            (16, 16),
            4,
            &mut RngStream::new(1, Purpose::Init),
        )
        .unwrap();
        let shapes: Vec<_> = p.tensors().iter().map(|t| t.shape.clone()).collect();
        assert_eq!(shapes, vec![vec![4, 256], vec![4]]);
        assert!(p.tensors()[1].data.iter().all(|&b| b == 0.0));
        let limit = (6.0f64 / 260.0).sqrt();
        assert!(p.tensors()[0].data.iter().all(|w| w.abs() <= limit));
        assert!(p.tensors()[0].data.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn mlp_shapes() {
        let p = init_params(
            Architecture::Mlp { hidden: 32 },
            (16, 16),
            4,
            &mut RngStream::new(1, Purpose::Init),
        )
        .unwrap();
        let shapes: Vec<_> = p.tensors().iter().map(|t| t.shape.clone()).collect();
        assert_eq!(shapes, vec![vec![32, 256], vec![32], vec![4, 32], vec![4]]);
    }

    #[test]
    fn tiny_conv_shapes() {
        let p = ModelParams::zeros(Architecture::TinyConv { filters: 3 }, (5, 6), 2).unwrap();
        let shapes: Vec<_> = p.tensors().iter().map(|t| t.shape.clone()).collect();
        assert_eq!(
            shapes,
            vec![vec![3, 3, 3], vec![3], vec![2, 3 * 2 * 3], vec![2]]
        );
    }

    #[test]
    fn init_is_deterministic_and_validates() {
        let mk = || {
            init_params(
                Architecture::Mlp { hidden: 5 },
                (4, 4),
                3,
                &mut RngStream::new(9, Purpose::Init),
            )
        };
        assert_eq!(mk().unwrap(), mk().unwrap());
        let mut r = RngStream::new(0, Purpose::Init);
        assert!(init_params(Architecture::Softmax, (0, 4), 3, &mut r).is_err());
        assert!(init_params(Architecture::Softmax, (4, 4), 0, &mut r).is_err());
        assert!(init_params(Architecture::Mlp { hidden: 0 }, (4, 4), 3, &mut r).is_err());
        assert!(init_params(Architecture::TinyConv { filters: 2 }, (1, 4), 3, &mut r).is_err());
    }

    #[test]
    fn arithmetic_requires_matching_arch() {
        let mut a = ModelParams::zeros(Architecture::Softmax, (2, 2), 2).unwrap();
        let b = ModelParams::zeros(Architecture::Mlp { hidden: 2 }, (2, 2), 2).unwrap();
        assert!(a.add_scaled(&b, 1.0).is_err());
        let c = ModelParams::zeros(Architecture::Softmax, (2, 3), 2).unwrap();
        assert!(a.check_compatible(&c).is_err());
    }
}
