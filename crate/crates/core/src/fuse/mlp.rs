//! Fully connected networks for inference only, loaded from a tensor bundle.
//!
//! A bundle is a JSON header next to one `.ptns` file per weight and bias:
//!
//! ```json
//! {"layers": [{"weight": "l0.w.ptns", "bias": "l0.b.ptns", "activation": "relu"}, ...]}
//! ```
//!
//! Weights are `out x in`, biases `out`. Paths are relative to the header.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::tensor::{read_tensor, write_tensor, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    layers: Vec<Layer>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleHeader {
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    weight: String,
    bias: String,
    activation: Activation,
}

impl MlpWeights {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(Error::DimMismatch(format!(
                    "layer {i}: bias of length {} for {} outputs",
                    l.bias.len(),
                    l.weight.nrows()
                )));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {i} has non-finite values")));
            }
            if i > 0 && layers[i - 1].weight.nrows() != l.weight.ncols() {
                return Err(Error::DimMismatch(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.weight.ncols(),
                    i - 1,
                    layers[i - 1].weight.nrows()
                )));
            }
        }
        Ok(MlpWeights { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn load(header: impl AsRef<Path>) -> Result<Self> {
        let header = header.as_ref();
        let dir = header.parent().unwrap_or(Path::new("."));
        let h: BundleHeader = read_json(header)?;
        let mut layers = Vec::with_capacity(h.layers.len());
        for entry in h.layers {
            let w = read_tensor(dir.join(&entry.weight))?;
            let b = read_tensor(dir.join(&entry.bias))?;
            let (rows, cols) = match w.dims() {
                [r, c] => (*r, *c),
                d => return Err(Error::DimMismatch(format!("{}: weight dims {d:?}", entry.weight))),
            };
            if b.ndim() != 1 {
                return Err(Error::DimMismatch(format!("{}: bias dims {:?}", entry.bias, b.dims())));
            }
            layers.push(Layer {
                weight: DMatrix::from_row_iterator(rows, cols, w.data().iter().map(|v| *v as f64)),
                bias: DVector::from_iterator(b.data().len(), b.data().iter().map(|v| *v as f64)),
                activation: entry.activation,
            });
        }
        MlpWeights::new(layers).map_err(|e| e.at(header))
    }

    /// Writes the header plus `l{i}.w.ptns` / `l{i}.b.ptns` next to it.
    /// Values are stored as `f32`.
    pub fn save(&self, header: impl AsRef<Path>) -> Result<()> {
        let header = header.as_ref();
        let dir = header.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let (weight, bias) = (format!("l{i}.w.ptns"), format!("l{i}.b.ptns"));
            let rows: Vec<f32> = (0..l.weight.nrows())
                .flat_map(|r| (0..l.weight.ncols()).map(move |c| (r, c)))
                .map(|(r, c)| l.weight[(r, c)] as f32)
                .collect();
            write_tensor(dir.join(&weight), &Tensor::new(vec![l.weight.nrows(), l.weight.ncols()], rows)?)?;
            let b: Vec<f32> = l.bias.iter().map(|v| *v as f32).collect();
            write_tensor(dir.join(&bias), &Tensor::new(vec![b.len()], b)?)?;
            entries.push(LayerEntry {
                weight,
                bias,
                activation: l.activation,
            });
        }
        write_json(header, &BundleHeader { layers: entries })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(self, input)
    }
}

/// Affine map followed by the layer's activation, for every layer in turn.
pub fn mlp_forward(weights: &MlpWeights, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != weights.input_dim() {
        return Err(Error::DimMismatch(format!(
            "input of length {} for a network expecting {}",
            input.len(),
            weights.input_dim()
        )));
    }
    let mut x = DVector::from_column_slice(input);
    for l in &weights.layers {
        x = &l.weight * x + &l.bias;
        if l.activation == Activation::Relu {
            x.apply(|v| *v = v.max(0.0));
        }
    }
    Ok(x.iter().copied().collect())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(rows: usize, cols: usize, w: &[f64], b: &[f64], act: Activation) -> Layer {
        Layer {
            weight: DMatrix::from_row_slice(rows, cols, w),
            bias: DVector::from_column_slice(b),
            activation: act,
        }
    }

    #[test]
    fn zero_weights_give_bias() {
        let net = MlpWeights::new(vec![layer(2, 3, &[0.0; 6], &[0.5, -2.0], Activation::Identity)]).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, -2.0]);
    }

    #[test]
    fn identity_layer_passes_through() {
        let net = MlpWeights::new(vec![layer(
            3,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[0.0; 3],
            Activation::Identity,
        )])
        .unwrap();
        assert_eq!(net.forward(&[-1.0, 2.5, 7.0]).unwrap(), vec![-1.0, 2.5, 7.0]);
    }

    #[test]
    fn two_layer_hand_computed() {
        // h = relu([[1, -1], [0.5, 2]] x + [0, -1]); y = [2, 3] h + 0.5
        let net = MlpWeights::new(vec![
            layer(2, 2, &[1.0, -1.0, 0.5, 2.0], &[0.0, -1.0], Activation::Relu),
            layer(1, 2, &[2.0, 3.0], &[0.5], Activation::Identity),
        ])
        .unwrap();
        // x = (1, 2): pre = (-1, 3.5), h = (0, 3.5), y = 11
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![11.0]);
        // x = (3, 0.5): pre = (2.5, 1.5), h = (2.5, 1.5), y = 5 + 4.5 + 0.5
        assert_eq!(net.forward(&[3.0, 0.5]).unwrap(), vec![10.0]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn rejects_broken_chains() {
        let a = layer(2, 2, &[0.0; 4], &[0.0; 2], Activation::Relu);
        let b = layer(1, 3, &[0.0; 3], &[0.0], Activation::Identity);
        assert!(MlpWeights::new(vec![a.clone(), b]).is_err());
        let bad_bias = layer(2, 2, &[0.0; 4], &[0.0; 3], Activation::Relu);
        assert!(MlpWeights::new(vec![bad_bias]).is_err());
        let nan = layer(1, 1, &[f64::NAN], &[0.0], Activation::Relu);
        assert!(MlpWeights::new(vec![nan]).is_err());
        assert!(MlpWeights::new(vec![]).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("net.json");
        let net = MlpWeights::new(vec![
            layer(2, 3, &[1.0, 2.0, 3.0, -4.0, 0.5, 0.25], &[0.5, -1.0], Activation::Relu),
            layer(1, 2, &[2.0, -3.0], &[0.125], Activation::Identity),
        ])
        .unwrap();
        net.save(&header).unwrap();
        let back = MlpWeights::load(&header).unwrap();
        assert_eq!(back, net);
        let text = std::fs::read_to_string(&header).unwrap();
        assert!(text.contains("\"relu\"") && text.contains("l1.b.ptns"));
    }
}
