//! Fully-connected network with ReLU hidden layers and a sigmoid output
//! layer, with hand-written backpropagation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hidden layer widths `L₁, L₂, L₃`.
pub const DEFAULT_HIDDEN: [usize; 3] = [1024, 512, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    Mae,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::config(format!("unknown loss `{other}` (expected mse or mae)"))),
        }
    }
}

/// Mean over all `S'·K` entries of the squared (MSE) or absolute (MAE)
/// error.
pub fn loss(predicted: ArrayView2<'_, f64>, labels: ArrayView2<'_, f64>, kind: LossKind) -> Result<f64> {
    if predicted.dim() != labels.dim() {
        return Err(Error::Dimension {
            context: "loss: labels",
            expected: predicted.len(),
            found: labels.len(),
        });
    }
    let n = predicted.len();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = predicted
        .iter()
        .zip(labels.iter())
        .map(|(p, l)| match kind {
            LossKind::Mse => (l - p).powi(2),
            LossKind::Mae => (l - p).abs(),
        })
        .sum();
    Ok(total / n as f64)
}

/// One affine layer, `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn affine(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
}

/// Gradients in the same layout as the model parameters.
pub type Gradients = Vec<Dense>;

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl MlpModel {
    /// Randomly initialized model. Hidden layers use He-uniform bounds
    /// `±√(6/fan_in)`, the output layer Glorot-uniform `±√(6/(fan_in+fan_out))`.
    /// Biases start at zero.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = layer_sizes.len() - 2;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = if i == last {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layers: layer_sizes
                .windows(2)
                .map(|w| Dense {
                    weights: Array2::zeros((w[1], w[0])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_size()];
        sizes.extend(self.layers.iter().map(Dense::outputs));
        sizes
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(Dense::outputs).unwrap_or(0)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_size() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_size(),
                found: width,
            });
        }
        Ok(())
    }

    /// Predictions for a batch of row-vector inputs.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut act = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(act.view());
            if i == last {
                z.mapv_inplace(sigmoid);
            } else {
                z.mapv_inplace(relu);
            }
            act = z;
        }
        Ok(act)
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(x.len())?;
        let last = self.layers.len() - 1;
        let mut act = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.dot(&act);
            z += &layer.bias;
            if i == last {
                z.mapv_inplace(sigmoid);
            } else {
                z.mapv_inplace(relu);
            }
            act = z;
        }
        Ok(act)
    }

    /// Loss and exact gradients of the batch loss with respect to every
    /// weight and bias. `ReLU'(0)` and the MAE subgradient at zero error
    /// are both taken as 0.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        labels: ArrayView2<'_, f64>,
        kind: LossKind,
    ) -> Result<(f64, Gradients)> {
        self.check_input(x.ncols())?;
        if labels.dim() != (x.nrows(), self.output_size()) {
            return Err(Error::Dimension {
                context: "backward: labels",
                expected: x.nrows() * self.output_size(),
                found: labels.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(acts[i].view());
            if i == last {
                z.mapv_inplace(sigmoid);
            } else {
                z.mapv_inplace(relu);
            }
            acts.push(z);
        }
        let pred = &acts[self.layers.len()];
        let value = loss(pred.view(), labels, kind)?;

        let scale = 1.0 / pred.len() as f64;
        let mut delta = Array2::zeros(pred.dim());
        ndarray::Zip::from(&mut delta)
            .and(pred)
            .and(labels)
            .for_each(|d, &p, &l| {
                let dl_dp = match kind {
                    LossKind::Mse => 2.0 * (p - l) * scale,
                    LossKind::Mae => sign(p - l) * scale,
                };
                *d = dl_dp * p * (1.0 - p);
            });

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &acts[i];
            let weights = delta.t().dot(input);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weights);
                ndarray::Zip::from(&mut upstream).and(input).for_each(|u, &a| {
                    if a <= 0.0 {
                        *u = 0.0;
                    }
                });
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok((value, grads))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::config("a network needs an input and an output size"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::config("layer sizes must be positive"));
    }
    Ok(())
}

/// `[L₀, hidden..., K]`.
pub fn layer_sizes(input: usize, hidden: &[usize], outputs: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(outputs);
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_model_outputs_one_half() {
        let m = MlpModel::zeros(&[5, 4, 3, 2, 3]).unwrap();
        let y = m.forward(Array1::from_elem(5, 0.7).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn loss_arithmetic() {
        let labels = array![[1.0, 0.5]];
        let pred = array![[0.5, 0.5]];
        assert_eq!(loss(pred.view(), labels.view(), LossKind::Mse).unwrap(), 0.125);
        assert_eq!(loss(pred.view(), labels.view(), LossKind::Mae).unwrap(), 0.25);
        assert_eq!(loss(labels.view(), labels.view(), LossKind::Mse).unwrap(), 0.0);
        assert_eq!(loss(labels.view(), labels.view(), LossKind::Mae).unwrap(), 0.0);
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let m = MlpModel::new(&[6, 4, 3, 2, 2], 9).unwrap();
        let x = array![[0.1, -0.2, 0.3, 0.9, -1.0, 0.5], [0.0, 0.4, -0.7, 0.2, 0.2, -0.1]];
        let batch = m.forward_batch(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let single = m.forward(row).unwrap();
            for k in 0..2 {
                assert!((single[k] - batch[[i, k]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let m = MlpModel::new(&[3, 4, 2], 1).unwrap();
        let x = array![[0.2, -0.3, 0.9]];
        let labels = m.forward_batch(x.view()).unwrap();
        let (value, grads) = m.backward(x.view(), labels.view(), LossKind::Mse).unwrap();
        assert_eq!(value, 0.0);
        assert!(grads.iter().all(|g| g.weights.iter().chain(g.bias.iter()).all(|&v| v == 0.0)));
    }

    #[test]
    fn output_bias_gradient_closed_form() {
        let m = MlpModel::new(&[3, 5, 2], 4).unwrap();
        let x = array![[0.2, -0.3, 0.9], [-0.5, 0.1, 0.4]];
        let labels = array![[1.0, 0.3], [0.6, 1.0]];
        let pred = m.forward_batch(x.view()).unwrap();
        let (_, grads) = m.backward(x.view(), labels.view(), LossKind::Mse).unwrap();
        let n = 4.0;
        for k in 0..2 {
            let expected: f64 = (0..2)
                .map(|s| (2.0 / n) * (pred[[s, k]] - labels[[s, k]]) * pred[[s, k]] * (1.0 - pred[[s, k]]))
                .sum();
            assert!((grads[1].bias[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_errors() {
        let m = MlpModel::zeros(&[3, 2]).unwrap();
        assert!(m.forward(Array1::zeros(4).view()).is_err());
        assert!(m.backward(Array2::zeros((1, 3)).view(), Array2::zeros((1, 3)).view(), LossKind::Mse).is_err());
        assert!(MlpModel::zeros(&[3]).is_err());
        assert!(MlpModel::zeros(&[3, 0, 2]).is_err());
    }

    #[test]
    fn parse_loss_kind() {
        assert_eq!("MAE".parse::<LossKind>().unwrap(), LossKind::Mae);
        assert!("huber".parse::<LossKind>().is_err());
    }
}
