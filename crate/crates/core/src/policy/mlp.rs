//! Fully connected network: ReLU hidden layers, linear head, f64 throughout.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`, so a batch `X` (rows are samples) maps to `X W^T + b`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradients share the parameter layout.
pub type Gradients = Mlp;

impl Mlp {
    /// Layer widths from input to output, e.g. `[41, 256, 256, 4]`.
    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn init<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer.weight.mapv_inplace(|_| dist.sample(rng));
            layer.bias.mapv_inplace(|_| dist.sample(rng));
        }
        net
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs(), l.outputs())).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Every parameter tensor as a flat slice, weights then bias per layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Contract("network has no layers".into()));
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::Contract(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batched inference. Dropout never applies here.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a);
            if i < last {
                a.mapv_inplace(relu);
            }
        }
        Ok(a)
    }

    /// Forward pass in either mode. `rng` is only consulted for train-mode
    /// dropout with a positive rate.
    pub fn forward_mode<R: Rng>(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        match mode {
            Mode::Eval => self.forward(x),
            Mode::Train => Ok(self.trace(x, dropout, rng)?.output),
        }
    }

    fn trace<R: Rng>(&self, x: ArrayView2<f64>, dropout: f64, rng: &mut R) -> Result<Trace> {
        self.check_input(&x)?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("dropout {dropout} outside [0, 1)")));
        }
        let keep = 1.0 - dropout;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut masks = Vec::with_capacity(last);
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&a);
            inputs.push(a);
            if i == last {
                a = z;
                break;
            }
            let mut h = z.mapv(relu);
            let mask = if dropout > 0.0 {
                let m = h.mapv(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                h *= &m;
                Some(m)
            } else {
                None
            };
            pre.push(z);
            masks.push(mask);
            a = h;
        }
        Ok(Trace { inputs, pre, masks, output: a })
    }

    /// Mean over the batch of the squared L2 error, and its gradient.
    pub fn loss_and_grad<R: Rng>(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        dropout: f64,
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        if x.nrows() == 0 || x.nrows() != y.nrows() {
            return Err(Error::Contract(format!(
                "batch has {} inputs and {} targets",
                x.nrows(),
                y.nrows()
            )));
        }
        if y.ncols() != self.output_dim() {
            return Err(Error::Contract("target width does not match the output layer".into()));
        }
        let trace = self.trace(x, dropout, rng)?;
        let b = x.nrows() as f64;
        let diff = &trace.output - &y;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / b;

        let mut grads = self.zeros_like();
        let mut delta = diff * (2.0 / b);
        for i in (0..self.layers.len()).rev() {
            grads.layers[i].weight = delta.t().dot(&trace.inputs[i]);
            grads.layers[i].bias = delta.sum_axis(Axis(0));
            if i == 0 {
                break;
            }
            let mut up = delta.dot(&self.layers[i].weight);
            if let Some(mask) = &trace.masks[i - 1] {
                up *= mask;
            }
            ndarray::Zip::from(&mut up).and(&trace.pre[i - 1]).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = up;
        }
        Ok((loss, grads))
    }
}

struct Trace {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    output: Array2<f64>,
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Batch MSE without gradients, using the same convention as training.
pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let n = pred.nrows().max(1) as f64;
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[5, 8, 8, 3]);
        let x = array![[1.0, -2.0, 3.0, 4.0, 5.0]];
        assert_eq!(net.forward(x.view()).unwrap(), Array2::<f64>::zeros((1, 3)));
    }

    #[test]
    fn hand_composed_toy_net() {
        // 2 -> 2 -> 1 with weights chosen so one hidden unit is clipped.
        let net = Mlp {
            layers: vec![
                Dense { weight: array![[1.0, 2.0], [-1.0, -1.0]], bias: array![0.5, 0.0] },
                Dense { weight: array![[3.0, 4.0]], bias: array![-1.0] },
            ],
        };
        // hidden = relu([1 + 4 + 0.5, -1 - 2]) = [5.5, 0]; out = 16.5 - 1
        let y = net.forward(array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(y[[0, 0]], 15.5);
    }

    #[test]
    fn eval_ignores_dropout() {
        let net = Mlp::init(&[4, 16, 16, 2], &mut rng());
        let x = array![[0.1, 0.2, 0.3, 0.4], [-1.0, 0.0, 1.0, 2.0]];
        let a = net.forward_mode(x.view(), Mode::Eval, 0.5, &mut rng()).unwrap();
        let b = net.forward_mode(x.view(), Mode::Eval, 0.0, &mut rng()).unwrap();
        assert_eq!(a, b);
        let c = net.forward_mode(x.view(), Mode::Train, 0.5, &mut rng()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let net = Mlp::zeros(&[3, 2]);
        assert!(matches!(net.forward(array![[1.0, 2.0]].view()), Err(Error::Contract(_))));
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let net = Mlp::init(&[3, 6, 2], &mut rng());
        let x = array![[0.3, -0.1, 0.8], [1.0, 1.0, -1.0]];
        let y = net.forward(x.view()).unwrap();
        let (loss, g) = net.loss_and_grad(x.view(), y.view(), 0.0, &mut rng()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors().iter().all(|t| t.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn linear_layer_closed_form_gradient() {
        let net = Mlp {
            layers: vec![Dense { weight: array![[0.5, -1.0, 2.0]], bias: array![0.25] }],
        };
        let x = array![[1.0, 2.0, 3.0]];
        let y = array![[1.0]];
        let (loss, g) = net.loss_and_grad(x.view(), y.view(), 0.0, &mut rng()).unwrap();
        let yhat = 0.5 - 2.0 + 6.0 + 0.25;
        assert!((loss - (yhat - 1.0_f64).powi(2)).abs() < 1e-12);
        let r = 2.0 * (yhat - 1.0);
        assert_eq!(g.layers[0].weight, array![[r, 2.0 * r, 3.0 * r]]);
        assert_eq!(g.layers[0].bias, array![r]);
    }

    #[test]
    fn dropout_mask_is_shared_by_forward_and_backward() {
        // With dropout the loss reported by loss_and_grad must correspond to
        // the same mask used for the gradient: a finite-difference check on
        // the output bias (which sees the masked activations only through the
        // loss) confirms the pairing.
        let net = Mlp::init(&[3, 8, 2], &mut rng());
        let x = array![[0.3, -0.1, 0.8], [1.0, 1.0, -1.0]];
        let y = array![[0.0, 1.0], [1.0, 0.0]];
        let (_, g) = net.loss_and_grad(x.view(), y.view(), 0.3, &mut rng()).unwrap();
        let h = 1e-6;
        let mut plus = net.clone();
        plus.layers[1].bias[0] += h;
        let mut minus = net.clone();
        minus.layers[1].bias[0] -= h;
        let (lp, _) = plus.loss_and_grad(x.view(), y.view(), 0.3, &mut rng()).unwrap();
        let (lm, _) = minus.loss_and_grad(x.view(), y.view(), 0.3, &mut rng()).unwrap();
        assert!(((lp - lm) / (2.0 * h) - g.layers[1].bias[0]).abs() < 1e-6);
    }
}
