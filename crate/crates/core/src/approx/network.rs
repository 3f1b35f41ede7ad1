use rand::Rng;

use super::tape::{ParamKey, Tape, Var};
use super::{ApproxError, ParamSet, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    Linear {
        fan_in: usize,
        fan_out: usize,
    },
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Sigmoid,
    Flatten,
}

impl Layer {
    fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>, usize)> {
        match *self {
            Layer::Linear { fan_in, fan_out } => {
                Some((vec![fan_out, fan_in], vec![fan_out], fan_in))
            }
            Layer::Conv {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((
                vec![out_ch, in_ch, kernel, kernel],
                vec![out_ch],
                in_ch * kernel * kernel,
            )),
            _ => None,
        }
    }
}

/// A feed-forward stack of layers together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    params: ParamSet,
}

impl Network {
    /// Builds the stack and draws weights uniformly in ±√(6 / fan_in);
    /// biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        rng: &mut R,
    ) -> Result<Self, ApproxError> {
        let mut params = ParamSet::new();
        for (i, layer) in layers.iter().enumerate() {
            if let Some((wshape, bshape, fan_in)) = layer.param_shapes() {
                let bound = (6.0 / fan_in as f64).sqrt();
                let n: usize = wshape.iter().product();
                let w = (0..n)
                    .map(|_| rng.gen_range(-bound..bound) as f32)
                    .collect();
                params.push(format!("l{i}.w"), wshape, w)?;
                let nb = bshape[0];
                params.push(format!("l{i}.b"), bshape, vec![0.0; nb])?;
            }
        }
        let net = Network {
            layers,
            input_shape,
            params,
        };
        net.output_shape()?;
        Ok(net)
    }

    /// MLP `sizes[0] -> ... -> sizes[last]` with ReLU between layers and an
    /// optional sigmoid on the output.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        sigmoid_output: bool,
        rng: &mut R,
    ) -> Result<Self, ApproxError> {
        let mut layers = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            if i > 0 {
                layers.push(Layer::Relu);
            }
            layers.push(Layer::Linear {
                fan_in: pair[0],
                fan_out: pair[1],
            });
        }
        if sigmoid_output {
            layers.push(Layer::Sigmoid);
        }
        Network::new(vec![sizes[0]], layers, rng)
    }

    /// Replaces the parameters, checking names and shapes against the
    /// architecture.
    pub fn with_params(mut self, params: ParamSet) -> Result<Self, ApproxError> {
        if params.len() != self.params.len() {
            return Err(ApproxError::Format(format!(
                "expected {} parameter arrays, found {}",
                self.params.len(),
                params.len()
            )));
        }
        for (want, got) in self.params.arrays().iter().zip(params.arrays()) {
            if want.name != got.name || want.shape != got.shape {
                return Err(ApproxError::ShapeMismatch {
                    expected: want.shape.clone(),
                    found: got.shape.clone(),
                });
            }
        }
        self.params = params;
        Ok(self)
    }

    /// Sets every bias of the final parameterized layer to `value`.
    pub fn set_output_bias(&mut self, value: f32) {
        if let Some(last) = self.params.arrays_mut().last_mut() {
            last.values.fill(value);
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> Result<Vec<usize>, ApproxError> {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            shape = match *layer {
                Layer::Linear { fan_in, fan_out } => {
                    if shape.iter().product::<usize>() != fan_in {
                        return Err(ApproxError::ShapeMismatch {
                            expected: vec![fan_in],
                            found: shape,
                        });
                    }
                    vec![fan_out]
                }
                Layer::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    pad,
                } => {
                    if shape.len() != 3 || shape[0] != in_ch || shape[1] + 2 * pad < kernel {
                        return Err(ApproxError::ShapeMismatch {
                            expected: vec![in_ch, kernel, kernel],
                            found: shape,
                        });
                    }
                    vec![
                        out_ch,
                        (shape[1] + 2 * pad - kernel) / stride + 1,
                        (shape[2] + 2 * pad - kernel) / stride + 1,
                    ]
                }
                Layer::Flatten => vec![shape.iter().product()],
                Layer::Relu | Layer::Sigmoid => shape,
            };
        }
        Ok(shape)
    }

    /// Registers the parameters on `tape` under `slot`.
    pub fn bind(&self, tape: &mut Tape, slot: usize) -> Vec<Var> {
        self.params
            .arrays()
            .iter()
            .enumerate()
            .map(|(index, a)| tape.param(ParamKey { slot, index }, a.to_tensor()))
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, slot: usize, x: Var) -> Result<Var, ApproxError> {
        let params = self.bind(tape, slot);
        self.forward_with(tape, &params, x)
    }

    /// Runs the stack with explicitly supplied parameter variables.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
    ) -> Result<Var, ApproxError> {
        let xv = tape.value(x);
        let per_sample = self.input_shape.iter().product::<usize>();
        if xv.row_len() != per_sample || xv.shape().len() < 2 {
            return Err(ApproxError::ShapeMismatch {
                expected: self.input_shape.clone(),
                found: xv.shape().to_vec(),
            });
        }
        let batch = xv.batch();
        let mut h = if xv.shape()[1..] == self.input_shape[..] {
            x
        } else {
            let mut shape = vec![batch];
            shape.extend_from_slice(&self.input_shape);
            tape.reshape(x, &shape)
        };
        let mut p = 0;
        for layer in &self.layers {
            h = match *layer {
                Layer::Linear { .. } => {
                    let flat = if tape.value(h).shape().len() == 2 {
                        h
                    } else {
                        tape.flatten(h)
                    };
                    let y = tape.linear(flat, params[p], params[p + 1]);
                    p += 2;
                    y
                }
                Layer::Conv { stride, pad, .. } => {
                    let y = tape.conv2d(h, params[p], params[p + 1], stride, pad);
                    p += 2;
                    y
                }
                Layer::Relu => tape.relu(h),
                Layer::Sigmoid => tape.sigmoid(h),
                Layer::Flatten => tape.flatten(h),
            };
        }
        Ok(h)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor, ApproxError> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, 0, xv)?;
        Ok(tape.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let mut net = Network::mlp(&[3, 3], false, &mut rng()).unwrap();
        let mut p = ParamSet::new();
        p.push("l0.w", vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.])
            .unwrap();
        p.push("l0.b", vec![3], vec![0.; 3]).unwrap();
        net = net.with_params(p).unwrap();
        let x = Tensor::new(vec![1, 3], vec![0.25, -1.5, 7.0]).unwrap();
        assert_eq!(net.eval(&x).unwrap().data(), x.data());
    }

    #[test]
    fn relu_on_negative_input_is_zero() {
        let net = Network::new(vec![4], vec![Layer::Relu], &mut rng()).unwrap();
        let x = Tensor::new(vec![1, 4], vec![-1.0, -0.1, -5.0, -1e-9]).unwrap();
        assert!(net.eval(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_layer_mlp_matches_hand_computation() {
        let mut p = ParamSet::new();
        p.push("l0.w", vec![2, 2], vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        p.push("l0.b", vec![2], vec![0.0, -1.0]).unwrap();
        p.push("l2.w", vec![1, 2], vec![3.0, -0.5]).unwrap();
        p.push("l2.b", vec![1], vec![0.25]).unwrap();
        let net = Network::mlp(&[2, 2, 1], false, &mut rng())
            .unwrap()
            .with_params(p)
            .unwrap();
        // x = (2, 1): h = relu((1, 2)) = (1, 2) ; y = 3 - 1 + 0.25
        let x = Tensor::new(vec![1, 2], vec![2.0, 1.0]).unwrap();
        assert_eq!(net.eval(&x).unwrap().data(), &[2.25]);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = Network::mlp(&[3, 4, 2], false, &mut rng()).unwrap();
        let x = Tensor::new(vec![1, 5], vec![0.0; 5]).unwrap();
        assert!(matches!(net.eval(&x), Err(ApproxError::ShapeMismatch { .. })));
    }

    #[test]
    fn conv_output_shape() {
        let net = Network::new(
            vec![1, 32, 32],
            vec![
                Layer::Conv { in_ch: 1, out_ch: 8, kernel: 8, stride: 4, pad: 2 },
                Layer::Relu,
                Layer::Conv { in_ch: 8, out_ch: 16, kernel: 4, stride: 2, pad: 1 },
                Layer::Relu,
                Layer::Conv { in_ch: 16, out_ch: 16, kernel: 3, stride: 1, pad: 1 },
                Layer::Relu,
            ],
            &mut rng(),
        )
        .unwrap();
        assert_eq!(net.output_shape().unwrap(), vec![16, 4, 4]);
        let x = Tensor::zeros(&[2, 1024]);
        assert_eq!(net.eval(&x).unwrap().shape(), &[2, 16, 4, 4]);
    }
}
