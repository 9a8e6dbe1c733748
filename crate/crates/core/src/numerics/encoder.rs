//! A small fully-connected feature encoder with explicit analytic gradients.
//!
//! Hidden layers use tanh, the output layer is linear, and the final output is
//! L2-normalized so that inner products against prototypes are cosine
//! similarities. The backward pass goes through the normalization Jacobian.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights of one branch encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Layer>,
}

/// Per-layer gradients, shape-matching [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<Layer>,
}

/// Activations saved by [`encode`] for the exact backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (first entry is the raw input vector).
    inputs: Vec<Array1<f64>>,
    /// Post-activation output of each hidden layer.
    hidden_acts: Vec<Array1<f64>>,
    /// L2 norm of the unnormalized final-layer output.
    norm: f64,
    /// Normalized feature (the encode result).
    feature: Array1<f64>,
}

impl EncoderParams {
    /// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Domain("encoder dims must be positive".into()));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden_dims);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-bound..bound)
            });
            let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
            layers.push(Layer { weight, bias });
        }
        Ok(EncoderParams { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    /// Shape-matched zero gradients.
    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn shape_matches(&self, other: &EncoderParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }
}

impl ParamGrads {
    pub fn scaled_add(&mut self, factor: f64, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(factor, &b.weight);
            a.bias.scaled_add(factor, &b.bias);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }
}

/// Forward pass: tanh hidden layers, linear output, L2 normalization.
pub fn encode(params: &EncoderParams, x: &Array1<f64>) -> Result<(Array1<f64>, ForwardCache)> {
    if x.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "encode: input dim {} != encoder input dim {}",
            x.len(),
            params.input_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut hidden_acts = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut cur = x.clone();
    for (li, layer) in params.layers.iter().enumerate() {
        inputs.push(cur.clone());
        let z = layer.weight.dot(&cur) + &layer.bias;
        if li + 1 < n_layers {
            cur = z.mapv(f64::tanh);
            hidden_acts.push(cur.clone());
        } else {
            cur = z;
        }
    }
    let raw_output = cur;
    let norm = raw_output.dot(&raw_output).sqrt();
    if norm < 1e-12 {
        return Err(Error::Degenerate(
            "encode: zero-norm pre-normalization output".into(),
        ));
    }
    let feature = &raw_output / norm;
    let cache = ForwardCache {
        inputs,
        hidden_acts,
        norm,
        feature: feature.clone(),
    };
    Ok((feature, cache))
}

/// Backward pass: gradients of a scalar loss wrt every weight and bias, given
/// the loss gradient wrt the normalized feature.
pub fn encode_backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_feature: &Array1<f64>,
) -> Result<ParamGrads> {
    let n_layers = params.layers.len();
    if cache.inputs.len() != n_layers
        || grad_feature.len() != params.output_dim()
        || cache.inputs[0].len() != params.input_dim()
    {
        return Err(Error::Shape("encode_backward: cache/params mismatch".into()));
    }
    // Normalization Jacobian: y = v/|v|  =>  dL/dv = (g - (g.y) y)/|v|.
    let y = &cache.feature;
    let proj = grad_feature.dot(y);
    let mut delta = (grad_feature - &(y * proj)) / cache.norm;

    let mut grads = params.zero_grads();
    for li in (0..n_layers).rev() {
        let input = &cache.inputs[li];
        // delta is dL/dz for this layer (output layer is linear; hidden tanh
        // derivative applied when propagating past the activation below).
        for (r, dr) in delta.iter().enumerate() {
            for (c, ic) in input.iter().enumerate() {
                grads.layers[li].weight[[r, c]] += dr * ic;
            }
            grads.layers[li].bias[r] += dr;
        }
        if li > 0 {
            let mut back = params.layers[li].weight.t().dot(&delta);
            let act = &cache.hidden_acts[li - 1];
            for (b, a) in back.iter_mut().zip(act.iter()) {
                *b *= 1.0 - a * a;
            }
            delta = back;
        }
    }
    Ok(grads)
}

/// One plain SGD step with decoupled-style L2 weight decay:
/// `p <- p - lr * (g + wd * p)`. Pure function of its inputs.
pub fn sgd_step(
    params: &EncoderParams,
    grads: &ParamGrads,
    lr: f64,
    weight_decay: f64,
) -> Result<EncoderParams> {
    if params.layers.len() != grads.layers.len() {
        return Err(Error::Shape("sgd_step: grads do not match params".into()));
    }
    let mut out = params.clone();
    for (layer, (g, p)) in out
        .layers
        .iter_mut()
        .zip(grads.layers.iter().zip(&params.layers))
    {
        if layer.weight.dim() != g.weight.dim() || layer.bias.len() != g.bias.len() {
            return Err(Error::Shape("sgd_step: grads do not match params".into()));
        }
        if g.weight.iter().any(|v| !v.is_finite()) || g.bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sgd_step: non-finite gradient entry".into()));
        }
        layer.weight = &p.weight - &((&g.weight + &(&p.weight * weight_decay)) * lr);
        layer.bias = &p.bias - &((&g.bias + &(&p.bias * weight_decay)) * lr);
    }
    Ok(out)
}

/// Exponentially averaged copy of encoder params (the momentum encoder).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumParams {
    pub params: EncoderParams,
    pub iteration: u64,
}

impl MomentumParams {
    /// A^0(theta) = theta.
    pub fn init(theta: &EncoderParams) -> Self {
        MomentumParams {
            params: theta.clone(),
            iteration: 0,
        }
    }
}

/// A^k = lambda * A^{k-1} + (1 - lambda) * theta, entrywise.
pub fn momentum_update(
    prev: &MomentumParams,
    theta: &EncoderParams,
    lambda: f64,
) -> Result<MomentumParams> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Domain(format!(
            "momentum coefficient must lie in [0,1), got {lambda}"
        )));
    }
    if !prev.params.shape_matches(theta) {
        return Err(Error::Shape("momentum_update: shape mismatch".into()));
    }
    let mut out = prev.params.clone();
    for (layer, t) in out.layers.iter_mut().zip(&theta.layers) {
        layer.weight = &layer.weight * lambda + &(&t.weight * (1.0 - lambda));
        layer.bias = &layer.bias * lambda + &(&t.bias * (1.0 - lambda));
    }
    Ok(MomentumParams {
        params: out,
        iteration: prev.iteration + 1,
    })
}

/// Step schedule: base_lr / 10^floor(epoch/20).
pub fn learning_rate_at(epoch: usize, base_lr: f64) -> f64 {
    base_lr / 10f64.powi((epoch / 20) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::finite_diff_check;
    use ndarray::array;
    use rand::SeedableRng;

    fn identity_single_layer(dim: usize) -> EncoderParams {
        EncoderParams {
            layers: vec![Layer {
                weight: Array2::eye(dim),
                bias: Array1::zeros(dim),
            }],
        }
    }

    #[test]
    fn encode_identity_normalizes() {
        let params = identity_single_layer(2);
        let (f, _) = encode(&params, &array![3.0, 4.0]).unwrap();
        assert!((f[0] - 0.6).abs() < 1e-12);
        assert!((f[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn encode_zero_input_is_degenerate() {
        let params = identity_single_layer(3);
        let err = encode(&params, &Array1::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn encode_dimension_mismatch() {
        let params = identity_single_layer(3);
        assert!(matches!(
            encode(&params, &array![1.0, 2.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn encode_matches_independent_forward_oracle() {
        // Straightforward reimplementation with plain loops.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = EncoderParams::new(5, &[7], 4, &mut rng).unwrap();
        let x: Array1<f64> = (0..5).map(|i| 0.3 * i as f64 - 0.7).collect();
        let (f, _) = encode(&params, &x).unwrap();

        let mut cur: Vec<f64> = x.to_vec();
        for (li, layer) in params.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.weight.nrows()];
            for r in 0..layer.weight.nrows() {
                let mut s = layer.bias[r];
                for c in 0..layer.weight.ncols() {
                    s += layer.weight[[r, c]] * cur[c];
                }
                next[r] = if li + 1 < params.layers.len() { s.tanh() } else { s };
            }
            cur = next;
        }
        let norm: f64 = cur.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (a, b) in f.iter().zip(cur.iter().map(|v| v / norm)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = EncoderParams::new(4, &[5], 3, &mut rng).unwrap();
        let x: Array1<f64> = array![0.5, -0.2, 0.1, 0.9];
        let (_, cache) = encode(&params, &x).unwrap();
        let grads = encode_backward(&params, &cache, &Array1::zeros(3)).unwrap();
        for l in &grads.layers {
            assert!(l.weight.iter().all(|v| *v == 0.0));
            assert!(l.bias.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let params = EncoderParams::new(4, &[6], 3, &mut rng).unwrap();
            let x: Array1<f64> = (0..4)
                .map(|i| 0.2 * (i as f64 + 1.0) + 0.05 * trial as f64)
                .collect();
            // Loss: fixed linear functional of the feature.
            let w = array![0.7, -1.3, 0.4];
            let max_rel = finite_diff_check(&params, &x, |f| f.dot(&w), |_f| w.clone());
            assert!(max_rel < 1e-4, "trial {trial}: rel err {max_rel}");
        }
    }

    #[test]
    fn backward_identity_layer_matches_hand_jacobian() {
        // Single identity layer, loss = first feature coordinate.
        // y = x/|x|; dy0/dx = (e0 - y0 * y)/|x|.
        let params = identity_single_layer(2);
        let x = array![3.0, 4.0];
        let (f, cache) = encode(&params, &x).unwrap();
        let grads = encode_backward(&params, &cache, &array![1.0, 0.0]).unwrap();
        let norm = 5.0;
        let expect = [
            (1.0 - f[0] * f[0]) / norm, // d loss / d v0
            (0.0 - f[0] * f[1]) / norm, // d loss / d v1
        ];
        // W = I so dL/dW[r][c] = delta_r * x_c, dL/db[r] = delta_r.
        for r in 0..2 {
            assert!((grads.layers[0].bias[r] - expect[r]).abs() < 1e-12);
            for c in 0..2 {
                assert!((grads.layers[0].weight[[r, c]] - expect[r] * x[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = EncoderParams::new(3, &[4], 2, &mut rng).unwrap();
        let mut grads = params.zero_grads();
        for l in &mut grads.layers {
            l.weight.fill(1.5);
            l.bias.fill(-0.5);
        }
        let out = sgd_step(&params, &grads, 0.0, 0.0005).unwrap();
        assert_eq!(out, params);
    }

    #[test]
    fn sgd_one_step_arithmetic() {
        // Single scalar weight w=1, grad=2, lr=0.1, wd=0 -> w=0.8.
        let params = EncoderParams {
            layers: vec![Layer {
                weight: array![[1.0]],
                bias: array![0.0],
            }],
        };
        let grads = ParamGrads {
            layers: vec![Layer {
                weight: array![[2.0]],
                bias: array![0.0],
            }],
        };
        let out = sgd_step(&params, &grads, 0.1, 0.0).unwrap();
        assert!((out.layers[0].weight[[0, 0]] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = EncoderParams::new(3, &[4], 2, &mut rng).unwrap();
        let mut grads = params.zero_grads();
        for l in &mut grads.layers {
            l.weight.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            l.bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        let (lr, wd) = (0.00035, 0.0005);
        let out = sgd_step(&params, &grads, lr, wd).unwrap();
        for (li, l) in out.layers.iter().enumerate() {
            for (o, (p, g)) in l.weight.iter().zip(
                params.layers[li]
                    .weight
                    .iter()
                    .zip(grads.layers[li].weight.iter()),
            ) {
                let expect = p - lr * (g + wd * p);
                assert!((o - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sgd_rejects_non_finite_grads() {
        let params = identity_single_layer(2);
        let mut grads = params.zero_grads();
        grads.layers[0].weight[[0, 0]] = f64::NAN;
        assert!(matches!(
            sgd_step(&params, &grads, 0.1, 0.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn momentum_lambda_zero_copies_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = EncoderParams::new(3, &[], 2, &mut rng).unwrap();
        let b = EncoderParams::new(3, &[], 2, &mut rng).unwrap();
        let m = momentum_update(&MomentumParams::init(&a), &b, 0.0).unwrap();
        assert_eq!(m.params, b);
        assert_eq!(m.iteration, 1);
    }

    #[test]
    fn momentum_two_step_scalar() {
        // A_prev=1.0, theta=0.0, lambda=0.9 applied twice -> 0.81.
        let theta = EncoderParams {
            layers: vec![Layer {
                weight: array![[0.0]],
                bias: array![0.0],
            }],
        };
        let mut m = MomentumParams::init(&EncoderParams {
            layers: vec![Layer {
                weight: array![[1.0]],
                bias: array![0.0],
            }],
        });
        m = momentum_update(&m, &theta, 0.9).unwrap();
        m = momentum_update(&m, &theta, 0.9).unwrap();
        assert!((m.params.layers[0].weight[[0, 0]] - 0.81).abs() < 1e-15);
        assert_eq!(m.iteration, 2);
    }

    #[test]
    fn momentum_rejects_out_of_range_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = EncoderParams::new(2, &[], 2, &mut rng).unwrap();
        let m = MomentumParams::init(&a);
        assert!(momentum_update(&m, &a, 1.0).is_err());
        assert!(momentum_update(&m, &a, -0.1).is_err());
    }

    #[test]
    fn momentum_is_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = EncoderParams::new(3, &[4], 2, &mut rng).unwrap();
        let b = EncoderParams::new(3, &[4], 2, &mut rng).unwrap();
        let m = momentum_update(&MomentumParams::init(&a), &b, 0.7).unwrap();
        for (li, l) in m.params.layers.iter().enumerate() {
            for ((v, x), y) in l
                .weight
                .iter()
                .zip(a.layers[li].weight.iter())
                .zip(b.layers[li].weight.iter())
            {
                let (lo, hi) = if x < y { (x, y) } else { (y, x) };
                assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn learning_rate_schedule() {
        assert!((learning_rate_at(0, 0.00035) - 0.00035).abs() < 1e-18);
        assert!((learning_rate_at(19, 0.00035) - 0.00035).abs() < 1e-18);
        assert!((learning_rate_at(20, 0.00035) - 0.000035).abs() < 1e-18);
        assert!((learning_rate_at(40, 0.00035) - 0.0000035).abs() < 1e-18);
    }
}
