//! Multilayer perceptrons over the autodiff tensors: parameter containers,
//! initialization, the graph-building forward pass, and a no-grad inference
//! path that produces bit-identical outputs for hot loops.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{matmul_into, sigmoid, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Relu => x.relu(),
            Activation::LeakyRelu(a) => x.leaky_relu(a),
        }
    }

    fn apply_slice(self, x: &mut [f64]) {
        match self {
            Activation::Relu => {
                for v in x.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            Activation::LeakyRelu(a) => {
                for v in x.iter_mut() {
                    if *v < 0.0 {
                        *v *= a;
                    }
                }
            }
        }
    }
}

/// Activation applied after the final affine layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Output {
    Linear,
    Sigmoid,
}

/// One affine layer; weights are `[fan_in, fan_out]` so a batch multiplies
/// from the left.
#[derive(Clone)]
pub struct LinearLayer {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Copy)]
enum Init {
    /// He-uniform, limit sqrt(6 / fan_in) — ReLU layers.
    He,
    /// Xavier-uniform, limit sqrt(6 / (fan_in + fan_out)) — leaky/linear.
    Xavier,
}

impl LinearLayer {
    fn new(fan_in: usize, fan_out: usize, init: Init, rng: &mut impl Rng) -> LinearLayer {
        let limit = match init {
            Init::He => (6.0 / fan_in as f64).sqrt(),
            Init::Xavier => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        LinearLayer {
            w: Tensor::param(w, &[fan_in, fan_out]).expect("sized by construction"),
            b: Tensor::param(vec![0.0; fan_out], &[fan_out]).expect("sized by construction"),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.w.shape()[1]
    }

    /// `out = x @ w + b` on raw buffers.
    fn infer_into(&self, x: &[f64], rows: usize, out: &mut Vec<f64>) {
        let (fi, fo) = (self.fan_in(), self.fan_out());
        out.clear();
        let b = self.b.data();
        for _ in 0..rows {
            out.extend_from_slice(&b);
        }
        matmul_into(out, x, &self.w.data(), rows, fi, fo);
    }
}

/// Network head: either the last affine layer is the output, or a dueling
/// pair combines state value and advantages as `Q = V + (A - mean_a A)`.
#[derive(Clone)]
pub enum Head {
    Plain,
    Dueling {
        value: LinearLayer,
        advantage: LinearLayer,
    },
}

/// Parameters plus architecture of one MLP.
#[derive(Clone)]
pub struct NetworkParams {
    pub layers: Vec<LinearLayer>,
    pub activation: Activation,
    pub output: Output,
    pub head: Head,
}

impl NetworkParams {
    /// Plain MLP. `dims` runs input -> hidden... -> output; the activation
    /// sits between affine layers, `output` after the last one. Hidden
    /// layers draw He-uniform weights under ReLU and Xavier-uniform under
    /// LeakyReLU; the final (linear) layer is always Xavier.
    pub fn mlp(
        dims: &[usize],
        activation: Activation,
        output: Output,
        rng: &mut impl Rng,
    ) -> Result<NetworkParams> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output dims, got {dims:?}"
            )));
        }
        let hidden_init = match activation {
            Activation::Relu => Init::He,
            Activation::LeakyRelu(_) => Init::Xavier,
        };
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let init = if i == last { Init::Xavier } else { hidden_init };
                LinearLayer::new(pair[0], pair[1], init, rng)
            })
            .collect();
        Ok(NetworkParams {
            layers,
            activation,
            output,
            head: Head::Plain,
        })
    }

    /// Dueling Q-network: every layer in `trunk_dims` is activated, then a
    /// value head (fan-out 1) and an advantage head (fan-out `n_actions`)
    /// branch off the trunk.
    pub fn dueling(
        trunk_dims: &[usize],
        n_actions: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<NetworkParams> {
        if trunk_dims.len() < 2 {
            return Err(Error::Config(format!(
                "a dueling trunk needs at least input and one hidden dim, got {trunk_dims:?}"
            )));
        }
        if n_actions < 2 {
            return Err(Error::Config(format!(
                "a dueling head needs >= 2 actions, got {n_actions}"
            )));
        }
        let hidden_init = match activation {
            Activation::Relu => Init::He,
            Activation::LeakyRelu(_) => Init::Xavier,
        };
        let layers: Vec<LinearLayer> = trunk_dims
            .windows(2)
            .map(|pair| LinearLayer::new(pair[0], pair[1], hidden_init, rng))
            .collect();
        let width = *trunk_dims.last().expect("len checked");
        Ok(NetworkParams {
            layers,
            activation,
            output: Output::Linear,
            head: Head::Dueling {
                value: LinearLayer::new(width, 1, Init::Xavier, rng),
                advantage: LinearLayer::new(width, n_actions, Init::Xavier, rng),
            },
        })
    }

    /// Multiply the output-producing layer(s) by `factor`, shrinking every
    /// output toward zero by exactly that factor (the net is linear in its
    /// final layer). Value estimators want this: at standard init scale the
    /// outputs on states the net has never seen sit at ±O(0.1), and a max
    /// bootstrap recycles that noise into targets until it swamps small
    /// real rewards.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let scale = |layer: &LinearLayer| {
            for t in [&layer.w, &layer.b] {
                let data: Vec<f64> = t.to_vec().iter().map(|v| v * factor).collect();
                t.set_data(data).expect("same length");
            }
        };
        match &self.head {
            Head::Plain => scale(self.layers.last().expect("nonempty")),
            Head::Dueling { value, advantage } => {
                scale(value);
                scale(advantage);
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        match &self.head {
            Head::Plain => self.layers.last().expect("nonempty").fan_out(),
            Head::Dueling { advantage, .. } => advantage.fan_out(),
        }
    }

    /// Graph-building forward pass over a batch `[rows, input_dim]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, cols) = x.dims2();
        if cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "layer 0: input has {cols} features, weights expect {}",
                self.input_dim()
            )));
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (_, hc) = h.dims2();
            if hc != layer.fan_in() {
                return Err(Error::Shape(format!(
                    "layer {i}: input has {hc} features, weights expect {}",
                    layer.fan_in()
                )));
            }
            h = h.matmul(&layer.w)?.add_bias(&layer.b)?;
            let activated = match self.head {
                Head::Plain => i < last,
                Head::Dueling { .. } => true,
            };
            if activated {
                h = self.activation.apply(&h);
            }
        }
        if let Head::Dueling { value, advantage } = &self.head {
            let v = h.matmul(&value.w)?.add_bias(&value.b)?;
            let a = h.matmul(&advantage.w)?.add_bias(&advantage.b)?;
            h = a.sub_col(&a.mean_rows())?.add_col(&v)?;
        }
        Ok(match self.output {
            Output::Linear => h,
            Output::Sigmoid => h.sigmoid(),
        })
    }

    /// No-grad forward pass on raw buffers. Arithmetic is ordered exactly
    /// as in [`NetworkParams::forward`], so outputs agree bit-for-bit.
    pub fn infer(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        if rows == 0 || x.len() != rows * self.input_dim() {
            return Err(Error::Shape(format!(
                "infer on {} values, expected {rows} x {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.infer_into(&cur, rows, &mut next);
            let activated = match self.head {
                Head::Plain => i < last,
                Head::Dueling { .. } => true,
            };
            if activated {
                self.activation.apply_slice(&mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        if let Head::Dueling { value, advantage } = &self.head {
            let mut v = Vec::new();
            value.infer_into(&cur, rows, &mut v);
            let mut a = Vec::new();
            advantage.infer_into(&cur, rows, &mut a);
            let n = advantage.fan_out();
            // Q = (A - mean_a A) + V, matching the graph op order.
            for i in 0..rows {
                let row = &mut a[i * n..(i + 1) * n];
                let mean = row.iter().sum::<f64>() / n as f64;
                for q in row.iter_mut() {
                    *q = (*q - mean) + v[i];
                }
            }
            cur = a;
        }
        if self.output == Output::Sigmoid {
            for v in cur.iter_mut() {
                *v = sigmoid(*v);
            }
        }
        Ok(cur)
    }

    /// Convenience single-row inference.
    pub fn infer_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.infer(x, 1)
    }

    /// All trainable tensors with stable names, in a fixed order shared by
    /// optimizers, snapshots, and parameter copies.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(self.layers.len() * 2 + 4);
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.w"), layer.w.clone()));
            out.push((format!("layer{i}.b"), layer.b.clone()));
        }
        if let Head::Dueling { value, advantage } = &self.head {
            out.push(("value.w".into(), value.w.clone()));
            out.push(("value.b".into(), value.b.clone()));
            out.push(("advantage.w".into(), advantage.w.clone()));
            out.push(("advantage.b".into(), advantage.b.clone()));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copy every parameter value from `src` (target-network sync). The two
    /// networks must share an architecture.
    pub fn copy_values_from(&mut self, src: &NetworkParams) -> Result<()> {
        let dst = self.named_tensors();
        let src = src.named_tensors();
        if dst.len() != src.len() {
            return Err(Error::Shape(
                "parameter copy between different architectures".into(),
            ));
        }
        for ((dn, dt), (sn, st)) in dst.iter().zip(&src) {
            if dn != sn || dt.shape() != st.shape() {
                return Err(Error::Shape(format!(
                    "parameter copy mismatch at {dn} vs {sn}"
                )));
            }
            dt.set_data(st.to_vec())?;
        }
        Ok(())
    }

    /// Deep copy with fresh tensors (so optimizers and copies do not alias).
    pub fn deep_clone(&self) -> NetworkParams {
        let clone_layer = |l: &LinearLayer| LinearLayer {
            w: Tensor::param(l.w.to_vec(), l.w.shape()).expect("same shape"),
            b: Tensor::param(l.b.to_vec(), l.b.shape()).expect("same shape"),
        };
        NetworkParams {
            layers: self.layers.iter().map(clone_layer).collect(),
            activation: self.activation,
            output: self.output,
            head: match &self.head {
                Head::Plain => Head::Plain,
                Head::Dueling { value, advantage } => Head::Dueling {
                    value: clone_layer(value),
                    advantage: clone_layer(advantage),
                },
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn set_layer(layer: &LinearLayer, w: Vec<f64>, b: Vec<f64>) {
        layer.w.set_data(w).unwrap();
        layer.b.set_data(b).unwrap();
    }

    #[test]
    fn two_layer_forward_matches_hand_computation() {
        // x = [1, 0.5]; z1 = x@W1 + b1 = [3, 3.5]; relu keeps both;
        // z2 = z1@W2 + b2 = [3*1 + 3.5*2, 3*(-1) + 3.5*0] + [0, 1] = [10, -2].
        let mut rng = StdRng::seed_from_u64(0);
        let net = NetworkParams::mlp(&[2, 2, 2], Activation::Relu, Output::Linear, &mut rng)
            .unwrap();
        set_layer(&net.layers[0], vec![1.0, 2.0, 3.0, 4.0], vec![0.5, -0.5]);
        set_layer(&net.layers[1], vec![1.0, -1.0, 2.0, 0.0], vec![0.0, 1.0]);
        let x = Tensor::constant(vec![1.0, 0.5], &[1, 2]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.to_vec(), vec![10.0, -2.0]);
    }

    #[test]
    fn scaling_the_output_layer_scales_every_output_exactly() {
        let mut rng = StdRng::seed_from_u64(21);
        let x = vec![0.7, -0.3, 1.1, -0.2, 0.4, 0.9];
        let mut plain =
            NetworkParams::mlp(&[3, 6, 2], Activation::Relu, Output::Linear, &mut rng).unwrap();
        let mut duel = NetworkParams::dueling(&[3, 6], 2, Activation::Relu, &mut rng).unwrap();
        for net in [&mut plain, &mut duel] {
            let before = net.infer(&x, 2).unwrap();
            net.scale_output_layer(0.5);
            let after = net.infer(&x, 2).unwrap();
            for (b, a) in before.iter().zip(&after) {
                assert_eq!(*a, b * 0.5);
            }
        }
    }

    #[test]
    fn zeroed_final_layer_with_sigmoid_outputs_half() {
        let mut rng = StdRng::seed_from_u64(1);
        let net = NetworkParams::mlp(
            &[3, 8, 1],
            Activation::LeakyRelu(0.01),
            Output::Sigmoid,
            &mut rng,
        )
        .unwrap();
        let last = net.layers.last().unwrap();
        set_layer(last, vec![0.0; last.w.len()], vec![0.0]);
        let y = net.infer(&[0.3, -0.8, 2.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
    }

    #[test]
    fn dueling_q_is_invariant_to_constant_advantage_shift() {
        let mut rng = StdRng::seed_from_u64(2);
        let net = NetworkParams::dueling(&[4, 16, 8], 3, Activation::Relu, &mut rng).unwrap();
        let x = vec![0.5, -1.0, 0.25, 2.0];
        let q0 = net.infer_one(&x).unwrap();
        if let Head::Dueling { advantage, .. } = &net.head {
            let shifted: Vec<f64> = advantage.b.to_vec().iter().map(|b| b + 7.5).collect();
            advantage.b.set_data(shifted).unwrap();
        }
        let q1 = net.infer_one(&x).unwrap();
        for (a, b) in q0.iter().zip(&q1) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn infer_matches_graph_forward_bitwise() {
        let mut rng = StdRng::seed_from_u64(3);
        let configs: Vec<NetworkParams> = vec![
            NetworkParams::mlp(&[5, 7, 4], Activation::Relu, Output::Linear, &mut rng).unwrap(),
            NetworkParams::mlp(
                &[5, 6, 1],
                Activation::LeakyRelu(0.2),
                Output::Sigmoid,
                &mut rng,
            )
            .unwrap(),
            NetworkParams::dueling(&[5, 9], 3, Activation::Relu, &mut rng).unwrap(),
            NetworkParams::dueling(&[5, 8, 6], 2, Activation::LeakyRelu(0.01), &mut rng)
                .unwrap(),
        ];
        for net in &configs {
            let x: Vec<f64> = (0..3 * 5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let graph = net
                .forward(&Tensor::constant(x.clone(), &[3, 5]).unwrap())
                .unwrap();
            let raw = net.infer(&x, 3).unwrap();
            assert_eq!(graph.to_vec(), raw, "infer must be bit-identical");
        }
    }

    #[test]
    fn init_limits_follow_fan_rules() {
        let mut rng = StdRng::seed_from_u64(4);
        let relu_net =
            NetworkParams::mlp(&[10, 20, 5], Activation::Relu, Output::Linear, &mut rng).unwrap();
        // Hidden layer under ReLU: He-uniform with limit sqrt(6/10).
        let he = (6.0_f64 / 10.0).sqrt();
        let w0 = relu_net.layers[0].w.to_vec();
        assert!(w0.iter().all(|v| v.abs() < he));
        assert!(w0.iter().any(|v| v.abs() > he * 0.5), "degenerate init");
        // Final layer: Xavier with limit sqrt(6/(20+5)).
        let xa = (6.0_f64 / 25.0).sqrt();
        assert!(relu_net.layers[1].w.to_vec().iter().all(|v| v.abs() < xa));
        // Biases start at zero.
        assert!(relu_net.layers[0].b.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_names_offending_layer_on_mismatch() {
        let mut rng = StdRng::seed_from_u64(5);
        let net =
            NetworkParams::mlp(&[4, 6, 2], Activation::Relu, Output::Linear, &mut rng).unwrap();
        let x = Tensor::constant(vec![0.0; 3], &[1, 3]).unwrap();
        let err = net.forward(&x).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "got: {err}");
    }

    #[test]
    fn copy_values_syncs_bit_for_bit() {
        let mut rng = StdRng::seed_from_u64(6);
        let a = NetworkParams::dueling(&[3, 5], 2, Activation::Relu, &mut rng).unwrap();
        let mut b = a.deep_clone();
        // Drift the copy, then sync back.
        for (_, t) in b.named_tensors() {
            let bumped: Vec<f64> = t.to_vec().iter().map(|v| v + 1.0).collect();
            t.set_data(bumped).unwrap();
        }
        b.copy_values_from(&a).unwrap();
        for ((_, ta), (_, tb)) in a.named_tensors().iter().zip(&b.named_tensors()) {
            assert_eq!(ta.to_vec(), tb.to_vec());
        }
        // Deep clone must not alias storage.
        b.named_tensors()[0].1.set_data(vec![9.0; 15]).unwrap();
        assert_ne!(a.named_tensors()[0].1.to_vec(), vec![9.0; 15]);
    }

    #[test]
    fn gradients_match_finite_differences_across_architectures() {
        // Small-scale version of the acceptance-level check: every
        // activation/head/output combination, one random net each.
        let mut rng = StdRng::seed_from_u64(7);
        let nets: Vec<NetworkParams> = vec![
            NetworkParams::mlp(&[4, 6, 3], Activation::Relu, Output::Linear, &mut rng).unwrap(),
            NetworkParams::mlp(
                &[4, 5, 1],
                Activation::LeakyRelu(0.01),
                Output::Sigmoid,
                &mut rng,
            )
            .unwrap(),
            NetworkParams::dueling(&[4, 7], 3, Activation::LeakyRelu(0.2), &mut rng).unwrap(),
            NetworkParams::dueling(&[4, 6, 5], 2, Activation::Relu, &mut rng).unwrap(),
        ];
        for net in &nets {
            let x: Vec<f64> = (0..2 * 4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let t: Vec<f64> = (0..2 * net.output_dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let loss_of = |net: &NetworkParams| -> f64 {
                let out = net
                    .forward(&Tensor::constant(x.clone(), &[2, 4]).unwrap())
                    .unwrap();
                let target =
                    Tensor::constant(t.clone(), &[2, net.output_dim()]).unwrap();
                let d = out.sub(&target).unwrap();
                d.mul(&d).unwrap().mean_all().item().unwrap()
            };
            let out = net
                .forward(&Tensor::constant(x.clone(), &[2, 4]).unwrap())
                .unwrap();
            let target = Tensor::constant(t.clone(), &[2, net.output_dim()]).unwrap();
            let d = out.sub(&target).unwrap();
            let loss = d.mul(&d).unwrap().mean_all();
            loss.backward().unwrap();

            for (name, tensor) in net.named_tensors() {
                let analytic = tensor.grad_or_zeros();
                let base = tensor.to_vec();
                let mut numeric = Vec::with_capacity(base.len());
                for i in 0..base.len() {
                    let mut up = base.clone();
                    up[i] += 1e-5;
                    tensor.set_data(up).unwrap();
                    let fu = loss_of(net);
                    let mut dn = base.clone();
                    dn[i] -= 1e-5;
                    tensor.set_data(dn).unwrap();
                    let fd = loss_of(net);
                    tensor.set_data(base.clone()).unwrap();
                    numeric.push((fu - fd) / 2e-5);
                }
                for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
                    let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                    assert!(rel < 1e-4, "{name}[{i}]: analytic {a} vs numeric {n}");
                }
            }
        }
    }
}
