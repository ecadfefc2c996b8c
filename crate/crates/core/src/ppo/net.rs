//! Dense feed-forward networks with hand-written backpropagation.
//!
//! All weights of a network live in one flat vector so optimizers and
//! gradient clipping can treat a network as a single parameter block.
//! Layer `l` stores its `out × in` weight matrix row-major followed by its
//! bias.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values kept by [`Mlp::forward_trace`] for the backward pass.
pub struct Trace {
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// Layer sizes include input and output, e.g. `[66, 128, 64, 12]`.
    /// Hidden weights use He-scaled normal initialization; the output layer is
    /// scaled by `output_gain`.
    pub fn new<R: Rng>(sizes: &[usize], activation: Activation, output_gain: f64, rng: &mut R) -> Result<Mlp> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("network sizes {sizes:?} need ≥ 2 nonzero entries")));
        }
        let mut params = Vec::new();
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let std = gain * (2.0 / n_in as f64).sqrt();
            for _ in 0..n_in * n_out {
                let x: f64 = StandardNormal.sample(rng);
                params.push(std * x);
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Ok(Mlp { sizes: sizes.to_vec(), activation, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Checks that the parameter vector matches the layer sizes.
    pub fn check(&self) -> Result<()> {
        let expected: usize = self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if self.sizes.len() < 2 || self.params.len() != expected {
            return Err(Error::Dimension { what: "network parameters", expected, actual: self.params.len() });
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(())
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let off: usize = self.sizes[..l].iter().zip(&self.sizes[1..]).map(|(i, o)| i * o + o).sum();
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_in * n_out]).unwrap();
        let b = ArrayView1::from(&self.params[off + n_in * n_out..off + n_in * n_out + n_out]);
        (w, b)
    }

    fn affine(&self, l: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let (w, b) = self.layer(l);
        let mut z = x.dot(&w.t());
        z += &b;
        z
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let layers = self.sizes.len() - 1;
        let mut a = self.affine(0, &x);
        for l in 1..layers {
            a.mapv_inplace(|z| self.activation.apply(z));
            a = self.affine(l, &a.view());
        }
        a
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> (Array2<f64>, Trace) {
        let layers = self.sizes.len() - 1;
        let mut trace = Trace { inputs: vec![x.to_owned()], pre: Vec::with_capacity(layers - 1) };
        let mut z = self.affine(0, &x);
        for l in 1..layers {
            let a = z.mapv(|v| self.activation.apply(v));
            trace.pre.push(z);
            z = self.affine(l, &a.view());
            trace.inputs.push(a);
        }
        (z, trace)
    }

    /// Gradient of `Σ d_out ⊙ output` with respect to the parameters, in the
    /// same layout as [`Mlp::params`], accumulated into `grad`.
    pub fn backward(&self, trace: &Trace, d_out: Array2<f64>, grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut dz = d_out;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &trace.inputs[l];
            let dw = dz.t().dot(x);
            let db = dz.sum_axis(Axis(0));
            let o = offsets[l];
            for (g, d) in grad[o..o + n_in * n_out].iter_mut().zip(dw.iter()) {
                *g += d;
            }
            for (g, d) in grad[o + n_in * n_out..o + n_in * n_out + n_out].iter_mut().zip(db.iter()) {
                *g += d;
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut da = dz.dot(&w);
                let act = self.activation;
                ndarray::Zip::from(&mut da)
                    .and(&trace.pre[l - 1])
                    .and(x)
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
                dz = da;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(net: &Mlp, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
        (&net.forward(x.view()) * c).sum()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for act in [Activation::Elu, Activation::Tanh] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut net = Mlp::new(&[5, 7, 6, 3], act, 1.0, &mut rng).unwrap();
            for p in net.params_mut() {
                *p += 0.1 * rng.gen_range(-1.0..1.0);
            }
            let x = Array2::from_shape_fn((4, 5), |_| rng.gen_range(-1.0..1.0));
            let c = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
            let (_, trace) = net.forward_trace(x.view());
            let mut grad = vec![0.0; net.param_count()];
            net.backward(&trace, c.clone(), &mut grad);
            let h = 1e-6;
            for i in 0..net.param_count() {
                let p0 = net.params[i];
                net.params[i] = p0 + h;
                let up = loss(&net, &x, &c);
                net.params[i] = p0 - h;
                let dn = loss(&net, &x, &c);
                net.params[i] = p0;
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{act:?} param {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn trace_output_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 2], Activation::Elu, 0.01, &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.1 - 0.5);
        assert_eq!(net.forward(x.view()), net.forward_trace(x.view()).0);
        net.check().unwrap();
        assert!(Mlp::new(&[4], Activation::Elu, 1.0, &mut rng).is_err());
    }
}
