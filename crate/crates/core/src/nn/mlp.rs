use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Tanh),
            t => Err(Error::InvalidParameter(format!("unknown activation tag {t}"))),
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }
}

/// `y = act(x · w + b)` with `w` stored `in × out`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub seed: u64,
}

/// Layer inputs and post-activation outputs from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// `inputs[i]` feeds layer `i`; the last entry is the network output.
    pub activations: Vec<Array2<f64>>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input at least")
    }
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            w: net.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            b: net.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.w.iter_mut().for_each(|a| *a *= k);
        self.b.iter_mut().for_each(|a| *a *= k);
    }

    pub fn max_abs(&self) -> f64 {
        let w = self.w.iter().flat_map(|a| a.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        self.b.iter().flat_map(|a| a.iter()).fold(w, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    /// He-uniform initialisation: weights ~ U(±√(6/fan_in)), zero biases.
    /// The output layer's weights are multiplied by `output_scale`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, output_scale: f64, seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut rng = crate::rng::stream(seed, crate::rng::Stream::Init);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let scale = if i + 1 == n { output_scale } else { 1.0 };
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| scale * bound * (2.0 * rng.random::<f64>() - 1.0));
                Layer {
                    w,
                    b: Array1::zeros(fan_out),
                    activation: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Self { layers, seed }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        for l in &layers {
            if l.b.len() != l.out_dim() {
                return Err(Error::DimensionMismatch { expected: l.out_dim(), got: l.b.len() });
            }
        }
        Ok(Self { layers, seed: 0 })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass over a batch (one row per example).
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layers {
            let mut z = h.dot(&l.w);
            z += &l.b;
            l.activation.apply(&mut z);
            h = z;
        }
        Ok(h)
    }

    /// Single-example convenience wrapper.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let a = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        Ok(self.forward(&a)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<Cache> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for l in &self.layers {
            let mut z = activations.last().unwrap().dot(&l.w);
            z += &l.b;
            l.activation.apply(&mut z);
            activations.push(z);
        }
        Ok(Cache { activations })
    }

    /// Reverse pass. `grad_out` is ∂L/∂output for the cached batch. Returns
    /// the parameter gradients and ∂L/∂input.
    pub fn backward(&self, cache: &Cache, grad_out: &Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut gw = Vec::with_capacity(self.layers.len());
        let mut gb = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let out = &cache.activations[i + 1];
            match l.activation {
                Activation::Identity => {}
                Activation::Relu => Zip::from(&mut delta).and(out).for_each(|d, &y| {
                    if y <= 0.0 {
                        *d = 0.0;
                    }
                }),
                Activation::Tanh => Zip::from(&mut delta).and(out).for_each(|d, &y| *d *= 1.0 - y * y),
            }
            let input = &cache.activations[i];
            gw.push(input.t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&l.w.t());
        }
        gw.reverse();
        gb.reverse();
        (Gradients { w: gw, b: gb }, delta)
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }

    /// Flat parameter view in layer order, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = flat[k];
                k += 1;
            }
        }
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Draws a batch of inputs with entries ~ U(-1, 1).
pub fn random_batch(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| 2.0 * rng.random::<f64>() - 1.0)
}

/// Largest relative error between the analytic gradient of a mean-squared
/// loss against `target` and its central finite difference with step `eps`,
/// over every parameter and every input entry.
pub fn finite_difference_error(net: &Mlp, x: &Array2<f64>, target: &Array2<f64>, eps: f64) -> f64 {
    let mse = |y: &Array2<f64>| (y - target).mapv(|v| v * v).mean().unwrap_or(0.0);
    let cache = net.forward_cached(x).expect("input width matches");
    let grad_out = (cache.output() - target) * (2.0 / target.len() as f64);
    let (g, gx) = net.backward(&cache, &grad_out);
    let analytic = g.flatten();
    let base = net.params();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut p = base.clone();
    for k in 0..base.len() {
        p[k] = base[k] + eps;
        probe.set_params(&p);
        let up = mse(&probe.forward(x).unwrap());
        p[k] = base[k] - eps;
        probe.set_params(&p);
        let dn = mse(&probe.forward(x).unwrap());
        p[k] = base[k];
        worst = worst.max(relative_error(analytic[k], (up - dn) / (2.0 * eps)));
    }
    let mut xp = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            xp[[i, j]] = x[[i, j]] + eps;
            let up = mse(&net.forward(&xp).unwrap());
            xp[[i, j]] = x[[i, j]] - eps;
            let dn = mse(&net.forward(&xp).unwrap());
            xp[[i, j]] = x[[i, j]];
            worst = worst.max(relative_error(gx[[i, j]], (up - dn) / (2.0 * eps)));
        }
    }
    worst
}

/// `|a − b| / max(|a| + |b|, 1e-7)`; the floor keeps vanishing gradients from
/// inflating the ratio.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-7)
}
