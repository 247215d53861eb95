//! Multilayer perceptron with explicit per-layer captures.
//!
//! Layer `l` computes `s_l = W_lᵀ a_l` where `a_l` is the layer input with a
//! constant 1 appended, so `W_l` has shape `(fan_in + 1) × fan_out` and its
//! last row holds the biases. The output layer is linear.

mod batch;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::posterior::GammaPosterior;
use crate::special::digamma;

pub use batch::{batch_gradients, Batch, BatchGradients, FisherMode, FisherSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at pre-activation `x`; the ReLU subgradient at 0 is 0.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LikelihoodKind {
    /// Independent Gaussian per output with shared precision τ.
    Gaussian,
    /// Softmax over the outputs.
    Categorical,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Target {
    Real(Vec<f64>),
    Class(usize),
}

impl Target {
    pub fn scalar(y: f64) -> Self {
        Target::Real(vec![y])
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub likelihood: LikelihoodKind,
}

impl MlpArchitecture {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, likelihood: LikelihoodKind) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("layer sizes", "need at least input and output sizes"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes", "every layer needs at least one unit"));
        }
        Ok(Self { layer_sizes, activation, likelihood })
    }

    /// Regression net `input → hidden… → 1` with a Gaussian likelihood.
    pub fn regression(input: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(sizes, activation, LikelihoodKind::Gaussian)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two sizes")
    }

    /// `(fan_in + 1, fan_out)` for layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.layer_sizes[l] + 1, self.layer_sizes[l + 1])
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers()).map(|l| self.layer_shape(l)).collect()
    }

    pub fn num_weights(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c).sum()
    }
}

/// Per-layer weight matrices, bias in the last row.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightSet {
    pub layers: Vec<Matrix>,
}

impl WeightSet {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        Self { layers: arch.layer_shapes().into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect() }
    }

    /// Gaussian init with variance `1/fan_in` on the weights and zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(r, c)| {
                let sd = 1.0 / ((r - 1) as f64).sqrt();
                Matrix::from_fn(r, c, |i, _| if i + 1 == r { 0.0 } else { sd * rng.sample::<f64, _>(StandardNormal) })
            })
            .collect();
        Self { layers }
    }

    /// Concatenation of `vec(W_l)` over layers.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layers.iter().map(|w| w.rows() * w.cols()).sum());
        for w in &self.layers {
            out.extend(w.vec());
        }
        out
    }

    pub fn from_flat(shapes: &[(usize, usize)], flat: &[f64]) -> Result<Self> {
        let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if flat.len() != total {
            return Err(Error::Shape { context: "WeightSet::from_flat", expected: total, found: flat.len() });
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(shapes.len());
        for &(r, c) in shapes {
            layers.push(Matrix::from_vec_col_major(r, c, &flat[offset..offset + r * c])?);
            offset += r * c;
        }
        Ok(Self { layers })
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }

    fn check(&self, arch: &MlpArchitecture) -> Result<()> {
        let shapes = arch.layer_shapes();
        if self.layers.len() != shapes.len() {
            return Err(Error::Shape { context: "weights", expected: shapes.len(), found: self.layers.len() });
        }
        for (w, &(r, c)) in self.layers.iter().zip(&shapes) {
            if w.shape() != (r, c) {
                return Err(Error::Shape { context: "layer weights", expected: r * c, found: w.rows() * w.cols() });
            }
        }
        Ok(())
    }
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `a_l` for every layer, constant 1 appended.
    pub inputs: Vec<Vec<f64>>,
    /// `s_l` for every layer.
    pub preacts: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Per-example gradients: `dw[l] = a_l g_lᵀ`, `g[l] = ∂/∂s_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub dw: Vec<Matrix>,
    pub g: Vec<Vec<f64>>,
}

pub fn forward(arch: &MlpArchitecture, weights: &WeightSet, x: &[f64]) -> Result<ForwardTrace> {
    weights.check(arch)?;
    if x.len() != arch.input_dim() {
        return Err(Error::Shape { context: "forward input", expected: arch.input_dim(), found: x.len() });
    }
    Ok(forward_unchecked(arch, weights, x))
}

pub(crate) fn forward_unchecked(arch: &MlpArchitecture, weights: &WeightSet, x: &[f64]) -> ForwardTrace {
    let nl = arch.num_layers();
    let mut inputs = Vec::with_capacity(nl);
    let mut preacts = Vec::with_capacity(nl);
    let mut a: Vec<f64> = x.to_vec();
    a.push(1.0);
    for (l, w) in weights.layers.iter().enumerate() {
        let s = w.t_mul_vec(&a);
        let next = if l + 1 < nl {
            let mut h: Vec<f64> = s.iter().map(|&v| arch.activation.apply(v)).collect();
            h.push(1.0);
            Some(h)
        } else {
            None
        };
        inputs.push(core::mem::take(&mut a));
        preacts.push(s);
        if let Some(h) = next {
            a = h;
        }
    }
    let output = preacts.last().cloned().unwrap_or_default();
    ForwardTrace { inputs, preacts, output }
}

/// Prediction only; skips building the trace.
pub fn predict(arch: &MlpArchitecture, weights: &WeightSet, x: &[f64]) -> Vec<f64> {
    let nl = arch.num_layers();
    let mut a: Vec<f64> = x.to_vec();
    a.push(1.0);
    for (l, w) in weights.layers.iter().enumerate() {
        let s = w.t_mul_vec(&a);
        if l + 1 == nl {
            return s;
        }
        a = s.iter().map(|&v| arch.activation.apply(v)).collect();
        a.push(1.0);
    }
    a
}

/// Reverse-mode pass for a scalar whose gradient w.r.t. the output is
/// `output_grad`.
pub fn backward(
    arch: &MlpArchitecture,
    weights: &WeightSet,
    trace: &ForwardTrace,
    output_grad: &[f64],
) -> Result<LayerGradients> {
    weights.check(arch)?;
    if output_grad.len() != arch.output_dim() {
        return Err(Error::Shape { context: "output gradient", expected: arch.output_dim(), found: output_grad.len() });
    }
    let g = backward_g(arch, weights, trace, output_grad);
    let dw = trace.inputs.iter().zip(&g).map(|(a, gl)| Matrix::outer(a, gl)).collect();
    Ok(LayerGradients { dw, g })
}

/// Pre-activation gradients `g_l` only.
pub(crate) fn backward_g(
    arch: &MlpArchitecture,
    weights: &WeightSet,
    trace: &ForwardTrace,
    output_grad: &[f64],
) -> Vec<Vec<f64>> {
    let nl = arch.num_layers();
    let mut g: Vec<Vec<f64>> = vec![Vec::new(); nl];
    g[nl - 1] = output_grad.to_vec();
    for l in (0..nl - 1).rev() {
        let w_next = &weights.layers[l + 1];
        let fan = arch.layer_sizes[l + 1];
        let s = &trace.preacts[l];
        let gl: Vec<f64> = (0..fan)
            .map(|j| {
                let da = crate::linalg::dot(w_next.row(j), &g[l + 1]);
                da * arch.activation.derivative(s[j])
            })
            .collect();
        g[l] = gl;
    }
    g
}

fn check_tau(tau: Option<f64>) -> Result<f64> {
    match tau {
        Some(t) if t > 0.0 && t.is_finite() => Ok(t),
        Some(_) => Err(Error::invalid("tau", "noise precision must be positive and finite")),
        None => Err(Error::invalid("tau", "Gaussian likelihood needs a noise precision")),
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

fn check_target(arch: &MlpArchitecture, y: &Target) -> Result<()> {
    match (arch.likelihood, y) {
        (LikelihoodKind::Gaussian, Target::Real(v)) if v.len() == arch.output_dim() => Ok(()),
        (LikelihoodKind::Gaussian, Target::Real(v)) => {
            Err(Error::Shape { context: "regression target", expected: arch.output_dim(), found: v.len() })
        }
        (LikelihoodKind::Categorical, Target::Class(k)) if *k < arch.output_dim() => Ok(()),
        (LikelihoodKind::Categorical, Target::Class(_)) => Err(Error::invalid("target", "class index out of range")),
        _ => Err(Error::invalid("target", "target kind does not match the likelihood")),
    }
}

/// `log p(y | output)`; `tau` is required for the Gaussian likelihood.
pub fn log_likelihood(arch: &MlpArchitecture, output: &[f64], y: &Target, tau: Option<f64>) -> Result<f64> {
    check_target(arch, y)?;
    match (arch.likelihood, y) {
        (LikelihoodKind::Gaussian, Target::Real(v)) => {
            let tau = check_tau(tau)?;
            Ok(output.iter().zip(v).map(|(yh, y)| 0.5 * (tau.ln() - tau * (y - yh) * (y - yh) - (2.0 * PI).ln())).sum())
        }
        (LikelihoodKind::Categorical, Target::Class(k)) => Ok(log_softmax(output)[*k]),
        _ => unreachable!("checked above"),
    }
}

/// `∂/∂output log p(y | output)`.
pub fn output_gradient(arch: &MlpArchitecture, output: &[f64], y: &Target, tau: Option<f64>) -> Result<Vec<f64>> {
    check_target(arch, y)?;
    match (arch.likelihood, y) {
        (LikelihoodKind::Gaussian, Target::Real(v)) => {
            let tau = check_tau(tau)?;
            Ok(output.iter().zip(v).map(|(yh, y)| tau * (y - yh)).collect())
        }
        (LikelihoodKind::Categorical, Target::Class(k)) => {
            let lp = log_softmax(output);
            Ok(lp.iter().enumerate().map(|(i, l)| if i == *k { 1.0 } else { 0.0 } - l.exp()).collect())
        }
        _ => unreachable!("checked above"),
    }
}

/// `E_{q(τ)}[log N(y | ŷ, 1/τ)]`, summed over outputs.
pub fn expected_gaussian_ll(output: &[f64], y: &[f64], q_tau: &GammaPosterior) -> Result<f64> {
    q_tau.validate()?;
    if output.len() != y.len() {
        return Err(Error::Shape { context: "expected_gaussian_ll", expected: output.len(), found: y.len() });
    }
    let (a, b) = (q_tau.alpha, q_tau.beta);
    let base = digamma(a) - b.ln() - (2.0 * PI).ln();
    Ok(output.iter().zip(y).map(|(yh, y)| 0.5 * (base - (a / b) * (y - yh) * (y - yh))).sum())
}

/// Draw a target from the model's predictive distribution.
pub fn sample_targets<R: Rng + ?Sized>(
    arch: &MlpArchitecture,
    output: &[f64],
    tau: Option<f64>,
    rng: &mut R,
) -> Result<Target> {
    match arch.likelihood {
        LikelihoodKind::Gaussian => {
            let sd = 1.0 / check_tau(tau)?.sqrt();
            Ok(Target::Real(output.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect()))
        }
        LikelihoodKind::Categorical => {
            let lp = log_softmax(output);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    return Ok(Target::Class(k));
                }
            }
            Ok(Target::Class(lp.len() - 1))
        }
    }
}
