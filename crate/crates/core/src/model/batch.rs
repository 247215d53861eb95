use alloc::vec::Vec;

use rand::Rng;

use super::{
    backward_g, check_target, forward_unchecked, log_likelihood, output_gradient, sample_targets, MlpArchitecture,
    Target, WeightSet,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A minibatch of inputs and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Target>,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Target>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape { context: "batch targets", expected: inputs.len(), found: targets.len() });
        }
        Ok(Self { inputs, targets })
    }

    /// Scalar regression batch.
    pub fn regression(inputs: Vec<Vec<f64>>, y: &[f64]) -> Result<Self> {
        Self::new(inputs, y.iter().map(|&v| Target::scalar(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }
}

/// Which targets feed the curvature statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FisherMode {
    /// Targets drawn from the model's own predictive distribution.
    #[default]
    True,
    /// The observed targets.
    Empirical,
}

/// Per-example layer inputs `a_l` and pre-activation gradients `g_l` used for
/// curvature statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherSample {
    pub a: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

impl FisherSample {
    /// Flattened per-example gradient, `vec(a_l g_lᵀ)` concatenated over layers.
    pub fn flat_gradient(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (a, g) in self.a.iter().zip(&self.g) {
            for gj in g {
                out.extend(a.iter().map(|ai| ai * gj));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradients {
    /// Batch mean of `∇_W log p(y | x, W)` on the observed targets.
    pub mean_dw: Vec<Matrix>,
    /// Batch mean of `log p(y | x, W)`.
    pub mean_log_likelihood: f64,
    pub fisher: Vec<FisherSample>,
}

impl BatchGradients {
    pub fn batch_size(&self) -> usize {
        self.fisher.len()
    }

    pub fn mean_dw_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in &self.mean_dw {
            out.extend(m.vec());
        }
        out
    }

    /// Batch mean of `a_l a_lᵀ`.
    pub fn mean_aat(&self, l: usize) -> Matrix {
        mean_outer(self.fisher.iter().map(|s| s.a[l].as_slice()))
    }

    /// Batch mean of `g_l g_lᵀ`.
    pub fn mean_ggt(&self, l: usize) -> Matrix {
        mean_outer(self.fisher.iter().map(|s| s.g[l].as_slice()))
    }

    /// Batch mean of the squared per-example gradient, flattened.
    pub fn mean_sq_flat(&self) -> Vec<f64> {
        let mut acc: Vec<f64> = Vec::new();
        for s in &self.fisher {
            let g = s.flat_gradient();
            if acc.is_empty() {
                acc = alloc::vec![0.0; g.len()];
            }
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v * v;
            }
        }
        let n = self.fisher.len().max(1) as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        acc
    }

    /// Batch mean of the per-example gradient outer product, flattened.
    pub fn mean_flat_outer(&self) -> Matrix {
        let flats: Vec<Vec<f64>> = self.fisher.iter().map(FisherSample::flat_gradient).collect();
        mean_outer(flats.iter().map(Vec::as_slice))
    }

    pub fn is_finite(&self) -> bool {
        self.mean_log_likelihood.is_finite()
            && self.mean_dw.iter().all(Matrix::is_finite)
            && self.fisher.iter().all(|s| s.g.iter().flatten().all(|v| v.is_finite()))
    }
}

fn mean_outer<'a>(vs: impl Iterator<Item = &'a [f64]>) -> Matrix {
    let mut acc: Option<Matrix> = None;
    let mut n = 0usize;
    for v in vs {
        let m = acc.get_or_insert_with(|| Matrix::zeros(v.len(), v.len()));
        for i in 0..v.len() {
            if v[i] == 0.0 {
                continue;
            }
            let row = m.row_mut(i);
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += v[i] * vj;
            }
        }
        n += 1;
    }
    let mut m = acc.unwrap_or_else(|| Matrix::zeros(0, 0));
    if n > 0 {
        m.scale_in_place(1.0 / n as f64);
    }
    m
}

/// Gradients of the batch log likelihood at `weights`, plus the per-example
/// captures for curvature statistics. `tau` is the noise precision for a
/// Gaussian likelihood.
pub fn batch_gradients<R: Rng + ?Sized>(
    arch: &MlpArchitecture,
    weights: &WeightSet,
    batch: &Batch,
    tau: Option<f64>,
    mode: FisherMode,
    rng: &mut R,
) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(Error::EmptyData);
    }
    let shapes = arch.layer_shapes();
    let mut mean_dw: Vec<Matrix> = shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
    let mut fisher = Vec::with_capacity(batch.len());
    let mut ll = 0.0;
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        if x.len() != arch.input_dim() {
            return Err(Error::Shape { context: "batch input", expected: arch.input_dim(), found: x.len() });
        }
        check_target(arch, y)?;
        let trace = forward_unchecked(arch, weights, x);
        ll += log_likelihood(arch, &trace.output, y, tau)?;
        let og = output_gradient(arch, &trace.output, y, tau)?;
        let g = backward_g(arch, weights, &trace, &og);
        for (m, (a, gl)) in mean_dw.iter_mut().zip(trace.inputs.iter().zip(&g)) {
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                for (r, &gj) in m.row_mut(i).iter_mut().zip(gl) {
                    *r += ai * gj;
                }
            }
        }
        let g_fisher = match mode {
            FisherMode::Empirical => g,
            FisherMode::True => {
                let y_model = sample_targets(arch, &trace.output, tau, rng)?;
                let og = output_gradient(arch, &trace.output, &y_model, tau)?;
                backward_g(arch, weights, &trace, &og)
            }
        };
        fisher.push(FisherSample { a: trace.inputs, g: g_fisher });
    }
    let n = batch.len() as f64;
    mean_dw.iter_mut().for_each(|m| m.scale_in_place(1.0 / n));
    Ok(BatchGradients { mean_dw, mean_log_likelihood: ll / n, fisher })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{backward, forward, Activation, LikelihoodKind};
    use crate::rng::seeded;
    use alloc::vec;

    fn setup() -> (MlpArchitecture, WeightSet, Batch) {
        let arch = MlpArchitecture::regression(2, &[3], Activation::Tanh).unwrap();
        let w = WeightSet::init(&arch, &mut seeded(1));
        let batch =
            Batch::regression(vec![vec![0.5, -1.0], vec![1.5, 0.2], vec![-0.3, 0.9]], &[0.1, -0.4, 1.2]).unwrap();
        (arch, w, batch)
    }

    #[test]
    fn mean_gradient_is_average_of_per_example() {
        let (arch, w, batch) = setup();
        let bg = batch_gradients(&arch, &w, &batch, Some(2.0), FisherMode::Empirical, &mut seeded(0)).unwrap();
        let mut expected: Vec<Matrix> = arch.layer_shapes().iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        for (x, y) in batch.inputs.iter().zip(&batch.targets) {
            let t = forward(&arch, &w, x).unwrap();
            let og = output_gradient(&arch, &t.output, y, Some(2.0)).unwrap();
            let g = backward(&arch, &w, &t, &og).unwrap();
            for (e, d) in expected.iter_mut().zip(&g.dw) {
                e.add_scaled(d, 1.0 / 3.0);
            }
        }
        for (a, b) in bg.mean_dw.iter().zip(&expected) {
            assert!(a.max_abs_diff(b) < 1e-14);
        }
    }

    #[test]
    fn empirical_fisher_uses_observed_targets() {
        let (arch, w, batch) = setup();
        let bg = batch_gradients(&arch, &w, &batch, Some(2.0), FisherMode::Empirical, &mut seeded(0)).unwrap();
        let mut mean = vec![0.0; arch.num_weights()];
        for s in &bg.fisher {
            for (m, v) in mean.iter_mut().zip(s.flat_gradient()) {
                *m += v / 3.0;
            }
        }
        for (a, b) in mean.iter().zip(bg.mean_dw_flat()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn kronecker_statistics_are_consistent_with_flat_outer() {
        // Single example: vec(a gᵀ) vec(a gᵀ)ᵀ = (g gᵀ) ⊗ (a aᵀ).
        let (arch, w, batch) = setup();
        let one = batch.subset(&[1]);
        let bg = batch_gradients(&arch, &w, &one, Some(1.0), FisherMode::True, &mut seeded(9)).unwrap();
        let dense = bg.mean_flat_outer();
        let (r, c) = arch.layer_shape(0);
        let k = bg.mean_ggt(0).kron(&bg.mean_aat(0));
        let n = r * c;
        for i in 0..n {
            for j in 0..n {
                assert!((dense[(i, j)] - k[(i, j)]).abs() < 1e-13);
            }
        }
        let sq = bg.mean_sq_flat();
        for i in 0..dense.rows() {
            assert!((sq[i] - dense[(i, i)]).abs() < 1e-13);
        }
    }

    #[test]
    fn true_fisher_matches_expected_curvature_for_linear_model() {
        // Linear Gaussian model: E_y[g gᵀ] = τ for the output, so the sampled
        // mean of g² over many draws approaches τ.
        let arch = MlpArchitecture::new(vec![1, 1], Activation::Relu, LikelihoodKind::Gaussian).unwrap();
        let w = WeightSet::zeros(&arch);
        let batch = Batch::regression(vec![vec![1.0]; 20_000], &vec![0.0; 20_000]).unwrap();
        let bg = batch_gradients(&arch, &w, &batch, Some(4.0), FisherMode::True, &mut seeded(5)).unwrap();
        let s = bg.mean_ggt(0)[(0, 0)];
        assert!((s - 4.0).abs() < 0.15, "{s}");
    }

    #[test]
    fn errors() {
        let (arch, w, batch) = setup();
        let empty = batch.subset(&[]);
        assert_eq!(
            batch_gradients(&arch, &w, &empty, Some(1.0), FisherMode::True, &mut seeded(0)),
            Err(Error::EmptyData)
        );
        let bad = Batch::regression(vec![vec![1.0]], &[0.0]).unwrap();
        assert!(batch_gradients(&arch, &w, &bad, Some(1.0), FisherMode::True, &mut seeded(0)).is_err());
        assert!(Batch::regression(vec![vec![1.0]], &[0.0, 1.0]).is_err());
    }
}
