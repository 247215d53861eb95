use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sample_gaussian_precision, SpdMatrix};
use crate::model::{predict, MlpArchitecture, WeightSet};
use crate::posterior::Posterior;
#[allow(unused_imports)]
use num_traits::Float;

/// Mean and standard error of per-split values; no standard error for a
/// single value.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub se: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyData);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = (values.len() >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Ok(Self { mean, se, n: values.len() })
    }

    pub fn median(values: &[f64]) -> Result<f64> {
        if values.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Ok(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }
}

/// Draws weight samples, factoring a dense precision once up front.
enum Sampler<'a> {
    Direct(&'a Posterior),
    Dense { shapes: &'a [(usize, usize)], mu: &'a [f64], precision: SpdMatrix },
}

impl<'a> Sampler<'a> {
    fn new(p: &'a Posterior) -> Result<Self> {
        Ok(match p {
            Posterior::Full(f) => Sampler::Dense { shapes: &f.shapes, mu: &f.mu, precision: f.precision().factored()? },
            other => Sampler::Direct(other),
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WeightSet> {
        match self {
            Sampler::Direct(p) => p.sample_weights(rng),
            Sampler::Dense { shapes, mu, precision } => {
                WeightSet::from_flat(shapes, &sample_gaussian_precision(mu, precision, rng)?)
            }
        }
    }
}

/// First network output at each input for `num_samples` weight draws;
/// row `s` holds the predictions of draw `s`.
pub fn predict_samples<R: Rng + ?Sized>(
    arch: &MlpArchitecture,
    posterior: &Posterior,
    xs: &[Vec<f64>],
    num_samples: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if num_samples == 0 {
        return Err(Error::invalid("num_samples", "must be at least 1"));
    }
    let sampler = Sampler::new(posterior)?;
    (0..num_samples)
        .map(|_| {
            let w = sampler.draw(rng)?;
            Ok(xs.iter().map(|x| predict(arch, &w, x)[0]).collect())
        })
        .collect()
}

/// Per-input mean over sample rows.
pub fn sample_means(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len() as f64;
    let mut m = alloc::vec![0.0; samples.first().map_or(0, Vec::len)];
    for row in samples {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v / n;
        }
    }
    m
}

/// Per-input sample variance across rows (the epistemic part of the
/// predictive variance).
pub fn predictive_variances(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("num_samples", "variance needs at least 2 samples"));
    }
    let m = sample_means(samples);
    let n = samples.len() as f64;
    let mut v = alloc::vec![0.0; m.len()];
    for row in samples {
        for ((a, x), mu) in v.iter_mut().zip(row).zip(&m) {
            *a += (x - mu) * (x - mu) / (n - 1.0);
        }
    }
    Ok(v)
}

/// Epistemic predictive variance at one input.
pub fn predictive_variance<R: Rng + ?Sized>(
    arch: &MlpArchitecture,
    posterior: &Posterior,
    x: &[f64],
    num_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if num_samples < 2 {
        return Err(Error::invalid("num_samples", "variance needs at least 2 samples"));
    }
    let s = predict_samples(arch, posterior, &[x.to_vec()], num_samples, rng)?;
    Ok(predictive_variances(&s)?[0])
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyData);
    }
    if predictions.len() != targets.len() {
        return Err(Error::Shape { context: "rmse", expected: targets.len(), found: predictions.len() });
    }
    let se: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((se / predictions.len() as f64).sqrt())
}

pub fn log_mean_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + (values.iter().map(|v| (v - m).exp()).sum::<f64>() / values.len() as f64).ln()
}

/// Mean over test points of `ln (1/S) Σ_s N(y | ŷ_s, 1/τ)`, computed on the
/// normalized scale and shifted by `−ln target_std` to raw units.
pub fn test_log_likelihood(samples: &[Vec<f64>], y_normalized: &[f64], tau: f64, target_std: f64) -> Result<f64> {
    if y_normalized.is_empty() || samples.is_empty() {
        return Err(Error::EmptyData);
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "must be positive"));
    }
    let c = 0.5 * tau.ln() - 0.5 * (2.0 * core::f64::consts::PI).ln();
    let mut buf = Vec::with_capacity(samples.len());
    let mut total = 0.0;
    for (i, y) in y_normalized.iter().enumerate() {
        buf.clear();
        buf.extend(samples.iter().map(|row| c - 0.5 * tau * (y - row[i]) * (y - row[i])));
        total += log_mean_exp(&buf);
    }
    Ok(total / y_normalized.len() as f64 - target_std.ln())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape { context: "pearson", expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson", "needs at least two pairs"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Expected calibration error over equal-width confidence bins.
pub fn ece(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<f64> {
    if confidences.is_empty() {
        return Err(Error::EmptyData);
    }
    if confidences.len() != correct.len() {
        return Err(Error::Shape { context: "ece", expected: confidences.len(), found: correct.len() });
    }
    if num_bins == 0 {
        return Err(Error::invalid("num_bins", "must be at least 1"));
    }
    if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::invalid("confidence", "must lie in [0, 1]"));
    }
    let mut count = alloc::vec![0usize; num_bins];
    let mut conf = alloc::vec![0.0; num_bins];
    let mut acc = alloc::vec![0.0; num_bins];
    for (c, ok) in confidences.iter().zip(correct) {
        // Bins are (lo, hi]; confidence 0 joins the first bin.
        let b = ((c * num_bins as f64).ceil() as usize).clamp(1, num_bins) - 1;
        count[b] += 1;
        conf[b] += c;
        acc[b] += if *ok { 1.0 } else { 0.0 };
    }
    let n = confidences.len() as f64;
    Ok((0..num_bins).filter(|&b| count[b] > 0).map(|b| (acc[b] - conf[b]).abs() / n).sum())
}
