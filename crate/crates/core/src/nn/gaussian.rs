use super::{Mat, Real};
use crate::{LspcError, Result};

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

#[inline]
pub(crate) fn clamp_log_std<F: Real>(v: F) -> F {
    v.max(F::lit(LOG_STD_MIN)).min(F::lit(LOG_STD_MAX))
}

#[inline]
pub(crate) fn log_std_passes<F: Real>(raw: F) -> bool {
    raw >= F::lit(LOG_STD_MIN) && raw <= F::lit(LOG_STD_MAX)
}

/// Diagonal Gaussian with log standard deviation clamped to `[-4, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian<F> {
    pub mean: Vec<F>,
    pub log_std: Vec<F>,
}

impl<F: Real> DiagGaussian<F> {
    /// Clamps `log_std` into range.
    pub fn new(mean: Vec<F>, log_std: Vec<F>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(LspcError::Shape(format!(
                "mean has {} dims, log_std {}",
                mean.len(),
                log_std.len()
            )));
        }
        let log_std = log_std.into_iter().map(clamp_log_std).collect();
        Ok(DiagGaussian { mean, log_std })
    }

    /// Splits a raw head output `[mean | log_std]`.
    pub fn from_raw(raw: &[F]) -> Result<Self> {
        if raw.len() % 2 != 0 {
            return Err(LspcError::Shape("gaussian head output must have even width".into()));
        }
        let k = raw.len() / 2;
        Self::new(raw[..k].to_vec(), raw[k..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<F> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }
}

/// `KL(N(mean, diag sigma^2) || N(0, I))` in closed form.
pub fn kl_to_standard_normal<F: Real>(g: &DiagGaussian<F>) -> F {
    let half = F::lit(0.5);
    g.mean
        .iter()
        .zip(&g.log_std)
        .map(|(&m, &l)| half * (m * m + (l + l).exp() - (l + l) - F::one()))
        .sum()
}

/// Reparameterized draw `mean + exp(log_std) * noise`.
pub fn gaussian_sample<F: Real>(g: &DiagGaussian<F>, noise: &[F]) -> Result<Vec<F>> {
    if noise.len() != g.dim() {
        return Err(LspcError::Shape(format!("noise has {} dims, gaussian {}", noise.len(), g.dim())));
    }
    Ok(g.mean
        .iter()
        .zip(&g.log_std)
        .zip(noise)
        .map(|((&m, &l), &n)| m + l.exp() * n)
        .collect())
}

pub fn gaussian_log_prob<F: Real>(g: &DiagGaussian<F>, x: &[F]) -> Result<F> {
    if x.len() != g.dim() {
        return Err(LspcError::Shape(format!("point has {} dims, gaussian {}", x.len(), g.dim())));
    }
    Ok(g.mean
        .iter()
        .zip(&g.log_std)
        .zip(x)
        .map(|((&m, &l), &v)| log_prob_1d(m, l, v))
        .sum())
}

#[inline]
pub(crate) fn log_prob_1d<F: Real>(mean: F, log_std: F, x: F) -> F {
    let z = (x - mean) / log_std.exp();
    F::lit(-0.5) * z * z - log_std - F::lit(0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// Batched view of a Gaussian head's raw output.
pub(crate) struct GaussianBatch<F> {
    pub mean: Mat<F>,
    pub log_std: Mat<F>,
    raw_log_std: Mat<F>,
}

impl<F: Real> GaussianBatch<F> {
    pub fn from_raw(raw: &Mat<F>) -> Self {
        let (mean, raw_log_std) = raw.split_cols(raw.cols / 2);
        let mut log_std = raw_log_std.clone();
        log_std.data.iter_mut().for_each(|v| *v = clamp_log_std(*v));
        GaussianBatch { mean, log_std, raw_log_std }
    }

    /// Maps gradients on (mean, clamped log_std) back onto the raw output.
    pub fn raw_grad(&self, d_mean: &Mat<F>, d_log_std: &Mat<F>) -> Mat<F> {
        let mut d_ls = d_log_std.clone();
        for (d, r) in d_ls.data.iter_mut().zip(&self.raw_log_std.data) {
            if !log_std_passes(*r) {
                *d = F::zero();
            }
        }
        Mat::hcat(d_mean, &d_ls).expect("same rows")
    }

    /// Smallest distance of any raw log_std to a clamp boundary.
    pub fn clamp_margin(&self, row: usize) -> f64 {
        self.raw_log_std
            .row(row)
            .iter()
            .map(|r| (r.as_f64() - LOG_STD_MIN).abs().min((r.as_f64() - LOG_STD_MAX).abs()))
            .fold(f64::INFINITY, f64::min)
    }
}
