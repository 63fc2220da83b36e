//! Analytic Gaussian posterior-mean denoiser.

use ndarray::{Array3, Zip};

use crate::edm::{Preconditioner, RawDenoiser};
use crate::error::{Error, Result};

/// Exact denoiser for data distributed as `N(μ, diag c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGaussianDenoiser {
    mean: Array3<f64>,
    var: Array3<f64>,
}

impl AnalyticGaussianDenoiser {
    pub fn new(mean: Array3<f64>, var: Array3<f64>) -> Result<Self> {
        if mean.shape() != var.shape() {
            return Err(Error::dim(
                "analytic denoiser",
                format!("mean {:?}, variance {:?}", mean.shape(), var.shape()),
            ));
        }
        if var.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Domain("target variance must be strictly positive".into()));
        }
        Ok(AnalyticGaussianDenoiser { mean, var })
    }

    pub fn mean(&self) -> &Array3<f64> {
        &self.mean
    }

    pub fn var(&self) -> &Array3<f64> {
        &self.var
    }

    /// `(c/(c+σ²))·y + (σ²/(c+σ²))·μ` elementwise.
    pub fn denoise(&self, y: &Array3<f64>, sigma: f64) -> Result<Array3<f64>> {
        if y.shape() != self.mean.shape() {
            return Err(Error::dim(
                "analytic_denoise",
                format!("input {:?}, target {:?}", y.shape(), self.mean.shape()),
            ));
        }
        if !(sigma >= 0.0) {
            return Err(Error::Domain(format!("noise level must be non-negative, got {sigma}")));
        }
        let s2 = sigma * sigma;
        let mut out = y.clone();
        Zip::from(&mut out).and(&self.mean).and(&self.var).for_each(|o, &m, &c| *o = (c * *o + s2 * m) / (c + s2));
        Ok(out)
    }

    /// The raw network `F = (D − c_skip·z)/c_out` whose preconditioned form is
    /// exactly this denoiser.
    pub fn as_raw(&self, pre: Preconditioner) -> AnalyticRaw<'_> {
        AnalyticRaw { oracle: self, pre }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyticRaw<'a> {
    oracle: &'a AnalyticGaussianDenoiser,
    pre: Preconditioner,
}

impl<C: ?Sized> RawDenoiser<C> for AnalyticRaw<'_> {
    fn evaluate(&self, scaled: &[Array3<f64>], c_noise: f64, _cond: &[&C]) -> Result<Vec<Array3<f64>>> {
        let sigma = (4.0 * c_noise).exp();
        let c = self.pre.coeffs(sigma)?;
        scaled
            .iter()
            .map(|s| {
                let z = s / c.input;
                let d = self.oracle.denoise(&z, sigma)?;
                Ok((d - &z * c.skip) / c.out)
            })
            .collect()
    }
}
