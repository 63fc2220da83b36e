//! Noise schedule, preconditioning and the deterministic Heun sampler.
//!
//! ```text
//! σ_n    = (σ_max^{1/ρ} + n/(N−1) · (σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ,  σ_N = 0
//! c_skip = σ_d² / (σ² + σ_d²)        c_out = σ·σ_d / √(σ² + σ_d²)
//! c_in   = 1 / √(σ² + σ_d²)          c_noise = ln(σ) / 4
//! D(z; σ) = c_skip·z + c_out·F(c_in·z, c_noise)
//! ω(σ)   = (σ² + σ_d²) / (σ·σ_d)²  = 1 / c_out²
//! ```

use ndarray::{Array3, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    /// Solver steps `N`; the ladder has `N + 1` entries.
    pub steps: usize,
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, rho: f64, steps: usize) -> Result<Self> {
        let s = NoiseSchedule { sigma_min, sigma_max, rho, steps };
        s.validate()?;
        Ok(s)
    }

    pub fn training() -> Self {
        NoiseSchedule { sigma_min: 0.02, sigma_max: 88.0, rho: 7.0, steps: 20 }
    }

    pub fn inference() -> Self {
        NoiseSchedule { sigma_min: 0.03, sigma_max: 80.0, rho: 7.0, steps: 20 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_max > self.sigma_min && self.sigma_max.is_finite()) {
            return Err(Error::Config(format!(
                "noise range must satisfy 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config("rho must be positive".into()));
        }
        if self.steps < 2 {
            return Err(Error::Config("the schedule needs at least 2 steps".into()));
        }
        Ok(())
    }

    pub fn sigma_at(&self, n: usize) -> Result<f64> {
        let big_n = self.steps;
        if n > big_n {
            return Err(Error::Index { index: n, max: big_n });
        }
        Ok(if n == big_n {
            0.0
        } else if n == 0 {
            self.sigma_max
        } else if n == big_n - 1 {
            self.sigma_min
        } else {
            let inv = 1.0 / self.rho;
            let (hi, lo) = (self.sigma_max.powf(inv), self.sigma_min.powf(inv));
            (hi + n as f64 / (big_n - 1) as f64 * (lo - hi)).powf(self.rho)
        })
    }

    /// `σ_0, …, σ_N`.
    pub fn ladder(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.sigma_at(n).expect("n within range")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preconditioner {
    pub sigma_data: f64,
}

impl Default for Preconditioner {
    fn default() -> Self {
        Preconditioner { sigma_data: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub skip: f64,
    pub out: f64,
    pub input: f64,
    pub noise: f64,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise level must be positive and finite, got {sigma}")));
    }
    Ok(())
}

impl Preconditioner {
    pub fn new(sigma_data: f64) -> Result<Self> {
        if !(sigma_data > 0.0 && sigma_data.is_finite()) {
            return Err(Error::Config(format!("sigma_data must be positive, got {sigma_data}")));
        }
        Ok(Preconditioner { sigma_data })
    }

    pub fn coeffs(&self, sigma: f64) -> Result<Coefficients> {
        check_sigma(sigma)?;
        let sd = self.sigma_data;
        let total = sigma * sigma + sd * sd;
        Ok(Coefficients {
            skip: sd * sd / total,
            out: sigma * sd / total.sqrt(),
            input: 1.0 / total.sqrt(),
            noise: sigma.ln() / 4.0,
        })
    }

    pub fn loss_weight(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        let sd = self.sigma_data;
        Ok((sigma * sigma + sd * sd) / (sigma * sd).powi(2))
    }
}

/// The raw network `F` behind the preconditioned denoiser.
///
/// Evaluates a batch of scaled latents `c_in·z` (interior-shaped
/// `[d, h, w]`) at one shared `c_noise`, each with its own conditioning.
pub trait RawDenoiser<C: ?Sized> {
    fn evaluate(&self, scaled: &[Array3<f64>], c_noise: f64, cond: &[&C]) -> Result<Vec<Array3<f64>>>;
}

fn check_batch<C: ?Sized>(z: &[Array3<f64>], cond: &[&C]) -> Result<()> {
    if z.len() != cond.len() {
        return Err(Error::dim("denoiser batch", format!("{} latents, {} conditioning inputs", z.len(), cond.len())));
    }
    Ok(())
}

/// `D(z; σ) = c_skip·z + c_out·F(c_in·z, c_noise)` for every latent in the batch.
pub fn apply_denoiser<C: ?Sized, R: RawDenoiser<C> + ?Sized>(
    raw: &R,
    pre: &Preconditioner,
    z: &[Array3<f64>],
    sigma: f64,
    cond: &[&C],
) -> Result<Vec<Array3<f64>>> {
    check_batch(z, cond)?;
    let c = pre.coeffs(sigma)?;
    let scaled: Vec<Array3<f64>> = z.iter().map(|z| z * c.input).collect();
    let f = raw.evaluate(&scaled, c.noise, cond)?;
    if f.len() != z.len() {
        return Err(Error::dim("denoiser output", format!("{} outputs for {} inputs", f.len(), z.len())));
    }
    f.into_iter()
        .zip(z)
        .map(|(f, z)| {
            if f.shape() != z.shape() {
                return Err(Error::dim("denoiser output", format!("{:?} for latent {:?}", f.shape(), z.shape())));
            }
            let mut d = z * c.skip;
            d.scaled_add(c.out, &f);
            Ok(d)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Second-order Heun steps with an Euler step into `σ = 0`.
    Heun,
    /// First-order Euler steps throughout.
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub samples: Vec<Array3<f64>>,
    /// Sequential denoiser evaluations (one per batched call).
    pub nfe: usize,
}

/// Integrates `dx/dσ = (x − D(x; σ))/σ` from `σ_0` down to `σ_N = 0`
/// starting at `x0` (already scaled to `σ_0`).
pub fn integrate<C: ?Sized, R: RawDenoiser<C> + ?Sized>(
    raw: &R,
    pre: &Preconditioner,
    schedule: &NoiseSchedule,
    x0: Vec<Array3<f64>>,
    cond: &[&C],
    solver: Solver,
) -> Result<SampleOutput> {
    schedule.validate()?;
    check_batch(&x0, cond)?;
    let ladder = schedule.ladder();
    let mut x = x0;
    let mut nfe = 0;
    let slope = |x: &Array3<f64>, d: &Array3<f64>, sigma: f64| (x - d) / sigma;
    for n in 0..schedule.steps {
        let (s_cur, s_next) = (ladder[n], ladder[n + 1]);
        let h = s_next - s_cur;
        let denoised = apply_denoiser(raw, pre, &x, s_cur, cond)?;
        nfe += 1;
        let d_cur: Vec<Array3<f64>> = x.iter().zip(&denoised).map(|(x, d)| slope(x, d, s_cur)).collect();
        let euler: Vec<Array3<f64>> = x.iter().zip(&d_cur).map(|(x, d)| x + &(d * h)).collect();
        x = if solver == Solver::Heun && s_next > 0.0 {
            let denoised_next = apply_denoiser(raw, pre, &euler, s_next, cond)?;
            nfe += 1;
            x.iter()
                .zip(&euler)
                .zip(d_cur.iter().zip(&denoised_next))
                .map(|((x, e), (d0, dn))| {
                    let d1 = slope(e, dn, s_next);
                    let mut out = x.clone();
                    Zip::from(&mut out).and(d0).and(&d1).for_each(|o, &a, &b| *o += h * 0.5 * (a + b));
                    out
                })
                .collect()
        } else {
            euler
        };
        if let Some(member) = x.iter().position(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical {
                location: format!("sampler step {n}"),
                detail: format!("non-finite latent in batch entry {member} at sigma {s_next}"),
            });
        }
    }
    Ok(SampleOutput { samples: x, nfe })
}

/// Standard-normal array of `shape` scaled by `std`.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, shape: [usize; 3], std: f64) -> Array3<f64> {
    Array3::from_shape_simple_fn(shape, || std * rng.sample::<f64, _>(StandardNormal))
}

/// Draws `Z_0 ~ N(0, σ_0² I)` for each entry from its own generator and
/// integrates with the Heun solver.
pub fn heun_sample<C: ?Sized, R: RawDenoiser<C> + ?Sized, G: Rng>(
    raw: &R,
    pre: &Preconditioner,
    schedule: &NoiseSchedule,
    shape: [usize; 3],
    cond: &[&C],
    rngs: &mut [G],
) -> Result<SampleOutput> {
    if rngs.len() != cond.len() {
        return Err(Error::dim("heun_sample", format!("{} generators for {} samples", rngs.len(), cond.len())));
    }
    let z0 = rngs.iter_mut().map(|rng| gaussian(rng, shape, schedule.sigma_max)).collect();
    integrate(raw, pre, schedule, z0, cond, Solver::Heun)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingNoise {
    pub n: usize,
    pub sigma: f64,
    pub eps: Array3<f64>,
}

/// `n ~ Uniform{0, …, N−1}` and `ε ~ N(0, σ_n² I)` of the given shape.
pub fn sample_training_noise<R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    shape: [usize; 3],
    rng: &mut R,
) -> Result<TrainingNoise> {
    schedule.validate()?;
    let n = rng.random_range(0..schedule.steps);
    let sigma = schedule.sigma_at(n)?;
    Ok(TrainingNoise { n, sigma, eps: gaussian(rng, shape, sigma) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sigma_coefficients() {
        let c = Preconditioner::default().coeffs(1.0).unwrap();
        assert_eq!(c.skip, 0.5);
        assert!((c.out - 0.5f64.sqrt()).abs() <= 2.0 * f64::EPSILON);
        assert!((c.input - 0.5f64.sqrt()).abs() <= 2.0 * f64::EPSILON);
        assert_eq!(c.noise, 0.0);
        assert_eq!(Preconditioner::default().loss_weight(1.0).unwrap(), 2.0);
    }

    #[test]
    fn non_positive_sigma_is_a_domain_error() {
        let p = Preconditioner::default();
        assert!(matches!(p.coeffs(0.0), Err(Error::Domain(_))));
        assert!(matches!(p.loss_weight(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn ladder_out_of_range() {
        let s = NoiseSchedule::inference();
        assert!(matches!(s.sigma_at(21), Err(Error::Index { index: 21, max: 20 })));
    }
}
