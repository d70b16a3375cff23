//! Drift and diffusion coefficients with declared growth / Lipschitz constants.
//!
//! Every built-in has a diagonal diffusion `σ(x) = diag(s_1(x), …)` padded
//! with zero columns when the noise dimension exceeds the state dimension.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{all_finite, dist_sq, dot, norm};
use crate::{Error, Result};

/// Slack allowed on the declared constants by [`Model::verify_h2`].
pub const H2_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `b = 0`, `σ = I`.
    Brownian,
    /// `b(x) = −rate·x`, `σ = I`.
    OrnsteinUhlenbeck { rate: f64 },
    /// `b(x) = −V'(x)` with `V(x) = (x² − 1)²/4`, one-dimensional, `σ = 1`.
    DoubleWell,
    /// `b = 0`, `σ(x) = diag(1 + scale·min(|x_i|, clip))`.
    StateDependent { scale: f64, clip: f64 },
}

/// Constants of the one-sided Lipschitz / growth hypothesis:
/// `⟨x−y, b(x)−b(y)⟩ ≤ c_b|x−y|²`, `‖σ(x)−σ(y)‖_HS ≤ c_sigma|x−y|`,
/// `|b(x)| ≤ c_b_prime(1 + |x|^growth_order)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H2Constants {
    pub c_b: f64,
    pub c_sigma: f64,
    pub c_b_prime: f64,
    pub growth_order: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    dim: usize,
    noise_dim: usize,
    constants: H2Constants,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H2Report {
    pub samples: usize,
    pub radius: f64,
    /// `max ⟨x−y, b(x)−b(y)⟩ / |x−y|²`
    pub one_sided: f64,
    /// `max ‖σ(x)−σ(y)‖_HS / |x−y|`
    pub sigma_lipschitz: f64,
    /// `max |b(x)| / (1 + |x|ⁿ)`
    pub growth: f64,
    pub declared: H2Constants,
    pub passed: bool,
}

impl Model {
    pub fn new(kind: ModelKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        let constants = match &kind {
            ModelKind::Brownian => H2Constants { c_b: 0.0, c_sigma: 0.0, c_b_prime: 1.0, growth_order: 1 },
            ModelKind::OrnsteinUhlenbeck { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::InvalidModel(format!("OU rate must be finite and ≥ 0, got {rate}")));
                }
                H2Constants { c_b: 0.0, c_sigma: 0.0, c_b_prime: rate.max(f64::MIN_POSITIVE), growth_order: 1 }
            }
            ModelKind::DoubleWell => {
                if dim != 1 {
                    return Err(Error::InvalidModel("the double-well model is one-dimensional".into()));
                }
                // b' = 1 − 3x² ≤ 1 and |x − x³| ≤ 1 + |x|³.
                H2Constants { c_b: 1.0, c_sigma: 0.0, c_b_prime: 1.0, growth_order: 3 }
            }
            ModelKind::StateDependent { scale, clip } => {
                if !(scale.is_finite() && *scale >= 0.0 && *clip > 0.0) {
                    return Err(Error::InvalidModel("state-dependent model needs scale ≥ 0 and clip > 0".into()));
                }
                H2Constants { c_b: 0.0, c_sigma: *scale, c_b_prime: 1.0, growth_order: 1 }
            }
        };
        Ok(Model { kind, dim, noise_dim: dim, constants })
    }

    pub fn brownian(dim: usize) -> Result<Self> {
        Self::new(ModelKind::Brownian, dim)
    }

    pub fn ornstein_uhlenbeck(dim: usize, rate: f64) -> Result<Self> {
        Self::new(ModelKind::OrnsteinUhlenbeck { rate }, dim)
    }

    pub fn double_well() -> Result<Self> {
        Self::new(ModelKind::DoubleWell, 1)
    }

    pub fn state_dependent(dim: usize, scale: f64) -> Result<Self> {
        Self::new(ModelKind::StateDependent { scale, clip: 100.0 }, dim)
    }

    /// Number of driving Brownian motions (truncation of the `l²` noise).
    pub fn with_noise_dim(mut self, noise_dim: usize) -> Result<Self> {
        if noise_dim == 0 {
            return Err(Error::InvalidModel("noise dimension must be positive".into()));
        }
        self.noise_dim = noise_dim;
        Ok(self)
    }

    pub fn with_constants(mut self, constants: H2Constants) -> Self {
        self.constants = constants;
        self
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Brownian => "brownian",
            ModelKind::OrnsteinUhlenbeck { .. } => "ou",
            ModelKind::DoubleWell => "doublewell",
            ModelKind::StateDependent { .. } => "statedep",
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn constants(&self) -> &H2Constants {
        &self.constants
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// `b(x)`.
    pub fn eval_drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        if !all_finite(&out) {
            return Err(Error::Overflow { norm: norm(x) });
        }
        Ok(out)
    }

    /// `σ(x)` as an `m × d` matrix.
    pub fn eval_diffusion(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut s = vec![0.0; self.dim];
        self.diffusion_diag(x, &mut s);
        if !all_finite(&s) {
            return Err(Error::Overflow { norm: norm(x) });
        }
        Ok(DMatrix::from_fn(self.dim, self.noise_dim, |i, j| if i == j { s[i] } else { 0.0 }))
    }

    #[inline]
    pub(crate) fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Brownian | ModelKind::StateDependent { .. } => out.fill(0.0),
            ModelKind::OrnsteinUhlenbeck { rate } => out.iter_mut().zip(x).for_each(|(o, xi)| *o = -rate * xi),
            ModelKind::DoubleWell => out[0] = x[0] - x[0] * x[0] * x[0],
        }
    }

    #[inline]
    fn diffusion_diag(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::StateDependent { scale, clip } => {
                out.iter_mut().zip(x).for_each(|(o, xi)| *o = 1.0 + scale * xi.abs().min(clip))
            }
            _ => out.fill(1.0),
        }
    }

    /// `out = σ(x)·v` for `v ∈ R^d`.
    #[inline]
    pub(crate) fn diffusion_apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let k = self.dim.min(self.noise_dim);
        match self.kind {
            ModelKind::StateDependent { scale, clip } => {
                for i in 0..self.dim {
                    out[i] = if i < k { (1.0 + scale * x[i].abs().min(clip)) * v[i] } else { 0.0 };
                }
            }
            _ => {
                out[..k].copy_from_slice(&v[..k]);
                out[k..].fill(0.0);
            }
        }
    }

    /// `out = σ(x)ᵀ·w` for `w ∈ R^m`.
    pub(crate) fn diffusion_apply_t(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        let k = self.dim.min(self.noise_dim);
        out.fill(0.0);
        for i in 0..k {
            out[i] = match self.kind {
                ModelKind::StateDependent { scale, clip } => (1.0 + scale * x[i].abs().min(clip)) * w[i],
                _ => w[i],
            };
        }
    }

    /// `out += Db(x)ᵀ·w`.
    pub(crate) fn drift_jacobian_t_add(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Brownian | ModelKind::StateDependent { .. } => {}
            ModelKind::OrnsteinUhlenbeck { rate } => out.iter_mut().zip(w).for_each(|(o, wi)| *o -= rate * wi),
            ModelKind::DoubleWell => out[0] += (1.0 - 3.0 * x[0] * x[0]) * w[0],
        }
    }

    /// `out += (∂_x[σ(x)·v])ᵀ·w`.
    pub(crate) fn diffusion_jacobian_t_add(&self, x: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        if let ModelKind::StateDependent { scale, clip } = self.kind {
            let k = self.dim.min(self.noise_dim);
            for i in 0..k {
                if x[i].abs() < clip && x[i] != 0.0 {
                    out[i] += scale * x[i].signum() * v[i] * w[i];
                }
            }
        }
    }

    /// Empirical check of the declared constants on `sample_count` random
    /// pairs in the ball of the given radius.
    pub fn verify_h2(&self, sample_count: usize, radius: f64, rng_seed: u64) -> H2Report {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let m = self.dim;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let dir: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = norm(&dir).max(f64::MIN_POSITIVE);
            let r = radius * libm::pow(rng.random::<f64>(), 1.0 / m as f64);
            dir.iter().map(|d| r * d / n).collect()
        };
        let (mut one_sided, mut sigma_lip, mut growth) = (f64::NEG_INFINITY, 0.0_f64, 0.0_f64);
        let n = self.constants.growth_order as i32;
        let mut bx = vec![0.0; m];
        let mut by = vec![0.0; m];
        for _ in 0..sample_count.max(1) {
            let x = draw(&mut rng);
            let y = draw(&mut rng);
            let d2 = dist_sq(&x, &y);
            if d2 == 0.0 {
                continue;
            }
            self.drift_into(&x, &mut bx);
            self.drift_into(&y, &mut by);
            let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let db: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
            one_sided = one_sided.max(dot(&dx, &db) / d2);
            let sx = self.eval_diffusion(&x).unwrap_or_else(|_| DMatrix::zeros(m, self.noise_dim));
            let sy = self.eval_diffusion(&y).unwrap_or_else(|_| DMatrix::zeros(m, self.noise_dim));
            sigma_lip = sigma_lip.max((sx - sy).norm() / libm::sqrt(d2));
            growth = growth.max(norm(&bx) / (1.0 + libm::pow(norm(&x), n as f64)));
        }
        let c = self.constants;
        H2Report {
            samples: sample_count,
            radius,
            one_sided,
            sigma_lipschitz: sigma_lip,
            growth,
            declared: c,
            passed: one_sided <= c.c_b + H2_TOL && sigma_lip <= c.c_sigma + H2_TOL && growth <= c.c_b_prime + H2_TOL,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_examples() {
        assert_eq!(Model::ornstein_uhlenbeck(1, 1.0).unwrap().eval_drift(&[2.0]).unwrap(), vec![-2.0]);
        assert_eq!(Model::brownian(3).unwrap().eval_drift(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(Model::double_well().unwrap().eval_drift(&[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn diffusion_examples() {
        let s = Model::brownian(2).unwrap().eval_diffusion(&[3.0, -1.0]).unwrap();
        assert_eq!(s, DMatrix::identity(2, 2));
        let s = Model::state_dependent(1, 0.5).unwrap().eval_diffusion(&[2.0]).unwrap();
        assert_eq!(s[(0, 0)], 2.0);
        let s = Model::ornstein_uhlenbeck(2, 3.0).unwrap().eval_diffusion(&[0.3, 9.0]).unwrap();
        assert_eq!(s, DMatrix::identity(2, 2));
        let s = Model::brownian(1).unwrap().with_noise_dim(3).unwrap().eval_diffusion(&[0.0]).unwrap();
        assert_eq!((s.nrows(), s.ncols(), s[(0, 0)], s[(0, 2)]), (1, 3, 1.0, 0.0));
    }

    #[test]
    fn overflow_is_reported() {
        let m = Model::double_well().unwrap();
        assert!(matches!(m.eval_drift(&[1e200]), Err(Error::Overflow { .. })));
    }

    #[test]
    fn double_well_one_sided_constant() {
        // Oracle: the one-sided constant of b in 1-D is sup b' = sup(1 − 3x²)
        // over [−10, 10], found by scanning.
        let oracle = (0..=200_000)
            .map(|i| -10.0 + 20.0 * i as f64 / 200_000.0)
            .map(|x| 1.0 - 3.0 * x * x)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((oracle - 1.0).abs() < 1e-12);
        let m = Model::double_well().unwrap();
        assert_eq!(m.constants().c_b, oracle);
        let r = m.verify_h2(10_000, 10.0, 5);
        assert!(r.passed, "{r:?}");
        let strict = m.clone().with_constants(H2Constants { c_b: 0.5, ..*m.constants() });
        assert!(!strict.verify_h2(10_000, 10.0, 5).passed);
    }

    #[test]
    fn builtins_satisfy_declared_constants() {
        let models = [
            Model::brownian(2).unwrap(),
            Model::ornstein_uhlenbeck(1, 1.0).unwrap(),
            Model::ornstein_uhlenbeck(3, 2.5).unwrap(),
            Model::double_well().unwrap(),
            Model::state_dependent(2, 0.5).unwrap(),
        ];
        for m in &models {
            let r = m.verify_h2(10_000, 10.0, 11);
            assert!(r.passed, "{}: {r:?}", m.name());
        }
        let ou = Model::ornstein_uhlenbeck(1, 1.0).unwrap();
        assert!((ou.verify_h2(1000, 10.0, 1).one_sided + 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let m = Model::state_dependent(2, 0.7).unwrap();
        let x = [0.123456789, -3.3];
        assert_eq!(m.eval_diffusion(&x).unwrap(), m.eval_diffusion(&x).unwrap());
        assert_eq!(m.eval_drift(&x).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), vec![0u64, 0u64]);
    }
}
