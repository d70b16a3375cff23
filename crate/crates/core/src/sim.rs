//! Resolvent-step Euler paths of the multivalued SDE.
//!
//! One step from `X[k]` is
//!
//! ```text
//! y      = X[k] + b(X[k]) dt + σ(X[k]) ḣ(t_k) dt + √ε σ(X[k]) ΔW_k
//! X[k+1] = J_dt(y)             (projection when A = ∂I_O)
//! ΔK_k   = y − X[k+1]          (so ΔK_k / dt ∈ A(X[k+1]))
//! ```
//!
//! The control term is absent for [`simulate`] and the noise term is skipped
//! entirely when `ε = 0`, which makes the zero-noise controlled path bitwise
//! identical to the skeleton path.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{all_finite, dist, dist_sq, dot, norm};
use crate::monotone_ops::{cepa_constants_for, MonotoneOperator, MEMBERSHIP_TOL};
use crate::skeleton::Control;
use crate::{Error, Model, Result};

/// Uniform grid `t_k = k·T/N`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument("horizon must be positive and finite".into()));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }
}

/// Brownian increments `ΔW_k ~ N(0, dt·I_d)` drawn from stream `stream` of
/// the ChaCha8 generator seeded with `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    noise_dim: usize,
    increments: Vec<f64>,
    seed: u64,
    stream: u64,
}

impl BrownianPath {
    pub fn generate(grid: TimeGrid, noise_dim: usize, seed: u64, stream: u64) -> Self {
        let mut path = BrownianPath { grid, noise_dim, increments: vec![0.0; grid.steps * noise_dim], seed, stream };
        path.regenerate(seed, stream);
        path
    }

    /// Refills the increments in place from another stream.
    pub fn regenerate(&mut self, seed: u64, stream: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let sd = libm::sqrt(self.grid.dt());
        for v in self.increments.iter_mut() {
            *v = sd * rng.sample::<f64, _>(StandardNormal);
        }
        self.seed = seed;
        self.stream = stream;
    }

    pub fn from_increments(grid: TimeGrid, noise_dim: usize, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.steps * noise_dim {
            return Err(Error::DimensionMismatch { expected: grid.steps * noise_dim, got: increments.len() });
        }
        Ok(BrownianPath { grid, noise_dim, increments, seed: 0, stream: 0 })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn seed(&self) -> (u64, u64) {
        (self.seed, self.stream)
    }

    #[inline]
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W(T)`.
    pub fn endpoint(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.noise_dim];
        for inc in self.increments.chunks_exact(self.noise_dim) {
            w.iter_mut().zip(inc).for_each(|(a, b)| *a += b);
        }
        w
    }
}

/// The pair `(X, K)` on a grid together with the running total variation of `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
    compensator: Vec<f64>,
    total_variation: Vec<f64>,
    epsilon: f64,
    seed: Option<(u64, u64)>,
}

impl SolutionPath {
    pub fn new(grid: TimeGrid, dim: usize) -> Self {
        let n = grid.steps + 1;
        SolutionPath {
            grid,
            dim,
            states: vec![0.0; n * dim],
            compensator: vec![0.0; n * dim],
            total_variation: vec![0.0; n],
            epsilon: 0.0,
            seed: None,
        }
    }

    /// Builds a path from flat `(N+1)·m` state and compensator arrays; the
    /// total variation is recomputed.
    pub fn from_parts(grid: TimeGrid, dim: usize, states: Vec<f64>, compensator: Vec<f64>, epsilon: f64) -> Result<Self> {
        let n = (grid.steps + 1) * dim;
        if states.len() != n || compensator.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: states.len().min(compensator.len()) });
        }
        let mut total_variation = vec![0.0; grid.steps + 1];
        for k in 1..=grid.steps {
            let step = dist(&compensator[k * dim..(k + 1) * dim], &compensator[(k - 1) * dim..k * dim]);
            total_variation[k] = total_variation[k - 1] + step;
        }
        Ok(SolutionPath { grid, dim, states, compensator, total_variation, epsilon, seed: None })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(seed, stream)` of the driving noise, if any.
    pub fn seed(&self) -> Option<(u64, u64)> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.grid.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn compensator(&self, k: usize) -> &[f64] {
        &self.compensator[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn compensators(&self) -> &[f64] {
        &self.compensator
    }

    pub fn total_variation(&self) -> &[f64] {
        &self.total_variation
    }

    pub fn endpoint(&self) -> &[f64] {
        self.state(self.grid.steps)
    }

    /// `|K|_T`.
    pub fn final_total_variation(&self) -> f64 {
        self.total_variation[self.grid.steps]
    }

    /// `max_k |X[k]|²`.
    pub fn sup_norm_sq(&self) -> f64 {
        self.states.chunks_exact(self.dim).map(|x| dot(x, x)).fold(0.0, f64::max)
    }

    /// `max_k |X[k] − Y[k]|²` for two paths on the same grid.
    pub fn sup_distance_sq(&self, other: &SolutionPath) -> f64 {
        self.states
            .chunks_exact(self.dim)
            .zip(other.states.chunks_exact(other.dim))
            .map(|(a, b)| dist_sq(a, b))
            .fold(0.0, f64::max)
    }
}

/// Pre-resolvent points `y_k`, recorded for the adjoint sweep.
pub(crate) type PreImages = Vec<f64>;

#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate(
    model: &Model,
    op: &MonotoneOperator,
    x0: &[f64],
    sqrt_eps: f64,
    control: Option<&Control>,
    noise: Option<&BrownianPath>,
    grid: TimeGrid,
    out: &mut SolutionPath,
    mut pre: Option<&mut PreImages>,
) -> Result<()> {
    let m = model.dim();
    let n = grid.steps;
    let dt = grid.dt();
    if out.grid != grid || out.dim != m {
        *out = SolutionPath::new(grid, m);
    }
    if let Some(p) = pre.as_deref_mut() {
        p.resize(n * m, 0.0);
    }
    out.states[..m].copy_from_slice(x0);
    out.compensator[..m].fill(0.0);
    out.total_variation[0] = 0.0;

    let mut drift = vec![0.0; m];
    let mut push = vec![0.0; m];
    let mut y = vec![0.0; m];
    for k in 0..n {
        let (done, rest) = out.states.split_at_mut((k + 1) * m);
        let x = &done[k * m..];
        let next = &mut rest[..m];
        model.drift_into(x, &mut drift);
        y.iter_mut().zip(x.iter().zip(&drift)).for_each(|(yi, (xi, bi))| *yi = xi + bi * dt);
        if let Some(h) = control {
            model.diffusion_apply(x, h.rate_at_step(k, n), &mut push);
            y.iter_mut().zip(&push).for_each(|(yi, pi)| *yi += pi * dt);
        }
        if let Some(w) = noise {
            if sqrt_eps != 0.0 {
                model.diffusion_apply(x, w.increment(k), &mut push);
                y.iter_mut().zip(&push).for_each(|(yi, pi)| *yi += sqrt_eps * pi);
            }
        }
        if !all_finite(&y) {
            return Err(Error::NonFinite { step: k });
        }
        op.resolvent_into(dt, &y, next)?;
        let (kd, kr) = out.compensator.split_at_mut((k + 1) * m);
        let kprev = &kd[k * m..];
        let knext = &mut kr[..m];
        let mut step = 0.0;
        for i in 0..m {
            let dk = y[i] - next[i];
            knext[i] = kprev[i] + dk;
            step += dk * dk;
        }
        out.total_variation[k + 1] = out.total_variation[k] + libm::sqrt(step);
        if let Some(p) = pre.as_deref_mut() {
            p[k * m..(k + 1) * m].copy_from_slice(&y);
        }
    }
    Ok(())
}

fn check_inputs(model: &Model, op: &MonotoneOperator, x0: &[f64]) -> Result<()> {
    if op.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: op.dim() });
    }
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x0.len() });
    }
    if !all_finite(x0) {
        return Err(Error::InvalidArgument("initial point must be finite".into()));
    }
    if !op.in_closed_domain(x0, MEMBERSHIP_TOL) {
        let violation = op.domain().map_or(0.0, |d| d.violation(x0));
        return Err(Error::NotInDomain { violation });
    }
    Ok(())
}

fn check_noise(model: &Model, noise: &BrownianPath) -> Result<()> {
    if noise.noise_dim() != model.noise_dim() {
        return Err(Error::DimensionMismatch { expected: model.noise_dim(), got: noise.noise_dim() });
    }
    Ok(())
}

pub(crate) fn check_control(model: &Model, control: &Control, grid: TimeGrid) -> Result<()> {
    if control.dim() != model.noise_dim() {
        return Err(Error::DimensionMismatch { expected: model.noise_dim(), got: control.dim() });
    }
    if (control.horizon() - grid.horizon()).abs() > 1e-12 * grid.horizon() {
        return Err(Error::InvalidArgument("control and grid horizons differ".into()));
    }
    Ok(())
}

/// Uncontrolled path with noise level `eps ∈ (0, 1]`.
pub fn simulate(model: &Model, op: &MonotoneOperator, x0: &[f64], eps: f64, noise: &BrownianPath) -> Result<SolutionPath> {
    let mut out = SolutionPath::new(noise.grid(), model.dim());
    simulate_into(model, op, x0, eps, noise, &mut out)?;
    Ok(out)
}

/// [`simulate`] writing into a reusable path buffer.
pub fn simulate_into(
    model: &Model,
    op: &MonotoneOperator,
    x0: &[f64],
    eps: f64,
    noise: &BrownianPath,
    out: &mut SolutionPath,
) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument("eps must lie in (0, 1]".into()));
    }
    check_inputs(model, op, x0)?;
    check_noise(model, noise)?;
    integrate(model, op, x0, libm::sqrt(eps), None, Some(noise), noise.grid(), out, None)?;
    out.epsilon = eps;
    out.seed = Some(noise.seed());
    Ok(())
}

/// Path of the controlled equation, drift augmented by `σ(X)ḣ`; `eps ∈ [0, 1]`.
pub fn simulate_controlled(
    model: &Model,
    op: &MonotoneOperator,
    x0: &[f64],
    eps: f64,
    control: &Control,
    noise: &BrownianPath,
) -> Result<SolutionPath> {
    let mut out = SolutionPath::new(noise.grid(), model.dim());
    simulate_controlled_into(model, op, x0, eps, control, noise, &mut out)?;
    Ok(out)
}

pub fn simulate_controlled_into(
    model: &Model,
    op: &MonotoneOperator,
    x0: &[f64],
    eps: f64,
    control: &Control,
    noise: &BrownianPath,
    out: &mut SolutionPath,
) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument("eps must lie in [0, 1]".into()));
    }
    check_inputs(model, op, x0)?;
    check_noise(model, noise)?;
    check_control(model, control, noise.grid())?;
    integrate(model, op, x0, libm::sqrt(eps), Some(control), Some(noise), noise.grid(), out, None)?;
    out.epsilon = eps;
    out.seed = Some(noise.seed());
    Ok(())
}

/// Zero-noise path driven by `control` (the skeleton equation).
pub(crate) fn skeleton_path(
    model: &Model,
    op: &MonotoneOperator,
    x0: &[f64],
    control: &Control,
    grid: TimeGrid,
    out: &mut SolutionPath,
    pre: Option<&mut PreImages>,
) -> Result<()> {
    check_inputs(model, op, x0)?;
    check_control(model, control, grid)?;
    integrate(model, op, x0, 0.0, Some(control), None, grid, out, pre)?;
    out.epsilon = 0.0;
    out.seed = None;
    Ok(())
}

/// Calibrated constant `C` in the tolerances `C·√dt·(1 + |K|_T)` of
/// [`check_solution_properties`].
pub const DEFAULT_TOLERANCE_CONSTANT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyOptions {
    pub probe_count: usize,
    pub rng_seed: u64,
    pub tolerance_constant: f64,
}

impl Default for PropertyOptions {
    fn default() -> Self {
        PropertyOptions { probe_count: 32, rng_seed: 0, tolerance_constant: DEFAULT_TOLERANCE_CONSTANT }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    /// `min_(α,β) Σ_k ⟨X[k] − α, ΔK_k − β dt⟩` over sampled `(α, β) ∈ Gr(A)`.
    pub probe_slack: f64,
    pub probe_tol: f64,
    /// `Σ_k ⟨X[k] − X̃[k], ΔK_k − ΔK̃_k⟩` against the companion path.
    pub pair_slack: Option<f64>,
    pub pair_tol: Option<f64>,
    /// `Σ_k ⟨X[k] − a, ΔK_k⟩ − (γ|K|_T − μ Σ_k |X[k] − a| dt − γμT)`.
    pub cepa_slack: f64,
    pub cepa_tol: f64,
    pub passed: bool,
}

impl PropertyReport {
    pub fn probe_passed(&self) -> bool {
        self.probe_slack >= -self.probe_tol
    }

    pub fn pair_passed(&self) -> bool {
        match (self.pair_slack, self.pair_tol) {
            (Some(s), Some(t)) => s >= -t,
            _ => true,
        }
    }

    pub fn cepa_passed(&self) -> bool {
        self.cepa_slack >= -self.cepa_tol
    }
}

/// Discrete versions of the solution inequalities: monotonicity of `dK`
/// against constant graph points, against a second solution, and Cépa's
/// lower bound on `∫⟨X − a, dK⟩`.
pub fn check_solution_properties(
    path: &SolutionPath,
    op: &MonotoneOperator,
    companion: Option<&SolutionPath>,
    opts: &PropertyOptions,
) -> Result<PropertyReport> {
    let m = path.dim();
    if op.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: op.dim() });
    }
    let grid = path.grid();
    let n = grid.steps();
    let dt = grid.dt();
    let root_dt = libm::sqrt(dt);
    let c = opts.tolerance_constant;
    let tv = path.final_total_variation();
    let dk = |p: &SolutionPath, k: usize, i: usize| p.compensator(k + 1)[i] - p.compensator(k)[i];

    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let probes = op.graph_samples(&mut rng, opts.probe_count.max(1));
    let mut probe_slack = f64::INFINITY;
    for (alpha, beta) in &probes {
        let mut s = 0.0;
        for k in 0..n {
            let x = path.state(k);
            for i in 0..m {
                s += (x[i] - alpha[i]) * (dk(path, k, i) - beta[i] * dt);
            }
        }
        probe_slack = probe_slack.min(s);
    }

    let (pair_slack, pair_tol) = match companion {
        Some(other) => {
            if other.grid() != grid || other.dim() != m {
                return Err(Error::InvalidArgument("companion path lives on a different grid".into()));
            }
            let mut s = 0.0;
            for k in 0..n {
                let (x, xt) = (path.state(k), other.state(k));
                for i in 0..m {
                    s += (x[i] - xt[i]) * (dk(path, k, i) - dk(other, k, i));
                }
            }
            (Some(s), Some(c * root_dt * (1.0 + tv + other.final_total_variation())))
        }
        None => (None, None),
    };

    let cepa = cepa_constants_for(op, opts.rng_seed)?;
    let mut lhs = 0.0;
    let mut drift_term = 0.0;
    for k in 0..n {
        let x = path.state(k);
        for i in 0..m {
            lhs += (x[i] - cepa.a[i]) * dk(path, k, i);
        }
        drift_term += dist(x, &cepa.a) * dt;
    }
    let rhs = cepa.gamma * tv - cepa.mu * drift_term - cepa.gamma * cepa.mu * grid.horizon();

    let mut report = PropertyReport {
        probe_slack,
        probe_tol: c * root_dt * (1.0 + tv),
        pair_slack,
        pair_tol,
        cepa_slack: lhs - rhs,
        cepa_tol: c * root_dt * (1.0 + tv),
        passed: false,
    };
    report.passed = report.probe_passed() && report.pair_passed() && report.cepa_passed();
    Ok(report)
}

/// Largest `|X[k+1] − X[k] − b dt − σ ḣ dt − √ε σ ΔW_k + ΔK_k|` over the path.
pub fn dynamics_residual(
    model: &Model,
    path: &SolutionPath,
    control: Option<&Control>,
    noise: Option<&BrownianPath>,
) -> f64 {
    let m = path.dim();
    let grid = path.grid();
    let dt = grid.dt();
    let sqrt_eps = libm::sqrt(path.epsilon());
    let mut worst = 0.0_f64;
    let mut b = vec![0.0; m];
    let mut push = vec![0.0; m];
    for k in 0..grid.steps() {
        let x = path.state(k);
        model.drift_into(x, &mut b);
        let mut r: Vec<f64> = (0..m)
            .map(|i| path.state(k + 1)[i] - x[i] - b[i] * dt + path.compensator(k + 1)[i] - path.compensator(k)[i])
            .collect();
        if let Some(h) = control {
            model.diffusion_apply(x, h.rate_at_step(k, grid.steps()), &mut push);
            r.iter_mut().zip(&push).for_each(|(ri, pi)| *ri -= pi * dt);
        }
        if let Some(w) = noise {
            model.diffusion_apply(x, w.increment(k), &mut push);
            r.iter_mut().zip(&push).for_each(|(ri, pi)| *ri -= sqrt_eps * pi);
        }
        worst = worst.max(norm(&r));
    }
    worst
}
