//! Monte Carlo checks of the large deviation and Laplace principles.
//!
//! Every estimator draws path `i` from RNG stream `i` of the given seed, so
//! the same noise is reused across noise levels and initial points, and runs
//! in blocks of [`BLOCK_PATHS`](crate::exec::BLOCK_PATHS) merged in a fixed
//! order through an [`Executor`].

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::exec::{block_count, block_range, tree_reduce, Executor};
use crate::linalg::{dist, dist_sq, dot, norm_sq};
use crate::sim::{simulate_controlled_into, simulate_into, BrownianPath, SolutionPath, TimeGrid};
use crate::skeleton::{solve_skeleton, Control, PathFunctional};
use crate::stats::{LogSumExp, Moments};
use crate::{Error, Model, MonotoneOperator, Result};

/// Estimates with an effective sample size below this are flagged.
pub const MIN_ESS: f64 = 10.0;

pub const MIN_PATHS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// `⟨direction, X(T)⟩ ≥ level`.
    EndpointBeyond { direction: Vec<f64>, level: f64 },
    /// `|X(T) − center| ≤ radius`.
    EndpointInBall { center: Vec<f64>, radius: f64 },
    /// `max_k |X[k] − φ[k]| ≤ radius` for a reference path `φ` on the same grid.
    Tube { reference: SolutionPath, radius: f64 },
    /// `max_k X_coord[k] ≥ level`.
    RunningMaxAbove { coord: usize, level: f64 },
}

/// A path event; `open` turns every non-strict inequality into a strict one.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub id: String,
    pub kind: EventKind,
    pub open: bool,
}

impl EventSpec {
    pub fn new(id: impl Into<String>, kind: EventKind, open: bool) -> Self {
        EventSpec { id: id.into(), kind, open }
    }

    pub fn validate(&self, dim: usize, grid: TimeGrid) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidArgument(s.into()));
        match &self.kind {
            EventKind::EndpointBeyond { direction, level } => {
                if direction.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: direction.len() });
                }
                if norm_sq(direction) == 0.0 || !level.is_finite() {
                    return bad("endpoint event needs a non-zero direction and a finite level");
                }
            }
            EventKind::EndpointInBall { center, radius } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: center.len() });
                }
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return bad("ball event needs a finite radius ≥ 0");
                }
            }
            EventKind::Tube { reference, radius } => {
                if reference.dim() != dim || reference.grid() != grid {
                    return bad("tube reference path must live on the simulation grid");
                }
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return bad("tube event needs a finite radius ≥ 0");
                }
            }
            EventKind::RunningMaxAbove { coord, level } => {
                if *coord >= dim || !level.is_finite() {
                    return bad("running-max event needs a valid coordinate and finite level");
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, path: &SolutionPath) -> bool {
        let ge = |a: f64, b: f64| if self.open { a > b } else { a >= b };
        let le = |a: f64, b: f64| if self.open { a < b } else { a <= b };
        match &self.kind {
            EventKind::EndpointBeyond { direction, level } => ge(dot(direction, path.endpoint()), *level),
            EventKind::EndpointInBall { center, radius } => le(dist(path.endpoint(), center), *radius),
            EventKind::Tube { reference, radius } => le(libm::sqrt(path.sup_distance_sq(reference)), *radius),
            EventKind::RunningMaxAbove { coord, level } => {
                ge((0..path.len()).map(|k| path.state(k)[*coord]).fold(f64::NEG_INFINITY, f64::max), *level)
            }
        }
    }

    /// Endpoint whose rate serves as the reference rate of the event: the
    /// point of the event's endpoint set nearest to `x0`.
    pub fn reference_target(&self, x0: &[f64]) -> Vec<f64> {
        match &self.kind {
            EventKind::EndpointBeyond { direction, level } => {
                let gap = level - dot(direction, x0);
                if gap <= 0.0 {
                    return x0.to_vec();
                }
                let s = gap / norm_sq(direction);
                x0.iter().zip(direction).map(|(x, d)| x + s * d).collect()
            }
            EventKind::EndpointInBall { center, radius } => {
                let r = dist(x0, center);
                if r <= *radius {
                    return x0.to_vec();
                }
                center.iter().zip(x0).map(|(c, x)| c + radius * (x - c) / r).collect()
            }
            EventKind::Tube { reference, .. } => reference.endpoint().to_vec(),
            EventKind::RunningMaxAbove { coord, level } => {
                let mut t = x0.to_vec();
                t[*coord] = t[*coord].max(*level);
                t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub epsilon: f64,
    pub event_id: String,
    pub n_paths: usize,
    pub p_hat: f64,
    pub stderr: f64,
    /// `−ε log p̂` (`+∞` when no path hit the event).
    pub neg_eps_log_p: f64,
    pub tilted: bool,
    /// `(Σw)² / Σw²` over the paths inside the event, the number of hits
    /// without tilting.
    pub ess: f64,
    pub degenerate: bool,
}

fn check_eps(eps_list: &[f64], allow_zero: bool) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("eps list is empty".into()));
    }
    for &e in eps_list {
        let ok = if allow_zero { (0.0..=1.0).contains(&e) } else { e > 0.0 && e <= 1.0 };
        if !ok {
            return Err(Error::InvalidArgument(alloc::format!("eps {e} outside the admissible range")));
        }
    }
    Ok(())
}

fn reduce_blocks<E, A, F, M>(exec: &E, n_paths: usize, f: F, merge: M) -> Result<A>
where
    E: Executor,
    A: Send,
    F: Fn(Range<usize>) -> Result<A> + Sync + Send,
    M: Fn(A, A) -> A,
{
    let parts = exec.map_blocks(block_count(n_paths), |b| f(block_range(b, n_paths)));
    let parts = parts.into_iter().collect::<Result<Vec<A>>>()?;
    tree_reduce(parts, merge).ok_or_else(|| Error::InvalidArgument("no paths requested".into()))
}

fn merge_vec<T: Copy, F: Fn(T, T) -> T>(a: Vec<T>, b: Vec<T>, f: F) -> Vec<T> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

/// Common inputs of every Monte Carlo run.
#[derive(Debug, Clone, Copy)]
pub struct McSetup<'a> {
    pub model: &'a Model,
    pub op: &'a MonotoneOperator,
    pub x0: &'a [f64],
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
}

impl McSetup<'_> {
    fn check(&self) -> Result<()> {
        if self.n_paths < MIN_PATHS {
            return Err(Error::InvalidArgument(alloc::format!("n_paths must be at least {MIN_PATHS}")));
        }
        if self.x0.len() != self.model.dim() {
            return Err(Error::DimensionMismatch { expected: self.model.dim(), got: self.x0.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Weighted {
    values: Moments,
    sum_w: f64,
    sum_w2: f64,
}

impl Weighted {
    fn merge(self, o: Weighted) -> Weighted {
        Weighted { values: self.values.merge(o.values), sum_w: self.sum_w + o.sum_w, sum_w2: self.sum_w2 + o.sum_w2 }
    }
}

/// Probability of `event` for each `ε`, plain or Girsanov-tilted by `tilt`.
///
/// With a tilt the paths solve the controlled equation and carry the weight
/// `exp Σ_k (−ḣ(t_k)·ΔW_k/√ε − |ḣ(t_k)|² dt/(2ε))`.
pub fn estimate_event<E: Executor>(
    setup: &McSetup<'_>,
    eps_list: &[f64],
    event: &EventSpec,
    tilt: Option<&Control>,
    exec: &E,
) -> Result<Vec<McEstimate>> {
    setup.check()?;
    check_eps(eps_list, false)?;
    event.validate(setup.model.dim(), setup.grid)?;
    let McSetup { model, op, x0, grid, n_paths, seed } = *setup;
    let n = grid.steps();
    let dt = grid.dt();
    let d = model.noise_dim();

    let block = |range: Range<usize>| -> Result<Vec<Weighted>> {
        let mut acc = vec![Weighted::default(); eps_list.len()];
        let mut w = BrownianPath::generate(grid, d, seed, range.start as u64);
        let mut path = SolutionPath::new(grid, model.dim());
        for i in range {
            w.regenerate(seed, i as u64);
            // Σ ḣ·ΔW and Σ |ḣ|² dt, shared by every ε.
            let (cross, energy) = match tilt {
                Some(h) => (0..n).fold((0.0, 0.0), |(c, e), k| {
                    let r = h.rate_at_step(k, n);
                    (c + dot(r, w.increment(k)), e + dot(r, r) * dt)
                }),
                None => (0.0, 0.0),
            };
            for (a, &eps) in acc.iter_mut().zip(eps_list) {
                let weight = match tilt {
                    Some(h) => {
                        simulate_controlled_into(model, op, x0, eps, h, &w, &mut path)?;
                        libm::exp(-cross / libm::sqrt(eps) - energy / (2.0 * eps))
                    }
                    None => {
                        simulate_into(model, op, x0, eps, &w, &mut path)?;
                        1.0
                    }
                };
                let hit = if event.contains(&path) { 1.0 } else { 0.0 };
                a.values.push(weight * hit);
                a.sum_w += weight * hit;
                a.sum_w2 += weight * weight * hit;
            }
        }
        Ok(acc)
    };
    let acc = reduce_blocks(exec, n_paths, block, |a, b| merge_vec(a, b, Weighted::merge))?;

    Ok(acc
        .iter()
        .zip(eps_list)
        .map(|(a, &eps)| {
            let p_hat = a.values.mean.clamp(0.0, f64::INFINITY);
            let ess = if a.sum_w2 > 0.0 { a.sum_w * a.sum_w / a.sum_w2 } else { 0.0 };
            McEstimate {
                epsilon: eps,
                event_id: event.id.clone(),
                n_paths,
                p_hat,
                stderr: a.values.stderr(),
                neg_eps_log_p: if p_hat > 0.0 { -eps * libm::log(p_hat) } else { f64::INFINITY },
                tilted: tilt.is_some(),
                ess,
                degenerate: !(ess >= MIN_ESS) || p_hat == 0.0,
            }
        })
        .collect())
}

/// Terminal values `X(T)` of `n_paths` uncontrolled paths.
pub fn endpoint_samples<E: Executor>(setup: &McSetup<'_>, eps: f64, exec: &E) -> Result<Vec<Vec<f64>>> {
    setup.check()?;
    let McSetup { model, op, x0, grid, n_paths, seed } = *setup;
    let block = |range: Range<usize>| -> Result<Vec<Vec<f64>>> {
        let mut w = BrownianPath::generate(grid, model.noise_dim(), seed, range.start as u64);
        let mut path = SolutionPath::new(grid, model.dim());
        let mut out = Vec::with_capacity(range.len());
        for i in range {
            w.regenerate(seed, i as u64);
            simulate_into(model, op, x0, eps, &w, &mut path)?;
            out.push(path.endpoint().to_vec());
        }
        Ok(out)
    };
    reduce_blocks(exec, n_paths, block, |mut a, b| {
        a.extend(b);
        a
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitModel {
    /// `a + b·ε`.
    #[default]
    Affine,
    /// `a + b·ε + c·ε log ε`.
    AffineLogCorrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub model: FitModel,
    /// The `ε → 0` extrapolation.
    pub intercept: f64,
    pub slope: f64,
    /// Coefficient of `ε log ε` for [`FitModel::AffineLogCorrected`].
    pub log_coefficient: Option<f64>,
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rms_residual: f64,
    pub excluded: Vec<f64>,
}

/// Least-squares fit of `y` against `ε`.
pub fn fit_eps(eps: &[f64], y: &[f64], model: FitModel) -> Result<SlopeReport> {
    let cols = match model {
        FitModel::Affine => 2,
        FitModel::AffineLogCorrected => 3,
    };
    let mut distinct: Vec<f64> = eps.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if eps.len() != y.len() || distinct.len() < cols.max(3) {
        return Err(Error::DegenerateFit { excluded: Vec::new() });
    }
    let a = DMatrix::from_fn(eps.len(), cols, |i, j| match j {
        0 => 1.0,
        1 => eps[i],
        _ => eps[i] * libm::log(eps[i]),
    });
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).map_err(|_| Error::DegenerateFit { excluded: Vec::new() })?;
    let fitted = &a * &coef;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let rms_residual = libm::sqrt(residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64);
    Ok(SlopeReport {
        model,
        intercept: coef[0],
        slope: coef[1],
        log_coefficient: (cols == 3).then(|| coef[2]),
        epsilons: eps.to_vec(),
        residuals,
        rms_residual,
        excluded: Vec::new(),
    })
}

/// Extrapolates `−ε log p̂` to `ε → 0`, skipping degenerate estimates.
pub fn ldp_slope(estimates: &[McEstimate], model: FitModel) -> Result<SlopeReport> {
    let mut eps = Vec::new();
    let mut y = Vec::new();
    let mut excluded = Vec::new();
    for e in estimates {
        if e.degenerate || !e.neg_eps_log_p.is_finite() {
            excluded.push(e.epsilon);
        } else {
            eps.push(e.epsilon);
            y.push(e.neg_eps_log_p);
        }
    }
    match fit_eps(&eps, &y, model) {
        Ok(mut r) => {
            r.excluded = excluded;
            Ok(r)
        }
        Err(_) => Err(Error::DegenerateFit { excluded }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceEstimate {
    pub epsilon: f64,
    pub n_paths: usize,
    /// `ε log( mean exp(−g/ε) )`.
    pub value: f64,
}

/// `ε log E[exp(−g(X^ε)/ε)]` for each `ε`, with common noise.
pub fn laplace_estimates<E: Executor>(
    setup: &McSetup<'_>,
    eps_list: &[f64],
    g: &PathFunctional,
    exec: &E,
) -> Result<Vec<LaplaceEstimate>> {
    setup.check()?;
    check_eps(eps_list, false)?;
    g.validate(setup.model.dim())?;
    let McSetup { model, op, x0, grid, n_paths, seed } = *setup;
    let block = |range: Range<usize>| -> Result<Vec<LogSumExp>> {
        let mut acc = vec![LogSumExp::default(); eps_list.len()];
        let mut w = BrownianPath::generate(grid, model.noise_dim(), seed, range.start as u64);
        let mut path = SolutionPath::new(grid, model.dim());
        for i in range {
            w.regenerate(seed, i as u64);
            for (a, &eps) in acc.iter_mut().zip(eps_list) {
                simulate_into(model, op, x0, eps, &w, &mut path)?;
                a.push(-g.value(&path) / eps);
            }
        }
        Ok(acc)
    };
    let acc = reduce_blocks(exec, n_paths, block, |a, b| merge_vec(a, b, LogSumExp::merge))?;
    acc.iter()
        .zip(eps_list)
        .map(|(a, &eps)| {
            let lm = a.log_mean().ok_or(Error::EmptyLaplace)?;
            Ok(LaplaceEstimate { epsilon: eps, n_paths, value: eps * lm })
        })
        .collect()
}

pub fn laplace_estimate<E: Executor>(setup: &McSetup<'_>, eps: f64, g: &PathFunctional, exec: &E) -> Result<f64> {
    Ok(laplace_estimates(setup, &[eps], g, exec)?[0].value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ld1Options {
    /// Pass threshold relative to `sup_t |X^h(t)|²`.
    pub relative_threshold: f64,
    pub absolute_threshold: f64,
}

impl Default for Ld1Options {
    fn default() -> Self {
        Ld1Options { relative_threshold: 0.05, absolute_threshold: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ld1Report {
    pub epsilons: Vec<f64>,
    /// `E[sup_t |X^{ε,h}(t) − X^h(t)|²]` per ε.
    pub mean_sup_sq: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `sup_t |X^h(t)|²`.
    pub skeleton_sup_sq: f64,
    pub threshold: f64,
    /// Strictly decreasing as ε decreases.
    pub decreasing: bool,
    pub below_threshold: bool,
    pub passed: bool,
}

impl Ld1Report {
    /// `(m_i / m_{i+1}) / (ε_i / ε_{i+1})` for consecutive entries; 1 means
    /// the estimate is exactly proportional to ε.
    pub fn proportionality(&self) -> Vec<f64> {
        (1..self.epsilons.len())
            .map(|i| (self.mean_sup_sq[i - 1] / self.mean_sup_sq[i]) / (self.epsilons[i - 1] / self.epsilons[i]))
            .collect()
    }
}

/// Distance of the controlled noisy path to the skeleton path as ε shrinks.
pub fn test_ld1<E: Executor>(setup: &McSetup<'_>, h: &Control, eps_list: &[f64], opts: &Ld1Options, exec: &E) -> Result<Ld1Report> {
    setup.check()?;
    check_eps(eps_list, true)?;
    let McSetup { model, op, x0, grid, n_paths, seed } = *setup;
    let skeleton = solve_skeleton(model, op, x0, h, grid)?;
    let block = |range: Range<usize>| -> Result<Vec<Moments>> {
        let mut acc = vec![Moments::default(); eps_list.len()];
        let mut w = BrownianPath::generate(grid, model.noise_dim(), seed, range.start as u64);
        let mut path = SolutionPath::new(grid, model.dim());
        for i in range {
            w.regenerate(seed, i as u64);
            for (a, &eps) in acc.iter_mut().zip(eps_list) {
                simulate_controlled_into(model, op, x0, eps, h, &w, &mut path)?;
                a.push(path.sup_distance_sq(&skeleton));
            }
        }
        Ok(acc)
    };
    let acc = reduce_blocks(exec, n_paths, block, |a, b| merge_vec(a, b, Moments::merge))?;

    let mut order: Vec<usize> = (0..eps_list.len()).collect();
    order.sort_by(|&a, &b| eps_list[b].total_cmp(&eps_list[a]));
    let means: Vec<f64> = acc.iter().map(|m| m.mean).collect();
    let decreasing = order.windows(2).all(|w| means[w[1]] < means[w[0]]);
    let skeleton_sup_sq = skeleton.sup_norm_sq();
    let threshold = opts.relative_threshold * skeleton_sup_sq + opts.absolute_threshold;
    let smallest = *order.last().expect("non-empty eps list");
    let below_threshold = means[smallest] < threshold;
    Ok(Ld1Report {
        epsilons: eps_list.to_vec(),
        mean_sup_sq: means,
        stderr: acc.iter().map(|m| m.stderr()).collect(),
        skeleton_sup_sq,
        threshold,
        decreasing,
        below_threshold,
        passed: decreasing && below_threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformityReport {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl UniformityReport {
    /// `max / min` of the estimates over ε.
    pub fn spread(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// `E[sup_t |X(t,x) − X(t,y)|²] / |x − y|²` per ε, both paths on common noise.
pub fn initial_condition_sensitivity<E: Executor>(
    setup: &McSetup<'_>,
    y0: &[f64],
    eps_list: &[f64],
    exec: &E,
) -> Result<UniformityReport> {
    setup.check()?;
    check_eps(eps_list, false)?;
    let McSetup { model, op, x0, grid, n_paths, seed } = *setup;
    let gap = dist_sq(x0, y0);
    if !(gap > 0.0) {
        return Err(Error::InvalidArgument("initial points must differ".into()));
    }
    let block = |range: Range<usize>| -> Result<Vec<Moments>> {
        let mut acc = vec![Moments::default(); eps_list.len()];
        let mut w = BrownianPath::generate(grid, model.noise_dim(), seed, range.start as u64);
        let mut px = SolutionPath::new(grid, model.dim());
        let mut py = SolutionPath::new(grid, model.dim());
        for i in range {
            w.regenerate(seed, i as u64);
            for (a, &eps) in acc.iter_mut().zip(eps_list) {
                simulate_into(model, op, x0, eps, &w, &mut px)?;
                simulate_into(model, op, y0, eps, &w, &mut py)?;
                a.push(px.sup_distance_sq(&py) / gap);
            }
        }
        Ok(acc)
    };
    let acc = reduce_blocks(exec, n_paths, block, |a, b| merge_vec(a, b, Moments::merge))?;
    Ok(UniformityReport {
        epsilons: eps_list.to_vec(),
        values: acc.iter().map(|m| m.mean).collect(),
        stderr: acc.iter().map(|m| m.stderr()).collect(),
    })
}

/// `E[sup_t |X(t)|^{2p}] + E[|K|_T]` per ε, uncontrolled.
pub fn moment_bound<E: Executor>(setup: &McSetup<'_>, p: u32, eps_list: &[f64], exec: &E) -> Result<UniformityReport> {
    setup.check()?;
    check_eps(eps_list, false)?;
    let McSetup { model, op, x0, grid, n_paths, seed } = *setup;
    let block = |range: Range<usize>| -> Result<Vec<Moments>> {
        let mut acc = vec![Moments::default(); eps_list.len()];
        let mut w = BrownianPath::generate(grid, model.noise_dim(), seed, range.start as u64);
        let mut path = SolutionPath::new(grid, model.dim());
        for i in range {
            w.regenerate(seed, i as u64);
            for (a, &eps) in acc.iter_mut().zip(eps_list) {
                simulate_into(model, op, x0, eps, &w, &mut path)?;
                a.push(libm::pow(path.sup_norm_sq(), p as f64) + path.final_total_variation());
            }
        }
        Ok(acc)
    };
    let acc = reduce_blocks(exec, n_paths, block, |a, b| merge_vec(a, b, Moments::merge))?;
    Ok(UniformityReport {
        epsilons: eps_list.to_vec(),
        values: acc.iter().map(|m| m.mean).collect(),
        stderr: acc.iter().map(|m| m.stderr()).collect(),
    })
}

/// `E[sup_t |X(t)|]` on the given grid, used for step-halving comparisons.
pub fn mean_sup_norm<E: Executor>(setup: &McSetup<'_>, eps: f64, exec: &E) -> Result<(f64, f64)> {
    setup.check()?;
    let McSetup { model, op, x0, grid, n_paths, seed } = *setup;
    let block = |range: Range<usize>| -> Result<Moments> {
        let mut acc = Moments::default();
        let mut w = BrownianPath::generate(grid, model.noise_dim(), seed, range.start as u64);
        let mut path = SolutionPath::new(grid, model.dim());
        for i in range {
            w.regenerate(seed, i as u64);
            simulate_into(model, op, x0, eps, &w, &mut path)?;
            acc.push(libm::sqrt(path.sup_norm_sq()));
        }
        Ok(acc)
    };
    let m = reduce_blocks(exec, n_paths, block, Moments::merge)?;
    Ok((m.mean, m.stderr()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::monotone_ops::ConvexDomain;
    use crate::stats::normal_sf;

    fn bm() -> Model {
        Model::brownian(1).unwrap()
    }

    fn beyond(level: f64) -> EventSpec {
        EventSpec::new("beyond", EventKind::EndpointBeyond { direction: vec![1.0], level }, false)
    }

    #[test]
    fn affine_fit_examples() {
        let eps = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<f64> = eps.iter().map(|e| 0.5 + 0.1 * e).collect();
        let r = fit_eps(&eps, &y, FitModel::Affine).unwrap();
        assert!((r.intercept - 0.5).abs() < 1e-12 && (r.slope - 0.1).abs() < 1e-12);
        assert!(r.rms_residual < 1e-12);
        let r = fit_eps(&eps, &[0.7; 4], FitModel::Affine).unwrap();
        assert!((r.intercept - 0.7).abs() < 1e-12 && r.slope.abs() < 1e-12);
        assert!(fit_eps(&[0.1, 0.1, 0.2], &[1.0, 1.0, 2.0], FitModel::Affine).is_err());
    }

    #[test]
    fn log_corrected_fit_recovers_exact_terms() {
        let eps = [0.4, 0.2, 0.1, 0.05, 0.025];
        let y: Vec<f64> = eps.iter().map(|&e| 0.5 - 0.2 * e + 0.3 * e * libm::log(e)).collect();
        let r = fit_eps(&eps, &y, FitModel::AffineLogCorrected).unwrap();
        assert!((r.intercept - 0.5).abs() < 1e-10);
        assert!((r.log_coefficient.unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn degenerate_estimates_are_listed() {
        let mk = |e: f64, p: f64, deg: bool| McEstimate {
            epsilon: e,
            event_id: "x".into(),
            n_paths: 100,
            p_hat: p,
            stderr: 0.0,
            neg_eps_log_p: if p > 0.0 { -e * libm::log(p) } else { f64::INFINITY },
            tilted: false,
            ess: 100.0,
            degenerate: deg,
        };
        let est = [mk(0.4, 0.1, false), mk(0.2, 0.01, false), mk(0.1, 0.0, true), mk(0.05, 0.0, true)];
        match ldp_slope(&est, FitModel::Affine) {
            Err(Error::DegenerateFit { excluded }) => assert_eq!(excluded, vec![0.1, 0.05]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tilted_gaussian_tail() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let model = bm();
        let op = MonotoneOperator::zero(1).unwrap();
        let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid, n_paths: 20_000, seed: 11 };
        let h = Control::constant(1.0, 4, &[1.0]).unwrap();
        let est = estimate_event(&setup, &[0.1], &beyond(1.0), Some(&h), &Sequential).unwrap();
        let exact = normal_sf(1.0 / libm::sqrt(0.1));
        let e = &est[0];
        assert!(e.tilted && e.ess <= 20_000.0 && e.ess > 100.0);
        assert!((e.p_hat - exact).abs() < 3.0 * e.stderr, "{} vs {exact} ± {}", e.p_hat, e.stderr);
    }

    #[test]
    fn sure_event() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let model = Model::ornstein_uhlenbeck(1, 1.0).unwrap();
        let op = MonotoneOperator::zero(1).unwrap();
        let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid, n_paths: 500, seed: 1 };
        let ball = EventSpec::new("ball", EventKind::EndpointInBall { center: vec![0.0], radius: 100.0 }, true);
        let est = estimate_event(&setup, &[0.5, 0.1], &ball, None, &Sequential).unwrap();
        for e in est {
            assert_eq!(e.p_hat, 1.0);
            assert_eq!(e.neg_eps_log_p, 0.0);
            assert_eq!(e.stderr, 0.0);
        }
    }

    #[test]
    fn estimates_are_reproducible() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let model = bm();
        let op = MonotoneOperator::indicator(ConvexDomain::half_line());
        let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid, n_paths: 700, seed: 5 };
        let a = estimate_event(&setup, &[1.0, 0.3], &beyond(1.0), None, &Sequential).unwrap();
        let b = estimate_event(&setup, &[1.0, 0.3], &beyond(1.0), None, &Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn events() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = SolutionPath::from_parts(grid, 1, vec![0.0, 0.5, 1.2, 0.9, 1.0], vec![0.0; 5], 1.0).unwrap();
        assert!(beyond(1.0).contains(&p));
        assert!(!EventSpec { open: true, ..beyond(1.0) }.contains(&p));
        let run = EventSpec::new("run", EventKind::RunningMaxAbove { coord: 0, level: 1.1 }, false);
        assert!(run.contains(&p));
        let flat = SolutionPath::from_parts(grid, 1, vec![0.0, 0.5, 1.0, 1.0, 1.0], vec![0.0; 5], 1.0).unwrap();
        let tube = EventSpec::new("tube", EventKind::Tube { reference: flat, radius: 0.2 }, false);
        assert!(tube.contains(&p));
        assert_eq!(beyond(1.0).reference_target(&[0.25]), vec![1.0]);
    }

    #[test]
    fn laplace_constants() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let model = bm();
        let op = MonotoneOperator::zero(1).unwrap();
        let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid, n_paths: 100, seed: 0 };
        assert_eq!(laplace_estimate(&setup, 0.3, &PathFunctional::Zero, &Sequential).unwrap(), 0.0);
        let v = laplace_estimate(&setup, 0.3, &PathFunctional::Constant(0.8), &Sequential).unwrap();
        assert!((v + 0.8).abs() < 1e-14);
    }

    #[test]
    fn ld1_free_brownian_is_proportional() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let model = bm();
        let op = MonotoneOperator::zero(1).unwrap();
        let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid, n_paths: 300, seed: 2 };
        let h = Control::zeros(1.0, 4, 1).unwrap();
        let r = test_ld1(&setup, &h, &[0.4, 0.2, 0.1, 0.0], &Ld1Options::default(), &Sequential).unwrap();
        assert_eq!(r.mean_sup_sq[3], 0.0);
        assert!(r.decreasing);
        for q in &r.proportionality()[..2] {
            assert!((q - 1.0).abs() < 1e-9, "{q}");
        }
    }

    #[test]
    fn too_few_paths() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let model = bm();
        let op = MonotoneOperator::zero(1).unwrap();
        let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid, n_paths: 99, seed: 0 };
        assert!(estimate_event(&setup, &[0.5], &beyond(1.0), None, &Sequential).is_err());
    }
}
