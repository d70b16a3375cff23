//! Maximal monotone operators, their resolvents `J_λ = (I + λA)⁻¹` and Yosida
//! approximations `A_λ = (I − J_λ)/λ`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::domain::{ConvexDomain, Shape};
use crate::linalg::{all_finite, norm};
use crate::{Error, Result};

/// Stopping width of the resolvent bisection.
pub const BISECTION_TOL: f64 = 1e-12;

/// A nondecreasing step function on `R` filled in at its jumps.
///
/// At breakpoint `b_i` the graph takes the closed interval `[lo_i, hi_i]`;
/// on `(b_{i-1}, b_i)` it takes the single value `hi_{i-1} = lo_i`, left of
/// the first breakpoint `lo_0` and right of the last `hi_last`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilledGraph {
    breakpoints: Vec<f64>,
    intervals: Vec<(f64, f64)>,
}

impl FilledGraph {
    pub fn new(breakpoints: Vec<f64>, intervals: Vec<(f64, f64)>) -> Result<Self> {
        let g = Self::new_unchecked(breakpoints, intervals)?;
        if g.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidOperator("breakpoints must be strictly increasing".into()));
        }
        if g.intervals.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::InvalidOperator("value interval with lo > hi".into()));
        }
        if g.intervals.windows(2).any(|w| (w[0].1 - w[1].0).abs() > 1e-12 * (1.0 + w[0].1.abs())) {
            return Err(Error::InvalidOperator("jump intervals must close the gap between neighbouring values".into()));
        }
        Ok(g)
    }

    /// Skips the monotonicity and closedness checks. Only used to build
    /// deliberately broken graphs for negative tests.
    pub fn new_unchecked(breakpoints: Vec<f64>, intervals: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != intervals.len() {
            return Err(Error::InvalidOperator("need one value interval per breakpoint".into()));
        }
        if !all_finite(&breakpoints) || intervals.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidOperator("graph data must be finite".into()));
        }
        Ok(FilledGraph { breakpoints, intervals })
    }

    /// The maximal extension of `sign`: `0 ↦ [−1, 1]`.
    pub fn sign() -> Self {
        Self::new(vec![0.0], vec![(-1.0, 1.0)]).expect("valid sign graph")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Value on the open segment containing `z`, or at a breakpoint the
    /// value of the segment to its right.
    fn segment_value(&self, z: f64) -> f64 {
        match self.breakpoints.iter().rposition(|&b| b <= z) {
            None => self.intervals[0].0,
            Some(i) if self.breakpoints[i] == z => 0.5 * (self.intervals[i].0 + self.intervals[i].1),
            Some(i) => self.intervals[i].1,
        }
    }

    fn interval_at(&self, i: usize) -> (f64, f64) {
        let (a, b) = self.intervals[i];
        (a.min(b), a.max(b))
    }

    fn max_abs_value(&self) -> f64 {
        self.intervals.iter().fold(0.0_f64, |m, (a, b)| m.max(a.abs()).max(b.abs()))
    }

    /// Whether `y ∈ A(z)`.
    pub fn contains(&self, z: f64, y: f64, tol: f64) -> bool {
        if let Some(i) = self.breakpoints.iter().position(|&b| b == z) {
            let (lo, hi) = self.interval_at(i);
            return y >= lo - tol && y <= hi + tol;
        }
        (self.segment_value(z) - y).abs() <= tol
    }

    /// Solves `x ∈ z + λA(z)` by bisection on `z ↦ z + λ·a(z)`, then snaps to
    /// a breakpoint or the exact segment solution.
    fn resolvent(&self, lambda: f64, x: f64) -> Result<(f64, bool)> {
        let span = lambda * self.max_abs_value() + 1.0;
        let (mut lo, mut hi) = (x - span, x + span);
        let g = |z: f64| z + lambda * self.segment_value(z);
        if !(g(lo) <= x && g(hi) >= x) {
            return Err(Error::BracketFailure { x });
        }
        let tol = BISECTION_TOL * (1.0 + x.abs());
        let mut iters = 0;
        while hi - lo > tol && iters < 400 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
            iters += 1;
        }
        let slack = 4.0 * tol;
        for (i, &b) in self.breakpoints.iter().enumerate() {
            if b >= lo - slack && b <= hi + slack {
                let (vlo, vhi) = self.interval_at(i);
                let r = x - b;
                if r >= lambda * vlo - slack && r <= lambda * vhi + slack {
                    return Ok((b, true));
                }
            }
        }
        let mid = 0.5 * (lo + hi);
        let z = x - lambda * self.segment_value(mid);
        if (z - mid).abs() <= 8.0 * tol + 1e-9 * lambda {
            Ok((z, false))
        } else {
            Err(Error::BracketFailure { x })
        }
    }
}

/// `F(x) = rate · (x − center)`, monotone and `rate`-Lipschitz.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMonotoneMap {
    pub rate: f64,
    pub center: Vec<f64>,
}

impl LinearMonotoneMap {
    pub fn new(rate: f64, center: Vec<f64>) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) || !all_finite(&center) {
            return Err(Error::InvalidOperator("linear map needs a finite rate ≥ 0".into()));
        }
        Ok(LinearMonotoneMap { rate, center })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| self.rate * (a - c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneOperator {
    /// Subdifferential of the indicator of a closed convex set.
    Indicator(ConvexDomain),
    /// One-dimensional filled monotone graph.
    FilledGraph(FilledGraph),
    /// `base + F` with `F` single valued, monotone and Lipschitz.
    Sum { base: Box<MonotoneOperator>, map: LinearMonotoneMap },
}

impl MonotoneOperator {
    /// `A ≡ 0` on `R^dim`.
    pub fn zero(dim: usize) -> Result<Self> {
        Ok(MonotoneOperator::Indicator(ConvexDomain::whole(dim)?))
    }

    pub fn indicator(domain: ConvexDomain) -> Self {
        MonotoneOperator::Indicator(domain)
    }

    pub fn sum(base: MonotoneOperator, map: LinearMonotoneMap) -> Result<Self> {
        if map.center.len() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: map.center.len() });
        }
        Ok(MonotoneOperator::Sum { base: Box::new(base), map })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MonotoneOperator::Indicator(_) => "indicator",
            MonotoneOperator::FilledGraph(_) => "filled_graph",
            MonotoneOperator::Sum { .. } => "sum",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MonotoneOperator::Indicator(d) => d.dim(),
            MonotoneOperator::FilledGraph(_) => 1,
            MonotoneOperator::Sum { base, .. } => base.dim(),
        }
    }

    /// The closed convex set underlying the operator, if any.
    pub fn domain(&self) -> Option<&ConvexDomain> {
        match self {
            MonotoneOperator::Indicator(d) => Some(d),
            MonotoneOperator::FilledGraph(_) => None,
            MonotoneOperator::Sum { base, .. } => base.domain(),
        }
    }

    /// Whether `x` lies in the closure of `D(A)`.
    pub fn in_closed_domain(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.domain().is_none_or(|d| d.contains(x, tol))
    }

    /// A point of `Int(D(A))` used for sampling and Cépa's constants.
    pub fn interior_point(&self) -> Vec<f64> {
        match self {
            MonotoneOperator::Indicator(d) => d.interior_point().to_vec(),
            MonotoneOperator::FilledGraph(_) => vec![0.0],
            MonotoneOperator::Sum { base, .. } => base.interior_point(),
        }
    }

    pub(crate) fn sampling_scale(&self) -> f64 {
        match self {
            MonotoneOperator::Indicator(d) => d.sampling_scale(),
            MonotoneOperator::FilledGraph(g) => {
                let b = g.breakpoints();
                (b[b.len() - 1] - b[0]).abs() + 2.0
            }
            MonotoneOperator::Sum { base, .. } => base.sampling_scale(),
        }
    }

    pub fn resolvent(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.resolvent_into(lambda, x, &mut out)?;
        Ok(out)
    }

    /// Writes `J_λ(x)` into `out`.
    pub fn resolvent_into(&self, lambda: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument("resolvent needs lambda > 0".into()));
        }
        if x.len() != self.dim() || out.len() != x.len() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        match self {
            MonotoneOperator::Indicator(d) => {
                out.copy_from_slice(x);
                d.project_into(out)
            }
            MonotoneOperator::FilledGraph(g) => {
                out[0] = g.resolvent(lambda, x[0])?.0;
                Ok(())
            }
            MonotoneOperator::Sum { base, map } => {
                // x ∈ z + λB(z) + λc(z − r)  ⇔  (x + λcr)/(1 + λc) ∈ z + λ/(1 + λc)·B(z)
                let s = 1.0 + lambda * map.rate;
                let shifted: Vec<f64> = x.iter().zip(&map.center).map(|(xi, ri)| (xi + lambda * map.rate * ri) / s).collect();
                base.resolvent_into(lambda / s, &shifted, out)
            }
        }
    }

    /// Yosida approximation `(x − J_λ x)/λ`.
    pub fn yosida(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.resolvent(lambda, x)?;
        Ok(x.iter().zip(&z).map(|(a, b)| (a - b) / lambda).collect())
    }

    /// Applies the (generalized, symmetric) Jacobian of `J_λ` at `x` to `w`
    /// in place; `z = J_λ(x)`.
    pub fn resolvent_jacobian_apply(&self, lambda: f64, x: &[f64], z: &[f64], w: &mut [f64]) {
        match self {
            MonotoneOperator::Indicator(d) => d.projection_jacobian_apply(x, z, w),
            MonotoneOperator::FilledGraph(g) => {
                if g.breakpoints.contains(&z[0]) {
                    w[0] = 0.0;
                }
            }
            MonotoneOperator::Sum { base, map } => {
                let s = 1.0 + lambda * map.rate;
                let shifted: Vec<f64> = x.iter().zip(&map.center).map(|(xi, ri)| (xi + lambda * map.rate * ri) / s).collect();
                base.resolvent_jacobian_apply(lambda / s, &shifted, z, w);
                w.iter_mut().for_each(|wi| *wi /= s);
            }
        }
    }

    /// Whether `y ∈ A(x)`.
    pub fn contains(&self, x: &[f64], y: &[f64], tol: f64) -> Result<bool> {
        match self {
            MonotoneOperator::Indicator(d) => d.normal_cone_contains(x, y),
            MonotoneOperator::FilledGraph(g) => Ok(g.contains(x[0], y[0], tol)),
            MonotoneOperator::Sum { base, map } => {
                let f = map.eval(x);
                let rest: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
                base.contains(x, &rest, tol)
            }
        }
    }

    /// Exact points of `Gr(A)`: boundary points with scaled outward normals,
    /// the interior point with `0`, and for graphs every jump endpoint.
    pub fn graph_samples<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut out = Vec::with_capacity(count + 4);
        match self {
            MonotoneOperator::Indicator(d) => {
                out.push((d.interior_point().to_vec(), vec![0.0; d.dim()]));
                if matches!(d.shape(), Shape::Whole) {
                    let s = d.sampling_scale();
                    while out.len() < count {
                        let x = (0..d.dim()).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
                        out.push((x, vec![0.0; d.dim()]));
                    }
                    return out;
                }
                while out.len() < count {
                    let Some((x, n)) = d.sample_boundary_normal(rng) else { break };
                    let t: f64 = rng.random::<f64>();
                    out.push((x, n.iter().map(|v| t * v).collect()));
                }
            }
            MonotoneOperator::FilledGraph(g) => {
                for (i, &b) in g.breakpoints.iter().enumerate() {
                    let (lo, hi) = g.interval_at(i);
                    out.push((vec![b], vec![lo]));
                    out.push((vec![b], vec![hi]));
                    out.push((vec![b], vec![0.5 * (lo + hi)]));
                }
                let s = self.sampling_scale();
                while out.len() < count {
                    let z = g.breakpoints[0] + s * rng.sample::<f64, _>(StandardNormal);
                    out.push((vec![z], vec![g.segment_value(z)]));
                }
            }
            MonotoneOperator::Sum { base, map } => {
                for (x, y) in base.graph_samples(rng, count) {
                    let f = map.eval(&x);
                    let y = y.iter().zip(&f).map(|(a, b)| a + b).collect();
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Largest `|y|` over `y ∈ A(x)`, `x` in the closed ball `B(a, r)`,
    /// estimated from the graph data and `samples` random points.
    pub(crate) fn sampled_sup_norm<R: Rng + ?Sized>(&self, a: &[f64], r: f64, samples: usize, rng: &mut R) -> f64 {
        let point = |rng: &mut R| -> Vec<f64> {
            let dir: Vec<f64> = (0..a.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = norm(&dir).max(f64::MIN_POSITIVE);
            let rad = r * libm::pow(rng.random::<f64>(), 1.0 / a.len() as f64);
            a.iter().zip(&dir).map(|(ai, di)| ai + rad * di / n).collect()
        };
        match self {
            // Interior of the set: A(x) = {0}.
            MonotoneOperator::Indicator(_) => 0.0,
            MonotoneOperator::FilledGraph(g) => {
                let mut sup = 0.0_f64;
                for (i, &b) in g.breakpoints.iter().enumerate() {
                    if (b - a[0]).abs() <= r {
                        let (lo, hi) = g.interval_at(i);
                        sup = sup.max(lo.abs()).max(hi.abs());
                    }
                }
                for _ in 0..samples {
                    sup = sup.max(g.segment_value(point(rng)[0]).abs());
                }
                sup
            }
            MonotoneOperator::Sum { base, map } => {
                let mut sup = 0.0_f64;
                for _ in 0..samples {
                    sup = sup.max(norm(&map.eval(&point(rng))));
                }
                sup + base.sampled_sup_norm(a, r, samples, rng)
            }
        }
    }
}
