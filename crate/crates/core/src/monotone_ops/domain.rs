//! Closed convex sets with non-empty interior and their Euclidean projections.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{all_finite, dist, dot, norm, norm_sq};
use crate::{Error, Result};

/// Membership / activity tolerance for points on the boundary.
pub const MEMBERSHIP_TOL: f64 = 1e-10;
/// Dykstra stopping tolerance on the change of the correction terms.
pub const DYKSTRA_TOL: f64 = 1e-12;
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;

/// `{x : ⟨normal, x⟩ ≤ offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.is_empty() || !all_finite(&normal) || !offset.is_finite() {
            return Err(Error::InvalidDomain("half-space needs a finite normal and offset".into()));
        }
        if norm(&normal) == 0.0 {
            return Err(Error::InvalidDomain("half-space normal is zero".into()));
        }
        Ok(HalfSpace { normal, offset })
    }

    /// Signed distance, positive outside.
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        (dot(&self.normal, x) - self.offset) / norm(&self.normal)
    }

    #[inline]
    fn project_into(&self, x: &mut [f64]) {
        let excess = dot(&self.normal, x) - self.offset;
        if excess > 0.0 {
            let t = excess / norm_sq(&self.normal);
            x.iter_mut().zip(&self.normal).for_each(|(xi, ai)| *xi -= t * ai);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// All of `R^m`; its indicator has the zero subdifferential.
    Whole,
    HalfSpace(HalfSpace),
    /// Per-axis bounds, infinite bounds allowed.
    AxisBox { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// Intersection of half-spaces.
    Polytope(Vec<HalfSpace>),
}

/// A closed convex subset of `R^m` with a stored strictly interior point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexDomain {
    dim: usize,
    shape: Shape,
    interior: Vec<f64>,
}

impl ConvexDomain {
    pub fn whole(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        Ok(ConvexDomain { dim, shape: Shape::Whole, interior: vec![0.0; dim] })
    }

    /// `{x : ⟨normal, x⟩ ≤ offset}`; the interior point sits at distance one
    /// inside the boundary hyperplane.
    pub fn half_space(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let hs = HalfSpace::new(normal, offset)?;
        let n2 = norm_sq(&hs.normal);
        let n = libm::sqrt(n2);
        let interior = hs.normal.iter().map(|a| a * (offset / n2) - a / n).collect();
        Ok(ConvexDomain { dim: hs.normal.len(), shape: Shape::HalfSpace(hs), interior })
    }

    /// `{x : x¹ ≥ 0}` in `R^dim`.
    pub fn half_plane(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        let mut normal = vec![0.0; dim];
        normal[0] = -1.0;
        Self::half_space(normal, 0.0)
    }

    /// `[0, ∞)` in `R¹`.
    pub fn half_line() -> Self {
        Self::half_plane(1).expect("valid half-line")
    }

    pub fn axis_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidDomain("box bounds must be non-empty and of equal length".into()));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if lo.is_nan() || hi.is_nan() || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY || lo >= hi {
                return Err(Error::InvalidDomain("box needs lower < upper on every axis".into()));
            }
        }
        let interior = lower
            .iter()
            .zip(&upper)
            .map(|(&lo, &hi)| match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => 0.0,
            })
            .collect();
        Ok(ConvexDomain { dim: lower.len(), shape: Shape::AxisBox { lower, upper }, interior })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !all_finite(&center) || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidDomain("ball needs a finite center and positive radius".into()));
        }
        Ok(ConvexDomain { dim: center.len(), interior: center.clone(), shape: Shape::Ball { center, radius } })
    }

    pub fn unit_ball(dim: usize) -> Result<Self> {
        Self::ball(vec![0.0; dim], 1.0)
    }

    /// Intersection of half-spaces; `interior` must satisfy every inequality strictly.
    pub fn polytope(faces: Vec<HalfSpace>, interior: Vec<f64>) -> Result<Self> {
        let Some(first) = faces.first() else {
            return Err(Error::InvalidDomain("polytope needs at least one face".into()));
        };
        let dim = first.normal.len();
        if faces.iter().any(|f| f.normal.len() != dim) {
            return Err(Error::InvalidDomain("polytope faces have mixed dimensions".into()));
        }
        if interior.len() != dim || !all_finite(&interior) {
            return Err(Error::DimensionMismatch { expected: dim, got: interior.len() });
        }
        if faces.iter().any(|f| f.signed_distance(&interior) >= 0.0) {
            return Err(Error::InvalidDomain("stored interior point is not strictly interior".into()));
        }
        Ok(ConvexDomain { dim, shape: Shape::Polytope(faces), interior })
    }

    /// Replaces the stored interior point.
    pub fn with_interior_point(mut self, point: Vec<f64>) -> Result<Self> {
        self.check_dim(&point)?;
        if self.boundary_distance(&point) <= 0.0 {
            return Err(Error::InvalidDomain("point is not strictly interior".into()));
        }
        self.interior = point;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn interior_point(&self) -> &[f64] {
        &self.interior
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            Shape::Whole => "whole",
            Shape::HalfSpace(_) => "half-space",
            Shape::AxisBox { .. } => "box",
            Shape::Ball { .. } => "ball",
            Shape::Polytope(_) => "polytope",
        }
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// How far `x` lies outside the set (0 inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = match &self.shape {
            Shape::Whole => 0.0,
            Shape::HalfSpace(h) => h.signed_distance(x),
            Shape::AxisBox { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&xi, (&lo, &hi))| (lo - xi).max(xi - hi))
                .fold(f64::NEG_INFINITY, f64::max),
            Shape::Ball { center, radius } => dist(x, center) - radius,
            Shape::Polytope(faces) => faces.iter().map(|f| f.signed_distance(x)).fold(f64::NEG_INFINITY, f64::max),
        };
        v.max(0.0)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim && self.violation(x) <= tol
    }

    /// Distance from an interior point to the boundary (`inf` for the whole space).
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        match &self.shape {
            Shape::Whole => f64::INFINITY,
            Shape::HalfSpace(h) => -h.signed_distance(p),
            Shape::AxisBox { lower, upper } => p
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&x, (&lo, &hi))| (x - lo).min(hi - x))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { center, radius } => radius - dist(p, center),
            Shape::Polytope(faces) => faces.iter().map(|f| -f.signed_distance(p)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Euclidean nearest point of the set.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.project_into(&mut out)?;
        Ok(out)
    }

    /// Projects `x` in place.
    pub fn project_into(&self, x: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        match &self.shape {
            Shape::Whole => {}
            Shape::HalfSpace(h) => h.project_into(x),
            Shape::AxisBox { lower, upper } => {
                x.iter_mut().zip(lower.iter().zip(upper)).for_each(|(xi, (&lo, &hi))| *xi = xi.clamp(lo, hi));
            }
            Shape::Ball { center, radius } => {
                let d = dist(x, center);
                if d > *radius {
                    let s = radius / d;
                    x.iter_mut().zip(center).for_each(|(xi, ci)| *xi = ci + s * (*xi - ci));
                }
            }
            Shape::Polytope(faces) => project_polytope(faces, x)?,
        }
        Ok(())
    }

    /// Whether `y` lies in the normal cone of the set at `x`, i.e.
    /// `⟨y, x − z⟩ ≥ 0` for every `z` in the set (up to [`MEMBERSHIP_TOL`]).
    pub fn normal_cone_contains(&self, x: &[f64], y: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let violation = self.violation(x);
        if violation > MEMBERSHIP_TOL {
            return Err(Error::NotInDomain { violation });
        }
        let tol = MEMBERSHIP_TOL * (1.0 + norm(y));
        Ok(match &self.shape {
            Shape::Whole => norm(y) <= tol,
            Shape::HalfSpace(h) => {
                if h.signed_distance(x) < -MEMBERSHIP_TOL {
                    norm(y) <= tol
                } else {
                    on_ray(&h.normal, y, tol)
                }
            }
            Shape::AxisBox { lower, upper } => x.iter().zip(y).zip(lower.iter().zip(upper)).all(|((&xi, &yi), (&lo, &hi))| {
                let at_lo = xi - lo <= MEMBERSHIP_TOL;
                let at_hi = hi - xi <= MEMBERSHIP_TOL;
                match (at_lo, at_hi) {
                    (true, true) => true,
                    (true, false) => yi <= tol,
                    (false, true) => yi >= -tol,
                    (false, false) => yi.abs() <= tol,
                }
            }),
            Shape::Ball { center, radius } => {
                if radius - dist(x, center) > MEMBERSHIP_TOL {
                    norm(y) <= tol
                } else {
                    let radial: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                    on_ray(&radial, y, tol)
                }
            }
            Shape::Polytope(faces) => {
                let active: Vec<&[f64]> = faces
                    .iter()
                    .filter(|f| f.signed_distance(x) >= -MEMBERSHIP_TOL)
                    .map(|f| f.normal.as_slice())
                    .collect();
                if norm(y) <= tol {
                    true
                } else {
                    cone_decomposition(&active, y, tol).is_some()
                }
            }
        })
    }

    /// Applies the (generalized, symmetric) Jacobian of the projection at the
    /// pre-image `y` to `w` in place; `z = Π(y)`.
    pub fn projection_jacobian_apply(&self, y: &[f64], z: &[f64], w: &mut [f64]) {
        match &self.shape {
            Shape::Whole => {}
            Shape::HalfSpace(h) => {
                if dot(&h.normal, y) > h.offset {
                    let t = dot(&h.normal, w) / norm_sq(&h.normal);
                    w.iter_mut().zip(&h.normal).for_each(|(wi, ai)| *wi -= t * ai);
                }
            }
            Shape::AxisBox { lower, upper } => {
                for ((wi, &yi), (&lo, &hi)) in w.iter_mut().zip(y).zip(lower.iter().zip(upper)) {
                    if yi < lo || yi > hi {
                        *wi = 0.0;
                    }
                }
            }
            Shape::Ball { center, radius } => {
                let rho = dist(y, center);
                if rho > *radius {
                    let u: Vec<f64> = y.iter().zip(center).map(|(a, c)| (a - c) / rho).collect();
                    let t = dot(&u, w);
                    let s = radius / rho;
                    w.iter_mut().zip(&u).for_each(|(wi, ui)| *wi = s * (*wi - t * ui));
                }
            }
            Shape::Polytope(faces) => {
                if faces.iter().all(|f| dot(&f.normal, y) <= f.offset) {
                    return;
                }
                let active: Vec<&[f64]> = faces
                    .iter()
                    .filter(|f| f.signed_distance(z) >= -1e-9)
                    .map(|f| f.normal.as_slice())
                    .collect();
                let v: Vec<f64> = y.iter().zip(z).map(|(a, b)| a - b).collect();
                if let Some((subset, _)) = cone_decomposition(&active, &v, 1e-9 * (1.0 + norm(&v))) {
                    let rows: Vec<&[f64]> = subset.iter().map(|&i| active[i]).collect();
                    remove_span(&rows, w);
                }
            }
        }
    }

    /// Typical length scale for random sampling around the interior point.
    pub fn sampling_scale(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::AxisBox { lower, upper } => {
                let w = lower
                    .iter()
                    .zip(upper)
                    .map(|(lo, hi)| hi - lo)
                    .filter(|w| w.is_finite())
                    .fold(0.0_f64, f64::max);
                if w > 0.0 {
                    1.5 * w
                } else {
                    2.0
                }
            }
            Shape::Polytope(_) => {
                let d = self.boundary_distance(&self.interior);
                (4.0 * d).max(2.0)
            }
            _ => 2.0,
        }
    }

    /// Draws a boundary point together with a unit outward normal at it, by
    /// projecting a random exterior point. `None` for the whole space.
    pub fn sample_boundary_normal<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(Vec<f64>, Vec<f64>)> {
        if matches!(self.shape, Shape::Whole) {
            return None;
        }
        let mut scale = self.sampling_scale();
        for _ in 0..256 {
            let p: Vec<f64> = self.interior.iter().map(|c| c + scale * rng.sample::<f64, _>(StandardNormal)).collect();
            if self.violation(&p) > 1e-6 {
                let x = self.project(&p).ok()?;
                let d = dist(&p, &x);
                let n = p.iter().zip(&x).map(|(a, b)| (a - b) / d).collect();
                return Some((x, n));
            }
            scale *= 1.1;
        }
        None
    }
}

/// `y = t·dir` for some `t ≥ 0`, within `tol`.
fn on_ray(dir: &[f64], y: &[f64], tol: f64) -> bool {
    let t = dot(dir, y) / norm_sq(dir);
    if t < 0.0 {
        return norm(y) <= tol;
    }
    y.iter().zip(dir).map(|(yi, di)| (yi - t * di) * (yi - t * di)).sum::<f64>() <= tol * tol
}

/// Finds a linearly independent subset `S` of `normals` and `λ ≥ 0` with
/// `v = Σ_{i∈S} λ_i normals[i]` up to `tol`. By Carathéodory only subsets of
/// size at most the dimension need to be tried.
pub(crate) fn cone_decomposition(normals: &[&[f64]], v: &[f64], tol: f64) -> Option<(Vec<usize>, Vec<f64>)> {
    let k = normals.len();
    if k == 0 || k > 24 {
        return None;
    }
    let dim = v.len();
    let mut masks: Vec<u32> = (1u32..(1u32 << k)).filter(|m| m.count_ones() as usize <= dim).collect();
    masks.sort_by_key(|m| m.count_ones());
    for mask in masks {
        let subset: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let rows: Vec<&[f64]> = subset.iter().map(|&i| normals[i]).collect();
        let Some(lambda) = gram_solve(&rows, v) else { continue };
        if lambda.iter().any(|&l| l < -tol) {
            continue;
        }
        let mut r = v.to_vec();
        for (row, l) in rows.iter().zip(&lambda) {
            r.iter_mut().zip(row.iter()).for_each(|(ri, ai)| *ri -= l * ai);
        }
        if norm(&r) <= tol {
            return Some((subset, lambda));
        }
    }
    None
}

/// Least-squares coefficients of `v` on the span of `rows`; `None` when the
/// rows are (numerically) dependent.
fn gram_solve(rows: &[&[f64]], v: &[f64]) -> Option<Vec<f64>> {
    let s = rows.len();
    let gram = DMatrix::from_fn(s, s, |i, j| dot(rows[i], rows[j]));
    let rhs = DVector::from_iterator(s, rows.iter().map(|r| dot(r, v)));
    let chol = gram.cholesky()?;
    let diag_min = (0..s).map(|i| chol.l_dirty()[(i, i)]).fold(f64::INFINITY, f64::min);
    let scale = (0..s).map(|i| libm::sqrt(dot(rows[i], rows[i]))).fold(0.0_f64, f64::max);
    if diag_min <= 1e-10 * scale {
        return None;
    }
    Some(chol.solve(&rhs).iter().copied().collect())
}

/// `w ← w − Aᵀ (A Aᵀ)⁻¹ A w`, the projector onto the null space of `rows`.
fn remove_span(rows: &[&[f64]], w: &mut [f64]) {
    if let Some(coef) = gram_solve(rows, w) {
        for (row, c) in rows.iter().zip(coef) {
            w.iter_mut().zip(row.iter()).for_each(|(wi, ai)| *wi -= c * ai);
        }
    }
}

fn project_polytope(faces: &[HalfSpace], x: &mut [f64]) -> Result<()> {
    if faces.iter().all(|f| dot(&f.normal, x) <= f.offset) {
        return Ok(());
    }
    let origin = x.to_vec();
    let dim = x.len();
    let mut corrections = vec![0.0; faces.len() * dim];
    let mut y = vec![0.0; dim];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let scale = 1.0 + norm(&origin);
    let mut sweeps = 0;
    while sweeps < DYKSTRA_MAX_SWEEPS {
        sweeps += 1;
        let mut change = 0.0;
        for (face, p) in faces.iter().zip(corrections.chunks_exact_mut(dim)) {
            y.iter_mut().zip(x.iter().zip(p.iter())).for_each(|(yi, (xi, pi))| *yi = xi + pi);
            x.copy_from_slice(&y);
            face.project_into(x);
            for ((pi, yi), xi) in p.iter_mut().zip(&y).zip(x.iter()) {
                let next = yi - xi;
                change += (next - *pi) * (next - *pi);
                *pi = next;
            }
        }
        residual = libm::sqrt(change);
        if residual <= DYKSTRA_TOL * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ProjectionNotConverged { sweeps, residual });
    }
    polish_projection(faces, &origin, x);
    Ok(())
}

/// Re-solves the projection exactly on the active faces found by Dykstra,
/// keeping the Dykstra point unless the exact solution is consistent.
fn polish_projection(faces: &[HalfSpace], origin: &[f64], x: &mut [f64]) {
    let active: Vec<&HalfSpace> = faces.iter().filter(|f| f.signed_distance(x) >= -1e-9).collect();
    if active.is_empty() {
        return;
    }
    let normals: Vec<&[f64]> = active.iter().map(|f| f.normal.as_slice()).collect();
    let v: Vec<f64> = origin.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
    let Some((subset, _)) = cone_decomposition(&normals, &v, 1e-8 * (1.0 + norm(&v))) else {
        return;
    };
    let rows: Vec<&[f64]> = subset.iter().map(|&i| normals[i]).collect();
    let s = rows.len();
    let gram = DMatrix::from_fn(s, s, |i, j| dot(rows[i], rows[j]));
    let rhs = DVector::from_iterator(s, subset.iter().map(|&i| dot(&active[i].normal, origin) - active[i].offset));
    let Some(chol) = gram.cholesky() else { return };
    let mu = chol.solve(&rhs);
    if mu.iter().any(|&m| m < 0.0) {
        return;
    }
    let mut z = origin.to_vec();
    for (row, m) in rows.iter().zip(mu.iter()) {
        z.iter_mut().zip(row.iter()).for_each(|(zi, ai)| *zi -= m * ai);
    }
    let feasible = faces.iter().all(|f| f.signed_distance(&z) <= 1e-14 * (1.0 + norm(&z)));
    if feasible && dist(&z, x) <= 1e-8 {
        x.copy_from_slice(&z);
    }
}

impl core::fmt::Display for ConvexDomain {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} in R^{}", self.kind_name(), self.dim)
    }
}
