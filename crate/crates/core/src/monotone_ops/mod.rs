//! Maximal monotone operators and convex geometry.
//!
//! The workhorse is the indicator subdifferential `∂I_O` of a closed convex
//! set `O`: `{0}` in the interior, the outward normal cone on the boundary and
//! empty outside. Its resolvent is the Euclidean projection onto `O`.

mod cepa;
mod domain;
mod operator;
mod properties;

pub use cepa::{cepa_constants, cepa_constants_for, CepaConstants, CEPA_MU_MARGIN};
pub use domain::{ConvexDomain, HalfSpace, Shape, DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL, MEMBERSHIP_TOL};
pub use operator::{FilledGraph, LinearMonotoneMap, MonotoneOperator, BISECTION_TOL};
pub use properties::{verify_operator_properties, OperatorPropertyReport, Violations, VARIATIONAL_POOL};

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::dot;

/// Resolvent step used to sample graph pairs `(J_λx, A_λx)`.
pub const GRAPH_SAMPLING_LAMBDA: f64 = 1e-4;
/// Allowed violation of `⟨y₁ − y₂, x₁ − x₂⟩ ≥ 0`.
pub const MONOTONE_TOL: f64 = 1e-9;

/// A pair of graph points violating monotonicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x1: Vec<f64>,
    pub y1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y2: Vec<f64>,
    pub inner: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub samples: usize,
    pub comparisons: usize,
    /// Smallest observed `⟨y₁ − y₂, x₁ − x₂⟩`.
    pub min_inner: f64,
    /// The pair attaining `min_inner` when it is negative.
    pub witness: Option<Witness>,
    pub resolvent_failures: usize,
    pub passed: bool,
}

/// Samples graph pairs through the resolvent at [`GRAPH_SAMPLING_LAMBDA`] and
/// checks them against each other and against exact graph points.
pub fn verify_monotone(op: &MonotoneOperator, sample_count: usize, rng_seed: u64) -> MonotonicityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let lambda = GRAPH_SAMPLING_LAMBDA;
    let center = op.interior_point();
    let scale = op.sampling_scale();
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(sample_count.max(1));
    let mut failures = 0;
    for _ in 0..sample_count.max(1) {
        let x: Vec<f64> = center.iter().map(|c| c + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        match op.resolvent(lambda, &x) {
            Ok(z) => {
                let y = x.iter().zip(&z).map(|(a, b)| (a - b) / lambda).collect();
                pairs.push((z, y));
            }
            Err(_) => failures += 1,
        }
    }
    let exact = op.graph_samples(&mut rng, 32);

    let mut min_inner = f64::INFINITY;
    let mut witness = None;
    let mut comparisons = 0;
    let mut check = |a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)| {
        let dx: Vec<f64> = a.0.iter().zip(&b.0).map(|(p, q)| p - q).collect();
        let dy: Vec<f64> = a.1.iter().zip(&b.1).map(|(p, q)| p - q).collect();
        let inner = dot(&dx, &dy);
        comparisons += 1;
        if inner < min_inner {
            min_inner = inner;
            if inner < 0.0 {
                witness = Some(Witness { x1: a.0.clone(), y1: a.1.clone(), x2: b.0.clone(), y2: b.1.clone(), inner });
            }
        }
    };
    let n = pairs.len();
    for i in 0..n {
        if i + 1 < n {
            check(&pairs[i], &pairs[i + 1]);
        }
        if n > 1 {
            let j = rng.random_range(0..n);
            if j != i {
                check(&pairs[i], &pairs[j]);
            }
        }
        for e in &exact {
            check(&pairs[i], e);
        }
    }
    if min_inner == f64::INFINITY {
        min_inner = 0.0;
    }
    MonotonicityReport {
        samples: n,
        comparisons,
        min_inner,
        witness,
        resolvent_failures: failures,
        passed: failures == 0 && min_inner >= -MONOTONE_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ball_and_sign_graph_are_monotone() {
        let ball = MonotoneOperator::indicator(ConvexDomain::unit_ball(2).unwrap());
        let r = verify_monotone(&ball, 10_000, 1);
        assert!(r.passed, "{r:?}");
        let sign = MonotoneOperator::FilledGraph(FilledGraph::sign());
        let r = verify_monotone(&sign, 10_000, 2);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn decreasing_graph_is_caught() {
        let bad = FilledGraph::new_unchecked(vec![0.0], vec![(1.0, -1.0)]).unwrap();
        let r = verify_monotone(&MonotoneOperator::FilledGraph(bad), 10_000, 3);
        assert!(!r.passed);
        let w = r.witness.expect("negative witness");
        assert!(w.inner < -MONOTONE_TOL);
        let recomputed = (w.y1[0] - w.y2[0]) * (w.x1[0] - w.x2[0]);
        assert!((recomputed - w.inner).abs() < 1e-12);
    }
}
