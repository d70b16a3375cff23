use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::domain::ConvexDomain;
use super::operator::MonotoneOperator;
use crate::{Error, Result};

/// Inflation applied to sampled suprema of `|A(x)|`.
pub const CEPA_MU_MARGIN: f64 = 1.1;
const CEPA_SAMPLES: usize = 4096;

/// `(a, γ, μ)` with `B(a, γ) ⊆ D(A)` and `|y| ≤ μ` for `y ∈ A(x)`, `x ∈ B(a, γ)`.
/// They give `∫⟨X − a, dK⟩ ≥ γ|K| − μ∫|X − a| dr − γμ(t − s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CepaConstants {
    pub a: Vec<f64>,
    pub gamma: f64,
    pub mu: f64,
}

/// `a` is the stored interior point, `γ` half its distance to the boundary
/// and `μ = 0`. The whole space has no boundary; there `γ = 1/2`.
pub fn cepa_constants(domain: &ConvexDomain) -> Result<CepaConstants> {
    let a = domain.interior_point().to_vec();
    let distance = domain.boundary_distance(&a);
    if distance < 1e-8 {
        return Err(Error::DegenerateDomain { distance });
    }
    let gamma = if distance.is_finite() { 0.5 * distance } else { 0.5 };
    Ok(CepaConstants { a, gamma, mu: 0.0 })
}

/// As [`cepa_constants`] for indicator operators; for graphs and sums `μ` is
/// the sampled supremum of `|A|` over `B(a, γ)` times [`CEPA_MU_MARGIN`].
pub fn cepa_constants_for(op: &MonotoneOperator, rng_seed: u64) -> Result<CepaConstants> {
    let (a, gamma) = match op.domain() {
        Some(d) => {
            let c = cepa_constants(d)?;
            (c.a, c.gamma)
        }
        None => (op.interior_point(), 0.5),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mu = CEPA_MU_MARGIN * op.sampled_sup_norm(&a, gamma, CEPA_SAMPLES, &mut rng);
    Ok(CepaConstants { a, gamma, mu })
}
