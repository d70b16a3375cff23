use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{verify_monotone, MonotoneOperator, MonotonicityReport, MONOTONE_TOL};
use crate::linalg::{dist, dist_sq, dot};

/// Points of the domain each projected sample is tested against in the
/// variational inequality.
pub const VARIATIONAL_POOL: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Violations {
    pub checked: usize,
    /// Checks failing by more than [`MONOTONE_TOL`].
    pub count: usize,
    /// Largest excess over zero (`0` when every check holds exactly).
    pub worst: f64,
}

impl Violations {
    fn record(&mut self, excess: f64) {
        self.checked += 1;
        if excess > self.worst {
            self.worst = excess;
        }
        if excess > MONOTONE_TOL || excess.is_nan() {
            self.count += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPropertyReport {
    pub samples: usize,
    /// `|P(Px) − Px|`; indicator operators only.
    pub idempotence: Option<Violations>,
    /// `|Px − Py| − |x − y|`; indicator operators only.
    pub nonexpansive: Option<Violations>,
    /// `⟨x − Px, z − Px⟩` for `z` in the domain; indicator operators only.
    pub variational: Option<Violations>,
    /// `|Jx − Jy|² − ⟨Jx − Jy, x − y⟩` at random `λ`.
    pub firm_nonexpansive: Violations,
    pub monotone: MonotonicityReport,
    pub resolvent_errors: usize,
    pub passed: bool,
}

/// Runs the resolvent and projection identities on `samples` random points
/// spread around the domain.
pub fn verify_operator_properties(op: &MonotoneOperator, samples: usize, rng_seed: u64) -> OperatorPropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let center = op.interior_point();
    let scale = 2.0 * op.sampling_scale();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        center.iter().map(|c| c + scale * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let domain = op.domain().filter(|_| matches!(op, MonotoneOperator::Indicator(_)));
    let mut errors = 0;

    let (mut idem, mut nonexp, mut vi) = (Violations::default(), Violations::default(), Violations::default());
    if let Some(d) = domain {
        let pool: Vec<Vec<f64>> = (0..VARIATIONAL_POOL).filter_map(|_| d.project(&draw(&mut rng)).ok()).collect();
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for _ in 0..samples {
            let x = draw(&mut rng);
            let Ok(px) = d.project(&x) else {
                errors += 1;
                continue;
            };
            match d.project(&px) {
                Ok(ppx) => idem.record(dist(&ppx, &px)),
                Err(_) => errors += 1,
            }
            if let Some((y, py)) = &prev {
                nonexp.record(dist(&px, py) - dist(&x, y));
            }
            let r: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
            let mut worst = f64::NEG_INFINITY;
            for z in &pool {
                let s: f64 = r.iter().zip(z.iter().zip(&px)).map(|(ri, (zi, pi))| ri * (zi - pi)).sum();
                worst = worst.max(s);
            }
            vi.record(worst.max(0.0));
            prev = Some((x, px));
        }
    }

    let mut firm = Violations::default();
    for _ in 0..samples {
        let lambda = libm::exp(rng.random_range(libm::log(0.01)..libm::log(10.0)));
        let (x, y) = (draw(&mut rng), draw(&mut rng));
        match (op.resolvent(lambda, &x), op.resolvent(lambda, &y)) {
            (Ok(jx), Ok(jy)) => {
                let dj: Vec<f64> = jx.iter().zip(&jy).map(|(a, b)| a - b).collect();
                let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                firm.record(dist_sq(&jx, &jy) - dot(&dj, &dxy));
            }
            _ => errors += 1,
        }
    }

    let monotone = verify_monotone(op, samples, rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let ok = |v: &Violations| v.count == 0;
    let passed = errors == 0
        && ok(&firm)
        && monotone.passed
        && (domain.is_none() || (ok(&idem) && ok(&nonexp) && ok(&vi)));
    OperatorPropertyReport {
        samples,
        idempotence: domain.map(|_| idem),
        nonexpansive: domain.map(|_| nonexp),
        variational: domain.map(|_| vi),
        firm_nonexpansive: firm,
        monotone,
        resolvent_errors: errors,
        passed,
    }
}
