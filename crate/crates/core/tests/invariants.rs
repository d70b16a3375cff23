use msde_core::ldp::{estimate_event, ldp_slope, test_ld1, EventKind, EventSpec, FitModel, Ld1Options, McSetup};
use msde_core::monotone_ops::{cepa_constants, HalfSpace};
use msde_core::sim::simulate;
use msde_core::skeleton::{minimize_endpoint_rate, solve_skeleton};
use msde_core::{BrownianPath, Control, ConvexDomain, Model, MonotoneOperator, RateOptions, Sequential, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn triangle() -> ConvexDomain {
    ConvexDomain::polytope(
        vec![
            HalfSpace::new(vec![-1.0, 0.0], 0.0).unwrap(),
            HalfSpace::new(vec![0.0, -1.0], 0.0).unwrap(),
            HalfSpace::new(vec![1.0, 1.0], 1.0).unwrap(),
        ],
        vec![0.25, 0.25],
    )
    .unwrap()
}

fn half_line() -> MonotoneOperator {
    MonotoneOperator::indicator(ConvexDomain::half_line())
}

#[test]
fn cepa_constants_bound_boundary_normals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let domains = [
        ConvexDomain::half_line(),
        ConvexDomain::unit_ball(2).unwrap(),
        ConvexDomain::axis_box(vec![-1.0, 0.0], vec![2.0, 1.0]).unwrap(),
        ConvexDomain::half_space(vec![1.0, -2.0], 0.3).unwrap(),
        triangle(),
    ];
    for d in &domains {
        let c = cepa_constants(d).unwrap();
        assert!(c.gamma > 0.0);
        for _ in 0..2000 {
            let (x, n) = d.sample_boundary_normal(&mut rng).unwrap();
            let inner: f64 = x.iter().zip(&c.a).zip(&n).map(|((xi, ai), ni)| (xi - ai) * ni).sum();
            assert!(inner >= c.gamma - 1e-10, "{}: {inner} < {}", d.kind_name(), c.gamma);
        }
    }
}

/// The rate of the endpoint any control reaches never exceeds that control's
/// action.
#[test]
fn rate_is_below_the_action_of_any_control() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cases = [
        (Model::brownian(1).unwrap(), MonotoneOperator::zero(1).unwrap(), vec![0.0]),
        (Model::ornstein_uhlenbeck(1, 1.0).unwrap(), half_line(), vec![0.5]),
        (Model::ornstein_uhlenbeck(2, 1.0).unwrap(), MonotoneOperator::zero(2).unwrap(), vec![0.2, -0.1]),
    ];
    let opts = RateOptions::default();
    let grid = TimeGrid::new(1.0, opts.steps).unwrap();
    for (model, op, x0) in &cases {
        for _ in 0..2 {
            let values = (0..opts.intervals * model.noise_dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let h = Control::new(1.0, opts.intervals, model.noise_dim(), values).unwrap();
            let end = solve_skeleton(model, op, x0, &h, grid).unwrap().endpoint().to_vec();
            let r = minimize_endpoint_rate(model, op, x0, &end, 1.0, &opts).unwrap();
            assert!(r.value <= 0.5 * h.action_norm() + 1e-3, "{} > {}", r.value, 0.5 * h.action_norm());
        }
    }
}

/// Strongly convergent controls give uniformly convergent skeletons: halving
/// the control distance at least halves the sup distance, exactly so for the
/// linear models.
#[test]
fn skeleton_is_continuous_in_the_control() {
    let (m, grid) = (64, TimeGrid::new(1.0, 1024).unwrap());
    let base: Vec<f64> = (0..m).map(|j| (6.0 * j as f64 / m as f64).sin()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bump: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let h = Control::new(1.0, m, 1, base.clone()).unwrap();
    let cases = [
        ("brownian", Model::brownian(1).unwrap(), MonotoneOperator::zero(1).unwrap(), 0.0, true),
        ("ou", Model::ornstein_uhlenbeck(1, 1.0).unwrap(), MonotoneOperator::zero(1).unwrap(), 0.0, true),
        ("double_well", Model::double_well().unwrap(), MonotoneOperator::zero(1).unwrap(), 0.2, false),
        ("reflected_ou", Model::ornstein_uhlenbeck(1, 1.0).unwrap(), half_line(), 0.1, false),
    ];
    for (name, model, op, x0, linear) in &cases {
        let reference = solve_skeleton(model, op, &[*x0], &h, grid).unwrap();
        let mut dists = Vec::new();
        for delta in [0.4, 0.2, 0.1, 0.05, 0.025] {
            let v = base.iter().zip(&bump).map(|(b, p)| b + delta * p).collect();
            let hn = Control::new(1.0, m, 1, v).unwrap();
            assert!((hn.distance(&h).unwrap() - delta * Control::new(1.0, m, 1, bump.clone()).unwrap().action_norm().sqrt()).abs() < 1e-12);
            let path = solve_skeleton(model, op, &[*x0], &hn, grid).unwrap();
            dists.push(path.sup_distance_sq(&reference).sqrt());
        }
        for w in dists.windows(2) {
            let ratio = w[1] / w[0];
            if *linear {
                assert!((ratio - 0.5).abs() < 1e-9, "{name}: {dists:?}");
            } else {
                assert!(ratio <= 0.5 + 1e-9, "{name}: {dists:?}");
            }
        }
    }
}

#[test]
fn rates_are_stable_under_grid_refinement() {
    let coarse = RateOptions::default();
    let fine = RateOptions { intervals: 2 * coarse.intervals, steps: 2 * coarse.steps, ..coarse.clone() };
    let cases = [
        (Model::brownian(1).unwrap(), MonotoneOperator::zero(1).unwrap(), 0.0, 1.0),
        (Model::ornstein_uhlenbeck(1, 1.0).unwrap(), MonotoneOperator::zero(1).unwrap(), 0.0, 1.0),
        (Model::brownian(1).unwrap(), half_line(), 0.0, 1.0),
        (Model::ornstein_uhlenbeck(1, 1.0).unwrap(), half_line(), 0.5, 0.5 * (-1.0_f64).exp()),
    ];
    for (model, op, x0, y) in &cases {
        let a = minimize_endpoint_rate(model, op, &[*x0], &[*y], 1.0, &coarse).unwrap();
        let b = minimize_endpoint_rate(model, op, &[*x0], &[*y], 1.0, &fine).unwrap();
        if a.value < 1e-6 {
            assert!(b.value < 1e-6, "{} vs {}", a.value, b.value);
        } else {
            assert!((a.value - b.value).abs() / a.value < 0.05, "{} vs {}", a.value, b.value);
        }
    }
}

fn beyond(level: f64, open: bool) -> EventSpec {
    EventSpec::new(format!("beyond_{level}"), EventKind::EndpointBeyond { direction: vec![1.0], level }, open)
}

fn optimal_tilt(level: f64) -> Control {
    let model = Model::brownian(1).unwrap();
    minimize_endpoint_rate(&model, &MonotoneOperator::zero(1).unwrap(), &[0.0], &[level], 1.0, &RateOptions::default())
        .unwrap()
        .control
}

#[test]
fn tilted_and_plain_estimators_agree() {
    let model = Model::brownian(1).unwrap();
    let op = MonotoneOperator::zero(1).unwrap();
    let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid: TimeGrid::new(1.0, 256).unwrap(), n_paths: 10_000, seed: 21 };
    let event = beyond(1.0, false);
    let plain = &estimate_event(&setup, &[1.0], &event, None, &Sequential).unwrap()[0];
    let tilted = &estimate_event(&setup, &[1.0], &event, Some(&optimal_tilt(1.0)), &Sequential).unwrap()[0];
    assert!(plain.ess >= 100.0 && tilted.ess >= 100.0);
    let combined = (plain.stderr.powi(2) + tilted.stderr.powi(2)).sqrt();
    assert!((plain.p_hat - tilted.p_hat).abs() < 3.0 * combined, "{plain:?} {tilted:?}");
}

#[test]
fn open_and_closed_events_share_the_rate() {
    let model = Model::brownian(1).unwrap();
    let op = MonotoneOperator::zero(1).unwrap();
    let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid: TimeGrid::new(1.0, 256).unwrap(), n_paths: 20_000, seed: 5 };
    let eps = [0.4, 0.2, 0.1, 0.05];
    let h = optimal_tilt(1.0);
    let closed = ldp_slope(&estimate_event(&setup, &eps, &beyond(1.0, false), Some(&h), &Sequential).unwrap(), FitModel::Affine).unwrap();
    let open = ldp_slope(&estimate_event(&setup, &eps, &beyond(1.0, true), Some(&h), &Sequential).unwrap(), FitModel::Affine).unwrap();
    assert!((closed.intercept - open.intercept).abs() <= closed.rms_residual.max(open.rms_residual) + 1e-12);
}

#[test]
fn nested_events_order_their_rates() {
    let model = Model::brownian(1).unwrap();
    let op = MonotoneOperator::zero(1).unwrap();
    let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid: TimeGrid::new(1.0, 256).unwrap(), n_paths: 20_000, seed: 6 };
    let eps = [0.4, 0.2, 0.1];
    let inner = estimate_event(&setup, &eps, &beyond(1.3, false), Some(&optimal_tilt(1.3)), &Sequential).unwrap();
    let outer = estimate_event(&setup, &eps, &beyond(1.0, false), Some(&optimal_tilt(1.0)), &Sequential).unwrap();
    for (a, b) in inner.iter().zip(&outer) {
        let tol = a.epsilon * ((a.stderr / a.p_hat).powi(2) + (b.stderr / b.p_hat).powi(2)).sqrt();
        assert!(a.neg_eps_log_p >= b.neg_eps_log_p - 2.0 * tol, "{a:?} {b:?}");
    }
}

#[test]
fn ld1_vanishes_without_noise() {
    let model = Model::ornstein_uhlenbeck(1, 1.0).unwrap();
    let op = half_line();
    let setup = McSetup { model: &model, op: &op, x0: &[0.0], grid: TimeGrid::new(1.0, 256).unwrap(), n_paths: 100, seed: 2 };
    let h = Control::constant(1.0, 16, &[1.0]).unwrap();
    let r = test_ld1(&setup, &h, &[0.0], &Ld1Options::default(), &Sequential).unwrap();
    assert_eq!(r.mean_sup_sq[0], 0.0);
}

/// Halving dt moves E[sup |X|] of reflected Brownian motion by O(√dt).
#[test]
fn running_sup_converges_at_root_dt() {
    let model = Model::brownian(1).unwrap();
    let op = half_line();
    for steps in [128usize, 512] {
        let fine = TimeGrid::new(1.0, 2 * steps).unwrap();
        let coarse = TimeGrid::new(1.0, steps).unwrap();
        let (mut sup_f, mut sup_c) = (0.0, 0.0);
        for i in 0..500 {
            let w = BrownianPath::generate(fine, 1, 17, i);
            let summed = w.increments().chunks(2).map(|c| c[0] + c[1]).collect();
            let wc = BrownianPath::from_increments(coarse, 1, summed).unwrap();
            sup_f += simulate(&model, &op, &[0.0], 1.0, &w).unwrap().sup_norm_sq().sqrt();
            sup_c += simulate(&model, &op, &[0.0], 1.0, &wc).unwrap().sup_norm_sq().sqrt();
        }
        let gap = (sup_f - sup_c).abs() / 500.0;
        assert!(gap <= coarse.dt().sqrt(), "N = {steps}: {gap}");
    }
}
