mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kolmo::control::{endpoint, integrate_admissible, optimal_cost, reach_min_energy, ControlGrid, CostConvention};
use kolmo::group::{compose, distance, inverse, norm_additive, norm_implicit};
use kolmo::harnack::{audit_chain, build_chain, HarnackParams};
use kolmo::kernel::{gamma, propagator};
use kolmo::operator::examples::{chain3, k2, kinetic4, strata_211};
use kolmo::sde::{sample_exact, LinearSde};
use kolmo::structure::check_all;
use kolmo::{validate_operator, AxisBox, BoxDomain, GroupPoint, OperatorSpec};

use common::{random_block_spec, random_broken_raw};

fn spec_from(seed: u64) -> OperatorSpec {
    random_block_spec(&mut ChaCha8Rng::seed_from_u64(seed), 5)
}

fn point(spec: &OperatorSpec, coords: &[f64], t: f64) -> GroupPoint {
    GroupPoint::new(DVector::from_iterator(spec.dim(), coords.iter().cycle().take(spec.dim()).copied()), t)
}

fn close(a: &GroupPoint, b: &GroupPoint, tol: f64) -> bool {
    (&a.x - &b.x).amax() <= tol && (a.t - b.t).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_operators_validate_and_are_hypoelliptic(seed in any::<u64>()) {
        let spec = spec_from(seed);
        let rep = check_all(&spec.to_raw());
        prop_assert!(rep.hypoelliptic(), "{rep:?}");
        prop_assert!(validate_operator(&spec.to_raw()).is_ok());
    }

    #[test]
    fn broken_operators_fail_every_condition(seed in any::<u64>()) {
        let rep = check_all(&random_broken_raw(&mut ChaCha8Rng::seed_from_u64(seed)));
        prop_assert!(!rep.c1 && !rep.c2 && !rep.c3 && !rep.c4, "{rep:?}");
    }

    #[test]
    fn group_law_is_associative_with_inverses(
        seed in any::<u64>(),
        a in prop::collection::vec(-2.0..2.0f64, 3),
        b in prop::collection::vec(-2.0..2.0f64, 3),
        c in prop::collection::vec(-2.0..2.0f64, 3),
        ts in prop::collection::vec(-1.5..1.5f64, 3),
    ) {
        let spec = spec_from(seed);
        let (x, y, z) = (point(&spec, &a, ts[0]), point(&spec, &b, ts[1]), point(&spec, &c, ts[2]));
        let left = compose(&compose(&x, &y, &spec), &z, &spec);
        let right = compose(&x, &compose(&y, &z, &spec), &spec);
        prop_assert!(close(&left, &right, 1e-8 * (1.0 + left.x.amax())));
        let id = compose(&x, &inverse(&x, &spec), &spec);
        prop_assert!(close(&id, &GroupPoint::origin(spec.dim()), 1e-9 * (1.0 + x.x.amax())));
    }

    #[test]
    fn dilations_scale_the_norms(
        coords in prop::collection::vec(-3.0..3.0f64, 4),
        t in -2.0..2.0f64,
        r in 0.1..10.0f64,
    ) {
        for spec in [k2(), chain3(), kinetic4(), strata_211()] {
            let group = spec.dilations();
            let z = point(&spec, &coords, t);
            let dz = group.dilate(&z, r).unwrap();
            let add = norm_additive(&z, &group);
            prop_assert!((norm_additive(&dz, &group) - r * add).abs() <= 1e-10 * r * add.max(1.0));
            if let Ok(imp) = norm_implicit(&z, &group) {
                prop_assert!((norm_implicit(&dz, &group).unwrap() / (r * imp) - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn distance_is_left_invariant(
        a in prop::collection::vec(-1.0..1.0f64, 4),
        b in prop::collection::vec(-1.0..1.0f64, 4),
        c in prop::collection::vec(-1.0..1.0f64, 4),
        ts in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        for spec in [k2(), kinetic4()] {
            let group = spec.dilations();
            let (z, w, g) = (point(&spec, &a, ts[0]), point(&spec, &b, ts[1]), point(&spec, &c, ts[2]));
            let d = distance(&z, &w, &spec, &group);
            let shifted = distance(&compose(&g, &z, &spec), &compose(&g, &w, &spec), &spec, &group);
            prop_assert!((d - shifted).abs() <= 1e-9 * d.max(1.0));
        }
    }

    #[test]
    fn kernel_is_translation_invariant(
        seed in any::<u64>(),
        a in prop::collection::vec(-1.0..1.0f64, 3),
        b in prop::collection::vec(-1.0..1.0f64, 3),
        s in 0.2..2.0f64,
        tau in -1.0..1.0f64,
    ) {
        let spec = spec_from(seed);
        let zeta = point(&spec, &b, tau);
        let offset = spec.dilations().spatial(&point(&spec, &a, 0.0).x, s.sqrt());
        let z = GroupPoint::new(propagator(&spec, s) * &zeta.x + offset, tau + s);
        let direct = gamma(&spec, &z, &zeta).unwrap();
        let moved = gamma(&spec, &compose(&inverse(&zeta, &spec), &z, &spec), &GroupPoint::origin(spec.dim())).unwrap();
        prop_assert!(direct.log_value.is_finite());
        prop_assert!((direct.log_value - moved.log_value).abs() <= 1e-8 * direct.log_value.abs().max(1.0));
        let before = GroupPoint::new(z.x.clone(), tau - s);
        prop_assert_eq!(gamma(&spec, &before, &zeta).unwrap().value, 0.0);
    }

    #[test]
    fn min_energy_control_hits_the_target(
        seed in any::<u64>(),
        a in prop::collection::vec(-1.0..1.0f64, 3),
        b in prop::collection::vec(-1.0..1.0f64, 3),
        tau in 0.3..2.0f64,
    ) {
        let spec = spec_from(seed);
        let (x0, x1) = (point(&spec, &a, 0.0).x, point(&spec, &b, 0.0).x);
        let grid = reach_min_energy(&spec, &x0, 0.0, &x1, tau, 4096).unwrap();
        let hit = endpoint(&(-spec.b()), spec.sigma(), &x0, &grid).unwrap();
        prop_assert!((&hit - &x1).amax() <= 1e-8 * (1.0 + x1.amax()));
        let cost = optimal_cost(&spec, &x0, &x1, tau, CostConvention::Controllability).unwrap();
        prop_assert!(grid.energy >= cost * (1.0 - 1e-9));
        let drift = propagator(&spec, tau) * &x0;
        prop_assert!(optimal_cost(&spec, &x0, &drift, tau, CostConvention::Controllability).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn exact_sampling_is_deterministic(seed in any::<u64>(), sample_seed in any::<u64>()) {
        let spec = spec_from(seed);
        let sde = LinearSde::from(&spec);
        let x0 = DVector::zeros(spec.dim());
        let a = sample_exact(&sde, &x0, 0.7, 64, sample_seed).unwrap();
        let b = sample_exact(&sde, &x0, 0.7, 64, sample_seed).unwrap();
        prop_assert_eq!(a.points, b.points);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn harnack_chains_pass_their_audit(
        which in 0usize..4,
        levels in prop::collection::vec(-0.8..0.8f64, 8),
        start in prop::collection::vec(-0.5..0.5f64, 5),
        duration in 0.2..1.0f64,
        margin in 0.4..1.5f64,
    ) {
        let spec = [k2(), chain3(), kinetic4(), strata_211()][which].clone();
        let n = spec.dim();
        let m = spec.control_matrix().ncols();
        let steps = 32;
        let omega = nalgebra::DMatrix::from_fn(steps, m, |s, k| levels[(s / 8 * m + k) % levels.len()]);
        let z0 = GroupPoint::new(DVector::from_column_slice(&start[..n]), start[4]);
        let curve = integrate_admissible(&spec, &z0, &ControlGrid::new(duration, omega).unwrap()).unwrap();
        let mut lo = vec![f64::INFINITY; n + 1];
        let mut hi = vec![f64::NEG_INFINITY; n + 1];
        for p in &curve.points {
            for (j, c) in p.coords().into_iter().enumerate() {
                lo[j] = lo[j].min(c - margin);
                hi[j] = hi[j].max(c + margin);
            }
        }
        let domain = BoxDomain::single(AxisBox::new(lo, hi).unwrap());
        let params = HarnackParams::default();
        let chain = build_chain(&spec, &curve, &domain, &params).unwrap();
        let audit = audit_chain(&spec, &chain, &domain, &params).unwrap();
        prop_assert!(audit.all_pass(), "{audit:?}");
        prop_assert_eq!(chain.k, (duration / chain.delta0).ceil() as usize);
        prop_assert!((chain.log_bound - chain.k as f64 * params.c.ln()).abs() <= 1e-12 * chain.log_bound.max(1.0));
        let again = build_chain(&spec, &curve, &domain, &params).unwrap();
        prop_assert_eq!(chain, again);
    }
}
