//! Randomized invariants of the profile semilattice, the time-axis operators,
//! and the influence volumes, on grids small enough to run in bulk.

use std::sync::{Arc, OnceLock};

use proptest::collection::vec;
use proptest::prelude::*;

use wavecontrol::control::{op_i, op_i_adjoint, op_j, op_r, InnerProductWeights};
use wavecontrol::forward::{SpaceTimeField, TimeGrid};
use wavecontrol::geometry::{
    build_grids, natural_volume, travel_time_1d,BoundaryProfile, DomainSpec, InteriorField,
    Shape, SpeedField,
};
use wavecontrol::influence::{domain_of_influence, r_gamma_tau, BoundarySubset};
use wavecontrol::minimize::projector_p;

fn interval_speed() -> &'static SpeedField {
    static SPEED: OnceLock<SpeedField> = OnceLock::new();
    SPEED.get_or_init(|| {
        let grids = build_grids(&DomainSpec::new(Shape::Interval { length: 1.0 }, 81, 2))
            .expect("interval grids");
        SpeedField::from_fn(grids, |p| 1.0 + 0.3 * (std::f64::consts::PI * p[0]).sin())
            .expect("interval speed")
    })
}

fn rectangle_speed() -> &'static SpeedField {
    static SPEED: OnceLock<SpeedField> = OnceLock::new();
    SPEED.get_or_init(|| {
        let grids = build_grids(&DomainSpec::new(
            Shape::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            21,
            16,
        ))
        .expect("rectangle grids");
        SpeedField::constant(grids, 1.0).expect("rectangle speed")
    })
}

fn profile_pair(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (vec(0.0..1.5f64, len), vec(0.0..1.5f64, len))
}

fn any_profile_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..8).prop_flat_map(profile_pair)
}

fn any_profile_triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..8).prop_flat_map(|n| (vec(0.0..1.5f64, n), vec(0.0..1.5f64, n), vec(0.0..1.5f64, n)))
}

fn trace_pair(time: TimeGrid, seed_a: u64, seed_b: u64) -> (SpaceTimeField, SpaceTimeField) {
    let wave = |seed: u64| {
        SpaceTimeField::from_fn(time, 2, move |t, j| {
            let phase = (seed % 7) as f64 + j as f64;
            ((2.0 + phase) * t + 0.1 * seed as f64).sin()
        })
    };
    (wave(seed_a), wave(seed_b))
}

fn combine(a: f64, f: &SpaceTimeField, b: f64, g: &SpaceTimeField) -> SpaceTimeField {
    let values = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(x, y)| a * x + b * y)
        .collect();
    SpaceTimeField::from_values(f.time(), f.n_boundary(), values).expect("combination")
}

fn sup_gap(f: &SpaceTimeField, g: &SpaceTimeField) -> f64 {
    f.values()
        .iter()
        .zip(g.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn meet_is_commutative((a, b) in any_profile_pair()) {
        let pa = BoundaryProfile::from_values(a).unwrap();
        let pb = BoundaryProfile::from_values(b).unwrap();
        let ab = pa.min_with(&pb).unwrap();
        let ba = pb.min_with(&pa).unwrap();
        prop_assert_eq!(ab.values(), ba.values());
    }

    #[test]
    fn meet_is_associative_and_idempotent((a, b, c) in any_profile_triple()) {
        let pa = BoundaryProfile::from_values(a).unwrap();
        let pb = BoundaryProfile::from_values(b).unwrap();
        let pc = BoundaryProfile::from_values(c).unwrap();
        let left = pa.min_with(&pb).unwrap().min_with(&pc).unwrap();
        let right = pa.min_with(&pb.min_with(&pc).unwrap()).unwrap();
        prop_assert_eq!(left.values(), right.values());
        let self_meet = pa.min_with(&pa).unwrap();
        prop_assert_eq!(self_meet.values(), pa.values());
    }

    #[test]
    fn meet_is_the_greatest_lower_bound((a, b, c) in any_profile_triple()) {
        let pa = BoundaryProfile::from_values(a).unwrap();
        let pb = BoundaryProfile::from_values(b).unwrap();
        let meet = pa.min_with(&pb).unwrap();
        prop_assert!(meet.le(&pa));
        prop_assert!(meet.le(&pb));
        let lower = BoundaryProfile::from_values(c).unwrap().min_with(&meet).unwrap();
        prop_assert!(lower.le(&meet));
    }

    #[test]
    fn clamp_brackets_and_shift_preserves_order(
        (a, _) in any_profile_pair(),
        lo in 0.0..0.5f64,
        span in 0.0..1.0f64,
        delta in 0.0..0.5f64,
    ) {
        let p = BoundaryProfile::from_values(a).unwrap();
        let hi = lo + span;
        let clamped = p.clamp(lo, hi);
        prop_assert!(BoundaryProfile::constant(p.len(), lo).le(&clamped));
        prop_assert!(clamped.le(&BoundaryProfile::constant(p.len(), hi)));
        prop_assert!(p.le(&p.shift(delta)));
        prop_assert!(p.shift(-delta).le(&p));
    }

    #[test]
    fn sup_distance_is_a_metric((a, b, c) in any_profile_triple()) {
        let pa = BoundaryProfile::from_values(a).unwrap();
        let pb = BoundaryProfile::from_values(b).unwrap();
        let pc = BoundaryProfile::from_values(c).unwrap();
        let dab = pa.sup_distance(&pb).unwrap();
        prop_assert_eq!(dab, pb.sup_distance(&pa).unwrap());
        prop_assert_eq!(pa.sup_distance(&pa).unwrap(), 0.0);
        let dac = pa.sup_distance(&pc).unwrap();
        let dcb = pc.sup_distance(&pb).unwrap();
        prop_assert!(dab <= dac + dcb + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn time_reversal_is_an_involution(seed in 0u64..1000, steps in 2usize..40) {
        let time = TimeGrid::from_horizon(1.0, 2 * steps).unwrap();
        let (f, _) = trace_pair(time, seed, seed);
        let twice = op_r(&op_r(&f));
        prop_assert_eq!(twice.values(), f.values());
    }

    #[test]
    fn time_reversal_preserves_the_weighted_norm(seed in 0u64..1000) {
        let speed = interval_speed();
        let time = TimeGrid::from_horizon(2.0, 64).unwrap();
        let weights = InnerProductWeights::new(speed, time);
        let (f, _) = trace_pair(time, seed, seed);
        let direct = weights.norm(&f).unwrap();
        let reversed = weights.norm(&op_r(&f)).unwrap();
        prop_assert!((direct - reversed).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn averaging_and_integration_are_linear(
        seed_a in 0u64..1000,
        seed_b in 0u64..1000,
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
    ) {
        let time = TimeGrid::from_horizon(2.0, 48).unwrap();
        let (f, g) = trace_pair(time, seed_a, seed_b.wrapping_add(3));
        let mixed = combine(a, &f, b, &g);
        let scale = 1.0 + a.abs() + b.abs();
        for (op, name) in [(op_j as fn(&SpaceTimeField) -> SpaceTimeField, "J"), (op_i, "I")] {
            let through = op(&mixed);
            let recombined = combine(a, &op(&f), b, &op(&g));
            prop_assert!(
                sup_gap(&through, &recombined) <= 1e-12 * scale,
                "operator {} is not linear", name
            );
        }
    }

    #[test]
    fn integration_pairs_with_its_adjoint(seed_a in 0u64..1000, seed_b in 0u64..1000) {
        let speed = interval_speed();
        let time = TimeGrid::from_horizon(2.0, 64).unwrap();
        let weights = InnerProductWeights::new(speed, time);
        let (f, h) = trace_pair(time, seed_a, seed_b.wrapping_add(11));
        let lhs = weights.inner(&op_i(&f), &h).unwrap();
        let rhs = weights.inner(&f, &op_i_adjoint(&weights, &h).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
    }

    #[test]
    fn support_projector_is_an_idempotent_self_adjoint_cutoff(
        seed in 0u64..1000,
        tau_left in 0.1..1.0f64,
        tau_right in 0.1..1.0f64,
    ) {
        let speed = interval_speed();
        let time = TimeGrid::from_horizon(2.0, 64).unwrap();
        let weights = InnerProductWeights::new(speed, time);
        let gamma = BoundarySubset::whole(2).unwrap();
        let tau = BoundaryProfile::from_values(vec![tau_left, tau_right]).unwrap();
        let mask = projector_p(&gamma, &tau, time).unwrap();
        let (f, h) = trace_pair(time, seed, seed.wrapping_add(29));
        let once = mask.apply(&f);
        let twice = mask.apply(&once);
        prop_assert_eq!(once.values(), twice.values());
        let lhs = weights.inner(&once, &h).unwrap();
        let rhs = weights.inner(&f, &mask.apply(&h)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        for k in 0..time.n_nodes() {
            for j in 0..2 {
                if mask.contains(k, j) {
                    prop_assert_eq!(once.at(k, j), f.at(k, j));
                } else {
                    prop_assert_eq!(once.at(k, j), 0.0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn natural_volume_of_a_constant_speed_interval_is_exact(c in 0.5..2.0f64) {
        let grids = build_grids(&DomainSpec::new(Shape::Interval { length: 1.0 }, 81, 2)).unwrap();
        let speed = SpeedField::constant(Arc::clone(&grids), c).unwrap();
        let whole = InteriorField::constant(Arc::clone(&grids), 1.0);
        let volume = natural_volume(&speed, &whole).unwrap();
        let expected = 1.0 / (c * c);
        prop_assert!((volume - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn natural_volume_is_monotone_in_the_indicator(bits in vec(0u8..2, 81), extra in vec(0u8..2, 81)) {
        let speed = interval_speed();
        let grids = speed.grids();
        let small: Vec<f64> = bits.iter().map(|&b| f64::from(b)).collect();
        let large: Vec<f64> = bits
            .iter()
            .zip(&extra)
            .map(|(&b, &e)| f64::from(b.max(e)))
            .collect();
        let va = natural_volume(speed, &InteriorField::from_values(Arc::clone(grids), small).unwrap()).unwrap();
        let vb = natural_volume(speed, &InteriorField::from_values(Arc::clone(grids), large).unwrap()).unwrap();
        prop_assert!(va <= vb + 1e-12 * (1.0 + vb));
    }

    #[test]
    fn travel_times_are_symmetric_and_pin_unit_speed_distances(
        x in 0.0..1.0f64,
        y in 0.0..1.0f64,
    ) {
        let speed = interval_speed();
        let forward = travel_time_1d(speed, x, y).unwrap();
        let backward = travel_time_1d(speed, y, x).unwrap();
        prop_assert!((forward - backward).abs() <= 1e-12);

        let grids = build_grids(&DomainSpec::new(Shape::Interval { length: 1.0 }, 81, 2)).unwrap();
        let unit = SpeedField::constant(grids, 1.0).unwrap();
        let straight = travel_time_1d(&unit, x, y).unwrap();
        prop_assert!((straight - (x - y).abs()).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn influence_volumes_grow_with_the_budget(
        tau_a in vec(0.0..1.2f64, 2),
        tau_b in vec(0.0..1.2f64, 2),
    ) {
        let speed = interval_speed();
        let gamma = BoundarySubset::whole(2).unwrap();
        let pa = BoundaryProfile::from_values(tau_a).unwrap();
        let pb = BoundaryProfile::from_values(tau_b).unwrap();
        let meet = pa.min_with(&pb).unwrap();
        let va = domain_of_influence(speed, &gamma, &pa).unwrap();
        let vb = domain_of_influence(speed, &gamma, &pb).unwrap();
        let vm = domain_of_influence(speed, &gamma, &meet).unwrap();
        let slack = 1e-12 * (1.0 + va.volume_closed.max(vb.volume_closed));
        prop_assert!(vm.volume_closed <= va.volume_closed.min(vb.volume_closed) + slack);
        prop_assert!(va.volume_open <= va.volume_closed + slack);
        prop_assert!(vm.volume_closed <= va.volume_closed + slack);
        prop_assert!(vm.volume_closed <= vb.volume_closed + slack);
    }

    #[test]
    fn rectangle_influence_respects_meets_and_openings(
        tau_a in vec(0.0..1.0f64, 8),
        tau_b in vec(0.0..1.0f64, 8),
    ) {
        let speed = rectangle_speed();
        let nb = speed.grids().boundary.len();
        let gamma = BoundarySubset::whole(nb).unwrap();
        let tile = |seeds: &[f64]| {
            let values = (0..nb).map(|j| seeds[j % seeds.len()]).collect();
            BoundaryProfile::from_values(values).unwrap()
        };
        let pa = tile(&tau_a);
        let pb = tile(&tau_b);
        let meet = pa.min_with(&pb).unwrap();
        let va = domain_of_influence(speed, &gamma, &pa).unwrap();
        let vb = domain_of_influence(speed, &gamma, &pb).unwrap();
        let vm = domain_of_influence(speed, &gamma, &meet).unwrap();
        let slack = 1e-12 * (1.0 + va.volume_closed.max(vb.volume_closed));
        prop_assert!(vm.volume_closed <= va.volume_closed.min(vb.volume_closed) + slack);
        prop_assert!(va.volume_open <= va.volume_closed + slack);
        prop_assert!(vb.volume_open <= vb.volume_closed + slack);
    }

    #[test]
    fn arrival_margins_shift_with_uniform_budget_changes(
        tau in vec(0.1..0.9f64, 2),
        delta in 0.0..0.3f64,
    ) {
        let speed = interval_speed();
        let gamma = BoundarySubset::whole(2).unwrap();
        let base = BoundaryProfile::from_values(tau).unwrap();
        let raised = base.shift(delta);
        let r_base = r_gamma_tau(speed, &gamma, &base).unwrap();
        let r_raised = r_gamma_tau(speed, &gamma, &raised).unwrap();
        for id in 0..r_base.len() {
            let gap = (r_base.value(id) - delta) - r_raised.value(id);
            prop_assert!(gap.abs() <= 1e-12);
        }
    }
}
