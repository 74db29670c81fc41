use binfleet_core::domain::{BinGeometry, FillFraction, SensorSpec, Timestamp};
use binfleet_core::rng::SeededRng;
use binfleet_core::sensing::{distance_to_fill, measure, vote, vote_fills, FaultModel, SensorReadingPair, VoteKind};

fn spec() -> SensorSpec {
    SensorSpec::default()
}

#[test]
fn fill_is_monotone_in_distance() {
    let mut rng = SeededRng::new(100);
    let mut violations = 0;
    for _ in 0..10_000 {
        let depth = 3.0 + rng.unit() * 397.0;
        let geom = BinGeometry { depth_cm: depth, capacity_l: 240.0 };
        let d1 = 2.0 + rng.unit() * 398.0;
        let d2 = 2.0 + rng.unit() * 398.0;
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let f_near = distance_to_fill(near, &geom, &spec()).unwrap().value();
        let f_far = distance_to_fill(far, &geom, &spec()).unwrap().value();
        if f_far > f_near {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn vote_rules_hold_on_random_pairs() {
    let mut rng = SeededRng::new(101);
    let geom = BinGeometry { depth_cm: 100.0, capacity_l: 240.0 };
    let mut violations = Vec::new();
    for i in 0..10_000 {
        let mut r = || if rng.unit() < 0.1 { None } else { Some(2.0 + rng.unit() * 120.0) };
        let pair = SensorReadingPair { sensor_a_cm: r(), sensor_b_cm: r(), measured_at: Timestamp(0) };
        let tol = 0.01 + rng.unit() * 0.2;
        let v = vote(&pair, &geom, &spec(), tol);
        let w = vote(&pair.swapped(), &geom, &spec(), tol);
        if (v.kind, v.fill) != (w.kind, w.fill) {
            violations.push((i, "asymmetric"));
        }
        match (v.fill_a, v.fill_b) {
            (Some(a), Some(b)) => {
                let (lo, hi) = (a.value().min(b.value()), a.value().max(b.value()));
                let fill = v.fill.unwrap().value();
                match v.kind {
                    VoteKind::Agreed if (lo..=hi).contains(&fill) && hi - lo <= tol => {}
                    VoteKind::Disagreed if fill == hi && hi - lo > tol => {}
                    _ => violations.push((i, "two healthy")),
                }
            }
            (Some(x), None) | (None, Some(x)) => {
                if v.kind != VoteKind::Single || v.fill != Some(x) {
                    violations.push((i, "single"));
                }
            }
            (None, None) => {
                if v.kind != VoteKind::DualFault || v.fill.is_some() {
                    violations.push((i, "dual fault"));
                }
            }
        }
    }
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn documented_vote_examples() {
    let f = |v: f64| Some(FillFraction::new(v).unwrap());
    let v = vote_fills(f(0.70), f(0.70), 0.05);
    assert_eq!((v.kind, v.fill), (VoteKind::Agreed, f(0.70)));
    let v = vote_fills(f(0.70), f(0.68), 0.05);
    assert_eq!(v.kind, VoteKind::Agreed);
    assert!((v.fill.unwrap().value() - 0.69).abs() < 1e-12);
    let v = vote_fills(f(0.90), f(0.20), 0.05);
    assert_eq!((v.kind, v.fill), (VoteKind::Disagreed, f(0.90)));
    let v = vote_fills(None, f(0.40), 0.05);
    assert_eq!((v.kind, v.fill), (VoteKind::Single, f(0.40)));
}

#[test]
fn noiseless_sensors_recover_true_fill() {
    let geom = BinGeometry { depth_cm: 100.0, capacity_l: 240.0 };
    let mut rng = SeededRng::new(3);
    for k in 0..=98 {
        let d = 2.0 + k as f64;
        let pair = measure(d, &FaultModel::default(), &spec(), &mut rng, Timestamp(0));
        assert_eq!((pair.sensor_a_cm, pair.sensor_b_cm), (Some(d), Some(d)));
        let v = vote(&pair, &geom, &spec(), 0.05);
        let truth = (100.0 - d) / 98.0;
        assert!((v.fill.unwrap().value() - truth).abs() < 1e-9);
    }
}
