use std::path::PathBuf;

use fleetdispatch::scenario::{
    counterexample_fixture, generate_fleet, load_scenario, sample_demand, save_scenario, DemandParams, FleetParams,
    Meta, ScenarioSpec,
};
use fleetdispatch::Error;
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn counterexample_golden_file() {
    let fx = counterexample_fixture();
    let spec = ScenarioSpec::from_parts(&fx.fleet, &fx.d1, Meta { seed: None, note: "two devices, first demand profile".into() });
    let golden = std::fs::read_to_string(data("counterexample.json")).unwrap();
    assert_eq!(spec.to_json() + "\n", golden);
    let back = load_scenario(data("counterexample.json")).unwrap();
    assert_eq!(back.fleet().unwrap(), fx.fleet);
    assert_eq!(back.demand().unwrap(), fx.d1);
}

#[test]
fn generator_golden_file() {
    let fleet = generate_fleet(3, &FleetParams::default(), 42).unwrap();
    let d = sample_demand(&fleet, &DemandParams::default(), 42).unwrap();
    let spec = ScenarioSpec::from_parts(&fleet, &d, Meta { seed: Some(42), note: "generated, n = 3".into() });
    let golden = std::fs::read_to_string(data("generated_n3_seed42.json")).unwrap();
    assert_eq!(spec.to_json() + "\n", golden);
}

#[test]
fn save_then_load() {
    let fx = counterexample_fixture();
    let spec = ScenarioSpec::from_parts(&fx.fleet, &fx.d2, Meta::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    save_scenario(&spec, &path).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), spec);
}

#[test]
fn generator_block_expands() {
    let text = r#"{"horizon_hours": 24.0, "generator": {"n": 4, "seed": 9},
        "demand": {"breakpoints": [0.0, 24.0], "values_kw": [0.5]}}"#;
    let spec = ScenarioSpec::from_json(text).unwrap();
    assert_eq!(spec.fleet().unwrap(), generate_fleet(4, &FleetParams::default(), 9).unwrap());
}

#[test]
fn schema_errors_name_the_field() {
    let text = r#"{"horizon_hours": 12.0, "devices": [{"id": "a", "rated_power_kw": "one",
        "initial_energy_kwh": 1.0, "availability": []}], "demand": {"breakpoints": [0.0, 12.0], "values_kw": [0.0]}}"#;
    match ScenarioSpec::from_json(text) {
        Err(Error::Schema { path, .. }) => assert_eq!(path, "devices[0].rated_power_kw"),
        other => panic!("{other:?}"),
    }
    let extra = r#"{"horizon_hours": 1.0, "colour": 3, "demand": {"breakpoints": [0.0, 1.0], "values_kw": [0.0]}}"#;
    assert!(matches!(ScenarioSpec::from_json(extra), Err(Error::Schema { .. })));
}

#[test]
fn devices_and_generator_are_exclusive() {
    let text = r#"{"horizon_hours": 24.0, "demand": {"breakpoints": [0.0, 24.0], "values_kw": [0.5]}}"#;
    assert!(ScenarioSpec::from_json(text).unwrap().fleet().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generation_is_repeatable_and_in_range(n in 1usize..40, seed in any::<u64>()) {
        let p = FleetParams::default();
        let a = generate_fleet(n, &p, seed).unwrap();
        prop_assert_eq!(&a, &generate_fleet(n, &p, seed).unwrap());
        for d in a.devices() {
            prop_assert!(d.initial_energy >= 0.0);
            for iv in d.availability.intervals() {
                prop_assert!(0.0 <= iv.start && iv.end <= p.horizon);
            }
        }
        // device j does not depend on how many follow it
        let b = generate_fleet(n + 3, &p, seed).unwrap();
        prop_assert_eq!(a.devices(), &b.devices()[..n]);
    }

    #[test]
    fn sampled_demand_fits_available_power(n in 1usize..30, seed in any::<u64>()) {
        let fleet = generate_fleet(n, &FleetParams::default(), seed).unwrap();
        let d = sample_demand(&fleet, &DemandParams::default(), seed).unwrap();
        for (a, b, v) in d.segments() {
            let mid = 0.5 * (a + b);
            let cap: f64 = fleet.devices().iter().filter(|x| x.availability.contains(mid)).map(|x| x.rated_power).sum();
            prop_assert!(v >= 0.0 && v <= cap + 1e-12);
        }
        prop_assert!(d.energy() <= 0.85 * fleet.initial_energies().iter().sum::<f64>() + 1e-9);
    }

    #[test]
    fn json_round_trip_is_exact(seed in any::<u64>(), n in 1usize..10) {
        let fleet = generate_fleet(n, &FleetParams::default(), seed).unwrap();
        let d = sample_demand(&fleet, &DemandParams::default(), seed).unwrap();
        let spec = ScenarioSpec::from_parts(&fleet, &d, Meta { seed: Some(seed), note: String::new() });
        let back = ScenarioSpec::from_json(&spec.to_json()).unwrap();
        prop_assert_eq!(back.fleet().unwrap(), fleet);
        prop_assert_eq!(back.demand().unwrap(), d);
    }
}
