//! Exhaustive-enumeration checks for the dispatch dynamic program on
//! desk-scale instances.

use microgrid_core::battery::{BatterySpec, CycleCostParams};
use microgrid_core::dp::{enumerate_exact, receding_horizon_run, solve_horizon, DispatchScenario};
use microgrid_core::rng::Rng64;
use microgrid_core::series::{ForecastErrorSpec, TimeSeries, Unit};

fn random_scenario(seed: u64, horizon: usize, grid: usize, extra_len: usize) -> DispatchScenario {
    let mut rng = Rng64::new(seed);
    let len = horizon + extra_len;
    let rnd = |rng: &mut Rng64, lo: f64, hi: f64| lo + (hi - lo) * rng.next_f64();
    let renewable: Vec<f64> = (0..len).map(|_| rnd(&mut rng, 0.0, 5000.0)).collect();
    let load: Vec<f64> = (0..len).map(|_| rnd(&mut rng, 0.0, 5000.0)).collect();
    let price: Vec<f64> = (0..len).map(|_| rnd(&mut rng, -80.0, 300.0)).collect();
    // Power limits sized so multi-interval hops stay feasible; occasionally
    // asymmetric to exercise the charge/discharge caps separately.
    let hops = rnd(&mut rng, 1.2, 4.0);
    let delta_t = 0.25;
    let de = 10.0 / (grid - 1) as f64;
    let p_dis = hops * de / (delta_t * 0.9);
    let p_chg = if rng.next_f64() < 0.3 { p_dis * 0.6 } else { p_dis };
    let battery = BatterySpec::new(12.0, 0.0, 10.0, p_chg, p_dis, 0.1, delta_t, 1).unwrap();
    let r_c = match seed % 4 {
        0 => 0.0,
        1 => 200.0,
        2 => 5_000.0,
        _ => 80_000.0,
    };
    let cycle = CycleCostParams::new(2347.0, 1.1, r_c).unwrap();
    DispatchScenario::new(
        TimeSeries::new(Unit::Kw, 15, renewable).unwrap(),
        TimeSeries::new(Unit::Kw, 15, load).unwrap(),
        TimeSeries::new(Unit::CurrencyPerMwh, 15, price).unwrap(),
        battery,
        cycle,
        horizon,
        grid,
    )
    .unwrap()
}

#[test]
fn dp_equals_enumeration_across_many_instances() {
    let mut checked = 0;
    for seed in 0..60u64 {
        let (horizon, grid) = match seed % 5 {
            0 => (3, 11),
            1 => (4, 9),
            2 => (5, 7),
            3 => (6, 5),
            _ => (4, 11),
        };
        let s = random_scenario(seed, horizon, grid, 0);
        let mut rng = Rng64::new(seed.wrapping_mul(77).wrapping_add(5));
        let e0 = 10.0 * rng.next_f64();
        let (_, dp_obj, _) = solve_horizon(&s, e0, 0).unwrap();
        let (_, enum_obj) = enumerate_exact(&s, e0, 0).unwrap();
        assert!(
            (dp_obj - enum_obj).abs() <= 1e-9 * enum_obj.abs().max(1.0),
            "seed {seed} (horizon {horizon}, grid {grid}): dp {dp_obj} vs enumeration {enum_obj}"
        );
        checked += 1;
    }
    assert_eq!(checked, 60);
}

#[test]
fn dp_with_offset_start_equals_enumeration() {
    for seed in 100..110u64 {
        let s = random_scenario(seed, 4, 7, 3);
        let (_, dp_obj, _) = solve_horizon(&s, 6.0, 2).unwrap();
        let (_, enum_obj) = enumerate_exact(&s, 6.0, 2).unwrap();
        assert!(
            (dp_obj - enum_obj).abs() <= 1e-9 * enum_obj.abs().max(1.0),
            "seed {seed}: dp {dp_obj} vs enumeration {enum_obj}"
        );
    }
}

#[test]
fn planner_never_loses_to_idle_baseline() {
    for seed in 200..230u64 {
        let s = random_scenario(seed, 5, 9, 0);
        let report = receding_horizon_run(
            &s,
            5.0,
            5,
            &ForecastErrorSpec {
                sigma_fraction: 0.0,
                seed,
            },
        )
        .unwrap();
        assert!(
            report.overall_cost <= report.baseline_cost + 1e-6,
            "seed {seed}: {} vs baseline {}",
            report.overall_cost,
            report.baseline_cost
        );
    }
}
