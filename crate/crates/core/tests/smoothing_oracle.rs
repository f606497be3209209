//! Independent verification of both smoothing stages: the projected
//! gradient Stage-I solver against a primal active-set QP, and the Stage-II
//! ramp-coupled DP against exhaustive hop enumeration.

use microgrid_core::battery::BatterySpec;
use microgrid_core::rng::Rng64;
use microgrid_core::series::{TimeSeries, Unit};
use microgrid_core::smoothing::{
    enumerate_smooth_bess, fluctuation_objective, smooth_bess, smooth_setpoints,
    smooth_setpoints_reference, SmoothingParams,
};
use microgrid_core::tcl::TclParams;
use microgrid_core::Error;

fn tcl_class() -> TclParams {
    TclParams {
        alpha: 0.5,
        beta: 300.0,
        p_rated: 0.1,
        n_units: 320,
        band_low: 20.0,
        band_high: 25.0,
        switch_delay_substeps: 2,
    }
}

fn params() -> SmoothingParams {
    SmoothingParams {
        gamma_b: 0.048,
        rr_min: -20.0,
        rr_max: 20.0,
        band_low: 20.0,
        band_high: 25.0,
        qp_tolerance: 1e-9,
        qp_max_iters: 500_000,
        grid_points: 129,
    }
}

fn bess() -> BatterySpec {
    BatterySpec {
        e_max: 240.0,
        e_min: 72.0,
        e_cap_max: 168.0,
        p_charge_max: 30.0,
        p_discharge_max: 30.0,
        d_loss: 0.05,
        delta_t: 1.0 / 6.0,
        n_parallel: 1,
    }
}

#[test]
fn stage_one_matches_the_active_set_oracle_up_to_n_12() {
    let tcl = tcl_class();
    let sm = params();
    for seed in 0..25_u64 {
        let mut rng = Rng64::new(seed);
        let n = 3 + (rng.next_u64() % 10) as usize;
        // Mix smooth ramps with jitter so some instances pin the band.
        let slope = 4.0 * (rng.next_f64() - 0.5);
        let wind: Vec<f64> = (0..n)
            .map(|t| 70.0 + slope * t as f64 + 6.0 * rng.next_gaussian())
            .map(|w| w.max(0.0))
            .collect();
        let temps: Vec<f64> = (0..n).map(|_| 26.0 + 9.0 * rng.next_f64()).collect();
        let wind = TimeSeries::new(Unit::Mw, 10, wind).unwrap();
        let t_out = TimeSeries::new(Unit::Celsius, 10, temps).unwrap();
        let plan = smooth_setpoints(&wind, &t_out, &tcl, &sm, n).unwrap();
        let (ref_points, ref_obj) =
            smooth_setpoints_reference(&wind, &t_out, &tcl, &sm, n).unwrap();
        assert!(
            (plan.objective - ref_obj).abs() <= 1e-6 * ref_obj.abs().max(1.0),
            "seed {seed}: pgd {} vs active-set {ref_obj}",
            plan.objective
        );
        for &s in plan.setpoints.iter().chain(&ref_points) {
            assert!(s >= sm.band_low - 1e-9 && s <= sm.band_high + 1e-9);
        }
        let mid = vec![0.5 * (sm.band_low + sm.band_high); n];
        let baseline = fluctuation_objective(&wind, &t_out, &tcl, &sm, &mid).unwrap();
        assert!(plan.objective <= baseline + 1e-9, "seed {seed}");
    }
}

#[test]
fn stage_two_matches_enumeration_across_many_instances() {
    let mut sm = params();
    sm.grid_points = 25;
    sm.rr_min = -40.0;
    sm.rr_max = 40.0;
    let mut bess = bess();
    bess.p_charge_max = 80.0;
    bess.p_discharge_max = 80.0;
    let mut feasible = 0;
    for seed in 0..30_u64 {
        let mut rng = Rng64::new(seed);
        let n = 3 + (rng.next_u64() % 3) as usize;
        let pw: Vec<f64> = (0..n).map(|_| 50.0 + 60.0 * rng.next_f64()).collect();
        let pg_prev = 50.0 + 60.0 * rng.next_f64();
        let e0 = 72.0 + 96.0 * rng.next_f64();
        let pw = TimeSeries::new(Unit::Mw, 10, pw).unwrap();
        let dp = smooth_bess(&pw, &sm, &bess, e0, pg_prev);
        let brute = enumerate_smooth_bess(&pw, &sm, &bess, e0, pg_prev);
        match (dp, brute) {
            (Ok(dp), Ok(brute)) => {
                assert!(
                    (dp.cost - brute).abs() <= 1e-9 * brute.abs().max(1.0),
                    "seed {seed}: dp {} vs enumeration {brute}",
                    dp.cost
                );
                // Every reported dispatch obeys the ramp box and stays
                // non-negative; the store stays inside its window.
                let mut prev = pg_prev;
                for (t, &pg) in dp.p_g.iter().enumerate() {
                    let ramp = pg - prev;
                    assert!(
                        ramp >= sm.rr_min - 1e-9 && ramp <= sm.rr_max + 1e-9,
                        "seed {seed} stage {t}"
                    );
                    assert!(pg >= -1e-9, "seed {seed} stage {t}: negative dispatch");
                    prev = pg;
                }
                for &x in &dp.trajectory {
                    assert!(x >= bess.e_min - 1e-9 && x <= bess.e_cap_max + 1e-9);
                }
                feasible += 1;
            }
            (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => {}
            (dp, brute) => panic!("seed {seed}: dp {dp:?} vs oracle {brute:?}"),
        }
    }
    assert!(feasible >= 15, "only {feasible} feasible instances");
}
