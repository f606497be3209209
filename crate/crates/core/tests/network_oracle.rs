//! Independent checks for the networked dispatcher: recursive least
//! squares against batch regression, the decomposed exhaustive search
//! against a joint one, and policy-dominance sweeps on desk-scale
//! instances.

use microgrid_core::network::{
    adp_train, enumerate_network_dispatch, evaluate_policy, initial_state, myopic_baseline,
    post_decision, rls_update, step_cost, CentralSystem, ControlVector, DgUnit, FeatureScales,
    FlexLoad, InitialConditions, Microgrid, NetworkConfig, NetworkData, NetworkState, StorageUnit,
    ValueFunctionApprox,
};
use microgrid_core::rng::Rng64;
use microgrid_core::series::{TimeSeries, Unit};
use nalgebra::{DMatrix, DVector};

fn microgrid() -> Microgrid {
    Microgrid {
        dg: DgUnit {
            a: 0.3,
            b: 0.05,
            p_min: 20.0,
            p_max: 50.0,
            ramp_min: -20.0,
            ramp_max: 20.0,
        },
        storage: StorageUnit {
            gamma1: 0.08,
            gamma2: 0.08,
            e_min: 40.0,
            e_max: 160.0,
            rate_min: -150.0,
            rate_max: 150.0,
            d_loss: 0.05,
        },
        load: FlexLoad {
            a: 0.33,
            b: 0.05,
            p_min: 0.0,
            p_max: 60.0,
            ramp_min: -15.0,
            ramp_max: 15.0,
        },
    }
}

fn central() -> CentralSystem {
    CentralSystem {
        dg: DgUnit {
            a: 0.31,
            b: 0.06,
            p_min: 100.0,
            p_max: 500.0,
            ramp_min: -50.0,
            ramp_max: 50.0,
        },
        storage: StorageUnit {
            gamma1: 0.08,
            gamma2: 0.08,
            e_min: 80.0,
            e_max: 360.0,
            rate_min: -300.0,
            rate_max: 300.0,
            d_loss: 0.02,
        },
    }
}

fn base_config(k: usize, horizon: usize) -> NetworkConfig {
    NetworkConfig {
        microgrids: vec![microgrid(); k],
        central: central(),
        exchange_min: -500.0,
        exchange_max: 500.0,
        horizon,
        delta_hours: 1.0 / 12.0,
        control_levels: 3,
        stepsize_eps: 10.0,
        stepsize_beta: 0.6,
        rls_lambda: 1.0,
        rls_prior: 1000.0,
        training_noise_fraction: 0.05,
        scales: FeatureScales {
            energy: 360.0,
            power: 500.0,
            price: 1.0,
        },
        initial: InitialConditions {
            storage_energy: {
                let mut v = vec![100.0; k];
                v.push(240.0);
                v
            },
            dg_output: {
                let mut v = vec![30.0; k];
                v.push(120.0);
                v
            },
            flex_load: vec![10.0; k],
        },
    }
}

fn constant_data(k: usize, n: usize, price: f64, res: f64, load: f64) -> NetworkData {
    let kw = |v: f64| TimeSeries::new(Unit::Kw, 5, vec![v; n]).unwrap();
    NetworkData {
        price: TimeSeries::new(Unit::CurrencyPerMwh, 5, vec![price; n]).unwrap(),
        renewable: (0..k).map(|_| kw(res)).collect(),
        demand: (0..k).map(|_| kw(load)).collect(),
    }
}

/// Instance with boxes wide enough that the zero control is always
/// feasible, parameters drawn from a seeded generator.
fn random_instance(seed: u64, horizon: usize) -> (NetworkConfig, NetworkData) {
    let mut rng = Rng64::new(seed);
    let mut span = |lo: f64, hi: f64| lo + (hi - lo) * rng.next_f64();
    let mut cfg = base_config(1, horizon);
    cfg.initial.storage_energy[0] = span(60.0, 140.0);
    cfg.initial.dg_output[0] = span(25.0, 45.0);
    cfg.initial.flex_load[0] = span(5.0, 40.0);
    cfg.initial.storage_energy[1] = span(150.0, 300.0);
    cfg.initial.dg_output[1] = span(110.0, 200.0);
    let price = span(0.05, 0.45);
    let res = span(0.0, 150.0);
    let load = span(200.0, 400.0);
    let data = constant_data(1, horizon, price, res, load);
    (cfg, data)
}

#[test]
fn rls_at_unit_forgetting_matches_batch_least_squares() {
    let dim = 12;
    let samples = 80;
    let mut rng = Rng64::new(4242);
    // A huge prior makes the regularization bias negligible against the
    // batch solution.
    let mut vfa = ValueFunctionApprox::new(dim, 1e8, 1.0).unwrap();
    let truth: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
    let mut a = DMatrix::<f64>::zeros(samples, dim);
    let mut y = DVector::<f64>::zeros(samples);
    for r in 0..samples {
        let phi: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let v: f64 = truth.iter().zip(&phi).map(|(t, p)| t * p).sum::<f64>()
            + 0.01 * rng.next_gaussian();
        rls_update(&mut vfa, &phi, v).unwrap();
        for c in 0..dim {
            a[(r, c)] = phi[c];
        }
        y[r] = v;
    }
    let ls = a.svd(true, true).solve(&y, 1e-12).unwrap();
    for i in 0..dim {
        assert!(
            (vfa.theta()[i] - ls[i]).abs() <= 1e-6,
            "weight {i}: recursive {} vs batch {}",
            vfa.theta()[i],
            ls[i]
        );
    }
}

#[test]
fn rls_covariance_stays_symmetric_over_ten_thousand_updates() {
    let dim = 10;
    let mut vfa = ValueFunctionApprox::new(dim, 1000.0, 1.0).unwrap();
    let mut rng = Rng64::new(7);
    for _ in 0..10_000 {
        let phi: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        rls_update(&mut vfa, &phi, rng.next_gaussian()).unwrap();
    }
    let b = vfa.covariance();
    let mut drift: f64 = 0.0;
    for r in 0..dim {
        assert!(b[r * dim + r] > 0.0, "diagonal entry {r} went non-positive");
        for c in 0..dim {
            drift = drift.max((b[r * dim + c] - b[c * dim + r]).abs());
        }
    }
    assert!(drift <= 1e-10, "symmetry drift {drift}");
    assert!(vfa.theta().iter().all(|t| t.is_finite()));
}

/// Joint exhaustive search over the full control cross product, no
/// per-unit decomposition; exponential in everything, so kept tiny.
fn joint_min_cost(
    cfg: &NetworkConfig,
    prices: &[f64],
    res: &[Vec<f64>],
    load: &[Vec<f64>],
    t: usize,
    state: &NetworkState,
) -> Option<f64> {
    if t == cfg.horizon {
        return Some(0.0);
    }
    let k = cfg.microgrid_count();
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        let n = cfg.control_levels;
        (0..n)
            .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
            .collect()
    };
    let mut dims: Vec<Vec<f64>> = Vec::new();
    for mg in &cfg.microgrids {
        dims.push(grid(mg.dg.ramp_min, mg.dg.ramp_max));
        dims.push(grid(mg.storage.rate_min, mg.storage.rate_max));
        dims.push(grid(mg.load.ramp_min, mg.load.ramp_max));
    }
    dims.push(grid(cfg.central.dg.ramp_min, cfg.central.dg.ramp_max));
    dims.push(grid(cfg.central.storage.rate_min, cfg.central.storage.rate_max));

    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; dims.len()];
    'outer: loop {
        let values: Vec<f64> = idx.iter().zip(&dims).map(|(&j, d)| d[j]).collect();
        let u = ControlVector::from_values(values).unwrap();
        if let Ok(cost) = step_cost(cfg, state, &u) {
            let post = post_decision(cfg, state, &u).unwrap();
            let next = if t + 1 < cfg.horizon {
                let mut v = post.as_slice().to_vec();
                v[0] = prices[t + 1];
                for i in 0..k {
                    v[4 + 5 * i] = res[i][t + 1];
                    v[5 + 5 * i] = load[i][t + 1];
                }
                NetworkState::from_values(v).unwrap()
            } else {
                post
            };
            if let Some(rest) = joint_min_cost(cfg, prices, res, load, t + 1, &next) {
                let cand = cost + rest;
                if best.is_none_or(|b| cand < b) {
                    best = Some(cand);
                }
            }
        }
        for d in 0..dims.len() {
            idx[d] += 1;
            if idx[d] < dims[d].len() {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    best
}

#[test]
fn decomposed_exhaustive_search_matches_the_joint_one() {
    let mut cfg = base_config(2, 2);
    cfg.control_levels = 2;
    let prices = vec![0.25, 0.40];
    let res = vec![vec![50.0, 80.0], vec![120.0, 90.0]];
    let load = vec![vec![300.0, 280.0], vec![250.0, 310.0]];
    let data = NetworkData {
        price: TimeSeries::new(Unit::CurrencyPerMwh, 5, prices.clone()).unwrap(),
        renewable: res
            .iter()
            .map(|v| TimeSeries::new(Unit::Kw, 5, v.clone()).unwrap())
            .collect(),
        demand: load
            .iter()
            .map(|v| TimeSeries::new(Unit::Kw, 5, v.clone()).unwrap())
            .collect(),
    };
    let decomposed = enumerate_network_dispatch(&cfg, &data).unwrap();
    let s0 = initial_state(&cfg, &data).unwrap();
    let joint = joint_min_cost(&cfg, &prices, &res, &load, 0, &s0).unwrap();
    assert!(
        (decomposed - joint).abs() <= 1e-9 * joint.abs().max(1.0),
        "decomposed {decomposed} vs joint {joint}"
    );
}

/// Single-microgrid storage-arbitrage instance built for value learning.
///
/// Only the battery is live: generator and load ramps are pinned to zero
/// and the central units are frozen, so the price swing is the one thing
/// the policy can exploit. The exchange window is deliberately tight
/// around the mean import, which makes the feasible rate grid shift with
/// every noisy training sample; the visited storage levels then vary
/// enough for the regression to identify the value of stored energy
/// instead of leaving it to the prior.
fn arbitrage_instance(seed: u64, horizon: usize) -> (NetworkConfig, NetworkData) {
    let mut rng = Rng64::new(seed ^ 0xE8C1);
    let mut span = |lo: f64, hi: f64| lo + (hi - lo) * rng.next_f64();
    let mut cfg = base_config(1, horizon);
    cfg.control_levels = 5;
    cfg.training_noise_fraction = 0.08;
    cfg.rls_lambda = 1.0;
    let mg = &mut cfg.microgrids[0];
    mg.dg.ramp_min = 0.0;
    mg.dg.ramp_max = 0.0;
    mg.load.ramp_min = 0.0;
    mg.load.ramp_max = 0.0;
    mg.storage.gamma1 = 0.01;
    mg.storage.gamma2 = 0.01;
    cfg.central.dg.ramp_min = 0.0;
    cfg.central.dg.ramp_max = 0.0;
    cfg.central.storage.rate_min = 0.0;
    cfg.central.storage.rate_max = 0.0;
    cfg.central.storage.gamma1 = 0.01;
    cfg.central.storage.gamma2 = 0.01;
    let mean_import = span(40.0, 120.0);
    let width = span(150.0, 200.0);
    cfg.exchange_min = mean_import - width;
    cfg.exchange_max = mean_import + width;
    let p0 = span(0.15, 0.35);
    let amp = 0.8 * p0;
    let freq = span(0.4, 1.2);
    let phase = span(0.0, 6.28);
    let price: Vec<f64> = (0..horizon)
        .map(|t| (p0 + amp * (freq * t as f64 + phase).sin()).max(0.02))
        .collect();
    cfg.initial.storage_energy[0] = span(70.0, 130.0);
    cfg.initial.dg_output[0] = span(25.0, 45.0);
    cfg.initial.flex_load[0] = span(5.0, 40.0);
    let g0 = cfg.initial.dg_output[0];
    let l0 = cfg.initial.flex_load[0];
    let res0 = span(40.0, 140.0);
    let wobble = span(20.0, 60.0);
    let wfreq = span(0.5, 1.3);
    let res: Vec<f64> = (0..horizon)
        .map(|t| (res0 + 15.0 * (wfreq * t as f64).cos()).max(0.0))
        .collect();
    let load: Vec<f64> = res
        .iter()
        .enumerate()
        .map(|(t, r)| {
            (r + g0 + l0 + mean_import + wobble * (wfreq * t as f64 + phase).sin()).max(0.0)
        })
        .collect();
    cfg.initial.storage_energy[1] = span(150.0, 300.0);
    cfg.initial.dg_output[1] = span(110.0, 200.0);
    let data = NetworkData {
        price: TimeSeries::new(Unit::CurrencyPerMwh, 5, price).unwrap(),
        renewable: vec![TimeSeries::new(Unit::Kw, 5, res).unwrap()],
        demand: vec![TimeSeries::new(Unit::Kw, 5, load).unwrap()],
    };
    (cfg, data)
}

#[test]
fn trained_policy_sits_between_the_exact_optimum_and_the_myopic_one() {
    let mut improved = 0usize;
    for seed in 0..25u64 {
        let (cfg, data) = arbitrage_instance(seed, 6);
        let exact = enumerate_network_dispatch(&cfg, &data).unwrap();
        let myopic = myopic_baseline(&cfg, &data).unwrap().total_cost;
        let trained = adp_train(&cfg, &data, 300, seed).unwrap();
        let adp = evaluate_policy(&cfg, &data, &trained.vfas).unwrap().total_cost;
        let tol = 1e-9 * (1.0 + exact.abs().max(myopic.abs()));
        assert!(
            exact <= adp + tol,
            "seed {seed}: policy cost {adp} beats the exact optimum {exact}"
        );
        assert!(
            adp <= myopic + tol,
            "seed {seed}: policy cost {adp} trails the myopic baseline {myopic}"
        );
        if adp < myopic - 1e-6 {
            improved += 1;
        }
    }
    assert!(
        improved >= 3,
        "training beat the myopic baseline on only {improved} of 25 seeds"
    );
}

#[test]
fn long_training_runs_keep_weights_and_costs_bounded() {
    let cfg = base_config(1, 4);
    let data = constant_data(1, 4, 0.25, 50.0, 300.0);
    let result = adp_train(&cfg, &data, 2000, 11).unwrap();
    assert_eq!(result.cost_trace.len(), 2000);
    assert!(result.cost_trace.iter().all(|c| c.is_finite()));
    assert!(result.cost_trace.iter().all(|c| c.abs() < 1e7));
    for vfa in &result.vfas {
        assert!(vfa.theta().iter().all(|t| t.is_finite() && t.abs() < 1e6));
    }
}

#[test]
fn evaluated_trajectories_respect_every_operating_window() {
    let slack = 1e-6;
    for seed in 100..110u64 {
        let (cfg, data) = random_instance(seed, 4);
        let trained = adp_train(&cfg, &data, 60, seed).unwrap();
        for trace in [
            evaluate_policy(&cfg, &data, &trained.vfas).unwrap(),
            myopic_baseline(&cfg, &data).unwrap(),
        ] {
            let mg = &cfg.microgrids[0];
            for t in 0..cfg.horizon {
                let e = trace.storage_energy[t][0];
                assert!(e >= mg.storage.e_min - slack && e <= mg.storage.e_max + slack);
                let ec = trace.storage_energy[t][1];
                assert!(
                    ec >= cfg.central.storage.e_min - slack
                        && ec <= cfg.central.storage.e_max + slack
                );
                let g = trace.dg_output[t][0];
                assert!(g >= mg.dg.p_min - slack && g <= mg.dg.p_max + slack);
                let gc = trace.dg_output[t][1];
                assert!(gc >= cfg.central.dg.p_min - slack && gc <= cfg.central.dg.p_max + slack);
                let l = trace.flex_load[t][0];
                assert!(l >= mg.load.p_min - slack && l <= mg.load.p_max + slack);
                let exc = trace.exchange[t][0];
                assert!(exc >= cfg.exchange_min - slack && exc <= cfg.exchange_max + slack);
                if t > 0 {
                    let ramp = trace.dg_output[t][0] - trace.dg_output[t - 1][0];
                    assert!(ramp >= mg.dg.ramp_min - slack && ramp <= mg.dg.ramp_max + slack);
                    let ramp_c = trace.dg_output[t][1] - trace.dg_output[t - 1][1];
                    assert!(
                        ramp_c >= cfg.central.dg.ramp_min - slack
                            && ramp_c <= cfg.central.dg.ramp_max + slack
                    );
                    let lramp = trace.flex_load[t][0] - trace.flex_load[t - 1][0];
                    assert!(lramp >= mg.load.ramp_min - slack && lramp <= mg.load.ramp_max + slack);
                }
            }
        }
    }
}
