//! Executes a validated scenario and writes its artifact set.
//!
//! Every run produces `report.json` (objective, baseline and a few
//! strategy-specific figures), a `steps.csv` with the per-stage dispatch,
//! plot-friendly CSVs, and echoes of the input series in the canonical
//! format, so a run can be reproduced from its own artifact directory.
//! All numbers are written with Rust's shortest round-trip float
//! formatting, which makes artifacts byte-identical across repeat runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use serde::Serialize;

use microgrid_core::error::Error;
use microgrid_core::series::{write_series, TimeSeries, Unit};
use microgrid_core::{adp, dp, network, smoothing, tcl};

use crate::config::{ScenarioConfig, Strategy};

/// What `run` prints when not quiet.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub seed: u64,
    pub objective: f64,
    pub baseline: f64,
    pub improvement_percent: f64,
    pub out_dir: PathBuf,
}

/// `report.json` layout; `details` is a sorted map so key order is stable.
#[derive(Serialize)]
struct Report {
    schema_version: u32,
    strategy: String,
    seed: u64,
    objective: f64,
    baseline: f64,
    improvement_percent: f64,
    details: BTreeMap<&'static str, f64>,
}

/// Positive when the run beat its baseline; `sense` is +1 when larger
/// objectives are better (income) and −1 when smaller are (cost).
fn improvement_percent(objective: f64, baseline: f64, sense: f64) -> f64 {
    if baseline.abs() < 1e-12 {
        return 0.0;
    }
    sense * (objective - baseline) / baseline.abs() * 100.0
}

fn write_report(dir: &Path, report: &Report) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(dir.join("report.json"), text + "\n")?;
    Ok(())
}

fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<(), Error>
where
    I: IntoIterator<Item = String>,
{
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn series_of(unit: Unit, step_minutes: u32, values: &[f64]) -> TimeSeries {
    TimeSeries::new(unit, step_minutes, values.to_vec()).expect("solver output is a valid series")
}

/// Runs the scenario with the given seed, writing artifacts into `dir`.
pub fn run_scenario(cfg: &ScenarioConfig, dir: &Path, seed: u64) -> Result<RunSummary, Error> {
    fs::create_dir_all(dir)?;
    let (objective, baseline, improvement) = match cfg.strategy {
        Strategy::DpDispatch => run_dp(cfg, dir, seed)?,
        Strategy::AdpDispatch => run_adp(cfg, dir, seed)?,
        Strategy::TclSchedule => run_tcl(cfg, dir, seed)?,
        Strategy::WindSmooth => run_smooth(cfg, dir, seed)?,
        Strategy::NetworkAdp => run_network(cfg, dir, seed)?,
    };
    Ok(RunSummary {
        strategy: cfg.strategy,
        seed,
        objective,
        baseline,
        improvement_percent: improvement,
        out_dir: dir.to_path_buf(),
    })
}

fn run_dp(cfg: &ScenarioConfig, dir: &Path, seed: u64) -> Result<(f64, f64, f64), Error> {
    let block = cfg.dp_dispatch.as_ref().expect("validated");
    let (scenario, error_spec) = block.build(seed)?;
    let report = dp::receding_horizon_run(&scenario, block.e0, block.total_steps, &error_spec)?;

    write_series(scenario.renewable(), dir.join("renewable.csv"))?;
    write_series(scenario.load(), dir.join("load.csv"))?;
    write_series(scenario.price(), dir.join("price.csv"))?;

    let price = scenario.price().values();
    write_csv(
        &dir.join("steps.csv"),
        "stage,action_kw,stored_kwh,grid_kw,trade_cost",
        (0..block.total_steps).map(|s| {
            let trade = -price[s] * report.grid_power[s] * 1e-3;
            format!(
                "{s},{},{},{},{trade}",
                report.executed_actions[s],
                report.trajectory[s + 1],
                report.grid_power[s]
            )
        }),
    )?;
    write_series(
        &series_of(Unit::Kwh, scenario.step_minutes(), &report.trajectory),
        dir.join("soc_trace.csv"),
    )?;
    write_csv(
        &dir.join("actions_vs_price.csv"),
        "stage,action_kw,price_currency_per_mwh",
        (0..block.total_steps).map(|s| format!("{s},{},{}", report.executed_actions[s], price[s])),
    )?;

    let improvement =
        improvement_percent(report.overall_cost, report.baseline_cost, -1.0);
    let mut details = BTreeMap::new();
    details.insert("bess_cost", report.bess_cost);
    details.insert("trading_cost", report.trading_cost);
    details.insert("planning_overall_cost", report.planning_overall_cost);
    details.insert("planning_baseline_cost", report.planning_baseline_cost);
    details.insert("planning_trading_cost", report.planning_trading_cost);
    details.insert(
        "final_stored_kwh",
        *report.trajectory.last().expect("nonempty"),
    );
    write_report(
        dir,
        &Report {
            schema_version: 1,
            strategy: cfg.strategy.to_string(),
            seed,
            objective: report.overall_cost,
            baseline: report.baseline_cost,
            improvement_percent: improvement,
            details,
        },
    )?;
    Ok((report.overall_cost, report.baseline_cost, improvement))
}

fn run_adp(cfg: &ScenarioConfig, dir: &Path, seed: u64) -> Result<(f64, f64, f64), Error> {
    let block = cfg.adp_dispatch.as_ref().expect("validated");
    let (wind, price, adp_cfg, error_spec) = block.build(seed)?;
    let report = adp::adp_dispatch_run(&wind, &price, &adp_cfg, &error_spec)?;

    write_series(&wind, dir.join("wind.csv"))?;
    write_series(&price, dir.join("price.csv"))?;

    let steps = report.actions.len();
    let m = price.values();
    write_csv(
        &dir.join("steps.csv"),
        "stage,action_wh,stored_wh,grid_wh,income",
        (0..steps).map(|s| {
            let income = m[s] * report.grid_energy[s] / 1e6;
            format!(
                "{s},{},{},{},{income}",
                report.actions[s],
                report.trajectory[s + 1],
                report.grid_energy[s]
            )
        }),
    )?;
    let stored_kwh: Vec<f64> = report.trajectory.iter().map(|x| x * 1e-3).collect();
    write_series(
        &series_of(Unit::Kwh, wind.step_minutes(), &stored_kwh),
        dir.join("soc_trace.csv"),
    )?;
    write_csv(
        &dir.join("actions_vs_price.csv"),
        "stage,action_wh,price_currency_per_mwh",
        (0..steps).map(|s| format!("{s},{},{}", report.actions[s], m[s])),
    )?;

    let improvement = improvement_percent(
        report.additional_income,
        report.cycling_additional_income,
        1.0,
    );
    let mut details = BTreeMap::new();
    details.insert("income", report.income);
    details.insert("baseline_income", report.baseline_income);
    details.insert("throughput_cost", report.throughput_cost);
    details.insert("lifetime_hours_estimate", report.lifetime_hours_estimate);
    details.insert(
        "final_stored_wh",
        *report.trajectory.last().expect("nonempty"),
    );
    write_report(
        dir,
        &Report {
            schema_version: 1,
            strategy: cfg.strategy.to_string(),
            seed,
            objective: report.additional_income,
            baseline: report.cycling_additional_income,
            improvement_percent: improvement,
            details,
        },
    )?;
    Ok((
        report.additional_income,
        report.cycling_additional_income,
        improvement,
    ))
}

fn run_tcl(cfg: &ScenarioConfig, dir: &Path, seed: u64) -> Result<(f64, f64, f64), Error> {
    let block = cfg.tcl_schedule.as_ref().expect("validated");
    let (solar, t_out, sp, tcl_params) = block.build(seed)?;
    let result = tcl::schedule_dg_bess(&solar, &t_out, &sp, &tcl_params, block.x0, block.stages)?;
    let greedy = tcl::greedy_dg_bess(&solar, &t_out, &sp, &tcl_params, block.x0, block.stages)?;

    write_series(&solar, dir.join("solar.csv"))?;
    write_series(&t_out, dir.join("t_out.csv"))?;

    write_csv(
        &dir.join("steps.csv"),
        "stage,dg_kw,bess_kw,stored_kwh,demand_kw,curtailed_kw,stage_cost",
        (0..block.stages).map(|s| {
            format!(
                "{s},{},{},{},{},{},{}",
                result.p_g[s],
                result.p_b[s],
                result.trajectory[s + 1],
                result.demand[s],
                result.curtailed[s],
                result.stage_costs[s]
            )
        }),
    )?;
    write_series(
        &series_of(Unit::Kwh, solar.step_minutes(), &result.trajectory),
        dir.join("soc_trace.csv"),
    )?;

    let improvement = improvement_percent(result.objective, greedy.objective, -1.0);
    let mut details = BTreeMap::new();
    details.insert("curtailed_total_kw", result.curtailed.iter().sum());
    details.insert("demand_total_kw", result.demand.iter().sum());
    details.insert(
        "final_stored_kwh",
        *result.trajectory.last().expect("nonempty"),
    );
    write_report(
        dir,
        &Report {
            schema_version: 1,
            strategy: cfg.strategy.to_string(),
            seed,
            objective: result.objective,
            baseline: greedy.objective,
            improvement_percent: improvement,
            details,
        },
    )?;
    Ok((result.objective, greedy.objective, improvement))
}

fn run_smooth(cfg: &ScenarioConfig, dir: &Path, seed: u64) -> Result<(f64, f64, f64), Error> {
    let block = cfg.wind_smooth.as_ref().expect("validated");
    let (wind, t_out, tcl_params, sm, bess) = block.build(seed)?;
    let n = block.stages;
    let stage1 = smoothing::smooth_setpoints(&wind, &t_out, &tcl_params, &sm, n)?;
    let pw_tcl = series_of(Unit::Mw, wind.step_minutes(), &stage1.pw_tcl);
    let stage2 = smoothing::smooth_bess(&pw_tcl, &sm, &bess, block.e0, block.pg_prev)?;

    // With constant setpoints the TCL draw is constant up to the outdoor
    // profile, so this is the "no modulation" fluctuation level.
    let mid = 0.5 * (sm.band_low + sm.band_high);
    let baseline =
        smoothing::fluctuation_objective(&wind, &t_out, &tcl_params, &sm, &vec![mid; n])?;

    write_series(&wind, dir.join("wind.csv"))?;
    write_series(&t_out, dir.join("t_out.csv"))?;

    let raw = wind.values();
    write_csv(
        &dir.join("steps.csv"),
        "stage,wind_mw,pw_tcl_mw,dispatch_mw,dispatch_delta_mw,bess_mw,stored_mwh",
        (0..n).map(|s| {
            let prev = if s == 0 { block.pg_prev } else { stage2.p_g[s - 1] };
            format!(
                "{s},{},{},{},{},{},{}",
                raw[s],
                stage1.pw_tcl[s],
                stage2.p_g[s],
                stage2.p_g[s] - prev,
                stage2.p_b[s],
                stage2.trajectory[s + 1]
            )
        }),
    )?;
    write_csv(
        &dir.join("smoothed_vs_raw.csv"),
        "stage,raw_mw,smoothed_mw",
        (0..n).map(|s| format!("{s},{},{}", raw[s], stage2.p_g[s])),
    )?;
    write_series(
        &series_of(Unit::Mwh, wind.step_minutes(), &stage2.trajectory),
        dir.join("soc_trace.csv"),
    )?;

    let improvement = improvement_percent(stage1.objective, baseline, -1.0);
    let mut details = BTreeMap::new();
    details.insert("setpoint_fluctuation", stage1.objective);
    details.insert("qp_iterations", stage1.iterations as f64);
    details.insert("battery_cost", stage2.cost);
    details.insert(
        "dispatch_fluctuation",
        stage2
            .p_g
            .windows(2)
            .map(|w| (w[1] - w[0]).powi(2))
            .sum::<f64>(),
    );
    write_report(
        dir,
        &Report {
            schema_version: 1,
            strategy: cfg.strategy.to_string(),
            seed,
            objective: stage1.objective,
            baseline,
            improvement_percent: improvement,
            details,
        },
    )?;
    Ok((stage1.objective, baseline, improvement))
}

fn run_network(cfg: &ScenarioConfig, dir: &Path, seed: u64) -> Result<(f64, f64, f64), Error> {
    let block = cfg.network_adp.as_ref().expect("validated");
    let (net_cfg, data) = block.build(seed)?;
    let training = network::adp_train(&net_cfg, &data, block.iterations, seed)?;
    let trace = network::evaluate_policy(&net_cfg, &data, &training.vfas)?;
    let myopic = network::myopic_baseline(&net_cfg, &data)?;

    write_series(&data.price, dir.join("price.csv"))?;
    for (i, s) in data.renewable.iter().enumerate() {
        write_series(s, dir.join(format!("renewable_mg{i}.csv")))?;
    }
    for (i, s) in data.demand.iter().enumerate() {
        write_series(s, dir.join(format!("demand_mg{i}.csv")))?;
    }

    write_csv(
        &dir.join("cost_trace.csv"),
        "iteration,total_cost",
        training
            .cost_trace
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{},{c}", i + 1)),
    )?;
    write_csv(
        &dir.join("theta.csv"),
        "stage,coef_index,value",
        training.vfas.iter().enumerate().flat_map(|(t, vfa)| {
            vfa.theta()
                .iter()
                .enumerate()
                .map(move |(j, v)| format!("{t},{j},{v}"))
                .collect::<Vec<_>>()
        }),
    )?;

    let k = net_cfg.microgrid_count();
    let mut header = String::from("stage");
    for i in 0..k {
        let _ = write!(header, ",exchange_mg{i}_kw");
    }
    header.push_str(",grid_import_kw,price,stage_cost");
    write_csv(
        &dir.join("steps.csv"),
        &header,
        (0..net_cfg.horizon).map(|s| {
            let mut row = format!("{s}");
            for i in 0..k {
                let _ = write!(row, ",{}", trace.exchange[s][i]);
            }
            let _ = write!(
                row,
                ",{},{},{}",
                trace.grid_import[s], trace.price[s], trace.stage_costs[s]
            );
            row
        }),
    )?;

    let improvement = improvement_percent(trace.total_cost, myopic.total_cost, -1.0);
    let mut details = BTreeMap::new();
    details.insert(
        "final_training_cost",
        *training.cost_trace.last().expect("nonempty"),
    );
    details.insert("myopic_total_cost", myopic.total_cost);
    write_report(
        dir,
        &Report {
            schema_version: 1,
            strategy: cfg.strategy.to_string(),
            seed,
            objective: trace.total_cost,
            baseline: myopic.total_cost,
            improvement_percent: improvement,
            details,
        },
    )?;
    Ok((trace.total_cost, myopic.total_cost, improvement))
}

/// Runs `jobs` copies of the scenario with seeds `base_seed..base_seed+jobs`.
/// With one job the artifacts land in `out_root`; with several, each run
/// gets its own `seed-N` subdirectory. Results come back in seed order.
pub fn run_jobs(
    cfg: &ScenarioConfig,
    out_root: &Path,
    base_seed: u64,
    jobs: usize,
) -> Vec<Result<RunSummary, Error>> {
    if jobs <= 1 {
        return vec![run_scenario(cfg, out_root, base_seed)];
    }
    thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let seed = base_seed + j as u64;
                let dir = out_root.join(format!("seed-{seed}"));
                scope.spawn(move || run_scenario(cfg, &dir, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread does not panic"))
            .collect()
    })
}
