//! Cooling-load microgrid scheduling: a population of thermostatically
//! controlled loads (TCLs) regulated by a local switching rule, plus a
//! dynamic program choosing generator output and battery power against the
//! aggregate demand band.
//!
//! The layering follows the problem's decentralized structure: temperature
//! control is resolved per unit by [`simulate_tcl`]'s sliding rule, the
//! scheduler then treats the resulting aggregate demand
//! ([`aggregate_demand`]) as exogenous. [`schedule_dg_bess`] is the exact
//! DP over the battery-energy lattice; [`enumerate_schedule`] re-solves
//! tiny instances by brute force for verification.

use serde::Serialize;

use crate::error::Error;
use crate::series::{TimeSeries, Unit};
use crate::Result;

/// One homogeneous class of thermostatically controlled cooling loads.
#[derive(Debug, Clone, PartialEq)]
pub struct TclParams {
    /// Thermal coefficient, per hour: rate at which indoor temperature
    /// relaxes toward outdoor.
    pub alpha: f64,
    /// Temperature drop per kW of cooling at equilibrium, °C/kW.
    pub beta: f64,
    /// Rated electrical power per unit, kW.
    pub p_rated: f64,
    /// Number of units in the class.
    pub n_units: u32,
    /// Comfort band bounds, °C. The switching rule slides along
    /// `band_high`, the warmest comfortable temperature.
    pub band_low: f64,
    pub band_high: f64,
    /// Actuation delay of the ON/OFF switch, in simulation sub-steps.
    pub switch_delay_substeps: u32,
}

impl TclParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.p_rated > 0.0) {
            return Err(Error::invalid(
                "TclParams",
                "alpha, beta and p_rated must be positive",
            ));
        }
        if self.n_units < 1 {
            return Err(Error::invalid("n_units", "must be ≥ 1"));
        }
        if !(self.band_low < self.band_high) {
            return Err(Error::invalid("band", "band_low must be below band_high"));
        }
        Ok(())
    }
}

/// Simulates one TCL under the delayed switching rule: cooling turns on at
/// or above the setpoint, off below it, with decisions taking effect
/// `switch_delay_substeps` sub-steps later.
///
/// `setpoint` holds either one value or one per stage. Returns the indoor
/// temperature at sub-step resolution (including the initial value) and the
/// per-stage duty fraction.
///
/// The demand model behind [`aggregate_demand`] assumes the room starts at
/// or above the setpoint and the outdoor temperature stays at or above it;
/// the simulation itself is well defined without those conditions (cooling
/// simply stays off).
pub fn simulate_tcl(
    t_in0: f64,
    t_out: &TimeSeries,
    setpoint: &[f64],
    p: &TclParams,
    substeps_per_stage: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    if t_out.unit() != Unit::Celsius {
        return Err(Error::invalid("t_out", "must be a celsius series"));
    }
    if substeps_per_stage < 1 {
        return Err(Error::invalid("substeps_per_stage", "must be ≥ 1"));
    }
    let stages = t_out.len();
    if setpoint.len() != 1 && setpoint.len() != stages {
        return Err(Error::invalid(
            "setpoint",
            "needs one value or one per stage",
        ));
    }
    let sp_at = |k: usize| setpoint[if setpoint.len() == 1 { 0 } else { k }];
    let dt = t_out.step_hours() / substeps_per_stage as f64;
    if p.alpha * dt >= 1.0 {
        return Err(Error::Numerical(format!(
            "sub-step too coarse: alpha·dt = {} ≥ 1",
            p.alpha * dt
        )));
    }

    let delay = p.switch_delay_substeps as usize;
    let mut decisions = Vec::with_capacity(stages * substeps_per_stage + 1);
    decisions.push(t_in0 >= sp_at(0));
    let mut temps = Vec::with_capacity(stages * substeps_per_stage + 1);
    temps.push(t_in0);
    let mut duty = Vec::with_capacity(stages);
    let mut t = t_in0;
    for k in 0..stages {
        let out = t_out.values()[k];
        let sp = sp_at(k);
        let mut on_subs = 0usize;
        for _ in 0..substeps_per_stage {
            let idx = decisions.len() - 1;
            let applied = decisions[idx.saturating_sub(delay)];
            let s = if applied { 1.0 } else { 0.0 };
            on_subs += applied as usize;
            t += dt * p.alpha * (out - t - p.beta * s * p.p_rated);
            temps.push(t);
            decisions.push(t >= sp);
        }
        duty.push(on_subs as f64 / substeps_per_stage as f64);
    }
    Ok((temps, duty))
}

/// Aggregate sliding-mode power demand of the class when the population
/// holds its temperature at `setpoint` under outdoor temperature `t_out`:
/// `n·(t_out − setpoint)/beta` kW.
pub fn aggregate_demand(t_out: f64, setpoint: f64, p: &TclParams) -> Result<f64> {
    p.validate()?;
    if t_out < setpoint {
        return Err(Error::invalid(
            "t_out",
            "below the setpoint; no cooling demand",
        ));
    }
    Ok(f64::from(p.n_units) * (t_out - setpoint) / p.beta)
}

/// Power that must be dumped when the minimum generator output plus solar
/// exceeds what the demand band and the battery's remaining charge rate
/// `d_max_c` can absorb. Returns zero when everything fits; with no charge
/// headroom the overshoot past the band cap is shed; otherwise the supply
/// beyond the charge rate is shed.
pub fn curtailment(pg_min: f64, p_s: f64, demand: f64, eps: f64, d_max_c: f64) -> f64 {
    let supply = pg_min + p_s;
    let headroom = d_max_c.max(0.0);
    let cur = if supply <= eps * demand + headroom {
        0.0
    } else if headroom == 0.0 {
        supply - eps * demand
    } else {
        supply - headroom
    };
    cur.max(0.0)
}

/// Quadratic generation cost of the distributed generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Output box, kW. The minimum is a hard floor (the unit cannot idle).
    pub p_min: f64,
    pub p_max: f64,
}

/// Battery box and pricing for the scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BessParams {
    /// Cost per kWh moved through the battery.
    pub gamma1: f64,
    /// Holding cost per kWh stored, charged each stage.
    pub gamma2: f64,
    /// Power box, kW, signed: negative charges.
    pub p_min: f64,
    pub p_max: f64,
    /// Energy box, kWh.
    pub x_min: f64,
    pub x_max: f64,
    /// Hours per stage.
    pub delta_t: f64,
    /// Transfer loss fraction.
    pub d_loss: f64,
}

/// Everything the generator/battery scheduler needs besides the forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerParams {
    pub dg: DgParams,
    pub bess: BessParams,
    /// Band tolerance ε > 1: supplied power may exceed demand by this
    /// factor before curtailment.
    pub eps_tolerance: f64,
    /// Price per kW of curtailed power.
    pub c_cur: f64,
    /// Battery-energy lattice resolution.
    pub grid_points: usize,
}

impl SchedulerParams {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dg;
        if !(d.a >= 0.0 && d.b >= 0.0 && d.c >= 0.0) {
            return Err(Error::invalid("dg", "cost coefficients must be ≥ 0"));
        }
        if !(0.0 <= d.p_min && d.p_min <= d.p_max) {
            return Err(Error::invalid("dg", "need 0 ≤ p_min ≤ p_max"));
        }
        let b = &self.bess;
        if !(b.gamma1 >= 0.0 && b.gamma2 >= 0.0) {
            return Err(Error::invalid("bess", "gamma costs must be ≥ 0"));
        }
        if !(b.p_min <= b.p_max) {
            return Err(Error::invalid("bess", "power box inverted"));
        }
        if !(b.x_min < b.x_max) {
            return Err(Error::invalid("bess", "energy box inverted"));
        }
        if !(b.delta_t > 0.0) {
            return Err(Error::invalid("bess.delta_t", "must be positive"));
        }
        if !(0.0 <= b.d_loss && b.d_loss < 1.0) {
            return Err(Error::invalid("bess.d_loss", "must lie in [0, 1)"));
        }
        if !(self.eps_tolerance > 1.0) {
            return Err(Error::invalid("eps_tolerance", "must exceed 1"));
        }
        if !(self.c_cur >= 0.0) {
            return Err(Error::invalid("c_cur", "must be ≥ 0"));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("grid_points", "must be ≥ 2"));
        }
        Ok(())
    }
}

/// Scheduler output: per-stage actions, bookkeeping series and the DP
/// objective.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleResult {
    /// Generator output per stage, kW.
    pub p_g: Vec<f64>,
    /// Battery power per stage, kW, positive discharging.
    pub p_b: Vec<f64>,
    /// Stored energy per stage boundary, kWh (`n + 1` points).
    pub trajectory: Vec<f64>,
    /// Aggregate TCL demand per stage, kW.
    pub demand: Vec<f64>,
    /// Curtailed power per stage, kW.
    pub curtailed: Vec<f64>,
    /// Stage costs, currency.
    pub stage_costs: Vec<f64>,
    pub objective: f64,
}

/// Uniform battery lattice with loss-adjusted hop powers.
struct XLattice {
    grid: Vec<f64>,
    /// power[i*g + j]: battery power moving the store from grid i to j, or
    /// NaN when a power limit blocks the move.
    power: Vec<f64>,
}

impl XLattice {
    fn build(b: &BessParams, g: usize) -> XLattice {
        let dx = (b.x_max - b.x_min) / (g - 1) as f64;
        let grid: Vec<f64> = (0..g).map(|i| b.x_min + dx * i as f64).collect();
        let mut power = vec![f64::NAN; g * g];
        for i in 0..g {
            for j in 0..g {
                let diff = grid[i] - grid[j];
                let p = if diff > 0.0 {
                    diff / (b.delta_t * (1.0 + b.d_loss))
                } else if diff < 0.0 {
                    diff / (b.delta_t * (1.0 - b.d_loss))
                } else {
                    0.0
                };
                if p >= b.p_min && p <= b.p_max {
                    power[i * g + j] = p;
                }
            }
        }
        XLattice { grid, power }
    }

    fn g(&self) -> usize {
        self.grid.len()
    }

    fn power_of(&self, i: usize, j: usize) -> Option<f64> {
        let p = self.power[i * self.g() + j];
        p.is_finite().then_some(p)
    }

    fn nearest(&self, x: f64) -> usize {
        let dx = self.grid[1] - self.grid[0];
        let idx = ((x - self.grid[0]) / dx).round();
        (idx.max(0.0) as usize).min(self.g() - 1)
    }

    /// Largest charging move from grid `i` the power box allows, as (hop
    /// count, charging power magnitude). Quantized to the lattice so that
    /// curtailment accounting stays exactly representable.
    fn max_charge(&self, i: usize) -> (usize, f64) {
        let mut best = (0usize, 0.0);
        for j in i + 1..self.g() {
            match self.power_of(i, j) {
                Some(p) => best = (j - i, -p),
                None => break,
            }
        }
        best
    }
}

/// Per-stage problem data derived from the forecasts.
struct StageData {
    p_s: f64,
    demand: f64,
}

/// Generator output minimizing the quadratic cost on `[lo, hi]`.
fn best_pg(dg: &DgParams, lo: f64, hi: f64) -> f64 {
    let vertex = if dg.a > 0.0 { -dg.b / (2.0 * dg.a) } else { lo };
    vertex.clamp(lo, hi)
}

fn stage_inputs(
    solar: &TimeSeries,
    t_out: &TimeSeries,
    sp: &SchedulerParams,
    tcl: &TclParams,
    n: usize,
) -> Result<Vec<StageData>> {
    sp.validate()?;
    tcl.validate()?;
    if solar.len() < n || t_out.len() < n {
        return Err(Error::invalid("series", "forecasts shorter than the horizon"));
    }
    if t_out.unit() != Unit::Celsius {
        return Err(Error::invalid("t_out", "must be a celsius series"));
    }
    let solar = solar.convert(Unit::Kw)?;
    (0..n)
        .map(|k| {
            let demand = aggregate_demand(t_out.values()[k], tcl.band_high, tcl)?;
            Ok(StageData {
                p_s: solar.values()[k],
                demand,
            })
        })
        .collect()
}

/// The per-stage action the scheduler considers at state index `i`:
/// either a forced curtailment stage or the feasible (generator, battery)
/// pairs on the demand band.
enum StageChoice {
    /// (next index, p_g, p_b, stage cost without the value-to-go)
    Curtailed {
        j: usize,
        p_g: f64,
        p_b: f64,
        cost: f64,
        cur: f64,
    },
    Band,
}

fn classify_stage(
    lattice: &XLattice,
    i: usize,
    data: &StageData,
    sp: &SchedulerParams,
) -> StageChoice {
    let (hops, d_max_c) = lattice.max_charge(i);
    let cur = curtailment(sp.dg.p_min, data.p_s, data.demand, sp.eps_tolerance, d_max_c);
    if cur > 0.0 {
        let p_b = -d_max_c;
        let x = lattice.grid[i];
        let cost = sp.dg.a * sp.dg.p_min * sp.dg.p_min
            + sp.dg.b * sp.dg.p_min
            + sp.dg.c
            + sp.bess.gamma1 * (p_b * sp.bess.delta_t).abs()
            + sp.bess.gamma2 * x
            + sp.c_cur * cur;
        StageChoice::Curtailed {
            j: i + hops,
            p_g: sp.dg.p_min,
            p_b,
            cost,
            cur,
        }
    } else {
        StageChoice::Band
    }
}

/// Exact finite-horizon schedule of generator output and battery power
/// against the TCL demand band, by dynamic programming over the battery
/// lattice. Stages where supply cannot be absorbed become forced
/// curtailment stages (minimum generation, maximum charge) with the shed
/// power priced at `c_cur`.
pub fn schedule_dg_bess(
    solar: &TimeSeries,
    t_out: &TimeSeries,
    sp: &SchedulerParams,
    tcl: &TclParams,
    x0: f64,
    n: usize,
) -> Result<ScheduleResult> {
    if n < 1 {
        return Err(Error::invalid("n", "horizon must be ≥ 1"));
    }
    let stages = stage_inputs(solar, t_out, sp, tcl, n)?;
    if !(x0 >= sp.bess.x_min && x0 <= sp.bess.x_max) {
        return Err(Error::Infeasible(format!(
            "initial energy {x0} outside [{}, {}]",
            sp.bess.x_min, sp.bess.x_max
        )));
    }
    let lattice = XLattice::build(&sp.bess, sp.grid_points);
    let g = lattice.g();

    let mut choice = vec![vec![usize::MAX; g]; n];
    let mut values = vec![vec![0.0_f64; g]; n + 1];
    for k in (0..n).rev() {
        let data = &stages[k];
        let lo_band = data.demand - data.p_s;
        let hi_band = sp.eps_tolerance * data.demand - data.p_s;
        let mut v_cur = vec![f64::INFINITY; g];
        for i in 0..g {
            match classify_stage(&lattice, i, data, sp) {
                StageChoice::Curtailed { j, cost, .. } => {
                    v_cur[i] = cost + values[k + 1][j];
                    choice[k][i] = j;
                }
                StageChoice::Band => {
                    let x = lattice.grid[i];
                    let mut best = f64::INFINITY;
                    let mut best_p = 0.0_f64;
                    for j in 0..g {
                        let Some(p_b) = lattice.power_of(i, j) else {
                            continue;
                        };
                        let lo = (lo_band - p_b).max(sp.dg.p_min);
                        let hi = (hi_band - p_b).min(sp.dg.p_max);
                        if lo > hi {
                            continue;
                        }
                        let p_g = best_pg(&sp.dg, lo, hi);
                        let cost = sp.dg.a * p_g * p_g
                            + sp.dg.b * p_g
                            + sp.dg.c
                            + sp.bess.gamma1 * (p_b * sp.bess.delta_t).abs()
                            + sp.bess.gamma2 * x
                            + values[k + 1][j];
                        let better = match cost.partial_cmp(&best) {
                            Some(std::cmp::Ordering::Less) => true,
                            Some(std::cmp::Ordering::Greater) => false,
                            _ => {
                                let (pa, pb) = (p_b.abs(), best_p.abs());
                                if pa != pb {
                                    pa < pb
                                } else {
                                    p_b > best_p
                                }
                            }
                        };
                        if better {
                            best = cost;
                            best_p = p_b;
                            choice[k][i] = j;
                        }
                    }
                    v_cur[i] = best;
                }
            }
        }
        values[k] = v_cur;
    }

    let i0 = lattice.nearest(x0);
    if !values[0][i0].is_finite() {
        return Err(Error::Infeasible(
            "demand band empty along every battery trajectory".into(),
        ));
    }

    let mut p_g = Vec::with_capacity(n);
    let mut p_b = Vec::with_capacity(n);
    let mut trajectory = vec![lattice.grid[i0]];
    let mut demand = Vec::with_capacity(n);
    let mut curtailed = Vec::with_capacity(n);
    let mut stage_costs = Vec::with_capacity(n);
    let mut i = i0;
    for k in 0..n {
        let data = &stages[k];
        let j = choice[k][i];
        if j == usize::MAX || !values[k][i].is_finite() {
            return Err(Error::Infeasible(format!(
                "demand band empty at stage {k} from state {}",
                lattice.grid[i]
            )));
        }
        let (pg_k, pb_k, cur_k) = match classify_stage(&lattice, i, data, sp) {
            StageChoice::Curtailed { p_g, p_b, cur, .. } => (p_g, p_b, cur),
            StageChoice::Band => {
                let pb_k = lattice.power_of(i, j).expect("stored choice is feasible");
                let lo = (data.demand - data.p_s - pb_k).max(sp.dg.p_min);
                let hi = (sp.eps_tolerance * data.demand - data.p_s - pb_k).min(sp.dg.p_max);
                (best_pg(&sp.dg, lo, hi), pb_k, 0.0)
            }
        };
        let cost = values[k][i] - values[k + 1][j];
        p_g.push(pg_k);
        p_b.push(pb_k);
        demand.push(data.demand);
        curtailed.push(cur_k);
        stage_costs.push(cost);
        trajectory.push(lattice.grid[j]);
        i = j;
    }
    Ok(ScheduleResult {
        p_g,
        p_b,
        trajectory,
        demand,
        curtailed,
        stage_costs,
        objective: values[0][i0],
    })
}

/// Myopic reference policy: at each stage picks the feasible action with
/// the smallest immediate cost, ignoring the value of stored energy.
pub fn greedy_dg_bess(
    solar: &TimeSeries,
    t_out: &TimeSeries,
    sp: &SchedulerParams,
    tcl: &TclParams,
    x0: f64,
    n: usize,
) -> Result<ScheduleResult> {
    if n < 1 {
        return Err(Error::invalid("n", "horizon must be ≥ 1"));
    }
    let stages = stage_inputs(solar, t_out, sp, tcl, n)?;
    if !(x0 >= sp.bess.x_min && x0 <= sp.bess.x_max) {
        return Err(Error::Infeasible(format!(
            "initial energy {x0} outside [{}, {}]",
            sp.bess.x_min, sp.bess.x_max
        )));
    }
    let lattice = XLattice::build(&sp.bess, sp.grid_points);
    let mut i = lattice.nearest(x0);
    let mut out = ScheduleResult {
        p_g: Vec::new(),
        p_b: Vec::new(),
        trajectory: vec![lattice.grid[i]],
        demand: Vec::new(),
        curtailed: Vec::new(),
        stage_costs: Vec::new(),
        objective: 0.0,
    };
    for (k, data) in stages.iter().enumerate() {
        let (j, pg_k, pb_k, cost, cur_k) = match classify_stage(&lattice, i, data, sp) {
            StageChoice::Curtailed { j, p_g, p_b, cost, cur } => (j, p_g, p_b, cost, cur),
            StageChoice::Band => {
                let x = lattice.grid[i];
                let mut best: Option<(usize, f64, f64, f64)> = None;
                for j in 0..lattice.g() {
                    let Some(p_b) = lattice.power_of(i, j) else {
                        continue;
                    };
                    let lo = (data.demand - data.p_s - p_b).max(sp.dg.p_min);
                    let hi = (sp.eps_tolerance * data.demand - data.p_s - p_b).min(sp.dg.p_max);
                    if lo > hi {
                        continue;
                    }
                    let p_g = best_pg(&sp.dg, lo, hi);
                    let cost = sp.dg.a * p_g * p_g
                        + sp.dg.b * p_g
                        + sp.dg.c
                        + sp.bess.gamma1 * (p_b * sp.bess.delta_t).abs()
                        + sp.bess.gamma2 * x;
                    if best.is_none_or(|(_, _, _, c)| cost < c) {
                        best = Some((j, p_g, p_b, cost));
                    }
                }
                let Some((j, p_g, p_b, cost)) = best else {
                    return Err(Error::Infeasible(format!(
                        "demand band empty at stage {k} from state {}",
                        lattice.grid[i]
                    )));
                };
                (j, p_g, p_b, cost, 0.0)
            }
        };
        out.p_g.push(pg_k);
        out.p_b.push(pb_k);
        out.demand.push(data.demand);
        out.curtailed.push(cur_k);
        out.stage_costs.push(cost);
        out.trajectory.push(lattice.grid[j]);
        out.objective += cost;
        i = j;
    }
    Ok(out)
}

/// Brute-force reference schedule: enumerates every battery-lattice
/// trajectory, choosing the generator output per stage among the interval
/// ends and the cost vertex. Exponential in the horizon; desk-scale only.
pub fn enumerate_schedule(
    solar: &TimeSeries,
    t_out: &TimeSeries,
    sp: &SchedulerParams,
    tcl: &TclParams,
    x0: f64,
    n: usize,
) -> Result<f64> {
    let stages = stage_inputs(solar, t_out, sp, tcl, n)?;
    let lattice = XLattice::build(&sp.bess, sp.grid_points);
    let start = lattice.nearest(x0);

    fn dfs(
        k: usize,
        i: usize,
        acc: f64,
        best: &mut f64,
        stages: &[StageData],
        lattice: &XLattice,
        sp: &SchedulerParams,
    ) {
        if k == stages.len() {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        let data = &stages[k];
        match classify_stage(lattice, i, data, sp) {
            StageChoice::Curtailed { j, cost, .. } => {
                dfs(k + 1, j, acc + cost, best, stages, lattice, sp);
            }
            StageChoice::Band => {
                let x = lattice.grid[i];
                for j in 0..lattice.g() {
                    let Some(p_b) = lattice.power_of(i, j) else {
                        continue;
                    };
                    let lo = (data.demand - data.p_s - p_b).max(sp.dg.p_min);
                    let hi = (sp.eps_tolerance * data.demand - data.p_s - p_b).min(sp.dg.p_max);
                    if lo > hi {
                        continue;
                    }
                    // The quadratic's minimum on an interval sits at an end
                    // or the vertex; trying all three is exact.
                    let mut candidates = vec![lo, hi];
                    if sp.dg.a > 0.0 {
                        let v = -sp.dg.b / (2.0 * sp.dg.a);
                        if v > lo && v < hi {
                            candidates.push(v);
                        }
                    }
                    let cost_pg = candidates
                        .into_iter()
                        .map(|p| sp.dg.a * p * p + sp.dg.b * p + sp.dg.c)
                        .fold(f64::INFINITY, f64::min);
                    let cost = cost_pg
                        + sp.bess.gamma1 * (p_b * sp.bess.delta_t).abs()
                        + sp.bess.gamma2 * x;
                    dfs(k + 1, j, acc + cost, best, stages, lattice, sp);
                }
            }
        }
    }

    let mut best = f64::INFINITY;
    dfs(0, start, 0.0, &mut best, &stages, &lattice, sp);
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Infeasible(
            "demand band empty along every battery trajectory".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_tcl() -> TclParams {
        TclParams {
            alpha: 0.5,
            beta: 300.0,
            p_rated: 0.1,
            n_units: 3200,
            band_low: 18.0,
            band_high: 23.0,
            switch_delay_substeps: 2,
        }
    }

    fn table_scheduler() -> SchedulerParams {
        SchedulerParams {
            dg: DgParams {
                a: 0.01,
                b: 0.1,
                c: 0.0,
                p_min: 50.0,
                p_max: 500.0,
            },
            bess: BessParams {
                gamma1: 0.008,
                gamma2: 0.008,
                p_min: -120.0,
                p_max: 120.0,
                x_min: 24.0,
                x_max: 216.0,
                delta_t: 1.0 / 6.0,
                d_loss: 0.05,
            },
            eps_tolerance: 1.05,
            c_cur: 60.0,
            grid_points: 33,
        }
    }

    fn celsius(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(Unit::Celsius, 10, values).unwrap()
    }

    fn kw(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(Unit::Kw, 10, values).unwrap()
    }

    #[test]
    fn idle_unit_relaxes_to_outdoor_temperature() {
        // Setpoint far above outdoor: cooling never engages and the room
        // settles at the outdoor temperature.
        let p = TclParams {
            band_high: 60.0,
            ..table_tcl()
        };
        let t_out = celsius(vec![30.0; 600]);
        let (temps, duty) = simulate_tcl(59.0, &t_out, &[60.0], &p, 10).unwrap();
        assert!(duty.iter().all(|&d| d == 0.0));
        assert!((temps.last().unwrap() - 30.0).abs() < 1e-3);
    }

    #[test]
    fn temperature_chatters_in_a_narrow_band_after_crossing() {
        let p = table_tcl();
        let t_out = celsius(vec![33.0; 1200]);
        let (temps, _) = simulate_tcl(26.0, &t_out, &[23.0], &p, 10).unwrap();
        // Find the first crossing below the setpoint, then bound excursions.
        let first_cross = temps.iter().position(|&t| t < 23.0).unwrap();
        let dt = (1.0 / 6.0) / 10.0;
        // Delayed switching can overshoot by at most delay sub-steps of the
        // strongest drift on either side.
        let drift = p.alpha * dt * (33.0 - 23.0 + p.beta * p.p_rated);
        let band = (p.switch_delay_substeps as f64 + 1.0) * drift;
        for &t in &temps[first_cross..] {
            assert!(
                t >= 23.0 - band - 1e-9 && t <= 23.0 + band + 1e-9,
                "temperature {t} left the chattering band ±{band}"
            );
        }
    }

    #[test]
    fn long_run_duty_matches_demand_formula() {
        let p = table_tcl();
        let t_out = celsius(vec![33.0; 1000]);
        let (_, duty) = simulate_tcl(23.0, &t_out, &[23.0], &p, 10).unwrap();
        let settled = &duty[duty.len() / 5..];
        let mean_power = settled.iter().sum::<f64>() / settled.len() as f64 * p.p_rated;
        let expected = (33.0 - 23.0) / p.beta;
        assert!(
            (mean_power - expected).abs() <= 0.03 * expected,
            "duty power {mean_power} vs sliding-mode demand {expected}"
        );
    }

    #[test]
    fn aggregate_demand_table_value() {
        let p = table_tcl();
        assert_eq!(aggregate_demand(23.0, 23.0, &p).unwrap(), 0.0);
        let d = aggregate_demand(33.0, 23.0, &p).unwrap();
        assert!((d - 3200.0 * 10.0 / 300.0).abs() < 1e-9);
        assert!((d - 106.666_666_666_666_67).abs() < 1e-9);
        // Linear in the population and the temperature gap.
        let double_n = TclParams {
            n_units: 6400,
            ..p.clone()
        };
        assert!((aggregate_demand(33.0, 23.0, &double_n).unwrap() - 2.0 * d).abs() < 1e-9);
        assert!((aggregate_demand(28.0, 23.0, &p).unwrap() - 0.5 * d).abs() < 1e-9);
        assert!(aggregate_demand(20.0, 23.0, &p).is_err());
    }

    #[test]
    fn curtailment_branches() {
        // No surplus: everything fits.
        assert_eq!(curtailment(50.0, 0.0, 100.0, 1.05, 80.0), 0.0);
        // Storage full: shed past the band cap.
        assert_eq!(curtailment(50.0, 200.0, 100.0, 1.05, 0.0), 145.0);
        // Charge-rate limited: shed past the charge rate.
        assert_eq!(curtailment(50.0, 200.0, 120.0, 1.05, 120.0), 130.0);
        // Never negative.
        assert_eq!(curtailment(10.0, 0.0, 500.0, 1.05, 0.0), 0.0);
    }

    #[test]
    fn disabled_battery_tracks_demand_floor() {
        let mut sp = table_scheduler();
        sp.bess.p_min = 0.0;
        sp.bess.p_max = 0.0;
        sp.bess.gamma1 = 0.0;
        sp.bess.gamma2 = 0.0;
        let tcl = table_tcl();
        let solar = kw(vec![20.0, 30.0, 0.0, 10.0]);
        let t_out = celsius(vec![33.0, 31.0, 35.0, 29.0]);
        let result = schedule_dg_bess(&solar, &t_out, &sp, &tcl, 120.0, 4).unwrap();
        for k in 0..4 {
            let demand = result.demand[k];
            let lo = (demand - solar.values()[k]).max(sp.dg.p_min);
            assert!((result.p_g[k] - lo).abs() < 1e-9, "stage {k}");
            assert_eq!(result.p_b[k], 0.0);
        }
    }

    #[test]
    fn schedule_matches_enumeration_on_small_instances() {
        let mut sp = table_scheduler();
        sp.grid_points = 13;
        let tcl = table_tcl();
        let solar = kw(vec![10.0, 150.0, 90.0, 0.0]);
        let t_out = celsius(vec![30.0, 33.0, 35.0, 31.0]);
        let dp = schedule_dg_bess(&solar, &t_out, &sp, &tcl, 120.0, 4).unwrap();
        let brute = enumerate_schedule(&solar, &t_out, &sp, &tcl, 120.0, 4).unwrap();
        assert!(
            (dp.objective - brute).abs() <= 1e-9 * brute.abs().max(1.0),
            "dp {} vs enumeration {brute}",
            dp.objective
        );
        // The reported stage costs must add up to the objective.
        let sum: f64 = dp.stage_costs.iter().sum();
        assert!((sum - dp.objective).abs() < 1e-9 * dp.objective.abs().max(1.0));
    }

    #[test]
    fn infeasible_band_is_reported() {
        let sp = table_scheduler();
        let tcl = TclParams {
            n_units: 3_200_000,
            ..table_tcl()
        };
        let solar = kw(vec![0.0; 3]);
        let t_out = celsius(vec![35.0; 3]);
        assert!(matches!(
            schedule_dg_bess(&solar, &t_out, &sp, &tcl, 120.0, 3),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn oversupply_forces_curtailment_accounting() {
        let sp = table_scheduler();
        let tcl = table_tcl();
        // Huge solar against modest demand from a nearly full battery.
        let solar = kw(vec![400.0, 400.0, 400.0]);
        let t_out = celsius(vec![30.0, 30.0, 30.0]);
        let x0 = 216.0;
        let result = schedule_dg_bess(&solar, &t_out, &sp, &tcl, x0, 3).unwrap();
        assert!(result.curtailed[0] > 0.0);
        // During a forced stage the generator idles at its floor.
        assert_eq!(result.p_g[0], sp.dg.p_min);
        // Full battery cannot charge: supply − ε·demand is shed.
        let demand = result.demand[0];
        let expected = 50.0 + 400.0 - sp.eps_tolerance * demand;
        assert!((result.curtailed[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn dp_beats_greedy_on_a_daily_profile() {
        let sp = table_scheduler();
        let tcl = table_tcl();
        let n = 36;
        let mut solar_vals = Vec::new();
        let mut temp_vals = Vec::new();
        for k in 0..n {
            let t = k as f64 / n as f64;
            let sun = (std::f64::consts::PI * t).sin().max(0.0);
            solar_vals.push(220.0 * sun * sun);
            temp_vals.push(26.0 + 9.0 * (std::f64::consts::PI * (t - 0.15)).sin().max(0.0));
        }
        let solar = kw(solar_vals);
        let t_out = celsius(temp_vals);
        let dp = schedule_dg_bess(&solar, &t_out, &sp, &tcl, 120.0, n).unwrap();
        let greedy = greedy_dg_bess(&solar, &t_out, &sp, &tcl, 120.0, n).unwrap();
        assert!(
            dp.objective < greedy.objective,
            "dp {} vs greedy {}",
            dp.objective,
            greedy.objective
        );
    }
}
