//! Receding-horizon battery dispatch against market prices, with
//! degradation priced per half cycle.
//!
//! [`solve_horizon`] runs an exact dynamic program over a uniform energy
//! grid. Cycle wear is charged incrementally against the local extreme of
//! the in-progress excursion, so the per-step charges telescope to exactly
//! the offline half-cycle total of [`crate::battery::count_half_cycles`];
//! to keep that pricing Markovian the DP state carries the excursion's
//! reference extreme alongside the stored energy. [`enumerate_exact`] is the
//! brute-force oracle for desk-scale instances, and
//! [`receding_horizon_run`] replans on error-injected forecasts while
//! executing against actual data.

use serde::Serialize;

use crate::battery::{
    count_half_cycles, half_cycle_cost, step_battery, BatterySpec, CycleCostParams,
};
use crate::error::Error;
use crate::series::{ForecastErrorSpec, TimeSeries, Unit};
use crate::Result;

/// One dispatch problem: forecast data, battery, economics and the lattice
/// resolution.
///
/// Power series are converted to kW at construction; prices stay per MWh,
/// so a step's trading term is `−price·P_G/1000`. The battery spec must use
/// the same kW/kWh frame.
#[derive(Debug, Clone)]
pub struct DispatchScenario {
    renewable: TimeSeries,
    load: TimeSeries,
    price: TimeSeries,
    pub battery: BatterySpec,
    pub cycle: CycleCostParams,
    pub horizon_steps: usize,
    pub grid_points: usize,
}

impl DispatchScenario {
    pub fn new(
        renewable: TimeSeries,
        load: TimeSeries,
        price: TimeSeries,
        battery: BatterySpec,
        cycle: CycleCostParams,
        horizon_steps: usize,
        grid_points: usize,
    ) -> Result<DispatchScenario> {
        let renewable = renewable.convert(Unit::Kw)?;
        let load = load.convert(Unit::Kw)?;
        if price.unit() != Unit::CurrencyPerMwh {
            return Err(Error::invalid("price", "must be a currency_per_MWh series"));
        }
        if renewable.len() != load.len() || renewable.len() != price.len() {
            return Err(Error::invalid(
                "series",
                format!(
                    "renewable/load/price lengths differ: {}/{}/{}",
                    renewable.len(),
                    load.len(),
                    price.len()
                ),
            ));
        }
        if renewable.step_minutes() != load.step_minutes()
            || renewable.step_minutes() != price.step_minutes()
        {
            return Err(Error::invalid("series", "step lengths differ"));
        }
        battery.validate()?;
        if horizon_steps < 1 {
            return Err(Error::invalid("horizon_steps", "must be ≥ 1"));
        }
        if grid_points < 2 {
            return Err(Error::invalid("grid_points", "must be ≥ 2"));
        }
        Ok(DispatchScenario {
            renewable,
            load,
            price,
            battery,
            cycle,
            horizon_steps,
            grid_points,
        })
    }

    pub fn len(&self) -> usize {
        self.price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.price.is_empty()
    }

    pub fn step_minutes(&self) -> u32 {
        self.price.step_minutes()
    }

    pub fn renewable(&self) -> &TimeSeries {
        &self.renewable
    }

    pub fn load(&self) -> &TimeSeries {
        &self.load
    }

    pub fn price(&self) -> &TimeSeries {
        &self.price
    }

    /// Net uncontrolled injection at step `k` in kW, before battery power.
    fn net_kw(&self, k: usize) -> f64 {
        self.renewable.values()[k] - self.load.values()[k]
    }

    /// Trading cost of one step: negative revenue for exporting `p_g_kw`.
    fn trade_cost(&self, k: usize, p_g_kw: f64) -> f64 {
        -self.price.values()[k] * p_g_kw * 1e-3
    }

    fn sub_scenario(&self, start: usize, len: usize) -> Result<DispatchScenario> {
        Ok(DispatchScenario {
            renewable: self.renewable.window(start, len)?,
            load: self.load.window(start, len)?,
            price: self.price.window(start, len)?,
            battery: self.battery.clone(),
            cycle: self.cycle,
            horizon_steps: len,
            grid_points: self.grid_points,
        })
    }
}

/// Uniform energy lattice over the battery's operating window plus the
/// loss-adjusted powers that move the state exactly between lattice points.
struct Lattice {
    grid: Vec<f64>,
    /// `power[i*g + j]`: power moving grid point `i` to `j`, or NaN when the
    /// move exceeds a power limit.
    power: Vec<f64>,
    /// Cycle cost of a half cycle spanning `d` lattice intervals, for one
    /// battery.
    h_by_span: Vec<f64>,
}

impl Lattice {
    fn build(battery: &BatterySpec, cycle: &CycleCostParams, grid_points: usize) -> Lattice {
        let g = grid_points;
        let span = battery.e_cap_max - battery.e_min;
        let de = span / (g - 1) as f64;
        let grid: Vec<f64> = (0..g).map(|i| battery.e_min + de * i as f64).collect();
        let mut power = vec![f64::NAN; g * g];
        for i in 0..g {
            for j in 0..g {
                let diff = grid[i] - grid[j];
                let p = if diff > 0.0 {
                    diff / (battery.delta_t * (1.0 + battery.d_loss))
                } else if diff < 0.0 {
                    diff / (battery.delta_t * (1.0 - battery.d_loss))
                } else {
                    0.0
                };
                if p <= battery.p_discharge_max && p >= -battery.p_charge_max {
                    power[i * g + j] = p;
                }
            }
        }
        let h_by_span = (0..g)
            .map(|d| {
                let depth = (de * d as f64 / battery.e_max).min(1.0);
                half_cycle_cost(depth, cycle).expect("lattice depth within [0, 1]")
            })
            .collect();
        Lattice {
            grid,
            power,
            h_by_span,
        }
    }

    fn g(&self) -> usize {
        self.grid.len()
    }

    fn power_of(&self, i: usize, j: usize) -> Option<f64> {
        let p = self.power[i * self.g() + j];
        p.is_finite().then_some(p)
    }

    fn nearest(&self, e: f64) -> usize {
        let de = self.grid[1] - self.grid[0];
        let idx = ((e - self.grid[0]) / de).round();
        (idx.max(0.0) as usize).min(self.g() - 1)
    }

    /// Incremental cycle cost and successor extreme for moving `i → j` while
    /// the open excursion references extreme `m`. A direction flip closes
    /// the excursion at `i`; otherwise the excursion deepens from `m`.
    fn cycle_step(&self, i: usize, m: usize, j: usize) -> (usize, f64) {
        let s_move = (j as i64 - i as i64).signum();
        let s_open = (i as i64 - m as i64).signum();
        if s_move != 0 && s_open != 0 && s_move == -s_open {
            (i, self.h_by_span[i.abs_diff(j)])
        } else {
            (
                m,
                self.h_by_span[j.abs_diff(m)] - self.h_by_span[i.abs_diff(m)],
            )
        }
    }
}

/// Value, subsequent-local-extreme and greedy action per stage and grid
/// state, as produced by [`solve_horizon`].
///
/// Row `k` answers "if a fresh horizon started at stage `k` in state `e`":
/// `value` is its cost-to-go (a zero row is appended at the horizon end),
/// `sigma` the first extreme its optimal trajectory reaches, `best_action`
/// its first move.
#[derive(Debug, Clone)]
pub struct ExtremeTable {
    grid: Vec<f64>,
    value: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    best_action: Vec<Vec<f64>>,
}

impl ExtremeTable {
    /// Energy grid the table is indexed by.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Number of decision stages.
    pub fn stages(&self) -> usize {
        self.sigma.len()
    }

    /// Cost-to-go at stage `k` (0 ..= stages), grid index `i`.
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.value[k][i]
    }

    /// Subsequent local extreme of the optimal trajectory from `(k, i)`.
    pub fn sigma(&self, k: usize, i: usize) -> f64 {
        self.sigma[k][i]
    }

    /// First action of the optimal trajectory from `(k, i)`, in kW per
    /// battery.
    pub fn best_action(&self, k: usize, i: usize) -> f64 {
        self.best_action[k][i]
    }

    pub fn nearest_index(&self, e: f64) -> usize {
        let de = self.grid[1] - self.grid[0];
        let idx = ((e - self.grid[0]) / de).round();
        (idx.max(0.0) as usize).min(self.grid.len() - 1)
    }
}

/// Propagates the subsequent local extreme one step backwards: a direction
/// flip between `e_prev → e_next` and `e_next → sigma_next` pins the extreme
/// at `e_next`; an idle or same-direction step passes `sigma_next` through.
pub fn update_extreme(e_prev: f64, e_next: f64, sigma_next: f64) -> f64 {
    let move_now = e_next - e_prev;
    let move_later = sigma_next - e_next;
    if move_now * move_later < 0.0 {
        e_next
    } else {
        sigma_next
    }
}

/// Exact finite-horizon solve from state `e0` at data offset `k0`.
///
/// Returns the per-battery action sequence (kW, positive discharging), the
/// optimal objective Σ n·C_loss − price·P_G, and the stage table. Ties in
/// the argmin prefer the smallest |P_B|, then discharging.
pub fn solve_horizon(
    scenario: &DispatchScenario,
    e0: f64,
    k0: usize,
) -> Result<(Vec<f64>, f64, ExtremeTable)> {
    let b = &scenario.battery;
    if !(e0 >= b.e_min && e0 <= b.e_cap_max) {
        return Err(Error::Infeasible(format!(
            "initial energy {e0} outside [{}, {}]",
            b.e_min, b.e_cap_max
        )));
    }
    let n = scenario.horizon_steps;
    if k0 + n > scenario.len() {
        return Err(Error::invalid(
            "k0",
            format!(
                "horizon [{k0}, {}) exceeds data length {}",
                k0 + n,
                scenario.len()
            ),
        ));
    }
    let lattice = Lattice::build(b, &scenario.cycle, scenario.grid_points);
    let g = lattice.g();
    let n_f = f64::from(b.n_parallel);

    // Augmented state (i, m): stored-energy index i plus the reference
    // extreme m of the open excursion; i == m means no open excursion.
    let mut v_next = vec![0.0_f64; g * g];
    let mut v_cur = vec![0.0_f64; g * g];
    let mut choice = vec![vec![0u16; g * g]; n];
    let mut fresh_value = vec![vec![0.0_f64; g]; n + 1];

    for k in (0..n).rev() {
        let step = k0 + k;
        for i in 0..g {
            for m in 0..g {
                let mut best_cost = f64::INFINITY;
                let mut best_p = 0.0_f64;
                let mut best_j = i;
                for j in 0..g {
                    let Some(p) = lattice.power_of(i, j) else {
                        continue;
                    };
                    let (m2, cyc) = lattice.cycle_step(i, m, j);
                    let cost = n_f * cyc
                        + scenario.trade_cost(step, scenario.net_kw(step) + n_f * p)
                        + v_next[j * g + m2];
                    let better = match cost.partial_cmp(&best_cost) {
                        Some(std::cmp::Ordering::Less) => true,
                        Some(std::cmp::Ordering::Greater) => false,
                        _ => {
                            let (pa, pb) = (p.abs(), best_p.abs());
                            if pa != pb {
                                pa < pb
                            } else {
                                p > best_p
                            }
                        }
                    };
                    if better {
                        best_cost = cost;
                        best_p = p;
                        best_j = j;
                    }
                }
                v_cur[i * g + m] = best_cost;
                choice[k][i * g + m] = best_j as u16;
            }
        }
        for i in 0..g {
            fresh_value[k][i] = v_cur[i * g + i];
        }
        std::mem::swap(&mut v_cur, &mut v_next);
    }

    // Walk the policy from a fresh start at (k, i): collect the first
    // action and the first extreme the trajectory reaches.
    let walk = |k_start: usize, i_start: usize| -> (f64, f64, Vec<f64>) {
        let (mut i, mut m) = (i_start, i_start);
        let mut first_action = 0.0;
        let mut sigma = None;
        let mut actions = Vec::with_capacity(n - k_start);
        for k in k_start..n {
            let j = usize::from(choice[k][i * g + m]);
            let p = lattice.power_of(i, j).expect("stored choice is feasible");
            if k == k_start {
                first_action = p;
            }
            actions.push(p);
            let s_move = (j as i64 - i as i64).signum();
            let s_open = (i as i64 - m as i64).signum();
            if s_move != 0 && s_open != 0 && s_move == -s_open {
                if sigma.is_none() {
                    sigma = Some(lattice.grid[i]);
                }
                m = i;
            }
            i = j;
        }
        (first_action, sigma.unwrap_or(lattice.grid[i]), actions)
    };

    let mut sigma_rows = vec![vec![0.0_f64; g]; n];
    let mut action_rows = vec![vec![0.0_f64; g]; n];
    for k in 0..n {
        for i in 0..g {
            let (first, sigma, _) = walk(k, i);
            action_rows[k][i] = first;
            sigma_rows[k][i] = sigma;
        }
    }

    let i0 = lattice.nearest(e0);
    let objective = fresh_value[0][i0];
    let (_, _, actions) = walk(0, i0);
    let table = ExtremeTable {
        grid: lattice.grid,
        value: fresh_value,
        sigma: sigma_rows,
        best_action: action_rows,
    };
    Ok((actions, objective, table))
}

/// Brute-force reference solve: enumerates every lattice trajectory, prices
/// half cycles offline with [`count_half_cycles`], and returns the best
/// action sequence and objective. Exponential in the horizon; intended for
/// desk-scale verification only.
pub fn enumerate_exact(scenario: &DispatchScenario, e0: f64, k0: usize) -> Result<(Vec<f64>, f64)> {
    let b = &scenario.battery;
    if !(e0 >= b.e_min && e0 <= b.e_cap_max) {
        return Err(Error::Infeasible(format!(
            "initial energy {e0} outside [{}, {}]",
            b.e_min, b.e_cap_max
        )));
    }
    let n = scenario.horizon_steps;
    if k0 + n > scenario.len() {
        return Err(Error::invalid("k0", "horizon exceeds data length"));
    }
    let lattice = Lattice::build(b, &scenario.cycle, scenario.grid_points);
    let n_f = f64::from(b.n_parallel);
    let i0 = lattice.nearest(e0);

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = vec![i0; n + 1];
    // Depth-first enumeration with incremental trading cost; cycle cost is
    // priced offline per complete trajectory.
    fn dfs(
        depth: usize,
        trading: f64,
        path: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
        scenario: &DispatchScenario,
        lattice: &Lattice,
        n_f: f64,
        k0: usize,
    ) {
        let n = scenario.horizon_steps;
        if depth == n {
            let energies: Vec<f64> = path.iter().map(|&i| lattice.grid[i]).collect();
            let cycle_total: f64 = count_half_cycles(&energies, scenario.battery.e_max)
                .iter()
                .map(|&d| half_cycle_cost(d, &scenario.cycle).expect("lattice DOD valid"))
                .sum();
            let total = trading + n_f * cycle_total;
            if best.as_ref().is_none_or(|(c, _)| total < *c) {
                *best = Some((total, path.clone()));
            }
            return;
        }
        let i = path[depth];
        let step = k0 + depth;
        for j in 0..lattice.g() {
            let Some(p) = lattice.power_of(i, j) else {
                continue;
            };
            path[depth + 1] = j;
            let t = scenario.trade_cost(step, scenario.net_kw(step) + n_f * p);
            dfs(depth + 1, trading + t, path, best, scenario, lattice, n_f, k0);
        }
    }
    dfs(0, 0.0, &mut path, &mut best, scenario, &lattice, n_f, k0);
    let (objective, indices) = best.expect("idle path is always feasible");
    let actions = indices
        .windows(2)
        .map(|w| lattice.power_of(w[0], w[1]).expect("enumerated move is feasible"))
        .collect();
    Ok((actions, objective))
}

/// Outcome of a receding-horizon run: what was executed, and the cost
/// decomposition evaluated against both the actual data it ran on and the
/// perturbed forecasts it planned with.
#[derive(Debug, Clone, Serialize)]
pub struct DispatchReport {
    /// Stored energy per battery after each step, `total_steps + 1` points.
    pub trajectory: Vec<f64>,
    /// Executed per-battery power per step, kW, positive discharging.
    pub executed_actions: Vec<f64>,
    /// Exported grid power per step, kW, actual data.
    pub grid_power: Vec<f64>,
    /// Degradation cost of the executed trajectory, all batteries.
    pub bess_cost: f64,
    /// Σ −price·P_G on actual data.
    pub trading_cost: f64,
    /// `bess_cost + trading_cost`.
    pub overall_cost: f64,
    /// Σ −price·(renewable − load) on actual data: the no-battery cost.
    pub baseline_cost: f64,
    pub planning_trading_cost: f64,
    pub planning_overall_cost: f64,
    pub planning_baseline_cost: f64,
}

/// Replans every step on error-injected copies of the scenario data,
/// executes each plan's first action, and advances the battery with its
/// (deterministic) dynamics. Near the end of the run the lookahead shrinks
/// so that no plan reaches past `total_steps`.
pub fn receding_horizon_run(
    scenario: &DispatchScenario,
    e0: f64,
    total_steps: usize,
    error_spec: &ForecastErrorSpec,
) -> Result<DispatchReport> {
    if total_steps < 1 {
        return Err(Error::invalid("total_steps", "must be ≥ 1"));
    }
    if total_steps > scenario.len() {
        return Err(Error::invalid(
            "total_steps",
            format!("{total_steps} exceeds data length {}", scenario.len()),
        ));
    }
    let forecast = DispatchScenario {
        renewable: scenario.renewable.inject_forecast_error(error_spec),
        load: scenario.load.inject_forecast_error(&ForecastErrorSpec {
            seed: error_spec.seed.wrapping_add(1),
            ..*error_spec
        }),
        price: scenario.price.inject_forecast_error(&ForecastErrorSpec {
            seed: error_spec.seed.wrapping_add(2),
            ..*error_spec
        }),
        ..scenario.clone()
    };

    let n_f = f64::from(scenario.battery.n_parallel);
    let mut e = e0;
    let mut trajectory = vec![e0];
    let mut executed = Vec::with_capacity(total_steps);
    // Executed actions are exact lattice hops, so any excursion past the
    // energy box is floating-point drift; snap it back rather than letting
    // the next replan reject a state that is inside the box by construction.
    let b = &scenario.battery;
    let snap_tol = 1e-9 * b.e_max.max(1.0);
    for s in 0..total_steps {
        let lookahead = scenario.horizon_steps.min(total_steps - s);
        let sub = forecast.sub_scenario(s, lookahead)?;
        let (actions, _, _) = solve_horizon(&sub, e, 0)?;
        let p = actions[0];
        e = step_battery(e, p, b)?;
        if e < b.e_min && e >= b.e_min - snap_tol {
            e = b.e_min;
        } else if e > b.e_cap_max && e <= b.e_cap_max + snap_tol {
            e = b.e_cap_max;
        }
        executed.push(p);
        trajectory.push(e);
    }

    let bess_cost = n_f
        * count_half_cycles(&trajectory, scenario.battery.e_max)
            .iter()
            .map(|&d| half_cycle_cost(d, &scenario.cycle).expect("executed DOD valid"))
            .sum::<f64>();
    let mut grid_power = Vec::with_capacity(total_steps);
    let (mut trading, mut baseline) = (0.0, 0.0);
    let (mut plan_trading, mut plan_baseline) = (0.0, 0.0);
    for s in 0..total_steps {
        let p_g = scenario.net_kw(s) + n_f * executed[s];
        grid_power.push(p_g);
        trading += scenario.trade_cost(s, p_g);
        baseline += scenario.trade_cost(s, scenario.net_kw(s));
        plan_trading += forecast.trade_cost(s, forecast.net_kw(s) + n_f * executed[s]);
        plan_baseline += forecast.trade_cost(s, forecast.net_kw(s));
    }
    Ok(DispatchReport {
        trajectory,
        executed_actions: executed,
        grid_power,
        bess_cost,
        trading_cost: trading,
        overall_cost: bess_cost + trading,
        baseline_cost: baseline,
        planning_trading_cost: plan_trading,
        planning_overall_cost: bess_cost + plan_trading,
        planning_baseline_cost: plan_baseline,
    })
}
