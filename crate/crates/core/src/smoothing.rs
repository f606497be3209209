//! Two-stage wind-power smoothing. Stage I retunes the TCL population's
//! setpoint schedule so the loads absorb as much of the wind fluctuation as
//! the comfort band allows: a convex box-constrained quadratic program
//! solved by projected gradient. Stage II dispatches the battery so the
//! power handed to the grid respects ramp-rate limits at minimum battery
//! operating cost: an exact DP over the energy lattice and the previous
//! dispatch level.
//!
//! This strategy works in the MW/MWh frame: wind series are converted to
//! MW and the battery spec is read in MW and MWh. [`smooth_setpoints_reference`]
//! and [`enumerate_smooth_bess`] re-solve desk-scale instances with
//! independent methods for verification.

use serde::Serialize;

use crate::battery::BatterySpec;
use crate::error::Error;
use crate::series::{TimeSeries, Unit};
use crate::tcl::TclParams;
use crate::Result;

/// Tuning for both smoothing stages.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingParams {
    /// Battery operating price: applied to both energy moved and energy
    /// held, per MWh.
    pub gamma_b: f64,
    /// Ramp-rate box for the dispatched power, MW per stage.
    pub rr_min: f64,
    pub rr_max: f64,
    /// Comfort band for the setpoint schedule, °C.
    pub band_low: f64,
    pub band_high: f64,
    /// Stage-I stop threshold on the projected-gradient residual.
    pub qp_tolerance: f64,
    pub qp_max_iters: usize,
    /// Stage-II battery-energy lattice resolution.
    pub grid_points: usize,
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_b >= 0.0) {
            return Err(Error::invalid("gamma_b", "must be ≥ 0"));
        }
        if !(self.rr_min <= 0.0 && 0.0 <= self.rr_max) {
            return Err(Error::invalid(
                "ramp",
                "rr_min..rr_max must straddle zero (a flat dispatch is always legal)",
            ));
        }
        if !(self.band_low < self.band_high) {
            return Err(Error::invalid("band", "band_low must be below band_high"));
        }
        if !(self.qp_tolerance > 0.0) {
            return Err(Error::invalid("qp_tolerance", "must be positive"));
        }
        if self.qp_max_iters < 1 {
            return Err(Error::invalid("qp_max_iters", "must be ≥ 1"));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("grid_points", "must be ≥ 2"));
        }
        Ok(())
    }
}

/// Stage-I output: the setpoint schedule and the wind power net of TCL
/// consumption it induces.
#[derive(Debug, Clone, Serialize)]
pub struct StageOnePlan {
    /// Setpoints per stage, °C, inside the comfort band.
    pub setpoints: Vec<f64>,
    /// Wind power net of TCL consumption, MW.
    pub pw_tcl: Vec<f64>,
    /// Sum of squared stage-to-stage changes of `pw_tcl`.
    pub objective: f64,
    /// Projected-gradient iterations used.
    pub iterations: usize,
}

/// Inputs shared by the Stage-I solver and its reference counterpart:
/// `offset[t] = wind − κ·t_out` so that `pw_tcl = offset + κ·setpoint`.
struct StageOneProblem {
    offset: Vec<f64>,
    kappa: f64,
    lo: f64,
    hi: f64,
}

impl StageOneProblem {
    fn build(
        wind: &TimeSeries,
        t_out: &TimeSeries,
        tcl: &TclParams,
        sm: &SmoothingParams,
        n: usize,
    ) -> Result<StageOneProblem> {
        tcl.validate()?;
        sm.validate()?;
        if n < 2 {
            return Err(Error::invalid("n", "horizon must be ≥ 2"));
        }
        if wind.len() < n || t_out.len() < n {
            return Err(Error::invalid("series", "forecasts shorter than the horizon"));
        }
        if t_out.unit() != Unit::Celsius {
            return Err(Error::invalid("t_out", "must be a celsius series"));
        }
        let wind = wind.convert(Unit::Mw)?;
        let kappa = f64::from(tcl.n_units) / tcl.beta;
        let offset = (0..n)
            .map(|t| wind.values()[t] - kappa * t_out.values()[t])
            .collect();
        Ok(StageOneProblem {
            offset,
            kappa,
            lo: sm.band_low,
            hi: sm.band_high,
        })
    }

    fn n(&self) -> usize {
        self.offset.len()
    }

    fn pw_tcl(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.offset)
            .map(|(&yi, &ci)| ci + self.kappa * yi)
            .collect()
    }

    fn objective(&self, y: &[f64]) -> f64 {
        let p = self.pw_tcl(y);
        p.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum()
    }

    /// Gradient of the objective with respect to the setpoints.
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n();
        let p = self.pw_tcl(y);
        let r: Vec<f64> = p.windows(2).map(|w| w[1] - w[0]).collect();
        (0..n)
            .map(|s| {
                let before = if s > 0 { r[s - 1] } else { 0.0 };
                let after = if s < n - 1 { r[s] } else { 0.0 };
                2.0 * self.kappa * (before - after)
            })
            .collect()
    }
}

/// Fluctuation objective of an explicit setpoint schedule: the sum of
/// squared stage-to-stage changes of wind power net of TCL consumption.
/// Useful for comparing schedules (for example against a constant one).
pub fn fluctuation_objective(
    wind: &TimeSeries,
    t_out: &TimeSeries,
    tcl: &TclParams,
    sm: &SmoothingParams,
    setpoints: &[f64],
) -> Result<f64> {
    let problem = StageOneProblem::build(wind, t_out, tcl, sm, setpoints.len())?;
    Ok(problem.objective(setpoints))
}

/// Stage I: chooses the setpoint schedule inside the comfort band that
/// minimizes the fluctuation of wind power net of TCL consumption.
///
/// Projected gradient with fixed step `1/L`, where `L = 8κ²` bounds the
/// largest Hessian eigenvalue (`κ = n/β` is the TCL lever in MW/°C and the
/// squared-difference form has spectral norm at most 4). Stops when the
/// unit-step projected-gradient residual `‖y − Π(y − ∇f(y))‖₂` falls below
/// `qp_tolerance`; errors with [`Error::Numerical`] if `qp_max_iters` pass
/// first.
pub fn smooth_setpoints(
    wind: &TimeSeries,
    t_out: &TimeSeries,
    tcl: &TclParams,
    sm: &SmoothingParams,
    n: usize,
) -> Result<StageOnePlan> {
    let problem = StageOneProblem::build(wind, t_out, tcl, sm, n)?;
    let step = 1.0 / (8.0 * problem.kappa * problem.kappa);
    let mid = 0.5 * (problem.lo + problem.hi);
    let mut y = vec![mid; n];
    let mut iterations = 0;
    loop {
        let grad = problem.gradient(&y);
        let residual: f64 = y
            .iter()
            .zip(&grad)
            .map(|(&yi, &gi)| {
                let proj = (yi - gi).clamp(problem.lo, problem.hi);
                (yi - proj) * (yi - proj)
            })
            .sum::<f64>()
            .sqrt();
        if residual < sm.qp_tolerance {
            break;
        }
        if iterations >= sm.qp_max_iters {
            return Err(Error::Numerical(format!(
                "setpoint QP did not converge in {} iterations (residual {residual})",
                sm.qp_max_iters
            )));
        }
        for (yi, gi) in y.iter_mut().zip(&grad) {
            *yi = (*yi - step * gi).clamp(problem.lo, problem.hi);
        }
        iterations += 1;
    }
    let pw_tcl = problem.pw_tcl(&y);
    let objective = problem.objective(&y);
    Ok(StageOnePlan {
        setpoints: y,
        pw_tcl,
        objective,
        iterations,
    })
}

/// Solves `a·x = b` in place by Gaussian elimination with partial
/// pivoting; `a` is row-major `n×n`. The reference solver only ever deals
/// with tiny positive-definite blocks.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .unwrap();
        if a[pivot * n + col].abs() < 1e-12 {
            return Err(Error::Numerical("singular reduced system".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Bound {
    Lower,
    Upper,
}

/// Stage-I reference solver: a textbook primal active-set method for the
/// same box QP, for desk-scale verification of [`smooth_setpoints`].
/// Returns the setpoint schedule and its objective.
pub fn smooth_setpoints_reference(
    wind: &TimeSeries,
    t_out: &TimeSeries,
    tcl: &TclParams,
    sm: &SmoothingParams,
    n: usize,
) -> Result<(Vec<f64>, f64)> {
    let problem = StageOneProblem::build(wind, t_out, tcl, sm, n)?;
    let (lo, hi, kappa) = (problem.lo, problem.hi, problem.kappa);

    // Quadratic form f(y) = ½yᵀQy + gᵀy + const with Q = 2κ²DᵀD and
    // g = 2κDᵀΔc, D the first-difference operator.
    let dc: Vec<f64> = problem.offset.windows(2).map(|w| w[1] - w[0]).collect();
    let mut q = vec![0.0_f64; n * n];
    for t in 0..n - 1 {
        q[t * n + t] += 2.0 * kappa * kappa;
        q[(t + 1) * n + t + 1] += 2.0 * kappa * kappa;
        q[t * n + t + 1] -= 2.0 * kappa * kappa;
        q[(t + 1) * n + t] -= 2.0 * kappa * kappa;
    }
    let g: Vec<f64> = (0..n)
        .map(|s| {
            let before = if s > 0 { dc[s - 1] } else { 0.0 };
            let after = if s < n - 1 { dc[s] } else { 0.0 };
            2.0 * kappa * (before - after)
        })
        .collect();

    let mid = 0.5 * (lo + hi);
    let mut y = vec![mid; n];
    let mut active: Vec<Option<Bound>> = vec![None; n];
    for _ in 0..10_000 {
        let free: Vec<usize> = (0..n).filter(|&i| active[i].is_none()).collect();
        // Minimizer of the subproblem with active variables pinned.
        let mut yhat = y.clone();
        if free.len() == n {
            // Unconstrained: any y with κ·Dy = −Δc zeroes the objective.
            // Pick the representative closest to the current iterate.
            let mut base = vec![0.0_f64; n];
            for t in 0..n - 1 {
                base[t + 1] = base[t] - dc[t] / kappa;
            }
            let shift: f64 =
                y.iter().zip(&base).map(|(&yi, &bi)| yi - bi).sum::<f64>() / n as f64;
            for (v, b) in yhat.iter_mut().zip(&base) {
                *v = b + shift;
            }
        } else if !free.is_empty() {
            let m = free.len();
            let mut a = vec![0.0_f64; m * m];
            let mut rhs = vec![0.0_f64; m];
            for (r, &i) in free.iter().enumerate() {
                let mut acc = g[i];
                for j in 0..n {
                    if active[j].is_some() {
                        acc += q[i * n + j] * y[j];
                    }
                }
                rhs[r] = -acc;
                for (c, &j) in free.iter().enumerate() {
                    a[r * m + c] = q[i * n + j];
                }
            }
            solve_dense(&mut a, &mut rhs, m)?;
            for (r, &i) in free.iter().enumerate() {
                yhat[i] = rhs[r];
            }
        }

        let step_norm = y
            .iter()
            .zip(&yhat)
            .map(|(&a, &b)| (b - a).abs())
            .fold(0.0_f64, f64::max);
        if step_norm <= 1e-11 {
            // Candidate KKT point: check multiplier signs at the bounds.
            let grad: Vec<f64> = (0..n)
                .map(|i| g[i] + (0..n).map(|j| q[i * n + j] * y[j]).sum::<f64>())
                .collect();
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                let dual = match active[i] {
                    Some(Bound::Lower) => grad[i],
                    Some(Bound::Upper) => -grad[i],
                    None => continue,
                };
                if dual < -1e-9 && worst.is_none_or(|(_, w)| dual < w) {
                    worst = Some((i, dual));
                }
            }
            match worst {
                Some((i, _)) => {
                    active[i] = None;
                    continue;
                }
                None => return Ok((y.clone(), problem.objective(&y))),
            }
        }

        // Walk toward the subproblem minimizer until a bound blocks.
        let mut alpha = 1.0_f64;
        let mut blocking: Option<(usize, Bound)> = None;
        for &i in &free {
            let p = yhat[i] - y[i];
            let (limit, side) = if p > 1e-14 {
                ((hi - y[i]) / p, Bound::Upper)
            } else if p < -1e-14 {
                ((lo - y[i]) / p, Bound::Lower)
            } else {
                continue;
            };
            if limit < alpha {
                alpha = limit;
                blocking = Some((i, side));
            }
        }
        for &i in &free {
            y[i] += alpha * (yhat[i] - y[i]);
        }
        if let Some((i, side)) = blocking {
            y[i] = match side {
                Bound::Lower => lo,
                Bound::Upper => hi,
            };
            active[i] = Some(side);
        }
    }
    Err(Error::Numerical(
        "active-set reference failed to converge".into(),
    ))
}

/// Stage-II output.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothedDispatch {
    /// Battery power per stage, MW, positive discharging.
    pub p_b: Vec<f64>,
    /// Power dispatched to the grid per stage boundary: entry `t` is the
    /// dispatch over interval `t+1`, determined by the stage-`t` action.
    pub p_g: Vec<f64>,
    /// Stored energy per stage boundary, MWh (`n + 1` points).
    pub trajectory: Vec<f64>,
    /// Total battery operating cost.
    pub cost: f64,
}

/// Loss-adjusted battery power that moves the store between two lattice
/// points `hops` apart (positive `hops` charges).
fn hop_power(hops: i64, dx: f64, bess: &BatterySpec) -> f64 {
    let diff = -(hops as f64) * dx;
    if diff > 0.0 {
        diff / (bess.delta_t * (1.0 + bess.d_loss))
    } else if diff < 0.0 {
        diff / (bess.delta_t * (1.0 - bess.d_loss))
    } else {
        0.0
    }
}

struct BessLattice {
    grid: Vec<f64>,
    /// Feasible hop offsets (symmetric range) with their powers.
    hops: Vec<(i64, f64)>,
}

impl BessLattice {
    fn build(bess: &BatterySpec, g: usize) -> BessLattice {
        let dx = (bess.e_cap_max - bess.e_min) / (g - 1) as f64;
        let grid = (0..g).map(|i| bess.e_min + dx * i as f64).collect();
        let hops = (-(g as i64 - 1)..=(g as i64 - 1))
            .filter_map(|h| {
                let p = hop_power(h, dx, bess);
                (p >= -bess.p_charge_max && p <= bess.p_discharge_max).then_some((h, p))
            })
            .collect();
        BessLattice { grid, hops }
    }

    fn nearest(&self, x: f64) -> usize {
        let dx = self.grid[1] - self.grid[0];
        let idx = ((x - self.grid[0]) / dx).round();
        (idx.max(0.0) as usize).min(self.grid.len() - 1)
    }
}

fn check_smooth_inputs(
    pw_tcl: &TimeSeries,
    sm: &SmoothingParams,
    bess: &BatterySpec,
    e0: f64,
    pg_prev: f64,
) -> Result<()> {
    sm.validate()?;
    bess.validate()?;
    if pw_tcl.unit() != Unit::Mw {
        return Err(Error::invalid("pw_tcl", "must be an MW series"));
    }
    if (pw_tcl.step_hours() - bess.delta_t).abs() > 1e-9 {
        return Err(Error::invalid(
            "pw_tcl",
            "series step must match the battery step length",
        ));
    }
    if !(e0 >= bess.e_min && e0 <= bess.e_cap_max) {
        return Err(Error::Infeasible(format!(
            "initial energy {e0} outside [{}, {}]",
            bess.e_min, bess.e_cap_max
        )));
    }
    if !(pg_prev >= 0.0) {
        return Err(Error::invalid("pg_prev", "previous dispatch must be ≥ 0"));
    }
    Ok(())
}

/// Stage II: dispatches the battery so the grid power tracks the smoothed
/// wind while every stage-to-stage change stays inside the ramp box and
/// the dispatch never goes negative. The grid power of interval `t+1` is
/// the stage-`t` battery power plus the stage-`t` smoothed wind; `pg_prev`
/// anchors the first ramp. Exact DP over (energy lattice point, previous
/// action); infeasibility is reported, never clipped.
pub fn smooth_bess(
    pw_tcl: &TimeSeries,
    sm: &SmoothingParams,
    bess: &BatterySpec,
    e0: f64,
    pg_prev: f64,
) -> Result<SmoothedDispatch> {
    check_smooth_inputs(pw_tcl, sm, bess, e0, pg_prev)?;
    let n = pw_tcl.len();
    let pw = pw_tcl.values();
    let lattice = BessLattice::build(bess, sm.grid_points);
    let g = lattice.grid.len();
    let nh = lattice.hops.len();
    let gamma = sm.gamma_b;

    // value[t][i][h]: cost-to-go from stage t at lattice point i, having
    // arrived by hop index h (which fixes the dispatch of interval t).
    let inf = f64::INFINITY;
    let mut value = vec![vec![vec![inf; nh]; g]; n + 1];
    let mut choice = vec![vec![vec![usize::MAX; nh]; g]; n + 1];
    for row in value[n].iter_mut() {
        row.fill(0.0);
    }
    for t in (1..n).rev() {
        for i in 0..g {
            for (h_prev, &(_, p_prev)) in lattice.hops.iter().enumerate() {
                let pg_t = p_prev + pw[t - 1];
                let mut best = inf;
                let mut best_idx = usize::MAX;
                let mut best_power = 0.0_f64;
                for (h, &(off, p_b)) in lattice.hops.iter().enumerate() {
                    let j = i as i64 + off;
                    if j < 0 || j >= g as i64 {
                        continue;
                    }
                    let pg_next = p_b + pw[t];
                    if pg_next < -1e-9 {
                        continue;
                    }
                    let ramp = pg_next - pg_t;
                    if ramp < sm.rr_min - 1e-9 || ramp > sm.rr_max + 1e-9 {
                        continue;
                    }
                    let cost = gamma * ((p_b * bess.delta_t).abs() + lattice.grid[i])
                        + value[t + 1][j as usize][h];
                    let better = match cost.partial_cmp(&best) {
                        Some(std::cmp::Ordering::Less) => true,
                        Some(std::cmp::Ordering::Greater) => false,
                        _ => {
                            let (pa, pb) = (p_b.abs(), best_power.abs());
                            if pa != pb {
                                pa < pb
                            } else {
                                p_b > best_power
                            }
                        }
                    };
                    if better {
                        best = cost;
                        best_idx = h;
                        best_power = p_b;
                    }
                }
                value[t][i][h_prev] = best;
                choice[t][i][h_prev] = best_idx;
            }
        }
    }

    // Stage 0: the previous dispatch is a given constant, not a hop.
    let i0 = lattice.nearest(e0);
    let mut best0 = inf;
    let mut first = usize::MAX;
    let mut best_power = 0.0_f64;
    for (h, &(off, p_b)) in lattice.hops.iter().enumerate() {
        let j = i0 as i64 + off;
        if j < 0 || j >= g as i64 {
            continue;
        }
        let pg_next = p_b + pw[0];
        if pg_next < -1e-9 {
            continue;
        }
        let ramp = pg_next - pg_prev;
        if ramp < sm.rr_min - 1e-9 || ramp > sm.rr_max + 1e-9 {
            continue;
        }
        let tail = if n == 1 {
            0.0
        } else {
            value[1][j as usize][h]
        };
        let cost = gamma * ((p_b * bess.delta_t).abs() + lattice.grid[i0]) + tail;
        let better = match cost.partial_cmp(&best0) {
            Some(std::cmp::Ordering::Less) => true,
            Some(std::cmp::Ordering::Greater) => false,
            _ => {
                let (pa, pb) = (p_b.abs(), best_power.abs());
                if pa != pb {
                    pa < pb
                } else {
                    p_b > best_power
                }
            }
        };
        if better {
            best0 = cost;
            first = h;
            best_power = p_b;
        }
    }
    if !best0.is_finite() {
        return Err(Error::Infeasible(
            "ramp demand exceeds battery capability on every trajectory".into(),
        ));
    }

    let mut p_b = Vec::with_capacity(n);
    let mut p_g = Vec::with_capacity(n);
    let mut trajectory = vec![lattice.grid[i0]];
    let mut i = i0;
    let mut h = first;
    for t in 0..n {
        let (off, power) = lattice.hops[h];
        p_b.push(power);
        p_g.push(power + pw[t]);
        i = (i as i64 + off) as usize;
        trajectory.push(lattice.grid[i]);
        if t + 1 < n {
            h = choice[t + 1][i][h];
            if h == usize::MAX {
                return Err(Error::Infeasible(format!(
                    "ramp demand exceeds battery capability at stage {}",
                    t + 1
                )));
            }
        }
    }
    Ok(SmoothedDispatch {
        p_b,
        p_g,
        trajectory,
        cost: best0,
    })
}

/// Brute-force Stage-II reference: enumerates every hop sequence under the
/// same constraints. Exponential; desk-scale only.
pub fn enumerate_smooth_bess(
    pw_tcl: &TimeSeries,
    sm: &SmoothingParams,
    bess: &BatterySpec,
    e0: f64,
    pg_prev: f64,
) -> Result<f64> {
    check_smooth_inputs(pw_tcl, sm, bess, e0, pg_prev)?;
    let pw = pw_tcl.values();
    let lattice = BessLattice::build(bess, sm.grid_points);
    let g = lattice.grid.len() as i64;

    struct Ctx<'a> {
        pw: &'a [f64],
        lattice: &'a BessLattice,
        sm: &'a SmoothingParams,
        gamma: f64,
        delta_t: f64,
        g: i64,
        best: f64,
    }

    fn dfs(ctx: &mut Ctx, t: usize, i: i64, pg: f64, acc: f64) {
        if acc >= ctx.best {
            return;
        }
        if t == ctx.pw.len() {
            ctx.best = acc;
            return;
        }
        for &(off, p_b) in &ctx.lattice.hops {
            let j = i + off;
            if j < 0 || j >= ctx.g {
                continue;
            }
            let pg_next = p_b + ctx.pw[t];
            if pg_next < -1e-9 {
                continue;
            }
            let ramp = pg_next - pg;
            if ramp < ctx.sm.rr_min - 1e-9 || ramp > ctx.sm.rr_max + 1e-9 {
                continue;
            }
            let cost = ctx.gamma * ((p_b * ctx.delta_t).abs() + ctx.lattice.grid[i as usize]);
            dfs(ctx, t + 1, j, pg_next, acc + cost);
        }
    }

    let mut ctx = Ctx {
        pw,
        lattice: &lattice,
        sm,
        gamma: sm.gamma_b,
        delta_t: bess.delta_t,
        g,
        best: f64::INFINITY,
    };
    let start = lattice.nearest(e0) as i64;
    dfs(&mut ctx, 0, start, pg_prev, 0.0);
    if ctx.best.is_finite() {
        Ok(ctx.best)
    } else {
        Err(Error::Infeasible(
            "ramp demand exceeds battery capability".into(),
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
            n_units: 320,
            band_low: 20.0,
            band_high: 25.0,
            switch_delay_substeps: 2,
        }
    }

    fn table_params() -> SmoothingParams {
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

    fn table_bess() -> BatterySpec {
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

    fn mw(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(Unit::Mw, 10, values).unwrap()
    }

    fn celsius(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(Unit::Celsius, 10, values).unwrap()
    }

    #[test]
    fn constant_wind_keeps_a_constant_setpoint() {
        let wind = mw(vec![80.0; 6]);
        let t_out = celsius(vec![30.0; 6]);
        let plan = smooth_setpoints(&wind, &t_out, &table_tcl(), &table_params(), 6).unwrap();
        assert!(plan.objective.abs() < 1e-12);
        for &s in &plan.setpoints {
            assert!((s - plan.setpoints[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn gentle_ramp_is_fully_absorbed_by_the_band() {
        let n = 8;
        let wind = mw((0..n).map(|t| 50.0 + 0.6 * t as f64).collect());
        let t_out = celsius(vec![30.0; n]);
        let sm = table_params();
        let tcl = table_tcl();
        let plan = smooth_setpoints(&wind, &t_out, &tcl, &sm, n).unwrap();
        assert!(plan.objective < 1e-8, "objective {}", plan.objective);
        let unregulated: f64 = (0..n - 1).map(|_| 0.6 * 0.6).sum();
        assert!(plan.objective < unregulated);
        for &s in &plan.setpoints {
            assert!(s >= sm.band_low - 1e-12 && s <= sm.band_high + 1e-12);
        }
    }

    #[test]
    fn solver_matches_active_set_reference() {
        let tcl = table_tcl();
        let sm = table_params();
        for seed in 0..8_u64 {
            let mut rng = crate::rng::Rng64::new(seed);
            let n = 5 + (rng.next_u64() % 8) as usize;
            let wind = mw((0..n)
                .map(|_| 40.0 + 60.0 * rng.next_f64())
                .collect::<Vec<_>>());
            let t_out = celsius((0..n)
                .map(|_| 27.0 + 8.0 * rng.next_f64())
                .collect::<Vec<_>>());
            let plan = smooth_setpoints(&wind, &t_out, &tcl, &sm, n).unwrap();
            let (_, ref_obj) = smooth_setpoints_reference(&wind, &t_out, &tcl, &sm, n).unwrap();
            assert!(
                (plan.objective - ref_obj).abs() <= 1e-6 * ref_obj.abs().max(1.0),
                "seed {seed}: pgd {} vs active-set {ref_obj}",
                plan.objective
            );
        }
    }

    #[test]
    fn tuned_setpoints_never_lose_to_the_constant_midpoint() {
        let tcl = table_tcl();
        let sm = table_params();
        for seed in 20..26_u64 {
            let mut rng = crate::rng::Rng64::new(seed);
            let n = 6;
            let wind = mw((0..n)
                .map(|_| 40.0 + 60.0 * rng.next_f64())
                .collect::<Vec<_>>());
            let t_out = celsius((0..n)
                .map(|_| 27.0 + 8.0 * rng.next_f64())
                .collect::<Vec<_>>());
            let plan = smooth_setpoints(&wind, &t_out, &tcl, &sm, n).unwrap();
            let mid = vec![0.5 * (sm.band_low + sm.band_high); n];
            let baseline = fluctuation_objective(&wind, &t_out, &tcl, &sm, &mid).unwrap();
            assert!(plan.objective <= baseline + 1e-9);
        }
    }

    #[test]
    fn floor_start_with_flat_wind_keeps_the_battery_idle() {
        let bess = table_bess();
        let sm = table_params();
        let pw = mw(vec![85.0; 6]);
        let result = smooth_bess(&pw, &sm, &bess, bess.e_min, 85.0).unwrap();
        assert!(result.p_b.iter().all(|&p| p == 0.0));
        assert!(result.p_g.iter().all(|&p| (p - 85.0).abs() < 1e-12));
        let expected = sm.gamma_b * 6.0 * bess.e_min;
        assert!((result.cost - expected).abs() < 1e-9);
    }

    #[test]
    fn holding_cost_drains_an_idle_battery_toward_the_floor() {
        // With flat wind and a mid-range start, shedding stored energy is
        // cheaper than holding it, within ramp limits.
        let bess = table_bess();
        let sm = table_params();
        let pw = mw(vec![85.0; 6]);
        let result = smooth_bess(&pw, &sm, &bess, 120.0, 85.0).unwrap();
        assert!(result.trajectory.last().unwrap() < &120.0);
        assert!(result.p_b.iter().any(|&p| p > 0.0));
    }

    #[test]
    fn step_drop_is_spread_across_ramp_limited_stages() {
        let bess = table_bess();
        let sm = table_params();
        let pw = mw(vec![90.0, 90.0, 90.0, 60.0, 60.0, 60.0]);
        let result = smooth_bess(&pw, &sm, &bess, 120.0, 90.0).unwrap();
        for (t, w) in result.p_g.windows(2).enumerate() {
            let ramp = w[1] - w[0];
            assert!(
                ramp >= sm.rr_min - 1e-9 && ramp <= sm.rr_max + 1e-9,
                "stage {t}: ramp {ramp}"
            );
        }
        let first_ramp = result.p_g[0] - 90.0;
        assert!(first_ramp.abs() <= sm.rr_max + 1e-9);
        // The 30 MW drop cannot be taken in one step; the battery covers it.
        assert!(result.p_b.iter().any(|&p| p > 0.0));
    }

    #[test]
    fn infeasible_ramp_is_reported_not_clipped() {
        let bess = table_bess();
        let sm = table_params();
        let pw = mw(vec![120.0, 120.0, 10.0, 10.0]);
        let err = smooth_bess(&pw, &sm, &bess, 120.0, 120.0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "got {err:?}");
    }

    #[test]
    fn dp_matches_enumeration_on_small_instances() {
        let mut sm = table_params();
        sm.grid_points = 25;
        sm.rr_min = -40.0;
        sm.rr_max = 40.0;
        let mut bess = table_bess();
        bess.p_charge_max = 80.0;
        bess.p_discharge_max = 80.0;
        for seed in 0..6_u64 {
            let mut rng = crate::rng::Rng64::new(seed);
            let n = 3 + (rng.next_u64() % 3) as usize;
            let pw = mw((0..n)
                .map(|_| 60.0 + 50.0 * rng.next_f64())
                .collect::<Vec<_>>());
            let e0 = 72.0 + 96.0 * rng.next_f64();
            let pg_prev = 60.0 + 50.0 * rng.next_f64();
            let dp = smooth_bess(&pw, &sm, &bess, e0, pg_prev);
            let brute = enumerate_smooth_bess(&pw, &sm, &bess, e0, pg_prev);
            match (dp, brute) {
                (Ok(dp), Ok(brute)) => assert!(
                    (dp.cost - brute).abs() <= 1e-9 * brute.abs().max(1.0),
                    "seed {seed}: dp {} vs enumeration {brute}",
                    dp.cost
                ),
                (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => {}
                (dp, brute) => panic!("seed {seed}: dp {dp:?} vs oracle {brute:?}"),
            }
        }
    }
}
