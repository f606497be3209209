//! Battery dynamics and the two degradation cost models.
//!
//! Two independent aging economics live here:
//!
//! * a half-cycle model: each monotone excursion of the stored energy is a
//!   half cycle whose depth determines the share of replacement cost it
//!   consumes ([`half_cycle_cost`], [`count_half_cycles`],
//!   [`incremental_loss_cost`]);
//! * an Ah-throughput model: discharged charge, weighted by depth- and
//!   current-dependent derating fits, consumes a rated lifetime
//!   ([`lifetime_hours`], [`throughput_operational_cost`]).
//!
//! [`count_half_cycles`] is the offline oracle for the half-cycle model: the
//! per-step recursive cost must telescope to exactly the sum it produces.

use crate::error::Error;
use crate::Result;

/// Physical battery description shared by the dispatch planners.
///
/// Energy and power fields use one consistent unit pair; the bundled
/// scenarios work in kW and kWh. `e_max` is the rated capacity that
/// normalizes depth of discharge, while `e_min..e_cap_max` is the operating
/// window the planners are allowed to use.
#[derive(Debug, Clone, PartialEq)]
pub struct BatterySpec {
    pub e_max: f64,
    pub e_min: f64,
    pub e_cap_max: f64,
    /// Maximum charging power, stored as a positive magnitude.
    pub p_charge_max: f64,
    pub p_discharge_max: f64,
    /// Conversion loss fraction: every transfer destroys `d_loss·|P·Δt|`.
    pub d_loss: f64,
    /// Step length in hours.
    pub delta_t: f64,
    /// Identical units operated in lockstep; state is tracked per unit.
    pub n_parallel: u32,
}

impl BatterySpec {
    pub fn new(
        e_max: f64,
        e_min: f64,
        e_cap_max: f64,
        p_charge_max: f64,
        p_discharge_max: f64,
        d_loss: f64,
        delta_t: f64,
        n_parallel: u32,
    ) -> Result<BatterySpec> {
        let spec = BatterySpec {
            e_max,
            e_min,
            e_cap_max,
            p_charge_max,
            p_discharge_max,
            d_loss,
            delta_t,
            n_parallel,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_min >= 0.0 && self.e_min < self.e_cap_max && self.e_cap_max <= self.e_max) {
            return Err(Error::invalid(
                "BatterySpec",
                format!(
                    "need 0 ≤ e_min < e_cap_max ≤ e_max, got {} / {} / {}",
                    self.e_min, self.e_cap_max, self.e_max
                ),
            ));
        }
        if !(self.p_charge_max > 0.0) || !(self.p_discharge_max > 0.0) {
            return Err(Error::invalid("BatterySpec", "power limits must be positive"));
        }
        if !(self.d_loss > 0.0 && self.d_loss < 1.0) {
            return Err(Error::invalid("BatterySpec", "d_loss must lie in (0, 1)"));
        }
        if !(self.delta_t > 0.0) {
            return Err(Error::invalid("BatterySpec", "delta_t must be positive"));
        }
        if self.n_parallel == 0 {
            return Err(Error::invalid("BatterySpec", "n_parallel must be ≥ 1"));
        }
        Ok(())
    }
}

/// Parameters of the half-cycle replacement-cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleCostParams {
    /// Cycles to failure at 100% depth of discharge.
    pub n_fail_100: f64,
    /// Exponent relating cycle life to depth of discharge.
    pub kp: f64,
    /// Battery replacement cost.
    pub r_c: f64,
}

impl CycleCostParams {
    pub fn new(n_fail_100: f64, kp: f64, r_c: f64) -> Result<CycleCostParams> {
        if !(n_fail_100 > 0.0) {
            return Err(Error::invalid("n_fail_100", "must be positive"));
        }
        if !(kp > 0.0) {
            return Err(Error::invalid("kp", "must be positive"));
        }
        if !(r_c >= 0.0) {
            return Err(Error::invalid("r_c", "must be non-negative"));
        }
        Ok(CycleCostParams { n_fail_100, kp, r_c })
    }
}

/// Advances the stored energy by one step: positive power discharges,
/// negative power charges, and the conversion loss always drains the store.
///
/// The caller is responsible for keeping the result inside
/// `e_min..e_cap_max`.
pub fn step_battery(e: f64, p_b: f64, spec: &BatterySpec) -> Result<f64> {
    if p_b > spec.p_discharge_max || p_b < -spec.p_charge_max {
        return Err(Error::invalid(
            "p_b",
            format!(
                "{p_b} outside [-{}, {}]",
                spec.p_charge_max, spec.p_discharge_max
            ),
        ));
    }
    let transfer = p_b * spec.delta_t;
    Ok(e - transfer - spec.d_loss * transfer.abs())
}

/// Replacement cost consumed by one half cycle of depth `d_half`.
pub fn half_cycle_cost(d_half: f64, p: &CycleCostParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&d_half) {
        return Err(Error::invalid(
            "d_half",
            format!("{d_half} outside [0, 1]"),
        ));
    }
    Ok(0.5 * d_half.powf(p.kp) / p.n_fail_100 * p.r_c)
}

/// Splits an energy trajectory at direction changes and returns the depth of
/// discharge of each monotone segment, in order. Zero-change steps extend
/// the current segment.
///
/// This is the offline half-cycle oracle: summing [`half_cycle_cost`] over
/// its output prices a whole trajectory.
///
/// # Panics
///
/// Panics if the trajectory is empty or `e_max` is not positive.
pub fn count_half_cycles(trajectory: &[f64], e_max: f64) -> Vec<f64> {
    assert!(!trajectory.is_empty(), "trajectory must not be empty");
    assert!(e_max > 0.0, "e_max must be positive");
    let mut dods = Vec::new();
    let mut segment_start = trajectory[0];
    let mut dir = 0i8;
    for w in trajectory.windows(2) {
        let delta = w[1] - w[0];
        if delta == 0.0 {
            continue;
        }
        let step_dir = if delta > 0.0 { 1 } else { -1 };
        if dir != 0 && step_dir != dir {
            dods.push((w[0] - segment_start).abs() / e_max);
            segment_start = w[0];
        }
        dir = step_dir;
    }
    if dir != 0 {
        dods.push((trajectory[trajectory.len() - 1] - segment_start).abs() / e_max);
    }
    dods
}

/// Number of equivalent 100%-DOD cycles represented by a list of half-cycle
/// depths: Σ 0.5·d^kp.
pub fn equivalent_full_cycles(dods: &[f64], kp: f64) -> f64 {
    dods.iter()
        .map(|&d| {
            debug_assert!((0.0..=1.0).contains(&d), "DOD {d} outside [0, 1]");
            0.5 * d.powf(kp)
        })
        .sum()
}

/// Estimated battery lifetime in years, given the cycle-count frame:
/// `n_eq` equivalent 100%-DOD cycles consumed per operating cycle (for a
/// full cycle at depth `d` this is `d^kp`), `w` operating days per year and
/// `n_day` operating cycles per day.
///
/// Returns infinity when usage is zero; errors on negative arguments.
pub fn lifetime_from_cycles(n_eq: f64, w: f64, n_day: f64, p: &CycleCostParams) -> Result<f64> {
    for (name, v) in [("n_eq", n_eq), ("w", w), ("n_day", n_day)] {
        if !(v >= 0.0) {
            return Err(Error::invalid(
                "lifetime_from_cycles",
                format!("{name} must be ≥ 0, got {v}"),
            ));
        }
    }
    let burn = n_eq * w * n_day;
    if burn == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(p.n_fail_100 / burn)
}

/// Per-step share of cycle-life cost, priced against the subsequent local
/// extreme `sigma` of the energy trajectory. Summed along a trajectory with
/// `sigma` maintained by [`crate::dp::update_extreme`], these terms
/// telescope to the half-cycle total of [`count_half_cycles`].
pub fn incremental_loss_cost(
    e_k: f64,
    e_next: f64,
    sigma: f64,
    p: &CycleCostParams,
    e_max: f64,
) -> f64 {
    debug_assert!(e_max > 0.0);
    let scale = 0.5 * p.r_c / p.n_fail_100;
    let depth_now = (e_k - sigma).abs() / e_max;
    let depth_next = (e_next - sigma).abs() / e_max;
    scale * depth_now.powf(p.kp) - scale * depth_next.powf(p.kp)
}

/// Ah-throughput lifetime model: rated life plus the derating fits that
/// translate off-rated discharge events into equivalent rated throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputLifeSpec {
    /// Rated cycle life (cycles at rated depth and current).
    pub l_r: f64,
    /// Rated depth of discharge, fraction of capacity.
    pub d_r: f64,
    /// Rated capacity in ampere-hours.
    pub c_r: f64,
    /// Battery price; throughput costs are prorated shares of it.
    pub price: f64,
    /// Nominal bus voltage, for energy↔charge conversion.
    pub voltage: f64,
    /// Quartic DOD→cycle-life fit, coefficients from degree 4 down to 0.
    pub poly_coeffs: [f64; 5],
    /// Current→capacity fit `a1·exp(b1·i) + a2·exp(b2·i)`.
    pub exp_coeffs: [f64; 4],
}

impl ThroughputLifeSpec {
    pub fn new(
        l_r: f64,
        d_r: f64,
        c_r: f64,
        price: f64,
        voltage: f64,
        poly_coeffs: [f64; 5],
        exp_coeffs: [f64; 4],
    ) -> Result<ThroughputLifeSpec> {
        let spec = ThroughputLifeSpec {
            l_r,
            d_r,
            c_r,
            price,
            voltage,
            poly_coeffs,
            exp_coeffs,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_r > 0.0 && self.c_r > 0.0 && self.price > 0.0 && self.voltage > 0.0) {
            return Err(Error::invalid(
                "ThroughputLifeSpec",
                "l_r, c_r, price and voltage must be positive",
            ));
        }
        if !(self.d_r > 0.0 && self.d_r <= 1.0) {
            return Err(Error::invalid("d_r", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// The 320 V / 936 Ah lead-acid bank used by the bundled wind-dispatch
    /// scenarios, with its published derating fits.
    pub fn lead_acid_936ah() -> ThroughputLifeSpec {
        ThroughputLifeSpec {
            l_r: 1500.0,
            d_r: 1.0,
            c_r: 936.0,
            price: 44_928.0,
            voltage: 320.0,
            poly_coeffs: [17_612.0, -48_325.0, 49_771.0, -26_417.0, 8_898.0],
            exp_coeffs: [638.5, -0.038_76, 975.9, -0.003_531],
        }
    }

    /// Cycle life the fit predicts at depth of discharge `d`.
    pub fn cycle_life_at_dod(&self, d: f64) -> Result<f64> {
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::invalid(
                "dod",
                format!("{d} outside (0, 1]; the fit is not valid at zero depth"),
            ));
        }
        let v = self
            .poly_coeffs
            .iter()
            .fold(0.0, |acc, &c| acc * d + c);
        if !(v > 0.0) {
            return Err(Error::Numerical(format!(
                "cycle-life fit non-positive ({v}) at dod {d}"
            )));
        }
        Ok(v)
    }

    /// Usable capacity the fit predicts at discharge current `i` amperes.
    pub fn capacity_at_current(&self, i: f64) -> Result<f64> {
        if !(i >= 0.0) {
            return Err(Error::invalid("current", format!("{i} must be ≥ 0")));
        }
        let [a1, b1, a2, b2] = self.exp_coeffs;
        let v = a1 * (b1 * i).exp() + a2 * (b2 * i).exp();
        if !(v > 0.0) {
            return Err(Error::Numerical(format!(
                "capacity fit non-positive ({v}) at current {i}"
            )));
        }
        Ok(v)
    }

    /// Equivalent rated throughput of one event:
    /// `(L_R/L_A(dod))·(C_R/C_A(current))·ah`.
    fn adjusted_throughput(&self, ev: &DischargeEvent) -> Result<f64> {
        ev.validate()?;
        let la = self.cycle_life_at_dod(ev.dod)?;
        let ca = self.capacity_at_current(ev.current)?;
        Ok((self.l_r / la) * (self.c_r / ca) * ev.ah)
    }
}

/// One discharge action, reduced to what the throughput model needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DischargeEvent {
    /// Depth of discharge reached by the event, fraction of capacity.
    pub dod: f64,
    /// Discharge current in amperes.
    pub current: f64,
    /// Charge drawn in ampere-hours.
    pub ah: f64,
    /// Event length in hours.
    pub duration: f64,
}

impl DischargeEvent {
    fn validate(&self) -> Result<()> {
        if !(self.dod >= 0.0 && self.dod <= 1.0) {
            return Err(Error::invalid("dod", format!("{} outside [0, 1]", self.dod)));
        }
        if !(self.current >= 0.0 && self.ah >= 0.0 && self.duration >= 0.0) {
            return Err(Error::invalid(
                "DischargeEvent",
                "current, ah and duration must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Predicted battery life if the discharge pattern of `events`, observed
/// over `period_hours`, repeats forever. No events means no wear:
/// the result is unbounded (`f64::INFINITY`).
pub fn lifetime_hours(
    events: &[DischargeEvent],
    spec: &ThroughputLifeSpec,
    period_hours: f64,
) -> Result<f64> {
    if !(period_hours > 0.0) {
        return Err(Error::invalid("period_hours", "must be positive"));
    }
    let mut burden = 0.0;
    for ev in events {
        burden += spec.adjusted_throughput(ev)?;
    }
    if burden == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(spec.l_r * spec.d_r * spec.c_r / burden * period_hours)
}

/// Share of the battery price consumed by `events`: the adjusted throughput
/// divided by the rated lifetime throughput `L_R·D_R·C_R`.
pub fn throughput_operational_cost(
    events: &[DischargeEvent],
    spec: &ThroughputLifeSpec,
) -> Result<f64> {
    let mut burden = 0.0;
    for ev in events {
        burden += spec.adjusted_throughput(ev)?;
    }
    Ok(spec.price * burden / (spec.l_r * spec.d_r * spec.c_r))
}
