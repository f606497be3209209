//! Cooperative dispatch for a network of microgrids trading through a
//! central system. Each microgrid owns a dispatchable generator, a storage
//! unit and a flexible load; the central system owns a generator and a
//! storage unit and settles the residual with the upstream grid at the spot
//! price. Renewable output, demand and price evolve exogenously.
//!
//! The planner learns one linear value function per stage over
//! post-decision states (the state right after the controls apply, before
//! exogenous changes arrive) by recursive least squares, then acts greedily
//! against it: [`adp_train`] runs the forward passes, [`greedy_action`] is
//! the one-stage minimizer, [`evaluate_policy`] scores a trained policy and
//! [`myopic_baseline`] scores the same machinery with the value function
//! pinned at zero. [`enumerate_network_dispatch`] solves small instances
//! exactly for verification.
//!
//! Everything is expressed in kilowatts and kilowatt hours; the spot price
//! multiplies kilowatt flows directly, so one stage's trading cost is
//! `price x power` without a separate time factor.

use serde::Serialize;

use crate::adp::harmonic_stepsize;
use crate::error::Error;
use crate::rng::Rng64;
use crate::series::{ForecastErrorSpec, TimeSeries, Unit};
use crate::Result;

/// Slack applied to every box comparison so grid endpoints survive floating
/// point arithmetic.
const EPS: f64 = 1e-9;

/// Dispatchable generator: affine cost `a * output + b` per stage, an
/// output box and a per-stage ramp box.
#[derive(Debug, Clone, PartialEq)]
pub struct DgUnit {
    /// Cost per kW of output, per stage.
    pub a: f64,
    /// Fixed cost per stage while running.
    pub b: f64,
    /// Output window, kW. The generator never shuts down, so `p_min > 0`.
    pub p_min: f64,
    pub p_max: f64,
    /// Per-stage output change window, kW; must contain zero.
    pub ramp_min: f64,
    pub ramp_max: f64,
}

/// Storage unit: throughput and holding prices, an energy window, a power
/// rate box and a conversion loss.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageUnit {
    /// Price per kWh moved through the unit.
    pub gamma1: f64,
    /// Price per kWh held, charged every stage.
    pub gamma2: f64,
    /// Energy window, kWh.
    pub e_min: f64,
    pub e_max: f64,
    /// Power rate window, kW; positive rates discharge. Must contain zero.
    pub rate_min: f64,
    pub rate_max: f64,
    /// Fraction of every transfer lost; stored energy drops by
    /// `rate * delta + d_loss * |rate * delta|`.
    pub d_loss: f64,
}

/// Flexible load: affine running cost `a + b * power` per stage, a power
/// box and a per-stage ramp box.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexLoad {
    /// Fixed cost per stage.
    pub a: f64,
    /// Cost per kW served, per stage.
    pub b: f64,
    /// Served-power window, kW.
    pub p_min: f64,
    pub p_max: f64,
    /// Per-stage change window, kW; must contain zero.
    pub ramp_min: f64,
    pub ramp_max: f64,
}

/// One microgrid's controllable assets.
#[derive(Debug, Clone, PartialEq)]
pub struct Microgrid {
    pub dg: DgUnit,
    pub storage: StorageUnit,
    pub load: FlexLoad,
}

/// The central system's assets; it has no flexible load of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralSystem {
    pub dg: DgUnit,
    pub storage: StorageUnit,
}

/// Per-kind divisors applied to raw quantities before they enter the
/// feature vector, keeping the regression well conditioned.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScales {
    /// Divisor for stored energies, kWh.
    pub energy: f64,
    /// Divisor for powers, kW.
    pub power: f64,
    /// Divisor for the spot price.
    pub price: f64,
}

/// Where every controllable quantity starts; microgrid entries first, the
/// central system last.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    /// Stored energy per unit, kWh; length `K + 1`.
    pub storage_energy: Vec<f64>,
    /// Generator output per unit, kW; length `K + 1`.
    pub dg_output: Vec<f64>,
    /// Flexible-load power per microgrid, kW; length `K`.
    pub flex_load: Vec<f64>,
}

/// Problem description for the whole network.
///
/// With `K = microgrids.len()`, the state vector has `5K + 3` entries, the
/// control vector `3K + 2`, the exogenous vector `2K + 1` and the feature
/// vector `13K + 8`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub microgrids: Vec<Microgrid>,
    pub central: CentralSystem,
    /// Window on each microgrid's exchanged power, kW.
    pub exchange_min: f64,
    pub exchange_max: f64,
    /// Number of decision stages.
    pub horizon: usize,
    /// Stage length in hours.
    pub delta_hours: f64,
    /// Grid points per control dimension in the greedy minimizer.
    pub control_levels: usize,
    /// Harmonic stepsize numerator.
    pub stepsize_eps: f64,
    /// Harmonic stepsize exponent.
    pub stepsize_beta: f64,
    /// Recursive least squares forgetting factor, in `(0, 1]`; 1 weighs all
    /// observations equally.
    pub rls_lambda: f64,
    /// Diagonal of the initial inverse-Gram matrix; large values make the
    /// first observations dominate.
    pub rls_prior: f64,
    /// Spread of the per-iteration training samples as a fraction of each
    /// series' mean magnitude; 0 trains on the point forecast.
    pub training_noise_fraction: f64,
    pub scales: FeatureScales,
    pub initial: InitialConditions,
}

impl DgUnit {
    fn validate(&self, who: &str) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(Error::invalid(
                "dg",
                format!("{who}: cost coefficients must be non-negative"),
            ));
        }
        if !(self.p_min > 0.0 && self.p_min <= self.p_max) {
            return Err(Error::invalid(
                "dg",
                format!("{who}: need 0 < p_min <= p_max"),
            ));
        }
        if !(self.ramp_min <= 0.0 && self.ramp_max >= 0.0) {
            return Err(Error::invalid(
                "dg",
                format!("{who}: ramp window must contain zero"),
            ));
        }
        Ok(())
    }
}

impl StorageUnit {
    fn validate(&self, who: &str) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return Err(Error::invalid(
                "storage",
                format!("{who}: prices must be non-negative"),
            ));
        }
        if !(self.e_min >= 0.0 && self.e_min <= self.e_max) {
            return Err(Error::invalid(
                "storage",
                format!("{who}: need 0 <= e_min <= e_max"),
            ));
        }
        if !(self.rate_min <= 0.0 && self.rate_max >= 0.0) {
            return Err(Error::invalid(
                "storage",
                format!("{who}: rate window must contain zero"),
            ));
        }
        if !(self.d_loss >= 0.0 && self.d_loss < 1.0) {
            return Err(Error::invalid(
                "storage",
                format!("{who}: d_loss must lie in [0, 1)"),
            ));
        }
        Ok(())
    }

    /// Stored energy after running at `rate` for `delta` hours.
    fn next_energy(&self, e: f64, rate: f64, delta: f64) -> f64 {
        let moved = rate * delta;
        e - moved - self.d_loss * moved.abs()
    }
}

impl FlexLoad {
    fn validate(&self, who: &str) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(Error::invalid(
                "flex_load",
                format!("{who}: cost coefficients must be non-negative"),
            ));
        }
        if !(self.p_min >= 0.0 && self.p_min <= self.p_max) {
            return Err(Error::invalid(
                "flex_load",
                format!("{who}: need 0 <= p_min <= p_max"),
            ));
        }
        if !(self.ramp_min <= 0.0 && self.ramp_max >= 0.0) {
            return Err(Error::invalid(
                "flex_load",
                format!("{who}: ramp window must contain zero"),
            ));
        }
        Ok(())
    }
}

impl NetworkConfig {
    pub fn microgrid_count(&self) -> usize {
        self.microgrids.len()
    }

    /// State entries: price, five per microgrid, two for the central system.
    pub fn state_dim(&self) -> usize {
        5 * self.microgrid_count() + 3
    }

    /// Control entries: three per microgrid, two for the central system.
    pub fn control_dim(&self) -> usize {
        3 * self.microgrid_count() + 2
    }

    /// Exogenous entries: price shift plus two per microgrid.
    pub fn exogenous_dim(&self) -> usize {
        2 * self.microgrid_count() + 1
    }

    /// Feature entries produced by [`features`].
    pub fn feature_dim(&self) -> usize {
        13 * self.microgrid_count() + 8
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.microgrid_count();
        if k < 1 {
            return Err(Error::invalid("microgrids", "need at least one microgrid"));
        }
        for (i, mg) in self.microgrids.iter().enumerate() {
            let who = format!("microgrid {i}");
            mg.dg.validate(&who)?;
            mg.storage.validate(&who)?;
            mg.load.validate(&who)?;
        }
        self.central.dg.validate("central system")?;
        self.central.storage.validate("central system")?;
        if !(self.exchange_min <= self.exchange_max) {
            return Err(Error::invalid("exchange", "window must be ordered"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        if !(self.delta_hours > 0.0) {
            return Err(Error::invalid("delta_hours", "must be positive"));
        }
        if self.control_levels < 2 {
            return Err(Error::invalid("control_levels", "must be >= 2"));
        }
        if !(self.stepsize_eps > 0.0 && self.stepsize_beta > 0.0) {
            return Err(Error::invalid("stepsize", "eps and beta must be positive"));
        }
        if !(self.rls_lambda > 0.0 && self.rls_lambda <= 1.0) {
            return Err(Error::invalid("rls_lambda", "must lie in (0, 1]"));
        }
        if !(self.rls_prior > 0.0) {
            return Err(Error::invalid("rls_prior", "must be positive"));
        }
        if !(self.training_noise_fraction >= 0.0) {
            return Err(Error::invalid("training_noise_fraction", "must be >= 0"));
        }
        if !(self.scales.energy > 0.0 && self.scales.power > 0.0 && self.scales.price > 0.0) {
            return Err(Error::invalid("scales", "every divisor must be positive"));
        }
        let init = &self.initial;
        if init.storage_energy.len() != k + 1
            || init.dg_output.len() != k + 1
            || init.flex_load.len() != k
        {
            return Err(Error::invalid(
                "initial",
                format!(
                    "need {} storage energies, {} generator outputs and {k} flexible loads",
                    k + 1,
                    k + 1
                ),
            ));
        }
        for i in 0..k {
            let mg = &self.microgrids[i];
            let (e, g, c) = (init.storage_energy[i], init.dg_output[i], init.flex_load[i]);
            if !(e >= mg.storage.e_min && e <= mg.storage.e_max) {
                return Err(Error::invalid(
                    "initial.storage_energy",
                    format!("microgrid {i}: {e} outside the energy window"),
                ));
            }
            if !(g >= mg.dg.p_min && g <= mg.dg.p_max) {
                return Err(Error::invalid(
                    "initial.dg_output",
                    format!("microgrid {i}: {g} outside the output window"),
                ));
            }
            if !(c >= mg.load.p_min && c <= mg.load.p_max) {
                return Err(Error::invalid(
                    "initial.flex_load",
                    format!("microgrid {i}: {c} outside the power window"),
                ));
            }
        }
        let (e, g) = (init.storage_energy[k], init.dg_output[k]);
        if !(e >= self.central.storage.e_min && e <= self.central.storage.e_max) {
            return Err(Error::invalid(
                "initial.storage_energy",
                format!("central system: {e} outside the energy window"),
            ));
        }
        if !(g >= self.central.dg.p_min && g <= self.central.dg.p_max) {
            return Err(Error::invalid(
                "initial.dg_output",
                format!("central system: {g} outside the output window"),
            ));
        }
        Ok(())
    }
}

/// Full network state at one stage.
///
/// Layout: spot price, then per microgrid the block (stored energy,
/// generator output, flexible-load power, renewable output, demand), then
/// the central system's stored energy and generator output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    values: Vec<f64>,
}

impl NetworkState {
    /// Wraps an ordered value vector; the length must be `5K + 3` for some
    /// `K >= 1` and every entry finite.
    pub fn from_values(values: Vec<f64>) -> Result<NetworkState> {
        if values.len() < 8 || (values.len() - 3) % 5 != 0 {
            return Err(Error::invalid(
                "state",
                format!("length {} is not 5K + 3 for any K >= 1", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state", "entries must be finite"));
        }
        Ok(NetworkState { values })
    }

    pub fn microgrid_count(&self) -> usize {
        (self.values.len() - 3) / 5
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Spot price at this stage.
    pub fn ep(&self) -> f64 {
        self.values[0]
    }

    /// Stored energy in microgrid `i`, kWh.
    pub fn storage_energy(&self, i: usize) -> f64 {
        self.values[1 + 5 * i]
    }

    /// Generator output in microgrid `i`, kW.
    pub fn dg_output(&self, i: usize) -> f64 {
        self.values[2 + 5 * i]
    }

    /// Flexible-load power in microgrid `i`, kW.
    pub fn flex_load(&self, i: usize) -> f64 {
        self.values[3 + 5 * i]
    }

    /// Renewable output in microgrid `i`, kW.
    pub fn renewable(&self, i: usize) -> f64 {
        self.values[4 + 5 * i]
    }

    /// Demand in microgrid `i`, kW.
    pub fn demand(&self, i: usize) -> f64 {
        self.values[5 + 5 * i]
    }

    pub fn central_storage_energy(&self) -> f64 {
        self.values[self.values.len() - 2]
    }

    pub fn central_dg_output(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    fn apply_exogenous(&self, w: &ExogenousVector) -> NetworkState {
        let k = self.microgrid_count();
        let mut values = self.values.clone();
        values[0] += w.price_shift();
        for i in 0..k {
            values[4 + 5 * i] += w.renewable_shift(i);
            values[5 + 5 * i] += w.demand_shift(i);
        }
        NetworkState { values }
    }
}

/// Controls for one stage.
///
/// Layout: per microgrid the triple (generator ramp, storage rate, load
/// ramp), then the central system's generator ramp and storage rate.
/// Positive storage rates discharge.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    values: Vec<f64>,
}

impl ControlVector {
    /// The all-zero control for `k` microgrids.
    pub fn zero(k: usize) -> ControlVector {
        ControlVector {
            values: vec![0.0; 3 * k + 2],
        }
    }

    /// Wraps an ordered value vector; the length must be `3K + 2` for some
    /// `K >= 1` and every entry finite.
    pub fn from_values(values: Vec<f64>) -> Result<ControlVector> {
        if values.len() < 5 || (values.len() - 2) % 3 != 0 {
            return Err(Error::invalid(
                "control",
                format!("length {} is not 3K + 2 for any K >= 1", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("control", "entries must be finite"));
        }
        Ok(ControlVector { values })
    }

    pub fn microgrid_count(&self) -> usize {
        (self.values.len() - 2) / 3
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn dg_ramp(&self, i: usize) -> f64 {
        self.values[3 * i]
    }

    pub fn storage_rate(&self, i: usize) -> f64 {
        self.values[3 * i + 1]
    }

    pub fn load_ramp(&self, i: usize) -> f64 {
        self.values[3 * i + 2]
    }

    pub fn central_dg_ramp(&self) -> f64 {
        self.values[self.values.len() - 2]
    }

    pub fn central_storage_rate(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Exogenous shifts arriving after one stage's controls.
///
/// Layout: price shift, then per microgrid the pair (renewable shift,
/// demand shift).
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousVector {
    values: Vec<f64>,
}

impl ExogenousVector {
    /// The all-zero shift for `k` microgrids.
    pub fn zero(k: usize) -> ExogenousVector {
        ExogenousVector {
            values: vec![0.0; 2 * k + 1],
        }
    }

    /// Wraps an ordered value vector; the length must be `2K + 1` for some
    /// `K >= 1` and every entry finite.
    pub fn from_values(values: Vec<f64>) -> Result<ExogenousVector> {
        if values.len() < 3 || values.len() % 2 == 0 {
            return Err(Error::invalid(
                "exogenous",
                format!("length {} is not 2K + 1 for any K >= 1", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("exogenous", "entries must be finite"));
        }
        Ok(ExogenousVector { values })
    }

    pub fn microgrid_count(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn price_shift(&self) -> f64 {
        self.values[0]
    }

    pub fn renewable_shift(&self, i: usize) -> f64 {
        self.values[1 + 2 * i]
    }

    pub fn demand_shift(&self, i: usize) -> f64 {
        self.values[2 + 2 * i]
    }
}

/// Exogenous series feeding the network: spot price plus one renewable and
/// one demand series per microgrid.
///
/// Power series must be in kW or MW (converted to kW on use); the price
/// series carries the price tag and its values multiply kilowatt flows
/// directly. All series must share one step length matching
/// [`NetworkConfig::delta_hours`] and cover the horizon.
#[derive(Debug, Clone)]
pub struct NetworkData {
    pub price: TimeSeries,
    pub renewable: Vec<TimeSeries>,
    pub demand: Vec<TimeSeries>,
}

/// Point paths in kW, windowed to the horizon.
struct Paths {
    price: TimeSeries,
    renewable: Vec<TimeSeries>,
    demand: Vec<TimeSeries>,
}

fn prepare(cfg: &NetworkConfig, data: &NetworkData) -> Result<Paths> {
    cfg.validate()?;
    let k = cfg.microgrid_count();
    let n = cfg.horizon;
    if data.renewable.len() != k {
        return Err(Error::invalid(
            "renewable",
            format!("need one series per microgrid, got {}", data.renewable.len()),
        ));
    }
    if data.demand.len() != k {
        return Err(Error::invalid(
            "demand",
            format!("need one series per microgrid, got {}", data.demand.len()),
        ));
    }
    if data.price.unit() != Unit::CurrencyPerMwh {
        return Err(Error::invalid("price", "must be a price series"));
    }
    let step = data.price.step_minutes();
    let check = |name: &'static str, s: &TimeSeries| -> Result<()> {
        if s.step_minutes() != step {
            return Err(Error::invalid(name, "all series must share one step length"));
        }
        if s.len() < n {
            return Err(Error::invalid(
                name,
                format!("series length {} is shorter than the horizon {n}", s.len()),
            ));
        }
        Ok(())
    };
    check("price", &data.price)?;
    for s in &data.renewable {
        check("renewable", s)?;
    }
    for s in &data.demand {
        check("demand", s)?;
    }
    if (data.price.step_hours() - cfg.delta_hours).abs() > 1e-9 {
        return Err(Error::invalid(
            "delta_hours",
            format!(
                "series step {} h does not match the configured stage length {} h",
                data.price.step_hours(),
                cfg.delta_hours
            ),
        ));
    }
    let to_kw = |s: &TimeSeries| -> Result<TimeSeries> { s.convert(Unit::Kw)?.window(0, n) };
    Ok(Paths {
        price: data.price.window(0, n)?,
        renewable: data.renewable.iter().map(to_kw).collect::<Result<_>>()?,
        demand: data.demand.iter().map(to_kw).collect::<Result<_>>()?,
    })
}

fn state_from(cfg: &NetworkConfig, paths: &Paths) -> NetworkState {
    let k = cfg.microgrid_count();
    let mut values = Vec::with_capacity(cfg.state_dim());
    values.push(paths.price.values()[0]);
    for i in 0..k {
        values.push(cfg.initial.storage_energy[i]);
        values.push(cfg.initial.dg_output[i]);
        values.push(cfg.initial.flex_load[i]);
        values.push(paths.renewable[i].values()[0]);
        values.push(paths.demand[i].values()[0]);
    }
    values.push(cfg.initial.storage_energy[k]);
    values.push(cfg.initial.dg_output[k]);
    NetworkState { values }
}

/// Exogenous shift moving the sampled paths from stage `t` to `t + 1`.
fn increment(price: &TimeSeries, res: &[TimeSeries], load: &[TimeSeries], t: usize) -> ExogenousVector {
    let mut values = Vec::with_capacity(2 * res.len() + 1);
    values.push(price.values()[t + 1] - price.values()[t]);
    for i in 0..res.len() {
        values.push(res[i].values()[t + 1] - res[i].values()[t]);
        values.push(load[i].values()[t + 1] - load[i].values()[t]);
    }
    ExogenousVector { values }
}

/// The state every trajectory starts from: configured initial conditions
/// plus the first sample of each exogenous series.
pub fn initial_state(cfg: &NetworkConfig, data: &NetworkData) -> Result<NetworkState> {
    let paths = prepare(cfg, data)?;
    Ok(state_from(cfg, &paths))
}

/// Power microgrid `i` (zero based) draws from the network this stage:
/// demand minus flexible load, renewables, generation and storage output.
/// Negative values export.
pub fn exchange_power(i: usize, state: &NetworkState, u: &ControlVector) -> f64 {
    state.demand(i) - state.flex_load(i) - state.renewable(i) - state.dg_output(i)
        - u.storage_rate(i)
}

/// Power drawn from the upstream grid: the exchange total less what the
/// central system's generator and storage cover. The network balance
/// closes through this term, so its residual is zero by construction.
pub fn grid_power(state: &NetworkState, u: &ControlVector) -> f64 {
    let k = state.microgrid_count();
    let mut total = 0.0;
    for i in 0..k {
        total += exchange_power(i, state, u);
    }
    total - state.central_dg_output() - u.central_storage_rate()
}

fn in_box(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo - EPS && x <= hi + EPS
}

fn check_dg(dg: &DgUnit, output: f64, ramp: f64) -> std::result::Result<(), String> {
    if !in_box(ramp, dg.ramp_min, dg.ramp_max) {
        return Err(format!(
            "generator ramp {ramp} outside [{}, {}]",
            dg.ramp_min, dg.ramp_max
        ));
    }
    let next = output + ramp;
    if !in_box(next, dg.p_min, dg.p_max) {
        return Err(format!(
            "generator output {next} outside [{}, {}]",
            dg.p_min, dg.p_max
        ));
    }
    Ok(())
}

fn check_storage(
    st: &StorageUnit,
    energy: f64,
    rate: f64,
    delta: f64,
) -> std::result::Result<(), String> {
    if !in_box(rate, st.rate_min, st.rate_max) {
        return Err(format!(
            "storage rate {rate} outside [{}, {}]",
            st.rate_min, st.rate_max
        ));
    }
    let next = st.next_energy(energy, rate, delta);
    if !in_box(next, st.e_min, st.e_max) {
        return Err(format!(
            "stored energy {next} outside [{}, {}]",
            st.e_min, st.e_max
        ));
    }
    Ok(())
}

fn check_load(fl: &FlexLoad, power: f64, ramp: f64) -> std::result::Result<(), String> {
    if !in_box(ramp, fl.ramp_min, fl.ramp_max) {
        return Err(format!(
            "load ramp {ramp} outside [{}, {}]",
            fl.ramp_min, fl.ramp_max
        ));
    }
    let next = power + ramp;
    if !in_box(next, fl.p_min, fl.p_max) {
        return Err(format!(
            "flexible load {next} outside [{}, {}]",
            fl.p_min, fl.p_max
        ));
    }
    Ok(())
}

fn check_control(cfg: &NetworkConfig, state: &NetworkState, u: &ControlVector) -> Result<()> {
    let k = cfg.microgrid_count();
    if state.dim() != cfg.state_dim() {
        return Err(Error::invalid("state", "dimension does not match the config"));
    }
    if u.dim() != cfg.control_dim() {
        return Err(Error::invalid("control", "dimension does not match the config"));
    }
    for i in 0..k {
        let mg = &cfg.microgrids[i];
        let fail = |msg: String| Error::Infeasible(format!("microgrid {i}: {msg}"));
        check_dg(&mg.dg, state.dg_output(i), u.dg_ramp(i)).map_err(fail)?;
        check_storage(
            &mg.storage,
            state.storage_energy(i),
            u.storage_rate(i),
            cfg.delta_hours,
        )
        .map_err(fail)?;
        check_load(&mg.load, state.flex_load(i), u.load_ramp(i)).map_err(fail)?;
        let exc = exchange_power(i, state, u);
        if !in_box(exc, cfg.exchange_min, cfg.exchange_max) {
            return Err(Error::Infeasible(format!(
                "microgrid {i}: exchange {exc} outside [{}, {}]",
                cfg.exchange_min, cfg.exchange_max
            )));
        }
    }
    let fail = |msg: String| Error::Infeasible(format!("central system: {msg}"));
    check_dg(&cfg.central.dg, state.central_dg_output(), u.central_dg_ramp()).map_err(fail)?;
    check_storage(
        &cfg.central.storage,
        state.central_storage_energy(),
        u.central_storage_rate(),
        cfg.delta_hours,
    )
    .map_err(fail)?;
    Ok(())
}

/// Stage cost without feasibility checks; callers filter first.
fn step_cost_raw(cfg: &NetworkConfig, state: &NetworkState, u: &ControlVector) -> f64 {
    let k = cfg.microgrid_count();
    let delta = cfg.delta_hours;
    let mut opr = 0.0;
    let mut exchange_total = 0.0;
    for i in 0..k {
        let mg = &cfg.microgrids[i];
        opr += mg.storage.gamma1 * (u.storage_rate(i) * delta).abs()
            + mg.storage.gamma2 * state.storage_energy(i);
        opr += mg.dg.a * state.dg_output(i) + mg.dg.b;
        opr += mg.load.a + mg.load.b * state.flex_load(i);
        exchange_total += exchange_power(i, state, u);
    }
    opr += cfg.central.storage.gamma1 * (u.central_storage_rate() * delta).abs()
        + cfg.central.storage.gamma2 * state.central_storage_energy();
    opr += cfg.central.dg.a * state.central_dg_output() + cfg.central.dg.b;
    let elec = state.ep()
        * (2.0 * exchange_total - state.central_dg_output() - u.central_storage_rate());
    opr + elec
}

/// Cost of applying `u` at `state` for one stage: storage throughput and
/// holding charges, generator and flexible-load running costs, plus the
/// spot price applied to both the microgrid exchanges and the upstream
/// draw (the exchange total therefore enters twice).
pub fn step_cost(cfg: &NetworkConfig, state: &NetworkState, u: &ControlVector) -> Result<f64> {
    check_control(cfg, state, u)?;
    Ok(step_cost_raw(cfg, state, u))
}

/// State right after `u` applies, before any exogenous change: storage
/// energies, generator outputs and flexible loads move; price, renewables
/// and demand stay.
pub fn post_decision(
    cfg: &NetworkConfig,
    state: &NetworkState,
    u: &ControlVector,
) -> Result<NetworkState> {
    check_control(cfg, state, u)?;
    let k = cfg.microgrid_count();
    let delta = cfg.delta_hours;
    let mut values = state.values.clone();
    for i in 0..k {
        let mg = &cfg.microgrids[i];
        values[1 + 5 * i] =
            mg.storage
                .next_energy(state.storage_energy(i), u.storage_rate(i), delta);
        values[2 + 5 * i] += u.dg_ramp(i);
        values[3 + 5 * i] += u.load_ramp(i);
    }
    let last = values.len();
    values[last - 2] = cfg.central.storage.next_energy(
        state.central_storage_energy(),
        u.central_storage_rate(),
        delta,
    );
    values[last - 1] += u.central_dg_ramp();
    Ok(NetworkState { values })
}

/// Full stage transition: [`post_decision`] followed by the exogenous
/// shifts in `w`. An out-of-window result is reported as an infeasible
/// control, never clamped.
pub fn transition(
    cfg: &NetworkConfig,
    state: &NetworkState,
    u: &ControlVector,
    w: &ExogenousVector,
) -> Result<NetworkState> {
    if w.dim() != cfg.exogenous_dim() {
        return Err(Error::invalid(
            "exogenous",
            "dimension does not match the config",
        ));
    }
    Ok(post_decision(cfg, state, u)?.apply_exogenous(w))
}

/// Feature vector for a post-decision state, scaled by
/// [`NetworkConfig::scales`].
///
/// Five groups: every state entry; the controlled entries (storage
/// energies, generator outputs, flexible loads); the price times each
/// controlled entry; the price times each renewable and demand entry; a
/// constant one. `ep` is the stage price feeding the product groups;
/// callers pass the post-decision state's own price entry.
pub fn features(cfg: &NetworkConfig, post: &NetworkState, ep: f64) -> Vec<f64> {
    let k = cfg.microgrid_count();
    let sc = &cfg.scales;
    let sep = ep / sc.price;
    let mut phi = Vec::with_capacity(cfg.feature_dim());
    phi.push(post.ep() / sc.price);
    for i in 0..k {
        phi.push(post.storage_energy(i) / sc.energy);
        phi.push(post.dg_output(i) / sc.power);
        phi.push(post.flex_load(i) / sc.power);
        phi.push(post.renewable(i) / sc.power);
        phi.push(post.demand(i) / sc.power);
    }
    phi.push(post.central_storage_energy() / sc.energy);
    phi.push(post.central_dg_output() / sc.power);
    for i in 0..k {
        phi.push(post.storage_energy(i) / sc.energy);
        phi.push(post.dg_output(i) / sc.power);
        phi.push(post.flex_load(i) / sc.power);
    }
    phi.push(post.central_storage_energy() / sc.energy);
    phi.push(post.central_dg_output() / sc.power);
    for i in 0..k {
        phi.push(sep * (post.storage_energy(i) / sc.energy));
        phi.push(sep * (post.dg_output(i) / sc.power));
        phi.push(sep * (post.flex_load(i) / sc.power));
    }
    phi.push(sep * (post.central_storage_energy() / sc.energy));
    phi.push(sep * (post.central_dg_output() / sc.power));
    for i in 0..k {
        phi.push(sep * (post.renewable(i) / sc.power));
        phi.push(sep * (post.demand(i) / sc.power));
    }
    phi.push(1.0);
    phi
}

/// Linear value model over feature vectors, fitted by recursive least
/// squares with a forgetting factor.
#[derive(Debug, Clone)]
pub struct ValueFunctionApprox {
    theta: Vec<f64>,
    /// Row-major inverse-Gram matrix.
    b: Vec<f64>,
    lambda: f64,
    dim: usize,
}

impl ValueFunctionApprox {
    /// Zero weights and a diagonal inverse-Gram matrix `prior * I`.
    pub fn new(dim: usize, prior: f64, lambda: f64) -> Result<ValueFunctionApprox> {
        if dim < 1 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        if !(prior > 0.0) {
            return Err(Error::invalid("prior", "must be positive"));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::invalid("lambda", "must lie in (0, 1]"));
        }
        let mut b = vec![0.0; dim * dim];
        for r in 0..dim {
            b[r * dim + r] = prior;
        }
        Ok(ValueFunctionApprox {
            theta: vec![0.0; dim],
            b,
            lambda,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Fitted weights, one per feature.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Row-major inverse-Gram matrix; symmetric by construction.
    pub fn covariance(&self) -> &[f64] {
        &self.b
    }

    /// Predicted value of a feature vector.
    pub fn predict(&self, phi: &[f64]) -> f64 {
        debug_assert_eq!(phi.len(), self.dim);
        self.theta.iter().zip(phi).map(|(t, p)| t * p).sum()
    }
}

/// One recursive least squares step folding the observation `v_hat` at
/// features `phi` into the model.
///
/// With gain denominator `gamma = lambda + phi' B phi`, the weights move
/// against the prediction error `predict(phi) - v_hat` along `B phi /
/// gamma` and the inverse-Gram matrix contracts by the matching rank-one
/// term before dividing by `lambda`.
pub fn rls_update(vfa: &mut ValueFunctionApprox, phi: &[f64], v_hat: f64) -> Result<()> {
    let f = vfa.dim;
    if phi.len() != f {
        return Err(Error::invalid(
            "phi",
            format!("length {} does not match the model dimension {f}", phi.len()),
        ));
    }
    let mut bphi = vec![0.0; f];
    for r in 0..f {
        let row = &vfa.b[r * f..(r + 1) * f];
        bphi[r] = row.iter().zip(phi).map(|(b, p)| b * p).sum();
    }
    let quad: f64 = bphi.iter().zip(phi).map(|(b, p)| b * p).sum();
    let gamma = vfa.lambda + quad;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Numerical(format!(
            "least squares gain denominator {gamma} is not positive"
        )));
    }
    let err = vfa.predict(phi) - v_hat;
    let scale = err / gamma;
    for r in 0..f {
        vfa.theta[r] -= bphi[r] * scale;
    }
    let inv_lambda = 1.0 / vfa.lambda;
    for r in 0..f {
        for c in 0..f {
            vfa.b[r * f + c] = (vfa.b[r * f + c] - bphi[r] * bphi[c] / gamma) * inv_lambda;
        }
    }
    Ok(())
}

/// Grid of `n` evenly spaced candidates over `[lo, hi]`, reordered so
/// smaller magnitudes come first; ties in the objective then resolve to
/// the gentlest action.
fn candidate_levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut v = if lo == hi {
        vec![lo]
    } else {
        (0..n)
            .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
            .collect()
    };
    v.sort_by(|a, b| (a.abs(), *a).partial_cmp(&(b.abs(), *b)).unwrap());
    v
}

/// Value-model terms touched by microgrid `i`'s post-decision entries.
fn mg_value_terms(
    cfg: &NetworkConfig,
    theta: &[f64],
    sep: f64,
    i: usize,
    energy: f64,
    output: f64,
    load: f64,
) -> f64 {
    let k = cfg.microgrid_count();
    let se = energy / cfg.scales.energy;
    let sg = output / cfg.scales.power;
    let sl = load / cfg.scales.power;
    let o1 = 1 + 5 * i;
    let o2 = 5 * k + 3 + 3 * i;
    let o3 = 8 * k + 5 + 3 * i;
    theta[o1] * se
        + theta[o1 + 1] * sg
        + theta[o1 + 2] * sl
        + theta[o2] * se
        + theta[o2 + 1] * sg
        + theta[o2 + 2] * sl
        + sep * (theta[o3] * se + theta[o3 + 1] * sg + theta[o3 + 2] * sl)
}

/// Value-model terms touched by the central system's post-decision entries.
fn central_value_terms(cfg: &NetworkConfig, theta: &[f64], sep: f64, energy: f64, output: f64) -> f64 {
    let k = cfg.microgrid_count();
    let se = energy / cfg.scales.energy;
    let sg = output / cfg.scales.power;
    theta[5 * k + 1] * se
        + theta[5 * k + 2] * sg
        + theta[8 * k + 3] * se
        + theta[8 * k + 4] * sg
        + sep * (theta[11 * k + 5] * se + theta[11 * k + 6] * sg)
}

/// One-stage greedy decision: minimizes the stage cost plus the value
/// model's score of the post-decision state over the control grid.
///
/// Both the cost and the value model separate across units, so each
/// microgrid's triple and the central system's pair are minimized
/// independently; the upstream draw absorbs the balance. Returns the
/// chosen control and the attained objective value. Fails when some unit
/// has no feasible grid candidate.
pub fn greedy_action(
    cfg: &NetworkConfig,
    state: &NetworkState,
    vfa: &ValueFunctionApprox,
) -> Result<(ControlVector, f64)> {
    if vfa.dim() != cfg.feature_dim() {
        return Err(Error::invalid(
            "vfa",
            "model dimension does not match the config",
        ));
    }
    let k = cfg.microgrid_count();
    let delta = cfg.delta_hours;
    let ep = state.ep();
    let sep = ep / cfg.scales.price;
    let theta = vfa.theta();
    let levels = cfg.control_levels;
    let mut values = Vec::with_capacity(cfg.control_dim());

    for i in 0..k {
        let mg = &cfg.microgrids[i];
        let (e, g, l) = (state.storage_energy(i), state.dg_output(i), state.flex_load(i));
        let base = state.demand(i) - l - state.renewable(i) - g;
        let pg: Vec<f64> = candidate_levels(mg.dg.ramp_min, mg.dg.ramp_max, levels)
            .into_iter()
            .filter(|&v| in_box(g + v, mg.dg.p_min, mg.dg.p_max))
            .collect();
        let pb: Vec<f64> = candidate_levels(mg.storage.rate_min, mg.storage.rate_max, levels)
            .into_iter()
            .filter(|&v| {
                in_box(
                    mg.storage.next_energy(e, v, delta),
                    mg.storage.e_min,
                    mg.storage.e_max,
                ) && in_box(base - v, cfg.exchange_min, cfg.exchange_max)
            })
            .collect();
        let cl: Vec<f64> = candidate_levels(mg.load.ramp_min, mg.load.ramp_max, levels)
            .into_iter()
            .filter(|&v| in_box(l + v, mg.load.p_min, mg.load.p_max))
            .collect();
        if pg.is_empty() || pb.is_empty() || cl.is_empty() {
            return Err(Error::Infeasible(format!(
                "microgrid {i}: no feasible control on the enumeration grid"
            )));
        }
        let mut best = f64::INFINITY;
        let mut pick = [0.0; 3];
        for &upg in &pg {
            for &upb in &pb {
                // Throughput charge plus the doubled exchange trade; the
                // remaining stage-cost terms do not involve the controls.
                let cost = mg.storage.gamma1 * (upb * delta).abs() + 2.0 * ep * (base - upb);
                let e_next = mg.storage.next_energy(e, upb, delta);
                for &ucl in &cl {
                    let local = cost
                        + mg_value_terms(cfg, theta, sep, i, e_next, g + upg, l + ucl);
                    if local < best {
                        best = local;
                        pick = [upg, upb, ucl];
                    }
                }
            }
        }
        values.extend_from_slice(&pick);
    }

    let st = &cfg.central.storage;
    let dg = &cfg.central.dg;
    let (e, g) = (state.central_storage_energy(), state.central_dg_output());
    let pg: Vec<f64> = candidate_levels(dg.ramp_min, dg.ramp_max, levels)
        .into_iter()
        .filter(|&v| in_box(g + v, dg.p_min, dg.p_max))
        .collect();
    let pb: Vec<f64> = candidate_levels(st.rate_min, st.rate_max, levels)
        .into_iter()
        .filter(|&v| in_box(st.next_energy(e, v, delta), st.e_min, st.e_max))
        .collect();
    if pg.is_empty() || pb.is_empty() {
        return Err(Error::Infeasible(
            "central system: no feasible control on the enumeration grid".into(),
        ));
    }
    let mut best = f64::INFINITY;
    let mut pick = [0.0; 2];
    for &upg in &pg {
        for &upb in &pb {
            let cost = st.gamma1 * (upb * delta).abs() - ep * upb;
            let local =
                cost + central_value_terms(cfg, theta, sep, st.next_energy(e, upb, delta), g + upg);
            if local < best {
                best = local;
                pick = [upg, upb];
            }
        }
    }
    values.extend_from_slice(&pick);

    let u = ControlVector { values };
    let post = post_decision(cfg, state, &u)?;
    let phi = features(cfg, &post, post.ep());
    let v_hat = step_cost_raw(cfg, state, &u) + vfa.predict(&phi);
    Ok((u, v_hat))
}

/// Trained per-stage value models plus the cost of every training pass.
#[derive(Debug, Clone)]
pub struct TrainingResult {
    /// One model per stage; the final stage's model is never updated and
    /// stays at zero, standing in for the empty remainder of the horizon.
    pub vfas: Vec<ValueFunctionApprox>,
    /// Total sampled-path cost per iteration.
    pub cost_trace: Vec<f64>,
}

/// Learns per-stage value models by repeated forward passes.
///
/// Each iteration samples one exogenous path (Gaussian noise around the
/// point forecast, re-centered so the forecast is the mean path, anchored
/// at the observed first sample), walks the horizon with [`greedy_action`]
/// and folds each stage's observed value into the previous stage's model:
/// the fresh observation is blended with the current prediction under a
/// harmonic stepsize, then applied with [`rls_update`]. Deterministic for
/// a fixed seed.
pub fn adp_train(
    cfg: &NetworkConfig,
    data: &NetworkData,
    iterations: usize,
    seed: u64,
) -> Result<TrainingResult> {
    let paths = prepare(cfg, data)?;
    if iterations < 1 {
        return Err(Error::invalid("iterations", "must be >= 1"));
    }
    let n = cfg.horizon;
    let f = cfg.feature_dim();
    let mut vfas = (0..n)
        .map(|_| ValueFunctionApprox::new(f, cfg.rls_prior, cfg.rls_lambda))
        .collect::<Result<Vec<_>>>()?;
    let mut master = Rng64::new(seed);
    let mut cost_trace = Vec::with_capacity(iterations);

    for it in 1..=iterations {
        // Seed order per iteration: price, then each microgrid's renewable,
        // then each demand. Draws happen even at zero noise so the stream
        // stays aligned across configurations.
        let spec = |sd: u64| ForecastErrorSpec {
            sigma_fraction: cfg.training_noise_fraction,
            seed: sd,
        };
        let price_s = paths.price.inject_forecast_error(&spec(master.next_u64()));
        let res_s: Vec<TimeSeries> = paths
            .renewable
            .iter()
            .map(|s| s.inject_forecast_error(&spec(master.next_u64())))
            .collect();
        let load_s: Vec<TimeSeries> = paths
            .demand
            .iter()
            .map(|s| s.inject_forecast_error(&spec(master.next_u64())))
            .collect();

        let mut state = state_from(cfg, &paths);
        let mut prev_phi: Option<Vec<f64>> = None;
        let mut total = 0.0;
        for t in 0..n {
            let (u, v_hat) = greedy_action(cfg, &state, &vfas[t])?;
            if let Some(phi) = prev_phi.take() {
                let a = harmonic_stepsize(it, cfg.stepsize_eps, cfg.stepsize_beta);
                let target = (1.0 - a) * vfas[t - 1].predict(&phi) + a * v_hat;
                rls_update(&mut vfas[t - 1], &phi, target)?;
            }
            total += step_cost_raw(cfg, &state, &u);
            let post = post_decision(cfg, &state, &u)?;
            prev_phi = Some(features(cfg, &post, post.ep()));
            if t + 1 < n {
                state = post.apply_exogenous(&increment(&price_s, &res_s, &load_s, t));
            }
        }
        cost_trace.push(total);
    }
    Ok(TrainingResult { vfas, cost_trace })
}

/// Stage-by-stage record of one evaluated trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkTrace {
    /// Cost incurred at each stage.
    pub stage_costs: Vec<f64>,
    /// Exchanged power per stage and microgrid; negative values export.
    pub exchange: Vec<Vec<f64>>,
    /// Upstream grid draw per stage; negative values sell.
    pub grid_import: Vec<f64>,
    /// Spot price per stage.
    pub price: Vec<f64>,
    /// Stored energy at each stage start, microgrids first, central last.
    pub storage_energy: Vec<Vec<f64>>,
    /// Generator output at each stage start, microgrids first, central last.
    pub dg_output: Vec<Vec<f64>>,
    /// Flexible-load power at each stage start, one entry per microgrid.
    pub flex_load: Vec<Vec<f64>>,
    /// Sum of the stage costs.
    pub total_cost: f64,
}

/// Walks the point-forecast path once, acting greedily against the given
/// per-stage value models, and records the resulting dispatch.
pub fn evaluate_policy(
    cfg: &NetworkConfig,
    data: &NetworkData,
    vfas: &[ValueFunctionApprox],
) -> Result<NetworkTrace> {
    let paths = prepare(cfg, data)?;
    let n = cfg.horizon;
    if vfas.len() != n {
        return Err(Error::invalid(
            "vfas",
            format!("need one value model per stage, got {}", vfas.len()),
        ));
    }
    let k = cfg.microgrid_count();
    let mut state = state_from(cfg, &paths);
    let mut trace = NetworkTrace {
        stage_costs: Vec::with_capacity(n),
        exchange: Vec::with_capacity(n),
        grid_import: Vec::with_capacity(n),
        price: Vec::with_capacity(n),
        storage_energy: Vec::with_capacity(n),
        dg_output: Vec::with_capacity(n),
        flex_load: Vec::with_capacity(n),
        total_cost: 0.0,
    };
    for t in 0..n {
        let (u, _) = greedy_action(cfg, &state, &vfas[t])?;
        let cost = step_cost_raw(cfg, &state, &u);
        trace.stage_costs.push(cost);
        trace
            .exchange
            .push((0..k).map(|i| exchange_power(i, &state, &u)).collect());
        trace.grid_import.push(grid_power(&state, &u));
        trace.price.push(state.ep());
        let mut storage: Vec<f64> = (0..k).map(|i| state.storage_energy(i)).collect();
        storage.push(state.central_storage_energy());
        trace.storage_energy.push(storage);
        let mut dg: Vec<f64> = (0..k).map(|i| state.dg_output(i)).collect();
        dg.push(state.central_dg_output());
        trace.dg_output.push(dg);
        trace.flex_load.push((0..k).map(|i| state.flex_load(i)).collect());
        trace.total_cost += cost;
        let post = post_decision(cfg, &state, &u)?;
        state = if t + 1 < n {
            post.apply_exogenous(&increment(&paths.price, &paths.renewable, &paths.demand, t))
        } else {
            post
        };
    }
    Ok(trace)
}

/// Scores the stage-wise policy that minimizes each stage's cost alone:
/// [`evaluate_policy`] with every value model pinned at zero.
pub fn myopic_baseline(cfg: &NetworkConfig, data: &NetworkData) -> Result<NetworkTrace> {
    cfg.validate()?;
    let f = cfg.feature_dim();
    let vfas = (0..cfg.horizon)
        .map(|_| ValueFunctionApprox::new(f, 1.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    evaluate_policy(cfg, data, &vfas)
}

/// Minimal total cost over every control-grid trajectory on the point
/// path, solved exactly.
///
/// The stage cost and the dynamics are additive across units with no
/// coupling constraint (the upstream draw is free), so the search runs
/// independently per microgrid and for the central system; the sum of the
/// per-unit minima is the network's exact optimum over the same control
/// grid the greedy policy uses. Exponential in the horizon; intended for
/// desk-scale verification only.
pub fn enumerate_network_dispatch(cfg: &NetworkConfig, data: &NetworkData) -> Result<f64> {
    let paths = prepare(cfg, data)?;
    let k = cfg.microgrid_count();
    let ep: Vec<f64> = paths.price.values().to_vec();
    let mut total = 0.0;
    for i in 0..k {
        let mg = &cfg.microgrids[i];
        let res = paths.renewable[i].values();
        let load = paths.demand[i].values();
        let best = mg_min_cost(
            cfg,
            mg,
            &ep,
            res,
            load,
            0,
            cfg.initial.storage_energy[i],
            cfg.initial.dg_output[i],
            cfg.initial.flex_load[i],
        );
        let Some(best) = best else {
            return Err(Error::Infeasible(format!(
                "microgrid {i}: no feasible trajectory on the control grid"
            )));
        };
        total += best;
    }
    let best = central_min_cost(
        cfg,
        &ep,
        0,
        cfg.initial.storage_energy[k],
        cfg.initial.dg_output[k],
    );
    let Some(best) = best else {
        return Err(Error::Infeasible(
            "central system: no feasible trajectory on the control grid".into(),
        ));
    };
    Ok(total + best)
}

/// Exhaustive minimum of one microgrid's cost terms from stage `t` on.
#[allow(clippy::too_many_arguments)]
fn mg_min_cost(
    cfg: &NetworkConfig,
    mg: &Microgrid,
    ep: &[f64],
    res: &[f64],
    load: &[f64],
    t: usize,
    e: f64,
    g: f64,
    l: f64,
) -> Option<f64> {
    if t == cfg.horizon {
        return Some(0.0);
    }
    let delta = cfg.delta_hours;
    let levels = cfg.control_levels;
    let base = load[t] - l - res[t] - g;
    let held = mg.storage.gamma2 * e
        + mg.dg.a * g
        + mg.dg.b
        + mg.load.a
        + mg.load.b * l;
    let mut best: Option<f64> = None;
    for upg in candidate_levels(mg.dg.ramp_min, mg.dg.ramp_max, levels) {
        if !in_box(g + upg, mg.dg.p_min, mg.dg.p_max) {
            continue;
        }
        for upb in candidate_levels(mg.storage.rate_min, mg.storage.rate_max, levels) {
            let e_next = mg.storage.next_energy(e, upb, delta);
            if !in_box(e_next, mg.storage.e_min, mg.storage.e_max)
                || !in_box(base - upb, cfg.exchange_min, cfg.exchange_max)
            {
                continue;
            }
            for ucl in candidate_levels(mg.load.ramp_min, mg.load.ramp_max, levels) {
                if !in_box(l + ucl, mg.load.p_min, mg.load.p_max) {
                    continue;
                }
                let stage = held
                    + mg.storage.gamma1 * (upb * delta).abs()
                    + 2.0 * ep[t] * (base - upb);
                let Some(rest) =
                    mg_min_cost(cfg, mg, ep, res, load, t + 1, e_next, g + upg, l + ucl)
                else {
                    continue;
                };
                let cand = stage + rest;
                if best.is_none_or(|b| cand < b) {
                    best = Some(cand);
                }
            }
        }
    }
    best
}

/// Exhaustive minimum of the central system's cost terms from stage `t` on.
fn central_min_cost(cfg: &NetworkConfig, ep: &[f64], t: usize, e: f64, g: f64) -> Option<f64> {
    if t == cfg.horizon {
        return Some(0.0);
    }
    let st = &cfg.central.storage;
    let dg = &cfg.central.dg;
    let delta = cfg.delta_hours;
    let levels = cfg.control_levels;
    let held = st.gamma2 * e + dg.a * g + dg.b - ep[t] * g;
    let mut best: Option<f64> = None;
    for upg in candidate_levels(dg.ramp_min, dg.ramp_max, levels) {
        if !in_box(g + upg, dg.p_min, dg.p_max) {
            continue;
        }
        for upb in candidate_levels(st.rate_min, st.rate_max, levels) {
            let e_next = st.next_energy(e, upb, delta);
            if !in_box(e_next, st.e_min, st.e_max) {
                continue;
            }
            let stage = held + st.gamma1 * (upb * delta).abs() - ep[t] * upb;
            let Some(rest) = central_min_cost(cfg, ep, t + 1, e_next, g + upg) else {
                continue;
            };
            let cand = stage + rest;
            if best.is_none_or(|b| cand < b) {
                best = Some(cand);
            }
        }
    }
    best
}
