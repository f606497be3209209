//! TOML scenario configuration: parsing, validation and conversion into
//! the core library's types.
//!
//! A scenario file names one strategy, a seed, and the parameter block for
//! that strategy. Every input series is either read from a file in the
//! canonical `# unit=.. step_minutes=..` format or synthesized from shape
//! parameters, so scenarios stay self-contained and reproducible.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use microgrid_core::adp::AdpDispatchConfig;
use microgrid_core::battery::{BatterySpec, CycleCostParams, ThroughputLifeSpec};
use microgrid_core::dp::DispatchScenario;
use microgrid_core::error::Error;
use microgrid_core::network::{
    CentralSystem, DgUnit, FeatureScales, FlexLoad, InitialConditions, Microgrid, NetworkConfig,
    NetworkData, StorageUnit,
};
use microgrid_core::series::{
    load_series, synthesize_scenario, ForecastErrorSpec, SeriesKind, SynthesisParams, TimeSeries,
    Unit,
};
use microgrid_core::smoothing::SmoothingParams;
use microgrid_core::tcl::{BessParams, DgParams, SchedulerParams, TclParams};

/// One constraint violation found while validating a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted field path, e.g. `"tcl_schedule.scheduler.eps_tolerance"`.
    pub field: String,
    /// Human-readable constraint description.
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} — {}", self.field, self.message)
    }
}

fn push(errors: &mut Vec<ConfigError>, field: impl Into<String>, message: impl Into<String>) {
    errors.push(ConfigError {
        field: field.into(),
        message: message.into(),
    });
}

/// The five selectable planners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Strategy {
    #[serde(rename = "dp-dispatch")]
    DpDispatch,
    #[serde(rename = "adp-dispatch")]
    AdpDispatch,
    #[serde(rename = "tcl-schedule")]
    TclSchedule,
    #[serde(rename = "wind-smooth")]
    WindSmooth,
    #[serde(rename = "network-adp")]
    NetworkAdp,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::DpDispatch => "dp-dispatch",
            Strategy::AdpDispatch => "adp-dispatch",
            Strategy::TclSchedule => "tcl-schedule",
            Strategy::WindSmooth => "wind-smooth",
            Strategy::NetworkAdp => "network-adp",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Top-level scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Which planner this scenario runs.
    pub strategy: Strategy,
    /// Master seed for series synthesis, forecast errors and training.
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory; the `--out` flag overrides it.
    pub output_dir: Option<PathBuf>,
    pub dp_dispatch: Option<DpDispatchBlock>,
    pub adp_dispatch: Option<AdpDispatchBlock>,
    pub tcl_schedule: Option<TclScheduleBlock>,
    pub wind_smooth: Option<WindSmoothBlock>,
    pub network_adp: Option<NetworkAdpBlock>,
}

impl ScenarioConfig {
    /// Parses a scenario file. Read or syntax failures are hard errors;
    /// constraint violations are reported by [`ScenarioConfig::validate`].
    pub fn from_toml_file(path: &Path) -> Result<ScenarioConfig, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    /// Collects every constraint violation without running anything.
    pub fn validate(&self) -> Vec<ConfigError> {
        let mut errors = Vec::new();
        let expect =
            |present: bool, name: &str, errors: &mut Vec<ConfigError>| {
                let wanted = self.strategy.as_str().replace('-', "_") == name;
                if wanted && !present {
                    push(errors, name, format!("strategy {} needs this block", self.strategy));
                }
                if !wanted && present {
                    push(
                        errors,
                        name,
                        format!("does not belong to a {} scenario", self.strategy),
                    );
                }
            };
        expect(self.dp_dispatch.is_some(), "dp_dispatch", &mut errors);
        expect(self.adp_dispatch.is_some(), "adp_dispatch", &mut errors);
        expect(self.tcl_schedule.is_some(), "tcl_schedule", &mut errors);
        expect(self.wind_smooth.is_some(), "wind_smooth", &mut errors);
        expect(self.network_adp.is_some(), "network_adp", &mut errors);

        if let Some(b) = &self.dp_dispatch {
            b.collect("dp_dispatch", &mut errors);
        }
        if let Some(b) = &self.adp_dispatch {
            b.collect("adp_dispatch", &mut errors);
        }
        if let Some(b) = &self.tcl_schedule {
            b.collect("tcl_schedule", &mut errors);
        }
        if let Some(b) = &self.wind_smooth {
            b.collect("wind_smooth", &mut errors);
        }
        if let Some(b) = &self.network_adp {
            b.collect("network_adp", &mut errors);
        }
        errors
    }
}

/// An input series: either a file in the canonical format or synthesis
/// shape parameters (`kind`, `length`, `unit`, `step_minutes`, `mean` plus
/// optional wave/noise/clamp settings). Exactly one of the two forms.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SeriesSource {
    pub path: Option<PathBuf>,
    /// `wind`, `solar`, `load`, `price` or `temperature`.
    pub kind: Option<String>,
    pub length: Option<usize>,
    /// `kW`, `MW`, `kWh`, `MWh`, `currency_per_MWh` or `celsius`.
    pub unit: Option<String>,
    pub step_minutes: Option<u32>,
    pub mean: Option<f64>,
    /// Peak deviation of the diurnal sinusoid around `mean`.
    #[serde(default)]
    pub amplitude: f64,
    /// Sinusoid period in steps.
    #[serde(default = "default_period")]
    pub period_steps: u32,
    /// Gaussian noise, one standard deviation as a fraction of `|mean|`.
    #[serde(default)]
    pub noise_fraction: f64,
    pub clamp_min: Option<f64>,
    pub clamp_max: Option<f64>,
    /// Added to the role's derived seed, for decorrelating two series of
    /// the same role.
    #[serde(default)]
    pub seed_offset: u64,
}

fn default_period() -> u32 {
    288
}

fn parse_kind(tag: &str) -> Option<SeriesKind> {
    match tag {
        "wind" => Some(SeriesKind::Wind),
        "solar" => Some(SeriesKind::Solar),
        "load" => Some(SeriesKind::Load),
        "price" => Some(SeriesKind::Price),
        "temperature" => Some(SeriesKind::Temperature),
        _ => None,
    }
}

impl SeriesSource {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if let Some(path) = &self.path {
            if self.kind.is_some() || self.length.is_some() || self.mean.is_some() {
                push(
                    errors,
                    field,
                    "give either `path` or synthesis parameters, not both",
                );
            }
            if !path.is_file() {
                push(
                    errors,
                    format!("{field}.path"),
                    format!("file not found: {}", path.display()),
                );
            }
            return;
        }
        match &self.kind {
            None => push(
                errors,
                format!("{field}.kind"),
                "synthesized series needs a kind (or give `path`)",
            ),
            Some(k) if parse_kind(k).is_none() => push(
                errors,
                format!("{field}.kind"),
                format!("unknown kind `{k}`; expected wind, solar, load, price or temperature"),
            ),
            _ => {}
        }
        match self.length {
            None => push(errors, format!("{field}.length"), "required for synthesis"),
            Some(0) => push(errors, format!("{field}.length"), "must be ≥ 1"),
            _ => {}
        }
        match &self.unit {
            None => push(errors, format!("{field}.unit"), "required for synthesis"),
            Some(u) if Unit::parse(u).is_none() => push(
                errors,
                format!("{field}.unit"),
                format!("unknown unit `{u}`"),
            ),
            _ => {}
        }
        match self.step_minutes {
            None => push(
                errors,
                format!("{field}.step_minutes"),
                "required for synthesis",
            ),
            Some(0) => push(errors, format!("{field}.step_minutes"), "must be ≥ 1"),
            _ => {}
        }
        if self.mean.is_none() {
            push(errors, format!("{field}.mean"), "required for synthesis");
        }
        if self.amplitude < 0.0 {
            push(errors, format!("{field}.amplitude"), "must be ≥ 0");
        }
        if self.period_steps == 0 {
            push(errors, format!("{field}.period_steps"), "must be ≥ 1");
        }
        if self.noise_fraction < 0.0 {
            push(errors, format!("{field}.noise_fraction"), "must be ≥ 0");
        }
        if let (Some(lo), Some(hi)) = (self.clamp_min, self.clamp_max) {
            if lo > hi {
                push(errors, format!("{field}.clamp_min"), "exceeds clamp_max");
            }
        }
    }

    /// Loads or synthesizes the series. `seed` is the role-specific seed
    /// derived from the master seed by the caller.
    pub fn realize(&self, seed: u64) -> Result<TimeSeries, Error> {
        if let Some(path) = &self.path {
            return load_series(path);
        }
        let kind = parse_kind(self.kind.as_deref().unwrap_or("")).ok_or(Error::InvalidParam {
            name: "kind",
            msg: "unknown series kind".to_string(),
        })?;
        let unit = Unit::parse(self.unit.as_deref().unwrap_or("")).ok_or(Error::InvalidParam {
            name: "unit",
            msg: "unknown unit tag".to_string(),
        })?;
        let params = SynthesisParams::new(
            unit,
            self.step_minutes.unwrap_or(0),
            self.mean.unwrap_or(f64::NAN),
        )
        .with_wave(self.amplitude, self.period_steps)
        .with_noise(self.noise_fraction)
        .with_clamp(self.clamp_min, self.clamp_max);
        synthesize_scenario(
            kind,
            self.length.unwrap_or(0),
            seed.wrapping_add(self.seed_offset),
            &params,
        )
    }
}

/// Battery block shared by the strategies that use [`BatterySpec`]; the
/// step length is derived from the input series, not configured.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryBlock {
    /// Rated capacity (the DOD reference).
    pub e_max: f64,
    pub e_min: f64,
    /// Operating ceiling; at most `e_max`.
    pub e_cap_max: f64,
    pub p_charge_max: f64,
    pub p_discharge_max: f64,
    pub d_loss: f64,
    #[serde(default = "one_u32")]
    pub n_parallel: u32,
}

fn one_u32() -> u32 {
    1
}

impl BatteryBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if !(self.e_min >= 0.0 && self.e_min < self.e_cap_max && self.e_cap_max <= self.e_max) {
            push(
                errors,
                format!("{field}.e_min"),
                "need 0 ≤ e_min < e_cap_max ≤ e_max",
            );
        }
        if !(self.p_charge_max > 0.0 && self.p_discharge_max > 0.0) {
            push(
                errors,
                format!("{field}.p_charge_max"),
                "power limits must be positive",
            );
        }
        if !(self.d_loss > 0.0 && self.d_loss < 1.0) {
            push(errors, format!("{field}.d_loss"), "must lie in (0, 1)");
        }
        if self.n_parallel == 0 {
            push(errors, format!("{field}.n_parallel"), "must be ≥ 1");
        }
    }

    fn to_spec(&self, delta_t_hours: f64) -> BatterySpec {
        BatterySpec {
            e_max: self.e_max,
            e_min: self.e_min,
            e_cap_max: self.e_cap_max,
            p_charge_max: self.p_charge_max,
            p_discharge_max: self.p_discharge_max,
            d_loss: self.d_loss,
            delta_t: delta_t_hours,
            n_parallel: self.n_parallel,
        }
    }
}

/// Half-cycle replacement-cost parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleBlock {
    /// Cycles to failure at 100% depth of discharge.
    pub n_fail_100: f64,
    /// Degradation exponent on depth of discharge.
    pub kp: f64,
    /// Battery replacement cost.
    pub r_c: f64,
}

impl CycleBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if !(self.n_fail_100 > 0.0) {
            push(errors, format!("{field}.n_fail_100"), "must be positive");
        }
        if !(self.kp > 0.0) {
            push(errors, format!("{field}.kp"), "must be positive");
        }
        if !(self.r_c >= 0.0) {
            push(errors, format!("{field}.r_c"), "must be ≥ 0");
        }
    }

    fn to_params(&self) -> Result<CycleCostParams, Error> {
        CycleCostParams::new(self.n_fail_100, self.kp, self.r_c)
    }
}

/// Receding-horizon battery dispatch against renewable, load and price.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpDispatchBlock {
    pub horizon_steps: usize,
    /// Battery energy lattice resolution.
    pub grid_points: usize,
    /// Executed steps of the receding run.
    pub total_steps: usize,
    /// Initial stored energy, kWh.
    pub e0: f64,
    /// Forecast error injected into the planning data, one standard
    /// deviation as a fraction of each series' mean magnitude.
    #[serde(default)]
    pub forecast_sigma_fraction: f64,
    pub battery: BatteryBlock,
    pub cycle: CycleBlock,
    pub renewable: SeriesSource,
    pub load: SeriesSource,
    pub price: SeriesSource,
}

impl DpDispatchBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if self.horizon_steps < 1 {
            push(errors, format!("{field}.horizon_steps"), "must be ≥ 1");
        }
        if self.grid_points < 2 {
            push(errors, format!("{field}.grid_points"), "must be ≥ 2");
        }
        if self.total_steps < 1 {
            push(errors, format!("{field}.total_steps"), "must be ≥ 1");
        }
        if !(self.e0 >= self.battery.e_min && self.e0 <= self.battery.e_cap_max) {
            push(
                errors,
                format!("{field}.e0"),
                "must lie inside [battery.e_min, battery.e_cap_max]",
            );
        }
        if self.forecast_sigma_fraction < 0.0 {
            push(
                errors,
                format!("{field}.forecast_sigma_fraction"),
                "must be ≥ 0",
            );
        }
        self.battery.collect(&format!("{field}.battery"), errors);
        self.cycle.collect(&format!("{field}.cycle"), errors);
        self.renewable.collect(&format!("{field}.renewable"), errors);
        self.load.collect(&format!("{field}.load"), errors);
        self.price.collect(&format!("{field}.price"), errors);
    }

    /// Builds the core scenario; series seeds derive from `seed` per role.
    pub fn build(&self, seed: u64) -> Result<(DispatchScenario, ForecastErrorSpec), Error> {
        let renewable = self.renewable.realize(seed.wrapping_add(1))?;
        let load = self.load.realize(seed.wrapping_add(2))?;
        let price = self.price.realize(seed.wrapping_add(3))?;
        let delta_t = renewable.step_hours();
        let scenario = DispatchScenario::new(
            renewable,
            load,
            price,
            self.battery.to_spec(delta_t),
            self.cycle.to_params()?,
            self.horizon_steps,
            self.grid_points,
        )?;
        let spec = ForecastErrorSpec {
            sigma_fraction: self.forecast_sigma_fraction,
            seed,
        };
        Ok((scenario, spec))
    }
}

/// Throughput lifetime fit; defaults to the bundled lead-acid block.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifeBlock {
    /// Rated cycle life.
    pub l_r: f64,
    /// Rated depth of discharge.
    pub d_r: f64,
    /// Rated capacity, Ah.
    pub c_r: f64,
    /// Replacement price.
    pub price: f64,
    /// Nominal voltage.
    pub voltage: f64,
    /// Quartic DOD→cycle-life fit coefficients, constant term first.
    pub poly_coeffs: [f64; 5],
    /// Current→capacity fit coefficients (a1, b1, a2, b2).
    pub exp_coeffs: [f64; 4],
}

impl Default for LifeBlock {
    fn default() -> LifeBlock {
        let spec = ThroughputLifeSpec::lead_acid_936ah();
        LifeBlock {
            l_r: spec.l_r,
            d_r: spec.d_r,
            c_r: spec.c_r,
            price: spec.price,
            voltage: spec.voltage,
            poly_coeffs: spec.poly_coeffs,
            exp_coeffs: spec.exp_coeffs,
        }
    }
}

impl LifeBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if !(self.l_r > 0.0) {
            push(errors, format!("{field}.l_r"), "must be positive");
        }
        if !(self.d_r > 0.0 && self.d_r <= 1.0) {
            push(errors, format!("{field}.d_r"), "must lie in (0, 1]");
        }
        if !(self.c_r > 0.0) {
            push(errors, format!("{field}.c_r"), "must be positive");
        }
        if !(self.price > 0.0) {
            push(errors, format!("{field}.price"), "must be positive");
        }
        if !(self.voltage > 0.0) {
            push(errors, format!("{field}.voltage"), "must be positive");
        }
    }

    fn to_spec(&self) -> ThroughputLifeSpec {
        ThroughputLifeSpec {
            l_r: self.l_r,
            d_r: self.d_r,
            c_r: self.c_r,
            price: self.price,
            voltage: self.voltage,
            poly_coeffs: self.poly_coeffs,
            exp_coeffs: self.exp_coeffs,
        }
    }
}

/// Rolling-horizon wind-farm battery dispatch with value learning on an
/// energy lattice.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdpDispatchBlock {
    /// Lower energy bound, Wh.
    pub lb: f64,
    /// Upper energy bound, Wh.
    pub ub: f64,
    /// Maximum energy discharged per step, Wh.
    pub r_d: f64,
    /// Maximum energy charged per step, Wh.
    pub r_c: f64,
    pub horizon: usize,
    /// Steps beyond the horizon averaged into the remaining-energy price.
    #[serde(default)]
    pub long_price_window: usize,
    pub stepsize_eps: f64,
    pub stepsize_beta: f64,
    /// Training passes per planning window.
    pub max_iterations: usize,
    pub state_grid: usize,
    /// Initial stored energy, Wh.
    pub x0: f64,
    #[serde(default)]
    pub training_noise_fraction: f64,
    /// Forecast error injected into the rolling run's planning data.
    #[serde(default)]
    pub forecast_sigma_fraction: f64,
    #[serde(default)]
    pub life: LifeBlock,
    pub wind: SeriesSource,
    pub price: SeriesSource,
}

impl AdpDispatchBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        self.life.collect(&format!("{field}.life"), errors);
        let e_total = self.life.c_r * self.life.voltage;
        if !(self.lb >= 0.0 && self.lb < self.ub) {
            push(errors, format!("{field}.lb"), "need 0 ≤ lb < ub");
        }
        if !(self.ub < e_total) {
            push(
                errors,
                format!("{field}.ub"),
                format!("must stay below the full capacity {e_total} Wh"),
            );
        }
        if !(self.r_d > 0.0 && self.r_c > 0.0) {
            push(errors, format!("{field}.r_d"), "transfer limits must be positive");
        }
        if self.horizon < 1 {
            push(errors, format!("{field}.horizon"), "must be ≥ 1");
        }
        if self.max_iterations < 1 {
            push(errors, format!("{field}.max_iterations"), "must be ≥ 1");
        }
        if self.state_grid < 2 {
            push(errors, format!("{field}.state_grid"), "must be ≥ 2");
        }
        if !(self.stepsize_eps > 0.0 && self.stepsize_beta > 0.0) {
            push(
                errors,
                format!("{field}.stepsize_eps"),
                "ε and β must be positive",
            );
        }
        if !(self.x0 >= self.lb && self.x0 <= self.ub) {
            push(errors, format!("{field}.x0"), "must lie within [lb, ub]");
        }
        if self.training_noise_fraction < 0.0 {
            push(
                errors,
                format!("{field}.training_noise_fraction"),
                "must be ≥ 0",
            );
        }
        if self.forecast_sigma_fraction < 0.0 {
            push(
                errors,
                format!("{field}.forecast_sigma_fraction"),
                "must be ≥ 0",
            );
        }
        self.wind.collect(&format!("{field}.wind"), errors);
        self.price.collect(&format!("{field}.price"), errors);
    }

    pub fn build(
        &self,
        seed: u64,
    ) -> Result<(TimeSeries, TimeSeries, AdpDispatchConfig, ForecastErrorSpec), Error> {
        let wind = self.wind.realize(seed.wrapping_add(1))?;
        let price = self.price.realize(seed.wrapping_add(3))?;
        let cfg = AdpDispatchConfig {
            life: self.life.to_spec(),
            lb: self.lb,
            ub: self.ub,
            r_d: self.r_d,
            r_c: self.r_c,
            horizon: self.horizon,
            long_price_window: self.long_price_window,
            stepsize_eps: self.stepsize_eps,
            stepsize_beta: self.stepsize_beta,
            max_iterations: self.max_iterations,
            state_grid: self.state_grid,
            x0: self.x0,
            training_noise_fraction: self.training_noise_fraction,
            step_hours: wind.step_hours(),
        };
        let spec = ForecastErrorSpec {
            sigma_fraction: self.forecast_sigma_fraction,
            seed,
        };
        Ok((wind, price, cfg, spec))
    }
}

/// One class of thermostatically controlled cooling loads.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TclBlock {
    /// Thermal relaxation rate toward outdoor temperature, per hour.
    pub alpha: f64,
    /// Temperature drop per kW of cooling at equilibrium, °C/kW.
    pub beta: f64,
    /// Rated electrical power per unit, kW.
    pub p_rated: f64,
    pub n_units: u32,
    pub band_low: f64,
    pub band_high: f64,
    #[serde(default)]
    pub switch_delay_substeps: u32,
}

impl TclBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.p_rated > 0.0) {
            push(
                errors,
                format!("{field}.alpha"),
                "alpha, beta and p_rated must be positive",
            );
        }
        if self.n_units < 1 {
            push(errors, format!("{field}.n_units"), "must be ≥ 1");
        }
        if !(self.band_low < self.band_high) {
            push(
                errors,
                format!("{field}.band_low"),
                "must be below band_high",
            );
        }
    }

    fn to_params(&self) -> TclParams {
        TclParams {
            alpha: self.alpha,
            beta: self.beta,
            p_rated: self.p_rated,
            n_units: self.n_units,
            band_low: self.band_low,
            band_high: self.band_high,
            switch_delay_substeps: self.switch_delay_substeps,
        }
    }
}

/// Generator/battery schedule against an aggregate TCL demand band.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TclScheduleBlock {
    pub stages: usize,
    /// Initial stored energy, kWh.
    pub x0: f64,
    pub tcl: TclBlock,
    pub dg: DgBlock,
    pub bess: BessBlock,
    /// Supplied power may exceed demand by this factor before curtailment;
    /// must exceed 1.
    pub eps_tolerance: f64,
    /// Price per kW of curtailed power.
    pub c_cur: f64,
    pub grid_points: usize,
    pub solar: SeriesSource,
    pub t_out: SeriesSource,
}

/// Quadratic generator cost and output box.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgBlock {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// Battery box and pricing for the demand-band scheduler.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BessBlock {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Power box, kW, signed: negative charges.
    pub p_min: f64,
    pub p_max: f64,
    /// Energy box, kWh.
    pub x_min: f64,
    pub x_max: f64,
    /// Hours per stage.
    pub delta_t: f64,
    pub d_loss: f64,
}

impl TclScheduleBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if self.stages < 1 {
            push(errors, format!("{field}.stages"), "must be ≥ 1");
        }
        self.tcl.collect(&format!("{field}.tcl"), errors);
        let d = &self.dg;
        if !(d.a >= 0.0 && d.b >= 0.0 && d.c >= 0.0) {
            push(
                errors,
                format!("{field}.dg.a"),
                "cost coefficients must be ≥ 0",
            );
        }
        if !(0.0 <= d.p_min && d.p_min <= d.p_max) {
            push(errors, format!("{field}.dg.p_min"), "need 0 ≤ p_min ≤ p_max");
        }
        let b = &self.bess;
        if !(b.gamma1 >= 0.0 && b.gamma2 >= 0.0) {
            push(errors, format!("{field}.bess.gamma1"), "must be ≥ 0");
        }
        if !(b.p_min <= b.p_max) {
            push(errors, format!("{field}.bess.p_min"), "power box inverted");
        }
        if !(b.x_min < b.x_max) {
            push(errors, format!("{field}.bess.x_min"), "energy box inverted");
        }
        if !(b.delta_t > 0.0) {
            push(errors, format!("{field}.bess.delta_t"), "must be positive");
        }
        if !(0.0 <= b.d_loss && b.d_loss < 1.0) {
            push(errors, format!("{field}.bess.d_loss"), "must lie in [0, 1)");
        }
        if !(self.eps_tolerance > 1.0) {
            push(errors, format!("{field}.eps_tolerance"), "must exceed 1");
        }
        if !(self.c_cur >= 0.0) {
            push(errors, format!("{field}.c_cur"), "must be ≥ 0");
        }
        if self.grid_points < 2 {
            push(errors, format!("{field}.grid_points"), "must be ≥ 2");
        }
        if b.x_min < b.x_max && !(self.x0 >= b.x_min && self.x0 <= b.x_max) {
            push(
                errors,
                format!("{field}.x0"),
                "must lie inside [bess.x_min, bess.x_max]",
            );
        }
        self.solar.collect(&format!("{field}.solar"), errors);
        self.t_out.collect(&format!("{field}.t_out"), errors);
    }

    pub fn build(
        &self,
        seed: u64,
    ) -> Result<(TimeSeries, TimeSeries, SchedulerParams, TclParams), Error> {
        let solar = self.solar.realize(seed.wrapping_add(6))?;
        let t_out = self.t_out.realize(seed.wrapping_add(4))?;
        let sp = SchedulerParams {
            dg: DgParams {
                a: self.dg.a,
                b: self.dg.b,
                c: self.dg.c,
                p_min: self.dg.p_min,
                p_max: self.dg.p_max,
            },
            bess: BessParams {
                gamma1: self.bess.gamma1,
                gamma2: self.bess.gamma2,
                p_min: self.bess.p_min,
                p_max: self.bess.p_max,
                x_min: self.bess.x_min,
                x_max: self.bess.x_max,
                delta_t: self.bess.delta_t,
                d_loss: self.bess.d_loss,
            },
            eps_tolerance: self.eps_tolerance,
            c_cur: self.c_cur,
            grid_points: self.grid_points,
        };
        Ok((solar, t_out, sp, self.tcl.to_params()))
    }
}

/// Two-stage wind smoothing: setpoint schedule then battery dispatch.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSmoothBlock {
    pub stages: usize,
    /// Initial stored energy, MWh.
    pub e0: f64,
    /// Grid dispatch of the interval before the first stage, MW.
    pub pg_prev: f64,
    /// Battery operating price per MWh moved or held.
    pub gamma_b: f64,
    /// Ramp-rate box on the dispatched power, MW per stage.
    pub rr_min: f64,
    pub rr_max: f64,
    pub qp_tolerance: f64,
    pub qp_max_iters: usize,
    pub grid_points: usize,
    pub tcl: TclBlock,
    /// Battery in the MW/MWh frame.
    pub battery: BatteryBlock,
    pub wind: SeriesSource,
    pub t_out: SeriesSource,
}

impl WindSmoothBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if self.stages < 2 {
            push(errors, format!("{field}.stages"), "must be ≥ 2");
        }
        if !(self.gamma_b >= 0.0) {
            push(errors, format!("{field}.gamma_b"), "must be ≥ 0");
        }
        if !(self.rr_min <= 0.0 && 0.0 <= self.rr_max) {
            push(
                errors,
                format!("{field}.rr_min"),
                "ramp box must straddle zero",
            );
        }
        if !(self.qp_tolerance > 0.0) {
            push(errors, format!("{field}.qp_tolerance"), "must be positive");
        }
        if self.qp_max_iters < 1 {
            push(errors, format!("{field}.qp_max_iters"), "must be ≥ 1");
        }
        if self.grid_points < 2 {
            push(errors, format!("{field}.grid_points"), "must be ≥ 2");
        }
        self.tcl.collect(&format!("{field}.tcl"), errors);
        self.battery.collect(&format!("{field}.battery"), errors);
        if !(self.e0 >= self.battery.e_min && self.e0 <= self.battery.e_cap_max) {
            push(
                errors,
                format!("{field}.e0"),
                "must lie inside [battery.e_min, battery.e_cap_max]",
            );
        }
        if !(self.pg_prev >= 0.0) {
            push(errors, format!("{field}.pg_prev"), "must be ≥ 0");
        }
        self.wind.collect(&format!("{field}.wind"), errors);
        self.t_out.collect(&format!("{field}.t_out"), errors);
    }

    pub fn build(
        &self,
        seed: u64,
    ) -> Result<(TimeSeries, TimeSeries, TclParams, SmoothingParams, BatterySpec), Error> {
        let wind = self.wind.realize(seed.wrapping_add(5))?;
        let t_out = self.t_out.realize(seed.wrapping_add(4))?;
        let sm = SmoothingParams {
            gamma_b: self.gamma_b,
            rr_min: self.rr_min,
            rr_max: self.rr_max,
            band_low: self.tcl.band_low,
            band_high: self.tcl.band_high,
            qp_tolerance: self.qp_tolerance,
            qp_max_iters: self.qp_max_iters,
            grid_points: self.grid_points,
        };
        let bess = self.battery.to_spec(wind.step_hours());
        Ok((wind, t_out, self.tcl.to_params(), sm, bess))
    }
}

/// How the storage `d` parameter is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DConvention {
    /// `d` is the loss fraction applied to moved energy.
    #[default]
    Loss,
    /// `d` is a round-trip efficiency; the loss fraction is `1 − d`.
    Efficiency,
}

/// Generator of one network unit.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetDgBlock {
    pub a: f64,
    pub b: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_min: f64,
    pub ramp_max: f64,
}

impl NetDgBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if !(self.a >= 0.0 && self.b >= 0.0) {
            push(errors, format!("{field}.a"), "cost coefficients must be ≥ 0");
        }
        if !(self.p_min > 0.0 && self.p_min <= self.p_max) {
            push(errors, format!("{field}.p_min"), "need 0 < p_min ≤ p_max");
        }
        if !(self.ramp_min <= 0.0 && self.ramp_max >= 0.0) {
            push(
                errors,
                format!("{field}.ramp_min"),
                "ramp window must contain zero",
            );
        }
    }

    fn to_unit(&self) -> DgUnit {
        DgUnit {
            a: self.a,
            b: self.b,
            p_min: self.p_min,
            p_max: self.p_max,
            ramp_min: self.ramp_min,
            ramp_max: self.ramp_max,
        }
    }
}

/// Storage of one network unit; `d` is read per the scenario's
/// `d_convention`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetStorageBlock {
    pub gamma1: f64,
    pub gamma2: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub rate_min: f64,
    pub rate_max: f64,
    pub d: f64,
}

impl NetStorageBlock {
    fn collect(&self, field: &str, convention: DConvention, errors: &mut Vec<ConfigError>) {
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            push(errors, format!("{field}.gamma1"), "prices must be ≥ 0");
        }
        if !(self.e_min >= 0.0 && self.e_min <= self.e_max) {
            push(errors, format!("{field}.e_min"), "need 0 ≤ e_min ≤ e_max");
        }
        if !(self.rate_min <= 0.0 && self.rate_max >= 0.0) {
            push(
                errors,
                format!("{field}.rate_min"),
                "rate window must contain zero",
            );
        }
        let loss = self.loss(convention);
        if !(0.0..1.0).contains(&loss) {
            push(
                errors,
                format!("{field}.d"),
                match convention {
                    DConvention::Loss => "loss fraction must lie in [0, 1)".to_string(),
                    DConvention::Efficiency => "efficiency must lie in (0, 1]".to_string(),
                },
            );
        }
    }

    fn loss(&self, convention: DConvention) -> f64 {
        match convention {
            DConvention::Loss => self.d,
            DConvention::Efficiency => 1.0 - self.d,
        }
    }

    fn to_unit(&self, convention: DConvention) -> StorageUnit {
        StorageUnit {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            e_min: self.e_min,
            e_max: self.e_max,
            rate_min: self.rate_min,
            rate_max: self.rate_max,
            d_loss: self.loss(convention),
        }
    }
}

/// Flexible (curtailable) load of one microgrid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetLoadBlock {
    pub a: f64,
    pub b: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_min: f64,
    pub ramp_max: f64,
}

impl NetLoadBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if !(self.a >= 0.0 && self.b >= 0.0) {
            push(errors, format!("{field}.a"), "cost coefficients must be ≥ 0");
        }
        if !(self.p_min >= 0.0 && self.p_min <= self.p_max) {
            push(errors, format!("{field}.p_min"), "need 0 ≤ p_min ≤ p_max");
        }
        if !(self.ramp_min <= 0.0 && self.ramp_max >= 0.0) {
            push(
                errors,
                format!("{field}.ramp_min"),
                "ramp window must contain zero",
            );
        }
    }

    fn to_unit(&self) -> FlexLoad {
        FlexLoad {
            a: self.a,
            b: self.b,
            p_min: self.p_min,
            p_max: self.p_max,
            ramp_min: self.ramp_min,
            ramp_max: self.ramp_max,
        }
    }
}

/// One microgrid: units, initial operating point and exogenous series.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrogridBlock {
    pub dg: NetDgBlock,
    pub storage: NetStorageBlock,
    pub load: NetLoadBlock,
    pub initial_storage_energy: f64,
    pub initial_dg_output: f64,
    pub initial_flex_load: f64,
    pub renewable: SeriesSource,
    pub demand: SeriesSource,
}

/// Central system: units and initial operating point.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralBlock {
    pub dg: NetDgBlock,
    pub storage: NetStorageBlock,
    pub initial_storage_energy: f64,
    pub initial_dg_output: f64,
}

/// Cooperative dispatch of several microgrids with per-stage value models
/// learned by recursive least squares.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkAdpBlock {
    /// Training passes.
    pub iterations: usize,
    #[serde(default)]
    pub d_convention: DConvention,
    pub exchange_min: f64,
    pub exchange_max: f64,
    pub horizon: usize,
    pub delta_hours: f64,
    #[serde(default = "default_levels")]
    pub control_levels: usize,
    #[serde(default = "default_eps")]
    pub stepsize_eps: f64,
    #[serde(default = "default_beta")]
    pub stepsize_beta: f64,
    #[serde(default = "default_lambda")]
    pub rls_lambda: f64,
    #[serde(default = "default_prior")]
    pub rls_prior: f64,
    #[serde(default)]
    pub training_noise_fraction: f64,
    pub scale_energy: f64,
    pub scale_power: f64,
    pub scale_price: f64,
    pub microgrid: Vec<MicrogridBlock>,
    pub central: CentralBlock,
    pub price: SeriesSource,
}

fn default_levels() -> usize {
    5
}

fn default_eps() -> f64 {
    10.0
}

fn default_beta() -> f64 {
    0.6
}

fn default_lambda() -> f64 {
    1.0
}

fn default_prior() -> f64 {
    1000.0
}

impl NetworkAdpBlock {
    fn collect(&self, field: &str, errors: &mut Vec<ConfigError>) {
        if self.iterations < 1 {
            push(errors, format!("{field}.iterations"), "must be ≥ 1");
        }
        if self.microgrid.is_empty() {
            push(errors, format!("{field}.microgrid"), "need at least one microgrid");
        }
        if !(self.exchange_min <= self.exchange_max) {
            push(
                errors,
                format!("{field}.exchange_min"),
                "window must be ordered",
            );
        }
        if self.horizon < 1 {
            push(errors, format!("{field}.horizon"), "must be ≥ 1");
        }
        if !(self.delta_hours > 0.0) {
            push(errors, format!("{field}.delta_hours"), "must be positive");
        }
        if self.control_levels < 2 {
            push(errors, format!("{field}.control_levels"), "must be ≥ 2");
        }
        if !(self.stepsize_eps > 0.0 && self.stepsize_beta > 0.0) {
            push(
                errors,
                format!("{field}.stepsize_eps"),
                "ε and β must be positive",
            );
        }
        if !(self.rls_lambda > 0.0 && self.rls_lambda <= 1.0) {
            push(errors, format!("{field}.rls_lambda"), "must lie in (0, 1]");
        }
        if !(self.rls_prior > 0.0) {
            push(errors, format!("{field}.rls_prior"), "must be positive");
        }
        if self.training_noise_fraction < 0.0 {
            push(
                errors,
                format!("{field}.training_noise_fraction"),
                "must be ≥ 0",
            );
        }
        if !(self.scale_energy > 0.0 && self.scale_power > 0.0 && self.scale_price > 0.0) {
            push(
                errors,
                format!("{field}.scale_energy"),
                "every scale divisor must be positive",
            );
        }
        for (i, mg) in self.microgrid.iter().enumerate() {
            let f = format!("{field}.microgrid[{i}]");
            mg.dg.collect(&format!("{f}.dg"), errors);
            mg.storage
                .collect(&format!("{f}.storage"), self.d_convention, errors);
            mg.load.collect(&format!("{f}.load"), errors);
            if !(mg.initial_storage_energy >= mg.storage.e_min
                && mg.initial_storage_energy <= mg.storage.e_max)
            {
                push(
                    errors,
                    format!("{f}.initial_storage_energy"),
                    "outside the storage energy window",
                );
            }
            if !(mg.initial_dg_output >= mg.dg.p_min && mg.initial_dg_output <= mg.dg.p_max) {
                push(
                    errors,
                    format!("{f}.initial_dg_output"),
                    "outside the generator output window",
                );
            }
            if !(mg.initial_flex_load >= mg.load.p_min && mg.initial_flex_load <= mg.load.p_max) {
                push(
                    errors,
                    format!("{f}.initial_flex_load"),
                    "outside the flexible-load window",
                );
            }
            mg.renewable.collect(&format!("{f}.renewable"), errors);
            mg.demand.collect(&format!("{f}.demand"), errors);
        }
        let c = &self.central;
        let f = format!("{field}.central");
        c.dg.collect(&format!("{f}.dg"), errors);
        c.storage
            .collect(&format!("{f}.storage"), self.d_convention, errors);
        if !(c.initial_storage_energy >= c.storage.e_min
            && c.initial_storage_energy <= c.storage.e_max)
        {
            push(
                errors,
                format!("{f}.initial_storage_energy"),
                "outside the storage energy window",
            );
        }
        if !(c.initial_dg_output >= c.dg.p_min && c.initial_dg_output <= c.dg.p_max) {
            push(
                errors,
                format!("{f}.initial_dg_output"),
                "outside the generator output window",
            );
        }
        self.price.collect(&format!("{field}.price"), errors);
    }

    pub fn build(&self, seed: u64) -> Result<(NetworkConfig, NetworkData), Error> {
        let conv = self.d_convention;
        let microgrids: Vec<Microgrid> = self
            .microgrid
            .iter()
            .map(|mg| Microgrid {
                dg: mg.dg.to_unit(),
                storage: mg.storage.to_unit(conv),
                load: mg.load.to_unit(),
            })
            .collect();
        let k = microgrids.len();
        let mut storage_energy: Vec<f64> = self
            .microgrid
            .iter()
            .map(|m| m.initial_storage_energy)
            .collect();
        storage_energy.push(self.central.initial_storage_energy);
        let mut dg_output: Vec<f64> = self.microgrid.iter().map(|m| m.initial_dg_output).collect();
        dg_output.push(self.central.initial_dg_output);
        let flex_load = self.microgrid.iter().map(|m| m.initial_flex_load).collect();
        let cfg = NetworkConfig {
            microgrids,
            central: CentralSystem {
                dg: self.central.dg.to_unit(),
                storage: self.central.storage.to_unit(conv),
            },
            exchange_min: self.exchange_min,
            exchange_max: self.exchange_max,
            horizon: self.horizon,
            delta_hours: self.delta_hours,
            control_levels: self.control_levels,
            stepsize_eps: self.stepsize_eps,
            stepsize_beta: self.stepsize_beta,
            rls_lambda: self.rls_lambda,
            rls_prior: self.rls_prior,
            training_noise_fraction: self.training_noise_fraction,
            scales: FeatureScales {
                energy: self.scale_energy,
                power: self.scale_power,
                price: self.scale_price,
            },
            initial: InitialConditions {
                storage_energy,
                dg_output,
                flex_load,
            },
        };
        let price = self.price.realize(seed.wrapping_add(3))?;
        let mut renewable = Vec::with_capacity(k);
        let mut demand = Vec::with_capacity(k);
        for (i, mg) in self.microgrid.iter().enumerate() {
            renewable.push(mg.renewable.realize(seed.wrapping_add(10 + 2 * i as u64))?);
            demand.push(mg.demand.realize(seed.wrapping_add(11 + 2 * i as u64))?);
        }
        let data = NetworkData {
            price,
            renewable,
            demand,
        };
        Ok((cfg, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ScenarioConfig {
        toml::from_str(text).unwrap()
    }

    const TCL_SCENARIO: &str = r#"
strategy = "tcl-schedule"
seed = 9

[tcl_schedule]
stages = 6
x0 = 120.0
eps_tolerance = 1.05
c_cur = 60.0
grid_points = 33

[tcl_schedule.tcl]
alpha = 0.5
beta = 300.0
p_rated = 0.1
n_units = 3200
band_low = 18.0
band_high = 23.0
switch_delay_substeps = 2

[tcl_schedule.dg]
a = 0.01
b = 0.1
p_min = 50.0
p_max = 500.0

[tcl_schedule.bess]
gamma1 = 0.008
gamma2 = 0.008
p_min = -120.0
p_max = 120.0
x_min = 24.0
x_max = 216.0
delta_t = 0.16666666666666666
d_loss = 0.05

[tcl_schedule.solar]
kind = "solar"
length = 6
unit = "kW"
step_minutes = 10
mean = 150.0

[tcl_schedule.t_out]
kind = "temperature"
length = 6
unit = "celsius"
step_minutes = 10
mean = 31.0
"#;

    #[test]
    fn well_formed_scheduler_scenario_has_no_diagnostics() {
        let cfg = parse(TCL_SCENARIO);
        assert_eq!(cfg.validate(), vec![]);
        let (solar, t_out, sp, tcl) = cfg.tcl_schedule.unwrap().build(9).unwrap();
        assert_eq!(solar.len(), 6);
        assert_eq!(t_out.unit(), Unit::Celsius);
        sp.validate().unwrap();
        tcl.validate().unwrap();
    }

    #[test]
    fn band_tolerance_at_or_below_one_is_reported() {
        let text = TCL_SCENARIO.replace("eps_tolerance = 1.05", "eps_tolerance = 0.9");
        let cfg = parse(&text);
        let errors = cfg.validate();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].field, "tcl_schedule.eps_tolerance");
        assert!(errors[0].message.contains("must exceed 1"));
    }

    #[test]
    fn missing_series_file_is_reported_with_its_path() {
        let text = TCL_SCENARIO.replace(
            "[tcl_schedule.solar]\nkind = \"solar\"\nlength = 6\nunit = \"kW\"\nstep_minutes = 10\nmean = 150.0",
            "[tcl_schedule.solar]\npath = \"/nonexistent/solar.csv\"",
        );
        let cfg = parse(&text);
        let errors = cfg.validate();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].field, "tcl_schedule.solar.path");
        assert!(errors[0].message.contains("/nonexistent/solar.csv"));
    }

    #[test]
    fn every_violation_is_listed_not_just_the_first() {
        let text = TCL_SCENARIO
            .replace("eps_tolerance = 1.05", "eps_tolerance = 0.9")
            .replace("x_min = 24.0", "x_min = 300.0")
            .replace("x0 = 120.0", "x0 = 500.0")
            .replace("n_units = 3200", "n_units = 0");
        let cfg = parse(&text);
        let fields: Vec<String> = cfg.validate().into_iter().map(|e| e.field).collect();
        assert!(fields.contains(&"tcl_schedule.eps_tolerance".to_string()));
        assert!(fields.contains(&"tcl_schedule.bess.x_min".to_string()));
        assert!(fields.contains(&"tcl_schedule.tcl.n_units".to_string()));
    }

    #[test]
    fn stray_strategy_block_is_rejected() {
        let text = format!(
            "{TCL_SCENARIO}\n[dp_dispatch]\nhorizon_steps = 1\ngrid_points = 2\ntotal_steps = 1\ne0 = 1.0\n[dp_dispatch.battery]\ne_max = 2.0\ne_min = 0.0\ne_cap_max = 2.0\np_charge_max = 1.0\np_discharge_max = 1.0\nd_loss = 0.05\n[dp_dispatch.cycle]\nn_fail_100 = 1.0\nkp = 1.0\nr_c = 1.0\n[dp_dispatch.renewable]\nkind = \"wind\"\nlength = 1\nunit = \"kW\"\nstep_minutes = 5\nmean = 1.0\n[dp_dispatch.load]\nkind = \"load\"\nlength = 1\nunit = \"kW\"\nstep_minutes = 5\nmean = 1.0\n[dp_dispatch.price]\nkind = \"price\"\nlength = 1\nunit = \"currency_per_MWh\"\nstep_minutes = 5\nmean = 1.0\n"
        );
        let cfg = parse(&text);
        let errors = cfg.validate();
        assert!(errors
            .iter()
            .any(|e| e.field == "dp_dispatch" && e.message.contains("does not belong")));
    }

    #[test]
    fn efficiency_convention_maps_to_loss_fraction() {
        let block = NetStorageBlock {
            gamma1: 0.0,
            gamma2: 0.0,
            e_min: 0.0,
            e_max: 10.0,
            rate_min: -1.0,
            rate_max: 1.0,
            d: 0.95,
        };
        let unit = block.to_unit(DConvention::Efficiency);
        assert!((unit.d_loss - 0.05).abs() < 1e-12);
        let unit = block.to_unit(DConvention::Loss);
        assert!((unit.d_loss - 0.95).abs() < 1e-12);
    }
}
