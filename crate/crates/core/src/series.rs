//! Time-series loading, windowing, synthesis and forecast-error injection.
//!
//! Series files are plain text: one header line
//! `# unit=<tag> step_minutes=<n>` followed by `index,value` rows with
//! contiguous zero-based indices. The format is deliberately minimal so that
//! fixtures can be written by hand and diffed byte for byte.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::rng::Rng64;
use crate::Result;

/// Physical unit carried by a series file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Kw,
    Mw,
    Kwh,
    Mwh,
    /// Price per megawatt hour; the currency itself is never interpreted.
    CurrencyPerMwh,
    Celsius,
}

impl Unit {
    pub fn parse(tag: &str) -> Option<Unit> {
        match tag {
            "kW" => Some(Unit::Kw),
            "MW" => Some(Unit::Mw),
            "kWh" => Some(Unit::Kwh),
            "MWh" => Some(Unit::Mwh),
            "currency_per_MWh" => Some(Unit::CurrencyPerMwh),
            "celsius" => Some(Unit::Celsius),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Kw => "kW",
            Unit::Mw => "MW",
            Unit::Kwh => "kWh",
            Unit::Mwh => "MWh",
            Unit::CurrencyPerMwh => "currency_per_MWh",
            Unit::Celsius => "celsius",
        }
    }

    /// `true` for units that cannot meaningfully go negative; forecast-error
    /// injection clamps those at zero.
    pub fn non_negative(self) -> bool {
        matches!(self, Unit::Kw | Unit::Mw | Unit::Kwh | Unit::Mwh)
    }

    /// Multiplier taking a value in `self` to `target`, if convertible.
    fn factor_to(self, target: Unit) -> Option<f64> {
        match (self, target) {
            (a, b) if a == b => Some(1.0),
            (Unit::Kw, Unit::Mw) | (Unit::Kwh, Unit::Mwh) => Some(1e-3),
            (Unit::Mw, Unit::Kw) | (Unit::Mwh, Unit::Kwh) => Some(1e3),
            _ => None,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A uniformly sampled series with a unit tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    unit: Unit,
    step_minutes: u32,
    values: Vec<f64>,
}

impl TimeSeries {
    /// Builds a series, rejecting empty data, a zero step and non-finite
    /// values.
    pub fn new(unit: Unit, step_minutes: u32, values: Vec<f64>) -> Result<TimeSeries> {
        if step_minutes == 0 {
            return Err(Error::invalid("step_minutes", "must be positive"));
        }
        if values.is_empty() {
            return Err(Error::invalid("values", "series must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("non-finite value at index {i}")));
        }
        Ok(TimeSeries {
            unit,
            step_minutes,
            values,
        })
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    /// Step length in hours, the time base of every power-to-energy product.
    pub fn step_hours(&self) -> f64 {
        f64::from(self.step_minutes) / 60.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean of absolute values; the scale reference for error injection.
    pub fn mean_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.values.len() as f64
    }

    /// Contiguous sub-series of `len` steps starting at `start`, re-indexed
    /// from zero.
    pub fn window(&self, start: usize, len: usize) -> Result<TimeSeries> {
        if len == 0 {
            return Err(Error::invalid("len", "window must not be empty"));
        }
        let end = start.checked_add(len).filter(|&e| e <= self.values.len());
        let Some(end) = end else {
            return Err(Error::invalid(
                "start",
                format!(
                    "window [{start}, {}) exceeds series length {}",
                    start.saturating_add(len),
                    self.values.len()
                ),
            ));
        };
        Ok(TimeSeries {
            unit: self.unit,
            step_minutes: self.step_minutes,
            values: self.values[start..end].to_vec(),
        })
    }

    /// Unit conversion; only kW↔MW and kWh↔MWh scalings exist.
    pub fn convert(&self, target: Unit) -> Result<TimeSeries> {
        let Some(f) = self.unit.factor_to(target) else {
            return Err(Error::UnitMismatch {
                from: self.unit.as_str(),
                to: target.as_str(),
            });
        };
        let values = if f == 1.0 {
            self.values.clone()
        } else {
            self.values.iter().map(|v| v * f).collect()
        };
        Ok(TimeSeries {
            unit: target,
            step_minutes: self.step_minutes,
            values,
        })
    }

    /// Perturbs every value with zero-mean Gaussian noise whose standard
    /// deviation is `sigma_fraction` of the series' mean absolute value.
    /// Power and energy series are clamped at zero afterwards.
    /// `sigma_fraction == 0` returns the input unchanged.
    ///
    /// # Panics
    ///
    /// Panics if `sigma_fraction` is negative or non-finite.
    pub fn inject_forecast_error(&self, spec: &ForecastErrorSpec) -> TimeSeries {
        assert!(
            spec.sigma_fraction.is_finite() && spec.sigma_fraction >= 0.0,
            "sigma_fraction must be a non-negative finite number"
        );
        if spec.sigma_fraction == 0.0 {
            return self.clone();
        }
        let sigma = spec.sigma_fraction * self.mean_abs();
        let mut rng = Rng64::new(spec.seed);
        let clamp = self.unit.non_negative();
        let values = self
            .values
            .iter()
            .map(|v| {
                let noisy = v + sigma * rng.next_gaussian();
                if clamp {
                    noisy.max(0.0)
                } else {
                    noisy
                }
            })
            .collect();
        TimeSeries {
            unit: self.unit,
            step_minutes: self.step_minutes,
            values,
        }
    }
}

/// Gaussian forecast-error model: one standard deviation expressed as a
/// fraction of the series' mean absolute value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastErrorSpec {
    pub sigma_fraction: f64,
    pub seed: u64,
}

/// Reads a series file. See the module docs for the format.
pub fn load_series(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    parse_series(&text).map_err(|(line, msg)| Error::SeriesFormat {
        path: name,
        line,
        msg,
    })
}

fn parse_series(text: &str) -> std::result::Result<TimeSeries, (usize, String)> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err((1, "empty file".into()));
    };
    let (unit, step_minutes) = parse_header(header).map_err(|msg| (1, msg))?;
    let mut values = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            return Err((lineno, "blank line inside data section".into()));
        }
        let Some((idx, val)) = line.split_once(',') else {
            return Err((lineno, format!("expected `index,value`, got `{line}`")));
        };
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| (lineno, format!("bad index `{idx}`")))?;
        if idx != values.len() {
            return Err((
                lineno,
                format!("non-contiguous index {idx}, expected {}", values.len()),
            ));
        }
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|_| (lineno, format!("bad value `{val}`")))?;
        if !val.is_finite() {
            return Err((lineno, format!("non-finite value {val}")));
        }
        values.push(val);
    }
    if values.is_empty() {
        return Err((1, "series has no data rows".into()));
    }
    Ok(TimeSeries {
        unit,
        step_minutes,
        values,
    })
}

fn parse_header(line: &str) -> std::result::Result<(Unit, u32), String> {
    let Some(rest) = line.strip_prefix('#') else {
        return Err("missing `# unit=<tag> step_minutes=<n>` header".into());
    };
    let mut unit = None;
    let mut step = None;
    for token in rest.split_whitespace() {
        if let Some(tag) = token.strip_prefix("unit=") {
            unit = Some(Unit::parse(tag).ok_or_else(|| format!("unknown unit `{tag}`"))?);
        } else if let Some(n) = token.strip_prefix("step_minutes=") {
            let n: u32 = n.parse().map_err(|_| format!("bad step_minutes `{n}`"))?;
            if n == 0 {
                return Err("step_minutes must be positive".into());
            }
            step = Some(n);
        } else {
            return Err(format!("unexpected header token `{token}`"));
        }
    }
    match (unit, step) {
        (Some(u), Some(s)) => Ok((u, s)),
        (None, _) => Err("header is missing `unit=`".into()),
        (_, None) => Err("header is missing `step_minutes=`".into()),
    }
}

/// Serializes a series in the canonical file format.
pub fn write_series(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_series(series))?;
    Ok(())
}

fn render_series(series: &TimeSeries) -> String {
    let mut out = format!(
        "# unit={} step_minutes={}\n",
        series.unit, series.step_minutes
    );
    for (i, v) in series.values.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

/// What a synthesized series represents; picks the default sign clamp and a
/// phase offset so that co-generated series are not mutually in phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Wind,
    Solar,
    Load,
    Price,
    Temperature,
}

impl SeriesKind {
    fn phase(self) -> f64 {
        match self {
            SeriesKind::Wind => 0.0,
            SeriesKind::Solar => 1.3,
            SeriesKind::Load => 2.1,
            SeriesKind::Price => 3.4,
            SeriesKind::Temperature => 4.2,
        }
    }

    fn clamp_floor(self) -> Option<f64> {
        match self {
            SeriesKind::Wind | SeriesKind::Solar | SeriesKind::Load => Some(0.0),
            SeriesKind::Price | SeriesKind::Temperature => None,
        }
    }
}

/// Shape parameters for [`synthesize_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisParams {
    pub unit: Unit,
    pub step_minutes: u32,
    pub mean: f64,
    /// Peak deviation of the diurnal sinusoid around `mean`.
    pub amplitude: f64,
    /// Period of the sinusoid in steps.
    pub period_steps: u32,
    /// Gaussian noise, one standard deviation as a fraction of `mean.abs()`.
    pub noise_fraction: f64,
    pub clamp_min: Option<f64>,
    pub clamp_max: Option<f64>,
}

impl SynthesisParams {
    pub fn new(unit: Unit, step_minutes: u32, mean: f64) -> SynthesisParams {
        SynthesisParams {
            unit,
            step_minutes,
            mean,
            amplitude: 0.0,
            period_steps: 288,
            noise_fraction: 0.0,
            clamp_min: None,
            clamp_max: None,
        }
    }

    pub fn with_wave(mut self, amplitude: f64, period_steps: u32) -> SynthesisParams {
        self.amplitude = amplitude;
        self.period_steps = period_steps;
        self
    }

    pub fn with_noise(mut self, noise_fraction: f64) -> SynthesisParams {
        self.noise_fraction = noise_fraction;
        self
    }

    pub fn with_clamp(mut self, min: Option<f64>, max: Option<f64>) -> SynthesisParams {
        self.clamp_min = min;
        self.clamp_max = max;
        self
    }
}

/// Generates a synthetic scenario series: a diurnal sinusoid around a mean
/// with seeded Gaussian noise, clamped to the physically sensible range for
/// `kind`. A single-step series degenerates to exactly the mean.
pub fn synthesize_scenario(
    kind: SeriesKind,
    length: usize,
    seed: u64,
    params: &SynthesisParams,
) -> Result<TimeSeries> {
    if length == 0 {
        return Err(Error::invalid("length", "must be positive"));
    }
    if params.period_steps == 0 {
        return Err(Error::invalid("period_steps", "must be positive"));
    }
    if length == 1 {
        return TimeSeries::new(params.unit, params.step_minutes, vec![params.mean]);
    }
    let mut rng = Rng64::new(seed);
    let sigma = params.noise_fraction * params.mean.abs();
    let floor = params.clamp_min.or(kind.clamp_floor());
    let omega = 2.0 * std::f64::consts::PI / f64::from(params.period_steps);
    let values = (0..length)
        .map(|t| {
            let mut v = params.mean
                + params.amplitude * (omega * t as f64 + kind.phase()).sin()
                + sigma * rng.next_gaussian();
            if let Some(lo) = floor {
                v = v.max(lo);
            }
            if let Some(hi) = params.clamp_max {
                v = v.min(hi);
            }
            v
        })
        .collect();
    TimeSeries::new(params.unit, params.step_minutes, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(Unit::Mw, 5, values).unwrap()
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wind.csv");
        let original = series(vec![1.5, 0.0, -2.25, 140.0]);
        write_series(&original, &path).unwrap();
        let loaded = load_series(&path).unwrap();
        assert_eq!(loaded, original);
        // A second write of the loaded series is byte-identical.
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(render_series(&loaded), text);
    }

    #[test]
    fn header_is_required_and_strict() {
        assert!(parse_series("0,1.0\n").is_err());
        assert!(parse_series("# unit=parsecs step_minutes=5\n0,1\n").is_err());
        assert!(parse_series("# unit=MW step_minutes=0\n0,1\n").is_err());
        assert!(parse_series("# unit=MW\n0,1\n").is_err());
        assert!(parse_series("# step_minutes=5\n0,1\n").is_err());
    }

    #[test]
    fn rejects_gap_in_indices() {
        let err = parse_series("# unit=MW step_minutes=5\n0,1.0\n2,2.0\n");
        assert!(matches!(err, Err((3, _))), "{err:?}");
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(parse_series("# unit=MW step_minutes=5\n0,NaN\n").is_err());
        assert!(parse_series("# unit=MW step_minutes=5\n0,inf\n").is_err());
        assert!(parse_series("# unit=MW step_minutes=5\n").is_err());
        assert!(TimeSeries::new(Unit::Mw, 5, vec![]).is_err());
        assert!(TimeSeries::new(Unit::Mw, 5, vec![f64::NAN]).is_err());
    }

    #[test]
    fn window_identity_and_bounds() {
        let s = series(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.window(0, s.len()).unwrap(), s);
        assert_eq!(s.window(1, 2).unwrap().values(), &[2.0, 3.0]);
        assert!(s.window(1, 4).is_err());
        assert!(s.window(4, 1).is_err());
        assert!(s.window(0, 0).is_err());
        assert!(s.window(usize::MAX, 2).is_err());
    }

    #[test]
    fn zero_sigma_error_injection_is_identity() {
        let s = series(vec![3.0, 1.0, 4.0]);
        let spec = ForecastErrorSpec {
            sigma_fraction: 0.0,
            seed: 9,
        };
        assert_eq!(s.inject_forecast_error(&spec), s);
    }

    #[test]
    fn error_injection_clamps_power_but_not_price() {
        let spec = ForecastErrorSpec {
            sigma_fraction: 5.0,
            seed: 11,
        };
        let wind = series(vec![0.1; 64]).inject_forecast_error(&spec);
        assert!(wind.values().iter().all(|&v| v >= 0.0));
        let price = TimeSeries::new(Unit::CurrencyPerMwh, 5, vec![0.1; 64])
            .unwrap()
            .inject_forecast_error(&spec);
        assert!(price.values().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn error_injection_is_seed_deterministic() {
        let s = series(vec![10.0; 32]);
        let spec = ForecastErrorSpec {
            sigma_fraction: 0.05,
            seed: 77,
        };
        assert_eq!(s.inject_forecast_error(&spec), s.inject_forecast_error(&spec));
        let other = ForecastErrorSpec {
            sigma_fraction: 0.05,
            seed: 78,
        };
        assert_ne!(s.inject_forecast_error(&spec), s.inject_forecast_error(&other));
    }

    #[test]
    fn single_step_synthesis_degenerates_to_mean() {
        let params = SynthesisParams::new(Unit::Mw, 5, 90.0)
            .with_wave(50.0, 288)
            .with_noise(0.3);
        let s = synthesize_scenario(SeriesKind::Wind, 1, 5, &params).unwrap();
        assert_eq!(s.values(), &[90.0]);
    }

    #[test]
    fn synthesis_respects_clamps() {
        let params = SynthesisParams::new(Unit::Mw, 5, 90.0)
            .with_wave(80.0, 48)
            .with_noise(0.5)
            .with_clamp(None, Some(140.0));
        let s = synthesize_scenario(SeriesKind::Wind, 500, 123, &params).unwrap();
        assert!(s.values().iter().all(|&v| (0.0..=140.0).contains(&v)));
        let p = SynthesisParams::new(Unit::CurrencyPerMwh, 5, 10.0)
            .with_wave(5.0, 48)
            .with_noise(3.0);
        let price = synthesize_scenario(SeriesKind::Price, 500, 123, &p).unwrap();
        assert!(price.values().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn unit_conversions_scale_by_a_thousand() {
        let s = series(vec![1.5]);
        assert_eq!(s.convert(Unit::Kw).unwrap().values(), &[1500.0]);
        assert_eq!(s.convert(Unit::Mw).unwrap(), s);
        assert!(s.convert(Unit::Celsius).is_err());
        assert!(s.convert(Unit::Mwh).is_err());
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(values in proptest::collection::vec(-1e9f64..1e9, 1..40)) {
            let s = series(values);
            let parsed = parse_series(&render_series(&s)).unwrap();
            prop_assert_eq!(parsed, s);
        }

        #[test]
        fn windows_agree_with_slices(start in 0usize..20, len in 1usize..20) {
            let s = series((0..40).map(f64::from).collect());
            let w = s.window(start, len).unwrap();
            prop_assert_eq!(w.values(), &s.values()[start..start + len]);
        }
    }
}
