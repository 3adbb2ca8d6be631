//! Flat `key = value` experiment configuration.
//!
//! Every dimensional value carries an explicit unit (`150 MHz`, `10 dBi`,
//! `1.5 W`, `1 ms`). Omitted keys take the laboratory defaults; unknown keys
//! and unit-less dimensional values are rejected by name.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rare_core::constants::{db_to_linear, BOHR_RADIUS, ELECTRON_CHARGE, SPEED_OF_LIGHT, TWO_PI};
use rare_core::scene::{Geometry, LfmWaveform};
use rare_core::AtomicSystem;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },

    #[error("key `{key}`: `{value}` has no unit; expected one of {expected}")]
    MissingUnit { key: String, value: String, expected: &'static str },

    #[error("key `{key}`: unit `{unit}` not accepted; expected one of {expected}")]
    BadUnit { key: String, unit: String, expected: &'static str },

    #[error("key `{key}`: {reason}")]
    BadValue { key: String, reason: String },

    #[error(transparent)]
    Model(#[from] rare_core::Error),
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    Classic,
    Fixed,
    ItnLimited,
    Pds,
}

impl TrajectoryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryMode::Classic => "classic",
            TrajectoryMode::Fixed => "fixed",
            TrajectoryMode::ItnLimited => "itn_limited",
            TrajectoryMode::Pds => "pds",
        }
    }
}

impl fmt::Display for TrajectoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrajectoryMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classic" => Ok(TrajectoryMode::Classic),
            "fixed" => Ok(TrajectoryMode::Fixed),
            "itn_limited" => Ok(TrajectoryMode::ItnLimited),
            "pds" => Ok(TrajectoryMode::Pds),
            _ => Err(format!("`{s}` is not one of classic, fixed, itn_limited, pds")),
        }
    }
}

/// Quantity stepped across a sweep. Values are held in dB for `Snr` (classic
/// received SNR), W for `PAvg`, Hz for `Bandwidth` and m for `Range`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Snr,
    PAvg,
    Bandwidth,
    Range,
}

impl FromStr for SweepVariable {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "snr" => Ok(SweepVariable::Snr),
            "p_avg" => Ok(SweepVariable::PAvg),
            "bandwidth" => Ok(SweepVariable::Bandwidth),
            "range" => Ok(SweepVariable::Range),
            _ => Err(format!("`{s}` is not one of snr, p_avg, bandwidth, range")),
        }
    }
}

impl SweepVariable {
    fn kind(self) -> Kind {
        match self {
            SweepVariable::Snr => Kind::Decibel,
            SweepVariable::PAvg => Kind::Power,
            SweepVariable::Bandwidth => Kind::Frequency,
            SweepVariable::Range => Kind::Length,
        }
    }
}

/// How per-trial target ranges are chosen when the sweep is not over range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    /// Evenly spaced over the span with a seed-derived offset.
    Ladder,
    /// Independent uniform draws seeded from the base seed.
    Uniform,
    /// Every trial uses `target_range`.
    Fixed,
}

impl FromStr for RangeMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ladder" => Ok(RangeMode::Ladder),
            "uniform" => Ok(RangeMode::Uniform),
            "fixed" => Ok(RangeMode::Fixed),
            _ => Err(format!("`{s}` is not one of ladder, uniform, fixed")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub atoms: AtomicSystem,
    pub waveform: LfmWaveform,
    pub geometry: Geometry,
    /// Average transmit power budget, W.
    pub p_avg: f64,
    pub trajectory_mode: TrajectoryMode,
    pub sweep: Sweep,
    pub trials: usize,
    pub seed: u64,
    pub grid_s: usize,
    /// Samples of the designed power trajectory.
    pub trajectory_grid: usize,
    pub range_mode: RangeMode,
    pub range_min: f64,
    pub range_max: f64,
    pub noiseless: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            atoms: AtomicSystem::default(),
            waveform: LfmWaveform::default(),
            geometry: Geometry::default(),
            p_avg: 1.5,
            trajectory_mode: TrajectoryMode::Pds,
            sweep: Sweep { variable: SweepVariable::Snr, values: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0] },
            trials: 300,
            seed: 1,
            grid_s: 1 << 18,
            trajectory_grid: 4096,
            range_mode: RangeMode::Ladder,
            range_min: 100.0,
            range_max: 10e3,
            noiseless: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Frequency,
    AngularFrequency,
    Power,
    Gain,
    Decibel,
    Length,
    Time,
    Dipole,
    Density,
    Resistance,
    Temperature,
    Area,
    Ratio,
    Count,
    Word,
}

impl Kind {
    fn expected(self) -> &'static str {
        match self {
            Kind::Frequency | Kind::AngularFrequency => "Hz, kHz, MHz, GHz, rad/s",
            Kind::Power => "W, mW, uW, kW, MW, dBW, dBm",
            Kind::Gain => "dBi, dB",
            Kind::Decibel => "dB",
            Kind::Length => "m, km, cm, mm, um, nm",
            Kind::Time => "s, ms, us, ns",
            Kind::Dipole => "ea0, C*m",
            Kind::Density => "m^-3, cm^-3",
            Kind::Resistance => "Ohm, kOhm",
            Kind::Temperature => "K",
            Kind::Area => "m^2, dBsm",
            Kind::Ratio => "a bare number",
            Kind::Count => "a bare integer",
            Kind::Word => "a bare word",
        }
    }

    fn needs_unit(self) -> bool {
        !matches!(self, Kind::Ratio | Kind::Count | Kind::Word)
    }
}

const KEYS: &[(&str, Kind)] = &[
    ("probe_rabi", Kind::AngularFrequency),
    ("coupling_rabi", Kind::AngularFrequency),
    ("excited_decay", Kind::AngularFrequency),
    ("rydberg_decay_lower", Kind::AngularFrequency),
    ("rydberg_decay_upper", Kind::AngularFrequency),
    ("probe_dipole", Kind::Dipole),
    ("rydberg_dipole", Kind::Dipole),
    ("atom_density", Kind::Density),
    ("cell_length", Kind::Length),
    ("probe_wavelength", Kind::Length),
    ("probe_power", Kind::Power),
    ("load_resistance", Kind::Resistance),
    ("quantum_efficiency", Kind::Ratio),
    ("rydberg_transition", Kind::AngularFrequency),
    ("carrier", Kind::AngularFrequency),
    ("bandwidth", Kind::Frequency),
    ("symbol_duration", Kind::Time),
    ("target_range", Kind::Length),
    ("reference_distance", Kind::Length),
    ("tx_gain", Kind::Gain),
    ("reference_tx_gain", Kind::Gain),
    ("rx_gain", Kind::Gain),
    ("lna_gain", Kind::Gain),
    ("cross_section", Kind::Area),
    ("noise_temperature", Kind::Temperature),
    ("p_avg", Kind::Power),
    ("trajectory_mode", Kind::Word),
    ("sweep_variable", Kind::Word),
    ("sweep_values", Kind::Word),
    ("trials", Kind::Count),
    ("seed", Kind::Count),
    ("grid_s", Kind::Count),
    ("trajectory_grid", Kind::Count),
    ("range_mode", Kind::Word),
    ("range_min", Kind::Length),
    ("range_max", Kind::Length),
    ("noiseless", Kind::Word),
];

/// Names of every accepted key, in schema order.
pub fn keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|(k, _)| *k)
}

/// Splits `"150 MHz"` or `"150MHz"` into the longest numeric prefix and the
/// remaining unit text.
fn split_number(text: &str) -> Option<(f64, &str)> {
    let text = text.trim();
    let mut ends: Vec<usize> = text.char_indices().map(|(i, _)| i).skip(1).collect();
    ends.push(text.len());
    for &end in ends.iter().rev() {
        if let Ok(v) = text[..end].trim().parse::<f64>() {
            if text[..end].chars().all(|c| c.is_ascii_digit() || "+-.eE ".contains(c)) {
                return Some((v, text[end..].trim()));
            }
        }
    }
    None
}

fn convert(kind: Kind, value: f64, unit: &str) -> Option<f64> {
    let micro = |u: &str, tail: &str| u == format!("u{tail}") || u == format!("µ{tail}") || u == format!("μ{tail}");
    let decibel = |x: f64| db_to_linear(x);
    Some(match kind {
        Kind::Frequency | Kind::AngularFrequency => {
            let hz = match unit {
                "Hz" => value,
                "kHz" => value * 1e3,
                "MHz" => value * 1e6,
                "GHz" => value * 1e9,
                "THz" => value * 1e12,
                "rad/s" => value / TWO_PI,
                _ => return None,
            };
            if unit == "rad/s" && kind == Kind::AngularFrequency {
                value
            } else if kind == Kind::AngularFrequency {
                TWO_PI * hz
            } else {
                hz
            }
        }
        Kind::Power => match unit {
            "W" => value,
            "mW" => value * 1e-3,
            u if micro(u, "W") => value * 1e-6,
            "nW" => value * 1e-9,
            "kW" => value * 1e3,
            "MW" => value * 1e6,
            "dBW" => decibel(value),
            "dBm" => decibel(value - 30.0),
            _ => return None,
        },
        Kind::Gain => match unit {
            "dBi" | "dB" => decibel(value),
            _ => return None,
        },
        Kind::Decibel => match unit {
            "dB" => value,
            _ => return None,
        },
        Kind::Length => match unit {
            "m" => value,
            "km" => value * 1e3,
            "cm" => value * 1e-2,
            "mm" => value * 1e-3,
            u if micro(u, "m") => value * 1e-6,
            "nm" => value * 1e-9,
            _ => return None,
        },
        Kind::Time => match unit {
            "s" => value,
            "ms" => value * 1e-3,
            u if micro(u, "s") => value * 1e-6,
            "ns" => value * 1e-9,
            _ => return None,
        },
        Kind::Dipole => match unit {
            "ea0" => value * ELECTRON_CHARGE * BOHR_RADIUS,
            "C*m" | "Cm" | "C m" => value,
            _ => return None,
        },
        Kind::Density => match unit {
            "m^-3" | "/m^3" => value,
            "cm^-3" | "/cm^3" => value * 1e6,
            _ => return None,
        },
        Kind::Resistance => match unit {
            "Ohm" | "ohm" | "Ω" => value,
            "kOhm" | "kohm" | "kΩ" => value * 1e3,
            _ => return None,
        },
        Kind::Temperature => match unit {
            "K" => value,
            _ => return None,
        },
        Kind::Area => match unit {
            "m^2" | "m2" => value,
            "dBsm" => decibel(value),
            _ => return None,
        },
        Kind::Ratio | Kind::Count | Kind::Word => return None,
    })
}

fn quantity(key: &str, kind: Kind, text: &str) -> Result<f64> {
    let (value, unit) = split_number(text).ok_or_else(|| ConfigError::BadValue {
        key: key.to_string(),
        reason: format!("`{text}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(ConfigError::BadValue { key: key.to_string(), reason: format!("`{text}` is not finite") });
    }
    if !kind.needs_unit() {
        if !unit.is_empty() {
            return Err(ConfigError::BadUnit { key: key.to_string(), unit: unit.to_string(), expected: kind.expected() });
        }
        return Ok(value);
    }
    if unit.is_empty() {
        return Err(ConfigError::MissingUnit { key: key.to_string(), value: text.to_string(), expected: kind.expected() });
    }
    convert(kind, value, unit)
        .ok_or_else(|| ConfigError::BadUnit { key: key.to_string(), unit: unit.to_string(), expected: kind.expected() })
}

fn count(key: &str, text: &str) -> Result<u64> {
    text.trim().parse::<u64>().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        reason: format!("`{text}` is not a non-negative integer"),
    })
}

fn word<T: FromStr<Err = String>>(key: &str, text: &str) -> Result<T> {
    text.trim().parse().map_err(|reason| ConfigError::BadValue { key: key.to_string(), reason })
}

/// Comma-separated list; bare items take the unit of the last item.
fn quantity_list(key: &str, kind: Kind, text: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = text.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::BadValue { key: key.to_string(), reason: "empty list item".into() });
    }
    let trailing = split_number(items[items.len() - 1]).map(|(_, u)| u.to_string()).unwrap_or_default();
    items
        .iter()
        .map(|item| match split_number(item) {
            Some((_, "")) if !trailing.is_empty() => quantity(key, kind, &format!("{item} {trailing}")),
            _ => quantity(key, kind, item),
        })
        .collect()
}

/// Parses raw config text into a validated experiment configuration.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, v)| !k.is_empty() && !v.is_empty())
            .ok_or_else(|| ConfigError::Syntax { line: line_no, text: line.trim().to_string() })?;
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::UnknownKey { line: line_no, key: key.to_string() });
        }
        if entries.insert(key, (line_no, value)).is_some() {
            return Err(ConfigError::Duplicate { line: line_no, key: key.to_string() });
        }
    }

    let mut cfg = ExperimentConfig::default();
    let get = |key: &str| entries.get(key).map(|(_, v)| *v);
    let kind_of = |key: &str| KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind).expect("known key");
    let q = |key: &str, slot: &mut f64| -> Result<()> {
        if let Some(text) = get(key) {
            *slot = quantity(key, kind_of(key), text)?;
        }
        Ok(())
    };

    let a = &mut cfg.atoms;
    q("probe_rabi", &mut a.omega_p_rabi)?;
    q("coupling_rabi", &mut a.omega_c_rabi)?;
    q("excited_decay", &mut a.gamma2)?;
    q("rydberg_decay_lower", &mut a.gamma3)?;
    q("rydberg_decay_upper", &mut a.gamma4)?;
    q("probe_dipole", &mut a.mu12)?;
    q("rydberg_dipole", &mut a.mu34)?;
    q("atom_density", &mut a.n_atoms)?;
    q("cell_length", &mut a.cell_length)?;
    q("probe_wavelength", &mut a.lambda_probe)?;
    q("probe_power", &mut a.p_in)?;
    q("load_resistance", &mut a.r_load)?;
    q("quantum_efficiency", &mut a.quantum_eff)?;
    q("rydberg_transition", &mut a.omega34)?;

    let (mut omega0, mut bandwidth, mut symbol) =
        (cfg.waveform.omega0, cfg.waveform.bandwidth, cfg.waveform.symbol_duration);
    q("carrier", &mut omega0)?;
    q("bandwidth", &mut bandwidth)?;
    q("symbol_duration", &mut symbol)?;
    cfg.waveform = LfmWaveform::new(omega0, bandwidth, symbol)?;

    let g = &mut cfg.geometry;
    q("target_range", &mut g.target_range)?;
    q("reference_distance", &mut g.tx_rx_distance)?;
    q("tx_gain", &mut g.g_tx)?;
    q("reference_tx_gain", &mut g.g_tx_ref)?;
    q("rx_gain", &mut g.g_rx)?;
    q("lna_gain", &mut g.g_lna)?;
    q("cross_section", &mut g.cross_section)?;
    q("noise_temperature", &mut g.noise_temperature)?;

    q("p_avg", &mut cfg.p_avg)?;
    q("range_min", &mut cfg.range_min)?;
    q("range_max", &mut cfg.range_max)?;

    if let Some(text) = get("trajectory_mode") {
        cfg.trajectory_mode = word("trajectory_mode", text)?;
    }
    if let Some(text) = get("range_mode") {
        cfg.range_mode = word("range_mode", text)?;
    }
    if let Some(text) = get("noiseless") {
        cfg.noiseless = match text.trim() {
            "true" => true,
            "false" => false,
            other => {
                return Err(ConfigError::BadValue { key: "noiseless".into(), reason: format!("`{other}` is not true or false") })
            }
        };
    }
    if let Some(text) = get("sweep_variable") {
        cfg.sweep.variable = word("sweep_variable", text)?;
        if get("sweep_values").is_none() {
            return Err(ConfigError::BadValue {
                key: "sweep_values".into(),
                reason: "required when sweep_variable is set".into(),
            });
        }
    }
    if let Some(text) = get("sweep_values") {
        cfg.sweep.values = quantity_list("sweep_values", cfg.sweep.variable.kind(), text)?;
    }
    for (key, slot) in [("trials", &mut cfg.trials), ("grid_s", &mut cfg.grid_s), ("trajectory_grid", &mut cfg.trajectory_grid)] {
        if let Some(text) = get(key) {
            *slot = count(key, text)? as usize;
        }
    }
    if let Some(text) = get("seed") {
        cfg.seed = count("seed", text)?;
    }

    cfg.check()?;
    Ok(cfg)
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), reason: reason.into() }
}

impl ExperimentConfig {
    /// Cross-field checks applied after parsing.
    pub fn check(&self) -> Result<()> {
        self.atoms.validate()?;
        self.geometry.validate()?;
        if !(self.p_avg > 0.0) {
            return Err(bad("p_avg", "must be positive"));
        }
        if self.trials == 0 {
            return Err(bad("trials", "must be at least 1"));
        }
        if self.grid_s < 16 {
            return Err(bad("grid_s", "must be at least 16"));
        }
        if self.trajectory_grid < 2 {
            return Err(bad("trajectory_grid", "must be at least 2"));
        }
        let v = &self.sweep.values;
        if v.is_empty() {
            return Err(bad("sweep_values", "at least one value required"));
        }
        if let Some(w) = v.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(bad("sweep_values", format!("values must be strictly increasing ({} then {})", w[0], w[1])));
        }
        let positive = !matches!(self.sweep.variable, SweepVariable::Snr);
        if positive && v.iter().any(|&x| !(x > 0.0)) {
            return Err(bad("sweep_values", "values must be positive"));
        }
        if self.sweep.variable == SweepVariable::Range && v[0] <= self.geometry.tx_rx_distance {
            return Err(bad("sweep_values", "ranges must exceed the reference distance"));
        }
        if self.sweep.variable != SweepVariable::Range && self.range_mode != RangeMode::Fixed {
            if !(self.range_min > self.geometry.tx_rx_distance && self.range_max >= self.range_min) {
                return Err(bad("range_min", "need reference distance < range_min <= range_max"));
            }
        }
        self.check_nyquist()
    }

    /// Farthest range any trial can draw.
    pub fn max_range(&self) -> f64 {
        match (self.sweep.variable, self.range_mode) {
            (SweepVariable::Range, _) => *self.sweep.values.last().expect("nonempty sweep"),
            (_, RangeMode::Fixed) => self.geometry.target_range,
            _ => self.range_max,
        }
    }

    fn check_nyquist(&self) -> Result<()> {
        let widest = match self.sweep.variable {
            SweepVariable::Bandwidth => *self.sweep.values.last().expect("nonempty sweep"),
            _ => self.waveform.bandwidth,
        };
        let lag = 2.0 * (self.max_range() - self.geometry.tx_rx_distance) / SPEED_OF_LIGHT;
        let beat_hz = lag * widest / self.waveform.symbol_duration;
        let nyquist = 0.5 * self.grid_s as f64 / self.waveform.symbol_duration;
        if beat_hz >= nyquist {
            return Err(bad(
                "grid_s",
                format!("beat frequency {beat_hz:.4e} Hz at the farthest range reaches the Nyquist limit {nyquist:.4e} Hz"),
            ));
        }
        Ok(())
    }
}
