//! Key-value experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. List values are
//! comma separated, and every list-valued sweep axis takes part in a
//! Cartesian product. Unknown keys are rejected.
//!
//! ```text
//! detectors     = wesn, esn, lmmse-lmmse
//! n_antennas    = 4
//! pilots        = mimo-comb
//! snr_db        = 10, 20, 30
//! pa_power_db   = -20, -8.8
//! n_trials      = 200
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::modem::PilotKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    Wesn,
    /// Reservoir without a buffer (`M = 1`).
    Esn,
    LmmseLmmse,
    LmmseSd,
    PerfectLmmse,
}

impl Detector {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "wesn" => Self::Wesn,
            "esn" => Self::Esn,
            "lmmse-lmmse" | "lmmse" => Self::LmmseLmmse,
            "lmmse-sd" | "sd" => Self::LmmseSd,
            "perfect-lmmse" | "perfect" => Self::PerfectLmmse,
            other => return Err(Error::UnknownMethod(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Wesn => "wesn",
            Self::Esn => "esn",
            Self::LmmseLmmse => "lmmse-lmmse",
            Self::LmmseSd => "lmmse-sd",
            Self::PerfectLmmse => "perfect-lmmse",
        }
    }

    pub fn is_reservoir(&self) -> bool {
        matches!(self, Self::Wesn | Self::Esn)
    }

    /// Needs a pilot-based channel estimate.
    pub fn needs_csi_estimate(&self) -> bool {
        matches!(self, Self::LmmseLmmse | Self::LmmseSd)
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaModel {
    Linear,
    Rapp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceModel {
    /// True tap delays and powers.
    Tap,
    /// Uncorrelated subcarriers.
    Identity,
}

/// Pilot layout family; the overlapping reservoir pattern takes its symbol
/// count from the `pilot_symbols` axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotFamily {
    Fixed(PilotKind),
    RcOverlapping,
}

impl PilotFamily {
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "rc-overlapping" {
            return Ok(Self::RcOverlapping);
        }
        Ok(Self::Fixed(PilotKind::parse(&t)?))
    }

    pub fn kind(&self, pilot_symbols: usize) -> PilotKind {
        match *self {
            Self::Fixed(k) => k,
            Self::RcOverlapping => PilotKind::RcMimoOverlapping(pilot_symbols),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Fixed(k) => k.name(),
            Self::RcOverlapping => "rc-overlapping".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub detectors: Vec<Detector>,
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub cp_len: usize,
    pub modulation: usize,
    pub pilots: PilotFamily,
    pub n_taps: usize,
    pub tau_max: usize,
    pub pdp_decay: f64,
    pub pa: PaModel,
    pub usat_db: f64,
    pub smoothness: f64,
    pub covariance: CovarianceModel,
    pub spectral_target: f64,
    pub input_scale: f64,
    pub readout_delay: usize,
    pub training_ber: bool,
    pub snr_db: Vec<f64>,
    pub pa_power_db: Vec<f64>,
    pub n_neurons: Vec<usize>,
    pub buffer_len: Vec<usize>,
    pub pilot_symbols: Vec<usize>,
    pub doppler_hz: Vec<f64>,
    pub n_trials: usize,
    pub master_seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            detectors: vec![Detector::Wesn, Detector::Esn, Detector::LmmseLmmse],
            n_antennas: 1,
            n_subcarriers: 128,
            cp_len: 16,
            modulation: 16,
            pilots: PilotFamily::Fixed(PilotKind::SisoCombFull),
            n_taps: 6,
            tau_max: 10,
            pdp_decay: 2.0,
            pa: PaModel::Rapp,
            usat_db: -11.78,
            smoothness: 3.0,
            covariance: CovarianceModel::Tap,
            spectral_target: 0.9,
            input_scale: 0.5,
            readout_delay: 0,
            training_ber: false,
            snr_db: vec![20.0],
            pa_power_db: vec![-20.0],
            n_neurons: vec![64],
            buffer_len: vec![30],
            pilot_symbols: vec![1],
            doppler_hz: vec![0.0],
            n_trials: 20,
            master_seed: 1,
            output: None,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{}`", v.trim())))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::Config(format!("`{key}`: `{other}` is not a boolean"))),
    }
}

impl ExperimentConfig {
    /// Parses a configuration file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let k = k.trim();
            if seen.insert(k.to_string(), lineno).is_some() {
                return Err(Error::Config(format!("line {}: `{k}` given twice", lineno + 1)));
            }
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key, as from a config line or a `key=value` override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "detectors" => {
                self.detectors = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Detector::parse).collect::<Result<_>>()?
            }
            "n_antennas" => self.n_antennas = parse_one(key, v)?,
            "n_subcarriers" => self.n_subcarriers = parse_one(key, v)?,
            "cp_len" => self.cp_len = parse_one(key, v)?,
            "modulation" => self.modulation = parse_one(key, v)?,
            "pilots" => self.pilots = PilotFamily::parse(v)?,
            "n_taps" => self.n_taps = parse_one(key, v)?,
            "tau_max" => self.tau_max = parse_one(key, v)?,
            "pdp_decay" => self.pdp_decay = parse_one(key, v)?,
            "pa" => {
                self.pa = match v.trim().to_ascii_lowercase().as_str() {
                    "linear" => PaModel::Linear,
                    "rapp" => PaModel::Rapp,
                    other => return Err(Error::Config(format!("`pa`: unknown model `{other}`"))),
                }
            }
            "usat_db" => self.usat_db = parse_one(key, v)?,
            "smoothness" => self.smoothness = parse_one(key, v)?,
            "covariance" => {
                self.covariance = match v.trim().to_ascii_lowercase().as_str() {
                    "tap" => CovarianceModel::Tap,
                    "identity" => CovarianceModel::Identity,
                    other => return Err(Error::Config(format!("`covariance`: unknown model `{other}`"))),
                }
            }
            "spectral_target" => self.spectral_target = parse_one(key, v)?,
            "input_scale" => self.input_scale = parse_one(key, v)?,
            "readout_delay" => self.readout_delay = parse_one(key, v)?,
            "training_ber" => self.training_ber = parse_bool(key, v)?,
            "snr_db" => self.snr_db = parse_list(key, v)?,
            "pa_power_db" => self.pa_power_db = parse_list(key, v)?,
            "n_neurons" => self.n_neurons = parse_list(key, v)?,
            "buffer_len" => self.buffer_len = parse_list(key, v)?,
            "pilot_symbols" => self.pilot_symbols = parse_list(key, v)?,
            "doppler_hz" => self.doppler_hz = parse_list(key, v)?,
            "n_trials" => self.n_trials = parse_one(key, v)?,
            "seed" => self.master_seed = parse_one(key, v)?,
            "out" => self.output = Some(PathBuf::from(v.trim())),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if self.detectors.is_empty() {
            errs.push("no detectors selected".into());
        }
        if self.n_antennas == 0 {
            errs.push("n_antennas must be positive".into());
        }
        if !self.n_subcarriers.is_power_of_two() || self.n_subcarriers < 8 {
            errs.push(format!("n_subcarriers {} must be a power of two of at least 8", self.n_subcarriers));
        }
        if self.cp_len == 0 || self.cp_len >= self.n_subcarriers {
            errs.push(format!("cp_len {} must lie in [1, n_subcarriers)", self.cp_len));
        }
        if ![4, 16, 64].contains(&self.modulation) {
            errs.push(format!("modulation {} must be 4, 16 or 64", self.modulation));
        }
        if self.n_taps == 0 {
            errs.push("n_taps must be positive".into());
        }
        if self.tau_max > self.cp_len {
            errs.push(format!("tau_max {} exceeds cp_len {}", self.tau_max, self.cp_len));
        }
        if self.n_taps > 1 && self.tau_max + 1 < self.n_taps {
            errs.push(format!("{} taps need tau_max of at least {}", self.n_taps, self.n_taps - 1));
        }
        if self.readout_delay > self.cp_len {
            errs.push(format!("readout_delay {} exceeds cp_len {}", self.readout_delay, self.cp_len));
        }
        if !(self.spectral_target > 0.0 && self.spectral_target < 1.0) {
            errs.push(format!("spectral_target {} must lie in (0, 1)", self.spectral_target));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            errs.push("input_scale must be positive".into());
        }
        if !(self.smoothness > 0.0) {
            errs.push("smoothness must be positive".into());
        }
        if self.n_trials == 0 {
            errs.push("n_trials must be at least 1".into());
        }
        for (name, empty) in [
            ("snr_db", self.snr_db.is_empty()),
            ("pa_power_db", self.pa_power_db.is_empty()),
            ("n_neurons", self.n_neurons.is_empty()),
            ("buffer_len", self.buffer_len.is_empty()),
            ("pilot_symbols", self.pilot_symbols.is_empty()),
            ("doppler_hz", self.doppler_hz.is_empty()),
        ] {
            if empty {
                errs.push(format!("sweep axis `{name}` is empty"));
            }
        }
        if self.n_neurons.contains(&0) || self.buffer_len.contains(&0) {
            errs.push("n_neurons and buffer_len entries must be positive".into());
        }
        if self.doppler_hz.iter().any(|&f| !(f >= 0.0)) {
            errs.push("doppler_hz entries must be non-negative".into());
        }
        if self.snr_db.iter().chain(&self.pa_power_db).any(|v| !v.is_finite()) {
            errs.push("snr_db and pa_power_db entries must be finite".into());
        }
        match self.pilots {
            PilotFamily::RcOverlapping => {
                if self.pilot_symbols.iter().any(|&t| t == 0 || t > 7) {
                    errs.push("pilot_symbols entries must lie in 1..=7".into());
                }
                let baselines: Vec<&str> =
                    self.detectors.iter().filter(|d| d.needs_csi_estimate()).map(|d| d.name()).collect();
                if !baselines.is_empty() {
                    errs.push(format!(
                        "{} cannot estimate CSI from overlapping pilots; use an orthogonal pattern",
                        baselines.join(", ")
                    ));
                }
            }
            PilotFamily::Fixed(kind) => {
                let siso = matches!(kind, PilotKind::SisoCombFull | PilotKind::SisoCombDecimated | PilotKind::SisoScattered);
                if siso && self.n_antennas != 1 {
                    errs.push(format!("pilot pattern {} is single-antenna", kind.name()));
                }
                if self.pilot_symbols.len() > 1 {
                    errs.push("the pilot_symbols axis only applies to rc-overlapping pilots".into());
                }
                if matches!(kind, PilotKind::RcMimoOverlapping(_)) {
                    errs.push("write `pilots = rc-overlapping` and set `pilot_symbols`".into());
                }
                if matches!(kind, PilotKind::RcMimoScattered) && self.detectors.iter().any(|d| d.needs_csi_estimate()) {
                    errs.push("rc-scattered pilots overlap across streams; baselines cannot estimate CSI".into());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// The Cartesian product of the sweep axes, in a fixed nested order.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let mut pts = Vec::new();
        for &doppler_hz in &self.doppler_hz {
            for &pilot_symbols in &self.pilot_symbols {
                for &n_neurons in &self.n_neurons {
                    for &buffer_len in &self.buffer_len {
                        for &pa_power_db in &self.pa_power_db {
                            for &snr_db in &self.snr_db {
                                pts.push(SweepPoint { snr_db, pa_power_db, n_neurons, buffer_len, pilot_symbols, doppler_hz });
                            }
                        }
                    }
                }
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub pa_power_db: f64,
    pub n_neurons: usize,
    pub buffer_len: usize,
    pub pilot_symbols: usize,
    pub doppler_hz: f64,
}
