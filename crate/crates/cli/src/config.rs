//! Flat `section.key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear at
//! most once. Values are parsed lazily so diagnostics can name the line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spinsq_core::{
    ArrayGeometry, BeamProfile, Integrator, KernelOptions, SolverMethod,
};

/// Directory searched for `default.conf` when no `--config` is given.
pub const CONFIG_DIR_ENV: &str = "SPINSQ_CONFIG_DIR";
/// Origin reported for values given on the command line.
pub const OVERRIDE_ORIGIN: &str = "--set";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": {key}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Keys understood by [`ExperimentConfig::from_raw`].
pub const KNOWN_KEYS: &[&str] = &[
    "geometry.n_side",
    "geometry.lattice_const",
    "geometry.n_layers",
    "geometry.layer_spacing",
    "geometry.dipole",
    "beam.waist",
    "beam.center",
    "rates.eta",
    "rates.gamma_s",
    "squeezing.n_photons",
    "squeezing.purity",
    "squeezing.alpha_eff",
    "detuning.mode",
    "detuning.value",
    "sweep.n_layers",
    "sweep.label",
    "model.select",
    "model.solver",
    "kernel.tol",
    "kernel.evanescent",
    "mc.integrator",
    "mc.dt_frac",
    "mc.relax",
    "mc.samples",
    "mc.n_traj",
    "mc.seed",
    "output.path",
    "output.format",
    "run.workers",
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    origin: String,
    line: Option<usize>,
    value: String,
}

/// Parsed but uninterpreted key-value pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawConfig {
    origin: String,
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut raw = Self {
            origin: origin.to_string(),
            entries: BTreeMap::new(),
        };
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(raw.error(Some(lineno), None, "expected `key = value`"));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(raw.error(Some(lineno), None, "empty key"));
            }
            raw.insert(key, value.trim(), Some(lineno), origin)?;
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: origin.clone(),
            line: None,
            key: None,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&text, &origin)
    }

    /// `--config`, or `default.conf` in the directory named by [`CONFIG_DIR_ENV`].
    pub fn locate(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        if let Some(p) = explicit {
            return Self::from_file(p);
        }
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let p = PathBuf::from(dir).join("default.conf");
            if p.exists() {
                return Self::from_file(&p);
            }
        }
        Ok(Self {
            origin: "<defaults>".into(),
            entries: BTreeMap::new(),
        })
    }

    fn insert(&mut self, key: &str, value: &str, line: Option<usize>, origin: &str) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError {
                origin: origin.to_string(),
                line,
                key: Some(key.to_string()),
                message: "unknown key".into(),
            });
        }
        if let Some(prev) = self.entries.get(key) {
            if line.is_some() {
                let msg = match prev.line {
                    Some(l) => format!("duplicate key, first set on line {l}"),
                    None => "duplicate key".to_string(),
                };
                return Err(self.error(line, Some(key), &msg));
            }
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                origin: origin.to_string(),
                line,
                value: value.to_string(),
            },
        );
        Ok(())
    }

    /// Copies every entry of `other` over this configuration.
    pub fn overlay(&mut self, other: &RawConfig) {
        for (k, e) in &other.entries {
            self.entries.insert(k.clone(), e.clone());
        }
    }

    /// Applies a command-line override; later overrides replace earlier values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.insert(key, value, None, OVERRIDE_ORIGIN)
    }

    /// Parses `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let Some((k, v)) = pair.split_once('=') else {
            return Err(ConfigError {
                origin: OVERRIDE_ORIGIN.into(),
                line: None,
                key: None,
                message: format!("override `{pair}` is not `key=value`"),
            });
        };
        self.set(k.trim(), v.trim())
    }

    fn error(&self, line: Option<usize>, key: Option<&str>, msg: &str) -> ConfigError {
        ConfigError {
            origin: self.origin.clone(),
            line,
            key: key.map(str::to_string),
            message: msg.to_string(),
        }
    }

    fn field_error(&self, key: &str, msg: impl fmt::Display) -> ConfigError {
        match self.entries.get(key) {
            Some(e) => ConfigError {
                origin: e.origin.clone(),
                line: e.line,
                key: Some(key.to_string()),
                message: msg.to_string(),
            },
            None => self.error(None, Some(key), &msg.to_string()),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| self.field_error(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| self.field_error(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.get_str(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| self.field_error(key, format!("cannot parse `{}`: {e}", s.trim())))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn get_pair(&self, key: &str, default: [f64; 2]) -> Result<[f64; 2], ConfigError> {
        match self.get_list::<f64>(key)? {
            None => Ok(default),
            Some(v) if v.len() == 2 => Ok([v[0], v[1]]),
            Some(v) => Err(self.field_error(key, format!("expected two numbers, got {}", v.len()))),
        }
    }
}

/// Photon-number grid: an explicit list or `logspace(lo, hi, count)`.
pub fn parse_grid(value: &str) -> Result<Vec<f64>, String> {
    let v = value.trim();
    let grid: Vec<f64> = if let Some(inner) = v.strip_prefix("logspace(").and_then(|s| s.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err("logspace takes (lo, hi, count)".into());
        }
        let lo: f64 = parts[0].parse().map_err(|e| format!("bad lower bound: {e}"))?;
        let hi: f64 = parts[1].parse().map_err(|e| format!("bad upper bound: {e}"))?;
        let count: usize = parts[2].parse().map_err(|e| format!("bad count: {e}"))?;
        if !(lo > 0.0 && hi > lo) || count < 2 {
            return Err("logspace needs 0 < lo < hi and count >= 2".into());
        }
        logspace(lo, hi, count)
    } else {
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| format!("cannot parse `{}`: {e}", s.trim())))
            .collect::<Result<_, _>>()?
    };
    validate_grid(&grid)?;
    Ok(grid)
}

pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (l0, l1) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                10f64.powf(l0 + (l1 - l0) * i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

pub fn validate_grid(grid: &[f64]) -> Result<(), String> {
    if grid.is_empty() {
        return Err("photon-number grid is empty".into());
    }
    if grid.iter().any(|&n| !(n >= 0.0 && n.is_finite())) {
        return Err("photon numbers must be finite and non-negative".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("photon numbers must be strictly increasing".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetuningMode {
    OnResonance,
    /// `delta - Delta` in units of `Gamma0`.
    Fixed(f64),
    /// Numeric model driven at the evanescent shift; analytic model on resonance.
    DeltaPrime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSelect {
    Analytic,
    Numeric,
    Both,
    McCheck,
}

impl ModelSelect {
    pub fn numeric(self) -> bool {
        !matches!(self, Self::Analytic)
    }

    pub fn mc(self) -> bool {
        matches!(self, Self::McCheck)
    }
}

impl FromStr for ModelSelect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "numeric" => Ok(Self::Numeric),
            "both" => Ok(Self::Both),
            "mc-check" => Ok(Self::McCheck),
            _ => Err("expected analytic, numeric, both or mc-check".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err("expected csv or json".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub integrator: Integrator,
    /// Step as a fraction of `1 / ||A||`.
    pub dt_frac: f64,
    /// Burn-in in e-folds of the slowest mode.
    pub relax: f64,
    /// Averaging window in units of `1 / ||A||`, summed over trajectories.
    pub samples: f64,
    pub n_traj: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            integrator: Integrator::ExactOu,
            dt_frac: 0.5,
            relax: 10.0,
            samples: 4e5,
            n_traj: 16,
            seed: 1,
        }
    }
}

/// Everything needed to run one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: ArrayGeometry,
    pub beam: BeamProfile,
    /// Replaces the beam-derived overlap when set.
    pub eta: Option<f64>,
    /// Non-collective loss in units of `Gamma0`.
    pub gamma_s_rel: f64,
    pub n_photons: Vec<f64>,
    pub purity: f64,
    pub alpha_eff: Option<f64>,
    pub detuning: DetuningMode,
    pub layers: Vec<usize>,
    pub label: String,
    pub model: ModelSelect,
    pub solver: SolverMethod,
    pub kernel: KernelOptions,
    pub mc: McSettings,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let n_side = raw.get("geometry.n_side", 100usize)?;
        let lattice_const = raw.get("geometry.lattice_const", 0.68)?;
        let n_layers = raw.get("geometry.n_layers", 10usize)?;
        let layer_spacing = raw.get("geometry.layer_spacing", 1.0)?;
        let dipole = raw.get_pair("geometry.dipole", [1.0, 0.0])?;
        let geometry = ArrayGeometry::new(n_side, lattice_const, n_layers, layer_spacing)
            .and_then(|g| g.with_dipole(dipole))
            .map_err(|e| raw.field_error("geometry.lattice_const", e))?;

        let waist = raw.get("beam.waist", 17.0)?;
        let center = raw.get_pair("beam.center", [0.0, 0.0])?;
        let beam = BeamProfile::gaussian(waist)
            .map(|b| b.offset(center[0], center[1]))
            .map_err(|e| raw.field_error("beam.waist", e))?;

        let eta: Option<f64> = raw.get_opt("rates.eta")?;
        if let Some(e) = eta {
            if !(e > 0.0 && e <= 1.0) {
                return Err(raw.field_error("rates.eta", "must lie in (0, 1]"));
            }
        }
        let gamma_s_rel = raw.get("rates.gamma_s", 0.1)?;
        if !(gamma_s_rel >= 0.0) {
            return Err(raw.field_error("rates.gamma_s", "must be non-negative"));
        }

        let n_photons = match raw.get_str("squeezing.n_photons") {
            None => logspace(1e-2, 1e3, 21),
            Some(v) => parse_grid(v).map_err(|e| raw.field_error("squeezing.n_photons", e))?,
        };
        let purity = raw.get("squeezing.purity", 1.0)?;
        if !(0.0..=1.0).contains(&purity) {
            return Err(raw.field_error("squeezing.purity", "must lie in [0, 1]"));
        }
        let alpha_eff: Option<f64> = raw.get_opt("squeezing.alpha_eff")?;
        if let Some(a) = alpha_eff {
            if !(0.0..=1.0).contains(&a) {
                return Err(raw.field_error("squeezing.alpha_eff", "must lie in [0, 1]"));
            }
        }

        let detuning = match raw.get_str("detuning.mode").unwrap_or("on-resonance") {
            "on-resonance" => DetuningMode::OnResonance,
            "fixed" => match raw.get_opt::<f64>("detuning.value")? {
                Some(v) => DetuningMode::Fixed(v),
                None => return Err(raw.field_error("detuning.mode", "fixed detuning needs detuning.value")),
            },
            "delta-prime" => DetuningMode::DeltaPrime,
            other => {
                return Err(raw.field_error(
                    "detuning.mode",
                    format!("`{other}` is not on-resonance, fixed or delta-prime"),
                ))
            }
        };

        let layers = raw.get_list::<usize>("sweep.n_layers")?.unwrap_or_else(|| vec![n_layers]);
        if layers.is_empty() || layers.contains(&0) {
            return Err(raw.field_error("sweep.n_layers", "layer counts must be positive"));
        }
        let label = raw.get_str("sweep.label").unwrap_or("").to_string();

        let model = raw.get("model.select", ModelSelect::Both)?;
        let solver = match raw.get_str("model.solver").unwrap_or("schur") {
            "schur" => SolverMethod::Schur,
            "kronecker" => SolverMethod::Kronecker,
            "eigen" => SolverMethod::Eigenbasis,
            other => {
                return Err(raw.field_error("model.solver", format!("`{other}` is not schur, kronecker or eigen")))
            }
        };

        let mut kernel = KernelOptions::with_tol(raw.get("kernel.tol", KernelOptions::default().tol)?);
        if !(kernel.tol > 0.0) {
            return Err(raw.field_error("kernel.tol", "must be positive"));
        }
        kernel.evanescent = raw.get("kernel.evanescent", true)?;

        let d = McSettings::default();
        let integrator = match raw.get_str("mc.integrator").unwrap_or("exact-ou") {
            "exact-ou" => Integrator::ExactOu,
            "euler-maruyama" => Integrator::EulerMaruyama,
            other => {
                return Err(raw.field_error("mc.integrator", format!("`{other}` is not exact-ou or euler-maruyama")))
            }
        };
        let mc = McSettings {
            integrator,
            dt_frac: raw.get("mc.dt_frac", d.dt_frac)?,
            relax: raw.get("mc.relax", d.relax)?,
            samples: raw.get("mc.samples", d.samples)?,
            n_traj: raw.get("mc.n_traj", d.n_traj)?,
            seed: raw.get("mc.seed", d.seed)?,
        };
        if !(mc.dt_frac > 0.0 && mc.relax >= 0.0 && mc.samples > 0.0) || mc.n_traj == 0 {
            return Err(raw.field_error("mc.samples", "Monte Carlo settings must be positive"));
        }

        let output = raw.get_str("output.path").map(PathBuf::from);
        let format = raw.get("output.format", OutputFormat::Csv)?;
        let workers: Option<usize> = raw.get_opt("run.workers")?;
        if workers == Some(0) {
            return Err(raw.field_error("run.workers", "must be at least 1"));
        }

        Ok(Self {
            geometry,
            beam,
            eta,
            gamma_s_rel,
            n_photons,
            purity,
            alpha_eff,
            detuning,
            layers,
            label,
            model,
            solver,
            kernel,
            mc,
            output,
            format,
            workers,
        })
    }

    pub fn defaults() -> Self {
        Self::from_raw(&RawConfig::default()).expect("built-in defaults are valid")
    }
}
