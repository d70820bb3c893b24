//! Scenario configuration files.
//!
//! The format is flat `key = value` lines with dotted one-level sections,
//! `#` comments and case-insensitive keys:
//!
//! ```text
//! seed = 42
//! network.kind = chain
//! network.nodes = 30
//! load.sigma_p = 0.001
//! rmt.T = 500
//! event.scenario = FLT
//! preset_flt.alpha = -1
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::events::{EventClass, EventSpec};
use crate::harness::network::{NetworkSource, Range};
use crate::harness::presets::{default_presets, Preset};
use crate::rmtdetect::Scaling;
use crate::stochastics::NodeLoad;
use crate::{Error, Result};

/// How an event enters the simulated window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventRoute {
    /// Scale the current row, then map back through `Z`.
    Current,
    /// Apply `Z (I + α e_k e_k^*) Z^{-1}` to the voltages.
    Voltage,
}

/// What happens inside the simulated window.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    H0,
    Preset(EventClass),
    Custom(Vec<EventSpec>),
}

impl Scenario {
    pub fn label(&self) -> String {
        match self {
            Scenario::H0 => "H0".into(),
            Scenario::Preset(c) => c.to_string(),
            Scenario::Custom(evs) => evs
                .first()
                .map(|e| e.class.to_string())
                .unwrap_or_else(|| "custom".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub network: NetworkSource,
    pub load: NodeLoad,
    /// Window length `T`.
    pub samples: usize,
    pub sigma_m: f64,
    pub seed: u64,
    pub scenario: Scenario,
    pub route: EventRoute,
    pub mode: Scaling,
    pub calibration: Option<PathBuf>,
    pub presets: Vec<Preset>,
    pub calibration_runs: usize,
    pub signature_runs: usize,
}

/// Default per-line impedance ranges of generated networks, p.u.
pub const DEFAULT_R: Range = Range {
    lo: 0.004,
    hi: 0.010,
};
pub const DEFAULT_X: Range = Range {
    lo: 0.008,
    hi: 0.020,
};

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            network: NetworkSource::Chain {
                nodes: 30,
                r: DEFAULT_R,
                x: DEFAULT_X,
                seed: 1,
            },
            load: NodeLoad::default(),
            samples: 500,
            sigma_m: 1e-3,
            seed: 0,
            scenario: Scenario::H0,
            route: EventRoute::Current,
            mode: Scaling::Reference,
            calibration: None,
            presets: default_presets(),
            calibration_runs: 200,
            signature_runs: 20,
        }
    }
}

impl ScenarioConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses configuration text. Relative file paths are resolved against
    /// the directory of `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut cfg = ScenarioConfig::default();
        let mut net = NetKeys::default();
        let mut ev = EventKeys::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::parse(path, line_no, msg);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let num = |v: &str| parse_value::<f64>(v).map_err(&err);
            let int = |v: &str| parse_value::<usize>(v).map_err(&err);
            match key.as_str() {
                "seed" => cfg.seed = parse_value(value).map_err(&err)?,
                "network.kind" => net.kind = Some(value.to_ascii_lowercase()),
                "network.path" => net.path = Some(base.join(value)),
                "network.nodes" => net.nodes = Some(int(value)?),
                "network.arms" => net.arms = Some(int(value)?),
                "network.r_min" => net.r.lo = num(value)?,
                "network.r_max" => net.r.hi = num(value)?,
                "network.x_min" => net.x.lo = num(value)?,
                "network.x_max" => net.x.hi = num(value)?,
                "network.seed" => net.seed = parse_value(value).map_err(&err)?,
                "load.mu_p" => cfg.load.mu_p = num(value)?,
                "load.mu_q" => cfg.load.mu_q = num(value)?,
                "load.sigma_p" => cfg.load.sigma_p = num(value)?,
                "load.sigma_q" => cfg.load.sigma_q = num(value)?,
                "load.rho" => cfg.load.rho = num(value)?,
                "rmt.t" => cfg.samples = int(value)?,
                "rmt.sigma_m" => cfg.sigma_m = num(value)?,
                "rmt.mode" => {
                    cfg.mode = match value.to_ascii_lowercase().as_str() {
                        "reference" => Scaling::Reference,
                        "column" => Scaling::Column,
                        other => return Err(err(format!("unknown rmt.mode {other:?}"))),
                    }
                }
                "rmt.calibration_runs" => cfg.calibration_runs = int(value)?,
                "rmt.signature_runs" => cfg.signature_runs = int(value)?,
                "calibration.path" => cfg.calibration = Some(base.join(value)),
                "event.scenario" => ev.scenario = Some(value.to_string()),
                "event.class" => ev.class = Some(value.to_string()),
                "event.node" => ev.node = Some(int(value)?),
                "event.alpha" => ev.alpha = Some(num(value)?),
                "event.onset" => ev.onset = Some(int(value)?),
                "event.duration" => ev.duration = Some(int(value)?),
                "event.route" => {
                    cfg.route = match value.to_ascii_lowercase().as_str() {
                        "current" => EventRoute::Current,
                        "voltage" => EventRoute::Voltage,
                        other => return Err(err(format!("unknown event.route {other:?}"))),
                    }
                }
                k if k.starts_with("preset_") => {
                    let (section, field) = k
                        .split_once('.')
                        .ok_or_else(|| err(format!("unknown key {k:?}")))?;
                    let class: EventClass = section["preset_".len()..]
                        .parse()
                        .map_err(|e: Error| err(e.to_string()))?;
                    let preset = match cfg.presets.iter_mut().find(|p| p.class == class) {
                        Some(p) => p,
                        None => {
                            cfg.presets.push(Preset {
                                class,
                                alpha: 0.0,
                                position: 0.5,
                                onset: 0.5,
                                duration: None,
                                nodes: 1,
                            });
                            cfg.presets.last_mut().unwrap()
                        }
                    };
                    match field {
                        "alpha" => preset.alpha = num(value)?,
                        "position" => preset.position = num(value)?,
                        "onset" => preset.onset = num(value)?,
                        "duration" => {
                            preset.duration = if value.eq_ignore_ascii_case("open") {
                                None
                            } else {
                                Some(num(value)?)
                            }
                        }
                        "nodes" => preset.nodes = int(value)?,
                        other => return Err(err(format!("unknown preset field {other:?}"))),
                    }
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        cfg.network = net.resolve(path)?;
        cfg.scenario = ev.resolve(path)?;
        Ok(cfg)
    }

    /// Checks the parts of the configuration that do not need the network.
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Domain(format!(
                "rmt.T must be at least 2, got {}",
                self.samples
            )));
        }
        if !(self.sigma_m >= 0.0 && self.sigma_m.is_finite()) {
            return Err(Error::Domain(format!(
                "rmt.sigma_m must be nonnegative, got {}",
                self.sigma_m
            )));
        }
        if let NetworkSource::File(p) = &self.network {
            if !p.exists() {
                return Err(Error::Domain(format!(
                    "network file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// The H0 scenario followed by one scenario per preset, all sharing
    /// this configuration's network, window and seed.
    pub fn sweep_scenarios(&self) -> Vec<ScenarioConfig> {
        std::iter::once(Scenario::H0)
            .chain(
                self.presets
                    .iter()
                    .map(|p| Scenario::Preset(p.class.clone())),
            )
            .map(|scenario| ScenarioConfig {
                scenario,
                ..self.clone()
            })
            .collect()
    }
}

fn parse_value<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>()
        .map_err(|_| format!("cannot parse {v:?} as {}", std::any::type_name::<T>()))
}

struct NetKeys {
    kind: Option<String>,
    path: Option<PathBuf>,
    nodes: Option<usize>,
    arms: Option<usize>,
    r: Range,
    x: Range,
    seed: u64,
}

impl Default for NetKeys {
    fn default() -> Self {
        NetKeys {
            kind: None,
            path: None,
            nodes: None,
            arms: None,
            r: DEFAULT_R,
            x: DEFAULT_X,
            seed: 1,
        }
    }
}

impl NetKeys {
    fn resolve(self, path: &Path) -> Result<NetworkSource> {
        let kind = match (&self.kind, &self.path) {
            (Some(k), _) => k.clone(),
            (None, Some(_)) => "file".into(),
            (None, None) => "chain".into(),
        };
        let nodes = self.nodes.unwrap_or(30);
        let (r, x, seed) = (self.r, self.x, self.seed);
        for range in [r, x] {
            if !(range.lo > 0.0 && range.hi >= range.lo) {
                return Err(Error::parse(
                    path,
                    0,
                    "impedance ranges need 0 < min <= max",
                ));
            }
        }
        Ok(match kind.as_str() {
            "file" => {
                NetworkSource::File(self.path.ok_or_else(|| {
                    Error::parse(path, 0, "network.kind = file needs network.path")
                })?)
            }
            "chain" => NetworkSource::Chain { nodes, r, x, seed },
            "star" => NetworkSource::Star {
                nodes,
                arms: self.arms.unwrap_or(3),
                r,
                x,
                seed,
            },
            "random_tree" | "tree" => NetworkSource::RandomTree { nodes, r, x, seed },
            other => {
                return Err(Error::parse(
                    path,
                    0,
                    format!("unknown network.kind {other:?}"),
                ))
            }
        })
    }
}

#[derive(Default)]
struct EventKeys {
    scenario: Option<String>,
    class: Option<String>,
    node: Option<usize>,
    alpha: Option<f64>,
    onset: Option<usize>,
    duration: Option<usize>,
}

impl EventKeys {
    fn resolve(self, path: &Path) -> Result<Scenario> {
        let scenario = self.scenario.unwrap_or_else(|| {
            if self.node.is_some() {
                "custom".into()
            } else {
                "H0".into()
            }
        });
        if scenario.eq_ignore_ascii_case("h0") || scenario.eq_ignore_ascii_case("none") {
            return Ok(Scenario::H0);
        }
        if scenario.eq_ignore_ascii_case("custom") {
            let node = self
                .node
                .ok_or_else(|| Error::parse(path, 0, "custom events need event.node"))?;
            let alpha = self
                .alpha
                .ok_or_else(|| Error::parse(path, 0, "custom events need event.alpha"))?;
            let class = self.class.as_deref().unwrap_or("custom").parse()?;
            return Ok(Scenario::Custom(vec![EventSpec {
                node,
                alpha,
                class,
                onset: self.onset.unwrap_or(0),
                duration: self.duration,
            }]));
        }
        Ok(Scenario::Preset(scenario.parse()?))
    }
}
