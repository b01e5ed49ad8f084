//! Run configuration as a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Vectors are
//! comma-separated numbers, booleans are `true`/`false`. Any key that is
//! absent keeps its default.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `realizations` | Monte Carlo runs | 500 |
//! | `particles` | particles per filter | 5000 |
//! | `seed` | base seed, realization `r` uses `seed + r` | 1 |
//! | `modes` | subset of `a-pda, a-eopda, ap-eopda` | all three |
//! | `num_steps`, `dt`, `speed` | track length, step, walking speed | 190, 0.1, 0.5 |
//! | `waypoints` | `x1, y1, x2, y2, ...` | `1,1, 1,5, 5,5, 5,2` |
//! | `anchors` | `x1, y1, x2, y2, ...`, numbered from 1 | 6 m square |
//! | `passive_tx_anchor` | number of the passive transmitter | 4 |
//! | `passive_self_pair` | transmitter also records its own return | false |
//! | `semi_axes` | body ellipse `long, short` | 0.3, 0.2 |
//! | `bias` | agent to body center offset | 0.25, 0.1 |
//! | `olos_window` | `first, last` blocked step, or `none` | 80, 129 |
//! | `ref_amplitude_db` | direct-path amplitude at 1 m | 40 |
//! | `beta_active`, `beta_passive` | reflection coefficients | 0.2, 0.8 |
//! | `passive_offset_db` | passive level below the direct path | 10 |
//! | `gamma` | detection threshold | 2 |
//! | `mu_meas`, `mu_clutter` | mean scatter and clutter counts | 5, 10 |
//! | `d_max` | maximum distance | 30 |
//! | `rolloff`, `bandwidth_hz` | raised-cosine pulse | 0.6, 5e8 |
//! | `noise` | add range noise | true |
//! | `accel_std`, `bias_std` | process noise | 3, 0.1 |
//! | `ess_threshold` | resampling trigger, fraction of particles | 0.5 |
//! | `jitter` | post-resampling jitter `position, velocity, bias` | 0.01, 0.01, 0.005 |
//! | `min_speed` | below this a particle keeps its heading | 0.001 |
//! | `prior_position_std`, `prior_velocity_std`, `prior_bias_std` | initial spread | 0.3 each |
//! | `los_detection_prob` | direct-path detection probability of `a-pda` | 0.95 |
//! | `ut_alpha`, `ut_beta`, `ut_kappa` | sigma-point parameters | 1, 0, 1 |
//! | `divergence_threshold_m` | see [`DivergenceRule`] | 1 |
//! | `divergence_tail_steps` | see [`DivergenceRule`] | 10 |
//!
//! Saving writes every key, so `load(save(spec)) == spec` for any spec whose
//! anchors are numbered `1..=N` in order.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use eotrack_core::likelihood::{Mode, UtConfig};
use eotrack_core::scenario::ScenarioConfig;
use eotrack_core::tracker::{Jitter, TrackerConfig};
use eotrack_core::{Anchor, AnchorId, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { key: String, line: usize },
    #[error("{}invalid `{key}`: {reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        key: String,
        line: Option<usize>,
        reason: String,
    },
}

impl ConfigError {
    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::UnknownKey { key, .. }
            | Self::DuplicateKey { key, .. }
            | Self::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// When a realization counts as diverged.
///
/// A run diverges if its ensemble collapses, or if the position error at any
/// of the last `tail_steps` steps exceeds `threshold_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRule {
    pub threshold_m: f64,
    pub tail_steps: usize,
}

impl Default for DivergenceRule {
    fn default() -> Self {
        Self {
            threshold_m: 1.0,
            tail_steps: 10,
        }
    }
}

/// Named scale presets for realizations and particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn realizations(self) -> usize {
        match self {
            Self::Desk => 50,
            Self::Paper => 500,
        }
    }

    pub fn particles(self) -> usize {
        match self {
            Self::Desk => 2000,
            Self::Paper => 5000,
        }
    }

    pub fn apply(self, spec: &mut RunSpec) {
        spec.realizations = self.realizations();
        spec.tracker.particles = self.particles();
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            _ => Err(format!("unknown profile `{s}` (expected desk or paper)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub scenario: ScenarioConfig,
    /// `tracker.motion.dt` always equals `scenario.dt`.
    pub tracker: TrackerConfig,
    pub ut: UtConfig,
    pub los_detection_prob: f64,
    pub modes: Vec<Mode>,
    pub realizations: usize,
    pub base_seed: u64,
    pub divergence: DivergenceRule,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunSpec {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        let mut tracker = TrackerConfig::default();
        tracker.motion.dt = scenario.dt;
        Self {
            scenario,
            tracker,
            ut: UtConfig::default(),
            los_detection_prob: 0.95,
            modes: Mode::ALL.to_vec(),
            realizations: Profile::Paper.realizations(),
            base_seed: 1,
            divergence: DivergenceRule::default(),
            output_dir: None,
        }
    }
}

impl RunSpec {
    /// Checks every invariant, including the ones only the full scenario
    /// build can detect.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: &str| ConfigError::Invalid {
            key: key.into(),
            line: None,
            reason: reason.into(),
        };
        if self.realizations == 0 {
            return Err(invalid("realizations", "must be at least 1"));
        }
        if self.modes.is_empty() {
            return Err(invalid("modes", "at least one mode required"));
        }
        if (1..self.modes.len()).any(|i| self.modes[..i].contains(&self.modes[i])) {
            return Err(invalid("modes", "modes must not repeat"));
        }
        if !(self.divergence.threshold_m > 0.0) {
            return Err(invalid("divergence_threshold_m", "must be positive"));
        }
        if self.divergence.tail_steps == 0 || self.divergence.tail_steps > self.scenario.num_steps {
            return Err(invalid(
                "divergence_tail_steps",
                "must lie in [1, num_steps]",
            ));
        }
        if self.tracker.motion.dt != self.scenario.dt {
            return Err(invalid("dt", "tracker and scenario step differ"));
        }
        self.tracker.validate().map_err(core_error)?;
        let scenario =
            eotrack_core::scenario::Scenario::new(self.scenario.clone()).map_err(core_error)?;
        scenario
            .likelihood_model(self.ut, self.los_detection_prob)
            .map_err(core_error)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut spec = Self::default();
        let mut lines: HashMap<String, usize> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if lines.insert(key.to_string(), line).is_some() {
                return Err(ConfigError::DuplicateKey {
                    key: key.into(),
                    line,
                });
            }
            spec.set(key, value).map_err(|e| match e {
                SetError::Unknown => ConfigError::UnknownKey {
                    key: key.into(),
                    line,
                },
                SetError::Bad(reason) => ConfigError::Invalid {
                    key: key.into(),
                    line: Some(line),
                    reason,
                },
            })?;
        }
        spec.tracker.motion.dt = spec.scenario.dt;
        spec.validate().map_err(|e| match e {
            ConfigError::Invalid {
                key,
                line: None,
                reason,
            } => {
                let line = lines.get(&key).copied();
                ConfigError::Invalid { key, line, reason }
            }
            other => other,
        })?;
        Ok(spec)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        let sc = &mut self.scenario;
        let tr = &mut self.tracker;
        match key {
            "realizations" => self.realizations = parse(value)?,
            "particles" => tr.particles = parse(value)?,
            "seed" => self.base_seed = parse(value)?,
            "modes" => {
                self.modes = value
                    .split(',')
                    .map(|m| {
                        m.trim()
                            .parse::<Mode>()
                            .map_err(|e| SetError::Bad(e.to_string()))
                    })
                    .collect::<Result<_, _>>()?
            }
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "num_steps" => sc.num_steps = parse(value)?,
            "dt" => sc.dt = parse(value)?,
            "speed" => sc.speed = parse(value)?,
            "waypoints" => sc.waypoints = points(value)?,
            "anchors" => {
                let tx = sc.passive_tx;
                sc.anchors = points(value)?
                    .into_iter()
                    .zip(1..)
                    .map(|(p, id)| Anchor {
                        can_transmit_passive: AnchorId(id) == tx,
                        ..Anchor::new(id, p.x, p.y)
                    })
                    .collect();
            }
            "passive_tx_anchor" => {
                sc.passive_tx = AnchorId(parse(value)?);
                for a in &mut sc.anchors {
                    a.can_transmit_passive = a.id == sc.passive_tx;
                }
            }
            "passive_self_pair" => sc.passive_self_pair = parse(value)?,
            "semi_axes" => {
                let [a, b] = fixed::<2>(value)?;
                sc.semi_axes = (a, b);
            }
            "bias" => {
                let [x, y] = fixed::<2>(value)?;
                sc.bias = Vec2::new(x, y);
            }
            "olos_window" => {
                sc.olos_window = if value == "none" {
                    None
                } else {
                    let [a, b] = fixed::<2>(value)?;
                    Some((integral(a)?, integral(b)?))
                }
            }
            "ref_amplitude_db" => sc.ref_amplitude_db = parse(value)?,
            "beta_active" => sc.beta_active = parse(value)?,
            "beta_passive" => sc.beta_passive = parse(value)?,
            "passive_offset_db" => sc.passive_offset_db = parse(value)?,
            "gamma" => sc.gamma = parse(value)?,
            "mu_meas" => sc.mu_meas = parse(value)?,
            "mu_clutter" => sc.mu_clutter = parse(value)?,
            "d_max" => sc.d_max = parse(value)?,
            "rolloff" => sc.rolloff = parse(value)?,
            "bandwidth_hz" => sc.bandwidth_hz = parse(value)?,
            "noise" => sc.noise_enabled = parse(value)?,
            "accel_std" => tr.motion.accel_std = parse(value)?,
            "bias_std" => tr.motion.bias_std = parse(value)?,
            "ess_threshold" => tr.ess_threshold = parse(value)?,
            "jitter" => {
                let [position, velocity, bias] = fixed::<3>(value)?;
                tr.jitter = Jitter {
                    position,
                    velocity,
                    bias,
                };
            }
            "min_speed" => tr.min_speed = parse(value)?,
            "prior_position_std" => tr.prior_position_std = parse(value)?,
            "prior_velocity_std" => tr.prior_velocity_std = parse(value)?,
            "prior_bias_std" => tr.prior_bias_std = parse(value)?,
            "los_detection_prob" => self.los_detection_prob = parse(value)?,
            "ut_alpha" => self.ut.alpha = parse(value)?,
            "ut_beta" => self.ut.beta = parse(value)?,
            "ut_kappa" => self.ut.kappa = parse(value)?,
            "divergence_threshold_m" => self.divergence.threshold_m = parse(value)?,
            "divergence_tail_steps" => self.divergence.tail_steps = parse(value)?,
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    /// Serializes every key; floats use the shortest exact representation.
    pub fn save(&self) -> String {
        let sc = &self.scenario;
        let tr = &self.tracker;
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        put("realizations", self.realizations.to_string());
        put("particles", tr.particles.to_string());
        put("seed", self.base_seed.to_string());
        put(
            "modes",
            self.modes
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(", "),
        );
        if let Some(dir) = &self.output_dir {
            put("output_dir", dir.display().to_string());
        }
        put("num_steps", sc.num_steps.to_string());
        put("dt", num(sc.dt));
        put("speed", num(sc.speed));
        put(
            "waypoints",
            list(sc.waypoints.iter().flat_map(|p| [p.x, p.y])),
        );
        put(
            "anchors",
            list(sc.anchors.iter().flat_map(|a| [a.position.x, a.position.y])),
        );
        put("passive_tx_anchor", sc.passive_tx.0.to_string());
        put("passive_self_pair", sc.passive_self_pair.to_string());
        put("semi_axes", list([sc.semi_axes.0, sc.semi_axes.1]));
        put("bias", list([sc.bias.x, sc.bias.y]));
        put(
            "olos_window",
            sc.olos_window
                .map_or("none".into(), |(a, b)| format!("{a}, {b}")),
        );
        put("ref_amplitude_db", num(sc.ref_amplitude_db));
        put("beta_active", num(sc.beta_active));
        put("beta_passive", num(sc.beta_passive));
        put("passive_offset_db", num(sc.passive_offset_db));
        put("gamma", num(sc.gamma));
        put("mu_meas", num(sc.mu_meas));
        put("mu_clutter", num(sc.mu_clutter));
        put("d_max", num(sc.d_max));
        put("rolloff", num(sc.rolloff));
        put("bandwidth_hz", num(sc.bandwidth_hz));
        put("noise", sc.noise_enabled.to_string());
        put("accel_std", num(tr.motion.accel_std));
        put("bias_std", num(tr.motion.bias_std));
        put("ess_threshold", num(tr.ess_threshold));
        put(
            "jitter",
            list([tr.jitter.position, tr.jitter.velocity, tr.jitter.bias]),
        );
        put("min_speed", num(tr.min_speed));
        put("prior_position_std", num(tr.prior_position_std));
        put("prior_velocity_std", num(tr.prior_velocity_std));
        put("prior_bias_std", num(tr.prior_bias_std));
        put("los_detection_prob", num(self.los_detection_prob));
        put("ut_alpha", num(self.ut.alpha));
        put("ut_beta", num(self.ut.beta));
        put("ut_kappa", num(self.ut.kappa));
        put("divergence_threshold_m", num(self.divergence.threshold_m));
        put(
            "divergence_tail_steps",
            self.divergence.tail_steps.to_string(),
        );
        out
    }
}

impl fmt::Display for RunSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.save())
    }
}

fn core_error(e: eotrack_core::Error) -> ConfigError {
    match e {
        eotrack_core::Error::InvalidConfig { key, reason } => ConfigError::Invalid {
            key: key.into(),
            line: None,
            reason,
        },
        other => ConfigError::Invalid {
            key: "scenario".into(),
            line: None,
            reason: other.to_string(),
        },
    }
}

enum SetError {
    Unknown,
    Bad(String),
}

fn parse<T: FromStr>(value: &str) -> Result<T, SetError> {
    value.parse().map_err(|_| {
        SetError::Bad(format!(
            "cannot parse `{value}` as {}",
            std::any::type_name::<T>()
        ))
    })
}

fn numbers(value: &str) -> Result<Vec<f64>, SetError> {
    value.split(',').map(|v| parse::<f64>(v.trim())).collect()
}

fn fixed<const N: usize>(value: &str) -> Result<[f64; N], SetError> {
    let v = numbers(value)?;
    v.try_into()
        .map_err(|v: Vec<f64>| SetError::Bad(format!("expected {N} numbers, got {}", v.len())))
}

fn points(value: &str) -> Result<Vec<Vec2>, SetError> {
    let v = numbers(value)?;
    if v.len() % 2 != 0 {
        return Err(SetError::Bad(format!(
            "expected x, y pairs, got {} numbers",
            v.len()
        )));
    }
    Ok(v.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect())
}

fn integral(x: f64) -> Result<usize, SetError> {
    if x >= 0.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(SetError::Bad(format!("`{x}` is not a step index")))
    }
}

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn list(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(num).collect::<Vec<_>>().join(", ")
}
