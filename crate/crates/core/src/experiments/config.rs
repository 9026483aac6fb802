//! Experiment configuration, read from TOML.
//!
//! A config file has an `[aggregation]` section, a `[gridworld]` section, or
//! both. Missing keys take their defaults; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::Method;
use crate::error::{Error, Result};
use crate::gridworld::GridMap;
use crate::sarsa::LearnerConfig;
use crate::trust::DEFAULT_BASE_RATE;

pub const DEFAULT_SEED: u64 = 20_220_901;

/// A list of values, either spelled out or as an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Grid::Range { start, stop, step }
    }

    /// Expands the grid. Range points are rounded to 1e-9 so that
    /// `0.51 + 49 * 0.01` comes out as 1.0.
    pub fn values(&self) -> std::result::Result<Vec<f64>, String> {
        match *self {
            Grid::List(ref v) => Ok(v.clone()),
            Grid::Range { start, stop, step } => {
                if !(step.is_finite() && step > 0.0) {
                    return Err(format!("step must be positive, got {step}"));
                }
                if !(start.is_finite() && stop.is_finite() && start <= stop) {
                    return Err(format!("need start <= stop, got {start}..{stop}"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=n)
                    .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                    .collect())
            }
        }
    }
}

fn unit_values(field: &str, grid: &Grid) -> Result<Vec<f64>> {
    let values = grid.values().map_err(|e| Error::config(field, e))?;
    if values.is_empty() {
        return Err(Error::config(field, "must not be empty"));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::config(field, format!("values must lie in [0, 1], got {v}")));
    }
    Ok(values)
}

fn positive(field: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(field, "must be positive"))
    } else {
        Ok(())
    }
}

fn unit(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in [0, 1], got {v}")))
    }
}

/// Settings for the question-answering aggregation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggExpConfig {
    pub seed: u64,
    pub n_questions: usize,
    pub n_trainers: usize,
    pub response_prob: f64,
    pub trust_means: Grid,
    pub trust_stds: Vec<f64>,
    pub repeats: usize,
    pub methods: Vec<Method>,
    pub base_rate: f64,
}

impl Default for AggExpConfig {
    fn default() -> Self {
        AggExpConfig {
            seed: DEFAULT_SEED,
            n_questions: 1000,
            n_trainers: 50,
            response_prob: 0.1,
            trust_means: Grid::range(0.51, 1.0, 0.01),
            trust_stds: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            repeats: 100,
            methods: Method::ALL.to_vec(),
            base_rate: DEFAULT_BASE_RATE,
        }
    }
}

impl AggExpConfig {
    pub fn validate(&self) -> Result<()> {
        positive("aggregation.n_questions", self.n_questions)?;
        positive("aggregation.n_trainers", self.n_trainers)?;
        positive("aggregation.repeats", self.repeats)?;
        unit("aggregation.response_prob", self.response_prob)?;
        unit("aggregation.base_rate", self.base_rate)?;
        unit_values("aggregation.trust_means", &self.trust_means)?;
        if self.trust_stds.is_empty() {
            return Err(Error::config("aggregation.trust_stds", "must not be empty"));
        }
        if let Some(s) = self.trust_stds.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::config(
                "aggregation.trust_stds",
                format!("must be finite and non-negative, got {s}"),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::config("aggregation.methods", "must not be empty"));
        }
        Ok(())
    }

    pub fn means(&self) -> Result<Vec<f64>> {
        unit_values("aggregation.trust_means", &self.trust_means)
    }
}

/// Reward path used by a grid-world run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Archive with confidence-driven review.
    Review,
    /// Archive, but every pair is asked only once.
    NoReview,
    /// Every step is asked, nothing is archived.
    Unlimited,
    /// One trainer whose trust equals the configured mean.
    SingleTrainer,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Review,
        Variant::NoReview,
        Variant::Unlimited,
        Variant::SingleTrainer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Review => "review",
            Variant::NoReview => "no_review",
            Variant::Unlimited => "unlimited",
            Variant::SingleTrainer => "single_trainer",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

/// Settings for the interactive grid-world study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridExpConfig {
    pub seed: u64,
    pub max_episodes: usize,
    pub max_actions: usize,
    pub n_trainers: usize,
    pub trust_std: f64,
    pub response_prob: f64,
    pub repeats: usize,
    pub variants: Vec<Variant>,
    pub trust_means: Grid,
    /// Map file; the built-in default map when absent. Relative paths
    /// resolve against the config file's directory.
    pub map: Option<PathBuf>,
    /// Episodes between best-solution checks.
    pub check_every: usize,
    pub base_rate: f64,
    pub learner: LearnerConfig,
}

impl Default for GridExpConfig {
    fn default() -> Self {
        GridExpConfig {
            seed: DEFAULT_SEED,
            max_episodes: 500,
            max_actions: 200,
            n_trainers: 5,
            trust_std: 0.2,
            response_prob: 1.0,
            repeats: 100,
            variants: Variant::ALL.to_vec(),
            trust_means: Grid::range(0.51, 1.0, 0.01),
            map: None,
            check_every: 5,
            base_rate: DEFAULT_BASE_RATE,
            learner: LearnerConfig::default(),
        }
    }
}

impl GridExpConfig {
    pub fn validate(&self) -> Result<()> {
        positive("gridworld.max_episodes", self.max_episodes)?;
        positive("gridworld.max_actions", self.max_actions)?;
        positive("gridworld.n_trainers", self.n_trainers)?;
        positive("gridworld.repeats", self.repeats)?;
        positive("gridworld.check_every", self.check_every)?;
        unit("gridworld.response_prob", self.response_prob)?;
        unit("gridworld.base_rate", self.base_rate)?;
        if !(self.trust_std.is_finite() && self.trust_std >= 0.0) {
            return Err(Error::config(
                "gridworld.trust_std",
                format!("must be finite and non-negative, got {}", self.trust_std),
            ));
        }
        unit_values("gridworld.trust_means", &self.trust_means)?;
        if self.variants.is_empty() {
            return Err(Error::config("gridworld.variants", "must not be empty"));
        }
        self.learner.validate().map_err(|e| match e {
            Error::InvalidConfig { field, reason } => Error::InvalidConfig {
                field: format!("gridworld.{field}"),
                reason,
            },
            other => other,
        })
    }

    pub fn means(&self) -> Result<Vec<f64>> {
        unit_values("gridworld.trust_means", &self.trust_means)
    }

    /// Loads the configured map. Every normal cell must reach the goal.
    pub fn load_map(&self) -> Result<GridMap> {
        let map = match &self.map {
            Some(path) => GridMap::load(path)?,
            None => GridMap::default_map(),
        };
        map.ensure_fully_reachable()?;
        Ok(map)
    }
}

/// Contents of one config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub aggregation: Option<AggExpConfig>,
    pub gridworld: Option<GridExpConfig>,
}

impl ExperimentFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ExperimentFile = toml::from_str(text)?;
        if let Some(a) = &file.aggregation {
            a.validate()?;
        }
        if let Some(g) = &file.gridworld {
            g.validate()?;
        }
        Ok(file)
    }

    /// Reads and validates a config file. A relative map path is resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut file = Self::from_toml(&text)?;
        if let Some(g) = file.gridworld.as_mut() {
            if let Some(map) = g.map.as_mut() {
                if map.is_relative() {
                    if let Some(dir) = path.parent() {
                        *map = dir.join(&*map);
                    }
                }
            }
        }
        Ok(file)
    }
}
