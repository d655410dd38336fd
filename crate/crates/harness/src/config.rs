//! Experiment configuration: a flat TOML document with strict key checking
//! (unknown keys are errors, so typos in sweep files fail loudly), plus the
//! registries that map string ids to universes, dataset generators, loss
//! families, and adversaries.

use crate::seed::{split_seed, Component};
use pmw_cm::loss::{LossFamily, DEFAULT_CLIP};
use pmw_cm::universe::{load_universe_dataset, Dataset, Universe};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Universe(#[from] pmw_cm::universe::UniverseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Private,
    NoiseFree,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Private => "private",
            Mode::NoiseFree => "noise-free",
        }
    }

    pub fn noise_mult(self) -> f64 {
        match self {
            Mode::Private => 1.0,
            Mode::NoiseFree => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    FixedPool,
    Random,
    GreedyAdaptive,
}

/// One experiment. `n = 0` asks the harness to derive the dataset size from
/// the mechanism bounds (sparse-vector sufficient size and oracle `n'`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Universe id: `grid-1d`, `glm`, or `file:<path>`.
    pub universe: String,
    #[serde(default = "default_universe_size")]
    pub universe_size: usize,
    /// Dataset generator id: `uniform`, `skewed`, `point-mass`, or `file`
    /// (rows from the universe file).
    #[serde(default = "default_data")]
    pub data: String,
    #[serde(default)]
    pub n: usize,
    /// Family id: `linear-query`, `squared-glm`, `logistic-glm`,
    /// `strongly-convex-glm`.
    pub family: String,
    #[serde(default = "default_dim")]
    pub family_dim: usize,
    #[serde(default = "default_sigma")]
    pub family_sigma: f64,
    #[serde(default = "default_clip")]
    pub family_clip: f64,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    pub adversary: AdversaryKind,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub mode: Mode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_universe_size() -> usize {
    16
}
fn default_data() -> String {
    "uniform".into()
}
fn default_dim() -> usize {
    1
}
fn default_sigma() -> f64 {
    0.5
}
fn default_clip() -> f64 {
    DEFAULT_CLIP
}
fn default_pool() -> usize {
    32
}
fn default_trials() -> usize {
    1
}
fn default_seed() -> u64 {
    0
}
fn default_out() -> PathBuf {
    PathBuf::from("reports")
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials < 1 {
            return Err(ConfigError::Invalid("trials must be >= 1".into()));
        }
        if self.pool_size < 1 {
            return Err(ConfigError::Invalid("pool_size must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.beta < 1.0) {
            return Err(ConfigError::Invalid("alpha > 0 and 0 < beta < 1 required".into()));
        }
        if self.mode == Mode::Private && self.adversary == AdversaryKind::GreedyAdaptive {
            return Err(ConfigError::Invalid(
                "the greedy-adaptive adversary reads engine internals and is test-mode only; \
                 use fixed-pool or random in private mode"
                    .into(),
            ));
        }
        self.family_obj()?;
        Ok(())
    }

    /// The loss family named by the config.
    pub fn family_obj(&self) -> Result<LossFamily, ConfigError> {
        let point_dim = self.point_dim()?;
        match self.family.as_str() {
            "linear-query" => Ok(LossFamily::linear_query(point_dim)),
            "squared-glm" => Ok(LossFamily::squared_glm(self.family_dim, self.family_clip)),
            "logistic-glm" => Ok(LossFamily::logistic_glm(self.family_dim)),
            "strongly-convex-glm" => Ok(LossFamily::strongly_convex_glm(
                self.family_dim,
                self.family_sigma,
            )),
            other => Err(ConfigError::Invalid(format!(
                "unknown family '{other}' (expected linear-query, squared-glm, logistic-glm, strongly-convex-glm)"
            ))),
        }
    }

    fn point_dim(&self) -> Result<usize, ConfigError> {
        Ok(match self.universe_kind()? {
            UniverseKind::Grid1d => 1,
            UniverseKind::Glm => self.family_dim + 1,
            UniverseKind::File(ref p) => {
                let (u, _) = load_universe_dataset(p)?;
                u.dim()
            }
        })
    }

    fn universe_kind(&self) -> Result<UniverseKind, ConfigError> {
        if let Some(path) = self.universe.strip_prefix("file:") {
            return Ok(UniverseKind::File(PathBuf::from(path)));
        }
        match self.universe.as_str() {
            "grid-1d" => Ok(UniverseKind::Grid1d),
            "glm" => Ok(UniverseKind::Glm),
            other => Err(ConfigError::Invalid(format!(
                "unknown universe '{other}' (expected grid-1d, glm, or file:<path>)"
            ))),
        }
    }

    /// Builds the universe and dataset this config describes. The data
    /// generator seed derives from the master seed alone (not the trial), so
    /// every trial of one experiment plays against the same dataset.
    pub fn build_data(&self) -> Result<(Universe, Dataset), ConfigError> {
        match self.universe_kind()? {
            UniverseKind::File(path) => {
                if self.data != "file" {
                    return Err(ConfigError::Invalid(
                        "file universes carry their own rows; set data = \"file\"".into(),
                    ));
                }
                Ok(load_universe_dataset(&path)?)
            }
            kind => {
                let universe = match kind {
                    UniverseKind::Grid1d => {
                        grid_universe(self.universe_size)
                    }
                    UniverseKind::Glm => glm_universe(
                        self.universe_size,
                        self.family_dim,
                        split_seed(self.seed, Component::Universe, 0),
                    ),
                    UniverseKind::File(_) => unreachable!(),
                }?;
                if self.n == 0 {
                    return Err(ConfigError::Invalid(
                        "n = 0 (auto) must be resolved before building data".into(),
                    ));
                }
                let ds = synthetic_dataset(
                    &self.data,
                    self.n,
                    &universe,
                    split_seed(self.seed, Component::Data, 0),
                )?;
                Ok((universe, ds))
            }
        }
    }
}

enum UniverseKind {
    Grid1d,
    Glm,
    File(PathBuf),
}

/// `size` evenly spaced scalar points on `[0, 1]`.
pub fn grid_universe(size: usize) -> Result<Universe, ConfigError> {
    if size < 1 {
        return Err(ConfigError::Invalid("universe_size must be >= 1".into()));
    }
    let pts = (0..size)
        .map(|i| {
            vec![if size == 1 {
                0.5
            } else {
                i as f64 / (size - 1) as f64
            }]
        })
        .collect();
    Ok(Universe::new(pts)?)
}

/// `size` labeled points `(features, y)` with features in the unit ball of
/// the given dimension and labels in `{-1, +1}`.
pub fn glm_universe(size: usize, dim: usize, seed: u64) -> Result<Universe, ConfigError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(size);
    let mut guard = 0;
    while pts.len() < size {
        guard += 1;
        if guard > 100 * size {
            return Err(ConfigError::Invalid(
                "failed to draw distinct labeled points".into(),
            ));
        }
        let mut f: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            for v in &mut f {
                *v /= norm;
            }
        }
        f.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
        let distinct = pts.iter().all(|p: &Vec<f64>| {
            p.iter().zip(&f).any(|(a, b)| (a - b).abs() > 1e-6)
        });
        if distinct {
            pts.push(f);
        }
    }
    Ok(Universe::new(pts)?)
}

/// Deterministic synthetic dataset: a seeded weight profile over the universe
/// turned into exact counts by largest-remainder rounding.
pub fn synthetic_dataset(
    kind: &str,
    n: usize,
    universe: &Universe,
    seed: u64,
) -> Result<Dataset, ConfigError> {
    if n < 1 {
        return Err(ConfigError::Invalid("n must be >= 1".into()));
    }
    let size = universe.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let weights: Vec<f64> = match kind {
        "uniform" => vec![1.0; size],
        "skewed" => {
            // Power-law profile over a seeded permutation of the bins.
            let mut order: Vec<usize> = (0..size).collect();
            for i in (1..size).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut w = vec![0.0; size];
            for (rank, &bin) in order.iter().enumerate() {
                w[bin] = 1.0 / (rank as f64 + 1.0).powf(1.2);
            }
            w
        }
        "point-mass" => {
            let mut w = vec![0.0; size];
            w[rng.random_range(0..size)] = 1.0;
            w
        }
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown data generator '{other}' (expected uniform, skewed, point-mass, file)"
            )))
        }
    };
    let counts = largest_remainder_counts(&weights, n);
    Ok(Dataset::from_counts(&counts, universe)?)
}

/// Exact integer apportionment of `n` among bins proportional to `weights`.
fn largest_remainder_counts(weights: &[f64], n: usize) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<u64> = ideal.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = ideal
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v - v.floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.iter().take(n - assigned as usize) {
        counts[*i] += 1;
    }
    counts
}
