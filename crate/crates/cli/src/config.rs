//! Run configuration: TOML file schema, flag overrides, loading.
//!
//! ```toml
//! map = "warehouse.map"
//! agents = "warehouse-300.agents"
//! weights = "crisscross.json"   # optional, uniform when absent
//! algorithm = "wppl"            # or "pibt"
//! action_model = "rotation"     # or "four_way"
//! total_steps = 500
//! seed = 0
//! output_dir = "out"
//!
//! [wppl]
//! window = 10
//! replan_period = 3
//! iterations = 1000             # or time_ms = 100.0 (per executed step)
//! workers = 1
//! reuse = true
//! neighborhood_size = 8
//! disable = { kind = "none" }   # "deadend_goals", or "random_k" with k and seed
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wppl_core::domain::{parse_agents, parse_map, DomainError};
use wppl_core::guidance::{load_weights, GuidanceError};
use wppl_core::simulator::SimError;
use wppl_core::wppl::ConfigError;
use wppl_core::{ActionModel, Budget, DisablePolicy, GridMap, GuidanceGraph, Instance, ParseError, WpplConfig};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "WPPL_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: Box<toml::de::Error> },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Weights { path: PathBuf, source: GuidanceError },
    #[error("instance: {0}")]
    Instance(#[from] DomainError),
    #[error("wppl config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pibt,
    #[default]
    Wppl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WpplSection {
    pub window: usize,
    pub replan_period: usize,
    /// LNS iterations per replan. Ignored when `time_ms` is set.
    pub iterations: Option<u64>,
    /// Planning time per executed step, in milliseconds.
    pub time_ms: Option<f64>,
    pub workers: usize,
    pub reuse: bool,
    pub neighborhood_size: usize,
    pub disable: DisablePolicy,
}

impl Default for WpplSection {
    fn default() -> Self {
        let d = WpplConfig::default();
        Self {
            window: d.window,
            replan_period: d.replan_period,
            iterations: None,
            time_ms: None,
            workers: d.workers,
            reuse: d.reuse,
            neighborhood_size: d.neighborhood_size,
            disable: d.disable_policy,
        }
    }
}

impl WpplSection {
    pub fn budget(&self) -> Result<Budget, CliError> {
        match (self.time_ms, self.iterations) {
            (Some(ms), _) if !(ms.is_finite() && ms >= 0.0) => Err(CliError::Invalid(format!("time_ms = {ms}"))),
            (Some(ms), _) => Ok(Budget::WallTime(Duration::from_secs_f64(ms / 1000.0))),
            (None, Some(it)) => Ok(Budget::Iterations(it)),
            (None, None) => Ok(WpplConfig::default().budget),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: PathBuf,
    pub agents: PathBuf,
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub action_model: ActionModel,
    pub total_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub wppl: WpplSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(map: impl Into<PathBuf>, agents: impl Into<PathBuf>, total_steps: usize) -> Self {
        Self {
            map: map.into(),
            agents: agents.into(),
            weights: None,
            algorithm: Algorithm::default(),
            action_model: ActionModel::default(),
            total_steps,
            seed: 0,
            output_dir: default_output_dir(),
            wppl: WpplSection::default(),
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Toml {
            path: origin.to_path_buf(),
            source: Box::new(e),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.map);
        fix(&mut self.agents);
        if let Some(w) = self.weights.as_mut() {
            fix(w);
        }
        fix(&mut self.output_dir);
    }

    pub fn wppl_config(&self) -> Result<WpplConfig, CliError> {
        let w = &self.wppl;
        Ok(WpplConfig {
            window: w.window,
            replan_period: w.replan_period,
            budget: w.budget()?,
            workers: w.workers,
            reuse: w.reuse,
            disable_policy: w.disable.clone(),
            seed: self.seed,
            neighborhood_size: w.neighborhood_size,
        })
    }

    /// Reads and checks every referenced file.
    pub fn load(&self) -> Result<Loaded, CliError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CliError::io(p, e));
        let map = parse_map(&read(&self.map)?).map_err(|source| CliError::Parse {
            path: self.map.clone(),
            source,
        })?;
        let map = Arc::new(map);
        let agents = parse_agents(&read(&self.agents)?, &map, self.action_model).map_err(|source| CliError::Parse {
            path: self.agents.clone(),
            source,
        })?;
        let instance = Instance::new(map.clone(), agents, self.action_model)?;
        let guidance = match &self.weights {
            Some(p) => load_weights(map.clone(), p).map_err(|source| CliError::Weights {
                path: p.clone(),
                source,
            })?,
            None => GuidanceGraph::uniform(map.clone()),
        };
        if self.total_steps == 0 {
            return Err(CliError::Invalid("total_steps must be positive".into()));
        }
        if self.algorithm == Algorithm::Wppl {
            self.wppl_config()?.validate(instance.num_agents())?;
        } else if let DisablePolicy::RandomK { k, .. } = self.wppl.disable {
            if k >= instance.num_agents() {
                return Err(ConfigError::TooManyDisabled {
                    k,
                    n: instance.num_agents(),
                }
                .into());
            }
        }
        Ok(Loaded { instance, guidance })
    }
}

/// Files of a [`RunConfig`], parsed.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub instance: Instance,
    pub guidance: GuidanceGraph,
}

impl Loaded {
    pub fn map(&self) -> &Arc<GridMap> {
        &self.instance.map
    }
}

/// `none`, `deadend_goals`, or `random_k:K[:SEED]`.
pub fn parse_disable(s: &str) -> Result<DisablePolicy, String> {
    let mut parts = s.split(':');
    match parts.next() {
        Some("none") => Ok(DisablePolicy::None),
        Some("deadend_goals") => Ok(DisablePolicy::DeadendGoals),
        Some("random_k") => {
            let k = parts
                .next()
                .and_then(|k| k.parse().ok())
                .ok_or("random_k needs a count, as random_k:K[:SEED]")?;
            let seed = match parts.next() {
                Some(x) => x.parse().map_err(|_| format!("bad seed `{x}`"))?,
                None => 0,
            };
            Ok(DisablePolicy::RandomK { k, seed })
        }
        _ => Err(format!("unknown disable policy `{s}`")),
    }
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub agents: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algorithm: Option<Algorithm>,
    /// `rotation` or `four_way`.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ActionModel>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub replan_period: Option<usize>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub time_ms: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub reuse: Option<bool>,
    #[arg(long)]
    pub neighborhood_size: Option<usize>,
    /// `none`, `deadend_goals` or `random_k:K[:SEED]`.
    #[arg(long, value_parser = parse_disable)]
    pub disable: Option<DisablePolicy>,
}

pub fn parse_model(s: &str) -> Result<ActionModel, String> {
    match s {
        "rotation" => Ok(ActionModel::Rotation),
        "four_way" => Ok(ActionModel::FourWay),
        _ => Err(format!("unknown action model `{s}`")),
    }
}

impl Overrides {
    /// Starts from `file` if given, otherwise from the flags alone.
    pub fn resolve(&self, file: Option<&Path>) -> Result<RunConfig, CliError> {
        let mut cfg = match file {
            Some(p) => RunConfig::from_file(p)?,
            None => {
                let missing = |what: &str| CliError::Invalid(format!("--{what} is required without --config"));
                RunConfig::new(
                    self.map.clone().ok_or_else(|| missing("map"))?,
                    self.agents.clone().ok_or_else(|| missing("agents"))?,
                    self.steps.ok_or_else(|| missing("steps"))?,
                )
            }
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        set(&mut cfg.map, &self.map);
        set(&mut cfg.agents, &self.agents);
        if self.weights.is_some() {
            cfg.weights = self.weights.clone();
        }
        set(&mut cfg.algorithm, &self.algorithm);
        set(&mut cfg.action_model, &self.model);
        set(&mut cfg.total_steps, &self.steps);
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.output_dir, &self.output_dir);
        let w = &mut cfg.wppl;
        set(&mut w.window, &self.window);
        set(&mut w.replan_period, &self.replan_period);
        if self.iterations.is_some() {
            w.iterations = self.iterations;
            w.time_ms = None;
        }
        if self.time_ms.is_some() {
            w.time_ms = self.time_ms;
        }
        set(&mut w.workers, &self.workers);
        set(&mut w.reuse, &self.reuse);
        set(&mut w.neighborhood_size, &self.neighborhood_size);
        set(&mut w.disable, &self.disable);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let text = r#"
            map = "m.map"
            agents = "a.agents"
            algorithm = "pibt"
            action_model = "four_way"
            total_steps = 20
            seed = 3
            [wppl]
            window = 5
            replan_period = 2
            iterations = 40
            disable = { kind = "random_k", k = 2, seed = 9 }
        "#;
        let mut cfg = RunConfig::from_toml_str(text, Path::new("x.toml")).unwrap();
        cfg.resolve_relative_to(Path::new("/data"));
        assert_eq!(cfg.map, PathBuf::from("/data/m.map"));
        assert_eq!(cfg.algorithm, Algorithm::Pibt);
        assert_eq!(cfg.action_model, ActionModel::FourWay);
        let w = cfg.wppl_config().unwrap();
        assert_eq!(w.budget, Budget::Iterations(40));
        assert_eq!(w.disable_policy, DisablePolicy::RandomK { k: 2, seed: 9 });
        assert_eq!(w.seed, 3);
        assert!(w.reuse);
    }

    #[test]
    fn unknown_key_names_its_line() {
        let text = "map = \"m\"\nagents = \"a\"\ntotal_steps = 3\nwindw = 4\n";
        let err = RunConfig::from_toml_str(text, Path::new("bad.toml")).unwrap_err().to_string();
        assert!(err.contains("bad.toml") && err.contains("line 4") && err.contains("windw"), "{err}");
    }

    #[test]
    fn time_budget_wins() {
        let w = WpplSection {
            iterations: Some(5),
            time_ms: Some(250.0),
            ..WpplSection::default()
        };
        assert_eq!(w.budget().unwrap(), Budget::WallTime(Duration::from_millis(250)));
        let bad = WpplSection {
            time_ms: Some(-1.0),
            ..WpplSection::default()
        };
        assert!(bad.budget().is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "map = \"m.map\"\nagents = \"a\"\ntotal_steps = 9\n[wppl]\ntime_ms = 5.0\n").unwrap();
        let flags = Overrides {
            steps: Some(4),
            iterations: Some(12),
            ..Overrides::default()
        };
        let cfg = flags.resolve(Some(&path)).unwrap();
        assert_eq!(cfg.total_steps, 4);
        assert_eq!(cfg.map, dir.path().join("m.map"));
        assert_eq!(cfg.wppl.budget().unwrap(), Budget::Iterations(12));
        assert!(Overrides::default().resolve(None).is_err());
    }

    #[test]
    fn disable_flag() {
        assert_eq!(parse_disable("none").unwrap(), DisablePolicy::None);
        assert_eq!(parse_disable("random_k:7:2").unwrap(), DisablePolicy::RandomK { k: 7, seed: 2 });
        assert_eq!(parse_disable("random_k:7").unwrap(), DisablePolicy::RandomK { k: 7, seed: 0 });
        assert!(parse_disable("random_k").is_err());
        assert!(parse_disable("sometimes").is_err());
    }
}
