//! Writes a ready-to-run example: map, agents, crisscross weights and a
//! config that points at them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use wppl_core::domain::{write_agents, write_map};
use wppl_core::guidance::{save_weights, DEFAULT_PENALIZED, DEFAULT_PREFERRED};
use wppl_core::{maps, ActionModel, GridMap, GuidanceGraph};

use crate::config::{CliError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MapKind {
    /// 33x57 shelves and aisles.
    Warehouse,
    /// 32x32, 20% random obstacles.
    Random32,
    /// Two-wide corridors with deadend notches.
    Stubs,
}

pub fn build_map(kind: MapKind, seed: u64) -> GridMap {
    match kind {
        MapKind::Warehouse => maps::warehouse(),
        MapKind::Random32 => maps::random_32(seed),
        MapKind::Stubs => maps::stub_map(6, 32, 2),
    }
}

/// Returns the path of the written config.
pub fn generate(kind: MapKind, agents: usize, model: ActionModel, seed: u64, dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let map = Arc::new(build_map(kind, seed));
    if agents == 0 || agents > map.free_count() {
        return Err(CliError::Invalid(format!("{agents} agents on {} free cells", map.free_count())));
    }
    let instance = maps::random_instance(map.clone(), agents, model, seed);
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    };
    write("map.map", write_map(&map))?;
    write("agents.txt", write_agents(&instance.agents, &map, model))?;
    let criss = GuidanceGraph::crisscross(map, DEFAULT_PREFERRED, DEFAULT_PENALIZED)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let weights = dir.join("crisscross.json");
    save_weights(&criss, &weights).map_err(|source| CliError::Weights {
        path: weights.clone(),
        source,
    })?;
    let mut cfg = RunConfig::new("map.map", "agents.txt", 500);
    cfg.action_model = model;
    cfg.seed = seed;
    cfg.wppl.iterations = Some(1000);
    let path = dir.join("run.toml");
    write("run.toml", toml::to_string(&cfg).map_err(|e| CliError::Invalid(e.to_string()))?)?;
    Ok(path)
}
