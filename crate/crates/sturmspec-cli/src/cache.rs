use std::fs;
use std::path::PathBuf;

use sturmspec::bands::{build_band_tree, tree_cache_key, BandTree, TREE_FORMAT_VERSION};

use crate::config::RunConfig;
use crate::error::AppError;
use crate::output::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Disabled,
    Hit,
    Miss,
    /// An entry existed but could not be used and was replaced.
    Stale,
}

impl CacheStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheStatus::Disabled => "disabled",
            CacheStatus::Hit => "hit",
            CacheStatus::Miss => "miss",
            CacheStatus::Stale => "stale",
        }
    }
}

pub fn entry_path(cfg: &RunConfig, depth: usize) -> Option<PathBuf> {
    cfg.cache_dir.as_ref().map(|dir| {
        let key = tree_cache_key(&cfg.spec, cfg.coupling, &cfg.ctx);
        dir.join(format!("bandtree-v{TREE_FORMAT_VERSION}-{key}-d{depth}.json"))
    })
}

/// Loads the tree of exactly `depth` from the cache, or builds and stores it.
/// Unreadable or mismatched entries are rebuilt whole.
pub fn band_tree(cfg: &RunConfig, depth: usize) -> Result<(BandTree, CacheStatus), AppError> {
    let Some(path) = entry_path(cfg, depth) else {
        return Ok((build_band_tree(&cfg.spec, cfg.coupling, depth, &cfg.ctx)?, CacheStatus::Disabled));
    };
    let mut status = CacheStatus::Miss;
    if let Ok(text) = fs::read_to_string(&path) {
        match BandTree::from_json(&text) {
            Ok(t) if t.depth() == depth && t.spec == cfg.spec && t.coupling == cfg.coupling => {
                return Ok((t, CacheStatus::Hit));
            }
            Ok(_) => status = CacheStatus::Stale,
            Err(e) => {
                eprintln!("warning: ignoring cache entry {}: {e}", path.display());
                status = CacheStatus::Stale;
            }
        }
    }
    let tree = build_band_tree(&cfg.spec, cfg.coupling, depth, &cfg.ctx)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_atomic(&path, tree.to_json().as_bytes())?;
    Ok((tree, status))
}
