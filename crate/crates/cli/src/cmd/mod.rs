pub mod annotate;
pub mod compare;
pub mod eval;
pub mod grid;
pub mod run;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::LoadedConfig;
use crate::{Failure, Global};

/// Load the config and apply the global overrides. Returns the output directory too.
pub fn prepare(g: &Global) -> Result<(LoadedConfig, PathBuf), Failure> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("--config is required"))?;
    let mut loaded = LoadedConfig::read(path)?;
    if let Some(seed) = g.seed {
        loaded.config.seeds = vec![seed];
    }
    if let Some(t) = g.threads {
        if t == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        loaded.config.train.threads = t;
    }
    let out = match (&g.out, &loaded.config.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => loaded.resolve(o),
        (None, None) => {
            return Err(Failure::config(
                "no output directory: pass --out or set out_dir",
            ))
        }
    };
    fs::create_dir_all(&out)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", out.display())))?;
    Ok((loaded, out))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

/// Header plus one line per row, newline-terminated.
pub fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

pub fn write_resolved_config(loaded: &LoadedConfig, out: &Path) -> Result<(), Failure> {
    let text = toml::to_string(&loaded.config)
        .map_err(|e| Failure::runtime(format!("cannot serialize resolved config: {e}")))?;
    write_text(&out.join("config.resolved.toml"), &text)
}
