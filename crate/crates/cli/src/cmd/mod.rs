pub mod bench;
pub mod generate;
pub mod index;
pub mod proto;
pub mod synth;

use std::path::Path;

use anyhow::Context;

use agp::config::Config;
use agp::dataset::DatasetIndex;

/// Builds the index for the configured root, restricted to the split if set.
pub fn load_index(cfg: &Config) -> anyhow::Result<DatasetIndex> {
    let root = cfg.data_root.as_deref().ok_or_else(|| {
        agp::Error::Config("no dataset root: pass --data-root or set data_root".into())
    })?;
    let index = DatasetIndex::build(root)?;
    Ok(match &cfg.split {
        Some(split) => index.restrict_to(split)?,
        None => index,
    })
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
