//! Dataset sources: built-in synthetic presets or an on-disk dataset.

use std::path::{Path, PathBuf};

use locspike::event_data::{load_dataset, synthetic_dataset, Dataset, SyntheticSpec, SyntheticTask};
use locspike::topology::{load_coords, Coord};
use locspike::{Error, Result};

/// Names accepted by `--data` besides a dataset path.
pub const PRESETS: &[&str] = &["synth.toy", "synth.late"];

/// Generator settings of a named preset.
pub fn preset(name: &str) -> Option<SyntheticSpec> {
    let (task, rate_hi, seed) = match name {
        "synth.toy" => (SyntheticTask::Disjoint, 0.4, 2024),
        "synth.late" => (SyntheticTask::LateTiming, 0.6, 99),
        _ => return None,
    };
    Some(SyntheticSpec {
        n_taxels: 16,
        n_steps: 40,
        n_classes: 3,
        samples_per_class: 60,
        rate_hi,
        rate_lo: 0.02,
        seed,
        task,
    })
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    /// Taxel coordinates shipped with the dataset, if any.
    pub coords: Option<Vec<Coord>>,
}

/// Resolves a preset name, a dataset directory, or a manifest file.
pub fn load(source: &str) -> Result<Loaded> {
    if let Some(spec) = preset(source) {
        return Ok(Loaded {
            dataset: synthetic_dataset(source, &spec)?,
            coords: None,
        });
    }
    let path = Path::new(source);
    let (root, manifest): (PathBuf, PathBuf) = if path.is_dir() {
        (path.to_path_buf(), path.join("manifest.txt"))
    } else if path.is_file() {
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        (root, path.to_path_buf())
    } else {
        return Err(Error::Dataset(format!(
            "`{source}` is neither a dataset path nor one of {}",
            PRESETS.join(", ")
        )));
    };
    let dataset = load_dataset(&root, &manifest)?;
    let coords = match &dataset.meta.coords {
        Some(rel) => {
            let c = load_coords(&root.join(rel))?;
            if c.len() != dataset.meta.n_taxels {
                return Err(Error::Dataset(format!(
                    "coordinate file lists {} taxels, manifest N={}",
                    c.len(),
                    dataset.meta.n_taxels
                )));
            }
            Some(c)
        }
        None => None,
    };
    Ok(Loaded { dataset, coords })
}
