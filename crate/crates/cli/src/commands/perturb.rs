use std::path::{Path, PathBuf};

use preshape_align::eval::{perturb, PerturbSpec, PerturbationRecord};
use preshape_align::PointCloud;
use serde::{Deserialize, Serialize};

use super::{write_json, SCHEMA_VERSION};
use crate::error::CliError;
use crate::io::{load_cloud, save_cloud, Format, SaveFormat};

/// Sidecar written next to every perturbed cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub record: PerturbationRecord,
}

/// Paths of one corpus item: `<id>.template.<ext>`, `<id>.perturbed.<ext>`
/// and `<id>.record.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemPaths {
    pub template: PathBuf,
    pub perturbed: PathBuf,
    pub record: PathBuf,
}

impl ItemPaths {
    pub fn new(dir: &Path, id: &str, format: SaveFormat) -> Self {
        let ext = format.extension();
        Self {
            template: dir.join(format!("{id}.template.{ext}")),
            perturbed: dir.join(format!("{id}.perturbed.{ext}")),
            record: dir.join(format!("{id}.record.json")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbOptions {
    pub input: PathBuf,
    pub format: Format,
    pub spec: PerturbSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Item id; defaults to the input file stem.
    pub name: Option<String>,
    pub save_format: SaveFormat,
}

/// Applies `spec` to `template` and writes a complete corpus item.
pub fn write_item(
    template: &PointCloud,
    source: &PointCloud,
    spec: &PerturbSpec,
    seed: u64,
    paths: &ItemPaths,
    format: SaveFormat,
) -> Result<PerturbationRecord, CliError> {
    let (perturbed, record) = perturb(source, spec, seed).map_err(|e| CliError::Usage(format!("cannot perturb: {e}")))?;
    save_cloud(&paths.template, template, format)?;
    save_cloud(&paths.perturbed, &perturbed, format)?;
    write_json(
        &paths.record,
        &RecordFile {
            schema_version: SCHEMA_VERSION,
            record: record.clone(),
        },
    )?;
    Ok(record)
}

pub fn run(opts: &PerturbOptions) -> Result<ItemPaths, CliError> {
    let cloud = load_cloud(&opts.input, opts.format)?;
    let id = match &opts.name {
        Some(n) => n.clone(),
        None => opts
            .input
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("cloud")
            .to_string(),
    };
    let paths = ItemPaths::new(&opts.out_dir, &id, opts.save_format);
    write_item(&cloud, &cloud, &opts.spec, opts.seed, &paths, opts.save_format)?;
    Ok(paths)
}
