use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use preshape_align::eval::{evaluate_registration, Metrics};
use preshape_align::register_full;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::perturb::RecordFile;
use super::{with_pool, write_json, SCHEMA_VERSION};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{load_cloud, Format};

/// A corpus item found on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    pub template: Option<PathBuf>,
    pub perturbed: PathBuf,
    pub record: Option<PathBuf>,
}

/// One registered item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub item_id: String,
    pub time_s: f64,
    /// `None` when the registration itself failed.
    pub metrics: Option<Metrics>,
    pub rotation_error_deg: Option<f64>,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn success(&self) -> bool {
        self.metrics.is_some_and(|m| m.success)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub schema_version: u32,
    pub corpus: String,
    /// Items registered, including failed registrations.
    pub items: usize,
    pub failed: usize,
    pub skipped: usize,
    pub skipped_ids: Vec<String>,
    pub mean_time_s: f64,
    pub mean_mse: f64,
    pub mean_mse_n: f64,
    pub mean_gt_cos: f64,
    pub rr: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub corpus: PathBuf,
    pub config: RunConfig,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

/// Lists `<id>.perturbed.*` files with their template and sidecar, sorted
/// by id.
pub fn discover(dir: &Path) -> Result<Vec<CorpusItem>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Corpus(format!("cannot read corpus {}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .collect();
    names.sort();
    let mut items: BTreeMap<String, CorpusItem> = BTreeMap::new();
    for name in &names {
        if let Some((id, _)) = name.split_once(".perturbed.") {
            let template = names.iter().find(|n| n.starts_with(&format!("{id}.template."))).map(|n| dir.join(n));
            let record = dir.join(format!("{id}.record.json"));
            items.insert(
                id.to_string(),
                CorpusItem {
                    id: id.to_string(),
                    template,
                    perturbed: dir.join(name),
                    record: record.is_file().then_some(record),
                },
            );
        }
    }
    Ok(items.into_values().collect())
}

struct Ready {
    id: String,
    template: preshape_align::PointCloud,
    perturbed: preshape_align::PointCloud,
    record: RecordFile,
}

fn load_item(item: &CorpusItem) -> Result<Ready, String> {
    let template = item.template.as_ref().ok_or("missing template")?;
    let record = item.record.as_ref().ok_or("missing sidecar record")?;
    let text = std::fs::read_to_string(record).map_err(|e| format!("{}: {e}", record.display()))?;
    let record: RecordFile = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", record.display()))?;
    Ok(Ready {
        id: item.id.clone(),
        template: load_cloud(template, Format::Auto).map_err(|e| e.to_string())?,
        perturbed: load_cloud(&item.perturbed, Format::Auto).map_err(|e| e.to_string())?,
        record,
    })
}

fn bench_one(item: &Ready, cfg: &RunConfig) -> BenchRow {
    let reg_cfg = cfg.registration();
    let outcome = register_full(&item.perturbed, &item.template, &reg_cfg).and_then(|reg| {
        let truth = &item.record.record.transform;
        let recovered = &reg.report.transform;
        let metrics = evaluate_registration(&reg.source.cloud, &reg.template.cloud, truth, recovered, cfg.knn_k, cfg.enable_mse_condition)?;
        let err = recovered.rotation().angle_to(&truth.rotation().inverse()).to_degrees();
        Ok((reg.report.timings.total_s, metrics, err))
    });
    match outcome {
        Ok((time_s, metrics, err)) => BenchRow {
            item_id: item.id.clone(),
            time_s,
            metrics: Some(metrics),
            rotation_error_deg: Some(err),
            error: None,
        },
        Err(e) => BenchRow {
            item_id: item.id.clone(),
            time_s: 0.0,
            metrics: None,
            rotation_error_deg: None,
            error: Some(e.to_string()),
        },
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Registers every usable item, in parallel up to `worker_count`, and
/// aggregates the metrics. Rows come back in id order.
pub fn run(opts: &BenchOptions) -> Result<(Vec<BenchRow>, BenchSummary), CliError> {
    opts.config.validate()?;
    let found = discover(&opts.corpus)?;
    if found.is_empty() {
        return Err(CliError::Corpus(format!("no items in {}", opts.corpus.display())));
    }
    let mut ready = Vec::new();
    let mut skipped_ids = Vec::new();
    for item in &found {
        match load_item(item) {
            Ok(r) => ready.push(r),
            Err(why) => {
                log::warn!("skipping {}: {why}", item.id);
                skipped_ids.push(item.id.clone());
            }
        }
    }
    if ready.is_empty() {
        return Err(CliError::Corpus(format!("no usable items in {}", opts.corpus.display())));
    }
    let cfg = &opts.config;
    let rows: Vec<BenchRow> = with_pool(cfg.worker_count, || ready.par_iter().map(|item| bench_one(item, cfg)).collect())?;
    let metrics: Vec<Metrics> = rows.iter().filter_map(|r| r.metrics).collect();
    let summary = BenchSummary {
        schema_version: SCHEMA_VERSION,
        corpus: opts.corpus.display().to_string(),
        items: rows.len(),
        failed: rows.len() - metrics.len(),
        skipped: skipped_ids.len(),
        skipped_ids,
        mean_time_s: mean(rows.iter().filter(|r| r.metrics.is_some()).map(|r| r.time_s)),
        mean_mse: mean(metrics.iter().map(|m| m.mse)),
        mean_mse_n: mean(metrics.iter().map(|m| m.mse_n)),
        mean_gt_cos: mean(metrics.iter().map(|m| m.gt_cos)),
        rr: rows.iter().filter(|r| r.success()).count() as f64 / rows.len() as f64,
        config: cfg.clone(),
    };
    if let Some(path) = &opts.csv {
        write_csv(path, &rows)?;
    }
    if let Some(path) = &opts.report {
        write_json(path, &summary)?;
    }
    Ok((rows, summary))
}

/// Per-item CSV with columns `item_id,time_s,mse,mse_n,gt_cos,success`.
/// Failed registrations leave the metric cells empty.
pub fn write_csv(path: &Path, rows: &[BenchRow]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::write(path, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
    w.write_record(["item_id", "time_s", "mse", "mse_n", "gt_cos", "success"])
        .map_err(|e| CliError::write(path, e))?;
    for r in rows {
        let cell = |f: fn(&Metrics) -> f64| r.metrics.as_ref().map_or(String::new(), |m| f(m).to_string());
        w.write_record([
            r.item_id.clone(),
            r.time_s.to_string(),
            cell(|m| m.mse),
            cell(|m| m.mse_n),
            cell(|m| m.gt_cos),
            r.success().to_string(),
        ])
        .map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}
