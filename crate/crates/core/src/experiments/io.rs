//! Long-format CSV datasets and JSON manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::model::SpectralConstants;
use crate::solvers::SolverOptions;

use super::config::{ExperimentConfig, ExperimentKind, Scale};

pub const SCHEMA_VERSION: u32 = 1;

/// One value of one quantity. `trial = -1` marks an aggregate over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Dictionary shape label such as `(2,1)`.
    pub config: String,
    pub kernel: String,
    /// Name of the swept variable (`delta`, `radius`, `snr_db`, `iteration`, …).
    pub axis: String,
    pub axis_value: f64,
    pub trial: i64,
    pub quantity: String,
    pub value: f64,
}

/// Constants of one instance, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRecord {
    pub config: String,
    pub kernel: String,
    pub sigma: SpectralConstants,
    pub sigma_grid: SpectralConstants,
    pub c1: f64,
    pub c2: f64,
    pub c_vp: f64,
    pub k_exact: f64,
    pub k_inv_sigma: f64,
    pub k_vp: f64,
    pub sigma_min_tilde: f64,
    pub lambda_min_ls: f64,
    pub lambda_min_vp: f64,
    pub noise_norm: f64,
}

/// Rows plus the manifest-level content of one experiment run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
    pub constants: Vec<ConstantsRecord>,
    pub summary: serde_json::Map<String, Value>,
}

impl Dataset {
    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, config: &str, kernel: &str, axis: &str, axis_value: f64, trial: i64, quantity: &str, value: f64) {
        self.rows.push(Row {
            config: config.to_string(),
            kernel: kernel.to_string(),
            axis: axis.to_string(),
            axis_value,
            trial,
            quantity: quantity.to_string(),
            value,
        });
    }

    pub fn note<V: Serialize>(&mut self, key: &str, value: V) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// Rows matching all given filters.
    pub fn select<'a>(&'a self, config: &'a str, kernel: &'a str, quantity: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.config == config && r.kernel == kernel && r.quantity == quantity)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<Row>> {
        let mut r = csv::Reader::from_reader(input);
        let rows: std::result::Result<Vec<Row>, _> = r.deserialize().collect();
        Ok(rows?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub artifact_version: String,
    pub schema_version: u32,
    pub seed: u64,
    pub scale: Scale,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub constants: Vec<ConstantsRecord>,
    pub solver: SolverOptions,
    pub summary: serde_json::Map<String, Value>,
}

impl Manifest {
    pub fn new(kind: ExperimentKind, cfg: &ExperimentConfig, scale: Scale, data: &Dataset) -> Self {
        Self {
            experiment: kind.name().to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: SCHEMA_VERSION,
            seed: cfg.seed,
            scale,
            config: cfg.clone(),
            config_hash: cfg.hash(),
            constants: data.constants.clone(),
            solver: cfg.solver,
            summary: data.summary.clone(),
        }
    }
}

/// Writes `<out>/<experiment>/data.csv` and `manifest.json`; returns the
/// experiment directory.
pub fn write_outputs(
    out: &Path,
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    scale: Scale,
    data: &Dataset,
) -> Result<PathBuf> {
    let dir = out.join(kind.name());
    fs::create_dir_all(&dir)?;
    data.write_csv(fs::File::create(dir.join("data.csv"))?)?;
    let manifest = Manifest::new(kind, cfg, scale, data);
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(dir)
}
