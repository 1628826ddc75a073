//! Long-format panel CSV, the TOML configuration schema and JSON results.
//!
//! Panel files have a header and one row per `(individual, period)`:
//!
//! ```text
//! individual_id,period_id,y,x1,x2
//! 1,1,0.52,1.3,-0.2
//! ```
//!
//! Columns are read by position; the names of columns four onward become
//! the regressor names.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bootstrap::WildMultiplier;
use crate::error::{Error, Result};
use crate::fixedb::FixedBSim;
use crate::harness::Experiment;
use crate::inference::{InferenceOptions, Method};
use crate::panel::PanelData;

/// Current configuration schema version.
pub const CONFIG_VERSION: u32 = 1;

/// Missing or duplicate cells listed in an error before truncating.
const MAX_LISTED: usize = 10;

/// Numeric ids sort numerically, anything else lexicographically.
fn id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

fn sorted_ids(set: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = set.into_iter().collect();
    v.sort_by(|a, b| id_order(a, b));
    v
}

fn parse_number(s: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| {
        Error::Input(format!(
            "line {line}, column {column}: {s:?} is not a number"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("line {line}, column {column}")));
    }
    Ok(v)
}

/// Read a long-format panel from any reader.
pub fn read_panel_csv<R: Read>(reader: R) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 4 {
        return Err(Error::Input(format!(
            "expected columns individual_id, period_id, y, x1..xk; header has {} column(s)",
            header.len()
        )));
    }
    let k = header.len() - 3;
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[0].to_string();
        let period = rec[1].to_string();
        let values = (2..header.len())
            .map(|c| parse_number(&rec[c], line, &header[c]))
            .collect::<Result<Vec<f64>>>()?;
        let key = (id, period);
        if cells.contains_key(&key) {
            duplicates.push(format!(
                "(individual {}, period {}) at line {line}",
                key.0, key.1
            ));
        } else {
            cells.insert(key, values);
        }
    }
    if !duplicates.is_empty() {
        return Err(Error::Input(format!(
            "duplicate rows: {}",
            truncate_list(&duplicates)
        )));
    }
    let ids = sorted_ids(cells.keys().map(|k| k.0.clone()).collect());
    let periods = sorted_ids(cells.keys().map(|k| k.1.clone()).collect());
    let mut missing = Vec::new();
    for id in &ids {
        for t in &periods {
            if !cells.contains_key(&(id.clone(), t.clone())) {
                missing.push(format!("(individual {id}, period {t})"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Input(format!(
            "unbalanced panel, missing cells: {}",
            truncate_list(&missing)
        )));
    }
    let (n, t_len) = (ids.len(), periods.len());
    let mut y = Array2::zeros((n, t_len));
    let mut x = vec![Array2::zeros((n, t_len)); k];
    for (p, id) in ids.iter().enumerate() {
        for (t, period) in periods.iter().enumerate() {
            let v = &cells[&(id.clone(), period.clone())];
            y[(p, t)] = v[0];
            for c in 0..k {
                x[c][(p, t)] = v[c + 1];
            }
        }
    }
    PanelData::with_names(y, x, header[3..].to_vec())?.with_ids(ids, periods)
}

fn truncate_list(items: &[String]) -> String {
    let mut s = items
        .iter()
        .take(MAX_LISTED)
        .cloned()
        .collect::<Vec<_>>()
        .join(", ");
    if items.len() > MAX_LISTED {
        s.push_str(&format!(" and {} more", items.len() - MAX_LISTED));
    }
    s
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<PanelData> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_panel_csv(file)
}

/// Write a panel in long format, ordered by individual then period.
/// Values use the shortest representation that parses back exactly.
pub fn write_panel_csv<W: Write>(panel: &PanelData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "individual_id".to_string(),
        "period_id".to_string(),
        "y".to_string(),
    ];
    header.extend(panel.regressor_names().iter().cloned());
    w.write_record(&header)?;
    let ids: Vec<String> = match panel.individual_ids() {
        Some(ids) => ids.to_vec(),
        None => (1..=panel.n()).map(|p| p.to_string()).collect(),
    };
    let periods: Vec<String> = match panel.period_ids() {
        Some(ids) => ids.to_vec(),
        None => (1..=panel.periods()).map(|t| t.to_string()).collect(),
    };
    for p in 0..panel.n() {
        for t in 0..panel.periods() {
            let mut rec = vec![
                ids[p].clone(),
                periods[t].clone(),
                panel.y()[(p, t)].to_string(),
            ];
            rec.extend((0..panel.k()).map(|c| panel.x_at(p, t, c).to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_panel_csv(panel: &PanelData, path: impl AsRef<Path>) -> Result<()> {
    write_panel_csv(panel, File::create(path)?)
}

fn default_methods() -> Vec<Method> {
    vec![Method::HsAsy, Method::HsNb, Method::HsWb, Method::DkAsy]
}
fn default_reps() -> usize {
    199
}
fn default_level() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}
fn default_q() -> usize {
    1
}

/// `[estimate]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Panel CSV, relative to the working directory.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub wild_multiplier: WildMultiplier,
    #[serde(default)]
    pub fixed_b: FixedBSim,
    #[serde(default)]
    pub fixed_b_cache: Option<PathBuf>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            data: None,
            methods: default_methods(),
            bootstrap_reps: default_reps(),
            level: default_level(),
            beta0: None,
            seed: default_seed(),
            wild_multiplier: WildMultiplier::Gaussian,
            fixed_b: FixedBSim::default(),
            fixed_b_cache: None,
        }
    }
}

impl EstimateConfig {
    pub fn options(&self) -> InferenceOptions {
        InferenceOptions {
            bootstrap_reps: self.bootstrap_reps,
            level: self.level,
            beta0: self.beta0.clone(),
            seed: self.seed,
            wild_multiplier: self.wild_multiplier,
            cell: 0,
            replication: 0,
        }
    }
}

/// `[fixed_b]` section for the `fixedb-cv` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedBConfig {
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub sim: FixedBSim,
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

impl Default for FixedBConfig {
    fn default() -> Self {
        Self {
            b: Vec::new(),
            q: default_q(),
            sim: FixedBSim::default(),
            cache: None,
        }
    }
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub estimate: Option<EstimateConfig>,
    #[serde(default)]
    pub fixed_b: Option<FixedBConfig>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (this build reads version {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Check every section that is present.
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = &self.experiment {
            e.validate()?;
        }
        if let Some(e) = &self.estimate {
            if e.methods.is_empty() {
                return Err(Error::Config("estimate.methods is empty".into()));
            }
            if !(e.level > 0.0 && e.level < 1.0) {
                return Err(Error::Config(format!(
                    "estimate.level must lie in (0, 1), got {}",
                    e.level
                )));
            }
        }
        if let Some(f) = &self.fixed_b {
            if f.b.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
                return Err(Error::Config("fixed_b.b values must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Input(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
