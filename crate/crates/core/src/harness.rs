//! Monte Carlo experiments: empirical rejection rates over an `(n, T)`
//! grid, with every random draw addressed by `(cell, replication, name)`
//! so results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::WildMultiplier;
use crate::dgp::{simulate_panel, DgpConfig, DgpSpec, ReplicationRngs};
use crate::error::{Error, Result};
use crate::fixedb::{FixedBCache, FixedBSim};
use crate::inference::{
    check_fixed_b_level, resolve_fixed_b, Analysis, Fit, InferenceOptions, Method, MethodOutcome,
};
use crate::rng::{seed_plan, StreamName};

fn default_replications() -> usize {
    1000
}
fn default_bootstrap_reps() -> usize {
    199
}
fn default_level() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub name: String,
    /// `(n, T)` cells.
    pub grid: Vec<[usize; 2]>,
    pub dgp: DgpConfig,
    pub methods: Vec<Method>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_bootstrap_reps")]
    pub bootstrap_reps: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Null value of the tests; zeros when absent. Power is obtained by
    /// setting `dgp.beta` away from it.
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub wild_multiplier: WildMultiplier,
    #[serde(default)]
    pub fixed_b: FixedBSim,
}

impl Experiment {
    pub fn new(
        name: impl Into<String>,
        grid: Vec<[usize; 2]>,
        dgp: DgpConfig,
        methods: Vec<Method>,
    ) -> Self {
        Self {
            name: name.into(),
            grid,
            dgp,
            methods,
            replications: default_replications(),
            bootstrap_reps: default_bootstrap_reps(),
            level: default_level(),
            beta0: None,
            master_seed: default_seed(),
            wild_multiplier: WildMultiplier::Gaussian,
            fixed_b: FixedBSim::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.grid.is_empty() || self.methods.is_empty() {
            return Err(Error::Config(
                "experiment needs at least one cell and one method".into(),
            ));
        }
        if self.methods.iter().any(|m| m.is_bootstrap())
            && self.bootstrap_reps < crate::bootstrap::MIN_REPS_FOR_PVALUE
        {
            return Err(Error::Config(format!(
                "bootstrap_reps must be at least {}",
                crate::bootstrap::MIN_REPS_FOR_PVALUE
            )));
        }
        if self.methods.contains(&Method::DkFixb) {
            check_fixed_b_level(self.level)?;
        }
        if let Some(b) = &self.beta0 {
            if b.len() != self.dgp.beta.len() {
                return Err(Error::Config("beta0 and dgp.beta differ in length".into()));
            }
        }
        self.dgp.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("experiment serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}

/// One line of the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub n: usize,
    #[serde(rename = "T")]
    pub periods: usize,
    pub method: Method,
    pub rejections: usize,
    pub replications: usize,
    pub rate: f64,
    /// `sqrt(r(1 − r)/R)`.
    pub se: f64,
    pub degenerate_draws: usize,
    pub mean_bandwidth: Option<f64>,
    pub mean_block_length: Option<f64>,
    pub mean_scale_cv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub name: String,
    pub dgp: DgpConfig,
    pub replications: usize,
    pub bootstrap_reps: usize,
    pub level: f64,
    pub master_seed: u64,
    pub rows: Vec<McRow>,
}

impl McReport {
    pub fn row(&self, n: usize, periods: usize, method: Method) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.periods == periods && r.method == method)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}  (R = {}, B = {}, level {}, seed {})",
            if self.name.is_empty() {
                "experiment"
            } else {
                &self.name
            },
            self.replications,
            self.bootstrap_reps,
            self.level,
            self.master_seed
        );
        let _ = writeln!(
            s,
            "{:>5} {:>5}  {:<14} {:>7} {:>7} {:>6} {:>7} {:>7}",
            "n", "T", "method", "rate", "se", "degen", "m_T", "cv"
        );
        for r in &self.rows {
            let opt = |v: Option<f64>, p: usize| {
                v.map_or_else(|| "-".to_string(), |x| format!("{x:.p$}"))
            };
            let _ = writeln!(
                s,
                "{:>5} {:>5}  {:<14} {:>7.3} {:>7.4} {:>6} {:>7} {:>7}",
                r.n,
                r.periods,
                r.method.name(),
                r.rate,
                r.se,
                r.degenerate_draws,
                opt(r.mean_bandwidth, 2),
                opt(r.mean_scale_cv, 3)
            );
        }
        s
    }

    /// Run manifest; the only place wall time appears, so the report itself
    /// stays byte-identical across runs.
    pub fn manifest(
        &self,
        exp: &Experiment,
        wall_time_secs: f64,
        threads: usize,
    ) -> serde_json::Value {
        serde_json::json!({
            "library": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": exp.config_hash(),
            "experiment": exp,
            "master_seed": exp.master_seed,
            "stream_layout": "ChaCha8, stream id = cell << 48 | replication << 16 | name << 8",
            "threads": threads,
            "wall_time_secs": wall_time_secs,
        })
    }
}

struct RepOutcome {
    outcomes: Vec<MethodOutcome>,
    scale_cv: Option<f64>,
}

fn replicate(exp: &Experiment, spec: &DgpSpec, cell: usize, rep: usize) -> Result<RepOutcome> {
    let seed = exp.master_seed;
    let mut u = seed_plan(seed, cell, rep, StreamName::UInnovations).rng();
    let mut x = seed_plan(seed, cell, rep, StreamName::XInnovations).rng();
    let mut h = seed_plan(seed, cell, rep, StreamName::Hetero).rng();
    let sim = simulate_panel(
        spec,
        ReplicationRngs {
            u: &mut u,
            x: &mut x,
            hetero: &mut h,
        },
    )?;
    let scale_cv = sim.scale_cv;
    let fit = Fit::new(sim.panel)?;
    let opts = InferenceOptions {
        bootstrap_reps: exp.bootstrap_reps,
        level: exp.level,
        beta0: exp.beta0.clone(),
        seed,
        wild_multiplier: exp.wild_multiplier,
        cell,
        replication: rep,
    };
    let mut analysis = Analysis::new(&fit, &opts)?;
    let outcomes = exp
        .methods
        .iter()
        .map(|&m| analysis.run(m))
        .collect::<Result<_>>()?;
    Ok(RepOutcome { outcomes, scale_cv })
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Run one cell. Fixed-b decisions are settled after all replications,
/// once per distinct `b`, so the cache is never touched from worker
/// threads.
fn run_cell(
    exp: &Experiment,
    cell: usize,
    n: usize,
    periods: usize,
    cache: &mut FixedBCache,
) -> Result<Vec<McRow>> {
    let mut design_rng = seed_plan(exp.master_seed, cell, 0, StreamName::Design).rng();
    let spec = exp.dgp.realize(n, periods, &mut design_rng)?;
    let results: Vec<Result<RepOutcome>> = (0..exp.replications)
        .into_par_iter()
        .map(|r| replicate(exp, &spec, cell, r))
        .collect();
    let mut reps = Vec::with_capacity(results.len());
    for (r, res) in results.into_iter().enumerate() {
        reps.push(res.map_err(|e| Error::Replication {
            cell,
            replication: r,
            source: Box::new(e),
        })?);
    }

    let mut b_values: BTreeMap<u64, f64> = BTreeMap::new();
    for rep in &reps {
        for o in &rep.outcomes {
            if let Some(b) = o.b {
                b_values.insert(b.to_bits(), b);
            }
        }
    }
    let k = exp.dgp.beta.len();
    let mut tables = BTreeMap::new();
    for (bits, b) in b_values {
        tables.insert(bits, cache.get_or_compute(b, k, &exp.fixed_b)?);
    }
    let beta_unused = nalgebra::DVector::zeros(k);
    for rep in &mut reps {
        for o in &mut rep.outcomes {
            if let Some(b) = o.b {
                resolve_fixed_b(o, &tables[&b.to_bits()], exp.level, &beta_unused)?;
                o.confidence_intervals = None;
            }
        }
    }

    let mean_scale_cv = mean_of(reps.iter().filter_map(|r| r.scale_cv));
    let r_total = exp.replications as f64;
    Ok(exp
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let outs = || reps.iter().map(move |r| &r.outcomes[i]);
            let rejections = outs().filter(|o| o.reject == Some(true)).count();
            let rate = rejections as f64 / r_total;
            McRow {
                n,
                periods,
                method,
                rejections,
                replications: exp.replications,
                rate,
                se: (rate * (1.0 - rate) / r_total).sqrt(),
                degenerate_draws: outs().filter_map(|o| o.degenerate_draws).sum(),
                mean_bandwidth: mean_of(outs().filter_map(|o| o.bandwidth.map(|b| b as f64))),
                mean_block_length: mean_of(outs().filter_map(|o| o.block_length.map(|b| b as f64))),
                mean_scale_cv,
            }
        })
        .collect())
}

/// Run every cell with an in-memory fixed-b cache.
pub fn run_experiment(exp: &Experiment) -> Result<McReport> {
    run_experiment_with_cache(exp, &mut FixedBCache::in_memory())
}

pub fn run_experiment_with_cache(exp: &Experiment, cache: &mut FixedBCache) -> Result<McReport> {
    exp.validate()?;
    let mut rows = Vec::new();
    for (cell, &[n, periods]) in exp.grid.iter().enumerate() {
        log::info!(
            "cell {cell}: n = {n}, T = {periods}, R = {}",
            exp.replications
        );
        rows.extend(run_cell(exp, cell, n, periods, cache)?);
    }
    Ok(McReport {
        name: exp.name.clone(),
        dgp: exp.dgp.clone(),
        replications: exp.replications,
        bootstrap_reps: exp.bootstrap_reps,
        level: exp.level,
        master_seed: exp.master_seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::Spatial;

    fn small(methods: Vec<Method>) -> Experiment {
        let mut e = Experiment::new(
            "t",
            vec![[4, 16]],
            DgpConfig::homogeneous(Spatial::Weak, 0.5),
            methods,
        );
        e.replications = 3;
        e.bootstrap_reps = 99;
        e.fixed_b = FixedBSim {
            grid: 100,
            reps: 200,
            seed: 3,
        };
        e
    }

    #[test]
    fn single_replication_gives_zero_or_one() {
        let mut e = small(Method::ALL.to_vec());
        e.replications = 1;
        let rep = run_experiment(&e).unwrap();
        assert_eq!(rep.rows.len(), 9);
        for r in &rep.rows {
            assert!(r.rejections <= 1);
            assert!(r.rate == 0.0 || r.rate == 1.0);
        }
    }

    #[test]
    fn rates_have_binomial_standard_errors() {
        let rep = run_experiment(&small(vec![Method::HsAsy, Method::DkAsy])).unwrap();
        for r in &rep.rows {
            assert!((0.0..=1.0).contains(&r.rate));
            assert!((r.se - (r.rate * (1.0 - r.rate) / 3.0).sqrt()).abs() < 1e-15);
        }
        assert!(rep
            .row(4, 16, Method::DkAsy)
            .unwrap()
            .mean_bandwidth
            .is_some());
    }

    #[test]
    fn invalid_experiments_are_config_errors() {
        let mut e = small(vec![Method::HsNb]);
        e.bootstrap_reps = 10;
        assert!(matches!(e.validate(), Err(Error::Config(_))));
        let mut e = small(vec![Method::HsAsy]);
        e.level = 1.5;
        assert!(matches!(e.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let rep = run_experiment(&small(vec![Method::HsAsy, Method::HsWb])).unwrap();
        let csv = rep.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("n,T,method,rejections"));
    }
}
