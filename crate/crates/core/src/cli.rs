//! Command-line front end. `run` returns the process exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::dgp::{simulate_panel, ReplicationRngs};
use crate::error::{Error, Result};
use crate::fixedb::{FixedBCache, FixedBSim, LEVELS};
use crate::harness::run_experiment_with_cache;
use crate::inference::{estimate_panel, Method};
use crate::io::{ingest_csv, save_panel_csv, write_json, Config, EstimateConfig, FixedBConfig};
use crate::rng::{seed_plan, StreamName};

#[derive(Debug, Parser)]
#[command(
    name = "freqpanel",
    version,
    about = "Cluster and frequency-domain bootstrap inference for fixed-effects panels"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (JSON for estimate, CSV for simulate and fixedb-cv).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// -v for info, -vv for debug logging.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// Test settings shared by `estimate` and `simulate`.
#[derive(Debug, Args, Default)]
pub struct TestArgs {
    /// Method to run; repeat for several (hs-asy, hs-nb, hs-wb,
    /// hs-robust-asy, hs-robust-nb, hs-robust-wb, dk-asy, dk-fixb, dk-mbb).
    #[arg(long = "method")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub bootstrap_reps: Option<usize>,
    /// Nominal level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Null value, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta0: Option<Vec<f64>>,
}

impl TestArgs {
    fn methods(&self) -> Result<Option<Vec<Method>>> {
        if self.methods.is_empty() {
            return Ok(None);
        }
        self.methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a panel CSV and report tests of H0: beta = beta0.
    Estimate {
        /// Long-format panel CSV (overrides estimate.data).
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        tests: TestArgs,
    },
    /// Run the Monte Carlo experiment of the config file, or export one
    /// simulated panel with --panel.
    Simulate {
        #[command(flatten)]
        tests: TestArgs,
        #[arg(long)]
        replications: Option<usize>,
        /// Write a single simulated NxT panel (e.g. 50x16) as CSV instead.
        #[arg(long, value_parser = parse_cell)]
        panel: Option<(usize, usize)>,
        /// Where to write the run manifest (JSON).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Persistent fixed-b critical value cache.
        #[arg(long)]
        fixedb_cache: Option<PathBuf>,
    },
    /// Simulate fixed-b critical values for the Bartlett-kernel Wald test.
    FixedbCv {
        /// Bandwidth fractions m_T / T; repeatable.
        #[arg(long = "b")]
        b: Vec<f64>,
        /// Number of restrictions.
        #[arg(long)]
        q: Option<usize>,
        /// Grid points per Brownian path.
        #[arg(long)]
        grid: Option<usize>,
        /// Simulated paths.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Check a config file and/or a panel CSV without running anything.
    Validate {
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn parse_cell(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X', ','])
        .ok_or_else(|| format!("expected NxT, got {s:?}"))?;
    let n = a.trim().parse().map_err(|_| format!("bad n in {s:?}"))?;
    let t = b.trim().parse().map_err(|_| format!("bad T in {s:?}"))?;
    Ok((n, t))
}

fn load_config(path: Option<&Path>) -> Result<Option<Config>> {
    match path {
        Some(p) => {
            let cfg = Config::load(p)?;
            cfg.validate()?;
            Ok(Some(cfg))
        }
        None => Ok(None),
    }
}

fn open_cache(path: Option<&PathBuf>) -> Result<FixedBCache> {
    match path {
        Some(p) => FixedBCache::open(p),
        None => Ok(FixedBCache::in_memory()),
    }
}

fn estimate(cli: &Cli, data: &Option<PathBuf>, tests: &TestArgs) -> Result<()> {
    let mut ec: EstimateConfig = load_config(cli.config.as_deref())?
        .and_then(|c| c.estimate)
        .unwrap_or_default();
    if let Some(m) = tests.methods()? {
        ec.methods = m;
    }
    if let Some(b) = tests.bootstrap_reps {
        ec.bootstrap_reps = b;
    }
    if let Some(l) = tests.level {
        ec.level = l;
    }
    if let Some(b) = &tests.beta0 {
        ec.beta0 = Some(b.clone());
    }
    if let Some(s) = cli.seed {
        ec.seed = s;
    }
    let path = data
        .clone()
        .or_else(|| ec.data.clone())
        .ok_or_else(|| Error::Config("no panel given: use --data or estimate.data".into()))?;
    let panel = ingest_csv(&path)?;
    let mut cache = open_cache(ec.fixed_b_cache.as_ref())?;
    let result = estimate_panel(panel, &ec.methods, &ec.options(), &mut cache, &ec.fixed_b)?;
    cache.save()?;
    print!("{}", result.render_text());
    if let Some(out) = &cli.out {
        write_json(&result, out)?;
    }
    Ok(())
}

fn simulate(
    cli: &Cli,
    tests: &TestArgs,
    replications: Option<usize>,
    panel: Option<(usize, usize)>,
    manifest: &Option<PathBuf>,
    fixedb_cache: &Option<PathBuf>,
) -> Result<()> {
    let mut exp = load_config(cli.config.as_deref())?
        .and_then(|c| c.experiment)
        .ok_or_else(|| {
            Error::Config("simulate needs a config file with an [experiment] section".into())
        })?;
    if let Some(s) = cli.seed {
        exp.master_seed = s;
    }
    if let Some((n, t)) = panel {
        let out = cli
            .out
            .as_ref()
            .ok_or_else(|| Error::Config("--panel needs --out for the CSV".into()))?;
        let seed = exp.master_seed;
        let spec = exp
            .dgp
            .realize(n, t, &mut seed_plan(seed, 0, 0, StreamName::Design).rng())?;
        let sim = simulate_panel(
            &spec,
            ReplicationRngs {
                u: &mut seed_plan(seed, 0, 0, StreamName::UInnovations).rng(),
                x: &mut seed_plan(seed, 0, 0, StreamName::XInnovations).rng(),
                hetero: &mut seed_plan(seed, 0, 0, StreamName::Hetero).rng(),
            },
        )?;
        save_panel_csv(&sim.panel, out)?;
        println!("wrote {n}x{t} panel to {}", out.display());
        return Ok(());
    }
    if let Some(m) = tests.methods()? {
        exp.methods = m;
    }
    if let Some(b) = tests.bootstrap_reps {
        exp.bootstrap_reps = b;
    }
    if let Some(l) = tests.level {
        exp.level = l;
    }
    if let Some(b) = &tests.beta0 {
        exp.beta0 = Some(b.clone());
    }
    if let Some(r) = replications {
        exp.replications = r;
    }
    let mut cache = open_cache(fixedb_cache.as_ref())?;
    let start = Instant::now();
    let report = run_experiment_with_cache(&exp, &mut cache)?;
    let wall = start.elapsed().as_secs_f64();
    cache.save()?;
    print!("{}", report.to_text());
    if let Some(out) = &cli.out {
        std::fs::write(out, report.to_csv()?)?;
    }
    if let Some(m) = manifest {
        write_json(
            &report.manifest(&exp, wall, rayon::current_num_threads()),
            m,
        )?;
    }
    Ok(())
}

fn fixedb_cv(
    cli: &Cli,
    b: &[f64],
    q: Option<usize>,
    grid: Option<usize>,
    reps: Option<usize>,
    cache: &Option<PathBuf>,
) -> Result<()> {
    let fc: FixedBConfig = load_config(cli.config.as_deref())?
        .and_then(|c| c.fixed_b)
        .unwrap_or_default();
    let bs = if b.is_empty() {
        fc.b.clone()
    } else {
        b.to_vec()
    };
    if bs.is_empty() {
        return Err(Error::Config(
            "no bandwidth fractions: use --b or fixed_b.b".into(),
        ));
    }
    let q = q.unwrap_or(fc.q);
    let sim = FixedBSim {
        grid: grid.unwrap_or(fc.sim.grid),
        reps: reps.unwrap_or(fc.sim.reps),
        seed: cli.seed.unwrap_or(fc.sim.seed),
    };
    let mut store = open_cache(cache.as_ref().or(fc.cache.as_ref()))?;
    let mut csv = String::from("b,q,level,wald_cv,t_cv\n");
    println!(
        "{:>8} {:>3} {:>6} {:>10} {:>8}",
        "b", "q", "level", "wald cv", "t cv"
    );
    for &bv in &bs {
        let table = store.get_or_compute(bv, q, &sim)?;
        for (i, level) in LEVELS.iter().enumerate() {
            let t = table.t_cv.as_ref().map(|t| t[i]);
            let t_txt = t.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            println!(
                "{bv:>8.4} {q:>3} {level:>6.2} {:>10.4} {t_txt:>8}",
                table.wald_cv[i]
            );
            csv.push_str(&format!(
                "{bv},{q},{level},{},{}\n",
                table.wald_cv[i],
                t.map_or_else(String::new, |v| v.to_string())
            ));
        }
    }
    store.save()?;
    if let Some(out) = &cli.out {
        std::fs::write(out, csv)?;
    }
    Ok(())
}

fn validate(cli: &Cli, data: &Option<PathBuf>) -> Result<()> {
    if cli.config.is_none() && data.is_none() {
        return Err(Error::Config(
            "nothing to validate: give --config and/or --data".into(),
        ));
    }
    if let Some(cfg) = load_config(cli.config.as_deref())? {
        let sections: Vec<&str> = [
            cfg.experiment.as_ref().map(|_| "experiment"),
            cfg.estimate.as_ref().map(|_| "estimate"),
            cfg.fixed_b.as_ref().map(|_| "fixed_b"),
        ]
        .into_iter()
        .flatten()
        .collect();
        println!(
            "config ok (version {}; sections: {})",
            cfg.version,
            sections.join(", ")
        );
    }
    if let Some(path) = data {
        let p = ingest_csv(path)?;
        println!(
            "panel ok: n = {}, T = {}, k = {}",
            p.n(),
            p.periods(),
            p.k()
        );
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate { data, tests } => estimate(cli, data, tests),
        Command::Simulate {
            tests,
            replications,
            panel,
            manifest,
            fixedb_cache,
        } => simulate(cli, tests, *replications, *panel, manifest, fixedb_cache),
        Command::FixedbCv {
            b,
            q,
            grid,
            reps,
            cache,
        } => fixedb_cv(cli, b, *q, *grid, *reps, cache),
        Command::Validate { data } => validate(cli, data),
    }
}

/// Parse, run and map the outcome to an exit code: 0 ok, 2 input,
/// 3 numerical, 4 config (including usage errors).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();

    let outcome = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::Config(format!("cannot start {t} threads: {e}"))),
        },
        None => execute(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.family().exit_code()
        }
    }
}
