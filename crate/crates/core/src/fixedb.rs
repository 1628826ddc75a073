//! Fixed-b critical values for Bartlett-kernel Wald and t tests, simulated
//! from discretized Wiener processes, with a plain-text on-disk cache.
//!
//! For a bandwidth fraction `b` the limit of the Wald statistic is
//! `W_q(1)' C_q⁻¹ W_q(1)` with
//!
//! ```text
//! C_q = (2/b) ∫₀¹ W̃W̃' dr − (1/b) ∫₀^{1−b} [W̃(r+b)W̃(r)' + W̃(r)W̃(r+b)'] dr
//! ```
//!
//! and `W̃(r) = W(r) − r W(1)`. Integrals are Riemann sums over `grid` steps.
//!
//! # Cache format
//!
//! UTF-8 text. The first line is `freqpanel-fixedb v1`; lines starting with
//! `#` are comments. Every other line holds whitespace-separated fields
//!
//! ```text
//! b_bits q level_bits grid reps seed cv_bits b level cv
//! ```
//!
//! where `*_bits` are the IEEE-754 bit patterns of the `f64` values as 16
//! lowercase hex digits (exact and endianness independent) and the trailing
//! three fields are decimal renderings for humans, ignored on read.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{standalone, StreamName};

/// Significance levels tabulated by default.
pub const LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

pub const CACHE_HEADER: &str = "freqpanel-fixedb v1";

/// Simulation settings.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(deny_unknown_fields, default)]
pub struct FixedBSim {
    pub grid: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for FixedBSim {
    fn default() -> Self {
        Self {
            grid: 1000,
            reps: 50_000,
            seed: 20_240_601,
        }
    }
}

/// Critical values at [`LEVELS`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedBTable {
    pub b: f64,
    pub q: usize,
    pub levels: Vec<f64>,
    pub wald_cv: Vec<f64>,
    /// Two-sided t critical values, `sqrt` of the Wald values for `q = 1`.
    pub t_cv: Option<Vec<f64>>,
    pub sim: FixedBSim,
}

impl FixedBTable {
    pub fn wald_cv_at(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .map(|i| self.wald_cv[i])
    }

    pub fn t_cv_at(&self, level: f64) -> Option<f64> {
        let i = self.levels.iter().position(|&l| l == level)?;
        self.t_cv.as_ref().map(|v| v[i])
    }
}

fn check_inputs(b: f64, q: usize, sim: &FixedBSim) -> Result<()> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fixed-b fraction must lie in (0, 1], got {b}"
        )));
    }
    if q == 0 {
        return Err(Error::InvalidArgument(
            "fixed-b dimension q must be positive".into(),
        ));
    }
    if sim.grid < 2 || sim.reps < 100 {
        return Err(Error::InvalidArgument(format!(
            "fixed-b simulation needs grid >= 2 and reps >= 100, got {} and {}",
            sim.grid, sim.reps
        )));
    }
    Ok(())
}

/// One simulated draw of the limiting Wald functional from `q × grid`
/// standard normal increments (column-major by step).
fn functional(b: f64, q: usize, grid: usize, increments: &[f64]) -> f64 {
    let g = grid as f64;
    let scale = 1.0 / g.sqrt();
    let mut w = vec![0.0; q * grid];
    let mut acc = vec![0.0; q];
    for i in 0..grid {
        for a in 0..q {
            acc[a] += increments[i * q + a] * scale;
            w[i * q + a] = acc[a];
        }
    }
    // bridge W̃_i = W_i − (i/G) W(1), i = 1..G
    for i in 0..grid {
        let r = (i + 1) as f64 / g;
        for a in 0..q {
            w[i * q + a] -= r * acc[a];
        }
    }
    let lag = ((b * g).round() as usize).max(1);
    let mut c = DMatrix::zeros(q, q);
    for i in 0..grid {
        for a in 0..q {
            for d in 0..q {
                c[(a, d)] += (2.0 / b) * w[i * q + a] * w[i * q + d] / g;
            }
        }
    }
    if lag < grid {
        for i in 0..grid - lag {
            for a in 0..q {
                for d in 0..q {
                    let cross =
                        w[(i + lag) * q + a] * w[i * q + d] + w[i * q + a] * w[(i + lag) * q + d];
                    c[(a, d)] -= cross / (b * g);
                }
            }
        }
    }
    let w1 = DVector::from_column_slice(&acc);
    match c.cholesky() {
        Some(ch) => (w1.transpose() * ch.solve(&w1))[(0, 0)],
        None => f64::INFINITY,
    }
}

/// Simulated draws of the limiting Wald statistic, in replication order.
pub fn simulate_fixed_b_statistics(b: f64, q: usize, sim: &FixedBSim) -> Result<Vec<f64>> {
    check_inputs(b, q, sim)?;
    let stream = standalone(sim.seed, StreamName::FixedB);
    Ok((0..sim.reps)
        .into_par_iter()
        .map_init(
            || vec![0.0; q * sim.grid],
            |buf, r| {
                let mut rng = stream.draw_rng(r);
                for v in buf.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                functional(b, q, sim.grid, buf)
            },
        )
        .collect())
}

/// Upper empirical quantile: the `ceil((1 − level) R)`-th order statistic.
pub fn upper_quantile(sorted: &[f64], level: f64) -> f64 {
    let r = sorted.len();
    let idx = (((1.0 - level) * r as f64).ceil() as usize).clamp(1, r) - 1;
    sorted[idx]
}

pub fn fixed_b_critical_values(b: f64, q: usize, sim: &FixedBSim) -> Result<FixedBTable> {
    let mut draws = simulate_fixed_b_statistics(b, q, sim)?;
    draws.sort_by(|x, y| x.total_cmp(y));
    let wald_cv: Vec<f64> = LEVELS.iter().map(|&l| upper_quantile(&draws, l)).collect();
    let t_cv = (q == 1).then(|| wald_cv.iter().map(|v| v.sqrt()).collect());
    Ok(FixedBTable {
        b,
        q,
        levels: LEVELS.to_vec(),
        wald_cv,
        t_cv,
        sim: *sim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct CacheKey {
    b_bits: u64,
    q: usize,
    level_bits: u64,
    sim: FixedBSim,
}

/// Persistent store of simulated Wald critical values.
#[derive(Debug, Clone, Default)]
pub struct FixedBCache {
    path: Option<PathBuf>,
    entries: BTreeMap<CacheKey, f64>,
    dirty: bool,
}

fn parse_hex(field: &str, line_no: usize) -> Result<u64> {
    u64::from_str_radix(field, 16).map_err(|_| {
        Error::Input(format!(
            "fixed-b cache line {line_no}: bad hex field {field:?}"
        ))
    })
}

fn parse_int<T: std::str::FromStr>(field: &str, line_no: usize) -> Result<T> {
    field.parse().map_err(|_| {
        Error::Input(format!(
            "fixed-b cache line {line_no}: bad integer field {field:?}"
        ))
    })
}

impl FixedBCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open a cache file; a missing file yields an empty cache.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut cache = Self {
            path: Some(path.clone()),
            ..Self::default()
        };
        if path.exists() {
            cache.entries = Self::parse(&fs::read_to_string(&path)?)?;
        }
        Ok(cache)
    }

    fn parse(text: &str) -> Result<BTreeMap<CacheKey, f64>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CACHE_HEADER => {}
            other => {
                return Err(Error::Input(format!(
                    "fixed-b cache: expected header {CACHE_HEADER:?}, found {:?}",
                    other.map(|(_, l)| l)
                )))
            }
        }
        let mut entries = BTreeMap::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 7 {
                return Err(Error::Input(format!(
                    "fixed-b cache line {line_no}: expected 7+ fields"
                )));
            }
            let key = CacheKey {
                b_bits: parse_hex(f[0], line_no)?,
                q: parse_int(f[1], line_no)?,
                level_bits: parse_hex(f[2], line_no)?,
                sim: FixedBSim {
                    grid: parse_int(f[3], line_no)?,
                    reps: parse_int(f[4], line_no)?,
                    seed: parse_int(f[5], line_no)?,
                },
            };
            entries.insert(key, f64::from_bits(parse_hex(f[6], line_no)?));
        }
        Ok(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, b: f64, q: usize, sim: &FixedBSim) -> Option<FixedBTable> {
        let wald_cv: Option<Vec<f64>> = LEVELS
            .iter()
            .map(|l| {
                self.entries
                    .get(&CacheKey {
                        b_bits: b.to_bits(),
                        q,
                        level_bits: l.to_bits(),
                        sim: *sim,
                    })
                    .copied()
            })
            .collect();
        let wald_cv = wald_cv?;
        let t_cv = (q == 1).then(|| wald_cv.iter().map(|v| v.sqrt()).collect());
        Some(FixedBTable {
            b,
            q,
            levels: LEVELS.to_vec(),
            wald_cv,
            t_cv,
            sim: *sim,
        })
    }

    pub fn insert(&mut self, table: &FixedBTable) {
        for (l, cv) in table.levels.iter().zip(&table.wald_cv) {
            let key = CacheKey {
                b_bits: table.b.to_bits(),
                q: table.q,
                level_bits: l.to_bits(),
                sim: table.sim,
            };
            if self.entries.insert(key, *cv) != Some(*cv) {
                self.dirty = true;
            }
        }
    }

    /// Cached table, simulating (and recording) it on a miss.
    pub fn get_or_compute(&mut self, b: f64, q: usize, sim: &FixedBSim) -> Result<FixedBTable> {
        if let Some(t) = self.lookup(b, q, sim) {
            return Ok(t);
        }
        let table = fixed_b_critical_values(b, q, sim)?;
        self.insert(&table);
        Ok(table)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(CACHE_HEADER);
        out.push('\n');
        out.push_str("# b_bits q level_bits grid reps seed cv_bits b level cv\n");
        for (k, cv) in &self.entries {
            out.push_str(&format!(
                "{:016x} {} {:016x} {} {} {} {:016x} {} {} {}\n",
                k.b_bits,
                k.q,
                k.level_bits,
                k.sim.grid,
                k.sim.reps,
                k.sim.seed,
                cv.to_bits(),
                f64::from_bits(k.b_bits),
                f64::from_bits(k.level_bits),
                cv
            ));
        }
        out
    }

    /// Write back to the backing file if anything changed.
    pub fn save(&mut self) -> Result<()> {
        if let (Some(path), true) = (&self.path, self.dirty) {
            let mut f = fs::File::create(path)?;
            f.write_all(self.render().as_bytes())?;
            self.dirty = false;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> FixedBSim {
        FixedBSim {
            grid: 200,
            reps: 2000,
            seed: 3,
        }
    }

    #[test]
    fn rejects_bad_fraction() {
        assert!(fixed_b_critical_values(0.0, 1, &quick()).is_err());
        assert!(fixed_b_critical_values(1.5, 1, &quick()).is_err());
        assert!(fixed_b_critical_values(0.5, 0, &quick()).is_err());
    }

    #[test]
    fn quantile_definition() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(upper_quantile(&v, 0.05), 95.0);
        assert_eq!(upper_quantile(&v, 0.10), 90.0);
    }

    #[test]
    fn reproducible_and_cache_round_trip() {
        let a = fixed_b_critical_values(0.1, 1, &quick()).unwrap();
        let b = fixed_b_critical_values(0.1, 1, &quick()).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cv.txt");
        let mut cache = FixedBCache::open(&path).unwrap();
        let first = cache.get_or_compute(0.1, 1, &quick()).unwrap();
        cache.save().unwrap();
        let mut reopened = FixedBCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 3);
        let hit = reopened.lookup(0.1, 1, &quick()).unwrap();
        assert_eq!(hit, first);
        assert_eq!(reopened.get_or_compute(0.1, 1, &quick()).unwrap(), a);
    }

    #[test]
    fn header_is_checked() {
        assert!(FixedBCache::parse("something else\n").is_err());
        assert!(
            FixedBCache::parse(&format!("{CACHE_HEADER}\n# only comments\n"))
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn t_values_increase_with_b() {
        let lo = fixed_b_critical_values(0.05, 1, &quick()).unwrap();
        let hi = fixed_b_critical_values(0.5, 1, &quick()).unwrap();
        assert!(hi.t_cv_at(0.05).unwrap() > lo.t_cv_at(0.05).unwrap());
    }
}
