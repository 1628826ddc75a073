//! Pairs moving-block bootstrap for the Driscoll–Kraay Wald statistic.
//!
//! Blocks of consecutive time slices of the full cross-section of `(y, x)`
//! are resampled, the within transform and least squares are redone on the
//! bootstrap panel, and the statistic is studentized with a block-sum
//! covariance. With `k = floor(T/ℓ)` blocks the bootstrap panel has
//! `kℓ ≤ T` periods; the remainder is dropped.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bootstrap::{run_draws, BootstrapDistribution, BootstrapDraw, DrawOutcome};
use crate::error::{Error, Result};
use crate::estimators::fe_fit_time;
use crate::hac::score_series;
use crate::linalg::{enforce_psd, sandwich, spd_inverse};
use crate::panel::{within_transform, PanelData, MIN_PERIODS};
use crate::rng::{seed_plan, StreamName, Substream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MbbConfig {
    pub block_length: usize,
    pub reps: usize,
    pub seed: u64,
    pub cell: usize,
    pub replication: usize,
}

impl MbbConfig {
    pub fn new(block_length: usize, reps: usize, seed: u64) -> Self {
        Self {
            block_length,
            reps,
            seed,
            cell: 0,
            replication: 0,
        }
    }

    pub fn at(mut self, cell: usize, replication: usize) -> Self {
        self.cell = cell;
        self.replication = replication;
        self
    }

    pub fn num_blocks(&self, periods: usize) -> usize {
        periods / self.block_length
    }

    fn validate(&self, periods: usize) -> Result<()> {
        if self.block_length == 0 || self.block_length > periods {
            return Err(Error::InvalidArgument(format!(
                "block length {} must lie in 1..={periods}",
                self.block_length
            )));
        }
        let len = self.num_blocks(periods) * self.block_length;
        if len < MIN_PERIODS {
            return Err(Error::InvalidArgument(format!(
                "bootstrap panel of {len} periods is shorter than {MIN_PERIODS}"
            )));
        }
        Ok(())
    }

    pub fn substream(&self) -> Substream {
        seed_plan(self.seed, self.cell, self.replication, StreamName::Mbb)
    }
}

/// Period indices of `k` blocks starting at `starts`.
pub fn block_indices(starts: &[usize], block_length: usize) -> Vec<usize> {
    starts.iter().flat_map(|&s| s..s + block_length).collect()
}

/// `(1/k) Σ_blocks (ℓ^{-1/2} Σ_{t∈block} n⁻¹ ŝ_t)(…)'` for a `T_b × k`
/// score series.
pub fn block_covariance(
    scores: &Array2<f64>,
    n: usize,
    block_length: usize,
) -> Result<DMatrix<f64>> {
    let (t_len, k) = scores.dim();
    let blocks = t_len / block_length;
    let mut m = DMatrix::zeros(k, k);
    let norm = 1.0 / (n as f64 * (block_length as f64).sqrt());
    for blk in 0..blocks {
        let mut s = DVector::zeros(k);
        for t in blk * block_length..(blk + 1) * block_length {
            for c in 0..k {
                s[c] += scores[(t, c)];
            }
        }
        s *= norm;
        m += &s * s.transpose();
    }
    enforce_psd(m / blocks as f64)
}

/// Fit on the resampled periods and form the studentized statistic
/// `T_b (β̂* − β̂)' V̂*⁻¹ (β̂* − β̂)`.
pub fn mbb_statistic(
    panel: &PanelData,
    beta_hat: &DVector<f64>,
    indices: &[usize],
    block_length: usize,
) -> Result<DrawOutcome> {
    let star = panel.select_periods(indices)?;
    let w = within_transform(&star)?;
    let (beta_star, sxx, resid) = match fe_fit_time(&w) {
        Ok(e) => e,
        Err(Error::RankDeficient { .. }) => {
            return Ok(DrawOutcome::Degenerate {
                beta_star: beta_hat.clone(),
            })
        }
        Err(e) => return Err(e),
    };
    let t_b = indices.len();
    let n = panel.n();
    let sigma = &sxx / (n * t_b) as f64;
    let sigma_inv = spd_inverse(&sigma, "bootstrap sigma_x")?;
    let scores = score_series(&w, &resid)?;
    let phi_star = block_covariance(&scores, n, block_length)?;
    let vhat_star = sandwich(&sigma_inv, &phi_star);
    let diff = &beta_star - beta_hat;
    let vinv = match spd_inverse(&vhat_star, "V*") {
        Ok(v) => v,
        Err(Error::Singular(_)) => return Ok(DrawOutcome::Degenerate { beta_star }),
        Err(e) => return Err(e),
    };
    let wald_star = (t_b as f64 * (diff.transpose() * vinv * &diff)[(0, 0)]).max(0.0);
    Ok(DrawOutcome::Valid(BootstrapDraw {
        beta_star,
        phi_star,
        vhat_star,
        wald_star,
    }))
}

/// One moving-block draw.
pub fn mbb_draw(
    panel: &PanelData,
    beta_hat: &DVector<f64>,
    cfg: &MbbConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DrawOutcome> {
    let t_len = panel.periods();
    let k = cfg.num_blocks(t_len);
    let starts: Vec<usize> = (0..k)
        .map(|_| rng.random_range(0..=t_len - cfg.block_length))
        .collect();
    mbb_statistic(
        panel,
        beta_hat,
        &block_indices(&starts, cfg.block_length),
        cfg.block_length,
    )
}

/// Bootstrap distribution of the block-studentized statistic around the
/// full-sample estimate `beta_hat`.
pub fn mbb_bootstrap(
    panel: &PanelData,
    beta_hat: &DVector<f64>,
    cfg: &MbbConfig,
) -> Result<BootstrapDistribution> {
    cfg.validate(panel.periods())?;
    run_draws(cfg.reps, cfg.substream(), |rng| {
        mbb_draw(panel, beta_hat, cfg, rng)
    })
}
