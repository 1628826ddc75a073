//! Frequency-domain bootstraps: the naive scheme, which resamples whole
//! cross-sectional residual vectors over time and rescales by the average
//! standardized periodogram, and the wild scheme, which multiplies residual
//! DFT ordinates by i.i.d. multipliers mirrored for conjugate symmetry.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cluster::cluster_phi_coeffs;
use crate::error::{Error, Result};
use crate::estimators::{FeEstimate, FrequencyDesign};
use crate::linalg::{sandwich, spd_inverse};
use crate::rng::{seed_plan, StreamName, Substream};
use crate::spectral::{dft, dft_with_plan, DftPlan};

/// Smallest replication count accepted for bootstrap p-values.
pub const MIN_REPS_FOR_PVALUE: usize = 99;

/// Largest tolerated share of degenerate draws.
pub const MAX_DEGENERATE_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Naive,
    Wild,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WildMultiplier {
    #[default]
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub scheme: Scheme,
    pub reps: usize,
    pub rng_seed: u64,
    pub wild_multiplier: WildMultiplier,
    /// Experiment cell and replication the draws belong to; both 0 for
    /// one-off use.
    pub cell: usize,
    pub replication: usize,
}

impl BootstrapConfig {
    pub fn new(scheme: Scheme, reps: usize, rng_seed: u64) -> Self {
        Self {
            scheme,
            reps,
            rng_seed,
            wild_multiplier: WildMultiplier::Gaussian,
            cell: 0,
            replication: 0,
        }
    }

    pub fn at(mut self, cell: usize, replication: usize) -> Self {
        self.cell = cell;
        self.replication = replication;
        self
    }

    pub fn stream(&self, name: StreamName) -> Substream {
        seed_plan(self.rng_seed, self.cell, self.replication, name)
    }

    pub fn substream(&self) -> Substream {
        self.stream(match self.scheme {
            Scheme::Naive => StreamName::NaiveBootstrap,
            Scheme::Wild => StreamName::WildBootstrap,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraw {
    pub beta_star: DVector<f64>,
    pub phi_star: DMatrix<f64>,
    pub vhat_star: DMatrix<f64>,
    pub wald_star: f64,
}

/// A draw either yields a statistic or is degenerate (singular `V̂*`).
#[derive(Debug, Clone, PartialEq)]
pub enum DrawOutcome {
    Valid(BootstrapDraw),
    Degenerate { beta_star: DVector<f64> },
}

impl DrawOutcome {
    pub fn beta_star(&self) -> &DVector<f64> {
        match self {
            DrawOutcome::Valid(d) => &d.beta_star,
            DrawOutcome::Degenerate { beta_star } => beta_star,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, DrawOutcome::Degenerate { .. })
    }
}

/// Standardized residuals and the average standardized periodogram used
/// by the naive scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedResidualSet {
    pub u_hat: Array2<f64>,
    pub u_check: Array2<f64>,
    pub sigma_tilde: Vec<f64>,
    /// `g_j = n⁻¹ Σ_q |J_ǔ,q(λ_j)|²` for `j = 1..T-1`.
    pub avg_check_periodogram: Vec<f64>,
}

impl StandardizedResidualSet {
    pub fn new(u_hat: &Array2<f64>) -> Result<Self> {
        let (n, t_len) = u_hat.dim();
        let sigma_tilde: Vec<f64> = (0..n)
            .map(|p| (u_hat.row(p).iter().map(|v| v * v).sum::<f64>() / t_len as f64).sqrt())
            .collect();
        let mut u_check = u_hat.clone();
        for (p, mut row) in u_check.rows_mut().into_iter().enumerate() {
            let s = sigma_tilde[p];
            if s > 0.0 {
                row.mapv_inplace(|v| v / s);
            } else {
                row.fill(0.0);
            }
        }
        let spec = dft(&u_check)?;
        let avg_check_periodogram = (1..t_len)
            .map(|j| (0..n).map(|q| spec.coeff(q, j, 0).norm_sqr()).sum::<f64>() / n as f64)
            .collect();
        Ok(Self {
            u_hat: u_hat.clone(),
            u_check,
            sigma_tilde,
            avg_check_periodogram,
        })
    }
}

/// `u*_pt = û_{p, I_t}`: whole cross-sectional vectors at the drawn times.
pub fn naive_resample(u_hat: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let (n, t_len) = u_hat.dim();
    assert_eq!(indices.len(), t_len);
    Array2::from_shape_fn((n, t_len), |(p, t)| u_hat[(p, indices[t])])
}

/// Everything a draw needs from the original fit.
#[derive(Debug, Clone)]
pub struct BootstrapContext<'a> {
    pub design: &'a FrequencyDesign,
    pub estimate: &'a FeEstimate,
    pub sigma_x: DMatrix<f64>,
    pub sigma_x_inv: DMatrix<f64>,
    /// `β̃'J_x̃`, the fitted part of every bootstrap outcome spectrum.
    pub fitted: Array2<Complex64>,
    plan: std::sync::Arc<DftPlan>,
}

impl<'a> BootstrapContext<'a> {
    pub fn new(design: &'a FrequencyDesign, estimate: &'a FeEstimate) -> Result<Self> {
        let n = design.x_spec.n();
        let t_len = design.x_spec.periods();
        if estimate.beta.len() != design.k() || estimate.residuals_time.dim() != (n, t_len) {
            return Err(Error::DimensionMismatch(
                "estimate does not match regressor design".into(),
            ));
        }
        let sigma_x = &design.sxx / (n * t_len) as f64;
        let sigma_x_inv = spd_inverse(&sigma_x, "sigma_x")?;
        let mut fitted = Array2::zeros((n, t_len - 1));
        for (c, b) in estimate.beta.iter().enumerate() {
            fitted.scaled_add(Complex64::new(*b, 0.0), design.x_spec.channel(c));
        }
        Ok(Self {
            design,
            estimate,
            sigma_x,
            sigma_x_inv,
            fitted,
            plan: DftPlan::shared(t_len)?,
        })
    }

    pub fn n(&self) -> usize {
        self.design.x_spec.n()
    }

    pub fn periods(&self) -> usize {
        self.design.x_spec.periods()
    }

    pub fn plan(&self) -> &DftPlan {
        &self.plan
    }
}

/// Subtract the cross-sectional mean at every frequency.
pub fn recenter_cross_section(coeffs: &mut Array2<Complex64>) {
    let n = coeffs.nrows() as f64;
    let mean = coeffs.sum_axis(ndarray::Axis(0)) / Complex64::new(n, 0.0);
    for mut row in coeffs.rows_mut() {
        row -= &mean;
    }
}

/// Given a bootstrap outcome spectrum, re-estimate and form the studentized
/// statistic; `phi_of` maps the bootstrap residual spectrum to `Φ̆*`.
pub fn finish_draw_with<F>(
    ctx: &BootstrapContext<'_>,
    y_coeffs: &Array2<Complex64>,
    phi_of: F,
) -> Result<DrawOutcome>
where
    F: FnOnce(&Array2<Complex64>) -> Result<DMatrix<f64>>,
{
    let (beta_star, resid) = ctx.design.estimate(y_coeffs)?;
    // residuals at round-off level leave the studentized statistic 0/0
    let resid_energy: f64 = resid.iter().map(|z| z.norm_sqr()).sum();
    let outcome_energy: f64 = y_coeffs.iter().map(|z| z.norm_sqr()).sum();
    if resid_energy <= 1e-24 * outcome_energy {
        return Ok(DrawOutcome::Degenerate { beta_star });
    }
    let phi_star = phi_of(&resid)?;
    let vhat_star = sandwich(&ctx.sigma_x_inv, &phi_star);
    let diff = &beta_star - &ctx.estimate.beta;
    let vinv = match spd_inverse(&vhat_star, "V*") {
        Ok(v) => v,
        Err(Error::Singular(_)) => return Ok(DrawOutcome::Degenerate { beta_star }),
        Err(e) => return Err(e),
    };
    let nt = (ctx.n() * ctx.periods()) as f64;
    let wald_star = (nt * (diff.transpose() * vinv * &diff)[(0, 0)]).max(0.0);
    if !wald_star.is_finite() {
        return Ok(DrawOutcome::Degenerate { beta_star });
    }
    Ok(DrawOutcome::Valid(BootstrapDraw {
        beta_star,
        phi_star,
        vhat_star,
        wald_star,
    }))
}

fn finish_draw(ctx: &BootstrapContext<'_>, y_coeffs: &Array2<Complex64>) -> Result<DrawOutcome> {
    finish_draw_with(ctx, y_coeffs, |resid| {
        cluster_phi_coeffs(&ctx.design.x_spec, resid)
    })
}

/// Uniform time indices with replacement.
pub fn draw_time_indices(rng: &mut ChaCha8Rng, periods: usize) -> Vec<usize> {
    (0..periods).map(|_| rng.random_range(0..periods)).collect()
}

/// `β̃'J_x̃ + sqrt(g_j) J_u*`, recentered across individuals.
pub fn naive_outcome_spectrum(
    ctx: &BootstrapContext<'_>,
    g: &[f64],
    u_star: &Array2<f64>,
) -> Array2<Complex64> {
    let mut y = dft_with_plan(ctx.plan(), u_star);
    let scale: Vec<f64> = g.iter().map(|v| v.max(0.0).sqrt()).collect();
    for mut row in y.rows_mut() {
        for (z, s) in row.iter_mut().zip(&scale) {
            *z *= s;
        }
    }
    y += &ctx.fitted;
    recenter_cross_section(&mut y);
    y
}

/// One draw of the naive scheme.
pub fn naive_bootstrap_draw(
    ctx: &BootstrapContext<'_>,
    resid: &StandardizedResidualSet,
    rng: &mut ChaCha8Rng,
) -> Result<DrawOutcome> {
    let indices = draw_time_indices(rng, ctx.periods());
    let u_star = naive_resample(&resid.u_hat, &indices);
    let y = naive_outcome_spectrum(ctx, &resid.avg_check_periodogram, &u_star);
    finish_draw(ctx, &y)
}

/// Multipliers `η_1..η_{T-1}` with `η_j = η_{T-j}` above `[T/2]`.
pub fn draw_wild_multipliers(
    rng: &mut ChaCha8Rng,
    periods: usize,
    kind: WildMultiplier,
) -> Vec<f64> {
    let half = periods / 2;
    let base: Vec<f64> = (0..half)
        .map(|_| match kind {
            WildMultiplier::Gaussian => rng.sample(StandardNormal),
            WildMultiplier::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect();
    mirror_multipliers(&base, periods)
}

/// Extend `η_1..η_{[T/2]}` to `j = 1..T-1`.
pub fn mirror_multipliers(base: &[f64], periods: usize) -> Vec<f64> {
    assert_eq!(base.len(), periods / 2);
    (1..periods)
        .map(|j| {
            if j <= periods / 2 {
                base[j - 1]
            } else {
                base[periods - j - 1]
            }
        })
        .collect()
}

/// `β̃'J_x̃ + η_j J_û`, recentered.
pub fn wild_outcome_spectrum(
    ctx: &BootstrapContext<'_>,
    residual_coeffs: &Array2<Complex64>,
    eta: &[f64],
) -> Array2<Complex64> {
    let mut y = residual_coeffs.clone();
    for mut row in y.rows_mut() {
        for (z, e) in row.iter_mut().zip(eta) {
            *z *= e;
        }
    }
    y += &ctx.fitted;
    recenter_cross_section(&mut y);
    y
}

/// One wild draw with caller-supplied multipliers for `j = 1..T-1`.
pub fn wild_bootstrap_draw_with_multipliers(
    ctx: &BootstrapContext<'_>,
    eta: &[f64],
) -> Result<DrawOutcome> {
    if eta.len() != ctx.periods() - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for T = {}",
            eta.len(),
            ctx.periods()
        )));
    }
    let y = wild_outcome_spectrum(ctx, ctx.estimate.residual_spectrum.channel(0), eta);
    finish_draw(ctx, &y)
}

pub fn wild_bootstrap_draw(
    ctx: &BootstrapContext<'_>,
    kind: WildMultiplier,
    rng: &mut ChaCha8Rng,
) -> Result<DrawOutcome> {
    let eta = draw_wild_multipliers(rng, ctx.periods(), kind);
    wild_bootstrap_draw_with_multipliers(ctx, &eta)
}

/// Bootstrap distribution of the Wald statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDistribution {
    pub reps: usize,
    pub wald_stars: Vec<f64>,
    pub beta_stars: Vec<DVector<f64>>,
    pub degenerate: usize,
}

/// Run `reps` independent draws, draw `b` using `stream.draw_rng(b)`.
/// Results are collected in draw order, so they do not depend on how rayon
/// schedules the work.
pub fn run_draws<F>(reps: usize, stream: Substream, draw: F) -> Result<BootstrapDistribution>
where
    F: Fn(&mut ChaCha8Rng) -> Result<DrawOutcome> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least one draw".into(),
        ));
    }
    let outcomes: Vec<DrawOutcome> = (0..reps)
        .into_par_iter()
        .map(|b| draw(&mut stream.draw_rng(b)))
        .collect::<Result<_>>()?;
    let mut wald_stars = Vec::with_capacity(reps);
    let mut beta_stars = Vec::with_capacity(reps);
    let mut degenerate = 0;
    for o in outcomes {
        beta_stars.push(o.beta_star().clone());
        match o {
            DrawOutcome::Valid(d) => wald_stars.push(d.wald_star),
            DrawOutcome::Degenerate { .. } => degenerate += 1,
        }
    }
    if degenerate as f64 > MAX_DEGENERATE_SHARE * reps as f64 {
        return Err(Error::Bootstrap(format!(
            "{degenerate} of {reps} draws had a singular bootstrap covariance"
        )));
    }
    Ok(BootstrapDistribution {
        reps,
        wald_stars,
        beta_stars,
        degenerate,
    })
}

/// Naive or wild bootstrap of the cluster Wald statistic.
pub fn run_bootstrap(
    ctx: &BootstrapContext<'_>,
    cfg: &BootstrapConfig,
) -> Result<BootstrapDistribution> {
    let stream = cfg.substream();
    match cfg.scheme {
        Scheme::Naive => {
            let resid = StandardizedResidualSet::new(&ctx.estimate.residuals_time)?;
            run_draws(cfg.reps, stream, |rng| {
                naive_bootstrap_draw(ctx, &resid, rng)
            })
        }
        Scheme::Wild => run_draws(cfg.reps, stream, |rng| {
            wild_bootstrap_draw(ctx, cfg.wild_multiplier, rng)
        }),
    }
}

/// `(1 + #{w* ≥ w_obs}) / (B_valid + 1)`.
pub fn bootstrap_pvalue(wald_obs: f64, dist: &BootstrapDistribution) -> Result<f64> {
    if dist.reps < MIN_REPS_FOR_PVALUE {
        return Err(Error::InvalidArgument(format!(
            "bootstrap p-values need at least {MIN_REPS_FOR_PVALUE} draws, got {}",
            dist.reps
        )));
    }
    if dist.wald_stars.is_empty() {
        return Err(Error::Bootstrap(
            "every bootstrap draw was degenerate".into(),
        ));
    }
    let exceed = dist.wald_stars.iter().filter(|&&w| w >= wald_obs).count();
    Ok((1 + exceed) as f64 / (dist.wald_stars.len() + 1) as f64)
}
