//! Inference under multiplicative heteroskedasticity
//! `v_pt = σ₁(w_p) σ₂(ϱ_t) u_pt`.
//!
//! Residuals are standardized by an estimate of the product scale and the
//! regressors are rescaled by its square root, so that the score product
//! `x̃_pt v̂_pt` is unchanged while the standardized residuals carry the
//! homogeneous temporal dependence the bootstraps rely on.

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::bootstrap::{
    draw_time_indices, draw_wild_multipliers, finish_draw_with, naive_outcome_spectrum,
    naive_resample, run_draws, wild_outcome_spectrum, BootstrapConfig, BootstrapContext,
    BootstrapDistribution, DrawOutcome, Scheme, StandardizedResidualSet, WildMultiplier,
};
use crate::cluster::{cluster_phi_coeffs, cluster_phi_freq, CovEstimate};
use crate::error::{Error, Result};
use crate::estimators::FeEstimate;
use crate::panel::WithinPanel;
use crate::rng::StreamName;
use crate::spectral::{dft, dft_channels, dft_with_plan, idft_with_plan, Spectrum};

/// Relative floor applied to `σ̂₂²(ϱ_t)`.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Estimated individual and time scales of the residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroScaleEstimates {
    /// `σ̂₂²(ϱ_t) = n⁻¹ Σ_p v̂²_pt`; its mean over `t` is the mean of `v̂²`.
    pub sigma2_t: Vec<f64>,
    /// `T⁻¹ Σ_t v̂²_pt`, divided by the mean of `v̂²` so that the product
    /// below keeps the overall level of `v̂²`.
    pub sigma1_p: Vec<f64>,
    /// `sigma1_p[p] × sigma2_t[t]`.
    pub product_scale: Array2<f64>,
    /// `v̂_pt / sqrt(product_scale_pt)`.
    pub u_standardized: Array2<f64>,
}

impl HeteroScaleEstimates {
    pub fn from_residuals(v_hat: &Array2<f64>) -> Result<Self> {
        let (n, t_len) = v_hat.dim();
        let mean_sq = v_hat.iter().map(|v| v * v).sum::<f64>() / (n * t_len) as f64;
        if !(mean_sq > 0.0) {
            return Err(Error::ZeroScale("residuals are identically zero".into()));
        }
        let floor = SIGMA2_FLOOR * mean_sq;
        let mut floored = 0;
        let sigma2_t: Vec<f64> = (0..t_len)
            .map(|t| {
                let s = v_hat.column(t).iter().map(|v| v * v).sum::<f64>() / n as f64;
                if s < floor {
                    floored += 1;
                    floor
                } else {
                    s
                }
            })
            .collect();
        if floored > 0 {
            log::warn!("{floored} period scale estimates floored at {floor:.3e}");
        }
        let sigma1_p: Vec<f64> = (0..n)
            .map(|p| v_hat.row(p).iter().map(|v| v * v).sum::<f64>() / t_len as f64 / mean_sq)
            .collect();
        Self::from_parts(sigma1_p, sigma2_t, v_hat)
    }

    /// Build from given scales (e.g. known or perturbed ones).
    pub fn from_parts(sigma1_p: Vec<f64>, sigma2_t: Vec<f64>, v_hat: &Array2<f64>) -> Result<Self> {
        let (n, t_len) = v_hat.dim();
        if sigma1_p.len() != n || sigma2_t.len() != t_len {
            return Err(Error::DimensionMismatch(format!(
                "{} individual and {} period scales for a {n}×{t_len} panel",
                sigma1_p.len(),
                sigma2_t.len()
            )));
        }
        if let Some(p) = sigma1_p.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::ZeroScale(format!(
                "individual {p} has scale {}",
                sigma1_p[p]
            )));
        }
        if let Some(t) = sigma2_t.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::ZeroScale(format!(
                "period {t} has scale {}",
                sigma2_t[t]
            )));
        }
        let product_scale = Array2::from_shape_fn((n, t_len), |(p, t)| sigma1_p[p] * sigma2_t[t]);
        let u_standardized = Array2::from_shape_fn((n, t_len), |(p, t)| {
            v_hat[(p, t)] / product_scale[(p, t)].sqrt()
        });
        Ok(Self {
            sigma2_t,
            sigma1_p,
            product_scale,
            u_standardized,
        })
    }

    pub fn sqrt_scale(&self) -> Array2<f64> {
        self.product_scale.mapv(f64::sqrt)
    }
}

/// `sqrt(product_scale) · x̃` for every regressor channel.
pub fn rescaled_regressors(
    w: &WithinPanel,
    scales: &HeteroScaleEstimates,
) -> Result<Vec<Array2<f64>>> {
    if scales.product_scale.dim() != w.y_tilde.dim() {
        return Err(Error::DimensionMismatch(
            "scale map does not match panel".into(),
        ));
    }
    let root = scales.sqrt_scale();
    Ok(w.x_tilde.iter().map(|x| x * &root).collect())
}

/// Robust cluster estimator: the cluster formula applied to rescaled
/// regressors and standardized residuals.
pub fn robust_cluster_phi(
    w: &WithinPanel,
    est: &FeEstimate,
    scales: &HeteroScaleEstimates,
) -> Result<DMatrix<f64>> {
    if est.residuals_time.dim() != w.y_tilde.dim() {
        return Err(Error::DimensionMismatch(
            "estimate does not match panel".into(),
        ));
    }
    let x_dot = dft_channels(&rescaled_regressors(w, scales)?)?;
    let u = dft(&scales.u_standardized)?;
    cluster_phi_freq(&x_dot, &u)
}

/// Robust `Φ̆`, `Σ̃ₓ` (from the unscaled regressors) and `V̂`.
pub fn robust_covariance(
    w: &WithinPanel,
    x_spec: &Spectrum,
    est: &FeEstimate,
    scales: &HeteroScaleEstimates,
) -> Result<CovEstimate> {
    let phi = robust_cluster_phi(w, est, scales)?;
    CovEstimate::new(phi, crate::cluster::sigma_x_hat(x_spec)?)
}

/// Standardized residuals with their time mean removed when it exceeds
/// rounding level, so that resampling is centered.
fn centered_standardized(u: &Array2<f64>) -> Array2<f64> {
    let mut out = u.clone();
    let t_len = u.ncols() as f64;
    for mut row in out.rows_mut() {
        let mean = row.sum() / t_len;
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / t_len).sqrt();
        if mean.abs() > 1e-12 * rms {
            row.mapv_inplace(|v| v - mean);
        }
    }
    out
}

/// State shared by robust bootstrap draws.
#[derive(Debug, Clone)]
pub struct RobustContext<'a> {
    pub base: BootstrapContext<'a>,
    pub scales: &'a HeteroScaleEstimates,
    /// DFT of the rescaled regressors.
    pub x_dot_spec: Spectrum,
    /// Resampling pool `Û_t` and its average standardized periodogram.
    pub pool: StandardizedResidualSet,
    sqrt_scale: Array2<f64>,
}

impl<'a> RobustContext<'a> {
    pub fn new(
        base: BootstrapContext<'a>,
        w: &WithinPanel,
        scales: &'a HeteroScaleEstimates,
    ) -> Result<Self> {
        let x_dot_spec = dft_channels(&rescaled_regressors(w, scales)?)?;
        let pool = StandardizedResidualSet::new(&centered_standardized(&scales.u_standardized))?;
        Ok(Self {
            base,
            scales,
            x_dot_spec,
            pool,
            sqrt_scale: scales.sqrt_scale(),
        })
    }

    /// Robust `Φ̆*` from bootstrap residual coefficients `J_v̂*`: back to the
    /// time domain, standardize by the original scales, transform again.
    pub fn phi_from_residual_coeffs(&self, resid: &Array2<Complex64>) -> Result<DMatrix<f64>> {
        let plan = self.base.plan();
        let (v_star, max_imag) = idft_with_plan(plan, resid, &[]);
        let magnitude = v_star.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max_imag > 1e-8 * magnitude && max_imag > 1e-300 {
            return Err(Error::ImaginaryResidual {
                imag: max_imag,
                magnitude,
                context: "robust bootstrap residuals",
            });
        }
        let u_star = v_star / &self.sqrt_scale;
        cluster_phi_coeffs(&self.x_dot_spec, &dft_with_plan(plan, &u_star))
    }
}

/// One draw of the robust naive scheme.
pub fn robust_naive_bootstrap_draw(
    ctx: &RobustContext<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<DrawOutcome> {
    let indices = draw_time_indices(rng, ctx.base.periods());
    let u_star = naive_resample(&ctx.pool.u_hat, &indices);
    // scale at the position the draw is placed in
    let v_star = u_star * &ctx.sqrt_scale;
    let y = naive_outcome_spectrum(&ctx.base, &ctx.pool.avg_check_periodogram, &v_star);
    finish_draw_with(&ctx.base, &y, |resid| ctx.phi_from_residual_coeffs(resid))
}

/// One draw of the wild scheme studentized with the robust estimator.
pub fn robust_wild_bootstrap_draw(
    ctx: &RobustContext<'_>,
    kind: WildMultiplier,
    rng: &mut ChaCha8Rng,
) -> Result<DrawOutcome> {
    let eta = draw_wild_multipliers(rng, ctx.base.periods(), kind);
    let y = wild_outcome_spectrum(
        &ctx.base,
        ctx.base.estimate.residual_spectrum.channel(0),
        &eta,
    );
    finish_draw_with(&ctx.base, &y, |resid| ctx.phi_from_residual_coeffs(resid))
}

pub fn run_robust_bootstrap(
    ctx: &RobustContext<'_>,
    cfg: &BootstrapConfig,
) -> Result<BootstrapDistribution> {
    match cfg.scheme {
        Scheme::Naive => run_draws(cfg.reps, cfg.stream(StreamName::RobustNaive), |rng| {
            robust_naive_bootstrap_draw(ctx, rng)
        }),
        Scheme::Wild => run_draws(cfg.reps, cfg.stream(StreamName::RobustWild), |rng| {
            robust_wild_bootstrap_draw(ctx, cfg.wild_multiplier, rng)
        }),
    }
}
