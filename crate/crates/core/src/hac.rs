//! Driscoll–Kraay HAC covariance with the Bartlett kernel and the Andrews
//! AR(1) plug-in bandwidth.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::enforce_psd;
use crate::panel::WithinPanel;

/// Bartlett kernel HAC settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HacConfig {
    /// Bandwidth `m_T`; lags with `|ℓ| < m_T` get weight `1 − |ℓ|/m_T`.
    pub bandwidth: f64,
}

impl HacConfig {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth >= 1.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "HAC bandwidth must be >= 1, got {bandwidth}"
            )));
        }
        Ok(Self { bandwidth })
    }
}

/// `h_t = Σ_p x̃_pt û_pt`, one `k`-vector per period (returned `T × k`).
pub fn score_series(w: &WithinPanel, residuals: &Array2<f64>) -> Result<Array2<f64>> {
    if residuals.dim() != w.y_tilde.dim() {
        return Err(Error::DimensionMismatch(format!(
            "residuals {:?}, panel {:?}",
            residuals.dim(),
            w.y_tilde.dim()
        )));
    }
    let (n, t_len) = residuals.dim();
    let k = w.k();
    let mut h = Array2::zeros((t_len, k));
    for c in 0..k {
        let x = &w.x_tilde[c];
        for t in 0..t_len {
            let mut s = 0.0;
            for p in 0..n {
                s += x[(p, t)] * residuals[(p, t)];
            }
            h[(t, c)] = s;
        }
    }
    Ok(h)
}

/// Bartlett-weighted long-run covariance of a `T × k` score series,
/// divided by `scale`.
pub fn bartlett_lrv(h: &Array2<f64>, bandwidth: f64, scale: f64) -> Result<DMatrix<f64>> {
    if !(bandwidth >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "HAC bandwidth must be >= 1, got {bandwidth}"
        )));
    }
    let (t_len, k) = h.dim();
    let mut m = DMatrix::zeros(k, k);
    let mut lag = 0usize;
    while (lag as f64) < bandwidth && lag < t_len {
        let weight = 1.0 - lag as f64 / bandwidth;
        let mut g = DMatrix::zeros(k, k);
        for t in 0..t_len - lag {
            for a in 0..k {
                for b in 0..k {
                    g[(a, b)] += h[(t, a)] * h[(t + lag, b)];
                }
            }
        }
        if lag == 0 {
            m += g * weight;
        } else {
            m += (&g + g.transpose()) * weight;
        }
        lag += 1;
    }
    enforce_psd(m / scale)
}

/// Driscoll–Kraay `Φ̂_{m_T} = (nT)⁻¹ Σ_{|ℓ|<m_T} K(ℓ/m_T) Σ_t h_t h'_{t+ℓ}`.
pub fn dk_hac_phi(
    w: &WithinPanel,
    residuals: &Array2<f64>,
    cfg: &HacConfig,
) -> Result<DMatrix<f64>> {
    let h = score_series(w, residuals)?;
    bartlett_lrv(&h, cfg.bandwidth, (w.n() * w.periods()) as f64)
}

/// Quadruple-sum form of [`dk_hac_phi`], `O(n²T²k²)`; kept as an oracle.
pub fn dk_hac_phi_quadruple(
    w: &WithinPanel,
    residuals: &Array2<f64>,
    cfg: &HacConfig,
) -> Result<DMatrix<f64>> {
    let (n, t_len) = residuals.dim();
    let k = w.k();
    let mut m = DMatrix::zeros(k, k);
    for p in 0..n {
        for q in 0..n {
            for t in 0..t_len {
                for s in 0..t_len {
                    let d = (t as f64 - s as f64).abs() / cfg.bandwidth;
                    if d >= 1.0 {
                        continue;
                    }
                    let kern = 1.0 - d;
                    for a in 0..k {
                        for b in 0..k {
                            m[(a, b)] += kern
                                * w.x_tilde[a][(p, t)]
                                * residuals[(p, t)]
                                * w.x_tilde[b][(q, s)]
                                * residuals[(q, s)];
                        }
                    }
                }
            }
        }
    }
    Ok(m / (n * t_len) as f64)
}

/// Clamp applied to fitted AR(1) coefficients.
pub const RHO_CLAMP: f64 = 1.0 - 1e-6;

/// Andrews AR(1) plug-in bandwidth for the Bartlett kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    /// `1.1447 (α̂(1) T)^{1/3}`.
    pub real: f64,
    /// HAC bandwidth `m_T`: the real value rounded up, at least 1.
    pub lag: usize,
    /// Moving-block length: integer part of the real value, at least 1.
    pub block_length: usize,
    pub alpha: f64,
}

/// Fitted AR(1) coefficient and innovation variance (least squares, no
/// intercept).
pub fn fit_ar1(series: &[f64]) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 1..series.len() {
        num += series[t] * series[t - 1];
        den += series[t - 1] * series[t - 1];
    }
    let rho = if den > 0.0 { num / den } else { 0.0 };
    let mut ss = 0.0;
    for t in 1..series.len() {
        let e = series[t] - rho * series[t - 1];
        ss += e * e;
    }
    (rho, ss / (series.len() - 1) as f64)
}

/// Plug-in bandwidth from the columns of a `T × k` score series.
pub fn andrews_ar1_bandwidth(h: &Array2<f64>) -> Result<Bandwidth> {
    let (t_len, k) = h.dim();
    if t_len < 8 {
        return Err(Error::InvalidArgument(format!(
            "plug-in bandwidth needs at least 8 periods, got {t_len}"
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..k {
        let col: Vec<f64> = h.column(c).to_vec();
        let (mut rho, s2) = fit_ar1(&col);
        if rho.abs() > RHO_CLAMP {
            log::warn!("AR(1) coefficient {rho:.6} clamped to ±{RHO_CLAMP}");
            rho = rho.signum() * RHO_CLAMP;
        }
        let s4 = s2 * s2;
        num += 4.0 * rho * rho * s4 / ((1.0 - rho).powi(6) * (1.0 + rho).powi(2));
        den += s4 / (1.0 - rho).powi(4);
    }
    let alpha = if den > 0.0 { num / den } else { 0.0 };
    Ok(bandwidth_from_alpha(alpha, t_len))
}

pub fn bandwidth_from_alpha(alpha: f64, periods: usize) -> Bandwidth {
    let real = 1.1447 * (alpha * periods as f64).cbrt();
    Bandwidth {
        real,
        lag: (real.ceil() as usize).max(1),
        block_length: (real.floor() as usize).clamp(1, periods),
        alpha,
    }
}

/// Estimated DK covariance and bandwidth for a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct DkEstimate {
    pub phi: DMatrix<f64>,
    pub bandwidth: Bandwidth,
}

/// Driscoll–Kraay covariance with the plug-in bandwidth.
pub fn dk_hac_auto(w: &WithinPanel, residuals: &Array2<f64>) -> Result<DkEstimate> {
    let h = score_series(w, residuals)?;
    let bandwidth = andrews_ar1_bandwidth(&h)?;
    let phi = bartlett_lrv(&h, bandwidth.lag as f64, (w.n() * w.periods()) as f64)?;
    Ok(DkEstimate { phi, bandwidth })
}
