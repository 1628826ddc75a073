//! Smoothing-free cluster estimator of the long-run covariance, the
//! regressor moment matrix, the sandwich `V̂` and Wald tests.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimators::FeEstimate;
use crate::linalg::{enforce_psd, real_part_checked, sandwich, spd_inverse, CompensatedComplex};
use crate::panel::WithinPanel;
use crate::spectral::Spectrum;

/// `Φ̆`, `Σ̃ₓ` and `V̂ = Σ̃ₓ⁻¹ Φ̆ Σ̃ₓ⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub phi: DMatrix<f64>,
    pub sigma_x: DMatrix<f64>,
    pub vhat: DMatrix<f64>,
}

impl CovEstimate {
    pub fn new(phi: DMatrix<f64>, sigma_x: DMatrix<f64>) -> Result<Self> {
        if phi.shape() != sigma_x.shape() {
            return Err(Error::DimensionMismatch(format!(
                "phi {:?} vs sigma_x {:?}",
                phi.shape(),
                sigma_x.shape()
            )));
        }
        let sigma_inv = spd_inverse(&sigma_x, "sigma_x")?;
        Ok(Self::with_inverse(phi, sigma_x, &sigma_inv))
    }

    /// Build with a precomputed `Σ̃ₓ⁻¹` (bootstrap draws share it).
    pub fn with_inverse(
        phi: DMatrix<f64>,
        sigma_x: DMatrix<f64>,
        sigma_inv: &DMatrix<f64>,
    ) -> Self {
        let vhat = sandwich(sigma_inv, &phi);
        Self { phi, sigma_x, vhat }
    }

    /// Standard errors `sqrt(V̂_cc / (nT))`.
    pub fn standard_errors(&self, n: usize, periods: usize) -> DVector<f64> {
        let nt = (n * periods) as f64;
        DVector::from_iterator(
            self.vhat.nrows(),
            (0..self.vhat.nrows()).map(|c| (self.vhat[(c, c)].max(0.0) / nt).sqrt()),
        )
    }
}

/// Wald test of `β = β0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub wald: f64,
    pub df: usize,
    pub pvalue_asymptotic: f64,
    /// Signed t statistic, only for a single regressor.
    pub tstat: Option<f64>,
}

impl TestResult {
    pub fn rejects_asymptotic(&self, level: f64) -> bool {
        self.wald > chi_square_critical_value(self.df, level)
    }
}

/// Upper `level` quantile of a chi-square with `df` degrees of freedom.
pub fn chi_square_critical_value(df: usize, level: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - level)
}

fn check_shapes(x_spec: &Spectrum, u: &Array2<Complex64>) -> Result<()> {
    let expected = (x_spec.n(), x_spec.periods() - 1);
    if u.dim() != expected {
        return Err(Error::DimensionMismatch(format!(
            "residual spectrum {:?}, regressor spectrum {:?}",
            u.dim(),
            expected
        )));
    }
    Ok(())
}

/// Cluster estimator from regressor spectra and residual DFT coefficients
/// (`n × (T-1)`).
pub fn cluster_phi_coeffs(x_spec: &Spectrum, u: &Array2<Complex64>) -> Result<DMatrix<f64>> {
    check_shapes(x_spec, u)?;
    let k = x_spec.num_channels();
    let n = x_spec.n();
    let t_len = x_spec.periods();
    let root_n = (n as f64).sqrt();
    let m_len = t_len - 1;
    // S_j for every channel, accumulated row by row
    let mut s = vec![Complex64::default(); k * m_len];
    for (c, sc) in s.chunks_mut(m_len).enumerate() {
        for (xrow, urow) in x_spec.channel(c).rows().into_iter().zip(u.rows()) {
            for ((z, xv), uv) in sc.iter_mut().zip(xrow.iter()).zip(urow.iter()) {
                *z += xv * uv.conj();
            }
        }
    }
    let mut acc = vec![CompensatedComplex::default(); k * k];
    for j in 0..m_len {
        for a in 0..k {
            for b in 0..k {
                acc[a * k + b].add(s[a * m_len + j] * s[b * m_len + j].conj() / (root_n * root_n));
            }
        }
    }
    let m = DMatrix::from_fn(k, k, |a, b| acc[a * k + b].value() / t_len as f64);
    enforce_psd(real_part_checked(&m, "cluster phi")?)
}

/// Frequency-domain cluster estimator `Φ̆`.
pub fn cluster_phi_freq(x_spec: &Spectrum, u_spec: &Spectrum) -> Result<DMatrix<f64>> {
    if u_spec.periods() != x_spec.periods() || u_spec.n() != x_spec.n() {
        return Err(Error::DimensionMismatch(format!(
            "regressor spectrum {}×{}, residual spectrum {}×{}",
            x_spec.n(),
            x_spec.periods(),
            u_spec.n(),
            u_spec.periods()
        )));
    }
    cluster_phi_coeffs(x_spec, u_spec.channel(0))
}

/// `T⁻¹ Σ_t a_pt b_{q,t+d}` with the lag taken modulo `T`.
fn circular_cross(a: &Array2<f64>, b: &Array2<f64>, p: usize, q: usize, d: usize) -> f64 {
    let t_len = a.ncols();
    let mut s = 0.0;
    for t in 0..t_len {
        s += a[(p, t)] * b[(q, (t + d) % t_len)];
    }
    s / t_len as f64
}

/// Time-domain form of the cluster estimator,
/// `n⁻¹ Σ_{p,q} Σ_d γ̂_x,pq(d) γ̂_u,pq(d)` over circular lags `d = 0..T-1`.
///
/// Circular lags make this algebraically identical to
/// [`cluster_phi_freq`] for doubly demeaned data. Cost is `O(n²T²k²)`.
pub fn cluster_phi_time(w: &WithinPanel, residuals: &Array2<f64>) -> Result<DMatrix<f64>> {
    if residuals.dim() != w.y_tilde.dim() {
        return Err(Error::DimensionMismatch(format!(
            "residuals {:?}, panel {:?}",
            residuals.dim(),
            w.y_tilde.dim()
        )));
    }
    let (n, t_len) = residuals.dim();
    let k = w.k();
    let mut m = DMatrix::zeros(k, k);
    for p in 0..n {
        for q in 0..n {
            for d in 0..t_len {
                let gu = circular_cross(residuals, residuals, p, q, d);
                if gu == 0.0 {
                    continue;
                }
                for a in 0..k {
                    for b in 0..k {
                        m[(a, b)] += circular_cross(&w.x_tilde[a], &w.x_tilde[b], p, q, d) * gu;
                    }
                }
            }
        }
    }
    enforce_psd(m / n as f64)
}

/// Single-sum estimator that ignores cross-sectional covariances,
/// `n⁻¹ Σ_p T⁻¹ Σ_j |J_û,p|² J_x̃,p J_x̃,p^H`.
///
/// Diagnostic only: it is not consistent under cross-sectional dependence.
pub fn robinson_phi(x_spec: &Spectrum, u_spec: &Spectrum) -> Result<DMatrix<f64>> {
    check_shapes(x_spec, u_spec.channel(0))?;
    let k = x_spec.num_channels();
    let n = x_spec.n();
    let t_len = x_spec.periods();
    let mut acc = vec![CompensatedComplex::default(); k * k];
    for p in 0..n {
        for j in 1..t_len {
            let iu = u_spec.coeff(p, j, 0).norm_sqr();
            for a in 0..k {
                for b in 0..k {
                    acc[a * k + b].add(x_spec.coeff(p, j, a) * x_spec.coeff(p, j, b).conj() * iu);
                }
            }
        }
    }
    let m = DMatrix::from_fn(k, k, |a, b| acc[a * k + b].value() / (n * t_len) as f64);
    enforce_psd(real_part_checked(&m, "robinson phi")?)
}

/// `Σ̃ₓ = (nT)⁻¹ Σ_j Σ_p J_x̃,p J_x̃,p^H`; singularity is an error.
pub fn sigma_x_hat(x_spec: &Spectrum) -> Result<DMatrix<f64>> {
    let k = x_spec.num_channels();
    let n = x_spec.n();
    let t_len = x_spec.periods();
    let mut m = DMatrix::<Complex64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let mut acc = CompensatedComplex::default();
            for (za, zb) in x_spec.channel(a).iter().zip(x_spec.channel(b).iter()) {
                acc.add(za * zb.conj());
            }
            let v = acc.value() / (n * t_len) as f64;
            m[(a, b)] = v;
            m[(b, a)] = v.conj();
        }
    }
    let s = real_part_checked(&m, "sigma_x")?;
    spd_inverse(&s, "sigma_x")?;
    Ok(s)
}

/// Cluster covariance for a fitted model.
pub fn cluster_covariance(x_spec: &Spectrum, est: &FeEstimate) -> Result<CovEstimate> {
    let phi = cluster_phi_freq(x_spec, &est.residual_spectrum)?;
    CovEstimate::new(phi, sigma_x_hat(x_spec)?)
}

/// `nT (β − β0)' V⁻¹ (β − β0)` and its chi-square p-value.
pub fn wald_statistic(
    beta: &DVector<f64>,
    vhat: &DMatrix<f64>,
    n: usize,
    periods: usize,
    beta0: &DVector<f64>,
) -> Result<TestResult> {
    if beta.len() != beta0.len() || vhat.nrows() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries, beta0 {}, vhat is {}×{}",
            beta.len(),
            beta0.len(),
            vhat.nrows(),
            vhat.ncols()
        )));
    }
    let k = beta.len();
    let nt = (n * periods) as f64;
    let diff = beta - beta0;
    let vinv = spd_inverse(vhat, "V")?;
    let wald = (nt * (diff.transpose() * &vinv * &diff)[(0, 0)]).max(0.0);
    if !wald.is_finite() {
        return Err(Error::Singular("V (non-finite Wald statistic)".into()));
    }
    let pvalue_asymptotic = ChiSquared::new(k as f64)
        .map(|d| d.sf(wald))
        .unwrap_or(f64::NAN)
        .clamp(0.0, 1.0);
    let tstat = (k == 1).then(|| diff[0] / (vhat[(0, 0)] / nt).sqrt());
    Ok(TestResult {
        wald,
        df: k,
        pvalue_asymptotic,
        tstat,
    })
}

pub fn wald_test(est: &FeEstimate, cov: &CovEstimate, beta0: &DVector<f64>) -> Result<TestResult> {
    wald_statistic(&est.beta, &cov.vhat, est.n(), est.periods(), beta0)
}
