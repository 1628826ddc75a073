//! Fixed-effects least squares in the time and frequency domains.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{spd_factor, symmetrize, CompensatedComplex, CompensatedSum};
use crate::panel::WithinPanel;
use crate::spectral::{dft, dft_channels, Spectrum};

/// Result of a fixed-effects regression.
#[derive(Debug, Clone)]
pub struct FeEstimate {
    pub beta: DVector<f64>,
    /// `Σ_p Σ_t x̃_pt x̃_pt'`, unnormalized.
    pub sxx: DMatrix<f64>,
    pub residuals_time: Array2<f64>,
    pub residual_spectrum: Spectrum,
    pub regressor_names: Vec<String>,
}

impl FeEstimate {
    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn n(&self) -> usize {
        self.residuals_time.nrows()
    }

    pub fn periods(&self) -> usize {
        self.residuals_time.ncols()
    }
}

/// Regressor spectra together with the factored normal-equation matrix,
/// reused across bootstrap draws that keep the regressors fixed.
#[derive(Debug, Clone)]
pub struct FrequencyDesign {
    pub x_spec: Spectrum,
    pub sxx: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    pub regressor_names: Vec<String>,
}

impl FrequencyDesign {
    pub fn new(x_spec: Spectrum, regressor_names: Vec<String>) -> Result<Self> {
        let k = x_spec.num_channels();
        let mut sxx = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v = re_cross_total(x_spec.channel(a), x_spec.channel(b), "Sxx")?;
                sxx[(a, b)] = v;
                sxx[(b, a)] = v;
            }
        }
        let factor = spd_factor(&sxx, &regressor_names)?;
        Ok(Self {
            x_spec,
            sxx,
            factor,
            regressor_names,
        })
    }

    pub fn from_within(w: &WithinPanel) -> Result<Self> {
        Self::new(dft_channels(&w.x_tilde)?, w.regressor_names.clone())
    }

    pub fn k(&self) -> usize {
        self.x_spec.num_channels()
    }

    /// `Re Σ_p Σ_j J_x̃,p(λ_j) conj(J_y,p(λ_j))`.
    pub fn cross_xy(&self, y_coeffs: &Array2<Complex64>) -> Result<DVector<f64>> {
        let k = self.k();
        let mut out = DVector::zeros(k);
        for c in 0..k {
            out[c] = re_cross_total(self.x_spec.channel(c), y_coeffs, "Sxy")?;
        }
        Ok(out)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }

    /// `J_y − β'J_x̃` for every individual and frequency.
    pub fn residual_coeffs(
        &self,
        y_coeffs: &Array2<Complex64>,
        beta: &DVector<f64>,
    ) -> Array2<Complex64> {
        let mut out = y_coeffs.clone();
        for (c, b) in beta.iter().enumerate() {
            out.scaled_add(Complex64::new(-b, 0.0), self.x_spec.channel(c));
        }
        out
    }

    /// Frequency-domain least squares for outcome coefficients `y_coeffs`;
    /// returns `β̃` and the residual coefficients.
    pub fn estimate(
        &self,
        y_coeffs: &Array2<Complex64>,
    ) -> Result<(DVector<f64>, Array2<Complex64>)> {
        let beta = self.solve(&self.cross_xy(y_coeffs)?);
        let resid = self.residual_coeffs(y_coeffs, &beta);
        Ok((beta, resid))
    }
}

/// `Re Σ_{p,j} a_pj conj(b_pj)`, checking that the imaginary part cancels.
fn re_cross_total(
    a: &Array2<Complex64>,
    b: &Array2<Complex64>,
    context: &'static str,
) -> Result<f64> {
    let mut acc = CompensatedComplex::default();
    let (mut ea, mut eb) = (0.0_f64, 0.0_f64);
    for (za, zb) in a.iter().zip(b.iter()) {
        ea += za.norm_sqr();
        eb += zb.norm_sqr();
        acc.add(za * zb.conj());
    }
    // Cauchy–Schwarz bound on the sum of |a_pj b_pj|
    let mag = (ea * eb).sqrt();
    let v = acc.value();
    if v.im.abs() > 1e-8 * mag.max(f64::MIN_POSITIVE) && v.im.abs() > 1e-300 {
        return Err(Error::ImaginaryResidual {
            imag: v.im.abs(),
            magnitude: mag,
            context,
        });
    }
    Ok(v.re)
}

fn time_residuals(w: &WithinPanel, beta: &DVector<f64>) -> Array2<f64> {
    let mut u = w.y_tilde.clone();
    for (c, b) in beta.iter().enumerate() {
        u.scaled_add(-b, &w.x_tilde[c]);
    }
    u
}

fn check_within(w: &WithinPanel) -> Result<()> {
    if w.x_tilde.is_empty() {
        return Err(Error::InvalidPanel("no regressors".into()));
    }
    for (c, x) in w.x_tilde.iter().enumerate() {
        if x.dim() != w.y_tilde.dim() {
            return Err(Error::DimensionMismatch(format!(
                "regressor {} has shape {:?}, outcome has {:?}",
                c + 1,
                x.dim(),
                w.y_tilde.dim()
            )));
        }
    }
    Ok(())
}

/// Time-domain within estimator `(ΣΣ x̃x̃')^{-1} ΣΣ x̃ỹ`.
pub fn fe_estimate_time(w: &WithinPanel) -> Result<FeEstimate> {
    let (beta, sxx, residuals_time) = fe_fit_time(w)?;
    let residual_spectrum = dft(&residuals_time)?;
    Ok(FeEstimate {
        beta,
        sxx,
        residuals_time,
        residual_spectrum,
        regressor_names: w.regressor_names.clone(),
    })
}

/// `β̂`, `S_xx` and time-domain residuals, without the residual DFT.
pub fn fe_fit_time(w: &WithinPanel) -> Result<(DVector<f64>, DMatrix<f64>, Array2<f64>)> {
    check_within(w)?;
    let k = w.k();
    let dot = |a: &Array2<f64>, b: &Array2<f64>| {
        let mut s = CompensatedSum::new();
        for (x, y) in a.iter().zip(b.iter()) {
            s.add(x * y);
        }
        s.value()
    };
    let mut sxx = DMatrix::zeros(k, k);
    let mut sxy = DVector::zeros(k);
    for a in 0..k {
        for b in a..k {
            let v = dot(&w.x_tilde[a], &w.x_tilde[b]);
            sxx[(a, b)] = v;
            sxx[(b, a)] = v;
        }
        sxy[a] = dot(&w.x_tilde[a], &w.y_tilde);
    }
    symmetrize(&mut sxx);
    let beta = spd_factor(&sxx, &w.regressor_names)?.solve(&sxy);
    let residuals_time = time_residuals(w, &beta);
    Ok((beta, sxx, residuals_time))
}

/// Frequency-domain estimator built from the DFTs of the within data.
pub fn fe_estimate_freq(w: &WithinPanel) -> Result<FeEstimate> {
    check_within(w)?;
    let design = FrequencyDesign::from_within(w)?;
    fe_estimate_with_design(&design, w)
}

/// As [`fe_estimate_freq`] but reusing an existing regressor design.
pub fn fe_estimate_with_design(design: &FrequencyDesign, w: &WithinPanel) -> Result<FeEstimate> {
    let y_spec = dft(&w.y_tilde)?;
    let (beta, resid) = design.estimate(y_spec.channel(0))?;
    let residual_spectrum = Spectrum::from_coefficients(w.periods(), vec![resid])?;
    Ok(FeEstimate {
        residuals_time: time_residuals(w, &beta),
        beta,
        sxx: design.sxx.clone(),
        residual_spectrum,
        regressor_names: w.regressor_names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{within_transform, PanelData};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(n: usize, t: usize, k: usize, seed: u64) -> PanelData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Array2<f64>> = (0..k)
            .map(|_| Array2::from_shape_fn((n, t), |_| rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let y = Array2::from_shape_fn((n, t), |(p, s)| {
            x.iter()
                .enumerate()
                .map(|(c, xc)| (c as f64 + 0.5) * xc[(p, s)])
                .sum::<f64>()
                + rng.random::<f64>()
                + p as f64
        });
        PanelData::new(y, x).unwrap()
    }

    /// OLS of y on x plus individual and period dummies.
    fn dummy_ols(panel: &PanelData) -> DVector<f64> {
        let (n, t, k) = (panel.n(), panel.periods(), panel.k());
        let cols = k + n + (t - 1);
        let mut z = DMatrix::zeros(n * t, cols);
        let mut yv = DVector::zeros(n * t);
        for p in 0..n {
            for s in 0..t {
                let r = p * t + s;
                for c in 0..k {
                    z[(r, c)] = panel.x_at(p, s, c);
                }
                z[(r, k + p)] = 1.0;
                if s > 0 {
                    z[(r, k + n + s - 1)] = 1.0;
                }
                yv[r] = panel.y()[(p, s)];
            }
        }
        let coef = z.svd(true, true).solve(&yv, 1e-12).unwrap();
        coef.rows(0, k).into_owned()
    }

    #[test]
    fn noiseless_recovery() {
        let base = random_panel(4, 6, 2, 1);
        let y = &base.x()[0] * 2.0 - &base.x()[1];
        let panel = PanelData::new(y, base.x().to_vec()).unwrap();
        let w = within_transform(&panel).unwrap();
        for est in [fe_estimate_time(&w).unwrap(), fe_estimate_freq(&w).unwrap()] {
            assert!((est.beta[0] - 2.0).abs() < 1e-12);
            assert!((est.beta[1] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dummy_regression() {
        for (n, t, seed) in [(2, 4, 3), (3, 8, 4), (5, 7, 5)] {
            let panel = random_panel(n, t, 2, seed);
            let w = within_transform(&panel).unwrap();
            let oracle = dummy_ols(&panel);
            let tb = fe_estimate_time(&w).unwrap().beta;
            let fb = fe_estimate_freq(&w).unwrap().beta;
            for c in 0..2 {
                assert!(
                    (tb[c] - oracle[c]).abs() < 1e-8,
                    "{} vs {}",
                    tb[c],
                    oracle[c]
                );
                assert!((fb[c] - oracle[c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn residuals_are_doubly_centered_and_spectrum_consistent() {
        let panel = random_panel(4, 9, 2, 7);
        let w = within_transform(&panel).unwrap();
        let est = fe_estimate_freq(&w).unwrap();
        let u = &est.residuals_time;
        for p in 0..4 {
            assert!(u.row(p).sum().abs() < 1e-12);
        }
        for s in 0..9 {
            assert!(u.column(s).sum().abs() < 1e-12);
        }
        let direct = dft(u).unwrap();
        for (a, b) in direct
            .channel(0)
            .iter()
            .zip(est.residual_spectrum.channel(0).iter())
        {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn duplicate_regressors_are_rank_deficient() {
        let base = random_panel(3, 6, 1, 9);
        let x = vec![base.x()[0].clone(), base.x()[0].clone()];
        let panel = PanelData::new(base.y().clone(), x).unwrap();
        let w = within_transform(&panel).unwrap();
        assert!(matches!(
            fe_estimate_time(&w),
            Err(Error::RankDeficient { .. })
        ));
        assert!(matches!(
            fe_estimate_freq(&w),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn scale_equivariance() {
        let panel = random_panel(5, 8, 2, 11);
        let beta = fe_estimate_time(&within_transform(&panel).unwrap())
            .unwrap()
            .beta;
        let x = vec![&panel.x()[0] * 4.0, panel.x()[1].clone()];
        let scaled = PanelData::new(panel.y() * 3.0, x).unwrap();
        let beta2 = fe_estimate_time(&within_transform(&scaled).unwrap())
            .unwrap()
            .beta;
        assert!((beta2[0] - beta[0] * 3.0 / 4.0).abs() < 1e-10);
        assert!((beta2[1] - beta[1] * 3.0).abs() < 1e-10);
    }
}
