//! Small dense linear algebra helpers for the k×k matrices that show up in
//! estimation (k is the number of regressors, typically ≤ 10).

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a normal-equation matrix is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Tolerated negativity of a PSD matrix, relative to its trace.
pub const PSD_TOL: f64 = 1e-10;

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated accumulator for complex values (real and imaginary parts
/// carried separately).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedComplex {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl CompensatedComplex {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Replace `m` by `(m + m')/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Split a Hermitian accumulation into its real part, checking that the
/// imaginary residual is negligible next to the magnitude of the entries.
pub fn real_part_checked(m: &DMatrix<Complex64>, context: &'static str) -> Result<DMatrix<f64>> {
    let magnitude = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    let imag = m.iter().map(|z| z.im.abs()).fold(0.0_f64, f64::max);
    if imag > 1e-8 * magnitude.max(f64::MIN_POSITIVE) && imag > 1e-300 {
        return Err(Error::ImaginaryResidual {
            imag,
            magnitude,
            context,
        });
    }
    Ok(m.map(|z| z.re))
}

/// Symmetrize and check positive semi-definiteness. Tiny negative
/// eigenvalues (above `-PSD_TOL * trace`) are clipped to zero; anything more
/// negative is an error.
pub fn enforce_psd(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    symmetrize(&mut m);
    let trace = m.trace();
    if m.iter().all(|&v| v == 0.0) {
        return Ok(m);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(m);
    }
    if min < -PSD_TOL * trace.abs() {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            trace,
        });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let mut rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&mut rebuilt);
    Ok(rebuilt)
}

/// Describe the eigenvector of the smallest eigenvalue as a linear
/// combination of named columns, e.g. `+0.707*x1 -0.707*x2`.
fn describe_null_combination(
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    labels: &[String],
) -> String {
    let imin = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(imin);
    let mut parts = Vec::new();
    for (i, &c) in v.iter().enumerate() {
        if c.abs() > 1e-3 {
            let name = labels
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("x{}", i + 1));
            parts.push(format!("{c:+.3}*{name}"));
        }
    }
    parts.join(" ")
}

/// Check that a symmetric matrix is numerically positive definite, returning
/// its Cholesky factor.
pub fn spd_factor(a: &DMatrix<f64>, labels: &[String]) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= RANK_TOL * max {
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        return Err(Error::RankDeficient {
            ratio,
            combination: describe_null_combination(&eig, labels),
        });
    }
    Cholesky::new(a.clone()).ok_or_else(|| Error::RankDeficient {
        ratio: min / max,
        combination: describe_null_combination(&eig, labels),
    })
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, labels: &[String]) -> Result<DVector<f64>> {
    Ok(spd_factor(a, labels)?.solve(b))
}

/// Inverse of a symmetric positive definite matrix; singularity is reported
/// with `what` naming the matrix.
pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= RANK_TOL * max {
        return Err(Error::Singular(format!(
            "{what} (eigenvalue range [{min:.3e}, {max:.3e}])"
        )));
    }
    match Cholesky::new(a.clone()) {
        Some(ch) => {
            let mut inv = ch.inverse();
            symmetrize(&mut inv);
            Ok(inv)
        }
        None => Err(Error::Singular(what.to_string())),
    }
}

/// `v' a^{-1} v` for symmetric positive definite `a`.
pub fn inv_quadratic_form(a: &DMatrix<f64>, v: &DVector<f64>, what: &str) -> Result<f64> {
    let inv = spd_inverse(a, what)?;
    Ok((v.transpose() * inv * v)[(0, 0)])
}

/// Sandwich `bread^{-1} meat bread^{-1}` for symmetric `bread`.
pub fn sandwich(bread_inv: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    let mut v = bread_inv * meat * bread_inv;
    symmetrize(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn psd_clip_tiny_negative() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-14]);
        let out = enforce_psd(m).unwrap();
        let eig = SymmetricEigen::new(out);
        assert!(eig.eigenvalues.min() >= -1e-15);
    }

    #[test]
    fn psd_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(enforce_psd(m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn rank_deficiency_names_combination() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let labels = vec!["x1".to_string(), "x2".to_string()];
        match spd_factor(&a, &labels) {
            Err(Error::RankDeficient { combination, .. }) => {
                assert!(combination.contains("x1") && combination.contains("x2"));
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }
}
