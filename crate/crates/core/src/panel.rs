//! Balanced panel container and the two-way within transformation.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Axis};

/// Minimum number of individuals accepted by [`PanelData`].
pub const MIN_INDIVIDUALS: usize = 2;
/// Minimum number of periods accepted by [`PanelData`].
pub const MIN_PERIODS: usize = 4;

/// A balanced `n × T` panel with one outcome and `k` regressors.
///
/// Every series is stored as an `n × T` row-major array (individual-major,
/// periods contiguous). Regressors are kept as one such array per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    y: Array2<f64>,
    x: Vec<Array2<f64>>,
    regressor_names: Vec<String>,
    individual_ids: Option<Vec<String>>,
    period_ids: Option<Vec<String>>,
}

fn check_finite(a: &Array2<f64>, what: &str) -> Result<()> {
    for ((p, t), v) in a.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{what}[{p}][{t}] = {v}")));
        }
    }
    Ok(())
}

impl PanelData {
    pub fn new(y: Array2<f64>, x: Vec<Array2<f64>>) -> Result<Self> {
        let k = x.len();
        let names = (1..=k).map(|c| format!("x{c}")).collect();
        Self::with_names(y, x, names)
    }

    pub fn with_names(
        y: Array2<f64>,
        x: Vec<Array2<f64>>,
        regressor_names: Vec<String>,
    ) -> Result<Self> {
        let (n, t) = y.dim();
        if n < MIN_INDIVIDUALS {
            return Err(Error::InvalidPanel(format!(
                "need at least {MIN_INDIVIDUALS} individuals, got {n}"
            )));
        }
        if t < MIN_PERIODS {
            return Err(Error::InvalidPanel(format!(
                "need at least {MIN_PERIODS} periods, got {t}"
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidPanel("need at least one regressor".into()));
        }
        if regressor_names.len() != x.len() {
            return Err(Error::InvalidPanel(format!(
                "{} regressor names for {} regressors",
                regressor_names.len(),
                x.len()
            )));
        }
        check_finite(&y, "y")?;
        for (c, xc) in x.iter().enumerate() {
            if xc.dim() != (n, t) {
                return Err(Error::DimensionMismatch(format!(
                    "regressor {} has shape {:?}, outcome has {:?}",
                    c + 1,
                    xc.dim(),
                    (n, t)
                )));
            }
            check_finite(xc, &regressor_names[c])?;
        }
        Ok(Self {
            y,
            x,
            regressor_names,
            individual_ids: None,
            period_ids: None,
        })
    }

    /// Attach individual and period labels (used by CSV output).
    pub fn with_ids(
        mut self,
        individual_ids: Vec<String>,
        period_ids: Vec<String>,
    ) -> Result<Self> {
        if individual_ids.len() != self.n() || period_ids.len() != self.periods() {
            return Err(Error::DimensionMismatch(format!(
                "{} individual ids / {} period ids for a {}×{} panel",
                individual_ids.len(),
                period_ids.len(),
                self.n(),
                self.periods()
            )));
        }
        self.individual_ids = Some(individual_ids);
        self.period_ids = Some(period_ids);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn periods(&self) -> usize {
        self.y.ncols()
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn x(&self) -> &[Array2<f64>] {
        &self.x
    }

    pub fn x_at(&self, p: usize, t: usize, c: usize) -> f64 {
        self.x[c][(p, t)]
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    pub fn individual_ids(&self) -> Option<&[String]> {
        self.individual_ids.as_deref()
    }

    pub fn period_ids(&self) -> Option<&[String]> {
        self.period_ids.as_deref()
    }

    /// Builds a new panel from a selection of time slices (each slice keeps
    /// the full cross section of `y` and every regressor).
    pub fn select_periods(&self, periods: &[usize]) -> Result<PanelData> {
        let y = self.y.select(Axis(1), periods);
        let x = self
            .x
            .iter()
            .map(|xc| xc.select(Axis(1), periods))
            .collect();
        PanelData::with_names(y, x, self.regressor_names.clone())
    }
}

/// The panel after removing individual and time effects.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinPanel {
    pub y_tilde: Array2<f64>,
    pub x_tilde: Vec<Array2<f64>>,
    pub regressor_names: Vec<String>,
}

impl WithinPanel {
    pub fn n(&self) -> usize {
        self.y_tilde.nrows()
    }

    pub fn periods(&self) -> usize {
        self.y_tilde.ncols()
    }

    pub fn k(&self) -> usize {
        self.x_tilde.len()
    }
}

/// `ς_pt − ς̄_·t − ς̄_p· + ς̿_··` for an arbitrary `n × T` array.
pub fn two_way_demean(a: &Array2<f64>) -> Array2<f64> {
    let (n, t) = a.dim();
    let row_means: Array1<f64> = a.sum_axis(Axis(1)) / t as f64;
    let col_means: Array1<f64> = a.sum_axis(Axis(0)) / n as f64;
    let grand = row_means.sum() / n as f64;
    let mut out = a.clone();
    for ((p, s), v) in out.indexed_iter_mut() {
        *v = *v - col_means[s] - row_means[p] + grand;
    }
    out
}

/// Apply the two-way within transformation to the outcome and every
/// regressor channel.
pub fn within_transform(panel: &PanelData) -> Result<WithinPanel> {
    if panel.n() < MIN_INDIVIDUALS || panel.periods() < MIN_PERIODS {
        return Err(Error::InvalidPanel(format!(
            "within transform needs n ≥ {MIN_INDIVIDUALS} and T ≥ {MIN_PERIODS}, got {}×{}",
            panel.n(),
            panel.periods()
        )));
    }
    Ok(WithinPanel {
        y_tilde: two_way_demean(panel.y()),
        x_tilde: panel.x().iter().map(two_way_demean).collect(),
        regressor_names: panel.regressor_names().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn constant_panel_is_annihilated() {
        let y = Array2::from_elem((3, 5), 7.5);
        let x = vec![Array2::from_elem((3, 5), -2.0)];
        let w = within_transform(&PanelData::new(y, x).unwrap()).unwrap();
        assert!(max_abs(&w.y_tilde) < 1e-14);
        assert!(max_abs(&w.x_tilde[0]) < 1e-14);
    }

    #[test]
    fn two_by_two_hand_value() {
        let y = array![[1.0, 2.0], [3.0, 5.0]];
        let out = two_way_demean(&y);
        let expected = array![[0.25, -0.25], [-0.25, 0.25]];
        for (a, b) in out.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn additive_fixed_effects_vanish() {
        let eta = [0.3, -1.2, 4.0];
        let alpha = [1.0, 2.0, -3.0, 0.5, 9.0];
        let y = Array2::from_shape_fn((3, 5), |(p, t)| eta[p] + alpha[t]);
        assert!(max_abs(&two_way_demean(&y)) < 1e-14);
    }

    #[test]
    fn margins_sum_to_zero_and_idempotent() {
        let y = Array2::from_shape_fn((4, 6), |(p, t)| {
            ((p * 7 + t * 3) % 5) as f64 * 1.3 - t as f64
        });
        let d = two_way_demean(&y);
        for s in d.sum_axis(Axis(0)).iter().chain(d.sum_axis(Axis(1)).iter()) {
            assert!(s.abs() < 1e-12);
        }
        let dd = two_way_demean(&d);
        assert!(max_abs(&(&dd - &d)) < 1e-14);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        let y = Array2::zeros((1, 8));
        assert!(PanelData::new(y, vec![Array2::zeros((1, 8))]).is_err());
        let y = Array2::zeros((3, 3));
        assert!(PanelData::new(y, vec![Array2::zeros((3, 3))]).is_err());
        let mut y = Array2::zeros((3, 4));
        y[(1, 2)] = f64::NAN;
        assert!(matches!(
            PanelData::new(y, vec![Array2::zeros((3, 4))]),
            Err(Error::NonFinite(_))
        ));
    }
}
