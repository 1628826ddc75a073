//! Simulation designs: spatially dependent linear processes on random
//! locations, homogeneous and heterogeneous ARMA time dependence, and
//! multiplicative heteroskedasticity.

use nalgebra::DVector;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelData;

pub const DEFAULT_BURN_IN: usize = 49;
pub const WEAK_DECAY: f64 = 10.0;
pub const STRONG_DECAY: f64 = 0.7;

/// Cross-sectional dependence strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spatial {
    Weak,
    Strong,
    /// Custom decay exponent of the distance weights.
    Decay(f64),
}

impl Spatial {
    pub fn decay(self) -> f64 {
        match self {
            Spatial::Weak => WEAK_DECAY,
            Spatial::Strong => STRONG_DECAY,
            Spatial::Decay(d) => d,
        }
    }
}

/// Heterogeneous ARMA families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArmaFamily {
    MixedAr1,
    MixedAr1Ma1,
    MixedAr3,
    MixedAr3Ma3,
}

/// Time dependence of errors and regressors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Temporal {
    /// `u_t = ρ u_{t-1} + sqrt(1 − ρ²) η_t`, the same for every individual.
    Ar1 {
        rho: f64,
    },
    Mixed {
        family: ArmaFamily,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorForm {
    /// `x́ = x + w_p + ϱ_t`.
    Additive,
    /// `x́ = x (w_p ϱ_t)²`.
    Multiplicative,
}

/// Multiplicative heteroskedasticity `σ [exp(δ₁w_p)+1][exp(δ₂ϱ_t)+1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeteroConfig {
    pub form: RegressorForm,
    pub delta1: f64,
    pub delta2: f64,
    /// AR(1) coefficient of `ϱ_t`.
    #[serde(default = "default_varrho_rho")]
    pub varrho_rho: f64,
}

fn default_varrho_rho() -> f64 {
    0.7
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_beta() -> Vec<f64> {
    vec![0.0]
}

/// Serializable description of a design, independent of `(n, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    /// One coefficient per regressor.
    #[serde(default = "default_beta")]
    pub beta: Vec<f64>,
    pub spatial: Spatial,
    pub temporal: Temporal,
    #[serde(default)]
    pub hetero: Option<HeteroConfig>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl DgpConfig {
    pub fn homogeneous(spatial: Spatial, rho: f64) -> Self {
        Self {
            beta: vec![0.0],
            spatial,
            temporal: Temporal::Ar1 { rho },
            hetero: None,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn heterogeneous(spatial: Spatial, family: ArmaFamily) -> Self {
        Self {
            temporal: Temporal::Mixed { family },
            ..Self::homogeneous(spatial, 0.0)
        }
    }

    pub fn with_hetero(spatial: Spatial, rho: f64, hetero: HeteroConfig) -> Self {
        Self {
            hetero: Some(hetero),
            ..Self::homogeneous(spatial, rho)
        }
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config(
                "beta must be a non-empty list of finite numbers".into(),
            ));
        }
        let d = self.spatial.decay();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Config(format!(
                "spatial decay must be positive, got {d}"
            )));
        }
        if let Temporal::Ar1 { rho } = self.temporal {
            if !(rho.abs() < 1.0) {
                return Err(Error::NonStationary(format!("AR(1) coefficient {rho}")));
            }
        }
        if let Some(h) = &self.hetero {
            if !(h.delta1 >= 0.0 && h.delta2 >= 0.0) {
                return Err(Error::Config(
                    "heteroskedasticity deltas must be non-negative".into(),
                ));
            }
            if !(h.varrho_rho.abs() < 1.0) {
                return Err(Error::NonStationary(format!(
                    "AR(1) coefficient {} of the period regressor",
                    h.varrho_rho
                )));
            }
            if self.beta.len() != 1 {
                return Err(Error::Config(
                    "heteroskedastic designs have a single regressor".into(),
                ));
            }
        }
        Ok(())
    }

    /// Draw the frozen parts of the design (locations and fixed effects)
    /// for an `n × T` panel.
    pub fn realize(
        &self,
        n: usize,
        periods: usize,
        design_rng: &mut ChaCha8Rng,
    ) -> Result<DgpSpec> {
        self.validate()?;
        let spatial = SpatialSpec::draw(n, self.spatial.decay(), design_rng);
        let arma = match self.temporal {
            Temporal::Ar1 { rho } => ArmaSpec::homogeneous_ar1(n, rho)?,
            Temporal::Mixed { family } => heterogeneous_specs(n, family)?,
        };
        let eta_p: Vec<f64> = (0..n)
            .map(|_| 1.0 + design_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let alpha_t: Vec<f64> = (0..periods)
            .map(|_| 1.0 + design_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mu_t: Vec<Vec<f64>> = (0..self.beta.len())
            .map(|_| {
                (0..periods)
                    .map(|_| 1.0 + design_rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Ok(DgpSpec {
            beta: DVector::from_vec(self.beta.clone()),
            spatial_u: spatial.clone(),
            spatial_x: spatial,
            arma_u: arma.clone(),
            arma_x: arma,
            eta_p,
            alpha_t,
            mu_t,
            hetero: self.hetero,
            burn_in: self.burn_in,
            periods,
        })
    }
}

/// Locations on a line and the distance-decay weights built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpec {
    pub locations: Vec<f64>,
    pub decay: f64,
    /// `weights[(p, ℓ)] = (1 + |s_ℓ − s_p|)^{−decay}`.
    pub weights: Array2<f64>,
    /// `σ_p = (Σ_ℓ c_ℓ(p)²)^{−1/2}`.
    pub normalizers: Vec<f64>,
}

impl SpatialSpec {
    pub fn from_locations(locations: Vec<f64>, decay: f64) -> Self {
        let n = locations.len();
        let weights = Array2::from_shape_fn((n, n), |(p, l)| {
            (1.0 + (locations[l] - locations[p]).abs()).powf(-decay)
        });
        let normalizers = (0..n)
            .map(|p| 1.0 / weights.row(p).iter().map(|c| c * c).sum::<f64>().sqrt())
            .collect();
        Self {
            locations,
            decay,
            weights,
            normalizers,
        }
    }

    /// Locations `s_p ~ U[0, n]`.
    pub fn draw(n: usize, decay: f64, rng: &mut ChaCha8Rng) -> Self {
        let locations = (0..n).map(|_| rng.random::<f64>() * n as f64).collect();
        Self::from_locations(locations, decay)
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    /// Population `Cov(η_p, η_q) = σ_pσ_q Σ_ℓ c_ℓ(p)c_ℓ(q)`.
    pub fn covariance(&self) -> Array2<f64> {
        let c = self.scaled_weights();
        c.dot(&c.t())
    }

    /// `diag(σ) C`.
    pub fn scaled_weights(&self) -> Array2<f64> {
        let mut c = self.weights.clone();
        for (p, mut row) in c.rows_mut().into_iter().enumerate() {
            row *= self.normalizers[p];
        }
        c
    }

    /// Spatially dependent unit-variance innovations, `n × len`.
    pub fn innovations(&self, len: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let n = self.n();
        let e = Array2::from_shape_fn((n, len), |_| rng.sample::<f64, _>(StandardNormal));
        self.scaled_weights().dot(&e)
    }
}

/// Per-individual ARMA(3,3) filters
/// `(1 − ρ₁L)(1 + ρ₂L + ρ₃L²) u = scale · (1 + θ₁L + θ₂L² + θ₃L³) η`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaSpec {
    /// `(ρ₁, ρ₂, ρ₃)` per individual.
    pub rho: Vec<[f64; 3]>,
    /// `(θ₁, θ₂, θ₃)` per individual.
    pub theta: Vec<[f64; 3]>,
    pub innovation_scale: f64,
    pub homogeneous: bool,
}

impl ArmaSpec {
    pub fn new(
        rho: Vec<[f64; 3]>,
        theta: Vec<[f64; 3]>,
        innovation_scale: f64,
        homogeneous: bool,
    ) -> Result<Self> {
        if rho.len() != theta.len() {
            return Err(Error::DimensionMismatch(
                "AR and MA coefficient lists differ in length".into(),
            ));
        }
        for (p, r) in rho.iter().enumerate() {
            let [r1, r2, r3] = *r;
            // 1 + r2 z + r3 z² has roots outside the unit circle iff the
            // AR(2) with coefficients (−r2, −r3) is stationary
            let (f1, f2) = (-r2, -r3);
            if !(r1.abs() < 1.0 && f1 + f2 < 1.0 && f2 - f1 < 1.0 && f2.abs() < 1.0) {
                return Err(Error::NonStationary(format!(
                    "individual {} has AR coefficients ({r1}, {r2}, {r3})",
                    p + 1
                )));
            }
        }
        Ok(Self {
            rho,
            theta,
            innovation_scale,
            homogeneous,
        })
    }

    pub fn homogeneous_ar1(n: usize, rho: f64) -> Result<Self> {
        Self::new(
            vec![[rho, 0.0, 0.0]; n],
            vec![[0.0; 3]; n],
            (1.0 - rho * rho).sqrt(),
            true,
        )
    }

    pub fn n(&self) -> usize {
        self.rho.len()
    }

    /// Lag polynomial `1 + a₁L + a₂L² + a₃L³` of individual `p`.
    pub fn ar_polynomial(&self, p: usize) -> [f64; 3] {
        let [r1, r2, r3] = self.rho[p];
        [r2 - r1, r3 - r1 * r2, -r1 * r3]
    }

    /// Filter `n × len` innovations from zero initial values.
    pub fn filter(&self, eta: &Array2<f64>) -> Array2<f64> {
        let (n, len) = eta.dim();
        let mut u = Array2::zeros((n, len));
        for p in 0..n {
            let a = self.ar_polynomial(p);
            let th = self.theta[p];
            for t in 0..len {
                let mut v = eta[(p, t)];
                for l in 1..=3 {
                    if t >= l {
                        v += th[l - 1] * eta[(p, t - l)];
                    }
                }
                v *= self.innovation_scale;
                for l in 1..=3 {
                    if t >= l {
                        v -= a[l - 1] * u[(p, t - l)];
                    }
                }
                u[(p, t)] = v;
            }
        }
        u
    }
}

fn grid(i: usize, m: usize) -> f64 {
    if m <= 1 {
        0.5
    } else {
        0.5 + 0.4 * i as f64 / (m - 1) as f64
    }
}

/// Individual-specific coefficients on the equidistant grid over
/// `[0.5, 0.9]`.
pub fn heterogeneous_specs(n: usize, family: ArmaFamily) -> Result<ArmaSpec> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "need at least one individual".into(),
        ));
    }
    let split = matches!(family, ArmaFamily::MixedAr1Ma1 | ArmaFamily::MixedAr3Ma3);
    if split && n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "{family:?} needs an even number of individuals, got {n}"
        )));
    }
    let extra = match family {
        ArmaFamily::MixedAr3 | ArmaFamily::MixedAr3Ma3 => [0.3, 0.6],
        _ => [0.0, 0.0],
    };
    let mut rho = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    if split {
        let h = n / 2;
        for i in 0..h {
            rho.push([grid(i, h), extra[0], extra[1]]);
            theta.push([0.0; 3]);
        }
        for i in 0..h {
            rho.push([0.0; 3]);
            theta.push([grid(i, h), extra[0], extra[1]]);
        }
    } else {
        for i in 0..n {
            rho.push([grid(i, n), extra[0], extra[1]]);
            theta.push([0.0; 3]);
        }
    }
    ArmaSpec::new(rho, theta, 1.0, false)
}

/// Scale map `σ [exp(δ₁w_p)+1][exp(δ₂ϱ_t)+1]`, with `σ` chosen so that
/// the in-sample mean of the squared scale is one, and the coefficient of
/// variation of the squared scale.
pub fn hetero_scale_map(cfg: &HeteroConfig, w_p: &[f64], varrho_t: &[f64]) -> (Array2<f64>, f64) {
    let raw = Array2::from_shape_fn((w_p.len(), varrho_t.len()), |(p, t)| {
        ((cfg.delta1 * w_p[p]).exp() + 1.0) * ((cfg.delta2 * varrho_t[t]).exp() + 1.0)
    });
    let mean_sq = raw.iter().map(|s| s * s).sum::<f64>() / raw.len() as f64;
    let sigma = 1.0 / mean_sq.sqrt();
    let scale = raw * sigma;
    let sq: Array1<f64> = scale.iter().map(|s| s * s).collect();
    let mean = sq.mean().unwrap_or(0.0);
    let sd = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / sq.len() as f64).sqrt();
    let cv = if mean > 0.0 { sd / mean } else { 0.0 };
    (scale, cv)
}

/// A realized design for a fixed `(n, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub beta: DVector<f64>,
    pub spatial_u: SpatialSpec,
    pub spatial_x: SpatialSpec,
    pub arma_u: ArmaSpec,
    pub arma_x: ArmaSpec,
    pub eta_p: Vec<f64>,
    pub alpha_t: Vec<f64>,
    /// Location shifts of each regressor channel.
    pub mu_t: Vec<Vec<f64>>,
    pub hetero: Option<HeteroConfig>,
    pub burn_in: usize,
    pub periods: usize,
}

impl DgpSpec {
    pub fn n(&self) -> usize {
        self.spatial_u.n()
    }

    pub fn k(&self) -> usize {
        self.beta.len()
    }
}

/// Random generators for one replication.
pub struct ReplicationRngs<'a> {
    pub u: &'a mut ChaCha8Rng,
    pub x: &'a mut ChaCha8Rng,
    pub hetero: &'a mut ChaCha8Rng,
}

/// Simulated panel plus the latent pieces used to build it.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: PanelData,
    pub u: Array2<f64>,
    pub x: Vec<Array2<f64>>,
    /// Scale map multiplying `u`, when heteroskedastic.
    pub scale: Option<Array2<f64>>,
    pub scale_cv: Option<f64>,
    pub w_p: Option<Vec<f64>>,
    pub varrho_t: Option<Vec<f64>>,
}

fn simulate_series(
    spatial: &SpatialSpec,
    arma: &ArmaSpec,
    burn_in: usize,
    periods: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let eta = spatial.innovations(burn_in + periods, rng);
    let u = arma.filter(&eta);
    u.slice(ndarray::s![.., burn_in..]).to_owned()
}

/// AR(1) series with unit stationary variance, burned in from zero.
fn unit_ar1(rho: f64, burn_in: usize, periods: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = (1.0 - rho * rho).sqrt();
    let mut v = 0.0;
    let mut out = Vec::with_capacity(periods);
    for t in 0..burn_in + periods {
        v = rho * v + scale * rng.sample::<f64, _>(StandardNormal);
        if t >= burn_in {
            out.push(v);
        }
    }
    out
}

pub fn simulate_panel(spec: &DgpSpec, rngs: ReplicationRngs<'_>) -> Result<SimulatedPanel> {
    let n = spec.n();
    let t_len = spec.periods;
    let u = simulate_series(&spec.spatial_u, &spec.arma_u, spec.burn_in, t_len, rngs.u);
    let x: Vec<Array2<f64>> = (0..spec.k())
        .map(|c| {
            let mut xc =
                simulate_series(&spec.spatial_x, &spec.arma_x, spec.burn_in, t_len, rngs.x);
            for ((_, t), v) in xc.indexed_iter_mut() {
                *v += spec.mu_t[c][t];
            }
            xc
        })
        .collect();
    let mut regressors = x.clone();
    let mut error = u.clone();
    let (mut scale, mut scale_cv, mut w_out, mut r_out) = (None, None, None, None);
    if let Some(h) = &spec.hetero {
        let strong = SpatialSpec::from_locations(spec.spatial_u.locations.clone(), STRONG_DECAY);
        let w_p: Vec<f64> = strong.innovations(1, rngs.hetero).column(0).to_vec();
        let varrho = unit_ar1(h.varrho_rho, spec.burn_in, t_len, rngs.hetero);
        let (s, cv) = hetero_scale_map(h, &w_p, &varrho);
        error = &error * &s;
        regressors[0] = Array2::from_shape_fn((n, t_len), |(p, t)| match h.form {
            RegressorForm::Additive => x[0][(p, t)] + w_p[p] + varrho[t],
            RegressorForm::Multiplicative => x[0][(p, t)] * (w_p[p] * varrho[t]).powi(2),
        });
        scale = Some(s);
        scale_cv = Some(cv);
        w_out = Some(w_p);
        r_out = Some(varrho);
    }
    let y = Array2::from_shape_fn((n, t_len), |(p, t)| {
        let mut v = spec.alpha_t[t] + spec.eta_p[p] + error[(p, t)];
        for (c, b) in spec.beta.iter().enumerate() {
            v += b * regressors[c][(p, t)];
        }
        v
    });
    Ok(SimulatedPanel {
        panel: PanelData::new(y, regressors)?,
        u,
        x,
        scale,
        scale_cv,
        w_p: w_out,
        varrho_t: r_out,
    })
}
