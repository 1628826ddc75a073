//! Discrete Fourier transforms of panel series at the Fourier frequencies
//! `λ_j = 2πj/T`.
//!
//! The transform follows the convention
//!
//! ```text
//! J(λ_j) = T^{-1/2} Σ_{t=1}^{T} ς_t e^{-i t λ_j}
//! ```
//!
//! with time running from 1. Coefficients are kept for the full index set
//! `j = 1..T-1`; for real input `J(λ_{T-j}) = conj(J(λ_j))`. The `j = 0`
//! ordinate is dropped because every series that reaches this module in the
//! estimation pipeline has been demeaned over time.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{real_part_checked, CompensatedComplex};

/// How the transform is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DftMethod {
    /// FFT when `T` has only small prime factors (or is large), direct
    /// summation otherwise.
    Auto,
    Fft,
    Direct,
}

/// Largest prime factor of `m` (1 for `m <= 1`).
fn largest_prime_factor(mut m: usize) -> usize {
    let mut largest = 1;
    let mut f = 2;
    while f * f <= m {
        while m % f == 0 {
            largest = f;
            m /= f;
        }
        f += 1;
    }
    if m > 1 {
        largest = largest.max(m);
    }
    largest
}

/// Precomputed transform for a fixed length `T`.
pub struct DftPlan {
    periods: usize,
    use_fft: bool,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `e^{-i m 2π/T}` for `m = 0..T`.
    roots: Vec<Complex64>,
    scale: f64,
}

impl std::fmt::Debug for DftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DftPlan")
            .field("periods", &self.periods)
            .field("use_fft", &self.use_fft)
            .finish()
    }
}

impl DftPlan {
    pub fn new(periods: usize, method: DftMethod) -> Result<Self> {
        if periods < 2 {
            return Err(Error::InvalidArgument(format!(
                "DFT needs at least 2 periods, got {periods}"
            )));
        }
        let use_fft = match method {
            DftMethod::Fft => true,
            DftMethod::Direct => false,
            DftMethod::Auto => largest_prime_factor(periods) <= 7 || periods > 512,
        };
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(periods);
        let inverse = planner.plan_fft_inverse(periods);
        let roots = (0..periods)
            .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / periods as f64))
            .collect();
        Ok(Self {
            periods,
            use_fft,
            forward,
            inverse,
            roots,
            scale: 1.0 / (periods as f64).sqrt(),
        })
    }

    /// Process-wide cached plan for length `T` with [`DftMethod::Auto`].
    pub fn shared(periods: usize) -> Result<Arc<DftPlan>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<DftPlan>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("dft plan cache poisoned");
        if let Some(plan) = guard.get(&periods) {
            return Ok(plan.clone());
        }
        let plan = Arc::new(DftPlan::new(periods, DftMethod::Auto)?);
        guard.insert(periods, plan.clone());
        Ok(plan)
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn uses_fft(&self) -> bool {
        self.use_fft
    }

    /// `e^{-i λ_j}` for `j` taken modulo `T`.
    #[inline]
    fn root(&self, j: usize) -> Complex64 {
        self.roots[j % self.periods]
    }

    /// All `T` ordinates `J(λ_0), …, J(λ_{T-1})` of a real series.
    pub fn forward_full(&self, series: &[f64], out: &mut [Complex64]) {
        let t_len = self.periods;
        debug_assert_eq!(series.len(), t_len);
        debug_assert_eq!(out.len(), t_len);
        if self.use_fft {
            for (o, &v) in out.iter_mut().zip(series) {
                *o = Complex64::new(v, 0.0);
            }
            self.forward.process(out);
            // shift from time origin 0 to origin 1: multiply by e^{-iλ_j}
            for (j, o) in out.iter_mut().enumerate() {
                *o *= self.root(j) * self.scale;
            }
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = CompensatedComplex::default();
                for (t0, &v) in series.iter().enumerate() {
                    // time index t = t0 + 1
                    acc.add(self.root(j * (t0 + 1)) * v);
                }
                *o = acc.value() * self.scale;
            }
        }
    }

    /// Inverse of [`forward_full`](Self::forward_full): from all `T`
    /// ordinates back to a (complex) series indexed `t = 1..T`.
    pub fn inverse_full(&self, coeffs: &[Complex64], out: &mut [Complex64]) {
        let t_len = self.periods;
        debug_assert_eq!(coeffs.len(), t_len);
        debug_assert_eq!(out.len(), t_len);
        if self.use_fft {
            for (j, (o, &c)) in out.iter_mut().zip(coeffs).enumerate() {
                *o = c * self.root(j).conj();
            }
            self.inverse.process(out);
            for o in out.iter_mut() {
                *o *= self.scale;
            }
        } else {
            for (t0, o) in out.iter_mut().enumerate() {
                let mut acc = CompensatedComplex::default();
                for (j, &c) in coeffs.iter().enumerate() {
                    acc.add(c * self.root(j * (t0 + 1)).conj());
                }
                *o = acc.value() * self.scale;
            }
        }
    }
}

/// DFT coefficients of one or more `n × T` real series, at `j = 1..T-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    periods: usize,
    /// One `n × (T-1)` array per channel; column `j-1` holds `λ_j`.
    channels: Vec<Array2<Complex64>>,
}

impl Spectrum {
    /// Assemble from raw coefficient arrays (each `n × (T-1)`).
    pub fn from_coefficients(periods: usize, channels: Vec<Array2<Complex64>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument(
                "spectrum needs at least one channel".into(),
            ));
        }
        let n = channels[0].nrows();
        for c in &channels {
            if c.dim() != (n, periods - 1) {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient array {:?}, expected {:?}",
                    c.dim(),
                    (n, periods - 1)
                )));
            }
        }
        Ok(Self { periods, channels })
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn n(&self) -> usize {
        self.channels[0].nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Number of non-redundant frequencies, `[T/2]`.
    pub fn half_len(&self) -> usize {
        self.periods / 2
    }

    pub fn frequency(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.periods as f64
    }

    /// `J_{c,p}(λ_j)` for `j` in `1..T`.
    #[inline]
    pub fn coeff(&self, p: usize, j: usize, c: usize) -> Complex64 {
        self.channels[c][(p, j - 1)]
    }

    pub fn channel(&self, c: usize) -> &Array2<Complex64> {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Array2<Complex64>] {
        &self.channels
    }

    /// Periodogram `|J_{c,p}(λ_j)|²` for `j = 1..T-1`.
    pub fn periodogram(&self, p: usize, c: usize) -> Vec<f64> {
        self.channels[c]
            .row(p)
            .iter()
            .map(|z| z.norm_sqr())
            .collect()
    }
}

fn check_finite_series(series: &Array2<f64>) -> Result<()> {
    for ((p, t), v) in series.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("series[{p}][{t}] = {v}")));
        }
    }
    Ok(())
}

/// Transform every row of an `n × T` array with the given plan, writing the
/// `j = 1..T-1` coefficients. The upper half is set to the conjugate of the
/// lower half so that `J(λ_{T-j}) = conj J(λ_j)` holds bitwise, and the
/// imaginary parts of Hermitian sums cancel to rounding even when the
/// transformed series is itself at rounding level.
pub fn dft_with_plan(plan: &DftPlan, series: &Array2<f64>) -> Array2<Complex64> {
    let (n, t_len) = series.dim();
    let mut out = Array2::zeros((n, t_len - 1));
    let mut buf = vec![Complex64::new(0.0, 0.0); t_len];
    let mut row_buf = vec![0.0; t_len];
    for p in 0..n {
        for (dst, src) in row_buf.iter_mut().zip(series.row(p).iter()) {
            *dst = *src;
        }
        plan.forward_full(&row_buf, &mut buf);
        for j in 1..t_len {
            out[(p, j - 1)] = if 2 * j < t_len {
                buf[j]
            } else if 2 * j == t_len {
                Complex64::new(buf[j].re, 0.0)
            } else {
                buf[t_len - j].conj()
            };
        }
    }
    out
}

/// DFT of a single-channel `n × T` panel series.
pub fn dft(series: &Array2<f64>) -> Result<Spectrum> {
    dft_channels(std::slice::from_ref(series))
}

/// DFT of several `n × T` series sharing the same shape (e.g. the regressor
/// channels of a panel).
pub fn dft_channels(series: &[Array2<f64>]) -> Result<Spectrum> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidArgument("no series to transform".into()))?;
    let (_, t_len) = first.dim();
    let plan = DftPlan::shared(t_len)?;
    let mut channels = Vec::with_capacity(series.len());
    for s in series {
        if s.dim() != first.dim() {
            return Err(Error::DimensionMismatch(format!(
                "series shapes {:?} and {:?}",
                s.dim(),
                first.dim()
            )));
        }
        check_finite_series(s)?;
        channels.push(dft_with_plan(&plan, s));
    }
    Spectrum::from_coefficients(t_len, channels)
}

/// Inverse transform of `n × (T-1)` coefficients for `j = 1..T-1`, with the
/// `j = 0` ordinate of row `p` taken as `zero_coeff[p]` (zero when absent).
/// Returns the real series and the largest absolute imaginary part.
pub fn idft_with_plan(
    plan: &DftPlan,
    coeffs: &Array2<Complex64>,
    zero_coeff: &[Complex64],
) -> (Array2<f64>, f64) {
    let n = coeffs.nrows();
    let t_len = plan.periods();
    debug_assert_eq!(coeffs.ncols(), t_len - 1);
    let mut out = Array2::zeros((n, t_len));
    let mut full = vec![Complex64::new(0.0, 0.0); t_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); t_len];
    let mut max_imag = 0.0_f64;
    for p in 0..n {
        full[0] = zero_coeff.get(p).copied().unwrap_or_default();
        for j in 1..t_len {
            full[j] = coeffs[(p, j - 1)];
        }
        plan.inverse_full(&full, &mut buf);
        for (t0, z) in buf.iter().enumerate() {
            out[(p, t0)] = z.re;
            max_imag = max_imag.max(z.im.abs());
        }
    }
    (out, max_imag)
}

/// Reconstruct the time-domain series of one channel; see [`idft_with_plan`].
pub fn inverse_dft_channel(
    spec: &Spectrum,
    c: usize,
    zero_coeff: &[Complex64],
) -> (Array2<f64>, f64) {
    let plan = DftPlan::shared(spec.periods()).expect("spectrum has at least 2 periods");
    idft_with_plan(&plan, spec.channel(c), zero_coeff)
}

/// Inverse transform with the `j = 0` ordinate set to zero, rejecting
/// spectra whose reconstruction is not real.
pub fn inverse_dft_real(spec: &Spectrum, c: usize) -> Result<Array2<f64>> {
    let (series, max_imag) = inverse_dft_channel(spec, c, &[]);
    let magnitude = series.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_imag > 1e-8 * magnitude.max(1e-300) && max_imag > 1e-300 {
        return Err(Error::ImaginaryResidual {
            imag: max_imag,
            magnitude,
            context: "inverse DFT",
        });
    }
    Ok(series)
}

/// `Σ_{j=1}^{T-1} J_{a,p}(λ_j) J_{b,q}(-λ_j)` as a real
/// `channels(a) × channels(b)` matrix.
pub fn cross_sum(a: &Spectrum, b: &Spectrum, p: usize, q: usize) -> Result<DMatrix<f64>> {
    if a.periods() != b.periods() {
        return Err(Error::DimensionMismatch(format!(
            "spectra with T = {} and T = {}",
            a.periods(),
            b.periods()
        )));
    }
    if p >= a.n() || q >= b.n() {
        return Err(Error::DimensionMismatch(format!(
            "individuals ({p}, {q}) out of range ({}, {})",
            a.n(),
            b.n()
        )));
    }
    let ka = a.num_channels();
    let kb = b.num_channels();
    let mut acc = DMatrix::<Complex64>::zeros(ka, kb);
    for ca in 0..ka {
        let ra = a.channel(ca).row(p);
        for cb in 0..kb {
            let rb = b.channel(cb).row(q);
            let mut s = CompensatedComplex::default();
            for (za, zb) in ra.iter().zip(rb.iter()) {
                s.add(za * zb.conj());
            }
            acc[(ca, cb)] = s.value();
        }
    }
    real_part_checked(&acc, "cross_sum")
}
