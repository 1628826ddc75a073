//! One-panel inference: fit once, then evaluate any set of test methods
//! against the same fit.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bootstrap::{
    bootstrap_pvalue, run_bootstrap, BootstrapConfig, BootstrapContext, BootstrapDistribution,
    Scheme, WildMultiplier,
};
use crate::cluster::{cluster_covariance, wald_statistic, CovEstimate, TestResult};
use crate::error::{Error, Result};
use crate::estimators::{fe_estimate_with_design, FeEstimate, FrequencyDesign};
use crate::fixedb::{FixedBCache, FixedBSim, FixedBTable, LEVELS};
use crate::hac::{dk_hac_auto, DkEstimate};
use crate::hetero::{robust_covariance, run_robust_bootstrap, HeteroScaleEstimates, RobustContext};
use crate::linalg::spd_inverse;
use crate::mbb::{mbb_bootstrap, MbbConfig};
use crate::panel::{within_transform, PanelData, WithinPanel};

/// Test procedures for `H₀: β = β₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Cluster estimator, chi-square critical values.
    HsAsy,
    /// Cluster estimator, naive frequency bootstrap.
    HsNb,
    /// Cluster estimator, wild frequency bootstrap.
    HsWb,
    HsRobustAsy,
    HsRobustNb,
    HsRobustWb,
    /// Driscoll–Kraay with plug-in bandwidth, chi-square critical values.
    DkAsy,
    /// Driscoll–Kraay with fixed-b critical values.
    DkFixb,
    /// Driscoll–Kraay statistic against the pairs moving-block bootstrap.
    DkMbb,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::HsAsy,
        Method::HsNb,
        Method::HsWb,
        Method::HsRobustAsy,
        Method::HsRobustNb,
        Method::HsRobustWb,
        Method::DkAsy,
        Method::DkFixb,
        Method::DkMbb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::HsAsy => "hs-asy",
            Method::HsNb => "hs-nb",
            Method::HsWb => "hs-wb",
            Method::HsRobustAsy => "hs-robust-asy",
            Method::HsRobustNb => "hs-robust-nb",
            Method::HsRobustWb => "hs-robust-wb",
            Method::DkAsy => "dk-asy",
            Method::DkFixb => "dk-fixb",
            Method::DkMbb => "dk-mbb",
        }
    }

    pub fn is_robust(self) -> bool {
        matches!(
            self,
            Method::HsRobustAsy | Method::HsRobustNb | Method::HsRobustWb
        )
    }

    pub fn is_dk(self) -> bool {
        matches!(self, Method::DkAsy | Method::DkFixb | Method::DkMbb)
    }

    pub fn is_bootstrap(self) -> bool {
        matches!(
            self,
            Method::HsNb | Method::HsWb | Method::HsRobustNb | Method::HsRobustWb | Method::DkMbb
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s {
            "hs" => Method::HsAsy,
            "hs-robust" => Method::HsRobustAsy,
            "dk" => Method::DkAsy,
            other => *Method::ALL
                .iter()
                .find(|m| m.name() == other)
                .ok_or_else(|| {
                    let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                    Error::Config(format!(
                        "unknown method {other:?}; expected one of {}",
                        names.join(", ")
                    ))
                })?,
        };
        Ok(m)
    }
}

/// Settings shared by every method evaluated on one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOptions {
    pub bootstrap_reps: usize,
    pub level: f64,
    /// Null value; zeros when absent.
    pub beta0: Option<Vec<f64>>,
    pub seed: u64,
    pub wild_multiplier: WildMultiplier,
    pub cell: usize,
    pub replication: usize,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            bootstrap_reps: 199,
            level: 0.05,
            beta0: None,
            seed: 1,
            wild_multiplier: WildMultiplier::Gaussian,
            cell: 0,
            replication: 0,
        }
    }
}

impl InferenceOptions {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if let Some(b) = &self.beta0 {
            if b.len() != k {
                return Err(Error::Config(format!(
                    "beta0 has {} entries, the panel has {k} regressors",
                    b.len()
                )));
            }
        }
        Ok(())
    }

    pub fn beta0_vector(&self, k: usize) -> DVector<f64> {
        match &self.beta0 {
            Some(b) => DVector::from_column_slice(b),
            None => DVector::zeros(k),
        }
    }

    fn bootstrap(&self, scheme: Scheme) -> BootstrapConfig {
        let mut cfg = BootstrapConfig::new(scheme, self.bootstrap_reps, self.seed)
            .at(self.cell, self.replication);
        cfg.wild_multiplier = self.wild_multiplier;
        cfg
    }
}

/// The within transform, frequency design and fixed-effects fit of a panel.
#[derive(Debug, Clone)]
pub struct Fit {
    pub panel: PanelData,
    pub within: WithinPanel,
    pub design: FrequencyDesign,
    pub estimate: FeEstimate,
    pub cluster: CovEstimate,
}

impl Fit {
    pub fn new(panel: PanelData) -> Result<Self> {
        let within = within_transform(&panel)?;
        let design = FrequencyDesign::from_within(&within)?;
        let estimate = fe_estimate_with_design(&design, &within)?;
        let cluster = cluster_covariance(&design.x_spec, &estimate)?;
        Ok(Self {
            panel,
            within,
            design,
            estimate,
            cluster,
        })
    }

    pub fn n(&self) -> usize {
        self.panel.n()
    }

    pub fn periods(&self) -> usize {
        self.panel.periods()
    }

    pub fn k(&self) -> usize {
        self.panel.k()
    }

    /// Classical standard errors `sqrt(diag(σ̂² S_xx⁻¹))` with
    /// `σ̂² = RSS / (nT − n − T + 1 − k)`.
    pub fn iid_standard_errors(&self) -> Result<DVector<f64>> {
        let (n, t) = (self.n(), self.periods());
        let dof = (n * t) as f64 - n as f64 - t as f64 + 1.0 - self.k() as f64;
        if dof <= 0.0 {
            return Err(Error::InvalidPanel("no residual degrees of freedom".into()));
        }
        let rss: f64 = self.estimate.residuals_time.iter().map(|v| v * v).sum();
        let inv = spd_inverse(&self.estimate.sxx, "S_xx")?;
        Ok(DVector::from_iterator(
            self.k(),
            (0..self.k()).map(|c| (rss / dof * inv[(c, c)]).sqrt()),
        ))
    }
}

/// Result of one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub wald: f64,
    pub df: usize,
    /// Chi-square or bootstrap p-value; absent for fixed-b.
    pub pvalue: Option<f64>,
    /// Fixed-b Wald critical value at the requested level.
    pub critical_value: Option<f64>,
    /// Absent until a fixed-b outcome is resolved.
    pub reject: Option<bool>,
    pub std_errors: Vec<f64>,
    /// Per-coefficient intervals at `1 − level`, for the non-bootstrap
    /// methods.
    pub confidence_intervals: Option<Vec<[f64; 2]>>,
    pub bandwidth: Option<usize>,
    pub block_length: Option<usize>,
    /// `m_T / T` for fixed-b.
    pub b: Option<f64>,
    pub valid_draws: Option<usize>,
    pub degenerate_draws: Option<usize>,
}

impl MethodOutcome {
    fn from_test(method: Method, test: &TestResult, se: &DVector<f64>) -> Self {
        Self {
            method,
            wald: test.wald,
            df: test.df,
            pvalue: Some(test.pvalue_asymptotic),
            critical_value: None,
            reject: None,
            std_errors: se.iter().copied().collect(),
            confidence_intervals: None,
            bandwidth: None,
            block_length: None,
            b: None,
            valid_draws: None,
            degenerate_draws: None,
        }
    }

    fn with_bootstrap(mut self, dist: &BootstrapDistribution, level: f64) -> Result<Self> {
        let p = bootstrap_pvalue(self.wald, dist)?;
        self.pvalue = Some(p);
        self.reject = Some(p <= level);
        self.valid_draws = Some(dist.wald_stars.len());
        self.degenerate_draws = Some(dist.degenerate);
        Ok(self)
    }

    fn with_normal_intervals(mut self, beta: &DVector<f64>, level: f64) -> Self {
        let z = Normal::standard().inverse_cdf(1.0 - level / 2.0);
        self.confidence_intervals = Some(intervals(beta, &self.std_errors, z));
        self
    }
}

fn intervals(beta: &DVector<f64>, se: &[f64], crit: f64) -> Vec<[f64; 2]> {
    beta.iter()
        .zip(se)
        .map(|(b, s)| [b - crit * s, b + crit * s])
        .collect()
}

/// Settle a fixed-b outcome against its critical-value table.
pub fn resolve_fixed_b(
    outcome: &mut MethodOutcome,
    table: &FixedBTable,
    level: f64,
    beta: &DVector<f64>,
) -> Result<()> {
    let cv = table.wald_cv_at(level).ok_or_else(|| {
        Error::Config(format!(
            "fixed-b critical values are tabulated only at levels {LEVELS:?}"
        ))
    })?;
    outcome.critical_value = Some(cv);
    outcome.reject = Some(outcome.wald > cv);
    if let Some(t) = table.t_cv_at(level) {
        outcome.confidence_intervals = Some(intervals(beta, &outcome.std_errors, t));
    }
    Ok(())
}

pub fn check_fixed_b_level(level: f64) -> Result<()> {
    if LEVELS.iter().any(|l| (l - level).abs() < 1e-12) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "dk-fixb needs level in {LEVELS:?}, got {level}"
        )))
    }
}

/// Evaluates methods on a fit, sharing the DK and robust pieces between
/// the methods that use them.
pub struct Analysis<'a> {
    fit: &'a Fit,
    opts: &'a InferenceOptions,
    beta0: DVector<f64>,
    plain: Option<TestResult>,
    dk: Option<(DkEstimate, CovEstimate, TestResult)>,
    robust: Option<(HeteroScaleEstimates, CovEstimate, TestResult)>,
}

impl<'a> Analysis<'a> {
    pub fn new(fit: &'a Fit, opts: &'a InferenceOptions) -> Result<Self> {
        opts.validate(fit.k())?;
        Ok(Self {
            fit,
            opts,
            beta0: opts.beta0_vector(fit.k()),
            plain: None,
            dk: None,
            robust: None,
        })
    }

    fn wald(&self, cov: &CovEstimate) -> Result<TestResult> {
        let e = &self.fit.estimate;
        wald_statistic(&e.beta, &cov.vhat, e.n(), e.periods(), &self.beta0)
    }

    fn plain(&mut self) -> Result<TestResult> {
        if self.plain.is_none() {
            self.plain = Some(self.wald(&self.fit.cluster)?);
        }
        Ok(self.plain.clone().unwrap())
    }

    fn ensure_dk(&mut self) -> Result<()> {
        if self.dk.is_none() {
            let dk = dk_hac_auto(&self.fit.within, &self.fit.estimate.residuals_time)?;
            let cov = CovEstimate::new(dk.phi.clone(), self.fit.cluster.sigma_x.clone())?;
            let test = self.wald(&cov)?;
            self.dk = Some((dk, cov, test));
        }
        Ok(())
    }

    fn ensure_robust(&mut self) -> Result<()> {
        if self.robust.is_none() {
            let f = self.fit;
            let scales = HeteroScaleEstimates::from_residuals(&f.estimate.residuals_time)?;
            let cov = robust_covariance(&f.within, &f.design.x_spec, &f.estimate, &scales)?;
            let test = self.wald(&cov)?;
            self.robust = Some((scales, cov, test));
        }
        Ok(())
    }

    /// Evaluate one method. Fixed-b outcomes come back unresolved (see
    /// [`resolve_fixed_b`]).
    pub fn run(&mut self, method: Method) -> Result<MethodOutcome> {
        let f = self.fit;
        let (n, t) = (f.n(), f.periods());
        let level = self.opts.level;
        let beta = &f.estimate.beta;
        match method {
            Method::HsAsy | Method::HsNb | Method::HsWb => {
                let test = self.plain()?;
                let out = MethodOutcome::from_test(method, &test, &f.cluster.standard_errors(n, t));
                let scheme = match method {
                    Method::HsAsy => {
                        let mut out = out.with_normal_intervals(beta, level);
                        out.reject = Some(test.pvalue_asymptotic < level);
                        return Ok(out);
                    }
                    Method::HsNb => Scheme::Naive,
                    _ => Scheme::Wild,
                };
                let ctx = BootstrapContext::new(&f.design, &f.estimate)?;
                let dist = run_bootstrap(&ctx, &self.opts.bootstrap(scheme))?;
                out.with_bootstrap(&dist, level)
            }
            Method::HsRobustAsy | Method::HsRobustNb | Method::HsRobustWb => {
                self.ensure_robust()?;
                let (scales, cov, test) = self.robust.as_ref().unwrap();
                let out = MethodOutcome::from_test(method, test, &cov.standard_errors(n, t));
                let scheme = match method {
                    Method::HsRobustAsy => {
                        let mut out = out.with_normal_intervals(beta, level);
                        out.reject = Some(test.pvalue_asymptotic < level);
                        return Ok(out);
                    }
                    Method::HsRobustNb => Scheme::Naive,
                    _ => Scheme::Wild,
                };
                let base = BootstrapContext::new(&f.design, &f.estimate)?;
                let ctx = RobustContext::new(base, &f.within, scales)?;
                let dist = run_robust_bootstrap(&ctx, &self.opts.bootstrap(scheme))?;
                out.with_bootstrap(&dist, level)
            }
            Method::DkAsy | Method::DkFixb | Method::DkMbb => {
                self.ensure_dk()?;
                let (dk, cov, test) = self.dk.as_ref().unwrap();
                let mut out = MethodOutcome::from_test(method, test, &cov.standard_errors(n, t));
                out.bandwidth = Some(dk.bandwidth.lag);
                match method {
                    Method::DkAsy => {
                        out.reject = Some(test.pvalue_asymptotic < level);
                        Ok(out.with_normal_intervals(beta, level))
                    }
                    Method::DkFixb => {
                        out.pvalue = None;
                        out.b = Some(dk.bandwidth.lag as f64 / t as f64);
                        Ok(out)
                    }
                    _ => {
                        out.block_length = Some(dk.bandwidth.block_length);
                        let cfg = MbbConfig::new(
                            dk.bandwidth.block_length,
                            self.opts.bootstrap_reps,
                            self.opts.seed,
                        )
                        .at(self.opts.cell, self.opts.replication);
                        let dist = mbb_bootstrap(&f.panel, beta, &cfg)?;
                        out.with_bootstrap(&dist, level)
                    }
                }
            }
        }
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

/// Full report for one panel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    pub n: usize,
    pub periods: usize,
    pub regressor_names: Vec<String>,
    pub beta: Vec<f64>,
    pub beta0: Vec<f64>,
    pub sigma_x: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub vhat: Vec<Vec<f64>>,
    pub iid_std_errors: Vec<f64>,
    pub level: f64,
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub methods: Vec<MethodOutcome>,
}

/// Fit a panel and run `methods`. The plain cluster test is always
/// included so robust or comparator results can be read against it.
pub fn estimate_panel(
    panel: PanelData,
    methods: &[Method],
    opts: &InferenceOptions,
    cache: &mut FixedBCache,
    sim: &FixedBSim,
) -> Result<InferenceResult> {
    if methods.contains(&Method::DkFixb) {
        check_fixed_b_level(opts.level)?;
    }
    let fit = Fit::new(panel)?;
    let mut list = vec![Method::HsAsy];
    for m in methods {
        if !list.contains(m) {
            list.push(*m);
        }
    }
    let mut analysis = Analysis::new(&fit, opts)?;
    let mut outcomes = Vec::with_capacity(list.len());
    for m in list {
        let mut out = analysis.run(m)?;
        if let Some(b) = out.b {
            let table = cache.get_or_compute(b, fit.k(), sim)?;
            resolve_fixed_b(&mut out, &table, opts.level, &fit.estimate.beta)?;
        }
        outcomes.push(out);
    }
    Ok(InferenceResult {
        n: fit.n(),
        periods: fit.periods(),
        regressor_names: fit.panel.regressor_names().to_vec(),
        beta: fit.estimate.beta.iter().copied().collect(),
        beta0: opts.beta0_vector(fit.k()).iter().copied().collect(),
        sigma_x: matrix_rows(&fit.cluster.sigma_x),
        phi: matrix_rows(&fit.cluster.phi),
        vhat: matrix_rows(&fit.cluster.vhat),
        iid_std_errors: fit.iid_standard_errors()?.iter().copied().collect(),
        level: opts.level,
        bootstrap_reps: opts.bootstrap_reps,
        seed: opts.seed,
        methods: outcomes,
    })
}

fn fmt_wald(w: f64) -> String {
    if w.abs() >= 1e6 {
        format!("{w:.3e}")
    } else {
        format!("{w:.4}")
    }
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

impl InferenceResult {
    pub fn render_text(&self) -> String {
        let mut s = format!("panel: n = {}, T = {}\n\n", self.n, self.periods);
        s.push_str(&format!(
            "{:<12} {:>12} {:>12} {:>12}\n",
            "regressor", "estimate", "cluster se", "iid se"
        ));
        let cluster_se = &self.methods[0].std_errors;
        for (c, name) in self.regressor_names.iter().enumerate() {
            s.push_str(&format!(
                "{:<12} {:>12.6} {:>12.6} {:>12.6}\n",
                name, self.beta[c], cluster_se[c], self.iid_std_errors[c]
            ));
        }
        s.push_str(&format!(
            "\nH0: beta = {:?}, level {}\n{:<14} {:>10} {:>9} {:>9} {:>7} {:>6}\n",
            self.beta0, self.level, "method", "wald", "p-value", "crit", "reject", "m_T"
        ));
        for m in &self.methods {
            s.push_str(&format!(
                "{:<14} {:>10} {:>9} {:>9} {:>7} {:>6}\n",
                m.method.name(),
                fmt_wald(m.wald),
                fmt_opt(m.pvalue, 4),
                fmt_opt(m.critical_value, 3),
                m.reject.map_or("-", |r| if r { "yes" } else { "no" }),
                m.bandwidth
                    .map_or_else(|| "-".to_string(), |b| b.to_string()),
            ));
        }
        s
    }
}
