//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1-7 are exact or fast properties. Criteria 8-12 are Monte
//! Carlo size and power checks against published rejection rates with the
//! band `target ± max(0.025, 3·sqrt(target(1 − target)/R))`.
//!
//! `FREQPANEL_ACCEPT_REPS` overrides R (default 1000), e.g. for a quick
//! smoke run; the bands widen accordingly. Failures are reported but only
//! fail the process when `FREQPANEL_ACCEPT_STRICT=1`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use freqpanel::bootstrap::naive_resample;
use freqpanel::cluster::{cluster_phi_freq, cluster_phi_time};
use freqpanel::dgp::{ArmaFamily, DgpConfig, HeteroConfig, RegressorForm, Spatial};
use freqpanel::estimators::{fe_estimate_freq, fe_estimate_time};
use freqpanel::fixedb::{
    fixed_b_critical_values, simulate_fixed_b_statistics, upper_quantile, FixedBSim,
};
use freqpanel::hac::{dk_hac_phi, dk_hac_phi_quadruple, HacConfig};
use freqpanel::harness::{run_experiment, Experiment, McReport};
use freqpanel::hetero::{robust_cluster_phi, HeteroScaleEstimates};
use freqpanel::inference::Method;
use freqpanel::panel::{two_way_demean, within_transform, PanelData, WithinPanel};
use freqpanel::spectral::dft;

struct Outcome {
    passed: usize,
    failed: Vec<String>,
}

impl Outcome {
    fn record(&mut self, id: &str, ok: bool, detail: String) {
        println!("[{}] {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id.to_string());
        }
    }
}

fn random_panel(rng: &mut ChaCha8Rng, n: usize, t: usize, k: usize) -> PanelData {
    let eta: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let alpha: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    let x: Vec<Array2<f64>> = (0..k)
        .map(|_| {
            let mut a = Array2::zeros((n, t));
            for p in 0..n {
                let mut v: f64 = 0.0;
                for s in 0..t {
                    v = 0.5 * v + rng.sample::<f64, _>(StandardNormal);
                    a[(p, s)] = v + eta[p] + alpha[s];
                }
            }
            a
        })
        .collect();
    let beta: Vec<f64> = (0..k).map(|c| 1.0 - 0.5 * c as f64).collect();
    let y = Array2::from_shape_fn((n, t), |(p, s)| {
        let mut v = eta[p] + alpha[s] + rng.sample::<f64, _>(StandardNormal);
        for c in 0..k {
            v += beta[c] * x[c][(p, s)];
        }
        v
    });
    PanelData::new(y, x).unwrap()
}

fn property_panels() -> Vec<WithinPanel> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    (0..100)
        .map(|_| {
            let n = rng.random_range(2..=20);
            let t = rng.random_range(4..=64);
            let k = rng.random_range(1..=3);
            within_transform(&random_panel(&mut rng, n, t, k)).unwrap()
        })
        .collect()
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
        >= -1e-10 * m.trace().abs().max(f64::MIN_POSITIVE)
}

fn criterion_1_2(out: &mut Outcome, panels: &[WithinPanel]) {
    let (mut beta_err, mut phi_err) = (0.0_f64, 0.0_f64);
    for w in panels {
        let et = fe_estimate_time(w).unwrap();
        let ef = fe_estimate_freq(w).unwrap();
        beta_err = beta_err.max((&et.beta - &ef.beta).norm() / et.beta.norm());
        let x_spec = freqpanel::spectral::dft_channels(&w.x_tilde).unwrap();
        let pf = cluster_phi_freq(&x_spec, &ef.residual_spectrum).unwrap();
        let pt = cluster_phi_time(w, &et.residuals_time).unwrap();
        phi_err = phi_err.max(rel_err(&pf, &pt));
    }
    out.record(
        "1 time/frequency estimator identity",
        beta_err <= 1e-9,
        format!("max relative error {beta_err:.2e} over 100 panels (tol 1e-9)"),
    );
    out.record(
        "2 cluster covariance time/frequency identity",
        phi_err <= 1e-9,
        format!("max relative error {phi_err:.2e} over 100 panels (tol 1e-9)"),
    );
}

/// Least squares on `[x, individual dummies, T − 1 period dummies]`.
fn dummy_ols(panel: &PanelData) -> DVector<f64> {
    let (n, t, k) = (panel.n(), panel.periods(), panel.k());
    let cols = k + n + t - 1;
    let mut a = DMatrix::zeros(n * t, cols);
    let mut b = DVector::zeros(n * t);
    for p in 0..n {
        for s in 0..t {
            let r = p * t + s;
            for c in 0..k {
                a[(r, c)] = panel.x_at(p, s, c);
            }
            a[(r, k + p)] = 1.0;
            if s > 0 {
                a[(r, k + n + s - 1)] = 1.0;
            }
            b[r] = panel.y()[(p, s)];
        }
    }
    let coef = a.svd(true, true).solve(&b, 1e-12).unwrap();
    coef.rows(0, k).into_owned()
}

fn criterion_3(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let t = rng.random_range(4..=12);
        let k = rng.random_range(1..=3);
        let panel = random_panel(&mut rng, n, t, k);
        let fe = fe_estimate_time(&within_transform(&panel).unwrap())
            .unwrap()
            .beta;
        let ols = dummy_ols(&panel);
        worst = worst.max((&fe - &ols).amax() / ols.amax().max(1.0));
    }
    out.record(
        "3 dummy-variable regression oracle",
        worst <= 1e-8,
        format!("max error {worst:.2e} over 20 panels (tol 1e-8)"),
    );
}

fn criterion_4(out: &mut Outcome) {
    // n = 2, T = 3: enumerate all 27 resampling index sequences
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let raw = Array2::from_shape_fn((2, 3), |_| rng.sample::<f64, _>(StandardNormal));
    let u = two_way_demean(&raw);
    let t_len = 3;
    let sigma =
        |p: usize, q: usize| (0..t_len).map(|s| u[(p, s)] * u[(q, s)]).sum::<f64>() / t_len as f64;
    let mut moments = vec![Complex64::default(); 2 * 2 * 2 * 2];
    let mut count = 0usize;
    for i0 in 0..3 {
        for i1 in 0..3 {
            for i2 in 0..3 {
                let ustar = naive_resample(&u, &[i0, i1, i2]);
                let spec = dft(&ustar).unwrap();
                for p in 0..2 {
                    for q in 0..2 {
                        for j in 1..=2 {
                            for kk in 1..=2 {
                                let z = spec.coeff(p, j, 0) * spec.coeff(q, kk, 0).conj();
                                moments[((p * 2 + q) * 2 + j - 1) * 2 + kk - 1] += z;
                            }
                        }
                    }
                }
                count += 1;
            }
        }
    }
    let mut worst = 0.0_f64;
    for p in 0..2 {
        for q in 0..2 {
            for j in 1..=2 {
                for kk in 1..=2 {
                    let m = moments[((p * 2 + q) * 2 + j - 1) * 2 + kk - 1] / count as f64;
                    let expected = if j == kk { sigma(p, q) } else { 0.0 };
                    worst = worst.max((m - Complex64::new(expected, 0.0)).norm());
                }
            }
        }
    }
    out.record(
        "4 bootstrap DFT second-moment identity",
        worst <= 1e-12,
        format!("max deviation {worst:.2e} by exact enumeration at n = 2, T = 3 (tol 1e-12)"),
    );
}

fn criterion_5(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=15);
        let t = rng.random_range(8..=48);
        let k = rng.random_range(1..=2);
        let mut panel = random_panel(&mut rng, n, t, k);
        // heteroskedastic outcome
        let s1: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>() * 2.0).collect();
        let s2: Vec<f64> = (0..t).map(|_| 0.5 + rng.random::<f64>() * 2.0).collect();
        let y = Array2::from_shape_fn((n, t), |(p, s)| panel.y()[(p, s)] * s1[p] * s2[s]);
        panel = PanelData::new(y, panel.x().to_vec()).unwrap();
        let w = within_transform(&panel).unwrap();
        let est = fe_estimate_freq(&w).unwrap();
        let base = HeteroScaleEstimates::from_residuals(&est.residuals_time).unwrap();
        let phi = robust_cluster_phi(&w, &est, &base).unwrap();
        let shifted: Vec<f64> = base
            .sigma1_p
            .iter()
            .map(|v| v * (0.1 + 5.0 * rng.random::<f64>()))
            .collect();
        let other =
            HeteroScaleEstimates::from_parts(shifted, base.sigma2_t.clone(), &est.residuals_time)
                .unwrap();
        let phi2 = robust_cluster_phi(&w, &est, &other).unwrap();
        worst = worst.max(rel_err(&phi2, &phi));
    }
    out.record(
        "5 individual-scale invariance of the robust estimator",
        worst <= 1e-9,
        format!("max relative change {worst:.2e} over 50 panels (tol 1e-9)"),
    );
}

fn criterion_6(out: &mut Outcome, panels: &[WithinPanel]) {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let t = rng.random_range(4..=20);
        let k = rng.random_range(1..=3);
        let w = within_transform(&random_panel(&mut rng, n, t, k)).unwrap();
        let u = fe_estimate_time(&w).unwrap().residuals_time;
        let cfg = HacConfig::new(1.0 + rng.random::<f64>() * t as f64 / 2.0).unwrap();
        worst = worst.max(rel_err(
            &dk_hac_phi(&w, &u, &cfg).unwrap(),
            &dk_hac_phi_quadruple(&w, &u, &cfg).unwrap(),
        ));
    }
    let mut psd = true;
    for w in panels {
        let est = fe_estimate_freq(w).unwrap();
        let x_spec = freqpanel::spectral::dft_channels(&w.x_tilde).unwrap();
        let cluster = cluster_phi_freq(&x_spec, &est.residual_spectrum).unwrap();
        let hac = dk_hac_phi(
            w,
            &est.residuals_time,
            &HacConfig::new((w.periods() as f64).cbrt()).unwrap(),
        )
        .unwrap();
        psd &= is_psd(&cluster) && is_psd(&hac);
    }
    out.record(
        "6 Bartlett HAC fast form and PSD",
        worst <= 1e-9 && psd,
        format!(
            "max relative error {worst:.2e} over 20 panels (tol 1e-9); all estimates PSD: {psd}"
        ),
    );
}

/// Batch-means standard error of the upper 5% quantile.
fn quantile_se(draws: &[f64], batches: usize) -> f64 {
    let size = draws.len() / batches;
    let qs: Vec<f64> = draws
        .chunks(size)
        .take(batches)
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_by(|a, b| a.total_cmp(b));
            upper_quantile(&v, 0.05)
        })
        .collect();
    let mean = qs.iter().sum::<f64>() / qs.len() as f64;
    let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (qs.len() - 1) as f64;
    (var / qs.len() as f64).sqrt()
}

fn criterion_7(out: &mut Outcome) {
    let sim = FixedBSim::default();
    let small = fixed_b_critical_values(0.005, 1, &sim).unwrap();
    let t05 = small.t_cv_at(0.05).unwrap();
    let mut cvs = Vec::new();
    let mut ses = Vec::new();
    for b in [0.02, 0.1, 0.5] {
        let draws = simulate_fixed_b_statistics(b, 1, &sim).unwrap();
        let mut sorted = draws.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        cvs.push(upper_quantile(&sorted, 0.05));
        ses.push(quantile_se(&draws, 10));
    }
    let monotone =
        (0..2).all(|i| cvs[i + 1] - cvs[i] > 3.0 * (ses[i].powi(2) + ses[i + 1].powi(2)).sqrt());
    out.record(
        "7 fixed-b small-b limit and monotonicity",
        (t05 - 1.96).abs() <= 0.05 && monotone,
        format!(
            "5% t cv at b = 0.005: {t05:.4} (target 1.96 ± 0.05); Wald cvs at b = 0.02, 0.1, 0.5: {:.3}, {:.3}, {:.3} (s.e. {:.3}, {:.3}, {:.3})",
            cvs[0], cvs[1], cvs[2], ses[0], ses[1], ses[2]
        ),
    );
}

struct Target {
    n: usize,
    t: usize,
    method: Method,
    value: f64,
}

fn target(n: usize, t: usize, method: Method, value: f64) -> Target {
    Target {
        n,
        t,
        method,
        value,
    }
}

fn band(value: f64, reps: usize) -> f64 {
    (3.0 * (value * (1.0 - value) / reps as f64).sqrt()).max(0.025)
}

fn experiment(
    name: &str,
    seed: u64,
    grid: Vec<[usize; 2]>,
    dgp: DgpConfig,
    methods: Vec<Method>,
    reps: usize,
) -> Experiment {
    let mut e = Experiment::new(name, grid, dgp, methods);
    e.replications = reps;
    e.master_seed = seed;
    e
}

fn run(exp: &Experiment) -> McReport {
    let start = Instant::now();
    let rep = run_experiment(exp).expect("experiment runs");
    println!(
        "       ({}: {:.0}s)",
        exp.name,
        start.elapsed().as_secs_f64()
    );
    rep
}

/// Check every target of a criterion; returns (all within band, detail).
fn check_targets(report: &McReport, targets: &[Target]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for tg in targets {
        let row = report.row(tg.n, tg.t, tg.method).expect("row present");
        let b = band(tg.value, row.replications);
        let inside = (row.rate - tg.value).abs() <= b;
        ok &= inside;
        parts.push(format!(
            "({},{}) {} {:.3} vs {:.3}±{:.3}{}",
            tg.n,
            tg.t,
            tg.method,
            row.rate,
            tg.value,
            b,
            if inside { "" } else { " OUT" }
        ));
    }
    (ok, parts.join("; "))
}

fn criterion_8(out: &mut Outcome, reps: usize) {
    let dgp = DgpConfig::homogeneous(Spatial::Weak, 0.7);
    let small = run(&experiment(
        "weak rho=0.7 small",
        8,
        vec![[50, 16]],
        dgp.clone(),
        vec![Method::HsAsy, Method::HsNb],
        reps,
    ));
    let all = vec![
        Method::HsAsy,
        Method::HsNb,
        Method::HsWb,
        Method::DkAsy,
        Method::DkFixb,
        Method::DkMbb,
    ];
    let large = run(&experiment(
        "weak rho=0.7 large",
        8,
        vec![[100, 256]],
        dgp,
        all,
        reps,
    ));
    let (a, da) = check_targets(
        &small,
        &[
            target(50, 16, Method::HsAsy, 0.180),
            target(50, 16, Method::HsNb, 0.074),
        ],
    );
    let (b, db) = check_targets(
        &large,
        &[
            target(100, 256, Method::HsAsy, 0.058),
            target(100, 256, Method::HsNb, 0.050),
            target(100, 256, Method::HsWb, 0.063),
            target(100, 256, Method::DkAsy, 0.088),
            target(100, 256, Method::DkFixb, 0.074),
            target(100, 256, Method::DkMbb, 0.065),
        ],
    );
    out.record(
        "8 size, weak spatial, AR(1) 0.7",
        a && b,
        format!("{da}; {db}"),
    );
}

fn criterion_9(out: &mut Outcome, reps: usize) {
    let dgp = DgpConfig::homogeneous(Spatial::Strong, 0.9);
    let rep = run(&experiment(
        "strong rho=0.9",
        9,
        vec![[100, 64]],
        dgp,
        vec![Method::HsAsy, Method::HsNb],
        reps,
    ));
    let (ok, d) = check_targets(
        &rep,
        &[
            target(100, 64, Method::HsAsy, 0.174),
            target(100, 64, Method::HsNb, 0.069),
        ],
    );
    out.record("9 size, strong spatial, AR(1) 0.9", ok, d);
}

fn criterion_10(out: &mut Outcome, reps: usize) {
    let weak = DgpConfig::homogeneous(Spatial::Weak, 0.7).with_beta(vec![0.1]);
    let strong = DgpConfig::homogeneous(Spatial::Strong, 0.7).with_beta(vec![0.1]);
    let rw = run(&experiment(
        "power weak",
        10,
        vec![[50, 64]],
        weak,
        vec![Method::HsAsy, Method::HsNb],
        reps,
    ));
    let rs = run(&experiment(
        "power strong",
        10,
        vec![[50, 64]],
        strong,
        vec![Method::HsAsy],
        reps,
    ));
    let (a, da) = check_targets(
        &rw,
        &[
            target(50, 64, Method::HsAsy, 0.852),
            target(50, 64, Method::HsNb, 0.794),
        ],
    );
    let (b, db) = check_targets(&rs, &[target(50, 64, Method::HsAsy, 0.243)]);
    out.record(
        "10 power at beta = 0.1",
        a && b,
        format!("weak: {da}; strong: {db}"),
    );
}

fn criterion_11(out: &mut Outcome, reps: usize) {
    let ar1 = DgpConfig::heterogeneous(Spatial::Weak, ArmaFamily::MixedAr1);
    let arma = DgpConfig::heterogeneous(Spatial::Weak, ArmaFamily::MixedAr3Ma3);
    let r1 = run(&experiment(
        "mixed AR(1)",
        11,
        vec![[100, 64]],
        ar1,
        vec![Method::HsAsy, Method::HsNb, Method::DkAsy],
        reps,
    ));
    let r2 = run(&experiment(
        "mixed AR(3)/MA(3)",
        11,
        vec![[100, 256]],
        arma,
        vec![Method::HsAsy],
        reps,
    ));
    let (a, da) = check_targets(
        &r1,
        &[
            target(100, 64, Method::HsAsy, 0.101),
            target(100, 64, Method::HsNb, 0.055),
            target(100, 64, Method::DkAsy, 0.189),
        ],
    );
    let (b, db) = check_targets(&r2, &[target(100, 256, Method::HsAsy, 0.053)]);
    out.record(
        "11 size, heterogeneous time dependence",
        a && b,
        format!("{da}; {db}"),
    );
}

fn criterion_12(out: &mut Outcome, reps: usize) {
    let additive = DgpConfig::with_hetero(
        Spatial::Weak,
        0.7,
        HeteroConfig {
            form: RegressorForm::Additive,
            delta1: 0.5,
            delta2: 0.2,
            varrho_rho: 0.7,
        },
    );
    let multiplicative = DgpConfig::with_hetero(
        Spatial::Weak,
        0.7,
        HeteroConfig {
            form: RegressorForm::Multiplicative,
            delta1: 0.5,
            delta2: 0.5,
            varrho_rho: 0.7,
        },
    );
    let ra = run(&experiment(
        "additive hetero",
        12,
        vec![[100, 64]],
        additive,
        vec![Method::HsRobustAsy, Method::HsRobustNb],
        reps,
    ));
    let rm = run(&experiment(
        "multiplicative hetero",
        12,
        vec![[100, 256]],
        multiplicative,
        vec![Method::HsAsy, Method::HsRobustAsy],
        reps,
    ));
    let (a, da) = check_targets(
        &ra,
        &[
            target(100, 64, Method::HsRobustAsy, 0.089),
            target(100, 64, Method::HsRobustNb, 0.054),
        ],
    );
    let (b, db) = check_targets(
        &rm,
        &[
            target(100, 256, Method::HsAsy, 0.141),
            target(100, 256, Method::HsRobustAsy, 0.057),
        ],
    );
    let plain = rm.row(100, 256, Method::HsAsy).unwrap().rate;
    let robust = rm.row(100, 256, Method::HsRobustAsy).unwrap().rate;
    let ordered = plain > robust;
    let nominal = (robust - 0.05).abs() <= band(0.05, reps);
    let cv = ra
        .row(100, 64, Method::HsRobustAsy)
        .unwrap()
        .mean_scale_cv
        .unwrap_or(f64::NAN);
    out.record(
        "12 heteroskedastic designs",
        a && b && ordered && nominal,
        format!(
            "{da}; {db}; plain > robust: {ordered}; robust within the 0.05 band: {nominal}; mean scale CV (additive) {cv:.3}"
        ),
    );
}

fn main() {
    // `cargo test` passes harness flags such as --nocapture or a filter;
    // nothing here is filterable, so they are ignored.
    let reps: usize = std::env::var("FREQPANEL_ACCEPT_REPS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1000);
    let mut out = Outcome {
        passed: 0,
        failed: Vec::new(),
    };
    let start = Instant::now();
    let panels = property_panels();
    criterion_1_2(&mut out, &panels);
    criterion_3(&mut out);
    criterion_4(&mut out);
    criterion_5(&mut out);
    criterion_6(&mut out, &panels);
    criterion_7(&mut out);
    println!("Monte Carlo criteria with R = {reps}, B = 199");
    criterion_8(&mut out, reps);
    criterion_9(&mut out, reps);
    criterion_10(&mut out, reps);
    criterion_11(&mut out, reps);
    criterion_12(&mut out, reps);
    println!(
        "acceptance: {} passed, {} failed in {:.0}s",
        out.passed,
        out.failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !out.failed.is_empty() {
        println!("failed: {}", out.failed.join(", "));
        if std::env::var("FREQPANEL_ACCEPT_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
