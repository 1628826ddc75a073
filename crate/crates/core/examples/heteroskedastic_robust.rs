//! Plain versus heteroskedasticity-robust cluster inference under a
//! multiplicative scale design, with the estimated scales.
//!
//! cargo run --release --example heteroskedastic_robust

use freqpanel::dgp::{
    simulate_panel, DgpConfig, HeteroConfig, RegressorForm, ReplicationRngs, Spatial,
};
use freqpanel::hetero::HeteroScaleEstimates;
use freqpanel::inference::{Analysis, Fit, InferenceOptions, Method};
use freqpanel::rng::{seed_plan, StreamName};

fn main() -> freqpanel::Result<()> {
    let seed = 5;
    let hetero = HeteroConfig {
        form: RegressorForm::Multiplicative,
        delta1: 0.5,
        delta2: 0.5,
        varrho_rho: 0.7,
    };
    let cfg = DgpConfig::with_hetero(Spatial::Weak, 0.7, hetero);
    let spec = cfg.realize(
        80,
        128,
        &mut seed_plan(seed, 0, 0, StreamName::Design).rng(),
    )?;
    let sim = simulate_panel(
        &spec,
        ReplicationRngs {
            u: &mut seed_plan(seed, 0, 0, StreamName::UInnovations).rng(),
            x: &mut seed_plan(seed, 0, 0, StreamName::XInnovations).rng(),
            hetero: &mut seed_plan(seed, 0, 0, StreamName::Hetero).rng(),
        },
    )?;
    println!("true scale CV: {:.3}", sim.scale_cv.unwrap_or(0.0));

    let fit = Fit::new(sim.panel)?;
    let scales = HeteroScaleEstimates::from_residuals(&fit.estimate.residuals_time)?;
    let spread = |v: &[f64]| {
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        hi / lo
    };
    println!(
        "estimated scales: individual max/min {:.2}, period max/min {:.2}",
        spread(&scales.sigma1_p),
        spread(&scales.sigma2_t)
    );

    let opts = InferenceOptions::default();
    let mut analysis = Analysis::new(&fit, &opts)?;
    for m in [
        Method::HsAsy,
        Method::HsRobustAsy,
        Method::HsNb,
        Method::HsRobustNb,
    ] {
        let o = analysis.run(m)?;
        println!(
            "{:<14} se = {:.4}  W = {:7.3}  p = {:.4}",
            m.name(),
            o.std_errors[0],
            o.wald,
            o.pvalue.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
