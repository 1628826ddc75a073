//! Naive and wild bootstrap in the frequency domain.
//!
//! cargo run --release --example frequency_bootstrap -- [B]

use freqpanel::bootstrap::{
    bootstrap_pvalue, run_bootstrap, BootstrapConfig, BootstrapContext, Scheme, WildMultiplier,
};
use freqpanel::cluster::{cluster_covariance, wald_test};
use freqpanel::dgp::{simulate_panel, DgpConfig, ReplicationRngs, Spatial};
use freqpanel::estimators::{fe_estimate_with_design, FrequencyDesign};
use freqpanel::panel::within_transform;
use freqpanel::rng::{seed_plan, StreamName};
use nalgebra::DVector;

fn main() -> freqpanel::Result<()> {
    let reps: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(499);
    let seed = 11;
    let cfg = DgpConfig::homogeneous(Spatial::Weak, 0.9);
    let spec = cfg.realize(40, 32, &mut seed_plan(seed, 0, 0, StreamName::Design).rng())?;
    let sim = simulate_panel(
        &spec,
        ReplicationRngs {
            u: &mut seed_plan(seed, 0, 0, StreamName::UInnovations).rng(),
            x: &mut seed_plan(seed, 0, 0, StreamName::XInnovations).rng(),
            hetero: &mut seed_plan(seed, 0, 0, StreamName::Hetero).rng(),
        },
    )?;

    let w = within_transform(&sim.panel)?;
    let design = FrequencyDesign::from_within(&w)?;
    let est = fe_estimate_with_design(&design, &w)?;
    let cov = cluster_covariance(&design.x_spec, &est)?;
    let test = wald_test(&est, &cov, &DVector::zeros(1))?;
    println!(
        "observed W = {:.3}, asymptotic p = {:.4}",
        test.wald, test.pvalue_asymptotic
    );

    let ctx = BootstrapContext::new(&design, &est)?;
    for (label, scheme, mult) in [
        ("naive", Scheme::Naive, WildMultiplier::Gaussian),
        ("wild (Gaussian)", Scheme::Wild, WildMultiplier::Gaussian),
        (
            "wild (Rademacher)",
            Scheme::Wild,
            WildMultiplier::Rademacher,
        ),
    ] {
        let mut bc = BootstrapConfig::new(scheme, reps, seed);
        bc.wild_multiplier = mult;
        let dist = run_bootstrap(&ctx, &bc)?;
        println!(
            "{label:<18} p = {:.4}  ({} draws, {} degenerate)",
            bootstrap_pvalue(test.wald, &dist)?,
            dist.reps,
            dist.degenerate
        );
    }
    Ok(())
}
