//! Cluster covariance and Wald test for a simulated panel, with the
//! covariance computed both from Fourier coefficients and in the time
//! domain.
//!
//! cargo run --example cluster_inference

use freqpanel::cluster::{
    chi_square_critical_value, cluster_covariance, cluster_phi_time, wald_test,
};
use freqpanel::dgp::{simulate_panel, DgpConfig, ReplicationRngs, Spatial};
use freqpanel::estimators::fe_estimate_freq;
use freqpanel::panel::within_transform;
use freqpanel::rng::{seed_plan, StreamName};
use freqpanel::spectral::dft_channels;
use nalgebra::DVector;

fn main() -> freqpanel::Result<()> {
    let seed = 3;
    let cfg = DgpConfig::homogeneous(Spatial::Weak, 0.7).with_beta(vec![0.2, 0.0]);
    let spec = cfg.realize(60, 96, &mut seed_plan(seed, 0, 0, StreamName::Design).rng())?;
    let sim = simulate_panel(
        &spec,
        ReplicationRngs {
            u: &mut seed_plan(seed, 0, 0, StreamName::UInnovations).rng(),
            x: &mut seed_plan(seed, 0, 0, StreamName::XInnovations).rng(),
            hetero: &mut seed_plan(seed, 0, 0, StreamName::Hetero).rng(),
        },
    )?;

    let w = within_transform(&sim.panel)?;
    let est = fe_estimate_freq(&w)?;
    let x_spec = dft_channels(&w.x_tilde)?;
    let cov = cluster_covariance(&x_spec, &est)?;
    let time_phi = cluster_phi_time(&w, &est.residuals_time)?;
    let se = cov.standard_errors(w.n(), w.periods());

    for (c, name) in est.regressor_names.iter().enumerate() {
        println!("{name}: beta = {:+.4}  se = {:.4}", est.beta[c], se[c]);
    }
    println!(
        "max |Phi(freq) - Phi(time)| = {:.2e}",
        (&cov.phi - &time_phi).amax()
    );

    let test = wald_test(&est, &cov, &DVector::zeros(2))?;
    println!(
        "joint test beta = 0: W = {:.3}, df = {}, p = {:.4}, 5% cv = {:.3}",
        test.wald,
        test.df,
        test.pvalue_asymptotic,
        chi_square_critical_value(test.df, 0.05)
    );
    Ok(())
}
