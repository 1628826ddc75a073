//! The within estimator computed in the time domain and from discrete
//! Fourier transforms agree to rounding error.
//!
//! cargo run --example within_and_dft

use freqpanel::estimators::{fe_estimate_freq, fe_estimate_time};
use freqpanel::panel::{within_transform, PanelData};
use ndarray::Array2;

fn main() -> freqpanel::Result<()> {
    let (n, t) = (8, 24);
    // deterministic toy panel with individual and period effects
    let x = Array2::from_shape_fn((n, t), |(p, s)| {
        ((p * 7 + s * 3) % 11) as f64 + 0.1 * s as f64
    });
    let y = Array2::from_shape_fn((n, t), |(p, s)| {
        2.0 * x[(p, s)] + p as f64 - 0.5 * s as f64 + ((p + s) % 3) as f64 * 0.2
    });
    let panel = PanelData::with_names(y, vec![x], vec!["x".into()])?;
    let w = within_transform(&panel)?;

    let time = fe_estimate_time(&w)?;
    let freq = fe_estimate_freq(&w)?;
    println!("beta (time):      {:.12}", time.beta[0]);
    println!("beta (frequency): {:.12}", freq.beta[0]);
    println!(
        "difference:       {:.2e}",
        (time.beta[0] - freq.beta[0]).abs()
    );

    let spec = &freq.residual_spectrum;
    println!("residual periodogram of unit 0 at the first frequencies:");
    for (j, v) in spec.periodogram(0, 0).iter().take(4).enumerate() {
        println!("  lambda = {:.4}  I = {v:.5}", spec.frequency(j + 1));
    }
    Ok(())
}
