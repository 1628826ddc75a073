//! Driscoll-Kraay HAC inference with the plug-in bandwidth, fixed-b
//! critical values and the moving-block bootstrap, next to the cluster
//! test.
//!
//! cargo run --release --example hac_comparators

use freqpanel::dgp::{simulate_panel, DgpConfig, ReplicationRngs, Spatial};
use freqpanel::fixedb::{fixed_b_critical_values, FixedBSim};
use freqpanel::inference::{resolve_fixed_b, Analysis, Fit, InferenceOptions, Method};
use freqpanel::rng::{seed_plan, StreamName};

fn main() -> freqpanel::Result<()> {
    let seed = 9;
    let cfg = DgpConfig::homogeneous(Spatial::Weak, 0.7);
    let spec = cfg.realize(
        50,
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
    let fit = Fit::new(sim.panel)?;
    let opts = InferenceOptions::default();
    let mut analysis = Analysis::new(&fit, &opts)?;

    for m in [Method::HsAsy, Method::DkAsy, Method::DkMbb] {
        let o = analysis.run(m)?;
        print!(
            "{:<8} W = {:7.3}  p = {:.4}",
            m.name(),
            o.wald,
            o.pvalue.unwrap_or(f64::NAN)
        );
        if let Some(lag) = o.bandwidth {
            print!("  lag = {lag}");
        }
        if let Some(l) = o.block_length {
            print!("  block = {l}");
        }
        println!();
    }

    // a smaller simulation than the default keeps the example quick
    let mut fixb = analysis.run(Method::DkFixb)?;
    let b = fixb.b.expect("fixed-b reports b");
    let sim = FixedBSim {
        reps: 5_000,
        ..FixedBSim::default()
    };
    let table = fixed_b_critical_values(b, fit.k(), &sim)?;
    resolve_fixed_b(&mut fixb, &table, opts.level, &fit.estimate.beta)?;
    println!(
        "dk-fixb  W = {:7.3}  b = {b:.4}  5% cv = {:.3} (chi-square 3.841)  reject = {}",
        fixb.wald,
        fixb.critical_value.unwrap_or(f64::NAN),
        fixb.reject.unwrap_or(false)
    );
    Ok(())
}
