//! Write a panel to long-format CSV, read it back and run the default
//! set of tests against a nonzero null.
//!
//! cargo run --release --example estimate_from_csv -- [path.csv]

use freqpanel::dgp::{simulate_panel, DgpConfig, ReplicationRngs, Spatial};
use freqpanel::fixedb::{FixedBCache, FixedBSim};
use freqpanel::inference::{estimate_panel, InferenceOptions, Method};
use freqpanel::io::{ingest_csv, save_panel_csv};
use freqpanel::rng::{seed_plan, StreamName};

fn main() -> freqpanel::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let seed = 21;
            let cfg = DgpConfig::homogeneous(Spatial::Weak, 0.5).with_beta(vec![1.0, -0.5]);
            let spec = cfg.realize(25, 40, &mut seed_plan(seed, 0, 0, StreamName::Design).rng())?;
            let sim = simulate_panel(
                &spec,
                ReplicationRngs {
                    u: &mut seed_plan(seed, 0, 0, StreamName::UInnovations).rng(),
                    x: &mut seed_plan(seed, 0, 0, StreamName::XInnovations).rng(),
                    hetero: &mut seed_plan(seed, 0, 0, StreamName::Hetero).rng(),
                },
            )?;
            let p = std::env::temp_dir().join("freqpanel_example_panel.csv");
            save_panel_csv(&sim.panel, &p)?;
            println!("wrote {}", p.display());
            p
        }
    };

    let panel = ingest_csv(&path)?;
    let opts = InferenceOptions {
        beta0: Some(vec![1.0, -0.5]),
        ..InferenceOptions::default()
    };
    let methods = [Method::HsNb, Method::HsWb, Method::DkAsy];
    let result = estimate_panel(
        panel,
        &methods,
        &opts,
        &mut FixedBCache::in_memory(),
        &FixedBSim::default(),
    )?;
    print!("{}", result.render_text());
    Ok(())
}
