//! Draw one panel from a spatial/temporal design and summarize it.
//!
//! cargo run --example simulate_dgp -- [strong]

use freqpanel::dgp::{simulate_panel, DgpConfig, ReplicationRngs, Spatial};
use freqpanel::rng::{seed_plan, StreamName};

fn main() -> freqpanel::Result<()> {
    let spatial = if std::env::args().any(|a| a == "strong") {
        Spatial::Strong
    } else {
        Spatial::Weak
    };
    let (n, t, seed) = (30, 128, 7);
    let cfg = DgpConfig::homogeneous(spatial, 0.7).with_beta(vec![0.5]);
    let spec = cfg.realize(n, t, &mut seed_plan(seed, 0, 0, StreamName::Design).rng())?;
    let sim = simulate_panel(
        &spec,
        ReplicationRngs {
            u: &mut seed_plan(seed, 0, 0, StreamName::UInnovations).rng(),
            x: &mut seed_plan(seed, 0, 0, StreamName::XInnovations).rng(),
            hetero: &mut seed_plan(seed, 0, 0, StreamName::Hetero).rng(),
        },
    )?;

    // average cross-sectional correlation of the errors as a dependence gauge
    let u = &sim.u;
    let mut corr = 0.0;
    let mut pairs = 0;
    for p in 0..n {
        for q in (p + 1)..n {
            let (a, b) = (u.row(p), u.row(q));
            let c = a.dot(&b) / (a.dot(&a) * b.dot(&b)).sqrt();
            corr += c;
            pairs += 1;
        }
    }
    let lag1: f64 = (0..n)
        .map(|p| {
            let r = u.row(p);
            let num: f64 = (1..t).map(|s| r[s] * r[s - 1]).sum();
            num / r.dot(&r)
        })
        .sum::<f64>()
        / n as f64;
    println!("design: {spatial:?} spatial, AR(1) 0.7, n = {n}, T = {t}");
    println!(
        "mean pairwise error correlation: {:.3}",
        corr / pairs as f64
    );
    println!("mean lag-1 autocorrelation:      {lag1:.3}");
    println!("first locations: {:?}", &spec.spatial_u.locations[..5]);
    Ok(())
}
