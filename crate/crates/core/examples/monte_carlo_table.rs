//! Empirical size of every method on one design cell.
//!
//! cargo run --release --example monte_carlo_table -- [n] [T] [R]

use std::time::Instant;

use freqpanel::dgp::{DgpConfig, Spatial};
use freqpanel::harness::{run_experiment, Experiment};
use freqpanel::inference::Method;

fn main() -> freqpanel::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let n = args.first().copied().unwrap_or(50);
    let t = args.get(1).copied().unwrap_or(64);
    let reps = args.get(2).copied().unwrap_or(20);

    let mut exp = Experiment::new(
        "weak spatial, AR(1) 0.7",
        vec![[n, t]],
        DgpConfig::homogeneous(Spatial::Weak, 0.7),
        vec![
            Method::HsAsy,
            Method::HsNb,
            Method::HsWb,
            Method::DkAsy,
            Method::DkFixb,
            Method::DkMbb,
        ],
    );
    exp.replications = reps;

    let start = Instant::now();
    let report = run_experiment(&exp)?;
    print!("{}", report.to_text());
    println!("wall time {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
