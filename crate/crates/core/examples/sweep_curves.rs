//! Runs a sweep config and prints the mean curves per `N`.
//!
//! ```bash
//! cargo run --release --example sweep_curves -- crates/core/configs/ntk_desk.json
//! ```

use glmalign::harness::{default_workers, run_sweep, summarize, ExperimentConfig};

fn main() -> glmalign::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/rf_desk.json").into());
    let config = ExperimentConfig::load(&path)?;
    for w in config.validate()? {
        eprintln!("warning: {w}");
    }
    let rows = run_sweep(&config, default_workers())?;
    let test = summarize(&rows, |r| r.test_acc);
    let attack = summarize(&rows, |r| r.attack_acc);
    let gamma = summarize(&rows, |r| r.gamma_mean);
    println!("{} α={:.2} activation={}", config.model, config.alpha(), config.activation);
    println!("{:>6} {:>14} {:>14} {:>8}", "N", "test", "attack", "F");
    for ((t, a), g) in test.iter().zip(&attack).zip(&gamma) {
        println!(
            "{:>6} {:>7.3}±{:<6.3} {:>7.3}±{:<6.3} {:>8.3}",
            t.n, t.mean, t.std_error, a.mean, a.std_error, g.mean
        );
    }
    Ok(())
}
