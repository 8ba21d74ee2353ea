//! Alignment between a masked sample and its original under the NTK map,
//! compared with the closed form `α Σ_{l≥1} μ'_l² αˡ / Σ_{l≥1} μ'_l²`.
//!
//! The estimate carries a finite-`N` bias that shrinks as `N` grows past `d`.
//!
//! ```bash
//! cargo run --release --example gamma_ntk -- 256 64
//! ```

use glmalign::alignment::{compare_gamma_theory, GammaExperiment};
use glmalign::featuremaps::ModelKind;
use glmalign::hermite::ActivationSpec;

fn main() -> glmalign::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let d = args.first().copied().unwrap_or(128);
    let k = args.get(1).copied().unwrap_or(32);

    for name in ["ntk-phi2", "ntk-phi4"] {
        for d_y in [d / 4, d / 2] {
            for n in [d + d / 4, 2 * d, 4 * d] {
                let exp = GammaExperiment {
                    kind: ModelKind::Ntk,
                    activation: ActivationSpec::named(name)?,
                    k,
                    d_x: d - d_y,
                    d_y,
                    n_rest: n - 1,
                    trials: 30,
                    seed: 11,
                };
                let est = exp.run()?;
                let verdict = compare_gamma_theory(&est, 0.05);
                println!(
                    "{name:<9} α={:.2} N={n:<5} F = {:.4} ± {:.4}  reference {}  {}",
                    est.alpha,
                    est.mean,
                    est.std,
                    est.reference,
                    if verdict.pass() { "within" } else { "outside" }
                );
            }
        }
    }
    Ok(())
}
