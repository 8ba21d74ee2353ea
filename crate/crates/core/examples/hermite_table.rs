//! Hermite coefficients of the built-in activations and the alignment
//! constants they imply.
//!
//! ```bash
//! cargo run --release --example hermite_table
//! ```

use glmalign::hermite::{
    gamma_ntk_closed_form, gamma_rf_lower_bound, hermite_coefficients, series_tail_bound, ActivationSpec,
    DEFAULT_ORDER,
};

fn main() -> glmalign::Result<()> {
    let names = ["relu", "tanh", "phi2", "phi4", "ntk-phi2", "ntk-phi4"];
    println!("{:<9} {:>9} {:>9} {:>9} {:>9} {:>9}", "name", "mu_0", "mu_1", "mu_2", "mu_3", "mu_4");
    for name in names {
        let spec = hermite_coefficients(&ActivationSpec::named(name)?, DEFAULT_ORDER)?;
        let mu: Vec<String> = (0..5).map(|l| format!("{:>9.5}", spec.coefficient(l))).collect();
        println!("{name:<9} {}", mu.join(" "));
    }

    println!("\nalignment constants");
    println!("{:<9} {:>6} {:>12} {:>12} {:>10}", "name", "alpha", "rf lower", "ntk closed", "tail");
    for name in names {
        let act = ActivationSpec::named(name)?;
        let spec = hermite_coefficients(&act, DEFAULT_ORDER)?;
        let deriv = act.derivative().map(|d| hermite_coefficients(&d, DEFAULT_ORDER)).transpose()?;
        for alpha in [0.25, 0.5, 0.75] {
            let rf = gamma_rf_lower_bound(&spec, alpha).map_or("-".to_string(), |g| format!("{g:.5}"));
            let ntk = deriv
                .as_ref()
                .and_then(|d| gamma_ntk_closed_form(d, alpha).ok())
                .map_or("-".to_string(), |g| format!("{g:.5}"));
            println!("{name:<9} {alpha:>6} {rf:>12} {ntk:>12} {:>10.2e}", series_tail_bound(&spec, alpha));
        }
    }
    Ok(())
}
