//! Random-feature alignment against its Hermite lower bound, with the
//! centering and linearization diagnostics for one draw.

use glmalign::alignment::{alignment_decomposition, draw_pair, GammaExperiment};
use glmalign::featuremaps::ModelKind;
use glmalign::hermite::ActivationSpec;

fn main() -> glmalign::Result<()> {
    for name in ["phi2", "phi4", "relu"] {
        let exp = GammaExperiment {
            kind: ModelKind::Rf,
            activation: ActivationSpec::named(name)?,
            k: 1500,
            d_x: 100,
            d_y: 100,
            n_rest: 199,
            trials: 40,
            seed: 3,
        };
        let ctx = exp.build_context()?;
        let est = glmalign::alignment::estimate_gamma(&ctx, exp.d_x, exp.trials, 17)?;
        println!("{name:<5} F = {:.4} ± {:.4}, bounds {}", est.mean, est.std, est.reference);

        let (z1, zm) = draw_pair(exp.d_x, exp.d_y, 99);
        let dec = alignment_decomposition(&ctx, &z1, &zm)?;
        println!(
            "      raw {:.4}  centered {:.4}  linearized {:.4}  unprojected {:.4}  ‖Pφ̃₁‖²/‖φ̃₁‖² {:.4}",
            dec.raw,
            dec.centered,
            dec.linearized.unwrap_or(f64::NAN),
            dec.unprojected,
            dec.residual_noise_ratio
        );
    }
    Ok(())
}
