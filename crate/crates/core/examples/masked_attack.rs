//! The masked-query attack on one synthetic instance: train on `[x, y]`
//! with labels `sign(uᵀx)`, then query with the informative block replaced.

use glmalign::attack::{attack_instance, chance_level};
use glmalign::data::{generate_synthetic, MaskStrategy, Readout, TeacherVector};
use glmalign::featuremaps::{sample_map, ModelKind};
use glmalign::harness::derive_seed;
use glmalign::hermite::ActivationSpec;
use glmalign::trainer::InitPolicy;

fn main() -> glmalign::Result<()> {
    let (d_x, d_y, k) = (100, 100, 2000);
    let seed = 5;
    let map = sample_map(ModelKind::Rf, k, d_x + d_y, &ActivationSpec::relu(), derive_seed(seed, &[0]))?;
    let teacher = TeacherVector::sample(d_x, derive_seed(seed, &[1]));
    let test = generate_synthetic(1000, d_x, d_y, &teacher, derive_seed(seed, &[3]))?;

    println!("{:>5} {:>9} {:>9} {:>9} {:>9}", "N", "mask", "test", "attack", "mean F");
    for n in [50, 200, 800] {
        let train = generate_synthetic(n, d_x, d_y, &teacher, derive_seed(seed, &[2, n as u64]))?;
        for strategy in [MaskStrategy::Zero, MaskStrategy::Resample { seed: derive_seed(seed, &[4]) }] {
            let (_, report) = attack_instance(&map, &train, &test, strategy, Readout::Sign, InitPolicy::Zero)?;
            println!(
                "{n:>5} {:>9} {:>9.3} {:>9.3} {:>9.3}",
                strategy.to_string(),
                report.test_accuracy.unwrap_or(f64::NAN),
                report.attack_accuracy,
                report.diagnostic.gamma_mean
            );
        }
    }
    let chance = chance_level(test.labels());
    println!("chance level {chance}");
    Ok(())
}
