//! Smallest kernel eigenvalue over its natural scale, `k` for RF and `k·d`
//! for NTK, as `N` grows.

use glmalign::data::{generate_synthetic, TeacherVector};
use glmalign::featuremaps::{kernel_gram, sample_map, ModelKind};
use glmalign::hermite::ActivationSpec;
use glmalign::linops::eigen_extremes;

fn main() -> glmalign::Result<()> {
    let d = 200;
    let act = ActivationSpec::relu();
    for (kind, k) in [(ModelKind::Rf, 2000), (ModelKind::Ntk, 32)] {
        for n in [50, 100, 200, 400] {
            let map = sample_map(kind, k, d, &act, 1)?;
            let data = generate_synthetic(n, d / 2, d / 2, &TeacherVector::sample(d / 2, 2), 3)?;
            let (lo, hi) = eigen_extremes(&kernel_gram(&map.embed(data.z())?))?;
            let scale = map.kernel_scale();
            println!("{kind:<3} N={n:<4} λ_min/scale {:.4}  λ_max/scale {:.3}", lo / scale, hi / scale);
        }
    }
    Ok(())
}
