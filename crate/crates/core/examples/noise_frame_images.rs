//! Image pipeline: a noise frame around each image becomes the `y` block the
//! attacker keeps, the image itself is the `x` block. Images are parsed from
//! an in-memory IDX file here; `load_idx` reads real MNIST files the same way.

use glmalign::attack::{attack_instance, build_query_batch};
use glmalign::data::{parse_idx, IdxData, ImagePipeline, Labels, MaskStrategy, Readout};
use glmalign::featuremaps::{sample_map, ModelKind};
use glmalign::hermite::ActivationSpec;
use glmalign::trainer::InitPolicy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Blobs whose position depends on the class, as an IDX byte stream.
fn synthetic_idx(count: usize, side: usize, rng: &mut ChaCha20Rng) -> (Vec<u8>, Vec<u8>) {
    let mut images = vec![0, 0, 8, 3];
    for v in [count, side, side] {
        images.extend_from_slice(&(v as u32).to_be_bytes());
    }
    let mut labels = vec![0, 0, 8, 1];
    labels.extend_from_slice(&(count as u32).to_be_bytes());
    for _ in 0..count {
        let class: u8 = rng.random_range(0..2);
        labels.push(class);
        let cx = if class == 0 { side / 4 } else { 3 * side / 4 };
        for r in 0..side {
            for c in 0..side {
                let dist = (r as f64 - side as f64 / 2.0).powi(2) + (c as f64 - cx as f64).powi(2);
                let v = 255.0 * (-dist / 8.0).exp() + rng.random_range(0.0..40.0);
                images.push(v.min(255.0) as u8);
            }
        }
    }
    (images, labels)
}

fn main() -> glmalign::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (img_bytes, label_bytes) = synthetic_idx(300, 12, &mut rng);
    let IdxData::Images(set) = parse_idx(&img_bytes)? else { unreachable!() };
    let IdxData::Labels(classes) = parse_idx(&label_bytes)? else { unreachable!() };
    let images = set.images();

    let (train_imgs, test_imgs) = images.split_at(200);
    let train_labels = Labels::binary_from(&classes[..200], |c| c == 1);
    let test_labels = Labels::binary_from(&classes[200..], |c| c == 1);

    for frame in [2, 4, 8] {
        let (pipeline, train, residual) = ImagePipeline::fit(train_imgs, train_labels.clone(), frame, 7)?;
        let (test, _) = pipeline.transform(test_imgs, test_labels.clone(), 8)?;
        let map = sample_map(ModelKind::Rf, 3000, train.d(), &ActivationSpec::relu(), 3)?;
        let (_, report) = attack_instance(&map, &train, &test, MaskStrategy::Zero, Readout::Sign, InitPolicy::Zero)?;
        println!(
            "frame {frame}: d_x={} d_y={} α={:.2} test {:.3} attack {:.3} (queries: {}, norm deviation {:.3})",
            train.d_x(),
            train.d_y(),
            train.alpha(),
            report.test_accuracy.unwrap_or(f64::NAN),
            report.attack_accuracy,
            build_query_batch(&train, MaskStrategy::Zero).len(),
            residual.pre_scale_norm_deviation
        );
    }
    Ok(())
}
