//! Writing and reading datasets in the binary matrix format with a
//! key=value metadata sidecar.

use glmalign::data::{generate_synthetic, load_dataset, save_dataset, DatasetMetadata, TeacherVector};

fn main() -> glmalign::Result<()> {
    let dir = std::env::temp_dir().join("glmalign-example");
    std::fs::create_dir_all(&dir)?;
    let stem = dir.join("train");

    let data = generate_synthetic(64, 10, 6, &TeacherVector::sample(10, 1), 2)?;
    let mut meta = DatasetMetadata {
        n: data.len(),
        d_x: data.d_x(),
        d_y: data.d_y(),
        seed: 2,
        label_mode: data.labels().mode_name().into(),
        frame_width: None,
        extra: Default::default(),
    };
    meta.extra.insert("teacher_seed".into(), "1".into());
    save_dataset(&stem, &data, &meta)?;

    let (back, meta_back) = load_dataset(&stem)?;
    println!("{}", meta_back.to_text());
    println!("bit-exact round trip: {}", back.z() == data.z() && back.targets() == data.targets());
    Ok(())
}
