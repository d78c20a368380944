//! Loading images in the IDX format used by MNIST-style datasets.

use pgla::harness::{encode_idx_images, encode_idx_labels, load_idx_dataset, write_atomic};

pub fn run_example() -> pgla::Result<()> {
    let dir = tempfile::tempdir()?;
    let images: Vec<Vec<f32>> = (0..5)
        .map(|i| (0..36).map(|p| ((p * 7 + i * 13) % 256) as f32 / 255.0).collect())
        .collect();
    let labels = [3u8, 1, 4, 1, 5];
    let (img_path, lab_path) = (dir.path().join("images.idx"), dir.path().join("labels.idx"));
    write_atomic(&img_path, &encode_idx_images(6, 6, &images))?;
    write_atomic(&lab_path, &encode_idx_labels(&labels))?;

    let data = load_idx_dataset(&img_path, &lab_path, 10, Some(4))?;
    println!("{} samples of shape {:?}", data.len(), data.input_shape());
    for (x, y) in data.samples() {
        let mean = x.data().iter().sum::<f32>() / x.len() as f32;
        println!("label {y}, mean pixel {mean:.3}");
    }
    assert_eq!(data.len(), 4);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
