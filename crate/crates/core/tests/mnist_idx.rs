use ukan_core::tasks::{load_mnist_idx, write_idx_images, write_idx_labels, Split, TaskError, Targets};
use ukan_core::Tensor;

#[test]
fn synthetic_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let n = 5;
    let pixels: Vec<f64> = (0..n * 784).map(|i| ((i * 37) % 256) as f64).collect();
    let images = Tensor::new(vec![n, 784], pixels).unwrap();
    let labels = vec![3, 1, 4, 1, 5];
    let img_path = dir.path().join("images.idx");
    let lbl_path = dir.path().join("labels.idx");
    std::fs::write(&img_path, write_idx_images(&images, 28, 28).unwrap()).unwrap();
    std::fs::write(&lbl_path, write_idx_labels(&labels).unwrap()).unwrap();

    let ds = load_mnist_idx(&img_path, &lbl_path, Split::Train).unwrap();
    assert_eq!(ds.inputs.shape(), &[5, 784]);
    assert!(ds.inputs.values().iter().zip(images.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(ds.targets, Targets::Classes(labels));
}

#[test]
fn count_mismatch_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = dir.path().join("images.idx");
    let lbl_path = dir.path().join("labels.idx");
    std::fs::write(&img_path, write_idx_images(&Tensor::zeros(vec![2, 4]), 2, 2).unwrap()).unwrap();
    std::fs::write(&lbl_path, write_idx_labels(&[0, 1, 2]).unwrap()).unwrap();
    let err = load_mnist_idx(&img_path, &lbl_path, Split::Train).unwrap_err();
    assert!(matches!(err, TaskError::Format { .. }));
}
