use mfi_pso::data::{load_idx, load_image_dir, split, synth_blobs, write_idx, BlobParams, Dataset};
use mfi_pso::{Error, Image};
use proptest::prelude::*;

fn byte_dataset(bytes: &[u8], side: usize, labels: &[usize], classes: usize) -> Dataset {
    let p = side * side;
    let images = bytes
        .chunks(p)
        .map(|c| Image::new(c.iter().map(|&b| f64::from(b) / 255.0).collect(), side, side, 1).unwrap())
        .collect();
    Dataset::new("bytes", images, labels.to_vec(), classes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn idx_round_trip_preserves_bytes_and_labels(
        (side, n, bytes, labels) in (1usize..6, 1usize..8).prop_flat_map(|(side, n)| (
            Just(side),
            Just(n),
            prop::collection::vec(any::<u8>(), side * side * n),
            prop::collection::vec(0usize..4, n),
        ))
    ) {
        let data = byte_dataset(&bytes, side, &labels, 4);
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("images.idx"), dir.path().join("labels.idx"));
        write_idx(&data, &ip, &lp).unwrap();
        let back = load_idx(&ip, &lp, 4).unwrap();
        prop_assert_eq!(&back.labels, &labels);
        prop_assert_eq!(back.len(), n);
        for (a, b) in back.images.iter().zip(&data.images) {
            prop_assert_eq!(a.shape(), (side, side, 1));
            prop_assert_eq!(&a.pixels, &b.pixels);
        }
    }

    #[test]
    fn split_partitions_the_dataset(n in 1usize..40, fraction in 0.0f64..=1.0, seed in any::<u64>()) {
        let data = synth_blobs(BlobParams { num_classes: 2, per_class: n, side: 4, seed: 1, ..BlobParams::default() }).unwrap();
        let (train, val) = split(&data, fraction, seed).unwrap();
        prop_assert_eq!(val.len(), ((data.len() as f64) * fraction).round() as usize);
        prop_assert_eq!(train.len() + val.len(), data.len());
        let mut all: Vec<&Image> = train.images.iter().chain(&val.images).collect();
        all.sort_by(|a, b| a.pixels.partial_cmp(&b.pixels).unwrap());
        let mut orig: Vec<&Image> = data.images.iter().collect();
        orig.sort_by(|a, b| a.pixels.partial_cmp(&b.pixels).unwrap());
        prop_assert_eq!(all, orig);
        let again = split(&data, fraction, seed).unwrap();
        prop_assert_eq!(&again.0, &train);
    }
}

#[test]
fn synthetic_pixels_lie_in_the_unit_interval_and_are_seeded() {
    let params = BlobParams { seed: 11, per_class: 30, ..BlobParams::default() };
    let a = synth_blobs(params).unwrap();
    assert_eq!(a.len(), 30 * params.num_classes);
    assert!(a.images.iter().flat_map(|im| &im.pixels).all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(a, synth_blobs(params).unwrap());
    assert_ne!(a, synth_blobs(BlobParams { seed: 12, ..params }).unwrap());
    for k in 0..params.num_classes {
        assert_eq!(a.labels.iter().filter(|&&l| l == k).count(), 30);
    }
}

#[test]
fn truncated_idx_reports_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    let data = byte_dataset(&[1, 2, 3, 4, 5, 6, 7, 8], 2, &[0, 1], 2);
    let (ip, lp) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
    write_idx(&data, &ip, &lp).unwrap();
    let bytes = std::fs::read(&ip).unwrap();
    std::fs::write(&ip, &bytes[..bytes.len() - 3]).unwrap();
    match load_idx(&ip, &lp, 2).unwrap_err() {
        Error::Parse { offset, message } => {
            assert!(offset >= 16, "{offset}");
            assert!(message.contains("payload"), "{message}");
        }
        other => panic!("unexpected error {other}"),
    }
    std::fs::write(&ip, [0u8, 0, 8, 1]).unwrap();
    assert!(matches!(load_idx(&ip, &lp, 2), Err(Error::Parse { .. })));
    assert!(load_idx(&dir.path().join("missing.idx"), &lp, 2).is_err());
}

#[test]
fn image_directory_errors_are_itemized() {
    let dir = tempfile::tempdir().unwrap();
    for (name, px) in [("x.png", [0u8, 128]), ("y.png", [255, 64])] {
        ::image::GrayImage::from_raw(2, 1, px.to_vec()).unwrap().save(dir.path().join(name)).unwrap();
    }
    let csv = dir.path().join("labels.csv");
    std::fs::write(&csv, "filename,label\nx.png,0\ny.png,2\n").unwrap();
    let d = load_image_dir(dir.path(), &csv, 3).unwrap();
    assert_eq!(d.labels, vec![0, 2]);
    assert_eq!(d.images[1].pixels, vec![1.0, 64.0 / 255.0]);

    std::fs::write(dir.path().join("z.png"), b"garbage").unwrap();
    ::image::GrayImage::from_raw(1, 1, vec![9]).unwrap().save(dir.path().join("w.png")).unwrap();
    let err = load_image_dir(dir.path(), &csv, 3).unwrap_err().to_string();
    assert!(err.contains("w.png: no label row"), "{err}");
    assert!(err.contains("z.png"), "{err}");

    let mixed = tempfile::tempdir().unwrap();
    ::image::GrayImage::from_raw(2, 1, vec![0, 0]).unwrap().save(mixed.path().join("a.png")).unwrap();
    ::image::GrayImage::from_raw(1, 1, vec![0]).unwrap().save(mixed.path().join("b.png")).unwrap();
    let csv = mixed.path().join("labels.csv");
    std::fs::write(&csv, "filename,label\na.png,0\nb.png,1\n").unwrap();
    assert!(load_image_dir(mixed.path(), &csv, 2).unwrap_err().to_string().contains("shape"));
}

#[test]
fn dataset_validation_rejects_inconsistent_input() {
    let im = Image::new(vec![0.5; 4], 2, 2, 1).unwrap();
    assert!(Dataset::new("d", vec![im.clone()], vec![], 2).is_err());
    assert!(Dataset::new("d", vec![im.clone()], vec![2], 2).is_err());
    assert!(Dataset::new("d", vec![im.clone()], vec![0], 1).is_err());
    let d = Dataset::new("d", vec![im], vec![1], 2).unwrap();
    assert_eq!(d.images[0].label, Some(1));
    assert!(split(&d, 1.5, 0).is_err());
}
