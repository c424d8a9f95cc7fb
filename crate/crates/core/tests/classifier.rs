mod common;

use common::*;
use mfi_pso::classifier::{self, train, ModelSpec, TrainConfig};
use mfi_pso::data::{synth_blobs, BlobParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobian_matches_central_differences(seed in any::<u64>(), k in prop::sample::select(vec![2usize, 3, 5])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, image) = random_case(&mut rng, k);
        let (probs, analytic) = model.logprob_jacobian_full(&image).unwrap();
        let numeric = fd_jacobian(&model, &image, 1e-5);
        for (a, f) in analytic.iter().zip(numeric.iter()) {
            prop_assert!((a - f).abs() <= 1e-6 * f.abs().max(1e-4), "{a} vs {f}");
        }
        prop_assert!((probs.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coordinate_jacobian_is_a_column_subset(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, image) = random_case(&mut rng, 3);
        let coords = random_coords(&mut rng, image.len(), image.len().min(5));
        let (_, full) = model.logprob_jacobian_full(&image).unwrap();
        let sub = model.logprob_jacobian(&image, &coords).unwrap();
        prop_assert_eq!(sub, full.select_columns(&coords));
    }

    #[test]
    fn probabilities_are_a_distribution(seed in any::<u64>(), k in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, image) = random_case(&mut rng, k);
        let probs = model.predict(&image).unwrap();
        prop_assert_eq!(probs.len(), k);
        prop_assert!(probs.as_slice().iter().all(|p| *p > 0.0 && *p < 1.0));
        let (y1, y2) = probs.top2();
        prop_assert!(y1 != y2 && probs.get(y1) >= probs.get(y2));
        prop_assert_eq!(y1, probs.argmax());
    }
}

#[test]
fn trained_model_survives_a_checkpoint_round_trip() {
    let data = synth_blobs(BlobParams { per_class: 30, seed: 4, ..BlobParams::default() }).unwrap();
    let model = train(&ModelSpec::default(), &data, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    classifier::save(&model, &path).unwrap();
    let back = classifier::load(&path).unwrap();
    assert_eq!(back, model);
    for image in &data.images {
        assert_eq!(back.predict(image).unwrap(), model.predict(image).unwrap());
    }
}

#[test]
fn reference_mlp_separates_blobs_for_five_seeds() {
    for seed in 0..5 {
        let data = synth_blobs(BlobParams { seed, ..BlobParams::default() }).unwrap();
        let model = train(&ModelSpec::default(), &data, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        let acc = classifier::accuracy(&model, &data).unwrap();
        assert!(acc >= 0.95, "seed {seed}: train accuracy {acc}");
    }
}
