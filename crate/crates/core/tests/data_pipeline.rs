//! Dataset layouts on disk, preprocessing invariants and batching.

mod common;

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vggfire::data::*;
use vggfire::Error;

fn png(rgb: [u8; 3]) -> Vec<u8> {
    RawImage::filled(5, 4, rgb).to_png().unwrap()
}

#[test]
fn binary_layout_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, n) in [("fire", 3), ("no_fire", 2)] {
        std::fs::create_dir_all(dir.path().join(sub)).unwrap();
        for i in 0..n {
            std::fs::write(
                dir.path().join(sub).join(format!("{i}.png")),
                png([i as u8, 0, 0]),
            )
            .unwrap();
        }
    }
    std::fs::write(dir.path().join("fire/notes.txt"), "not an image").unwrap();
    let ds = load_dataset(dir.path(), Layout::Binary).unwrap();
    assert_eq!(ds.counts(), ClassCounts { fire: 3, no_fire: 2 });
    let ids: Vec<&str> = ds.ids().collect();
    assert_eq!(
        ids,
        [
            "fire/0.png",
            "fire/1.png",
            "fire/2.png",
            "no_fire/0.png",
            "no_fire/1.png"
        ]
    );
}

#[test]
fn missing_or_empty_class_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("fire")).unwrap();
    std::fs::write(dir.path().join("fire/a.png"), png([1, 2, 3])).unwrap();
    let err = load_dataset(dir.path(), Layout::Binary).unwrap_err();
    assert!(
        matches!(&err, Error::Dataset(m) if m.contains("no_fire")),
        "{err}"
    );
    assert_eq!(err.exit_code(), 2);
    std::fs::create_dir_all(dir.path().join("no_fire")).unwrap();
    let err = load_dataset(dir.path(), Layout::Binary).unwrap_err();
    assert!(
        matches!(&err, Error::Dataset(m) if m.contains("no_fire") && m.contains("no images")),
        "{err}"
    );
}

#[test]
fn dfire4_layout_maps_categories() {
    let dir = tempfile::tempdir().unwrap();
    let layout = [
        ("fire_only", 2),
        ("smoke_only", 3),
        ("fire_and_smoke", 1),
        ("none", 4),
    ];
    for (sub, n) in layout {
        let nested = dir.path().join(sub).join("batch_a");
        std::fs::create_dir_all(&nested).unwrap();
        for i in 0..n {
            let ext = ["png", "PNG", "Png"][i % 3];
            std::fs::write(nested.join(format!("img{i}.{ext}")), png([9, 9, 9])).unwrap();
        }
    }
    let ds = load_dataset(dir.path(), Layout::Dfire4).unwrap();
    assert_eq!(ds.counts(), ClassCounts { fire: 6, no_fire: 4 });
    for s in ds.samples() {
        let cat = s.category.unwrap();
        assert!(s.id.starts_with(cat.dir_name()));
        assert_eq!(s.label, cat.label());
    }
    let sample = ds.samples()[0].load((224, 224)).unwrap();
    assert_eq!(sample.pixels.shape(), &[3, 224, 224]);
}

#[test]
fn truncated_file_is_skipped_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["fire", "no_fire"] {
        std::fs::create_dir_all(dir.path().join(sub)).unwrap();
        std::fs::write(dir.path().join(sub).join("ok.png"), png([200, 10, 10])).unwrap();
    }
    let full = png([1, 1, 1]);
    std::fs::write(dir.path().join("fire/cut.png"), &full[..full.len() / 2]).unwrap();
    let ds = load_dataset(dir.path(), Layout::Binary).unwrap();
    assert_eq!(ds.len(), 3);
    let opts = BatchOptions {
        batch_size: 8,
        image_size: (16, 16),
        ..Default::default()
    };
    let mut it = batch_iter(&ds, opts.clone()).unwrap();
    assert_eq!(it.next().unwrap().unwrap().len(), 2);
    assert_eq!(it.skipped(), 1);
    let strict = BatchOptions { strict: true, ..opts };
    let err = batch_iter(&ds, strict).unwrap().next().unwrap().unwrap_err();
    assert!(matches!(err, Error::Decode { ref id, .. } if id == "fire/cut.png"));
}

#[test]
fn hflip_single_channel_example() {
    let t = vggfire::Tensor::new(&[1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(hflip(&t).data(), &[2.0, 1.0, 4.0, 3.0]);
}

#[test]
fn pipeline_is_reproducible_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    common::write_binary_fixture(dir.path(), 6, 30, 20);
    let run = || {
        let ds = load_dataset(dir.path(), Layout::Binary).unwrap();
        let opts = BatchOptions {
            batch_size: 5,
            shuffle: true,
            seed: 12,
            epoch: 3,
            image_size: (32, 32),
            augment: Some(AugmentPolicy::default()),
            strict: true,
        };
        batch_iter(&ds, opts)
            .unwrap()
            .map(|b| {
                let b = b.unwrap();
                (b.ids, b.images.into_data())
            })
            .collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    let ids: HashSet<String> = a.iter().flat_map(|(ids, _)| ids.clone()).collect();
    assert_eq!(ids.len(), 12);
}

fn arb_image() -> impl Strategy<Value = RawImage> {
    (1usize..40, 1usize..40).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), 3 * w * h).prop_map(move |data| RawImage::new(w, h, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn preprocessing_lands_in_unit_cube(img in arb_image(), seed in any::<u64>()) {
        let t = preprocess(&img, (224, 224));
        prop_assert_eq!(t.shape(), &[3, 224, 224]);
        prop_assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let sample = Sample { id: "x".into(), label: Label::Fire, category: None, pixels: t };
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        let a = augment(&sample, &AugmentPolicy::default(), &mut r1);
        let b = augment(&sample, &AugmentPolicy::default(), &mut r2);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.label, Label::Fire);
        prop_assert_eq!(a.id.as_str(), "x");
        prop_assert!(a.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn split_partitions_and_keeps_ratio(n_fire in 1usize..60, n_none in 1usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let src = ImageSource::Raw(Arc::new(RawImage::filled(1, 1, [0, 0, 0])));
        let samples = (0..n_fire + n_none)
            .map(|i| SampleRef::new(format!("{i:04}"), if i < n_fire { Label::Fire } else { Label::NoFire }, src.clone()))
            .collect();
        let ds = Dataset::from_samples(samples).unwrap();
        let Ok((train, test)) = ds.split(frac, seed, true) else {
            return Ok(());
        };
        let a: HashSet<&str> = train.ids().collect();
        let b: HashSet<&str> = test.ids().collect();
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len() + b.len(), ds.len());
        let n_test = test.len() as f64;
        for (label, n) in [(Label::Fire, n_fire), (Label::NoFire, n_none)] {
            let expected = n as f64 * n_test / ds.len() as f64;
            prop_assert!((test.counts().get(label) as f64 - expected).abs() < 1.0 + 1e-9);
        }
        let (train2, _) = ds.split(frac, seed, true).unwrap();
        prop_assert_eq!(train2.ids().collect::<Vec<_>>(), train.ids().collect::<Vec<_>>());
    }

    #[test]
    fn batches_cover_dataset_once(n in 1usize..80, bs in 1usize..40, seed in any::<u64>(), epoch in 0u64..5) {
        let src = ImageSource::Raw(Arc::new(RawImage::filled(2, 2, [5, 5, 5])));
        let ds = Dataset::from_samples((0..n).map(|i| SampleRef::new(format!("{i:03}"), Label::NoFire, src.clone())).collect()).unwrap();
        let opts = BatchOptions { batch_size: bs, shuffle: true, seed, epoch, image_size: (2, 2), ..Default::default() };
        let batches: Vec<Batch> = batch_iter(&ds, opts).unwrap().map(|b| b.unwrap()).collect();
        prop_assert_eq!(batches.len(), n.div_ceil(bs));
        prop_assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == bs));
        let ids: HashSet<String> = batches.iter().flat_map(|b| b.ids.clone()).collect();
        prop_assert_eq!(ids.len(), n);
    }
}
