use augforge::augment::{apply_chain, AugmentationKind, ChainConfig, ChainKey};
use augforge::eval::{evaluate, iou, Detection, DetectionSet, GroundTruth, GtImage};
use augforge::imaging::{BBox, Image, Mask, Sample};
use augforge::search::{Category, CategoricalEstimator};
use proptest::prelude::*;

fn bbox(w: f64, h: f64) -> impl Strategy<Value = BBox> {
    (0.0..w - 2.0, 0.0..h - 2.0, 1.0..w, 1.0..h, 0u32..3).prop_map(move |(x, y, bw, bh, c)| {
        BBox::new(x, y, (x + bw).min(w).max(x + 1.0), (y + bh).min(h).max(y + 1.0), c).unwrap()
    })
}

fn sample() -> impl Strategy<Value = Sample> {
    (6usize..20, 6usize..20, any::<u64>()).prop_map(|(w, h, salt)| {
        let img = Image::from_fn(w, h, |x, y| {
            let v = (x as u64 * 31 + y as u64 * 17 + salt) % 97;
            [v as f32 / 96.0, (96 - v) as f32 / 96.0, ((v * 7) % 97) as f32 / 96.0]
        });
        let b = BBox::new(1.0, 1.0, (w / 2 + 1) as f64, (h / 2 + 1) as f64, 0).unwrap();
        Sample::new(format!("p{salt}"), img)
            .with_mask(Mask::from_boxes(w, h, &[b]))
            .with_boxes(vec![b])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chains_are_deterministic_and_bounded(s in sample(), kinds in proptest::sample::subsequence(AugmentationKind::ALL.to_vec(), 0..6), seed: u64, trial in 0u64..1000) {
        let kinds: Vec<_> = kinds.into_iter().filter(|k| *k != AugmentationKind::Background).collect();
        let cfg = ChainConfig::with_active(kinds);
        let key = ChainKey::new(seed, trial);
        let a = apply_chain(&cfg, &s, key).unwrap();
        let b = apply_chain(&cfg, &s, key).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(a.image.dims(), s.image.dims());
        for bx in &a.boxes {
            prop_assert!(bx.is_valid() && bx.x_max <= s.image.width() as f64 && bx.y_max <= s.image.height() as f64);
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(100.0, 80.0), b in bbox(100.0, 80.0)) {
        let (x, y) = (iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimators_are_distributions(active in 0usize..500, inactive in 0usize..500, prior in 0.01f64..10.0) {
        let e = CategoricalEstimator::from_counts(active, inactive, prior);
        prop_assert!((e.prob(Category::Active) + e.prob(Category::Inactive) - 1.0).abs() < 1e-12);
        prop_assert!(e.prob(Category::Active) > 0.0 && e.prob(Category::Inactive) > 0.0);
    }

    #[test]
    fn metrics_are_bounded(gt_boxes in proptest::collection::vec(bbox(64.0, 48.0), 1..8), dets in proptest::collection::vec((bbox(64.0, 48.0), 0.0f64..1.0), 0..12)) {
        let mut gt_boxes = gt_boxes;
        // every detected class needs ground truth
        for c in 0..3 {
            gt_boxes.push(BBox::new(0.0, 0.0, 4.0, 4.0, c).unwrap());
        }
        let gt = GroundTruth { images: vec![GtImage { id: "i".into(), width: 64, height: 48, subset: Some("t".into()), boxes: gt_boxes }] };
        let det = DetectionSet { detections: dets.into_iter().map(|(bbox, score)| Detection { image_id: "i".into(), bbox, score }).collect() };
        let r = evaluate(&gt, &det).unwrap();
        for v in [r.map, r.map50, r.map75, r.mean_iou, r.subset_map["t"]] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
        prop_assert!(r.map50 >= r.map75);
    }
}
