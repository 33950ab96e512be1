use coopfuse::metrics::tp_errors;
use coopfuse::{
    evaluate, AgentId, BBox3D, Category, Detection, DiagCovariance7, FpPenalties, FusedObject,
    GtObject,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gt(i: usize) -> GtObject<f64> {
    GtObject {
        bbox: BBox3D::new(i as f64 * 30.0, 0.0, 0.8, 4.5, 1.9, 1.7, 0.0).unwrap(),
        category: Category::Car,
        gt_id: format!("o{i}").into(),
        timestamp: 0.0,
    }
}

fn pred(b: BBox3D<f64>, id: Option<String>) -> FusedObject<f64> {
    let mut d = Detection::new(
        b,
        DiagCovariance7::from_std_devs(0.5, 0.1, 0.1).unwrap(),
        Category::Car,
        AgentId(1),
        0.0,
        0.9,
    )
    .unwrap();
    d.gt_id = id.map(Into::into);
    FusedObject::singleton(&d, 0)
}

/// Predictions near each ground-truth box with errors below every penalty,
/// so an extra false positive can only pull the means up.
fn scene(n_gt: usize, dup: usize, seed: u64) -> (Vec<GtObject<f64>>, Vec<FusedObject<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gts: Vec<_> = (0..n_gt).map(gt).collect();
    let mut preds = Vec::new();
    for g in &gts {
        for _ in 0..1 + rng.random_range(0..=dup) {
            let b = g.bbox;
            preds.push(pred(
                BBox3D::new(
                    b.x + rng.random_range(-1.5..1.5),
                    b.y + rng.random_range(-1.5..1.5),
                    b.z + rng.random_range(-0.5..0.5),
                    b.l + rng.random_range(-0.3..0.3),
                    b.w + rng.random_range(-0.3..0.3),
                    b.h + rng.random_range(-0.3..0.3),
                    rng.random_range(-1.2..1.2),
                )
                .unwrap(),
                Some(g.gt_id.0.clone()),
            ));
        }
    }
    (gts, preds)
}

proptest! {
    #[test]
    fn extra_false_positive_never_helps(
        n_gt in 1usize..8,
        dup in 0usize..3,
        seed in any::<u64>(),
        orphan in any::<bool>(),
    ) {
        let pen = FpPenalties::new(3.0).unwrap();
        let (gts, mut preds) = scene(n_gt, dup, seed);
        let before = evaluate(&preds, &gts, pen).overall;
        // Either a box without provenance or a far duplicate of object 0.
        let extra = if orphan {
            pred(BBox3D::new(500.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap(), None)
        } else {
            let mut b = gts[0].bbox;
            b.x += 2.9;
            pred(b, Some("o0".to_owned()))
        };
        preds.push(extra);
        let after = evaluate(&preds, &gts, pen).overall;
        prop_assert_eq!(after.fp, before.fp + 1);
        prop_assert!(after.precision < before.precision);
        prop_assert!(after.mate.unwrap() >= before.mate.unwrap());
        prop_assert!(after.mase.unwrap() >= before.mase.unwrap());
        prop_assert!(after.maoe.unwrap() >= before.maoe.unwrap());
    }

    #[test]
    fn prediction_order_is_irrelevant(n_gt in 0usize..8, dup in 0usize..3, seed in any::<u64>()) {
        let pen = FpPenalties::new(3.0).unwrap();
        let (gts, preds) = scene(n_gt, dup, seed);
        let mut shuffled = preds.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let (a, b) = (evaluate(&preds, &gts, pen), evaluate(&shuffled, &gts, pen));
        prop_assert_eq!((a.overall.tp, a.overall.fp, a.overall.fn_), (b.overall.tp, b.overall.fp, b.overall.fn_));
        for (x, y) in [(a.overall.mate, b.overall.mate), (a.overall.mase, b.overall.mase), (a.overall.maoe, b.overall.maoe)] {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn yaw_error_in_range(a in -3.14159f64..3.14159, b in -3.14159f64..3.14159) {
        let g = GtObject { bbox: BBox3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, b).unwrap(), ..gt(0) };
        let p = pred(BBox3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, a).unwrap(), Some("o0".to_owned()));
        let (_, _, o) = tp_errors(&p, &g);
        prop_assert!((0.0..=180.0).contains(&o));
    }
}

#[test]
fn noiseless_gt_association_is_perfect() {
    use coopfuse::datagen::{make_pseudo_collab, PerturbOptions, Population};
    use coopfuse::{evaluate_stream, gt_assoc_fuse, Frame, NoiseConfig, SceneSpec};
    let spec = SceneSpec {
        scene_id: 1,
        n_frames: 6,
        frame_rate: 2.0,
        area: 160.0,
        min_separation: 8.0,
        population: Population::Random { count: 25 },
        start_time: 0.0,
    };
    let zero = NoiseConfig::custom(0.0, 0.0, 0.0).unwrap();
    let opts = PerturbOptions { delta_t: 0.0, ..Default::default() };
    let ds = make_pseudo_collab::<f64>(&spec, &[zero, zero], &opts, 3).unwrap();
    let mut preds = Vec::new();
    for k in 0..ds.gt.len() {
        let dets = ds.agents.iter().flat_map(|a| a.frames[k].iter().cloned());
        preds.extend(gt_assoc_fuse(&Frame::from_detections(ds.gt[k].timestamp, dets)).unwrap());
    }
    let m = evaluate_stream(&preds, &ds.gt, FpPenalties::new(3.0).unwrap()).overall;
    assert_eq!((m.precision, m.recall), (1.0, 1.0));
    assert!(m.mate.unwrap() < 1e-12 && m.mase.unwrap() < 1e-12 && m.maoe.unwrap() < 1e-9);
}
