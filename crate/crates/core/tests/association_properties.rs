use coopfuse::association::cost_matrix;
use coopfuse::datagen::{generate_gt, Population, SceneSpec};
use coopfuse::{
    associate_pairwise, center_score, dimension_score, fuse_frame, gt_assoc_fuse,
    orientation_score, pair_cost, AgentId, BBox3D, Category, CsbaParams, Detection,
    DiagCovariance7, Frame,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn det_strategy() -> impl Strategy<Value = Detection<f64>> {
    (
        prop::array::uniform3(-10.0f64..10.0),
        prop::array::uniform3(0.2f64..8.0),
        -3.14f64..3.14,
        prop::array::uniform7(1e-3f64..5.0),
        prop::sample::select(vec![Category::Car, Category::Pedestrian]),
    )
        .prop_map(|(p, s, theta, vars, cat)| {
            Detection::new(
                BBox3D::new(p[0], p[1], p[2], s[0], s[1], s[2], theta).unwrap(),
                DiagCovariance7::new(vars).unwrap(),
                cat,
                AgentId(1),
                0.0,
                0.5,
            )
            .unwrap()
        })
}

fn params() -> CsbaParams<f64> {
    CsbaParams::for_position_std(0.5).unwrap()
}

proptest! {
    #[test]
    fn scores_in_range(a in det_strategy(), b in det_strategy(), lambda in 0.1f64..20.0) {
        let ds = dimension_score(&a, &b).unwrap();
        prop_assert!(ds > 0.0 || ds == 0.0);
        prop_assert!(ds <= 1.0);
        let cs = center_score(&a, &b, lambda);
        prop_assert!(cs <= 1.0);
        let os = orientation_score(&a, &b);
        prop_assert!((0.0..=1.0).contains(&os));
        if let Some(c) = pair_cost(&a, &b, &params()).unwrap() {
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn cost_is_symmetric(a in det_strategy(), b in det_strategy()) {
        let p = CsbaParams { lambda_max: 25.0, ..params() };
        let (ab, ba) = (pair_cost(&a, &b, &p).unwrap(), pair_cost(&b, &a, &p).unwrap());
        match (ab, ba) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
            (None, None) => {}
            other => prop_assert!(false, "gating asymmetric: {:?}", other),
        }
    }

    #[test]
    fn self_cost_is_zero(a in det_strategy()) {
        prop_assert_eq!(pair_cost(&a, &a, &params()).unwrap(), Some(0.0));
    }

    #[test]
    fn shrinking_lambda_never_adds_matches(
        set_a in prop::collection::vec(det_strategy(), 0..7),
        set_b in prop::collection::vec(det_strategy(), 0..7),
        lambda in 0.5f64..15.0,
        factor in 0.1f64..1.0,
    ) {
        let wide = CsbaParams { lambda_max: lambda, ..params() };
        let narrow = CsbaParams { lambda_max: lambda * factor, ..params() };
        let w = associate_pairwise(&set_a, &set_b, &wide).unwrap();
        let n = associate_pairwise(&set_a, &set_b, &narrow).unwrap();
        prop_assert!(n.matches.len() <= w.matches.len());
    }

    #[test]
    fn pairwise_partitions_inputs(
        set_a in prop::collection::vec(det_strategy(), 0..7),
        set_b in prop::collection::vec(det_strategy(), 0..7),
    ) {
        let p = CsbaParams { lambda_max: 10.0, ..params() };
        let r = associate_pairwise(&set_a, &set_b, &p).unwrap();
        let m = cost_matrix(&set_a, &set_b, &p).unwrap();
        let mut rows: Vec<usize> = r.matches.iter().map(|m| m.0).chain(r.unmatched_rows.iter().copied()).collect();
        let mut cols: Vec<usize> = r.matches.iter().map(|m| m.1).chain(r.unmatched_cols.iter().copied()).collect();
        rows.sort_unstable();
        cols.sort_unstable();
        prop_assert_eq!(rows, (0..set_a.len()).collect::<Vec<_>>());
        prop_assert_eq!(cols, (0..set_b.len()).collect::<Vec<_>>());
        for &(i, j) in &r.matches {
            prop_assert!(!m.is_forbidden(i, j));
            prop_assert_eq!(set_a[i].category, set_b[j].category);
        }
    }
}

/// Scene with pairwise separation above 2·λ and realized position errors
/// below λ/2: association must recover the ground-truth identity.
#[test]
fn well_separated_scenes_associate_by_identity() {
    let p = params();
    let lambda = p.lambda_max;
    let noise = Normal::new(0.0, 0.5).unwrap();
    let nc_cov = DiagCovariance7::from_std_devs(0.5, 0.1, 5f64.to_radians()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for scene in 0..40 {
        let spec = SceneSpec {
            scene_id: scene,
            n_frames: 3,
            frame_rate: 2.0,
            area: 200.0,
            min_separation: 2.0 * lambda + 0.1,
            population: Population::Random { count: 30 },
            start_time: 0.0,
        };
        for gt in generate_gt::<f64>(&spec, scene as u64).unwrap() {
            let mut dets = Vec::new();
            for agent in 1..=2 {
                for g in &gt.objects {
                    // Redraw until the realized 3D error is below λ/2.
                    let off = loop {
                        let o: [f64; 3] = [noise.sample(&mut rng),noise.sample(&mut rng), noise.sample(&mut rng)];
                        if (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt() < lambda / 2.0 {
                            break o;
                        }
                    };
                    let b = g.bbox;
                    dets.push(
                        Detection::new(
                            BBox3D::new(
                                b.x + off[0],
                                b.y + off[1],
                                b.z + off[2],
                                b.l * rng.random_range(0.95..1.05),
                                b.w,
                                b.h,
                                b.theta + rng.random_range(-0.05..0.05),
                            )
                            .unwrap(),
                            nc_cov,
                            g.category,
                            AgentId(agent),
                            gt.timestamp,
                            0.7,
                        )
                        .unwrap()
                        .with_gt_id(g.gt_id.clone()),
                    );
                }
            }
            let frame = Frame::from_detections(gt.timestamp, dets);
            let a1 = &frame.agents[&AgentId(1)];
            let a2 = &frame.agents[&AgentId(2)];
            let r = associate_pairwise(a1, a2, &p).unwrap();
            assert_eq!(r.matches.len(), gt.objects.len());
            for &(i, j) in &r.matches {
                assert_eq!(a1[i].gt_id, a2[j].gt_id);
            }
            assert_eq!(fuse_frame(&frame, &p).unwrap(), gt_assoc_fuse(&frame).unwrap());
        }
    }
}
