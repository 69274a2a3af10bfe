use proptest::prelude::*;

use counterfact::eval::{mi_bound_check, random_mi_instance, tube_iou};
use counterfact::inference::{explain_all, restore_region, PixelBox};
use counterfact::model::{aggregate, delta_m, shape_masks, sigmoid, Composition, ExplainModel, FeatureMap, FeaturePack, ShapeKind};
use counterfact::rng;
use counterfact::subpath::{
    brute_force_subpath, layerized_max_score, max_subpath, min_subpath, PathElement, ScoreVolume, SubpathConfig, TubePath,
};
use counterfact::target::{generate_sample, mask_apply, Split, SynthConfig, TargetClassifier};
use counterfact::tensor::{Geometry, Tensor};
use counterfact::trainer::sample_loss;
use counterfact::Error;

fn volume(max: [usize; 5], values: BoxedStrategy<f64>) -> impl Strategy<Value = ScoreVolume> {
    (1..=max[0], 1..=max[1], 1..=max[2], 1..=max[3], 1..=max[4]).prop_flat_map(move |(a, b, c, d, e)| {
        prop::collection::vec(values.clone(), a * b * c * d * e)
            .prop_map(move |data| ScoreVolume::new_5d([a, b, c, d, e], data).unwrap())
    })
}

fn ints() -> BoxedStrategy<f64> {
    (-5i32..=5).prop_map(f64::from).boxed()
}

fn reals() -> BoxedStrategy<f64> {
    (-10.0f64..10.0).boxed()
}

fn radii() -> impl Strategy<Value = SubpathConfig> {
    (0usize..=1, 0usize..=1, 0usize..=1).prop_map(|(k_move, r_scale, r_shape)| SubpathConfig { k_move, r_scale, r_shape })
}

/// Small explainer over a 2x2 (one scale) or 4x4 + 2x2 grid with random features.
fn small_instance(seed: u64, composition: Composition, two_scales: bool) -> (ExplainModel, FeaturePack) {
    let mut r = rng::seeded(seed);
    let frames = 3;
    let (size, strides) = if two_scales { (8, vec![2, 4]) } else { (4, vec![2]) };
    let geometry = Geometry::new(size, size, frames, strides).unwrap();
    let ch = vec![2; geometry.n_scales()];
    let model = ExplainModel::init(
        vec!["a".into(), "b".into(), "c".into()],
        vec!["s".into(), "t".into()],
        geometry.clone(),
        &ch,
        vec![ShapeKind::S2x2, ShapeKind::S3x3],
        composition,
        seed,
    )
    .unwrap();
    let scales = (0..geometry.n_scales())
        .map(|s| {
            let (w, h) = geometry.grid(s);
            FeatureMap::new(w, h, frames, 2, (0..w * h * frames * 2).map(|_| rng::normal(&mut r)).collect()).unwrap()
        })
        .collect();
    (model, FeaturePack::new(geometry, scales).unwrap())
}

fn tube_boxes() -> impl Strategy<Value = Vec<PixelBox>> {
    prop::collection::btree_map(0usize..6, (0usize..8, 0usize..8, 0usize..5, 0usize..5), 0..5)
        .prop_map(|m| m.into_iter().map(|(t, (x, y, w, h))| PixelBox { t, x, y, w, h }).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn cft1_roundtrip_is_bit_exact(dims in prop::collection::vec(1usize..4, 1..=5), kind in 0u8..3, seed: u64) {
        let n: usize = dims.iter().product();
        let mut r = rng::seeded(seed);
        let t = match kind {
            0 => Tensor::from_f64(dims, (0..n).map(|_| rng::normal(&mut r) * 1e3).collect()).unwrap(),
            1 => Tensor::from_f32(dims, (0..n).map(|_| rng::normal(&mut r) as f32).collect()).unwrap(),
            _ => Tensor::from_i32(dims, (0..n).map(|_| rng::uniform(&mut r, -1e9, 1e9) as i32).collect()).unwrap(),
        };
        let bytes = t.to_bytes();
        let back = Tensor::read_from(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, t);
    }

    #[test]
    fn reading_rejects_non_finite(n in 1usize..20, at in 0usize..20, bad in prop::sample::select(vec![f32::NAN, f32::INFINITY, f32::NEG_INFINITY])) {
        let at = at % n;
        let t = Tensor::from_f32(vec![n], vec![0.5; n]).unwrap();
        let mut bytes = t.to_bytes();
        let start = bytes.len() - 4 * n + 4 * at;
        bytes[start..start + 4].copy_from_slice(&bad.to_le_bytes());
        prop_assert!(matches!(Tensor::read_from(&mut bytes.as_slice()), Err(Error::NonFinite(i)) if i == at));
    }

    #[test]
    fn dp_matches_brute_force(m in volume([2, 2, 3, 3, 4], ints()), cfg in radii()) {
        prop_assert_eq!(max_subpath(&m, &cfg).unwrap(), brute_force_subpath(&m, &cfg).unwrap());
    }

    #[test]
    fn layerized_matches_dp_on_integers(m in volume([1, 1, 6, 6, 8], ints()), k in 0usize..=2) {
        let cfg = SubpathConfig::spatial(k);
        prop_assert_eq!(layerized_max_score(&m, &cfg).unwrap(), max_subpath(&m, &cfg).unwrap().0);
    }

    #[test]
    fn sign_duality(m in volume([2, 2, 4, 4, 5], reals()), cfg in radii()) {
        let (lo, _) = min_subpath(&m, &cfg).unwrap();
        let (hi, _) = max_subpath(&m.neg(), &cfg).unwrap();
        prop_assert_eq!(lo, -hi);
    }

    #[test]
    fn returned_paths_are_feasible(m in volume([2, 2, 4, 4, 5], reals()), cfg in radii()) {
        let (score, path) = max_subpath(&m, &cfg).unwrap();
        path.validate(m.dims(), &cfg).unwrap();
        prop_assert!((path.sum(&m).unwrap() - score).abs() <= 1e-9 * (1.0 + score.abs()));
        let (_, path) = min_subpath(&m, &cfg).unwrap();
        path.validate(m.dims(), &cfg).unwrap();
    }

    #[test]
    fn adding_a_constant_only_helps_long_paths(m in volume([2, 2, 3, 3, 6], ints()), c in 0i32..4, cfg in radii()) {
        let c = f64::from(c);
        let (score, path) = max_subpath(&m, &cfg).unwrap();
        let (shifted, _) = max_subpath(&m.map(|v| v + c), &cfg).unwrap();
        prop_assert!(shifted >= score + c * path.len() as f64);
    }

    #[test]
    fn tube_iou_is_symmetric_and_bounded(a in tube_boxes(), b in tube_boxes()) {
        let ab = tube_iou(&a, &b);
        prop_assert_eq!(ab, tube_iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        let nonzero = |v: &[PixelBox]| v.iter().filter(|x| x.area() > 0).copied().collect::<Vec<_>>();
        if nonzero(&a) == nonzero(&b) {
            prop_assert_eq!(ab, 1.0);
        } else {
            prop_assert!(ab < 1.0);
        }
    }

    #[test]
    fn mi_bound_holds(seed: u64) {
        let inst = random_mi_instance(&mut rng::seeded(seed), 3, 3, 2, 4, 5.0);
        let rep = mi_bound_check(&inst).unwrap();
        prop_assert!(rep.holds, "{:?}", rep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, ..ProptestConfig::default() })]

    #[test]
    fn swapping_classes_complements_y(seed: u64, t0 in 0usize..3, i in 0usize..4, j in 0usize..4) {
        let (model, f) = small_instance(seed, Composition::Decomposed, true);
        let ab = delta_m(&f, &model, 0, 1, 1).unwrap();
        let ba = delta_m(&f, &model, 1, 0, 1).unwrap();
        let tube = TubePath::new((t0..3).map(|t| PathElement::new(0, 1, i, j, t)).collect()).unwrap();
        let y = sigmoid(aggregate(&ab, &tube).unwrap()) + sigmoid(aggregate(&ba, &tube).unwrap());
        prop_assert!((y - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn extreme_y_over_tubes_come_from_the_dp(seed: u64, composition in prop::sample::select(vec![Composition::Decomposed, Composition::Raw])) {
        let (model, f) = small_instance(seed, composition, false);
        let dm = delta_m(&f, &model, 2, 0, 0).unwrap();
        let cfg = SubpathConfig { k_move: 1, r_scale: 0, r_shape: 1 };
        // exhaustive enumeration is the direct evaluation of every tube's y
        let (best, _) = brute_force_subpath(&dm, &cfg).unwrap();
        let (worst, _) = brute_force_subpath(&dm.neg(), &cfg).unwrap();
        prop_assert_eq!(sigmoid(max_subpath(&dm, &cfg).unwrap().0), sigmoid(best));
        prop_assert_eq!(sigmoid(min_subpath(&dm, &cfg).unwrap().0), sigmoid(-worst));
    }

    #[test]
    fn raw_delta_m_is_linear_in_each_factor(seed: u64) {
        let (a, f) = small_instance(seed, Composition::Raw, true);
        let (b, g) = small_instance(seed ^ 0x5eed, Composition::Raw, true);
        let close = |x: &ScoreVolume, y: &ScoreVolume| x.data().iter().zip(y.data()).all(|(p, q)| (p - q).abs() <= 1e-9 * (1.0 + p.abs()));
        let dm = |m: &ExplainModel, f: &FeaturePack| delta_m(f, m, 0, 2, 1).unwrap();

        let mut fg = f.clone();
        for (x, y) in fg.scales.iter_mut().zip(&g.scales) {
            x.data.iter_mut().zip(&y.data).for_each(|(p, q)| *p += q);
        }
        prop_assert!(close(&dm(&a, &fg), &dm(&a, &f).data().iter().zip(dm(&a, &g).data()).map(|(p, q)| p + q).collect_volume(&f, &a)));

        // class factor: a's attributes with class kernels a + b
        let mut swap = a.clone();
        for (sa, sb) in swap.kernels.scales.iter_mut().zip(&b.kernels.scales) {
            sa.classes = sb.classes.clone();
        }
        let mut sum = a.clone();
        for (sa, sb) in sum.kernels.scales.iter_mut().zip(&b.kernels.scales) {
            for (ka, kb) in sa.classes.iter_mut().zip(&sb.classes) {
                ka.w.iter_mut().zip(&kb.w).for_each(|(p, q)| *p += q);
            }
        }
        let expect: Vec<f64> = dm(&a, &f).data().iter().zip(dm(&swap, &f).data()).map(|(p, q)| p + q).collect();
        prop_assert!(close(&dm(&sum, &f), &expect.collect_volume(&f, &a)));

        // attribute factor
        let mut swap = a.clone();
        for (sa, sb) in swap.kernels.scales.iter_mut().zip(&b.kernels.scales) {
            sa.attributes = sb.attributes.clone();
        }
        let mut sum = a.clone();
        for (sa, sb) in sum.kernels.scales.iter_mut().zip(&b.kernels.scales) {
            for (ka, kb) in sa.attributes.iter_mut().zip(&sb.attributes) {
                ka.w.iter_mut().zip(&kb.w).for_each(|(p, q)| *p += q);
            }
        }
        let expect: Vec<f64> = dm(&a, &f).data().iter().zip(dm(&swap, &f).data()).map(|(p, q)| p + q).collect();
        prop_assert!(close(&dm(&sum, &f), &expect.collect_volume(&f, &a)));
    }

    #[test]
    fn loss_is_positive_sum_of_terms(seed: u64, c_pos in 0usize..3, both in any::<bool>()) {
        let (model, f) = small_instance(seed, Composition::Decomposed, true);
        let attrs = if both { vec![0, 1] } else { vec![1] };
        let sl = sample_loss(&f, &attrs, c_pos, &model, &SubpathConfig::default()).unwrap();
        prop_assert!(sl.loss > 0.0);
        prop_assert_eq!(sl.witnesses.len(), attrs.len() * 2);
        let direct: f64 = sl.witnesses.iter().map(|w| -counterfact::model::log_sigmoid(w.value)).sum::<f64>() / attrs.len() as f64;
        prop_assert_eq!(sl.loss, direct);
    }

    #[test]
    fn explanation_scores_recompute_exactly(seed: u64) {
        let (model, f) = small_instance(seed, Composition::Decomposed, true);
        let cfg = SubpathConfig::default();
        for e in explain_all(&f, &model, 1, 2, &cfg).unwrap() {
            let dm = delta_m(&f, &model, 1, 2, e.attribute).unwrap();
            prop_assert_eq!(sigmoid(aggregate(&dm, &e.tube).unwrap()), e.score);
        }
    }

    #[test]
    fn masking_changes_only_covering_cells(seed: u64, x in 0usize..32, y in 0usize..32, w in 1usize..12, h in 1usize..12, t in 0usize..16) {
        let cfg = SynthConfig { train_count: 1, test_count: 1, ..SynthConfig::default() };
        let target = TargetClassifier::new(&cfg, seed).unwrap();
        let video = generate_sample(&cfg, Split::Test, (seed % 5) as usize).video;
        let b = PixelBox { t, x, y, w, h };
        let before = target.features(&video).unwrap();
        let after = target.features(&mask_apply(&video, &[b])).unwrap();
        for (s, (fa, fb)) in before.scales.iter().zip(&after.scales).enumerate() {
            let stride = cfg.strides[s];
            for i in 0..fa.w {
                for j in 0..fa.h {
                    for tt in 0..fa.t {
                        let hit = tt == t && i * stride < x + w && x < (i + 1) * stride && j * stride < y + h && y < (j + 1) * stride;
                        let o = fa.offset(i, j, tt);
                        if !hit {
                            prop_assert_eq!(&fa.data[o..o + fa.d], &fb.data[o..o + fb.d]);
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn restore_shifts_with_the_cell(i in 1usize..5, j in 1usize..5, shape in 0usize..4) {
        let (mut model, _) = small_instance(1, Composition::Decomposed, false);
        let geometry = Geometry::new(64, 64, 2, vec![8]).unwrap();
        model.geometry = geometry.clone();
        model.shapes = ShapeKind::ALL.to_vec();
        let at = |i, j| restore_region(&TubePath::new(vec![PathElement::new(0, shape, i, j, 0)]).unwrap(), &model, &geometry)[0];
        let (b, right, down) = (at(i, j), at(i + 1, j), at(i, j + 1));
        prop_assert_eq!((right.x, right.y, right.w, right.h), (b.x + 8, b.y, b.w, b.h));
        prop_assert_eq!((down.x, down.y, down.w, down.h), (b.x, b.y + 8, b.w, b.h));
    }
}

trait CollectVolume {
    fn collect_volume(self, f: &FeaturePack, m: &ExplainModel) -> ScoreVolume;
}

impl<I: IntoIterator<Item = f64>> CollectVolume for I {
    fn collect_volume(self, f: &FeaturePack, m: &ExplainModel) -> ScoreVolume {
        let (w, h) = f.geometry.finest_grid();
        ScoreVolume::new_5d([f.geometry.n_scales(), m.shapes.len(), w, h, f.frames()], self.into_iter().collect()).unwrap()
    }
}

#[test]
fn masks_sum_to_one_and_mirror_their_box() {
    for (kind, m) in ShapeKind::ALL.iter().zip(shape_masks()) {
        assert!((m.sum() - 1.0).abs() < 1e-15, "{kind:?}");
        for di in 0..3 {
            for dj in 0..3 {
                assert_eq!(m.at(di, dj), m.at(2 - di, dj));
                assert_eq!(m.at(di, dj), m.at(di, 2 - dj));
            }
        }
        let square = kind.width() == kind.height();
        let transposed = (0..3).all(|a| (0..3).all(|b| m.at(a, b) == m.at(b, a)));
        assert_eq!(square, transposed, "{kind:?}");
    }
}

#[test]
fn explain_is_identical_across_thread_counts() {
    let (model, f) = small_instance(11, Composition::Decomposed, true);
    let cfg = SubpathConfig::default();
    let run = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| explain_all(&f, &model, 0, 1, &cfg).unwrap());
    assert_eq!(run(1), run(3));
}
