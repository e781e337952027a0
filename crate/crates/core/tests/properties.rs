use depthkit_core::annotation::{Decision, Ledger, LedgerState, PairStatus};
use depthkit_core::benchmark::{judge_pair, pair_accuracy, LabelSource, Origin, PairLabel, Pixel, PointPair, Scenario};
use depthkit_core::curation::{mask_top_loss, CurationConfig};
use depthkit_core::losses::{combined_loss, ssi_loss, LossConfig};
use depthkit_core::metrics::{depth_errors, evaluate_image, AlignSpace, EvalConfig};
use depthkit_core::{align, fit_scale_shift_lsq, AlignmentMethod, DepthKind, DepthMap, ValidMask};
use proptest::prelude::*;

fn map_strategy(max_side: usize) -> impl Strategy<Value = (usize, usize, Vec<f32>, Vec<f32>, Vec<bool>)> {
    (2..=max_side, 2..=max_side).prop_flat_map(|(w, h)| {
        let n = w * h;
        (
            Just(w),
            Just(h),
            prop::collection::vec(0.1f32..10.0, n),
            prop::collection::vec(0.1f32..10.0, n),
            prop::collection::vec(prop::bool::weighted(0.85), n),
        )
    })
}

fn inv(w: usize, h: usize, v: Vec<f32>) -> DepthMap {
    DepthMap::from_values(w, h, v, DepthKind::InverseRelative).unwrap()
}

fn spread(values: &[f32], mask: &[bool]) -> bool {
    let picked: Vec<f32> = values.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
    picked.len() >= 4 && picked.iter().any(|v| (v - picked[0]).abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lsq_fit_is_affine_equivariant(
        (w, h, p, r, m) in map_strategy(8),
        a in 0.5f64..4.0,
        b in -3.0f64..3.0,
    ) {
        prop_assume!(spread(&p, &m));
        let mask = ValidMask::new(w, h, m).unwrap();
        let pred = inv(w, h, p.clone());
        let moved = inv(w, h, p.iter().map(|v| (a * f64::from(*v) + b) as f32).collect());
        let reference = inv(w, h, r);
        let f0 = fit_scale_shift_lsq(&pred, &reference, &mask).unwrap();
        let f1 = fit_scale_shift_lsq(&moved, &reference, &mask).unwrap();
        // s1 * (a p + b) + t1 == s0 p + t0, up to f32 rounding of the moved map.
        prop_assert!((f1.scale * a - f0.scale).abs() < 1e-4 * f0.scale.abs().max(1.0));
        prop_assert!((f1.scale * b + f1.shift - f0.shift).abs() < 1e-3 * f0.shift.abs().max(1.0));
    }

    #[test]
    fn invalid_pixels_never_influence_fits(
        (w, h, p, r, m) in map_strategy(8),
        junk in -100.0f32..100.0,
    ) {
        prop_assume!(spread(&p, &m));
        let mask = ValidMask::new(w, h, m.clone()).unwrap();
        let poisoned: Vec<f32> = p.iter().zip(&m).map(|(v, &ok)| if ok { *v } else { junk }).collect();
        let reference = inv(w, h, r);
        for method in [AlignmentMethod::LeastSquares, AlignmentMethod::Robust] {
            let a = method.fit(&inv(w, h, p.clone()), &reference, &mask);
            let b = method.fit(&inv(w, h, poisoned.clone()), &reference, &mask);
            prop_assert_eq!(a.ok(), b.ok());
        }
    }

    #[test]
    fn align_keeps_the_mask((w, h, p, r, m) in map_strategy(6)) {
        prop_assume!(spread(&p, &m));
        let mask = ValidMask::new(w, h, m).unwrap();
        let pred = inv(w, h, p);
        let fit = fit_scale_shift_lsq(&pred, &inv(w, h, r), &mask).unwrap();
        let aligned = align(&pred, fit);
        prop_assert_eq!(aligned.mask(), pred.mask());
    }

    #[test]
    fn ssi_is_symmetric_and_affine_invariant(
        (w, h, p, r, m) in map_strategy(8),
        a in 0.5f32..5.0,
        b in -2.0f32..2.0,
    ) {
        prop_assume!(spread(&p, &m) && spread(&r, &m));
        let mask = ValidMask::new(w, h, m).unwrap();
        let cfg = LossConfig::default();
        let pred = inv(w, h, p.clone());
        let reference = inv(w, h, r);
        let base = ssi_loss(&pred, &reference, &mask, &cfg).unwrap().loss;
        let swapped = ssi_loss(&reference, &pred, &mask, &cfg).unwrap().loss;
        prop_assert!((base - swapped).abs() < 1e-9);
        let moved = inv(w, h, p.iter().map(|v| a * v + b).collect());
        prop_assume!(moved.valid_count() == pred.valid_count());
        let after = ssi_loss(&moved, &reference, &mask, &cfg).unwrap().loss;
        prop_assert!((base - after).abs() < 1e-4, "{} vs {}", base, after);
    }

    #[test]
    fn combined_loss_is_the_weighted_sum(
        (p, r) in (prop::collection::vec(0.1f32..10.0, 256), prop::collection::vec(0.1f32..10.0, 256)),
        ws in 0.0f64..5.0,
        wg in 0.0f64..5.0,
    ) {
        let cfg = LossConfig { ssi_weight: ws, gm_weight: wg, ..LossConfig::default() };
        let rep = combined_loss(&inv(16, 16, p), &inv(16, 16, r), &ValidMask::all_valid(16, 16), &cfg).unwrap();
        prop_assert!((rep.total - (ws * rep.ssi + wg * rep.gm)).abs() <= 1e-12 * rep.total.abs().max(1.0));
    }

    #[test]
    fn curation_masks_exactly_the_top_fraction(
        losses in prop::collection::vec(prop_oneof![0.0f64..1.0, Just(0.5)], 1..200),
        n in 0.0f64..0.99,
        drop in prop::collection::vec(any::<bool>(), 200),
    ) {
        let len = losses.len();
        let mask = ValidMask::new(len, 1, drop[..len].iter().map(|d| !d).collect()).unwrap();
        let cfg = CurationConfig { n, ..CurationConfig::default() };
        let (out, rep) = mask_top_loss(&losses, &mask, &cfg).unwrap();
        let valid = mask.count();
        let k = (n * valid as f64).floor() as usize;
        prop_assert_eq!(rep.pixels_masked, k);
        prop_assert_eq!(out.count(), valid - k);
        prop_assert!(out.is_subset_of(&mask));
        let kept_max = out.indices().map(|i| losses[i]).fold(f64::NEG_INFINITY, f64::max);
        let dropped_min = mask.indices().filter(|&i| !out.get(i)).map(|i| losses[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(k == 0 || kept_max <= dropped_min);
    }

    #[test]
    fn curation_sets_are_nested(
        losses in prop::collection::vec(prop_oneof![0.0f64..1.0, Just(0.25)], 1..150),
        a in 0.0f64..0.99,
        b in 0.0f64..0.99,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mask = ValidMask::all_valid(losses.len(), 1);
        let (kept_lo, _) = mask_top_loss(&losses, &mask, &CurationConfig { n: lo, ..CurationConfig::default() }).unwrap();
        let (kept_hi, _) = mask_top_loss(&losses, &mask, &CurationConfig { n: hi, ..CurationConfig::default() }).unwrap();
        prop_assert!(kept_hi.is_subset_of(&kept_lo));
    }

    #[test]
    fn metric_fields_are_in_range(
        pred in prop::collection::vec(0.01f64..100.0, 1..64),
        gt_seed in prop::collection::vec(0.01f64..100.0, 64),
    ) {
        let gt = &gt_seed[..pred.len()];
        let e = depth_errors(&pred, gt, 1.25);
        prop_assert!(e.abs_rel >= 0.0 && e.rmse >= 0.0 && e.rmse_log >= 0.0 && e.log10 >= 0.0);
        prop_assert!(e.delta1 <= e.delta2 && e.delta2 <= e.delta3 && e.delta3 <= 1.0 && e.delta1 >= 0.0);
        let same = depth_errors(gt, gt, 1.25);
        prop_assert_eq!(same.abs_rel, 0.0);
        prop_assert_eq!(same.delta1, 1.0);
    }

    #[test]
    fn evaluation_ignores_affine_distortion_of_inverse_depth(
        gt in prop::collection::vec(1.0f32..50.0, 36),
        a in 0.2f32..5.0,
        b in 0.0f32..1.0,
    ) {
        let gt_map = DepthMap::from_values(6, 6, gt.clone(), DepthKind::MetricMeters).unwrap();
        let pred = inv(6, 6, gt.iter().map(|d| a / d + b).collect());
        let cfg = EvalConfig { space: AlignSpace::InverseDepth, ..EvalConfig::default() };
        let row = evaluate_image("x", &pred, &gt_map, &cfg).unwrap();
        prop_assert!(row.errors.abs_rel < 1e-4, "{}", row.errors.abs_rel);
        prop_assert_eq!(row.errors.delta1, 1.0);
    }

    #[test]
    fn pair_judgement_survives_monotone_maps(
        d in prop::collection::vec(0.5f32..20.0, 16),
        pairs in prop::collection::vec((0u32..16, 0u32..16), 1..40),
        gamma in 0.3f32..3.0,
        scale in 0.1f32..10.0,
    ) {
        let map = inv(4, 4, d.clone());
        let warped = inv(4, 4, d.iter().map(|v| scale * v.powf(gamma)).collect());
        let pp: Vec<PointPair> = pairs
            .iter()
            .filter(|(a, b)| a != b)
            .enumerate()
            .map(|(k, &(a, b))| PointPair {
                pair_id: format!("p{k}"),
                image_id: "img".into(),
                p1: Pixel::new(a % 4, a / 4),
                p2: Pixel::new(b % 4, b / 4),
                scenario: Scenario::Outdoor,
                origin: Origin::AutoSampled,
                label: if k % 2 == 0 { PairLabel::FirstCloser } else { PairLabel::SecondCloser },
                label_source: LabelSource::ModelConsensus,
            })
            .collect();
        for p in &pp {
            let (a, b) = (map.inverse_at(p.p1.index(4)).unwrap(), map.inverse_at(p.p2.index(4)).unwrap());
            let (wa, wb) = (warped.inverse_at(p.p1.index(4)).unwrap(), warped.inverse_at(p.p2.index(4)).unwrap());
            // f32 rounding can merge two nearly tied values; only strict ties in
            // both maps are comparable.
            prop_assume!((a > b) == (wa > wb) && (a < b) == (wa < wb));
            prop_assert_eq!(judge_pair(p, &map), judge_pair(p, &warped));
        }
        let r0 = pair_accuracy(&pp, |_| Some(&map)).unwrap();
        let r1 = pair_accuracy(&pp, |_| Some(&warped)).unwrap();
        prop_assert_eq!(r0.correct, r1.correct);
    }

    #[test]
    fn point_pair_json_round_trips(
        x1 in 0u32..5000, y1 in 0u32..5000, x2 in 0u32..5000, y2 in 0u32..5000,
        s in 0usize..8,
        label in 0usize..4,
    ) {
        let labels = [PairLabel::FirstCloser, PairLabel::SecondCloser, PairLabel::Unlabeled, PairLabel::Skipped];
        let pair = PointPair {
            pair_id: "abc#001".into(),
            image_id: "abc".into(),
            p1: Pixel::new(x1, y1),
            p2: Pixel::new(x2, y2),
            scenario: Scenario::ALL[s],
            origin: Origin::ManualChallenge,
            label: labels[label],
            label_source: if label == 2 { LabelSource::None } else { LabelSource::HumanConsensus },
        };
        let text = serde_json::to_string(&pair).unwrap();
        prop_assert_eq!(serde_json::from_str::<PointPair>(&text).unwrap(), pair);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Claim(usize),
    Submit(usize, Decision),
    Advance(u64),
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0usize..3).prop_map(Op::Claim),
        4 => (0usize..3, prop_oneof![
            6 => Just(Decision::FirstCloser),
            3 => Just(Decision::SecondCloser),
            1 => Just(Decision::Skip),
        ]).prop_map(|(a, d)| Op::Submit(a, d)),
        1 => (0u64..1500).prop_map(Op::Advance),
    ]
}

fn test_pair(i: usize) -> PointPair {
    PointPair {
        pair_id: format!("pair{i}"),
        image_id: format!("img{i}"),
        p1: Pixel::new(1, 2),
        p2: Pixel::new(3, 4),
        scenario: Scenario::ALL[i % 8],
        origin: Origin::AutoSampled,
        label: PairLabel::Unlabeled,
        label_source: LabelSource::None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ledger_interleavings_keep_invariants(ops in prop::collection::vec(op_strategy(), 1..80)) {
        let names = ["ann", "bob", "cyd"];
        let mut ledger = Ledger::new(1000);
        for n in names {
            ledger.register(n).unwrap();
        }
        for i in 0..3 {
            ledger.enqueue(test_pair(i)).unwrap();
        }
        let mut log = ledger.drain_events();
        let mut now = 0u64;
        let mut held: [Option<String>; 3] = Default::default();
        for op in ops {
            now += 1;
            match op {
                Op::Claim(a) => {
                    if let Some(asg) = ledger.claim_next(names[a], now).unwrap() {
                        held[a] = Some(asg.pair.pair_id);
                    }
                }
                Op::Submit(a, d) => {
                    if let Some(id) = held[a].take() {
                        let _ = ledger.submit(names[a], &id, d, now);
                    }
                }
                Op::Advance(dt) => now += dt,
            }
            log.extend(ledger.drain_events());
            let state = ledger.state();
            prop_assert_eq!(&LedgerState::replay(&log).unwrap(), state);
            let mut holders: Vec<&str> = Vec::new();
            for entry in state.entries() {
                let mut who: Vec<&str> = entry.records.iter().map(|r| r.annotator_id.as_str()).collect();
                who.sort_unstable();
                who.dedup();
                prop_assert_eq!(who.len(), entry.records.len(), "annotator submitted twice");
                match &entry.status {
                    PairStatus::Finalized { label } => {
                        prop_assert_eq!(entry.records.len(), 3);
                        for r in &entry.records {
                            prop_assert_eq!(Some(*label), match r.decision {
                                Decision::FirstCloser => Some(PairLabel::FirstCloser),
                                Decision::SecondCloser => Some(PairLabel::SecondCloser),
                                Decision::Skip => None,
                            });
                        }
                    }
                    PairStatus::Claimed { annotator, .. } => {
                        prop_assert!(!holders.contains(&annotator.as_str()), "two leases for one annotator");
                        holders.push(annotator);
                    }
                    _ => {}
                }
            }
        }
    }
}
