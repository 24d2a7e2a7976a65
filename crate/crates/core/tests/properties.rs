use proptest::prelude::*;

use maelab::config::{echo_experiment, parse_experiment};
use maelab::harness::{degrade, Degradation, DegradationSpec, MetricTable, RestorationModel};
use maelab::loss::{evaluate_loss, DistanceKind, LossConfig, PatchVariant};
use maelab::mae::init_mae;
use maelab::masking::{apply_mask, build_spacetime_grid, sample_visible, visible_count, MaskSpec};
use maelab::metrics::{ergas, psnr, sam, ssim, Metric, PSNR_CAP_DB};
use maelab::rng::{derive_seed, Stream};
use maelab::tensor::Tensor;

fn unit_tensor(shape: &'static [usize]) -> impl Strategy<Value = Tensor> {
    let len: usize = shape.iter().product();
    prop::collection::vec(0.0f64..1.0, len).prop_map(move |d| Tensor::new(shape, d).unwrap())
}

fn positive_tensor(shape: &'static [usize]) -> impl Strategy<Value = Tensor> {
    let len: usize = shape.iter().product();
    prop::collection::vec(0.05f64..1.0, len).prop_map(move |d| Tensor::new(shape, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn visible_set_invariants(total in 1usize..200, ratio in 0.01f64..0.99, seed: u64) {
        let v = sample_visible(total, ratio, seed).unwrap();
        let expected = (((1.0 - ratio) * total as f64).round() as usize).clamp(1, total);
        prop_assert_eq!(v.len(), expected);
        prop_assert_eq!(visible_count(total, ratio), expected);
        prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(v.iter().all(|&i| i < total));
        prop_assert_eq!(sample_visible(total, ratio, seed).unwrap(), v);
    }

    #[test]
    fn mask_partition_and_complementarity(
        gt in 1usize..3, pf in 1usize..3, gh in 1usize..4, gw in 1usize..4, px in 1usize..5,
        c in 1usize..3, ratio in 0.1f64..0.9, seed: u64, fill in -1.0f64..1.0,
    ) {
        let t = gt * pf;
        let grid = build_spacetime_grid(t, gh * px, gw * px, px, pf).unwrap();
        let spec = MaskSpec::sample(grid, ratio, seed).unwrap();
        let shape = [1, c * t, gh * px, gw * px];
        let len: usize = shape.iter().product();
        let x = Tensor::new(&shape, (0..len).map(|i| (i as f64 * 0.61).sin()).collect()).unwrap();
        let (masked, mask) = apply_mask(&x, &spec, fill).unwrap();
        prop_assert!(mask.data().iter().all(|&m| m == 0.0 || m == 1.0));
        prop_assert_eq!(mask.sum(), (spec.masked_cells() * pf * px * px * c) as f64);
        for ((&m, &k), &v) in masked.data().iter().zip(mask.data()).zip(x.data()) {
            prop_assert_eq!(m, if k == 1.0 { fill } else { v });
        }
    }

    #[test]
    fn loss_is_nonnegative_and_affine(
        pred in unit_tensor(&[1, 3, 8, 8]), gt in unit_tensor(&[1, 3, 8, 8]), lambda in 0.0f64..4.0,
    ) {
        let enc = init_mae(3, 4, 2, 1).unwrap();
        let cfg = |l: f64| LossConfig { lambda: l, ..LossConfig::default() };
        let (t, b, f) = evaluate_loss(&pred, &gt, Some(&enc), &cfg(lambda), 0).unwrap();
        prop_assert!(t >= 0.0 && b >= 0.0 && f >= 0.0);
        prop_assert!((t - (b + lambda * f)).abs() <= 1e-12);
        let (t0, _, _) = evaluate_loss(&pred, &gt, Some(&enc), &cfg(0.0), 0).unwrap();
        prop_assert_eq!(t0.to_bits(), b.to_bits());
        let (same, _, _) = evaluate_loss(&gt, &gt, Some(&enc), &cfg(lambda), 0).unwrap();
        prop_assert_eq!(same, 0.0);
    }

    #[test]
    fn whole_image_crop_equals_full(pred in unit_tensor(&[1, 3, 8, 8]), gt in unit_tensor(&[1, 3, 8, 8]), seed: u64, key: u64) {
        let enc = init_mae(3, 4, 2, 2).unwrap();
        for base in [DistanceKind::L1, DistanceKind::L2] {
            let full = LossConfig { base, ..LossConfig::default() };
            let patch = LossConfig { patch: Some(PatchVariant { crop_px: 8, crops_per_step: 1, seed }), ..full.clone() };
            let a = evaluate_loss(&pred, &gt, Some(&enc), &full, 0).unwrap();
            let b = evaluate_loss(&pred, &gt, Some(&enc), &patch, key).unwrap();
            prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        }
    }

    #[test]
    fn metric_identities(x in positive_tensor(&[1, 3, 12, 12])) {
        prop_assert_eq!(psnr(&x, &x, 1.0).unwrap(), PSNR_CAP_DB);
        prop_assert_eq!(ssim(&x, &x, 1.0).unwrap(), 1.0);
        prop_assert_eq!(sam(&x, &x).unwrap(), 0.0);
        prop_assert_eq!(ergas(&x, &x, 0.25).unwrap().value, 0.0);
    }

    #[test]
    fn metrics_are_pure_and_bounded(a in unit_tensor(&[1, 2, 12, 12]), b in positive_tensor(&[1, 2, 12, 12])) {
        let s = ssim(&a, &b, 1.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(s.to_bits(), ssim(&a, &b, 1.0).unwrap().to_bits());
        let angle = sam(&a, &b).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&angle));
        let e = ergas(&a, &b, 0.25).unwrap().value;
        prop_assert!((ergas(&a, &b, 0.5).unwrap().value - 2.0 * e).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn sam_invariant_to_per_pixel_scaling(
        a in positive_tensor(&[1, 3, 4, 4]), b in positive_tensor(&[1, 3, 4, 4]),
        scales in prop::collection::vec(0.1f64..10.0, 16),
    ) {
        let mut scaled = a.clone();
        for (i, v) in scaled.data_mut().iter_mut().enumerate() {
            *v *= scales[i % 16];
        }
        prop_assert!((sam(&scaled, &b).unwrap() - sam(&a, &b).unwrap()).abs() <= 1e-12);
        prop_assert!((sam(&b, &scaled).unwrap() - sam(&b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn degradation_is_deterministic(x in unit_tensor(&[1, 3, 8, 8]), seed: u64, index: u64, sigma in 0.0f64..0.5) {
        let spec = DegradationSpec::new(Degradation::GaussianNoise { sigma }, seed).unwrap();
        let a = degrade(&x, &spec, index).unwrap();
        prop_assert_eq!(&a, &degrade(&x, &spec, index).unwrap());
        prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let zero = DegradationSpec::new(Degradation::GaussianNoise { sigma: 0.0 }, seed).unwrap();
        prop_assert_eq!(&degrade(&x, &zero, index).unwrap(), &x);
        let flat = DegradationSpec::new(Degradation::GammaDarken { gamma: 1.0, gain: 1.0 }, seed).unwrap();
        prop_assert_eq!(&degrade(&x, &flat, index).unwrap(), &x);
    }

    #[test]
    fn residual_model_preserves_shape(seed: u64, h in 3usize..10, w in 3usize..10, c in 1usize..4) {
        let m = RestorationModel::init(c, 4, 3, seed).unwrap();
        let x = Tensor::new(&[2, c, h, w], (0..2 * c * h * w).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let y = m.forward(&x).unwrap();
        prop_assert_eq!(&y, &x);
    }

    #[test]
    fn aggregate_is_row_mean(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..12)) {
        let indexed: Vec<(usize, Vec<f64>)> = rows.iter().cloned().enumerate().rev().collect();
        let t = MetricTable::from_rows(vec![Metric::Psnr, Metric::Ssim, Metric::Sam], indexed).unwrap();
        prop_assert!(t.rows.windows(2).all(|w| w[0].0 < w[1].0));
        for m in 0..3 {
            let mean = rows.iter().map(|r| r[m]).sum::<f64>() / rows.len() as f64;
            prop_assert!((t.aggregate[m] - mean).abs() <= 1e-9);
        }
    }

    #[test]
    fn streams_are_separated(seed: u64, key: u64) {
        let streams = [Stream::Init, Stream::Degrade, Stream::Batch, Stream::Masking, Stream::Crops];
        let seeds: Vec<u64> = streams.iter().map(|&s| derive_seed(seed, s, &[key])).collect();
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                prop_assert_ne!(seeds[i], seeds[j]);
            }
        }
        prop_assert_eq!(derive_seed(seed, Stream::Batch, &[key]), seeds[2]);
    }

    #[test]
    fn echoed_config_reproduces(lambda in 0.0f64..5.0, steps in 1usize..5000, seed: u64, lr in 1e-6f64..1e-1) {
        let text = "[experiment]\ntask = denoise\nconfiguration = ccmae\n[mae]\ncheckpoint = x.maec\n";
        let overrides = vec![
            ("loss.lambda".to_string(), format!("{lambda:?}")),
            ("optim.steps".to_string(), steps.to_string()),
            ("experiment.seed".to_string(), seed.to_string()),
            ("optim.lr".to_string(), format!("{lr:?}")),
        ];
        let cfg = parse_experiment(text, &overrides).unwrap();
        prop_assert_eq!(cfg.loss.lambda.to_bits(), lambda.to_bits());
        let echo = echo_experiment(&cfg);
        prop_assert_eq!(&parse_experiment(&echo, &[]).unwrap(), &cfg);
        prop_assert_eq!(echo_experiment(&parse_experiment(&echo, &[]).unwrap()), echo);
    }
}
