//! Property tests over the tensor engine and loss invariants.

use proptest::prelude::*;

use daccn_core::losses::smoothness_loss;
use daccn_core::metrics::{depth_metrics, MetricsOptions};
use daccn_core::geometry::DepthMap;
use daccn_core::tensor::{Tape, Tensor};

fn tensor_strategy(max: usize) -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(a, b, c)| {
        let shape = vec![a, b, c];
        let n = a * b * c;
        (
            Just(shape),
            prop::collection::vec(-10.0..10.0f64, n..=n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_commutes((shape, va) in tensor_strategy(4), seed in 0..1000u64) {
        let n = va.len();
        let vb: Vec<f64> = (0..n).map(|i| ((seed as f64 + i as f64) * 0.37).sin()).collect();
        let a = Tensor::<f64>::from_vec(&shape, va).unwrap();
        let b = Tensor::<f64>::from_vec(&shape, vb).unwrap();
        let ab = a.add(&b).unwrap();
        let ba = b.add(&a).unwrap();
        prop_assert_eq!(ab.values(), ba.values());
    }

    #[test]
    fn cumsum_recurrence((_, vals) in tensor_strategy(4), h in 1..6usize, w in 1..6usize) {
        let n = h * w;
        let vals: Vec<f64> = vals.into_iter().cycle().take(n).collect();
        let x = Tensor::<f64>::from_vec(&[1, 1, h, w], vals.clone()).unwrap();
        let y = x.cumsum_from_bottom().unwrap();
        let o = y.values();
        for j in 0..w {
            // bottom row equals the input's bottom row
            prop_assert!((o[(h - 1) * w + j] - vals[(h - 1) * w + j]).abs() < 1e-12);
            for p in 0..h.saturating_sub(1) {
                let lhs = o[p * w + j];
                let rhs = vals[p * w + j] + o[(p + 1) * w + j];
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn backward_is_linear((shape, vals) in tensor_strategy(4), seed in 0..1000u64) {
        let n = vals.len();
        let w1: Vec<f64> = (0..n).map(|i| ((seed + i as u64) as f64 * 0.13).cos()).collect();
        let w2: Vec<f64> = (0..n).map(|i| ((seed + i as u64) as f64 * 0.29).sin()).collect();
        let weight1 = Tensor::<f64>::from_vec(&shape, w1).unwrap();
        let weight2 = Tensor::<f64>::from_vec(&shape, w2).unwrap();

        // combined backward of L1 + L2
        let tape = Tape::new();
        let x = Tensor::leaf(&tape, &shape, vals.clone(), true).unwrap();
        let l1 = x.mul(&weight1).unwrap().sum_all().unwrap();
        let l2 = x.mul(&x).unwrap().mul(&weight2).unwrap().sum_all().unwrap();
        let total = l1.add(&l2).unwrap();
        tape.backward(&total).unwrap();
        let g_combined = x.grad().unwrap();

        // separate backwards
        let tape1 = Tape::new();
        let x1 = Tensor::leaf(&tape1, &shape, vals.clone(), true).unwrap();
        let l1 = x1.mul(&weight1).unwrap().sum_all().unwrap();
        tape1.backward(&l1).unwrap();
        let tape2 = Tape::new();
        let x2 = Tensor::leaf(&tape2, &shape, vals.clone(), true).unwrap();
        let l2 = x2.mul(&x2).unwrap().mul(&weight2).unwrap().sum_all().unwrap();
        tape2.backward(&l2).unwrap();

        let ga = x1.grad().unwrap();
        let gb = x2.grad().unwrap();
        for i in 0..n {
            let sum = ga[i] + gb[i];
            prop_assert!((g_combined[i] - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
    }

    #[test]
    fn forward_and_gradients_are_deterministic((shape, vals) in tensor_strategy(4)) {
        let run = || {
            let tape = Tape::new();
            let x = Tensor::leaf(&tape, &shape, vals.clone(), true).unwrap();
            let y = x.mul(&x).unwrap().elu().unwrap().sum_all().unwrap();
            tape.backward(&y).unwrap();
            (y.values().to_vec(), x.grad().unwrap())
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        // bitwise identical
        prop_assert!(v1.iter().zip(&v2).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn smoothness_scale_invariance(c in 0.01..50.0f64, seed in 0..500u64) {
        let (h, w) = (5, 6);
        let disp_vals: Vec<f64> = (0..h * w)
            .map(|i| 0.1 + 0.8 * (((seed + i as u64) as f64 * 0.71).sin() * 0.5 + 0.5))
            .collect();
        let img_vals: Vec<f64> = (0..3 * h * w)
            .map(|i| ((seed + i as u64) as f64 * 0.31).cos() * 0.5 + 0.5)
            .collect();
        let disp = Tensor::<f64>::from_vec(&[1, 1, h, w], disp_vals).unwrap();
        let img = Tensor::<f64>::from_vec(&[1, 3, h, w], img_vals).unwrap();
        let base = smoothness_loss(&disp, &img).unwrap().item().unwrap();
        let scaled = smoothness_loss(&disp.mul_scalar(c).unwrap(), &img)
            .unwrap()
            .item()
            .unwrap();
        prop_assert!((base - scaled).abs() < 1e-9, "{} vs {}", base, scaled);
    }

    #[test]
    fn median_scaled_metrics_scale_invariant(c in 0.05..20.0f64, seed in 0..500u64) {
        let n = 24;
        let gt_vals: Vec<f64> = (0..n)
            .map(|i| 2.0 + 20.0 * (((seed + i as u64) as f64 * 0.43).sin() * 0.5 + 0.5))
            .collect();
        let pred_vals: Vec<f64> = (0..n)
            .map(|i| 2.0 + 20.0 * (((seed + i as u64) as f64 * 0.67).cos() * 0.5 + 0.5))
            .collect();
        let make = |v: Vec<f64>| {
            DepthMap::new(Tensor::<f64>::from_vec(&[1, 1, 4, 6], v).unwrap(), 1e-4, 1e5).unwrap()
        };
        let opts = MetricsOptions {
            median_scaling: true,
            clamp: (1e-4, 1e5),
            ..Default::default()
        };
        let base = depth_metrics(&make(pred_vals.clone()), &make(gt_vals.clone()), None, &opts).unwrap();
        let scaled_pred: Vec<f64> = pred_vals.iter().map(|v| v * c).collect();
        let scaled = depth_metrics(&make(scaled_pred), &make(gt_vals), None, &opts).unwrap();
        prop_assert!((base.abs_rel - scaled.abs_rel).abs() < 1e-9);
        prop_assert!((base.rmse - scaled.rmse).abs() < 1e-9);
        prop_assert!((base.delta1 - scaled.delta1).abs() < 1e-12);
    }

    #[test]
    fn bilinear_identity_grid_reproduces(h in 2..6usize, w in 2..6usize, seed in 0..100u64) {
        let n = 2 * h * w;
        let vals: Vec<f64> = (0..n).map(|i| ((seed + i as u64) as f64 * 0.17).sin()).collect();
        let x = Tensor::<f64>::from_vec(&[1, 2, h, w], vals).unwrap();
        let grid = daccn_core::tensor::identity_grid::<f64>(h, w);
        let y = x.bilinear_sample(&grid).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
