//! Property tests over the public API.

use dudo_core::mri::{
    acs_count, acs_start, data_consistency, fft2c, gen_phantom_pair, ifft2c, make_cartesian_mask, sampled_count,
    undersample, ACS_FRAC,
};
use dudo_core::train::{psnr, ssim, training_stream};
use dudo_core::Tensor;
use proptest::prelude::*;

fn grid(size: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2 * size * size).prop_map(move |v| Tensor::new(&[2, size, size], v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_is_unitary(x in grid(8)) {
        let k = fft2c(&x).unwrap();
        prop_assert!((k.sq_norm() - x.sq_norm()).abs() <= 1e-12 * x.sq_norm().max(1.0));
        let back = ifft2c(&k).unwrap();
        prop_assert!(back.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn data_consistency_is_idempotent_and_keeps_measurements(
        pred in grid(16), meas in grid(16), accel in 2.0f64..8.0, seed in any::<u64>()
    ) {
        let mask = make_cartesian_mask(16, 16, accel, ACS_FRAC, seed).unwrap();
        let once = data_consistency(&pred, &meas, &mask).unwrap();
        let twice = data_consistency(&once, &meas, &mask).unwrap();
        prop_assert_eq!(once.data(), twice.data());
        let measured = undersample(&meas, &mask).unwrap();
        for (i, &m) in mask.expand(2).iter().enumerate() {
            if m {
                prop_assert_eq!(once.data()[i], measured.data()[i]);
            } else {
                prop_assert_eq!(once.data()[i], pred.data()[i]);
                prop_assert_eq!(measured.data()[i], 0.0);
            }
        }
    }

    #[test]
    fn masks_hold_budget_and_acs(w in prop::sample::select(vec![16usize, 32, 64]), accel in 1.0f64..8.0, seed in any::<u64>()) {
        let acs = acs_count(w, ACS_FRAC);
        prop_assume!(sampled_count(w, accel) >= acs);
        let m = make_cartesian_mask(w, w, accel, ACS_FRAC, seed).unwrap();
        prop_assert_eq!(m.sampled_columns(), sampled_count(w, accel));
        let start = acs_start(w, acs);
        prop_assert!(m.columns()[start..start + acs].iter().all(|&c| c));
    }

    #[test]
    fn metrics_are_bounded(seed in 0u64..1000, accel in 2.0f64..8.0) {
        let pair = gen_phantom_pair::<f64>(16, seed).unwrap();
        let k = fft2c(&pair.contrast_a).unwrap();
        let gt = ifft2c(&k).unwrap();
        let mask = make_cartesian_mask(16, 16, accel, ACS_FRAC, seed).unwrap();
        let zf = ifft2c(&undersample(&k, &mask).unwrap()).unwrap();
        let s = ssim(&zf, &gt).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!(psnr(&zf, &gt).unwrap().is_finite());
        prop_assert_eq!(psnr(&gt, &gt).unwrap(), f64::INFINITY);
    }

    #[test]
    fn training_streams_are_reproducible(seed in any::<u64>(), steps in 0usize..50) {
        let a = training_stream(seed, steps, [4.0, 8.0], [1.0 / 3.0; 3]).unwrap();
        let b = training_stream(seed, steps, [4.0, 8.0], [1.0 / 3.0; 3]).unwrap();
        prop_assert_eq!(a.len(), steps);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.to_bytes(), y.to_bytes());
            prop_assert!((4.0..8.0).contains(&x.accel));
            prop_assert!(x.phantom_seed < dudo_core::train::EVAL_SEED_BASE);
        }
    }
}
