use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diff::{Graph, ParamStore, Tensor};
use crate::model::{Intermediate, ModelConfig};
use crate::mri::{fft2c, gen_phantom_pair, make_cartesian_mask, undersample, RefQuality};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn loss_of(pairs: &[(Tensor<f64>, Tensor<f64>)], k_gt: &Tensor<f64>, i_gt: &Tensor<f64>, norm: LossNorm) -> f64 {
    let store = ParamStore::<f64>::new();
    let mut g = Graph::new(&store);
    let blocks: Vec<Intermediate> = pairs
        .iter()
        .map(|(kk, kdc)| Intermediate { k_k: g.leaf(kk.clone()), k_dc: g.leaf(kdc.clone()) })
        .collect();
    let l = dudo_loss(&mut g, &blocks, k_gt, i_gt, norm).unwrap();
    g.value(l).item()
}

fn loop_norm(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

#[test]
fn loss_single_entry_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k_gt = fft2c(&random(&mut rng, &[2, 4, 4])).unwrap();
    let i_gt = crate::mri::ifft2c(&k_gt).unwrap();
    assert_eq!(loss_of(&[(k_gt.clone(), k_gt.clone())], &k_gt, &i_gt, LossNorm::L2), 0.0);
    let mut off = k_gt.clone();
    off.data_mut()[5] += 3.0;
    let l = loss_of(&[(off, k_gt.clone())], &k_gt, &i_gt, LossNorm::L2);
    assert!((l - 3.0).abs() < 1e-12, "{l}");
}

#[test]
fn loss_matches_loop_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let i_gt = random(&mut rng, &[2, 8, 8]);
        let k_gt = fft2c(&i_gt).unwrap();
        let pairs: Vec<_> = (0..2).map(|_| (random(&mut rng, &[2, 8, 8]), random(&mut rng, &[2, 8, 8]))).collect();
        let mut want = 0.0;
        for (kk, kdc) in &pairs {
            want += loop_norm(kk.data(), k_gt.data());
            want += loop_norm(crate::mri::ifft2c(kdc).unwrap().data(), i_gt.data());
        }
        let got = loss_of(&pairs, &k_gt, &i_gt, LossNorm::L2);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn loss_norm_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let i_gt = random(&mut rng, &[2, 4, 4]);
    let k_gt = fft2c(&i_gt).unwrap();
    let mut off = k_gt.clone();
    off.data_mut()[0] += 2.0;
    let pair = [(off, k_gt.clone())];
    assert!((loss_of(&pair, &k_gt, &i_gt, LossNorm::SquaredL2) - 4.0).abs() < 1e-12);
    assert!((loss_of(&pair, &k_gt, &i_gt, LossNorm::MeanSquared) - 4.0 / 32.0).abs() < 1e-12);
    for n in [LossNorm::L2, LossNorm::SquaredL2, LossNorm::MeanSquared] {
        assert_eq!(LossNorm::parse(n.as_str()), Some(n));
    }
    let store = ParamStore::<f64>::new();
    let mut g = Graph::new(&store);
    assert!(dudo_loss(&mut g, &[], &k_gt, &i_gt, LossNorm::L2).is_err());
}

fn scalar_store(v: f64) -> ParamStore<f64> {
    let mut p = ParamStore::new();
    p.insert("w", Tensor::new(&[1], vec![v]).unwrap()).unwrap();
    p
}

fn set_grad(p: &mut ParamStore<f64>, g: f64) {
    p.zero_grads();
    let store = p.clone();
    let mut graph = Graph::new(&store);
    let w = graph.p("w").unwrap();
    let y = graph.scale(w, g).unwrap();
    let s = graph.sum(y).unwrap();
    graph.into_tape().backward(s, p).unwrap();
}

#[test]
fn adam_first_step_by_hand() {
    let cfg = AdamConfig::default();
    for g in [0.3, -2.0, 1e-6] {
        let mut p = scalar_store(1.0);
        set_grad(&mut p, g);
        let mut opt = Adam::new(cfg);
        opt.step(&mut p).unwrap();
        let want = 1.0 - cfg.lr * g / (g.abs() + cfg.eps / (1.0 - cfg.beta2).sqrt());
        let got = p.get("w").unwrap().data()[0];
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
}

#[test]
fn adam_zero_gradient_decays_moments() {
    let cfg = AdamConfig::default();
    let mut p = scalar_store(1.0);
    let mut opt = Adam::new(cfg);
    set_grad(&mut p, 1.0);
    opt.step(&mut p).unwrap();
    let before = p.get("w").unwrap().data()[0];
    let (m1, v1) = (opt.moments().0[0].data()[0], opt.moments().1[0].data()[0]);
    set_grad(&mut p, 0.0);
    opt.step(&mut p).unwrap();
    let (m2, v2) = (opt.moments().0[0].data()[0], opt.moments().1[0].data()[0]);
    assert_eq!(m2, cfg.beta1 * m1);
    assert_eq!(v2, cfg.beta2 * v1);

    let mut fresh = scalar_store(1.0);
    let mut opt = Adam::new(cfg);
    set_grad(&mut fresh, 0.0);
    opt.step(&mut fresh).unwrap();
    assert_eq!(fresh.get("w").unwrap().data()[0], 1.0);
    assert!(before < 1.0);
}

#[test]
fn adam_clipping_bounds_the_gradient() {
    let mut p = scalar_store(0.0);
    set_grad(&mut p, 100.0);
    let mut opt = Adam::new(AdamConfig { clip: Some(1.0), ..Default::default() });
    opt.step(&mut p).unwrap();
    assert!((opt.moments().0[0].data()[0] - 0.5).abs() < 1e-12);
}

fn magnitude_pair(mag_x: &[f64], mag_r: &[f64], h: usize, w: usize) -> (Tensor<f64>, Tensor<f64>) {
    let mk = |m: &[f64]| {
        let mut d = vec![0.0; 2 * h * w];
        d[..h * w].copy_from_slice(m);
        Tensor::new(&[2, h, w], d).unwrap()
    };
    (mk(mag_x), mk(mag_r))
}

#[test]
fn psnr_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..0.8)).collect();
    let mut r1 = r.clone();
    r1[0] = 0.8; // peak exactly 0.8
    let scaled: Vec<f64> = r1.iter().map(|v| v / 0.8).collect();
    let shifted: Vec<f64> = r1.iter().map(|v| v + 0.08).collect();
    let (x, y) = magnitude_pair(&shifted, &r1, 8, 8);
    // an offset of 0.08 becomes 0.1 after dividing by the peak
    assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(psnr(&y, &y).unwrap(), f64::INFINITY);
    assert!(psnr_values(&scaled, &scaled).unwrap().is_infinite());
    assert!(psnr(&x, &Tensor::zeros(&[2, 4, 4])).is_err());
}

#[test]
fn psnr_matches_loop_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let x = random(&mut rng, &[2, 6, 5]);
        let r = random(&mut rng, &[2, 6, 5]);
        let mag = |t: &Tensor<f64>, i: usize| (t.data()[i].powi(2) + t.data()[30 + i].powi(2)).sqrt();
        let peak = (0..30).map(|i| mag(&r, i)).fold(0.0, f64::max);
        let mut mse = 0.0;
        for i in 0..30 {
            mse += (mag(&x, i) / peak - mag(&r, i) / peak).powi(2);
        }
        let want = 10.0 * (1.0 / (mse / 30.0)).log10();
        assert!((psnr(&x, &r).unwrap() - want).abs() < 1e-9);
    }
}

/// Per-position SSIM with an explicit 11×11 window sum.
fn ssim_oracle(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let k = 11;
    let raw: Vec<f64> = (0..k).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let norm: f64 = raw.iter().sum();
    let taps: Vec<f64> = raw.iter().map(|t| t / norm).collect();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=h - k {
        for ox in 0..=w - k {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let wt = taps[i] * taps[j];
                    let (a, b) = (x[(oy + i) * w + ox + j], y[(oy + i) * w + ox + j]);
                    mx += wt * a;
                    my += wt * b;
                    sxx += wt * a * a;
                    syy += wt * b * b;
                    sxy += wt * a * b;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_window_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| (v + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0)).collect();
        let got = ssim_values(&x, &y, 16, 16).unwrap();
        assert!((got - ssim_oracle(&x, &y, 16, 16)).abs() < 1e-9);
    }
}

#[test]
fn ssim_identity_symmetry_and_size() {
    let x: Vec<f64> = (0..256).map(|i| ((i / 16 + i % 16) % 2) as f64).collect();
    let inv: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
    assert!((ssim_values(&x, &x, 16, 16).unwrap() - 1.0).abs() < 1e-12);
    let a = ssim_values(&x, &inv, 16, 16).unwrap();
    assert!(a < 1.0);
    assert_eq!(a, ssim_values(&inv, &x, 16, 16).unwrap());
    assert!(ssim_values(&x[..100], &x[..100], 10, 10).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn ssim_is_at_most_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..144).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..144).map(|_| rng.random_range(0.0..1.0)).collect();
        let s = ssim_values(&x, &y, 12, 12).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn loss_is_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let i_gt = random(&mut rng, &[2, 4, 4]);
        let k_gt = fft2c(&i_gt).unwrap();
        let pair = [(random(&mut rng, &[2, 4, 4]), random(&mut rng, &[2, 4, 4]))];
        prop_assert!(loss_of(&pair, &k_gt, &i_gt, LossNorm::L2) > 0.0);
    }
}

#[test]
fn condition_frequencies_are_balanced() {
    let stream = training_stream(11, 3000, [4.0, 8.0], [1.0 / 3.0; 3]).unwrap();
    for q in RefQuality::ALL {
        let f = stream.iter().filter(|d| d.quality == q).count() as f64 / 3000.0;
        assert!((0.28..=0.39).contains(&f), "{q}: {f}");
    }
    assert!(stream.iter().all(|d| (4.0..=8.0).contains(&d.accel) && d.phantom_seed < EVAL_SEED_BASE));
    assert_eq!(stream, training_stream(11, 3000, [4.0, 8.0], [1.0 / 3.0; 3]).unwrap());
}

#[test]
fn invalid_streams_are_rejected() {
    assert!(training_stream(0, 1, [4.0, 8.0], [0.5, 0.5, 0.5]).is_err());
    assert!(training_stream(0, 1, [8.0, 4.0], [1.0 / 3.0; 3]).is_err());
    assert!(eval_seed(5, 0).is_err());
    assert!(eval_seed(u64::MAX, 1).is_err());
    assert_eq!(eval_seed(EVAL_SEED_BASE, 3).unwrap(), EVAL_SEED_BASE + 3);
}

#[test]
fn sample_descriptors_roundtrip_to_bytes() {
    let d = SampleDesc { phantom_seed: 0x0102, accel: 4.5, quality: RefQuality::Lq };
    let b = d.to_bytes();
    assert_eq!(&b[..2], &[2, 1]);
    assert_eq!(f64::from_bits(u64::from_le_bytes(b[8..16].try_into().unwrap())), 4.5);
    assert_eq!(b[16], 1);
}

fn tiny_train(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig { steps, seed, image_size: 16, ..Default::default() }
}

fn tiny_model() -> ModelConfig {
    let mut m = ModelConfig::toy();
    m.n_recurrent = 1;
    m
}

#[test]
fn zero_steps_leave_params_unchanged() {
    let cfg = tiny_train(0, 4);
    let model = crate::model::DuDoUniNeXt::new(&tiny_model()).unwrap();
    let init: ParamStore<f64> = init_params(&model, &cfg).unwrap();
    let out = train(&tiny_model(), &cfg, Some(init.clone()), |_, _| {}).unwrap();
    assert!(out.losses.is_empty());
    for ((_, a), (_, b)) in out.params.iter().zip(init.iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn training_is_deterministic() {
    let cfg = tiny_train(3, 9);
    let mut seen = Vec::new();
    let a = train::<f32>(&tiny_model(), &cfg, None, |s, l| seen.push((s, l))).unwrap();
    let b = train::<f32>(&tiny_model(), &cfg, None, |_, _| {}).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(seen.len(), 3);
    assert!(a.losses.iter().all(|l| l.is_finite() && *l > 0.0));
    for ((_, x), (_, y)) in a.params.iter().zip(b.params.iter()) {
        assert_eq!(x, y);
    }
    assert_ne!(a.params.iter().map(|(_, t)| t.sum()).sum::<f32>(), init_params::<f32>(&crate::model::DuDoUniNeXt::new(&tiny_model()).unwrap(), &cfg).unwrap().iter().map(|(_, t)| t.sum()).sum::<f32>());
}

#[test]
fn diverging_training_reports_the_step() {
    let cfg = TrainConfig { lr: 1e30, ..tiny_train(3, 1) };
    match train::<f32>(&tiny_model(), &cfg, None, |_, _| {}) {
        Err(crate::Error::NonFiniteLoss { step }) => assert!(step >= 1),
        other => panic!("expected a non-finite loss, got {:?}", other.map(|o| o.losses)),
    }
}

#[test]
fn train_config_validation() {
    assert!(TrainConfig { batch_size: 2, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { image_size: 8, accel_range: [4.0, 40.0], ..Default::default() }.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}

fn eval_cfg(accels: Vec<f64>) -> EvalConfig {
    EvalConfig { n_cases: 2, accels, image_size: 16, ..Default::default() }
}

#[test]
fn fully_sampled_evaluation_is_exact() {
    let model = crate::model::DuDoUniNeXt::new(&tiny_model()).unwrap();
    let params: ParamStore<f64> = ParamStore::from_specs(&model.param_specs(), 2, false).unwrap();
    let rep = evaluate(&tiny_model(), &params, &eval_cfg(vec![1.0])).unwrap();
    assert!(rep.records.iter().all(|r| r.psnr_db.is_infinite() && (r.ssim - 1.0).abs() < 1e-12));
}

#[test]
fn evaluation_table_and_baseline() {
    let model = crate::model::DuDoUniNeXt::new(&tiny_model()).unwrap();
    let params: ParamStore<f64> = ParamStore::from_specs(&model.param_specs(), 2, true).unwrap();
    let cfg = eval_cfg(vec![4.0, 8.0]);
    let rep = evaluate(&tiny_model(), &params, &cfg).unwrap();
    assert_eq!(rep.summary.len(), 3 * 2);
    assert_eq!(rep.records.len(), 3 * 2 * 2);
    for b in &rep.baseline {
        let pair = gen_phantom_pair::<f64>(16, b.seed).unwrap();
        let mask = make_cartesian_mask(16, 16, b.accel, ACS_FRAC, b.seed).unwrap();
        let k = fft2c(&pair.contrast_a).unwrap();
        let gt = crate::mri::ifft2c(&k).unwrap();
        let zf = crate::mri::ifft2c(&undersample(&k, &mask).unwrap()).unwrap();
        assert_eq!(b.psnr_db, psnr(&zf, &gt).unwrap());
        assert_eq!(b.ssim, ssim(&zf, &gt).unwrap());
        assert!(b.seed >= EVAL_SEED_BASE);
    }
    // untrained zero-tail model reproduces zero filling
    for (r, b) in rep.records.iter().zip(&rep.baseline) {
        assert!((r.psnr_db - b.psnr_db).abs() < 1e-9);
    }
    let bad = EvalConfig { seed: 10, ..cfg };
    assert!(matches!(evaluate(&tiny_model(), &params, &bad), Err(crate::Error::SeedOverlap)));
}
