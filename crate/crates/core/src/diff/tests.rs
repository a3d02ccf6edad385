use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::suites::rand_tensor;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, data.to_vec()).unwrap()
}

/// Direct nested-loop "same" convolution.
fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], dil: usize) -> Tensor<f64> {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let pad = ((k - 1) * dil / 2) as i64;
    let mut out = Tensor::zeros(&[cout, h, wd]);
    for co in 0..cout {
        for y in 0..h {
            for xx in 0..wd {
                let mut acc = b[co];
                for ci in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = y as i64 + (ky * dil) as i64 - pad;
                            let ix = xx as i64 + (kx * dil) as i64 - pad;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                                continue;
                            }
                            acc += w.data()[((co * cin + ci) * k + ky) * k + kx]
                                * x.data()[(ci * h + iy as usize) * wd + ix as usize];
                        }
                    }
                }
                out.data_mut()[(co * h + y) * wd + xx] = acc;
            }
        }
    }
    out
}

fn conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, dil: usize) -> Tensor<f64> {
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let y = tape.conv2d(xv, wv, Some(bv), dil).unwrap();
    tape.value(y).clone()
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = rand_tensor(&mut rng, &[3, 5, 4], 1.0);
    let mut w = Tensor::zeros(&[3, 3, 1, 1]);
    for i in 0..3 {
        w.data_mut()[i * 3 + i] = 1.0;
    }
    assert_eq!(conv(&x, &w, &Tensor::zeros(&[3]), 1), x);
}

#[test]
fn conv_delta_gives_kernel_footprint() {
    let mut x = Tensor::zeros(&[1, 5, 5]);
    x.data_mut()[12] = 1.0;
    let w = Tensor::full(&[1, 1, 3, 3], 1.0);
    let y = conv(&x, &w, &Tensor::zeros(&[1]), 1);
    for r in 0..5 {
        for c in 0..5 {
            let want = if (1..=3).contains(&r) && (1..=3).contains(&c) { 1.0 } else { 0.0 };
            assert_eq!(y.data()[r * 5 + c], want);
        }
    }
}

#[test]
fn conv_matches_nested_loop_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[2, 8, 8], 1.0);
        let w = rand_tensor(&mut rng, &[3, 2, 3, 3], 1.0);
        let b = rand_tensor(&mut rng, &[3], 1.0);
        for dil in [1, 2, 3] {
            let got = conv(&x, &w, &b, dil);
            assert!(got.max_abs_diff(&conv_oracle(&x, &w, b.data(), dil)) < 1e-12);
        }
    }
}

#[test]
fn conv_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&mut rng, &[2, 6, 6], 1.0);
    let y = rand_tensor(&mut rng, &[2, 6, 6], 1.0);
    let w = rand_tensor(&mut rng, &[2, 2, 3, 3], 1.0);
    let b = rand_tensor(&mut rng, &[2], 1.0);
    let z = Tensor::zeros(&[2]);
    let (a, c) = (1.7, -0.6);
    let mix = Tensor::from_fn(&[2, 6, 6], |i| a * x.data()[i] + c * y.data()[i]);
    let lhs = conv(&mix, &w, &b, 2);
    let cx = conv(&x, &w, &z, 2);
    let cy = conv(&y, &w, &z, 2);
    let bias_term = conv(&Tensor::zeros(&[2, 6, 6]), &w, &b, 2);
    let rhs = Tensor::from_fn(&[2, 6, 6], |i| a * cx.data()[i] + c * cy.data()[i] + bias_term.data()[i]);
    assert!(lhs.max_abs_diff(&rhs) < 1e-10);
}

#[test]
fn conv_errors() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[2, 4, 4]));
    let w_bad_c = tape.leaf(Tensor::zeros(&[1, 3, 3, 3]));
    let w_even = tape.leaf(Tensor::zeros(&[1, 2, 2, 2]));
    let w = tape.leaf(Tensor::zeros(&[1, 2, 3, 3]));
    assert!(matches!(tape.conv2d(x, w_bad_c, None, 1), Err(Error::Shape { .. })));
    assert!(matches!(tape.conv2d(x, w_even, None, 1), Err(Error::Invalid { .. })));
    assert!(matches!(tape.conv2d(x, w, None, 0), Err(Error::Invalid { .. })));
}

fn dense(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let y = tape.dense(xv, wv, Some(bv)).unwrap();
    tape.value(y).clone()
}

#[test]
fn dense_cases() {
    let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(dense(&x, &eye, &Tensor::zeros(&[2])), x);
    assert_eq!(dense(&t(&[1], &[5.0]), &t(&[1, 1], &[2.0]), &t(&[1], &[3.0])).data(), &[13.0]);

    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[5, 4], 1.0);
        let w = rand_tensor(&mut rng, &[4, 3], 1.0);
        let b = rand_tensor(&mut rng, &[3], 1.0);
        let got = dense(&x, &w, &b);
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = b.data()[j];
                for k in 0..4 {
                    acc += x.data()[i * 4 + k] * w.data()[k * 3 + j];
                }
                assert!((got.data()[i * 3 + j] - acc).abs() < 1e-12);
            }
        }
    }

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[2, 3]));
    let w = tape.leaf(Tensor::zeros(&[4, 3]));
    assert!(tape.dense(x, w, None).is_err());
}

fn layernorm(x: &Tensor<f64>) -> Tensor<f64> {
    let c = *x.shape().last().unwrap();
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let g = tape.leaf(Tensor::full(&[c], 1.0));
    let s = tape.leaf(Tensor::zeros(&[c]));
    let y = tape.layernorm(xv, g, s, 1e-5).unwrap();
    tape.value(y).clone()
}

#[test]
fn layernorm_cases() {
    assert!(layernorm(&Tensor::full(&[4], 3.0)).data().iter().all(|&v| v == 0.0));
    let y = layernorm(&t(&[2], &[1.0, -1.0]));
    let want = 1.0 / libm::sqrt(1.0 + 1e-5);
    assert!((y.data()[0] - want).abs() < 1e-12 && (y.data()[1] + want).abs() < 1e-12);
}

#[test]
fn pointwise_values() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[3], &[-1.0, 0.0, 2.0]));
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = tape.leaf(t(&[1], &[0.0]));
    let s = tape.sigmoid(z).unwrap();
    assert_eq!(tape.value(s).data(), &[0.5]);
    let g = tape.gelu(x).unwrap();
    assert!((tape.value(g).data()[2] - 2.0 * 0.5 * (1.0 + libm::erf(2.0 / libm::sqrt(2.0)))).abs() < 1e-15);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut p = ParamStore::new();
    p.insert("x", t(&[2], &[0.0, 1.0])).unwrap();
    let mut g = Graph::new(&p);
    let x = g.p("x").unwrap();
    let r = g.relu(x).unwrap();
    let l = g.sum(r).unwrap();
    let tape = g.into_tape();
    let mut p2 = p.clone();
    tape.backward(l, &mut p2).unwrap();
    assert_eq!(p2.grad("x").unwrap().data(), &[0.0, 1.0]);
}

fn softmax(x: &Tensor<f64>, axis: usize) -> Tensor<f64> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let y = tape.softmax(xv, axis).unwrap();
    tape.value(y).clone()
}

#[test]
fn softmax_cases() {
    assert_eq!(softmax(&t(&[2], &[0.0, 0.0]), 0).data(), &[0.5, 0.5]);
    assert_eq!(softmax(&t(&[1], &[7.3]), 0).data(), &[1.0]);
    let y = softmax(&t(&[3], &[1.0, 2.0, 3.0]), 0);
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
        assert!((y.data()[i] - v.exp() / z).abs() < 1e-12);
    }
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[2, 2]));
    assert!(tape.softmax(x, 2).is_err());
}

proptest! {
    #[test]
    fn softmax_normalised_and_shift_invariant(
        xs in proptest::collection::vec(-50.0f64..50.0, 12),
        shift in -20.0f64..20.0,
        axis in 0usize..2,
    ) {
        let x = t(&[3, 4], &xs);
        let y = softmax(&x, axis);
        let (outer, len, inner) = kernels::axis_split(&[3, 4], axis);
        for o in 0..outer {
            for i in 0..inner {
                let s: f64 = (0..len).map(|k| y.data()[o * len * inner + k * inner + i]).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
        prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        let shifted = softmax(&x.map(|v| v + shift), axis);
        prop_assert!(shifted.max_abs_diff(&y) < 1e-12);
    }
}

#[test]
fn backward_simple_cases() {
    let mut p = ParamStore::new();
    p.insert("w", t(&[2], &[1.0, 2.0])).unwrap();
    p.insert("unused", t(&[3], &[4.0, 5.0, 6.0])).unwrap();

    let mut g = Graph::new(&p);
    let w = g.p("w").unwrap();
    let l = g.sum(w).unwrap();
    let tape = g.into_tape();
    let mut q = p.clone();
    tape.backward(l, &mut q).unwrap();
    assert_eq!(q.grad("w").unwrap().data(), &[1.0, 1.0]);
    assert_eq!(q.grad("unused").unwrap().data(), &[0.0, 0.0, 0.0]);

    // accumulation until explicitly cleared
    tape.backward(l, &mut q).unwrap();
    assert_eq!(q.grad("w").unwrap().data(), &[2.0, 2.0]);
    q.zero_grads();
    assert_eq!(q.grad("w").unwrap().data(), &[0.0, 0.0]);

    let mut g = Graph::new(&p);
    let w = g.p("w").unwrap();
    let sq = g.mul(w, w).unwrap();
    let s = g.sum(sq).unwrap();
    let l = g.scale(s, 0.5).unwrap();
    let tape = g.into_tape();
    tape.backward(l, &mut q).unwrap();
    assert_eq!(q.grad("w").unwrap().data(), &[1.0, 2.0]);
}

#[test]
fn backward_errors() {
    let mut p = ParamStore::<f64>::new();
    p.insert("w", t(&[2], &[1.0, 2.0])).unwrap();
    let mut g = Graph::new(&p);
    let w = g.p("w").unwrap();
    let tape = g.into_tape();
    assert_eq!(tape.backward(w, &mut p.clone()), Err(Error::NonScalarLoss(vec![2])));
    let empty = Tape::<f64>::new();
    let mut t2 = Tape::<f64>::new();
    let v = t2.leaf(Tensor::scalar(1.0));
    assert_eq!(empty.backward(v, &mut p.clone()), Err(Error::EmptyTape));
}

#[test]
fn non_finite_values_are_errors() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::scalar(1e308));
    assert_eq!(tape.scale(x, 10.0), Err(Error::NonFinite { op: "scale" }));
}

#[test]
fn unknown_and_duplicate_params() {
    let mut p = ParamStore::<f64>::new();
    p.insert("a", Tensor::zeros(&[1])).unwrap();
    assert_eq!(p.insert("a", Tensor::zeros(&[1])), Err(Error::DuplicateParam("a".into())));
    let mut g = Graph::new(&p);
    assert_eq!(g.p("b"), Err(Error::UnknownParam("b".into())));
}

#[test]
fn finite_diff_constant_function() {
    let mut p = ParamStore::new();
    p.insert("w", t(&[3], &[0.3, -1.0, 2.0])).unwrap();
    let r = finite_diff_check(|g| Ok(g.leaf(Tensor::scalar(4.0))), &p, CheckOptions::default()).unwrap();
    assert!(r.passed);
    assert!(r.max_rel_err < 1e-8);
}

#[test]
fn finite_diff_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut p = ParamStore::new();
    p.insert("x", rand_tensor(&mut rng, &[1, 4, 1], 1.0)).unwrap();
    let a = rand_tensor(&mut rng, &[1, 4, 4], 1.0);
    let opts = CheckOptions { tol: 1e-8, ..Default::default() };
    let r = finite_diff_check(
        |g| {
            // xᵀ A x through two batched products
            let x = g.p("x")?;
            let av = g.leaf(a.clone());
            let ax = g.matmul(av, x)?;
            let prod = g.mul(ax, x)?;
            g.sum(prod)
        },
        &p,
        opts,
    )
    .unwrap();
    assert!(r.passed, "{}", r.max_rel_err);
}

#[test]
fn finite_diff_rejects_non_finite() {
    let mut p = ParamStore::new();
    p.insert("w", t(&[1], &[1.0])).unwrap();
    let err = finite_diff_check(|g| Ok(g.leaf(Tensor::scalar(f64::NAN))), &p, CheckOptions::default());
    assert!(err.is_err());
}

#[test]
fn op_gradients_match_finite_differences() {
    for r in crate::suites::ops_suite(20).unwrap() {
        assert!(r.passed, "{}", crate::suites::summary_line(&r));
    }
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, &[2, 8, 8], 1.0);
        let w = rand_tensor(&mut rng, &[2, 2, 3, 3], 1.0);
        let b = rand_tensor(&mut rng, &[2], 1.0);
        conv(&x, &w, &b, 2).into_data()
    };
    let a: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn params_from_specs_share_names() {
    let specs = vec![
        ParamSpec::new("a", &[2, 2], Init::Uniform(0.5)),
        ParamSpec::new("b", &[3], Init::Tail(0.5)),
        ParamSpec::new("a", &[2, 2], Init::Uniform(0.5)),
    ];
    let p = ParamStore::<f64>::from_specs(&specs, 1, true).unwrap();
    assert_eq!(p.len(), 2);
    assert_eq!(p.numel(), 7);
    assert!(p.get("b").unwrap().data().iter().all(|&v| v == 0.0));
    assert_eq!(p.names().collect::<Vec<_>>(), ["a", "b"]);
    let q = ParamStore::<f64>::from_specs(&specs, 1, false).unwrap();
    assert!(q.get("b").unwrap().data().iter().any(|&v| v != 0.0));
    assert_eq!(ParamStore::<f64>::from_specs(&specs, 1, true).unwrap(), p);
}

#[test]
fn refinement_rescues_kink_probes_only() {
    let mut p = ParamStore::new();
    p.insert("x", Tensor::new(&[3], vec![5e-5, 1.0, -1.0]).unwrap()).unwrap();
    let f = |g: &mut Graph<'_, f64>| {
        let x = g.p("x")?;
        let y = g.relu(x)?;
        g.sum(y)
    };
    let plain = finite_diff_check(f, &p, CheckOptions::default()).unwrap();
    assert!(!plain.passed);
    let refine = CheckOptions { refine: true, ..Default::default() };
    let refined = finite_diff_check(f, &p, refine).unwrap();
    assert!(refined.passed);
    assert_eq!(refined.params[0].refined, 1);

    // A kink inside even the smallest stencil is still reported.
    p.get_mut("x").unwrap().data_mut().copy_from_slice(&[5e-7, 1.0, -1.0]);
    assert!(!finite_diff_check(f, &p, refine).unwrap().passed);

    // A wrong gradient does not converge as the step shrinks.
    let wrong = |g: &mut Graph<'_, f64>| {
        let x = g.p("x")?;
        let frozen = g.value(x).clone();
        let k = g.leaf(frozen);
        let y = g.mul(x, k)?;
        g.sum(y)
    };
    assert!(!finite_diff_check(wrong, &p, refine).unwrap().passed);
}
