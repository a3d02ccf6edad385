use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diff::{Graph, ParamStore, Tensor};
use crate::suites::{nn_blocks_suite, rand_tensor, summary_line};

fn store_with<M: Module>(m: &M, zero_tails: bool, x: &Tensor<f64>) -> ParamStore<f64> {
    let mut p = ParamStore::from_specs(&m.param_specs(), 3, zero_tails).unwrap();
    p.insert("x", x.clone()).unwrap();
    p
}

fn set(p: &mut ParamStore<f64>, name: &str, data: &[f64]) {
    p.get_mut(name).unwrap().data_mut().copy_from_slice(data);
}

#[test]
fn drdb_identity_at_zero_fusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&mut rng, &[4, 6, 6], 1.0);
    let m = Drdb::new("d", 4, 3, 3);
    let p = store_with(&m, true, &x);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    let y = m.forward(&mut g, xv).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn drdb_hand_computed() {
    let x = Tensor::from_fn(&[1, 4, 4], |i| (i as f64 - 7.0) * 0.25);
    let m = Drdb::new("d", 1, 1, 1);
    let mut p = store_with(&m, false, &x);
    // dense layer: centre tap 2, bias -1 -> relu(2x - 1)
    let mut w = [0.0; 9];
    w[4] = 2.0;
    set(&mut p, "d.dense0.weight", &w);
    set(&mut p, "d.dense0.bias", &[-1.0]);
    // fusion: 0.5 * x + 3 * dense + 0.25
    set(&mut p, "d.fusion.weight", &[0.5, 3.0]);
    set(&mut p, "d.fusion.bias", &[0.25]);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    let y = m.forward(&mut g, xv).unwrap();
    for (i, &v) in x.data().iter().enumerate() {
        let want = 0.5 * v + 3.0 * (2.0 * v - 1.0).max(0.0) + 0.25 + v;
        assert!((g.value(y).data()[i] - want).abs() < 1e-12);
    }
    assert_eq!(dilation_schedule(5), vec![1, 2, 4, 1, 2]);
}

#[test]
fn drdb_rejects_wrong_channels() {
    let x = Tensor::zeros(&[3, 4, 4]);
    let m = Drdb::new("d", 4, 2, 2);
    let p = store_with(&m, true, &x);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    assert!(m.forward(&mut g, xv).is_err());
}

#[test]
fn wmsa_single_token_window_is_value_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_tensor(&mut rng, &[4, 3, 5], 1.0);
    let m = WindowAttention::new("a", 4, 2, 1, true).unwrap();
    let p = store_with(&m, false, &x);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    let y = m.forward(&mut g, xv).unwrap();
    let got = g.value(y).clone();

    let wqkv = p.get("a.qkv.weight").unwrap().data();
    let bqkv = p.get("a.qkv.bias").unwrap().data();
    let wp = p.get("a.proj.weight").unwrap().data();
    let bp = p.get("a.proj.bias").unwrap().data();
    let hw = 15;
    for pos in 0..hw {
        let v: Vec<f64> = (0..4)
            .map(|j| bqkv[8 + j] + (0..4).map(|i| x.data()[i * hw + pos] * wqkv[i * 12 + 8 + j]).sum::<f64>())
            .collect();
        for o in 0..4 {
            let want = bp[o] + (0..4).map(|j| v[j] * wp[j * 4 + o]).sum::<f64>();
            assert!((got.data()[o * hw + pos] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn wmsa_two_token_hand_case() {
    let m = WindowAttention::new("a", 1, 1, 1, false).unwrap();
    let tokens = Tensor::new(&[1, 2, 1], vec![1.0, 2.0]).unwrap();
    let mut p = store_with(&m, false, &tokens);
    // q = x, k = 0.5 x, v = -x + 1; identity projection
    set(&mut p, "a.qkv.weight", &[1.0, 0.5, -1.0]);
    set(&mut p, "a.qkv.bias", &[0.0, 0.0, 1.0]);
    set(&mut p, "a.proj.weight", &[1.0]);
    set(&mut p, "a.proj.bias", &[0.0]);
    let mut g = Graph::new(&p);
    let t = g.p("x").unwrap();
    let y = m.forward_tokens(&mut g, t).unwrap();
    let (x, k, v) = ([1.0f64, 2.0], [0.5f64, 1.0], [0.0f64, -1.0]);
    for i in 0..2 {
        let s = [x[i] * k[0], x[i] * k[1]];
        let z = s[0].exp() + s[1].exp();
        let want = (s[0].exp() * v[0] + s[1].exp() * v[1]) / z;
        assert!((g.value(y).data()[i] - want).abs() < 1e-12);
    }
}

#[test]
fn wmsa_without_bias_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..10 {
        let m = WindowAttention::new("a", 4, 2, 3, false).unwrap();
        let tokens = rand_tensor(&mut rng, &[2, 9, 4], 1.0);
        let mut perm: Vec<usize> = (0..9).collect();
        for i in (1..9).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted = Tensor::from_fn(&[2, 9, 4], |i| {
            let (w, t, c) = (i / 36, (i / 4) % 9, i % 4);
            tokens.data()[(w * 9 + perm[t]) * 4 + c]
        });
        let p = ParamStore::from_specs(&m.param_specs(), trial, false).unwrap();
        let run = |t: &Tensor<f64>| {
            let mut g = Graph::new(&p);
            let v = g.leaf(t.clone());
            let y = m.forward_tokens(&mut g, v).unwrap();
            g.value(y).clone()
        };
        let a = run(&tokens);
        let b = run(&permuted);
        for w in 0..2 {
            for t in 0..9 {
                for c in 0..4 {
                    let lhs = b.data()[(w * 9 + t) * 4 + c];
                    let rhs = a.data()[(w * 9 + perm[t]) * 4 + c];
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn wmsa_rejects_indivisible_heads() {
    assert!(WindowAttention::new("a", 6, 4, 4, true).is_err());
}

#[test]
fn partition_merge_roundtrip_with_padding() {
    let (c, h, w, win) = (3, 5, 7, 4);
    let (pi, shape) = partition_index(c, h, w, win);
    assert_eq!(shape, [4, 16, 3]);
    let mi = merge_index(c, h, w, win);
    for (dst, &src) in mi.iter().enumerate() {
        assert_eq!(pi[src], dst);
    }
}

#[test]
fn stl_identity_and_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for c in [8, 16] {
        for win in [4, 8] {
            let x = rand_tensor(&mut rng, &[c, 16, 16], 1.0);
            let m = Stl::new("s", c, 4, win).unwrap();
            let p = store_with(&m, true, &x);
            let mut g = Graph::new(&p);
            let xv = g.p("x").unwrap();
            let y = m.forward(&mut g, xv).unwrap();
            assert!(g.value(y).max_abs_diff(&x) == 0.0);
            let q = store_with(&m, false, &x);
            let mut g = Graph::new(&q);
            let xv = g.p("x").unwrap();
            let y = m.forward(&mut g, xv).unwrap();
            assert_eq!(g.shape(y), x.shape());
        }
    }
}

#[test]
fn xtl_widths() {
    assert_eq!(xtl_width(64, 0.5).unwrap(), 32);
    assert_eq!(xtl_width(5, 0.5).unwrap(), 2);
    assert_eq!(xtl_width(7, 1.0).unwrap(), 7);
    assert_eq!(xtl_width(48, 0.75).unwrap(), 36);
    assert!(xtl_width(5, 0.1).is_err());
    assert!(xtl_width(5, 0.0).is_err());
    assert!(xtl_width(5, 1.5).is_err());
}

#[test]
fn xbb_branch_widths_and_zero_fusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[8, 8, 8], 1.0);
    let m = Xbb::new("b", 8, 4, 2, 1.0, 4, 2).unwrap();
    assert_eq!(m.fusion.cin, 16);
    let mut p = store_with(&m, false, &x);
    p.get_mut("b.fusion.weight").unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    p.get_mut("b.fusion.bias").unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    let out = m.forward(&mut g, xv).unwrap();
    assert_eq!(g.shape(out.vit_branch), &[8, 8, 8]);
    assert_eq!(g.shape(out.cnn_branch), &[8, 8, 8]);
    assert!(g.value(out.fused).data().iter().all(|&v| v == 0.0));

    let half = Xbb::new("b", 8, 4, 2, 0.5, 4, 2).unwrap();
    let p = store_with(&half, false, &x);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    let out = half.forward(&mut g, xv).unwrap();
    assert_eq!(g.shape(out.vit_branch), &[4, 8, 8]);
    assert_eq!(g.shape(out.fused), &[8, 8, 8]);
}

#[test]
fn se_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[8, 4, 4], 1.0);
    let m = Se::new("se", 8, 4).unwrap();
    let mut p = store_with(&m, false, &x);
    set(&mut p, "se.excite.weight", &[0.0; 16]);
    set(&mut p, "se.excite.bias", &[0.0; 8]);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    let y = m.forward(&mut g, xv).unwrap();
    for (a, b) in g.value(y).data().iter().zip(x.data()) {
        assert_eq!(*a, 0.5 * b);
    }

    let c = Tensor::from_fn(&[3, 4, 4], |i| (i / 16) as f64 * 1.5 - 1.0);
    let mut g = Graph::new(&p);
    let cv = g.leaf(c);
    let pooled = g.channel_mean(cv).unwrap();
    assert_eq!(g.value(pooled).data(), &[-1.0, 0.5, 2.0]);

    assert!(Se::new("se", 3, 4).is_err());
}

#[test]
fn rstb_identity_at_zero_tails() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_tensor(&mut rng, &[4, 8, 8], 1.0);
    let m = Rstb::new("r", 4, 2, 4).unwrap();
    let p = store_with(&m, true, &x);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    let y = m.forward(&mut g, xv).unwrap();
    assert_eq!(g.value(y), &x);
}

fn cfg(variant: BackboneVariant, depth: usize) -> XbbConfig {
    XbbConfig {
        g0: 8,
        growth: 4,
        depth,
        convs: 2,
        alpha: 0.5,
        window: 4,
        heads: 2,
        variant,
    }
}

#[test]
fn backbone_layouts() {
    let ih3 = Backbone::new("bb", &cfg(BackboneVariant::Ih(3), 4)).unwrap();
    assert_eq!(ih3.kinds(), [BlockKind::Drdb, BlockKind::Rstb, BlockKind::Rstb, BlockKind::Rstb]);
    let ih1 = Backbone::new("bb", &cfg(BackboneVariant::Ih(1), 4)).unwrap();
    assert_eq!(ih1.kinds(), [BlockKind::Drdb, BlockKind::Drdb, BlockKind::Drdb, BlockKind::Rstb]);
    assert!(Backbone::new("bb", &cfg(BackboneVariant::Ih(5), 4)).is_err());
    let one = Backbone::new("bb", &cfg(BackboneVariant::Xbb, 1)).unwrap();
    assert_eq!(one.gff.cin, 8);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_tensor(&mut rng, &[8, 8, 8], 1.0);
    for v in BackboneVariant::ABLATION {
        let b = Backbone::new("bb", &cfg(v, 3)).unwrap();
        let p = store_with(&b, false, &x);
        let mut g = Graph::new(&p);
        let xv = g.p("x").unwrap();
        let y = b.forward(&mut g, xv).unwrap();
        assert_eq!(g.shape(y), &[8, 8, 8], "{}", v.name());
        assert_eq!(BackboneVariant::parse(&v.name()), Some(v));
    }
}

#[test]
fn single_block_backbone_is_conv_of_block_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut rng, &[8, 8, 8], 1.0);
    let b = Backbone::new("bb", &cfg(BackboneVariant::Xbb, 1)).unwrap();
    let p = store_with(&b, false, &x);
    let mut g = Graph::new(&p);
    let xv = g.p("x").unwrap();
    let y = b.forward(&mut g, xv).unwrap();
    let f1 = b.blocks[0].forward(&mut g, xv).unwrap();
    let y2 = b.gff.forward(&mut g, f1).unwrap();
    assert_eq!(g.value(y), g.value(y2));
}

#[test]
fn invalid_configs() {
    let mut c = cfg(BackboneVariant::Xbb, 2);
    c.heads = 3;
    assert!(c.validate().is_err());
    c = cfg(BackboneVariant::Xbb, 2);
    c.alpha = 0.0;
    assert!(c.validate().is_err());
    c = cfg(BackboneVariant::Xbb, 0);
    assert!(c.validate().is_err());
}

#[test]
fn parameter_counts() {
    assert_eq!(Conv::new("c", 2, 3, 1).count_params(), 9);
    assert_eq!(Dense::new("d", 4, 5).count_params(), 25);
    let mut last = 0;
    for alpha in [0.25, 0.5, 0.75, 1.0] {
        let mut c = cfg(BackboneVariant::Xbb, 2);
        c.alpha = alpha;
        let n = Backbone::new("bb", &c).unwrap().count_params();
        assert!(n > last);
        last = n;
    }
    let b = Backbone::new("bb", &cfg(BackboneVariant::Xbb, 2)).unwrap();
    let p = ParamStore::<f32>::from_specs(&b.param_specs(), 0, true).unwrap();
    assert_eq!(p.numel(), b.count_params());
}

#[test]
fn block_gradients_match_finite_differences() {
    for r in nn_blocks_suite(2).unwrap() {
        assert!(r.passed, "{}", summary_line(&r));
    }
}

