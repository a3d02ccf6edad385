//! Finite-difference gradient suites at 64-bit precision.
//!
//! Each check builds a small random instance, binds every differentiable
//! input as a parameter and contracts the output with a fixed random
//! tensor so every output entry reaches the scalar loss.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{finite_diff_check, CheckOptions, CheckReport, Graph, ParamSpec, ParamStore, Tensor, Var, GATHER_ZERO};
use crate::error::Result;
use crate::nn::{Backbone, BackboneVariant, Drdb, Module, Rstb, Se, Stl, WindowAttention, Xbb, XbbConfig};

/// Tolerance for piecewise-linear or non-smooth checks.
pub const TOL: f64 = 1e-4;
/// Tolerance for smooth primitives.
pub const SMOOTH_TOL: f64 = 1e-6;
pub const STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Ops,
    Blocks,
    Model,
}

impl Scope {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ops" => Some(Scope::Ops),
            "blocks" => Some(Scope::Blocks),
            "model" => Some(Scope::Model),
            _ => None,
        }
    }
}

/// Outcome of one named check, aggregated over seeds.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub seeds: usize,
    pub tol: f64,
    pub max_rel_err: f64,
    pub passed: bool,
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Loss `sum(out ⊙ probe)` with a fixed random probe.
pub fn contract(g: &mut Graph<'_, f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let probe = rand_tensor(&mut rng, g.shape(out), 1.0);
    let probe = g.leaf(probe);
    let prod = g.mul(out, probe)?;
    g.sum(prod)
}

/// Runs `check` for `seeds` seeds and folds the reports.
pub fn over_seeds(
    name: impl Into<String>,
    seeds: usize,
    tol: f64,
    mut check: impl FnMut(u64) -> Result<CheckReport>,
) -> Result<SuiteResult> {
    let mut worst = 0f64;
    for s in 0..seeds as u64 {
        let r = check(s)?;
        worst = worst.max(r.max_rel_err);
    }
    Ok(SuiteResult {
        name: name.into(),
        seeds,
        tol,
        max_rel_err: worst,
        passed: worst < tol,
    })
}

pub fn options(tol: f64, seed: u64, max_entries: Option<usize>) -> CheckOptions {
    CheckOptions {
        step: STEP,
        tol,
        max_entries,
        seed,
        refine: false,
    }
}


pub fn block_options(seed: u64, max_entries: Option<usize>) -> CheckOptions {
    CheckOptions {
        refine: true,
        ..options(TOL, seed, max_entries)
    }
}

fn store(entries: &[(&str, Tensor<f64>)]) -> ParamStore<f64> {
    let mut p = ParamStore::new();
    for (n, t) in entries {
        p.insert(*n, t.clone()).unwrap();
    }
    p
}

type OpBuilder = fn(&mut ChaCha8Rng) -> (ParamStore<f64>, fn(&mut Graph<'_, f64>) -> Result<Var>);

fn op_cases() -> Vec<(&'static str, f64, OpBuilder)> {
    vec![
        ("conv2d_d1", SMOOTH_TOL, |r| {
            let p = store(&[
                ("x", rand_tensor(r, &[2, 6, 5], 1.0)),
                ("w", rand_tensor(r, &[3, 2, 3, 3], 1.0)),
                ("b", rand_tensor(r, &[3], 1.0)),
            ]);
            (p, |g| {
                let (x, w, b) = (g.p("x")?, g.p("w")?, g.p("b")?);
                let y = g.conv2d(x, w, Some(b), 1)?;
                contract(g, y, 1)
            })
        }),
        ("conv2d_d2", SMOOTH_TOL, |r| {
            let p = store(&[
                ("x", rand_tensor(r, &[2, 8, 8], 1.0)),
                ("w", rand_tensor(r, &[2, 2, 3, 3], 1.0)),
                ("b", rand_tensor(r, &[2], 1.0)),
            ]);
            (p, |g| {
                let (x, w, b) = (g.p("x")?, g.p("w")?, g.p("b")?);
                let y = g.conv2d(x, w, Some(b), 2)?;
                contract(g, y, 2)
            })
        }),
        ("dense", SMOOTH_TOL, |r| {
            let p = store(&[
                ("x", rand_tensor(r, &[2, 3, 4], 1.0)),
                ("w", rand_tensor(r, &[4, 3], 1.0)),
                ("b", rand_tensor(r, &[3], 1.0)),
            ]);
            (p, |g| {
                let (x, w, b) = (g.p("x")?, g.p("w")?, g.p("b")?);
                let y = g.dense(x, w, Some(b))?;
                contract(g, y, 3)
            })
        }),
        ("layernorm", SMOOTH_TOL, |r| {
            let p = store(&[
                ("x", rand_tensor(r, &[5, 6], 2.0)),
                ("g", rand_tensor(r, &[6], 1.0)),
                ("s", rand_tensor(r, &[6], 1.0)),
            ]);
            (p, |g| {
                let (x, ga, s) = (g.p("x")?, g.p("g")?, g.p("s")?);
                let y = g.layernorm(x, ga, s, 1e-5)?;
                contract(g, y, 4)
            })
        }),
        ("relu", TOL, |r| {
            let p = store(&[("x", rand_tensor(r, &[4, 5], 1.0))]);
            (p, |g| {
                let x = g.p("x")?;
                let y = g.relu(x)?;
                contract(g, y, 5)
            })
        }),
        ("gelu", SMOOTH_TOL, |r| {
            let p = store(&[("x", rand_tensor(r, &[4, 5], 3.0))]);
            (p, |g| {
                let x = g.p("x")?;
                let y = g.gelu(x)?;
                contract(g, y, 6)
            })
        }),
        ("sigmoid", SMOOTH_TOL, |r| {
            let p = store(&[("x", rand_tensor(r, &[4, 5], 3.0))]);
            (p, |g| {
                let x = g.p("x")?;
                let y = g.sigmoid(x)?;
                contract(g, y, 7)
            })
        }),
        ("softmax", SMOOTH_TOL, |r| {
            let p = store(&[("x", rand_tensor(r, &[3, 4, 5], 3.0))]);
            (p, |g| {
                let x = g.p("x")?;
                let a = g.softmax(x, 1)?;
                let b = g.softmax(x, 2)?;
                let y = g.add(a, b)?;
                contract(g, y, 8)
            })
        }),
        ("matmul", SMOOTH_TOL, |r| {
            let p = store(&[("a", rand_tensor(r, &[2, 3, 4], 1.0)), ("b", rand_tensor(r, &[2, 4, 5], 1.0))]);
            (p, |g| {
                let (a, b) = (g.p("a")?, g.p("b")?);
                let y = g.matmul(a, b)?;
                contract(g, y, 9)
            })
        }),
        ("matmul_nt", SMOOTH_TOL, |r| {
            let p = store(&[("a", rand_tensor(r, &[2, 3, 4], 1.0)), ("b", rand_tensor(r, &[2, 5, 4], 1.0))]);
            (p, |g| {
                let (a, b) = (g.p("a")?, g.p("b")?);
                let y = g.matmul_nt(a, b)?;
                contract(g, y, 10)
            })
        }),
        ("mul_add_sub_scale", SMOOTH_TOL, |r| {
            let p = store(&[("a", rand_tensor(r, &[3, 4], 1.0)), ("b", rand_tensor(r, &[3, 4], 1.0))]);
            (p, |g| {
                let (a, b) = (g.p("a")?, g.p("b")?);
                let m = g.mul(a, b)?;
                let s = g.sub(m, a)?;
                let t = g.scale(s, -1.5)?;
                let y = g.add(t, b)?;
                contract(g, y, 11)
            })
        }),
        ("maximum", TOL, |r| {
            let p = store(&[("a", rand_tensor(r, &[3, 4], 1.0)), ("b", rand_tensor(r, &[3, 4], 1.0))]);
            (p, |g| {
                let (a, b) = (g.p("a")?, g.p("b")?);
                let y = g.maximum(a, b)?;
                contract(g, y, 12)
            })
        }),
        ("broadcast_concat_gather", SMOOTH_TOL, |r| {
            let p = store(&[("a", rand_tensor(r, &[2, 3, 4], 1.0)), ("b", rand_tensor(r, &[3, 4], 1.0))]);
            (p, |g| {
                let (a, b) = (g.p("a")?, g.p("b")?);
                let s = g.add_broadcast(a, b)?;
                let c = g.concat(&[s, a])?;
                // reverse with two zero-padded slots
                let n = g.value(c).numel();
                let mut idx: Vec<usize> = (0..n).rev().collect();
                idx.push(GATHER_ZERO);
                idx.push(GATHER_ZERO);
                let y = g.gather(c, idx, &[n + 2])?;
                let y = g.reshape(y, &[2, n / 2 + 1])?;
                contract(g, y, 13)
            })
        }),
        ("channel_mean_scale", SMOOTH_TOL, |r| {
            let p = store(&[("x", rand_tensor(r, &[3, 4, 5], 1.0)), ("s", rand_tensor(r, &[3], 1.0))]);
            (p, |g| {
                let (x, s) = (g.p("x")?, g.p("s")?);
                let m = g.channel_mean(x)?;
                let ms = g.mul(m, s)?;
                let y = g.channel_scale(x, ms)?;
                contract(g, y, 14)
            })
        }),
        ("fft2c_ifft2c", SMOOTH_TOL, |r| {
            let p = store(&[("x", rand_tensor(r, &[2, 6, 8], 1.0)), ("k", rand_tensor(r, &[2, 6, 8], 1.0))]);
            (p, |g| {
                let (x, k) = (g.p("x")?, g.p("k")?);
                let a = g.fft2c(x)?;
                let b = g.ifft2c(k)?;
                let y = g.add(a, b)?;
                contract(g, y, 15)
            })
        }),
        ("select_l2norm_sum", SMOOTH_TOL, |r| {
            let p = store(&[("x", rand_tensor(r, &[2, 4, 4], 1.0))]);
            (p, |g| {
                let x = g.p("x")?;
                let meas = Tensor::from_fn(&[2, 4, 4], |i| i as f64 * 0.1);
                let keep = (0..32).map(|i| i % 4 == 1).collect();
                let d = g.select(x, &meas, keep)?;
                let n = g.l2_norm(d)?;
                let s = g.sum(d)?;
                g.add(n, s)
            })
        }),
    ]
}

/// Every primitive, 20 random instances each.
pub fn ops_suite(seeds: usize) -> Result<Vec<SuiteResult>> {
    op_cases()
        .into_iter()
        .map(|(name, tol, build)| {
            over_seeds(name, seeds, tol, |s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s * 7919 + 17);
                let (params, f) = build(&mut rng);
                finite_diff_check(f, &params, options(tol, s, None))
            })
        })
        .collect()
}

/// Runs the suite for `scope`.
pub fn run(scope: Scope, seeds: usize) -> Result<Vec<SuiteResult>> {
    match scope {
        Scope::Ops => ops_suite(seeds),
        Scope::Blocks => blocks_suite(seeds),
        Scope::Model => model_suite(seeds),
    }
}

pub fn summary_line(r: &SuiteResult) -> String {
    format!(
        "{} {:<28} seeds={:<3} max_rel_err={:.3e} tol={:.0e}",
        if r.passed { "PASS" } else { "FAIL" },
        r.name,
        r.seeds,
        r.max_rel_err,
        r.tol
    )
}

/// Random-init store for `specs` plus the named inputs.
pub fn block_store(specs: &[ParamSpec], seed: u64, inputs: &[(&str, Tensor<f64>)]) -> Result<ParamStore<f64>> {
    let mut p = ParamStore::from_specs(specs, seed, false)?;
    for (n, t) in inputs {
        p.insert(*n, t.clone())?;
    }
    Ok(p)
}

fn block_check<M: Module>(
    name: &str,
    seeds: usize,
    build: impl Fn() -> Result<M>,
    input_shape: &[usize],
    forward: impl Fn(&M, &mut Graph<'_, f64>, Var) -> Result<Var>,
) -> Result<SuiteResult> {
    let module = build()?;
    let specs = module.param_specs();
    over_seeds(name, seeds, TOL, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s + 101);
        let x = rand_tensor(&mut rng, input_shape, 1.0);
        let params = block_store(&specs, s, &[("x", x)])?;
        finite_diff_check(
            |g| {
                let x = g.p("x")?;
                let y = forward(&module, g, x)?;
                contract(g, y, s)
            },
            &params,
            block_options(s, Some(BLOCK_ENTRIES)),
        )
    })
}

/// Entries probed per parameter tensor in block checks.
pub const BLOCK_ENTRIES: usize = 12;

/// DRDB, WMSA, STL, RSTB, XBB, SE and the backbone variants.
pub fn nn_blocks_suite(seeds: usize) -> Result<Vec<SuiteResult>> {
    let mut out = vec![
        block_check("drdb", seeds, || Ok(Drdb::new("drdb", 4, 3, 3)), &[4, 8, 8], |m, g, x| m.forward(g, x))?,
        block_check(
            "wmsa",
            seeds,
            || WindowAttention::new("wmsa", 4, 2, 4, true),
            &[4, 8, 8],
            |m, g, x| m.forward(g, x),
        )?,
        block_check("stl", seeds, || Stl::new("stl", 8, 2, 4), &[8, 16, 16], |m, g, x| m.forward(g, x))?,
        block_check("stl_padded", seeds, || Stl::new("stl", 4, 2, 4), &[4, 6, 7], |m, g, x| m.forward(g, x))?,
        block_check("rstb", seeds, || Rstb::new("rstb", 4, 2, 4), &[4, 8, 8], |m, g, x| m.forward(g, x))?,
        block_check(
            "xbb",
            seeds,
            || Xbb::new("xbb", 8, 4, 2, 0.5, 8, 2),
            &[8, 16, 16],
            |m, g, x| Ok(m.forward(g, x)?.fused),
        )?,
        block_check("se", seeds, || Se::new("se", 8, 4), &[8, 5, 5], |m, g, x| m.forward(g, x))?,
    ];
    for v in [BackboneVariant::Drdn, BackboneVariant::Rstb, BackboneVariant::Ih(1)] {
        let cfg = XbbConfig {
            g0: 4,
            growth: 2,
            depth: 2,
            convs: 2,
            alpha: 0.5,
            window: 4,
            heads: 2,
            variant: v,
        };
        out.push(block_check(
            &format!("backbone_{}", v.name()),
            seeds.min(2),
            || Backbone::new("bb", &cfg),
            &[4, 8, 8],
            |m, g, x| m.forward(g, x),
        )?);
    }
    Ok(out)
}

/// Every block including the encoder and fusion modules.
pub fn blocks_suite(seeds: usize) -> Result<Vec<SuiteResult>> {
    let mut out = nn_blocks_suite(seeds)?;
    out.extend(crate::model::suites::encoder_fusion_suite(seeds)?);
    Ok(out)
}

pub fn model_suite(seeds: usize) -> Result<Vec<SuiteResult>> {
    crate::model::suites::model_suite(seeds)
}
