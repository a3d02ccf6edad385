//! Finite-difference checks for the encoder, fusion, both domain networks
//! and the end-to-end model.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DuDoUniNeXt, Encoder, FeatureFusion, Fusion, IUniNeXt, KNeXt, Layout, ModelConfig, ModelInput, ShallowEncoder};
use crate::diff::{finite_diff_check, Var};
use crate::error::Result;
use crate::mri::{fft2c, gen_phantom_pair, make_cartesian_mask, undersample, RefQuality, ACS_FRAC};
use crate::nn::Module;
use crate::suites::{block_options, block_store, contract, over_seeds, rand_tensor, SuiteResult, BLOCK_ENTRIES, TOL};

/// Entries probed per parameter tensor in end-to-end checks.
pub const MODEL_ENTRIES: usize = 2;

fn small() -> ModelConfig {
    let mut c = ModelConfig::toy();
    c.n_recurrent = 1;
    c
}

/// Checks a module fed by two random `shape` inputs bound as `a` and `b`.
fn pair_check<M: Module>(
    name: &str,
    seeds: usize,
    module: &M,
    shape: &[usize],
    entries: usize,
    f: impl Fn(&M, &mut crate::diff::Graph<'_, f64>, Var, Var) -> Result<Var>,
) -> Result<SuiteResult> {
    let specs = module.param_specs();
    over_seeds(name, seeds, TOL, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s + 211);
        let a = rand_tensor(&mut rng, shape, 1.0);
        let b = rand_tensor(&mut rng, shape, 1.0);
        let p = block_store(&specs, s, &[("a", a), ("b", b)])?;
        finite_diff_check(
            |g| {
                let (a, b) = (g.p("a")?, g.p("b")?);
                let y = f(module, g, a, b)?;
                contract(g, y, s)
            },
            &p,
            block_options(s, Some(entries)),
        )
    })
}

/// PaSS encoder, adaptive fusion, I-UniNeXt and K-NeXt.
pub fn encoder_fusion_suite(seeds: usize) -> Result<Vec<SuiteResult>> {
    let cfg = small();
    let mut out = Vec::new();
    for &mode in Encoder::ALL {
        let enc = ShallowEncoder::new("pass", mode, 2, 8, 2);
        out.push(pair_check(&format!("encoder_{mode}"), seeds, &enc, &[2, 8, 8], BLOCK_ENTRIES, |m, g, a, b| {
            let (t, r) = m.forward(g, a, Some(b))?;
            let r = r.expect("reference encoded");
            g.concat(&[t, r])
        })?);
    }
    for variant in [Fusion::AdaC2F, Fusion::HeMIS] {
        let fu = FeatureFusion::new("fuse", variant, 8, 2, [8, 4])?;
        out.push(pair_check(&format!("fusion_{variant}"), seeds, &fu, &[8, 8, 8], BLOCK_ENTRIES, |m, g, a, b| {
            m.forward(g, a, Some(b))
        })?);
    }
    let mut icfg = cfg.clone();
    icfg.image.depth = 2;
    let inet = IUniNeXt::new("inet", &icfg)?;
    out.push(pair_check("i_uninext", seeds, &inet, &[2, 16, 16], MODEL_ENTRIES, |m, g, a, b| {
        m.forward(g, a, Some(b))
    })?);
    let knet = KNeXt::new("knet", &cfg, false)?;
    out.push(pair_check("k_next", seeds, &knet, &[2, 16, 16], MODEL_ENTRIES, |m, g, a, _| m.forward(g, a, None))?);
    Ok(out)
}

/// A `size`×`size` phantom problem with a 4× mask and the given reference quality.
pub fn toy_input(size: usize, seed: u64, quality: RefQuality) -> Result<ModelInput<f64>> {
    let pair = gen_phantom_pair::<f64>(size, seed)?;
    let mask = make_cartesian_mask(size, size, 4.0, ACS_FRAC, seed)?;
    let k_sub = undersample(&fft2c(&pair.contrast_a)?, &mask)?;
    let (i_ref, ac) = crate::mri::degrade_reference(&pair.contrast_b, quality, seed)?;
    Ok(ModelInput { k_sub, mask, i_ref, ac })
}

/// The configurations exercised end to end: every layout with the default
/// fusion, then every other fusion with the default layout. Encoder variants
/// and alternative backbones are checked at block level.
pub fn model_configs() -> Vec<(alloc::string::String, ModelConfig)> {
    let base = small();
    let mut v = Vec::new();
    for &layout in Layout::ALL {
        v.push((format!("layout_{layout}"), ModelConfig { layout, ..base.clone() }));
    }
    for &fusion in Fusion::ALL.iter().filter(|&&f| f != base.fusion) {
        v.push((format!("fusion_{fusion}"), ModelConfig { fusion, ..base.clone() }));
    }
    v
}

/// End-to-end gradient checks at 16×16, G0 = 8, one recurrent block.
pub fn model_suite(seeds: usize) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    for (name, cfg) in model_configs() {
        let model = DuDoUniNeXt::new(&cfg)?;
        let specs = model.param_specs();
        out.push(over_seeds(format!("model_{name}"), seeds, TOL, |s| {
            let input = toy_input(16, s, RefQuality::Hq)?;
            let p = block_store(&specs, s, &[])?;
            finite_diff_check(
                |g| {
                    let o = model.forward(g, &input)?;
                    contract(g, o.i_rec, s)
                },
                &p,
                block_options(s, Some(MODEL_ENTRIES)),
            )
        })?);
    }
    Ok(out)
}

