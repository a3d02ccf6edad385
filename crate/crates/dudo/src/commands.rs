//! The six command-line verbs as library functions.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use dudo_core::model::{DuDoUniNeXt, Encoder, Fusion, Layout, ModelConfig};
use dudo_core::mri::{fft2c, ifft2c, RefQuality};
use dudo_core::nn::{BackboneVariant, Module};
use dudo_core::suites::{self, Scope, SuiteResult};
use dudo_core::train::{self, materialize, psnr, ssim, EvalReport, SampleDesc, TrainOutcome};
use dudo_core::{Real, Tensor};

use crate::checkpoint::{bind_to_model, load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{number, Manifest};
use crate::report::{self, AblationRow};
use crate::tensor_io::{save_pgm, save_tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

macro_rules! dispatch {
    ($p:expr, $f:ident ( $($arg:expr),* )) => {
        match $p {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Fusion,
    Layout,
    Encoder,
    Backbone,
    Alpha,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Fusion => "fusion",
            Axis::Layout => "layout",
            Axis::Encoder => "encoder",
            Axis::Backbone => "backbone",
            Axis::Alpha => "alpha",
        }
    }
}

pub const ALPHA_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Hex SHA-256 over the byte encoding of every descriptor in order.
pub fn stream_hash(stream: &[SampleDesc]) -> String {
    let mut h = Sha256::new();
    for d in stream {
        h.update(d.to_bytes());
    }
    hex::encode(h.finalize())
}

// ---------------------------------------------------------------- simulate

pub const SIMULATE_ARTIFACTS: [&str; 5] = ["target", "reference", "mask", "kspace_undersampled", "zero_filled"];

/// `log(1 + |k|)` scaled to a peak of one, for viewing k-space.
fn kspace_preview<T: Real>(k: &Tensor<T>) -> Tensor<f64> {
    let s = k.shape();
    let mag = dudo_core::mri::magnitude(k);
    let logs: Vec<f64> = mag.iter().map(|m| m.f64().ln_1p()).collect();
    let peak = logs.iter().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    Tensor::new(&[s[1], s[2]], logs.into_iter().map(|v| v * scale).collect()).expect("preview shape")
}

fn simulate_impl<T: Real>(cfg: &RunConfig, seed: u64, accel: f64, out: &Path, precision: Precision) -> CliResult<Manifest> {
    let size = cfg.train.image_size;
    let desc = SampleDesc { phantom_seed: seed, accel, quality: RefQuality::Hq };
    let sample = materialize::<T>(&desc, size, cfg.train.acs_frac)?;
    let pair = dudo_core::mri::gen_phantom_pair::<T>(size, seed)?;
    let zf = ifft2c(&sample.input.k_sub)?;
    let mask: Tensor<T> = sample.input.mask.to_tensor();
    create_dir(out)?;
    let tensors: [(&str, &Tensor<T>); 5] = [
        ("target", &pair.contrast_a),
        ("reference", &pair.contrast_b),
        ("mask", &mask),
        ("kspace_undersampled", &sample.input.k_sub),
        ("zero_filled", &zf),
    ];
    let mut m = Manifest::new("simulate", cfg.hash(), seed, precision.as_str());
    for (name, t) in tensors {
        let file = format!("{name}.ddut");
        let preview = format!("{name}.pgm");
        save_tensor(&out.join(&file), t)?;
        if name == "kspace_undersampled" {
            save_pgm(&out.join(&preview), &kspace_preview(t))?;
        } else {
            save_pgm(&out.join(&preview), t)?;
        }
        m.artifact(name, &file, Some(&preview));
    }
    m.detail("accel", number(accel));
    m.detail("image_size", size);
    m.detail("sampled_columns", sample.input.mask.sampled_columns());
    m.detail("zero_filled_psnr_db", number(psnr(&zf, &sample.i_gt)?));
    m.detail("zero_filled_ssim", number(ssim(&zf, &sample.i_gt)?));
    m.write(out)?;
    Ok(m)
}

/// Writes a phantom pair, its mask, the undersampled k-space and the
/// zero-filled reconstruction, each as a tensor file plus a PGM preview.
pub fn simulate(cfg: &RunConfig, seed: u64, accel: f64, out: &Path, precision: Precision) -> CliResult<Manifest> {
    if !(accel >= 1.0) {
        return Err(CliError::Validation(format!("acceleration {accel} is below 1")));
    }
    dispatch!(precision, simulate_impl(cfg, seed, accel, out, precision))
}

// ------------------------------------------------------------------- train

/// Result of [`train`]: the run's manifest and its loss curve.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub manifest: Manifest,
    pub losses: Vec<f64>,
    pub stream_hash: String,
}

fn finish_train<T: Real>(
    cfg: &RunConfig,
    out: &Path,
    precision: Precision,
    run: TrainOutcome<T>,
) -> CliResult<TrainSummary> {
    create_dir(out)?;
    save_checkpoint(&out.join("checkpoint"), &run.params)?;
    report::write_losses(&out.join("loss.csv"), &run.losses)?;
    let hash = stream_hash(&run.stream);
    let mut m = Manifest::new("train", cfg.hash(), cfg.train.seed, precision.as_str());
    m.artifact("checkpoint", "checkpoint/index.json", None);
    m.artifact("loss", "loss.csv", None);
    m.detail("steps", run.losses.len());
    m.detail("stream_hash", hash.clone());
    m.detail("final_loss", run.losses.last().map_or(serde_json::Value::Null, |&l| number(l)));
    m.write(out)?;
    Ok(TrainSummary { manifest: m, losses: run.losses, stream_hash: hash })
}

fn train_impl<T: Real>(cfg: &RunConfig, out: &Path, precision: Precision, verbose: bool) -> CliResult<TrainSummary> {
    let started = Instant::now();
    let every = (cfg.train.steps / 20).max(1);
    let run = train::train::<T>(&cfg.model_config(), &cfg.train_config(), None, |step, loss| {
        if verbose && (step % every == 0 || step + 1 == cfg.train.steps) {
            eprintln!("step {step:>6}  loss {loss:.6}  {:.1}s", started.elapsed().as_secs_f64());
        }
    })?;
    finish_train(cfg, out, precision, run)
}

/// Trains from a fresh initialisation and writes the checkpoint, the loss
/// curve and a manifest to `out`.
pub fn train(cfg: &RunConfig, out: &Path, precision: Precision, verbose: bool) -> CliResult<TrainSummary> {
    dispatch!(precision, train_impl(cfg, out, precision, verbose))
}

// -------------------------------------------------------------------- eval

fn eval_impl<T: Real>(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path, precision: Precision) -> CliResult<EvalReport> {
    let model_cfg = cfg.model_config();
    let model = DuDoUniNeXt::new(&model_cfg)?;
    let params = match checkpoint {
        Some(dir) => bind_to_model(&model, &load_checkpoint::<T>(dir)?, dir)?,
        None => train::init_params::<T>(&model, &cfg.train_config())?,
    };
    let rep = train::evaluate(&model_cfg, &params, &cfg.eval_config())?;
    create_dir(out)?;
    report::write_metrics(&out.join("metrics.csv"), &rep.records)?;
    report::write_metrics(&out.join("baseline.csv"), &rep.baseline)?;
    report::write_summary(&out.join("summary.csv"), &rep.summary)?;
    let mut m = Manifest::new("eval", cfg.hash(), cfg.eval.seed, precision.as_str());
    m.artifact("metrics", "metrics.csv", None);
    m.artifact("baseline", "baseline.csv", None);
    m.artifact("summary", "summary.csv", None);
    m.detail("checkpoint", checkpoint.map_or(serde_json::Value::Null, |p| p.display().to_string().into()));
    m.detail("n_cases", cfg.eval.n_cases);
    m.write(out)?;
    Ok(rep)
}

/// Evaluates a checkpoint (or a fresh initialisation) on held-out phantoms.
pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path, precision: Precision) -> CliResult<EvalReport> {
    dispatch!(precision, eval_impl(cfg, checkpoint, out, precision))
}

// ------------------------------------------------------------------ ablate

/// The named model variants swept along `axis`, derived from `base`.
/// Backbone variants replace the image-network backbone; the α sweep sets
/// both networks' split.
pub fn ablation_variants(axis: Axis, base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    match axis {
        Axis::Fusion => Fusion::ALL.iter().map(|&fusion| (fusion.to_string(), ModelConfig { fusion, ..base.clone() })).collect(),
        Axis::Layout => Layout::ALL.iter().map(|&layout| (layout.to_string(), ModelConfig { layout, ..base.clone() })).collect(),
        Axis::Encoder => {
            Encoder::ALL.iter().map(|&encoder| (encoder.to_string(), ModelConfig { encoder, ..base.clone() })).collect()
        }
        Axis::Backbone => BackboneVariant::ABLATION
            .iter()
            .map(|&v| {
                let mut c = base.clone();
                c.image.variant = v;
                (v.name(), c)
            })
            .collect(),
        Axis::Alpha => ALPHA_GRID
            .iter()
            .map(|&a| {
                let mut c = base.clone();
                c.image.alpha = a;
                c.kspace.alpha = a;
                (format!("{a}"), c)
            })
            .collect(),
    }
}

fn ablate_impl<T: Real>(cfg: &RunConfig, axis: Axis, out: &Path, precision: Precision, verbose: bool) -> CliResult<Vec<AblationRow>> {
    let variants = ablation_variants(axis, &cfg.model_config());
    for (name, v) in &variants {
        v.validate().map_err(|e| CliError::Validation(format!("variant {name}: {e}")))?;
    }
    create_dir(out)?;
    let mut rows = Vec::new();
    let mut m = Manifest::new("ablate", cfg.hash(), cfg.train.seed, precision.as_str());
    for (name, model_cfg) in &variants {
        if verbose {
            eprintln!("{} = {name}", axis.as_str());
        }
        let model = DuDoUniNeXt::new(model_cfg)?;
        let run = train::train::<T>(model_cfg, &cfg.train_config(), None, |_, _| {})?;
        let hash = stream_hash(&run.stream);
        let rep = train::evaluate(model_cfg, &run.params, &cfg.eval_config())?;
        let n_params = model.count_params();
        for s in rep.summary {
            rows.push(AblationRow {
                axis: axis.as_str().into(),
                variant: name.clone(),
                summary: s,
                params: n_params,
                stream_hash: hash.clone(),
            });
        }
    }
    report::write_ablation(&out.join("ablation.csv"), &rows)?;
    m.artifact("ablation", "ablation.csv", None);
    m.detail("axis", axis.as_str());
    m.detail("variants", variants.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>());
    m.write(out)?;
    Ok(rows)
}

/// Trains and evaluates every variant along `axis` on the same data stream.
pub fn ablate(cfg: &RunConfig, axis: Axis, out: &Path, precision: Precision, verbose: bool) -> CliResult<Vec<AblationRow>> {
    dispatch!(precision, ablate_impl(cfg, axis, out, precision, verbose))
}

// --------------------------------------------------------------- gradcheck

/// Seeds per check when none are given.
pub fn default_seeds(scope: Scope) -> usize {
    match scope {
        Scope::Ops => 20,
        Scope::Blocks => 2,
        Scope::Model => 1,
    }
}

pub fn scope_name(scope: Scope) -> &'static str {
    match scope {
        Scope::Ops => "ops",
        Scope::Blocks => "blocks",
        Scope::Model => "model",
    }
}

/// Runs the 64-bit finite-difference suites; any failing check is a
/// numeric error.
pub fn gradcheck(scopes: &[Scope], seeds: Option<usize>, out: &Path, cfg_hash: String) -> CliResult<Vec<SuiteResult>> {
    let mut all = Vec::new();
    let mut text = String::new();
    for &scope in scopes {
        let results = suites::run(scope, seeds.unwrap_or(default_seeds(scope)))?;
        for r in &results {
            let line = format!("{:<6} {}", scope_name(scope), suites::summary_line(r));
            println!("{line}");
            text.push_str(&line);
            text.push('\n');
        }
        all.extend(results);
    }
    create_dir(out)?;
    write_text(&out.join("gradcheck.txt"), &text)?;
    let failed = all.iter().filter(|r| !r.passed).count();
    let mut m = Manifest::new("gradcheck", cfg_hash, 0, "f64");
    m.artifact("report", "gradcheck.txt", None);
    m.detail("checks", all.len());
    m.detail("failed", failed);
    m.write(out)?;
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} of {} gradient checks failed", all.len())));
    }
    Ok(all)
}

// ------------------------------------------------------------------ params

/// Per-submodule counts and the two network subtotals.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub rows: Vec<(String, String, usize)>,
    pub image: usize,
    pub kspace: usize,
    pub total: usize,
}

pub fn param_report(cfg: &ModelConfig) -> CliResult<ParamReport> {
    let model = DuDoUniNeXt::new(cfg)?;
    let rows = model.breakdown().into_iter().map(|(n, s, c)| (n.to_string(), s.to_string(), c)).collect();
    let (image, kspace) = (model.image_params(), model.kspace_params());
    Ok(ParamReport { rows, image, kspace, total: model.count_params() })
}

pub fn format_param_report(r: &ParamReport) -> String {
    let mut s = format!("{:<10} {:<16} {:>12}\n", "network", "submodule", "params");
    for (n, sub, c) in &r.rows {
        s += &format!("{n:<10} {sub:<16} {c:>12}\n");
    }
    let m = |x: usize| x as f64 / 1e6;
    s += &format!("{:<10} {:<16} {:>12}\n", "image", "subtotal", r.image);
    s += &format!("{:<10} {:<16} {:>12}\n", "kspace", "subtotal", r.kspace);
    s += &format!("{:<10} {:<16} {:>12}\n", "all", "total", r.total);
    s += &format!("total {:.2}M (I+K = {:.2}M + {:.2}M)\n", m(r.total), m(r.image), m(r.kspace));
    s
}

pub fn params(cfg: &RunConfig, out: &Path) -> CliResult<ParamReport> {
    let r = param_report(&cfg.model_config())?;
    print!("{}", format_param_report(&r));
    create_dir(out)?;
    let mut csv = String::from("network,submodule,params\n");
    for (n, sub, c) in &r.rows {
        csv += &format!("{n},{sub},{c}\n");
    }
    csv += &format!("image,subtotal,{}\nkspace,subtotal,{}\nall,total,{}\n", r.image, r.kspace, r.total);
    write_text(&out.join("params.csv"), &csv)?;
    let mut m = Manifest::new("params", cfg.hash(), 0, "f64");
    m.artifact("params", "params.csv", None);
    m.detail("image", r.image);
    m.detail("kspace", r.kspace);
    m.detail("total", r.total);
    m.write(out)?;
    Ok(r)
}

/// Zero-filled reconstruction metrics of one simulated problem, computed
/// without the model.
pub fn zero_filled_metrics(seed: u64, accel: f64, size: usize, acs_frac: f64) -> CliResult<(f64, f64)> {
    let pair = dudo_core::mri::gen_phantom_pair::<f64>(size, seed)?;
    let mask = dudo_core::mri::make_cartesian_mask(size, size, accel, acs_frac, seed)?;
    let k = fft2c(&pair.contrast_a)?;
    let gt = ifft2c(&k)?;
    let zf = ifft2c(&dudo_core::mri::undersample(&k, &mask)?)?;
    Ok((psnr(&zf, &gt)?, ssim(&zf, &gt)?))
}

/// Output directory for `command`: `--out` if given, else a per-command
/// subdirectory of the configured output directory.
pub fn out_dir(cfg: &RunConfig, out: Option<PathBuf>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| cfg.output_dir.join(command))
}
