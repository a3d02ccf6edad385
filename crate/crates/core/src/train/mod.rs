//! Loss, optimiser, metrics, the training loop and held-out evaluation.

mod adam;
mod data;
mod loss;
mod metrics;

#[cfg(test)]
mod tests;

use alloc::vec::Vec;

pub use adam::{Adam, AdamConfig};
pub use data::{eval_seed, materialize, training_stream, Sample, SampleDesc, EVAL_SEED_BASE};
pub use loss::{dudo_loss, LossNorm};
pub use metrics::{gaussian_taps, normalized_magnitudes, psnr, psnr_values, ssim, ssim_values, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};

use crate::diff::{Graph, ParamStore};
use crate::error::{Error, Result};
use crate::model::{DuDoUniNeXt, ModelConfig};
use crate::mri::{ifft2c, RefQuality, ACS_FRAC};
use crate::nn::Module;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub accel_range: [f64; 2],
    pub acs_frac: f64,
    /// Probabilities of (HQ, LQ, absent) references.
    pub ref_probs: [f64; 3],
    pub seed: u64,
    pub image_size: usize,
    pub loss_norm: LossNorm,
    pub clip_grad_norm: Option<f64>,
    /// Zero-initialise residual output layers.
    pub zero_tails: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 1,
            steps: 500,
            accel_range: [4.0, 8.0],
            acs_frac: ACS_FRAC,
            ref_probs: [1.0 / 3.0; 3],
            seed: 0,
            image_size: 32,
            loss_norm: LossNorm::L2,
            clip_grad_norm: None,
            zero_tails: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            clip: self.clip_grad_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size != 1 {
            return Err(Error::invalid("train_config", "only batch size 1 is supported"));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("train_config", "lr must be positive and betas in [0, 1)"));
        }
        let w = self.image_size;
        let acs = crate::mri::acs_count(w, self.acs_frac);
        let fewest = crate::mri::sampled_count(w, self.accel_range[1]);
        if acs > fewest {
            return Err(Error::InfeasibleMask { acs, total: fewest });
        }
        training_stream(0, 0, self.accel_range, self.ref_probs).map(|_| ())
    }
}

/// Fresh parameters for `model`, seeded by the training seed.
pub fn init_params<T: Real>(model: &DuDoUniNeXt, cfg: &TrainConfig) -> Result<ParamStore<T>> {
    ParamStore::from_specs(&model.param_specs(), cfg.seed, cfg.zero_tails)
}

/// Loss of one problem, leaving its gradients accumulated in `params`.
pub fn loss_and_grad<T: Real>(
    model: &DuDoUniNeXt,
    params: &mut ParamStore<T>,
    sample: &Sample<T>,
    norm: LossNorm,
) -> Result<f64> {
    let (tape, loss) = {
        let mut g = Graph::new(params);
        let out = model.forward(&mut g, &sample.input)?;
        let loss = dudo_loss(&mut g, &out.blocks, &sample.k_gt, &sample.i_gt, norm)?;
        (g.into_tape(), loss)
    };
    let value = tape.value(loss).item().f64();
    tape.backward(loss, params)?;
    Ok(value)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ParamStore<T>,
    pub losses: Vec<f64>,
    pub stream: Vec<SampleDesc>,
}

/// Batch-size-1 training from `init` (or a fresh initialisation). `on_step`
/// sees each step index and loss as it is produced.
pub fn train<T: Real>(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    init: Option<ParamStore<T>>,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let model = DuDoUniNeXt::new(model_cfg)?;
    let mut params = match init {
        Some(p) => p,
        None => init_params(&model, cfg)?,
    };
    let stream = training_stream(cfg.seed, cfg.steps, cfg.accel_range, cfg.ref_probs)?;
    let mut adam = Adam::new(cfg.adam());
    let mut losses = Vec::with_capacity(cfg.steps);
    for (step, desc) in stream.iter().enumerate() {
        let sample = materialize::<T>(desc, cfg.image_size, cfg.acs_frac)?;
        params.zero_grads();
        let loss = match loss_and_grad(&model, &mut params, &sample, cfg.loss_norm) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(Error::NonFinite { .. }) => return Err(Error::NonFiniteLoss { step }),
            Err(e) => return Err(e),
        };
        if !params.grad_norm().is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        adam.step(&mut params)?;
        losses.push(loss);
        on_step(step, loss);
    }
    Ok(TrainOutcome { params, losses, stream })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub n_cases: usize,
    pub conditions: Vec<RefQuality>,
    pub accels: Vec<f64>,
    /// First held-out phantom seed; must be at least [`EVAL_SEED_BASE`].
    pub seed: u64,
    pub image_size: usize,
    pub acs_frac: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_cases: 50,
            conditions: RefQuality::ALL.to_vec(),
            accels: alloc::vec![4.0, 8.0],
            seed: EVAL_SEED_BASE,
            image_size: 32,
            acs_frac: ACS_FRAC,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub condition: RefQuality,
    pub accel: f64,
    pub seed: u64,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub condition: RefQuality,
    pub accel: f64,
    pub n: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub zf_psnr_mean: f64,
    pub zf_ssim_mean: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
    /// Zero-filled reconstructions of the same problems.
    pub baseline: Vec<MetricRecord>,
    pub summary: Vec<SummaryRow>,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.clone().sum::<f64>() / n;
    if !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Reconstructs `n_cases` held-out problems for every condition and
/// acceleration. The same phantoms and masks are used across conditions.
pub fn evaluate<T: Real>(model_cfg: &ModelConfig, params: &ParamStore<T>, cfg: &EvalConfig) -> Result<EvalReport> {
    let model = DuDoUniNeXt::new(model_cfg)?;
    let mut records = Vec::new();
    let mut baseline = Vec::new();
    let mut summary = Vec::new();
    for &condition in &cfg.conditions {
        for &accel in &cfg.accels {
            let start = records.len();
            for i in 0..cfg.n_cases {
                let seed = eval_seed(cfg.seed, i)?;
                let desc = SampleDesc { phantom_seed: seed, accel, quality: condition };
                let sample = materialize::<T>(&desc, cfg.image_size, cfg.acs_frac)?;
                let rec = {
                    let mut g = Graph::new(params);
                    let out = model.forward(&mut g, &sample.input)?;
                    g.value(out.i_rec).clone()
                };
                let zf = ifft2c(&sample.input.k_sub)?;
                for (img, sink) in [(&rec, &mut records), (&zf, &mut baseline)] {
                    sink.push(MetricRecord {
                        condition,
                        accel,
                        seed,
                        psnr_db: psnr(img, &sample.i_gt)?,
                        ssim: ssim(img, &sample.i_gt)?,
                    });
                }
            }
            let rows = &records[start..];
            let zf_rows = &baseline[start..];
            let (psnr_mean, psnr_std) = mean_std(rows.iter().map(|r| r.psnr_db));
            let (ssim_mean, ssim_std) = mean_std(rows.iter().map(|r| r.ssim));
            summary.push(SummaryRow {
                condition,
                accel,
                n: rows.len(),
                psnr_mean,
                psnr_std,
                ssim_mean,
                ssim_std,
                zf_psnr_mean: mean_std(zf_rows.iter().map(|r| r.psnr_db)).0,
                zf_ssim_mean: mean_std(zf_rows.iter().map(|r| r.ssim)).0,
            });
        }
    }
    Ok(EvalReport { records, baseline, summary })
}
