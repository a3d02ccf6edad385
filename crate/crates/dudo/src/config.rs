//! JSON run configuration.
//!
//! Every section has defaults, so `{}` is a complete document describing the
//! full-size model. Unknown keys anywhere are rejected with the line and
//! column of the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use dudo_core::model::{Encoder, Fusion, Layout, ModelConfig};
use dudo_core::mri::RefQuality;
use dudo_core::nn::{BackboneVariant, XbbConfig};
use dudo_core::train::{EvalConfig, LossNorm, TrainConfig, EVAL_SEED_BASE};

use crate::error::{CliError, CliResult};

/// A value written as its string name in JSON.
pub trait NamedValue: Sized + Copy {
    const KIND: &'static str;
    fn name(&self) -> String;
    fn from_name(s: &str) -> Option<Self>;
}

macro_rules! named {
    ($t:ty, $kind:literal, |$v:ident| $name:expr, |$s:ident| $parse:expr) => {
        impl NamedValue for $t {
            const KIND: &'static str = $kind;
            fn name(&self) -> String {
                let $v = *self;
                $name.to_string()
            }
            fn from_name($s: &str) -> Option<Self> {
                $parse
            }
        }
    };
}

named!(Fusion, "fusion", |v| v.as_str(), |s| Fusion::parse(s));
named!(Encoder, "encoder", |v| v.as_str(), |s| Encoder::parse(s));
named!(Layout, "layout", |v| v.as_str(), |s| Layout::parse(s));
named!(BackboneVariant, "backbone", |v| v.name(), |s| BackboneVariant::parse(s));
named!(RefQuality, "condition", |v| v.as_str(), |s| RefQuality::parse(s));
named!(LossNorm, "loss norm", |v| v.as_str(), |s| LossNorm::parse(s));

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Named<T>(pub T);

impl<T: NamedValue> Serialize for Named<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.name())
    }
}

impl<'de, T: NamedValue> Deserialize<'de> for Named<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        T::from_name(&s)
            .map(Named)
            .ok_or_else(|| de::Error::custom(format!("unknown {} `{s}`", T::KIND)))
    }
}

macro_rules! backbone_section {
    ($name:ident, $field:ident) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct $name {
            pub g0: usize,
            pub growth: usize,
            pub depth: usize,
            pub convs: usize,
            pub alpha: f64,
            pub window: usize,
            pub heads: usize,
            pub backbone: Named<BackboneVariant>,
        }

        impl From<&XbbConfig> for $name {
            fn from(c: &XbbConfig) -> Self {
                $name {
                    g0: c.g0,
                    growth: c.growth,
                    depth: c.depth,
                    convs: c.convs,
                    alpha: c.alpha,
                    window: c.window,
                    heads: c.heads,
                    backbone: Named(c.variant),
                }
            }
        }

        impl Default for $name {
            fn default() -> Self {
                (&ModelConfig::default().$field).into()
            }
        }

        impl $name {
            pub fn to_core(&self) -> XbbConfig {
                XbbConfig {
                    g0: self.g0,
                    growth: self.growth,
                    depth: self.depth,
                    convs: self.convs,
                    alpha: self.alpha,
                    window: self.window,
                    heads: self.heads,
                    variant: self.backbone.0,
                }
            }
        }
    };
}

backbone_section!(ImageSection, image);
backbone_section!(KspaceSection, kspace);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_recurrent: usize,
    pub image: ImageSection,
    pub kspace: KspaceSection,
    pub c2f_windows: [usize; 2],
    pub c2f_heads: usize,
    pub fusion: Named<Fusion>,
    pub encoder: Named<Encoder>,
    pub layout: Named<Layout>,
    pub share_recurrent_params: bool,
    pub cb_convs: usize,
    pub se_reduction: usize,
}

impl From<&ModelConfig> for ModelSection {
    fn from(c: &ModelConfig) -> Self {
        ModelSection {
            n_recurrent: c.n_recurrent,
            image: (&c.image).into(),
            kspace: (&c.kspace).into(),
            c2f_windows: c.c2f_windows,
            c2f_heads: c.c2f_heads,
            fusion: Named(c.fusion),
            encoder: Named(c.encoder),
            layout: Named(c.layout),
            share_recurrent_params: c.share_recurrent_params,
            cb_convs: c.cb_convs,
            se_reduction: c.se_reduction,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        (&ModelConfig::default()).into()
    }
}

impl ModelSection {
    pub fn to_core(&self) -> ModelConfig {
        ModelConfig {
            n_recurrent: self.n_recurrent,
            image: self.image.to_core(),
            kspace: self.kspace.to_core(),
            c2f_windows: self.c2f_windows,
            c2f_heads: self.c2f_heads,
            fusion: self.fusion.0,
            encoder: self.encoder.0,
            layout: self.layout.0,
            share_recurrent_params: self.share_recurrent_params,
            cb_convs: self.cb_convs,
            se_reduction: self.se_reduction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub accel_range: [f64; 2],
    pub acs_frac: f64,
    pub ref_probs: [f64; 3],
    pub seed: u64,
    pub image_size: usize,
    pub loss_norm: Named<LossNorm>,
    pub clip_grad_norm: Option<f64>,
    pub zero_tails: bool,
}

impl From<&TrainConfig> for TrainSection {
    fn from(c: &TrainConfig) -> Self {
        TrainSection {
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
            batch_size: c.batch_size,
            steps: c.steps,
            accel_range: c.accel_range,
            acs_frac: c.acs_frac,
            ref_probs: c.ref_probs,
            seed: c.seed,
            image_size: c.image_size,
            loss_norm: Named(c.loss_norm),
            clip_grad_norm: c.clip_grad_norm,
            zero_tails: c.zero_tails,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        (&TrainConfig::default()).into()
    }
}

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            batch_size: self.batch_size,
            steps: self.steps,
            accel_range: self.accel_range,
            acs_frac: self.acs_frac,
            ref_probs: self.ref_probs,
            seed: self.seed,
            image_size: self.image_size,
            loss_norm: self.loss_norm.0,
            clip_grad_norm: self.clip_grad_norm,
            zero_tails: self.zero_tails,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_cases: usize,
    pub conditions: Vec<Named<RefQuality>>,
    pub accels: Vec<f64>,
    /// First held-out phantom seed.
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalSection {
            n_cases: e.n_cases,
            conditions: e.conditions.into_iter().map(Named).collect(),
            accels: e.accels,
            seed: EVAL_SEED_BASE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string_pretty(self).map_err(|_| fmt::Error)?)
    }
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(doc: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(doc).map_err(|e| CliError::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let doc = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&doc).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Configuration at the scale of the toy experiments: 32×32 images,
    /// G0 = 8 and two recurrent blocks.
    pub fn toy() -> Self {
        RunConfig {
            model: (&ModelConfig::toy()).into(),
            train: (&crate::toy_train_config()).into(),
            ..RunConfig::default()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.to_core()
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.to_core()
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_cases: self.eval.n_cases,
            conditions: self.eval.conditions.iter().map(|c| c.0).collect(),
            accels: self.eval.accels.clone(),
            seed: self.eval.seed,
            image_size: self.train.image_size,
            acs_frac: self.train.acs_frac,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model_config().validate()?;
        self.train_config().validate()?;
        let e = &self.eval;
        if e.n_cases == 0 || e.conditions.is_empty() || e.accels.is_empty() {
            return Err(CliError::Validation("eval needs at least one case, condition and acceleration".into()));
        }
        if e.seed < EVAL_SEED_BASE {
            return Err(CliError::Validation(format!("eval.seed must be at least {EVAL_SEED_BASE}")));
        }
        for &a in &e.accels {
            if !(a >= 1.0) {
                return Err(CliError::Validation(format!("eval acceleration {a} is below 1")));
            }
            let w = self.train.image_size;
            let acs = dudo_core::mri::acs_count(w, self.train.acs_frac);
            if dudo_core::mri::sampled_count(w, a) < acs {
                return Err(CliError::Validation(format!("eval acceleration {a} leaves fewer columns than the ACS block")));
            }
        }
        Ok(())
    }

    /// Canonical JSON with every default materialised.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serialises")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
