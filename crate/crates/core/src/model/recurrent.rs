use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::ModelConfig;
use super::inet::IUniNeXt;
use super::knet::KNeXt;
use crate::diff::{Graph, ParamSpec, Tensor, Var};
use crate::error::{Error, Result};
use crate::mri::{AvailabilityCondition, SamplingMask};
use crate::nn::{count_unique, Module};
use crate::real::Real;

/// One reconstruction problem as seen by the network.
#[derive(Debug, Clone)]
pub struct ModelInput<T> {
    /// Undersampled centered k-space, 2×H×W, zero outside the mask.
    pub k_sub: Tensor<T>,
    pub mask: SamplingMask,
    /// Reference image, 2×H×W; ignored when `ac` marks it unavailable.
    pub i_ref: Tensor<T>,
    pub ac: AvailabilityCondition,
}

#[derive(Debug, Clone, Copy)]
pub struct Intermediate {
    /// k-space network output after data consistency.
    pub k_k: Var,
    /// k-space of the image network output after data consistency.
    pub k_dc: Var,
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub i_rec: Var,
    pub blocks: Vec<Intermediate>,
}

#[derive(Debug, Clone)]
struct Stage {
    knet: KNeXt,
    inet: IUniNeXt,
}

/// The recurrent dual-domain reconstruction model.
#[derive(Debug, Clone)]
pub struct DuDoUniNeXt {
    pub cfg: ModelConfig,
    stages: Vec<Stage>,
}

impl DuDoUniNeXt {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let unik = cfg.layout.kspace_uses_reference();
        let build = |prefix: String| -> Result<Stage> {
            let p = |s: &str| if prefix.is_empty() { String::from(s) } else { format!("{prefix}.{s}") };
            Ok(Stage {
                knet: KNeXt::new(&p("knet"), cfg, unik)?,
                inet: IUniNeXt::new(&p("inet"), cfg)?,
            })
        };
        let stages = if cfg.share_recurrent_params {
            let s = build(String::new())?;
            (0..cfg.n_recurrent).map(|_| s.clone()).collect()
        } else {
            (0..cfg.n_recurrent).map(|i| build(format!("block{i}"))).collect::<Result<_>>()?
        };
        Ok(DuDoUniNeXt { cfg: cfg.clone(), stages })
    }

    fn check_input<T: Real>(input: &ModelInput<T>) -> Result<()> {
        let s = input.k_sub.shape();
        if s.len() != 3 || s[0] != 2 {
            return Err(Error::shape("dudo_uninext", s, &[2]));
        }
        if input.mask.height() != s[1] || input.mask.width() != s[2] {
            return Err(Error::shape("dudo_uninext", s, &[2, input.mask.height(), input.mask.width()]));
        }
        if input.i_ref.shape() != s {
            return Err(Error::shape("dudo_uninext", s, input.i_ref.shape()));
        }
        Ok(())
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, input: &ModelInput<T>) -> Result<ModelOutput> {
        Self::check_input(input)?;
        let keep = input.mask.expand(2);
        let k_sub = g.leaf(input.k_sub.clone());
        let i_ref = if input.ac.available() { Some(g.leaf(input.i_ref.clone())) } else { None };
        let k_ref = match (self.cfg.layout.kspace_uses_reference(), i_ref) {
            (false, _) => None,
            (true, Some(r)) => Some(g.fft2c(r)?),
            (true, None) => Some(g.leaf(Tensor::zeros(input.k_sub.shape()))),
        };
        let dc = |g: &mut Graph<'_, T>, x: Var| g.select(x, &input.k_sub, keep.clone());

        let mut blocks = Vec::with_capacity(self.stages.len());
        let mut state = k_sub;
        for st in &self.stages {
            let inter = if self.cfg.layout.image_first() {
                let img = g.ifft2c(state)?;
                let i_i = st.inet.forward(g, img, i_ref)?;
                let k = g.fft2c(i_i)?;
                let k_dc = dc(g, k)?;
                let k = st.knet.forward(g, k_dc, k_ref)?;
                let k_k = dc(g, k)?;
                state = k_k;
                Intermediate { k_k, k_dc }
            } else {
                let k = st.knet.forward(g, state, k_ref)?;
                let k_k = dc(g, k)?;
                let img = g.ifft2c(k_k)?;
                let i_i = st.inet.forward(g, img, i_ref)?;
                let k = g.fft2c(i_i)?;
                let k_dc = dc(g, k)?;
                state = k_dc;
                Intermediate { k_k, k_dc }
            };
            blocks.push(inter);
        }
        let i_rec = g.ifft2c(state)?;
        Ok(ModelOutput { i_rec, blocks })
    }

    pub fn image_params(&self) -> usize {
        let mut v = Vec::new();
        self.stages.iter().for_each(|s| s.inet.specs(&mut v));
        count_unique(&v)
    }

    pub fn kspace_params(&self) -> usize {
        let mut v = Vec::new();
        self.stages.iter().for_each(|s| s.knet.specs(&mut v));
        count_unique(&v)
    }

    /// `(network, submodule, count)` rows for the first recurrent block.
    pub fn breakdown(&self) -> Vec<(&'static str, &'static str, usize)> {
        let s = &self.stages[0];
        let mut rows: Vec<_> = s.inet.breakdown().into_iter().map(|(n, c)| ("I-UniNeXt", n, c)).collect();
        rows.extend(s.knet.breakdown().into_iter().map(|(n, c)| ("K-NeXt", n, c)));
        rows
    }
}

impl Module for DuDoUniNeXt {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        for s in &self.stages {
            s.knet.specs(out);
            s.inet.specs(out);
        }
    }
}
