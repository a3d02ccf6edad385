use core::fmt;

use crate::error::{Error, Result};
use crate::nn::{BackboneVariant, XbbConfig};

/// How target and reference shallow features are merged into `f0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Max,
    HeMIS,
    AdaF2C,
    AdaC2F,
}

/// Shallow feature extractor arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoder {
    Shared,
    Distinct,
    PaSS,
}

/// Order of the two domain networks inside a recurrent block, and whether
/// the k-space network sees the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    KUniI,
    UniIK,
    UniKUniI,
    UniIUniK,
}

macro_rules! named_enum {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl $t {
            pub const ALL: &'static [$t] = &[$(<$t>::$v),*];

            pub fn as_str(self) -> &'static str {
                match self { $(<$t>::$v => $s),* }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s { $($s => Some(<$t>::$v),)* _ => None }
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

named_enum!(Fusion { Max => "Max", HeMIS => "HeMIS", AdaF2C => "AdaF2C", AdaC2F => "AdaC2F" });
named_enum!(Encoder { Shared => "Shared", Distinct => "Distinct", PaSS => "PaSS" });
named_enum!(Layout { KUniI => "K_UniI", UniIK => "UniI_K", UniKUniI => "UniK_UniI", UniIUniK => "UniI_UniK" });

impl Layout {
    /// The image network runs before the k-space network.
    pub fn image_first(self) -> bool {
        matches!(self, Layout::UniIK | Layout::UniIUniK)
    }

    /// The k-space network is conditioned on the reference k-space.
    pub fn kspace_uses_reference(self) -> bool {
        matches!(self, Layout::UniKUniI | Layout::UniIUniK)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_recurrent: usize,
    pub image: XbbConfig,
    pub kspace: XbbConfig,
    pub c2f_windows: [usize; 2],
    pub c2f_heads: usize,
    pub fusion: Fusion,
    pub encoder: Encoder,
    pub layout: Layout,
    pub share_recurrent_params: bool,
    /// 3×3 conv + relu layers inside each shallow-encoder conv block.
    pub cb_convs: usize,
    pub se_reduction: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let image = XbbConfig {
            g0: 64,
            growth: 48,
            depth: 4,
            convs: 5,
            alpha: 0.5,
            window: 16,
            heads: 4,
            variant: BackboneVariant::Xbb,
        };
        ModelConfig {
            n_recurrent: 2,
            kspace: XbbConfig { depth: 3, convs: 3, ..image.clone() },
            image,
            c2f_windows: [16, 8],
            c2f_heads: 4,
            fusion: Fusion::AdaC2F,
            encoder: Encoder::PaSS,
            layout: Layout::KUniI,
            share_recurrent_params: true,
            cb_convs: 2,
            se_reduction: 4,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration used by the tests and the toy training runs.
    pub fn toy() -> Self {
        let image = XbbConfig {
            g0: 8,
            growth: 8,
            depth: 2,
            convs: 3,
            alpha: 0.5,
            window: 8,
            heads: 2,
            variant: BackboneVariant::Xbb,
        };
        ModelConfig {
            n_recurrent: 2,
            kspace: XbbConfig { convs: 2, ..image.clone() },
            image,
            c2f_windows: [16, 8],
            c2f_heads: 2,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &'static str| Err(Error::invalid("model_config", m));
        if self.n_recurrent == 0 {
            return bad("at least one recurrent block is required");
        }
        self.image.validate()?;
        self.kspace.validate()?;
        if self.image.g0 != self.kspace.g0 {
            return bad("image and k-space networks must share G0");
        }
        if self.c2f_heads == 0 || !self.image.g0.is_multiple_of(self.c2f_heads) {
            return bad("G0 must be divisible by the C2F head count");
        }
        if self.c2f_windows.contains(&0) {
            return bad("C2F windows must be positive");
        }
        if self.cb_convs == 0 {
            return bad("conv blocks need at least one layer");
        }
        if self.se_reduction == 0 || self.image.g0 < self.se_reduction {
            return bad("G0 must be at least the SE reduction factor");
        }
        Ok(())
    }

    pub fn g0(&self) -> usize {
        self.image.g0
    }
}
