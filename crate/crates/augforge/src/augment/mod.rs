//! The augmentation catalog and the chain applicator.
//!
//! A [`ChainConfig`] holds one [`AugmentationSpec`] per catalog kind, in the
//! fixed canonical order of [`AugmentationKind::ALL`]. Applying a chain to a
//! sample walks that order; every active spec draws its own stream keyed by
//! `(study_seed, trial_id, sample_key(id), kind index)`, flips a
//! Bernoulli(`probability`) coin on it and, on success, transforms the sample
//! with the remaining draws of the same stream.

mod color;
mod deletion;
mod geometric;
mod hook;
mod kernel;
mod mixing;
pub mod noise;
pub mod params;
mod preview;
mod space;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::imaging::{derive_stream, sample_key, Image, ImageError, RngStream, Sample};

pub use self::deletion::{apply_super_pixels, blend_with_edges, apply_simplex_noise};
pub use self::geometric::{apply_affine, apply_random_crop, crop_sample, rotate_sample, CropWindow};
pub use self::hook::ExternalHook;
pub use self::kernel::edge_response;
pub use self::mixing::{apply_background, BackgroundPool};
pub use self::params::AugParams;
pub use self::preview::{preview_grid, render_preview, PreviewSummary};
pub use self::space::{apply_shadow, apply_specular, sample_specular_center};

/// Probability with which an active augmentation fires on a given image.
pub const DEFAULT_PROBABILITY: f64 = 0.30;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("external augmentation failed: {0}")]
    Hook(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Family an augmentation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentationClass {
    Color,
    Geometric,
    Mixing,
    Kernel,
    Deletion,
    Space,
}

macro_rules! catalog {
    ($($variant:ident => $name:literal, $class:ident;)*) => {
        /// One entry of the augmentation catalog.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum AugmentationKind {
            $($variant,)*
        }

        impl AugmentationKind {
            /// Every kind, in canonical chain order.
            pub const ALL: [AugmentationKind; 30] = [$(AugmentationKind::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(AugmentationKind::$variant => $name,)*
                }
            }

            pub fn class(self) -> AugmentationClass {
                match self {
                    $(AugmentationKind::$variant => AugmentationClass::$class,)*
                }
            }
        }
    };
}

catalog! {
    Affine => "affine", Geometric;
    Shadow => "shadow", Space;
    Specular => "specular", Space;
    Background => "background", Mixing;
    RandomCrop => "random_crop", Geometric;
    Fog => "fog", Mixing;
    Snow => "snow", Mixing;
    Emboss => "emboss", Kernel;
    Invert => "invert", Color;
    Dropout => "dropout", Deletion;
    Contrast => "contrast", Color;
    Multiply => "multiply", Color;
    Saturate => "saturate", Color;
    AddValue => "add_value", Color;
    Grayscale => "grayscale", Color;
    EdgeDetect => "edge_detect", Kernel;
    MedianBlur => "median_blur", Kernel;
    MotionBlur => "motion_blur", Kernel;
    AverageBlur => "average_blur", Kernel;
    SuperPixels => "super_pixels", Deletion;
    EnhanceColor => "enhance_color", Color;
    GaussianBlur => "gaussian_blur", Kernel;
    SimplexNoise => "simplex_noise", Deletion;
    CoarseDropout => "coarse_dropout", Deletion;
    LinearContrast => "linear_contrast", Color;
    EnhanceContrast => "enhance_contrast", Color;
    EnhanceSharpness => "enhance_sharpness", Kernel;
    EnhanceBrightness => "enhance_brightness", Color;
    MultiplyBrightness => "multiply_brightness", Color;
    AdditiveGaussianNoise => "additive_gaussian_noise", Kernel;
}

impl AugmentationKind {
    /// Position in the canonical order; also the `aug_index` of its random stream.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).expect("kind is in the catalog")
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Geometric kinds move pixels and therefore rewrite boxes and masks.
    pub fn is_geometric(self) -> bool {
        self.class() == AugmentationClass::Geometric
    }

    pub fn needs_mask(self) -> bool {
        matches!(self, Self::Background | Self::Specular | Self::Shadow)
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentationKind {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s).ok_or_else(|| AugmentError::Config(format!("unknown augmentation kind `{s}`")))
    }
}

impl Serialize for AugmentationKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for AugmentationKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Activation, firing probability and parameters of one catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    pub active: bool,
    pub probability: f64,
    pub params: AugParams,
}

impl AugmentationSpec {
    /// Inactive spec with default probability and parameters.
    pub fn new(kind: AugmentationKind) -> Self {
        Self {
            kind,
            active: false,
            probability: DEFAULT_PROBABILITY,
            params: AugParams::default_for(kind),
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(AugmentError::Config(format!(
                "{}: probability {} outside [0, 1]",
                self.kind, self.probability
            )));
        }
        self.params.validate(self.kind)
    }
}

#[derive(Serialize, Deserialize)]
struct SpecJson {
    kind: AugmentationKind,
    #[serde(default)]
    active: bool,
    #[serde(default = "default_probability")]
    probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<serde_json::Value>,
}

fn default_probability() -> f64 {
    DEFAULT_PROBABILITY
}

impl Serialize for AugmentationSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SpecJson {
            kind: self.kind,
            active: self.active,
            probability: self.probability,
            params: Some(self.params.to_value()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AugmentationSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = SpecJson::deserialize(d)?;
        let params = AugParams::from_value(raw.kind, raw.params).map_err(serde::de::Error::custom)?;
        let spec = AugmentationSpec {
            kind: raw.kind,
            active: raw.active,
            probability: raw.probability,
            params,
        };
        spec.validate().map_err(serde::de::Error::custom)?;
        Ok(spec)
    }
}

/// One point of the search space: a spec for every catalog kind, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainConfig {
    augmentations: Vec<AugmentationSpec>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            augmentations: AugmentationKind::ALL.into_iter().map(AugmentationSpec::new).collect(),
        }
    }
}

impl ChainConfig {
    /// All kinds inactive.
    pub fn inactive() -> Self {
        Self::default()
    }

    /// Builds a chain from any subset of specs; kinds not listed stay inactive with defaults.
    pub fn from_specs(specs: impl IntoIterator<Item = AugmentationSpec>) -> Result<Self, AugmentError> {
        let mut seen = [false; 30];
        let mut cfg = Self::default();
        for spec in specs {
            spec.validate()?;
            let i = spec.kind.index();
            if seen[i] {
                return Err(AugmentError::Config(format!("duplicate entry for `{}`", spec.kind)));
            }
            seen[i] = true;
            cfg.augmentations[i] = spec;
        }
        Ok(cfg)
    }

    /// A chain where exactly the given kinds are active, all with default parameters.
    pub fn with_active(kinds: impl IntoIterator<Item = AugmentationKind>) -> Self {
        let mut cfg = Self::default();
        for k in kinds {
            cfg.augmentations[k.index()].active = true;
        }
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, AugmentError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            augmentations: Vec<AugmentationSpec>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| AugmentError::Config(format!("chain config: {e}")))?;
        Self::from_specs(doc.augmentations)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("chain config serializes")
    }

    pub fn specs(&self) -> &[AugmentationSpec] {
        &self.augmentations
    }

    pub fn spec(&self, kind: AugmentationKind) -> &AugmentationSpec {
        &self.augmentations[kind.index()]
    }

    pub fn spec_mut(&mut self, kind: AugmentationKind) -> &mut AugmentationSpec {
        &mut self.augmentations[kind.index()]
    }

    pub fn is_active(&self, kind: AugmentationKind) -> bool {
        self.spec(kind).active
    }

    pub fn active_count(&self) -> usize {
        self.augmentations.iter().filter(|s| s.active).count()
    }

    pub fn set_probability(&mut self, p: f64) {
        for s in &mut self.augmentations {
            s.probability = p;
        }
    }
}

impl<'de> Deserialize<'de> for ChainConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            augmentations: Vec<AugmentationSpec>,
        }
        let doc = Doc::deserialize(d)?;
        Self::from_specs(doc.augmentations).map_err(serde::de::Error::custom)
    }
}

/// Study-level part of the stream key; it stays fixed for one full trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChainKey {
    pub study_seed: u64,
    pub trial_id: u64,
}

impl ChainKey {
    pub fn new(study_seed: u64, trial_id: u64) -> Self {
        Self { study_seed, trial_id }
    }

    pub fn stream(&self, sample_id: &str, aug_index: usize) -> RngStream {
        derive_stream(self.study_seed, self.trial_id, sample_key(sample_id), aug_index as u64)
    }
}

/// Optional inputs some augmentations need.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChainResources<'a> {
    pub backgrounds: Option<&'a BackgroundPool>,
    /// Fills the slot of the catalog's learned style transfer; runs after every built-in kind.
    pub hook: Option<&'a ExternalHook>,
}

/// Applies `cfg` to `sample` without background pool or external hook.
pub fn apply_chain(cfg: &ChainConfig, sample: &Sample, key: ChainKey) -> Result<Sample, AugmentError> {
    apply_chain_with(cfg, &ChainResources::default(), sample, key)
}

/// Applies `cfg` to `sample`.
///
/// Fails with a configuration error when `background` is active but no pool
/// is configured or the sample carries no mask. `specular` and `shadow` are
/// skipped for samples without a (non-empty) mask.
pub fn apply_chain_with(
    cfg: &ChainConfig,
    res: &ChainResources<'_>,
    sample: &Sample,
    key: ChainKey,
) -> Result<Sample, AugmentError> {
    sample.validate()?;
    let bg = cfg.spec(AugmentationKind::Background);
    if bg.active && bg.probability > 0.0 {
        if res.backgrounds.is_none() {
            return Err(AugmentError::Config("background is active but no background pool is configured".into()));
        }
        if sample.mask.is_none() {
            return Err(AugmentError::Config(format!(
                "background is active but sample {} has no mask",
                sample.id
            )));
        }
    }

    let mut out = sample.clone();
    for spec in cfg.specs() {
        if !spec.active || spec.probability <= 0.0 {
            continue;
        }
        let mut rng = key.stream(&sample.id, spec.kind.index());
        if !rng.bernoulli(spec.probability) {
            continue;
        }
        if spec.kind.needs_mask() && spec.kind != AugmentationKind::Background {
            let has_fg = out.mask.as_ref().is_some_and(|m| m.count() > 0);
            if !has_fg {
                continue;
            }
        }
        out = apply_augmentation(spec.kind, &spec.params, &out, &mut rng, res)?;
    }

    if let Some(hook) = res.hook {
        let mut rng = key.stream(&sample.id, AugmentationKind::ALL.len());
        if hook.probability > 0.0 && rng.bernoulli(hook.probability) {
            out.image = hook.apply(&out.image)?;
        }
    }
    Ok(out)
}

/// Applies a single augmentation unconditionally.
pub fn apply_augmentation(
    kind: AugmentationKind,
    params: &AugParams,
    sample: &Sample,
    rng: &mut RngStream,
    res: &ChainResources<'_>,
) -> Result<Sample, AugmentError> {
    params.validate(kind)?;
    let mask_of = |s: &Sample| {
        s.mask
            .clone()
            .ok_or_else(|| AugmentError::Precondition(format!("{kind} requires a mask on sample {}", s.id)))
    };
    let with_image = |image: Image| Sample {
        image,
        ..sample.clone()
    };
    Ok(match (kind, params) {
        (AugmentationKind::Affine, AugParams::Affine(p)) => apply_affine(sample, p, rng),
        (AugmentationKind::RandomCrop, AugParams::RandomCrop(p)) => apply_random_crop(sample, p, rng),
        (AugmentationKind::Background, _) => {
            let pool = res
                .backgrounds
                .ok_or_else(|| AugmentError::Config("background requires a background pool".into()))?;
            apply_background(sample, pool, rng)?
        }
        (AugmentationKind::Specular, AugParams::Specular(p)) => {
            with_image(apply_specular(&sample.image, &mask_of(sample)?, p, rng)?)
        }
        (AugmentationKind::Shadow, AugParams::Shadow(p)) => {
            with_image(apply_shadow(&sample.image, &mask_of(sample)?, p, rng)?)
        }
        _ => with_image(apply_color_op(kind, &sample.image, params, rng)?),
    })
}

/// Pixel-only augmentations: the color, kernel, deletion and procedural mixing kinds.
pub fn apply_color_op(
    kind: AugmentationKind,
    img: &Image,
    params: &AugParams,
    rng: &mut RngStream,
) -> Result<Image, AugmentError> {
    use AugmentationKind::*;
    params.validate(kind)?;
    let out = match (kind, params) {
        (AddValue, AugParams::ChannelRange(p)) => color::add_value(img, p, rng),
        (Multiply, AugParams::ChannelRange(p)) => color::multiply(img, p, rng),
        (Invert, AugParams::Invert(p)) => color::invert(img, p, rng),
        (MultiplyBrightness, AugParams::Range(p)) => color::multiply_brightness(img, p, rng),
        (EnhanceColor, AugParams::Range(p)) => color::enhance_color(img, p, rng),
        (Grayscale, AugParams::Range(p)) => color::grayscale(img, p, rng),
        (Contrast, AugParams::Severity(p)) => color::contrast(img, p, rng),
        (LinearContrast, AugParams::Range(p)) => color::linear_contrast(img, p, rng),
        (EnhanceContrast, AugParams::Range(p)) => color::enhance_contrast(img, p, rng),
        (Saturate, AugParams::Severity(p)) => color::saturate(img, p, rng),
        (EnhanceBrightness, AugParams::Range(p)) => color::enhance_brightness(img, p, rng),
        (GaussianBlur, AugParams::Range(p)) => kernel::gaussian_blur(img, p, rng),
        (AverageBlur, AugParams::KernelSize(p)) => kernel::average_blur(img, p, rng),
        (MedianBlur, AugParams::KernelSize(p)) => kernel::median_blur(img, p, rng),
        (MotionBlur, AugParams::MotionBlur(p)) => kernel::motion_blur(img, p, rng),
        (Emboss, AugParams::Emboss(p)) => kernel::emboss(img, p, rng),
        (EdgeDetect, AugParams::Range(p)) => kernel::edge_detect(img, p, rng),
        (EnhanceSharpness, AugParams::Range(p)) => kernel::enhance_sharpness(img, p, rng),
        (AdditiveGaussianNoise, AugParams::ChannelRange(p)) => kernel::additive_gaussian_noise(img, p, rng),
        (SuperPixels, AugParams::SuperPixels(p)) => apply_super_pixels(img, p, rng),
        (SimplexNoise, AugParams::SimplexNoise(p)) => apply_simplex_noise(img, p, rng),
        (Dropout, AugParams::ChannelRange(p)) => deletion::dropout(img, p, rng),
        (CoarseDropout, AugParams::CoarseDropout(p)) => deletion::coarse_dropout(img, p, rng),
        (Fog, AugParams::Severity(p)) => mixing::fog(img, p, rng),
        (Snow, AugParams::Severity(p)) => mixing::snow(img, p, rng),
        _ => {
            return Err(AugmentError::Config(format!(
                "{kind} is not a pixel-only augmentation"
            )))
        }
    };
    Ok(out)
}
