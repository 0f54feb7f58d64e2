//! Per-kind parameter records and their documented ranges.
//!
//! Defaults sit at the low-severity end of each family.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AugmentError, AugmentationKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineParams {
    pub rotation_range_deg: [f64; 2],
}

impl Default for AffineParams {
    fn default() -> Self {
        Self {
            rotation_range_deg: [-45.0, 45.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowParams {
    /// Foreground pixels with luminance below this are darkened.
    pub threshold: f64,
    pub factor: f64,
}

impl Default for ShadowParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecularParams {
    pub peak: f64,
    /// Bloom sigma as a fraction of the foreground bounding-box diagonal.
    pub sigma_frac: f64,
}

impl Default for SpecularParams {
    fn default() -> Self {
        Self {
            peak: 1.0,
            sigma_frac: 0.25,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomCropParams {
    /// Fraction of every box's area that must stay inside the window.
    pub min_visible: f64,
    pub scale_range: [f64; 2],
}

impl Default for RandomCropParams {
    fn default() -> Self {
        Self {
            min_visible: 0.5,
            scale_range: [0.5, 1.0],
        }
    }
}

/// Corruption-style severity levels, drawn uniformly from the inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityParams {
    pub severity: [u8; 2],
}

impl Default for SeverityParams {
    fn default() -> Self {
        Self { severity: [1, 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbossParams {
    pub alpha: [f64; 2],
    pub strength: [f64; 2],
}

impl Default for EmbossParams {
    fn default() -> Self {
        Self {
            alpha: [0.0, 1.0],
            strength: [0.5, 1.5],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertParams {
    pub per_channel: bool,
}

/// A uniformly drawn scalar, optionally drawn independently per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRangeParams {
    pub range: [f64; 2],
    #[serde(default)]
    pub per_channel: bool,
}

/// A uniformly drawn scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeParams {
    pub range: [f64; 2],
}

/// Square neighbourhood sizes, one drawn uniformly per application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSizeParams {
    pub sizes: Vec<usize>,
}

impl Default for KernelSizeParams {
    fn default() -> Self {
        Self { sizes: vec![3, 5, 7] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionBlurParams {
    pub sizes: Vec<usize>,
    pub angle_range_deg: [f64; 2],
}

impl Default for MotionBlurParams {
    fn default() -> Self {
        Self {
            sizes: vec![3, 5, 7],
            angle_range_deg: [0.0, 360.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperPixelsParams {
    pub n_segments: usize,
    pub replace_prob: f64,
}

impl Default for SuperPixelsParams {
    fn default() -> Self {
        Self {
            n_segments: 128,
            replace_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimplexNoiseParams {
    pub octaves: u32,
    /// Size of the coarsest noise features, in pixels.
    pub feature_scale: f64,
}

impl Default for SimplexNoiseParams {
    fn default() -> Self {
        Self {
            octaves: 2,
            feature_scale: 48.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseDropoutParams {
    pub count: [u32; 2],
    /// Largest rectangle side as a fraction of the image width/height.
    pub max_size_frac: f64,
    pub per_channel: bool,
}

impl Default for CoarseDropoutParams {
    fn default() -> Self {
        Self {
            count: [1, 5],
            max_size_frac: 0.2,
            per_channel: false,
        }
    }
}

/// Kind-specific parameters. The variant always matches the owning spec's kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AugParams {
    Affine(AffineParams),
    Shadow(ShadowParams),
    Specular(SpecularParams),
    Background(BackgroundParams),
    RandomCrop(RandomCropParams),
    Severity(SeverityParams),
    Emboss(EmbossParams),
    Invert(InvertParams),
    ChannelRange(ChannelRangeParams),
    Range(RangeParams),
    KernelSize(KernelSizeParams),
    MotionBlur(MotionBlurParams),
    SuperPixels(SuperPixelsParams),
    SimplexNoise(SimplexNoiseParams),
    CoarseDropout(CoarseDropoutParams),
}

/// Inclusive bounds a drawn scalar may take, per kind.
fn scalar_bounds(kind: AugmentationKind) -> (f64, f64) {
    use AugmentationKind::*;
    match kind {
        AddValue => (-1.0, 1.0),
        Multiply | MultiplyBrightness | LinearContrast => (0.0, 4.0),
        EnhanceColor | EnhanceContrast | EnhanceSharpness | EnhanceBrightness => (0.0, 4.0),
        Grayscale | EdgeDetect | Dropout | AdditiveGaussianNoise => (0.0, 1.0),
        GaussianBlur => (0.0, 20.0),
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

fn scalar_default(kind: AugmentationKind) -> [f64; 2] {
    use AugmentationKind::*;
    match kind {
        AddValue => [-0.2, 0.2],
        Multiply | MultiplyBrightness => [0.7, 1.3],
        EnhanceColor | EnhanceContrast | EnhanceSharpness | EnhanceBrightness => [0.5, 1.5],
        LinearContrast => [0.6, 1.4],
        Grayscale => [0.0, 1.0],
        EdgeDetect => [0.0, 0.5],
        GaussianBlur => [0.5, 2.0],
        Dropout => [0.01, 0.1],
        AdditiveGaussianNoise => [0.01, 0.1],
        _ => [0.0, 0.0],
    }
}

impl AugParams {
    pub fn default_for(kind: AugmentationKind) -> Self {
        use AugmentationKind::*;
        match kind {
            Affine => Self::Affine(AffineParams::default()),
            Shadow => Self::Shadow(ShadowParams::default()),
            Specular => Self::Specular(SpecularParams::default()),
            Background => Self::Background(BackgroundParams::default()),
            RandomCrop => Self::RandomCrop(RandomCropParams::default()),
            Fog | Snow | Contrast | Saturate => Self::Severity(SeverityParams::default()),
            Emboss => Self::Emboss(EmbossParams::default()),
            Invert => Self::Invert(InvertParams::default()),
            AddValue | Multiply | Dropout | AdditiveGaussianNoise => Self::ChannelRange(ChannelRangeParams {
                range: scalar_default(kind),
                per_channel: false,
            }),
            MultiplyBrightness | EnhanceColor | Grayscale | LinearContrast | EnhanceContrast
            | EnhanceSharpness | EnhanceBrightness | EdgeDetect | GaussianBlur => Self::Range(RangeParams {
                range: scalar_default(kind),
            }),
            MedianBlur | AverageBlur => Self::KernelSize(KernelSizeParams::default()),
            MotionBlur => Self::MotionBlur(MotionBlurParams::default()),
            SuperPixels => Self::SuperPixels(SuperPixelsParams::default()),
            SimplexNoise => Self::SimplexNoise(SimplexNoiseParams::default()),
            CoarseDropout => Self::CoarseDropout(CoarseDropoutParams::default()),
        }
    }

    /// Parses the `params` object of a spec; absent fields take their defaults.
    pub fn from_value(kind: AugmentationKind, value: Option<Value>) -> Result<Self, AugmentError> {
        let Some(value) = value else {
            return Ok(Self::default_for(kind));
        };
        let bad = |e: serde_json::Error| AugmentError::Config(format!("{}: bad params: {e}", kind.name()));
        // Range-only records carry a kind-specific default that serde cannot know about.
        let value = match (&value, Self::default_for(kind)) {
            (Value::Object(map), Self::ChannelRange(d)) if !map.contains_key("range") => {
                let mut map = map.clone();
                map.insert("range".into(), serde_json::json!(d.range));
                Value::Object(map)
            }
            (Value::Object(map), Self::Range(d)) if !map.contains_key("range") => {
                let mut map = map.clone();
                map.insert("range".into(), serde_json::json!(d.range));
                Value::Object(map)
            }
            _ => value,
        };
        let parsed = match Self::default_for(kind) {
            Self::Affine(_) => Self::Affine(serde_json::from_value(value).map_err(bad)?),
            Self::Shadow(_) => Self::Shadow(serde_json::from_value(value).map_err(bad)?),
            Self::Specular(_) => Self::Specular(serde_json::from_value(value).map_err(bad)?),
            Self::Background(_) => Self::Background(serde_json::from_value(value).map_err(bad)?),
            Self::RandomCrop(_) => Self::RandomCrop(serde_json::from_value(value).map_err(bad)?),
            Self::Severity(_) => Self::Severity(serde_json::from_value(value).map_err(bad)?),
            Self::Emboss(_) => Self::Emboss(serde_json::from_value(value).map_err(bad)?),
            Self::Invert(_) => Self::Invert(serde_json::from_value(value).map_err(bad)?),
            Self::ChannelRange(_) => Self::ChannelRange(serde_json::from_value(value).map_err(bad)?),
            Self::Range(_) => Self::Range(serde_json::from_value(value).map_err(bad)?),
            Self::KernelSize(_) => Self::KernelSize(serde_json::from_value(value).map_err(bad)?),
            Self::MotionBlur(_) => Self::MotionBlur(serde_json::from_value(value).map_err(bad)?),
            Self::SuperPixels(_) => Self::SuperPixels(serde_json::from_value(value).map_err(bad)?),
            Self::SimplexNoise(_) => Self::SimplexNoise(serde_json::from_value(value).map_err(bad)?),
            Self::CoarseDropout(_) => Self::CoarseDropout(serde_json::from_value(value).map_err(bad)?),
        };
        parsed.validate(kind)?;
        Ok(parsed)
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            Self::Affine(p) => serde_json::to_value(p),
            Self::Shadow(p) => serde_json::to_value(p),
            Self::Specular(p) => serde_json::to_value(p),
            Self::Background(p) => serde_json::to_value(p),
            Self::RandomCrop(p) => serde_json::to_value(p),
            Self::Severity(p) => serde_json::to_value(p),
            Self::Emboss(p) => serde_json::to_value(p),
            Self::Invert(p) => serde_json::to_value(p),
            Self::ChannelRange(p) => serde_json::to_value(p),
            Self::Range(p) => serde_json::to_value(p),
            Self::KernelSize(p) => serde_json::to_value(p),
            Self::MotionBlur(p) => serde_json::to_value(p),
            Self::SuperPixels(p) => serde_json::to_value(p),
            Self::SimplexNoise(p) => serde_json::to_value(p),
            Self::CoarseDropout(p) => serde_json::to_value(p),
        };
        v.expect("parameter records always serialize")
    }

    /// Checks that the variant belongs to `kind` and every value lies in its documented range.
    pub fn validate(&self, kind: AugmentationKind) -> Result<(), AugmentError> {
        let name = kind.name();
        let err = |msg: String| Err(AugmentError::Config(format!("{name}: {msg}")));
        if std::mem::discriminant(self) != std::mem::discriminant(&Self::default_for(kind)) {
            return err("parameter record does not belong to this kind".into());
        }
        let check_range = |label: &str, r: [f64; 2], lo: f64, hi: f64| -> Result<(), AugmentError> {
            if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] || r[0] < lo || r[1] > hi {
                return Err(AugmentError::Config(format!(
                    "{name}: {label} {r:?} must be an ordered interval within [{lo}, {hi}]"
                )));
            }
            Ok(())
        };
        let check_unit = |label: &str, v: f64| -> Result<(), AugmentError> {
            if !(0.0..=1.0).contains(&v) {
                return Err(AugmentError::Config(format!("{name}: {label} {v} must lie in [0, 1]")));
            }
            Ok(())
        };
        let check_sizes = |sizes: &[usize], min: usize| -> Result<(), AugmentError> {
            if sizes.is_empty() || sizes.iter().any(|k| *k < min || *k > 31 || k % 2 == 0) {
                return Err(AugmentError::Config(format!(
                    "{name}: kernel sizes {sizes:?} must be odd values in [{min}, 31]"
                )));
            }
            Ok(())
        };
        match self {
            Self::Affine(p) => check_range("rotation_range_deg", p.rotation_range_deg, -180.0, 180.0),
            Self::Shadow(p) => {
                if !(p.threshold > 0.0 && p.threshold < 1.0) {
                    return err(format!("threshold {} must lie in (0, 1)", p.threshold));
                }
                if !(p.factor > 0.0 && p.factor <= 1.0) {
                    return err(format!("factor {} must lie in (0, 1]", p.factor));
                }
                Ok(())
            }
            Self::Specular(p) => {
                check_unit("peak", p.peak)?;
                if !(p.sigma_frac > 0.0 && p.sigma_frac <= 4.0) {
                    return err(format!("sigma_frac {} must lie in (0, 4]", p.sigma_frac));
                }
                Ok(())
            }
            Self::Background(_) => Ok(()),
            Self::RandomCrop(p) => {
                check_unit("min_visible", p.min_visible)?;
                check_range("scale_range", p.scale_range, f64::MIN_POSITIVE, 1.0)
            }
            Self::Severity(p) => {
                let [lo, hi] = p.severity;
                if lo < 1 || hi > 2 || lo > hi {
                    return err(format!("severity {:?} must be an ordered range within [1, 2]", p.severity));
                }
                Ok(())
            }
            Self::Emboss(p) => {
                check_range("alpha", p.alpha, 0.0, 1.0)?;
                check_range("strength", p.strength, 0.0, 4.0)
            }
            Self::Invert(_) => Ok(()),
            Self::ChannelRange(ChannelRangeParams { range, .. }) | Self::Range(RangeParams { range }) => {
                let (lo, hi) = scalar_bounds(kind);
                check_range("range", *range, lo, hi)
            }
            Self::KernelSize(p) => check_sizes(&p.sizes, 1),
            Self::MotionBlur(p) => {
                check_sizes(&p.sizes, 3)?;
                check_range("angle_range_deg", p.angle_range_deg, -360.0, 720.0)
            }
            Self::SuperPixels(p) => {
                if p.n_segments == 0 || p.n_segments > 1 << 20 {
                    return err(format!("n_segments {} must lie in [1, 2^20]", p.n_segments));
                }
                check_unit("replace_prob", p.replace_prob)
            }
            Self::SimplexNoise(p) => {
                if !(1..=4).contains(&p.octaves) {
                    return err(format!("octaves {} must lie in [1, 4]", p.octaves));
                }
                if !(p.feature_scale >= 1.0 && p.feature_scale.is_finite()) {
                    return err(format!("feature_scale {} must be at least 1 pixel", p.feature_scale));
                }
                Ok(())
            }
            Self::CoarseDropout(p) => {
                if p.count[0] > p.count[1] || p.count[1] > 64 {
                    return err(format!("count {:?} must be an ordered range within [0, 64]", p.count));
                }
                if !(p.max_size_frac > 0.0 && p.max_size_frac <= 1.0) {
                    return err(format!("max_size_frac {} must lie in (0, 1]", p.max_size_frac));
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn every_default_validates() {
        for kind in AugmentationKind::ALL {
            AugParams::default_for(kind).validate(kind).unwrap();
        }
    }

    #[test]
    fn partial_objects_fill_defaults() {
        let p = AugParams::from_value(AugmentationKind::Multiply, Some(json!({"per_channel": true}))).unwrap();
        assert_eq!(
            p,
            AugParams::ChannelRange(ChannelRangeParams {
                range: [0.7, 1.3],
                per_channel: true
            })
        );
        let p = AugParams::from_value(AugmentationKind::Shadow, Some(json!({"factor": 0.25}))).unwrap();
        assert_eq!(
            p,
            AugParams::Shadow(ShadowParams {
                threshold: 0.5,
                factor: 0.25
            })
        );
    }

    #[test]
    fn out_of_range_is_a_config_error() {
        let cases = [
            (AugmentationKind::AddValue, json!({"range": [-2.0, 0.0]})),
            (AugmentationKind::Multiply, json!({"range": [1.3, 0.7]})),
            (AugmentationKind::Snow, json!({"severity": [1, 3]})),
            (AugmentationKind::MedianBlur, json!({"sizes": [4]})),
            (AugmentationKind::Shadow, json!({"threshold": 1.0})),
            (AugmentationKind::SimplexNoise, json!({"octaves": 5})),
            (AugmentationKind::Invert, json!({"bogus": 1})),
        ];
        for (kind, v) in cases {
            let e = AugParams::from_value(kind, Some(v.clone())).unwrap_err();
            assert!(matches!(e, AugmentError::Config(_)), "{kind:?} {v}");
        }
    }

    #[test]
    fn mismatched_variant_is_rejected() {
        let p = AugParams::default_for(AugmentationKind::Affine);
        assert!(p.validate(AugmentationKind::Shadow).is_err());
    }
}
