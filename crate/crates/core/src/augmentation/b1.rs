use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops;
use super::BaseTransform;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropConfig {
    /// Fraction of the source area kept by the crop.
    pub area: (f64, f64),
    /// Aspect ratio (width / height) range.
    pub ratio: (f64, f64),
    pub prob: f64,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self { area: (0.08, 1.0), ratio: (3.0 / 4.0, 4.0 / 3.0), prob: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterConfig {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
    pub prob: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { brightness: 0.8, contrast: 0.8, saturation: 0.8, hue: 0.2, prob: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlurConfig {
    pub kernel: usize,
    pub variance: (f64, f64),
    pub prob: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self { kernel: 3, variance: (0.1, 2.0), prob: 1.0 }
    }
}

/// Contrastive augmentation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct B1Config {
    pub output_height: usize,
    pub output_width: usize,
    pub crop: CropConfig,
    pub flip_prob: f64,
    pub jitter: JitterConfig,
    pub grayscale_prob: f64,
    pub blur: BlurConfig,
    /// Application order; also the member set of B1.
    pub order: Vec<BaseTransform>,
}

impl Default for B1Config {
    fn default() -> Self {
        Self {
            output_height: 32,
            output_width: 32,
            crop: CropConfig::default(),
            flip_prob: 0.5,
            jitter: JitterConfig::default(),
            grayscale_prob: 0.2,
            blur: BlurConfig::default(),
            order: vec![
                BaseTransform::RandomCrop,
                BaseTransform::HorizontalFlip,
                BaseTransform::ColourJitter,
                BaseTransform::Grayscale,
                BaseTransform::GaussianBlur,
            ],
        }
    }
}

impl B1Config {
    /// Every stochastic transform switched off; only the crop (probability 1) fires.
    pub fn deterministic_crop_only() -> Self {
        let mut cfg = Self::default();
        cfg.flip_prob = 0.0;
        cfg.jitter.prob = 0.0;
        cfg.grayscale_prob = 0.0;
        cfg.blur.prob = 0.0;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("b1 {name} probability {p} outside [0, 1]")))
            }
        };
        prob("crop", self.crop.prob)?;
        prob("flip", self.flip_prob)?;
        prob("jitter", self.jitter.prob)?;
        prob("grayscale", self.grayscale_prob)?;
        prob("blur", self.blur.prob)?;
        let (lo, hi) = self.crop.area;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("crop area range ({lo}, {hi}) must lie within (0, 1]")));
        }
        let (rlo, rhi) = self.crop.ratio;
        if !(rlo > 0.0 && rlo <= rhi) {
            return Err(Error::Config(format!("crop ratio range ({rlo}, {rhi}) is invalid")));
        }
        if self.blur.kernel != 3 {
            return Err(Error::Config("only 3x3 blur kernels are supported".into()));
        }
        let (vlo, vhi) = self.blur.variance;
        if !(vlo > 0.0 && vlo <= vhi) {
            return Err(Error::Config(format!("blur variance range ({vlo}, {vhi}) is invalid")));
        }
        let j = &self.jitter;
        if j.brightness < 0.0 || j.contrast < 0.0 || j.saturation < 0.0 || !(0.0..=0.5).contains(&j.hue) {
            return Err(Error::Config("jitter strengths must be non-negative and hue <= 0.5".into()));
        }
        if self.output_height == 0 || self.output_width == 0 {
            return Err(Error::Config("output resolution must be positive".into()));
        }
        for (i, t) in self.order.iter().enumerate() {
            if !t.is_b1_capable() {
                return Err(Error::Config(format!("`{t}` cannot be used as a B1 transform")));
            }
            if self.order[..i].contains(t) {
                return Err(Error::Config(format!("`{t}` appears twice in the B1 order")));
            }
        }
        Ok(())
    }
}

/// One materialized transform with its sampled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugOp {
    RandomCrop { top: usize, left: usize, height: usize, width: usize },
    HorizontalFlip,
    ColourJitter { brightness: f64, contrast: f64, saturation: f64, hue: f64, order: [u8; 4] },
    Grayscale,
    GaussianBlur { variance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugStep {
    pub fired: bool,
    #[serde(flatten)]
    pub op: AugOp,
}

/// Replayable record of one sampled augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub output_height: usize,
    pub output_width: usize,
    pub steps: Vec<AugStep>,
}

impl AugmentationSpec {
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn fired(&self, kind: BaseTransform) -> bool {
        self.steps.iter().any(|s| s.fired && s.op.kind() == kind)
    }
}

impl AugOp {
    pub fn kind(&self) -> BaseTransform {
        match self {
            AugOp::RandomCrop { .. } => BaseTransform::RandomCrop,
            AugOp::HorizontalFlip => BaseTransform::HorizontalFlip,
            AugOp::ColourJitter { .. } => BaseTransform::ColourJitter,
            AugOp::Grayscale => BaseTransform::Grayscale,
            AugOp::GaussianBlur { .. } => BaseTransform::GaussianBlur,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn sample_crop<R: Rng + ?Sized>(rng: &mut R, cfg: &CropConfig, src_h: usize, src_w: usize) -> AugOp {
    let area = (src_h * src_w) as f64;
    let log_ratio = (cfg.ratio.0.ln(), cfg.ratio.1.ln());
    for _ in 0..10 {
        let target = area * uniform(rng, cfg.area);
        let aspect = uniform(rng, log_ratio).exp();
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= src_w && h <= src_h {
            let top = rng.gen_range(0..=src_h - h);
            let left = rng.gen_range(0..=src_w - w);
            return AugOp::RandomCrop { top, left, height: h, width: w };
        }
    }
    // centre crop fallback
    let in_ratio = src_w as f64 / src_h as f64;
    let (h, w) = if in_ratio < cfg.ratio.0 {
        ((src_w as f64 / cfg.ratio.0).round() as usize, src_w)
    } else if in_ratio > cfg.ratio.1 {
        (src_h, (src_h as f64 * cfg.ratio.1).round() as usize)
    } else {
        (src_h, src_w)
    };
    let (h, w) = (h.clamp(1, src_h), w.clamp(1, src_w));
    AugOp::RandomCrop { top: (src_h - h) / 2, left: (src_w - w) / 2, height: h, width: w }
}

/// Samples an ordered augmentation for a `src_h x src_w` source image.
///
/// Parameters are drawn for every transform whether or not it fires, so the
/// stream consumed does not depend on the firing outcomes.
pub fn sample_b1<R: Rng + ?Sized>(rng: &mut R, cfg: &B1Config, src_h: usize, src_w: usize) -> AugmentationSpec {
    let mut steps = Vec::with_capacity(cfg.order.len());
    for kind in &cfg.order {
        let step = match kind {
            BaseTransform::RandomCrop => {
                let fired = rng.gen::<f64>() < cfg.crop.prob;
                AugStep { fired, op: sample_crop(rng, &cfg.crop, src_h, src_w) }
            }
            BaseTransform::HorizontalFlip => AugStep { fired: rng.gen::<f64>() < cfg.flip_prob, op: AugOp::HorizontalFlip },
            BaseTransform::ColourJitter => {
                let j = &cfg.jitter;
                let fired = rng.gen::<f64>() < j.prob;
                let factor = |rng: &mut R, s: f64| uniform(rng, ((1.0 - s).max(0.0), 1.0 + s));
                let brightness = factor(rng, j.brightness);
                let contrast = factor(rng, j.contrast);
                let saturation = factor(rng, j.saturation);
                let hue = uniform(rng, (-j.hue, j.hue));
                let mut order = [0u8, 1, 2, 3];
                order.shuffle(rng);
                AugStep { fired, op: AugOp::ColourJitter { brightness, contrast, saturation, hue, order } }
            }
            BaseTransform::Grayscale => AugStep { fired: rng.gen::<f64>() < cfg.grayscale_prob, op: AugOp::Grayscale },
            BaseTransform::GaussianBlur => {
                let fired = rng.gen::<f64>() < cfg.blur.prob;
                AugStep { fired, op: AugOp::GaussianBlur { variance: uniform(rng, cfg.blur.variance) } }
            }
            other => unreachable!("validated B1 order contains {other}"),
        };
        steps.push(step);
    }
    AugmentationSpec { output_height: cfg.output_height, output_width: cfg.output_width, steps }
}

/// Applies a recorded augmentation. The result always has the spec's output size.
pub fn apply_b1<T: Scalar>(img: &Image<T>, spec: &AugmentationSpec) -> Image<T> {
    let (oh, ow) = (spec.output_height, spec.output_width);
    let mut cur = img.clone();
    for step in spec.steps.iter().filter(|s| s.fired) {
        cur = match &step.op {
            AugOp::RandomCrop { top, left, height, width } => {
                ops::resized_crop(&cur, *top, *left, *height, *width, oh, ow)
            }
            AugOp::HorizontalFlip => ops::horizontal_flip(&cur),
            AugOp::ColourJitter { brightness, contrast, saturation, hue, order } => {
                for &which in order {
                    match which {
                        0 => ops::adjust_brightness(&mut cur, T::lit(*brightness)),
                        1 => ops::adjust_contrast(&mut cur, T::lit(*contrast)),
                        2 => ops::adjust_saturation(&mut cur, T::lit(*saturation)),
                        _ => ops::adjust_hue(&mut cur, *hue),
                    }
                }
                cur
            }
            AugOp::Grayscale => ops::grayscale(&cur),
            AugOp::GaussianBlur { variance } => ops::gaussian_blur3(&cur, *variance),
        };
    }
    if cur.height() != oh || cur.width() != ow {
        let (h, w) = (cur.height(), cur.width());
        cur = ops::resized_crop(&cur, 0, 0, h, w, oh, ow);
    }
    cur
}
