//! Contrastive (B1) and spatial (B2) augmentation sets, sampling of ordered
//! augmentations and construction of `(x1, x2, x1', phi)` training triples.

mod b1;
mod b2;
pub mod ops;
mod triple;

use serde::{Deserialize, Serialize};

pub use b1::{apply_b1, sample_b1, AugOp, AugStep, AugmentationSpec, B1Config, BlurConfig, CropConfig, JitterConfig};
pub use b2::{sample_affine_raw, sample_b2, B2Config};
pub use triple::{check_disjoint, make_view_triple, validate_disjointness, TripleSampler, ViewTriple, WarpedView};

/// Named base transformations across both sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseTransform {
    RandomCrop,
    HorizontalFlip,
    ColourJitter,
    Grayscale,
    GaussianBlur,
    Rotation,
    Translation,
    Scale,
    Shear,
    Perspective,
}

impl BaseTransform {
    pub fn is_b1_capable(self) -> bool {
        matches!(
            self,
            BaseTransform::RandomCrop
                | BaseTransform::HorizontalFlip
                | BaseTransform::ColourJitter
                | BaseTransform::Grayscale
                | BaseTransform::GaussianBlur
        )
    }

    /// Cropping discards content, so a cropped view is no longer a
    /// homography of its source.
    pub fn breaks_homography(self) -> bool {
        matches!(self, BaseTransform::RandomCrop)
    }
}

impl std::fmt::Display for BaseTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BaseTransform::RandomCrop => "random crop",
            BaseTransform::HorizontalFlip => "horizontal flip",
            BaseTransform::ColourJitter => "colour jitter",
            BaseTransform::Grayscale => "grayscale",
            BaseTransform::GaussianBlur => "gaussian blur",
            BaseTransform::Rotation => "rotation",
            BaseTransform::Translation => "translation",
            BaseTransform::Scale => "scale",
            BaseTransform::Shear => "shear",
            BaseTransform::Perspective => "perspective",
        })
    }
}
