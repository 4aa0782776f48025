use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::b1::{apply_b1, sample_b1, AugmentationSpec, B1Config};
use super::b2::{sample_b2, B2Config};
use super::BaseTransform;
use crate::error::{Error, Result};
use crate::geometry::{warp_image, HomographyMatrix, TransformParams};
use crate::image::Image;
use crate::scalar::Scalar;

/// Checks that no base transform belongs to both sets and that B2 holds
/// nothing that breaks the homography relation between `x1` and `x1'`.
pub fn check_disjoint(b1: &[BaseTransform], b2: &[BaseTransform]) -> Result<()> {
    let violations: BTreeSet<String> = b2
        .iter()
        .filter(|t| b1.contains(t) || t.breaks_homography())
        .map(|t| t.to_string())
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Disjointness(violations.into_iter().collect()))
    }
}

pub fn validate_disjointness(b1: &B1Config, b2: &B2Config) -> Result<()> {
    check_disjoint(&b1.order, &b2.members())
}

/// A view produced by warping an augmented view with a sampled B2 transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpedView<T> {
    pub image: Image<T>,
    pub phi: TransformParams<f64>,
    pub matrix: HomographyMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewTriple<T> {
    pub x1: Image<T>,
    pub x2: Image<T>,
    pub x1_prime: Image<T>,
    /// Normalized ground truth for the transform taking `x1` to `x1_prime`.
    pub phi: TransformParams<f64>,
    pub matrix: HomographyMatrix<f64>,
    /// `x2` warped by an independent B2 draw; only produced when a second
    /// regression module is configured.
    pub x2_prime: Option<WarpedView<T>>,
}

/// Produces contrastive views and regression triples from source images.
/// Construction fails when the two sets overlap.
#[derive(Debug, Clone)]
pub struct TripleSampler {
    b1: B1Config,
    b2: B2Config,
    second_warp: bool,
}

impl TripleSampler {
    pub fn new(b1: B1Config, b2: B2Config) -> Result<Self> {
        b1.validate()?;
        b2.validate()?;
        validate_disjointness(&b1, &b2)?;
        Ok(Self { b1, b2, second_warp: false })
    }

    /// Also warp `x2` for a second regression module.
    pub fn with_second_warp(mut self, on: bool) -> Self {
        self.second_warp = on;
        self
    }

    pub fn b1(&self) -> &B1Config {
        &self.b1
    }

    pub fn b2(&self) -> &B2Config {
        &self.b2
    }

    /// The two contrastive views. Consumes the same random draws as the first
    /// half of [`TripleSampler::triple`].
    pub fn views<T: Scalar, R: Rng + ?Sized>(
        &self,
        x: &Image<T>,
        rng: &mut R,
    ) -> (AugmentationSpec, AugmentationSpec, Image<T>, Image<T>) {
        let spec_a = sample_b1(rng, &self.b1, x.height(), x.width());
        let spec_b = sample_b1(rng, &self.b1, x.height(), x.width());
        let x1 = apply_b1(x, &spec_a);
        let x2 = apply_b1(x, &spec_b);
        (spec_a, spec_b, x1, x2)
    }

    pub fn warp<T: Scalar, R: Rng + ?Sized>(&self, view: &Image<T>, rng: &mut R) -> Result<WarpedView<T>> {
        let (matrix, phi) = sample_b2(rng, &self.b2, view.width(), view.height())?;
        let image = warp_image(view, &matrix, self.b2.interpolation, T::lit(self.b2.fill))?;
        Ok(WarpedView { image, phi, matrix })
    }

    pub fn triple<T: Scalar, R: Rng + ?Sized>(&self, x: &Image<T>, rng: &mut R) -> Result<ViewTriple<T>> {
        let (_, _, x1, x2) = self.views(x, rng);
        let w = self.warp(&x1, rng)?;
        let x2_prime = if self.second_warp { Some(self.warp(&x2, rng)?) } else { None };
        Ok(ViewTriple { x1, x2, x1_prime: w.image, phi: w.phi, matrix: w.matrix, x2_prime })
    }
}

/// One-shot triple construction; validates the configuration first.
pub fn make_view_triple<T: Scalar, R: Rng + ?Sized>(
    x: &Image<T>,
    rng: &mut R,
    b1: &B1Config,
    b2: &B2Config,
) -> Result<ViewTriple<T>> {
    TripleSampler::new(b1.clone(), b2.clone())?.triple(x, rng)
}
