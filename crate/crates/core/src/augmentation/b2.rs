use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BaseTransform;
use crate::error::{Error, Result};
use crate::geometry::{
    affine_matrix_within, homography_param_vector, normalize_for_mode, perspective_matrix, AffineParams,
    AffineRanges, HomographyMatrix, Interpolation, TransformMode, TransformParams,
};

/// Spatial transformation set whose parameters the regression head predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct B2Config {
    pub mode: TransformMode,
    pub ranges: AffineRanges,
    /// Corner displacement factor for homography mode: each corner moves
    /// inward by up to `perspective * dim / 2` per axis.
    pub perspective: f64,
    pub interpolation: Interpolation,
    pub fill: f64,
    /// Additional base transforms declared as part of B2. Only used to
    /// express (and reject) invalid set-ups.
    pub extra: Vec<BaseTransform>,
}

impl Default for B2Config {
    fn default() -> Self {
        Self {
            mode: TransformMode::Affine,
            ranges: AffineRanges::default(),
            perspective: 0.5,
            interpolation: Interpolation::Bilinear,
            fill: 0.0,
            extra: Vec::new(),
        }
    }
}

impl B2Config {
    pub fn with_mode(mode: TransformMode) -> Self {
        Self { mode, ..Self::default() }
    }

    /// Every range collapsed onto the identity transform.
    pub fn identity(mode: TransformMode) -> Self {
        Self {
            mode,
            ranges: AffineRanges {
                rotation_deg: (0.0, 0.0),
                translate_frac: (0.0, 0.0),
                scale: (1.0, 1.0),
                shear_deg: (0.0, 0.0),
            },
            perspective: 0.0,
            ..Self::default()
        }
    }

    pub fn members(&self) -> Vec<BaseTransform> {
        use BaseTransform::*;
        let mut m = match self.mode {
            TransformMode::Affine => vec![Rotation, Translation, Scale, Shear],
            TransformMode::Homography => vec![Rotation, Translation, Scale, Shear, Perspective],
            TransformMode::Rotation => vec![Rotation],
            TransformMode::Translation => vec![Translation],
            TransformMode::Scale => vec![Scale],
            TransformMode::Shear => vec![Shear],
        };
        for e in &self.extra {
            if !m.contains(e) {
                m.push(*e);
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if !(0.0..1.0).contains(&self.perspective) {
            return Err(Error::Config(format!("perspective factor {} must lie in [0, 1)", self.perspective)));
        }
        if !self.fill.is_finite() {
            return Err(Error::Config("fill value must be finite".into()));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Raw draw for the components selected by `mode`; the rest stay at identity.
pub fn sample_affine_raw<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &B2Config,
    width: usize,
    height: usize,
) -> AffineParams<f64> {
    let r = &cfg.ranges;
    let mut p = AffineParams::identity();
    let (rot, trans, scale, shear) = match cfg.mode {
        TransformMode::Affine | TransformMode::Homography => (true, true, true, true),
        TransformMode::Rotation => (true, false, false, false),
        TransformMode::Translation => (false, true, false, false),
        TransformMode::Scale => (false, false, true, false),
        TransformMode::Shear => (false, false, false, true),
    };
    if rot {
        p.rotation_deg = uniform(rng, r.rotation_deg);
    }
    if trans {
        p.translate_x = uniform(rng, r.translate_frac) * width as f64;
        p.translate_y = uniform(rng, r.translate_frac) * height as f64;
    }
    if scale {
        p.scale = uniform(rng, r.scale);
    }
    if shear {
        p.shear_x_deg = uniform(rng, r.shear_deg);
        p.shear_y_deg = uniform(rng, r.shear_deg);
    }
    p
}

const MAX_PERSPECTIVE_ATTEMPTS: usize = 100;

/// Samples a spatial transform. The returned matrix is rebuilt from the
/// returned normalized parameters, so `params.to_matrix()` reproduces it
/// exactly.
pub fn sample_b2<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &B2Config,
    width: usize,
    height: usize,
) -> Result<(HomographyMatrix<f64>, TransformParams<f64>)> {
    let raw = sample_affine_raw(rng, cfg, width, height);
    let params = match cfg.mode {
        TransformMode::Homography => {
            let affine = affine_matrix_within(&raw, width, height, &cfg.ranges)?;
            let (mx, my) = (cfg.perspective * width as f64 / 2.0, cfg.perspective * height as f64 / 2.0);
            // inward directions for TL, TR, BR, BL
            let dirs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
            let mut last_err = None;
            let mut found = None;
            for _ in 0..MAX_PERSPECTIVE_ATTEMPTS {
                let mut shifts = [(0.0, 0.0); 4];
                for (s, (dx, dy)) in shifts.iter_mut().zip(dirs) {
                    *s = (dx * uniform(rng, (0.0, mx)), dy * uniform(rng, (0.0, my)));
                }
                match perspective_matrix(&shifts, width, height) {
                    Ok(p) => {
                        found = Some(p);
                        break;
                    }
                    Err(e @ Error::DegenerateQuad(_)) => last_err = Some(e),
                    Err(e) => return Err(e),
                }
            }
            let persp = match found {
                Some(p) => p,
                None => return Err(last_err.unwrap_or(Error::DegenerateQuad("no valid corner draw".into()))),
            };
            homography_param_vector(&persp.compose(&affine)?, width, height)
        }
        mode => {
            affine_matrix_within(&raw, width, height, &cfg.ranges)?;
            normalize_for_mode(&raw, mode, width, height)?
        }
    };
    let matrix = params.to_matrix(width, height)?;
    Ok((matrix, params))
}
