use serde::{Deserialize, Serialize};

use super::matrix::HomographyMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest shear magnitude in degrees; normalized shears are `shear / SHEAR_MAX_DEG`.
pub const SHEAR_MAX_DEG: f64 = 25.0;

/// Raw affine parameters. Angles in degrees, translations in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams<T> {
    pub rotation_deg: T,
    pub translate_x: T,
    pub translate_y: T,
    pub scale: T,
    pub shear_x_deg: T,
    pub shear_y_deg: T,
}

impl<T: Scalar> Default for AffineParams<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> AffineParams<T> {
    pub fn identity() -> Self {
        Self {
            rotation_deg: T::zero(),
            translate_x: T::zero(),
            translate_y: T::zero(),
            scale: T::one(),
            shear_x_deg: T::zero(),
            shear_y_deg: T::zero(),
        }
    }
}

/// Sampling box for [`AffineParams`]. Translations are fractions of the
/// image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineRanges {
    pub rotation_deg: (f64, f64),
    pub translate_frac: (f64, f64),
    pub scale: (f64, f64),
    pub shear_deg: (f64, f64),
}

impl Default for AffineRanges {
    fn default() -> Self {
        Self {
            rotation_deg: (-90.0, 90.0),
            translate_frac: (0.0, 0.25),
            scale: (0.7, 1.3),
            shear_deg: (-SHEAR_MAX_DEG, SHEAR_MAX_DEG),
        }
    }
}

impl AffineRanges {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, (lo, hi): (f64, f64)| -> Result<()> {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("range {name} = ({lo}, {hi}) is not an interval")));
            }
            Ok(())
        };
        bad("rotation_deg", self.rotation_deg)?;
        bad("translate_frac", self.translate_frac)?;
        bad("scale", self.scale)?;
        bad("shear_deg", self.shear_deg)?;
        if self.scale.0 <= 0.0 {
            return Err(Error::Config("scale range must be positive".into()));
        }
        if self.shear_deg.0 <= -90.0 || self.shear_deg.1 >= 90.0 {
            return Err(Error::Config("shear range must lie inside (-90, 90)".into()));
        }
        Ok(())
    }

    fn check<T: Scalar>(&self, p: &AffineParams<T>, width: usize, height: usize) -> Result<()> {
        let within = |field: &'static str, v: f64, (lo, hi): (f64, f64)| {
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            if v.is_finite() && v >= lo - slack && v <= hi + slack {
                Ok(())
            } else {
                Err(Error::Range { field, value: v, min: lo, max: hi })
            }
        };
        within("rotation_deg", p.rotation_deg.as_f64(), self.rotation_deg)?;
        within("translate_x", p.translate_x.as_f64() / width as f64, self.translate_frac)?;
        within("translate_y", p.translate_y.as_f64() / height as f64, self.translate_frac)?;
        within("scale", p.scale.as_f64(), self.scale)?;
        within("shear_x_deg", p.shear_x_deg.as_f64(), self.shear_deg)?;
        within("shear_y_deg", p.shear_y_deg.as_f64(), self.shear_deg)?;
        Ok(())
    }
}

/// Image centre in pixel coordinates (pixel centres sit on integers).
pub(crate) fn centre<T: Scalar>(width: usize, height: usize) -> (T, T) {
    let two = T::lit(2.0);
    (
        T::lit((width as f64) - 1.0) / two,
        T::lit((height as f64) - 1.0) / two,
    )
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Shape(format!("image dimensions {width}x{height} must be positive")));
    }
    Ok(())
}

/// Affine matrix for parameters inside the default sampling box.
pub fn affine_matrix<T: Scalar>(p: &AffineParams<T>, width: usize, height: usize) -> Result<HomographyMatrix<T>> {
    affine_matrix_within(p, width, height, &AffineRanges::default())
}

/// Affine matrix with parameters validated against `ranges`.
///
/// About the image centre: shear, then scale, then rotation, then translation.
pub fn affine_matrix_within<T: Scalar>(
    p: &AffineParams<T>,
    width: usize,
    height: usize,
    ranges: &AffineRanges,
) -> Result<HomographyMatrix<T>> {
    check_dims(width, height)?;
    ranges.check(p, width, height)?;
    Ok(build_affine(p, width, height))
}

fn build_affine<T: Scalar>(p: &AffineParams<T>, width: usize, height: usize) -> HomographyMatrix<T> {
    let (cx, cy) = centre::<T>(width, height);
    let theta = p.rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let kx = p.shear_x_deg.to_radians().tan();
    let ky = p.shear_y_deg.to_radians().tan();
    let s = p.scale;

    // A = R * s * Sh with Sh = [[1, kx], [ky, 1]]
    let a00 = s * (cos - sin * ky);
    let a01 = s * (cos * kx - sin);
    let a10 = s * (sin + cos * ky);
    let a11 = s * (sin * kx + cos);
    let tx = cx + p.translate_x - (a00 * cx + a01 * cy);
    let ty = cy + p.translate_y - (a10 * cx + a11 * cy);
    let (z, o) = (T::zero(), T::one());
    HomographyMatrix::from_rows([[a00, a01, tx], [a10, a11, ty], [z, z, o]])
        .expect("affine matrices are always in gauge")
}

/// Which parameters the regression head predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformMode {
    Affine,
    Homography,
    Rotation,
    Translation,
    Scale,
    Shear,
}

impl TransformMode {
    pub const ALL: [TransformMode; 6] = [
        TransformMode::Affine,
        TransformMode::Homography,
        TransformMode::Rotation,
        TransformMode::Translation,
        TransformMode::Scale,
        TransformMode::Shear,
    ];

    /// Output dimensionality `m` of the regression head.
    pub fn dim(self) -> usize {
        match self {
            TransformMode::Affine => 6,
            TransformMode::Homography => 8,
            TransformMode::Rotation | TransformMode::Scale => 1,
            TransformMode::Translation | TransformMode::Shear => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformMode::Affine => "affine",
            TransformMode::Homography => "homography",
            TransformMode::Rotation => "rotation",
            TransformMode::Translation => "translation",
            TransformMode::Scale => "scale",
            TransformMode::Shear => "shear",
        }
    }
}

impl std::fmt::Display for TransformMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown transform mode `{s}`")))
    }
}

/// Normalized regression target.
///
/// Affine packing is `[rotation, t_y, t_x, scale, shear_y, shear_x]`; the
/// component modes keep the same relative order (`[t_y, t_x]`,
/// `[shear_y, shear_x]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParams<T> {
    pub mode: TransformMode,
    pub values: Vec<T>,
}

impl<T: Scalar> TransformParams<T> {
    pub fn new(mode: TransformMode, values: Vec<T>) -> Result<Self> {
        if values.len() != mode.dim() {
            return Err(Error::Shape(format!(
                "{mode} parameters need {} values, got {}",
                mode.dim(),
                values.len()
            )));
        }
        Ok(Self { mode, values })
    }

    pub fn identity(mode: TransformMode) -> Self {
        let values = match mode {
            TransformMode::Homography => vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            TransformMode::Affine => vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            TransformMode::Scale => vec![1.0],
            other => vec![0.0; other.dim()],
        };
        Self {
            mode,
            values: values.into_iter().map(T::lit).collect(),
        }
    }

    /// Rebuilds the exact matrix these parameters describe.
    pub fn to_matrix(&self, width: usize, height: usize) -> Result<HomographyMatrix<T>> {
        match self.mode {
            TransformMode::Homography => homography_from_param_vector(self, width, height),
            _ => {
                check_dims(width, height)?;
                Ok(build_affine(&denormalize_params(self, width, height)?, width, height))
            }
        }
    }
}

/// Full 6-vector normalization of an affine parameter set.
pub fn normalize_params<T: Scalar>(raw: &AffineParams<T>, width: usize, height: usize) -> TransformParams<T> {
    normalize_for_mode(raw, TransformMode::Affine, width, height)
        .expect("affine mode is always normalizable")
}

/// Normalizes the components selected by `mode`. Fails for homography mode,
/// whose targets come from [`homography_param_vector`].
pub fn normalize_for_mode<T: Scalar>(
    raw: &AffineParams<T>,
    mode: TransformMode,
    width: usize,
    height: usize,
) -> Result<TransformParams<T>> {
    let rot = raw.rotation_deg / T::lit(360.0);
    let ty = raw.translate_y / T::lit(height as f64);
    let tx = raw.translate_x / T::lit(width as f64);
    let shy = raw.shear_y_deg / T::lit(SHEAR_MAX_DEG);
    let shx = raw.shear_x_deg / T::lit(SHEAR_MAX_DEG);
    let values = match mode {
        TransformMode::Affine => vec![rot, ty, tx, raw.scale, shy, shx],
        TransformMode::Rotation => vec![rot],
        TransformMode::Translation => vec![ty, tx],
        TransformMode::Scale => vec![raw.scale],
        TransformMode::Shear => vec![shy, shx],
        TransformMode::Homography => {
            return Err(Error::Config("homography targets are matrix entries, not affine parameters".into()))
        }
    };
    Ok(TransformParams { mode, values })
}

/// Inverse of [`normalize_for_mode`]; components the mode does not carry are
/// set to their identity values.
pub fn denormalize_params<T: Scalar>(params: &TransformParams<T>, width: usize, height: usize) -> Result<AffineParams<T>> {
    if params.values.len() != params.mode.dim() {
        return Err(Error::Shape("parameter vector length does not match its mode".into()));
    }
    let v = &params.values;
    let rot = |x: T| x * T::lit(360.0);
    let ty = |x: T| x * T::lit(height as f64);
    let tx = |x: T| x * T::lit(width as f64);
    let sh = |x: T| x * T::lit(SHEAR_MAX_DEG);
    let mut p = AffineParams::identity();
    match params.mode {
        TransformMode::Affine => {
            p.rotation_deg = rot(v[0]);
            p.translate_y = ty(v[1]);
            p.translate_x = tx(v[2]);
            p.scale = v[3];
            p.shear_y_deg = sh(v[4]);
            p.shear_x_deg = sh(v[5]);
        }
        TransformMode::Rotation => p.rotation_deg = rot(v[0]),
        TransformMode::Translation => {
            p.translate_y = ty(v[0]);
            p.translate_x = tx(v[1]);
        }
        TransformMode::Scale => p.scale = v[0],
        TransformMode::Shear => {
            p.shear_y_deg = sh(v[0]);
            p.shear_x_deg = sh(v[1]);
        }
        TransformMode::Homography => {
            return Err(Error::Config("homography parameters have no affine decomposition".into()))
        }
    }
    Ok(p)
}

/// The eight free entries with translation-like entries divided by the image
/// size and perspective entries multiplied by it.
pub fn homography_param_vector<T: Scalar>(h: &HomographyMatrix<T>, width: usize, height: usize) -> TransformParams<T> {
    let (w, hh) = (T::lit(width as f64), T::lit(height as f64));
    let m = h.rows();
    TransformParams {
        mode: TransformMode::Homography,
        values: vec![
            m[0][0],
            m[0][1],
            m[0][2] / w,
            m[1][0],
            m[1][1],
            m[1][2] / hh,
            m[2][0] * w,
            m[2][1] * hh,
        ],
    }
}

pub fn homography_from_param_vector<T: Scalar>(
    params: &TransformParams<T>,
    width: usize,
    height: usize,
) -> Result<HomographyMatrix<T>> {
    if params.mode != TransformMode::Homography || params.values.len() != 8 {
        return Err(Error::Shape("expected an 8-entry homography parameter vector".into()));
    }
    check_dims(width, height)?;
    let (w, hh) = (T::lit(width as f64), T::lit(height as f64));
    let v = &params.values;
    HomographyMatrix::from_rows([
        [v[0], v[1], v[2] * w],
        [v[3], v[4], v[5] * hh],
        [v[6] / w, v[7] / hh, T::one()],
    ])
}
