//! Projective and affine matrix algebra, image warping and the parameter
//! normalization used for the regression targets.

mod affine;
mod dlt;
pub(crate) mod linalg;
mod matrix;
mod perspective;
mod warp;

pub use affine::{
    affine_matrix, affine_matrix_within, denormalize_params, homography_from_param_vector,
    homography_param_vector, normalize_for_mode, normalize_params, AffineParams, AffineRanges,
    TransformMode, TransformParams, SHEAR_MAX_DEG,
};
pub use dlt::estimate_homography_dlt;
pub use matrix::HomographyMatrix;
pub use perspective::{image_corners, perspective_matrix};
pub use warp::{warp_image, Interpolation};
