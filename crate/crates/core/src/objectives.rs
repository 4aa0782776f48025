//! Loss functions with analytic input gradients.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_same(a: &Array2<impl Scalar>, b: &Array2<impl Scalar>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Row-wise L2 normalization; returns the unit rows and the original norms.
pub fn normalize_rows<T: Scalar>(x: &Array2<T>) -> Result<(Array2<T>, Array1<T>)> {
    let norms: Array1<T> = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|&n| !(n > T::zero())) {
        return Err(Error::ZeroNorm(i));
    }
    let mut u = x.clone();
    for (mut row, &n) in u.rows_mut().into_iter().zip(&norms) {
        row.mapv_inplace(|v| v / n);
    }
    Ok((u, norms))
}

/// Chain rule through `u = x / |x|`.
fn normalize_backward<T: Scalar>(u: &Array2<T>, norms: &Array1<T>, du: &Array2<T>) -> Array2<T> {
    let mut dx = du.clone();
    for ((mut d, ur), &n) in dx.rows_mut().into_iter().zip(u.rows()).zip(norms) {
        let proj = ur.dot(&d);
        d.zip_mut_with(&ur, |g, &uu| *g = (*g - uu * proj) / n);
    }
    dx
}

/// NT-Xent (normalized temperature-scaled cross entropy) loss.
pub fn nt_xent<T: Scalar>(z1: &Array2<T>, z2: &Array2<T>, temperature: f64) -> Result<T> {
    nt_xent_with_grad(z1, z2, temperature).map(|r| r.0)
}

/// NT-Xent loss together with its gradients with respect to `z1` and `z2`.
pub fn nt_xent_with_grad<T: Scalar>(
    z1: &Array2<T>,
    z2: &Array2<T>,
    temperature: f64,
) -> Result<(T, Array2<T>, Array2<T>)> {
    check_same(z1, z2, "nt_xent")?;
    let n = z1.nrows();
    if n == 0 {
        return Err(Error::Shape("nt_xent: empty batch".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let z = ndarray::concatenate(Axis(0), &[z1.view(), z2.view()]).expect("same widths");
    let (u, norms) = normalize_rows(&z)?;
    let m = 2 * n;
    let inv_t = T::lit(1.0 / temperature);
    let sim = u.dot(&u.t()).mapv(|v| v * inv_t);
    let mut grad_s = Array2::<T>::zeros((m, m));
    let mut loss = T::zero();
    let scale = T::lit(1.0 / m as f64);
    for i in 0..m {
        let pos = (i + n) % m;
        let mut mx = T::neg_infinity();
        for j in (0..m).filter(|&j| j != i) {
            mx = mx.max(sim[[i, j]]);
        }
        let mut denom = T::zero();
        for j in (0..m).filter(|&j| j != i) {
            denom += (sim[[i, j]] - mx).exp();
        }
        let lse = mx + denom.ln();
        loss += lse - sim[[i, pos]];
        for j in (0..m).filter(|&j| j != i) {
            grad_s[[i, j]] = (sim[[i, j]] - lse).exp() * scale;
        }
        grad_s[[i, pos]] -= scale;
    }
    let sym = (&grad_s + &grad_s.t()).mapv(|v| v * inv_t);
    let du = sym.dot(&u);
    let dz = normalize_backward(&u, &norms, &du);
    let dz1 = dz.slice(ndarray::s![..n, ..]).to_owned();
    let dz2 = dz.slice(ndarray::s![n.., ..]).to_owned();
    Ok((loss * scale, dz1, dz2))
}

/// BYOL regression loss `mean(2 - 2 cos(p, t))` for one view ordering.
pub fn byol_loss<T: Scalar>(prediction: &Array2<T>, target: &Array2<T>) -> Result<T> {
    byol_loss_with_grad(prediction, target).map(|r| r.0)
}

/// BYOL loss and its gradient with respect to the prediction; the target
/// receives no gradient.
pub fn byol_loss_with_grad<T: Scalar>(prediction: &Array2<T>, target: &Array2<T>) -> Result<(T, Array2<T>)> {
    check_same(prediction, target, "byol_loss")?;
    let n = prediction.nrows();
    if n == 0 {
        return Err(Error::Shape("byol_loss: empty batch".into()));
    }
    let (u, norms) = normalize_rows(prediction)?;
    let (v, _) = normalize_rows(target)?;
    let inv_n = T::lit(1.0 / n as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    for (ur, vr) in u.rows().into_iter().zip(v.rows()) {
        loss += two - two * ur.dot(&vr);
    }
    let du = v.mapv(|x| -two * x * inv_n);
    Ok((loss * inv_n, normalize_backward(&u, &norms, &du)))
}

/// Symmetrized BYOL loss: mean of `byol(p1, t2)` and `byol(p2, t1)`, in `[0, 4]`.
pub fn byol_loss_symmetric<T: Scalar>(
    p1: &Array2<T>,
    t2: &Array2<T>,
    p2: &Array2<T>,
    t1: &Array2<T>,
) -> Result<T> {
    Ok((byol_loss(p1, t2)? + byol_loss(p2, t1)?) * T::lit(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionLoss {
    #[default]
    Mse,
    Logcosh,
}

/// `log(cosh(x))` without overflow.
pub fn logcosh<T: Scalar>(x: T) -> T {
    let a = x.abs();
    if a < T::lit(1.0) {
        let s = (a * T::lit(0.5)).sinh();
        (T::lit(2.0) * s * s).ln_1p()
    } else {
        a - T::lit(std::f64::consts::LN_2) + (T::lit(-2.0) * a).exp().ln_1p()
    }
}

pub fn param_regression_loss<T: Scalar>(estimate: &Array2<T>, truth: &Array2<T>, kind: RegressionLoss) -> Result<T> {
    param_regression_loss_with_grad(estimate, truth, kind).map(|r| r.0)
}

/// Regression loss and its gradient with respect to the estimate.
pub fn param_regression_loss_with_grad<T: Scalar>(
    estimate: &Array2<T>,
    truth: &Array2<T>,
    kind: RegressionLoss,
) -> Result<(T, Array2<T>)> {
    check_same(estimate, truth, "param_regression_loss")?;
    if estimate.is_empty() {
        return Err(Error::Shape("param_regression_loss: empty input".into()));
    }
    let inv = T::lit(1.0 / estimate.len() as f64);
    let err = estimate - truth;
    let (loss, grad) = match kind {
        RegressionLoss::Mse => (
            err.iter().fold(T::zero(), |a, &e| a + e * e),
            err.mapv(|e| T::lit(2.0) * e * inv),
        ),
        RegressionLoss::Logcosh => (
            err.iter().fold(T::zero(), |a, &e| a + logcosh(e)),
            err.mapv(|e| e.tanh() * inv),
        ),
    };
    Ok((loss * inv, grad))
}

/// Mean squared distance between two latent batches.
pub fn invariant_variant_loss<T: Scalar>(l1: &Array2<T>, l1_prime: &Array2<T>) -> Result<T> {
    invariant_variant_loss_with_grad(l1, l1_prime).map(|r| r.0)
}

pub fn invariant_variant_loss_with_grad<T: Scalar>(
    l1: &Array2<T>,
    l1_prime: &Array2<T>,
) -> Result<(T, Array2<T>, Array2<T>)> {
    let (loss, g) = param_regression_loss_with_grad(l1, l1_prime, RegressionLoss::Mse)?;
    let neg = g.mapv(|v| -v);
    Ok((loss, g, neg))
}

/// Loss components of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l1_contrastive: f64,
    pub l2_regression: f64,
    pub total: f64,
    pub weight_lambda: f64,
}

/// `total = contrastive + lambda * regression`. Non-finite values are
/// reported as divergence.
pub fn combined_loss(contrastive: f64, regression: f64, lambda: f64) -> Result<LossReport> {
    let total = contrastive + lambda * regression;
    if !contrastive.is_finite() || !regression.is_finite() || !lambda.is_finite() || !total.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            detail: format!("non-finite loss: contrastive={contrastive} regression={regression} lambda={lambda}"),
        });
    }
    Ok(LossReport { l1_contrastive: contrastive, l2_regression: regression, total, weight_lambda: lambda })
}
