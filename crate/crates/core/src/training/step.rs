use ndarray::{s, Array2, Array4};

use super::config::{ExperimentConfig, LatentSource, LossVariant, Method};
use crate::augmentation::ViewTriple;
use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::geometry::TransformParams;
use crate::model::{batch_tensor, HeadInput, ModelBundle, Placement};
use crate::nn::{EncoderCache, MlpCache, Module, Optimizer};
use crate::objectives::{
    byol_loss_with_grad, combined_loss, invariant_variant_loss_with_grad, nt_xent_with_grad,
    param_regression_loss_with_grad, LossReport,
};
use crate::scalar::Scalar;

/// A warped view batch with its regression targets.
#[derive(Debug, Clone)]
pub struct WarpedBatch<T> {
    pub images: Array4<T>,
    pub phi: Array2<T>,
}

/// Network inputs of one optimization step, already standardized.
#[derive(Debug, Clone)]
pub struct TrainBatch<T> {
    pub x1: Array4<T>,
    pub x2: Array4<T>,
    pub x1_prime: Option<WarpedBatch<T>>,
    pub x2_prime: Option<WarpedBatch<T>>,
}

fn phi_matrix<T: Scalar>(phis: &[&TransformParams<f64>]) -> Array2<T> {
    let m = phis.first().map(|p| p.values.len()).unwrap_or(0);
    Array2::from_shape_fn((phis.len(), m), |(i, j)| T::lit(phis[i].values[j]))
}

impl<T: Scalar> TrainBatch<T> {
    /// Two B1 views per sample and no transformed view.
    pub fn from_pairs(pairs: &[(Image<T>, Image<T>)], stats: &ChannelStats) -> Result<Self> {
        let a: Vec<&Image<T>> = pairs.iter().map(|p| &p.0).collect();
        let b: Vec<&Image<T>> = pairs.iter().map(|p| &p.1).collect();
        Ok(Self {
            x1: batch_tensor(&a, &stats.mean, &stats.std)?,
            x2: batch_tensor(&b, &stats.mean, &stats.std)?,
            x1_prime: None,
            x2_prime: None,
        })
    }

    pub fn from_triples(triples: &[ViewTriple<T>], stats: &ChannelStats) -> Result<Self> {
        let (m, sd) = (&stats.mean, &stats.std);
        let x1: Vec<&Image<T>> = triples.iter().map(|t| &t.x1).collect();
        let x2: Vec<&Image<T>> = triples.iter().map(|t| &t.x2).collect();
        let x1p: Vec<&Image<T>> = triples.iter().map(|t| &t.x1_prime).collect();
        let phi: Vec<&TransformParams<f64>> = triples.iter().map(|t| &t.phi).collect();
        let x2_prime = if triples.iter().all(|t| t.x2_prime.is_some()) && !triples.is_empty() {
            let w: Vec<_> = triples.iter().map(|t| t.x2_prime.as_ref().expect("checked")).collect();
            let imgs: Vec<&Image<T>> = w.iter().map(|v| &v.image).collect();
            let phis: Vec<&TransformParams<f64>> = w.iter().map(|v| &v.phi).collect();
            Some(WarpedBatch { images: batch_tensor(&imgs, m, sd)?, phi: phi_matrix(&phis) })
        } else {
            None
        };
        Ok(Self {
            x1: batch_tensor(&x1, m, sd)?,
            x2: batch_tensor(&x2, m, sd)?,
            x1_prime: Some(WarpedBatch { images: batch_tensor(&x1p, m, sd)?, phi: phi_matrix(&phi) }),
            x2_prime,
        })
    }

    pub fn len(&self) -> usize {
        self.x1.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct ViewPass<T> {
    l: Array2<T>,
    enc: EncoderCache<T>,
    z: Array2<T>,
    proj: MlpCache<T>,
}

fn online_pass<T: Scalar>(bundle: &ModelBundle<T>, x: &Array4<T>) -> ViewPass<T> {
    let (l, enc) = bundle.encoder.forward(x, true);
    let (z, proj) = bundle.projector.forward(&l);
    ViewPass { l, enc, z, proj }
}

/// Gradient contributions of the auxiliary terms to the two anchor views.
struct AuxGrads<T> {
    loss: f64,
    dl: [Array2<T>; 2],
    dz: [Array2<T>; 2],
}

/// Regression (or invariance) terms for x1 -> x1' and, with two modules,
/// x2 -> x2'. Backpropagates through the transformed branches immediately
/// and returns what must be added to the anchor gradients. Every gradient
/// is scaled by `lambda`, so `lambda == 0` contributes exact zeros.
fn aux_terms<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    cfg: &ExperimentConfig,
    batch: &TrainBatch<T>,
    anchors: [&ViewPass<T>; 2],
) -> Result<AuxGrads<T>> {
    let zeros = |a: &Array2<T>| Array2::<T>::zeros(a.dim());
    let mut out = AuxGrads {
        loss: 0.0,
        dl: [zeros(&anchors[0].l), zeros(&anchors[1].l)],
        dz: [zeros(&anchors[0].z), zeros(&anchors[1].z)],
    };
    if !cfg.uses_module() {
        return Ok(out);
    }
    let mut jobs: Vec<(usize, &WarpedBatch<T>)> = Vec::new();
    jobs.push((0, batch.x1_prime.as_ref().ok_or_else(|| Error::Shape("module run without x1'".into()))?));
    if cfg.two_modules {
        jobs.push((1, batch.x2_prime.as_ref().ok_or_else(|| Error::Shape("two-module run without x2'".into()))?));
    }
    let share = 1.0 / jobs.len() as f64;
    let weight = T::lit(cfg.lambda * share);
    let on_g = cfg.placement == Placement::OnG;
    let from_target = cfg.method == Method::Byol && cfg.head_source == LatentSource::Target;

    for (view, warped) in jobs {
        let anchor = anchors[view];
        let (lp, enc_p, zp, proj_p) = if from_target {
            let t = bundle.target.as_ref().ok_or_else(|| Error::Config("byol run without target network".into()))?;
            let lp = t.encoder.forward(&warped.images, true).0;
            let zp = t.projector.infer(&lp);
            (lp, None, zp, None)
        } else {
            let (lp, ec) = bundle.encoder.forward(&warped.images, true);
            let (zp, pc) = if on_g {
                let (z, c) = bundle.projector.forward(&lp);
                (z, Some(c))
            } else {
                (Array2::zeros((0, 0)), None)
            };
            (lp, Some(ec), zp, pc)
        };
        let (a, ap) = if on_g { (&anchor.z, &zp) } else { (&anchor.l, &lp) };

        let (loss, mut ga, mut gb) = match cfg.loss_variant {
            LossVariant::Invariant => {
                let (loss, ga, gb) = invariant_variant_loss_with_grad(a, ap)?;
                (loss, ga.mapv(|v| v * weight), gb.mapv(|v| v * weight))
            }
            LossVariant::Regression | LossVariant::Concat => {
                let input = bundle.head_input(a, ap)?;
                let head = if view == 0 { bundle.regressor.as_mut() } else { bundle.regressor2.as_mut() };
                let head = head.ok_or_else(|| Error::Config("module run without regression head".into()))?;
                let (phi_hat, hc) = head.forward(&input);
                let (loss, dphi) = param_regression_loss_with_grad(&phi_hat, &warped.phi, cfg.regression_loss)?;
                let din = head.backward(&hc, &dphi.mapv(|v| v * weight), true).expect("dx requested");
                match bundle.spec.head.as_ref().map(|h| h.input).unwrap_or_default() {
                    HeadInput::Difference => {
                        let neg = din.mapv(|v| -v);
                        (loss, din, neg)
                    }
                    HeadInput::Concat => {
                        let w = a.ncols();
                        (loss, din.slice(s![.., ..w]).to_owned(), din.slice(s![.., w..]).to_owned())
                    }
                }
            }
        };
        out.loss += share * loss.as_f64();
        if let Some(ec) = enc_p {
            if let Some(pc) = proj_p {
                gb = bundle.projector.backward(&pc, &gb, true).expect("dx requested");
            }
            bundle.encoder.backward(&ec, &gb);
        }
        let slot = if on_g { &mut out.dz[view] } else { &mut out.dl[view] };
        std::mem::swap(slot, &mut ga);
    }
    Ok(out)
}

fn check_finite<T: Scalar>(bundle: &ModelBundle<T>, step: usize) -> Result<()> {
    let mut bad = None;
    bundle.visit(&mut |p| {
        if bad.is_none() && p.grad.iter().any(|g| !g.is_finite()) {
            bad = Some(p.name.clone());
        }
    });
    match bad {
        Some(name) => Err(Error::Divergence { step, detail: format!("non-finite gradient in {name}") }),
        None => Ok(()),
    }
}

fn report(contrastive: f64, regression: f64, lambda: f64, step: usize) -> Result<LossReport> {
    combined_loss(contrastive, regression, lambda).map_err(|e| match e {
        Error::Divergence { detail, .. } => Error::Divergence { step, detail },
        other => other,
    })
}

/// Backward through `g` and `f` for the two anchor views, then BN commit.
fn finish_anchors<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    views: [ViewPass<T>; 2],
    dz: [Array2<T>; 2],
    aux: AuxGrads<T>,
) {
    let AuxGrads { dl: [dl1, dl2], dz: [az1, az2], .. } = aux;
    let [v1, v2] = views;
    let dl_g1 = bundle.projector.backward(&v1.proj, &(&dz[0] + &az1), true).expect("dx requested");
    let dl_g2 = bundle.projector.backward(&v2.proj, &(&dz[1] + &az2), true).expect("dx requested");
    bundle.encoder.backward(&v1.enc, &(dl_g1 + &dl1));
    bundle.encoder.backward(&v2.enc, &(dl_g2 + &dl2));
    bundle.encoder.commit(&v1.enc);
    bundle.encoder.commit(&v2.enc);
}

/// One SimCLR step: NT-Xent between the views plus the weighted module term.
pub fn train_step_simclr<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    opt: &mut Optimizer<T>,
    batch: &TrainBatch<T>,
    cfg: &ExperimentConfig,
    lr: f64,
    step: usize,
) -> Result<LossReport> {
    bundle.zero_grad();
    let v1 = online_pass(bundle, &batch.x1);
    let v2 = online_pass(bundle, &batch.x2);
    let (l1, dz1, dz2) = nt_xent_with_grad(&v1.z, &v2.z, cfg.temperature).map_err(|e| match e {
        Error::ZeroNorm(r) => Error::Divergence { step, detail: format!("zero-norm projection in row {r}") },
        other => other,
    })?;
    let aux = aux_terms(bundle, cfg, batch, [&v1, &v2])?;
    let rep = report(l1.as_f64(), aux.loss, cfg.lambda, step)?;
    finish_anchors(bundle, [v1, v2], [dz1, dz2], aux);
    check_finite(bundle, step)?;
    opt.apply(bundle, lr);
    Ok(rep)
}

/// One BYOL step: predictor/target regression loss plus the weighted module
/// term, followed by the EMA update of the target.
pub fn train_step_byol<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    opt: &mut Optimizer<T>,
    batch: &TrainBatch<T>,
    cfg: &ExperimentConfig,
    lr: f64,
    step: usize,
) -> Result<LossReport> {
    if bundle.target.is_none() || bundle.predictor.is_none() {
        return Err(Error::Config("byol step needs a predictor and a target network".into()));
    }
    bundle.zero_grad();
    let v1 = online_pass(bundle, &batch.x1);
    let v2 = online_pass(bundle, &batch.x2);
    let (t1, t2) = {
        let t = bundle.target.as_ref().expect("checked");
        let f = |x: &Array4<T>| t.projector.infer(&t.encoder.forward(x, true).0);
        (f(&batch.x1), f(&batch.x2))
    };
    let q = bundle.predictor.as_ref().expect("checked");
    let (p1, qc1) = q.forward(&v1.z);
    let (p2, qc2) = q.forward(&v2.z);
    let zero_norm = |e: Error| match e {
        Error::ZeroNorm(r) => Error::Divergence { step, detail: format!("zero-norm embedding in row {r}") },
        other => other,
    };
    let (la, dp1) = byol_loss_with_grad(&p1, &t2).map_err(zero_norm)?;
    let (l1, dp1, dp2) = if cfg.symmetric {
        let (lb, dp2) = byol_loss_with_grad(&p2, &t1).map_err(zero_norm)?;
        let half = T::lit(0.5);
        ((la + lb) * half, dp1.mapv(|v| v * half), dp2.mapv(|v| v * half))
    } else {
        (la, dp1, Array2::zeros(p2.dim()))
    };
    let aux = aux_terms(bundle, cfg, batch, [&v1, &v2])?;
    let rep = report(l1.as_f64(), aux.loss, cfg.lambda, step)?;
    let q = bundle.predictor.as_mut().expect("checked");
    let dz1 = q.backward(&qc1, &dp1, true).expect("dx requested");
    let dz2 = q.backward(&qc2, &dp2, true).expect("dx requested");
    finish_anchors(bundle, [v1, v2], [dz1, dz2], aux);
    check_finite(bundle, step)?;
    opt.apply(bundle, lr);
    bundle.update_target(cfg.tau)?;
    Ok(rep)
}
