//! Encoder, projection head, regression head and the BYOL predictor/target.

use ndarray::{concatenate, Array2, Array4, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::TransformMode;
use crate::image::Image;
use crate::nn::{copy_values, Encoder, EncoderSpec, Mlp, Module, Param};
use crate::rng::{rng_for, Stream};
use crate::scalar::Scalar;

/// Layer sizes of the networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderSpec,
    pub projector_hidden: usize,
    pub projection_dim: usize,
    pub regressor_hidden: usize,
    pub predictor_hidden: usize,
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            encoder: EncoderSpec::desk(),
            projector_hidden: 256,
            projection_dim: 64,
            regressor_hidden: 256,
            predictor_hidden: 256,
        }
    }

    pub fn paper() -> Self {
        Self {
            encoder: EncoderSpec::resnet50(),
            projector_hidden: 2048,
            projection_dim: 128,
            regressor_hidden: 512,
            predictor_hidden: 512,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if [self.projector_hidden, self.projection_dim, self.regressor_hidden, self.predictor_hidden].contains(&0) {
            return Err(Error::Config("model widths must be positive".into()));
        }
        Ok(())
    }
}

/// How the pair of latents is combined before entering `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInput {
    #[default]
    Difference,
    Concat,
}

/// Whether `h` reads the encoder output or the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    OnF,
    OnG,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub mode: TransformMode,
    pub input: HeadInput,
    pub placement: Placement,
    pub two_modules: bool,
}

impl HeadSpec {
    pub fn output_dim(&self) -> usize {
        self.mode.dim()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub in_channels: usize,
    pub model: ModelConfig,
    pub head: Option<HeadSpec>,
    pub byol: bool,
}

/// EMA copy of `(f, g)`.
#[derive(Debug, Clone)]
pub struct TargetNetwork<T> {
    pub encoder: Encoder<T>,
    pub projector: Mlp<T>,
}

impl<T: Scalar> Module<T> for TargetNetwork<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.encoder.visit(f);
        self.projector.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.encoder.visit_mut(f);
        self.projector.visit_mut(f);
    }
}

/// All networks of one run. The [`Module`] impl covers the online
/// (gradient-trained) parameters only; the target is reached via `target`.
#[derive(Debug, Clone)]
pub struct ModelBundle<T> {
    pub spec: BundleSpec,
    pub encoder: Encoder<T>,
    pub projector: Mlp<T>,
    pub predictor: Option<Mlp<T>>,
    pub regressor: Option<Mlp<T>>,
    pub regressor2: Option<Mlp<T>>,
    pub target: Option<TargetNetwork<T>>,
}

impl<T: Scalar> ModelBundle<T> {
    /// Builds every network from its own RNG stream so that enabling a head
    /// leaves the initialization of the others untouched.
    pub fn new(spec: BundleSpec, seed: u64) -> Result<Self> {
        spec.model.validate()?;
        let m = &spec.model;
        let p = m.latent_dim();
        let k = m.projection_dim;
        let encoder = Encoder::new("f", &m.encoder, spec.in_channels, &mut rng_for(seed, Stream::InitEncoder, &[]))?;
        let projector = Mlp::new("g", p, m.projector_hidden, k, &mut rng_for(seed, Stream::InitProjector, &[]));
        let predictor = spec
            .byol
            .then(|| Mlp::new("q", k, m.predictor_hidden, k, &mut rng_for(seed, Stream::InitPredictor, &[])));
        let (regressor, regressor2) = match &spec.head {
            Some(h) => {
                let base = match h.placement {
                    Placement::OnF => p,
                    Placement::OnG => k,
                };
                let input = match h.input {
                    HeadInput::Difference => base,
                    HeadInput::Concat => 2 * base,
                };
                let out = h.output_dim();
                let r1 = Mlp::new("h", input, m.regressor_hidden, out, &mut rng_for(seed, Stream::InitRegressor, &[]));
                let r2 = h.two_modules.then(|| {
                    Mlp::new("h2", input, m.regressor_hidden, out, &mut rng_for(seed, Stream::InitRegressor2, &[]))
                });
                (Some(r1), r2)
            }
            None => (None, None),
        };
        let target = if spec.byol {
            let mut rng = rng_for(seed, Stream::InitEncoder, &[]);
            let mut t = TargetNetwork {
                encoder: Encoder::new("target.f", &m.encoder, spec.in_channels, &mut rng)?,
                projector: Mlp::new("target.g", p, m.projector_hidden, k, &mut rng),
            };
            copy_values(&mut t.encoder, &encoder)?;
            copy_values(&mut t.projector, &projector)?;
            Some(t)
        } else {
            None
        };
        Ok(Self { spec, encoder, projector, predictor, regressor, regressor2, target })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.model.latent_dim()
    }

    pub fn projection_dim(&self) -> usize {
        self.spec.model.projection_dim
    }

    /// Output width of `h`, if present.
    pub fn head_output_dim(&self) -> Option<usize> {
        self.regressor.as_ref().map(|h| h.output_dim())
    }

    /// Checks that `h` predicts exactly the parameters of `mode`.
    pub fn check_mode(&self, mode: TransformMode) -> Result<()> {
        match self.head_output_dim() {
            Some(m) if m == mode.dim() => Ok(()),
            Some(m) => Err(Error::Config(format!(
                "regression head outputs {m} values but mode `{mode}` has {} parameters",
                mode.dim()
            ))),
            None => Err(Error::Config("model has no regression head".into())),
        }
    }

    /// Encoder output in evaluation mode.
    pub fn encode(&self, batch: &Array4<T>) -> Result<Array2<T>> {
        let c = batch.dim().3;
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!("encoder expects {} channels, got {c}", self.spec.in_channels)));
        }
        Ok(self.encoder.infer(batch))
    }

    pub fn project(&self, latents: &Array2<T>) -> Result<Array2<T>> {
        if latents.ncols() != self.latent_dim() {
            return Err(Error::Shape(format!("projector expects width {}, got {}", self.latent_dim(), latents.ncols())));
        }
        Ok(self.projector.infer(latents))
    }

    /// Combines a latent pair into the input of `h` (difference or concatenation).
    pub fn head_input(&self, a: &Array2<T>, b: &Array2<T>) -> Result<Array2<T>> {
        if a.dim() != b.dim() {
            return Err(Error::Shape(format!("latent pair {:?} vs {:?}", a.dim(), b.dim())));
        }
        let input = self.spec.head.as_ref().map(|h| h.input).unwrap_or_default();
        Ok(match input {
            HeadInput::Difference => a - b,
            HeadInput::Concat => concatenate(Axis(1), &[a.view(), b.view()]).expect("equal rows"),
        })
    }

    pub fn regress(&self, input: &Array2<T>) -> Result<Array2<T>> {
        let h = self.regressor.as_ref().ok_or_else(|| Error::Config("model has no regression head".into()))?;
        if input.ncols() != h.input_dim() {
            return Err(Error::Shape(format!("regressor expects width {}, got {}", h.input_dim(), input.ncols())));
        }
        Ok(h.infer(input))
    }

    /// EMA step of the target towards the online `(f, g)`.
    pub fn update_target(&mut self, tau: f64) -> Result<()> {
        let target = self.target.as_mut().ok_or_else(|| Error::Config("model has no target network".into()))?;
        ema_update(&mut target.encoder, &self.encoder, tau)?;
        ema_update(&mut target.projector, &self.projector, tau)
    }

    /// Visits online parameters followed by target parameters.
    pub fn visit_all<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.visit(f);
        self.target.visit(f);
    }

    pub fn visit_all_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.visit_mut(f);
        self.target.visit_mut(f);
    }

    /// SHA-256 over every parameter (names, shapes and little-endian values).
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        self.visit_all(&mut |p| hash_param(&mut h, p));
        hex::encode(h.finalize())
    }

    /// Hash over `f`, `g`, the predictor and the target, i.e. everything a
    /// run without a regression head also has.
    pub fn backbone_hash(&self) -> String {
        let mut h = Sha256::new();
        self.encoder.visit(&mut |p| hash_param(&mut h, p));
        self.projector.visit(&mut |p| hash_param(&mut h, p));
        self.predictor.visit(&mut |p| hash_param(&mut h, p));
        self.target.visit(&mut |p| hash_param(&mut h, p));
        hex::encode(h.finalize())
    }
}

impl<T: Scalar> Module<T> for ModelBundle<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.encoder.visit(f);
        self.projector.visit(f);
        self.predictor.visit(f);
        self.regressor.visit(f);
        self.regressor2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.encoder.visit_mut(f);
        self.projector.visit_mut(f);
        self.predictor.visit_mut(f);
        self.regressor.visit_mut(f);
        self.regressor2.visit_mut(f);
    }
}

fn hash_param<T: Scalar>(h: &mut Sha256, p: &Param<T>) {
    h.update(p.name.as_bytes());
    for d in &p.shape {
        h.update((*d as u64).to_le_bytes());
    }
    let mut buf = Vec::with_capacity(p.len() * T::BYTES);
    for v in &p.value {
        v.write_le(&mut buf);
    }
    h.update(&buf);
}

/// `target <- tau * target + (1 - tau) * online`, elementwise over every
/// parameter (running statistics included).
pub fn ema_update<T: Scalar>(target: &mut impl Module<T>, online: &impl Module<T>, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Range { field: "tau", value: tau, min: 0.0, max: 1.0 });
    }
    let src = online.params();
    let mut shapes = Vec::new();
    target.visit(&mut |p| shapes.push(p.shape.clone()));
    if shapes.len() != src.len() || shapes.iter().zip(&src).any(|(a, b)| a != &b.shape) {
        return Err(Error::Shape("EMA target and online networks differ in structure".into()));
    }
    if tau == 1.0 {
        return Ok(());
    }
    let (t, o) = (T::lit(tau), T::lit(1.0 - tau));
    let mut i = 0;
    target.visit_mut(&mut |p| {
        let s = &src[i].value;
        if tau == 0.0 {
            p.value.copy_from_slice(s);
        } else {
            for (a, &b) in p.value.iter_mut().zip(s) {
                *a = t * *a + o * b;
            }
        }
        i += 1;
    });
    Ok(())
}

/// Stacks images into an NHWC batch, standardizing each channel.
pub fn batch_tensor<T: Scalar>(images: &[&Image<T>], mean: &[f64], std: &[f64]) -> Result<Array4<T>> {
    let first = images.first().ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (h, w, c) = first.dims();
    if mean.len() != c || std.len() != c {
        return Err(Error::Shape(format!("normalization has {} channels, images have {c}", mean.len())));
    }
    let inv: Vec<T> = std.iter().map(|s| T::lit(1.0 / s)).collect();
    let mu: Vec<T> = mean.iter().map(|&m| T::lit(m)).collect();
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        if img.dims() != (h, w, c) {
            return Err(Error::Shape(format!("image {:?} in batch of {:?}", img.dims(), (h, w, c))));
        }
        for px in img.data().chunks(c) {
            for ch in 0..c {
                data.push((px[ch] - mu[ch]) * inv[ch]);
            }
        }
    }
    Ok(Array4::from_shape_vec((images.len(), h, w, c), data).expect("batch dims"))
}
