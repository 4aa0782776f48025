use ndarray::{Array2, Array4, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, ConvCache};
use super::layers::{
    global_avg_pool, global_avg_pool_backward, maxpool2_backward, maxpool2_forward, relu_backward, relu_inplace,
    BatchNorm, BnCache,
};
use super::param::{Module, Param};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Encoder architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    /// Plain conv/ReLU stack; every block but the last is followed by 2x2 max pooling.
    SmallCnn { channels: Vec<usize> },
    /// Bottleneck ResNet with a 3x3 stem and no initial pooling (CIFAR variant).
    ResNet { width: usize, blocks: Vec<usize> },
}

impl EncoderSpec {
    pub fn desk() -> Self {
        EncoderSpec::SmallCnn { channels: vec![32, 64, 128, 128] }
    }

    pub fn resnet50() -> Self {
        EncoderSpec::ResNet { width: 64, blocks: vec![3, 4, 6, 3] }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            EncoderSpec::SmallCnn { channels } => channels.last().copied().unwrap_or(0),
            EncoderSpec::ResNet { width, blocks } => width * (1 << (blocks.len().max(1) - 1)) * BOTTLENECK_EXPANSION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EncoderSpec::SmallCnn { channels } if channels.is_empty() || channels.contains(&0) => {
                Err(Error::Config("small_cnn channels must be non-empty and positive".into()))
            }
            EncoderSpec::ResNet { width, blocks } if *width == 0 || blocks.is_empty() || blocks.contains(&0) => {
                Err(Error::Config("resnet width and block counts must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

pub const BOTTLENECK_EXPANSION: usize = 4;

#[derive(Debug, Clone)]
pub struct SmallCnn<T> {
    pub convs: Vec<Conv2d<T>>,
}

#[derive(Debug, Clone)]
struct SmallBlockCache<T> {
    conv: ConvCache<T>,
    act: Array4<T>,
    pool: Option<Vec<u32>>,
}

impl<T: Scalar> SmallCnn<T> {
    fn new<R: Rng + ?Sized>(name: &str, in_channels: usize, channels: &[usize], rng: &mut R) -> Self {
        let mut cin = in_channels;
        let convs = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let conv = Conv2d::new(&format!("{name}.conv{i}"), cin, c, 3, 1, 1, true, rng);
                cin = c;
                conv
            })
            .collect();
        Self { convs }
    }

    fn forward(&self, x: &Array4<T>) -> (Array4<T>, Vec<SmallBlockCache<T>>) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.convs.len());
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            let (mut a, cc) = conv.forward(&h);
            relu_inplace(a.as_slice_mut().expect("contiguous"));
            if i < last {
                let (p, arg) = maxpool2_forward(&a);
                caches.push(SmallBlockCache { conv: cc, act: a, pool: Some(arg) });
                h = p;
            } else {
                h = a.clone();
                caches.push(SmallBlockCache { conv: cc, act: a, pool: None });
            }
        }
        (h, caches)
    }

    fn backward(&mut self, caches: &[SmallBlockCache<T>], mut d: Array4<T>) {
        for (i, (conv, cache)) in self.convs.iter_mut().zip(caches).enumerate().rev() {
            if let Some(arg) = &cache.pool {
                d = maxpool2_backward(&d, arg, cache.act.dim());
            }
            relu_backward(d.as_slice_mut().expect("contiguous"), cache.act.as_slice().expect("contiguous"));
            match conv.backward(&cache.conv, &d, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

impl<T: Scalar> Module<T> for SmallCnn<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.convs.iter().for_each(|c| c.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.convs.iter_mut().for_each(|c| c.visit_mut(f));
    }
}

#[derive(Debug, Clone)]
pub struct Bottleneck<T> {
    conv1: Conv2d<T>,
    bn1: BatchNorm<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm<T>,
    conv3: Conv2d<T>,
    bn3: BatchNorm<T>,
    down: Option<(Conv2d<T>, BatchNorm<T>)>,
}

#[derive(Debug, Clone)]
struct BottleneckCache<T> {
    c1: ConvCache<T>,
    b1: BnCache<T>,
    a1: Array4<T>,
    c2: ConvCache<T>,
    b2: BnCache<T>,
    a2: Array4<T>,
    c3: ConvCache<T>,
    b3: BnCache<T>,
    down: Option<(ConvCache<T>, BnCache<T>)>,
    out: Array4<T>,
}

impl<T: Scalar> Bottleneck<T> {
    fn new<R: Rng + ?Sized>(name: &str, cin: usize, width: usize, stride: usize, rng: &mut R) -> Self {
        let cout = width * BOTTLENECK_EXPANSION;
        let down = (stride != 1 || cin != cout).then(|| {
            (
                Conv2d::new(&format!("{name}.down.conv"), cin, cout, 1, stride, 0, false, rng),
                BatchNorm::new(&format!("{name}.down.bn"), cout),
            )
        });
        Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), cin, width, 1, 1, 0, false, rng),
            bn1: BatchNorm::new(&format!("{name}.bn1"), width),
            conv2: Conv2d::new(&format!("{name}.conv2"), width, width, 3, stride, 1, false, rng),
            bn2: BatchNorm::new(&format!("{name}.bn2"), width),
            conv3: Conv2d::new(&format!("{name}.conv3"), width, cout, 1, 1, 0, false, rng),
            bn3: BatchNorm::new(&format!("{name}.bn3"), cout),
            down,
        }
    }

    fn forward(&self, x: &Array4<T>, train: bool) -> (Array4<T>, BottleneckCache<T>) {
        let (h, c1) = self.conv1.forward(x);
        let (mut a1, b1) = self.bn1.forward(&h, train);
        relu_inplace(a1.as_slice_mut().expect("contiguous"));
        let (h, c2) = self.conv2.forward(&a1);
        let (mut a2, b2) = self.bn2.forward(&h, train);
        relu_inplace(a2.as_slice_mut().expect("contiguous"));
        let (h, c3) = self.conv3.forward(&a2);
        let (mut out, b3) = self.bn3.forward(&h, train);
        let down = match &self.down {
            Some((conv, bn)) => {
                let (s, cc) = conv.forward(x);
                let (s, bc) = bn.forward(&s, train);
                out += &s;
                Some((cc, bc))
            }
            None => {
                out += x;
                None
            }
        };
        relu_inplace(out.as_slice_mut().expect("contiguous"));
        let cache = BottleneckCache { c1, b1, a1, c2, b2, a2, c3, b3, down, out: out.clone() };
        (out, cache)
    }

    fn commit(&mut self, c: &BottleneckCache<T>) {
        self.bn1.commit(&c.b1);
        self.bn2.commit(&c.b2);
        self.bn3.commit(&c.b3);
        if let (Some((_, bn)), Some((_, bc))) = (&mut self.down, &c.down) {
            bn.commit(bc);
        }
    }

    fn backward(&mut self, c: &BottleneckCache<T>, mut d: Array4<T>) -> Array4<T> {
        relu_backward(d.as_slice_mut().expect("contiguous"), c.out.as_slice().expect("contiguous"));
        let mut dx = match (&mut self.down, &c.down) {
            (Some((conv, bn)), Some((cc, bc))) => {
                let ds = bn.backward(bc, &d);
                conv.backward(cc, &ds, true).expect("dx requested")
            }
            _ => d.clone(),
        };
        let g = self.bn3.backward(&c.b3, &d);
        let mut g = self.conv3.backward(&c.c3, &g, true).expect("dx requested");
        relu_backward(g.as_slice_mut().expect("contiguous"), c.a2.as_slice().expect("contiguous"));
        let g = self.bn2.backward(&c.b2, &g);
        let mut g = self.conv2.backward(&c.c2, &g, true).expect("dx requested");
        relu_backward(g.as_slice_mut().expect("contiguous"), c.a1.as_slice().expect("contiguous"));
        let g = self.bn1.backward(&c.b1, &g);
        let g = self.conv1.backward(&c.c1, &g, true).expect("dx requested");
        Zip::from(&mut dx).and(&g).for_each(|a, &b| *a += b);
        dx
    }
}

impl<T: Scalar> Module<T> for Bottleneck<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.conv1.visit(f);
        self.bn1.visit(f);
        self.conv2.visit(f);
        self.bn2.visit(f);
        self.conv3.visit(f);
        self.bn3.visit(f);
        if let Some((c, b)) = &self.down {
            c.visit(f);
            b.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_mut(f);
        self.bn1.visit_mut(f);
        self.conv2.visit_mut(f);
        self.bn2.visit_mut(f);
        self.conv3.visit_mut(f);
        self.bn3.visit_mut(f);
        if let Some((c, b)) = &mut self.down {
            c.visit_mut(f);
            b.visit_mut(f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResNet<T> {
    stem: Conv2d<T>,
    stem_bn: BatchNorm<T>,
    blocks: Vec<Bottleneck<T>>,
}

#[derive(Debug, Clone)]
struct ResNetCache<T> {
    stem: ConvCache<T>,
    stem_bn: BnCache<T>,
    stem_act: Array4<T>,
    blocks: Vec<BottleneckCache<T>>,
}

impl<T: Scalar> ResNet<T> {
    fn new<R: Rng + ?Sized>(name: &str, in_channels: usize, width: usize, stages: &[usize], rng: &mut R) -> Self {
        let stem = Conv2d::new(&format!("{name}.stem.conv"), in_channels, width, 3, 1, 1, false, rng);
        let stem_bn = BatchNorm::new(&format!("{name}.stem.bn"), width);
        let mut blocks = Vec::new();
        let mut cin = width;
        for (s, &count) in stages.iter().enumerate() {
            let w = width << s;
            for b in 0..count {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                blocks.push(Bottleneck::new(&format!("{name}.layer{}.{b}", s + 1), cin, w, stride, rng));
                cin = w * BOTTLENECK_EXPANSION;
            }
        }
        Self { stem, stem_bn, blocks }
    }

    fn forward(&self, x: &Array4<T>, train: bool) -> (Array4<T>, ResNetCache<T>) {
        let (h, stem) = self.stem.forward(x);
        let (mut a, stem_bn) = self.stem_bn.forward(&h, train);
        relu_inplace(a.as_slice_mut().expect("contiguous"));
        let stem_act = a.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (o, c) = b.forward(&a, train);
            caches.push(c);
            a = o;
        }
        (a, ResNetCache { stem, stem_bn, stem_act, blocks: caches })
    }

    fn commit(&mut self, c: &ResNetCache<T>) {
        self.stem_bn.commit(&c.stem_bn);
        for (b, bc) in self.blocks.iter_mut().zip(&c.blocks) {
            b.commit(bc);
        }
    }

    fn backward(&mut self, c: &ResNetCache<T>, mut d: Array4<T>) {
        for (b, bc) in self.blocks.iter_mut().zip(&c.blocks).rev() {
            d = b.backward(bc, d);
        }
        relu_backward(d.as_slice_mut().expect("contiguous"), c.stem_act.as_slice().expect("contiguous"));
        let d = self.stem_bn.backward(&c.stem_bn, &d);
        self.stem.backward(&c.stem, &d, false);
    }
}

impl<T: Scalar> Module<T> for ResNet<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.stem.visit(f);
        self.stem_bn.visit(f);
        self.blocks.iter().for_each(|b| b.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.stem.visit_mut(f);
        self.stem_bn.visit_mut(f);
        self.blocks.iter_mut().for_each(|b| b.visit_mut(f));
    }
}

/// Image encoder `f`: NHWC batch to `[N, p]` latents.
#[derive(Debug, Clone)]
pub enum Encoder<T> {
    Small(SmallCnn<T>),
    ResNet(ResNet<T>),
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    inner: InnerCache<T>,
    feature_shape: (usize, usize, usize, usize),
}

#[derive(Debug, Clone)]
enum InnerCache<T> {
    Small(Vec<SmallBlockCache<T>>),
    ResNet(ResNetCache<T>),
}

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, spec: &EncoderSpec, in_channels: usize, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            EncoderSpec::SmallCnn { channels } => Encoder::Small(SmallCnn::new(name, in_channels, channels, rng)),
            EncoderSpec::ResNet { width, blocks } => Encoder::ResNet(ResNet::new(name, in_channels, *width, blocks, rng)),
        })
    }

    /// Forward pass. In training mode batch-norm uses batch statistics; call
    /// [`Encoder::commit`] with the cache to update running statistics.
    pub fn forward(&self, x: &Array4<T>, train: bool) -> (Array2<T>, EncoderCache<T>) {
        let (fm, inner) = match self {
            Encoder::Small(m) => {
                let (fm, c) = m.forward(x);
                (fm, InnerCache::Small(c))
            }
            Encoder::ResNet(m) => {
                let (fm, c) = m.forward(x, train);
                (fm, InnerCache::ResNet(c))
            }
        };
        let feature_shape = fm.dim();
        (global_avg_pool(&fm), EncoderCache { inner, feature_shape })
    }

    pub fn infer(&self, x: &Array4<T>) -> Array2<T> {
        self.forward(x, false).0
    }

    pub fn commit(&mut self, cache: &EncoderCache<T>) {
        if let (Encoder::ResNet(m), InnerCache::ResNet(c)) = (self, &cache.inner) {
            m.commit(c);
        }
    }

    pub fn backward(&mut self, cache: &EncoderCache<T>, dlatent: &Array2<T>) {
        let d = global_avg_pool_backward(dlatent, cache.feature_shape);
        match (self, &cache.inner) {
            (Encoder::Small(m), InnerCache::Small(c)) => m.backward(c, d),
            (Encoder::ResNet(m), InnerCache::ResNet(c)) => m.backward(c, d),
            _ => panic!("encoder cache does not match architecture"),
        }
    }
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        match self {
            Encoder::Small(m) => m.visit(f),
            Encoder::ResNet(m) => m.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        match self {
            Encoder::Small(m) => m.visit_mut(f),
            Encoder::ResNet(m) => m.visit_mut(f),
        }
    }
}
