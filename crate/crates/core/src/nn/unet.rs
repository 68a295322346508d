use hullscan_tensor::nn::Conv2d;
use hullscan_tensor::{impl_module, Ctx, Float, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blocks::ConvBn;
use super::resnet::{ResNet, ResNetConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnetConfig {
    pub encoder: ResNetConfig,
    pub decoder: [usize; 5],
    pub classes: usize,
}

impl UnetConfig {
    /// ResNet-34 encoder with the usual five-stage decoder.
    pub fn resnet34(classes: usize) -> Self {
        Self {
            encoder: ResNetConfig::resnet34(),
            decoder: [256, 128, 64, 32, 16],
            classes,
        }
    }

    pub fn desk(classes: usize) -> Self {
        Self {
            encoder: ResNetConfig::desk(),
            decoder: [32, 16, 8, 8, 8],
            classes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecoderBlock<T> {
    pub conv1: ConvBn<T>,
    pub conv2: ConvBn<T>,
}
impl_module!(DecoderBlock { conv1, conv2 });

/// Encoder-decoder segmenter with skip connections; emits per-pixel logits.
#[derive(Debug, Clone)]
pub struct Unet<T> {
    pub encoder: ResNet<T>,
    pub decoder: Vec<DecoderBlock<T>>,
    pub head: Conv2d<T>,
}
impl_module!(Unet {
    encoder,
    decoder,
    head
});

impl<T: Float> Unet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &UnetConfig, rng: &mut R) -> Self {
        let encoder = ResNet::new(&cfg.encoder, rng);
        let ch = encoder.channels();
        // Skips for decoder stages 0..4 come from strides 16, 8, 4, 2, none.
        let skips = [ch[3], ch[2], ch[1], ch[0], 0];
        let mut c = ch[4];
        let mut decoder = Vec::new();
        for (i, &out) in cfg.decoder.iter().enumerate() {
            decoder.push(DecoderBlock {
                conv1: ConvBn::square(c + skips[i], out, 3, 1, rng),
                conv2: ConvBn::square(out, out, 3, 1, rng),
            });
            c = out;
        }
        let mut head = Conv2d::square(c, cfg.classes, 3, 1, true, rng);
        // Low initial foreground prior.
        if let Some(b) = head.bias.as_mut() {
            b.set(Tensor::full(&[cfg.classes], T::of(-2.0)));
        }
        Self {
            encoder,
            decoder,
            head,
        }
    }

    pub fn classes(&self) -> usize {
        self.head.out_channels()
    }

    pub fn check_input(shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::Shape(format!(
                "segmenter input must be [n, 3, h, w], got {shape:?}"
            )));
        }
        if !shape[2].is_multiple_of(32)
            || !shape[3].is_multiple_of(32)
            || shape[2] == 0
            || shape[3] == 0
        {
            return Err(Error::Shape(format!(
                "segmenter input {}x{} is not divisible by 32",
                shape[3], shape[2]
            )));
        }
        Ok(())
    }

    /// `[n, 3, h, w] -> [n, classes, h, w]` logits.
    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
        Self::check_input(x.shape())?;
        let feats = self.encoder.forward(ctx, x);
        let mut y = feats[4].clone();
        for (i, block) in self.decoder.iter().enumerate() {
            y = y.upsample_nearest(2, 2);
            if i < 4 {
                y = Var::concat(&[y, feats[3 - i].clone()], 1);
            }
            y = block.conv1.forward_relu(ctx, &y);
            y = block.conv2.forward_relu(ctx, &y);
        }
        Ok(self.head.forward(ctx, &y))
    }
}
