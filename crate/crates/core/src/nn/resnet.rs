use hullscan_tensor::{impl_module, Ctx, Float, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blocks::{BasicBlock, ConvBn};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResNetConfig {
    pub stem: usize,
    pub widths: [usize; 4],
    pub blocks: [usize; 4],
}

impl ResNetConfig {
    /// ResNet-34 layout.
    pub fn resnet34() -> Self {
        Self {
            stem: 64,
            widths: [64, 128, 256, 512],
            blocks: [3, 4, 6, 3],
        }
    }

    pub fn desk() -> Self {
        Self {
            stem: 8,
            widths: [8, 16, 32, 64],
            blocks: [1, 1, 1, 1],
        }
    }
}

/// Residual encoder returning features at strides 2, 4, 8, 16 and 32.
#[derive(Debug, Clone)]
pub struct ResNet<T> {
    pub stem: ConvBn<T>,
    pub layers: Vec<Vec<BasicBlock<T>>>,
}
impl_module!(ResNet { stem, layers });

impl<T: Float> ResNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &ResNetConfig, rng: &mut R) -> Self {
        let stem = ConvBn::new(3, cfg.stem, (7, 7), (2, 2), (3, 3), rng);
        let mut layers = Vec::new();
        let mut c = cfg.stem;
        for (i, (&w, &n)) in cfg.widths.iter().zip(&cfg.blocks).enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            let mut layer = vec![BasicBlock::new(c, w, stride, rng)];
            for _ in 1..n {
                layer.push(BasicBlock::new(w, w, 1, rng));
            }
            layers.push(layer);
            c = w;
        }
        Self { stem, layers }
    }

    /// Channel counts of the five feature maps.
    pub fn channels(&self) -> [usize; 5] {
        let mut out = [self.stem.out_channels(); 5];
        for (i, l) in self.layers.iter().enumerate() {
            out[i + 1] = l.last().expect("non-empty layer").conv2.out_channels();
        }
        out
    }

    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Vec<Var<T>> {
        let s = self.stem.forward_relu(ctx, x);
        let mut feats = vec![s.clone()];
        let mut y = s.max_pool2d(3, 2, 1);
        for layer in &self.layers {
            for b in layer {
                y = b.forward(ctx, &y);
            }
            feats.push(y.clone());
        }
        feats
    }
}
