use hullscan_tensor::nn::{BatchNorm, Conv2d};
use hullscan_tensor::{impl_module, Ctx, Float, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseNetConfig {
    pub init: usize,
    pub growth: usize,
    pub blocks: [usize; 4],
    pub bottleneck: usize,
}

impl DenseNetConfig {
    /// DenseNet-121.
    pub fn densenet121() -> Self {
        Self {
            init: 64,
            growth: 32,
            blocks: [6, 12, 24, 16],
            bottleneck: 4,
        }
    }

    pub fn desk() -> Self {
        Self {
            init: 32,
            growth: 16,
            blocks: [2, 2, 2, 2],
            bottleneck: 4,
        }
    }

    /// Length of the pooled feature vector.
    pub fn features(&self) -> usize {
        let mut c = self.init;
        for (i, &n) in self.blocks.iter().enumerate() {
            c += n * self.growth;
            if i < 3 {
                c /= 2;
            }
        }
        c
    }

    /// Expected `(name, [h, w, c])` after the stem, each dense block and
    /// each transition, ending with the pooled vector.
    pub fn stage_shapes(&self, patch: usize) -> Vec<(String, [usize; 3])> {
        let mut s = (patch + 6 - 7) / 2 + 1;
        s = (s + 2 - 3) / 2 + 1;
        let mut c = self.init;
        let mut out = vec![("base".to_string(), [s, s, c])];
        for (i, &n) in self.blocks.iter().enumerate() {
            c += n * self.growth;
            if i < 3 {
                out.push((format!("dense{}", i + 1), [s, s, c]));
                c /= 2;
                s /= 2;
                out.push((format!("transition{}", i + 1), [s, s, c]));
            } else {
                out.push((format!("dense{}", i + 1), [1, 1, c]));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer<T> {
    pub bn1: BatchNorm<T>,
    pub conv1: Conv2d<T>,
    pub bn2: BatchNorm<T>,
    pub conv2: Conv2d<T>,
}
impl_module!(DenseLayer {
    bn1,
    conv1,
    bn2,
    conv2
});

impl<T: Float> DenseLayer<T> {
    fn new<R: Rng + ?Sized>(c_in: usize, cfg: &DenseNetConfig, rng: &mut R) -> Self {
        let mid = cfg.bottleneck * cfg.growth;
        Self {
            bn1: BatchNorm::new(c_in),
            conv1: Conv2d::square(c_in, mid, 1, 1, false, rng),
            bn2: BatchNorm::new(mid),
            conv2: Conv2d::square(mid, cfg.growth, 3, 1, false, rng),
        }
    }

    fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        let y = self.bn1.forward(ctx, x).relu();
        let y = self.conv1.forward(ctx, &y);
        let y = self.bn2.forward(ctx, &y).relu();
        self.conv2.forward(ctx, &y)
    }
}

#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub bn: BatchNorm<T>,
    pub conv: Conv2d<T>,
}
impl_module!(Transition { bn, conv });

/// Densely connected feature extractor ending in a global average pool,
/// so any patch size maps to a fixed-length vector.
#[derive(Debug, Clone)]
pub struct DenseNet<T> {
    pub stem: Conv2d<T>,
    pub stem_bn: BatchNorm<T>,
    pub blocks: Vec<Vec<DenseLayer<T>>>,
    pub transitions: Vec<Transition<T>>,
    pub final_bn: BatchNorm<T>,
}
impl_module!(DenseNet {
    stem,
    stem_bn,
    blocks,
    transitions,
    final_bn
});

impl<T: Float> DenseNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &DenseNetConfig, rng: &mut R) -> Self {
        let stem = Conv2d::new(3, cfg.init, (7, 7), (2, 2), (3, 3), false, rng);
        let mut c = cfg.init;
        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        for (i, &n) in cfg.blocks.iter().enumerate() {
            let mut layers = Vec::new();
            for _ in 0..n {
                layers.push(DenseLayer::new(c, cfg, rng));
                c += cfg.growth;
            }
            blocks.push(layers);
            if i < 3 {
                transitions.push(Transition {
                    bn: BatchNorm::new(c),
                    conv: Conv2d::square(c, c / 2, 1, 1, false, rng),
                });
                c /= 2;
            }
        }
        Self {
            stem,
            stem_bn: BatchNorm::new(cfg.init),
            blocks,
            transitions,
            final_bn: BatchNorm::new(c),
        }
    }

    pub fn features(&self) -> usize {
        self.final_bn.gamma.shape()[0]
    }

    /// Feature maps after the stem, each block and each transition, then
    /// the pooled `[n, F]` vector last.
    pub fn forward_stages(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Vec<Var<T>> {
        let y = self.stem.forward(ctx, x);
        let mut y = self.stem_bn.forward(ctx, &y).relu().max_pool2d(3, 2, 1);
        let mut stages = vec![y.clone()];
        for (i, block) in self.blocks.iter().enumerate() {
            for layer in block {
                let new = layer.forward(ctx, &y);
                y = Var::concat(&[y, new], 1);
            }
            if let Some(t) = self.transitions.get(i) {
                stages.push(y.clone());
                let z = t.bn.forward(ctx, &y).relu();
                y = t.conv.forward(ctx, &z).avg_pool2d(2, 2);
                stages.push(y.clone());
            }
        }
        let pooled = self.final_bn.forward(ctx, &y).relu().global_avg_pool();
        stages.push(pooled);
        stages
    }

    /// `[n, 3, h, w] -> [n, F]`.
    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        self.forward_stages(ctx, x).pop().expect("pooled output")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hullscan_tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn densenet121_shape_table() {
        let got: Vec<[usize; 3]> = DenseNetConfig::densenet121()
            .stage_shapes(64)
            .into_iter()
            .map(|s| s.1)
            .collect();
        assert_eq!(
            got,
            vec![
                [16, 16, 64],
                [16, 16, 256],
                [8, 8, 128],
                [8, 8, 512],
                [4, 4, 256],
                [4, 4, 1024],
                [2, 2, 512],
                [1, 1, 1024]
            ]
        );
        assert_eq!(DenseNetConfig::densenet121().features(), 1024);
        assert_eq!(DenseNetConfig::desk().features(), 64);
    }

    #[test]
    fn desk_stages_match_table() {
        let cfg = DenseNetConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = DenseNet::<f32>::new(&cfg, &mut rng);
        let x = Var::constant(Tensor::rand_uniform(&[2, 3, 64, 64], 0.0, 1.0, &mut rng));
        let stages = net.forward_stages(&mut Ctx::eval(), &x);
        let expect = cfg.stage_shapes(64);
        assert_eq!(stages.len(), expect.len());
        for (v, (name, [h, w, c])) in stages.iter().zip(&expect) {
            let got = if v.shape().len() == 4 {
                [v.dim(2), v.dim(3), v.dim(1)]
            } else {
                [1, 1, v.dim(1)]
            };
            assert_eq!(got, [*h, *w, *c], "{name}");
        }
        let big = Var::constant(Tensor::rand_uniform(&[1, 3, 128, 128], 0.0, 1.0, &mut rng));
        assert_eq!(net.forward(&mut Ctx::eval(), &big).shape(), &[1, 64]);
    }
}
