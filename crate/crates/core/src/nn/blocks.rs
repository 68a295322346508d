use hullscan_tensor::nn::{BatchNorm, Conv2d};
use hullscan_tensor::{impl_module, Ctx, Float, Var};
use rand::Rng;

/// Convolution without bias followed by batch norm.
#[derive(Debug, Clone)]
pub struct ConvBn<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
}
impl_module!(ConvBn { conv, bn });

impl<T: Float> ConvBn<T> {
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut R,
    ) -> Self {
        Self {
            conv: Conv2d::new(c_in, c_out, kernel, stride, padding, false, rng),
            bn: BatchNorm::new(c_out),
        }
    }

    pub fn square<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        Self::new(c_in, c_out, (k, k), (stride, stride), (k / 2, k / 2), rng)
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }

    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        self.bn.forward(ctx, &self.conv.forward(ctx, x))
    }

    pub fn forward_relu(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        self.forward(ctx, x).relu()
    }
}

/// Two 3x3 conv-bn layers with an identity or projected shortcut.
#[derive(Debug, Clone)]
pub struct BasicBlock<T> {
    pub conv1: ConvBn<T>,
    pub conv2: ConvBn<T>,
    pub downsample: Option<ConvBn<T>>,
}
impl_module!(BasicBlock {
    conv1,
    conv2,
    downsample
});

impl<T: Float> BasicBlock<T> {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, stride: usize, rng: &mut R) -> Self {
        let downsample = (stride != 1 || c_in != c_out)
            .then(|| ConvBn::new(c_in, c_out, (1, 1), (stride, stride), (0, 0), rng));
        Self {
            conv1: ConvBn::square(c_in, c_out, 3, stride, rng),
            conv2: ConvBn::square(c_out, c_out, 3, 1, rng),
            downsample,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        let y = self.conv1.forward_relu(ctx, x);
        let y = self.conv2.forward(ctx, &y);
        let skip = match &self.downsample {
            Some(d) => d.forward(ctx, x),
            None => x.clone(),
        };
        y.add(&skip).relu()
    }
}
