use hullscan_tensor::nn::Conv2d;
use hullscan_tensor::{impl_module, Ctx, Float, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Affine warp `(x', y') = R (x, y) + tau` in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub r: [[f64; 2]; 2],
    pub tau: [f64; 2],
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            r: [[1.0, 0.0], [0.0, 1.0]],
            tau: [0.0, 0.0],
        }
    }

    /// `(r_xx, r_xy, t_x, r_yx, r_yy, t_y)`, the layout the grid generator
    /// consumes.
    pub fn to_theta(&self) -> [f64; 6] {
        [
            self.r[0][0],
            self.r[0][1],
            self.tau[0],
            self.r[1][0],
            self.r[1][1],
            self.tau[1],
        ]
    }

    pub fn from_theta(t: &[f64]) -> Self {
        Self {
            r: [[t[0], t[1]], [t[3], t[4]]],
            tau: [t[2], t[5]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_theta().iter().all(|v| v.is_finite())
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.r[0][0] * x + self.r[0][1] * y + self.tau[0],
            self.r[1][0] * x + self.r[1][1] * y + self.tau[1],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StnConfig {
    pub widths: [usize; 3],
    pub patch: usize,
}

impl StnConfig {
    pub fn full() -> Self {
        Self {
            widths: [100, 100, 50],
            patch: 64,
        }
    }

    pub fn desk() -> Self {
        Self {
            widths: [8, 8, 4],
            patch: 64,
        }
    }
}

/// Localization network (7x7, 5x5, 3x3 convolutions with ReLU, then 1x1 to
/// six values and an average pool) plus grid generation and resampling.
#[derive(Debug, Clone)]
pub struct Stn<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub conv4: Conv2d<T>,
    pub patch: usize,
}
impl_module!(Stn {
    conv1,
    conv2,
    conv3,
    conv4
});

pub const IDENTITY_THETA: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

impl<T: Float> Stn<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &StnConfig, rng: &mut R) -> Self {
        let [a, b, c] = cfg.widths;
        let mut conv4 = Conv2d::square(c, 6, 1, 1, true, rng);
        conv4.weight.set(Tensor::zeros(&[6, c, 1, 1]));
        if let Some(bias) = conv4.bias.as_mut() {
            bias.set(Tensor::from_f64(&[6], &IDENTITY_THETA));
        }
        Self {
            conv1: Conv2d::square(3, a, 7, 1, true, rng),
            conv2: Conv2d::square(a, b, 5, 1, true, rng),
            conv3: Conv2d::square(b, c, 3, 1, true, rng),
            conv4,
            patch: cfg.patch,
        }
    }

    /// Per-layer output shapes for a single patch, `[c, h, w]`.
    pub fn layer_shapes(&self) -> Vec<[usize; 3]> {
        let p = self.patch;
        vec![
            [self.conv1.out_channels(), p, p],
            [self.conv2.out_channels(), p, p],
            [self.conv3.out_channels(), p, p],
            [6, 1, 1],
        ]
    }

    /// `[n, 3, p, p] -> theta [n, 6]`.
    pub fn localize(&self, ctx: &Ctx<T>, x: &Var<T>) -> Var<T> {
        assert_eq!(
            &x.shape()[1..],
            &[3, self.patch, self.patch],
            "localization input must be 3x{0}x{0}",
            self.patch
        );
        let y = self.conv1.forward(ctx, x).relu();
        let y = self.conv2.forward(ctx, &y).relu();
        let y = self.conv3.forward(ctx, &y).relu();
        self.conv4.forward(ctx, &y).global_avg_pool()
    }

    /// Warped copy of `x` and the parameters used.
    pub fn forward(&self, ctx: &Ctx<T>, x: &Var<T>) -> (Var<T>, Var<T>) {
        let theta = self.localize(ctx, x);
        let grid = theta.affine_grid(x.dim(2), x.dim(3));
        (x.grid_sample(&grid), theta)
    }
}
