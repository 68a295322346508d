//! Standard layers.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution};

use crate::float::Float;
use crate::ops::conv::Conv2dGeom;
use crate::param::{Ctx, Module, Param};
use crate::tensor::Tensor;
use crate::var::Var;
use crate::{impl_module, scoped};

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}
impl_module!(Linear { weight, bias });

impl<T: Float> Linear<T> {
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Param::new(Tensor::rand_uniform(&[fan_out, fan_in], -bound, bound, rng)),
            bias: Param::new(Tensor::rand_uniform(&[fan_out], -bound, bound, rng)),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, ctx: &Ctx<T>, x: &Var<T>) -> Var<T> {
        x.linear(&ctx.param(&self.weight), Some(&ctx.param(&self.bias)))
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub geom: Conv2dGeom,
}
impl_module!(Conv2d { weight, bias });

impl<T: Float> Conv2d<T> {
    /// He-normal initialized convolution.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * kernel.0 * kernel.1;
        let std = (2.0 / fan_in as f64).sqrt();
        Self {
            weight: Param::new(Tensor::randn(&[c_out, c_in, kernel.0, kernel.1], std, rng)),
            bias: bias.then(|| Param::new(Tensor::zeros(&[c_out]))),
            geom: Conv2dGeom::new(stride, padding),
        }
    }

    /// Square kernel, "same"-style padding of `k / 2`.
    pub fn square<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        Self::new(
            c_in,
            c_out,
            (k, k),
            (stride, stride),
            (k / 2, k / 2),
            bias,
            rng,
        )
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, ctx: &Ctx<T>, x: &Var<T>) -> Var<T> {
        let b = self.bias.as_ref().map(|b| ctx.param(b));
        x.conv2d(&ctx.param(&self.weight), b.as_ref(), self.geom)
    }
}

/// Batch normalization over axis 1 with running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub momentum: f64,
    pub eps: f64,
}
impl_module!(BatchNorm {
    gamma,
    beta,
    running_mean,
    running_var
});

impl<T: Float> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::ones(&[channels])),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Param::buffer(Tensor::zeros(&[channels])),
            running_var: Param::buffer(Tensor::ones(&[channels])),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        if ctx.is_train() {
            let (y, stats) =
                x.batch_norm_train(&ctx.param(&self.gamma), &ctx.param(&self.beta), self.eps);
            let m = T::of(self.momentum);
            let keep = T::one() - m;
            let unbias = if stats.count > 1 {
                T::of(stats.count as f64 / (stats.count - 1) as f64)
            } else {
                T::one()
            };
            let mean = self
                .running_mean
                .value()
                .zip_map(&stats.mean, |r, b| keep * r + m * b);
            let var = self
                .running_var
                .value()
                .zip_map(&stats.var, |r, b| keep * r + m * b * unbias);
            ctx.push_update(self.running_mean.id(), mean);
            ctx.push_update(self.running_var.id(), var);
            y
        } else {
            let eps = T::of(self.eps);
            let scale = self
                .gamma
                .value()
                .zip_map(self.running_var.value(), |g, v| g / (v + eps).sqrt());
            let shift = self
                .beta
                .value()
                .zip_map(&self.running_mean.value().mul(&scale), |b, ms| b - ms);
            x.channel_affine(&Var::constant(scale), &Var::constant(shift))
        }
    }
}

/// Inverted dropout; identity outside training.
pub fn dropout<T: Float>(ctx: &mut Ctx<T>, x: &Var<T>, p: f64) -> Var<T> {
    if !ctx.is_train() || p <= 0.0 {
        return x.clone();
    }
    let keep = Bernoulli::new(1.0 - p).expect("dropout probability in [0, 1)");
    let scale = T::of(1.0 / (1.0 - p));
    let rng = ctx.rng();
    let mask: Vec<T> = (0..x.value().numel())
        .map(|_| if keep.sample(rng) { scale } else { T::zero() })
        .collect();
    x.mul_const(&Tensor::from_vec(x.shape(), mask))
}

/// Single-direction LSTM with gate order (input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct Lstm<T> {
    pub w_ih: Param<T>,
    pub w_hh: Param<T>,
    pub bias: Param<T>,
    pub hidden: usize,
}
impl_module!(Lstm { w_ih, w_hh, bias });

impl<T: Float> Lstm<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let b = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: Param::new(Tensor::rand_uniform(&[4 * hidden, input], -b, b, rng)),
            w_hh: Param::new(Tensor::rand_uniform(&[4 * hidden, hidden], -b, b, rng)),
            bias: Param::new(Tensor::rand_uniform(&[4 * hidden], -b, b, rng)),
            hidden,
        }
    }

    /// Runs over `x [steps, batch, input]`, returning hidden states
    /// `[steps, batch, hidden]`. With `reverse`, the sequence is consumed
    /// back to front and outputs stay aligned with input positions.
    pub fn forward(&self, ctx: &Ctx<T>, x: &Var<T>, reverse: bool) -> Var<T> {
        let (steps, batch, input) = (x.dim(0), x.dim(1), x.dim(2));
        let hd = self.hidden;
        let w_ih = ctx.param(&self.w_ih);
        let w_hh = ctx.param(&self.w_hh);
        let bias = ctx.param(&self.bias);
        let projected = x
            .reshape(&[steps * batch, input])
            .linear(&w_ih, Some(&bias));
        let mut h = Var::constant(Tensor::zeros(&[batch, hd]));
        let mut c = Var::constant(Tensor::zeros(&[batch, hd]));
        let mut outputs: Vec<Option<Var<T>>> = vec![None; steps];
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let gates = projected
                .slice(0, t * batch, batch)
                .add(&h.linear(&w_hh, None));
            let i = gates.slice(1, 0, hd).sigmoid();
            let f = gates.slice(1, hd, hd).sigmoid();
            let g = gates.slice(1, 2 * hd, hd).tanh();
            let o = gates.slice(1, 3 * hd, hd).sigmoid();
            c = f.mul(&c).add(&i.mul(&g));
            h = o.mul(&c.tanh());
            outputs[t] = Some(h.clone());
        }
        let outputs: Vec<Var<T>> = outputs
            .into_iter()
            .map(|o| o.expect("every step visited"))
            .collect();
        Var::concat(&outputs, 0).reshape(&[steps, batch, hd])
    }
}

/// Bidirectional LSTM concatenating forward and backward hidden states.
#[derive(Debug, Clone)]
pub struct BiLstm<T> {
    pub fwd: Lstm<T>,
    pub bwd: Lstm<T>,
}
impl_module!(BiLstm { fwd, bwd });

impl<T: Float> BiLstm<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fwd: Lstm::new(input, hidden, rng),
            bwd: Lstm::new(input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    /// `x [steps, batch, input] -> [steps, batch, 2 * hidden]`.
    pub fn forward(&self, ctx: &Ctx<T>, x: &Var<T>) -> Var<T> {
        let f = self.fwd.forward(ctx, x, false);
        let b = self.bwd.forward(ctx, x, true);
        Var::concat(&[f, b], 2)
    }
}

/// Parameter names in visiting order; handy for checkpoint diagnostics.
pub fn param_names<T: Float, M: Module<T>>(m: &M) -> Vec<String> {
    let mut out = Vec::new();
    m.visit(&mut |n, _| out.push(scoped("", n)));
    out
}
