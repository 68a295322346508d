use hullscan_tensor::nn::{BiLstm, Linear};
use hullscan_tensor::{impl_module, Ctx, Float, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blocks::ConvBn;
use super::resnet::{ResNet, ResNetConfig};
use crate::error::{Error, Result};

/// Output columns produced per sequence step.
pub const COLUMNS_PER_STEP: usize = 4;

/// Four vertical stride-2 convolutions that squeeze a feature map to a few
/// rows, then fold the rows into channels: `[n, c, h, w] -> [n, c', 1, w]`.
#[derive(Debug, Clone)]
pub struct HeightCompress<T> {
    pub layers: Vec<ConvBn<T>>,
}
impl_module!(HeightCompress { layers });

/// Rows left after the four halvings.
pub fn compressed_height(h: usize) -> usize {
    (0..4).fold(h, |h, _| h.div_ceil(2))
}

impl<T: Float> HeightCompress<T> {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let mut layers = Vec::new();
        let mut c = c_in;
        for k in 0..4 {
            let next = if k == 3 {
                c_out
            } else {
                (c_in >> (k + 1)).max(c_out)
            };
            layers.push(ConvBn::new(c, next, (3, 1), (2, 1), (1, 0), rng));
            c = next;
        }
        Self { layers }
    }

    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        let mut y = x.clone();
        for l in &self.layers {
            y = l.forward_relu(ctx, &y);
        }
        let (n, c, h, w) = (y.dim(0), y.dim(1), y.dim(2), y.dim(3));
        y.reshape(&[n, c * h, 1, w])
    }
}

/// Learned map from `w` columns to `len` columns, initialized to linear
/// interpolation.
#[derive(Debug, Clone)]
pub struct WidthAlign<T> {
    pub map: Linear<T>,
}
impl_module!(WidthAlign { map });

pub fn interpolation_matrix(w: usize, len: usize) -> Vec<f64> {
    let mut m = vec![0.0; len * w];
    for k in 0..len {
        let s = ((k as f64 + 0.5) * w as f64 / len as f64 - 0.5).clamp(0.0, (w - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(w - 1);
        let t = s - i0 as f64;
        m[k * w + i0] += 1.0 - t;
        m[k * w + i1] += t;
    }
    m
}

impl<T: Float> WidthAlign<T> {
    pub fn new<R: Rng + ?Sized>(w: usize, len: usize, rng: &mut R) -> Self {
        let mut map = Linear::new(w, len, rng);
        map.weight
            .set(Tensor::from_f64(&[len, w], &interpolation_matrix(w, len)));
        map.bias.set(Tensor::zeros(&[len]));
        Self { map }
    }

    /// `[n, c, 1, w] -> [n, c, 1, len]`.
    pub fn forward(&self, ctx: &Ctx<T>, x: &Var<T>) -> Var<T> {
        let (n, c, w) = (x.dim(0), x.dim(1), x.dim(3));
        let len = self.map.out_features();
        self.map
            .forward(ctx, &x.reshape(&[n * c, w]))
            .reshape(&[n, c, 1, len])
    }
}

/// Bidirectional LSTM over the aligned sequence plus a linear head giving
/// both curves, [`COLUMNS_PER_STEP`] columns per step, squashed to [0, 1].
#[derive(Debug, Clone)]
pub struct SequenceSmoother<T> {
    pub lstm: BiLstm<T>,
    pub head: Linear<T>,
}
impl_module!(SequenceSmoother { lstm, head });

impl<T: Float> SequenceSmoother<T> {
    pub fn new<R: Rng + ?Sized>(features: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            lstm: BiLstm::new(features, hidden, rng),
            head: Linear::new(2 * hidden, 2 * COLUMNS_PER_STEP, rng),
        }
    }

    /// `[n, features, steps] -> [n, 2, steps * COLUMNS_PER_STEP]`.
    pub fn forward(&self, ctx: &Ctx<T>, x: &Var<T>) -> Var<T> {
        let (n, f, steps) = (x.dim(0), x.dim(1), x.dim(2));
        let seq = x.permute(&[2, 0, 1]);
        debug_assert_eq!(seq.shape(), &[steps, n, f]);
        let h = self.lstm.forward(ctx, &seq);
        let hd = h.dim(2);
        let out = self.head.forward(ctx, &h.reshape(&[steps * n, hd]));
        out.reshape(&[steps, n, 2, COLUMNS_PER_STEP])
            .permute(&[1, 2, 0, 3])
            .reshape(&[n, 2, steps * COLUMNS_PER_STEP])
            .sigmoid()
    }

    /// Makes the model equivariant to sequence reversal: the backward LSTM
    /// copies the forward one and the head's backward half is the forward
    /// half with its columns mirrored.
    pub fn symmetrize(&mut self) {
        self.lstm.bwd.w_ih.set(self.lstm.fwd.w_ih.value().clone());
        self.lstm.bwd.w_hh.set(self.lstm.fwd.w_hh.value().clone());
        self.lstm.bwd.bias.set(self.lstm.fwd.bias.value().clone());
        let hd = self.lstm.hidden();
        let rows = 2 * COLUMNS_PER_STEP;
        let mirror = |r: usize| {
            (r / COLUMNS_PER_STEP) * COLUMNS_PER_STEP + COLUMNS_PER_STEP - 1 - r % COLUMNS_PER_STEP
        };
        let w = self.head.weight.value().clone();
        let mut nw = w.clone();
        for r in 0..rows {
            for k in 0..hd {
                let v = w.get(&[mirror(r), k]);
                nw.set(&[r, hd + k], v);
            }
        }
        self.head.weight.set(nw);
        let b = self.head.bias.value().clone();
        let mut nb = b.clone();
        for r in 0..rows {
            let m = mirror(r);
            if m > r {
                let avg = (b.get(&[r]) + b.get(&[m])) * T::of(0.5);
                nb.set(&[r], avg);
                nb.set(&[m], avg);
            }
        }
        self.head.bias.set(nb);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionNetConfig {
    pub encoder: ResNetConfig,
    /// `(width, height)` of the input frame.
    pub input: (usize, usize),
    pub seq_len: usize,
    /// Features per scale after height compression.
    pub per_scale: usize,
    pub hidden: usize,
}

impl SectionNetConfig {
    pub fn full() -> Self {
        Self {
            encoder: ResNetConfig::resnet34(),
            input: (640, 480),
            seq_len: 160,
            per_scale: 64,
            hidden: 256,
        }
    }

    pub fn desk() -> Self {
        Self {
            encoder: ResNetConfig::desk(),
            hidden: 32,
            ..Self::full()
        }
    }

    /// `(height, width)` of the encoder maps at strides 4, 8, 16, 32.
    pub fn scale_dims(&self) -> [(usize, usize); 4] {
        let conv = |n: usize| (n + 2 * 3 - 7) / 2 + 1;
        let pool = |n: usize| (n + 2 - 3) / 2 + 1;
        let (mut h, mut w) = (pool(conv(self.input.1)), pool(conv(self.input.0)));
        let mut out = [(0, 0); 4];
        for (i, o) in out.iter_mut().enumerate() {
            if i > 0 {
                h = h.div_ceil(2);
                w = w.div_ceil(2);
            }
            *o = (h, w);
        }
        out
    }
}

/// Boundary regressor: residual features at four scales, height
/// compression, width alignment, and a bidirectional smoother.
#[derive(Debug, Clone)]
pub struct SectionNet<T> {
    pub encoder: ResNet<T>,
    pub compress: Vec<HeightCompress<T>>,
    pub align: Vec<WidthAlign<T>>,
    pub smoother: SequenceSmoother<T>,
}
impl_module!(SectionNet {
    encoder,
    compress,
    align,
    smoother
});

impl<T: Float> SectionNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &SectionNetConfig, rng: &mut R) -> Result<Self> {
        if cfg.seq_len * COLUMNS_PER_STEP != cfg.input.0 {
            return Err(Error::validation(
                "seq_len",
                format!(
                    "{} steps x {COLUMNS_PER_STEP} != width {}",
                    cfg.seq_len, cfg.input.0
                ),
            ));
        }
        let encoder = ResNet::new(&cfg.encoder, rng);
        let ch = encoder.channels();
        let mut compress = Vec::new();
        let mut align = Vec::new();
        for (s, &(h, w)) in cfg.scale_dims().iter().enumerate() {
            let rows = compressed_height(h);
            if !cfg.per_scale.is_multiple_of(rows) {
                return Err(Error::validation(
                    "per_scale",
                    format!("{} not divisible by {rows} compressed rows", cfg.per_scale),
                ));
            }
            compress.push(HeightCompress::new(ch[s + 1], cfg.per_scale / rows, rng));
            align.push(WidthAlign::new(w, cfg.seq_len, rng));
        }
        let smoother = SequenceSmoother::new(4 * cfg.per_scale, cfg.hidden, rng);
        Ok(Self {
            encoder,
            compress,
            align,
            smoother,
        })
    }

    /// Stacked per-column features `[n, 4 * per_scale, seq_len]`.
    pub fn features(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        let feats = self.encoder.forward(ctx, x);
        let mut parts = Vec::new();
        for s in 0..4 {
            let c = self.compress[s].forward(ctx, &feats[s + 1]);
            parts.push(self.align[s].forward(ctx, &c));
        }
        let y = Var::concat(&parts, 1);
        let (n, c, len) = (y.dim(0), y.dim(1), y.dim(3));
        y.reshape(&[n, c, len])
    }

    /// `[n, 3, 480, 640] -> [n, 2, 640]` in [0, 1].
    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
        if x.shape().len() != 4 || x.dim(1) != 3 {
            return Err(Error::Shape(format!("section net input {:?}", x.shape())));
        }
        let f = self.features(ctx, x);
        Ok(self.smoother.forward(ctx, &f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::losses::range_aware_loss_var;
    use hullscan_tensor::gradcheck::{grad_check, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scale_dims_for_frame() {
        let cfg = SectionNetConfig::desk();
        assert_eq!(cfg.scale_dims(), [(120, 160), (60, 80), (30, 40), (15, 20)]);
        let rows: Vec<usize> = cfg
            .scale_dims()
            .iter()
            .map(|d| compressed_height(d.0))
            .collect();
        assert_eq!(rows, vec![8, 4, 2, 1]);
        assert_eq!(compressed_height(16), 1);
    }

    #[test]
    fn interpolation_rows_sum_to_one() {
        for (w, len) in [(160, 160), (80, 160), (20, 160), (7, 3)] {
            let m = interpolation_matrix(w, len);
            for k in 0..len {
                let s: f64 = m[k * w..(k + 1) * w].iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let m = interpolation_matrix(5, 5);
        for k in 0..5 {
            assert_eq!(m[k * 5 + k], 1.0);
        }
    }

    #[test]
    fn compress_and_align_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hc = HeightCompress::<f32>::new(6, 4, &mut rng);
        let x = Var::constant(Tensor::randn(&[1, 6, 16, 160], 1.0, &mut rng));
        let y = hc.forward(&mut Ctx::eval(), &x);
        assert_eq!(y.shape(), &[1, 4, 1, 160]);
        let wa = WidthAlign::<f32>::new(80, 160, &mut rng);
        let z = wa.forward(
            &Ctx::eval(),
            &Var::constant(Tensor::randn(&[2, 3, 1, 80], 1.0, &mut rng)),
        );
        assert_eq!(z.shape(), &[2, 3, 1, 160]);
    }

    #[test]
    fn desk_net_emits_two_curves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = SectionNet::<f32>::new(&SectionNetConfig::desk(), &mut rng).unwrap();
        let x = Var::constant(Tensor::rand_uniform(&[1, 3, 480, 640], 0.0, 1.0, &mut rng));
        let y = net.forward(&mut Ctx::eval(), &x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 640]);
        assert!(y.value().data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    fn reverse_last(t: &Tensor<f64>) -> Tensor<f64> {
        let shape = t.shape().to_vec();
        let last = *shape.last().unwrap();
        let mut out = t.clone();
        for (src, dst) in t.data().chunks(last).zip(out.data_mut().chunks_mut(last)) {
            for (i, v) in src.iter().rev().enumerate() {
                dst[i] = *v;
            }
        }
        out
    }

    #[test]
    fn symmetric_smoother_commutes_with_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut sm = SequenceSmoother::<f64>::new(6, 5, &mut rng);
        sm.symmetrize();
        let x = Tensor::randn(&[2, 6, 12], 1.0, &mut rng);
        let ctx = Ctx::eval();
        let y = sm.forward(&ctx, &Var::constant(x.clone())).value().clone();
        let yr = sm
            .forward(&ctx, &Var::constant(reverse_last(&x)))
            .value()
            .clone();
        let want = reverse_last(&y);
        let err = yr
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "max deviation {err}");
    }

    #[test]
    fn compress_and_align_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hc = HeightCompress::<f64>::new(2, 2, &mut rng);
        let x = Tensor::randn(&[2, 2, 16, 3], 1.0, &mut rng);
        let w = Tensor::randn(&[2, 2, 1, 3], 1.0, &mut rng);
        let r = grad_check(
            |v| hc.forward(&mut Ctx::eval(), v).mul_const(&w).sum(),
            &x,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        let wa = WidthAlign::<f64>::new(5, 8, &mut rng);
        let x = Tensor::randn(&[1, 2, 1, 5], 1.0, &mut rng);
        let w = Tensor::randn(&[1, 2, 1, 8], 1.0, &mut rng);
        let r = grad_check(
            |v| wa.forward(&Ctx::eval(), v).mul_const(&w).sum(),
            &x,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn range_loss_through_head_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sm = SequenceSmoother::<f64>::new(3, 4, &mut rng);
        let x = Tensor::randn(&[1, 3, 5], 1.0, &mut rng);
        let target = Tensor::rand_uniform(&[1, 2, 20], 0.0, 1.0, &mut rng);
        let mask = Tensor::from_vec(
            &[1, 2, 20],
            (0..40)
                .map(|i| if i % 3 == 0 { 0.0 } else { 1.0 })
                .collect(),
        );
        let r = grad_check(
            |v| range_aware_loss_var(&sm.forward(&Ctx::eval(), v), &target, &mask).unwrap(),
            &x,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }
}
