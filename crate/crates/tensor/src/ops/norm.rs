use crate::float::Float;
use crate::tensor::Tensor;
use crate::var::Var;

/// Batch statistics produced by a training-mode normalization pass.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Tensor<T>,
    /// Biased (population) variance.
    pub var: Tensor<T>,
    /// Number of values each channel statistic was computed over.
    pub count: usize,
}

fn channel_layout(shape: &[usize]) -> (usize, usize, usize) {
    assert!(
        shape.len() >= 2,
        "batch norm needs [n, c, ...], got {shape:?}"
    );
    let inner: usize = shape[2..].iter().product();
    (shape[0], shape[1], inner)
}

impl<T: Float> Var<T> {
    /// Normalizes each channel with statistics of the current batch.
    pub fn batch_norm_train(
        &self,
        gamma: &Var<T>,
        beta: &Var<T>,
        eps: f64,
    ) -> (Var<T>, BatchStats<T>) {
        let (n, c, inner) = channel_layout(self.shape());
        assert_eq!(gamma.shape(), &[c]);
        assert_eq!(beta.shape(), &[c]);
        let m = n * inner;
        let mf = T::of(m as f64);
        let xd = self.value().data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for b in 0..n {
            for (ch, mu) in mean.iter_mut().enumerate() {
                let base = (b * c + ch) * inner;
                *mu += xd[base..base + inner].iter().copied().sum::<T>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= mf);
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * inner;
                let mu = mean[ch];
                var[ch] += xd[base..base + inner]
                    .iter()
                    .map(|&v| (v - mu) * (v - mu))
                    .sum::<T>();
            }
        }
        var.iter_mut().for_each(|v| *v /= mf);
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::one() / (v + T::of(eps)).sqrt())
            .collect();
        let gd = gamma.value().data();
        let bd = beta.value().data();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * inner;
                for i in base..base + inner {
                    let h = (xd[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = gd[ch] * h + bd[ch];
                }
            }
        }
        let shape = self.shape().to_vec();
        let stats = BatchStats {
            mean: Tensor::from_vec(&[c], mean),
            var: Tensor::from_vec(&[c], var),
            count: m,
        };
        let y = Var::from_op(
            Tensor::from_vec(&shape, out),
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, p| {
                let gdat = g.data();
                let gamma = p[1].value().data();
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * inner;
                        for i in base..base + inner {
                            sum_g[ch] += gdat[i];
                            sum_gx[ch] += gdat[i] * xhat[i];
                        }
                    }
                }
                let gx = p[0].requires_grad().then(|| {
                    let mut d = vec![T::zero(); gdat.len()];
                    for b in 0..n {
                        for ch in 0..c {
                            let base = (b * c + ch) * inner;
                            let k = gamma[ch] * inv_std[ch] / mf;
                            for i in base..base + inner {
                                d[i] = k * (mf * gdat[i] - sum_g[ch] - xhat[i] * sum_gx[ch]);
                            }
                        }
                    }
                    Tensor::from_vec(&shape, d)
                });
                vec![
                    gx,
                    Some(Tensor::from_vec(&[c], sum_gx)),
                    Some(Tensor::from_vec(&[c], sum_g)),
                ]
            }),
        );
        (y, stats)
    }

    /// Per-channel affine map `x * scale + shift` (inference-mode batch norm).
    pub fn channel_affine(&self, scale: &Var<T>, shift: &Var<T>) -> Var<T> {
        let (n, c, inner) = channel_layout(self.shape());
        assert_eq!(scale.shape(), &[c]);
        assert_eq!(shift.shape(), &[c]);
        let xd = self.value().data();
        let sd = scale.value().data();
        let td = shift.value().data();
        let mut out = vec![T::zero(); xd.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * inner;
                for i in base..base + inner {
                    out[i] = xd[i] * sd[ch] + td[ch];
                }
            }
        }
        let shape = self.shape().to_vec();
        Var::from_op(
            Tensor::from_vec(&shape, out),
            vec![self.clone(), scale.clone(), shift.clone()],
            Box::new(move |g, p| {
                let gd = g.data();
                let xd = p[0].value().data();
                let sd = p[1].value().data();
                let mut gs = vec![T::zero(); c];
                let mut gt = vec![T::zero(); c];
                let mut gx = vec![T::zero(); gd.len()];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * inner;
                        for i in base..base + inner {
                            gx[i] = gd[i] * sd[ch];
                            gs[ch] += gd[i] * xd[i];
                            gt[ch] += gd[i];
                        }
                    }
                }
                vec![
                    Some(Tensor::from_vec(&shape, gx)),
                    Some(Tensor::from_vec(&[c], gs)),
                    Some(Tensor::from_vec(&[c], gt)),
                ]
            }),
        )
    }
}
