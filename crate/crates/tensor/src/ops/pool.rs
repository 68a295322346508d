use crate::float::Float;
use crate::tensor::Tensor;
use crate::var::Var;

fn nchw(shape: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected NCHW tensor, got {shape:?}");
    (shape[0], shape[1], shape[2], shape[3])
}

impl<T: Float> Var<T> {
    /// Max pooling with implicit negative-infinity padding.
    pub fn max_pool2d(&self, kernel: usize, stride: usize, pad: usize) -> Var<T> {
        let (n, c, h, w) = nchw(self.shape());
        let oh = (h + 2 * pad - kernel) / stride + 1;
        let ow = (w + 2 * pad - kernel) / stride + 1;
        let xd = self.value().data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax: Vec<u32> = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_i = 0usize;
                    for ki in 0..kernel {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kj in 0..kernel {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let i = iy as usize * w + ix as usize;
                            if xd[base + i] > best {
                                best = xd[base + i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i as u32);
                }
            }
        }
        let in_shape = self.shape().to_vec();
        Var::from_op(
            Tensor::from_vec(&[n, c, oh, ow], out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut d = vec![T::zero(); n * c * h * w];
                for (k, (&gv, &ai)) in g.data().iter().zip(&argmax).enumerate() {
                    let plane = k / (oh * ow);
                    d[plane * h * w + ai as usize] += gv;
                }
                vec![Some(Tensor::from_vec(&in_shape, d))]
            }),
        )
    }

    /// Average pooling over non-overlapping or strided windows, no padding.
    pub fn avg_pool2d(&self, kernel: usize, stride: usize) -> Var<T> {
        let (n, c, h, w) = nchw(self.shape());
        assert!(
            h >= kernel && w >= kernel,
            "avg_pool2d kernel exceeds input"
        );
        let oh = (h - kernel) / stride + 1;
        let ow = (w - kernel) / stride + 1;
        let inv = T::one() / T::of((kernel * kernel) as f64);
        let xd = self.value().data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for ki in 0..kernel {
                        let row = base + (oy * stride + ki) * w + ox * stride;
                        acc += xd[row..row + kernel].iter().copied().sum::<T>();
                    }
                    out.push(acc * inv);
                }
            }
        }
        let in_shape = self.shape().to_vec();
        Var::from_op(
            Tensor::from_vec(&[n, c, oh, ow], out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let gd = g.data();
                let mut d = vec![T::zero(); n * c * h * w];
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gv = gd[(plane * oh + oy) * ow + ox] * inv;
                            for ki in 0..kernel {
                                let row = base + (oy * stride + ki) * w + ox * stride;
                                d[row..row + kernel].iter_mut().for_each(|v| *v += gv);
                            }
                        }
                    }
                }
                vec![Some(Tensor::from_vec(&in_shape, d))]
            }),
        )
    }

    /// Mean over the spatial axes: `[n, c, h, w] -> [n, c]`.
    pub fn global_avg_pool(&self) -> Var<T> {
        let (n, c, h, w) = nchw(self.shape());
        self.reshape(&[n, c, h * w])
            .sum_axis(2)
            .mul_scalar(T::one() / T::of((h * w) as f64))
    }

    /// Nearest-neighbour upsampling by integer factors.
    pub fn upsample_nearest(&self, fh: usize, fw: usize) -> Var<T> {
        let (n, c, h, w) = nchw(self.shape());
        let (oh, ow) = (h * fh, w * fw);
        let xd = self.value().data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            for oy in 0..oh {
                let row = &xd[(plane * h + oy / fh) * w..(plane * h + oy / fh + 1) * w];
                for ox in 0..ow {
                    out.push(row[ox / fw]);
                }
            }
        }
        let in_shape = self.shape().to_vec();
        Var::from_op(
            Tensor::from_vec(&[n, c, oh, ow], out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let gd = g.data();
                let mut d = vec![T::zero(); n * c * h * w];
                for plane in 0..n * c {
                    for oy in 0..oh {
                        let dst = (plane * h + oy / fh) * w;
                        let src = &gd[(plane * oh + oy) * ow..(plane * oh + oy + 1) * ow];
                        for (ox, &v) in src.iter().enumerate() {
                            d[dst + ox / fw] += v;
                        }
                    }
                }
                vec![Some(Tensor::from_vec(&in_shape, d))]
            }),
        )
    }
}
