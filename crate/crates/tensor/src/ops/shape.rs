use crate::float::Float;
use crate::tensor::{gemm, numel, Mat, Tensor};
use crate::var::Var;

/// `(outer, axis_len, inner)` split of a shape around one axis.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Float> Var<T> {
    pub fn reshape(&self, shape: &[usize]) -> Var<T> {
        let in_shape = self.shape().to_vec();
        Var::from_op(
            self.value().reshape(shape),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(g.reshape(&in_shape))]),
        )
    }

    pub fn permute(&self, perm: &[usize]) -> Var<T> {
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Var::from_op(
            self.value().permute(perm),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(g.permute(&inverse))]),
        )
    }

    pub fn concat(parts: &[Var<T>], axis: usize) -> Var<T> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let base = parts[0].shape().to_vec();
        for p in parts {
            assert_eq!(p.shape().len(), base.len(), "concat rank mismatch");
            for (ax, (&a, &b)) in p.shape().iter().zip(&base).enumerate() {
                assert!(ax == axis || a == b, "concat shape mismatch on axis {ax}");
            }
        }
        let lens: Vec<usize> = parts.iter().map(|p| p.dim(axis)).collect();
        let total: usize = lens.iter().sum();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&lens) {
                let chunk = len * inner;
                out.extend_from_slice(&p.value().data()[o * chunk..(o + 1) * chunk]);
            }
        }
        Var::from_op(
            Tensor::from_vec(&out_shape, out),
            parts.to_vec(),
            Box::new(move |g, parents| {
                let gd = g.data();
                parents
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        if !p.requires_grad() {
                            return None;
                        }
                        let before: usize = lens[..i].iter().sum();
                        let chunk = lens[i] * inner;
                        let mut d = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            let start = o * total * inner + before * inner;
                            d.extend_from_slice(&gd[start..start + chunk]);
                        }
                        Some(Tensor::from_vec(p.shape(), d))
                    })
                    .collect()
            }),
        )
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Var<T> {
        let shape = self.shape().to_vec();
        assert!(start + len <= shape[axis], "slice out of range");
        let (outer, n, inner) = split_axis(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let src = self.value().data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        Var::from_op(
            Tensor::from_vec(&out_shape, out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut d = vec![T::zero(); outer * n * inner];
                let gd = g.data();
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    d[base..base + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(Tensor::from_vec(&shape, d))]
            }),
        )
    }

    /// Adds a 1-D `bias` broadcast along `axis`.
    pub fn add_bias(&self, bias: &Var<T>, axis: usize) -> Var<T> {
        let shape = self.shape().to_vec();
        assert_eq!(bias.shape(), &[shape[axis]], "bias length mismatch");
        let (outer, n, inner) = split_axis(&shape, axis);
        let mut out = self.value().clone();
        {
            let b = bias.value().data();
            let d = out.data_mut();
            for o in 0..outer {
                for (c, &bv) in b.iter().enumerate() {
                    let base = (o * n + c) * inner;
                    d[base..base + inner].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        Var::from_op(
            out,
            vec![self.clone(), bias.clone()],
            Box::new(move |g, p| {
                let gb = p[1].requires_grad().then(|| {
                    let gd = g.data();
                    let mut acc = vec![T::zero(); n];
                    for o in 0..outer {
                        for (c, a) in acc.iter_mut().enumerate() {
                            let base = (o * n + c) * inner;
                            *a += gd[base..base + inner].iter().copied().sum::<T>();
                        }
                    }
                    Tensor::from_vec(&[n], acc)
                });
                vec![Some(g.clone()), gb]
            }),
        )
    }

    pub fn sum(&self) -> Var<T> {
        let shape = self.shape().to_vec();
        Var::from_op(
            Tensor::scalar(self.value().sum()),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))]),
        )
    }

    pub fn mean(&self) -> Var<T> {
        let n = T::of(self.value().numel() as f64);
        self.sum().mul_scalar(T::one() / n)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Var<T> {
        let shape = self.shape().to_vec();
        let (outer, n, inner) = split_axis(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let src = self.value().data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for c in 0..n {
                let base = (o * n + c) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        Var::from_op(
            Tensor::from_vec(&out_shape, out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let gd = g.data();
                let mut d = vec![T::zero(); outer * n * inner];
                for o in 0..outer {
                    for c in 0..n {
                        let base = (o * n + c) * inner;
                        d[base..base + inner].copy_from_slice(&gd[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(Tensor::from_vec(&shape, d))]
            }),
        )
    }

    /// `[m, k] x [k, n]`.
    pub fn matmul(&self, other: &Var<T>) -> Var<T> {
        assert_eq!(self.shape().len(), 2, "matmul lhs must be 2-D");
        assert_eq!(other.shape().len(), 2, "matmul rhs must be 2-D");
        let (m, k) = (self.dim(0), self.dim(1));
        let n = other.dim(1);
        assert_eq!(other.dim(0), k, "matmul inner dimension mismatch");
        Var::from_op(
            self.value().matmul(other.value()),
            vec![self.clone(), other.clone()],
            Box::new(move |g, p| {
                let (a, b) = (p[0].value().data(), p[1].value().data());
                let ga = p[0].requires_grad().then(|| {
                    let mut d = vec![T::zero(); m * k];
                    gemm(
                        Mat::new(g.data(), m, n, false),
                        Mat::new(b, k, n, true),
                        &mut d,
                        false,
                    );
                    Tensor::from_vec(&[m, k], d)
                });
                let gb = p[1].requires_grad().then(|| {
                    let mut d = vec![T::zero(); k * n];
                    gemm(
                        Mat::new(a, m, k, true),
                        Mat::new(g.data(), m, n, false),
                        &mut d,
                        false,
                    );
                    Tensor::from_vec(&[k, n], d)
                });
                vec![ga, gb]
            }),
        )
    }

    /// Fully connected layer: `x [n, in] * w^T [in, out] + b`.
    pub fn linear(&self, weight: &Var<T>, bias: Option<&Var<T>>) -> Var<T> {
        assert_eq!(
            self.shape().len(),
            2,
            "linear input must be [batch, features]"
        );
        let (n, fin) = (self.dim(0), self.dim(1));
        let fout = weight.dim(0);
        assert_eq!(weight.shape(), &[fout, fin], "linear weight shape mismatch");
        let mut out = vec![T::zero(); n * fout];
        gemm(
            Mat::new(self.value().data(), n, fin, false),
            Mat::new(weight.value().data(), fout, fin, true),
            &mut out,
            false,
        );
        if let Some(b) = bias {
            assert_eq!(b.shape(), &[fout], "linear bias shape mismatch");
            let bd = b.value().data();
            for row in out.chunks_mut(fout) {
                for (v, &bv) in row.iter_mut().zip(bd) {
                    *v += bv;
                }
            }
        }
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Var::from_op(
            Tensor::from_vec(&[n, fout], out),
            parents,
            Box::new(move |g, p| {
                let gd = g.data();
                let gx = p[0].requires_grad().then(|| {
                    let mut d = vec![T::zero(); n * fin];
                    gemm(
                        Mat::new(gd, n, fout, false),
                        Mat::new(p[1].value().data(), fout, fin, false),
                        &mut d,
                        false,
                    );
                    Tensor::from_vec(&[n, fin], d)
                });
                let gw = p[1].requires_grad().then(|| {
                    let mut d = vec![T::zero(); fout * fin];
                    gemm(
                        Mat::new(gd, n, fout, true),
                        Mat::new(p[0].value().data(), n, fin, false),
                        &mut d,
                        false,
                    );
                    Tensor::from_vec(&[fout, fin], d)
                });
                let mut res = vec![gx, gw];
                if p.len() == 3 {
                    res.push(p[2].requires_grad().then(|| {
                        let mut acc = vec![T::zero(); fout];
                        for row in gd.chunks(fout) {
                            for (a, &v) in acc.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                        Tensor::from_vec(&[fout], acc)
                    }));
                }
                res
            }),
        )
    }
}
