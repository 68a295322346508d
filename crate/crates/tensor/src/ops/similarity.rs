use crate::float::Float;
use crate::tensor::Tensor;
use crate::var::Var;

impl<T: Float> Var<T> {
    /// Row-wise `x·y / max(‖x‖‖y‖, eps)` for `[n, d]` inputs, giving `[n]`.
    pub fn cosine_similarity(&self, other: &Var<T>, eps: f64) -> Var<T> {
        assert_eq!(
            self.shape(),
            other.shape(),
            "cosine_similarity shape mismatch"
        );
        assert_eq!(self.shape().len(), 2, "cosine_similarity expects [n, d]");
        let (n, d) = (self.dim(0), self.dim(1));
        let eps = T::of(eps);
        let xd = self.value().data();
        let yd = other.value().data();
        let mut rows = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        for r in 0..n {
            let x = &xd[r * d..(r + 1) * d];
            let y = &yd[r * d..(r + 1) * d];
            let dot: T = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
            let nx = x.iter().map(|&a| a * a).sum::<T>().sqrt();
            let ny = y.iter().map(|&a| a * a).sum::<T>().sqrt();
            let den = nx * ny;
            let s = if den > eps { dot / den } else { dot / eps };
            rows.push((nx, ny, den, s));
            out.push(s);
        }
        Var::from_op(
            Tensor::from_vec(&[n], out),
            vec![self.clone(), other.clone()],
            Box::new(move |g, p| {
                let xd = p[0].value().data();
                let yd = p[1].value().data();
                let gd = g.data();
                let mut gx = vec![T::zero(); n * d];
                let mut gy = vec![T::zero(); n * d];
                for r in 0..n {
                    let (nx, ny, den, s) = rows[r];
                    let x = &xd[r * d..(r + 1) * d];
                    let y = &yd[r * d..(r + 1) * d];
                    let gr = gd[r];
                    for k in 0..d {
                        let (dx, dy) = if den > eps {
                            (
                                y[k] / den - s * x[k] / (nx * nx),
                                x[k] / den - s * y[k] / (ny * ny),
                            )
                        } else {
                            (y[k] / eps, x[k] / eps)
                        };
                        gx[r * d + k] = gr * dx;
                        gy[r * d + k] = gr * dy;
                    }
                }
                vec![
                    Some(Tensor::from_vec(&[n, d], gx)),
                    Some(Tensor::from_vec(&[n, d], gy)),
                ]
            }),
        )
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&self) -> Var<T> {
        let shape = self.shape().to_vec();
        let d = *shape.last().expect("log_softmax on scalar");
        let xd = self.value().data();
        let mut out = vec![T::zero(); xd.len()];
        for (row, dst) in xd.chunks(d).zip(out.chunks_mut(d)) {
            let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            for (o, &v) in dst.iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        let saved = Tensor::from_vec(&shape, out);
        let probs = saved.map(|v| v.exp());
        Var::from_op(
            saved,
            vec![self.clone()],
            Box::new(move |g, _| {
                let gd = g.data();
                let mut dx = vec![T::zero(); gd.len()];
                for ((grow, prow), drow) in gd
                    .chunks(d)
                    .zip(probs.data().chunks(d))
                    .zip(dx.chunks_mut(d))
                {
                    let total: T = grow.iter().copied().sum();
                    for k in 0..d {
                        drow[k] = grow[k] - prow[k] * total;
                    }
                }
                vec![Some(Tensor::from_vec(&shape, dx))]
            }),
        )
    }
}
