//! 2-D convolution via im2col and matrix products.

use crate::float::Float;
use crate::tensor::{gemm, Mat, Tensor};
use crate::var::Var;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeom {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2dGeom {
    pub fn new(stride: (usize, usize), padding: (usize, usize)) -> Self {
        Self { stride, padding }
    }

    pub fn out_size(&self, h: usize, w: usize, kh: usize, kw: usize) -> (usize, usize) {
        let hp = h + 2 * self.padding.0;
        let wp = w + 2 * self.padding.1;
        assert!(hp >= kh && wp >= kw, "kernel larger than padded input");
        ((hp - kh) / self.stride.0 + 1, (wp - kw) / self.stride.1 + 1)
    }
}

struct Dims {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
}

impl Dims {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }
}

/// Unfolds one `[c, h, w]` image into `[c*kh*kw, oh*ow]` columns.
fn im2col<T: Float>(x: &[T], d: &Dims, col: &mut [T]) {
    let plane = d.oh * d.ow;
    let mut row = 0;
    for c in 0..d.c {
        let xc = &x[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..d.oh {
                    let iy = (oy * d.sh + ki) as isize - d.ph as isize;
                    let out_row = &mut dst[oy * d.ow..(oy + 1) * d.ow];
                    if iy < 0 || iy >= d.h as isize {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &xc[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * d.sw + kj) as isize - d.pw as isize;
                        *v = if ix < 0 || ix >= d.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Folds columns back, accumulating into `[c, h, w]`.
fn col2im<T: Float>(col: &[T], d: &Dims, x: &mut [T]) {
    let plane = d.oh * d.ow;
    let mut row = 0;
    for c in 0..d.c {
        let xc = &mut x[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..d.oh {
                    let iy = (oy * d.sh + ki) as isize - d.ph as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut xc[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for (ox, &v) in src[oy * d.ow..(oy + 1) * d.ow].iter().enumerate() {
                        let ix = (ox * d.sw + kj) as isize - d.pw as isize;
                        if ix >= 0 && ix < d.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

impl<T: Float> Var<T> {
    /// `x [n, c, h, w]` convolved with `weight [o, c, kh, kw]`, plus optional
    /// per-output-channel `bias [o]`.
    pub fn conv2d(&self, weight: &Var<T>, bias: Option<&Var<T>>, geom: Conv2dGeom) -> Var<T> {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 4, "conv2d input must be NCHW, got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be OIHW, got {ws:?}");
        assert_eq!(
            xs[1], ws[1],
            "conv2d channel mismatch: input {xs:?}, weight {ws:?}"
        );
        let (n, o) = (xs[0], ws[0]);
        let (oh, ow) = geom.out_size(xs[2], xs[3], ws[2], ws[3]);
        let d = Dims {
            c: xs[1],
            h: xs[2],
            w: xs[3],
            kh: ws[2],
            kw: ws[3],
            oh,
            ow,
            sh: geom.stride.0,
            sw: geom.stride.1,
            ph: geom.padding.0,
            pw: geom.padding.1,
        };
        let ckk = d.c * d.kh * d.kw;
        let plane = oh * ow;
        let in_plane = d.c * d.h * d.w;
        let xd = self.value().data();
        let wd = weight.value().data();
        let mut out = vec![T::zero(); n * o * plane];
        let mut col = if d.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); ckk * plane]
        };
        for b in 0..n {
            let xb = &xd[b * in_plane..(b + 1) * in_plane];
            let cols: &[T] = if d.is_pointwise() {
                xb
            } else {
                im2col(xb, &d, &mut col);
                &col
            };
            gemm(
                Mat::new(wd, o, ckk, false),
                Mat::new(cols, ckk, plane, false),
                &mut out[b * o * plane..(b + 1) * o * plane],
                false,
            );
        }
        if let Some(bias) = bias {
            assert_eq!(bias.shape(), &[o], "conv2d bias shape mismatch");
            let bd = bias.value().data();
            for chunk in out.chunks_mut(plane).enumerate() {
                let bv = bd[chunk.0 % o];
                chunk.1.iter_mut().for_each(|v| *v += bv);
            }
        }
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Var::from_op(
            Tensor::from_vec(&[n, o, oh, ow], out),
            parents,
            Box::new(move |g, p| {
                let gd = g.data();
                let xd = p[0].value().data();
                let wd = p[1].value().data();
                let need_x = p[0].requires_grad();
                let need_w = p[1].requires_grad();
                let mut gx = need_x.then(|| vec![T::zero(); n * in_plane]);
                let mut gw = need_w.then(|| vec![T::zero(); o * ckk]);
                let mut col = vec![T::zero(); if d.is_pointwise() { 0 } else { ckk * plane }];
                let mut dcol = vec![
                    T::zero();
                    if need_x && !d.is_pointwise() {
                        ckk * plane
                    } else {
                        0
                    }
                ];
                for b in 0..n {
                    let gb = &gd[b * o * plane..(b + 1) * o * plane];
                    if let Some(gw) = gw.as_mut() {
                        let xb = &xd[b * in_plane..(b + 1) * in_plane];
                        let cols: &[T] = if d.is_pointwise() {
                            xb
                        } else {
                            im2col(xb, &d, &mut col);
                            &col
                        };
                        gemm(
                            Mat::new(gb, o, plane, false),
                            Mat::new(cols, ckk, plane, true),
                            gw,
                            true,
                        );
                    }
                    if let Some(gx) = gx.as_mut() {
                        let gxb = &mut gx[b * in_plane..(b + 1) * in_plane];
                        if d.is_pointwise() {
                            gemm(
                                Mat::new(wd, o, ckk, true),
                                Mat::new(gb, o, plane, false),
                                gxb,
                                false,
                            );
                        } else {
                            gemm(
                                Mat::new(wd, o, ckk, true),
                                Mat::new(gb, o, plane, false),
                                &mut dcol,
                                false,
                            );
                            col2im(&dcol, &d, gxb);
                        }
                    }
                }
                let mut res = vec![
                    gx.map(|v| Tensor::from_vec(p[0].shape(), v)),
                    gw.map(|v| Tensor::from_vec(p[1].shape(), v)),
                ];
                if p.len() == 3 {
                    res.push(p[2].requires_grad().then(|| {
                        let mut acc = vec![T::zero(); o];
                        for (i, chunk) in gd.chunks(plane).enumerate() {
                            acc[i % o] += chunk.iter().copied().sum::<T>();
                        }
                        Tensor::from_vec(&[o], acc)
                    }));
                }
                res
            }),
        )
    }
}
