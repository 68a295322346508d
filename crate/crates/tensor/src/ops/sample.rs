//! Affine sampling grids and bilinear resampling.
//!
//! Coordinates are normalized to `[-1, 1]` with `-1` and `1` at the centers
//! of the first and last pixel along each axis.

use crate::float::Float;
use crate::tensor::Tensor;
use crate::var::Var;

/// Normalized coordinate of pixel `j` on an axis of `n` pixels.
pub fn lattice_coord(j: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * j as f64 / (n - 1) as f64
    }
}

fn to_pixel<T: Float>(g: T, n: usize) -> T {
    let p = (g + T::one()) * T::of(0.5) * T::of(n.saturating_sub(1) as f64);
    // Lattice coordinates do not survive the normalize/denormalize round
    // trip bit-exactly. The rounding error of `g` is amplified by the axis
    // length, so snap anything within a few such ulps of a pixel center.
    let r = p.round();
    let tol = T::of(8.0 * T::epsilon_f64() * n.max(2) as f64);
    if (p - r).abs() <= tol {
        r
    } else {
        p
    }
}

impl<T: Float> Var<T> {
    /// Sampling grid `[n, h, w, 2]` of `(x, y)` source coordinates for affine
    /// parameters `theta [n, 6]` laid out as `(r_xx, r_xy, t_x, r_yx, r_yy, t_y)`.
    pub fn affine_grid(&self, h: usize, w: usize) -> Var<T> {
        assert_eq!(self.shape().len(), 2, "theta must be [n, 6]");
        assert_eq!(self.dim(1), 6, "theta must be [n, 6]");
        let n = self.dim(0);
        let th = self.value().data();
        let xs: Vec<T> = (0..w).map(|j| T::of(lattice_coord(j, w))).collect();
        let ys: Vec<T> = (0..h).map(|i| T::of(lattice_coord(i, h))).collect();
        let mut out = Vec::with_capacity(n * h * w * 2);
        for b in 0..n {
            let t = &th[b * 6..b * 6 + 6];
            for &y in &ys {
                for &x in &xs {
                    out.push(t[0] * x + t[1] * y + t[2]);
                    out.push(t[3] * x + t[4] * y + t[5]);
                }
            }
        }
        Var::from_op(
            Tensor::from_vec(&[n, h, w, 2], out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let gd = g.data();
                let mut d = vec![T::zero(); n * 6];
                for b in 0..n {
                    let acc = &mut d[b * 6..b * 6 + 6];
                    for (i, &y) in ys.iter().enumerate() {
                        for (j, &x) in xs.iter().enumerate() {
                            let k = ((b * h + i) * w + j) * 2;
                            let (gx, gy) = (gd[k], gd[k + 1]);
                            acc[0] += gx * x;
                            acc[1] += gx * y;
                            acc[2] += gx;
                            acc[3] += gy * x;
                            acc[4] += gy * y;
                            acc[5] += gy;
                        }
                    }
                }
                vec![Some(Tensor::from_vec(&[n, 6], d))]
            }),
        )
    }

    /// Bilinear sampling of `self [n, c, h, w]` at `grid [n, oh, ow, 2]`.
    /// Samples outside the image read zero. Differentiable in both inputs.
    pub fn grid_sample(&self, grid: &Var<T>) -> Var<T> {
        let xs = self.shape().to_vec();
        assert_eq!(xs.len(), 4, "grid_sample input must be NCHW");
        let gs = grid.shape().to_vec();
        assert_eq!(gs.len(), 4, "grid must be [n, h, w, 2]");
        assert_eq!(gs[3], 2, "grid must be [n, h, w, 2]");
        assert_eq!(gs[0], xs[0], "grid batch mismatch");
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (gs[1], gs[2]);
        let xd = self.value().data();
        let gd = grid.value().data();
        let mut out = vec![T::zero(); n * c * oh * ow];
        for b in 0..n {
            for p in 0..oh * ow {
                let k = (b * oh * ow + p) * 2;
                let corners = Corners::new(to_pixel(gd[k], w), to_pixel(gd[k + 1], h), h, w);
                for ch in 0..c {
                    let plane = &xd[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                    out[(b * c + ch) * oh * ow + p] = corners.sample(plane, w);
                }
            }
        }
        Var::from_op(
            Tensor::from_vec(&[n, c, oh, ow], out),
            vec![self.clone(), grid.clone()],
            Box::new(move |g, parents| {
                let go = g.data();
                let xd = parents[0].value().data();
                let gd = parents[1].value().data();
                let need_x = parents[0].requires_grad();
                let need_g = parents[1].requires_grad();
                let mut dx = vec![T::zero(); if need_x { n * c * h * w } else { 0 }];
                let mut dg = vec![T::zero(); if need_g { n * oh * ow * 2 } else { 0 }];
                let sx = T::of(0.5 * w.saturating_sub(1) as f64);
                let sy = T::of(0.5 * h.saturating_sub(1) as f64);
                for b in 0..n {
                    for p in 0..oh * ow {
                        let k = (b * oh * ow + p) * 2;
                        let cr = Corners::new(to_pixel(gd[k], w), to_pixel(gd[k + 1], h), h, w);
                        let (mut dpx, mut dpy) = (T::zero(), T::zero());
                        for ch in 0..c {
                            let gv = go[(b * c + ch) * oh * ow + p];
                            let off = (b * c + ch) * h * w;
                            if need_x {
                                cr.scatter(&mut dx[off..off + h * w], w, gv);
                            }
                            if need_g {
                                let (ddx, ddy) = cr.spatial_grad(&xd[off..off + h * w], w);
                                dpx += gv * ddx;
                                dpy += gv * ddy;
                            }
                        }
                        if need_g {
                            dg[k] = dpx * sx;
                            dg[k + 1] = dpy * sy;
                        }
                    }
                }
                vec![
                    need_x.then(|| Tensor::from_vec(&[n, c, h, w], dx)),
                    need_g.then(|| Tensor::from_vec(&[n, oh, ow, 2], dg)),
                ]
            }),
        )
    }
}

/// The four neighbours of a sample point and their bilinear weights.
struct Corners<T> {
    x0: isize,
    y0: isize,
    fx: T,
    fy: T,
    h: isize,
    w: isize,
}

impl<T: Float> Corners<T> {
    fn new(px: T, py: T, h: usize, w: usize) -> Self {
        let x0f = px.floor();
        let y0f = py.floor();
        // Far out-of-range samples collapse to a sentinel outside the image.
        let clampi = |v: T| v.max(T::of(-4.0)).min(T::of(1e6)).to_isize().unwrap_or(-4);
        Self {
            x0: clampi(x0f),
            y0: clampi(y0f),
            fx: px - x0f,
            fy: py - y0f,
            h: h as isize,
            w: w as isize,
        }
    }

    fn at(&self, plane: &[T], w: usize, y: isize, x: isize) -> T {
        if y >= 0 && y < self.h && x >= 0 && x < self.w {
            plane[y as usize * w + x as usize]
        } else {
            T::zero()
        }
    }

    fn values(&self, plane: &[T], w: usize) -> [T; 4] {
        [
            self.at(plane, w, self.y0, self.x0),
            self.at(plane, w, self.y0, self.x0 + 1),
            self.at(plane, w, self.y0 + 1, self.x0),
            self.at(plane, w, self.y0 + 1, self.x0 + 1),
        ]
    }

    fn weights(&self) -> [T; 4] {
        let (fx, fy) = (self.fx, self.fy);
        let one = T::one();
        [
            (one - fx) * (one - fy),
            fx * (one - fy),
            (one - fx) * fy,
            fx * fy,
        ]
    }

    fn sample(&self, plane: &[T], w: usize) -> T {
        let v = self.values(plane, w);
        let wt = self.weights();
        // Skip zero-weight neighbours so lattice points reproduce exactly.
        let mut acc = T::zero();
        for i in 0..4 {
            if wt[i] != T::zero() {
                acc += wt[i] * v[i];
            }
        }
        acc
    }

    fn scatter(&self, dst: &mut [T], w: usize, g: T) {
        let wt = self.weights();
        let pts = [
            (self.y0, self.x0),
            (self.y0, self.x0 + 1),
            (self.y0 + 1, self.x0),
            (self.y0 + 1, self.x0 + 1),
        ];
        for (&(y, x), &wv) in pts.iter().zip(&wt) {
            if y >= 0 && y < self.h && x >= 0 && x < self.w {
                dst[y as usize * w + x as usize] += g * wv;
            }
        }
    }

    /// Derivative of the sample with respect to pixel-space `(x, y)`.
    fn spatial_grad(&self, plane: &[T], w: usize) -> (T, T) {
        let [v00, v01, v10, v11] = self.values(plane, w);
        let one = T::one();
        let dx = (one - self.fy) * (v01 - v00) + self.fy * (v11 - v10);
        let dy = (one - self.fx) * (v10 - v00) + self.fx * (v11 - v01);
        (dx, dy)
    }
}
