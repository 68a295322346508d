use crate::float::Float;
use crate::tensor::Tensor;
use crate::var::Var;

impl<T: Float> Var<T> {
    /// Elementwise op with derivative `df(x, y)` where `y = f(x)`.
    fn unary(&self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var<T> {
        let out = self.value().map(f);
        let saved = out.clone();
        Var::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].value();
                let data: Vec<T> = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(saved.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(Tensor::from_vec(g.shape(), data))]
            }),
        )
    }

    pub fn add(&self, other: &Var<T>) -> Var<T> {
        assert_eq!(self.shape(), other.shape(), "add shape mismatch");
        Var::from_op(
            self.value().add(other.value()),
            vec![self.clone(), other.clone()],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())]),
        )
    }

    pub fn sub(&self, other: &Var<T>) -> Var<T> {
        assert_eq!(self.shape(), other.shape(), "sub shape mismatch");
        Var::from_op(
            self.value().sub(other.value()),
            vec![self.clone(), other.clone()],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        )
    }

    pub fn mul(&self, other: &Var<T>) -> Var<T> {
        assert_eq!(self.shape(), other.shape(), "mul shape mismatch");
        Var::from_op(
            self.value().mul(other.value()),
            vec![self.clone(), other.clone()],
            Box::new(|g, p| {
                let ga = p[0].requires_grad().then(|| g.mul(p[1].value()));
                let gb = p[1].requires_grad().then(|| g.mul(p[0].value()));
                vec![ga, gb]
            }),
        )
    }

    pub fn div(&self, other: &Var<T>) -> Var<T> {
        assert_eq!(self.shape(), other.shape(), "div shape mismatch");
        Var::from_op(
            self.value().zip_map(other.value(), |a, b| a / b),
            vec![self.clone(), other.clone()],
            Box::new(|g, p| {
                let (a, b) = (p[0].value(), p[1].value());
                let ga = p[0].requires_grad().then(|| g.zip_map(b, |g, b| g / b));
                let gb = p[1].requires_grad().then(|| {
                    let ab = a.zip_map(b, |a, b| -a / (b * b));
                    g.mul(&ab)
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn mul_const(&self, c: &Tensor<T>) -> Var<T> {
        self.mul(&Var::constant(c.clone()))
    }

    pub fn add_scalar(&self, s: T) -> Var<T> {
        self.unary(move |v| v + s, |_, _| T::one())
    }

    pub fn mul_scalar(&self, s: T) -> Var<T> {
        self.unary(move |v| v * s, move |_, _| s)
    }

    pub fn neg(&self) -> Var<T> {
        self.mul_scalar(-T::one())
    }

    /// `s - x`.
    pub fn rsub_scalar(&self, s: T) -> Var<T> {
        self.unary(move |v| s - v, |_, _| -T::one())
    }

    pub fn relu(&self) -> Var<T> {
        self.unary(
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self) -> Var<T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(&self) -> Var<T> {
        self.unary(|v| v.tanh(), |_, y| T::one() - y * y)
    }

    pub fn exp(&self) -> Var<T> {
        self.unary(|v| v.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Var<T> {
        self.unary(|v| v.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt(&self) -> Var<T> {
        self.unary(|v| v.sqrt(), |_, y| T::of(0.5) / y)
    }

    /// Absolute value with subgradient 0 at 0.
    pub fn abs(&self) -> Var<T> {
        self.unary(|v| v.abs(), |x, _| sign(x))
    }

    /// Clamp into `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&self, lo: T, hi: T) -> Var<T> {
        self.unary(
            move |v| v.max(lo).min(hi),
            move |x, _| {
                if x > lo && x < hi {
                    T::one()
                } else {
                    T::zero()
                }
            },
        )
    }
}

pub fn sigmoid<T: Float>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn sign<T: Float>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
