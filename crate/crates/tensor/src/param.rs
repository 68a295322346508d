use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::float::Float;
use crate::tensor::Tensor;
use crate::var::Var;

static NEXT_PARAM: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) u64);

/// A named model tensor. Non-trainable params hold running statistics.
#[derive(Debug, Clone)]
pub struct Param<T> {
    id: ParamId,
    value: Tensor<T>,
    trainable: bool,
}

impl<T: Float> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        Self {
            id: ParamId(NEXT_PARAM.fetch_add(1, Ordering::Relaxed)),
            value,
            trainable: true,
        }
    }

    pub fn buffer(value: Tensor<T>) -> Self {
        Self {
            trainable: false,
            ..Self::new(value)
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        &mut self.value
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    /// Replaces the value, keeping the shape.
    pub fn set(&mut self, value: Tensor<T>) {
        assert_eq!(value.shape(), self.value.shape(), "param shape change");
        self.value = value;
    }
}

/// Joins a module path component onto a parameter name.
pub fn scoped(prefix: &str, name: &str) -> String {
    if name.is_empty() {
        prefix.to_string()
    } else if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Anything owning parameters.
pub trait Module<T: Float> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| {
            if p.is_trainable() {
                n += p.value().numel();
            }
        });
        n
    }

    /// Applies buffer updates recorded by a training-mode forward pass.
    fn apply_updates(&mut self, updates: Vec<(ParamId, Tensor<T>)>) {
        if updates.is_empty() {
            return;
        }
        let mut map: HashMap<ParamId, Tensor<T>> = updates.into_iter().collect();
        self.visit_mut(&mut |_, p| {
            if let Some(v) = map.remove(&p.id()) {
                p.set(v);
            }
        });
    }
}

impl<T: Float> Module<T> for Param<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("", self)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("", self)
    }
}

impl<T: Float, M: Module<T>> Module<T> for Vec<M> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, m) in self.iter().enumerate() {
            let prefix = i.to_string();
            m.visit(&mut |n, p| f(&scoped(&prefix, n), p));
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, m) in self.iter_mut().enumerate() {
            let prefix = i.to_string();
            m.visit_mut(&mut |n, p| f(&scoped(&prefix, n), p));
        }
    }
}

impl<T: Float, M: Module<T>> Module<T> for Option<M> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        if let Some(m) = self {
            m.visit(f)
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        if let Some(m) = self {
            m.visit_mut(f)
        }
    }
}

/// Implements [`Module`] for a struct generic over its float type by
/// visiting the listed fields in order.
#[macro_export]
macro_rules! impl_module {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl<T: $crate::Float> $crate::Module<T> for $ty<T> {
            fn visit(&self, f: &mut dyn FnMut(&str, &$crate::Param<T>)) {
                $(
                    $crate::Module::visit(&self.$field, &mut |n: &str, p: &$crate::Param<T>| {
                        f(&$crate::scoped(stringify!($field), n), p)
                    });
                )*
            }
            fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut $crate::Param<T>)) {
                $(
                    $crate::Module::visit_mut(&mut self.$field, &mut |n: &str, p: &mut $crate::Param<T>| {
                        f(&$crate::scoped(stringify!($field), n), p)
                    });
                )*
            }
        }
    };
}

/// Per-forward-pass state: train/eval mode, whether to record gradients,
/// dropout randomness, and pending buffer updates.
pub struct Ctx<T: Float> {
    train: bool,
    grad: bool,
    rng: ChaCha8Rng,
    updates: Vec<(ParamId, Tensor<T>)>,
}

impl<T: Float> Ctx<T> {
    pub fn train(seed: u64) -> Self {
        Self {
            train: true,
            grad: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            updates: Vec::new(),
        }
    }

    /// Inference: running statistics, no dropout, no gradient tracking.
    pub fn eval() -> Self {
        Self {
            train: false,
            grad: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            updates: Vec::new(),
        }
    }

    /// Eval-mode layers, but parameters still track gradients.
    pub fn eval_with_grad() -> Self {
        Self {
            grad: true,
            ..Self::eval()
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn param(&self, p: &Param<T>) -> Var<T> {
        if self.grad && p.is_trainable() {
            Var::param_leaf(p.value().clone(), p.id())
        } else {
            Var::constant(p.value().clone())
        }
    }

    pub fn push_update(&mut self, id: ParamId, value: Tensor<T>) {
        self.updates.push((id, value));
    }

    pub fn take_updates(&mut self) -> Vec<(ParamId, Tensor<T>)> {
        std::mem::take(&mut self.updates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Pair<T> {
        a: Param<T>,
        b: Vec<Param<T>>,
    }
    impl_module!(Pair { a, b });

    #[test]
    fn names_are_dotted_paths() {
        let m = Pair::<f32> {
            a: Param::new(Tensor::zeros(&[2])),
            b: vec![
                Param::new(Tensor::zeros(&[1])),
                Param::buffer(Tensor::zeros(&[3])),
            ],
        };
        let mut names = Vec::new();
        m.visit(&mut |n, _| names.push(n.to_string()));
        assert_eq!(names, vec!["a", "b.0", "b.1"]);
        assert_eq!(m.num_params(), 3);
    }
}
