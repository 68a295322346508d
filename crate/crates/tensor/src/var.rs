//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation on a [`Var`] produces a new node holding its value and,
//! when any input requires a gradient, a closure mapping the output gradient
//! to input gradients. Node ids increase monotonically, so sorting reachable
//! nodes by descending id yields a valid reverse topological order.

use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::float::Float;
use crate::param::ParamId;
use crate::tensor::Tensor;

static NEXT_NODE: AtomicU64 = AtomicU64::new(1);

pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[Var<T>]) -> Vec<Option<Tensor<T>>>>;

pub(crate) struct Node<T: Float> {
    id: u64,
    value: Tensor<T>,
    requires_grad: bool,
    param: Option<ParamId>,
    parents: Vec<Var<T>>,
    backward: Option<BackwardFn<T>>,
}

impl<T: Float> Drop for Node<T> {
    // Long chains (recurrent unrolls) would otherwise drop recursively.
    fn drop(&mut self) {
        let mut stack: Vec<Var<T>> = std::mem::take(&mut self.parents);
        while let Some(v) = stack.pop() {
            if let Ok(mut node) = Rc::try_unwrap(v.0) {
                stack.append(&mut node.parents);
            }
        }
    }
}

/// A node in the differentiation graph.
#[derive(Clone)]
pub struct Var<T: Float>(Rc<Node<T>>);

impl<T: Float> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<T: Float> Var<T> {
    fn make(
        value: Tensor<T>,
        requires_grad: bool,
        param: Option<ParamId>,
        parents: Vec<Var<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Self {
        Var(Rc::new(Node {
            id: NEXT_NODE.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            param,
            parents,
            backward,
        }))
    }

    /// A value that never receives a gradient.
    pub fn constant(value: Tensor<T>) -> Self {
        Self::make(value, false, None, Vec::new(), None)
    }

    /// A leaf whose gradient is collected by [`Var::backward`].
    pub fn leaf(value: Tensor<T>) -> Self {
        Self::make(value, true, None, Vec::new(), None)
    }

    pub(crate) fn param_leaf(value: Tensor<T>, id: ParamId) -> Self {
        Self::make(value, true, Some(id), Vec::new(), None)
    }

    /// Records an operation result. Parents and the backward closure are
    /// dropped immediately when no parent requires a gradient.
    pub(crate) fn from_op(value: Tensor<T>, parents: Vec<Var<T>>, backward: BackwardFn<T>) -> Self {
        if parents.iter().any(|p| p.requires_grad()) {
            Self::make(value, true, None, parents, Some(backward))
        } else {
            Self::constant(value)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0.value.dim(axis)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }

    /// Backpropagates from a single-element output.
    pub fn backward(&self) -> Grads<T> {
        assert_eq!(
            self.value().numel(),
            1,
            "backward() needs a scalar output, got {:?}",
            self.shape()
        );
        self.backward_with(Tensor::ones(self.shape()))
    }

    pub fn backward_with(&self, seed: Tensor<T>) -> Grads<T> {
        assert_eq!(seed.shape(), self.shape(), "seed gradient shape mismatch");
        let mut grads = Grads::default();
        if !self.requires_grad() {
            return grads;
        }
        // Collect reachable nodes that take part in differentiation.
        let mut order: Vec<Var<T>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if !seen.insert(v.id()) {
                continue;
            }
            for p in &v.0.parents {
                if p.requires_grad() && !seen.contains(&p.id()) {
                    stack.push(p.clone());
                }
            }
            order.push(v);
        }
        order.sort_by_key(|v| std::cmp::Reverse(v.id()));

        let mut pending: HashMap<u64, Tensor<T>> = HashMap::new();
        pending.insert(self.id(), seed);
        for node in &order {
            let Some(g) = pending.remove(&node.id()) else {
                continue;
            };
            match &node.0.backward {
                Some(back) => {
                    let parent_grads = back(&g, &node.0.parents);
                    debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                    for (p, pg) in node.0.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        assert_eq!(
                            pg.shape(),
                            p.shape(),
                            "backward produced gradient of wrong shape"
                        );
                        accumulate(&mut pending, p.id(), pg);
                    }
                }
                None => {
                    if let Some(pid) = node.0.param {
                        accumulate(&mut grads.params, pid.0, g.clone());
                    }
                    accumulate(&mut grads.leaves, node.id(), g);
                }
            }
        }
        grads
    }
}

fn accumulate<T: Float>(map: &mut HashMap<u64, Tensor<T>>, key: u64, g: Tensor<T>) {
    match map.get_mut(&key) {
        Some(acc) => acc.add_assign(&g),
        None => {
            map.insert(key, g);
        }
    }
}

/// Gradients of leaves and parameters after a backward pass.
#[derive(Debug)]
pub struct Grads<T: Float> {
    leaves: HashMap<u64, Tensor<T>>,
    params: HashMap<u64, Tensor<T>>,
}

impl<T: Float> Default for Grads<T> {
    fn default() -> Self {
        Self {
            leaves: HashMap::new(),
            params: HashMap::new(),
        }
    }
}

impl<T: Float> Grads<T> {
    /// Gradient for a leaf created with [`Var::leaf`]; zeros if unreached.
    pub fn wrt(&self, v: &Var<T>) -> Tensor<T> {
        self.leaves
            .get(&v.id())
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(v.shape()))
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id.0)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_chain_drops_without_overflow() {
        let mut v = Var::<f32>::leaf(Tensor::ones(&[1]));
        for _ in 0..200_000 {
            v = v.mul_scalar(1.0);
        }
        let g = v.backward();
        assert_eq!(g.param_count(), 0);
        drop(v);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let x = Var::<f64>::leaf(Tensor::from_f64(&[1], &[3.0]));
        let y = x.mul(&x).add(&x); // x^2 + x
        let g = y.sum().backward();
        assert_eq!(g.wrt(&x).to_f64_vec(), vec![7.0]);
    }

    #[test]
    fn constants_do_not_track() {
        let a = Var::<f32>::constant(Tensor::ones(&[2]));
        let b = a.mul_scalar(2.0);
        assert!(!b.requires_grad());
        assert_eq!(b.backward_with(Tensor::ones(&[2])).param_count(), 0);
    }
}
