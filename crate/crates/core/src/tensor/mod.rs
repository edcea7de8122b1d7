//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted node in a computation
//! graph. Operations on tensors that require gradients record a backward
//! closure and their parents; [`Tensor::backward`] walks the graph in
//! reverse topological order and accumulates gradients into the leaves.
//!
//! There is no implicit broadcasting. Binary ops accept operands of equal
//! shape, or a single-element operand (a scalar). Row-vector broadcasting is
//! only available through the explicit `*_row` ops.
//!
//! All reductions run sequentially in row-major order, so identical inputs
//! and op sequences give bitwise-identical values and gradients.

mod element;
pub(crate) mod kernels;
mod ops;
mod store;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

pub use element::Element;
pub(crate) use element::c;
pub use store::{prefix_matches, NamedParamStore};

use crate::error::{Error, Result};

type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>>>;

/// Arguments handed to a recorded backward closure.
pub(crate) struct BackwardCtx<'a, T: Element> {
    pub grad: &'a [T],
    pub out: &'a [T],
    pub parents: &'a [Tensor<T>],
}

impl<T: Element> BackwardCtx<'_, T> {
    pub fn needs(&self, i: usize) -> bool {
        self.parents[i].requires_grad()
    }
}

struct Node<T: Element> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

pub struct Tensor<T: Element>(Rc<Node<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<T> = self.0.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &preview)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn leaf(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        if numel(&shape) != data.len() {
            return Err(Error::invalid(
                "tensor",
                format!("shape {shape:?} needs {} values, got {}", numel(&shape), data.len()),
            ));
        }
        Ok(Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
        })))
    }

    /// Constant (non-differentiable) tensor.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::leaf(shape.to_vec(), data, false)
    }

    /// Trainable leaf.
    pub fn parameter(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::leaf(shape.to_vec(), data, true)
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| c(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::leaf(shape.to_vec(), vec![value; numel(shape)], false)
            .expect("full: valid shape")
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(vec![1], vec![value], false).expect("scalar")
    }

    /// Result of an op. Records the graph edge only when some parent
    /// requires a gradient.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let (parents, backward) = if requires_grad {
            (parents, Some(backward))
        } else {
            (Vec::new(), None)
        };
        Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents,
            backward,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    /// Same values, no graph history, no gradient tracking.
    pub fn detach(&self) -> Self {
        if !self.requires_grad() && self.is_leaf() {
            return self.clone();
        }
        Self::leaf(self.0.shape.clone(), self.0.data.clone(), false).expect("detach")
    }

    /// Fresh leaf holding a copy of the values, with the given tracking flag.
    pub fn to_leaf(&self, requires_grad: bool) -> Self {
        Self::leaf(self.0.shape.clone(), self.0.data.clone(), requires_grad).expect("to_leaf")
    }

    /// Accumulated gradient, if any.
    pub fn grad(&self) -> Option<Tensor<T>> {
        self.0
            .grad
            .borrow()
            .as_ref()
            .map(|g| Tensor::from_vec(&self.0.shape, g.clone()).expect("grad shape"))
    }

    pub fn grad_vec(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub fn same_node(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Reverse-mode sweep from this scalar. Gradients of every reachable
    /// leaf that requires a gradient are accumulated additively.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut pending: HashMap<*const Node<T>, Vec<T>> = HashMap::new();
        pending.insert(Rc::as_ptr(&self.0), vec![T::one()]);

        for t in order.iter().rev() {
            let key = Rc::as_ptr(&t.0);
            let Some(grad) = pending.remove(&key) else {
                continue;
            };
            match &t.0.backward {
                None => {
                    let mut slot = t.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => kernels::add_assign(acc, &grad),
                        None => *slot = Some(grad),
                    }
                }
                Some(f) => {
                    let ctx = BackwardCtx {
                        grad: &grad,
                        out: &t.0.data,
                        parents: &t.0.parents,
                    };
                    let parent_grads = f(&ctx);
                    debug_assert_eq!(parent_grads.len(), t.0.parents.len());
                    for (p, g) in t.0.parents.iter().zip(parent_grads) {
                        let Some(g) = g else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), p.numel());
                        let pk = Rc::as_ptr(&p.0);
                        match pending.get_mut(&pk) {
                            Some(acc) => kernels::add_assign(acc, &g),
                            None => {
                                pending.insert(pk, g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes requiring gradients, parents before children.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited: std::collections::HashSet<*const Node<T>> = Default::default();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(Rc::as_ptr(&self.0));
        while let Some((node, next)) = stack.pop() {
            if next < node.0.parents.len() {
                let child = node.0.parents[next].clone();
                stack.push((node, next + 1));
                if child.requires_grad() && visited.insert(Rc::as_ptr(&child.0)) {
                    stack.push((child, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }
}
