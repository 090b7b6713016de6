//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`GradGraph`] records every executed operation as a backward
//! closure; [`GradGraph::backward`] replays the record in exact reverse
//! execution order, accumulating gradients additively into each
//! `requires_grad` tensor. Tensors are cheap handles (`Rc`) onto shared
//! storage; data is row-major with the last index fastest.
//!
//! A graph and its tensors are confined to one thread. Distinct graphs
//! (one per batch, per fold) share nothing and may run in parallel.

mod conv;
mod dropout;
mod elementwise;
mod linear;
mod matmul;
mod pool;
mod reduce;

use std::cell::{Ref, RefCell};
use std::marker::PhantomData;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// N-dimensional numeric array participating in a gradient graph.
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    inner: Rc<Inner<T>>,
}

struct Inner<T> {
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
}

impl<T: Scalar> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                requires_grad,
                grad: RefCell::new(None),
            }),
        }
    }

    fn checked(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
    ) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::dimension(
                op,
                format!(
                    "shape {:?} implies {} elements, data has {}",
                    shape,
                    shape.iter().product::<usize>(),
                    data.len()
                ),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        Ok(Self::build(shape, data, requires_grad))
    }

    /// Constant tensor (not tracked by autodiff).
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        Self::checked("from_vec", shape, data, false)
    }

    /// Trainable tensor: gradients accumulate here during backward.
    pub fn param(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        Self::checked("param", shape, data, true)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::build(shape, vec![T::zero(); n], false)
    }

    /// Rank-0 constant.
    pub fn scalar(v: T) -> Self {
        Self::build(vec![], vec![v], false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.data.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Borrow the underlying storage.
    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.borrow().clone()
    }

    /// The single element of a rank-0/length-1 tensor.
    pub fn item(&self) -> T {
        let d = self.inner.data.borrow();
        assert_eq!(d.len(), 1, "item() on tensor of {} elements", d.len());
        d[0]
    }

    /// Copy of the accumulated gradient, if any has been propagated.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// In-place SGD update `data -= lr * grad`. No-op when no gradient
    /// has been accumulated.
    pub fn sgd_step(&self, lr: T) {
        let grad = self.inner.grad.borrow();
        if let Some(g) = grad.as_ref() {
            let mut data = self.inner.data.borrow_mut();
            for (d, &gv) in data.iter_mut().zip(g.iter()) {
                *d = *d - lr * gv;
            }
        }
    }

    /// Overwrite the storage (used by checkpoint restore). Shape must match.
    pub fn set_data(&self, values: &[T]) -> Result<()> {
        let mut data = self.inner.data.borrow_mut();
        if data.len() != values.len() {
            return Err(Error::dimension(
                "set_data",
                format!("expected {} elements, got {}", data.len(), values.len()),
            ));
        }
        data.copy_from_slice(values);
        Ok(())
    }

    /// True when both handles point at the same storage.
    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Add `contribution` into the gradient buffer, allocating zeros on
    /// first touch.
    fn accumulate_grad(&self, f: impl FnOnce(&mut [T])) {
        let mut grad = self.inner.grad.borrow_mut();
        let buf = grad.get_or_insert_with(|| vec![T::zero(); self.inner.data.borrow().len()]);
        f(buf);
    }

    fn seed_grad_one(&self) {
        let mut grad = self.inner.grad.borrow_mut();
        let buf = grad.get_or_insert_with(|| vec![T::zero(); 1]);
        buf[0] = buf[0] + T::one();
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish_non_exhaustive()
    }
}

struct Node {
    backward: Box<dyn Fn()>,
}

/// Ordered record of executed operations for one forward pass.
///
/// Build one graph per training step; drop it afterwards. A graph in
/// inference mode skips recording entirely and produces untracked
/// outputs.
pub struct GradGraph<T: Scalar> {
    nodes: RefCell<Vec<Node>>,
    recording: bool,
    _marker: PhantomData<T>,
}

impl<T: Scalar> GradGraph<T> {
    /// Graph that records backward steps.
    pub fn recording() -> Self {
        GradGraph {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            _marker: PhantomData,
        }
    }

    /// Graph for pure inference: nothing is recorded, outputs are constants.
    pub fn inference() -> Self {
        GradGraph {
            nodes: RefCell::new(Vec::new()),
            recording: false,
            _marker: PhantomData,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// Finite-checked output tensor; tracking is on only when the graph
    /// records and some input is tracked.
    fn output(
        &self,
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        inputs_tracked: bool,
    ) -> Result<Tensor<T>> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Ok(Tensor::build(
            shape,
            data,
            self.recording && inputs_tracked,
        ))
    }

    fn push(&self, backward: impl Fn() + 'static) {
        self.nodes.borrow_mut().push(Node {
            backward: Box::new(backward),
        });
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Replays the recorded operations in exact reverse execution order.
    /// Gradients accumulate additively, so a tensor feeding several
    /// consumers receives the sum of all contributions.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<()> {
        if loss.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        if !loss.requires_grad() {
            return Err(Error::Contract(
                "loss is not connected to this graph (requires_grad is false)".into(),
            ));
        }
        loss.seed_grad_one();
        for node in self.nodes.borrow().iter().rev() {
            (node.backward)();
        }
        Ok(())
    }
}

/// Shared backward-closure helper: fetch the output gradient, bail out
/// if no gradient reached this node.
fn with_out_grad<T: Scalar>(out: &Tensor<T>, f: impl FnOnce(&[T])) {
    let grad = out.inner.grad.borrow();
    if let Some(g) = grad.as_ref() {
        f(g);
    }
}
