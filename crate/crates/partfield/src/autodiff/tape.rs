//! Reverse-mode differentiation over a linear operation tape.
//!
//! A [`Tape`] records every primitive as it executes. Each node stores its
//! output tensor, the ids of its parents, and a closure that maps the
//! upstream gradient to parent-gradient contributions. A single reverse
//! traversal from a scalar loss populates gradients for every
//! gradient-requiring leaf.
//!
//! Tapes are intentionally not `Send`: one tape per thread. Parameters live
//! outside the tape (see [`crate::nn::ParamStore`]) and are injected as
//! leaves at the start of each forward pass.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use super::tensor::Tensor;

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) parents: Vec<usize>,
    pub(crate) backward: Option<BackFn>,
    /// Gradients must flow through this node.
    pub(crate) needs_grad: bool,
    /// Final gradient is kept for the caller (leaves created with `requires_grad`).
    pub(crate) retain: bool,
}

/// Maps the upstream gradient of a node to contributions on its parents.
pub(crate) type BackFn = Box<dyn Fn(&BackCtx<'_>, &Tensor, &mut GradSink<'_>)>;

/// Read access to recorded node values during the reverse sweep.
pub(crate) struct BackCtx<'a> {
    nodes: &'a [Node],
    out_id: usize,
}

impl<'a> BackCtx<'a> {
    pub(crate) fn value(&self, id: usize) -> &Tensor {
        &self.nodes[id].value
    }

    /// Value of the node whose backward is currently running.
    pub(crate) fn output(&self) -> &Tensor {
        &self.nodes[self.out_id].value
    }
}

/// Accumulates gradient contributions per node id.
pub(crate) struct GradSink<'a> {
    grads: &'a mut [Option<Tensor>],
    nodes: &'a [Node],
}

impl<'a> GradSink<'a> {
    /// Add `g` to the gradient slot of node `id`. Contributions to nodes
    /// that do not need gradients are dropped.
    pub(crate) fn add(&mut self, id: usize, g: Tensor) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut self.grads[id] {
            Some(acc) => {
                debug_assert_eq!(acc.shape(), g.shape(), "gradient shape drift on node {id}");
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}

struct TapeInner {
    nodes: RefCell<Vec<Node>>,
    grad_enabled: bool,
}

/// A recording of primitive operations supporting one reverse sweep.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<TapeInner>,
}

impl Tape {
    /// A tape that records gradients.
    pub fn new() -> Self {
        Tape { inner: Rc::new(TapeInner { nodes: RefCell::new(Vec::new()), grad_enabled: true }) }
    }

    /// A tape for inference: values are computed, no backward closures are kept.
    pub fn no_grad() -> Self {
        Tape { inner: Rc::new(TapeInner { nodes: RefCell::new(Vec::new()), grad_enabled: false }) }
    }

    pub fn grad_enabled(&self) -> bool {
        self.inner.grad_enabled
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Create a leaf. When `requires_grad` is set (and the tape records
    /// gradients), the leaf's gradient is retained by [`Tape::backward`].
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let rg = requires_grad && self.inner.grad_enabled;
        self.push(value, Vec::new(), None, rg, rg)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, false, false)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub(crate) fn push(
        &self,
        value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackFn>,
        needs_grad: bool,
        retain: bool,
    ) -> Var {
        let shape = value.shape().to_vec();
        let mut nodes = self.inner.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value, parents, backward, needs_grad, retain });
        Var { tape: self.clone(), id, shape }
    }

    pub(crate) fn with_values<R>(&self, ids: &[usize], f: impl FnOnce(&[&Tensor]) -> R) -> R {
        let nodes = self.inner.nodes.borrow();
        let vals: Vec<&Tensor> = ids.iter().map(|&i| &nodes[i].value).collect();
        f(&vals)
    }

    /// Reverse sweep from a scalar loss. Returns the retained gradients.
    ///
    /// Panics if `loss` is not a single-element tensor.
    pub fn backward(&self, loss: &Var) -> Gradients {
        assert!(
            Rc::ptr_eq(&self.inner, &loss.tape.inner),
            "backward: loss recorded on a different tape"
        );
        assert!(
            self.inner.grad_enabled,
            "backward: tape was created with no_grad"
        );
        let nodes = self.inner.nodes.borrow();
        assert_eq!(
            nodes[loss.id].value.numel(),
            1,
            "backward: loss must be scalar, got shape {:?}",
            nodes[loss.id].value.shape()
        );

        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        let mut retained: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::filled(nodes[loss.id].value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Some(back) = &node.backward {
                let ctx = BackCtx { nodes: &nodes, out_id: id };
                let mut sink = GradSink { grads: &mut grads, nodes: &nodes };
                back(&ctx, &g, &mut sink);
            }
            if node.retain {
                retained[id] = Some(g);
            }
        }
        Gradients { by_id: retained }
    }

    /// Value of a recorded node, cloned out of the tape.
    pub(crate) fn value_of(&self, id: usize) -> Tensor {
        self.inner.nodes.borrow()[id].value.clone()
    }

    pub(crate) fn value_ref(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.inner.nodes.borrow(), |n| &n[id].value)
    }

    pub(crate) fn needs_grad_of(&self, id: usize) -> bool {
        self.inner.nodes.borrow()[id].needs_grad
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// A value recorded on a [`Tape`].
#[derive(Clone)]
pub struct Var {
    pub(crate) tape: Tape,
    pub(crate) id: usize,
    pub(crate) shape: Vec<usize>,
}

impl Var {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Clone of the value held on the tape.
    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    /// Borrow of the value held on the tape. Do not hold across further ops.
    pub fn value_ref(&self) -> Ref<'_, Tensor> {
        self.tape.value_ref(self.id)
    }

    pub fn item(&self) -> f64 {
        self.value_ref().item()
    }

    /// True when gradients flow through this node.
    pub fn needs_grad(&self) -> bool {
        self.tape.needs_grad_of(self.id)
    }

    /// Cut the graph: same value, no parents, no gradient flow.
    pub fn detach(&self) -> Var {
        self.tape.constant(self.value())
    }
}

/// Gradients retained by [`Tape::backward`].
pub struct Gradients {
    by_id: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<&Tensor> {
        self.by_id.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: &Var) -> Option<Tensor> {
        self.by_id.get_mut(var.id).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_roundtrip() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[3], vec![1.0, 2.0, 3.0]), true);
        assert_eq!(x.shape(), &[3]);
        assert_eq!(x.value().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    #[should_panic(expected = "loss must be scalar")]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[2], vec![1.0, 2.0]), true);
        let _ = tape.backward(&x);
    }

    #[test]
    fn no_grad_tape_records_values_only() {
        let tape = Tape::no_grad();
        let x = tape.leaf(Tensor::scalar(2.0), true);
        assert!(!x.needs_grad());
    }
}
