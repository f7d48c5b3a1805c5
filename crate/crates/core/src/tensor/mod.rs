//! Dense tensors with a reverse-mode differentiation tape.
//!
//! Tensors are immutable value buffers; recording is define-by-run. Creating a
//! leaf on a [`Tape`] and composing operations builds the tape as a side
//! effect; [`Tape::backward`] replays it once in reverse and populates `grad`
//! buffers on every participating tensor. A tape is consumed by backward and
//! must be rebuilt for the next step.
//!
//! The canonical image layout is `[batch, channels, height, width]`, but the
//! engine itself is rank-agnostic. Elementwise binary operations broadcast
//! with trailing-dimension alignment (an extent must match or be 1).

mod element;
pub mod gradcheck;
mod ops;
mod tape;

pub use element::Element;
pub use gradcheck::finite_diff_check;
pub use ops::{concat, identity_grid, upsample_bilinear, Activation};
pub use tape::Tape;

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

pub(crate) struct TensorInner<E: Element> {
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Vec<E>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<E>>>,
    pub(crate) tape: Option<tape::WeakTape<E>>,
}

impl<E: Element> TensorInner<E> {
    /// Whether backward needs a gradient for this tensor: either it is a
    /// recorded intermediate / leaf, or it explicitly asked for one.
    /// Detached constants (probes, coordinate grids) are skipped.
    pub(crate) fn needs_grad(&self) -> bool {
        self.requires_grad || self.tape.is_some()
    }

    /// Adds a gradient contribution; the buffer is moved in on first touch.
    pub(crate) fn accumulate(&self, contribution: Vec<E>) {
        let mut slot = self.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(&contribution) {
                    *gi += *ci;
                }
            }
            None => *slot = Some(contribution),
        }
    }
}

/// A dense n-dimensional array, cheaply cloneable (shared buffer).
pub struct Tensor<E: Element = f64> {
    pub(crate) inner: Rc<TensorInner<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::dim(format!("zero-extent dimension in {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<E: Element> Tensor<E> {
    pub(crate) fn make(
        shape: Vec<usize>,
        values: Vec<E>,
        requires_grad: bool,
        tape: Option<tape::WeakTape<E>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor {
            inner: Rc::new(TensorInner {
                shape,
                values,
                requires_grad,
                grad: RefCell::new(None),
                tape,
            }),
        }
    }

    /// Constant tensor, not attached to any tape.
    pub fn from_vec(shape: &[usize], values: Vec<E>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != values.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} wants {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self::make(shape.to_vec(), values, false, None))
    }

    pub fn from_f64_slice(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| E::from_f64(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self::make(shape.to_vec(), vec![E::ZERO; n], false, None)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self::make(shape.to_vec(), vec![E::from_f64(value); n], false, None)
    }

    /// Rank-0 scalar.
    pub fn scalar(value: f64) -> Self {
        Self::make(vec![], vec![E::from_f64(value)], false, None)
    }

    /// Leaf registered on a tape. Gradients are collected for it if
    /// `requires_grad` is set.
    pub fn leaf(tape: &Tape<E>, shape: &[usize], values: Vec<E>, requires_grad: bool) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != values.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} wants {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self::make(
            shape.to_vec(),
            values,
            requires_grad,
            Some(tape.downgrade()),
        ))
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.values.len()
    }

    pub fn values(&self) -> &[E] {
        &self.inner.values
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Gradient buffer populated by the last backward pass, if any.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.grad.borrow().clone()
    }

    /// Value of a rank-0 / single-element tensor.
    pub fn item(&self) -> Result<E> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.values[0])
    }

    /// Copy of this tensor detached from any tape.
    pub fn detach(&self) -> Self {
        Self::make(
            self.inner.shape.clone(),
            self.inner.values.clone(),
            false,
            None,
        )
    }

    pub fn all_finite(&self) -> bool {
        self.inner.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn tape_handle(&self) -> Option<Tape<E>> {
        self.inner.tape.as_ref().map(|w| {
            w.upgrade()
                .expect("tensor used after its tape was dropped")
        })
    }

    /// Dimensions of a `[N, C, H, W]` tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape() {
            [n, c, h, w] => Ok((*n, *c, *h, *w)),
            s => Err(Error::dim(format!("expected rank-4 tensor, got {s:?}"))),
        }
    }
}

/// Resolves the tape shared by a set of operands, if any. Mixing two live
/// tapes in one operation is a contract violation.
pub(crate) fn merged_tape<E: Element>(operands: &[&Tensor<E>]) -> Result<Option<Tape<E>>> {
    let mut found: Option<Tape<E>> = None;
    for t in operands {
        if let Some(tape) = t.tape_handle() {
            match &found {
                None => found = Some(tape),
                Some(existing) => {
                    if !existing.same_tape(&tape) {
                        return Err(Error::contract(
                            "operands belong to two different live tapes",
                        ));
                    }
                }
            }
        }
    }
    Ok(found)
}
