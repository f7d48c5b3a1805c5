//! The Wengert tape: an ordered record of executed operations.

use std::cell::RefCell;
use std::rc::{Rc, Weak};

use super::{Element, Tensor, TensorInner};
use crate::error::{Error, Result};

pub(crate) struct Node<E: Element> {
    pub(crate) name: &'static str,
    pub(crate) output: Rc<TensorInner<E>>,
    /// Reads the output gradient and scatters contributions into the inputs.
    pub(crate) run: Box<dyn Fn()>,
}

pub(crate) struct TapeState<E: Element> {
    pub(crate) nodes: Vec<Node<E>>,
    pub(crate) consumed: bool,
}

/// Handle to a recording tape. Cloning shares the same tape; a tape is
/// confined to one logical execution context and is consumed by
/// [`Tape::backward`].
pub struct Tape<E: Element = f64> {
    state: Rc<RefCell<TapeState<E>>>,
}

impl<E: Element> Clone for Tape<E> {
    fn clone(&self) -> Self {
        Tape {
            state: Rc::clone(&self.state),
        }
    }
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) struct WeakTape<E: Element> {
    state: Weak<RefCell<TapeState<E>>>,
}

impl<E: Element> Clone for WeakTape<E> {
    fn clone(&self) -> Self {
        WeakTape {
            state: Weak::clone(&self.state),
        }
    }
}

impl<E: Element> WeakTape<E> {
    pub(crate) fn upgrade(&self) -> Option<Tape<E>> {
        self.state.upgrade().map(|state| Tape { state })
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Tape {
            state: Rc::new(RefCell::new(TapeState {
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    pub(crate) fn downgrade(&self) -> WeakTape<E> {
        WeakTape {
            state: Rc::downgrade(&self.state),
        }
    }

    pub(crate) fn same_tape(&self, other: &Tape<E>) -> bool {
        Rc::ptr_eq(&self.state, &other.state)
    }

    pub(crate) fn push(&self, node: Node<E>) {
        let mut st = self.state.borrow_mut();
        debug_assert!(!st.consumed, "recording on a consumed tape");
        st.nodes.push(node);
    }

    pub fn num_nodes(&self) -> usize {
        self.state.borrow().nodes.len()
    }

    /// First recorded operation whose output contains a NaN or infinity,
    /// reported as (node index, operation name).
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        let st = self.state.borrow();
        for (i, node) in st.nodes.iter().enumerate() {
            if node.output.values.iter().any(|v| !v.is_finite()) {
                return Some((i, node.name));
            }
        }
        None
    }

    /// Reverse sweep from a scalar loss. Visits every node exactly once, in
    /// reverse recording order, then clears the tape; calling backward again
    /// without re-recording is a contract error.
    pub fn backward(&self, loss: &Tensor<E>) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        match loss.tape_handle() {
            Some(t) if t.same_tape(self) => {}
            _ => {
                return Err(Error::contract(
                    "loss tensor was not recorded on this tape",
                ))
            }
        }
        {
            let st = self.state.borrow();
            if st.consumed {
                return Err(Error::contract(
                    "backward called twice on the same tape",
                ));
            }
        }
        self.state.borrow_mut().consumed = true;
        loss.inner.grad.replace(Some(vec![E::ONE]));

        // Nodes are appended in execution order, which is a topological order
        // of the data-flow graph, so one reverse sweep suffices.
        let nodes = {
            let mut st = self.state.borrow_mut();
            std::mem::take(&mut st.nodes)
        };
        for node in nodes.iter().rev() {
            (node.run)();
        }
        // Dropping the nodes releases the intermediate tensors.
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_twice_is_error() {
        let tape = Tape::<f64>::new();
        let x = Tensor::leaf(&tape, &[3], vec![1.0, 2.0, 3.0], true).unwrap();
        let loss = x.sum_all().unwrap();
        tape.backward(&loss).unwrap();
        let err = tape.backward(&loss).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::<f64>::new();
        let x = Tensor::leaf(&tape, &[3], vec![1.0, 2.0, 3.0], true).unwrap();
        let y = x.mul_scalar(2.0).unwrap();
        assert!(matches!(
            tape.backward(&y).unwrap_err(),
            Error::Contract(_)
        ));
    }

    #[test]
    fn sum_backward_is_ones() {
        let tape = Tape::<f64>::new();
        let x = Tensor::leaf(&tape, &[4], vec![1.0, -2.0, 3.0, 0.5], true).unwrap();
        let loss = x.sum_all().unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn node_order_is_topological() {
        // Every recorded node's output id is larger than its inputs' ids
        // because outputs are created after inputs; spot-check via a chain.
        let tape = Tape::<f64>::new();
        let x = Tensor::leaf(&tape, &[2], vec![1.0, 2.0], true).unwrap();
        let y = x.mul_scalar(3.0).unwrap();
        let z = y.add(&x).unwrap();
        let loss = z.sum_all().unwrap();
        assert_eq!(tape.num_nodes(), 3);
        tape.backward(&loss).unwrap();
        // d(3x + x)/dx = 4
        assert_eq!(x.grad().unwrap(), vec![4.0, 4.0]);
    }
}
