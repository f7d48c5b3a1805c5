//! Differentiable operations. Each operation computes its forward values
//! eagerly and, when any operand lives on a tape, records a node whose
//! closure scatters the output gradient back into the operands.

mod binary;
mod conv;
mod reduce;
mod sample;
mod scan;
mod structural;
mod unary;

pub use sample::{identity_grid, upsample_bilinear};
pub use structural::concat;
pub use unary::Activation;

use std::rc::Rc;

use super::tape::Node;
use super::{merged_tape, Element, Tensor, TensorInner};
use crate::error::Result;

/// Builds the output tensor for an op and records its backward closure when a
/// tape is live. `make_backward` receives the output's storage so the closure
/// can read the upstream gradient.
pub(crate) fn finish_op<E: Element>(
    name: &'static str,
    inputs: &[&Tensor<E>],
    shape: Vec<usize>,
    values: Vec<E>,
    make_backward: impl FnOnce(Rc<TensorInner<E>>) -> Box<dyn Fn()>,
) -> Result<Tensor<E>> {
    let tape = merged_tape(inputs)?;
    let out = Tensor::make(
        shape,
        values,
        false,
        tape.as_ref().map(|t| t.downgrade()),
    );
    if let Some(tape) = tape {
        let run = make_backward(Rc::clone(&out.inner));
        tape.push(Node {
            name,
            output: Rc::clone(&out.inner),
            run,
        });
    }
    Ok(out)
}

/// Borrows the upstream gradient of `out`, if the node participates in the
/// loss. The guard must be dropped before accumulating into an operand that
/// could alias `out` (operands never do: outputs are always fresh tensors).
pub(crate) fn upstream<E: Element>(
    out: &TensorInner<E>,
) -> Option<std::cell::Ref<'_, Vec<E>>> {
    std::cell::Ref::filter_map(out.grad.borrow(), |g| g.as_ref()).ok()
}

// ── Broadcasting ─────────────────────────────────────────────────────

/// Strides of `shape` aligned to the tail of `out_shape`, with 0 for
/// broadcast dimensions.
pub(crate) fn aligned_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - shape.len();
    let mut contiguous = vec![0usize; shape.len()];
    let mut acc = 1usize;
    for (i, &d) in shape.iter().enumerate().rev() {
        contiguous[i] = acc;
        acc *= d;
    }
    let mut strides = vec![0usize; rank];
    for i in 0..shape.len() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { contiguous[i] };
    }
    strides
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return None;
        }
    }
    Some(out)
}

/// Walks every position of `out_shape` in row-major order, handing the
/// callback the flat offsets into two aligned operands.
pub(crate) fn for_each_broadcast(
    out_shape: &[usize],
    a_strides: &[usize],
    b_strides: &[usize],
    mut body: impl FnMut(usize, usize, usize),
) {
    let rank = out_shape.len();
    let n: usize = out_shape.iter().product();
    if rank == 0 {
        if n == 1 {
            body(0, 0, 0);
        }
        return;
    }
    let mut coords = vec![0usize; rank];
    let mut ai = 0usize;
    let mut bi = 0usize;
    for idx in 0..n {
        body(idx, ai, bi);
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            ai += a_strides[ax];
            bi += b_strides[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            ai -= a_strides[ax] * out_shape[ax];
            bi -= b_strides[ax] * out_shape[ax];
        }
    }
}
