//! Reductions with uniform-weight backward rules.

use std::rc::Rc;

use super::{finish_op, upstream};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy)]
enum ReduceKind {
    Sum,
    Mean,
}

fn reduce<E: Element>(
    kind: ReduceKind,
    x: &Tensor<E>,
    axes: &[usize],
    keepdims: bool,
) -> Result<Tensor<E>> {
    let shape = x.shape().to_vec();
    let rank = shape.len();
    let mut reduced = vec![false; rank];
    for &ax in axes {
        if ax >= rank {
            return Err(Error::dim(format!("reduce axis {ax} out of rank {rank}")));
        }
        if reduced[ax] {
            return Err(Error::dim(format!("duplicate reduce axis {ax}")));
        }
        reduced[ax] = true;
    }
    let count: usize = axes.iter().map(|&ax| shape[ax]).product();
    if count == 0 {
        return Err(Error::domain("reduction over an empty extent"));
    }

    // Output strides aligned to the input: reduced axes contribute 0.
    let kept_shape: Vec<usize> = (0..rank)
        .map(|ax| if reduced[ax] { 1 } else { shape[ax] })
        .collect();
    let out_shape: Vec<usize> = if keepdims {
        kept_shape.clone()
    } else {
        (0..rank).filter(|&ax| !reduced[ax]).map(|ax| shape[ax]).collect()
    };
    let mut out_strides = vec![0usize; rank];
    {
        let mut acc = 1usize;
        for ax in (0..rank).rev() {
            if !reduced[ax] {
                out_strides[ax] = acc;
                acc *= shape[ax];
            }
        }
    }

    let n_out: usize = out_shape.iter().product();
    let inv_count = E::from_f64(1.0 / count as f64);

    let mut values = vec![E::ZERO; n_out];
    {
        let xv = x.values();
        walk_reduce(&shape, &out_strides, |i, oi| values[oi] += xv[i]);
    }
    if matches!(kind, ReduceKind::Mean) {
        for v in &mut values {
            *v *= inv_count;
        }
    }

    let name = match kind {
        ReduceKind::Sum => "reduce_sum",
        ReduceKind::Mean => "reduce_mean",
    };
    let x_in = Rc::clone(&x.inner);
    finish_op(name, &[x], out_shape, values, move |out| {
        Box::new(move || {
            let Some(g) = upstream(&out) else { return };
            let scale = match kind {
                ReduceKind::Sum => E::ONE,
                ReduceKind::Mean => inv_count,
            };
            let mut gx = vec![E::ZERO; x_in.values.len()];
            walk_reduce(&shape, &out_strides, |i, oi| gx[i] = g[oi] * scale);
            drop(g);
            x_in.accumulate(gx);
        })
    })
}

/// Walks input positions in row-major order, handing the callback the input
/// index and the matching (reduced) output offset.
fn walk_reduce(shape: &[usize], out_strides: &[usize], mut body: impl FnMut(usize, usize)) {
    let rank = shape.len();
    if rank == 0 {
        body(0, 0);
        return;
    }
    let n_in: usize = shape.iter().product();
    let mut coords = vec![0usize; rank];
    let mut oi = 0usize;
    for i in 0..n_in {
        body(i, oi);
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            oi += out_strides[ax];
            if coords[ax] < shape[ax] {
                break;
            }
            coords[ax] = 0;
            oi -= out_strides[ax] * shape[ax];
        }
    }
}

impl<E: Element> Tensor<E> {
    /// Sum of every element, as a rank-0 scalar.
    pub fn sum_all(&self) -> Result<Tensor<E>> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        reduce(ReduceKind::Sum, self, &axes, false)
    }

    /// Mean of every element, as a rank-0 scalar.
    pub fn mean_all(&self) -> Result<Tensor<E>> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        reduce(ReduceKind::Mean, self, &axes, false)
    }

    pub fn sum_axes(&self, axes: &[usize], keepdims: bool) -> Result<Tensor<E>> {
        reduce(ReduceKind::Sum, self, axes, keepdims)
    }

    pub fn mean_axes(&self, axes: &[usize], keepdims: bool) -> Result<Tensor<E>> {
        reduce(ReduceKind::Mean, self, axes, keepdims)
    }
}
