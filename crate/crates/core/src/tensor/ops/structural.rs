//! Shape-manipulating operations: reshape, slice, concat, reflection padding.

use std::rc::Rc;

use super::{finish_op, upstream};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Walks a sliced block in row-major order, handing the callback the output
/// index and the matching source offset.
fn walk_slice(
    out_shape: &[usize],
    strides: &[usize],
    offsets: &[usize],
    mut body: impl FnMut(usize, usize),
) {
    let rank = out_shape.len();
    let n: usize = out_shape.iter().product();
    let mut coords = vec![0usize; rank];
    let mut src: usize = offsets.iter().zip(strides).map(|(o, s)| o * s).sum();
    for i in 0..n {
        body(i, src);
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            src += strides[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            src -= strides[ax] * out_shape[ax];
        }
    }
}

impl<E: Element> Tensor<E> {
    /// Reinterprets the value buffer under a new shape of equal length.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<E>> {
        let n: usize = new_shape.iter().product();
        if new_shape.iter().any(|&d| d == 0) || n != self.numel() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} ({} values) to {:?}",
                self.shape(),
                self.numel(),
                new_shape
            )));
        }
        let x_in = Rc::clone(&self.inner);
        finish_op(
            "reshape",
            &[self],
            new_shape.to_vec(),
            self.values().to_vec(),
            move |out| {
                Box::new(move || {
                    let Some(g) = upstream(&out) else { return };
                    let ga = g.clone();
                    drop(g);
                    x_in.accumulate(ga);
                })
            },
        )
    }

    /// Sub-block `[start, end)` per axis.
    pub fn slice(&self, ranges: &[(usize, usize)]) -> Result<Tensor<E>> {
        let shape = self.shape();
        if ranges.len() != shape.len() {
            return Err(Error::dim(format!(
                "slice wants {} ranges for shape {:?}",
                shape.len(),
                shape
            )));
        }
        for (ax, &(s, e)) in ranges.iter().enumerate() {
            if s >= e || e > shape[ax] {
                return Err(Error::dim(format!(
                    "slice range {s}..{e} invalid for axis {ax} of extent {}",
                    shape[ax]
                )));
            }
        }
        let out_shape: Vec<usize> = ranges.iter().map(|&(s, e)| e - s).collect();
        let strides = contiguous_strides(shape);
        let offsets: Vec<usize> = ranges.iter().map(|&(s, _)| s).collect();
        let n: usize = out_shape.iter().product();

        let mut values = vec![E::ZERO; n];
        {
            let xv = self.values();
            walk_slice(&out_shape, &strides, &offsets, |i, src| values[i] = xv[src]);
        }
        let x_in = Rc::clone(&self.inner);
        let out_shape_c = out_shape.clone();
        finish_op("slice", &[self], out_shape, values, move |out| {
            Box::new(move || {
                let Some(g) = upstream(&out) else { return };
                let mut gx = vec![E::ZERO; x_in.values.len()];
                walk_slice(&out_shape_c, &strides, &offsets, |i, src| gx[src] += g[i]);
                drop(g);
                x_in.accumulate(gx);
            })
        })
    }

    /// Reflection padding (edge not repeated) of the two trailing spatial
    /// axes of a `[N, C, H, W]` tensor.
    pub fn pad_reflect2d(&self, pad: usize) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.dims4()?;
        if pad == 0 {
            return self.reshape(self.shape());
        }
        if pad >= h || pad >= w {
            return Err(Error::dim(format!(
                "reflection pad {pad} too large for {h}x{w}"
            )));
        }
        let (oh, ow) = (h + 2 * pad, w + 2 * pad);
        let reflect = move |i: isize, extent: usize| -> usize {
            let e = extent as isize;
            let r = if i < 0 {
                -i
            } else if i >= e {
                2 * e - 2 - i
            } else {
                i
            };
            r as usize
        };
        let mut values = vec![E::ZERO; n * c * oh * ow];
        {
            let xv = self.values();
            let mut o = 0usize;
            for nc in 0..n * c {
                let base = nc * h * w;
                for i in 0..oh {
                    let si = reflect(i as isize - pad as isize, h);
                    for j in 0..ow {
                        let sj = reflect(j as isize - pad as isize, w);
                        values[o] = xv[base + si * w + sj];
                        o += 1;
                    }
                }
            }
        }
        let x_in = Rc::clone(&self.inner);
        finish_op(
            "pad_reflect2d",
            &[self],
            vec![n, c, oh, ow],
            values,
            move |out| {
                Box::new(move || {
                    let Some(g) = upstream(&out) else { return };
                    let mut gx = vec![E::ZERO; x_in.values.len()];
                    let mut o = 0usize;
                    for nc in 0..n * c {
                        let base = nc * h * w;
                        for i in 0..oh {
                            let si = reflect(i as isize - pad as isize, h);
                            for j in 0..ow {
                                let sj = reflect(j as isize - pad as isize, w);
                                gx[base + si * w + sj] += g[o];
                                o += 1;
                            }
                        }
                    }
                    drop(g);
                    x_in.accumulate(gx);
                })
            },
        )
    }
}

/// Concatenation along `axis`. All operands must agree on every other extent.
pub fn concat<E: Element>(parts: &[&Tensor<E>], axis: usize) -> Result<Tensor<E>> {
    if parts.is_empty() {
        return Err(Error::dim("concat of zero tensors"));
    }
    let rank = parts[0].shape().len();
    if axis >= rank {
        return Err(Error::dim(format!("concat axis {axis} out of rank {rank}")));
    }
    let mut out_shape = parts[0].shape().to_vec();
    let mut axis_total = 0usize;
    for p in parts {
        if p.shape().len() != rank {
            return Err(Error::dim("concat rank mismatch"));
        }
        for (ax, (&d, &d0)) in p.shape().iter().zip(&out_shape).enumerate() {
            if ax != axis && d != d0 {
                return Err(Error::dim(format!(
                    "concat extent mismatch on axis {ax}: {d} vs {d0}"
                )));
            }
        }
        axis_total += p.shape()[axis];
    }
    out_shape[axis] = axis_total;

    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let chunk_sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
    let out_row = axis_total * inner;

    let n: usize = out_shape.iter().product();
    let mut values = vec![E::ZERO; n];
    for o in 0..outer {
        let mut dst = o * out_row;
        for (p, &csz) in parts.iter().zip(&chunk_sizes) {
            let src = o * csz;
            values[dst..dst + csz].copy_from_slice(&p.values()[src..src + csz]);
            dst += csz;
        }
    }

    let part_inners: Vec<_> = parts.iter().map(|p| Rc::clone(&p.inner)).collect();
    let chunks = chunk_sizes.clone();
    finish_op("concat", parts, out_shape, values, move |out| {
        Box::new(move || {
            let Some(g) = upstream(&out) else { return };
            for (k, p) in part_inners.iter().enumerate() {
                let csz = chunks[k];
                let skip: usize = chunks[..k].iter().sum();
                let mut gp = vec![E::ZERO; p.values.len()];
                for o in 0..outer {
                    let src = o * out_row + skip;
                    gp[o * csz..(o + 1) * csz].copy_from_slice(&g[src..src + csz]);
                }
                p.accumulate(gp);
            }
        })
    })
}

#[cfg(test)]
mod tests {
    use super::concat;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn slice_and_backward() {
        let tape = Tape::<f64>::new();
        let x = Tensor::leaf(&tape, &[2, 3], vec![1., 2., 3., 4., 5., 6.], true).unwrap();
        let s = x.slice(&[(0, 2), (1, 3)]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.values(), &[2., 3., 5., 6.]);
        let loss = s.sum_all().unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0., 1., 1., 0., 1., 1.]);
    }

    #[test]
    fn concat_channels() {
        let a = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::<f64>::from_vec(&[1, 2, 2, 2], vec![5., 6., 7., 8., 9., 10., 11., 12.]).unwrap();
        let c = concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[1, 3, 2, 2]);
        assert_eq!(
            c.values(),
            &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.]
        );
    }

    #[test]
    fn concat_last_axis() {
        let a = Tensor::<f64>::from_vec(&[2, 1], vec![1., 2.]).unwrap();
        let b = Tensor::<f64>::from_vec(&[2, 1], vec![3., 4.]).unwrap();
        let c = concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.values(), &[1., 3., 2., 4.]);
    }

    #[test]
    fn reflect_pad_values() {
        // row [1 2 3] pad 1 -> [2 1 2 3 2]
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 3], vec![1., 2., 3.]).unwrap();
        // H=1 cannot reflect; use 2 rows
        assert!(x.pad_reflect2d(1).is_err());
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let p = x.pad_reflect2d(1).unwrap();
        assert_eq!(p.shape(), &[1, 1, 4, 5]);
        let rows: Vec<&[f64]> = p.values().chunks(5).collect();
        assert_eq!(rows[0], &[5., 4., 5., 6., 5.]);
        assert_eq!(rows[1], &[2., 1., 2., 3., 2.]);
        assert_eq!(rows[2], &[5., 4., 5., 6., 5.]);
        assert_eq!(rows[3], &[2., 1., 2., 3., 2.]);
    }

    #[test]
    fn reshape_backward() {
        let tape = Tape::<f64>::new();
        let x = Tensor::leaf(&tape, &[2, 2], vec![1., 2., 3., 4.], true).unwrap();
        let y = x.reshape(&[4]).unwrap();
        let loss = y.mul_scalar(2.0).unwrap().sum_all().unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0; 4]);
    }
}
