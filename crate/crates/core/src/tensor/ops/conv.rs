//! 2-D cross-correlation with zero padding, and the 3x3 box filter used by
//! the windowed-statistics losses.

use std::rc::Rc;

use super::{finish_op, upstream};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, TensorInner};

struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

/// Output-row range [lo, hi) such that `o*stride - pad + k` stays inside
/// [0, extent).
#[inline]
fn valid_out_range(extent: usize, out: usize, stride: usize, pad: usize, k: usize) -> (usize, usize) {
    let s = stride as isize;
    let shift = k as isize - pad as isize;
    // o*s + shift >= 0  =>  o >= ceil(-shift / s)
    let lo = if shift >= 0 {
        0
    } else {
        (((-shift) + s - 1) / s) as usize
    };
    // o*s + shift <= extent-1  =>  o <= (extent-1-shift) / s
    let top = extent as isize - 1 - shift;
    if top < 0 {
        return (0, 0);
    }
    let hi = ((top / s) as usize + 1).min(out);
    (lo.min(hi), hi)
}

fn conv_forward<E: Element>(
    d: &ConvDims,
    input: &[E],
    weight: &[E],
    bias: &[E],
) -> Vec<E> {
    let mut out = vec![E::ZERO; d.n * d.f * d.oh * d.ow];
    for n in 0..d.n {
        for f in 0..d.f {
            let ob = ((n * d.f) + f) * d.oh * d.ow;
            let b = bias[f];
            for v in &mut out[ob..ob + d.oh * d.ow] {
                *v = b;
            }
            for c in 0..d.c {
                let ib = ((n * d.c) + c) * d.h * d.w;
                let wb = ((f * d.c) + c) * d.kh * d.kw;
                for kh in 0..d.kh {
                    let (oh_lo, oh_hi) = valid_out_range(d.h, d.oh, d.stride, d.pad, kh);
                    for kw in 0..d.kw {
                        let wv = weight[wb + kh * d.kw + kw];
                        let (ow_lo, ow_hi) = valid_out_range(d.w, d.ow, d.stride, d.pad, kw);
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + kh - d.pad;
                            let irow = ib + ih * d.w;
                            let orow = ob + oh * d.ow;
                            if d.stride == 1 {
                                let ioff = irow + ow_lo + kw - d.pad;
                                let len = ow_hi - ow_lo;
                                let src = &input[ioff..ioff + len];
                                let dst = &mut out[orow + ow_lo..orow + ow_hi];
                                for (o, i) in dst.iter_mut().zip(src) {
                                    *o += wv * *i;
                                }
                            } else {
                                for ow in ow_lo..ow_hi {
                                    let iw = ow * d.stride + kw - d.pad;
                                    out[orow + ow] += wv * input[irow + iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<E: Element>(
    d: &ConvDims,
    input: &TensorInner<E>,
    weight: &TensorInner<E>,
    bias: &TensorInner<E>,
    g: &[E],
) {
    let iv = &input.values;
    let wv = &weight.values;
    let want_i = input.needs_grad();
    let want_w = weight.needs_grad();
    let want_b = bias.needs_grad();
    let mut gi = vec![E::ZERO; if want_i { iv.len() } else { 0 }];
    let mut gw = vec![E::ZERO; if want_w { wv.len() } else { 0 }];
    let mut gb = vec![E::ZERO; if want_b { bias.values.len() } else { 0 }];

    for n in 0..d.n {
        for f in 0..d.f {
            let ob = ((n * d.f) + f) * d.oh * d.ow;
            if want_b {
                let mut s = E::ZERO;
                for &gv in &g[ob..ob + d.oh * d.ow] {
                    s += gv;
                }
                gb[f] += s;
            }
            if !want_i && !want_w {
                continue;
            }
            for c in 0..d.c {
                let ib = ((n * d.c) + c) * d.h * d.w;
                let wb = ((f * d.c) + c) * d.kh * d.kw;
                for kh in 0..d.kh {
                    let (oh_lo, oh_hi) = valid_out_range(d.h, d.oh, d.stride, d.pad, kh);
                    for kw in 0..d.kw {
                        let w_val = wv[wb + kh * d.kw + kw];
                        let (ow_lo, ow_hi) = valid_out_range(d.w, d.ow, d.stride, d.pad, kw);
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        let mut wg = E::ZERO;
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + kh - d.pad;
                            let irow = ib + ih * d.w;
                            let orow = ob + oh * d.ow;
                            if d.stride == 1 {
                                let ioff = irow + ow_lo + kw - d.pad;
                                let len = ow_hi - ow_lo;
                                let grow = &g[orow + ow_lo..orow + ow_hi];
                                if want_i && want_w {
                                    let src = &iv[ioff..ioff + len];
                                    let dst = &mut gi[ioff..ioff + len];
                                    for ((gv, i), di) in grow.iter().zip(src).zip(dst) {
                                        wg += *gv * *i;
                                        *di += w_val * *gv;
                                    }
                                } else if want_i {
                                    let dst = &mut gi[ioff..ioff + len];
                                    for (gv, di) in grow.iter().zip(dst) {
                                        *di += w_val * *gv;
                                    }
                                } else {
                                    let src = &iv[ioff..ioff + len];
                                    for (gv, i) in grow.iter().zip(src) {
                                        wg += *gv * *i;
                                    }
                                }
                            } else {
                                for ow in ow_lo..ow_hi {
                                    let iw = ow * d.stride + kw - d.pad;
                                    let gv = g[orow + ow];
                                    if want_w {
                                        wg += gv * iv[irow + iw];
                                    }
                                    if want_i {
                                        gi[irow + iw] += w_val * gv;
                                    }
                                }
                            }
                        }
                        if want_w {
                            gw[wb + kh * d.kw + kw] += wg;
                        }
                    }
                }
            }
        }
    }
    if want_i {
        input.accumulate(gi);
    }
    if want_w {
        weight.accumulate(gw);
    }
    if want_b {
        bias.accumulate(gb);
    }
}

impl<E: Element> Tensor<E> {
    /// Standard cross-correlation with zero padding.
    ///
    /// `self` is `[N, C, H, W]`, `weight` is `[F, C, kH, kW]`, `bias` is
    /// `[F]`. The padded extents must divide exactly:
    /// `H' = (H + 2*padding - kH)/stride + 1` (a non-integral result is a
    /// configuration error). Gradients flow to the input, the weight, and the
    /// bias.
    pub fn conv2d(
        &self,
        weight: &Tensor<E>,
        bias: &Tensor<E>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.dims4()?;
        let (f, wc, kh, kw) = weight.dims4()?;
        if wc != c {
            return Err(Error::dim(format!(
                "conv2d: input has {c} channels but weight expects {wc}"
            )));
        }
        if bias.shape() != [f] {
            return Err(Error::dim(format!(
                "conv2d: bias shape {:?} does not match {f} filters",
                bias.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::config("conv2d: stride must be >= 1"));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::dim(format!(
                "conv2d: kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        if (h + 2 * padding - kh) % stride != 0 || (w + 2 * padding - kw) % stride != 0 {
            return Err(Error::config(format!(
                "conv2d: output size not integral for {h}x{w}, kernel {kh}x{kw}, stride {stride}, padding {padding}"
            )));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let dims = ConvDims {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            oh,
            ow,
            stride,
            pad: padding,
        };
        let values = conv_forward(&dims, self.values(), weight.values(), bias.values());

        let x_in = Rc::clone(&self.inner);
        let w_in = Rc::clone(&weight.inner);
        let b_in = Rc::clone(&bias.inner);
        finish_op(
            "conv2d",
            &[self, weight, bias],
            vec![n, f, oh, ow],
            values,
            move |out| {
                Box::new(move || {
                    let Some(g) = upstream(&out) else { return };
                    conv_backward(&dims, &x_in, &w_in, &b_in, &g);
                })
            },
        )
    }

    /// Per-channel 3x3 mean over the valid region: `[N,C,H,W] ->
    /// [N,C,H-2,W-2]`. Combined with [`Tensor::pad_reflect2d`] this gives the
    /// shape-preserving windowed means the structural-similarity loss needs.
    pub fn box_filter3x3(&self) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.dims4()?;
        if h < 3 || w < 3 {
            return Err(Error::dim(format!("box_filter3x3 needs H,W >= 3, got {h}x{w}")));
        }
        let (oh, ow) = (h - 2, w - 2);
        let ninth = E::from_f64(1.0 / 9.0);
        let mut values = vec![E::ZERO; n * c * oh * ow];
        {
            let xv = self.values();
            let mut o = 0usize;
            for nc in 0..n * c {
                let base = nc * h * w;
                for i in 0..oh {
                    for j in 0..ow {
                        let mut s = E::ZERO;
                        for di in 0..3 {
                            let row = base + (i + di) * w + j;
                            s += xv[row] + xv[row + 1] + xv[row + 2];
                        }
                        values[o] = s * ninth;
                        o += 1;
                    }
                }
            }
        }
        let x_in = Rc::clone(&self.inner);
        finish_op(
            "box_filter3x3",
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
                            for j in 0..ow {
                                let gv = g[o] * ninth;
                                o += 1;
                                for di in 0..3 {
                                    let row = base + (i + di) * w + j;
                                    gx[row] += gv;
                                    gx[row + 1] += gv;
                                    gx[row + 2] += gv;
                                }
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
