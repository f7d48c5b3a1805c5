//! Differentiable resampling: bilinear grid sampling with border clamping and
//! nearest-neighbour 2x upsampling.
//!
//! Two grid conventions are exposed. [`Tensor::bilinear_sample`] takes
//! normalized coordinates where -1 and +1 land on the centers of the first
//! and last pixel of each axis. [`Tensor::bilinear_sample_pixel`] takes raw
//! pixel coordinates; dividing integer indices by a scale factor keeps
//! identity transforms exact to the bit, which the direction-aware block
//! relies on.

use std::rc::Rc;

use super::{finish_op, upstream};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, TensorInner};

struct SampleDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    gn: usize,
    oh: usize,
    ow: usize,
    /// pixel = grid * scale + offset, per axis (x, y).
    scale: [f64; 2],
    offset: [f64; 2],
}

#[derive(Clone, Copy)]
struct TapPoint<E> {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: E,
    fy: E,
    /// 1 where the raw coordinate was inside [0, extent-1], else 0 (border
    /// clamp saturates the coordinate gradient).
    dx_mask: E,
    dy_mask: E,
}

#[inline]
fn resolve<E: Element>(gx: E, gy: E, d: &SampleDims) -> TapPoint<E> {
    let x = gx * E::from_f64(d.scale[0]) + E::from_f64(d.offset[0]);
    let y = gy * E::from_f64(d.scale[1]) + E::from_f64(d.offset[1]);
    let max_x = E::from_f64((d.w - 1) as f64);
    let max_y = E::from_f64((d.h - 1) as f64);
    let dx_mask = if x >= E::ZERO && x <= max_x { E::ONE } else { E::ZERO };
    let dy_mask = if y >= E::ZERO && y <= max_y { E::ONE } else { E::ZERO };
    let xc = x.maximum(E::ZERO).minimum(max_x);
    let yc = y.maximum(E::ZERO).minimum(max_y);
    let xf = xc.floor();
    let yf = yc.floor();
    let x0 = xf.to_f64() as usize;
    let y0 = yf.to_f64() as usize;
    let x1 = (x0 + 1).min(d.w - 1);
    let y1 = (y0 + 1).min(d.h - 1);
    TapPoint {
        x0,
        x1,
        y0,
        y1,
        fx: xc - xf,
        fy: yc - yf,
        dx_mask,
        dy_mask,
    }
}

fn sample_forward<E: Element>(d: &SampleDims, input: &[E], grid: &[E]) -> Vec<E> {
    let mut out = vec![E::ZERO; d.n * d.c * d.oh * d.ow];
    let plane = d.h * d.w;
    let gplane = d.oh * d.ow * 2;
    for n in 0..d.n {
        let gbase = if d.gn == 1 { 0 } else { n * gplane };
        for (p, chunk) in grid[gbase..gbase + gplane].chunks_exact(2).enumerate() {
            let t = resolve(chunk[0], chunk[1], d);
            let w00 = (E::ONE - t.fx) * (E::ONE - t.fy);
            let w10 = t.fx * (E::ONE - t.fy);
            let w01 = (E::ONE - t.fx) * t.fy;
            let w11 = t.fx * t.fy;
            for c in 0..d.c {
                let ib = (n * d.c + c) * plane;
                let v = input[ib + t.y0 * d.w + t.x0] * w00
                    + input[ib + t.y0 * d.w + t.x1] * w10
                    + input[ib + t.y1 * d.w + t.x0] * w01
                    + input[ib + t.y1 * d.w + t.x1] * w11;
                out[(n * d.c + c) * d.oh * d.ow + p] = v;
            }
        }
    }
    out
}

fn sample_backward<E: Element>(
    d: &SampleDims,
    input: &TensorInner<E>,
    grid: &TensorInner<E>,
    g: &[E],
) {
    let iv = &input.values;
    let gv = &grid.values;
    let want_i = input.needs_grad();
    let want_g = grid.needs_grad();
    let mut gi = vec![E::ZERO; if want_i { iv.len() } else { 0 }];
    let mut gg = vec![E::ZERO; if want_g { gv.len() } else { 0 }];
    let plane = d.h * d.w;
    let gplane = d.oh * d.ow * 2;
    let sx = E::from_f64(d.scale[0]);
    let sy = E::from_f64(d.scale[1]);
    for n in 0..d.n {
        let gbase = if d.gn == 1 { 0 } else { n * gplane };
        for p in 0..d.oh * d.ow {
            let gx = gv[gbase + 2 * p];
            let gy = gv[gbase + 2 * p + 1];
            let t = resolve(gx, gy, d);
            let w00 = (E::ONE - t.fx) * (E::ONE - t.fy);
            let w10 = t.fx * (E::ONE - t.fy);
            let w01 = (E::ONE - t.fx) * t.fy;
            let w11 = t.fx * t.fy;
            let mut dvx = E::ZERO;
            let mut dvy = E::ZERO;
            for c in 0..d.c {
                let ib = (n * d.c + c) * plane;
                let up = g[(n * d.c + c) * d.oh * d.ow + p];
                if up == E::ZERO {
                    continue;
                }
                if want_i {
                    gi[ib + t.y0 * d.w + t.x0] += up * w00;
                    gi[ib + t.y0 * d.w + t.x1] += up * w10;
                    gi[ib + t.y1 * d.w + t.x0] += up * w01;
                    gi[ib + t.y1 * d.w + t.x1] += up * w11;
                }
                if want_g {
                    let v00 = iv[ib + t.y0 * d.w + t.x0];
                    let v10 = iv[ib + t.y0 * d.w + t.x1];
                    let v01 = iv[ib + t.y1 * d.w + t.x0];
                    let v11 = iv[ib + t.y1 * d.w + t.x1];
                    // d(value)/d(pixel coordinate)
                    let ddx = (E::ONE - t.fy) * (v10 - v00) + t.fy * (v11 - v01);
                    let ddy = (E::ONE - t.fx) * (v01 - v00) + t.fx * (v11 - v10);
                    dvx += up * ddx;
                    dvy += up * ddy;
                }
            }
            if want_g {
                gg[gbase + 2 * p] += dvx * t.dx_mask * sx;
                gg[gbase + 2 * p + 1] += dvy * t.dy_mask * sy;
            }
        }
    }
    if want_i {
        input.accumulate(gi);
    }
    if want_g {
        grid.accumulate(gg);
    }
}

fn bilinear_impl<E: Element>(
    name: &'static str,
    input: &Tensor<E>,
    grid: &Tensor<E>,
    scale: [f64; 2],
    offset: [f64; 2],
) -> Result<Tensor<E>> {
    let (n, c, h, w) = input.dims4()?;
    let (gn, oh, ow, two) = grid.dims4().map_err(|_| {
        Error::dim(format!(
            "{name}: grid must be [N, H', W', 2], got {:?}",
            grid.shape()
        ))
    })?;
    if two != 2 {
        return Err(Error::dim(format!(
            "{name}: grid last dimension must be 2 (x, y), got {two}"
        )));
    }
    if gn != n && gn != 1 {
        return Err(Error::dim(format!(
            "{name}: grid batch {gn} incompatible with input batch {n}"
        )));
    }
    if !grid.all_finite() {
        return Err(Error::domain(format!("{name}: non-finite grid coordinate")));
    }
    let dims = SampleDims {
        n,
        c,
        h,
        w,
        gn,
        oh,
        ow,
        scale,
        offset,
    };
    let values = sample_forward(&dims, input.values(), grid.values());
    let x_in = Rc::clone(&input.inner);
    let g_in = Rc::clone(&grid.inner);
    finish_op(name, &[input, grid], vec![n, c, oh, ow], values, move |out| {
        Box::new(move || {
            let Some(g) = upstream(&out) else { return };
            sample_backward(&dims, &x_in, &g_in, &g);
        })
    })
}

impl<E: Element> Tensor<E> {
    /// Bilinear interpolation of `self` (`[N,C,H,W]`) at normalized grid
    /// locations (`[N,H',W',2]` or `[1,H',W',2]`, last dim = (x, y) with -1
    /// and +1 on the centers of the first and last pixel). Out-of-range
    /// samples clamp to the border. Gradients flow to both the input values
    /// and the grid coordinates.
    pub fn bilinear_sample(&self, grid: &Tensor<E>) -> Result<Tensor<E>> {
        let (_, _, h, w) = self.dims4()?;
        let sx = (w - 1) as f64 / 2.0;
        let sy = (h - 1) as f64 / 2.0;
        bilinear_impl("bilinear_sample", self, grid, [sx, sy], [sx, sy])
    }

    /// Bilinear interpolation at raw pixel coordinates (same layout as
    /// [`Tensor::bilinear_sample`] but (x, y) in `[0, W-1] x [0, H-1]`).
    pub fn bilinear_sample_pixel(&self, grid: &Tensor<E>) -> Result<Tensor<E>> {
        bilinear_impl(
            "bilinear_sample_pixel",
            self,
            grid,
            [1.0, 1.0],
            [0.0, 0.0],
        )
    }

    /// Replicates each pixel into a 2x2 block; backward sums the block.
    pub fn upsample_nearest2x(&self) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.dims4()?;
        let (oh, ow) = (2 * h, 2 * w);
        let mut values = vec![E::ZERO; n * c * oh * ow];
        {
            let xv = self.values();
            for nc in 0..n * c {
                let ib = nc * h * w;
                let ob = nc * oh * ow;
                for i in 0..h {
                    for j in 0..w {
                        let v = xv[ib + i * w + j];
                        let o = ob + 2 * i * ow + 2 * j;
                        values[o] = v;
                        values[o + 1] = v;
                        values[o + ow] = v;
                        values[o + ow + 1] = v;
                    }
                }
            }
        }
        let x_in = Rc::clone(&self.inner);
        finish_op(
            "upsample_nearest2x",
            &[self],
            vec![n, c, oh, ow],
            values,
            move |out| {
                Box::new(move || {
                    let Some(g) = upstream(&out) else { return };
                    let mut gx = vec![E::ZERO; x_in.values.len()];
                    for nc in 0..n * c {
                        let ib = nc * h * w;
                        let ob = nc * oh * ow;
                        for i in 0..h {
                            for j in 0..w {
                                let o = ob + 2 * i * ow + 2 * j;
                                gx[ib + i * w + j] += g[o] + g[o + 1] + g[o + ow] + g[o + ow + 1];
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

/// Normalized identity grid of the given output size: sampling any
/// same-sized image with it reproduces the image (up to rounding).
pub fn identity_grid<E: Element>(h: usize, w: usize) -> Tensor<E> {
    let mut vals = Vec::with_capacity(h * w * 2);
    for i in 0..h {
        for j in 0..w {
            let gx = if w == 1 { 0.0 } else { 2.0 * j as f64 / (w - 1) as f64 - 1.0 };
            let gy = if h == 1 { 0.0 } else { 2.0 * i as f64 / (h - 1) as f64 - 1.0 };
            vals.push(E::from_f64(gx));
            vals.push(E::from_f64(gy));
        }
    }
    Tensor::make(vec![1, h, w, 2], vals, false, None)
}

/// Bilinear resize to `(out_h, out_w)` through a constant sampling grid
/// (differentiable w.r.t. the image only).
pub fn upsample_bilinear<E: Element>(
    x: &Tensor<E>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<E>> {
    let grid = identity_grid::<E>(out_h, out_w);
    x.bilinear_sample(&grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn identity_grid_reproduces_input() {
        let vals: Vec<f64> = (0..24).map(|i| (i as f64) * 0.37 - 2.0).collect();
        let x = Tensor::<f64>::from_vec(&[1, 2, 3, 4], vals).unwrap();
        let g = identity_grid::<f64>(3, 4);
        let y = x.bilinear_sample(&g).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn integer_pixel_grid_is_bit_exact() {
        let vals: Vec<f64> = (0..24).map(|i| (i as f64) * 0.37 - 2.0).collect();
        let x = Tensor::<f64>::from_vec(&[1, 2, 3, 4], vals).unwrap();
        let mut gv = Vec::new();
        for i in 0..3 {
            for j in 0..4 {
                gv.push(j as f64);
                gv.push(i as f64);
            }
        }
        let g = Tensor::<f64>::from_vec(&[1, 3, 4, 2], gv).unwrap();
        let y = x.bilinear_sample_pixel(&g).unwrap();
        assert_eq!(x.values(), y.values());
    }

    #[test]
    fn midpoint_interpolates() {
        // two pixels valued 0 and 1; sample halfway
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let g = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![0.0, 0.0]).unwrap(); // normalized center x=0 -> pixel 0.5
        let y = x.bilinear_sample(&g).unwrap();
        assert!((y.values()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_pixel_shift_clamps_border() {
        // shift right by one pixel pitch: interior equals shifted input,
        // rightmost column clamps.
        let vals: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 5], vals).unwrap();
        let mut gv = Vec::new();
        for j in 0..5 {
            gv.push((j + 1) as f64); // pixel coords shifted by +1
            gv.push(0.0);
        }
        let g = Tensor::<f64>::from_vec(&[1, 1, 5, 2], gv).unwrap();
        let y = x.bilinear_sample_pixel(&g).unwrap();
        assert_eq!(y.values(), &[1.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn upsample_replicates() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 1], vec![5.0]).unwrap();
        let y = x.upsample_nearest2x().unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.values(), &[5.0; 4]);
    }

    #[test]
    fn upsample_checkerboard() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = x.upsample_nearest2x().unwrap();
        let expect = [
            1.0, 1.0, 0.0, 0.0, //
            1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 1.0, //
            0.0, 0.0, 1.0, 1.0,
        ];
        assert_eq!(y.values(), &expect);
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let tape = Tape::<f64>::new();
        let x = Tensor::leaf(&tape, &[1, 1, 2, 2], vec![1.0; 4], true).unwrap();
        let loss = x.upsample_nearest2x().unwrap().sum_all().unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0; 4]);
    }

    #[test]
    fn grid_rank_checked() {
        let x = Tensor::<f64>::ones(&[1, 1, 2, 2]);
        let bad = Tensor::<f64>::ones(&[1, 2, 2, 3]);
        assert!(x.bilinear_sample(&bad).is_err());
    }
}
