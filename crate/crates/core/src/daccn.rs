//! The two operators this laboratory exists to study.
//!
//! The **direction-aware block** resamples its input through a learnable
//! anisotropic scaling, applies a convolutional block in the rescaled space,
//! and resamples back, so training can trade sample density against receptive
//! field independently per axis. The **cumulative convolution** follows a
//! spatial convolution with a bottom-up per-column accumulation and a
//! row-count normalization, turning each activation into the mean of the
//! convolution features from its own row down to the bottom of the map — the
//! image region that carries the depth-relevant context.

use crate::error::{Error, Result};
use crate::tensor::{concat, Activation, Element, Tensor};

/// Learnable anisotropic scale pair, parameterized as free log-values so the
/// effective scales stay positive. Effective scales are clamped to
/// [0.25, 4.0].
#[derive(Debug, Clone)]
pub struct DirectionScales<E: Element> {
    pub log_sx: Tensor<E>,
    pub log_sy: Tensor<E>,
}

pub const SCALE_MIN: f64 = 0.25;
pub const SCALE_MAX: f64 = 4.0;

impl<E: Element> DirectionScales<E> {
    /// Identity scales (s_x = s_y = 1 exactly), detached.
    pub fn identity() -> Self {
        DirectionScales {
            log_sx: Tensor::scalar(0.0),
            log_sy: Tensor::scalar(0.0),
        }
    }

    pub fn from_tensors(log_sx: Tensor<E>, log_sy: Tensor<E>) -> Result<Self> {
        if log_sx.numel() != 1 || log_sy.numel() != 1 {
            return Err(Error::dim("DirectionScales wants scalar log-parameters"));
        }
        Ok(DirectionScales { log_sx, log_sy })
    }

    /// Effective (s_x, s_y) on the tape: exp of the log-parameter, clamped in
    /// log space so positivity and the bounds hold by construction.
    pub fn effective(&self) -> Result<(Tensor<E>, Tensor<E>)> {
        let lo = SCALE_MIN.ln();
        let hi = SCALE_MAX.ln();
        let sx = self.log_sx.clamp(lo, hi)?.exp()?;
        let sy = self.log_sy.clamp(lo, hi)?.exp()?;
        Ok((sx, sy))
    }

    /// Current numeric values of (s_x, s_y).
    pub fn values(&self) -> Result<(f64, f64)> {
        let (sx, sy) = self.effective()?;
        Ok((sx.item()?.to_f64(), sy.item()?.to_f64()))
    }
}

/// Parameters of one cumulative convolution: a 3x3 same-shape spatial
/// convolution (stride 1, padding 1) plus the activation applied after
/// normalization.
#[derive(Debug, Clone)]
pub struct CumulativeConvParams<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
    pub activation: Activation,
}

impl<E: Element> CumulativeConvParams<E> {
    pub fn new(weight: Tensor<E>, bias: Tensor<E>, activation: Activation) -> Result<Self> {
        let (_, _, kh, kw) = weight.dims4()?;
        if kh != 3 || kw != 3 {
            return Err(Error::config(format!(
                "cumulative convolution uses a 3x3 kernel, got {kh}x{kw}"
            )));
        }
        Ok(CumulativeConvParams {
            weight,
            bias,
            activation,
        })
    }
}

/// Two 3x3 convolutions with ELU after each; the feature extractor that sits
/// between the forward and inverse resampling of the direction-aware block.
#[derive(Debug, Clone)]
pub struct ConvBlockParams<E: Element> {
    pub conv: Vec<(Tensor<E>, Tensor<E>)>,
}

impl<E: Element> ConvBlockParams<E> {
    pub fn apply(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let mut cur = x.clone();
        for (w, b) in &self.conv {
            cur = cur.conv2d(w, b, 1, 1)?.elu()?;
        }
        Ok(cur)
    }
}

fn scaled_extent(scale: f64, extent: usize) -> usize {
    ((scale * extent as f64).round() as usize).max(1)
}

/// Pixel-coordinate sampling grid realizing the pure scaling map. Output
/// pixel j samples source pixel j/s (forward) or j*s (inverse); both are
/// differentiable functions of the scale tensors, and at s = 1 the
/// coordinates are exact integers so sampling is an exact identity.
fn scale_grid_pixel<E: Element>(
    sx: &Tensor<E>,
    sy: &Tensor<E>,
    out_h: usize,
    out_w: usize,
    inverse: bool,
) -> Result<Tensor<E>> {
    let xs: Vec<E> = (0..out_w).map(|j| E::from_f64(j as f64)).collect();
    let ys: Vec<E> = (0..out_h).map(|i| E::from_f64(i as f64)).collect();
    let xrow = Tensor::from_vec(&[1, 1, out_w, 1], xs)?;
    let ycol = Tensor::from_vec(&[1, out_h, 1, 1], ys)?;
    let (gx, gy) = if inverse {
        (xrow.mul(sx)?, ycol.mul(sy)?)
    } else {
        (xrow.div(sx)?, ycol.div(sy)?)
    };
    // materialize both to [1, H, W, 1], then join on the coordinate axis
    let zeros = Tensor::<E>::zeros(&[1, out_h, out_w, 1]);
    let gx = zeros.add(&gx)?;
    let gy = zeros.add(&gy)?;
    concat(&[&gx, &gy], 3)
}

/// Normalized-coordinate sampling grid for the pure scaling map, plus the
/// output extents.
///
/// Forward mode stretches an `in_h x in_w` input to
/// `round(s_y * in_h) x round(s_x * in_w)` (floored at 1); inverse mode maps
/// a stretched map back to exactly `in_h x in_w`. Grid coordinates are
/// differentiable functions of the log-scales.
pub fn affine_grid<E: Element>(
    scales: &DirectionScales<E>,
    in_h: usize,
    in_w: usize,
    inverse: bool,
) -> Result<(Tensor<E>, usize, usize)> {
    if in_h < 2 || in_w < 2 {
        return Err(Error::dim(format!(
            "affine_grid wants extents >= 2, got {in_h}x{in_w}"
        )));
    }
    let (sx, sy) = scales.effective()?;
    let sxv = sx.item()?.to_f64();
    let syv = sy.item()?.to_f64();
    let (scaled_h, scaled_w) = (scaled_extent(syv, in_h), scaled_extent(sxv, in_w));
    // Extents of the space being sampled from, per mode.
    let (out_h, out_w, src_h, src_w) = if inverse {
        (in_h, in_w, scaled_h, scaled_w)
    } else {
        (scaled_h, scaled_w, in_h, in_w)
    };
    let pixel = scale_grid_pixel(&sx, &sy, out_h, out_w, inverse)?;
    // normalize: g = 2 * pixel / (extent - 1) - 1, per coordinate
    let sx_norm = if src_w > 1 { (src_w - 1) as f64 } else { 1.0 };
    let sy_norm = if src_h > 1 { (src_h - 1) as f64 } else { 1.0 };
    let gx = pixel
        .slice(&[(0, 1), (0, out_h), (0, out_w), (0, 1)])?
        .mul_scalar(2.0)?
        .div_scalar(sx_norm)?
        .add_scalar(-1.0)?;
    let gy = pixel
        .slice(&[(0, 1), (0, out_h), (0, out_w), (1, 2)])?
        .mul_scalar(2.0)?
        .div_scalar(sy_norm)?
        .add_scalar(-1.0)?;
    Ok((concat(&[&gx, &gy], 3)?, out_h, out_w))
}

/// Applies the transform / extract / back-project composition: resample the
/// input onto the scaled grid, run the convolutional block there, and
/// resample the features back to the input's spatial extents.
///
/// Output spatial shape always equals the input's. Gradients flow to the
/// block weights and, through both resampling steps, to the log-scales. With
/// scales exactly (1, 1) the resampling grids hit integer pixel coordinates
/// and the result is bit-identical to the bare block.
pub fn direction_aware_block<E: Element>(
    input: &Tensor<E>,
    scales: &DirectionScales<E>,
    block: &ConvBlockParams<E>,
) -> Result<Tensor<E>> {
    let (_, _, h, w) = input.dims4()?;
    if h < 2 || w < 2 {
        return Err(Error::dim(format!(
            "direction_aware_block wants spatial extents >= 2, got {h}x{w}"
        )));
    }
    let (sx, sy) = scales.effective()?;
    let sxv = sx.item()?.to_f64();
    let syv = sy.item()?.to_f64();
    let (sh, sw) = (scaled_extent(syv, h), scaled_extent(sxv, w));

    let grid_fwd = scale_grid_pixel(&sx, &sy, sh, sw, false)?;
    let resampled = input.bilinear_sample_pixel(&grid_fwd)?;
    let features = block.apply(&resampled)?;
    let grid_back = scale_grid_pixel(&sx, &sy, h, w, true)?;
    features.bilinear_sample_pixel(&grid_back)
}

/// delta(Norm(ACC(conv(x)))): 3x3 same-shape convolution, bottom-up
/// cumulative sum per column, division of row p by the number of summed rows
/// (H - p with 0-based rows, so every divisor is >= 1), then the activation.
/// Every output element is the activated mean of the convolution features
/// from its own row to the bottom of the map.
pub fn cumulative_convolution<E: Element>(
    input: &Tensor<E>,
    params: &CumulativeConvParams<E>,
) -> Result<Tensor<E>> {
    let (_, _, h, _) = input.dims4()?;
    let conv = input.conv2d(&params.weight, &params.bias, 1, 1)?;
    let acc = conv.cumsum_from_bottom()?;
    let counts: Vec<E> = (0..h).map(|p| E::from_f64((h - p) as f64)).collect();
    let divisor = Tensor::from_vec(&[1, 1, h, 1], counts)?;
    acc.div(&divisor)?.activation(params.activation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::{finite_diff_check, Tape};

    fn random_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let vals: Vec<f64> = (0..n).map(|_| rng.range(lo, hi)).collect();
        Tensor::from_vec(shape, vals).unwrap()
    }

    fn block_for(rng: &mut Rng, ch: usize) -> ConvBlockParams<f64> {
        let k = 1.0 / ((ch * 9) as f64).sqrt();
        ConvBlockParams {
            conv: (0..2)
                .map(|_| {
                    (
                        random_tensor(rng, &[ch, ch, 3, 3], -k, k),
                        random_tensor(rng, &[ch], -k, k),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn identity_scales_keep_dims_and_grid() {
        let scales = DirectionScales::<f64>::identity();
        let (grid, oh, ow) = affine_grid(&scales, 4, 6, false).unwrap();
        assert_eq!((oh, ow), (4, 6));
        for i in 0..4 {
            for j in 0..6 {
                let base = ((i * 6) + j) * 2;
                let gx = grid.values()[base];
                let gy = grid.values()[base + 1];
                assert!((gx - (2.0 * j as f64 / 5.0 - 1.0)).abs() < 1e-15);
                assert!((gy - (2.0 * i as f64 / 3.0 - 1.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vertical_stretch_dims() {
        let scales =
            DirectionScales::from_tensors(Tensor::<f64>::scalar(0.0), Tensor::scalar(2.0f64.ln()))
                .unwrap();
        let (_, oh, ow) = affine_grid(&scales, 4, 6, false).unwrap();
        assert_eq!((oh, ow), (8, 6));
    }

    #[test]
    fn half_width_roundtrip_dims() {
        let scales =
            DirectionScales::from_tensors(Tensor::<f64>::scalar(0.5f64.ln()), Tensor::scalar(0.0))
                .unwrap();
        let (_, oh, ow) = affine_grid(&scales, 4, 6, false).unwrap();
        assert_eq!((oh, ow), (4, 3));
        let (_, bh, bw) = affine_grid(&scales, 4, 6, true).unwrap();
        assert_eq!((bh, bw), (4, 6));
    }

    #[test]
    fn unit_scales_bit_identical_to_bare_block() {
        let mut rng = Rng::seed_from(11);
        let x = random_tensor(&mut rng, &[2, 3, 6, 7], -1.0, 1.0);
        let block = block_for(&mut rng, 3);
        let scales = DirectionScales::identity();
        let via_dam = direction_aware_block(&x, &scales, &block).unwrap();
        let bare = block.apply(&x).unwrap();
        assert_eq!(via_dam.values(), bare.values());
    }

    #[test]
    fn constant_input_stays_constant_in_interior() {
        let mut rng = Rng::seed_from(12);
        let (h, w) = (12usize, 16usize);
        let x = Tensor::<f64>::full(&[1, 2, h, w], 0.6);
        let block = block_for(&mut rng, 2);
        let (sx, sy) = (0.5, 1.4);
        let scales = DirectionScales::from_tensors(
            Tensor::scalar(sx.ln()),
            Tensor::scalar(sy.ln()),
        )
        .unwrap();
        let out = direction_aware_block(&x, &scales, &block).unwrap();
        let (_, c, _, _) = out.dims4().unwrap();

        // Two zero-padded 3x3 convs contaminate a 2-px margin of the scaled
        // map; an output pixel is clean when its bilinear taps stay inside
        // the clean window [2, extent-3] of the scaled space.
        let clean = |scale: f64, extent: usize, scaled: usize| -> (usize, usize) {
            let lo = (2.0 / scale).ceil() as usize;
            let hi = ((scaled as f64 - 4.0) / scale).floor() as usize;
            (lo, hi.min(extent - 1))
        };
        let sw = (sx * w as f64).round() as usize;
        let sh = (sy * h as f64).round() as usize;
        let (jx0, jx1) = clean(sx, w, sw);
        let (iy0, iy1) = clean(sy, h, sh);
        assert!(jx0 < jx1 && iy0 < iy1, "degenerate interior");
        for ch in 0..c {
            let reference = out.values()[(ch * h + iy0) * w + jx0];
            for i in iy0..=iy1 {
                for j in jx0..=jx1 {
                    let v = out.values()[(ch * h + i) * w + j];
                    assert!(
                        (v - reference).abs() < 1e-9,
                        "channel {ch} at ({i},{j}): {v} vs {reference}"
                    );
                }
            }
        }
    }

    #[test]
    fn scale_gradients_flow_and_match_fd() {
        let mut rng = Rng::seed_from(13);
        let x = random_tensor(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        let block = block_for(&mut rng, 2);
        let seeds = random_tensor(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        let logs = Tensor::from_vec(&[2], vec![0.05, -0.03]).unwrap();
        let err = finite_diff_check(
            |t| {
                let log_sx = t[0].slice(&[(0, 1)])?.reshape(&[])?;
                let log_sy = t[0].slice(&[(1, 2)])?.reshape(&[])?;
                let scales = DirectionScales::from_tensors(log_sx, log_sy)?;
                let out = direction_aware_block(&t[1], &scales, &block)?;
                out.mul(&seeds)?.sum_all()
            },
            &[logs.clone(), x.clone()],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "err = {err}");

        // and the gradient is actually nonzero on non-uniform input
        let tape = Tape::new();
        let lx = Tensor::leaf(&tape, &[], vec![0.05], true).unwrap();
        let ly = Tensor::leaf(&tape, &[], vec![-0.03], true).unwrap();
        let scales = DirectionScales::from_tensors(lx.clone(), ly.clone()).unwrap();
        let out = direction_aware_block(&x, &scales, &block).unwrap();
        let loss = out.mul(&seeds).unwrap().sum_all().unwrap();
        tape.backward(&loss).unwrap();
        assert!(ly.grad().unwrap()[0].abs() > 1e-8);
        assert!(lx.grad().unwrap()[0].abs() > 1e-8);
    }

    #[test]
    fn cumulative_conv_matches_brute_force() {
        let mut rng = Rng::seed_from(14);
        for _ in 0..5 {
            let x = random_tensor(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
            let w = random_tensor(&mut rng, &[2, 3, 3, 3], -0.5, 0.5);
            let b = random_tensor(&mut rng, &[2], -0.2, 0.2);
            let params = CumulativeConvParams::new(w.clone(), b.clone(), Activation::Elu).unwrap();
            let fast = cumulative_convolution(&x, &params).unwrap();

            // brute force: for each (p, q), loop rows p..H-1 over the conv
            // output, divide by the count, then activate
            let conv = x.conv2d(&w, &b, 1, 1).unwrap();
            let (n, f, h, wd) = conv.dims4().unwrap();
            for ni in 0..n {
                for fi in 0..f {
                    for p in 0..h {
                        for q in 0..wd {
                            let mut s = 0.0;
                            for i in p..h {
                                s += conv.values()[((ni * f + fi) * h + i) * wd + q];
                            }
                            let mean = s / (h - p) as f64;
                            let expect = if mean >= 0.0 { mean } else { mean.exp() - 1.0 };
                            let got = fast.values()[((ni * f + fi) * h + p) * wd + q];
                            assert!(
                                (got - expect).abs() < 1e-12,
                                "({ni},{fi},{p},{q}): {got} vs {expect}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cumulative_conv_bottom_row_is_plain_conv() {
        let mut rng = Rng::seed_from(15);
        let x = random_tensor(&mut rng, &[1, 2, 5, 4], -1.0, 1.0);
        let w = random_tensor(&mut rng, &[2, 2, 3, 3], -0.5, 0.5);
        let b = random_tensor(&mut rng, &[2], -0.2, 0.2);
        let params = CumulativeConvParams::new(w.clone(), b.clone(), Activation::Elu).unwrap();
        let out = cumulative_convolution(&x, &params).unwrap();
        let conv = x.conv2d(&w, &b, 1, 1).unwrap().elu().unwrap();
        let (_, f, h, wd) = out.dims4().unwrap();
        for fi in 0..f {
            for q in 0..wd {
                let a = out.values()[(fi * h + (h - 1)) * wd + q];
                let c = conv.values()[(fi * h + (h - 1)) * wd + q];
                assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cumulative_conv_constant_columns() {
        // a constant input makes the conv output column-independent away from
        // the zero-padding border, and ACC + Norm preserve that per row
        let x = Tensor::<f64>::full(&[1, 1, 6, 6], 1.0);
        let w = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0 / 9.0);
        let b = Tensor::<f64>::zeros(&[1]);
        let params = CumulativeConvParams::new(w, b, Activation::Elu).unwrap();
        let out = cumulative_convolution(&x, &params).unwrap();
        let (_, _, h, wd) = out.dims4().unwrap();
        for p in 0..h {
            for q in 2..wd - 1 {
                let v = out.values()[p * wd + q];
                let v2 = out.values()[p * wd + 1];
                assert!((v - v2).abs() < 1e-12, "row {p}: {v} vs {v2}");
            }
        }
    }

    #[test]
    fn cumulative_conv_column_shift_equivariance() {
        let mut rng = Rng::seed_from(16);
        let w = random_tensor(&mut rng, &[2, 2, 3, 3], -0.5, 0.5);
        let b = random_tensor(&mut rng, &[2], -0.2, 0.2);
        let params = CumulativeConvParams::new(w, b, Activation::Elu).unwrap();
        let (h, wd) = (5, 7);
        let base = random_tensor(&mut rng, &[1, 2, h, wd], -1.0, 1.0);
        // shift one column right
        let mut shifted = vec![0.0; 2 * h * wd];
        for c in 0..2 {
            for i in 0..h {
                for j in 1..wd {
                    shifted[(c * h + i) * wd + j] = base.values()[(c * h + i) * wd + j - 1];
                }
            }
        }
        let shifted = Tensor::from_vec(&[1, 2, h, wd], shifted).unwrap();
        let out_a = cumulative_convolution(&base, &params).unwrap();
        let out_b = cumulative_convolution(&shifted, &params).unwrap();
        // interior: column j of the shifted output equals column j-1 of the
        // base output, away from the padding margin
        for c in 0..2 {
            for i in 0..h {
                for j in 2..wd - 1 {
                    let a = out_a.values()[(c * h + i) * wd + j - 1];
                    let bv = out_b.values()[(c * h + i) * wd + j];
                    assert!((a - bv).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cumulative_conv_row_dependency_reach() {
        // output row p depends only on input rows >= p-1
        let mut rng = Rng::seed_from(17);
        let w = random_tensor(&mut rng, &[1, 1, 3, 3], -0.5, 0.5);
        let b = random_tensor(&mut rng, &[1], -0.2, 0.2);
        let params = CumulativeConvParams::new(w, b, Activation::Elu).unwrap();
        let h = 6;
        let base = random_tensor(&mut rng, &[1, 1, h, 5], -1.0, 1.0);
        let p = 3;
        // perturb rows 0 and 1 (both < p-1 = 2)
        let mut perturbed = base.values().to_vec();
        for j in 0..5 {
            perturbed[j] += 10.0;
            perturbed[5 + j] -= 3.0;
        }
        let pert = Tensor::from_vec(&[1, 1, h, 5], perturbed).unwrap();
        let a = cumulative_convolution(&base, &params).unwrap();
        let bv = cumulative_convolution(&pert, &params).unwrap();
        for row in p..h {
            for j in 0..5 {
                let x = a.values()[row * 5 + j];
                let y = bv.values()[row * 5 + j];
                assert!((x - y).abs() < 1e-12, "row {row} changed");
            }
        }
    }

    #[test]
    fn full_operator_gradient_check() {
        let mut rng = Rng::seed_from(18);
        let x = random_tensor(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        let w = random_tensor(&mut rng, &[2, 2, 3, 3], -0.4, 0.4);
        let b = random_tensor(&mut rng, &[2], -0.2, 0.2);
        let seeds = random_tensor(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        let err = finite_diff_check(
            |t| {
                let params =
                    CumulativeConvParams::new(t[1].clone(), t[2].clone(), Activation::Elu)?;
                cumulative_convolution(&t[0], &params)?.mul(&seeds)?.sum_all()
            },
            &[x, w, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "err = {err}");
    }
}
