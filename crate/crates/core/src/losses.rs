//! The self-supervised objective: structural similarity, photometric
//! reprojection error, edge-aware smoothness, and their multi-scale total.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Weights and reductions of the training objective.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Balance between the structural and absolute-difference terms.
    pub alpha: f64,
    /// Weight of the edge-aware smoothness term.
    pub lambda: f64,
    /// Reduce the per-pixel error with a minimum over source frames instead
    /// of an average.
    pub min_over_sources: bool,
    pub num_scales: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.85,
            lambda: 1e-3,
            min_over_sources: true,
            num_scales: 4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if self.lambda < 0.0 {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.num_scales < 1 {
            return Err(Error::config("num_scales must be >= 1"));
        }
        Ok(())
    }
}

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Per-pixel structural similarity with 3x3 uniform box statistics and
/// reflection padding, so the output has the input shape. Values lie in
/// [-1, 1]; identical inputs give exactly 1.
pub fn ssim<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "ssim shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let boxed = |x: &Tensor<E>| -> Result<Tensor<E>> { x.pad_reflect2d(1)?.box_filter3x3() };
    let mu_a = boxed(a)?;
    let mu_b = boxed(b)?;
    let mu_aa = mu_a.mul(&mu_a)?;
    let mu_bb = mu_b.mul(&mu_b)?;
    let mu_ab = mu_a.mul(&mu_b)?;
    let sigma_a = boxed(&a.mul(a)?)?.sub(&mu_aa)?;
    let sigma_b = boxed(&b.mul(b)?)?.sub(&mu_bb)?;
    let sigma_ab = boxed(&a.mul(b)?)?.sub(&mu_ab)?;

    let num = mu_ab
        .mul_scalar(2.0)?
        .add_scalar(SSIM_C1)?
        .mul(&sigma_ab.mul_scalar(2.0)?.add_scalar(SSIM_C2)?)?;
    let den = mu_aa
        .add(&mu_bb)?
        .add_scalar(SSIM_C1)?
        .mul(&sigma_a.add(&sigma_b)?.add_scalar(SSIM_C2)?)?;
    num.div(&den)
}

/// Photometric reprojection error against the target:
/// `alpha/2 * (1 - SSIM) + (1 - alpha) * |diff|`, both averaged over
/// channels, reduced across sources by a per-pixel minimum (default) or
/// average over valid pixels, then averaged to a scalar over valid pixels.
pub fn photometric_loss<E: Element>(
    synthesized: &[(Tensor<E>, Tensor<E>)],
    target: &Tensor<E>,
    cfg: &LossConfig,
) -> Result<Tensor<E>> {
    cfg.validate()?;
    if synthesized.is_empty() {
        return Err(Error::dim("photometric_loss wants at least one source"));
    }
    let (n, _c, h, w) = target.dims4()?;
    let mut per_source: Vec<Tensor<E>> = Vec::with_capacity(synthesized.len());
    for (img, mask) in synthesized {
        if img.shape() != target.shape() {
            return Err(Error::dim(format!(
                "synthesized shape {:?} does not match target {:?}",
                img.shape(),
                target.shape()
            )));
        }
        if mask.shape() != [n, 1, h, w] {
            return Err(Error::dim(format!(
                "mask shape {:?} must be [{n},1,{h},{w}]",
                mask.shape()
            )));
        }
        let l1 = img.sub(target)?.abs()?.mean_axes(&[1], true)?;
        let structural = ssim(img, target)?
            .mul_scalar(-1.0)?
            .add_scalar(1.0)?
            .mean_axes(&[1], true)?
            .mul_scalar(cfg.alpha / 2.0)?;
        let err = structural.add(&l1.mul_scalar(1.0 - cfg.alpha)?)?;
        per_source.push(err);
    }

    if cfg.min_over_sources {
        // invalid pixels are pushed out of the minimum, then excluded from
        // the average through the any-valid mask
        const BIG: f64 = 1e9;
        let mut min_err: Option<Tensor<E>> = None;
        let mut any_valid = vec![E::ZERO; n * h * w];
        for ((_, mask), err) in synthesized.iter().zip(&per_source) {
            for (av, &m) in any_valid.iter_mut().zip(mask.values()) {
                if m == E::ONE {
                    *av = E::ONE;
                }
            }
            let inv = mask.mul_scalar(-1.0)?.add_scalar(1.0)?;
            let masked = err.mul(mask)?.add(&inv.mul_scalar(BIG)?)?;
            min_err = Some(match min_err {
                None => masked,
                Some(prev) => prev.minimum(&masked)?,
            });
        }
        let count: f64 = any_valid.iter().map(|v| v.to_f64()).sum();
        if count == 0.0 {
            return Err(Error::DegenerateBatch(
                "photometric loss with no valid pixel".into(),
            ));
        }
        let any = Tensor::from_vec(&[n, 1, h, w], any_valid)?;
        min_err
            .expect("nonempty sources")
            .mul(&any)?
            .sum_all()?
            .div_scalar(count)
    } else {
        let mut num: Option<Tensor<E>> = None;
        let mut count = 0.0;
        for ((_, mask), err) in synthesized.iter().zip(&per_source) {
            count += mask.values().iter().map(|v| v.to_f64()).sum::<f64>();
            let masked = err.mul(mask)?.sum_all()?;
            num = Some(match num {
                None => masked,
                Some(prev) => prev.add(&masked)?,
            });
        }
        if count == 0.0 {
            return Err(Error::DegenerateBatch(
                "photometric loss with no valid pixel".into(),
            ));
        }
        num.expect("nonempty sources").div_scalar(count)
    }
}

/// Edge-aware smoothness of mean-normalized disparity:
/// `mean |dx d*| e^{-|dx I|} + mean |dy d*| e^{-|dy I|}` with forward
/// differences and the image gradient magnitude averaged over channels.
pub fn smoothness_loss<E: Element>(disp: &Tensor<E>, image: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = disp.dims4()?;
    if c != 1 {
        return Err(Error::dim("smoothness_loss wants a single-channel disparity"));
    }
    let (in_, _ic, ih, iw) = image.dims4()?;
    if (in_, ih, iw) != (n, h, w) {
        return Err(Error::dim(format!(
            "image {:?} does not match disparity {:?}",
            image.shape(),
            disp.shape()
        )));
    }
    // mean-normalized disparity, per batch item; the lower clamp guards
    // near-zero fields without disturbing scale invariance
    let mean = disp.mean_axes(&[2, 3], true)?.clamp_min(1e-7)?;
    let d = disp.div(&mean)?;

    let dx = |t: &Tensor<E>, ch: usize| -> Result<Tensor<E>> {
        let a = t.slice(&[(0, n), (0, ch), (0, h), (1, w)])?;
        let b = t.slice(&[(0, n), (0, ch), (0, h), (0, w - 1)])?;
        a.sub(&b)?.abs()
    };
    let dy = |t: &Tensor<E>, ch: usize| -> Result<Tensor<E>> {
        let a = t.slice(&[(0, n), (0, ch), (1, h), (0, w)])?;
        let b = t.slice(&[(0, n), (0, ch), (0, h - 1), (0, w)])?;
        a.sub(&b)?.abs()
    };

    let img_c = image.shape()[1];
    let mut total: Option<Tensor<E>> = None;
    if w > 1 {
        let wx = dx(image, img_c)?.mean_axes(&[1], true)?.mul_scalar(-1.0)?.exp()?;
        total = Some(dx(&d, 1)?.mul(&wx)?.mean_all()?);
    }
    if h > 1 {
        let wy = dy(image, img_c)?.mean_axes(&[1], true)?.mul_scalar(-1.0)?.exp()?;
        let term_y = dy(&d, 1)?.mul(&wy)?.mean_all()?;
        total = Some(match total {
            None => term_y,
            Some(tx) => tx.add(&term_y)?,
        });
    }
    total.ok_or_else(|| Error::dim("smoothness_loss on a 1x1 map"))
}

/// Mean over scales of `L_p + lambda * L_s`.
pub fn total_loss<E: Element>(
    photometric_per_scale: &[Tensor<E>],
    smoothness_per_scale: &[Tensor<E>],
    cfg: &LossConfig,
) -> Result<Tensor<E>> {
    cfg.validate()?;
    if photometric_per_scale.len() != cfg.num_scales
        || smoothness_per_scale.len() != cfg.num_scales
    {
        return Err(Error::contract(format!(
            "total_loss wants {} scales, got {} photometric and {} smoothness",
            cfg.num_scales,
            photometric_per_scale.len(),
            smoothness_per_scale.len()
        )));
    }
    let mut acc: Option<Tensor<E>> = None;
    for (lp, ls) in photometric_per_scale.iter().zip(smoothness_per_scale) {
        let term = lp.add(&ls.mul_scalar(cfg.lambda)?)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => prev.add(&term)?,
        });
    }
    acc.expect("num_scales >= 1").div_scalar(cfg.num_scales as f64)
}
