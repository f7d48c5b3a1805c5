//! Pinhole camera model, rigid transforms, depth parameterization, and
//! differentiable view synthesis.
//!
//! Coordinate conventions, used everywhere: x right, y down, z forward;
//! pixel (i, j) sits at continuous coordinates (x, y) = (j, i) (integer pixel
//! centers, matching the sampling grids).

use crate::error::{Error, Result};
use crate::tensor::{concat, Element, Tensor};

/// Pinhole intrinsics: pixel focal lengths and principal point offsets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub ox: f64,
    pub oy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, ox: f64, oy: f64) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::config(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        Ok(CameraIntrinsics { fx, fy, ox, oy })
    }
}

/// 6-DoF rigid transform: x' = R x + t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

fn rot_a(u: f64) -> f64 {
    if u <= 1e-2 {
        1.0 - u / 6.0 + u * u / 120.0 - u * u * u / 5040.0
    } else {
        let t = u.sqrt();
        t.sin() / t
    }
}

fn rot_b(u: f64) -> f64 {
    if u <= 1e-2 {
        0.5 - u / 24.0 + u * u / 720.0 - u * u * u / 40320.0
    } else {
        (1.0 - u.sqrt().cos()) / u
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Rodrigues construction: R = I + a(u) K + b(u) K^2 with K = skew(w) and
    /// u = |w|^2, smooth through w = 0.
    pub fn from_axis_angle(w: [f64; 3], t: [f64; 3]) -> Self {
        let (x, y, z) = (w[0], w[1], w[2]);
        let u = x * x + y * y + z * z;
        let a = rot_a(u);
        let b = rot_b(u);
        let rotation = [
            [1.0 - b * (y * y + z * z), -a * z + b * x * y, a * y + b * x * z],
            [a * z + b * x * y, 1.0 - b * (x * x + z * z), -a * x + b * y * z],
            [-a * y + b * x * z, a * x + b * y * z, 1.0 - b * (x * x + y * y)],
        ];
        RigidTransform {
            rotation,
            translation: t,
        }
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let t = &self.translation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let ti = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        RigidTransform {
            rotation: rt,
            translation: ti,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }

    /// Largest deviation of R^T R from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += r[k][i] * r[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - expect).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rotation;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }
}

/// Pose as tensors, `rotation: [N,3,3]`, `translation: [N,3]`; the form the
/// warp consumes so that predicted poses stay differentiable.
#[derive(Debug, Clone)]
pub struct PoseTensors<E: Element> {
    pub rotation: Tensor<E>,
    pub translation: Tensor<E>,
}

impl<E: Element> PoseTensors<E> {
    /// Constant pose tensors replicated over a batch.
    pub fn from_rigid(transforms: &[RigidTransform]) -> Result<Self> {
        let n = transforms.len();
        if n == 0 {
            return Err(Error::dim("empty pose batch"));
        }
        let mut rot = Vec::with_capacity(n * 9);
        let mut tr = Vec::with_capacity(n * 3);
        for t in transforms {
            for row in &t.rotation {
                for &v in row {
                    rot.push(E::from_f64(v));
                }
            }
            for &v in &t.translation {
                tr.push(E::from_f64(v));
            }
        }
        Ok(PoseTensors {
            rotation: Tensor::from_vec(&[n, 3, 3], rot)?,
            translation: Tensor::from_vec(&[n, 3], tr)?,
        })
    }

    /// Differentiable Rodrigues construction from axis-angle `[N,3]` and
    /// translation `[N,3]` tensors.
    pub fn from_axis_angle(axis_angle: &Tensor<E>, translation: &Tensor<E>) -> Result<Self> {
        let n = match axis_angle.shape() {
            [n, 3] => *n,
            s => return Err(Error::dim(format!("axis-angle must be [N,3], got {s:?}"))),
        };
        if translation.shape() != [n, 3] {
            return Err(Error::dim(format!(
                "translation must be [{n},3], got {:?}",
                translation.shape()
            )));
        }
        let wx = axis_angle.slice(&[(0, n), (0, 1)])?;
        let wy = axis_angle.slice(&[(0, n), (1, 2)])?;
        let wz = axis_angle.slice(&[(0, n), (2, 3)])?;
        let xx = wx.mul(&wx)?;
        let yy = wy.mul(&wy)?;
        let zz = wz.mul(&wz)?;
        let u = xx.add(&yy)?.add(&zz)?;
        let a = u.rodrigues_coeff_a()?;
        let b = u.rodrigues_coeff_b()?;
        let one = Tensor::<E>::ones(&[n, 1]);

        let xy = wx.mul(&wy)?;
        let xz = wx.mul(&wz)?;
        let yz = wy.mul(&wz)?;
        let ax = a.mul(&wx)?;
        let ay = a.mul(&wy)?;
        let az = a.mul(&wz)?;

        // R = I + a K + b K^2, entry by entry, each [N,1]
        let r00 = one.sub(&b.mul(&yy.add(&zz)?)?)?;
        let r01 = b.mul(&xy)?.sub(&az)?;
        let r02 = b.mul(&xz)?.add(&ay)?;
        let r10 = b.mul(&xy)?.add(&az)?;
        let r11 = one.sub(&b.mul(&xx.add(&zz)?)?)?;
        let r12 = b.mul(&yz)?.sub(&ax)?;
        let r20 = b.mul(&xz)?.sub(&ay)?;
        let r21 = b.mul(&yz)?.add(&ax)?;
        let r22 = one.sub(&b.mul(&xx.add(&yy)?)?)?;

        let rows = concat(&[&r00, &r01, &r02, &r10, &r11, &r12, &r20, &r21, &r22], 1)?;
        Ok(PoseTensors {
            rotation: rows.reshape(&[n, 3, 3])?,
            translation: translation.clone(),
        })
    }

    pub fn batch(&self) -> usize {
        self.rotation.shape()[0]
    }

    /// Detached rigid transform of batch item `i`.
    pub fn to_rigid(&self, i: usize) -> Result<RigidTransform> {
        let n = self.batch();
        if i >= n {
            return Err(Error::dim(format!("pose index {i} out of batch {n}")));
        }
        let rv = self.rotation.values();
        let tv = self.translation.values();
        let mut rotation = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r][c] = rv[i * 9 + r * 3 + c].to_f64();
            }
        }
        Ok(RigidTransform {
            rotation,
            translation: [
                tv[i * 3].to_f64(),
                tv[i * 3 + 1].to_f64(),
                tv[i * 3 + 2].to_f64(),
            ],
        })
    }
}

/// Depth values in meters, `[N,1,H,W]`, all inside [d_min, d_max].
#[derive(Debug, Clone)]
pub struct DepthMap<E: Element> {
    pub values: Tensor<E>,
    pub d_min: f64,
    pub d_max: f64,
}

impl<E: Element> DepthMap<E> {
    pub fn new(values: Tensor<E>, d_min: f64, d_max: f64) -> Result<Self> {
        if !(0.0 < d_min && d_min < d_max) {
            return Err(Error::config(format!(
                "depth range must satisfy 0 < d_min < d_max, got [{d_min}, {d_max}]"
            )));
        }
        let (_, c, _, _) = values.dims4()?;
        if c != 1 {
            return Err(Error::dim("depth map must have a single channel"));
        }
        let lo = E::from_f64(d_min);
        let hi = E::from_f64(d_max);
        if values
            .values()
            .iter()
            .any(|v| !v.is_finite() || *v < lo || *v > hi)
        {
            return Err(Error::domain(format!(
                "depth values outside [{d_min}, {d_max}]"
            )));
        }
        Ok(DepthMap {
            values,
            d_min,
            d_max,
        })
    }

    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let (n, _, h, w) = self.values.dims4()?;
        Ok((n, h, w))
    }
}

const Z_EPSILON: f64 = 1e-6;

/// Constant pixel-coordinate grids `x[1,1,H,W]`, `y[1,1,H,W]`.
fn pixel_grids<E: Element>(h: usize, w: usize) -> (Tensor<E>, Tensor<E>) {
    let xs: Vec<E> = (0..w).map(|j| E::from_f64(j as f64)).collect();
    let ys: Vec<E> = (0..h).map(|i| E::from_f64(i as f64)).collect();
    let xrow = Tensor::from_vec(&[1, 1, 1, w], xs).expect("grid");
    let ycol = Tensor::from_vec(&[1, 1, h, 1], ys).expect("grid");
    let zeros = Tensor::<E>::zeros(&[1, 1, h, w]);
    (
        zeros.add(&xrow).expect("grid"),
        zeros.add(&ycol).expect("grid"),
    )
}

/// x = fx*X/Z + ox, y = fy*Y/Z + oy. Any Z <= 1e-6 is a domain error; the
/// masked projection inside [`warp_image`] handles invalid depths instead.
pub fn project<E: Element>(points: &Tensor<E>, k: &CameraIntrinsics) -> Result<Tensor<E>> {
    let (n, c, h, w) = points.dims4()?;
    if c != 3 {
        return Err(Error::dim(format!(
            "project wants [N,3,H,W], got {c} channels"
        )));
    }
    let eps = E::from_f64(Z_EPSILON);
    let z = points.slice(&[(0, n), (2, 3), (0, h), (0, w)])?;
    if z.values().iter().any(|v| *v <= eps) {
        return Err(Error::domain(format!("projection with Z <= {Z_EPSILON}")));
    }
    let x = points.slice(&[(0, n), (0, 1), (0, h), (0, w)])?;
    let y = points.slice(&[(0, n), (1, 2), (0, h), (0, w)])?;
    let px = x.div(&z)?.mul_scalar(k.fx)?.add_scalar(k.ox)?;
    let py = y.div(&z)?.mul_scalar(k.fy)?.add_scalar(k.oy)?;
    concat(&[&px, &py], 1)
}

/// Inverse of [`project`]: X = (x - ox) Z / fx, Y = (y - oy) Z / fy.
pub fn backproject<E: Element>(depth: &DepthMap<E>, k: &CameraIntrinsics) -> Result<Tensor<E>> {
    let (_, h, w) = depth.dims()?;
    let (xg, yg) = pixel_grids::<E>(h, w);
    let z = &depth.values;
    let x = xg.add_scalar(-k.ox)?.mul(z)?.div_scalar(k.fx)?;
    let y = yg.add_scalar(-k.oy)?.mul(z)?.div_scalar(k.fy)?;
    concat(&[&x, &y, &z.clone()], 1)
}

/// Applies x' = R x + t channelwise on `[N,3,H,W]` points.
pub fn transform_points<E: Element>(
    points: &Tensor<E>,
    pose: &PoseTensors<E>,
) -> Result<Tensor<E>> {
    let (n, c, h, w) = points.dims4()?;
    if c != 3 {
        return Err(Error::dim("transform_points wants [N,3,H,W]"));
    }
    let pn = pose.batch();
    if pn != n {
        return Err(Error::dim(format!(
            "pose batch {pn} does not match point batch {n}"
        )));
    }
    let chans: Vec<Tensor<E>> = (0..3)
        .map(|ch| points.slice(&[(0, n), (ch, ch + 1), (0, h), (0, w)]))
        .collect::<Result<_>>()?;
    let mut out_rows = Vec::with_capacity(3);
    for i in 0..3 {
        let mut acc = pose
            .translation
            .slice(&[(0, n), (i, i + 1)])?
            .reshape(&[n, 1, 1, 1])?
            .add(&Tensor::<E>::zeros(&[1, 1, 1, 1]))?;
        for (j, chan) in chans.iter().enumerate() {
            let rij = pose
                .rotation
                .slice(&[(0, n), (i, i + 1), (j, j + 1)])?
                .reshape(&[n, 1, 1, 1])?;
            acc = acc.add(&chan.mul(&rij)?)?;
        }
        out_rows.push(acc);
    }
    concat(&[&out_rows[0], &out_rows[1], &out_rows[2]], 1)
}

/// Synthesizes the target view from a source image: backproject the target
/// pixels with the target depth, transform into the source camera, project,
/// and bilinearly sample the source there.
///
/// Returns (synthesized image, validity mask). The mask is 1 where the
/// sampled location lies inside the source frame and the transformed depth is
/// positive; invalid pixels are masked rather than raised. Differentiable
/// w.r.t. the source image, the depth, and the pose tensors.
pub fn warp_image<E: Element>(
    source: &Tensor<E>,
    target_depth: &DepthMap<E>,
    pose: &PoseTensors<E>,
    k: &CameraIntrinsics,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let (n, _c, h, w) = source.dims4()?;
    let (dn, dh, dw) = target_depth.dims()?;
    if (dn, dh, dw) != (n, h, w) {
        return Err(Error::dim(format!(
            "depth {dn}x{dh}x{dw} does not match source {n}x{h}x{w}"
        )));
    }
    let cam_points = backproject(target_depth, k)?;
    let moved = transform_points(&cam_points, pose)?;

    let x = moved.slice(&[(0, n), (0, 1), (0, h), (0, w)])?;
    let y = moved.slice(&[(0, n), (1, 2), (0, h), (0, w)])?;
    let z = moved.slice(&[(0, n), (2, 3), (0, h), (0, w)])?;

    // Guarded projection: clamp Z away from zero, mask what was invalid.
    let z_safe = z.clamp_min(Z_EPSILON)?;
    let px = x.div(&z_safe)?.mul_scalar(k.fx)?.add_scalar(k.ox)?;
    let py = y.div(&z_safe)?.mul_scalar(k.fy)?.add_scalar(k.oy)?;

    // Validity from raw values: in front of the camera and inside the
    // frame. The frame bound carries a sub-pixel slack so that border
    // pixels of an identity warp do not flicker on float rounding.
    const EDGE_SLACK: f64 = 1e-9;
    let mask_vals: Vec<E> = z
        .values()
        .iter()
        .zip(px.values())
        .zip(py.values())
        .map(|((&zv, &xv), &yv)| {
            let inside = zv.to_f64() > Z_EPSILON
                && xv.to_f64() >= -EDGE_SLACK
                && xv.to_f64() <= (w - 1) as f64 + EDGE_SLACK
                && yv.to_f64() >= -EDGE_SLACK
                && yv.to_f64() <= (h - 1) as f64 + EDGE_SLACK;
            if inside {
                E::ONE
            } else {
                E::ZERO
            }
        })
        .collect();
    let valid_mask = Tensor::from_vec(&[n, 1, h, w], mask_vals)?;

    let gx = px.reshape(&[n, h, w, 1])?;
    let gy = py.reshape(&[n, h, w, 1])?;
    let grid = concat(&[&gx, &gy], 3)?;
    let synthesized = source.bilinear_sample_pixel(&grid)?;
    Ok((synthesized, valid_mask))
}

/// Convenience wrapper for a constant relative pose.
pub fn warp_image_rigid<E: Element>(
    source: &Tensor<E>,
    target_depth: &DepthMap<E>,
    transform: &RigidTransform,
    k: &CameraIntrinsics,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let (n, _, _, _) = source.dims4()?;
    let pose = PoseTensors::from_rigid(&vec![*transform; n])?;
    warp_image(source, target_depth, &pose, k)
}

/// Maps sigmoid-range disparity to metric depth:
/// depth = 1 / (1/d_max + disp * (1/d_min - 1/d_max)), a monotone decreasing
/// bijection from (0,1) onto (d_min, d_max). Disparity outside the open unit
/// interval is a domain error.
pub fn disparity_to_depth<E: Element>(
    disp: &Tensor<E>,
    d_min: f64,
    d_max: f64,
) -> Result<DepthMap<E>> {
    if !(0.0 < d_min && d_min < d_max) {
        return Err(Error::config(format!(
            "depth range must satisfy 0 < d_min < d_max, got [{d_min}, {d_max}]"
        )));
    }
    if disp
        .values()
        .iter()
        .any(|v| v.to_f64() <= 0.0 || v.to_f64() >= 1.0)
    {
        return Err(Error::domain("disparity must lie strictly inside (0, 1)"));
    }
    let span = 1.0 / d_min - 1.0 / d_max;
    let depth = disp.mul_scalar(span)?.add_scalar(1.0 / d_max)?.recip()?;
    // range follows from monotonicity of the map
    Ok(DepthMap {
        values: depth,
        d_min,
        d_max,
    })
}
