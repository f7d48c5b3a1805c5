//! Procedural scene generator: a textured floor, a back wall, and a few boxes
//! ray-cast under Lambertian shading from three nearby viewpoints, with exact
//! per-pixel depth for the middle (target) view.
//!
//! Photometric constancy holds by construction (view-independent shading and
//! no specularities), so warping a source frame into the target with the
//! emitted depth and pose must reproduce the target. Every sample is
//! self-checked against that oracle before it is returned.

use crate::error::{Error, Result};
use crate::geometry::{warp_image_rigid, CameraIntrinsics, DepthMap, RigidTransform};
use crate::rng::{splitmix64, Rng};
use crate::tensor::{concat, Element, Tensor};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub image_h: usize,
    pub image_w: usize,
    /// Camera height above the floor, drawn from this range (meters).
    pub camera_height: (f64, f64),
    /// Distance to the back wall (meters).
    pub wall_distance: (f64, f64),
    pub num_boxes: (usize, usize),
    /// Box edge lengths (meters): width, height, depth ranges.
    pub box_width: (f64, f64),
    pub box_height: (f64, f64),
    pub box_depth: (f64, f64),
    /// Box distance band in front of the camera (meters).
    pub box_z: (f64, f64),
    /// Lateral source-camera motion magnitude (meters).
    pub motion_lateral: (f64, f64),
    /// Vertical / forward motion bounds (meters, symmetric).
    pub motion_vertical: f64,
    pub motion_forward: f64,
    /// Rotation bound per axis (radians, symmetric).
    pub rotation: f64,
    pub texture_octaves: usize,
    /// Focal length as a multiple of the image height (so stretched widths
    /// keep the same vertical geometry).
    pub focal_factor: f64,
    /// Depth bounds every emitted sample must respect.
    pub depth_min: f64,
    pub depth_max: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            image_h: 96,
            image_w: 160,
            camera_height: (1.3, 1.7),
            wall_distance: (9.0, 13.0),
            num_boxes: (2, 4),
            box_width: (0.6, 1.6),
            box_height: (0.6, 2.0),
            box_depth: (0.5, 1.4),
            box_z: (4.0, 8.0),
            motion_lateral: (0.10, 0.26),
            motion_vertical: 0.04,
            motion_forward: 0.10,
            rotation: 0.012,
            texture_octaves: 3,
            focal_factor: 1.25,
            depth_min: 2.0,
            depth_max: 15.0,
            seed: 1,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_h < 8 || self.image_w < 8 {
            return Err(Error::config("scene images must be at least 8x8"));
        }
        if self.num_boxes.0 > self.num_boxes.1 {
            return Err(Error::config("invalid box count range"));
        }
        if !(0.0 < self.depth_min && self.depth_min < self.depth_max) {
            return Err(Error::config("invalid scene depth range"));
        }
        if self.wall_distance.1 >= self.depth_max {
            return Err(Error::config(
                "wall distance must stay below the depth bound",
            ));
        }
        if self.texture_octaves == 0 || self.texture_octaves > 8 {
            return Err(Error::config("texture_octaves must be in 1..=8"));
        }
        Ok(())
    }
}

/// Axis-aligned box, recorded so tests can compare placements across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxPlacement {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

/// One training example: target frame, two source frames, exact target
/// depth, target-to-source poses, and the shared intrinsics.
#[derive(Debug, Clone)]
pub struct SceneSample<E: Element> {
    pub target: Tensor<E>,
    pub sources: [Tensor<E>; 2],
    pub gt_depth: DepthMap<E>,
    pub poses: [RigidTransform; 2],
    pub k: CameraIntrinsics,
    pub boxes: Vec<BoxPlacement>,
    /// Per-pixel surface id of the target view (0 floor, 1 wall, 2+ boxes).
    pub surface_ids: Vec<u16>,
}

struct Scene {
    floor_y: f64,
    wall_z: f64,
    boxes: Vec<BoxPlacement>,
    octaves: usize,
    texture_seed: u64,
}

#[derive(Clone, Copy)]
struct Hit {
    t: f64,
    surface: u16,
    normal: [f64; 3],
    /// Face-local texture coordinates.
    uv: (f64, f64),
}

const RAY_EPS: f64 = 1e-9;

fn hash01(seed: u64, a: i64, b: i64, c: u64) -> f64 {
    let mut s = seed
        ^ (a as u64).wrapping_mul(0x9e3779b97f4a7c15)
        ^ (b as u64).wrapping_mul(0xc2b2ae3d27d4eb4f)
        ^ c.wrapping_mul(0x165667b19e3779f9);
    (splitmix64(&mut s) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave value noise in [0, 1], C1-smooth in (u, v).
fn value_noise(seed: u64, surface: u16, octaves: usize, u: f64, v: f64) -> f64 {
    let mut total = 0.0;
    let mut amp = 1.0;
    let mut norm = 0.0;
    let mut freq = 0.9;
    for o in 0..octaves {
        let x = u * freq;
        let y = v * freq;
        let ix = x.floor() as i64;
        let iy = y.floor() as i64;
        let fx = smoothstep(x - ix as f64);
        let fy = smoothstep(y - iy as f64);
        let key = (surface as u64) << 4 | o as u64;
        let v00 = hash01(seed, ix, iy, key);
        let v10 = hash01(seed, ix + 1, iy, key);
        let v01 = hash01(seed, ix, iy + 1, key);
        let v11 = hash01(seed, ix + 1, iy + 1, key);
        let val = v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy;
        total += amp * val;
        norm += amp;
        amp *= 0.55;
        freq *= 2.1;
    }
    total / norm
}

impl Scene {
    fn intersect(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut consider = |hit: Hit| {
            if hit.t > RAY_EPS && best.map_or(true, |b| hit.t < b.t) {
                best = Some(hit);
            }
        };

        // floor y = floor_y, visible from above (camera y < floor_y)
        if dir[1] > RAY_EPS {
            let t = (self.floor_y - origin[1]) / dir[1];
            let p = [origin[0] + t * dir[0], origin[2] + t * dir[2]];
            consider(Hit {
                t,
                surface: 0,
                normal: [0.0, -1.0, 0.0],
                uv: (p[0], p[1]),
            });
        }
        // back wall z = wall_z, facing the camera
        if dir[2] > RAY_EPS {
            let t = (self.wall_z - origin[2]) / dir[2];
            let p = [origin[0] + t * dir[0], origin[1] + t * dir[1]];
            consider(Hit {
                t,
                surface: 1,
                normal: [0.0, 0.0, -1.0],
                uv: (p[0], p[1]),
            });
        }
        for (bi, b) in self.boxes.iter().enumerate() {
            if let Some(hit) = ray_box(origin, dir, b, 2 + bi as u16) {
                consider(hit);
            }
        }
        best
    }

    fn shade(&self, hit: &Hit) -> [f64; 3] {
        // fixed directional light, pointing down / forward / slightly right
        const LIGHT: [f64; 3] = [0.22, 0.87, 0.44];
        let norm = (LIGHT[0] * LIGHT[0] + LIGHT[1] * LIGHT[1] + LIGHT[2] * LIGHT[2]).sqrt();
        let ndotl = -(hit.normal[0] * LIGHT[0] + hit.normal[1] * LIGHT[1] + hit.normal[2] * LIGHT[2])
            / norm;
        let shade = 0.35 + 0.65 * ndotl.max(0.0);
        let noise = value_noise(
            self.texture_seed,
            hit.surface,
            self.octaves,
            hit.uv.0,
            hit.uv.1,
        );
        let mut color = [0.0; 3];
        for (c, chan) in color.iter_mut().enumerate() {
            let base = 0.35 + 0.55 * hash01(self.texture_seed, hit.surface as i64, c as i64, 7777);
            *chan = (base * (0.45 + 0.55 * noise) * shade).clamp(0.0, 1.0);
        }
        color
    }
}

fn ray_box(origin: [f64; 3], dir: [f64; 3], b: &BoxPlacement, surface: u16) -> Option<Hit> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0usize;
    let mut near_sign = -1.0;
    for ax in 0..3 {
        if dir[ax].abs() < 1e-12 {
            if origin[ax] < b.lo[ax] || origin[ax] > b.hi[ax] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[ax];
        let mut t1 = (b.lo[ax] - origin[ax]) * inv;
        let mut t2 = (b.hi[ax] - origin[ax]) * inv;
        let mut sign = -1.0; // entering through the low face
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
            sign = 1.0;
        }
        if t1 > t_near {
            t_near = t1;
            near_axis = ax;
            near_sign = sign;
        }
        t_far = t_far.min(t2);
        if t_near > t_far {
            return None;
        }
    }
    if t_near <= RAY_EPS || !t_near.is_finite() {
        return None;
    }
    let mut normal = [0.0; 3];
    normal[near_axis] = near_sign;
    let p = [
        origin[0] + t_near * dir[0],
        origin[1] + t_near * dir[1],
        origin[2] + t_near * dir[2],
    ];
    let uv = match near_axis {
        0 => (p[2], p[1]),
        1 => (p[0], p[2]),
        _ => (p[0], p[1]),
    };
    Some(Hit {
        t: t_near,
        surface,
        normal,
        uv,
    })
}

struct Render<E: Element> {
    image: Tensor<E>,
    depth: Vec<f64>,
    surfaces: Vec<u16>,
}

/// Renders one view. `cam` maps target-frame points into this camera's frame
/// (identity for the target itself).
fn render_view<E: Element>(
    scene: &Scene,
    k: &CameraIntrinsics,
    h: usize,
    w: usize,
    cam: &RigidTransform,
) -> Result<Render<E>> {
    let inv = cam.inverse();
    let origin = inv.translation;
    let mut pixels = vec![E::ZERO; 3 * h * w];
    let mut depth = vec![0.0; h * w];
    let mut surfaces = vec![0u16; h * w];
    for i in 0..h {
        for j in 0..w {
            let d_cam = [
                (j as f64 - k.ox) / k.fx,
                (i as f64 - k.oy) / k.fy,
                1.0,
            ];
            // direction in the target/world frame
            let d = [
                inv.rotation[0][0] * d_cam[0] + inv.rotation[0][1] * d_cam[1] + inv.rotation[0][2],
                inv.rotation[1][0] * d_cam[0] + inv.rotation[1][1] * d_cam[1] + inv.rotation[1][2],
                inv.rotation[2][0] * d_cam[0] + inv.rotation[2][1] * d_cam[1] + inv.rotation[2][2],
            ];
            let hit = scene.intersect(origin, d).ok_or_else(|| {
                Error::Generation(format!("ray ({i},{j}) escaped the scene"))
            })?;
            let color = scene.shade(&hit);
            for c in 0..3 {
                pixels[(c * h + i) * w + j] = E::from_f64(color[c]);
            }
            // camera-frame depth of the hit point
            let p = [
                origin[0] + hit.t * d[0],
                origin[1] + hit.t * d[1],
                origin[2] + hit.t * d[2],
            ];
            depth[i * w + j] = cam.apply(p)[2];
            surfaces[i * w + j] = hit.surface;
        }
    }
    Ok(Render {
        image: Tensor::from_vec(&[3, h, w], pixels)?,
        depth,
        surfaces,
    })
}

fn build_scene(spec: &SceneSpec, rng: &mut Rng) -> Scene {
    let floor_y = rng.range(spec.camera_height.0, spec.camera_height.1);
    let wall_z = rng.range(spec.wall_distance.0, spec.wall_distance.1);
    let n_boxes = rng.range_usize(spec.num_boxes.0, spec.num_boxes.1);
    let mut boxes = Vec::with_capacity(n_boxes);
    for _ in 0..n_boxes {
        let width = rng.range(spec.box_width.0, spec.box_width.1);
        let height = rng.range(spec.box_height.0, spec.box_height.1).min(floor_y * 0.9);
        let depth = rng.range(spec.box_depth.0, spec.box_depth.1);
        let z0 = rng.range(spec.box_z.0, (spec.box_z.1).min(wall_z - depth - 0.3));
        // keep the box roughly inside the viewing frustum at its distance
        let half_span = 0.45 * z0;
        let xc = rng.range(-half_span, half_span);
        boxes.push(BoxPlacement {
            lo: [xc - width / 2.0, floor_y - height, z0],
            hi: [xc + width / 2.0, floor_y, z0 + depth],
        });
    }
    Scene {
        floor_y,
        wall_z,
        boxes,
        octaves: spec.texture_octaves,
        texture_seed: rng.next_u64(),
    }
}

fn draw_poses(spec: &SceneSpec, rng: &mut Rng) -> [RigidTransform; 2] {
    let mut make = |sign: f64| {
        let tx = sign * rng.range(spec.motion_lateral.0, spec.motion_lateral.1);
        let ty = rng.symmetric(spec.motion_vertical);
        let tz = rng.symmetric(spec.motion_forward);
        let w = [
            rng.symmetric(spec.rotation),
            rng.symmetric(spec.rotation),
            rng.symmetric(spec.rotation),
        ];
        RigidTransform::from_axis_angle(w, [tx, ty, tz])
    };
    [make(1.0), make(-1.0)]
}

/// Masked mean absolute difference between a warped source and the target.
fn warp_consistency<E: Element>(
    sample_target: &Tensor<E>,
    source: &Tensor<E>,
    depth: &DepthMap<E>,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
) -> Result<(f64, f64)> {
    let (_, h, w) = depth.dims()?;
    let target = sample_target.reshape(&[1, 3, h, w])?;
    let src = source.reshape(&[1, 3, h, w])?;
    let (syn, mask) = warp_image_rigid(&src, depth, pose, k)?;
    let mut err = 0.0;
    let mut count = 0.0;
    for p in 0..h * w {
        if mask.values()[p].to_f64() == 1.0 {
            count += 1.0;
            let mut e = 0.0;
            for c in 0..3 {
                e += (syn.values()[c * h * w + p].to_f64()
                    - target.values()[c * h * w + p].to_f64())
                .abs();
            }
            err += e / 3.0;
        }
    }
    if count == 0.0 {
        return Ok((1.0, 0.0));
    }
    Ok((err / count, count / (h * w) as f64))
}

/// Upper bound accepted by the per-sample photometric self-check.
pub const WARP_CONSISTENCY_BOUND: f64 = 0.02;
/// Minimum fraction of target pixels that must stay visible in each source.
pub const VISIBILITY_BOUND: f64 = 0.70;

const MAX_ATTEMPTS: usize = 100;

/// Generates one photometrically consistent sample, retrying placement and
/// motion draws until the warp self-check and the visibility bound hold.
pub fn generate_scene<E: Element>(spec: &SceneSpec) -> Result<SceneSample<E>> {
    spec.validate()?;
    let (h, w) = (spec.image_h, spec.image_w);
    let focal = spec.focal_factor * h as f64;
    let k = CameraIntrinsics::new(
        focal,
        focal,
        (w - 1) as f64 / 2.0,
        (h - 1) as f64 / 2.0,
    )?;

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = Rng::child(spec.seed, attempt as u64);
        let scene = build_scene(spec, &mut rng);
        let poses = draw_poses(spec, &mut rng);

        let target = render_view::<E>(&scene, &k, h, w, &RigidTransform::identity())?;
        let depth_ok = target
            .depth
            .iter()
            .all(|&d| d.is_finite() && d >= spec.depth_min && d <= spec.depth_max);
        if !depth_ok {
            continue;
        }
        let gt_depth = DepthMap::new(
            Tensor::from_vec(&[1, 1, h, w], target.depth.iter().map(|&d| E::from_f64(d)).collect())?,
            spec.depth_min,
            spec.depth_max,
        )?;

        let src0 = render_view::<E>(&scene, &k, h, w, &poses[0])?;
        let src1 = render_view::<E>(&scene, &k, h, w, &poses[1])?;

        let mut ok = true;
        for (src, pose) in [(&src0, &poses[0]), (&src1, &poses[1])] {
            let (l1, visible) =
                warp_consistency(&target.image, &src.image, &gt_depth, pose, &k)?;
            if l1 >= WARP_CONSISTENCY_BOUND || visible < VISIBILITY_BOUND {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }

        return Ok(SceneSample {
            target: target.image,
            sources: [src0.image, src1.image],
            gt_depth,
            poses,
            k,
            boxes: scene.boxes,
            surface_ids: target.surfaces,
        });
    }
    Err(Error::Generation(format!(
        "no valid scene after {MAX_ATTEMPTS} attempts (seed {})",
        spec.seed
    )))
}

/// Deterministic stream of samples; per-sample seeds derive from the master
/// seed, and the even/odd index parity gives a stable train/val split.
pub fn dataset<E: Element>(
    spec: &SceneSpec,
    count: usize,
    master_seed: u64,
) -> impl Iterator<Item = Result<SceneSample<E>>> {
    let spec = spec.clone();
    (0..count).map(move |i| {
        let mut seed_state = master_seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15);
        let sample_seed = splitmix64(&mut seed_state);
        generate_scene(&SceneSpec {
            seed: sample_seed,
            ..spec.clone()
        })
    })
}

/// Stacks per-sample images into batched `[N,...]` tensors for training.
pub fn stack_samples<E: Element>(
    samples: &[&SceneSample<E>],
) -> Result<(Tensor<E>, [Tensor<E>; 2], DepthMap<E>)> {
    if samples.is_empty() {
        return Err(Error::dim("empty batch"));
    }
    let [c, h, w] = match samples[0].target.shape() {
        [c, h, w] => [*c, *h, *w],
        s => return Err(Error::dim(format!("unexpected target shape {s:?}"))),
    };
    let stack_images = |pick: &dyn Fn(&SceneSample<E>) -> &Tensor<E>| -> Result<Tensor<E>> {
        let parts: Vec<Tensor<E>> = samples
            .iter()
            .map(|s| pick(s).reshape(&[1, c, h, w]))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor<E>> = parts.iter().collect();
        concat(&refs, 0)
    };
    let targets = stack_images(&|s| &s.target)?;
    let src0 = stack_images(&|s| &s.sources[0])?;
    let src1 = stack_images(&|s| &s.sources[1])?;
    let depth_parts: Vec<Tensor<E>> = samples
        .iter()
        .map(|s| s.gt_depth.values.clone())
        .collect();
    let depth_refs: Vec<&Tensor<E>> = depth_parts.iter().collect();
    let depth = DepthMap::new(
        concat(&depth_refs, 0)?,
        samples[0].gt_depth.d_min,
        samples[0].gt_depth.d_max,
    )?;
    Ok((targets, [src0, src1], depth))
}
