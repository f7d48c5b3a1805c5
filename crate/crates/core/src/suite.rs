//! The registered gradient-check suite: every differentiable operation in
//! the crate, each compared against central finite differences on small
//! fixed-seed inputs. The command-line `gradcheck` command and the acceptance
//! tests both run this table.

use crate::daccn::{
    cumulative_convolution, direction_aware_block, ConvBlockParams, CumulativeConvParams,
    DirectionScales,
};
use crate::error::Result;
use crate::geometry::{
    disparity_to_depth, warp_image, CameraIntrinsics, DepthMap, PoseTensors, RigidTransform,
};
use crate::losses::{photometric_loss, smoothness_loss, ssim, LossConfig};
use crate::rng::Rng;
use crate::tensor::{finite_diff_check, Activation, Tensor};

pub struct CaseResult {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.cases.iter().all(|c| c.pass)
    }

    /// One line per case: name, measured error, tolerance, verdict.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} {:>14} {:>10} {:>8}\n",
            "operation", "max rel err", "tolerance", "status"
        ));
        for c in &self.cases {
            out.push_str(&format!(
                "{:<28} {:>14.3e} {:>10.0e} {:>8}\n",
                c.name,
                c.max_rel_err,
                c.tolerance,
                if c.pass { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

type CaseFn = Box<dyn Fn() -> Result<f64>>;

pub struct GradCheckCase {
    pub name: &'static str,
    pub tolerance: f64,
    run: CaseFn,
}

impl GradCheckCase {
    fn new(name: &'static str, tolerance: f64, run: impl Fn() -> Result<f64> + 'static) -> Self {
        GradCheckCase {
            name,
            tolerance,
            run: Box::new(run),
        }
    }

    pub fn execute(&self) -> Result<CaseResult> {
        let max_rel_err = (self.run)()?;
        Ok(CaseResult {
            name: self.name,
            max_rel_err,
            tolerance: self.tolerance,
            pass: max_rel_err < self.tolerance,
        })
    }
}

fn rand_t(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.range(lo, hi)).collect()).unwrap()
}

/// A fixed random weighting turns tensor outputs into a scalar without the
/// cancellation blind spots a plain sum would have.
fn seeded_probe(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    rand_t(rng, shape, -1.0, 1.0)
}

/// Builds the standard suite. Tolerances: 1e-6 for smooth coordinate-free
/// operations, 1e-4 where a sampling-grid or scale path is involved.
pub fn standard_suite() -> Vec<GradCheckCase> {
    let mut cases = Vec::new();

    cases.push(GradCheckCase::new("elementwise_add_sub", 1e-6, || {
        let mut rng = Rng::seed_from(101);
        let a = rand_t(&mut rng, &[2, 3, 4], -2.0, 2.0);
        let b = rand_t(&mut rng, &[2, 3, 4], -2.0, 2.0);
        let probe = seeded_probe(&mut rng, &[2, 3, 4]);
        finite_diff_check(
            |t| t[0].add(&t[1])?.sub(&t[0].mul_scalar(0.3)?)?.mul(&probe)?.sum_all(),
            &[a, b],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("elementwise_mul_div", 1e-6, || {
        let mut rng = Rng::seed_from(102);
        let a = rand_t(&mut rng, &[3, 5], -2.0, 2.0);
        let b = rand_t(&mut rng, &[3, 5], 0.5, 3.0);
        let probe = seeded_probe(&mut rng, &[3, 5]);
        finite_diff_check(
            |t| t[0].mul(&t[0])?.div(&t[1])?.mul(&probe)?.sum_all(),
            &[a, b],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("broadcasting", 1e-6, || {
        let mut rng = Rng::seed_from(103);
        let a = rand_t(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let b = rand_t(&mut rng, &[1, 3, 1], 0.5, 2.0);
        let probe = seeded_probe(&mut rng, &[2, 3, 4]);
        finite_diff_check(
            |t| t[0].mul(&t[1])?.add(&t[1])?.mul(&probe)?.sum_all(),
            &[a, b],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("activation_elu", 1e-6, || {
        let mut rng = Rng::seed_from(104);
        let x = rand_t(&mut rng, &[4, 6], -2.0, 2.0);
        let probe = seeded_probe(&mut rng, &[4, 6]);
        finite_diff_check(|t| t[0].elu()?.mul(&probe)?.sum_all(), &[x], 1e-5)
    }));

    cases.push(GradCheckCase::new("activation_sigmoid", 1e-6, || {
        let mut rng = Rng::seed_from(105);
        let x = rand_t(&mut rng, &[4, 6], -3.0, 3.0);
        let probe = seeded_probe(&mut rng, &[4, 6]);
        finite_diff_check(|t| t[0].sigmoid()?.mul(&probe)?.sum_all(), &[x], 1e-5)
    }));

    cases.push(GradCheckCase::new("exp_abs_recip", 1e-6, || {
        let mut rng = Rng::seed_from(106);
        let x = rand_t(&mut rng, &[3, 4], 0.3, 2.0);
        let probe = seeded_probe(&mut rng, &[3, 4]);
        finite_diff_check(
            |t| {
                let e = t[0].mul_scalar(-1.0)?.exp()?;
                let r = t[0].recip()?;
                e.add(&r)?.abs()?.mul(&probe)?.sum_all()
            },
            &[x],
            1e-6,
        )
    }));

    cases.push(GradCheckCase::new("minimum_maximum", 1e-6, || {
        let mut rng = Rng::seed_from(107);
        let a = rand_t(&mut rng, &[5, 5], -1.0, 1.0);
        let b = rand_t(&mut rng, &[5, 5], -1.0, 1.0);
        let probe = seeded_probe(&mut rng, &[5, 5]);
        finite_diff_check(
            |t| {
                t[0].minimum(&t[1])?
                    .add(&t[0].maximum(&t[1])?)?
                    .mul(&probe)?
                    .sum_all()
            },
            &[a, b],
            1e-6,
        )
    }));

    cases.push(GradCheckCase::new("reduce_mean_sum", 1e-6, || {
        let mut rng = Rng::seed_from(108);
        let x = rand_t(&mut rng, &[2, 3, 4], -1.0, 1.0);
        finite_diff_check(
            |t| {
                let m = t[0].mean_axes(&[1], true)?;
                t[0].sub(&m)?.mul(&t[0])?.sum_axes(&[0, 2], false)?.mean_all()
            },
            &[x],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("structural_slice_concat", 1e-6, || {
        let mut rng = Rng::seed_from(109);
        let x = rand_t(&mut rng, &[1, 2, 4, 5], -1.0, 1.0);
        let probe = seeded_probe(&mut rng, &[1, 4, 4, 4]);
        finite_diff_check(
            |t| {
                let left = t[0].slice(&[(0, 1), (0, 2), (0, 4), (0, 4)])?;
                let right = t[0].slice(&[(0, 1), (0, 2), (0, 4), (1, 5)])?;
                crate::tensor::concat(&[&left, &right], 1)?
                    .mul(&probe)?
                    .sum_all()
            },
            &[x],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("pad_reflect_box_filter", 1e-6, || {
        let mut rng = Rng::seed_from(110);
        let x = rand_t(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        let probe = seeded_probe(&mut rng, &[1, 2, 5, 6]);
        finite_diff_check(
            |t| {
                t[0].pad_reflect2d(1)?
                    .box_filter3x3()?
                    .mul(&probe)?
                    .sum_all()
            },
            &[x],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("conv2d", 1e-6, || {
        let mut rng = Rng::seed_from(111);
        let x = rand_t(&mut rng, &[1, 2, 5, 5], -1.0, 1.0);
        let w = rand_t(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
        let b = rand_t(&mut rng, &[3], -0.2, 0.2);
        let probe = seeded_probe(&mut rng, &[1, 3, 5, 5]);
        finite_diff_check(
            |t| t[0].conv2d(&t[1], &t[2], 1, 1)?.mul(&probe)?.sum_all(),
            &[x, w, b],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("conv2d_strided", 1e-6, || {
        let mut rng = Rng::seed_from(112);
        let x = rand_t(&mut rng, &[2, 2, 6, 6], -1.0, 1.0);
        let w = rand_t(&mut rng, &[2, 2, 4, 4], -0.5, 0.5);
        let b = rand_t(&mut rng, &[2], -0.2, 0.2);
        let probe = seeded_probe(&mut rng, &[2, 2, 3, 3]);
        finite_diff_check(
            |t| t[0].conv2d(&t[1], &t[2], 2, 1)?.mul(&probe)?.sum_all(),
            &[x, w, b],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("bilinear_sample_values", 1e-6, || {
        let mut rng = Rng::seed_from(113);
        let x = rand_t(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        // fixed interior grid away from integer coordinates
        let mut gv = Vec::new();
        for i in 0..4 {
            for j in 0..5 {
                gv.push(2.0 * (j as f64 + 0.37) / 5.0 - 1.0);
                gv.push(2.0 * (i as f64 + 0.43) / 4.0 - 1.0);
            }
        }
        let grid = Tensor::from_vec(&[1, 4, 5, 2], gv).unwrap();
        let probe = seeded_probe(&mut rng, &[1, 2, 4, 5]);
        finite_diff_check(
            |t| t[0].bilinear_sample(&grid)?.mul(&probe)?.sum_all(),
            &[x],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("bilinear_sample_grid", 1e-4, || {
        let mut rng = Rng::seed_from(114);
        let x = rand_t(&mut rng, &[1, 2, 6, 7], -1.0, 1.0);
        let mut gv = Vec::new();
        for i in 0..4 {
            for j in 0..5 {
                gv.push(2.0 * (j as f64 + rng.range(0.25, 0.75)) / 6.0 - 1.0);
                gv.push(2.0 * (i as f64 + rng.range(0.25, 0.75)) / 5.0 - 1.0);
            }
        }
        let grid = Tensor::from_vec(&[1, 4, 5, 2], gv).unwrap();
        let probe = seeded_probe(&mut rng, &[1, 2, 4, 5]);
        finite_diff_check(
            |t| x.bilinear_sample(&t[0])?.mul(&probe)?.sum_all(),
            &[grid],
            1e-6,
        )
    }));

    cases.push(GradCheckCase::new("cumsum_from_bottom", 1e-6, || {
        let mut rng = Rng::seed_from(115);
        let x = rand_t(&mut rng, &[2, 2, 5, 4], -1.0, 1.0);
        let probe = seeded_probe(&mut rng, &[2, 2, 5, 4]);
        finite_diff_check(
            |t| t[0].cumsum_from_bottom()?.mul(&probe)?.sum_all(),
            &[x],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("upsample_nearest2x", 1e-6, || {
        let mut rng = Rng::seed_from(116);
        let x = rand_t(&mut rng, &[1, 3, 3, 4], -1.0, 1.0);
        let probe = seeded_probe(&mut rng, &[1, 3, 6, 8]);
        finite_diff_check(
            |t| t[0].upsample_nearest2x()?.mul(&probe)?.sum_all(),
            &[x],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("rotation_coefficients", 1e-6, || {
        let mut rng = Rng::seed_from(117);
        let u = rand_t(&mut rng, &[6], 1e-5, 2.0);
        let probe = seeded_probe(&mut rng, &[6]);
        finite_diff_check(
            |t| {
                t[0].rodrigues_coeff_a()?
                    .add(&t[0].rodrigues_coeff_b()?)?
                    .mul(&probe)?
                    .sum_all()
            },
            &[u],
            1e-6,
        )
    }));

    cases.push(GradCheckCase::new("direction_aware_weights", 1e-5, || {
        let mut rng = Rng::seed_from(118);
        let x = rand_t(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        let w0 = rand_t(&mut rng, &[2, 2, 3, 3], -0.4, 0.4);
        let b0 = rand_t(&mut rng, &[2], -0.2, 0.2);
        let w1 = rand_t(&mut rng, &[2, 2, 3, 3], -0.4, 0.4);
        let b1 = rand_t(&mut rng, &[2], -0.2, 0.2);
        let probe = seeded_probe(&mut rng, &[1, 2, 5, 6]);
        // fixed non-unit scales exercise genuinely fractional sampling
        let scales = DirectionScales::from_tensors(
            Tensor::scalar(0.8f64.ln()),
            Tensor::scalar(1.3f64.ln()),
        )?;
        finite_diff_check(
            |t| {
                let block = ConvBlockParams {
                    conv: vec![(t[1].clone(), t[2].clone()), (t[3].clone(), t[4].clone())],
                };
                direction_aware_block(&t[0], &scales, &block)?
                    .mul(&probe)?
                    .sum_all()
            },
            &[x, w0, b0, w1, b1],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("direction_aware_scales", 1e-4, || {
        let mut rng = Rng::seed_from(119);
        let x = rand_t(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        let block = ConvBlockParams {
            conv: vec![
                (
                    rand_t(&mut rng, &[2, 2, 3, 3], -0.4, 0.4),
                    rand_t(&mut rng, &[2], -0.2, 0.2),
                ),
                (
                    rand_t(&mut rng, &[2, 2, 3, 3], -0.4, 0.4),
                    rand_t(&mut rng, &[2], -0.2, 0.2),
                ),
            ],
        };
        let probe = seeded_probe(&mut rng, &[1, 2, 5, 6]);
        let logs = Tensor::from_vec(&[2], vec![0.07, -0.04]).unwrap();
        finite_diff_check(
            |t| {
                let scales = DirectionScales::from_tensors(
                    t[0].slice(&[(0, 1)])?.reshape(&[])?,
                    t[0].slice(&[(1, 2)])?.reshape(&[])?,
                )?;
                direction_aware_block(&x, &scales, &block)?
                    .mul(&probe)?
                    .sum_all()
            },
            &[logs],
            1e-6,
        )
    }));

    cases.push(GradCheckCase::new("cumulative_convolution", 1e-6, || {
        let mut rng = Rng::seed_from(120);
        let x = rand_t(&mut rng, &[1, 2, 5, 6], -1.0, 1.0);
        let w = rand_t(&mut rng, &[2, 2, 3, 3], -0.4, 0.4);
        let b = rand_t(&mut rng, &[2], -0.2, 0.2);
        let probe = seeded_probe(&mut rng, &[1, 2, 5, 6]);
        finite_diff_check(
            |t| {
                let params =
                    CumulativeConvParams::new(t[1].clone(), t[2].clone(), Activation::Elu)?;
                cumulative_convolution(&t[0], &params)?.mul(&probe)?.sum_all()
            },
            &[x, w, b],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("ssim", 1e-5, || {
        let mut rng = Rng::seed_from(121);
        let a = rand_t(&mut rng, &[1, 3, 6, 6], 0.05, 0.95);
        let b = rand_t(&mut rng, &[1, 3, 6, 6], 0.05, 0.95);
        let probe = seeded_probe(&mut rng, &[1, 3, 6, 6]);
        finite_diff_check(
            |t| ssim(&t[0], &t[1])?.mul(&probe)?.sum_all(),
            &[a, b],
            1e-6,
        )
    }));

    cases.push(GradCheckCase::new("photometric_loss", 1e-5, || {
        let mut rng = Rng::seed_from(122);
        let target = rand_t(&mut rng, &[1, 3, 6, 6], 0.05, 0.95);
        let s1 = rand_t(&mut rng, &[1, 3, 6, 6], 0.05, 0.95);
        let s2 = rand_t(&mut rng, &[1, 3, 6, 6], 0.05, 0.95);
        let mask = Tensor::<f64>::ones(&[1, 1, 6, 6]);
        let cfg = LossConfig::default();
        finite_diff_check(
            |t| {
                photometric_loss(
                    &[(t[0].clone(), mask.clone()), (t[1].clone(), mask.clone())],
                    &t[2],
                    &cfg,
                )
            },
            &[s1, s2, target],
            1e-6,
        )
    }));

    cases.push(GradCheckCase::new("smoothness_loss", 1e-5, || {
        let mut rng = Rng::seed_from(123);
        let disp = rand_t(&mut rng, &[1, 1, 6, 7], 0.1, 0.9);
        let image = rand_t(&mut rng, &[1, 3, 6, 7], 0.0, 1.0);
        finite_diff_check(|t| smoothness_loss(&t[0], &t[1]), &[disp, image], 1e-6)
    }));

    cases.push(GradCheckCase::new("disparity_to_depth", 1e-6, || {
        let mut rng = Rng::seed_from(124);
        let disp = rand_t(&mut rng, &[1, 1, 4, 5], 0.1, 0.9);
        let probe = seeded_probe(&mut rng, &[1, 1, 4, 5]);
        finite_diff_check(
            |t| {
                disparity_to_depth(&t[0], 0.5, 20.0)?
                    .values
                    .mul(&probe)?
                    .sum_all()
            },
            &[disp],
            1e-6,
        )
    }));

    cases.push(GradCheckCase::new("project_backproject", 1e-6, || {
        let mut rng = Rng::seed_from(125);
        let k = CameraIntrinsics::new(8.0, 9.0, 2.5, 2.0).unwrap();
        let depth = rand_t(&mut rng, &[1, 1, 5, 6], 3.0, 8.0);
        let probe = seeded_probe(&mut rng, &[1, 2, 5, 6]);
        finite_diff_check(
            |t| {
                let d = DepthMap {
                    values: t[0].clone(),
                    d_min: 0.1,
                    d_max: 100.0,
                };
                let pts = crate::geometry::backproject(&d, &k)?;
                crate::geometry::project(&pts, &k)?.mul(&probe)?.sum_all()
            },
            &[depth],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("warp_image_depth", 1e-4, || {
        let mut rng = Rng::seed_from(126);
        let (h, w) = (5, 6);
        // smooth source so coordinate perturbations stay well conditioned
        let img_vals: Vec<f64> = (0..3 * h * w)
            .map(|i| {
                let p = i % (h * w);
                let (r, c) = (p / w, p % w);
                0.5 + 0.3 * ((r as f64) * 0.8).sin() * ((c as f64) * 0.6).cos()
            })
            .collect();
        let src = Tensor::<f64>::from_vec(&[1, 3, h, w], img_vals).unwrap();
        let depth = rand_t(&mut rng, &[1, 1, h, w], 4.0, 6.0);
        let k = CameraIntrinsics::new(8.0, 8.0, 2.5, 2.0).unwrap();
        let pose = PoseTensors::from_rigid(&[RigidTransform::from_axis_angle(
            [0.0, 0.008, 0.0],
            [0.18, 0.04, 0.02],
        )])
        .unwrap();
        let probe = seeded_probe(&mut rng, &[1, 3, h, w]);
        finite_diff_check(
            |t| {
                let d = DepthMap {
                    values: t[0].clone(),
                    d_min: 0.1,
                    d_max: 100.0,
                };
                let (syn, _) = warp_image(&src, &d, &pose, &k)?;
                syn.mul(&probe)?.sum_all()
            },
            &[depth],
            1e-5,
        )
    }));

    cases.push(GradCheckCase::new("pose_axis_angle", 1e-4, || {
        let mut rng = Rng::seed_from(127);
        let (h, w) = (5, 6);
        let img_vals: Vec<f64> = (0..3 * h * w)
            .map(|i| {
                let p = i % (h * w);
                let (r, c) = (p / w, p % w);
                0.5 + 0.25 * ((r as f64) * 0.9).cos() * ((c as f64) * 0.7).sin()
            })
            .collect();
        let src = Tensor::<f64>::from_vec(&[1, 3, h, w], img_vals).unwrap();
        let depth_vals: Vec<f64> = (0..h * w).map(|_| rng.range(4.0, 6.0)).collect();
        let depth = DepthMap {
            values: Tensor::<f64>::from_vec(&[1, 1, h, w], depth_vals).unwrap(),
            d_min: 0.1,
            d_max: 100.0,
        };
        let k = CameraIntrinsics::new(8.0, 8.0, 2.5, 2.0).unwrap();
        let probe = seeded_probe(&mut rng, &[1, 3, h, w]);
        let params = Tensor::from_vec(&[6], vec![0.01, -0.015, 0.007, 0.15, 0.03, 0.05]).unwrap();
        finite_diff_check(
            |t| {
                let aa = t[0].slice(&[(0, 3)])?.reshape(&[1, 3])?;
                let tr = t[0].slice(&[(3, 6)])?.reshape(&[1, 3])?;
                let pose = PoseTensors::from_axis_angle(&aa, &tr)?;
                let (syn, _) = warp_image(&src, &depth, &pose, &k)?;
                syn.mul(&probe)?.sum_all()
            },
            &[params],
            1e-6,
        )
    }));

    cases
}

/// Runs every case, collecting per-operation results.
pub fn run_suite(cases: &[GradCheckCase]) -> Result<SuiteReport> {
    let mut results = Vec::with_capacity(cases.len());
    for case in cases {
        results.push(case.execute()?);
    }
    Ok(SuiteReport { cases: results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes() {
        let report = run_suite(&standard_suite()).unwrap();
        for c in &report.cases {
            assert!(
                c.pass,
                "{}: max rel err {} over tolerance {}",
                c.name, c.max_rel_err, c.tolerance
            );
        }
        assert!(report.all_pass());
        assert_eq!(report.to_table().lines().count(), report.cases.len() + 1);
    }

    #[test]
    fn corrupted_backward_rule_fails() {
        // negative control: a case whose "gradient" comes from a deliberately
        // wrong function pairing must fail the check
        let case = GradCheckCase::new("corrupted_fixture", 1e-5, || {
            let flip = std::cell::Cell::new(true);
            let x = Tensor::<f64>::from_vec(&[3], vec![0.4, -0.7, 1.2]).unwrap();
            finite_diff_check(
                move |t| {
                    if flip.replace(false) {
                        t[0].mul(&t[0])?.sum_all()
                    } else {
                        t[0].mul(&t[0])?.mul(&t[0])?.sum_all()
                    }
                },
                &[x],
                1e-5,
            )
        });
        let result = case.execute().unwrap();
        assert!(!result.pass);
    }
}
