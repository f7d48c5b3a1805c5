//! The self-supervised training loop and held-out evaluation.

use std::fs;
use std::path::PathBuf;

use crate::config::{PoseMode, Precision, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::{disparity_to_depth, warp_image, PoseTensors};
use crate::io::{save_checkpoint, TraceWriter};
use crate::losses::{photometric_loss, smoothness_loss, total_loss};
use crate::metrics::{depth_metrics, MetricsOptions, MetricsReport};
use crate::model::{init_model, BoundModel, DaCCNModel};
use crate::optim::Adam;
use crate::synthdata::{dataset, stack_samples, SceneSample};
use crate::tensor::{concat, upsample_bilinear, Element, Tape, Tensor};

/// Everything a training run leaves behind.
#[derive(Debug)]
pub struct TrainOutcome {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub metrics: MetricsReport,
    pub checkpoint_path: PathBuf,
    pub trace_path: PathBuf,
    pub metrics_path: PathBuf,
    /// Learned (s_x, s_y) per encoder branch, when the direction-aware
    /// modules are enabled.
    pub learned_scales: Vec<(f64, f64)>,
}

/// One forward pass through losses; shared by training and smoke tests.
#[allow(clippy::too_many_arguments)]
fn forward_losses<E: Element>(
    bound: &BoundModel<'_, E>,
    targets: &Tensor<E>,
    sources: &[Tensor<E>; 2],
    gt_poses: &[PoseTensors<E>; 2],
    cfg: &RunConfig,
) -> Result<(Tensor<E>, f64, f64)> {
    let (_, _, h, w) = targets.dims4()?;
    let feats = bound.encoder_forward(targets)?;
    let disparities = bound.decoder_forward(&feats)?;

    // poses per source, shared across scales
    let mut poses: Vec<PoseTensors<E>> = Vec::with_capacity(2);
    match cfg.pose_mode {
        PoseMode::GroundTruth => {
            poses.extend(gt_poses.iter().cloned());
        }
        PoseMode::Predicted => {
            for src in sources {
                let pair = concat(&[targets, src], 1)?;
                poses.push(bound.pose_forward(&pair)?.pose);
            }
        }
    }

    let mut lp_per_scale = Vec::with_capacity(disparities.len());
    let mut ls_per_scale = Vec::with_capacity(disparities.len());
    for disp in &disparities {
        let (_, _, dh, _) = disp.dims4()?;
        let disp_full = if dh == h {
            disp.clone()
        } else {
            upsample_bilinear(disp, h, w)?
        };
        let depth = disparity_to_depth(&disp_full, cfg.model.d_min, cfg.model.d_max)?;
        let mut synthesized = Vec::with_capacity(2);
        for (src, pose) in sources.iter().zip(&poses) {
            synthesized.push(warp_image(src, &depth, pose, &cfg.scene_intrinsics()?)?);
        }
        lp_per_scale.push(photometric_loss(&synthesized, targets, &cfg.loss)?);
        ls_per_scale.push(smoothness_loss(&disp_full, targets)?);
    }
    let total = total_loss(&lp_per_scale, &ls_per_scale, &cfg.loss)?;

    let mean_of = |parts: &[Tensor<E>]| -> f64 {
        parts
            .iter()
            .map(|t| t.values()[0].to_f64())
            .sum::<f64>()
            / parts.len() as f64
    };
    Ok((total, mean_of(&lp_per_scale), mean_of(&ls_per_scale)))
}

impl RunConfig {
    /// Intrinsics implied by the scene spec (shared by every sample).
    pub fn scene_intrinsics(&self) -> Result<crate::geometry::CameraIntrinsics> {
        let focal = self.scene.focal_factor * self.scene.image_h as f64;
        crate::geometry::CameraIntrinsics::new(
            focal,
            focal,
            (self.scene.image_w - 1) as f64 / 2.0,
            (self.scene.image_h - 1) as f64 / 2.0,
        )
    }
}

/// Generates the sample pool and splits it by index parity.
pub fn generate_split<E: Element>(
    cfg: &RunConfig,
) -> Result<(Vec<SceneSample<E>>, Vec<SceneSample<E>>)> {
    let all: Vec<SceneSample<E>> =
        dataset(&cfg.scene, cfg.num_samples, cfg.seed).collect::<Result<_>>()?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, s) in all.into_iter().enumerate() {
        if i % 2 == 0 {
            train.push(s);
        } else {
            val.push(s);
        }
    }
    Ok((train, val))
}

/// Evaluates the finest-resolution head against ground truth, median-scaled,
/// averaged over samples.
pub fn evaluate_model<E: Element>(
    model: &DaCCNModel<E>,
    samples: &[SceneSample<E>],
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::DegenerateBatch("no evaluation samples".into()));
    }
    let bound = model.bind(None)?;
    let opts = MetricsOptions {
        median_scaling: true,
        clamp: (model.cfg.d_min, model.cfg.d_max),
        ..Default::default()
    };
    let mut reports = Vec::with_capacity(samples.len());
    for sample in samples {
        let refs = [sample];
        let (target, _, _) = stack_samples(&refs)?;
        let (_, _, h, w) = target.dims4()?;
        let feats = bound.encoder_forward(&target)?;
        let disparities = bound.decoder_forward(&feats)?;
        // only the finest head participates in evaluation
        let finest = disparities.last().expect("decoder produces scales");
        let disp_full = upsample_bilinear(finest, h, w)?;
        let pred = disparity_to_depth(&disp_full, model.cfg.d_min, model.cfg.d_max)?;
        reports.push(depth_metrics(&pred, &sample.gt_depth, None, &opts)?);
    }
    MetricsReport::average(&reports)
}

/// Metrics of the ground truth scored against itself (the oracle path).
pub fn evaluate_oracle<E: Element>(samples: &[SceneSample<E>]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::DegenerateBatch("no evaluation samples".into()));
    }
    let opts = MetricsOptions {
        median_scaling: true,
        clamp: (samples[0].gt_depth.d_min, samples[0].gt_depth.d_max),
        ..Default::default()
    };
    let reports = samples
        .iter()
        .map(|s| depth_metrics(&s.gt_depth, &s.gt_depth, None, &opts))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::average(&reports)
}

/// Runs the full loop: generate scenes, iterate forward/backward/step, write
/// the trace, the checkpoint, and the held-out metrics.
pub fn train<E: Element>(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let trace_path = cfg.out_dir.join("trace.csv");
    let checkpoint_path = cfg.out_dir.join("model.ckpt");
    let metrics_path = cfg.out_dir.join("metrics.txt");

    let (train_pool, val_pool) = generate_split::<E>(cfg)?;
    if train_pool.is_empty() || val_pool.is_empty() {
        return Err(Error::config("both splits need at least one sample"));
    }

    let mut model: DaCCNModel<E> = init_model(&cfg.model)?;
    let sizes: Vec<usize> = model
        .params
        .entries()
        .iter()
        .map(|p| p.values.len())
        .collect();
    let mut adam = Adam::new(cfg.optimizer.clone(), &sizes)?;

    let mut trace = TraceWriter::create(&trace_path)?;
    let mut initial_loss = f64::NAN;
    let mut final_loss = f64::NAN;

    for it in 0..cfg.iterations {
        // deterministic batch rotation over the training pool
        let batch: Vec<&SceneSample<E>> = (0..cfg.batch_size)
            .map(|j| &train_pool[(it * cfg.batch_size + j) % train_pool.len()])
            .collect();
        let (targets, sources, _) = stack_samples(&batch)?;
        let gt_poses = [
            PoseTensors::from_rigid(&batch.iter().map(|s| s.poses[0]).collect::<Vec<_>>())?,
            PoseTensors::from_rigid(&batch.iter().map(|s| s.poses[1]).collect::<Vec<_>>())?,
        ];

        let tape = Tape::new();
        let bound = model.bind(Some(&tape))?;
        let (total, lp, ls) = forward_losses(&bound, &targets, &sources, &gt_poses, cfg)?;
        let loss_value = total.values()[0].to_f64();
        if !loss_value.is_finite() {
            let culprit = tape
                .first_non_finite()
                .map(|(i, name)| format!("first non-finite tensor: node #{i} ({name})"))
                .unwrap_or_else(|| "loss non-finite but all node outputs finite".into());
            return Err(Error::Numeric(format!(
                "aborting at iteration {it}: loss = {loss_value}; {culprit}"
            )));
        }
        if it == 0 {
            initial_loss = loss_value;
        }
        final_loss = loss_value;
        trace.record(it, loss_value, lp, ls)?;

        tape.backward(&total)?;
        let grads: Vec<Vec<f64>> = model
            .params
            .entries()
            .iter()
            .map(|p| {
                bound
                    .get(&p.name)
                    .expect("bound parameter")
                    .grad()
                    .map(|g| g.iter().map(|v| v.to_f64()).collect())
                    .unwrap_or_else(|| vec![0.0; p.values.len()])
            })
            .collect();
        let mut values: Vec<Vec<E>> = model
            .params
            .entries()
            .iter()
            .map(|p| p.values.clone())
            .collect();
        adam.step(&mut values, &grads)?;
        for (p, v) in model.params.entries_mut().iter_mut().zip(values) {
            p.values = v;
        }
    }
    trace.finish()?;

    save_checkpoint(&checkpoint_path, &model)?;
    let metrics = evaluate_model(&model, &val_pool)?;
    fs::write(
        &metrics_path,
        format!("{}\n{}\n", metrics.to_record_line(), metrics.to_table()),
    )?;

    let mut learned_scales = Vec::new();
    if cfg.model.enable_dam {
        for b in 0..crate::model::NUM_BRANCHES {
            let sx = model
                .params
                .get(&format!("enc.b{b}.dam.log_sx"))
                .map(|p| p.values[0].to_f64().exp())
                .unwrap_or(1.0);
            let sy = model
                .params
                .get(&format!("enc.b{b}.dam.log_sy"))
                .map(|p| p.values[0].to_f64().exp())
                .unwrap_or(1.0);
            learned_scales.push((sx, sy));
        }
    }

    Ok(TrainOutcome {
        initial_loss,
        final_loss,
        metrics,
        checkpoint_path,
        trace_path,
        metrics_path,
        learned_scales,
    })
}

/// Entry point that dispatches on the configured precision.
pub fn train_with_precision(cfg: &RunConfig) -> Result<TrainOutcome> {
    match cfg.precision {
        Precision::F64 => train::<f64>(cfg),
        Precision::F32 => train::<f32>(cfg),
    }
}
