//! Desk-scale experiment drivers: the input-ratio stretch table and the
//! two-component ablation table. Both reproduce a methodology — rows,
//! columns, metric set — rather than any particular published number, and
//! label their outputs accordingly.

use crate::config::RunConfig;
use crate::error::Result;
use crate::model::init_model;
use crate::trainer::{train, TrainOutcome};

/// One row of the input-ratio experiment.
#[derive(Debug, Clone)]
pub struct StretchRow {
    pub setting: &'static str,
    pub width: usize,
    pub height: usize,
    pub abs_rel: f64,
    pub rmse: f64,
    /// Multiply-accumulate count of one forward pass.
    pub macs: u64,
}

fn derive_config(base: &RunConfig, h: usize, w: usize, tag: &str) -> RunConfig {
    let mut cfg = base.clone();
    cfg.model.input_h = h;
    cfg.model.input_w = w;
    cfg.scene.image_h = h;
    cfg.scene.image_w = w;
    cfg.out_dir = base.out_dir.join(tag);
    cfg
}

/// Trains four models — original, horizontal stretch, vertical stretch,
/// equal stretch — with a shared seed and reports Abs Rel, RMSE, and the
/// forward-pass MAC estimate per row.
pub fn stretch_experiment(base: &RunConfig) -> Result<Vec<StretchRow>> {
    base.validate()?;
    let (h, w) = (base.model.input_h, base.model.input_w);
    let settings: [(&'static str, usize, usize, &str); 4] = [
        ("original", h, w, "stretch-original"),
        ("horizontal stretch", h, 2 * w, "stretch-horizontal"),
        ("vertical stretch", 2 * h, w, "stretch-vertical"),
        ("equal stretch", 2 * h, 2 * w, "stretch-equal"),
    ];
    let mut rows = Vec::with_capacity(4);
    for (setting, rh, rw, tag) in settings {
        let cfg = derive_config(base, rh, rw, tag);
        let outcome = train::<f64>(&cfg)?;
        let model = init_model::<f64>(&cfg.model)?;
        rows.push(StretchRow {
            setting,
            width: rw,
            height: rh,
            abs_rel: outcome.metrics.abs_rel,
            rmse: outcome.metrics.rmse,
            macs: model.mac_estimate(rh, rw),
        });
    }
    Ok(rows)
}

pub fn format_stretch_table(rows: &[StretchRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:>10} {:>10} {:>14}\n",
        "setting", "Abs Rel", "RMSE", "MACs/forward"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<28} {:>10.4} {:>10.4} {:>14}\n",
            format!("{} ({}x{})", r.setting, r.width, r.height),
            r.abs_rel,
            r.rmse,
            r.macs
        ));
    }
    out.push_str("(desk-scale methodology run on synthetic scenes; not comparable to full-scale benchmark figures)\n");
    out
}

/// Directional observations from the stretch rows, logged non-blocking.
pub fn stretch_observations(rows: &[StretchRow]) -> Vec<String> {
    let mut notes = Vec::new();
    if rows.len() == 4 {
        let vertical_helps_more = rows[2].abs_rel <= rows[1].abs_rel;
        notes.push(format!(
            "observation: vertical stretch {} horizontal stretch on Abs Rel ({:.4} vs {:.4})",
            if vertical_helps_more {
                "outperforms or matches"
            } else {
                "does not outperform"
            },
            rows[2].abs_rel,
            rows[1].abs_rel
        ));
    }
    notes
}

/// One row of the component ablation.
#[derive(Debug, Clone)]
pub struct AblateRow {
    pub dam: bool,
    pub cc: bool,
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    /// Learned (s_x, s_y) per branch, for the rows with the direction-aware
    /// modules enabled.
    pub learned_scales: Vec<(f64, f64)>,
}

/// Trains the four on/off combinations of the two components with a shared
/// seed: neither, direction-aware only, cumulative convolution only, both.
pub fn ablation_experiment(base: &RunConfig) -> Result<Vec<AblateRow>> {
    base.validate()?;
    let variants = [
        (false, false, "ablate-neither"),
        (true, false, "ablate-dam"),
        (false, true, "ablate-cc"),
        (true, true, "ablate-both"),
    ];
    let mut rows = Vec::with_capacity(4);
    for (dam, cc, tag) in variants {
        let mut cfg = base.clone();
        cfg.model.enable_dam = dam;
        cfg.model.enable_cc = cc;
        cfg.out_dir = base.out_dir.join(tag);
        let outcome: TrainOutcome = train::<f64>(&cfg)?;
        rows.push(AblateRow {
            dam,
            cc,
            abs_rel: outcome.metrics.abs_rel,
            rmse: outcome.metrics.rmse,
            delta1: outcome.metrics.delta1,
            learned_scales: outcome.learned_scales,
        });
    }
    Ok(rows)
}

pub fn format_ablation_table(rows: &[AblateRow]) -> String {
    let mark = |b: bool| if b { "x" } else { " " };
    let mut out = String::new();
    out.push_str(&format!(
        "{:>4} {:>4} {:>10} {:>10} {:>10}\n",
        "DaM", "CC", "Abs Rel", "RMSE", "d<1.25"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:>4} {:>4} {:>10.4} {:>10.4} {:>10.4}\n",
            mark(r.dam),
            mark(r.cc),
            r.abs_rel,
            r.rmse,
            r.delta1
        ));
    }
    for r in rows {
        if r.dam && !r.learned_scales.is_empty() {
            let rendered: Vec<String> = r
                .learned_scales
                .iter()
                .enumerate()
                .map(|(b, (sx, sy))| format!("branch {b}: s_x={sx:.4} s_y={sy:.4}"))
                .collect();
            out.push_str(&format!(
                "learned scales ({}{}): {}\n",
                if r.cc { "DaM+CC" } else { "DaM" },
                "",
                rendered.join(", ")
            ));
        }
    }
    out.push_str("(desk-scale methodology run on synthetic scenes; not comparable to full-scale benchmark figures)\n");
    out
}

/// Directional observations from the ablation rows, logged non-blocking.
pub fn ablation_observations(rows: &[AblateRow]) -> Vec<String> {
    let mut notes = Vec::new();
    if rows.len() == 4 {
        let both = &rows[3];
        let best_single = rows[1].abs_rel.min(rows[2].abs_rel);
        notes.push(format!(
            "observation: both components together {} either alone on Abs Rel ({:.4} vs best single {:.4})",
            if both.abs_rel <= best_single {
                "match or beat"
            } else {
                "do not beat"
            },
            both.abs_rel,
            best_single
        ));
        for r in rows.iter().filter(|r| r.dam) {
            if !r.learned_scales.is_empty() {
                let mean_sx: f64 = r.learned_scales.iter().map(|s| s.0).sum::<f64>()
                    / r.learned_scales.len() as f64;
                let mean_sy: f64 = r.learned_scales.iter().map(|s| s.1).sum::<f64>()
                    / r.learned_scales.len() as f64;
                notes.push(format!(
                    "observation: learned vertical scale {} the horizontal one on average (s_y={mean_sy:.4}, s_x={mean_sx:.4})",
                    if mean_sy > mean_sx { "exceeds" } else { "does not exceed" }
                ));
            }
        }
    }
    notes
}
