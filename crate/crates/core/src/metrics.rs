//! The seven-metric depth evaluation suite.

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::tensor::Element;

/// Which squared-relative-error convention to report.
///
/// `Standard` is the benchmark-conventional (pred-gt)^2 / gt. The
/// `RelativeSquared` variant, ((pred-gt)/gt)^2, matches a formula sometimes
/// displayed alongside the tables; both are provided and the choice is logged
/// in every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SqRelKind {
    Standard,
    RelativeSquared,
}

impl std::fmt::Display for SqRelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SqRelKind::Standard => write!(f, "standard"),
            SqRelKind::RelativeSquared => write!(f, "relative-squared"),
        }
    }
}

/// One evaluation record, column order matching the customary benchmark
/// tables: Abs Rel, Sq Rel, RMSE, RMSE log, then the three accuracy ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
    pub median_scaling: bool,
    pub sq_rel_kind: SqRelKind,
}

impl MetricsReport {
    /// Single-line delimited record (comma separated, fixed field order).
    pub fn to_record_line(&self) -> String {
        format!(
            "abs_rel={},sq_rel={},rmse={},rmse_log={},delta1={},delta2={},delta3={},n_pixels={},median_scaling={},sq_rel_kind={}",
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
            self.n_pixels,
            self.median_scaling,
            self.sq_rel_kind
        )
    }

    /// Formatted two-row table in the benchmark column order.
    pub fn to_table(&self) -> String {
        let header = format!(
            "{:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "Abs Rel", "Sq Rel", "RMSE", "RMSE log", "d<1.25", "d<1.25^2", "d<1.25^3"
        );
        let row = format!(
            "{:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.delta1, self.delta2, self.delta3
        );
        format!("{header}\n{row}\n(sq_rel convention: {}, median scaling: {})", self.sq_rel_kind, self.median_scaling)
    }

    /// Average of several reports (uniform weight per report).
    pub fn average(reports: &[MetricsReport]) -> Result<MetricsReport> {
        if reports.is_empty() {
            return Err(Error::DegenerateBatch("no reports to average".into()));
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Ok(MetricsReport {
            abs_rel: sum(|r| r.abs_rel),
            sq_rel: sum(|r| r.sq_rel),
            rmse: sum(|r| r.rmse),
            rmse_log: sum(|r| r.rmse_log),
            delta1: sum(|r| r.delta1),
            delta2: sum(|r| r.delta2),
            delta3: sum(|r| r.delta3),
            n_pixels: reports.iter().map(|r| r.n_pixels).sum(),
            median_scaling: reports[0].median_scaling,
            sq_rel_kind: reports[0].sq_rel_kind,
        })
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Options for [`depth_metrics`].
#[derive(Debug, Clone, Copy)]
pub struct MetricsOptions {
    /// Rescale the prediction by median(gt)/median(pred) before scoring;
    /// monocular self-supervision cannot observe metric scale, so this is on
    /// by default.
    pub median_scaling: bool,
    /// Clamp range applied to prediction and ground truth before scoring.
    pub clamp: (f64, f64),
    pub sq_rel_kind: SqRelKind,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            median_scaling: true,
            clamp: (1e-3, 150.0),
            sq_rel_kind: SqRelKind::Standard,
        }
    }
}

/// Computes the seven standard depth metrics over the masked pixels.
///
/// `valid_mask`, when given, must have one entry per pixel (> 0.5 counts as
/// valid). Ground truth must be strictly positive on the mask.
pub fn depth_metrics<E: Element>(
    pred: &DepthMap<E>,
    gt: &DepthMap<E>,
    valid_mask: Option<&[bool]>,
    opts: &MetricsOptions,
) -> Result<MetricsReport> {
    let pv = pred.values.values();
    let gv = gt.values.values();
    if pred.values.shape() != gt.values.shape() {
        return Err(Error::dim(format!(
            "prediction shape {:?} does not match ground truth {:?}",
            pred.values.shape(),
            gt.values.shape()
        )));
    }
    if let Some(mask) = valid_mask {
        if mask.len() != pv.len() {
            return Err(Error::dim("mask length does not match depth maps"));
        }
    }
    let (lo, hi) = opts.clamp;
    if !(0.0 < lo && lo < hi) {
        return Err(Error::config("metrics clamp range invalid"));
    }

    let mut p: Vec<f64> = Vec::with_capacity(pv.len());
    let mut g: Vec<f64> = Vec::with_capacity(gv.len());
    for i in 0..pv.len() {
        if valid_mask.map_or(true, |m| m[i]) {
            let gt_i = gv[i].to_f64();
            if gt_i <= 0.0 {
                return Err(Error::domain("ground truth must be positive on the mask"));
            }
            p.push(pv[i].to_f64());
            g.push(gt_i);
        }
    }
    if p.is_empty() {
        return Err(Error::DegenerateBatch("empty evaluation mask".into()));
    }

    if opts.median_scaling {
        let med_g = median(&mut g.clone());
        let med_p = median(&mut p.clone());
        if med_p <= 0.0 {
            return Err(Error::domain("non-positive prediction median"));
        }
        let ratio = med_g / med_p;
        for v in &mut p {
            *v *= ratio;
        }
    }
    for v in &mut p {
        *v = v.clamp(lo, hi);
    }
    let g: Vec<f64> = g.iter().map(|v| v.clamp(lo, hi)).collect();

    let n = p.len() as f64;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut mse = 0.0;
    let mut mse_log = 0.0;
    let (mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0);
    let (t1, t2, t3) = (1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25);
    for (pi, gi) in p.iter().zip(&g) {
        let diff = pi - gi;
        abs_rel += diff.abs() / gi;
        sq_rel += match opts.sq_rel_kind {
            SqRelKind::Standard => diff * diff / gi,
            SqRelKind::RelativeSquared => (diff / gi) * (diff / gi),
        };
        mse += diff * diff;
        let dl = pi.ln() - gi.ln();
        mse_log += dl * dl;
        let ratio = (pi / gi).max(gi / pi);
        if ratio < t1 {
            d1 += 1.0;
        }
        if ratio < t2 {
            d2 += 1.0;
        }
        if ratio < t3 {
            d3 += 1.0;
        }
    }
    Ok(MetricsReport {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (mse / n).sqrt(),
        rmse_log: (mse_log / n).sqrt(),
        delta1: d1 / n,
        delta2: d2 / n,
        delta3: d3 / n,
        n_pixels: p.len(),
        median_scaling: opts.median_scaling,
        sq_rel_kind: opts.sq_rel_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn depth_map(vals: Vec<f64>, h: usize, w: usize) -> DepthMap<f64> {
        DepthMap::new(Tensor::from_vec(&[1, 1, h, w], vals).unwrap(), 1e-3, 150.0).unwrap()
    }

    fn random_depth(rng: &mut Rng, h: usize, w: usize) -> DepthMap<f64> {
        depth_map((0..h * w).map(|_| rng.range(1.0, 40.0)).collect(), h, w)
    }

    fn no_scaling() -> MetricsOptions {
        MetricsOptions {
            median_scaling: false,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_prediction() {
        let mut rng = Rng::seed_from(31);
        let gt = random_depth(&mut rng, 4, 5);
        let r = depth_metrics(&gt, &gt, None, &no_scaling()).unwrap();
        assert_eq!(r.abs_rel, 0.0);
        assert_eq!(r.sq_rel, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.rmse_log, 0.0);
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
        assert_eq!(r.n_pixels, 20);
    }

    #[test]
    fn ten_percent_over() {
        let mut rng = Rng::seed_from(32);
        let gt = random_depth(&mut rng, 5, 5);
        let pred_vals: Vec<f64> = gt.values.values().iter().map(|v| v * 1.1).collect();
        let pred = depth_map(pred_vals, 5, 5);
        let r = depth_metrics(&pred, &gt, None, &no_scaling()).unwrap();
        assert!((r.abs_rel - 0.1).abs() < 1e-9, "{}", r.abs_rel);
        assert_eq!(r.delta1, 1.0);
    }

    #[test]
    fn factor_two_fails_all_deltas() {
        let mut rng = Rng::seed_from(33);
        let gt = random_depth(&mut rng, 4, 4);
        let pred_vals: Vec<f64> = gt.values.values().iter().map(|v| v * 2.0).collect();
        let pred = depth_map(pred_vals, 4, 4);
        let r = depth_metrics(&pred, &gt, None, &no_scaling()).unwrap();
        // 2 > 1.25^3 = 1.953125
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn deltas_are_monotone() {
        let mut rng = Rng::seed_from(34);
        let gt = random_depth(&mut rng, 6, 6);
        let pred_vals: Vec<f64> = gt
            .values
            .values()
            .iter()
            .map(|v| v * rng.range(0.6, 1.8))
            .collect();
        let pred = depth_map(pred_vals, 6, 6);
        let r = depth_metrics(&pred, &gt, None, &no_scaling()).unwrap();
        assert!(r.delta1 <= r.delta2 && r.delta2 <= r.delta3);
    }

    #[test]
    fn median_scaling_invariant_to_uniform_scale() {
        let mut rng = Rng::seed_from(35);
        let gt = random_depth(&mut rng, 5, 6);
        let pred = random_depth(&mut rng, 5, 6);
        let opts = MetricsOptions::default();
        let base = depth_metrics(&pred, &gt, None, &opts).unwrap();
        for c in [0.25, 3.0, 41.7] {
            let scaled_vals: Vec<f64> = pred.values.values().iter().map(|v| v * c).collect();
            let scaled = DepthMap::new(
                Tensor::from_vec(&[1, 1, 5, 6], scaled_vals).unwrap(),
                1e-3,
                10_000.0,
            )
            .unwrap();
            let r = depth_metrics(&scaled, &gt, None, &opts).unwrap();
            assert!((r.abs_rel - base.abs_rel).abs() < 1e-9);
            assert!((r.rmse - base.rmse).abs() < 1e-9);
            assert!((r.delta1 - base.delta1).abs() < 1e-12);
        }
    }

    #[test]
    fn sq_rel_conventions_differ() {
        let gt = depth_map(vec![2.0, 4.0], 1, 2);
        let pred = depth_map(vec![3.0, 5.0], 1, 2);
        let std = depth_metrics(&pred, &gt, None, &no_scaling()).unwrap();
        let alt = depth_metrics(
            &pred,
            &gt,
            None,
            &MetricsOptions {
                median_scaling: false,
                sq_rel_kind: SqRelKind::RelativeSquared,
                ..Default::default()
            },
        )
        .unwrap();
        // standard: (1/2 + 1/4)/2 = 0.375 ; relative-squared: (0.25 + 0.0625)/2
        assert!((std.sq_rel - 0.375).abs() < 1e-12);
        assert!((alt.sq_rel - 0.15625).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_degenerate() {
        let gt = depth_map(vec![1.0, 2.0], 1, 2);
        let err = depth_metrics(&gt, &gt, Some(&[false, false]), &no_scaling()).unwrap_err();
        assert!(matches!(err, Error::DegenerateBatch(_)));
    }

    #[test]
    fn mask_filters_pixels() {
        let gt = depth_map(vec![2.0, 100.0], 1, 2);
        let pred = depth_map(vec![2.0, 1.0], 1, 2);
        let r = depth_metrics(&pred, &gt, Some(&[true, false]), &no_scaling()).unwrap();
        assert_eq!(r.abs_rel, 0.0);
        assert_eq!(r.n_pixels, 1);
    }

    #[test]
    fn record_line_and_table_shapes() {
        let gt = depth_map(vec![2.0, 4.0], 1, 2);
        let r = depth_metrics(&gt, &gt, None, &no_scaling()).unwrap();
        let line = r.to_record_line();
        assert!(line.starts_with("abs_rel=0"));
        assert_eq!(line.matches(',').count(), 9);
        let table = r.to_table();
        assert!(table.contains("Abs Rel"));
        assert!(table.contains("d<1.25^3"));
    }
}
