//! One-pass evaluation: center-error precision and overlap success, at fixed
//! thresholds and as full curves.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TrackError};
use crate::geometry::BBox;
use crate::loss::overlap;

/// Default precision threshold in pixels.
pub const TP_THRESHOLD: f64 = 20.0;
/// Default success threshold.
pub const TSR_THRESHOLD: f64 = 0.6;

/// Predictions and annotations of one sequence. `None` marks an annotation gap;
/// such frames count in neither numerator nor denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub name: String,
    pub predictions: Vec<BBox<f64>>,
    pub ground_truth: Vec<Option<BBox<f64>>>,
}

impl SequenceRecord {
    pub fn new(
        name: impl Into<String>,
        predictions: Vec<BBox<f64>>,
        ground_truth: Vec<Option<BBox<f64>>>,
    ) -> Result<Self> {
        if predictions.len() != ground_truth.len() {
            return Err(TrackError::Shape(format!(
                "{} predictions for {} annotated frames",
                predictions.len(),
                ground_truth.len()
            )));
        }
        if predictions.is_empty() {
            return Err(TrackError::Empty("sequence record"));
        }
        Ok(Self { name: name.into(), predictions, ground_truth })
    }

    /// `(prediction, truth)` for every annotated frame.
    pub fn annotated(&self) -> impl Iterator<Item = (&BBox<f64>, &BBox<f64>)> {
        self.predictions
            .iter()
            .zip(&self.ground_truth)
            .filter_map(|(p, g)| g.as_ref().map(|g| (p, g)))
    }

    pub fn annotated_len(&self) -> usize {
        self.ground_truth.iter().filter(|g| g.is_some()).count()
    }

    fn fraction(&self, hit: impl Fn(&BBox<f64>, &BBox<f64>) -> bool) -> Result<f64> {
        let n = self.annotated_len();
        if n == 0 {
            return Err(TrackError::Empty("annotated frames"));
        }
        let hits = self.annotated().filter(|(p, g)| hit(p, g)).count();
        Ok(hits as f64 / n as f64)
    }
}

/// Euclidean distance between box centers.
pub fn center_error(pred: &BBox<f64>, gt: &BBox<f64>) -> f64 {
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    (px - gx).hypot(py - gy)
}

/// Fraction of annotated frames whose center error is at most `tau_d`.
pub fn tp_at(seq: &SequenceRecord, tau_d: f64) -> Result<f64> {
    seq.fraction(|p, g| center_error(p, g) <= tau_d)
}

/// Fraction of annotated frames whose overlap strictly exceeds `tau_o`.
pub fn tsr_at(seq: &SequenceRecord, tau_o: f64) -> Result<f64> {
    seq.fraction(|p, g| overlap(p, g) > tau_o)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricCurve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl MetricCurve {
    pub fn is_non_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn is_non_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] >= w[1])
    }

    /// Value at an exact threshold, if present.
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds.iter().position(|&t| t == threshold).map(|i| self.values[i])
    }
}

/// 1, 2, ..., 50 pixels.
pub fn tp_thresholds() -> Vec<f64> {
    (1..=50).map(f64::from).collect()
}

/// 0, 0.05, ..., 1.
pub fn tsr_thresholds() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) / 20.0).collect()
}

pub fn tp_curve(seq: &SequenceRecord, thresholds: &[f64]) -> Result<MetricCurve> {
    curve(seq, thresholds, tp_at)
}

pub fn tsr_curve(seq: &SequenceRecord, thresholds: &[f64]) -> Result<MetricCurve> {
    curve(seq, thresholds, tsr_at)
}

fn curve(
    seq: &SequenceRecord,
    thresholds: &[f64],
    metric: fn(&SequenceRecord, f64) -> Result<f64>,
) -> Result<MetricCurve> {
    if thresholds.is_empty() {
        return Err(TrackError::Empty("threshold list"));
    }
    let values = thresholds.iter().map(|&t| metric(seq, t)).collect::<Result<_>>()?;
    Ok(MetricCurve { thresholds: thresholds.to_vec(), values })
}

/// Precision and success curves over the standard threshold grids.
pub fn curves(seq: &SequenceRecord) -> Result<(MetricCurve, MetricCurve)> {
    Ok((tp_curve(seq, &tp_thresholds())?, tsr_curve(seq, &tsr_thresholds())?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub name: String,
    pub frames: usize,
    pub tp: f64,
    pub tsr: f64,
    pub tp_curve: MetricCurve,
    pub tsr_curve: MetricCurve,
}

pub fn evaluate(seq: &SequenceRecord) -> Result<EvalReport> {
    let (tp_curve, tsr_curve) = curves(seq)?;
    Ok(EvalReport {
        name: seq.name.clone(),
        frames: seq.annotated_len(),
        tp: tp_at(seq, TP_THRESHOLD)?,
        tsr: tsr_at(seq, TSR_THRESHOLD)?,
        tp_curve,
        tsr_curve,
    })
}

/// Independent sequences are evaluated in parallel; output order follows input order.
pub fn evaluate_all(seqs: &[SequenceRecord]) -> Result<Vec<EvalReport>> {
    seqs.par_iter().map(evaluate).collect()
}

#[derive(Serialize)]
struct ReportRow<'a> {
    sequence: &'a str,
    metric: &'a str,
    threshold: f64,
    value: f64,
}

/// Long-format report: `sequence,metric,threshold,value`. The `tp` and `tsr` rows hold
/// the headline numbers; `tp_curve` and `tsr_curve` rows hold the full curves.
pub fn write_report<W: Write>(writer: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        let name = r.name.as_str();
        w.serialize(ReportRow { sequence: name, metric: "tp", threshold: TP_THRESHOLD, value: r.tp })?;
        w.serialize(ReportRow { sequence: name, metric: "tsr", threshold: TSR_THRESHOLD, value: r.tsr })?;
        for (metric, c) in [("tp_curve", &r.tp_curve), ("tsr_curve", &r.tsr_curve)] {
            for (&threshold, &value) in c.thresholds.iter().zip(&c.values) {
                w.serialize(ReportRow { sequence: name, metric, threshold, value })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
