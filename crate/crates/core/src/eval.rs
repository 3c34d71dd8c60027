//! Tracking metrics: recall rate, the overlap-success curve and its AUC.
//!
//! Frames whose ground truth is marked absent are excluded from every
//! denominator.

use std::io::{BufRead, Read};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::camera::PixelBox;
use crate::error::{Error, Result};
use crate::gate::FrameRecord;

/// Number of thresholds in the default overlap-success grid.
pub const DEFAULT_THRESHOLD_COUNT: usize = 101;

/// Pixel box as top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }
}

impl From<&PixelBox> for Rect {
    fn from(b: &PixelBox) -> Self {
        Rect::new(b.x_min, b.y_min, b.width(), b.height())
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub frame_index: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub present: bool,
}

impl GtBox {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }
}

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}

/// Percentage of present frames whose search box contains the ground-truth
/// box center. `None` means no region was emitted for that frame.
pub fn recall_rate(regions: &[Option<PixelBox>], gt: &[GtBox]) -> Result<f64> {
    check_lengths(regions.len(), gt.len())?;
    let mut present = 0usize;
    let mut hits = 0usize;
    for (region, truth) in regions.iter().zip(gt).filter(|(_, g)| g.present) {
        present += 1;
        if region.is_some_and(|b| b.contains_point(&truth.rect().center())) {
            hits += 1;
        }
    }
    if present == 0 {
        return Err(Error::invalid("ground truth", "no frame has the target present"));
    }
    Ok(100.0 * hits as f64 / present as f64)
}

/// `n` thresholds evenly spaced on [0, 1].
pub fn uniform_thresholds(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Overlap success rate at each threshold: the fraction of present frames
/// whose IoU with the ground truth strictly exceeds it.
pub fn success_curve(pred: &[Option<Rect>], gt: &[GtBox], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_lengths(pred.len(), gt.len())?;
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("thresholds", "must be sorted ascending"));
    }
    let overlaps: Vec<f64> = pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| g.present)
        .map(|(p, g)| p.map_or(0.0, |p| iou(&p, &g.rect())))
        .collect();
    if overlaps.is_empty() {
        return Err(Error::invalid("ground truth", "no frame has the target present"));
    }
    let n = overlaps.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| (t, overlaps.iter().filter(|&&o| o > t).count() as f64 / n))
        .collect())
}

/// Trapezoidal area under the curve, normalized by the threshold span.
pub fn auc(curve: &[(f64, f64)]) -> Result<f64> {
    match curve {
        [] => Err(Error::EmptyCurve),
        [(_, only)] => Ok(*only),
        _ => {
            if curve.windows(2).any(|w| w[1].0 < w[0].0) {
                return Err(Error::invalid("curve", "thresholds must be ascending"));
            }
            let span = curve[curve.len() - 1].0 - curve[0].0;
            if span <= 0.0 {
                return Ok(curve.iter().map(|c| c.1).sum::<f64>() / curve.len() as f64);
            }
            let area: f64 = curve.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
            Ok(area / span)
        }
    }
}

#[derive(Debug, Deserialize)]
struct BoxRow {
    frame_index: usize,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    #[serde(deserialize_with = "flag")]
    present: bool,
}

fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => Err(serde::de::Error::custom(format!("bad present flag `{other}`"))),
    }
}

/// Reads `frame_index,x,y,w,h,present` rows. A header line is optional.
pub fn read_boxes_csv<R: Read>(reader: R) -> Result<Vec<GtBox>> {
    let mut text = String::new();
    let mut reader = reader;
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::invalid("box csv", e.to_string()))?;
    let has_header = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| l.split(',').next())
        .is_some_and(|first| first.trim().parse::<f64>().is_err());
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        if has_header && i == 0 {
            continue;
        }
        let record = record.map_err(|e| Error::invalid("box csv", e.to_string()))?;
        let row: BoxRow = record
            .deserialize(None)
            .map_err(|e| Error::invalid("box csv", format!("row {}: {e}", i + 1)))?;
        if row.w < 0.0 || row.h < 0.0 {
            return Err(Error::invalid("box csv", format!("row {}: negative extent", i + 1)));
        }
        out.push(GtBox {
            frame_index: row.frame_index,
            x: row.x,
            y: row.y,
            w: row.w,
            h: row.h,
            present: row.present,
        });
    }
    Ok(out)
}

pub fn curve_to_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("threshold,osr\n");
    for (t, osr) in curve {
        out.push_str(&format!("{t},{osr}\n"));
    }
    out
}

/// Search boxes per frame from gate JSONL output, one entry per line. With
/// `camera` unset the first region of each frame is used.
pub fn read_gate_predictions<R: BufRead>(reader: R, camera: Option<&str>) -> Result<Vec<Option<PixelBox>>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::invalid("gate output", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord = serde_json::from_str(&line)
            .map_err(|e| Error::invalid("gate output", format!("line {}: {e}", i + 1)))?;
        let region = match camera {
            Some(id) => record.regions.iter().find(|r| r.camera_id == id),
            None => record.regions.first(),
        };
        out.push(region.map(|r| r.pixel_box()));
    }
    Ok(out)
}

/// Prediction rows in the ground-truth CSV shape; absent rows carry no box.
pub fn boxes_from_rows(rows: &[GtBox]) -> Vec<Option<PixelBox>> {
    rows.iter()
        .map(|r| {
            r.present.then_some(PixelBox {
                x_min: r.x,
                y_min: r.y,
                x_max: r.x + r.w,
                y_max: r.y + r.h,
                clipped: false,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub auc: f64,
    pub recall: f64,
}

/// Success curve on `thresholds` plus the `{auc, recall}` summary.
pub fn evaluate(pred: &[Option<PixelBox>], gt: &[GtBox], thresholds: &[f64]) -> Result<(Vec<(f64, f64)>, EvalSummary)> {
    let rects: Vec<Option<Rect>> = pred.iter().map(|b| b.as_ref().map(Rect::from)).collect();
    let curve = success_curve(&rects, gt, thresholds)?;
    let summary = EvalSummary {
        auc: auc(&curve)?,
        recall: recall_rate(pred, gt)?,
    };
    Ok((curve, summary))
}
