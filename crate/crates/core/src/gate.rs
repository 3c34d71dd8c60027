//! Per-frame search regions: measurements → estimate → plug-in confidence
//! ellipse → one projected region per camera that sees it.
//!
//! Gating is memoryless; a frame's regions depend only on that frame and the
//! scene.

use std::io::{BufRead, Write};

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{project_region, PixelBox};
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::region::{chi2_quantile, confidence_ellipse, fim, ConfidenceEllipse, DEFAULT_BOUNDARY_POINTS};
use crate::scene::Scene;
use crate::sim::NOISE_INFO_SAMPLES;
use crate::wireless::{jacobian, noise_information, MeasurementFrame, TargetState};

/// Default confidence level: a 95 % region.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRegion {
    pub frame_t: f64,
    pub camera_id: String,
    pub estimate_xy: Vector2<f64>,
    pub ellipse: ConfidenceEllipse,
    pub polygon_px: Vec<Vector2<f64>>,
    pub bbox: PixelBox,
    pub level_alpha: f64,
}

/// A scene prepared for gating at one confidence level.
#[derive(Debug, Clone)]
pub struct Gate<'a> {
    scene: &'a Scene,
    alpha: f64,
    config: EstimatorConfig,
    i_v: f64,
}

impl<'a> Gate<'a> {
    /// The scene supplies the transmitter height, and the seeding grid when the
    /// config leaves it unset.
    pub fn new(scene: &'a Scene, alpha: f64, config: &EstimatorConfig) -> Result<Self> {
        scene.validate()?;
        chi2_quantile(alpha)?;
        let config = EstimatorConfig {
            grid_extent: config.grid_extent.or(Some(scene.bounds)),
            target_z: scene.target_z,
            ..config.clone()
        };
        config.validate()?;
        let i_v = noise_information(&scene.noise, NOISE_INFO_SAMPLES, 0)?;
        Ok(Gate { scene, alpha, config, i_v })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Plug-in confidence ellipse for one frame.
    pub fn locate(&self, frame: &MeasurementFrame) -> Result<ConfidenceEllipse> {
        let (used, _) = frame.resolve(&self.scene.anchors)?;
        let est = crate::estimator::solve(&used, frame, &self.config)?;
        let at = TargetState::new(est.xy, self.scene.target_z);
        let f = fim(&jacobian(&used, &at)?, self.i_v);
        confidence_ellipse(est.xy, &f, self.alpha)
    }

    pub fn frame(&self, frame: &MeasurementFrame) -> Result<Vec<SearchRegion>> {
        let ellipse = self.locate(frame)?;
        let center = ellipse.center();
        let ground = Vector3::new(center.x, center.y, 0.0);
        let levels = self.scene.z_levels();
        let mut regions = Vec::new();
        for camera in &self.scene.cameras {
            // a camera sees the region when the ground point under the estimate
            // is in front of it and inside its image
            let visible = camera.project(&ground).map(|(px, _)| camera.in_image(&px)).unwrap_or(false);
            if !visible {
                continue;
            }
            let Ok(projected) = project_region(camera, &ellipse, &levels, DEFAULT_BOUNDARY_POINTS) else {
                continue;
            };
            regions.push(SearchRegion {
                frame_t: frame.timestamp,
                camera_id: camera.id().to_string(),
                estimate_xy: center,
                ellipse: ellipse.clone(),
                polygon_px: projected.polygon,
                bbox: projected.bbox,
                level_alpha: self.alpha,
            });
        }
        Ok(regions)
    }
}

pub fn gate_frame(
    scene: &Scene,
    frame: &MeasurementFrame,
    alpha: f64,
    config: &EstimatorConfig,
) -> Result<Vec<SearchRegion>> {
    Gate::new(scene, alpha, config)?.frame(frame)
}

/// Outcome for one input frame. `t` is absent only when the input line could
/// not be parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub t: Option<f64>,
    pub outcome: Result<Vec<SearchRegion>>,
}

/// Lazily gates a stream of (possibly unparseable) frames in order. Frames
/// whose timestamp decreases are reported as `StreamOrderViolation` records
/// and do not advance the stream clock.
pub struct GateStream<'a, I> {
    gate: Gate<'a>,
    frames: I,
    last_t: Option<f64>,
}

impl<I> Iterator for GateStream<'_, I>
where
    I: Iterator<Item = Result<MeasurementFrame>>,
{
    type Item = FrameResult;

    fn next(&mut self) -> Option<FrameResult> {
        let frame = match self.frames.next()? {
            Ok(frame) => frame,
            Err(e) => return Some(FrameResult { t: None, outcome: Err(e) }),
        };
        let t = frame.timestamp;
        if let Some(previous) = self.last_t {
            if t < previous {
                return Some(FrameResult {
                    t: Some(t),
                    outcome: Err(Error::StreamOrderViolation { t, previous }),
                });
            }
        }
        self.last_t = Some(t);
        Some(FrameResult {
            t: Some(t),
            outcome: self.gate.frame(&frame),
        })
    }
}

pub fn gate_results<'a, I>(gate: Gate<'a>, frames: I) -> GateStream<'a, I::IntoIter>
where
    I: IntoIterator<Item = Result<MeasurementFrame>>,
{
    GateStream {
        gate,
        frames: frames.into_iter(),
        last_t: None,
    }
}

/// Streaming map of [`gate_frame`] over already-parsed frames.
pub fn gate_stream<'a, I>(
    scene: &'a Scene,
    frames_in: I,
    alpha: f64,
    config: &EstimatorConfig,
) -> Result<impl Iterator<Item = FrameResult> + 'a>
where
    I: IntoIterator<Item = MeasurementFrame>,
    I::IntoIter: 'a,
{
    let gate = Gate::new(scene, alpha, config)?;
    Ok(gate_results(gate, frames_in.into_iter().map(Ok)))
}

/// Gates a batch in parallel; results keep input order and match
/// [`gate_stream`].
pub fn gate_batch(
    scene: &Scene,
    frames_in: &[MeasurementFrame],
    alpha: f64,
    config: &EstimatorConfig,
) -> Result<Vec<FrameResult>> {
    let gate = Gate::new(scene, alpha, config)?;
    let mut last = None;
    let order: Vec<Option<Error>> = frames_in
        .iter()
        .map(|f| match last {
            Some(previous) if f.timestamp < previous => Some(Error::StreamOrderViolation { t: f.timestamp, previous }),
            _ => {
                last = Some(f.timestamp);
                None
            }
        })
        .collect();
    Ok(frames_in
        .par_iter()
        .zip(order)
        .map(|(f, violation)| FrameResult {
            t: Some(f.timestamp),
            outcome: match violation {
                Some(e) => Err(e),
                None => gate.frame(f),
            },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub camera_id: String,
    pub estimate: [f64; 2],
    pub ellipse: ConfidenceEllipse,
    pub polygon: Vec<[f64; 2]>,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub clipped: bool,
    pub alpha: f64,
}

impl RegionRecord {
    pub fn pixel_box(&self) -> PixelBox {
        PixelBox {
            x_min: self.bbox[0],
            y_min: self.bbox[1],
            x_max: self.bbox[2],
            y_max: self.bbox[3],
            clipped: self.clipped,
        }
    }
}

impl From<&SearchRegion> for RegionRecord {
    fn from(r: &SearchRegion) -> Self {
        RegionRecord {
            camera_id: r.camera_id.clone(),
            estimate: [r.estimate_xy.x, r.estimate_xy.y],
            ellipse: r.ellipse.clone(),
            polygon: r.polygon_px.iter().map(|p| [p.x, p.y]).collect(),
            bbox: r.bbox.as_array(),
            clipped: r.bbox.clipped,
            alpha: r.level_alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

/// One output line: `{"t":..,"regions":[..],"error":null|{"kind":..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: Option<f64>,
    pub regions: Vec<RegionRecord>,
    pub error: Option<ErrorRecord>,
}

impl From<&FrameResult> for FrameRecord {
    fn from(r: &FrameResult) -> Self {
        match &r.outcome {
            Ok(regions) => FrameRecord {
                t: r.t,
                regions: regions.iter().map(RegionRecord::from).collect(),
                error: None,
            },
            Err(e) => FrameRecord {
                t: r.t,
                regions: Vec::new(),
                error: Some(ErrorRecord {
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                }),
            },
        }
    }
}

impl FrameRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Parses measurement JSONL, skipping blank lines. Unparseable lines become
/// `Err` items rather than ending the stream.
pub fn read_frames<R: BufRead>(reader: R) -> impl Iterator<Item = Result<MeasurementFrame>> {
    reader.lines().filter_map(|line| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(MeasurementFrame::from_json_line(&l)),
        Err(e) => Some(Err(Error::invalid("measurement stream", e.to_string()))),
    })
}

/// Gates measurement JSONL into region JSONL, one output line per input frame.
pub fn gate_jsonl<R: BufRead, W: Write>(
    scene: &Scene,
    input: R,
    alpha: f64,
    config: &EstimatorConfig,
    mut output: W,
) -> Result<usize> {
    let gate = Gate::new(scene, alpha, config)?;
    let mut count = 0;
    for result in gate_results(gate, read_frames(input)) {
        writeln!(output, "{}", FrameRecord::from(&result).to_json_line())
            .map_err(|e| Error::invalid("output", e.to_string()))?;
        count += 1;
    }
    Ok(count)
}
