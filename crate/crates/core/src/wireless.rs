//! RSS measurement model: anchors, the log-distance path-loss law, its
//! horizontal gradient, noise models and the noise information scalar.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DVector, Matrix2xX, Vector2, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Smallest anchor-target distance accepted by the model (meters).
pub const MIN_DISTANCE: f64 = 0.01;

/// Step used for the centered finite-difference score of an empirical density.
pub const SCORE_FD_STEP: f64 = 1e-6;

const DB_PER_NEPER: f64 = 10.0 / std::f64::consts::LN_10;

/// A receiver at a known position with calibrated path-loss parameters
/// `rss = A + 10 B log10(d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnchorRepr", into = "AnchorRepr")]
pub struct Anchor {
    id: String,
    position: Vector3<f64>,
    path_loss_a: f64,
    path_loss_b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorRepr {
    id: String,
    position: [f64; 3],
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
}

impl TryFrom<AnchorRepr> for Anchor {
    type Error = Error;

    fn try_from(r: AnchorRepr) -> Result<Self> {
        Anchor::new(r.id, Vector3::from(r.position), r.a, r.b)
    }
}

impl From<Anchor> for AnchorRepr {
    fn from(a: Anchor) -> Self {
        AnchorRepr {
            id: a.id,
            position: a.position.into(),
            a: a.path_loss_a,
            b: a.path_loss_b,
        }
    }
}

impl Anchor {
    pub fn new(
        id: impl Into<String>,
        position: Vector3<f64>,
        path_loss_a: f64,
        path_loss_b: f64,
    ) -> Result<Self> {
        let id = id.into();
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("anchor", format!("`{id}` has a non-finite position")));
        }
        if !path_loss_a.is_finite() || !path_loss_b.is_finite() {
            return Err(Error::invalid("anchor", format!("`{id}` has non-finite A/B")));
        }
        if path_loss_b == 0.0 {
            return Err(Error::invalid("anchor", format!("`{id}` has B = 0")));
        }
        Ok(Anchor {
            id,
            position,
            path_loss_a,
            path_loss_b,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    pub fn path_loss_a(&self) -> f64 {
        self.path_loss_a
    }

    pub fn path_loss_b(&self) -> f64 {
        self.path_loss_b
    }

    fn offset(&self, target: &TargetState) -> Result<(Vector3<f64>, f64)> {
        let delta = target.position() - self.position;
        let d = delta.norm();
        if !(d >= MIN_DISTANCE) {
            return Err(Error::DegenerateDistance {
                anchor_id: self.id.clone(),
                min_distance: MIN_DISTANCE,
            });
        }
        Ok((delta, d))
    }
}

/// Transmitter position: the estimated floor coordinates plus a fixed height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub xy: Vector2<f64>,
    pub z_fixed: f64,
}

impl TargetState {
    pub fn new(xy: Vector2<f64>, z_fixed: f64) -> Self {
        TargetState { xy, z_fixed }
    }

    pub fn on_floor(x: f64, y: f64) -> Self {
        TargetState {
            xy: Vector2::new(x, y),
            z_fixed: 0.0,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.xy.x, self.xy.y, self.z_fixed)
    }
}

/// Predicted RSS at one anchor.
pub fn predict_rss(anchor: &Anchor, target: &TargetState) -> Result<f64> {
    let (_, d) = anchor.offset(target)?;
    Ok(anchor.path_loss_a + 10.0 * anchor.path_loss_b * d.log10())
}

/// Noise-free measurement vector `h(p)`, ordered like `anchors`.
pub fn predict_all(anchors: &[Anchor], target: &TargetState) -> Result<DVector<f64>> {
    let values = anchors
        .iter()
        .map(|a| predict_rss(a, target))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

/// Gradient of `h` with respect to the floor coordinates: a 2×N matrix whose
/// column `i` is `10/ln10 · B_i · (p − p_i)_xy / d_i²`, with `d_i` the full 3D
/// distance.
pub fn jacobian(anchors: &[Anchor], target: &TargetState) -> Result<Matrix2xX<f64>> {
    let mut jac = Matrix2xX::zeros(anchors.len());
    for (i, anchor) in anchors.iter().enumerate() {
        let (delta, d) = anchor.offset(target)?;
        let scale = DB_PER_NEPER * anchor.path_loss_b / (d * d);
        jac[(0, i)] = scale * delta.x;
        jac[(1, i)] = scale * delta.y;
    }
    Ok(jac)
}

type LogDensityFn = dyn Fn(f64) -> f64 + Send + Sync;
type SamplerFn = dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync;

/// A user-supplied noise density: log-density for the score, and a sampler
/// driven by the caller's seeded generator.
#[derive(Clone)]
pub struct EmpiricalNoise {
    log_density: Arc<LogDensityFn>,
    score: Option<Arc<LogDensityFn>>,
    sampler: Arc<SamplerFn>,
}

impl EmpiricalNoise {
    pub fn new<L, S>(log_density: L, sampler: S) -> Self
    where
        L: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    {
        EmpiricalNoise {
            log_density: Arc::new(log_density),
            score: None,
            sampler: Arc::new(sampler),
        }
    }

    /// Supplies the analytic derivative of the log-density.
    pub fn with_score<F>(mut self, score: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.score = Some(Arc::new(score));
        self
    }

    pub fn log_density(&self, v: f64) -> f64 {
        (self.log_density)(v)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        (self.sampler)(rng)
    }

    /// d/dv log p(v), analytic when available, otherwise a centered difference.
    pub fn score(&self, v: f64) -> Result<f64> {
        if let Some(score) = &self.score {
            let s = score(v);
            return if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::NonFiniteDensity { at: v })
            };
        }
        let hi = self.log_density(v + SCORE_FD_STEP);
        let lo = self.log_density(v - SCORE_FD_STEP);
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFiniteDensity { at: v });
        }
        Ok((hi - lo) / (2.0 * SCORE_FD_STEP))
    }
}

impl fmt::Debug for EmpiricalNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmpiricalNoise")
            .field("analytic_score", &self.score.is_some())
            .finish_non_exhaustive()
    }
}

/// i.i.d. per-anchor measurement noise.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    Empirical(EmpiricalNoise),
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("noise", format!("gaussian sigma must be > 0, got {sigma}")));
        }
        Ok(NoiseModel::Gaussian { sigma })
    }

    /// Zero-mean Laplace noise with scale `b`, as an empirical density
    /// (log-density and inverse-CDF sampler, no analytic score).
    pub fn laplace(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid("noise", format!("laplace scale must be > 0, got {b}")));
        }
        let log_norm = -(2.0 * b).ln();
        Ok(NoiseModel::Empirical(EmpiricalNoise::new(
            move |v: f64| log_norm - v.abs() / b,
            move |rng: &mut dyn RngCore| {
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            },
        )))
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            NoiseModel::Gaussian { sigma } => Some(*sigma),
            NoiseModel::Empirical(_) => None,
        }
    }

    /// Draws one noise value.
    pub fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            NoiseModel::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            NoiseModel::Empirical(e) => e.sample(rng),
        }
    }
}

impl Serialize for NoiseModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NoiseModel::Gaussian { sigma } => {
                let mut map = serializer.serialize_map(Some(2))?;
                map.serialize_entry("type", "gaussian")?;
                map.serialize_entry("sigma", sigma)?;
                map.end()
            }
            NoiseModel::Empirical(_) => Err(serde::ser::Error::custom(
                "empirical noise models have no JSON form",
            )),
        }
    }
}

impl<'de> Deserialize<'de> for NoiseModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
        enum Repr {
            Gaussian { sigma: f64 },
        }
        match Repr::deserialize(deserializer)? {
            Repr::Gaussian { sigma } => NoiseModel::gaussian(sigma).map_err(serde::de::Error::custom),
        }
    }
}

/// Expected squared score `E[(d/dv log p(v))²]` of the noise density.
///
/// Exactly `1/σ²` for Gaussian noise; Monte Carlo over `mc_samples` draws
/// otherwise.
pub fn noise_information(noise: &NoiseModel, mc_samples: usize, seed: u64) -> Result<f64> {
    match noise {
        NoiseModel::Gaussian { sigma } => Ok(1.0 / (sigma * sigma)),
        NoiseModel::Empirical(e) => {
            if mc_samples == 0 {
                return Err(Error::invalid("mc_samples", "must be at least 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            for _ in 0..mc_samples {
                let v = e.sample(&mut rng);
                let s = e.score(v)?;
                acc += s * s;
            }
            Ok(acc / mc_samples as f64)
        }
    }
}

/// One RSS reading.
#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub anchor_id: String,
    pub rss: f64,
}

/// All readings taken at one instant. Anchors may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub timestamp: f64,
    readings: Vec<Reading>,
}

impl MeasurementFrame {
    pub fn new(timestamp: f64, readings: Vec<Reading>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(readings.len());
        for r in &readings {
            if !seen.insert(r.anchor_id.as_str()) {
                return Err(Error::DuplicateAnchor(r.anchor_id.clone()));
            }
        }
        Ok(MeasurementFrame { timestamp, readings })
    }

    /// Builds a frame from values ordered like `anchors`.
    pub fn from_values(timestamp: f64, anchors: &[Anchor], values: &[f64]) -> Self {
        let readings = anchors
            .iter()
            .zip(values)
            .map(|(a, &rss)| Reading {
                anchor_id: a.id.clone(),
                rss,
            })
            .collect();
        MeasurementFrame { timestamp, readings }
    }

    pub fn readings(&self) -> &[Reading] {
        &self.readings
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    /// Pairs each reading with its anchor, in reading order.
    pub fn resolve(&self, anchors: &[Anchor]) -> Result<(Vec<Anchor>, DVector<f64>)> {
        let mut matched = Vec::with_capacity(self.readings.len());
        let mut values = Vec::with_capacity(self.readings.len());
        for r in &self.readings {
            let anchor = anchors
                .iter()
                .find(|a| a.id == r.anchor_id)
                .ok_or_else(|| Error::UnknownAnchor(r.anchor_id.clone()))?;
            matched.push(anchor.clone());
            values.push(r.rss);
        }
        Ok((matched, DVector::from_vec(values)))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::invalid("measurement frame", e.to_string()))
    }
}

impl Serialize for MeasurementFrame {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct Rss<'a>(&'a [Reading]);
        impl Serialize for Rss<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some(self.0.len()))?;
                for r in self.0 {
                    map.serialize_entry(&r.anchor_id, &r.rss)?;
                }
                map.end()
            }
        }
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("t", &self.timestamp)?;
        map.serialize_entry("rss", &Rss(&self.readings))?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for MeasurementFrame {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct Readings(Vec<Reading>);

        impl<'de> Deserialize<'de> for Readings {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = Readings;
                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        f.write_str("a map of anchor id to RSS in dBm")
                    }
                    fn visit_map<A: MapAccess<'de>>(
                        self,
                        mut access: A,
                    ) -> std::result::Result<Readings, A::Error> {
                        let mut out: Vec<Reading> = Vec::new();
                        while let Some((anchor_id, rss)) = access.next_entry::<String, f64>()? {
                            if out.iter().any(|r| r.anchor_id == anchor_id) {
                                return Err(serde::de::Error::custom(format!(
                                    "duplicate anchor `{anchor_id}`"
                                )));
                            }
                            out.push(Reading { anchor_id, rss });
                        }
                        Ok(Readings(out))
                    }
                }
                d.deserialize_map(V)
            }
        }

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Repr {
            t: f64,
            rss: Readings,
        }

        let repr = Repr::deserialize(deserializer)?;
        Ok(MeasurementFrame {
            timestamp: repr.t,
            readings: repr.rss.0,
        })
    }
}

/// Simulated frame: `h(p)` plus one noise draw per anchor.
pub fn sample_measurements(
    anchors: &[Anchor],
    target: &TargetState,
    noise: &NoiseModel,
    timestamp: f64,
    seed: u64,
) -> Result<MeasurementFrame> {
    let mean = predict_all(anchors, target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = mean.iter().map(|m| m + noise.draw(&mut rng)).collect();
    Ok(MeasurementFrame::from_values(timestamp, anchors, &values))
}
