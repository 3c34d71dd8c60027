//! Deployment description shared by the simulator, the gate and the service.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::wireless::{Anchor, NoiseModel};

/// Default calibration for simulated anchors.
pub const DEFAULT_PATH_LOSS_A: f64 = -45.0;
pub const DEFAULT_PATH_LOSS_B: f64 = -2.0;
pub const DEFAULT_PERSON_HEIGHT: f64 = 1.8;

/// Axis-aligned floor rectangle, serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Bounds {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for Bounds {
    fn from(v: [f64; 4]) -> Self {
        Bounds { x0: v[0], y0: v[1], x1: v[2], y1: v[3] }
    }
}

impl From<Bounds> for [f64; 4] {
    fn from(b: Bounds) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl Bounds {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Bounds { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) && self.x1 > self.x0 && self.y1 > self.y0
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Point at fractional coordinates `(u, v)` of the rectangle.
    pub fn lerp(&self, u: f64, v: f64) -> Vector2<f64> {
        Vector2::new(self.x0 + u * self.width(), self.y0 + v * self.height())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub anchors: Vec<Anchor>,
    #[serde(default)]
    pub cameras: Vec<CameraModel>,
    pub noise: NoiseModel,
    pub bounds: Bounds,
    #[serde(default = "default_person_height")]
    pub person_height: f64,
    /// Transmitter height above the floor.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub target_z: f64,
}

fn default_person_height() -> f64 {
    DEFAULT_PERSON_HEIGHT
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl Scene {
    /// Structural checks that every scene must pass before it is used or
    /// stored. Estimation studies additionally need three anchors, see
    /// [`Scene::validate_for_estimation`].
    pub fn validate(&self) -> Result<()> {
        if !self.bounds.is_valid() {
            return Err(Error::invalid("scene", "bounds must be finite with x1 > x0 and y1 > y0"));
        }
        if !(self.person_height.is_finite() && self.person_height >= 0.0) {
            return Err(Error::invalid("scene", "person_height must be finite and non-negative"));
        }
        if !self.target_z.is_finite() {
            return Err(Error::invalid("scene", "target_z must be finite"));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            if self.anchors[..i].iter().any(|b| b.id() == a.id()) {
                return Err(Error::invalid("scene", format!("duplicate anchor id `{}`", a.id())));
            }
        }
        for (i, c) in self.cameras.iter().enumerate() {
            if self.cameras[..i].iter().any(|d| d.id() == c.id()) {
                return Err(Error::invalid("scene", format!("duplicate camera id `{}`", c.id())));
            }
        }
        Ok(())
    }

    pub fn validate_for_estimation(&self) -> Result<()> {
        self.validate()?;
        if self.anchors.len() < 3 {
            return Err(Error::InsufficientAnchors { got: self.anchors.len() });
        }
        Ok(())
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Scene {
        Scene { noise, ..self.clone() }
    }

    /// Heights at which a region is lifted before projection: floor and head.
    pub fn z_levels(&self) -> Vec<f64> {
        if self.person_height > 0.0 {
            vec![0.0, self.person_height]
        } else {
            vec![0.0]
        }
    }

    /// Interior evaluation points: a 3×3 lattice at 25/50/75 % of the bounds.
    pub fn default_targets(&self) -> Vec<Vector2<f64>> {
        let mut out = Vec::with_capacity(9);
        for v in [0.25, 0.5, 0.75] {
            for u in [0.25, 0.5, 0.75] {
                out.push(self.bounds.lerp(u, v));
            }
        }
        out
    }

    /// The reference study layout: 32 anchors evenly spaced on the perimeter
    /// of a 20 m × 20 m room at 2.5 m height, Gaussian noise with σ = 3 dBm,
    /// and two ceiling cameras.
    pub fn default_study() -> Scene {
        let bounds = Bounds::new(0.0, 0.0, 20.0, 20.0);
        let anchors = perimeter_anchors(&bounds, 32, 2.5);
        let k = Matrix3::new(1000.0, 0.0, 960.0, 0.0, 1000.0, 540.0, 0.0, 0.0, 1.0);
        let cameras = vec![
            CameraModel::look_at(
                "overhead",
                k,
                Vector3::new(10.0, 10.0, 12.0),
                Vector3::new(0.0, 0.0, -1.0),
                Vector3::new(0.0, -1.0, 0.0),
                (1920, 1080),
            )
            .expect("valid camera"),
            CameraModel::look_at(
                "corner",
                k,
                Vector3::new(-2.0, -2.0, 6.0),
                Vector3::new(12.0, 12.0, -6.0),
                Vector3::new(0.0, 0.0, -1.0),
                (1920, 1080),
            )
            .expect("valid camera"),
        ];
        Scene {
            anchors,
            cameras,
            noise: NoiseModel::Gaussian { sigma: 3.0 },
            bounds,
            person_height: DEFAULT_PERSON_HEIGHT,
            target_z: 0.0,
        }
    }
}

/// `n` anchors spaced evenly by arc length around the rectangle, starting at
/// `(x0, y0)` and running counterclockwise.
pub fn perimeter_anchors(bounds: &Bounds, n: usize, height: f64) -> Vec<Anchor> {
    let (w, h) = (bounds.width(), bounds.height());
    let perimeter = 2.0 * (w + h);
    (0..n)
        .map(|i| {
            let s = perimeter * i as f64 / n as f64;
            let xy = if s < w {
                Vector2::new(bounds.x0 + s, bounds.y0)
            } else if s < w + h {
                Vector2::new(bounds.x1, bounds.y0 + (s - w))
            } else if s < 2.0 * w + h {
                Vector2::new(bounds.x1 - (s - w - h), bounds.y1)
            } else {
                Vector2::new(bounds.x0, bounds.y1 - (s - 2.0 * w - h))
            };
            Anchor::new(
                format!("b{i:02}"),
                Vector3::new(xy.x, xy.y, height),
                DEFAULT_PATH_LOSS_A,
                DEFAULT_PATH_LOSS_B,
            )
            .expect("finite anchor")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_study_layout() {
        let scene = Scene::default_study();
        scene.validate_for_estimation().unwrap();
        assert_eq!(scene.anchors.len(), 32);
        for a in &scene.anchors {
            let p = a.position();
            let on_edge = p.x == 0.0 || p.x == 20.0 || p.y == 0.0 || p.y == 20.0;
            assert!(on_edge, "{p:?}");
        }
        assert_eq!(scene.anchors[8].position().xy(), Vector2::new(20.0, 0.0));
        assert_eq!(scene.anchors[16].position().xy(), Vector2::new(20.0, 20.0));
        assert_eq!(scene.default_targets().len(), 9);
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let scene = Scene::default_study();
        let first = serde_json::to_string_pretty(&scene).unwrap();
        let back: Scene = serde_json::from_str(&first).unwrap();
        let second = serde_json::to_string_pretty(&back).unwrap();
        assert_eq!(first, second);
        let v: serde_json::Value = serde_json::from_str(&first).unwrap();
        assert_eq!(v["noise"], serde_json::json!({"type": "gaussian", "sigma": 3.0}));
        assert_eq!(v["bounds"], serde_json::json!([0.0, 0.0, 20.0, 20.0]));
        assert!(v.get("target_z").is_none());
    }

    #[test]
    fn validation() {
        let mut scene = Scene::default_study();
        scene.bounds = Bounds::new(0.0, 0.0, 0.0, 5.0);
        assert!(scene.validate().is_err());

        let mut scene = Scene::default_study();
        let dup = scene.anchors[0].clone();
        scene.anchors.push(dup);
        assert!(scene.validate().is_err());

        let mut scene = Scene::default_study();
        scene.anchors.truncate(2);
        scene.validate().unwrap();
        assert_eq!(scene.validate_for_estimation().unwrap_err(), Error::InsufficientAnchors { got: 2 });
    }

    #[test]
    fn rejects_unknown_noise() {
        let json = r#"{"anchors":[],"noise":{"type":"cauchy","sigma":1},"bounds":[0,0,1,1]}"#;
        assert!(serde_json::from_str::<Scene>(json).is_err());
        let json = r#"{"anchors":[],"noise":{"type":"gaussian","sigma":-1},"bounds":[0,0,1,1]}"#;
        assert!(serde_json::from_str::<Scene>(json).is_err());
        let json = r#"{"anchors":[],"noise":{"type":"gaussian","sigma":1},"bounds":[0,0,1,1]}"#;
        let s: Scene = serde_json::from_str(json).unwrap();
        assert_eq!(s.person_height, DEFAULT_PERSON_HEIGHT);
    }
}
