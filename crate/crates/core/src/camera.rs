//! Pinhole projection `s [u v 1]ᵀ = K [R | T] [x y z 1]ᵀ` of world points and
//! confidence regions into pixel space.

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::ConfidenceEllipse;

/// Minimum depth `s` for a point to count as in front of the camera.
pub const MIN_DEPTH: f64 = 1e-9;

const ROTATION_TOL: f64 = 1e-9;

/// Calibrated pinhole camera without lens distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr", into = "CameraRepr")]
pub struct CameraModel {
    id: String,
    intrinsics: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    image_size: (u32, u32),
}

#[derive(Serialize, Deserialize)]
struct CameraRepr {
    id: String,
    #[serde(rename = "K")]
    k: [[f64; 3]; 3],
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    #[serde(rename = "T")]
    t: [f64; 3],
    image_size: [u32; 2],
    // present only so calibration files with distortion fail loudly
    #[serde(default, skip_serializing, alias = "D", alias = "dist_coeffs", alias = "distortion_coefficients")]
    distortion: Option<serde_json::Value>,
}

fn from_rows(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

impl TryFrom<CameraRepr> for CameraModel {
    type Error = Error;

    fn try_from(r: CameraRepr) -> Result<Self> {
        if r.distortion.is_some() {
            return Err(Error::invalid(
                "camera",
                format!("`{}` carries lens distortion terms; only undistorted pinhole cameras are supported", r.id),
            ));
        }
        CameraModel::new(
            r.id,
            from_rows(&r.k),
            from_rows(&r.r),
            Vector3::from(r.t),
            (r.image_size[0], r.image_size[1]),
        )
    }
}

impl From<CameraModel> for CameraRepr {
    fn from(c: CameraModel) -> Self {
        CameraRepr {
            k: to_rows(&c.intrinsics),
            r: to_rows(&c.rotation),
            t: c.translation.into(),
            image_size: [c.image_size.0, c.image_size.1],
            id: c.id,
            distortion: None,
        }
    }
}

impl CameraModel {
    pub fn new(
        id: impl Into<String>,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let id = id.into();
        let all_finite = intrinsics.iter().chain(rotation.iter()).chain(translation.iter()).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid("camera", format!("`{id}` has non-finite parameters")));
        }
        let k = &intrinsics;
        let upper = k[(1, 0)] == 0.0 && k[(2, 0)] == 0.0 && k[(2, 1)] == 0.0;
        if !upper || k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 || k[(2, 2)] <= 0.0 {
            return Err(Error::invalid(
                "camera",
                format!("`{id}` intrinsics must be upper triangular with a positive diagonal"),
            ));
        }
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOL || (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::invalid("camera", format!("`{id}` R is not a proper rotation")));
        }
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(Error::invalid("camera", format!("`{id}` has an empty image")));
        }
        Ok(CameraModel {
            id,
            intrinsics,
            rotation,
            translation,
            image_size,
        })
    }

    /// Camera at `position` looking along `forward` with image "down" direction
    /// close to `down`.
    pub fn look_at(
        id: impl Into<String>,
        intrinsics: Matrix3<f64>,
        position: Vector3<f64>,
        forward: Vector3<f64>,
        down: Vector3<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let z = forward.normalize();
        let x = down.cross(&z);
        if x.norm() < 1e-12 {
            return Err(Error::invalid("camera", "down direction is parallel to forward"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * position);
        CameraModel::new(id, intrinsics, rotation, translation, image_size)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    /// The 3×4 matrix `K [R | T]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.intrinsics * rt
    }

    /// Projects a homogeneous world point. The returned depth is the third
    /// homogeneous coordinate.
    pub fn project_homogeneous(&self, world: &Vector4<f64>) -> Result<(Vector2<f64>, f64)> {
        let h = self.projection_matrix() * world;
        let s = h.z;
        if !(s > MIN_DEPTH) {
            return Err(Error::BehindCamera { depth: s });
        }
        Ok((Vector2::new(h.x / s, h.y / s), s))
    }

    pub fn project(&self, world: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        self.project_homogeneous(&world.push(1.0))
    }

    /// Inverse of [`project`](Self::project) given the depth.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        let k_inv = self
            .intrinsics
            .try_inverse()
            .expect("intrinsics validated as invertible");
        let cam = k_inv * Vector3::new(pixel.x * depth, pixel.y * depth, depth);
        self.rotation.transpose() * (cam - self.translation)
    }

    pub fn in_image(&self, pixel: &Vector2<f64>) -> bool {
        let (w, h) = self.image_size;
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x <= w as f64 && pixel.y <= h as f64
    }
}

/// Axis-aligned pixel rectangle handed to a tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub clipped: bool,
}

impl PixelBox {
    /// Bounding box of the points, or `None` for an empty slice.
    pub fn bounding(points: &[Vector2<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut b = PixelBox {
            x_min: first.x,
            y_min: first.y,
            x_max: first.x,
            y_max: first.y,
            clipped: false,
        };
        for p in &points[1..] {
            b.x_min = b.x_min.min(p.x);
            b.y_min = b.y_min.min(p.y);
            b.x_max = b.x_max.max(p.x);
            b.y_max = b.y_max.max(p.y);
        }
        Some(b)
    }

    /// Clamps to `[0, w] × [0, h]`; `None` when nothing is left.
    pub fn clip_to(&self, image_size: (u32, u32)) -> Option<Self> {
        let (w, h) = (image_size.0 as f64, image_size.1 as f64);
        if self.x_max < 0.0 || self.y_max < 0.0 || self.x_min > w || self.y_min > h {
            return None;
        }
        let clipped = PixelBox {
            x_min: self.x_min.max(0.0),
            y_min: self.y_min.max(0.0),
            x_max: self.x_max.min(w),
            y_max: self.y_max.min(h),
            clipped: false,
        };
        let changed = clipped.x_min != self.x_min
            || clipped.y_min != self.y_min
            || clipped.x_max != self.x_max
            || clipped.y_max != self.y_max;
        Some(PixelBox {
            clipped: changed || self.clipped,
            ..clipped
        })
    }

    pub fn contains_point(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_box(&self, other: &PixelBox) -> bool {
        other.x_min >= self.x_min
            && other.y_min >= self.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// A confidence region as seen by one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedRegion {
    /// Convex hull of the projected boundary points, counterclockwise in pixel
    /// coordinates.
    pub polygon: Vec<Vector2<f64>>,
    pub bbox: PixelBox,
}

/// Projects the ellipse boundary lifted to each height in `z_levels`, then
/// returns the convex hull and its image-clipped bounding box. Points behind
/// the camera are dropped.
pub fn project_region(
    camera: &CameraModel,
    e: &ConfidenceEllipse,
    z_levels: &[f64],
    n_points: usize,
) -> Result<ProjectedRegion> {
    if z_levels.is_empty() {
        return Err(Error::invalid("z_levels", "need at least one level"));
    }
    let boundary = e.boundary(n_points)?;
    let mut projected = Vec::with_capacity(boundary.len() * z_levels.len());
    let mut last_depth = 0.0;
    for &z in z_levels {
        for p in &boundary {
            match camera.project(&Vector3::new(p.x, p.y, z)) {
                Ok((px, _)) => projected.push(px),
                Err(Error::BehindCamera { depth }) => last_depth = depth,
                Err(other) => return Err(other),
            }
        }
    }
    if projected.is_empty() {
        return Err(Error::BehindCamera { depth: last_depth });
    }
    let polygon = convex_hull(&projected);
    let bbox = PixelBox::bounding(&polygon)
        .and_then(|b| b.clip_to(camera.image_size))
        .ok_or(Error::RegionOutsideImage)?;
    Ok(ProjectedRegion { polygon, bbox })
}

/// Andrew's monotone chain. Collinear points are dropped; a fully degenerate
/// input collapses to its distinct extreme points.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}
