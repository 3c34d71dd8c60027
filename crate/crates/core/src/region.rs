//! Fisher information, the Cramér-Rao covariance bound and the elliptical
//! confidence region `(p − c)ᵀ F (p − c) ≤ χ²₂(α)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2xX, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue floor (against the trace) below which a FIM is
/// treated as singular.
pub const PD_RELATIVE_TOL: f64 = 1e-10;

/// Default number of boundary samples for a projected region.
pub const DEFAULT_BOUNDARY_POINTS: usize = 64;

/// 2×2 Fisher information for the floor coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fim2(Matrix2<f64>);

impl Fim2 {
    /// Wraps a matrix, symmetrizing it.
    pub fn from_matrix(m: Matrix2<f64>) -> Self {
        Fim2((m + m.transpose()) * 0.5)
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Fim2(self.0 * factor)
    }

    /// Eigenvalues (ascending) and the matching unit eigenvectors, the second
    /// being the first rotated by +90°.
    pub fn eigen(&self) -> ([f64; 2], [Vector2<f64>; 2]) {
        let (a, b, d) = (self.0[(0, 0)], self.0[(0, 1)], self.0[(1, 1)]);
        let mean = 0.5 * (a + d);
        let half_diff = 0.5 * (a - d);
        let radius = half_diff.hypot(b);
        let lo = mean - radius;
        let hi = mean + radius;
        // eigenvector of the smaller eigenvalue, from whichever row is better conditioned
        let v = if radius == 0.0 {
            Vector2::new(1.0, 0.0)
        } else if half_diff <= 0.0 {
            Vector2::new(radius - half_diff, -b)
        } else {
            Vector2::new(-b, radius + half_diff)
        };
        let v = v.normalize();
        let w = Vector2::new(-v.y, v.x);
        ([lo, hi], [v, w])
    }

    pub fn is_positive_definite(&self) -> bool {
        self.check_pd().is_ok()
    }

    fn check_pd(&self) -> Result<()> {
        let ([lo, hi], _) = self.eigen();
        let trace = self.0.trace();
        if trace > 0.0 && lo > PD_RELATIVE_TOL * trace {
            Ok(())
        } else {
            Err(Error::SingularFim {
                eigenvalues: [lo, hi],
            })
        }
    }

    pub fn quadratic_form(&self, v: &Vector2<f64>) -> f64 {
        (v.transpose() * self.0 * v)[(0, 0)]
    }
}

/// `i_v · J Jᵀ`.
pub fn fim(jac: &Matrix2xX<f64>, i_v: f64) -> Fim2 {
    Fim2::from_matrix(jac * jac.transpose() * i_v)
}

/// Covariance lower bound `F⁻¹`.
pub fn crb(f: &Fim2) -> Result<Matrix2<f64>> {
    f.check_pd()?;
    let m = f.matrix();
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let inv = Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
    Ok((inv + inv.transpose()) * 0.5)
}

/// Best achievable RMSE, `√trace(F⁻¹)`, in meters.
pub fn best_rmse(f: &Fim2) -> Result<f64> {
    Ok(crb(f)?.trace().sqrt())
}

/// Upper-α quantile of the chi-squared distribution with 2 degrees of freedom.
pub fn chi2_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain { value: alpha });
    }
    Ok(-2.0 * alpha.ln())
}

/// The (1 − α) elliptical region around a position estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceEllipse {
    center: Vector2<f64>,
    fim: Fim2,
    alpha: f64,
    threshold: f64,
}

pub fn confidence_ellipse(center: Vector2<f64>, f: &Fim2, alpha: f64) -> Result<ConfidenceEllipse> {
    let threshold = chi2_quantile(alpha)?;
    f.check_pd()?;
    Ok(ConfidenceEllipse {
        center,
        fim: *f,
        alpha,
        threshold,
    })
}

impl ConfidenceEllipse {
    pub fn center(&self) -> Vector2<f64> {
        self.center
    }

    pub fn fim(&self) -> &Fim2 {
        &self.fim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn quadratic_form(&self, point: &Vector2<f64>) -> f64 {
        self.fim.quadratic_form(&(point - self.center))
    }

    pub fn contains(&self, point: &Vector2<f64>) -> bool {
        self.quadratic_form(point) <= self.threshold
    }

    /// Semi-axis vectors (minor-information axis first, i.e. the major axis).
    pub fn semi_axes(&self) -> [Vector2<f64>; 2] {
        let (lambda, vecs) = self.fim.eigen();
        [
            vecs[0] * (self.threshold / lambda[0]).sqrt(),
            vecs[1] * (self.threshold / lambda[1]).sqrt(),
        ]
    }

    pub fn area(&self) -> f64 {
        PI * self.threshold / self.fim.matrix().determinant().sqrt()
    }

    /// `n_points` boundary points, counterclockwise, uniform in the angular
    /// parameter.
    pub fn boundary(&self, n_points: usize) -> Result<Vec<Vector2<f64>>> {
        if n_points < 3 {
            return Err(Error::invalid("n_points", format!("need at least 3, got {n_points}")));
        }
        let [major, minor] = self.semi_axes();
        Ok((0..n_points)
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / n_points as f64;
                self.center + major * theta.cos() + minor * theta.sin()
            })
            .collect())
    }
}

pub fn ellipse_boundary(e: &ConfidenceEllipse, n_points: usize) -> Result<Vec<Vector2<f64>>> {
    e.boundary(n_points)
}

pub fn contains(e: &ConfidenceEllipse, point: &Vector2<f64>) -> bool {
    e.contains(point)
}

#[derive(Serialize, Deserialize)]
struct EllipseRepr {
    center: [f64; 2],
    fim: [[f64; 2]; 2],
    alpha: f64,
    threshold: f64,
}

impl Serialize for ConfidenceEllipse {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = self.fim.matrix();
        EllipseRepr {
            center: [self.center.x, self.center.y],
            fim: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
            alpha: self.alpha,
            threshold: self.threshold,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConfidenceEllipse {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = EllipseRepr::deserialize(d)?;
        let f = Fim2::from_matrix(Matrix2::new(r.fim[0][0], r.fim[0][1], r.fim[1][0], r.fim[1][1]));
        confidence_ellipse(Vector2::new(r.center[0], r.center[1]), &f, r.alpha)
            .map_err(serde::de::Error::custom)
    }
}
