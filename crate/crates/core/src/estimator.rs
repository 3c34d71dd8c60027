//! Least-squares (Gaussian maximum-likelihood) position estimation from one
//! measurement frame, using damped Gauss-Newton from several starting points.

use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Bounds;
use crate::wireless::{jacobian, predict_all, Anchor, MeasurementFrame, TargetState, MIN_DISTANCE};

/// Grid resolution used to seed the multi-start.
pub const SEED_GRID: usize = 8;

const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub max_iterations: usize,
    /// Converged once a step is this short (meters).
    pub step_tolerance: f64,
    /// Converged once an accepted step lowers the cost by less than this
    /// fraction.
    pub residual_tolerance: f64,
    pub multistart_count: usize,
    pub damping_init: f64,
    /// Area covered by the seeding grid; the anchors' bounding box when unset.
    pub grid_extent: Option<Bounds>,
    /// Transmitter height used for every candidate position.
    pub target_z: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            max_iterations: 100,
            step_tolerance: 1e-9,
            residual_tolerance: 1e-12,
            multistart_count: 5,
            damping_init: 1e-3,
            grid_extent: None,
            target_z: 0.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.multistart_count == 0 {
            return Err(Error::invalid("estimator config", "counts must be at least 1"));
        }
        if !(self.step_tolerance > 0.0 && self.residual_tolerance > 0.0 && self.damping_init > 0.0) {
            return Err(Error::invalid("estimator config", "tolerances and damping must be > 0"));
        }
        if !self.target_z.is_finite() {
            return Err(Error::invalid("estimator config", "target_z must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionEstimate {
    pub xy: Vector2<f64>,
    /// Euclidean norm of the final residual vector (dBm).
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index into [`initial_guesses`] of the winning start.
    pub start_index: usize,
}

/// Observed minus predicted RSS for each reading in the frame.
pub fn residuals(anchors: &[Anchor], frame: &MeasurementFrame, target: &TargetState) -> Result<DVector<f64>> {
    let (used, observed) = frame.resolve(anchors)?;
    Ok(observed - predict_all(&used, target)?)
}

fn cost(anchors: &[Anchor], observed: &DVector<f64>, target: &TargetState) -> Result<f64> {
    Ok((observed - predict_all(anchors, target)?).norm_squared())
}

fn default_extent(anchors: &[Anchor]) -> Bounds {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for a in anchors {
        let p = a.position();
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    // keep a collinear or single-anchor layout from giving a zero-area grid
    let pad = 0.5 * ((x1 - x0).max(y1 - y0)).max(1.0);
    if x1 - x0 < 1e-9 {
        x0 -= pad;
        x1 += pad;
    }
    if y1 - y0 < 1e-9 {
        y0 -= pad;
        y1 += pad;
    }
    Bounds { x0, y0, x1, y1 }
}

/// Deterministic starting points, in priority order:
/// the strongest anchor, the inverse-range-weighted anchor centroid, then the
/// best cells of an 8×8 grid by objective value.
pub fn initial_guesses(
    anchors: &[Anchor],
    frame: &MeasurementFrame,
    config: &EstimatorConfig,
) -> Result<Vec<Vector2<f64>>> {
    let (used, observed) = frame.resolve(anchors)?;
    if used.is_empty() {
        return Err(Error::InsufficientAnchors { got: 0 });
    }
    let count = config.multistart_count;
    let mut guesses = Vec::with_capacity(count);

    let strongest = (0..used.len())
        .max_by(|&i, &j| observed[i].total_cmp(&observed[j]).then(j.cmp(&i)))
        .expect("non-empty");
    guesses.push(used[strongest].position().xy());
    if count == 1 {
        return Ok(guesses);
    }

    let mut weighted = Vector2::zeros();
    let mut total = 0.0;
    for (a, &r) in used.iter().zip(observed.iter()) {
        let range = 10f64.powf((r - a.path_loss_a()) / (10.0 * a.path_loss_b()));
        let w = 1.0 / range.max(MIN_DISTANCE);
        if w.is_finite() {
            weighted += a.position().xy() * w;
            total += w;
        }
    }
    guesses.push(if total > 0.0 && weighted.iter().all(|v| v.is_finite()) {
        weighted / total
    } else {
        guesses[0]
    });
    if count == 2 {
        return Ok(guesses);
    }

    let extent = config.grid_extent.unwrap_or_else(|| default_extent(&used));
    let mut cells = grid_objective(&used, &observed, &extent, config.target_z);
    cells.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    guesses.extend(
        cells
            .into_iter()
            .take(count - 2)
            .map(|(idx, _)| grid_center(&extent, idx)),
    );
    Ok(guesses)
}

/// Objective at each seeding cell center, row-major from `(x0, y0)`; cells
/// on top of an anchor score `+∞`.
fn grid_objective(anchors: &[Anchor], observed: &DVector<f64>, extent: &Bounds, z: f64) -> Vec<(usize, f64)> {
    (0..SEED_GRID * SEED_GRID)
        .map(|idx| {
            let c = grid_center(extent, idx);
            let value = cost(anchors, observed, &TargetState::new(c, z)).unwrap_or(f64::INFINITY);
            (idx, value)
        })
        .collect()
}

pub(crate) fn grid_center(extent: &Bounds, idx: usize) -> Vector2<f64> {
    let (ix, iy) = (idx % SEED_GRID, idx / SEED_GRID);
    let dx = (extent.x1 - extent.x0) / SEED_GRID as f64;
    let dy = (extent.y1 - extent.y0) / SEED_GRID as f64;
    Vector2::new(extent.x0 + (ix as f64 + 0.5) * dx, extent.y0 + (iy as f64 + 0.5) * dy)
}

/// Minimizes `Σ (r_i − h_i(p))²` over the floor position.
pub fn solve(anchors: &[Anchor], frame: &MeasurementFrame, config: &EstimatorConfig) -> Result<PositionEstimate> {
    config.validate()?;
    let (used, observed) = frame.resolve(anchors)?;
    if used.len() < 3 {
        return Err(Error::InsufficientAnchors { got: used.len() });
    }
    let starts = initial_guesses(&used, frame, config)?;
    let mut best: Option<PositionEstimate> = None;
    for (index, start) in starts.into_iter().enumerate() {
        let Some(run) = refine(&used, &observed, start, config) else {
            continue;
        };
        let run = PositionEstimate { start_index: index, ..run };
        // strict comparison keeps the earliest start on ties
        if best.as_ref().is_none_or(|b| run.residual_norm < b.residual_norm) {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::DegenerateDistance {
        anchor_id: used[0].id().to_string(),
        min_distance: MIN_DISTANCE,
    })
}

fn nudge_off_anchors(anchors: &[Anchor], mut p: Vector2<f64>, z: f64) -> Vector2<f64> {
    for _ in 0..8 {
        let clear = anchors
            .iter()
            .all(|a| (TargetState::new(p, z).position() - a.position()).norm() >= MIN_DISTANCE * 10.0);
        if clear {
            break;
        }
        p += Vector2::new(0.05, 0.05);
    }
    p
}

/// One damped Gauss-Newton run. `None` if the start cannot be evaluated.
fn refine(
    anchors: &[Anchor],
    observed: &DVector<f64>,
    start: Vector2<f64>,
    config: &EstimatorConfig,
) -> Option<PositionEstimate> {
    let z = config.target_z;
    let mut p = nudge_off_anchors(anchors, start, z);
    let mut current = cost(anchors, observed, &TargetState::new(p, z)).ok()?;
    let mut lambda = config.damping_init;
    let mut converged = current == 0.0;
    let mut iterations = 0;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let target = TargetState::new(p, z);
        let Ok(jac) = jacobian(anchors, &target) else { break };
        let Ok(pred) = predict_all(anchors, &target) else { break };
        let r = observed - pred;
        // residual = observed - h(p), so the descent direction solves
        // (J Jᵀ + λI) δ = J r
        let normal = &jac * jac.transpose();
        let rhs: Vector2<f64> = &jac * r;

        loop {
            let damped = normal + Matrix2::identity() * lambda;
            let Some(step) = damped.try_inverse().map(|inv| inv * rhs) else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    break;
                }
                continue;
            };
            if step.norm() <= config.step_tolerance {
                converged = true;
                break;
            }
            let candidate = p + step;
            match cost(anchors, observed, &TargetState::new(candidate, z)) {
                Ok(next) if next < current => {
                    let decrease = (current - next) / current;
                    p = candidate;
                    current = next;
                    lambda = (lambda / 10.0).max(f64::MIN_POSITIVE);
                    if decrease <= config.residual_tolerance || current == 0.0 {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        break;
                    }
                }
            }
        }
        if lambda > MAX_DAMPING {
            break;
        }
    }

    Some(PositionEstimate {
        xy: p,
        residual_norm: current.sqrt(),
        iterations,
        converged,
        start_index: 0,
    })
}
