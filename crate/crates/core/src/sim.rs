//! Monte Carlo studies over a scene: positioning error against noise level,
//! confidence-region coverage, and best-achievable-RMSE heatmaps.
//!
//! Trial `i` (numbered across targets, `target_index * trials + trial`) draws
//! its noise from a generator seeded with `seed ^ i`. The same trial numbers are
//! reused for every noise level, so Gaussian runs at different σ see scaled
//! copies of the same standard-normal draws.

use nalgebra::{Rotation2, Vector2};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimator::{solve, EstimatorConfig};
use crate::region::{best_rmse, confidence_ellipse, crb, fim};
use crate::scene::{Bounds, Scene};
use crate::wireless::{jacobian, noise_information, sample_measurements, Anchor, NoiseModel, TargetState};

/// Confidence level reported alongside MSE studies.
pub const REPORT_ALPHA: f64 = 0.05;

/// Monte Carlo draws used to evaluate the information of a non-Gaussian
/// noise density.
pub const NOISE_INFO_SAMPLES: usize = 200_000;

/// Estimator settings derived from the scene: seeding grid over the bounds and
/// the scene's transmitter height.
pub fn scene_estimator_config(scene: &Scene) -> EstimatorConfig {
    EstimatorConfig {
        grid_extent: Some(scene.bounds),
        target_z: scene.target_z,
        ..EstimatorConfig::default()
    }
}

fn scene_information(noise: &NoiseModel, seed: u64) -> Result<f64> {
    noise_information(noise, NOISE_INFO_SAMPLES, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetStats {
    pub target: [f64; 2],
    /// Mean of `‖p̂ − p‖²` over successful trials.
    pub mse_m2: f64,
    /// Standard error of `mse_m2`.
    pub mse_std_error: f64,
    /// `trace(F⁻¹(p))`.
    pub crb_mse_m2: f64,
    pub coverage: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaRow {
    pub sigma_dbm: f64,
    pub rmse_m: f64,
    pub crb_rmse_m: f64,
    pub coverage: f64,
    pub trials: usize,
    pub failures: usize,
    pub per_target: Vec<TargetStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub per_sigma: Vec<SigmaRow>,
    pub seed: u64,
}

impl SimReport {
    pub const CSV_HEADER: &'static str = "sigma_dbm,rmse_m,crb_rmse_m,coverage,trials,failures";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.per_sigma {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.sigma_dbm, row.rmse_m, row.crb_rmse_m, row.coverage, row.trials, row.failures
            ));
        }
        out
    }
}

struct TrialOutcome {
    squared_error: f64,
    covered: bool,
}

fn run_trial(
    scene: &Scene,
    noise: &NoiseModel,
    i_v: f64,
    alpha: f64,
    target: &TargetState,
    seed: u64,
    config: &EstimatorConfig,
) -> Option<TrialOutcome> {
    let frame = sample_measurements(&scene.anchors, target, noise, 0.0, seed).ok()?;
    let est = solve(&scene.anchors, &frame, config).ok()?;
    let squared_error = (est.xy - target.xy).norm_squared();
    // a singular plug-in FIM at the estimate counts as a failed trial
    let jac = jacobian(&scene.anchors, &TargetState::new(est.xy, target.z_fixed)).ok()?;
    let region = confidence_ellipse(est.xy, &fim(&jac, i_v), alpha).ok()?;
    Some(TrialOutcome {
        squared_error,
        covered: region.contains(&target.xy),
    })
}

fn check_study(scene: &Scene, trials: usize, targets: &[Vector2<f64>]) -> Result<()> {
    scene.validate_for_estimation()?;
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if targets.is_empty() {
        return Err(Error::invalid("targets", "need at least one target"));
    }
    if let Some(t) = targets.iter().find(|t| !scene.bounds.contains(t)) {
        return Err(Error::invalid("targets", format!("({}, {}) lies outside the scene bounds", t.x, t.y)));
    }
    Ok(())
}

fn trial_seed(seed: u64, target_index: usize, trials: usize, trial: usize) -> u64 {
    seed ^ (target_index * trials + trial) as u64
}

#[allow(clippy::too_many_arguments)]
fn study_target(
    scene: &Scene,
    noise: &NoiseModel,
    i_v: f64,
    alpha: f64,
    target_index: usize,
    target: &Vector2<f64>,
    trials: usize,
    seed: u64,
) -> Result<TargetStats> {
    let config = scene_estimator_config(scene);
    let state = TargetState::new(*target, scene.target_z);
    let crb_mse = crb(&fim(&jacobian(&scene.anchors, &state)?, i_v))?.trace();

    let outcomes: Vec<Option<TrialOutcome>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let s = trial_seed(seed, target_index, trials, k);
            run_trial(scene, noise, i_v, alpha, &state, s, &config)
        })
        .collect();

    let ok: Vec<&TrialOutcome> = outcomes.iter().flatten().collect();
    let n = ok.len();
    let (mse, se) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let mean = ok.iter().map(|o| o.squared_error).sum::<f64>() / n as f64;
        let var = if n > 1 {
            ok.iter().map(|o| (o.squared_error - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        (mean, (var / n as f64).sqrt())
    };
    let coverage = if n == 0 {
        f64::NAN
    } else {
        ok.iter().filter(|o| o.covered).count() as f64 / n as f64
    };
    Ok(TargetStats {
        target: [target.x, target.y],
        mse_m2: mse,
        mse_std_error: se,
        crb_mse_m2: crb_mse,
        coverage,
        trials,
        failures: trials - n,
    })
}

/// Positioning error against Gaussian noise level: for each σ, `trials_per_sigma`
/// frames per target are simulated and solved.
pub fn run_mse(
    scene: &Scene,
    sigmas: &[f64],
    trials_per_sigma: usize,
    targets: &[Vector2<f64>],
    seed: u64,
) -> Result<SimReport> {
    check_study(scene, trials_per_sigma, targets)?;
    let mut per_sigma = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let noise = NoiseModel::gaussian(sigma)?;
        let i_v = scene_information(&noise, seed)?;
        let per_target = targets
            .iter()
            .enumerate()
            .map(|(j, t)| study_target(scene, &noise, i_v, REPORT_ALPHA, j, t, trials_per_sigma, seed))
            .collect::<Result<Vec<_>>>()?;

        let mut sq_sum = 0.0;
        let mut ok = 0usize;
        let mut covered = 0.0;
        for t in &per_target {
            let n = t.trials - t.failures;
            if n > 0 {
                sq_sum += t.mse_m2 * n as f64;
                covered += t.coverage * n as f64;
                ok += n;
            }
        }
        let crb_mean = per_target.iter().map(|t| t.crb_mse_m2).sum::<f64>() / per_target.len() as f64;
        per_sigma.push(SigmaRow {
            sigma_dbm: sigma,
            rmse_m: if ok > 0 { (sq_sum / ok as f64).sqrt() } else { f64::NAN },
            crb_rmse_m: crb_mean.sqrt(),
            coverage: if ok > 0 { covered / ok as f64 } else { f64::NAN },
            trials: trials_per_sigma * targets.len(),
            failures: per_target.iter().map(|t| t.failures).sum(),
            per_target,
        });
    }
    Ok(SimReport { per_sigma, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub coverage: f64,
    pub covered: usize,
    pub trials: usize,
    pub failures: usize,
    pub seed: u64,
}

/// Fraction of trials whose plug-in region (built around the estimate, with
/// the FIM evaluated at the estimate) contains the true position.
pub fn run_coverage(
    scene: &Scene,
    alpha: f64,
    trials: usize,
    targets: &[Vector2<f64>],
    seed: u64,
) -> Result<CoverageReport> {
    check_study(scene, trials, targets)?;
    crate::region::chi2_quantile(alpha)?;
    let i_v = scene_information(&scene.noise, seed)?;
    let config = scene_estimator_config(scene);
    let outcomes: Vec<Option<bool>> = targets
        .iter()
        .enumerate()
        .flat_map(|(j, t)| (0..trials).map(move |k| (j, *t, k)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(j, t, k)| {
            let state = TargetState::new(t, scene.target_z);
            run_trial(scene, &scene.noise, i_v, alpha, &state, trial_seed(seed, j, trials, k), &config)
                .map(|o| o.covered)
        })
        .collect();
    let tested = outcomes.iter().flatten().count();
    let covered = outcomes.iter().flatten().filter(|&&c| c).count();
    Ok(CoverageReport {
        alpha,
        coverage: if tested > 0 { covered as f64 / tested as f64 } else { f64::NAN },
        covered,
        trials: outcomes.len(),
        failures: outcomes.len() - tested,
        seed,
    })
}

/// One heatmap cell: best achievable RMSE, or a marker for singular geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatCell {
    Rmse(f64),
    Unlocalizable,
}

pub const UNLOCALIZABLE: &str = "unlocalizable";

impl HeatCell {
    pub fn value(&self) -> Option<f64> {
        match self {
            HeatCell::Rmse(v) => Some(*v),
            HeatCell::Unlocalizable => None,
        }
    }
}

impl Serialize for HeatCell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HeatCell::Rmse(v) => s.serialize_f64(*v),
            HeatCell::Unlocalizable => s.serialize_str(UNLOCALIZABLE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub nx: usize,
    pub ny: usize,
    pub bounds: Bounds,
    /// Row-major, `cells[iy][ix]`, from `(x0, y0)`.
    pub cells: Vec<Vec<HeatCell>>,
}

impl Heatmap {
    pub fn cell_center(&self, ix: usize, iy: usize) -> Vector2<f64> {
        cell_center(&self.bounds, self.nx, self.ny, ix, iy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_m,y_m,best_rmse_m\n");
        for (iy, row) in self.cells.iter().enumerate() {
            for (ix, cell) in row.iter().enumerate() {
                let c = self.cell_center(ix, iy);
                match cell {
                    HeatCell::Rmse(v) => out.push_str(&format!("{},{},{}\n", c.x, c.y, v)),
                    HeatCell::Unlocalizable => out.push_str(&format!("{},{},{}\n", c.x, c.y, UNLOCALIZABLE)),
                }
            }
        }
        out
    }
}

fn cell_center(bounds: &Bounds, nx: usize, ny: usize, ix: usize, iy: usize) -> Vector2<f64> {
    bounds.lerp((ix as f64 + 0.5) / nx as f64, (iy as f64 + 0.5) / ny as f64)
}

/// Best achievable RMSE `√trace(F⁻¹)` at a single floor point.
pub fn best_rmse_at(anchors: &[Anchor], target: &TargetState, i_v: f64) -> Result<f64> {
    best_rmse(&fim(&jacobian(anchors, target)?, i_v))
}

/// Best achievable RMSE at every cell center, using the true cell position.
pub fn crb_heatmap(scene: &Scene, nx: usize, ny: usize) -> Result<Heatmap> {
    scene.validate()?;
    if nx < 2 || ny < 2 {
        return Err(Error::invalid("grid", format!("need at least 2×2 cells, got {nx}×{ny}")));
    }
    let i_v = scene_information(&scene.noise, 0)?;
    let cells = (0..ny)
        .into_par_iter()
        .map(|iy| {
            (0..nx)
                .map(|ix| {
                    let c = cell_center(&scene.bounds, nx, ny, ix, iy);
                    match best_rmse_at(&scene.anchors, &TargetState::new(c, scene.target_z), i_v) {
                        Ok(v) => HeatCell::Rmse(v),
                        Err(_) => HeatCell::Unlocalizable,
                    }
                })
                .collect()
        })
        .collect();
    Ok(Heatmap {
        nx,
        ny,
        bounds: scene.bounds,
        cells,
    })
}

/// Rotates anchors and bounds of a scene about `pivot` (used to check
/// rotation invariance of the heatmap; cameras are dropped).
pub fn rotate_scene(scene: &Scene, angle: f64, pivot: Vector2<f64>) -> Result<Scene> {
    let rot = Rotation2::new(angle);
    let anchors = scene
        .anchors
        .iter()
        .map(|a| {
            let p = a.position();
            let xy = pivot + rot * (p.xy() - pivot);
            Anchor::new(a.id(), nalgebra::Vector3::new(xy.x, xy.y, p.z), a.path_loss_a(), a.path_loss_b())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene {
        anchors,
        cameras: Vec::new(),
        ..scene.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// `(t, position)` samples at `k / rate` seconds.
    pub samples: Vec<(f64, Vector2<f64>)>,
    /// Path length divided by speed.
    pub duration: f64,
}

/// Constant-speed walk along the polyline, sampled at `rate` Hz from `t = 0`
/// up to and including `duration` when it falls on the sampling grid.
pub fn gen_trajectory(waypoints: &[Vector2<f64>], speed: f64, rate: f64) -> Result<Trajectory> {
    if waypoints.len() < 2 {
        return Err(Error::invalid("waypoints", "need at least 2"));
    }
    if !(speed > 0.0 && rate > 0.0 && speed.is_finite() && rate.is_finite()) {
        return Err(Error::invalid("trajectory", "speed and rate must be positive"));
    }
    let seg_len: Vec<f64> = waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let length: f64 = seg_len.iter().sum();
    if !(length > 0.0) {
        return Err(Error::DegenerateWaypoints);
    }
    let duration = length / speed;
    // tolerate round-off so an endpoint on the grid is not lost
    let count = (duration * rate * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
    let mut samples = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..count {
        let t = k as f64 / rate;
        let s = (t * speed).min(length);
        while seg + 1 < seg_len.len() && s > seg_start + seg_len[seg] {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let frac = if seg_len[seg] > 0.0 {
            ((s - seg_start) / seg_len[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        samples.push((t, waypoints[seg] + (waypoints[seg + 1] - waypoints[seg]) * frac));
    }
    Ok(Trajectory { samples, duration })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::perimeter_anchors;
    use nalgebra::Vector3;

    fn small_scene(sigma: f64) -> Scene {
        let bounds = Bounds::new(0.0, 0.0, 10.0, 10.0);
        Scene {
            anchors: perimeter_anchors(&bounds, 12, 2.0),
            cameras: vec![],
            noise: NoiseModel::gaussian(sigma).unwrap(),
            bounds,
            person_height: 1.8,
            target_z: 0.0,
        }
    }

    fn square_scene_at(height: f64) -> Scene {
        let anchors = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Anchor::new(format!("s{i}"), Vector3::new(x, y, height), -45.0, -2.0).unwrap())
            .collect();
        Scene {
            anchors,
            cameras: vec![],
            noise: NoiseModel::gaussian(3.0).unwrap(),
            bounds: Bounds::new(0.0, 0.0, 10.0, 10.0),
            person_height: 1.8,
            target_z: 0.0,
        }
    }

    #[test]
    fn report_is_seed_deterministic() {
        let scene = small_scene(3.0);
        let targets = [Vector2::new(4.0, 6.0), Vector2::new(7.0, 3.0)];
        let a = run_mse(&scene, &[2.0, 4.0], 40, &targets, 9).unwrap();
        let b = run_mse(&scene, &[2.0, 4.0], 40, &targets, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        let c = run_mse(&scene, &[2.0, 4.0], 40, &targets, 10).unwrap();
        assert_ne!(a, c);
        let row = &a.per_sigma[0];
        assert_eq!(row.trials, 80);
        assert!(row.rmse_m > 0.0 && (0.0..=1.0).contains(&row.coverage));
        assert!(a.to_csv().starts_with("sigma_dbm,rmse_m,crb_rmse_m,coverage,trials,failures\n"));
    }

    #[test]
    fn tiny_noise_gives_centimeter_accuracy() {
        let scene = Scene::default_study();
        let report = run_mse(&scene, &[0.01], 50, &scene.default_targets(), 1).unwrap();
        assert!(report.per_sigma[0].rmse_m < 0.01, "{:?}", report.per_sigma[0].rmse_m);
    }

    #[test]
    fn targets_outside_bounds_are_rejected() {
        let scene = small_scene(3.0);
        assert!(run_mse(&scene, &[3.0], 10, &[Vector2::new(50.0, 1.0)], 0).is_err());
        assert!(run_mse(&scene, &[3.0], 0, &[Vector2::new(5.0, 5.0)], 0).is_err());
        assert!(run_coverage(&scene, 1.5, 10, &[Vector2::new(5.0, 5.0)], 0).is_err());
    }

    #[test]
    fn coverage_is_nested_in_alpha() {
        let scene = small_scene(3.0);
        let targets = [Vector2::new(5.0, 5.0)];
        let wide = run_coverage(&scene, 0.05, 300, &targets, 4).unwrap();
        let narrow = run_coverage(&scene, 0.5, 300, &targets, 4).unwrap();
        let vanishing = run_coverage(&scene, 1.0 - 1e-9, 300, &targets, 4).unwrap();
        assert!(narrow.coverage < wide.coverage);
        assert!(narrow.covered <= wide.covered);
        assert_eq!(vanishing.covered, 0);
    }

    #[test]
    fn heatmap_scales_with_sigma() {
        let scene = small_scene(2.0);
        let base = crb_heatmap(&scene, 6, 5).unwrap();
        let tripled = crb_heatmap(&scene.with_noise(NoiseModel::gaussian(6.0).unwrap()), 6, 5).unwrap();
        for (r0, r1) in base.cells.iter().zip(&tripled.cells) {
            for (a, b) in r0.iter().zip(r1) {
                let (a, b) = (a.value().unwrap(), b.value().unwrap());
                assert!((b - 3.0 * a).abs() <= 1e-12 * b);
            }
        }
        assert!(crb_heatmap(&scene, 1, 5).is_err());
    }

    #[test]
    fn symmetric_square_minimum_at_center() {
        // With low mounts the minimum is a ring around the center; the center
        // only wins once the anchors sit high relative to the room.
        let scene = square_scene_at(5.0);
        let map = crb_heatmap(&scene, 9, 9).unwrap();
        let center = map.cells[4][4].value().unwrap();
        // dense oracle: no point of a fine grid beats the center cell
        let i_v = 1.0 / 9.0;
        let mut dense_min = f64::INFINITY;
        for iy in 0..=100 {
            for ix in 0..=100 {
                let t = TargetState::on_floor(1.0 + 0.08 * ix as f64, 1.0 + 0.08 * iy as f64);
                if let Ok(v) = best_rmse_at(&scene.anchors, &t, i_v) {
                    dense_min = dense_min.min(v);
                }
            }
        }
        assert!((center - dense_min).abs() < 1e-9 * center, "{center} vs {dense_min}");
        for row in &map.cells {
            for c in row {
                assert!(c.value().unwrap() >= center - 1e-12);
            }
        }
    }

    #[test]
    fn collinear_anchors_mark_their_line() {
        // anchors along y = 4.5, which passes through the centers of row 4
        let anchors = (0..5)
            .map(|i| Anchor::new(format!("l{i}"), Vector3::new(2.0 * i as f64 + 0.3, 4.5, 0.0), -45.0, -2.0).unwrap())
            .collect();
        let scene = Scene {
            anchors,
            cameras: vec![],
            noise: NoiseModel::gaussian(3.0).unwrap(),
            bounds: Bounds::new(0.0, 0.0, 10.0, 9.0),
            person_height: 1.8,
            target_z: 0.0,
        };
        let map = crb_heatmap(&scene, 10, 9).unwrap();
        for (iy, row) in map.cells.iter().enumerate() {
            for (ix, cell) in row.iter().enumerate() {
                // rank oracle: the horizontal offsets to every anchor are parallel on the line
                let c = map.cell_center(ix, iy);
                let degenerate = scene.anchors.iter().all(|a| (c - a.position().xy()).y.abs() < 1e-12);
                assert_eq!(*cell == HeatCell::Unlocalizable, degenerate, "cell {ix},{iy}");
            }
        }
        let json = serde_json::to_value(&map).unwrap();
        assert_eq!(json["cells"][4][0], serde_json::json!("unlocalizable"));
        assert!(map.to_csv().contains("unlocalizable"));
    }

    #[test]
    fn heatmap_rotation_invariance() {
        let scene = small_scene(3.0);
        let pivot = scene.bounds.center();
        let rotated = rotate_scene(&scene, 0.7, pivot).unwrap();
        let rot = Rotation2::new(0.7);
        for &(x, y) in &[(2.0, 3.0), (5.0, 5.0), (8.5, 1.5)] {
            let p = Vector2::new(x, y);
            let q = pivot + rot * (p - pivot);
            let a = best_rmse_at(&scene.anchors, &TargetState::new(p, 0.0), 1.0 / 9.0).unwrap();
            let b = best_rmse_at(&rotated.anchors, &TargetState::new(q, 0.0), 1.0 / 9.0).unwrap();
            assert!((a - b).abs() < 1e-10 * a);
        }
    }

    #[test]
    fn trajectory_sampling() {
        let path = [Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0)];
        let tr = gen_trajectory(&path, 1.0, 1.0).unwrap();
        assert_eq!(tr.samples.len(), 11);
        assert_eq!(tr.duration, 10.0);
        for (k, (t, p)) in tr.samples.iter().enumerate() {
            assert_eq!(*t, k as f64);
            assert!((p.x - k as f64).abs() < 1e-12 && p.y == 0.0);
        }

        let bent = [Vector2::new(0.0, 0.0), Vector2::new(3.0, 0.0), Vector2::new(3.0, 4.2)];
        let slow = gen_trajectory(&bent, 0.7, 2.0).unwrap();
        let fast = gen_trajectory(&bent, 0.7, 4.0).unwrap();
        assert!((slow.duration - 7.2 / 0.7).abs() < 1e-12);
        for (k, s) in slow.samples.iter().enumerate() {
            let f = fast.samples[2 * k];
            assert!((s.0 - f.0).abs() < 1e-12);
            assert!((s.1 - f.1).norm() < 1e-9);
        }
        assert!(slow.samples.last().unwrap().0 <= slow.duration);

        assert_eq!(gen_trajectory(&[path[0], path[0]], 1.0, 1.0).unwrap_err(), Error::DegenerateWaypoints);
        assert!(gen_trajectory(&path[..1], 1.0, 1.0).is_err());
        assert!(gen_trajectory(&path, 0.0, 1.0).is_err());
    }
}
