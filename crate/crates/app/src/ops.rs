//! Request shapes and the library calls behind them. The CLI and the service
//! are thin adapters over these functions.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crbgate_core::scene::Scene;
use crbgate_core::sim::{crb_heatmap, run_coverage, run_mse, CoverageReport, Heatmap, SimReport};
use crbgate_core::wireless::NoiseModel;

use crate::error::AppError;

/// Upper bound on `trials` accepted in one request.
pub const DEFAULT_TRIAL_CAP: usize = 10_000;
pub const DEFAULT_GRID: [usize; 2] = [40, 40];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapRequest {
    /// Overrides the scene's noise with Gaussian noise of this σ.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
}

fn default_grid() -> [usize; 2] {
    DEFAULT_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Defaults to the scene's 3×3 interior lattice.
    #[serde(default)]
    pub targets: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageRequest {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub targets: Option<Vec<[f64; 2]>>,
}

fn default_alpha() -> f64 {
    crbgate_core::gate::DEFAULT_ALPHA
}

fn targets_or_default(scene: &Scene, targets: &Option<Vec<[f64; 2]>>) -> Vec<Vector2<f64>> {
    match targets {
        Some(ts) => ts.iter().map(|t| Vector2::new(t[0], t[1])).collect(),
        None => scene.default_targets(),
    }
}

fn check_cap(trials: usize, cap: usize) -> Result<(), AppError> {
    if trials > cap {
        return Err(AppError::validation(format!("trials {trials} exceeds the per-request cap of {cap}")));
    }
    Ok(())
}

pub fn heatmap(scene: &Scene, req: &HeatmapRequest) -> Result<Heatmap, AppError> {
    let scene = match req.sigma {
        Some(sigma) => scene.with_noise(NoiseModel::gaussian(sigma)?),
        None => scene.clone(),
    };
    Ok(crb_heatmap(&scene, req.grid[0], req.grid[1])?)
}

pub fn simulate(scene: &Scene, req: &SimulateRequest, trial_cap: usize) -> Result<SimReport, AppError> {
    check_cap(req.trials, trial_cap)?;
    if req.sigmas.is_empty() {
        return Err(AppError::validation("sigmas must not be empty"));
    }
    let targets = targets_or_default(scene, &req.targets);
    Ok(run_mse(scene, &req.sigmas, req.trials, &targets, req.seed)?)
}

pub fn coverage(scene: &Scene, req: &CoverageRequest, trial_cap: usize) -> Result<CoverageReport, AppError> {
    check_cap(req.trials, trial_cap)?;
    let targets = targets_or_default(scene, &req.targets);
    Ok(run_coverage(scene, req.alpha, req.trials, &targets, req.seed)?)
}

/// Parses `NXxNY`, e.g. `40x40`.
pub fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (nx, ny) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NXxNY, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad grid size `{v}`: {e}"));
    Ok([parse(nx)?, parse(ny)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorCode;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("40x30").unwrap(), [40, 30]);
        assert_eq!(parse_grid("8X8").unwrap(), [8, 8]);
        assert!(parse_grid("40").is_err());
        assert!(parse_grid("ax4").is_err());
    }

    #[test]
    fn request_defaults() {
        let req: HeatmapRequest = serde_json::from_str("{}").unwrap();
        assert_eq!(req.grid, DEFAULT_GRID);
        let req: CoverageRequest = serde_json::from_str(r#"{"trials":10,"seed":1}"#).unwrap();
        assert_eq!(req.alpha, 0.05);
        assert!(serde_json::from_str::<SimulateRequest>(r#"{"sigmas":[3],"trials":1,"seed":1,"x":0}"#).is_err());
    }

    #[test]
    fn trial_cap_is_enforced() {
        let scene = Scene::default_study();
        let req = SimulateRequest { sigmas: vec![3.0], trials: 11, seed: 0, targets: None };
        assert_eq!(simulate(&scene, &req, 10).unwrap_err().code, ErrorCode::Validation);
    }

    #[test]
    fn too_few_anchors_is_unlocalizable() {
        let mut scene = Scene::default_study();
        scene.anchors.truncate(2);
        let req = CoverageRequest { alpha: 0.05, trials: 5, seed: 0, targets: None };
        assert_eq!(coverage(&scene, &req, 100).unwrap_err().code, ErrorCode::Unlocalizable);
    }
}
