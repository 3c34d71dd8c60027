use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crbgate_core::estimator::EstimatorConfig;
use crbgate_core::eval::{boxes_from_rows, curve_to_csv, evaluate, read_boxes_csv, read_gate_predictions, uniform_thresholds, DEFAULT_THRESHOLD_COUNT};
use crbgate_core::gate::{gate_jsonl, DEFAULT_ALPHA};
use crbgate_core::scene::Scene;

use crate::api::{router, AppState};
use crate::error::AppError;
use crate::ops::{self, parse_grid, CoverageRequest, HeatmapRequest, SimulateRequest};
use crate::store::SceneStore;

#[derive(Debug, Parser)]
#[command(name = "crbgate", version, about = "CRB confidence regions and camera search gating")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Best achievable RMSE over a floor grid, as CSV.
    Heatmap {
        #[arg(long)]
        scene: PathBuf,
        /// Gaussian σ in dBm; defaults to the scene's noise.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value = "40x40", value_parser = parse_grid)]
        grid: [usize; 2],
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo positioning error against noise level, as CSV.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7,9,11")]
        sigmas: Vec<f64>,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Full report with per-target rows, as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Empirical coverage of the plug-in confidence region; JSON on stdout.
    Coverage {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measurement JSONL to per-camera search-region JSONL.
    Gate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Success curve, AUC and recall of predicted boxes against ground truth.
    Eval {
        /// Gate JSONL (`.jsonl`) or box CSV.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Writes `curve.csv` and `summary.json` here.
        #[arg(long)]
        out: PathBuf,
        /// Camera whose regions are scored when `--pred` is gate output.
        #[arg(long)]
        camera: Option<String>,
    },
    /// Writes the reference 32-anchor study scene.
    InitScene {
        #[arg(long)]
        out: PathBuf,
    },
    /// HTTP API over a directory of scene files
    Serve {
        #[arg(long, env = "CRBGATE_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, env = "CRBGATE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = ops::DEFAULT_TRIAL_CAP)]
        trial_cap: usize,
    },
}

/// Parses `args` and runs the command. Returns the process exit code: 0 on
/// success, 2 for usage errors, 1 for runtime errors (reported as JSON on
/// stderr).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}

fn read_scene(path: &Path) -> Result<Scene, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::validation(format!("cannot read scene {}: {e}", path.display())))?;
    let scene: Scene = serde_json::from_str(&text)
        .map_err(|e| AppError::validation(format!("invalid scene {}: {e}", path.display())))?;
    scene.validate()?;
    Ok(scene)
}

fn open(path: &Path) -> Result<BufReader<File>, AppError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| AppError::validation(format!("cannot open {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), AppError> {
    fs::write(path, contents).map_err(|e| AppError::internal(format!("cannot write {}: {e}", path.display())))
}

fn execute(command: Command) -> Result<(), AppError> {
    match command {
        Command::Heatmap { scene, sigma, grid, out } => {
            let map = ops::heatmap(&read_scene(&scene)?, &HeatmapRequest { sigma, grid })?;
            write_file(&out, map.to_csv().as_bytes())
        }
        Command::Simulate { scene, sigmas, trials, seed, out, report } => {
            let req = SimulateRequest { sigmas, trials, seed, targets: None };
            let result = ops::simulate(&read_scene(&scene)?, &req, usize::MAX)?;
            write_file(&out, result.to_csv().as_bytes())?;
            if let Some(path) = report {
                let json = serde_json::to_vec_pretty(&result).map_err(|e| AppError::internal(e.to_string()))?;
                write_file(&path, &json)?;
            }
            Ok(())
        }
        Command::Coverage { scene, alpha, trials, seed } => {
            let req = CoverageRequest { alpha, trials, seed, targets: None };
            let report = ops::coverage(&read_scene(&scene)?, &req, usize::MAX)?;
            println!("{}", serde_json::to_string(&report).map_err(|e| AppError::internal(e.to_string()))?);
            Ok(())
        }
        Command::Gate { scene, measurements, alpha, out } => {
            let scene = read_scene(&scene)?;
            let input = open(&measurements)?;
            let file = File::create(&out)
                .map_err(|e| AppError::internal(format!("cannot write {}: {e}", out.display())))?;
            let mut writer = BufWriter::new(file);
            gate_jsonl(&scene, input, alpha, &EstimatorConfig::default(), &mut writer)?;
            writer.flush()?;
            Ok(())
        }
        Command::Eval { pred, gt, out, camera } => {
            let truth = read_boxes_csv(open(&gt)?)?;
            let is_jsonl = pred.extension().is_some_and(|e| e == "jsonl" || e == "ndjson");
            let boxes = if is_jsonl {
                read_gate_predictions(open(&pred)?, camera.as_deref())?
            } else {
                boxes_from_rows(&read_boxes_csv(open(&pred)?)?)
            };
            let (curve, summary) = evaluate(&boxes, &truth, &uniform_thresholds(DEFAULT_THRESHOLD_COUNT))?;
            fs::create_dir_all(&out)
                .map_err(|e| AppError::internal(format!("cannot create {}: {e}", out.display())))?;
            write_file(&out.join("curve.csv"), curve_to_csv(&curve).as_bytes())?;
            let json = serde_json::to_vec_pretty(&summary).map_err(|e| AppError::internal(e.to_string()))?;
            write_file(&out.join("summary.json"), &json)
        }
        Command::InitScene { out } => {
            let json = serde_json::to_vec_pretty(&Scene::default_study()).map_err(|e| AppError::internal(e.to_string()))?;
            write_file(&out, &json)
        }
        Command::Serve { data_dir, port, host, trial_cap } => serve(data_dir, &host, port, trial_cap),
    }
}

fn serve(data_dir: PathBuf, host: &str, port: u16, trial_cap: usize) -> Result<(), AppError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .try_init();
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| AppError::validation(format!("bad listen address {host}:{port}: {e}")))?;
    let mut state = AppState::new(SceneStore::open(data_dir)?);
    state.trial_cap = trial_cap;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(%addr, dir = %state.store.dir().display(), "serving");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
