use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crbgate_core::camera::PixelBox;
use crbgate_core::estimator::{solve, EstimatorConfig};
use crbgate_core::eval::{iou, recall_rate, success_curve, uniform_thresholds, GtBox, Rect};
use crbgate_core::gate::{gate_stream, FrameRecord};
use crbgate_core::scene::Scene;
use crbgate_core::sim::{run_mse, scene_estimator_config};
use crbgate_core::wireless::{predict_all, sample_measurements, MeasurementFrame, NoiseModel, TargetState};

#[test]
fn rmse_doubles_with_sigma() {
    let scene = Scene::default_study();
    let targets = scene.default_targets();
    let report = run_mse(&scene, &[1.0, 2.0], 200, &targets, 31).unwrap();
    let ratio = report.per_sigma[1].rmse_m / report.per_sigma[0].rmse_m;
    assert!((ratio - 2.0).abs() < 0.15 * 2.0, "ratio {ratio}");
    assert_eq!(report.per_sigma[0].failures + report.per_sigma[1].failures, 0);
}

#[test]
fn noiseless_frames_invert_exactly() {
    let scene = Scene::default_study();
    let config = scene_estimator_config(&scene);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let p = Vector2::new(rng.random_range(0.5..19.5), rng.random_range(0.5..19.5));
        let h = predict_all(&scene.anchors, &TargetState::new(p, 0.0)).unwrap();
        let frame = MeasurementFrame::from_values(0.0, &scene.anchors, h.as_slice());
        let est = solve(&scene.anchors, &frame, &config).unwrap();
        assert!((est.xy - p).norm() < 1e-6, "{p:?} -> {:?}", est.xy);
    }
}

#[test]
fn gating_is_memoryless_under_permutation() {
    let scene = Scene::default_study();
    let noise = NoiseModel::gaussian(3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let frames: Vec<MeasurementFrame> = (0..12)
        .map(|k| {
            let p = TargetState::on_floor(rng.random_range(2.0..18.0), rng.random_range(2.0..18.0));
            sample_measurements(&scene.anchors, &p, &noise, k as f64, 100 + k as u64).unwrap()
        })
        .collect();
    // permute payloads but keep timestamps ascending so ordering stays valid
    let perm = [7, 2, 11, 0, 5, 9, 1, 4, 10, 3, 8, 6];
    let permuted: Vec<MeasurementFrame> = perm
        .iter()
        .enumerate()
        .map(|(k, &src)| MeasurementFrame::new(k as f64, frames[src].readings().to_vec()).unwrap())
        .collect();
    let config = EstimatorConfig::default();
    let records = |fs: Vec<MeasurementFrame>| -> Vec<FrameRecord> {
        gate_stream(&scene, fs, 0.05, &config).unwrap().map(|r| FrameRecord::from(&r)).collect()
    };
    let original = records(frames);
    let shuffled = records(permuted);
    for (k, &src) in perm.iter().enumerate() {
        let mut expected = original[src].clone();
        expected.t = Some(k as f64);
        assert_eq!(shuffled[k], expected);
    }
}

fn gt_box(i: usize, x: f64, y: f64, w: f64, h: f64) -> GtBox {
    GtBox { frame_index: i, x, y, w, h, present: true }
}

#[test]
fn recall_fixture_counts_seven_of_ten() {
    let truth: Vec<GtBox> = (0..10).map(|i| gt_box(i, 50.0 + 10.0 * i as f64, 40.0, 20.0, 30.0)).collect();
    let regions: Vec<Option<PixelBox>> = (0..10)
        .map(|i| {
            let c = truth[i].rect().center();
            // frames 2, 5 and 8 miss the center
            let shift = if i % 3 == 2 { 100.0 } else { 0.0 };
            Some(PixelBox { x_min: c.x - 15.0 + shift, y_min: c.y - 15.0, x_max: c.x + 15.0 + shift, y_max: c.y + 15.0, clipped: false })
        })
        .collect();
    let mut hits = 0;
    for (r, g) in regions.iter().zip(&truth) {
        let c = g.rect().center();
        let b = r.unwrap();
        if c.x >= b.x_min && c.x <= b.x_max && c.y >= b.y_min && c.y <= b.y_max {
            hits += 1;
        }
    }
    assert_eq!(hits, 7);
    assert_eq!(recall_rate(&regions, &truth).unwrap(), 70.0);
}

#[test]
fn success_curve_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 40;
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for i in 0..n {
        let g = gt_box(i, rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), 30.0, 40.0);
        let present = i % 7 != 3;
        truth.push(GtBox { present, ..g });
        pred.push(match i % 5 {
            0 => None,
            _ => Some(Rect::new(g.x + rng.random_range(-20.0..20.0), g.y + rng.random_range(-20.0..20.0), 30.0, 40.0)),
        });
    }
    let ts = uniform_thresholds(101);
    let curve = success_curve(&pred, &truth, &ts).unwrap();
    for (t, osr) in &curve {
        let mut present = 0;
        let mut above = 0;
        for (p, g) in pred.iter().zip(&truth) {
            if !g.present {
                continue;
            }
            present += 1;
            if let Some(p) = p {
                if iou(p, &g.rect()) > *t {
                    above += 1;
                }
            }
        }
        assert_eq!(*osr, above as f64 / present as f64);
    }
}
