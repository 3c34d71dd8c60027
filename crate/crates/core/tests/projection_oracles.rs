use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crbgate_core::camera::{project_region, CameraModel};
use crbgate_core::region::{confidence_ellipse, Fim2};

type M3 = [[f64; 3]; 3];

fn matmul(a: &M3, b: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Rz(yaw) · Ry(pitch) · Rx(roll) written out by hand.
fn euler(yaw: f64, pitch: f64, roll: f64) -> M3 {
    let (sz, cz) = yaw.sin_cos();
    let (sy, cy) = pitch.sin_cos();
    let (sx, cx) = roll.sin_cos();
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    matmul(&rz, &matmul(&ry, &rx))
}

/// `K [R | T] [X; 1]` with explicit loops, then dehomogenized.
fn oracle_project(k: &M3, r: &M3, t: &[f64; 3], x: &[f64; 3]) -> ([f64; 2], f64) {
    let mut p = [[0.0; 4]; 3];
    for i in 0..3 {
        for j in 0..4 {
            for m in 0..3 {
                let rt = if j < 3 { r[m][j] } else { t[m] };
                p[i][j] += k[i][m] * rt;
            }
        }
    }
    let xh = [x[0], x[1], x[2], 1.0];
    let mut h = [0.0; 3];
    for i in 0..3 {
        for j in 0..4 {
            h[i] += p[i][j] * xh[j];
        }
    }
    ([h[0] / h[2], h[1] / h[2]], h[2])
}

fn to_matrix(m: &M3) -> Matrix3<f64> {
    Matrix3::from_row_slice(&[m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]])
}

#[test]
fn random_cameras_match_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let k: M3 = [
            [rng.random_range(400.0..1500.0), rng.random_range(-2.0..2.0), rng.random_range(200.0..1000.0)],
            [0.0, rng.random_range(400.0..1500.0), rng.random_range(200.0..600.0)],
            [0.0, 0.0, 1.0],
        ];
        let r = euler(rng.random_range(-3.0..3.0), rng.random_range(-1.4..1.4), rng.random_range(-3.0..3.0));
        let t = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(5.0..15.0)];
        let cam = CameraModel::new("rand", to_matrix(&k), to_matrix(&r), Vector3::from(t), (1920, 1080)).unwrap();
        let mut checked = 0;
        while checked < 10 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let (px, s) = oracle_project(&k, &r, &t, &x);
            if s <= 1e-3 {
                continue;
            }
            checked += 1;
            let (got, depth) = cam.project(&Vector3::from(x)).unwrap();
            assert!((got.x - px[0]).abs() < 1e-9 && (got.y - px[1]).abs() < 1e-9, "{got:?} vs {px:?}");
            assert!((depth - s).abs() < 1e-9);
            let back = cam.unproject(&got, depth);
            assert!((back - Vector3::from(x)).norm() < 1e-9);
        }
    }
}

fn overhead(height: f64) -> CameraModel {
    let k = Matrix3::new(900.0, 0.0, 640.0, 0.0, 900.0, 360.0, 0.0, 0.0, 1.0);
    CameraModel::look_at(
        "down",
        k,
        Vector3::new(10.0, 10.0, height),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(0.0, -1.0, 0.0),
        (1280, 720),
    )
    .unwrap()
}

fn shoelace(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        .abs()
        * 0.5
}

#[test]
fn overhead_footprint_matches_dense_projection() {
    let height = 8.0;
    let cam = overhead(height);
    let f = Fim2::from_matrix(Matrix2::new(3.0, 0.8, 0.8, 1.5));
    let center = Vector2::new(10.6, 9.3);
    let e = confidence_ellipse(center, &f, 0.05).unwrap();
    let region = project_region(&cam, &e, &[0.0], 256).unwrap();

    // dense oracle: project 10⁴ lattice samples of the ellipse's bounding square
    let half = e.semi_axes()[0].norm();
    let n = 100;
    let step = 2.0 * half / n as f64;
    let mut inside = 0usize;
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for i in 0..n {
        for j in 0..n {
            let p = center + Vector2::new(-half + (i as f64 + 0.5) * step, -half + (j as f64 + 0.5) * step);
            if !e.contains(&p) {
                continue;
            }
            inside += 1;
            let (px, _) = cam.project(&Vector3::new(p.x, p.y, 0.0)).unwrap();
            lo = lo.inf(&px);
            hi = hi.sup(&px);
        }
    }
    let pixel_area_per_sample = (step * 900.0 / height).powi(2);
    let oracle_area = inside as f64 * pixel_area_per_sample;
    let poly_area = shoelace(&region.polygon);
    assert!((poly_area - oracle_area).abs() < 0.02 * oracle_area, "{poly_area} vs {oracle_area}");

    // sampled extremes sit inside the box, within one lattice step of its edges
    let slack = step * 900.0 / height;
    let b = region.bbox;
    assert!(lo.x >= b.x_min && hi.x <= b.x_max && lo.y >= b.y_min && hi.y <= b.y_max);
    assert!(lo.x - b.x_min < slack && b.x_max - hi.x < slack);
    assert!(lo.y - b.y_min < slack && b.y_max - hi.y < slack);

    // the ground-to-image map is a similarity here, so the centroid maps exactly
    let (c_px, _) = cam.project(&Vector3::new(center.x, center.y, 0.0)).unwrap();
    let centroid = region.polygon.iter().sum::<Vector2<f64>>() / region.polygon.len() as f64;
    assert!((centroid - c_px).norm() < 1e-6, "{centroid:?} vs {c_px:?}");
}

#[test]
fn box_grows_as_alpha_shrinks() {
    let cam = overhead(10.0);
    let f = Fim2::from_matrix(Matrix2::new(2.0, -0.5, -0.5, 4.0));
    let mut prev = None;
    for alpha in [0.9, 0.5, 0.2, 0.05, 0.01, 0.001] {
        let e = confidence_ellipse(Vector2::new(9.0, 10.5), &f, alpha).unwrap();
        let b = project_region(&cam, &e, &[0.0, 1.8], 64).unwrap().bbox;
        if let Some(p) = prev {
            assert!(b.contains_box(&p), "alpha {alpha}");
        }
        prev = Some(b);
    }
}

#[test]
fn optical_axis_hits_principal_point() {
    let cam = overhead(12.0);
    let (px, s) = cam.project(&Vector3::new(10.0, 10.0, 0.0)).unwrap();
    assert_eq!(px, Vector2::new(640.0, 360.0));
    assert_eq!(s, 12.0);
}
