use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermoface::aam::AppearanceModel;
use thermoface::fit::*;
use thermoface::imaging::{Mask, ThermalImage};
use thermoface::pipeline::PipelineConfig;
use thermoface::synthetic::{model_generated_face, train_toy_aam, RenderConfig, ToyModelConfig};
use thermoface::{Image, Model};

fn model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| train_toy_aam(&ToyModelConfig::default(), &RenderConfig::default(), &PipelineConfig::default()).unwrap())
}

fn exact_cfg() -> FitConfig {
    FitConfig { coarse_levels: 0, boundary_margin: 0.0, ..Default::default() }
}

/// Parameters of a pure integer translation of the mean shape.
fn translated(model: &Model, t: [f64; 2]) -> Vec<f64> {
    let mut p = vec![0.0; model.shape.n_modes()];
    p.extend(model.shape.similarity_params(1.0, 0.0, t));
    p
}

fn warp_point(model: &Model, shape: &[[f64; 2]], pixel: usize) -> [f64; 2] {
    let px = &model.raster().pixels[pixel];
    let t = &model.mesh.triangles[px.triangle];
    let mut q = [0.0; 2];
    for (w, &v) in px.bary.iter().zip(t) {
        q[0] += w * shape[v][0];
        q[1] += w * shape[v][1];
    }
    q
}

#[test]
fn exact_init_is_already_optimal() {
    let m = model();
    let pre = precompute(m).unwrap();
    let p = translated(m, [30.0, 40.0]);
    let alpha: Vec<f64> = m.appearance.variances.iter().take(3).map(|v| v.sqrt()).collect();
    let img: Image = model_generated_face(m, &p, &alpha, 200, 240).unwrap();
    let r = fit(&img, &p, m, &pre, &exact_cfg()).unwrap();
    assert!(r.converged);
    assert!(r.iterations <= 1, "{} iterations", r.iterations);
    assert!(r.e_icaam <= 1e-8, "e = {}", r.e_icaam);
    assert!(r.landmarks.rms_distance(&m.shape.instance(&p).unwrap()) < 1e-6);
}

#[test]
fn jacobian_matches_finite_differences() {
    let m = model();
    let n = m.shape.n_params();
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let pixel = rng.gen_range(0..m.raster().len());
        let j = rng.gen_range(0..n);
        let mut plus = vec![0.0; n];
        plus[j] = h;
        let minus: Vec<f64> = plus.iter().map(|v| -v).collect();
        let a = warp_point(m, &m.shape.instance_f64(&plus).unwrap(), pixel);
        let b = warp_point(m, &m.shape.instance_f64(&minus).unwrap(), pixel);
        let jac = warp_jacobian(m, pixel, j);
        for c in 0..2 {
            let fd = (a[c] - b[c]) / (2.0 * h);
            assert!((fd - jac[c]).abs() < 1e-4, "pixel {pixel} param {j}: {fd} vs {}", jac[c]);
        }
    }
}

#[test]
fn hessian_is_symmetric_and_projection_is_identity_without_appearance() {
    let m = model();
    let pre = precompute(m).unwrap();
    let lvl = pre.finest();
    let n = m.shape.n_params();
    for a in 0..n {
        for b in 0..n {
            assert_eq!(lvl.hessian[a * n + b], lvl.hessian[b * n + a]);
        }
    }
    let bare = Model::from_parts(
        m.width,
        m.height,
        m.points.clone(),
        m.mesh.clone(),
        m.shape.clone(),
        AppearanceModel { mean: m.appearance.mean.clone(), basis: vec![], variances: vec![] },
    )
    .unwrap();
    let pre = precompute(&bare).unwrap();
    let lvl = pre.finest();
    for j in [0, n - 1] {
        for (k, &i) in lvl.pixels.iter().enumerate().step_by(37) {
            let jac = warp_jacobian(&bare, i, j);
            let expect = lvl.grad[k][0] * jac[0] + lvl.grad[k][1] * jac[1];
            assert_eq!(lvl.steepest_descent[j][k], expect);
        }
    }
}

#[test]
fn composition_identity_and_translation() {
    let m = model();
    let n = m.shape.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let same = compose_inverse_warp(&p, &vec![0.0; n], m).unwrap();
    for (a, b) in same.iter().zip(&p) {
        assert!((a - b).abs() < 1e-9);
    }
    let dp = translated(m, [1.5, -2.0]);
    let out = compose_inverse_warp(&vec![0.0; n], &dp, m).unwrap();
    let expect = m.shape.instance_f64(&translated(m, [-1.5, 2.0])).unwrap();
    let got = m.shape.instance_f64(&out).unwrap();
    for (a, b) in got.iter().zip(&expect) {
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }
}

/// Dense composition oracle at the mesh vertices: locate each mean vertex in
/// the mesh deformed by `dp`, carry its barycentrics back to the mean shape,
/// then map that point through the warp of `p`.
fn dense_compose(m: &Model, p: &[f64], dp: &[f64]) -> Vec<Option<[f64; 2]>> {
    let mean = m.shape.mean.clone();
    let moved = m.shape.instance(dp).unwrap();
    let cur = m.shape.instance_f64(p).unwrap();
    mean.points
        .iter()
        .map(|&v| {
            let (t, w) = m.mesh.locate(&moved, v)?;
            let tri = m.mesh.triangles[t];
            let u = [0, 1].map(|c| (0..3).map(|k| w[k] * mean.points[tri[k]][c]).sum::<f64>());
            let (t2, w2) = m.mesh.locate(&mean, u)?;
            let tri2 = m.mesh.triangles[t2];
            Some([0, 1].map(|c| (0..3).map(|k| w2[k] * cur[tri2[k]][c]).sum::<f64>()))
        })
        .collect()
}

fn max_discrepancy(m: &Model, p: &[f64], dp: &[f64]) -> f64 {
    let fast = m.shape.instance_f64(&compose_inverse_warp(p, dp, m).unwrap()).unwrap();
    fast.iter().zip(&dense_compose(m, p, dp)).filter_map(|(a, b)| b.map(|b| (a[0] - b[0]).hypot(a[1] - b[1]))).fold(0.0, f64::max)
}

fn max_displacement(m: &Model, dp: &[f64]) -> f64 {
    let moved = m.shape.instance_f64(dp).unwrap();
    moved.iter().zip(&m.shape.mean.points).map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1])).fold(0.0, f64::max)
}

#[test]
fn composition_agrees_with_dense_warps_to_first_order() {
    let m = model();
    let n = m.shape.n_params();
    let k = m.shape.n_modes();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled = |h: f64| dir.iter().map(|v| v * h).collect::<Vec<f64>>();

        // Current warp a similarity: every triangle shares one affine map and
        // the vertex composition is exact up to second order.
        let mut sim = vec![0.0; k];
        sim.extend(m.shape.similarity_params(1.05, 0.1, [3.0, -2.0]));
        let (big, small) = (max_discrepancy(m, &sim, &scaled(2.0)), max_discrepancy(m, &sim, &scaled(0.5)));
        assert!(small <= big / 12.0 + 1e-9, "similarity: {big} at h = 2, {small} at h = 0.5");

        // General warp: averaging the incident affine maps at a vertex leaves
        // a discrepancy linear in the update, a small fraction of it.
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for h in [0.5, 2.0] {
            let dp = scaled(h);
            let d = max_discrepancy(m, &p, &dp);
            assert!(d <= 0.25 * max_displacement(m, &dp), "h = {h}: {d} vs {}", max_displacement(m, &dp));
        }
    }
}

#[test]
fn init_reproduces_identity_and_scale() {
    let m = model();
    let c = m.shape.centroid();
    let spread = |p: &[f64]| {
        let s = m.shape.instance_f64(p).unwrap();
        s.iter().map(|q| (q[0] - c[0]).hypot(q[1] - c[1])).sum::<f64>()
    };
    let n = m.shape.n_params();
    let base = spread(&vec![0.0; n]);

    let own = m.canonical_mask();
    let p = init_from_mask(&own, m).unwrap();
    assert!((spread(&p) / base - 1.0).abs() < 0.02);
    let moved = m.shape.instance(&p).unwrap();
    assert!(moved.rms_distance(&m.shape.mean) < 0.02 * base / m.shape.n_points() as f64 + 0.5);

    let big = Mask::from_fn(2 * own.width(), 2 * own.height(), |x, y| own.get(x / 2, y / 2));
    let p2 = init_from_mask(&big, m).unwrap();
    let s2 = m.shape.instance_f64(&p2).unwrap();
    let cx = s2.iter().map(|q| q[0]).sum::<f64>() / s2.len() as f64;
    let cy = s2.iter().map(|q| q[1]).sum::<f64>() / s2.len() as f64;
    let spread2: f64 = s2.iter().map(|q| (q[0] - cx).hypot(q[1] - cy)).sum();
    assert!((spread2 / base - 2.0).abs() < 0.04, "scale {}", spread2 / base);

    assert!(init_from_mask(&Mask::empty(20, 20), m).is_err());
}

#[test]
fn far_initialization_reports_no_convergence() {
    let m = model();
    let cfg = FitConfig::default();
    let pre = precompute_for(m, &cfg).unwrap();
    let truth = translated(m, [30.0, 40.0]);
    let face: Image = model_generated_face(m, &truth, &[], 700, 240).unwrap();
    let support = Mask::from_fn(700, 240, |x, _| x < 200);
    let img = face.masked(&support).unwrap();
    let init = translated(m, [30.0 + 3.0 * m.width as f64, 40.0]);
    let r = fit(&img, &init, m, &pre, &cfg).unwrap();
    assert!(!r.converged);
    assert!(r.e_icaam.is_finite());
}

#[test]
fn alpha_reproduces_the_residual() {
    let m = model();
    let pre = precompute(m).unwrap();
    let p = translated(m, [25.0, 30.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let alpha: Vec<f64> = m.appearance.variances.iter().map(|v| rng.gen_range(-1.0..1.0) * v.sqrt()).collect();
    let img: Image = model_generated_face(m, &p, &alpha, 200, 240).unwrap();
    let r = fit(&img, &p, m, &pre, &exact_cfg()).unwrap();
    let recon = m.appearance.instance(&r.alpha);
    let shape = m.shape.instance_f64(&r.params).unwrap();
    let resid: f64 = (0..m.raster().len())
        .map(|i| {
            let q = warp_point(m, &shape, i);
            let v = img.sample_bilinear(q[0], q[1]).unwrap();
            (v - recon[i]).powi(2)
        })
        .sum::<f64>()
        / m.raster().len() as f64;
    assert!(resid <= r.e_icaam + 1e-8, "{resid} vs {}", r.e_icaam);
    for (a, b) in r.alpha.iter().zip(&alpha) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn damped_history_is_non_increasing() {
    let m = model();
    let cfg = FitConfig::default();
    let pre = precompute_for(m, &cfg).unwrap();
    let truth = translated(m, [30.0, 40.0]);
    let img: Image = model_generated_face(m, &truth, &[], 200, 240).unwrap();
    let init = translated(m, [32.5, 38.0]);
    let r = fit(&img, &init, m, &pre, &cfg).unwrap();
    assert!(r.converged);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.landmarks.rms_distance(&m.shape.instance(&truth).unwrap()) < 0.5);
}

#[test]
fn fit_is_invariant_to_gain_absorbed_by_appearance() {
    let m = model();
    let norm = m.appearance.mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rank1 = Model::from_parts(
        m.width,
        m.height,
        m.points.clone(),
        m.mesh.clone(),
        m.shape.clone(),
        AppearanceModel {
            mean: m.appearance.mean.clone(),
            basis: vec![m.appearance.mean.iter().map(|v| v / norm).collect()],
            variances: vec![1.0],
        },
    )
    .unwrap();
    let cfg = exact_cfg();
    let pre = precompute_for(&rank1, &cfg).unwrap();
    let truth = translated(&rank1, [30.0, 40.0]);
    let img: Image = model_generated_face(&rank1, &truth, &[], 200, 240).unwrap();
    let init = translated(&rank1, [31.0, 39.5]);
    let a = fit(&img, &init, &rank1, &pre, &cfg).unwrap();
    let b = fit(&img.map(|v| 1.7 * v), &init, &rank1, &pre, &cfg).unwrap();
    assert!(a.landmarks.rms_distance(&b.landmarks) < 1e-3);
}

#[test]
fn precomputed_levels_must_match_the_config() {
    let m = model();
    let pre = precompute(m).unwrap();
    let img = ThermalImage::<f64>::filled(200, 240, 0.5);
    let p = translated(m, [30.0, 40.0]);
    assert!(fit(&img, &p, m, &pre, &FitConfig::default()).is_err());
    assert!(fit(&img, &p[1..], m, &pre, &exact_cfg()).is_err());
    assert!(FitConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
    assert_eq!(FitConfig::default().level_sigmas(), vec![2.0, 0.0]);
}
