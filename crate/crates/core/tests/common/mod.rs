//! Property suites shared by the property tests and the acceptance report.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use thermoface::aam::{mirror_shape, piecewise_affine_warp, LandmarkSet, TriangulatedMesh};
use thermoface::enhancement::{anisotropic_diffuse, enhance_detail, DiffusionConfig, ExponentMode};
use thermoface::imaging::{Mask, ThermalImage};
use thermoface::linalg::{pca, retained_count};
use thermoface::recognition::ncc_values;
use thermoface::segmentation::morphology::{closing, dilate, erode, opening};
use thermoface::vesselness::{vesselness_at_scale, vesselness_multiscale, vesselness_value, FormulaMode, VesselnessConfig};

pub type Check = Result<(), String>;

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check
where
    S::Value: std::fmt::Debug,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| match e {
        TestError::Fail(why, value) => format!("{why} for {value:?}"),
        TestError::Abort(why) => why.to_string(),
    })
}

fn image(max_side: usize, lo: f64, hi: f64) -> impl Strategy<Value = ThermalImage<f64>> {
    (3..=max_side, 3..=max_side)
        .prop_flat_map(move |(w, h)| prop::collection::vec(lo..hi, w * h).prop_map(move |v| ThermalImage::new(w, h, v).unwrap()))
}

fn mask(max_side: usize) -> impl Strategy<Value = Mask> {
    (4..=max_side, 4..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop::bool::weighted(0.6), w * h).prop_map(move |v| Mask::new(w, h, v).unwrap())
    })
}

fn diffusion() -> impl Strategy<Value = DiffusionConfig> {
    (0.5f64..40.0, 1usize..6, 0.01f64..=0.25, prop::bool::ANY).prop_map(|(k, iterations, dt, paper)| DiffusionConfig {
        k,
        iterations,
        dt,
        exponent_mode: if paper { ExponentMode::Paper } else { ExponentMode::PeronaMalik },
    })
}

pub fn diffusion_extremum() -> Check {
    run(64, (image(12, 0.0, 1.0), diffusion()), |(img, cfg)| {
        let (lo, hi) = img.min_max();
        let step = DiffusionConfig { iterations: 1, ..cfg };
        let mut cur = img;
        for _ in 0..cfg.iterations {
            cur = anisotropic_diffuse(&cur, &step).unwrap();
            let (a, b) = cur.min_max();
            prop_assert!(a >= lo - 1e-12 && b <= hi + 1e-12, "[{a}, {b}] escapes [{lo}, {hi}]");
        }
        Ok(())
    })
}

pub fn detail_offset_invariance() -> Check {
    run(64, (image(12, 0.0, 1.0), diffusion(), -5.0f64..5.0), |(img, cfg, c)| {
        let a = enhance_detail(&img, &cfg).unwrap();
        let b = enhance_detail(&img.map(|v| v + c), &cfg).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        Ok(())
    })
}

fn formula() -> impl Strategy<Value = FormulaMode> {
    prop_oneof![Just(FormulaMode::Frangi), Just(FormulaMode::Paper)]
}

pub fn vesselness_range() -> Check {
    run(32, (image(24, -1.0, 1.0), formula(), prop::option::of(0.01f64..2.0)), |(img, mode, c)| {
        let cfg = VesselnessConfig { formula_mode: mode, c_struct: c, s_min: 1.0, s_max: 2.0, ..Default::default() };
        let map = vesselness_multiscale(&img, &cfg).unwrap();
        prop_assert!(map.image.data().iter().all(|&v| (0.0..1.0).contains(&v)));
        Ok(())
    })?;
    run(256, (-10.0f64..10.0, 1e-9f64..10.0, 0.05f64..2.0, 1e-3f64..5.0, formula()), |(l1, l2, b, c, mode)| {
        let v = vesselness_value(l1, -l2, b, c, mode);
        prop_assert!((0.0..1.0).contains(&v));
        if l1.abs() <= l2 {
            prop_assert_eq!(vesselness_value(l1, l2, b, c, mode), 0.0);
        }
        Ok(())
    })
}

fn ridge(n: usize, angle: f64, offset: f64, width: f64, contrast: f64) -> ThermalImage<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let (s, k) = angle.sin_cos();
    ThermalImage::from_fn(n, n, |x, y| {
        let d = -(x as f64 - c) * s + (y as f64 - c) * k - offset;
        contrast * (-d * d / (2.0 * width * width)).exp()
    })
}

pub fn dark_ridge_rejected() -> Check {
    run(16, (0.0f64..3.1, -3.0f64..3.0, 1.5f64..3.5, formula()), |(angle, offset, width, mode)| {
        let img = ridge(41, angle, offset, width, -1.0);
        let cfg = VesselnessConfig { formula_mode: mode, ..Default::default() };
        let map = vesselness_multiscale(&img, &cfg).unwrap();
        let c = 20.0;
        let (s, k) = angle.sin_cos();
        let (x, y) = ((c - offset * s).round() as usize, (c + offset * k).round() as usize);
        prop_assert_eq!(map.image.get(x, y), 0.0);
        Ok(())
    })
}

fn rotate90(img: &ThermalImage<f64>) -> ThermalImage<f64> {
    let n = img.width();
    ThermalImage::from_fn(n, n, |x, y| img.get(y, n - 1 - x))
}

pub fn vesselness_rotation() -> Check {
    run(16, (0.0f64..3.1, -4.0f64..4.0, 1.5f64..3.5, formula()), |(angle, offset, width, mode)| {
        let img = ridge(33, angle, offset, width, 1.0);
        let cfg = VesselnessConfig { formula_mode: mode, ..Default::default() };
        let a = rotate90(&vesselness_multiscale(&img, &cfg).unwrap().image);
        let b = vesselness_multiscale(&rotate90(&img), &cfg).unwrap().image;
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        Ok(())
    })
}

pub fn multiscale_is_pointwise_max() -> Check {
    run(16, (image(20, 0.0, 1.0), 1.0f64..2.0, 0.25f64..1.0), |(img, s_min, s_step)| {
        let cfg = VesselnessConfig { s_min, s_max: s_min + 2.0, s_step, ..Default::default() };
        let multi = vesselness_multiscale(&img, &cfg).unwrap();
        let singles: Vec<_> = cfg.scales().iter().map(|&s| vesselness_at_scale(&img, s, &cfg).unwrap().image).collect();
        for (i, &v) in multi.image.data().iter().enumerate() {
            let m = singles.iter().map(|s| s.data()[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(v, m);
        }
        Ok(())
    })
}

fn vectors() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| (prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(-10.0f64..10.0, n)))
}

pub fn ncc_properties() -> Check {
    run(128, (vectors(), 0.01f64..100.0, -50.0f64..50.0), |((a, b), gain, offset)| {
        let support = vec![true; a.len()];
        let (Ok(r), Ok(rt)) = (ncc_values(&a, &b, &support), ncc_values(&b, &a, &support)) else {
            return Ok(());
        };
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert_eq!(r, rt);
        let scaled: Vec<f64> = a.iter().map(|v| gain * v + offset).collect();
        let rs = ncc_values(&scaled, &b, &support).unwrap();
        prop_assert!((rs - r).abs() < 1e-9, "{rs} vs {r}");
        Ok(())
    })
}

pub fn morphology_properties() -> Check {
    run(64, (mask(24), 1.0f64..4.0), |(m, r)| {
        prop_assert!(erode(&m, r).is_subset_of(&m));
        prop_assert!(m.is_subset_of(&dilate(&m, r)));
        let o = opening(&m, r);
        let c = closing(&m, r);
        prop_assert!(o.is_subset_of(&m));
        prop_assert!(m.is_subset_of(&c));
        prop_assert_eq!(opening(&o, r), o);
        prop_assert_eq!(closing(&c, r), c);
        Ok(())
    })
}

pub fn pca_properties() -> Check {
    let samples =
        (2usize..12, 2usize..10).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n));
    run(64, (samples, 0.5f64..1.0), |(mut rows, fraction)| {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        rows.iter_mut().for_each(|r| r.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m));
        let p = pca(&rows);
        for (i, a) in p.directions.iter().enumerate() {
            for (j, b) in p.directions.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-9, "directions {i}, {j}: {dot}");
            }
        }
        prop_assert!(p.variances.windows(2).all(|w| w[0] >= w[1]));
        let sum: f64 = p.variances.iter().sum();
        prop_assert!((sum - p.total).abs() <= 1e-9 * p.total.max(1.0));
        let k = retained_count(&p.variances, p.total, fraction);
        let kept: f64 = p.variances[..k].iter().sum();
        prop_assert!(kept >= (fraction - 1e-12) * p.total);
        if k > 0 {
            let fewer: f64 = p.variances[..k - 1].iter().sum();
            prop_assert!(fewer < fraction * p.total);
        }
        Ok(())
    })
}

/// Exact on retained variance: the 99% rule keeps the fewest components.
pub fn retained_variance_rule() -> Check {
    let v = [5.0, 3.0, 1.5, 0.4, 0.1];
    let total: f64 = v.iter().sum();
    match (retained_count(&v, total, 0.99), retained_count(&v, total, 0.95)) {
        (4, 3) => Ok(()),
        other => Err(format!("retained counts {other:?}, expected (4, 3)")),
    }
}

fn grid_shape() -> LandmarkSet<f64> {
    let mut pts = Vec::new();
    for j in 0..4 {
        for i in 0..4 {
            pts.push([10.0 + 12.0 * i as f64 + (j % 2) as f64 * 2.0, 12.0 + 11.0 * j as f64]);
        }
    }
    LandmarkSet::new(pts)
}

pub fn warp_exact_on_affine() -> Check {
    let affine = (0.8f64..1.2, -0.2f64..0.2, -0.2f64..0.2, 0.8f64..1.2, -4.0f64..4.0, -4.0f64..4.0);
    run(48, (affine, -1.0f64..1.0, -1.0f64..1.0), |((a, b, c, d, tx, ty), gx, gy)| {
        let src = grid_shape();
        let mesh = TriangulatedMesh::delaunay(&src).unwrap();
        let dst = src.map(|p| [a * p[0] + b * p[1] + tx + 8.0, c * p[0] + d * p[1] + ty + 8.0]);
        let ramp = |x: f64, y: f64| 0.5 + 0.01 * (gx * x + gy * y);
        let img = ThermalImage::from_fn(80, 80, |x, y| ramp(x as f64, y as f64));
        let out = piecewise_affine_warp(&img, &src, &dst, &mesh, 90, 90).unwrap();
        let det = a * d - b * c;
        for y in 0..90 {
            for x in 0..90 {
                if mesh.locate(&dst, [x as f64, y as f64]).is_none() {
                    continue;
                }
                let (u, v) = (x as f64 - tx - 8.0, y as f64 - ty - 8.0);
                let (sx, sy) = ((d * u - b * v) / det, (-c * u + a * v) / det);
                let want = ramp(sx, sy);
                prop_assert!((out.get(x, y) - want).abs() < 1e-9, "({x}, {y}): {} vs {want}", out.get(x, y));
            }
        }
        Ok(())
    })
}

pub fn mirror_involution() -> Check {
    let pts = prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 6);
    run(128, pts, |pts| {
        let shape = LandmarkSet::new(pts.iter().map(|&(x, y)| [x, y]).collect());
        let map = [1, 0, 2, 4, 3, 5];
        let twice = mirror_shape(&mirror_shape(&shape, &map).unwrap(), &map).unwrap();
        prop_assert!(twice.rms_distance(&shape) < 1e-9);
        prop_assert!(mirror_shape(&shape, &[1, 2, 0, 3, 4, 5]).is_err());
        Ok(())
    })
}

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("diffusion extremum principle", diffusion_extremum()),
        ("detail constant-offset invariance", detail_offset_invariance()),
        ("vesselness range [0,1) and dark-tube rejection", vesselness_range()),
        ("vesselness zero on a cold ridge", dark_ridge_rejected()),
        ("vesselness rotation equivariance", vesselness_rotation()),
        ("multi-scale equals pointwise max", multiscale_is_pointwise_max()),
        ("NCC bounds, symmetry and affine gain invariance", ncc_properties()),
        ("morphology anti-extensivity, extensivity, idempotence", morphology_properties()),
        ("PCA orthonormality and retained-variance rule", pca_properties()),
        ("retained-variance rule on fixed spectrum", retained_variance_rule()),
        ("piecewise affine warp exact on affine motions", warp_exact_on_affine()),
        ("mirror involution", mirror_involution()),
    ]
}

/// Largest deviation of `gaussian_blur` from a dense 2D convolution with the
/// normalized sampled Gaussian (replicated borders), over a unit impulse and
/// a random image.
pub fn blur_oracle_error() -> f64 {
    use rand::{Rng, SeedableRng};
    use thermoface::imaging::gaussian_blur;
    let sigma = 2.0f64;
    let r = (4.0 * sigma).ceil() as isize;
    let mut z = 0.0;
    for i in -r..=r {
        for j in -r..=r {
            z += (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
        }
    }
    let dense = |img: &ThermalImage<f64>| {
        ThermalImage::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for i in -r..=r {
                for j in -r..=r {
                    let g = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp() / z;
                    acc += g * img.get_clamped(x as isize - i, y as isize - j);
                }
            }
            acc
        })
    };
    let mut impulse = ThermalImage::<f64>::zeros(21, 21);
    impulse.set(10, 10, 1.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let noise = ThermalImage::from_fn(17, 23, |_, _| rng.gen_range(0.0..1.0));
    [impulse, noise]
        .iter()
        .map(|img| {
            let fast = gaussian_blur(img, sigma).unwrap();
            fast.data().iter().zip(dense(img).data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest deviation of one diffusion iteration from the 4-neighbour update
/// written out by hand on a 3x3 image (8-bit counts, k = 20, dt = 0.2).
pub fn diffusion_step_error() -> f64 {
    use thermoface::imaging::Units;
    let v = [[10.0, 20.0, 30.0], [40.0, 50.0, 60.0], [70.0, 80.0, 95.0]];
    let img = ThermalImage::<f64>::from_fn(3, 3, |x, y| v[y][x]).with_units(Units::Counts);
    let mut worst = 0.0f64;
    for mode in [ExponentMode::Paper, ExponentMode::PeronaMalik] {
        let cfg = DiffusionConfig { k: 20.0, iterations: 1, dt: 0.2, exponent_mode: mode };
        let out = anisotropic_diffuse(&img, &cfg).unwrap();
        let flux = |d: f64| match mode {
            ExponentMode::Paper => (-d.abs() / 400.0).exp() * d,
            ExponentMode::PeronaMalik => (-(d / 20.0).powi(2)).exp() * d,
        };
        // Border neighbours replicate the pixel itself and contribute nothing.
        let expected = [
            [
                10.0 + 0.2 * (flux(20.0 - 10.0) + flux(40.0 - 10.0)),
                20.0 + 0.2 * (flux(10.0 - 20.0) + flux(30.0 - 20.0) + flux(50.0 - 20.0)),
                30.0 + 0.2 * (flux(20.0 - 30.0) + flux(60.0 - 30.0)),
            ],
            [
                40.0 + 0.2 * (flux(10.0 - 40.0) + flux(70.0 - 40.0) + flux(50.0 - 40.0)),
                50.0 + 0.2 * (flux(20.0 - 50.0) + flux(80.0 - 50.0) + flux(40.0 - 50.0) + flux(60.0 - 50.0)),
                60.0 + 0.2 * (flux(30.0 - 60.0) + flux(95.0 - 60.0) + flux(50.0 - 60.0)),
            ],
            [
                70.0 + 0.2 * (flux(40.0 - 70.0) + flux(80.0 - 70.0)),
                80.0 + 0.2 * (flux(50.0 - 80.0) + flux(70.0 - 80.0) + flux(95.0 - 80.0)),
                95.0 + 0.2 * (flux(60.0 - 95.0) + flux(80.0 - 95.0)),
            ],
        ];
        for (y, row) in expected.iter().enumerate() {
            for (x, e) in row.iter().enumerate() {
                worst = worst.max((out.get(x, y) - e).abs());
            }
        }
    }
    worst
}

/// Largest deviation of multi-scale vesselness on a horizontal Gaussian ridge
/// from the Frangi measure of its closed-form Hessian: the continuous blur of
/// the profile is Gaussian with variance `w^2 + s^2`, differentiated with the
/// same central stencil and scale normalization.
pub fn ridge_oracle_error() -> f64 {
    let (w, amp, y0) = (2.0, 1.0, 40.3);
    let cfg = VesselnessConfig { c_struct: Some(0.2), ..Default::default() };
    let img = ThermalImage::<f64>::from_fn(48, 81, |_, y| amp * (-(y as f64 - y0).powi(2) / (2.0 * w * w)).exp());
    let map = vesselness_multiscale(&img, &cfg).unwrap();
    let mut worst = 0.0f64;
    for y in 22..59 {
        let v = cfg
            .scales()
            .iter()
            .map(|&s| {
                let var = w * w + s * s;
                let g = |t: f64| amp * (w * w / var).sqrt() * (-(t - y0).powi(2) / (2.0 * var)).exp();
                let yf = y as f64;
                let hyy = (g(yf + 1.0) - 2.0 * g(yf) + g(yf - 1.0)) * s.powf(cfg.gamma);
                vesselness_value(0.0, hyy, cfg.beta, cfg.c_struct.unwrap(), cfg.formula_mode)
            })
            .fold(0.0, f64::max);
        for x in 0..48 {
            worst = worst.max((map.image.get(x, y) - v).abs());
        }
    }
    worst
}
