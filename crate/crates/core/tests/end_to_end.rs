use std::sync::OnceLock;

use thermoface::aam::{synthesize_frontal, Aam};
use thermoface::fit::{precompute_for, Precomputed};
use thermoface::pipeline::{run_pipeline, PipelineConfig};
use thermoface::recognition::{identify, ncc, ncc_values};
use thermoface::synthetic::*;
use thermoface::{Gallery, Model, Signature};

struct Fixture {
    model: Model,
    pre: Precomputed,
    cfg: PipelineConfig,
    eval: EvaluationConfig,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = PipelineConfig::default();
        let eval = EvaluationConfig::default();
        let model: Model = train_toy_aam(&eval.toy, &eval.render, &cfg).unwrap();
        let pre = precompute_for(&model, &cfg.fit).unwrap();
        Fixture { model, pre, cfg, eval }
    })
}

fn signature(subject: u64, pose_seed: u64) -> Signature {
    let f = fixture();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(pose_seed);
    let pose = random_pose(&f.model, &mut rng, 15.0, (0.9, 1.1));
    let spec = SyntheticSubjectSpec::new(subject);
    let img = render_synthetic_subject(&spec, &pose, &f.model, &f.eval.render, pose_seed ^ 0x55).unwrap();
    let out = run_pipeline(&img, &f.model, &f.pre, &f.cfg, None).unwrap();
    assert!(out.fit.converged);
    out.into_signature(format!("s{subject}"), format!("s{subject}_{pose_seed}"))
}

#[test]
fn model_file_round_trips_bit_exactly() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    f.model.save(&path).unwrap();
    let back: Model = Aam::load(&path).unwrap();
    assert_eq!(back, f.model);
    assert_eq!(back.to_json().unwrap(), f.model.to_json().unwrap());
    std::fs::write(&path, f.model.to_json().unwrap().replacen("\"version\":1", "\"version\":7", 1)).unwrap();
    assert!(Model::load(&path).is_err());
}

#[test]
fn fitted_frontal_recovers_the_canonical_rendering() {
    let f = fixture();
    let m = &f.model;
    let spec = SyntheticSubjectSpec::new(77);
    let mut shape: Vec<f64> =
        m.shape.variances.iter().enumerate().map(|(i, v)| if i % 2 == 0 { 0.8 } else { -0.6 } * v.sqrt()).collect();
    shape.truncate(m.shape.n_modes());
    let pose = Pose { shape, rotation: 0.15, scale: 1.06, translation: [4.0, -3.0] };
    let render = RenderConfig { noise: 0.0, ..f.eval.render };
    let img: thermoface::Image = render_synthetic_subject(&spec, &pose, m, &render, 1).unwrap();
    let out = run_pipeline(&img, m, &f.pre, &f.cfg, None).unwrap();
    assert!(out.fit.converged);
    let frontal = synthesize_frontal(&img, &out.fit.landmarks, m).unwrap();

    let canvas = RenderConfig { width: m.width, height: m.height, ..render };
    let truth: thermoface::Image = render_with_landmarks(&spec, &m.shape.mean, &canvas, 1).unwrap();
    let support = thermoface::segmentation::morphology::erode(&m.canonical_mask(), 3.0);
    let rho = ncc_values(frontal.data(), truth.data(), support.data()).unwrap();
    assert!(rho >= 0.99, "{rho}");
}

#[test]
fn gallery_survives_save_and_reload() {
    let mut g = Gallery::new(fixture().cfg.hash());
    for s in 0..4 {
        g.enroll(signature(s, 100 + s)).unwrap();
    }
    let probe = signature(2, 999);
    let before = identify(&g, &probe).unwrap();
    let dir = tempfile::tempdir().unwrap();
    g.save(dir.path()).unwrap();
    let back = Gallery::load(dir.path()).unwrap();
    assert_eq!(back, g);
    assert_eq!(identify(&back, &probe).unwrap(), before);
    assert_eq!(before.correct_rank, Some(1));
}

#[test]
fn re_rendered_subject_ranks_first_among_ten() {
    let mut g = Gallery::new(fixture().cfg.hash());
    for s in 0..10 {
        g.enroll(signature(s, 200 + s)).unwrap();
    }
    let r = identify(&g, &signature(7, 4242)).unwrap();
    assert_eq!(r.ranked[0].0, "s7");
    assert!(r.margin() > 0.0);
}

#[test]
fn different_subjects_correlate_less_than_poses_of_one() {
    let a1 = signature(21, 1);
    let a2 = signature(21, 2);
    let b = signature(22, 1);
    assert!(ncc(&a1, &b).unwrap() < ncc(&a1, &a2).unwrap());
}

#[test]
fn pipeline_is_bit_reproducible_and_dumps_stages() {
    let f = fixture();
    let pose = Pose::frontal(f.model.shape.n_modes());
    let img: thermoface::Image =
        render_synthetic_subject(&SyntheticSubjectSpec::new(3), &pose, &f.model, &f.eval.render, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = run_pipeline(&img, &f.model, &f.pre, &f.cfg, Some(dir.path())).unwrap();
    let b = run_pipeline(&img, &f.model, &f.pre, &f.cfg, None).unwrap();
    assert!(a.fit.converged);
    assert_eq!(a.signature, b.signature);
    assert_eq!(a.signature.config_hash, f.cfg.hash());
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 6);
}

fn scale_pairs() -> Vec<ScalePair> {
    let f = fixture();
    scale_robustness(&f.model, &f.cfg, &ScaleRobustnessConfig::default()).unwrap()
}

#[test]
fn real_valued_signatures_survive_rescaling() {
    let pairs = scale_pairs();
    assert!(pairs.iter().all(|p| p.real >= 0.8), "{pairs:?}");
    let better = pairs.iter().filter(|p| p.real > p.binary).count();
    assert!(better >= 8, "{pairs:?}");
}

#[test]
#[ignore = "subjects whose 0.5-thresholded map is empty or a few stable pixels score binary NCC 0 or 1"]
fn real_valued_signatures_beat_binarized_for_every_subject() {
    for p in scale_pairs() {
        assert!(p.real > p.binary, "{p:?}");
    }
}

#[test]
fn harness_edge_cases() {
    let f = fixture();
    let one_pose = EvaluationConfig { poses_per_subject: 1, ..f.eval.clone() };
    assert!(evaluate_synthetic(&f.model, &f.cfg, &one_pose).is_err());
    let twins = EvaluationConfig { subjects: 2, duplicate_last: true, ..f.eval.clone() };
    let r = evaluate_synthetic(&f.model, &f.cfg, &twins).unwrap();
    assert!(r.rank1() <= 0.5, "{}", r.rank1());
}
