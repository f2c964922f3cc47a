//! `thermoface` command-line interface.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use thermoface::aam::{synthesize_frontal, train_aam, AamTrainConfig, LandmarkSet, PointDefinition};
use thermoface::enhancement::{enhance_detail, ExponentMode};
use thermoface::error::StageExt;
use thermoface::fit::{fit, init_from_mask, precompute_for, Precomputed};
use thermoface::imaging::{io, Mask};
use thermoface::pipeline::{run_pipeline, PipelineConfig};
use thermoface::recognition::{cmc_csv, cmc_from_results, identify, MatchResult};
use thermoface::segmentation::{segment_face, ThresholdMode};
use thermoface::synthetic::{evaluate_synthetic, face_template, harness_image, train_toy_aam, EvaluationConfig};
use thermoface::vesselness::{extract_signature, vesselness_multiscale, FormulaMode};
use thermoface::{Error, Gallery, Image, Model, Signature, Stage};

#[derive(Parser)]
#[command(name = "thermoface", version, about = "Thermal-IR face recognition from subcutaneous vessel signatures")]
struct Cli {
    /// Pipeline configuration (TOML). Flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write intermediate stage images here.
    #[arg(long, global = true)]
    dump_dir: Option<PathBuf>,
    /// Worker threads for batch commands.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed of the synthetic harness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment the face: writes the mask and the background-suppressed image.
    Segment(SegmentArgs),
    /// Signed detail image (input minus its anisotropic diffusion).
    Enhance(EnhanceArgs),
    /// Train an appearance model from annotated images.
    TrainAam(TrainArgs),
    /// Fit the model to one image.
    Fit(FitArgs),
    /// Multi-scale vesselness signature of a (frontal) image.
    Vesselness(VesselnessArgs),
    /// Add images to a gallery.
    Enroll(EnrollArgs),
    /// Rank gallery subjects against one image.
    Identify(IdentifyArgs),
    /// CMC curve of a probe list, or of the synthetic harness without one.
    Evaluate(EvaluateArgs),
    /// Render the synthetic harness corpus to disk.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SegmentArgs {
    image: PathBuf,
    #[arg(long, default_value = "mask.pgm")]
    out_mask: PathBuf,
    #[arg(long, default_value = "segmented.pgm")]
    out_image: PathBuf,
    #[arg(long, requires = "t_up")]
    t_low: Option<f64>,
    #[arg(long, requires = "t_low")]
    t_up: Option<f64>,
    #[arg(long)]
    se_fraction: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiffusionMode {
    Paper,
    PeronaMalik,
}

#[derive(Args)]
struct EnhanceArgs {
    image: PathBuf,
    #[arg(long, default_value = "enhanced.pgm")]
    out: PathBuf,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<DiffusionMode>,
}

#[derive(Args)]
struct TrainArgs {
    /// Lines of `image landmarks`.
    manifest: PathBuf,
    /// Point definition: names and mirror partners.
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 0.99)]
    variance: f64,
    #[arg(long, default_value = "on", value_parser = on_off, action = clap::ArgAction::Set)]
    mirror: bool,
}

#[derive(Args)]
struct FitArgs {
    image: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Face mask to initialize from instead of segmenting.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Landmark file to write (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_frontal: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VesselMode {
    Frangi,
    Paper,
}

#[derive(Args)]
struct VesselnessArgs {
    image: PathBuf,
    #[arg(long, default_value = "signature.pgm")]
    out: PathBuf,
    /// Restrict to this mask (the whole image otherwise).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    s_min: Option<f64>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    s_step: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Structureness constant, or `auto`.
    #[arg(long, value_parser = c_value)]
    c: Option<CValue>,
    #[arg(long, value_enum)]
    mode: Option<VesselMode>,
}

#[derive(Clone, Copy)]
enum CValue {
    Auto,
    Fixed(f64),
}

#[derive(Args)]
struct ModelGallery {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    gallery: Option<PathBuf>,
}

#[derive(Args)]
struct EnrollArgs {
    images: Vec<PathBuf>,
    /// Subject id of the positional images.
    #[arg(long, requires = "images")]
    subject: Option<String>,
    /// Lines of `image subject`.
    #[arg(long, conflicts_with = "subject")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    paths: ModelGallery,
}

#[derive(Args)]
struct IdentifyArgs {
    image: PathBuf,
    /// Rows to print (all subjects when absent).
    #[arg(long)]
    top: Option<usize>,
    #[command(flatten)]
    paths: ModelGallery,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Lines of `image subject`; runs the synthetic harness when absent.
    #[arg(long)]
    probes: Option<PathBuf>,
    #[command(flatten)]
    paths: ModelGallery,
    #[arg(long, default_value_t = 10)]
    subjects: usize,
    #[arg(long, default_value_t = 3)]
    poses: usize,
    /// CMC CSV (`rank,rate`); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-probe CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    subjects: usize,
    #[arg(long, default_value_t = 3)]
    poses: usize,
    /// Pose renderings through this model instead of a freshly trained toy one.
    #[arg(long)]
    model: Option<PathBuf>,
}

fn on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(format!("expected on or off, got {s:?}")),
    }
}

fn c_value(s: &str) -> Result<CValue, String> {
    if s == "auto" {
        return Ok(CValue::Auto);
    }
    s.parse().map(CValue::Fixed).map_err(|_| format!("expected a number or `auto`, got {s:?}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            let stage_failure = e.chain().any(|c| c.downcast_ref::<Error>().and_then(Error::stage).is_some());
            ExitCode::from(if stage_failure { 3 } else { 2 })
        }
    }
}

/// The error chain without causes already quoted by their parent.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn read_mask_for(path: &Path, img: &Image) -> Result<Mask> {
    let mask = io::read_mask(path).with_context(|| format!("reading mask {}", path.display()))?;
    if (mask.width(), mask.height()) != (img.width(), img.height()) {
        bail!("mask {} is {}x{}, image is {}x{}", path.display(), mask.width(), mask.height(), img.width(), img.height());
    }
    Ok(mask)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    let ctx = Ctx { dump_dir: cli.dump_dir, seed: cli.seed };
    match cli.command {
        Command::Segment(a) => segment(a, &mut cfg),
        Command::Enhance(a) => enhance(a, &mut cfg),
        Command::TrainAam(a) => train(a, &cfg),
        Command::Fit(a) => fit_one(a, &cfg, &ctx),
        Command::Vesselness(a) => vesselness(a, &mut cfg),
        Command::Enroll(a) => enroll(a, &cfg, &ctx),
        Command::Identify(a) => identify_one(a, &cfg, &ctx),
        Command::Evaluate(a) => evaluate(a, &cfg, &ctx),
        Command::Synth(a) => synth(a, &cfg, &ctx),
    }
}

struct Ctx {
    dump_dir: Option<PathBuf>,
    seed: Option<u64>,
}

/// PGMs go through their recorded value mapping; other formats load normalized.
fn load_image(path: &Path) -> Result<Image> {
    let pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let img = if pgm { io::read_pgm_mapped(path).map(|(i, _)| i) } else { io::read_image(path) };
    img.with_context(|| format!("reading image {}", path.display()))
}

fn load_model(arg: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<Model> {
    let path = arg.as_ref().or(cfg.model_path.as_ref()).ok_or_else(|| anyhow!("no model: pass --model or set model_path"))?;
    Model::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn gallery_path(arg: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    arg.clone().or_else(|| cfg.gallery_path.clone()).ok_or_else(|| anyhow!("no gallery: pass --gallery or set gallery_path"))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn segment(a: SegmentArgs, cfg: &mut PipelineConfig) -> Result<()> {
    if let (Some(t_low), Some(t_up)) = (a.t_low, a.t_up) {
        cfg.segmentation.thresholds = ThresholdMode::Explicit { t_low, t_up };
    }
    if let Some(f) = a.se_fraction {
        cfg.segmentation.se_area_fraction = f;
    }
    cfg.segmentation.validate()?;
    let img = load_image(&a.image)?;
    let (mask, out) = segment_face(&img, &cfg.segmentation).stage(Stage::Segmentation)?;
    io::write_mask_pgm(&mask, &a.out_mask)?;
    io::write_image(&out, &a.out_image)?;
    println!("face pixels: {}", mask.count());
    Ok(())
}

fn enhance(a: EnhanceArgs, cfg: &mut PipelineConfig) -> Result<()> {
    let d = &mut cfg.diffusion;
    if let Some(k) = a.k {
        d.k = k;
    }
    if let Some(n) = a.iters {
        d.iterations = n;
    }
    if let Some(dt) = a.dt {
        d.dt = dt;
    }
    if let Some(m) = a.mode {
        d.exponent_mode = match m {
            DiffusionMode::Paper => ExponentMode::Paper,
            DiffusionMode::PeronaMalik => ExponentMode::PeronaMalik,
        };
    }
    d.validate()?;
    let img = load_image(&a.image)?;
    let detail = enhance_detail(&img, d).stage(Stage::Enhancement)?;
    let mapping = io::write_pgm16_rescaled(&detail, &a.out)?;
    write_json(
        &sidecar(&a.out),
        &json!({
            "offset": mapping.offset,
            "scale": mapping.scale,
            "k": d.k,
            "iterations": d.iterations,
            "dt": d.dt,
            "exponent_mode": d.exponent_mode,
        }),
    )
}

fn train(a: TrainArgs, cfg: &PipelineConfig) -> Result<()> {
    if !(a.variance > 0.0 && a.variance <= 1.0) {
        bail!("--variance must lie in (0, 1]");
    }
    let points = PointDefinition::load(&a.points).with_context(|| format!("reading {}", a.points.display()))?;
    let entries = manifest::read(&a.manifest, 1, "`image landmarks`")?;
    let samples: Vec<(Image, LandmarkSet<f64>)> = entries
        .par_iter()
        .map(|e| {
            let img = load_image(&e.path)?;
            let lm_path = a.manifest.parent().unwrap_or(Path::new(".")).join(&e.fields[0]);
            let lm = LandmarkSet::load(&lm_path).with_context(|| format!("reading {}", lm_path.display()))?;
            let (_, seg) =
                segment_face(&img, &cfg.segmentation).stage(Stage::Segmentation).with_context(|| e.path.display().to_string())?;
            let enhanced = enhance_detail(&seg, &cfg.diffusion).stage(Stage::Enhancement)?;
            Ok((enhanced, lm))
        })
        .collect::<Result<_>>()?;
    let (imgs, lms): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
    let tc =
        AamTrainConfig { shape_variance: a.variance, appearance_variance: a.variance, mirror: a.mirror, ..Default::default() };
    let model = train_aam(&imgs, &lms, &points, &tc).stage(Stage::Training)?;
    model.save(&a.out)?;
    println!(
        "trained on {} images: {} shape and {} appearance modes, canonical frame {}x{}",
        imgs.len(),
        model.shape.n_modes(),
        model.appearance.n_modes(),
        model.width,
        model.height
    );
    Ok(())
}

fn fit_one(a: FitArgs, cfg: &PipelineConfig, ctx: &Ctx) -> Result<()> {
    cfg.validate()?;
    let model = load_model(&a.model, cfg)?;
    let img = load_image(&a.image)?;
    let pre = precompute_for(&model, &cfg.fit).stage(Stage::Fitting)?;
    let result = match &a.mask {
        None => run_pipeline(&img, &model, &pre, cfg, ctx.dump_dir.as_deref())?.fit,
        Some(mask_path) => {
            let mask = read_mask_for(mask_path, &img)?;
            let seg = img.masked(&mask)?;
            let enhanced = enhance_detail(&seg, &cfg.diffusion).stage(Stage::Enhancement)?;
            let init = init_from_mask(&mask, &model).stage(Stage::Initialization)?;
            fit(&enhanced, &init, &model, &pre, &cfg.fit).stage(Stage::Fitting)?
        }
    };
    match &a.out {
        Some(p) => result.landmarks.save(p)?,
        None => print!("{}", result.landmarks.to_text()),
    }
    if let Some(p) = &a.dump_frontal {
        let frontal = synthesize_frontal(&img, &result.landmarks, &model).stage(Stage::Frontalization)?;
        io::write_image(&frontal, p)?;
    }
    if !result.converged {
        log::warn!("fit did not converge");
    }
    println!("e_icaam {:.6e}", result.e_icaam);
    println!("iterations {}", result.iterations);
    println!("converged {}", result.converged);
    Ok(())
}

fn vesselness(a: VesselnessArgs, cfg: &mut PipelineConfig) -> Result<()> {
    let v = &mut cfg.vesselness;
    if let Some(x) = a.s_min {
        v.s_min = x;
    }
    if let Some(x) = a.s_max {
        v.s_max = x;
    }
    if let Some(x) = a.s_step {
        v.s_step = x;
    }
    if let Some(x) = a.beta {
        v.beta = x;
    }
    match a.c {
        Some(CValue::Auto) => v.c_struct = None,
        Some(CValue::Fixed(c)) => v.c_struct = Some(c),
        None => {}
    }
    if let Some(m) = a.mode {
        v.formula_mode = match m {
            VesselMode::Frangi => FormulaMode::Frangi,
            VesselMode::Paper => FormulaMode::Paper,
        };
    }
    v.validate()?;
    let img = load_image(&a.image)?;
    let map = match &a.mask {
        Some(p) => extract_signature(&img, &read_mask_for(p, &img)?, v),
        None => vesselness_multiscale(&img, v),
    }
    .stage(Stage::Vesselness)?;
    io::write_pgm16(&map.image, &a.out)?;
    write_json(
        &sidecar(&a.out),
        &json!({ "config_hash": map.config_hash, "scales": map.scales, "width": map.image.width(), "height": map.image.height() }),
    )
}

/// Signatures of `items` (path, subject), computed in parallel, in order.
fn signatures(
    items: &[(PathBuf, String)],
    model: &Model,
    pre: &Precomputed,
    cfg: &PipelineConfig,
    ctx: &Ctx,
) -> Result<Vec<Signature>> {
    items
        .par_iter()
        .map(|(path, subject)| {
            let id = manifest::stem(path);
            let img = load_image(path)?;
            let dump = ctx.dump_dir.as_ref().map(|d| d.join(&id));
            let out = run_pipeline(&img, model, pre, cfg, dump.as_deref()).with_context(|| path.display().to_string())?;
            if !out.fit.converged {
                log::warn!("{}: fit did not converge", path.display());
            }
            Ok(out.into_signature(subject.clone(), id))
        })
        .collect()
}

fn labelled(entries: Vec<manifest::Entry>) -> Vec<(PathBuf, String)> {
    entries.into_iter().map(|e| (e.path, e.fields[0].clone())).collect()
}

fn enroll(a: EnrollArgs, cfg: &PipelineConfig, ctx: &Ctx) -> Result<()> {
    cfg.validate()?;
    let items = match (&a.manifest, &a.subject) {
        (Some(m), _) => labelled(manifest::read(m, 1, "`image subject`")?),
        (None, Some(s)) => a.images.iter().map(|p| (p.clone(), s.clone())).collect(),
        (None, None) => bail!("pass --subject with images, or --manifest"),
    };
    let model = load_model(&a.paths.model, cfg)?;
    let dir = gallery_path(&a.paths.gallery, cfg)?;
    let mut gallery = if dir.join("gallery.json").exists() {
        Gallery::load(&dir).with_context(|| format!("loading gallery {}", dir.display()))?
    } else {
        let mut g = Gallery::new(cfg.hash());
        g.model = a.paths.model.as_ref().or(cfg.model_path.as_ref()).map(|p| p.display().to_string());
        g
    };
    if gallery.config_hash != cfg.hash() {
        bail!("gallery {} was built with config {}, current config is {}", dir.display(), gallery.config_hash, cfg.hash());
    }
    let pre = precompute_for(&model, &cfg.fit).stage(Stage::Fitting)?;
    for sig in signatures(&items, &model, &pre, cfg, ctx)? {
        gallery.enroll(sig)?;
    }
    gallery.save(&dir)?;
    println!("gallery {}: {} enrollments, {} subjects", dir.display(), gallery.len(), gallery.subjects().len());
    Ok(())
}

fn load_gallery(arg: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<Gallery> {
    let dir = gallery_path(arg, cfg)?;
    Gallery::load(&dir).with_context(|| format!("loading gallery {}", dir.display()))
}

fn identify_one(a: IdentifyArgs, cfg: &PipelineConfig, ctx: &Ctx) -> Result<()> {
    cfg.validate()?;
    let model = load_model(&a.paths.model, cfg)?;
    let gallery = load_gallery(&a.paths.gallery, cfg)?;
    let pre = precompute_for(&model, &cfg.fit).stage(Stage::Fitting)?;
    let probe = signatures(&[(a.image.clone(), String::new())], &model, &pre, cfg, ctx)?.remove(0);
    let r = identify(&gallery, &probe).stage(Stage::Matching)?;
    println!("rank\tsubject\trho");
    for (i, (s, rho)) in r.ranked.iter().take(a.top.unwrap_or(usize::MAX)).enumerate() {
        println!("{}\t{s}\t{rho:.6}", i + 1);
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs, cfg: &PipelineConfig, ctx: &Ctx) -> Result<()> {
    cfg.validate()?;
    let (csv, log_csv) = match &a.probes {
        Some(list) => {
            let items = labelled(manifest::read(list, 1, "`image subject`")?);
            let model = load_model(&a.paths.model, cfg)?;
            let gallery = load_gallery(&a.paths.gallery, cfg)?;
            let pre = precompute_for(&model, &cfg.fit).stage(Stage::Fitting)?;
            let probes = signatures(&items, &model, &pre, cfg, ctx)?;
            let results: Vec<MatchResult> =
                probes.iter().map(|p| identify(&gallery, p)).collect::<thermoface::Result<_>>().stage(Stage::Matching)?;
            let curve = cmc_from_results(&results, gallery.subjects().len()).stage(Stage::Matching)?;
            let mut log = String::from("subject,image,converged,e_icaam,rank,top,margin\n");
            for (p, r) in probes.iter().zip(&results) {
                log.push_str(&format!(
                    "{},{},{},{:.6e},{},{},{:.6}\n",
                    p.subject_id,
                    p.image_id,
                    p.converged.unwrap_or(false),
                    p.fit_error.unwrap_or(f64::NAN),
                    r.correct_rank.unwrap_or(0),
                    r.ranked[0].0,
                    r.margin()
                ));
            }
            (cmc_csv(&curve), log)
        }
        None => {
            let ec = harness_config(a.subjects, a.poses, ctx);
            let model = match (&a.paths.model, &cfg.model_path) {
                (None, None) => train_toy_aam(&ec.toy, &ec.render, cfg).stage(Stage::Training)?,
                _ => load_model(&a.paths.model, cfg)?,
            };
            let report = evaluate_synthetic(&model, cfg, &ec)?;
            (report.cmc_csv(), report.probe_log_csv())
        }
    };
    if let Some(p) = &a.log {
        std::fs::write(p, log_csv).with_context(|| format!("writing {}", p.display()))?;
    }
    match &a.out {
        Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn harness_config(subjects: usize, poses: usize, ctx: &Ctx) -> EvaluationConfig {
    let mut ec = EvaluationConfig { subjects, poses_per_subject: poses, ..Default::default() };
    if let Some(s) = ctx.seed {
        ec.seed = s;
    }
    ec
}

fn synth(a: SynthArgs, cfg: &PipelineConfig, ctx: &Ctx) -> Result<()> {
    cfg.validate()?;
    if a.subjects == 0 || a.poses == 0 {
        bail!("--subjects and --poses must be positive");
    }
    let ec = harness_config(a.subjects, a.poses, ctx);
    for sub in ["images", "landmarks"] {
        std::fs::create_dir_all(a.out.join(sub)).with_context(|| format!("creating {}", a.out.display()))?;
    }
    let model = match &a.model {
        Some(p) => load_model(&Some(p.clone()), cfg)?,
        None => {
            let m: Model = train_toy_aam(&ec.toy, &ec.render, cfg).stage(Stage::Training)?;
            m.save(a.out.join("model.json"))?;
            m
        }
    };
    std::fs::write(a.out.join("points.txt"), face_template().1.to_text())?;
    let jobs: Vec<(usize, usize)> = (0..a.subjects).flat_map(|s| (0..a.poses).map(move |k| (s, k))).collect();
    let names: Vec<String> = jobs
        .par_iter()
        .map(|&(s, k)| {
            let name = format!("s{s:02}_p{k}");
            let (img, lm): (Image, _) = harness_image(&model, &ec, s, k)?;
            io::write_pgm16(&img, a.out.join("images").join(format!("{name}.pgm")))?;
            lm.save(a.out.join("landmarks").join(format!("{name}.txt")))?;
            Ok(name)
        })
        .collect::<Result<_>>()?;
    let (mut train, mut enroll, mut probes) = (String::new(), String::new(), String::new());
    for (name, &(s, k)) in names.iter().zip(&jobs) {
        train.push_str(&format!("images/{name}.pgm landmarks/{name}.txt\n"));
        let line = format!("images/{name}.pgm s{s:02}\n");
        if k == 0 {
            enroll.push_str(&line)
        } else {
            probes.push_str(&line)
        }
    }
    std::fs::write(a.out.join("train.txt"), train)?;
    std::fs::write(a.out.join("enroll.txt"), enroll)?;
    std::fs::write(a.out.join("probes.txt"), probes)?;
    println!("{} images in {}", names.len(), a.out.display());
    Ok(())
}
