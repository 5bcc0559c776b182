//! `scenekit`: synth, assemble, render, css-fit and evaluate.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use scenekit_core::depth::eval_depth;
use scenekit_core::gaussians::{CanonMode, Frame, GaussianSet};
use scenekit_core::io::bundle::{read_bundle, write_bundle};
use scenekit_core::io::npy::{self, NpyArray};
use scenekit_core::io::ply::{export_gaussians_ply, read_gaussians_ply};
use scenekit_core::io::scene::{object_file, read_scene, write_scene, OBJECTS_DIR, SCENE_FILE};
use scenekit_core::objectives::{combine, TaskLosses};
use scenekit_core::pipeline::{assemble, evaluate_scene, AssembleConfig, EvalConfig, Prediction, TOP_K};
use scenekit_core::pose::RansacConfig;
use scenekit_core::render::{
    canonical_views_with_fov, css_fit, psnr, random_init, render, CanonicalViewSet, CssSupervision, FitConfig, Image,
    LearningRates, RenderOptions,
};
use scenekit_core::semantics::CrfConfig;
use scenekit_core::synth::{
    apply_noise, canonical_gt_renders, generate_scene, raycast, read_ground_truth, write_ground_truth, GroundTruth,
    NoiseConfig, PrimitiveObject, SceneConfig, Shape, GT_DIR,
};
use scenekit_core::{Error, Sim3, Vec3};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const PRED_INSTANCE_FILE: &str = "instance_mask.npy";
const PRED_TOP5_FILE: &str = "semantic_top5.npy";
const PRED_DEPTH_FILE: &str = "depth.npy";

#[derive(Parser)]
#[command(name = "scenekit", version, about = "Object-centric scene assembly from dense per-pixel maps")]
struct Cli {
    /// Worker threads; 0 lets the runtime decide. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ray-cast scene: a prediction bundle plus ground truth in `<out>/gt`.
    Synth(SynthArgs),
    /// Discover instances, estimate poses and export canonical Gaussians.
    Assemble(AssembleArgs),
    /// Render a canonical Gaussian PLY from a ring of views around the unit cube.
    Render(RenderArgs),
    /// Fit canonical Gaussians to multi-view renders of an analytic primitive.
    CssFit(CssFitArgs),
    /// Score an assembled scene, a depth map pair, or a set of task losses.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Number of objects [paper-unspecified]
    #[arg(long, default_value_t = 5)]
    objects: usize,
    /// Top-level seed; every random stream derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image width, pixels [paper-unspecified]
    #[arg(long, default_value_t = 128)]
    width: usize,
    /// Image height, pixels [paper-unspecified]
    #[arg(long, default_value_t = 128)]
    height: usize,
    /// Horizontal field of view, degrees [paper-unspecified]
    #[arg(long, default_value_t = 40.0)]
    fov: f64,
    /// Relative sigma of multiplicative depth noise [paper-unspecified]
    #[arg(long, default_value_t = 0.0)]
    noise_depth: f64,
    /// Sigma of additive NOCS noise [paper-unspecified]
    #[arg(long, default_value_t = 0.0)]
    noise_nocs: f64,
    /// Embedding rotation angle, radians [paper-unspecified]
    #[arg(long, default_value_t = 0.0)]
    noise_embedding: f64,
    /// Fraction of pixels with a flipped embedding [paper-unspecified]
    #[arg(long, default_value_t = 0.0)]
    label_flip: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CanonArg {
    MeansOnly,
    FullSim3,
}

#[derive(Args)]
struct AssembleArgs {
    /// Input bundle directory
    #[arg(long)]
    bundle: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Mean-field iterations [paper-unspecified]
    #[arg(long, default_value_t = scenekit_core::semantics::DEFAULT_ITERATIONS)]
    crf_iters: usize,
    /// Softmax temperature of the unaries [paper-unspecified]
    #[arg(long, default_value_t = scenekit_core::semantics::DEFAULT_TAU)]
    tau: f64,
    /// Weight of the pairwise term [paper-unspecified]
    #[arg(long, default_value_t = scenekit_core::semantics::DEFAULT_PAIRWISE_WEIGHT)]
    pairwise_weight: f64,
    /// Window half-width above the exact-CRF pixel limit [paper-unspecified]
    #[arg(long, default_value_t = scenekit_core::semantics::DEFAULT_WINDOW)]
    window: usize,
    /// Smallest connected component kept as a candidate [paper-unspecified]
    #[arg(long, default_value_t = scenekit_core::semantics::DEFAULT_MIN_PIXELS)]
    min_pixels: usize,
    /// RANSAC inlier distance, meters [paper-unspecified]
    #[arg(long, default_value_t = RansacConfig::default().threshold)]
    ransac_threshold: f64,
    /// Inliers needed to emit an instance [paper-unspecified]
    #[arg(long, default_value_t = RansacConfig::default().min_inliers)]
    min_inliers: usize,
    /// Hypothesis cap per RANSAC run [paper-unspecified]
    #[arg(long, default_value_t = RansacConfig::default().max_iterations)]
    max_iterations: usize,
    /// RANSAC stopping confidence [paper-unspecified]
    #[arg(long, default_value_t = RansacConfig::default().confidence)]
    confidence: f64,
    /// How Gaussians are moved to the canonical frame [paper-unspecified]
    #[arg(long, value_enum, default_value_t = CanonArg::MeansOnly)]
    canon: CanonArg,
    /// Top-level seed; every random stream derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ViewArgs {
    /// View rig: `icosphere<N>` (N = 10*4^L + 2) or `fibonacci<N>`
    #[arg(long, default_value = "icosphere42")]
    views: String,
    /// Square render size, pixels
    #[arg(long, default_value_t = 512)]
    resolution: usize,
    /// Camera distance from the cube center [paper-unspecified]
    #[arg(long, default_value_t = scenekit_core::render::DEFAULT_RADIUS)]
    radius: f64,
    /// Field of view, degrees [paper-unspecified]
    #[arg(long, default_value_t = scenekit_core::render::DEFAULT_FOV_DEG)]
    fov: f64,
    /// `white`, `black` or `r,g,b` in [0, 1] [paper-unspecified]
    #[arg(long, default_value = "white")]
    bg: String,
    /// Splat truncation in standard deviations; 0 disables it [paper-unspecified]
    #[arg(long, default_value_t = 3.5)]
    cutoff: f64,
}

#[derive(Args)]
struct RenderArgs {
    /// Canonical-frame Gaussian PLY
    #[arg(long)]
    ply: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    view: ViewArgs,
    /// Also write f32 `view_NNN.npy` arrays
    #[arg(long)]
    npy: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ShapeArg {
    Box,
    Sphere,
    Cylinder,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Box => Shape::Box,
            ShapeArg::Sphere => Shape::Sphere,
            ShapeArg::Cylinder => Shape::Cylinder,
        }
    }
}

#[derive(Args)]
struct CssFitArgs {
    /// Target primitive, rendered analytically in its canonical frame
    #[arg(long, value_enum)]
    shape: ShapeArg,
    /// Base color of sphere and cylinder targets, `r,g,b` [paper-unspecified]
    #[arg(long, default_value = "0.8,0.4,0.2")]
    color: String,
    /// Starting Gaussians; random when absent
    #[arg(long)]
    init: Option<PathBuf>,
    /// Random Gaussians when no `--init` is given [paper-unspecified]
    #[arg(long, default_value_t = 500)]
    count: usize,
    /// Initial standard deviation of random Gaussians [paper-unspecified]
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    view: ViewArgs,
    /// Optimizer steps [paper-unspecified]
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Views per step; 0 uses all views with step rejection [paper-unspecified]
    #[arg(long, default_value_t = 4)]
    batch_views: usize,
    /// Weight of the SSIM term [paper-unspecified]
    #[arg(long, default_value_t = scenekit_core::render::DEFAULT_LAMBDA_SSIM)]
    lambda_ssim: f64,
    /// Top-level seed; every random stream derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Task {
    Scene,
    Depth,
    Losses,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum, default_value_t = Task::Scene)]
    task: Task,
    /// Directory written by `assemble` (task scene)
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Ground-truth directory, e.g. `<synth out>/gt` (task scene)
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Predicted depth `.npy` (task depth)
    #[arg(long)]
    pred_depth: Option<PathBuf>,
    /// Ground-truth depth `.npy` (task depth)
    #[arg(long)]
    gt_depth: Option<PathBuf>,
    /// JSON with `losses` (five task values or a name-keyed object) and `log_vars` (task losses)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Report path; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// F-1 distance threshold, canonical units [paper-unspecified frame]
    #[arg(long, default_value_t = scenekit_core::eval3d::DEFAULT_F1_THRESHOLD)]
    f1_threshold: f64,
    /// Gaussians below this opacity are dropped from the predicted cloud [paper-unspecified]
    #[arg(long, default_value_t = EvalConfig::default().min_opacity)]
    min_opacity: f64,
    /// Surface samples of each ground-truth shape [paper-unspecified]
    #[arg(long, default_value_t = EvalConfig::default().surface_samples)]
    surface_samples: usize,
    /// Mask IoU needed for a match [paper-unspecified]
    #[arg(long, default_value_t = EvalConfig::default().min_iou)]
    min_iou: f64,
    /// Top-level seed; every random stream derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn provenance<C: Serialize>(command: &str, seed: u64, config: &C) -> anyhow::Result<serde_json::Value> {
    let config = serde_json::to_value(config)?;
    let hash = Sha256::digest(serde_json::to_vec(&config)?);
    Ok(serde_json::json!({
        "tool": "scenekit",
        "version": VERSION,
        "command": command,
        "seed": seed,
        "config_hash": hex::encode(hash),
        "config": config,
    }))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parse_rgb(s: &str) -> anyhow::Result<Vec3> {
    match s {
        "white" => return Ok(Vec3::repeat(1.0)),
        "black" => return Ok(Vec3::zeros()),
        _ => {}
    }
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| input_error(format!("cannot parse color {s:?}")))?;
    if parts.len() != 3 || parts.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(input_error(format!("color {s:?} needs three components in [0, 1]")));
    }
    Ok(Vec3::new(parts[0], parts[1], parts[2]))
}

fn input_error(msg: String) -> anyhow::Error {
    anyhow!(Error::Domain(msg))
}

fn view_rig(v: &ViewArgs) -> anyhow::Result<CanonicalViewSet> {
    let count = v
        .views
        .strip_prefix("icosphere")
        .or_else(|| v.views.strip_prefix("fibonacci"))
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| input_error(format!("unknown view rig {:?}", v.views)))?;
    let is_ico = v.views.starts_with("icosphere");
    let valid_ico = (0..8).any(|l| 10 * 4usize.pow(l) + 2 == count);
    if is_ico && !valid_ico {
        return Err(input_error(format!("icosphere rigs have 10*4^L + 2 views, not {count}")));
    }
    if !is_ico && valid_ico {
        return Err(input_error(format!("{count} views is an icosphere count; use icosphere{count}")));
    }
    let bg = parse_rgb(&v.bg)?;
    let mut rig = canonical_views_with_fov(count, v.resolution, v.radius, v.fov)?;
    for t in &mut rig.targets {
        t.background = bg;
    }
    Ok(rig)
}

fn render_options(cutoff: f64) -> anyhow::Result<RenderOptions> {
    if !(cutoff >= 0.0 && cutoff.is_finite()) {
        return Err(input_error(format!("cutoff must be finite and nonnegative, got {cutoff}")));
    }
    Ok(RenderOptions {
        cutoff: (cutoff > 0.0).then_some(cutoff),
    })
}

fn write_png(path: &Path, image: &Image) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), image.width as u32, image.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header()?;
    w.write_image_data(&image.to_rgb8())?;
    w.finish()?;
    Ok(())
}

fn image_npy(image: &Image) -> NpyArray {
    NpyArray::f32(
        vec![image.height, image.width, 3],
        image.data.iter().map(|&v| v as f32).collect(),
    )
}

fn read_canonical_ply(path: &Path) -> anyhow::Result<GaussianSet> {
    let set = read_gaussians_ply(path)?;
    if set.frame != Frame::Canonical {
        return Err(input_error(format!("{}: expected canonical-frame Gaussians", path.display())));
    }
    Ok(set)
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let scene_cfg = SceneConfig {
        objects: a.objects,
        seed: a.seed,
        width: a.width,
        height: a.height,
        fov_deg: a.fov,
        ..SceneConfig::default()
    };
    let noise = NoiseConfig {
        depth_sigma: a.noise_depth,
        nocs_sigma: a.noise_nocs,
        embedding_angle: a.noise_embedding,
        label_flip: a.label_flip,
    };
    noise.validate()?;
    let scene = generate_scene(&scene_cfg)?;
    let frame = raycast(&scene)?;
    let mut maps = frame.dense_maps(&scene.vocab)?;
    apply_noise(&mut maps, &frame, &noise, a.seed)?;
    #[derive(Serialize)]
    struct Config {
        scene: SceneConfig,
        noise: NoiseConfig,
    }
    maps.provenance = Some(provenance(
        "synth",
        a.seed,
        &Config {
            scene: scene_cfg,
            noise,
        },
    )?);
    create_dir(&a.out)?;
    write_bundle(&maps, &a.out)?;
    write_ground_truth(&a.out.join(GT_DIR), &GroundTruth::new(&scene, &frame)?)?;
    eprintln!("synth: {} objects -> {}", scene.objects.len(), a.out.display());
    Ok(())
}

fn cmd_assemble(a: &AssembleArgs) -> anyhow::Result<()> {
    let cfg = AssembleConfig {
        tau: a.tau,
        crf: CrfConfig {
            iterations: a.crf_iters,
            pairwise_weight: a.pairwise_weight,
            window: a.window,
        },
        min_pixels: a.min_pixels,
        ransac: RansacConfig {
            threshold: a.ransac_threshold,
            max_iterations: a.max_iterations,
            confidence: a.confidence,
            min_inliers: a.min_inliers,
            seed: a.seed,
        },
        canon_mode: match a.canon {
            CanonArg::MeansOnly => CanonMode::MeansOnly,
            CanonArg::FullSim3 => CanonMode::FullSim3,
        },
        seed: a.seed,
    };
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(input_error(format!("tau must be positive, got {}", cfg.tau)));
    }
    let maps = read_bundle(&a.bundle)?;
    let prov = provenance("assemble", a.seed, &cfg)?;
    let mut out = assemble(&maps, &cfg)?;
    out.scene.provenance = Some(prov.clone());

    create_dir(&a.out.join(OBJECTS_DIR))?;
    write_scene(&out.scene, &a.out.join(SCENE_FILE))?;
    let comments = [format!("scenekit {VERSION} config_hash {}", prov["config_hash"].as_str().unwrap_or(""))];
    for (i, set) in out.objects.iter().enumerate() {
        export_gaussians_ply(set, &a.out.join(OBJECTS_DIR).join(object_file(i)), &comments)?;
    }
    let (h, w) = (maps.height, maps.width);
    npy::write(&a.out.join(PRED_INSTANCE_FILE), &NpyArray::u16(vec![h, w], out.instance_mask.clone()))?;
    npy::write(&a.out.join(PRED_TOP5_FILE), &NpyArray::u16(vec![h, w, TOP_K], out.semantic_top5.clone()))?;
    let depth: Vec<f32> = maps.metric_depth()?.iter().map(|&d| d as f32).collect();
    npy::write(&a.out.join(PRED_DEPTH_FILE), &NpyArray::f32(vec![h, w], depth))?;
    eprintln!("assemble: {} instances -> {}", out.scene.instances.len(), a.out.display());
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> anyhow::Result<()> {
    let set = read_canonical_ply(&a.ply)?;
    let rig = view_rig(&a.view)?;
    let opts = render_options(a.view.cutoff)?;
    create_dir(&a.out)?;
    let mut views = Vec::new();
    for (i, t) in rig.targets.iter().enumerate() {
        let img = render(&set.gaussians, t, &opts)?;
        let name = format!("view_{i:03}");
        write_png(&a.out.join(format!("{name}.png")), &img)?;
        if a.npy {
            npy::write(&a.out.join(format!("{name}.npy")), &image_npy(&img))?;
        }
        let d = rig.directions[i];
        views.push(serde_json::json!({ "file": format!("{name}.png"), "direction": [d.x, d.y, d.z] }));
    }
    #[derive(Serialize)]
    struct Config<'a> {
        views: &'a str,
        resolution: usize,
        radius: f64,
        fov: f64,
        bg: &'a str,
        cutoff: f64,
        npy: bool,
    }
    let cfg = Config {
        views: &a.view.views,
        resolution: a.view.resolution,
        radius: a.view.radius,
        fov: a.view.fov,
        bg: &a.view.bg,
        cutoff: a.view.cutoff,
        npy: a.npy,
    };
    let manifest = serde_json::json!({
        "provenance": provenance("render", 0, &cfg)?,
        "gaussians": set.len(),
        "views": views,
    });
    write_json(&a.out.join("render.json"), &manifest)?;
    eprintln!("render: {} views -> {}", rig.len(), a.out.display());
    Ok(())
}

fn mean_psnr(set: &GaussianSet, sup: &CssSupervision, opts: &RenderOptions) -> anyhow::Result<f64> {
    let mut sum = 0.0;
    for (t, gt) in sup.views.targets.iter().zip(&sup.images) {
        sum += psnr(&render(&set.gaussians, t, opts)?, gt)?;
    }
    Ok(sum / sup.len() as f64)
}

fn cmd_css_fit(a: &CssFitArgs) -> anyhow::Result<()> {
    let rig = view_rig(&a.view)?;
    let color = parse_rgb(&a.color)?;
    let target = PrimitiveObject {
        shape: a.shape.into(),
        class: 0,
        pose: Sim3::identity(),
        color: [color.x, color.y, color.z],
    };
    let images = canonical_gt_renders(Some(&target), &rig);
    let sup = CssSupervision::new(rig, images)?;
    let init = match &a.init {
        Some(p) => read_canonical_ply(p)?,
        None => random_init(a.count, a.sigma, a.seed)?,
    };
    let opts = render_options(a.view.cutoff)?;
    let cfg = FitConfig {
        steps: a.steps,
        lr: LearningRates::default(),
        lambda_ssim: a.lambda_ssim,
        cutoff: opts.cutoff,
        batch_views: (a.batch_views > 0).then_some(a.batch_views),
        seed: a.seed,
        ..FitConfig::default()
    };
    #[derive(Serialize)]
    struct Config<'a> {
        fit: FitConfig,
        shape: ShapeArg,
        color: [f64; 3],
        init: &'a str,
        count: usize,
        sigma: f64,
        views: &'a str,
        resolution: usize,
        radius: f64,
        fov: f64,
        bg: &'a str,
    }
    let prov = provenance(
        "css-fit",
        a.seed,
        &Config {
            fit: cfg,
            shape: a.shape,
            color: target.color,
            init: if a.init.is_some() { "ply" } else { "random" },
            count: a.count,
            sigma: a.sigma,
            views: &a.view.views,
            resolution: a.view.resolution,
            radius: a.view.radius,
            fov: a.view.fov,
            bg: &a.view.bg,
        },
    )?;
    let before = mean_psnr(&init, &sup, &opts)?;
    let (fit, trace) = css_fit(&init, &sup, &cfg)?;
    let after = mean_psnr(&fit, &sup, &opts)?;

    create_dir(&a.out)?;
    let comments = [format!("scenekit {VERSION} config_hash {}", prov["config_hash"].as_str().unwrap_or(""))];
    export_gaussians_ply(&fit, &a.out.join("fitted.ply"), &comments)?;
    let report = serde_json::json!({
        "provenance": prov,
        "psnr_before": before,
        "psnr_after": after,
        "trace": trace,
    });
    write_json(&a.out.join("fit.json"), &report)?;
    eprintln!("css-fit: PSNR {before:.2} -> {after:.2} dB");
    Ok(())
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a PathBuf> {
    v.as_ref().ok_or_else(|| input_error(format!("--{flag} is required for this task")))
}

fn emit(out: &Option<PathBuf>, report: &serde_json::Value) -> anyhow::Result<()> {
    match out {
        Some(p) => write_json(p, report),
        None => {
            use std::io::Write;
            let text = serde_json::to_string_pretty(report)?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn read_f64_npy(path: &Path) -> anyhow::Result<(Vec<usize>, Vec<f64>)> {
    let a = npy::read(path)?;
    let data = a.to_f64();
    Ok((a.shape, data))
}

fn read_prediction(dir: &Path) -> anyhow::Result<Prediction> {
    let scene = read_scene(&dir.join(SCENE_FILE))?;
    let objects = scene
        .instances
        .iter()
        .map(|inst| read_gaussians_ply(&dir.join(&inst.gaussians)))
        .collect::<Result<Vec<_>, _>>()?;
    let path = dir.join(PRED_INSTANCE_FILE);
    let instance_mask = npy::read(&path)?.into_u16(&path)?;
    let path = dir.join(PRED_TOP5_FILE);
    let semantic_top5 = npy::read(&path)?.into_u16(&path)?;
    let (_, depth) = read_f64_npy(&dir.join(PRED_DEPTH_FILE))?;
    Ok(Prediction {
        scene,
        objects,
        instance_mask,
        semantic_top5,
        depth,
    })
}

fn depth_table(r: &scenekit_core::depth::DepthEvalReport) -> String {
    let rows = [
        ("delta1", r.delta1),
        ("delta2", r.delta2),
        ("delta3", r.delta3),
        ("abs_rel", r.abs_rel),
        ("log10", r.log10),
        ("rmse", r.rmse),
        ("rmse_log", r.rmse_log),
        ("silog", r.silog),
    ];
    rows.iter().map(|(k, v)| format!("{k:<10}{v:>14.6}\n")).collect()
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    match a.task {
        Task::Scene => {
            let cfg = EvalConfig {
                f1_threshold: a.f1_threshold,
                min_opacity: a.min_opacity,
                surface_samples: a.surface_samples,
                min_iou: a.min_iou,
                seed: a.seed,
            };
            let pred = read_prediction(require(&a.bundle, "bundle")?)?;
            let gt = read_ground_truth(require(&a.gt, "gt")?)?;
            let report = evaluate_scene(&pred, &gt, &cfg)?;
            emit(
                &a.out,
                &serde_json::json!({ "provenance": provenance("evaluate", a.seed, &cfg)?, "report": report }),
            )
        }
        Task::Depth => {
            let (ps, pred) = read_f64_npy(require(&a.pred_depth, "pred-depth")?)?;
            let (gs, gt) = read_f64_npy(require(&a.gt_depth, "gt-depth")?)?;
            if ps != gs {
                return Err(anyhow!(Error::ShapeMismatch {
                    what: "depth maps".into(),
                    expected: format!("{gs:?}"),
                    found: format!("{ps:?}"),
                }));
            }
            let report = eval_depth(&pred, &gt, None)?;
            eprint!("{}", depth_table(&report));
            emit(
                &a.out,
                &serde_json::json!({ "provenance": provenance("evaluate-depth", a.seed, &())?, "report": report }),
            )
        }
        Task::Losses => {
            let path = require(&a.input, "input")?;
            let text = fs::read_to_string(path).map_err(|e| anyhow!(Error::Io { path: path.clone(), source: e }))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
                anyhow!(Error::Format {
                    path: path.clone(),
                    message: e.to_string()
                })
            })?;
            let bad = |m: &str| {
                anyhow!(Error::Format {
                    path: path.clone(),
                    message: m.into()
                })
            };
            let losses: Vec<f64> = match &v["losses"] {
                serde_json::Value::Array(_) => serde_json::from_value(v["losses"].clone()).map_err(|e| bad(&e.to_string()))?,
                serde_json::Value::Object(_) => {
                    let t: TaskLosses = serde_json::from_value(v["losses"].clone()).map_err(|e| bad(&e.to_string()))?;
                    t.to_array().to_vec()
                }
                _ => return Err(bad("missing `losses`")),
            };
            let log_vars: Vec<f64> = match v.get("log_vars") {
                Some(lv) => serde_json::from_value(lv.clone()).map_err(|e| bad(&e.to_string()))?,
                None => vec![0.0; losses.len()],
            };
            let combined = combine(&losses, &log_vars)?;
            emit(
                &a.out,
                &serde_json::json!({
                    "provenance": provenance("evaluate-losses", a.seed, &())?,
                    "losses": losses,
                    "log_vars": log_vars,
                    "total": combined.total,
                    "grad": combined.grad,
                }),
            )
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return e.exit_code() as u8;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

/// The error chain without causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Assemble(a) => cmd_assemble(a),
        Command::Render(a) => cmd_render(a),
        Command::CssFit(a) => cmd_css_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
