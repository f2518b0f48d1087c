//! Command-line surface of the pipeline.
//!
//! A scene directory holds:
//!
//! ```text
//! scene.txt
//! images/<view>.png        8-bit color
//! images/<view>.pfm        lossless matching intensity
//! cams/<view>_cam.txt
//! gt/<view>.pfm            ground-truth depth, 0 where nothing was hit
//! gt/<view>_boundary.png
//! gt/cloud.ply
//! depth/<view>.pfm         written by `depth`, half resolution
//! refined/<view>.*         written by `refine`
//! ```
//!
//! `<view>` is the zero-padded eight-digit view index.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::bimodal::collapse;
use crate::discontinuity::{EdgeMap, DEFAULT_BETA, DEFAULT_TAU_FRACTION};
use crate::eval::{cloud_metrics, depth_metrics, DEFAULT_BOUNDARY_LAPLACIAN, DEFAULT_ERROR_THRESHOLD, DEFAULT_OUTLIER_CAP};
use crate::fusion::{fuse, FusionConfig};
use crate::geometry::CalibratedView;
use crate::grid::{DepthMap, DepthRange, GroundTruth};
use crate::io::{self, bimodal_maps, CamFile};
use crate::losses::{total_loss, LossInputs, LossWeights};
use crate::patchmatch::{self, PatchMatchConfig};
use crate::refine::{self, init_parameters, trace_csv, upsample_depth, RefineConfig, RefineInit, RefineMode};
use crate::synth::{render_scene, SceneSpec, PLANE_SCENE, STEP_SCENE, TWO_PLANE_SCENE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Default percentage-metric threshold, in scene units.
pub const DEFAULT_PCT_THRESHOLD: f64 = 2.0;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser, Debug)]
#[command(name = "bimvs", version, about = "Multi-view stereo with bimodal depth refinement")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Suppress reports on stdout; `--report` files are still written.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene into a scene directory.
    Synth(SynthArgs),
    /// Run PatchMatch for every view.
    Depth(DepthArgs),
    /// Refine per-view depth into bimodal maps and edge maps.
    Refine(RefineArgs),
    /// Fuse per-view depth maps into a PLY cloud.
    Fuse(FuseArgs),
    /// Compare two point clouds.
    EvalCloud(EvalCloudArgs),
    /// Compare a depth map against ground truth.
    EvalDepth(EvalDepthArgs),
    /// Evaluate the training objective on refined outputs.
    Losses(LossesArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Builtin {
    TwoPlane,
    Step,
    Plane,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene spec file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    spec: Option<PathBuf>,
    /// One of the bundled scenes.
    #[arg(long)]
    builtin: Option<Builtin>,
    /// Overrides the texture seed of the spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DepthArgs {
    scene: PathBuf,
    /// Output directory, `<scene>/depth` by default.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, default_value_t = 2)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 8)]
    hypotheses: usize,
    /// Comma-separated view indices; every view by default.
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Supervised,
    SelfSupervised,
}

#[derive(Args, Debug)]
struct WeightArgs {
    #[arg(long, default_value_t = 4.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.25)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda3: f64,
}

impl WeightArgs {
    fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
        }
    }
}

#[derive(Args, Debug)]
struct RefineArgs {
    scene: PathBuf,
    /// Input depth directory, `<scene>/depth` by default.
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    /// Output directory, `<scene>/refined` by default.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "supervised")]
    mode: ModeArg,
    #[arg(long, default_value_t = 400)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    #[arg(long, default_value_t = 0.001)]
    final_step_size: f64,
    /// Discontinuity threshold in scene units; 0.005 of the depth span by default.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long, default_value_t = 0.01)]
    sigma_init: f64,
    #[arg(long, default_value_t = 0.02)]
    mu_offset_init: f64,
    #[arg(long, default_value_t = 25)]
    target_refresh: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 10.0)]
    photometric_weight: f64,
    #[arg(long, default_value_t = 1)]
    max_backtracks: usize,
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct FuseArgs {
    scene: PathBuf,
    /// Depth directory to fuse, `<scene>/refined` by default.
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    min_views: usize,
    #[arg(long, default_value_t = 1.0)]
    reproj_px: f64,
    #[arg(long, default_value_t = 0.01)]
    rel_depth: f64,
    #[arg(long, default_value_t = 0.3)]
    min_ncc: f64,
    #[arg(long, default_value_t = 5)]
    ncc_window: usize,
    /// Skip the NCC gate.
    #[arg(long)]
    no_photometric: bool,
}

#[derive(Args, Debug)]
struct EvalCloudArgs {
    recon: PathBuf,
    reference: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OUTLIER_CAP)]
    cap: f64,
    #[arg(long, default_value_t = DEFAULT_PCT_THRESHOLD)]
    threshold: f64,
    /// Key-value report file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalDepthArgs {
    estimate: PathBuf,
    gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ERROR_THRESHOLD)]
    error_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_LAPLACIAN)]
    boundary_threshold: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LossesArgs {
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    view: usize,
    /// Directory with the refined maps, `<scene>/refined` by default.
    #[arg(long)]
    refined_dir: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(out) => {
            if !cli.quiet {
                print!("{out}");
            }
            EXIT_OK
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command) -> CliResult<String> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Depth(a) => depth(a),
        Command::Refine(a) => refine_cmd(a),
        Command::Fuse(a) => fuse_cmd(a),
        Command::EvalCloud(a) => eval_cloud(a),
        Command::EvalDepth(a) => eval_depth(a),
        Command::Losses(a) => losses(a),
    }
}

pub fn view_stem(i: usize) -> String {
    format!("{i:08}")
}

fn mkdir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs) -> CliResult<String> {
    let text = match (a.builtin, &a.spec) {
        (Some(Builtin::TwoPlane), _) => TWO_PLANE_SCENE.to_string(),
        (Some(Builtin::Step), _) => STEP_SCENE.to_string(),
        (Some(Builtin::Plane), _) => PLANE_SCENE.to_string(),
        (None, Some(p)) => fs::read_to_string(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        (None, None) => return Err(usage("either --spec or --builtin is required")),
    };
    let mut spec = SceneSpec::parse(&text).map_err(data)?;
    if let Some(seed) = a.seed {
        spec.texture_seed = seed;
    }
    let scene = render_scene(&spec).map_err(data)?;
    let out = &a.out;
    for sub in ["images", "cams", "gt"] {
        mkdir(&out.join(sub))?;
    }
    write_text(&out.join("scene.txt"), &spec.to_text())?;
    for (i, view) in scene.views.iter().enumerate() {
        let stem = view_stem(i);
        io::write_png(&out.join("images").join(format!("{stem}.png")), &view.image).map_err(data)?;
        io::write_pfm(&out.join("images").join(format!("{stem}.pfm")), &view.intensity).map_err(data)?;
        io::write_cam(&out.join("cams").join(format!("{stem}_cam.txt")), &CamFile::from_view(view)).map_err(data)?;
        let gt = &scene.gt_depths[i];
        io::write_depth_pfm(&out.join("gt").join(format!("{stem}.pfm")), &gt.as_depth_map(view.range())).map_err(data)?;
        let mask = scene.gt_boundaries[i].map(|b| if *b { 1.0 } else { 0.0 });
        io::write_png_gray(&out.join("gt").join(format!("{stem}_boundary.png")), &mask).map_err(data)?;
    }
    io::write_ply(&out.join("gt").join("cloud.ply"), &scene.gt_cloud).map_err(data)?;
    Ok(format!("wrote {} views to {}\n", scene.views.len(), out.display()))
}

/// Every view of a scene directory, with its lossless intensity when present.
pub fn load_views(scene: &Path) -> Result<Vec<CalibratedView>, String> {
    let mut views = Vec::new();
    loop {
        let stem = view_stem(views.len());
        let cam_path = scene.join("cams").join(format!("{stem}_cam.txt"));
        if !cam_path.exists() {
            break;
        }
        let cam = io::read_cam(&cam_path).map_err(|e| e.to_string())?;
        let image = io::read_png(&scene.join("images").join(format!("{stem}.png"))).map_err(|e| e.to_string())?;
        let mut view = cam.to_view(image).map_err(|e| format!("{}: {e}", cam_path.display()))?;
        let intensity_path = scene.join("images").join(format!("{stem}.pfm"));
        if intensity_path.exists() {
            let intensity = io::read_pfm(&intensity_path).map_err(|e| e.to_string())?;
            view = view.with_intensity(intensity).map_err(|e| format!("{}: {e}", intensity_path.display()))?;
        }
        views.push(view);
    }
    if views.is_empty() {
        return Err(format!("{}: no cameras found under cams/", scene.display()));
    }
    Ok(views)
}

fn selected(views: &Option<Vec<usize>>, count: usize) -> CliResult<Vec<usize>> {
    match views {
        None => Ok((0..count).collect()),
        Some(v) => {
            if let Some(bad) = v.iter().find(|i| **i >= count) {
                return Err(usage(format!("view {bad} out of range, the scene has {count}")));
            }
            Ok(v.clone())
        }
    }
}

fn others(views: &[CalibratedView], i: usize) -> Vec<CalibratedView> {
    views.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.clone()).collect()
}

fn depth(a: DepthArgs) -> CliResult<String> {
    let config = PatchMatchConfig {
        levels: a.levels,
        iterations_per_level: a.iterations,
        window: a.window,
        hypotheses_per_pixel: a.hypotheses,
        rng_seed: a.seed,
    };
    config.validate().map_err(usage)?;
    let views = load_views(&a.scene).map_err(Failure::Data)?;
    let ids = selected(&a.views, views.len())?;
    let out = a.out.unwrap_or_else(|| a.scene.join("depth"));
    mkdir(&out)?;
    let maps = ids
        .par_iter()
        .map(|&i| patchmatch::run(&views[i], &others(&views, i), &config))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data)?;
    for (i, map) in ids.iter().zip(&maps) {
        io::write_depth_pfm(&out.join(format!("{}.pfm", view_stem(*i))), map).map_err(data)?;
    }
    Ok(format!("wrote {} depth maps to {}\n", maps.len(), out.display()))
}

/// Full-resolution starting depth: half-resolution maps are upsampled with
/// the view's image as guide.
fn full_resolution(map: DepthMap, view: &CalibratedView) -> CliResult<DepthMap> {
    if map.dims() == (view.width(), view.height()) {
        Ok(map)
    } else {
        upsample_depth(&map, &view.image).map_err(data)
    }
}

fn read_gt(scene: &Path, i: usize, range: DepthRange) -> CliResult<GroundTruth> {
    let m = io::read_depth_pfm(&scene.join("gt").join(format!("{}.pfm", view_stem(i))), range).map_err(data)?;
    Ok(GroundTruth::new(m.depth, m.valid))
}

fn refine_cmd(a: RefineArgs) -> CliResult<String> {
    let config = RefineConfig {
        steps: a.steps,
        step_size: a.step_size,
        final_step_size: a.final_step_size,
        beta: a.beta,
        tau: a.tau,
        mode: match a.mode {
            ModeArg::Supervised => RefineMode::Supervised,
            ModeArg::SelfSupervised => RefineMode::SelfSupervised,
        },
        sigma_init: a.sigma_init,
        mu_offset_init: a.mu_offset_init,
        weights: a.weights.weights(),
        target_refresh: a.target_refresh,
        window: a.window,
        photometric_weight: a.photometric_weight,
        max_backtracks: a.max_backtracks,
    };
    config.validate().map_err(usage)?;
    let views = load_views(&a.scene).map_err(Failure::Data)?;
    let ids = selected(&a.views, views.len())?;
    let depth_dir = a.depth_dir.unwrap_or_else(|| a.scene.join("depth"));
    let out = a.out.unwrap_or_else(|| a.scene.join("refined"));
    mkdir(&out)?;

    let mut jobs = Vec::with_capacity(ids.len());
    for &i in &ids {
        let view = &views[i];
        let coarse = io::read_depth_pfm(&depth_dir.join(format!("{}.pfm", view_stem(i))), view.range()).map_err(data)?;
        let init = init_parameters(&full_resolution(coarse, view)?, &config);
        let gt = match config.mode {
            RefineMode::Supervised => Some(read_gt(&a.scene, i, view.range())?),
            RefineMode::SelfSupervised => None,
        };
        jobs.push((i, init, gt));
    }
    let results = jobs
        .par_iter()
        .map(|(i, init, gt): &(usize, RefineInit, Option<GroundTruth>)| {
            refine::refine(init, gt.as_ref(), &views[*i], &others(&views, *i), &config)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(data)?;
    let mut log = String::new();
    for ((i, _, _), res) in jobs.iter().zip(&results) {
        let stem = view_stem(*i);
        io::write_depth_pfm(&out.join(format!("{stem}.pfm")), &res.depth).map_err(data)?;
        io::write_pfm(&out.join(format!("{stem}_edge.pfm")), res.edge.grid()).map_err(data)?;
        bimodal_maps::write(&out, &stem, &res.bimodal).map_err(data)?;
        write_text(&out.join(format!("{stem}_trace.csv")), &trace_csv(&res.trace))?;
        let (first, last) = (res.trace[0].total, res.trace[res.trace.len() - 1].total);
        let _ = writeln!(log, "view {i}: loss {first:.6e} -> {last:.6e}");
    }
    Ok(log)
}

fn fuse_cmd(a: FuseArgs) -> CliResult<String> {
    let config = FusionConfig {
        max_reproj_px: a.reproj_px,
        max_rel_depth: a.rel_depth,
        min_consistent_views: a.min_views,
        use_photometric: !a.no_photometric,
        min_ncc: a.min_ncc,
        ncc_window: a.ncc_window,
    };
    config.validate().map_err(usage)?;
    let views = load_views(&a.scene).map_err(Failure::Data)?;
    let depth_dir = a.depth_dir.unwrap_or_else(|| a.scene.join("refined"));
    let pairs = views
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let m = io::read_depth_pfm(&depth_dir.join(format!("{}.pfm", view_stem(i))), v.range()).map_err(data)?;
            Ok((v, m))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let cloud = fuse(&pairs, &config).map_err(data)?;
    io::write_ply(&a.out, &cloud).map_err(data)?;
    Ok(format!("fused {} points into {}\n", cloud.len(), a.out.display()))
}

/// `key = value` lines of a flat serializable struct.
fn key_value<T: serde::Serialize>(value: &T) -> String {
    let mut s = String::new();
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(value) {
        for (k, v) in map {
            let _ = writeln!(s, "{k} = {v}");
        }
    }
    s
}

fn emit(report: String, path: Option<&Path>) -> CliResult<String> {
    if let Some(p) = path {
        write_text(p, &report)?;
    }
    Ok(report)
}

fn eval_cloud(a: EvalCloudArgs) -> CliResult<String> {
    if !(a.cap > 0.0 && a.threshold > 0.0) {
        return Err(usage("--cap and --threshold must be positive"));
    }
    let recon = io::read_ply(&a.recon).map_err(data)?;
    let reference = io::read_ply(&a.reference).map_err(data)?;
    let m = cloud_metrics(&recon, &reference, a.cap, a.threshold).map_err(data)?;
    emit(key_value(&m), a.report.as_deref())
}

/// Depth range spanning the valid values of a map read without one.
fn observed_range(path: &Path) -> CliResult<DepthMap> {
    let probe = io::read_depth_pfm(path, DepthRange::new(1.0, 1.0)).map_err(data)?;
    let vals: Vec<f64> = probe.depth.iter().zip(probe.valid.iter()).filter(|(_, v)| **v).map(|(d, _)| *d).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if lo.is_finite() { DepthRange::new(lo, hi) } else { DepthRange::new(1.0, 1.0) };
    Ok(DepthMap { range, ..probe })
}

fn eval_depth(a: EvalDepthArgs) -> CliResult<String> {
    if !(a.error_threshold > 0.0 && a.boundary_threshold > 0.0) {
        return Err(usage("thresholds must be positive"));
    }
    let est = observed_range(&a.estimate)?;
    let g = observed_range(&a.gt)?;
    let gt = GroundTruth::new(g.depth, g.valid);
    let m = depth_metrics(&est, &gt, a.error_threshold, a.boundary_threshold).map_err(data)?;
    emit(key_value(&m), a.report.as_deref())
}

fn losses(a: LossesArgs) -> CliResult<String> {
    let views = load_views(&a.scene).map_err(Failure::Data)?;
    let view = views
        .get(a.view)
        .ok_or_else(|| usage(format!("view {} out of range, the scene has {}", a.view, views.len())))?;
    let range = view.range();
    let dir = a.refined_dir.unwrap_or_else(|| a.scene.join("refined"));
    let stem = view_stem(a.view);
    let gt = read_gt(&a.scene, a.view, range)?;
    let depth = io::read_depth_pfm(&dir.join(format!("{stem}.pfm")), range).map_err(data)?;
    let bimodal = bimodal_maps::read(&dir, &stem, depth.valid.clone(), range).map_err(data)?;
    let edge_grid = io::read_pfm(&dir.join(format!("{stem}_edge.pfm"))).map_err(data)?;
    let edge = EdgeMap::new(edge_grid).map_err(data)?;
    let tau = a.tau.unwrap_or(DEFAULT_TAU_FRACTION * range.span());
    if !(tau > 0.0 && a.beta > 0.0) {
        return Err(usage("--tau and --beta must be positive"));
    }
    let depths = [collapse(&bimodal)];
    let report = total_loss(
        &LossInputs {
            depths: &depths,
            gts: std::slice::from_ref(&gt),
            bimodal: &bimodal,
            edge: &edge,
            beta: a.beta,
            tau,
        },
        a.weights.weights(),
    )
    .map_err(|e| match e {
        crate::losses::LossError::InvalidWeights => usage(e),
        other => data(other),
    })?;
    emit(report.to_key_value(), a.report.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(run(["bimvs", "teleport"]), EXIT_USAGE);
        assert_eq!(run(["bimvs"]), EXIT_USAGE);
        assert_eq!(run(["bimvs", "--help"]), EXIT_OK);
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        assert_eq!(run(["bimvs", "depth", d, "--window", "4"]), EXIT_USAGE);
        assert_eq!(run(["bimvs", "refine", d, "--beta=-1"]), EXIT_USAGE);
        assert_eq!(run(["bimvs", "fuse", d, "-o", "x.ply", "--min-views", "0"]), EXIT_USAGE);
    }

    #[test]
    fn missing_scene_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        assert_eq!(run(["bimvs", "depth", d]), EXIT_DATA);
    }

    #[test]
    fn eval_depth_size_mismatch_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.pfm");
        let b = dir.path().join("b.pfm");
        io::write_pfm(&a, &crate::grid::Grid::filled(4, 3, 5.0)).unwrap();
        io::write_pfm(&b, &crate::grid::Grid::filled(3, 4, 5.0)).unwrap();
        assert_eq!(run(["bimvs", "eval-depth", a.to_str().unwrap(), b.to_str().unwrap()]), EXIT_DATA);
        assert_eq!(run(["bimvs", "eval-depth", a.to_str().unwrap(), a.to_str().unwrap()]), EXIT_OK);
    }

    #[test]
    fn synth_writes_a_loadable_scene() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        assert_eq!(run(["bimvs", "synth", "--builtin", "two-plane", "-o", d]), EXIT_OK);
        let views = load_views(dir.path()).unwrap();
        let scene = render_scene(&SceneSpec::parse(TWO_PLANE_SCENE).unwrap()).unwrap();
        assert_eq!(views.len(), scene.views.len());
        for (a, b) in views.iter().zip(&scene.views) {
            assert_eq!(a.intrinsics, b.intrinsics);
            assert_eq!(a.pose, b.pose);
            let worst = a.intensity.iter().zip(b.intensity.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-6, "{worst}");
        }
    }
}
