//! Batch command-line surface for the segmentation pipeline. Each stage of
//! the iterative loop is one subcommand; corrections happen in external GIS
//! tools on the GeoJSON this emits and ingests.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde_json::json;

use cityseg_core::coco::coco_export;
use cityseg_core::error::Error;
use cityseg_core::geo::GeoTransform;
use cityseg_core::geojson::{read_feature_collection, read_point_set, write_feature_collection};
use cityseg_core::groundtruth::{
    derive_three_class, preset_scene, rasterize_features, render_scene_image, synthesize_scene,
    SceneSpec,
};
use cityseg_core::instancer::{semantic_to_instances, ConflictRule, Connectivity, InstancerConfig};
use cityseg_core::io::{self, RasterMeta};
use cityseg_core::metrics::{evaluate_modes, per_object, MatchConfig};
use cityseg_core::mosaic::{
    argmax_classmap, predict_large, DirectoryPredictor, DumpingPredictor, MosaicConfig,
    OraclePredictor, Predictor,
};
use cityseg_core::sampler::{generate_samples, BorderPolicy, SampleSpec};
use cityseg_core::source::RasterSource;
use cityseg_core::tiled::TiledRaster;
use cityseg_core::vectorize::instances_to_features;
use cityseg_core::Result;

const EXIT_DATA: i32 = 2;
const EXIT_USAGE: i32 = 64;
const EXIT_IO: i32 = 74;

#[derive(Parser)]
#[command(
    name = "cityseg",
    version,
    about = "Border-encoded segmentation maps to per-object instances, polygons and training tiles"
)]
struct Cli {
    /// Worker threads (falls back to CITYSEG_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: image, instance raster, polygons
    Synth(SynthArgs),
    /// Rasterize GeoJSON polygons into an instance raster
    Rasterize(RasterizeArgs),
    /// Classify a raster with a sliding-window predictor
    Infer(InferArgs),
    /// Convert a 3-class map into an instance map
    Instances(InstancesArgs),
    /// Trace an instance raster into GeoJSON polygons
    Vectorize(VectorizeArgs),
    /// Cut point-centered training tiles and COCO annotations
    Samples(SamplesArgs),
    /// Score a prediction against ground truth
    Evaluate(EvaluateArgs),
}

fn parse_geotransform(s: &str) -> std::result::Result<GeoTransform, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err("expected origin_x,origin_y,pixel_size_x,pixel_size_y".to_string());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    if nums[2] == 0.0 || nums[3] == 0.0 {
        return Err("pixel sizes must be nonzero".to_string());
    }
    Ok(GeoTransform::new(nums[0], nums[1], nums[2], nums[3]))
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in layout: grid, parking-lot or touching-pairs
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// Scene description JSON
    #[arg(long, required_unless_present = "preset")]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct RasterizeArgs {
    /// Input GeoJSON feature collection
    input: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Geotransform as origin_x,origin_y,pixel_size_x,pixel_size_y
    #[arg(long, value_parser = parse_geotransform)]
    gt: GeoTransform,
    /// Output instance raster (16-bit PNG + .meta.json sidecar)
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the 3-class mask next to the instance raster
    #[arg(long, action = ArgAction::SetTrue)]
    derive_classes: bool,
}

#[derive(Args)]
struct InferArgs {
    /// Input raster: single PNG or a tiled-raster directory
    #[arg(long)]
    image: PathBuf,
    /// Oracle predictor: path to a ground-truth 3-class PNG
    #[arg(
        long,
        conflicts_with = "pred_dir",
        required_unless_present = "pred_dir"
    )]
    oracle: Option<PathBuf>,
    /// Class-flip probability for the oracle
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory of pred_r{row}_c{col}.png exchange tiles
    #[arg(long)]
    pred_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    window: usize,
    #[arg(long, default_value_t = 128)]
    stride: usize,
    /// Output class map PNG
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the finalized probability map (16-bit RGB PNG)
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Dump every predicted window as an exchange tile into this directory
    #[arg(long)]
    dump_pred: Option<PathBuf>,
}

#[derive(Args)]
struct InstancesArgs {
    /// Input 3-class map PNG
    input: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u8))]
    connectivity: u8,
    #[arg(long, action = ArgAction::SetTrue)]
    no_fill_holes: bool,
    /// Only grow into pixels the semantic map marks interior or border
    #[arg(long, action = ArgAction::SetTrue)]
    restrict_growth: bool,
    /// Conflict rule when a grown pixel touches several instances: min or max
    #[arg(long, default_value = "min")]
    conflict: String,
    #[arg(long, default_value_t = 1)]
    min_area: usize,
    /// Geotransform override (otherwise taken from the input sidecar)
    #[arg(long, value_parser = parse_geotransform)]
    gt: Option<GeoTransform>,
}

#[derive(Args)]
struct VectorizeArgs {
    /// Input instance raster (16-bit PNG with .meta.json sidecar)
    input: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SamplesArgs {
    /// Source image: single PNG or tiled-raster directory
    #[arg(long)]
    image: PathBuf,
    /// Ground-truth instance raster (16-bit PNG with sidecar)
    #[arg(long)]
    gt_instances: PathBuf,
    /// Sample points, GeoJSON Point/MultiPoint features
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 256)]
    tile: usize,
    /// Write COCO annotations.json alongside the tiles
    #[arg(long, action = ArgAction::SetTrue)]
    coco: bool,
    /// Edge handling: clamp (shift tiles inward) or skip
    #[arg(long, default_value = "clamp")]
    border_policy: String,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted 3-class map PNG
    #[arg(long)]
    pred_classes: PathBuf,
    /// Predicted instance raster
    #[arg(long)]
    pred_instances: PathBuf,
    /// Ground-truth instance raster
    #[arg(long)]
    gt_instances: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tau_correct: f64,
    #[arg(long, default_value_t = 0.1)]
    tau_partial: f64,
    /// Also write the JSON report to this path
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("CITYSEG_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(num_threads_default);
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();

    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        let code = match e {
            Error::Io { .. } | Error::Image { .. } => EXIT_IO,
            _ => EXIT_DATA,
        };
        std::process::exit(code);
    }
}

fn num_threads_default() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Rasterize(args) => cmd_rasterize(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Instances(args) => cmd_instances(args),
        Command::Vectorize(args) => cmd_vectorize(args),
        Command::Samples(args) => cmd_samples(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    }
}

/// Open a raster source: a directory is a tiled raster, a file is a PNG.
fn open_source(path: &Path) -> Result<Box<dyn RasterSource>> {
    if path.is_dir() {
        Ok(Box::new(TiledRaster::open(path)?))
    } else {
        Ok(Box::new(io::load_image_raster(path)?))
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec: SceneSpec = match (&args.preset, &args.spec) {
        (Some(preset), _) => preset_scene(preset.parse()?, args.seed),
        (None, Some(path)) => {
            let mut spec: SceneSpec = io::read_json(path)?;
            if args.seed != 0 {
                spec.seed = args.seed;
            }
            spec
        }
        (None, None) => unreachable!("clap enforces preset or spec"),
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let (instances, features) = synthesize_scene(&spec)?;

    let config = json!({
        "command": "synth",
        "preset": args.preset,
        "seed": spec.seed,
        "width": spec.width,
        "height": spec.height,
        "shapes": spec.shapes.len(),
    });

    let image_path = args.out.join("image.png");
    let pixels = render_scene_image(&instances, spec.seed);
    io::write_rgb8_png(&image_path, spec.width, spec.height, pixels)?;
    let mut image_meta = RasterMeta::new(spec.geotransform);
    image_meta.config = Some(config.clone());
    io::write_json_pretty(&io::meta_path(&image_path), &image_meta)?;

    let inst_path = args.out.join("gt_inst.png");
    let mut inst_meta = RasterMeta::new(spec.geotransform);
    inst_meta.config = Some(config.clone());
    io::write_instance_map(&inst_path, &instances, &inst_meta)?;

    write_feature_collection(&args.out.join("gt.geojson"), &features)?;
    io::write_json_pretty(&args.out.join("scene.json"), &spec)?;

    eprintln!(
        "synth: {} instances over {}x{} written to {}",
        instances.n_instances(),
        spec.width,
        spec.height,
        args.out.display()
    );
    Ok(())
}

fn cmd_rasterize(args: RasterizeArgs) -> Result<()> {
    let fc = read_feature_collection(&args.input)?;
    let out = rasterize_features(&fc, &args.gt, args.width, args.height)?;
    for id in &out.skipped {
        eprintln!("warning: feature {id} skipped (degenerate exterior ring)");
    }
    let config = json!({
        "command": "rasterize",
        "input": args.input.display().to_string(),
        "width": args.width,
        "height": args.height,
        "geotransform": args.gt,
        "derive_classes": args.derive_classes,
    });
    let mut meta = RasterMeta::new(args.gt);
    meta.skipped_features = Some(out.skipped.clone());
    meta.config = Some(config.clone());
    io::write_instance_map(&args.out, &out.instances, &meta)?;

    if args.derive_classes {
        let derived = derive_three_class(&out.instances);
        let classes_path = classes_path_for(&args.out);
        io::write_classmap(&classes_path, &derived.classes)?;
        let mut cmeta = RasterMeta::new(args.gt);
        cmeta.thin_objects = Some(derived.thin_objects);
        cmeta.config = Some(config);
        io::write_json_pretty(&io::meta_path(&classes_path), &cmeta)?;
        eprintln!(
            "rasterize: {} instances, classes written to {}",
            out.instances.n_instances(),
            classes_path.display()
        );
    } else {
        eprintln!("rasterize: {} instances", out.instances.n_instances());
    }
    Ok(())
}

fn classes_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}_classes.png"))
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    let source = open_source(&args.image)?;
    let cfg = MosaicConfig {
        window: args.window,
        stride: args.stride,
        ..Default::default()
    };

    let oracle: Option<OraclePredictor> = match &args.oracle {
        Some(path) => {
            let gt = io::read_classmap(path)?;
            Some(OraclePredictor::new(gt, args.noise, args.seed)?)
        }
        None => None,
    };
    let from_dir: Option<DirectoryPredictor> = args
        .pred_dir
        .as_ref()
        .map(|dir| DirectoryPredictor::new(dir.clone(), cfg));
    let base: &dyn Predictor = match (&oracle, &from_dir) {
        (Some(o), _) => o,
        (None, Some(d)) => d,
        (None, None) => unreachable!("clap enforces a predictor source"),
    };

    let dumping;
    let predictor: &dyn Predictor = match &args.dump_pred {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            dumping = DumpingPredictor::new(base, dir.clone());
            &dumping
        }
        None => base,
    };

    let pm = predict_large(source.as_ref(), predictor, &cfg)?;
    let classes = argmax_classmap(&pm);
    io::write_classmap(&args.out, &classes)?;
    let mut meta = RasterMeta::new(source.geotransform());
    meta.config = Some(json!({
        "command": "infer",
        "image": args.image.display().to_string(),
        "oracle": args.oracle.as_ref().map(|p| p.display().to_string()),
        "pred_dir": args.pred_dir.as_ref().map(|p| p.display().to_string()),
        "noise": args.noise,
        "seed": args.seed,
        "window": cfg.window,
        "stride": cfg.stride,
    }));
    io::write_json_pretty(&io::meta_path(&args.out), &meta)?;
    if let Some(probs) = &args.probs {
        io::write_probmap(probs, &pm)?;
    }
    eprintln!(
        "infer: {}x{} classified (window {}, stride {})",
        source.width(),
        source.height(),
        cfg.window,
        cfg.stride
    );
    Ok(())
}

fn cmd_instances(args: InstancesArgs) -> Result<()> {
    let classes = io::read_classmap(&args.input)?;
    let gt = match args.gt {
        Some(gt) => gt,
        None => match io::read_json::<RasterMeta>(&io::meta_path(&args.input)) {
            Ok(meta) => meta.geotransform,
            Err(Error::Io { .. }) => GeoTransform::unit(),
            Err(e) => return Err(e),
        },
    };
    let connectivity = match args.connectivity {
        4 => Connectivity::Four,
        8 => Connectivity::Eight,
        other => {
            return Err(Error::validation(format!(
                "connectivity must be 4 or 8, got {other}"
            )))
        }
    };
    let conflict_rule = match args.conflict.as_str() {
        "min" => ConflictRule::MinId,
        "max" => ConflictRule::MaxId,
        other => {
            return Err(Error::validation(format!(
                "conflict rule must be min or max, got {other:?}"
            )))
        }
    };
    let cfg = InstancerConfig {
        connectivity,
        fill_holes: !args.no_fill_holes,
        restrict_growth_to_semantic: args.restrict_growth,
        conflict_rule,
        min_component_area: args.min_area,
    };
    let instances = semantic_to_instances(&classes, &cfg);
    let mut meta = RasterMeta::new(gt);
    meta.config = Some(json!({
        "command": "instances",
        "input": args.input.display().to_string(),
        "connectivity": args.connectivity,
        "fill_holes": !args.no_fill_holes,
        "restrict_growth_to_semantic": args.restrict_growth,
        "conflict_rule": args.conflict,
        "min_component_area": args.min_area,
    }));
    io::write_instance_map(&args.out, &instances, &meta)?;
    eprintln!("instances: {} objects", instances.n_instances());
    Ok(())
}

fn cmd_vectorize(args: VectorizeArgs) -> Result<()> {
    let (instances, meta) = io::read_instance_map(&args.input)?;
    let fc = instances_to_features(&instances, &meta.geotransform);
    write_feature_collection(&args.out, &fc)?;
    eprintln!(
        "vectorize: {} features written to {}",
        fc.features.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_samples(args: SamplesArgs) -> Result<()> {
    let image = open_source(&args.image)?;
    let (gt_inst, meta) = io::read_instance_map(&args.gt_instances)?;
    let classes = derive_three_class(&gt_inst).classes;
    let points = read_point_set(&args.points)?;
    let spec = SampleSpec {
        tile_size: args.tile,
        out_dir: args.out.clone(),
        emit_coco: args.coco,
        border_policy: args.border_policy.parse::<BorderPolicy>()?,
    };
    let mut manifest = generate_samples(
        image.as_ref(),
        &gt_inst,
        &classes,
        &meta.geotransform,
        &points,
        &spec,
    )?;
    manifest.config = Some(json!({
        "command": "samples",
        "image": args.image.display().to_string(),
        "gt_instances": args.gt_instances.display().to_string(),
        "points": args.points.display().to_string(),
        "tile_size": args.tile,
        "coco": args.coco,
        "border_policy": args.border_policy,
    }));
    io::write_json_pretty(
        &args.out.join(cityseg_core::sampler::MANIFEST_FILE),
        &manifest,
    )?;
    for skip in &manifest.skipped {
        eprintln!(
            "warning: point ({}, {}) skipped: {}",
            skip.point[0], skip.point[1], skip.reason
        );
    }
    if args.coco {
        let doc = coco_export(&manifest)?;
        io::write_json_compact(&args.out.join("annotations.json"), &doc)?;
    }
    eprintln!(
        "samples: {} tiles, {} skipped points",
        manifest.tiles.len(),
        manifest.skipped.len()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let pred_classes = io::read_classmap(&args.pred_classes)?;
    let (pred_inst, _) = io::read_instance_map(&args.pred_instances)?;
    let (gt_inst, _) = io::read_instance_map(&args.gt_instances)?;
    let match_cfg = MatchConfig {
        tau_correct: args.tau_correct,
        tau_partial: args.tau_partial,
    };
    let modes = evaluate_modes(&pred_classes, &pred_inst, &gt_inst)?;
    let objects = per_object(&pred_inst, &gt_inst, &match_cfg)?;

    let report = json!({
        "iou_no_border": modes.iou_no_border,
        "iou_exp_border": modes.iou_exp_border,
        "confusion_no_border": modes.confusion_no_border,
        "confusion_exp_border": modes.confusion_exp_border,
        "objects": objects,
        "config": {
            "tau_correct": match_cfg.tau_correct,
            "tau_partial": match_cfg.tau_partial,
            "partial_covered_gt_counts_as_fn": false,
        },
    });

    println!("pixel IoU");
    println!("  no border    {:.4}", modes.iou_no_border);
    println!("  exp border   {:.4}", modes.iou_exp_border);
    println!(
        "objects (tau_correct {:.2}, tau_partial {:.2})",
        match_cfg.tau_correct, match_cfg.tau_partial
    );
    println!("  correct          {:>6}", objects.correct);
    println!("  partial          {:>6}", objects.partial);
    println!("  false negatives  {:>6}", objects.false_negatives);
    println!("  false positives  {:>6}", objects.false_positives);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("serializable")
    );

    if let Some(path) = &args.out {
        io::write_json_pretty(path, &report)?;
    }
    Ok(())
}
