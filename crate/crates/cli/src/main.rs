mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;
use union_core::dataset_io::{list_scenes, load_ground_truth, read_json, write_json};
use union_core::discovery::{median_area_prototypes, size_prior_assign};
use union_core::evaluation::{
    detection_boxes, eval_class, evaluate, gt_boxes, load_detections, ClassMode, DetectionFile,
    EvalConfig, ScoreSource,
};
use union_core::par;
use union_core::pipeline::{inspect_scene, run_pipeline, PipelineConfig, RunStats, Stage};
use union_core::synthetic::{generate, Scenario};

#[derive(Parser)]
#[command(
    name = "union",
    version,
    about = "Unsupervised discovery of mobile objects in LiDAR sequences"
)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate pseudo-labels for every scene of a dataset.
    Run(RunArgs),
    /// Score a detection file against the dataset's ground truth.
    Eval(EvalArgs),
    /// Write a synthetic dataset scene.
    GenSynthetic(GenArgs),
    /// Plot per-cluster dynamic fractions from a run's stats.json.
    PlotFractions(PlotArgs),
    /// Dump the proposals of each aggregation window of one scene.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON pipeline config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "+appearance", value_parser = parse_stage, allow_hyphen_values = true)]
    stage: Stage,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Agnostic,
    Grouped,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    /// Point-count proxy when every box carries `num_points`, else stored scores.
    Auto,
    Stored,
    PointCount,
}

#[derive(Args)]
struct EvalArgs {
    /// `pseudo_labels.json` or `predictions.json`.
    #[arg(long)]
    predictions: PathBuf,
    /// Dataset root holding each scene's `gt.json`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "agnostic")]
    mode: ModeArg,
    /// JSON object mapping pseudo-class ids to class names.
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Name boxes by the ground-truth size prior that best overlaps their footprint.
    #[arg(long)]
    size_prior: bool,
    #[arg(long, value_enum, default_value = "auto")]
    score: ScoreArg,
    /// JSON evaluation config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// JSON scenario; omitted means the built-in benchmark scene.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    scene: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let workers = cli.workers;
    if let Err(err) = par::with_workers(workers, move || dispatch(cli.command)) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run(args),
        Command::Eval(args) => eval(args),
        Command::GenSynthetic(args) => gen_synthetic(args),
        Command::PlotFractions(args) => plot_fractions(args),
        Command::Inspect(args) => inspect(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.pipeline.resolve()?;
    let stage = args.pipeline.stage;
    let output = run_pipeline(&config, &args.pipeline.dataset, stage)
        .with_context(|| format!("stage {stage}"))?;
    output.write(&args.out, &config)?;
    let boxes: usize = output.stats.scenes.iter().map(|s| s.boxes).sum();
    println!(
        "{stage}: {} scenes, {boxes} boxes written to {}",
        output.stats.scenes.len(),
        args.out.join("pseudo_labels.json").display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => read_json::<EvalConfig>(path)?,
        None => EvalConfig::default(),
    };
    config.class_mode = match args.mode {
        ModeArg::Agnostic => ClassMode::Agnostic,
        ModeArg::Grouped => ClassMode::Grouped,
    };
    let file = load_detections(&args.predictions)?;

    let mut gts = Vec::new();
    for scene in list_scenes(&args.dataset)? {
        gts.extend(gt_boxes(&scene, &load_ground_truth(&args.dataset, &scene)?));
    }
    let known: std::collections::BTreeSet<_> = gts.iter().map(|g| g.frame.0.clone()).collect();
    if let Some(s) = file.scenes.iter().find(|s| !known.contains(&s.scene_id)) {
        bail!(
            "predictions reference scene {} which has no ground truth",
            s.scene_id
        );
    }

    let score = match args.score {
        ScoreArg::Stored => ScoreSource::Stored,
        ScoreArg::PointCount => ScoreSource::PointCount,
        ScoreArg::Auto if all_boxes(&file).all(|b| b.num_points.is_some()) => {
            ScoreSource::PointCount
        }
        ScoreArg::Auto => ScoreSource::Stored,
    };

    let class_map: BTreeMap<usize, String> = match &args.class_map {
        Some(path) => {
            let raw: BTreeMap<String, String> = read_json(path)?;
            raw.into_iter()
                .map(|(k, v)| {
                    Ok((
                        k.parse::<usize>()
                            .with_context(|| format!("class map key {k:?}"))?,
                        v,
                    ))
                })
                .collect::<Result<_>>()?
        }
        None => BTreeMap::new(),
    };
    let mut prior_names: BTreeMap<(u64, u64), String> = BTreeMap::new();
    if args.size_prior {
        let priors = median_area_prototypes(gts.iter().filter_map(|g| {
            eval_class(&g.class_name, config.class_mode).map(|c| (c, g.size[0], g.size[1]))
        }));
        if priors.is_empty() {
            bail!("size prior requested but the ground truth has no evaluated classes");
        }
        let footprints: Vec<(f64, f64)> =
            all_boxes(&file).map(|b| (b.size[0], b.size[1])).collect();
        for (fp, i) in footprints
            .iter()
            .zip(size_prior_assign(&footprints, &priors))
        {
            prior_names.insert(
                (fp.0.to_bits(), fp.1.to_bits()),
                priors[i].class_name.clone(),
            );
        }
    }
    let mode = config.class_mode;
    let preds = detection_boxes(&file, score, |b| match mode {
        ClassMode::Agnostic => Some("object".to_string()),
        ClassMode::Grouped => b
            .pseudo_class
            .and_then(|k| class_map.get(&k).cloned())
            .or_else(|| {
                prior_names
                    .get(&(b.size[0].to_bits(), b.size[1].to_bits()))
                    .cloned()
            })
            .or_else(|| b.class_name.clone()),
    });
    let report = evaluate(&preds, &gts, &config, score.describe())?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join("eval_report.json"), &report)?;
    fs::write(args.out.join("pr_curves.csv"), report.pr_csv())?;
    println!(
        "mAP {:.4}  NDS {:.4}  (scores: {})",
        report.map, report.nds, report.score_source
    );
    for c in &report.classes {
        println!(
            "  {:<12} AP {:.4}  gt {}  pred {}",
            c.class_name, c.mean_ap, c.num_gt, c.num_pred
        );
    }
    Ok(())
}

fn all_boxes(
    file: &DetectionFile,
) -> impl Iterator<Item = &union_core::evaluation::DetectionRecord> {
    file.scenes
        .iter()
        .flat_map(|s| s.frames.iter())
        .flat_map(|f| f.boxes.iter())
}

fn gen_synthetic(args: GenArgs) -> Result<()> {
    let scenario = match &args.scenario {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<Scenario>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => Scenario::benchmark(),
    };
    let scene = generate(&scenario, &args.out, args.seed)?;
    println!(
        "scene {}: {} sweeps, {} keyframes, {} ground-truth boxes",
        scene.scene_id, scene.sweeps, scene.keyframes, scene.gt_boxes
    );
    Ok(())
}

fn plot_fractions(args: PlotArgs) -> Result<()> {
    let stats = RunStats::load(&args.stats)
        .with_context(|| format!("reading stats {}", args.stats.display()))?;
    if stats.stage != Stage::Appearance {
        bail!(
            "stats come from a {} run; cluster fractions need +appearance",
            stats.stage
        );
    }
    let sorted = plot::sorted_clusters(&stats.clusters);
    let threshold = stats.mobile_fraction_threshold;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_file(
        &args.out.join("fractions.csv"),
        &plot::fractions_csv(&sorted, threshold),
    )?;
    write_file(
        &args.out.join("fractions.svg"),
        &plot::fractions_svg(&sorted, threshold),
    )?;
    let mobile = sorted
        .iter()
        .filter(|c| c.dynamic_fraction >= threshold)
        .count();
    println!(
        "{} clusters, {mobile} mobile at X = {threshold}",
        sorted.len()
    );
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn inspect(args: InspectArgs) -> Result<()> {
    let config = args.pipeline.resolve()?;
    let scene = match args.scene {
        Some(s) => s,
        None => list_scenes(&args.pipeline.dataset)?
            .into_iter()
            .next()
            .context("dataset has no scenes")?,
    };
    let windows = inspect_scene(&config, &args.pipeline.dataset, &scene, args.pipeline.stage)?;
    let text = serde_json::to_string_pretty(&windows)?;
    match args.out {
        Some(path) => write_file(&path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}
