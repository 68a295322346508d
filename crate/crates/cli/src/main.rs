use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hullscan_core::config::Config;
use hullscan_core::data::{write_dataset, ImageRecord, Manifest, MaskSet, Split};
use hullscan_core::eval::experiments::{
    ablate_dfe, ablate_fusion, ablate_multiclass, ablate_stn, coverage_error, evaluate_classifier,
    evaluate_defects, evaluate_sections, evaluate_ship, seg_patches, write_ablation_csv,
    write_fusion_csv,
};
use hullscan_core::eval::{
    aggregate_reports, read_json, write_json, write_output, write_reports_csv, write_table_csv,
    Pipeline, PipelineConfig,
};
use hullscan_core::raster::DefectReport;
use hullscan_core::stages::{
    augment_section_dataset, fused_records, prepare_section_sample, pseudo_label, train_classifier,
    train_defect_segmenter, train_section_model, train_ship_segmenter, truth_cls_patches,
    DefectSegmenter, Role, TrainLog,
};
use hullscan_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_STAGE: u8 = 3;

/// Ship hull inspection: segmentation, sections, defects and coverage.
#[derive(Parser)]
#[command(name = "hullscan", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Dataset root; defaults to `<out>/data`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic corpus into the dataset directory.
    GenerateData,
    /// Train one stage on the training split.
    Train {
        #[arg(value_enum)]
        stage: TrainStage,
    },
    /// Run the full pipeline on an image or a directory of PNGs.
    Infer { input: PathBuf },
    /// Score every stage and the coverage reports on one split.
    Evaluate { split: String },
    /// Run an ablation and write its table.
    Ablate {
        #[arg(value_enum)]
        kind: Ablation,
    },
    /// Aggregate the reports written by `infer`.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainStage {
    Stage1,
    Stage2,
    Teacher,
    Student,
    Classifier,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    Dfe,
    Stn,
    Fusion,
    Multiclass,
}

struct Ctx {
    cfg: Config,
    out: PathBuf,
    data: PathBuf,
}

impl Ctx {
    fn models(&self) -> PathBuf {
        self.out.join("models")
    }

    fn model(&self, name: &str) -> PathBuf {
        self.models().join(format!("{name}.ckpt"))
    }

    fn split(&self, split: Split) -> Result<Vec<ImageRecord>> {
        let manifest = Manifest::load(&self.data).map_err(|e| {
            Error::validation(
                "data",
                format!("cannot read dataset at {}: {e}", self.data.display()),
            )
        })?;
        let records = manifest.load_split(&self.data, split)?;
        if records.is_empty() {
            return Err(
                Error::validation("data", format!("split {} is empty", split.as_str())).into(),
            );
        }
        Ok(records)
    }

    fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            options: self.cfg.pipeline,
            ..PipelineConfig::in_dir(&self.models())
        }
    }

    fn save_log(&self, name: &str, log: &TrainLog) -> Result<()> {
        write_json(&self.models().join(format!("{name}.log.json")), log)?;
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<Error>().is_some_and(Error::is_validation);
            ExitCode::from(if validation {
                EXIT_VALIDATION
            } else {
                EXIT_STAGE
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.corpus.seed = seed;
    }
    let data = cli.data.clone().unwrap_or_else(|| cli.out.join("data"));
    let ctx = Ctx {
        cfg,
        out: cli.out,
        data,
    };
    match cli.command {
        Command::GenerateData => generate(&ctx),
        Command::Train { stage } => train(&ctx, stage),
        Command::Infer { input } => infer(&ctx, &input),
        Command::Evaluate { split } => evaluate(&ctx, &split),
        Command::Ablate { kind } => ablate(&ctx, kind),
        Command::Report => report(&ctx),
    }
}

fn generate(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.cfg.corpus.generate()?;
    let records: Vec<ImageRecord> = corpus.iter().map(|c| c.record().clone()).collect();
    let m = write_dataset(&ctx.data, &records)?;
    log::info!("wrote {} records to {}", m.len(), ctx.data.display());
    Ok(())
}

fn train(ctx: &Ctx, stage: TrainStage) -> Result<()> {
    let cfg = &ctx.cfg;
    let records = ctx.split(Split::Train)?;
    match stage {
        TrainStage::Stage1 => {
            let (m, log) = train_ship_segmenter(&records, &cfg.ship, cfg.stage_seed("ship"))?;
            m.save(&ctx.model("ship"))?;
            ctx.save_log("ship", &log)?;
        }
        TrainStage::Stage2 => {
            let samples = records
                .iter()
                .filter(|r| r.ship_mask.is_some() && r.boundaries.is_some())
                .map(|r| prepare_section_sample(r).map(|(s, _)| s))
                .collect::<hullscan_core::Result<Vec<_>>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed("sections-augment"));
            let samples = augment_section_dataset(
                &samples,
                cfg.sections.multiplier,
                &cfg.sections.augment,
                &mut rng,
            )?;
            let (m, log) =
                train_section_model(&samples, &cfg.sections, cfg.stage_seed("sections"))?;
            m.save(&ctx.model("sections"))?;
            ctx.save_log("sections", &log)?;
        }
        TrainStage::Teacher => {
            let patches = seg_patches(&records, &cfg.defects)?;
            let (m, log) = train_defect_segmenter(
                &patches,
                &cfg.defects,
                Role::Teacher,
                cfg.stage_seed("teacher"),
            )?;
            m.save(&ctx.model("teacher"))?;
            ctx.save_log("teacher", &log)?;
        }
        TrainStage::Student => {
            let teacher = DefectSegmenter::load(&ctx.model("teacher"))
                .context("student training needs a teacher")?;
            let pseudo = pseudo_label(&teacher, &records)?;
            let fused = fused_records(&records, &pseudo, cfg.defects.fusion, cfg.defects.patch)?;
            write_dataset(&ctx.out.join("fused"), &fused)?;
            let patches = seg_patches(&fused, &cfg.defects)?;
            let (m, log) = train_defect_segmenter(
                &patches,
                &cfg.defects,
                Role::Student,
                cfg.stage_seed("student"),
            )?;
            m.save(&ctx.model("student"))?;
            ctx.save_log("student", &log)?;
        }
        TrainStage::Classifier => {
            let patches =
                truth_cls_patches(&records, cfg.classifier.patch, cfg.classifier.roi_thresh)?;
            let (m, log) =
                train_classifier(&patches, &cfg.classifier, cfg.stage_seed("classifier"))?;
            m.save(&ctx.model("classifier"))?;
            ctx.save_log("classifier", &log)?;
        }
    }
    Ok(())
}

/// Skips annotation rasters stored next to dataset images.
fn is_photo(p: &Path) -> bool {
    let in_record = p.parent().is_some_and(|d| d.join("image.png").is_file());
    !in_record || p.file_name().is_some_and(|n| n == "image.png")
}

fn image_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(
            Error::validation("input", format!("{} does not exist", input.display())).into(),
        );
    }
    let mut out = Vec::new();
    let mut pending = vec![input.to_path_buf()];
    while let Some(dir) = pending.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                pending.push(p);
            } else if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) && is_photo(&p) {
                out.push(p);
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(
            Error::validation("input", format!("no PNG files in {}", input.display())).into(),
        );
    }
    Ok(out)
}

/// File stem, or the record directory name for dataset images
/// (`<split>/<id>/image.png`).
fn image_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) if stem == "image" => dir.to_string_lossy().into_owned(),
        _ => stem,
    }
}

fn infer(ctx: &Ctx, input: &Path) -> Result<()> {
    let pipeline = Pipeline::load(&ctx.pipeline_config())?;
    let dir = ctx.out.join("infer");
    for path in image_inputs(input)? {
        let img = image::open(&path)
            .map_err(|e| Error::validation("input", format!("{}: {e}", path.display())))?
            .to_rgb8();
        let id = image_id(&path);
        let out = pipeline.run(&id, &img)?;
        for d in &out.report.diagnostics {
            log::warn!("{id}: {d}");
        }
        write_output(&dir, &img, &out)?;
        log::info!("{id}: report written");
    }
    Ok(())
}

fn evaluate(ctx: &Ctx, split: &str) -> Result<()> {
    let split = Split::parse(split)?;
    let records = ctx.split(split)?;
    let pipeline = Pipeline::load(&ctx.pipeline_config())?;
    let truth: Vec<MaskSet> = records
        .iter()
        .map(|r| {
            r.defect_masks
                .clone()
                .ok_or_else(|| Error::validation("defect_masks", format!("{} unlabelled", r.id)))
        })
        .collect::<hullscan_core::Result<_>>()?;
    let ship = evaluate_ship(&pipeline.ship, &records)?;
    let sections = evaluate_sections(&pipeline.sections, &records)?;
    let defects = evaluate_defects(&pipeline.defects, &records, &truth)?;
    let cls_patches = truth_cls_patches(
        &records,
        pipeline.classifier.patch(),
        pipeline.classifier.roi_thresh,
    )?;
    let classifier = if cls_patches.is_empty() {
        None
    } else {
        Some(evaluate_classifier(&pipeline.classifier, &cls_patches)?)
    };
    let mut reports = Vec::new();
    let mut coverage = Vec::new();
    for r in &records {
        let out = pipeline.run(&r.id, &r.pixels)?;
        if let Some(a) = &r.meta.analytic_coverage {
            coverage.push(serde_json::json!({ "image": r.id, "max_abs_error_pp": coverage_error(&out.report, a) }));
        }
        reports.push(out.report);
    }
    let summary = serde_json::json!({
        "split": split.as_str(),
        "images": records.len(),
        "ship": ship,
        "sections": sections,
        "defects": defects,
        "classifier": classifier,
        "coverage": coverage,
        "table": aggregate_reports(&reports)?,
    });
    let dir = ctx.out.join("eval");
    write_json(&dir.join(format!("{}.json", split.as_str())), &summary)?;
    write_reports_csv(
        &dir.join(format!("{}.reports.csv", split.as_str())),
        &reports,
    )?;
    log::info!("evaluation written to {}", dir.display());
    Ok(())
}

fn ablate(ctx: &Ctx, kind: Ablation) -> Result<()> {
    let cfg = &ctx.cfg;
    let train = ctx.split(Split::Train)?;
    let test = ctx.split(Split::Test)?;
    let dir = ctx.out.join("ablations");
    std::fs::create_dir_all(&dir)?;
    let cls = &cfg.classifier;
    let seeds = [cfg.seed, cfg.seed + 1, cfg.seed + 2];
    match kind {
        Ablation::Dfe | Ablation::Stn | Ablation::Multiclass => {
            let tr = truth_cls_patches(&train, cls.patch, cls.roi_thresh)?;
            let te = truth_cls_patches(&test, cls.patch, cls.roi_thresh)?;
            let (name, rows) = match kind {
                Ablation::Dfe => ("dfe", ablate_dfe(&tr, &te, cls, &seeds)?.1),
                Ablation::Stn => ("stn", ablate_stn(&tr, &te, cls, &seeds)?.1),
                _ => (
                    "multiclass",
                    ablate_multiclass(&tr, &train, &te, cls, cfg.seed)?.2,
                ),
            };
            write_ablation_csv(&dir.join(format!("{name}.csv")), &rows)?;
        }
        Ablation::Fusion => {
            let truth: Vec<MaskSet> = test.iter().filter_map(|r| r.defect_masks.clone()).collect();
            let rows = ablate_fusion(
                &train,
                &test,
                &truth,
                &cfg.defects,
                cfg.stage_seed("fusion"),
            )?;
            write_fusion_csv(&dir.join("fusion.csv"), &rows)?;
        }
    }
    log::info!("ablation written to {}", dir.display());
    Ok(())
}

fn report(ctx: &Ctx) -> Result<()> {
    let dir = ctx.out.join("infer");
    if !dir.is_dir() {
        return Err(Error::validation(
            "report",
            format!("{} does not exist; run infer first", dir.display()),
        )
        .into());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && !p.to_string_lossy().ends_with(".patches.json")
        })
        .collect();
    paths.sort();
    let reports = paths
        .iter()
        .map(|p| read_json::<DefectReport>(p))
        .collect::<hullscan_core::Result<Vec<_>>>()?;
    let table = aggregate_reports(&reports)?;
    write_json(&ctx.out.join("report.json"), &table)?;
    write_table_csv(&ctx.out.join("report.csv"), &table)?;
    log::info!("aggregated {} reports", reports.len());
    Ok(())
}
