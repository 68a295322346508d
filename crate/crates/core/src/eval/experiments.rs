//! Stage evaluations and the ablation harness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::iou::{mask_set_overlaps, mean_over_images, section_iou, ClassIou, Overlap};
use super::metrics::{mean_defined, ConfusionMatrix, Metric, Metrics};
use crate::data::{slice_seg_patches, DefectClass, ImageRecord, MaskSet, Patch};
use crate::error::{Error, Result};
use crate::nn::DfeVariant;
use crate::raster::{crop_resize_ship, DefectReport, Section};
use crate::stages::{
    class_pixel_counts, crop_section_map, dominant_class, fused_records, pseudo_label,
    train_classifier, train_defect_segmenter, train_multiclass, ClsTrainConfig, DefectClassifier,
    DefectSegmenter, DefectTrainConfig, FusionMode, MultiClassifier, Role, SectionModel,
    ShipSegmenter, TrainLog,
};

/// Per-image ship IoU; a missed ship scores 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipEval {
    pub per_image: Vec<f64>,
    pub mean: Metric,
}

pub fn evaluate_ship(model: &ShipSegmenter, records: &[ImageRecord]) -> Result<ShipEval> {
    let mut per_image = Vec::new();
    for r in records {
        let Some(truth) = &r.ship_mask else { continue };
        let iou = match model.segment_ship(&r.pixels) {
            Ok(pred) => Overlap::of(&pred, truth)?.iou().0.unwrap_or(1.0),
            Err(Error::NoShip(_)) => 0.0,
            Err(e) => return Err(e),
        };
        per_image.push(iou);
    }
    let mean = mean_defined(per_image.iter().map(|&v| Metric(Some(v))));
    Ok(ShipEval { per_image, mean })
}

/// Section IoU in the model frame: the ground-truth ship crop labelled by
/// predicted and by annotated curves. Per-section mean over images.
pub fn evaluate_sections(model: &SectionModel, records: &[ImageRecord]) -> Result<ClassIou> {
    let mut per_image = Vec::new();
    for r in records {
        let (Some(ship), Some(b)) = (&r.ship_mask, &r.boundaries) else {
            continue;
        };
        let (crop, t) = crop_resize_ship(&r.pixels, ship)?;
        let ship_crop = t.crop_mask(ship);
        let pred = crop_section_map(&ship_crop, &model.predict_boundaries(&crop, &ship_crop)?)?;
        let truth = crop_section_map(&ship_crop, &t.boundaries_to_output(b))?;
        per_image.push(section_iou(&pred, &truth)?);
    }
    if per_image.is_empty() {
        return Err(Error::Empty(
            "no records with ship masks and boundaries".into(),
        ));
    }
    Ok(mean_over_images(&per_image))
}

/// Dataset-level pixel scores of a defect segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEval {
    pub overlaps: [Overlap; 3],
    pub iou: ClassIou,
    /// Pooled over classes.
    pub precision: Metric,
    pub recall: Metric,
}

impl DefectEval {
    pub fn from_overlaps(overlaps: [Overlap; 3]) -> Self {
        let mut pooled = Overlap::default();
        for o in &overlaps {
            pooled.merge(o);
        }
        Self {
            overlaps,
            iou: ClassIou::from_overlaps(&overlaps),
            precision: pooled.precision(),
            recall: pooled.recall(),
        }
    }
}

/// Scores predictions, clipped to each record's ship, against `truth`.
pub fn evaluate_defects(
    model: &DefectSegmenter,
    records: &[ImageRecord],
    truth: &[MaskSet],
) -> Result<DefectEval> {
    if records.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} records vs {} truth sets",
            records.len(),
            truth.len()
        )));
    }
    let mut total = [Overlap::default(); 3];
    for (r, t) in records.iter().zip(truth) {
        let mut pred = model.segment_defects(&r.pixels)?.masks;
        if let Some(ship) = &r.ship_mask {
            pred = pred.try_map(|_, m| m.intersection(ship))?;
        }
        for (k, o) in mask_set_overlaps(&pred, t)?.iter().enumerate() {
            total[k].merge(o);
        }
    }
    Ok(DefectEval::from_overlaps(total))
}

/// Per-class patch metrics in [`DefectClass::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsEval {
    pub confusion: [ConfusionMatrix; 3],
    pub metrics: [Metrics; 3],
    pub mean_balanced_accuracy: Metric,
}

impl ClsEval {
    pub fn from_predictions(labels: &[[bool; 3]], preds: &[[bool; 3]]) -> Result<Self> {
        if labels.len() != preds.len() || labels.is_empty() {
            return Err(Error::Shape(format!(
                "{} labels vs {} predictions",
                labels.len(),
                preds.len()
            )));
        }
        let mut confusion = [ConfusionMatrix::default(); 3];
        for (l, p) in labels.iter().zip(preds) {
            for k in 0..3 {
                confusion[k].add(l[k], p[k]);
            }
        }
        let metrics = confusion.map(|c| c.metrics());
        Ok(Self {
            confusion,
            metrics,
            mean_balanced_accuracy: mean_defined(metrics.iter().map(|m| m.balanced_accuracy)),
        })
    }

    pub fn class(&self, c: DefectClass) -> &Metrics {
        &self.metrics[c.index()]
    }
}

pub fn evaluate_classifier(model: &DefectClassifier, patches: &[Patch]) -> Result<ClsEval> {
    let preds: Vec<[bool; 3]> = model
        .predict_probs(patches)?
        .into_iter()
        .map(|p| p.map(|v| v > model.threshold))
        .collect();
    let labels: Vec<[bool; 3]> = patches.iter().map(|p| p.labels).collect();
    ClsEval::from_predictions(&labels, &preds)
}

/// Scores the single-class baseline as one-hot multi-label predictions.
pub fn evaluate_multiclass(model: &MultiClassifier, patches: &[Patch]) -> Result<ClsEval> {
    let preds: Vec<[bool; 3]> = model
        .predict(patches)?
        .into_iter()
        .map(|k| [0, 1, 2].map(|i| i == k))
        .collect();
    let labels: Vec<[bool; 3]> = patches.iter().map(|p| p.labels).collect();
    ClsEval::from_predictions(&labels, &preds)
}

/// Largest absolute gap, in percentage points, between a report and the
/// generator's coverage over the sections that truly exist. A true section
/// missing from the report counts as infinite.
pub fn coverage_error(report: &DefectReport, analytic: &[[Option<f64>; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for (s, section) in Section::HULL.iter().enumerate() {
        for c in DefectClass::ALL {
            let Some(truth) = analytic[s][c.index()] else {
                continue;
            };
            match report.percent(*section, c) {
                Some(p) => worst = worst.max((p - truth).abs()),
                None => return f64::INFINITY,
            }
        }
    }
    worst
}

/// One row of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub experiment: String,
    pub arm: String,
    pub seed: u64,
    pub class: String,
    pub accuracy: Metric,
    pub balanced_accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

impl AblationRow {
    fn new(experiment: &str, arm: &str, seed: u64, class: &str, m: &Metrics) -> Self {
        Self {
            experiment: experiment.into(),
            arm: arm.into(),
            seed,
            class: class.into(),
            accuracy: m.accuracy,
            balanced_accuracy: m.balanced_accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }

    fn per_class(experiment: &str, arm: &str, seed: u64, eval: &ClsEval) -> Vec<Self> {
        DefectClass::ALL
            .iter()
            .map(|&c| Self::new(experiment, arm, seed, c.name(), eval.class(c)))
            .collect()
    }
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean of a metric over rows matching `arm` and `class`.
pub fn arm_mean(
    rows: &[AblationRow],
    arm: &str,
    class: &str,
    pick: impl Fn(&AblationRow) -> Metric,
) -> Metric {
    mean_defined(
        rows.iter()
            .filter(|r| r.arm == arm && r.class == class)
            .map(pick),
    )
}

/// A trained arm with its evaluation.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: String,
    pub seed: u64,
    pub eval: ClsEval,
    pub log: TrainLog,
}

fn run_arm(
    arm: &str,
    train: &[Patch],
    test: &[Patch],
    cfg: &ClsTrainConfig,
    seed: u64,
) -> Result<ArmResult> {
    let (model, log) = train_classifier(train, cfg, seed)?;
    Ok(ArmResult {
        arm: arm.into(),
        seed,
        eval: evaluate_classifier(&model, test)?,
        log,
    })
}

fn rows_of(experiment: &str, arms: &[ArmResult]) -> Vec<AblationRow> {
    arms.iter()
        .flat_map(|a| AblationRow::per_class(experiment, &a.arm, a.seed, &a.eval))
        .collect()
}

/// The three feature-extractor configurations, each trained once per seed.
pub fn ablate_dfe(
    train: &[Patch],
    test: &[Patch],
    cfg: &ClsTrainConfig,
    seeds: &[u64],
) -> Result<(Vec<ArmResult>, Vec<AblationRow>)> {
    let mut arms = Vec::new();
    for &seed in seeds {
        for variant in DfeVariant::ALL {
            let mut c = cfg.clone();
            c.net.variant = variant;
            arms.push(run_arm(variant.as_str(), train, test, &c, seed)?);
        }
    }
    let rows = rows_of("dfe", &arms);
    Ok((arms, rows))
}

/// The full classifier with and without its transformers.
pub fn ablate_stn(
    train: &[Patch],
    test: &[Patch],
    cfg: &ClsTrainConfig,
    seeds: &[u64],
) -> Result<(Vec<ArmResult>, Vec<AblationRow>)> {
    let mut arms = Vec::new();
    for &seed in seeds {
        for (arm, use_stn) in [("with-stn", true), ("without-stn", false)] {
            let mut c = cfg.clone();
            c.net.use_stn = use_stn;
            arms.push(run_arm(arm, train, test, &c, seed)?);
        }
    }
    let rows = rows_of("stn", &arms);
    Ok((arms, rows))
}

/// Multi-label classifier against the softmax baseline on the same
/// patches. Single-class targets come from the labels of the record each
/// training patch was cut from.
pub fn ablate_multiclass(
    train: &[Patch],
    train_records: &[ImageRecord],
    test: &[Patch],
    cfg: &ClsTrainConfig,
    seed: u64,
) -> Result<(ClsEval, ClsEval, Vec<AblationRow>)> {
    let targets = multiclass_targets(train, train_records)?;
    let (ml, _) = train_classifier(train, cfg, seed)?;
    let (mc, _) = train_multiclass(train, &targets, cfg, seed)?;
    let ml_eval = evaluate_classifier(&ml, test)?;
    let mc_eval = evaluate_multiclass(&mc, test)?;
    let mut rows = AblationRow::per_class("multiclass", "multi-label", seed, &ml_eval);
    rows.extend(AblationRow::per_class(
        "multiclass",
        "multi-class",
        seed,
        &mc_eval,
    ));
    Ok((ml_eval, mc_eval, rows))
}

/// Dominant labelled class of each patch.
pub fn multiclass_targets(patches: &[Patch], records: &[ImageRecord]) -> Result<Vec<usize>> {
    patches
        .iter()
        .map(|p| {
            let r = records
                .iter()
                .find(|r| r.id == p.source_id)
                .ok_or_else(|| {
                    Error::validation("source_id", format!("no record {}", p.source_id))
                })?;
            let masks = r.defect_masks.as_ref().ok_or_else(|| {
                Error::validation("defect_masks", format!("{} has no labels", r.id))
            })?;
            Ok(dominant_class(class_pixel_counts(masks, p)?))
        })
        .collect()
}

/// Teacher, pseudo labels, fusion and student, with both models scored on
/// held-out scenes.
#[derive(Debug, Clone)]
pub struct TeacherStudent {
    pub teacher: DefectSegmenter,
    pub student: DefectSegmenter,
    pub teacher_log: TrainLog,
    pub student_log: TrainLog,
    pub teacher_eval: DefectEval,
    pub student_eval: DefectEval,
    pub pseudo: Vec<MaskSet>,
    pub fused: Vec<ImageRecord>,
}

pub fn teacher_student(
    train: &[ImageRecord],
    test: &[ImageRecord],
    test_truth: &[MaskSet],
    cfg: &DefectTrainConfig,
    seed: u64,
) -> Result<TeacherStudent> {
    let patches = seg_patches(train, cfg)?;
    let (teacher, teacher_log) = train_defect_segmenter(&patches, cfg, Role::Teacher, seed)?;
    let pseudo = pseudo_label(&teacher, train)?;
    let fused = fused_records(train, &pseudo, cfg.fusion, cfg.patch)?;
    let fused_patches = seg_patches(&fused, cfg)?;
    let (student, student_log) =
        train_defect_segmenter(&fused_patches, cfg, Role::Student, seed.wrapping_add(1))?;
    Ok(TeacherStudent {
        teacher_eval: evaluate_defects(&teacher, test, test_truth)?,
        student_eval: evaluate_defects(&student, test, test_truth)?,
        teacher,
        student,
        teacher_log,
        student_log,
        pseudo,
        fused,
    })
}

pub fn seg_patches(records: &[ImageRecord], cfg: &DefectTrainConfig) -> Result<Vec<Patch>> {
    let mut out = Vec::new();
    for r in records {
        out.extend(slice_seg_patches(r, cfg.patch, cfg.min_defect_frac)?);
    }
    Ok(out)
}

/// Pixel scores of one fusion arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRow {
    pub arm: String,
    pub class: String,
    pub iou: Metric,
    pub precision: Metric,
    pub recall: Metric,
}

fn fusion_rows(arm: &str, e: &DefectEval) -> Vec<FusionRow> {
    let mut rows: Vec<FusionRow> = DefectClass::ALL
        .iter()
        .map(|&c| {
            let o = e.overlaps[c.index()];
            FusionRow {
                arm: arm.into(),
                class: c.name().into(),
                iou: o.iou(),
                precision: o.precision(),
                recall: o.recall(),
            }
        })
        .collect();
    rows.push(FusionRow {
        arm: arm.into(),
        class: "all".into(),
        iou: e.iou.mean,
        precision: e.precision,
        recall: e.recall,
    });
    rows
}

/// Teacher, union-fused student and intersection-fused student.
pub fn ablate_fusion(
    train: &[ImageRecord],
    test: &[ImageRecord],
    test_truth: &[MaskSet],
    cfg: &DefectTrainConfig,
    seed: u64,
) -> Result<Vec<FusionRow>> {
    let mut c = cfg.clone();
    c.fusion = FusionMode::Union;
    let union = teacher_student(train, test, test_truth, &c, seed)?;
    let inter = fused_records(train, &union.pseudo, FusionMode::Intersection, cfg.patch)?;
    let (student, _) = train_defect_segmenter(
        &seg_patches(&inter, cfg)?,
        cfg,
        Role::Student,
        seed.wrapping_add(1),
    )?;
    let mut rows = fusion_rows("teacher", &union.teacher_eval);
    rows.extend(fusion_rows("student-union", &union.student_eval));
    rows.extend(fusion_rows(
        "student-intersection",
        &evaluate_defects(&student, test, test_truth)?,
    ));
    Ok(rows)
}

pub fn write_fusion_csv(path: &Path, rows: &[FusionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::SectionCoverage;

    #[test]
    fn cls_eval_counts() {
        let labels = [
            [true, false, true],
            [false, false, true],
            [true, true, false],
        ];
        let preds = [
            [true, false, false],
            [false, true, true],
            [true, true, false],
        ];
        let e = ClsEval::from_predictions(&labels, &preds).unwrap();
        assert_eq!(e.confusion[0].tp, 2);
        assert_eq!(e.confusion[1].fp, 1);
        assert_eq!(e.confusion[2].fn_, 1);
        assert_eq!(e.class(DefectClass::Corrosion).accuracy, Metric(Some(1.0)));
        assert!(ClsEval::from_predictions(&[], &[]).is_err());
    }

    #[test]
    fn coverage_error_rules() {
        let mut r = DefectReport::empty("a");
        r.sections[1] = SectionCoverage {
            section: Section::BootTop,
            present: true,
            area: 10,
            percent: Some([4.0, 1.0, 0.0]),
        };
        let analytic = [[None; 3], [Some(5.5), Some(1.0), Some(0.0)], [None; 3]];
        assert!((coverage_error(&r, &analytic) - 1.5).abs() < 1e-12);
        let missing = [[Some(0.0); 3], [Some(5.5), Some(1.0), Some(0.0)], [None; 3]];
        assert_eq!(coverage_error(&r, &missing), f64::INFINITY);
    }

    #[test]
    fn arm_means() {
        let m = Metrics {
            balanced_accuracy: Metric(Some(0.5)),
            ..Default::default()
        };
        let mut rows = vec![AblationRow::new("dfe", "a", 0, "delamination", &m)];
        rows.push(AblationRow::new(
            "dfe",
            "a",
            1,
            "delamination",
            &Metrics {
                balanced_accuracy: Metric(Some(1.0)),
                ..m
            },
        ));
        rows.push(AblationRow::new("dfe", "b", 1, "delamination", &m));
        assert_eq!(
            arm_mean(&rows, "a", "delamination", |r| r.balanced_accuracy),
            Metric(Some(0.75))
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_ablation_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("experiment,arm,seed,class,accuracy,balanced_accuracy"));
        assert!(text.contains("undefined"));
    }
}
