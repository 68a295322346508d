use std::path::Path;

use hullscan_tensor::{Ctx, Tensor, Var};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{
    fit, images_to_tensor, load_model, save_model, Schedule, StepOutput, TrainLog,
};
use crate::data::{select_cls_patches, DefectClass, ImageRecord, MaskSet, Patch};
use crate::error::{Error, Result};
use crate::nn::losses::softmax_nll;
use crate::nn::{
    argmax, classification_loss_var, softmax, ClsLossConfig, DfeConfig, DfeNet, DfeVariant,
    MultiClassNet,
};
use crate::raster::Mask;

pub const CLASSIFIER_ARCH: &str = "dfe-net";
pub const MULTICLASS_ARCH: &str = "multiclass-net";

const INFER_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClsTrainConfig {
    pub patch: u32,
    pub roi_thresh: f64,
    pub threshold: f64,
    pub schedule: Schedule,
    pub loss: ClsLossConfig,
    pub net: DfeConfig,
}

impl Default for ClsTrainConfig {
    fn default() -> Self {
        Self {
            patch: 64,
            roi_thresh: 0.1,
            threshold: 0.5,
            schedule: Schedule {
                epochs: 6,
                batch: 16,
                lr: 2e-3,
                clip_norm: 5.0,
                epoch_samples: 0,
            },
            loss: ClsLossConfig::default(),
            net: DfeConfig::desk(),
        }
    }
}

impl ClsTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate("classifier.schedule")?;
        self.loss.validate()?;
        self.net.validate()?;
        if self.patch as usize != self.net.stn.patch {
            return Err(Error::validation(
                "classifier.patch",
                "must equal the STN patch size",
            ));
        }
        if !(0.0..1.0).contains(&self.roi_thresh) {
            return Err(Error::validation(
                "classifier.roi_thresh",
                "must lie in [0, 1)",
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::validation(
                "classifier.threshold",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }

    /// Loss settings actually used for `variant`: the regularizer is only
    /// active for the full model.
    pub fn effective_loss(&self) -> ClsLossConfig {
        let mut loss = self.loss;
        if self.net.variant != DfeVariant::WithRegularizer {
            loss.lambda = 0.0;
        }
        loss
    }
}

/// Patch-level classifier output, as written to prediction dumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchPrediction {
    pub origin: (u32, u32),
    pub roi_ratio: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl PatchPrediction {
    pub fn probs(&self) -> [f64; 3] {
        [self.p1, self.p2, self.p3]
    }

    pub fn labels(&self, threshold: f64) -> [bool; 3] {
        self.probs().map(|p| p > threshold)
    }
}

/// Classification patches over the union of a record's labelled defects,
/// labelled from the same masks.
pub fn truth_cls_patches(
    records: &[ImageRecord],
    size: u32,
    roi_thresh: f64,
) -> Result<Vec<Patch>> {
    let mut out = Vec::new();
    for r in records {
        let d = r.defect_masks.as_ref().ok_or_else(|| {
            Error::validation("defect_masks", format!("{} has no defect masks", r.id))
        })?;
        out.extend(select_cls_patches(r, &d.any(), size, roi_thresh)?);
    }
    Ok(out)
}

/// Labelled pixels of each class inside a classification patch's RoI.
pub fn class_pixel_counts(masks: &MaskSet, patch: &Patch) -> Result<[usize; 3]> {
    let roi = patch.roi.as_ref().ok_or_else(|| {
        Error::validation("roi", format!("patch of {} has no RoI", patch.source_id))
    })?;
    let (row, col) = patch.origin;
    let (w, h) = masks.dims();
    Ok(DefectClass::ALL.map(|c| {
        let m = masks.get(c);
        let mut n = 0;
        for y in 0..roi.height().min(h.saturating_sub(row)) {
            for x in 0..roi.width().min(w.saturating_sub(col)) {
                n += (roi.get(x, y) && m.get(col + x, row + y)) as usize;
            }
        }
        n
    }))
}

/// Single-class target: the class with the most RoI pixels, first index on
/// ties.
pub fn dominant_class(counts: [usize; 3]) -> usize {
    argmax(&counts.map(|c| c as f64))
}

fn labels_tensor(labels: &[[bool; 3]]) -> Tensor<f32> {
    let data = labels
        .iter()
        .flat_map(|l| l.map(|b| b as u8 as f32))
        .collect();
    Tensor::from_vec(&[labels.len(), 3], data)
}

/// Batch images, each mirrored left-right with probability one half.
fn training_batch(patches: &[Patch], batch: &[usize], ctx: &mut Ctx<f32>) -> Tensor<f32> {
    let imgs: Vec<RgbImage> = batch
        .iter()
        .map(|&i| {
            let p = &patches[i].pixels;
            if ctx.rng().gen_bool(0.5) {
                image::imageops::flip_horizontal(p)
            } else {
                p.clone()
            }
        })
        .collect();
    let refs: Vec<&RgbImage> = imgs.iter().collect();
    images_to_tensor(&refs)
}

fn check_patches(patches: &[Patch], size: u32) -> Result<()> {
    if patches.is_empty() {
        return Err(Error::Empty("no classification patches".into()));
    }
    if let Some(p) = patches.iter().find(|p| p.size() != size) {
        return Err(Error::Shape(format!(
            "classification patch is {} px, expected {size}",
            p.size()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DefectClassifier {
    pub net: DfeNet<f32>,
    pub cfg: DfeConfig,
    pub roi_thresh: f64,
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    net: DfeConfig,
    roi_thresh: f64,
    threshold: f64,
}

/// Trains the multi-label classifier; the log carries the per-epoch mean
/// `|cos(F_G, F_D)|` whenever the network has both branches.
pub fn train_classifier(
    patches: &[Patch],
    cfg: &ClsTrainConfig,
    seed: u64,
) -> Result<(DefectClassifier, TrainLog)> {
    cfg.validate()?;
    check_patches(patches, cfg.patch)?;
    let loss_cfg = cfg.effective_loss();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = DfeNet::new(&cfg.net, &mut rng)?;
    let log = fit(
        &mut net,
        patches.len(),
        &cfg.schedule,
        seed,
        "classifier",
        |net, ctx, batch| {
            let x = Var::constant(training_batch(patches, batch, ctx));
            let labels: Vec<[bool; 3]> = batch.iter().map(|&i| patches[i].labels).collect();
            let out = net.forward(ctx, &x)?;
            let (loss, cos) = classification_loss_var(
                &out.probs,
                &labels_tensor(&labels),
                &out.f_g,
                out.f_d.as_ref(),
                &loss_cfg,
            );
            Ok(StepOutput { loss, cos })
        },
    )?;
    Ok((
        DefectClassifier {
            net,
            cfg: cfg.net.clone(),
            roi_thresh: cfg.roi_thresh,
            threshold: cfg.threshold,
        },
        log,
    ))
}

impl DefectClassifier {
    pub fn patch(&self) -> u32 {
        self.net.patch as u32
    }

    /// Probabilities in [`DefectClass::ALL`] order for each patch.
    pub fn predict_probs(&self, patches: &[Patch]) -> Result<Vec<[f64; 3]>> {
        let mut out = Vec::with_capacity(patches.len());
        for chunk in patches.chunks(INFER_BATCH) {
            let refs: Vec<&RgbImage> = chunk.iter().map(|p| &p.pixels).collect();
            let res = self
                .net
                .forward(&mut Ctx::eval(), &Var::constant(images_to_tensor(&refs)))?;
            let v = res.probs.value().to_f64_vec();
            out.extend(v.chunks(3).map(|c| [c[0], c[1], c[2]]));
        }
        Ok(out)
    }

    pub fn predict(&self, patches: &[Patch]) -> Result<Vec<PatchPrediction>> {
        Ok(self
            .predict_probs(patches)?
            .into_iter()
            .zip(patches)
            .map(|(p, patch)| PatchPrediction {
                origin: patch.origin,
                roi_ratio: patch.roi_ratio,
                p1: p[0],
                p2: p[1],
                p3: p[2],
            })
            .collect())
    }

    /// Selects and classifies the tiles of `record` whose RoI ratio passes
    /// the gate.
    pub fn classify_record(
        &self,
        record: &ImageRecord,
        roi: &Mask,
    ) -> Result<(Vec<Patch>, Vec<PatchPrediction>)> {
        let patches = select_cls_patches(record, roi, self.patch(), self.roi_thresh)?;
        let preds = if patches.is_empty() {
            Vec::new()
        } else {
            self.predict(&patches)?
        };
        Ok((patches, preds))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let stored = Stored {
            net: self.cfg.clone(),
            roi_thresh: self.roi_thresh,
            threshold: self.threshold,
        };
        save_model(path, &self.net, CLASSIFIER_ARCH, &stored)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, s): (DfeNet<f32>, Stored) = load_model(path, CLASSIFIER_ARCH, |s: &Stored| {
            DfeNet::new(&s.net, &mut ChaCha8Rng::seed_from_u64(0))
        })?;
        Ok(Self {
            net,
            cfg: s.net,
            roi_thresh: s.roi_thresh,
            threshold: s.threshold,
        })
    }
}

/// Per-pixel defect maps from patch decisions. Starts from the segmenter's
/// masks; every classified patch overwrites its RoI pixels with the classes
/// whose probability exceeds `threshold`, so an all-negative patch clears
/// them.
pub fn assemble_defect_map(
    segmented: &MaskSet,
    patches: &[Patch],
    preds: &[PatchPrediction],
    threshold: f64,
) -> Result<MaskSet> {
    if patches.len() != preds.len() {
        return Err(Error::Shape(format!(
            "{} patches vs {} predictions",
            patches.len(),
            preds.len()
        )));
    }
    let (w, h) = segmented.dims();
    let mut out = segmented.clone();
    for (patch, pred) in patches.iter().zip(preds) {
        let roi = patch
            .roi
            .as_ref()
            .ok_or_else(|| Error::validation("roi", "classification patch without RoI"))?;
        let labels = pred.labels(threshold);
        let (row, col) = patch.origin;
        for (k, class) in DefectClass::ALL.into_iter().enumerate() {
            let m = out.get_mut(class);
            for y in 0..roi.height() {
                for x in 0..roi.width() {
                    let (sx, sy) = (col + x, row + y);
                    if sx < w && sy < h && roi.get(x, y) {
                        m.set(sx, sy, labels[k]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Softmax baseline predicting one class per patch.
#[derive(Debug, Clone)]
pub struct MultiClassifier {
    pub net: MultiClassNet<f32>,
    pub cfg: DfeConfig,
}

pub fn train_multiclass(
    patches: &[Patch],
    targets: &[usize],
    cfg: &ClsTrainConfig,
    seed: u64,
) -> Result<(MultiClassifier, TrainLog)> {
    cfg.validate()?;
    check_patches(patches, cfg.patch)?;
    if targets.len() != patches.len() || targets.iter().any(|&t| t >= 3) {
        return Err(Error::validation(
            "targets",
            "need one class index below 3 per patch",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = MultiClassNet::new(&cfg.net, &mut rng)?;
    let log = fit(
        &mut net,
        patches.len(),
        &cfg.schedule,
        seed,
        "multiclass",
        |net, ctx, batch| {
            let x = Var::constant(training_batch(patches, batch, ctx));
            let t: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let logits = net.forward(ctx, &x)?;
            Ok(StepOutput {
                loss: softmax_nll(&logits, &t),
                cos: None,
            })
        },
    )?;
    Ok((
        MultiClassifier {
            net,
            cfg: cfg.net.clone(),
        },
        log,
    ))
}

impl MultiClassifier {
    pub fn predict_softmax(&self, patches: &[Patch]) -> Result<Vec<[f64; 3]>> {
        let mut out = Vec::with_capacity(patches.len());
        for chunk in patches.chunks(INFER_BATCH) {
            let refs: Vec<&RgbImage> = chunk.iter().map(|p| &p.pixels).collect();
            let logits = self
                .net
                .forward(&mut Ctx::eval(), &Var::constant(images_to_tensor(&refs)))?;
            let v = logits.value().to_f64_vec();
            out.extend(v.chunks(3).map(|c| {
                let s = softmax(c);
                [s[0], s[1], s[2]]
            }));
        }
        Ok(out)
    }

    pub fn predict(&self, patches: &[Patch]) -> Result<Vec<usize>> {
        Ok(self
            .predict_softmax(patches)?
            .iter()
            .map(|p| argmax(p))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(path, &self.net, MULTICLASS_ARCH, &self.cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, cfg) = load_model(path, MULTICLASS_ARCH, |c: &DfeConfig| {
            MultiClassNet::new(c, &mut ChaCha8Rng::seed_from_u64(0))
        })?;
        Ok(Self { net, cfg })
    }
}
