use std::path::Path;

use hullscan_tensor::optim::Adam;
use hullscan_tensor::{checkpoint, Ctx, Module, Tensor, Var};
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Mask;

/// Per-epoch training record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    /// Mean `|cos(F_G, F_D)|` per epoch where it applies.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epoch_cos: Vec<f64>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }
}

/// Optimizer settings shared by every stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Samples drawn per epoch; 0 uses the whole set.
    #[serde(default)]
    pub epoch_samples: usize,
}

impl Schedule {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::validation(
                format!("{field}.batch"),
                "must be positive",
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::validation(format!("{field}.lr"), "must be positive"));
        }
        Ok(())
    }
}

/// Scales 8-bit pixels to roughly `[-1, 1]`.
pub fn pixel_value(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Stacks images into `[n, 3, h, w]`.
pub fn images_to_tensor(imgs: &[&RgbImage]) -> Tensor<f32> {
    let (w, h) = imgs[0].dimensions();
    let plane = (w * h) as usize;
    let mut data = vec![0f32; imgs.len() * 3 * plane];
    for (b, img) in imgs.iter().enumerate() {
        assert_eq!(img.dimensions(), (w, h), "batch images differ in size");
        let base = b * 3 * plane;
        for (i, p) in img.pixels().enumerate() {
            for c in 0..3 {
                data[base + c * plane + i] = pixel_value(p[c]);
            }
        }
    }
    Tensor::from_vec(&[imgs.len(), 3, h as usize, w as usize], data)
}

/// Stacks per-sample channel masks into `[n, c, h, w]` of 0/1 values.
pub fn masks_to_tensor(samples: &[Vec<&Mask>]) -> Tensor<f32> {
    let c = samples[0].len();
    let (w, h) = samples[0][0].dims();
    let plane = (w * h) as usize;
    let mut data = vec![0f32; samples.len() * c * plane];
    for (b, chans) in samples.iter().enumerate() {
        for (k, m) in chans.iter().enumerate() {
            let base = (b * c + k) * plane;
            for (i, &v) in m.data().iter().enumerate() {
                data[base + i] = v as f32;
            }
        }
    }
    Tensor::from_vec(&[samples.len(), c, h as usize, w as usize], data)
}

/// Channel `k` of sample `b` of `[n, c, h, w]` logits, thresholded at 0
/// (probability 0.5).
pub fn logits_to_mask(t: &Tensor<f32>, b: usize, k: usize, threshold: f64) -> Mask {
    let (c, h, w) = (t.dim(1), t.dim(2), t.dim(3));
    let plane = h * w;
    let base = (b * c + k) * plane;
    let logit = (threshold / (1.0 - threshold)).ln() as f32;
    let data = t.data()[base..base + plane]
        .iter()
        .map(|&v| (v > logit) as u8)
        .collect();
    Mask::from_vec(w as u32, h as u32, data).expect("plane size matches")
}

/// Shuffled index batches for one epoch, optionally truncated to `limit`
/// samples.
pub fn epoch_batches(
    n: usize,
    batch: usize,
    limit: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    if limit > 0 {
        idx.truncate(limit);
    }
    idx.chunks(batch).map(|c| c.to_vec()).collect()
}

/// What one optimization step reports back to [`fit`].
pub struct StepOutput {
    pub loss: Var<f32>,
    /// Per-sample `|cos(F_G, F_D)|`, when computed.
    pub cos: Option<Vec<f64>>,
}

/// Adam training loop. `step` builds the batch loss from the current
/// weights; buffer updates recorded during the pass are applied after the
/// optimizer step.
pub fn fit<M: Module<f32>>(
    model: &mut M,
    n: usize,
    sched: &Schedule,
    seed: u64,
    label: &str,
    mut step: impl FnMut(&M, &mut Ctx<f32>, &[usize]) -> Result<StepOutput>,
) -> Result<TrainLog> {
    if n == 0 {
        return Err(Error::Empty(format!("{label}: no training samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_ba7c4);
    let mut opt = Adam::new(sched.lr).with_clip_norm(sched.clip_norm);
    let mut log = TrainLog::default();
    let mut global = 0u64;
    for epoch in 0..sched.epochs {
        let (mut total, mut count) = (0.0, 0usize);
        let (mut cos_total, mut cos_count) = (0.0, 0usize);
        for batch in epoch_batches(n, sched.batch, sched.epoch_samples, &mut rng) {
            let mut ctx = Ctx::train(step_seed(seed, global));
            global += 1;
            let out = step(model, &mut ctx, &batch)?;
            let value = out.loss.value().item() as f64;
            if !value.is_finite() {
                return Err(Error::Diverged(format!(
                    "{label}: non-finite loss in epoch {}",
                    epoch + 1
                )));
            }
            total += value * batch.len() as f64;
            count += batch.len();
            if let Some(c) = out.cos {
                cos_total += c.iter().sum::<f64>();
                cos_count += c.len();
            }
            let grads = out.loss.backward();
            let updates = ctx.take_updates();
            opt.step(model, &grads);
            model.apply_updates(updates);
        }
        let mean = total / count.max(1) as f64;
        log.epoch_loss.push(mean);
        if cos_count > 0 {
            log.epoch_cos.push(cos_total / cos_count as f64);
        }
        log::info!("{label}: epoch {} loss {mean:.5}", epoch + 1);
    }
    Ok(log)
}

/// Seed for the dropout stream of step `step`.
pub fn step_seed(seed: u64, step: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step)
}

pub fn save_model<M: Module<f32>, C: Serialize>(
    path: &Path,
    model: &M,
    arch: &str,
    cfg: &C,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    checkpoint::save(path, model, arch, &serde_json::to_value(cfg)?)?;
    Ok(())
}

/// Reads the config stored in a checkpoint, builds the model from it and
/// loads the weights.
pub fn load_model<M: Module<f32>, C: DeserializeOwned>(
    path: &Path,
    arch: &str,
    build: impl FnOnce(&C) -> Result<M>,
) -> Result<(M, C)> {
    let bytes = std::fs::read(path)?;
    let header = checkpoint::read_header(&bytes)?;
    let cfg: C = serde_json::from_value(header.config)?;
    let mut model = build(&cfg)?;
    checkpoint::decode_into(&bytes, arch, &mut model)?;
    Ok((model, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_partition_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = epoch_batches(10, 4, 0, &mut rng);
        assert_eq!(epoch_batches(10, 4, 5, &mut rng).concat().len(), 5);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn tensor_layouts() {
        let img = RgbImage::from_fn(3, 2, |x, y| image::Rgb([x as u8 * 10, y as u8, 255]));
        let t = images_to_tensor(&[&img]);
        assert_eq!(t.shape(), &[1, 3, 2, 3]);
        assert_eq!(t.get(&[0, 0, 0, 2]), pixel_value(20));
        assert_eq!(t.get(&[0, 1, 1, 0]), pixel_value(1));
        assert_eq!(t.get(&[0, 2, 1, 1]), 1.0);
        let m = Mask::from_fn(3, 2, |x, y| x == y);
        let mt = masks_to_tensor(&[vec![&m, &m]]);
        assert_eq!(mt.shape(), &[1, 2, 2, 3]);
        assert_eq!(mt.get(&[0, 1, 1, 1]), 1.0);
        let back = logits_to_mask(&mt.map(|v| v * 2.0 - 1.0), 0, 1, 0.5);
        assert_eq!(back, m);
    }
}
