use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rasterize_defects, render_scene, MaskSet, Scene, SceneRanges, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub scenes: usize,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Fraction of defect blobs left out of the human labels of training
    /// scenes. Validation and test labels are always complete.
    pub unlabeled_blob_frac: f64,
    pub seed: u64,
    pub ranges: SceneRanges,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            scenes: 200,
            val_frac: 0.0,
            test_frac: 0.2,
            unlabeled_blob_frac: 0.0,
            seed: 0,
            ranges: SceneRanges::default(),
        }
    }
}

/// A generated scene whose record carries the human labels, alongside the
/// complete defect masks.
#[derive(Debug, Clone)]
pub struct CorpusScene {
    pub scene: Scene,
    pub truth: MaskSet,
}

impl CorpusScene {
    pub fn record(&self) -> &super::ImageRecord {
        &self.scene.record
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::validation("scenes", "must be positive"));
        }
        for (name, v) in [
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
            ("unlabeled_blob_frac", self.unlabeled_blob_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(name, format!("{v} not in [0, 1]")));
            }
        }
        if self.val_frac + self.test_frac > 1.0 {
            return Err(Error::validation(
                "test_frac",
                "val_frac + test_frac exceeds 1",
            ));
        }
        Ok(())
    }

    /// Split of scene `i`: the first scenes are training, then validation,
    /// then test.
    pub fn split_of(&self, i: usize) -> Split {
        let n_test = (self.scenes as f64 * self.test_frac).round() as usize;
        let n_val = (self.scenes as f64 * self.val_frac).round() as usize;
        let n_train = self.scenes.saturating_sub(n_test + n_val);
        if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn generate_one(&self, i: usize) -> Result<CorpusScene> {
        // Independent per-scene streams so any scene can be regenerated alone.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64 + 1);
        let scene_seed: u64 = rng.gen();
        let spec = self.ranges.sample(&mut rng, scene_seed);
        let mut scene = render_scene(&spec)?;
        let split = self.split_of(i);
        let truth = scene
            .record
            .defect_masks
            .clone()
            .expect("generator emits masks");
        scene.record.id = format!("s{i:04}");
        scene.record.split = split;
        if split == Split::Train && self.unlabeled_blob_frac > 0.0 && !scene.blobs.is_empty() {
            let drop = (scene.blobs.len() as f64 * self.unlabeled_blob_frac).round() as usize;
            let mut idx: Vec<usize> = (0..scene.blobs.len()).collect();
            idx.shuffle(&mut rng);
            let kept: Vec<_> = idx[drop..].iter().map(|&k| scene.blobs[k]).collect();
            let ship = scene
                .record
                .ship_mask
                .as_ref()
                .expect("generator emits ship");
            scene.record.defect_masks = Some(rasterize_defects(&kept, ship, &scene.sections)?);
        }
        Ok(CorpusScene { scene, truth })
    }

    pub fn generate(&self) -> Result<Vec<CorpusScene>> {
        self.validate()?;
        (0..self.scenes).map(|i| self.generate_one(i)).collect()
    }
}
