//! Network definitions and losses shared by the pipeline stages.

mod blocks;
pub mod densenet;
pub mod dfe;
pub mod losses;
pub mod resnet;
pub mod section_net;
pub mod stn;
pub mod unet;

pub use blocks::{BasicBlock, ConvBn};
pub use densenet::{DenseNet, DenseNetConfig};
pub use dfe::{argmax, softmax, DfeConfig, DfeNet, DfeOutput, DfeVariant, MultiClassNet};
pub use hullscan_tensor::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use losses::{
    bce, bce_with_logits, classification_loss, classification_loss_var, cosine_similarity,
    range_aware_loss, range_aware_loss_var, ClsLossConfig,
};
pub use resnet::{ResNet, ResNetConfig};
pub use section_net::{SectionNet, SectionNetConfig};
pub use stn::{AffineParams, Stn, StnConfig};
pub use unet::{Unet, UnetConfig};

use serde::{Deserialize, Serialize};

use crate::data::DefectClass;
use crate::error::{Error, Result};

/// Output channel order of the defect segmenter.
pub const SEG_CHANNELS: [DefectClass; 3] = [
    DefectClass::Corrosion,
    DefectClass::Delamination,
    DefectClass::Fouling,
];

/// Channel of `class` in segmenter output.
pub fn seg_channel(class: DefectClass) -> usize {
    SEG_CHANNELS
        .iter()
        .position(|&c| c == class)
        .expect("every class has a channel")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Image,
    Feature,
    Sequence,
    Grid,
    Logits,
}

/// Declared shape at a block boundary. `None` dimensions match anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub shape: Vec<Option<usize>>,
    pub role: Role,
}

impl TensorSpec {
    pub fn new(role: Role, shape: &[Option<usize>]) -> Self {
        Self {
            shape: shape.to_vec(),
            role,
        }
    }

    pub fn matches(&self, shape: &[usize]) -> bool {
        self.shape.len() == shape.len()
            && self
                .shape
                .iter()
                .zip(shape)
                .all(|(want, got)| want.is_none_or(|w| w == *got))
    }

    pub fn check(&self, what: &str, shape: &[usize]) -> Result<()> {
        if self.matches(shape) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: expected {:?} {:?}, got {shape:?}",
                self.role, self.shape
            )))
        }
    }
}
