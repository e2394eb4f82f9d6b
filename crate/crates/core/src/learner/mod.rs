//! The substitute learner: multi-scale box features feeding a small dropout
//! MLP, trained with the weighted soft Dice loss on partially annotated
//! volumes.

mod adam;
mod batch;
mod checkpoint;
mod features;
mod loss;
mod mlp;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch::{sample_stratified_batch, AnnotationIndex, Patch};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use features::{extract_features, extract_features_dense, FeatureConfig, FeatureMatrix};
pub use loss::{dice_loss, dice_loss_grad, jaccard, DICE_EPSILON};
pub use mlp::{backward, forward, DropoutMask, MlpGrads, MlpParams, NUM_CLASSES};
pub(crate) use mlp::{first_hidden_tanh, mc_forward_single_hidden};
pub use train::{predict, train, ConvergenceRule, LearnerConfig, TrainConfig, TrainLogEntry, TrainOutcome};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume};

/// Ground-truth labels paired with a binary mask saying which voxels are
/// actually annotated. Voxels with weight 0 carry no training signal.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialLabels {
    labels: LabelVolume,
    weights: LabelVolume,
}

impl PartialLabels {
    pub fn new(labels: LabelVolume, weights: LabelVolume) -> Result<Self> {
        if labels.dims() != weights.dims() || labels.spacing() != weights.spacing() {
            return Err(Error::invalid(
                "labels and weights must share dims and spacing".to_string(),
            ));
        }
        Ok(PartialLabels { labels, weights })
    }

    /// Fully annotated volume: weights are all 1.
    pub fn full(labels: LabelVolume) -> Self {
        let weights = LabelVolume::new(labels.dims(), labels.spacing(), 1).expect("valid fill");
        PartialLabels { labels, weights }
    }

    /// Annotations on the given z-slices only; labels elsewhere are zeroed
    /// (their value is irrelevant by construction, weight 0 masks them).
    pub fn from_slices<'a>(
        reference: &LabelVolume,
        slices: impl IntoIterator<Item = &'a usize>,
    ) -> Result<Self> {
        let dims = reference.dims();
        let mut labels = LabelVolume::new(dims, reference.spacing(), 0)?;
        let mut weights = LabelVolume::new(dims, reference.spacing(), 0)?;
        for &z in slices {
            if z >= dims.nz {
                return Err(Error::invalid(format!("slice {z} out of range for nz={}", dims.nz)));
            }
            for j in 0..dims.ny {
                for i in 0..dims.nx {
                    labels.set(i, j, z, reference.get(i, j, z));
                    weights.set(i, j, z, 1);
                }
            }
        }
        Ok(PartialLabels { labels, weights })
    }

    pub fn labels(&self) -> &LabelVolume {
        &self.labels
    }

    pub fn weights(&self) -> &LabelVolume {
        &self.weights
    }

    /// Count of annotated voxels.
    pub fn annotated_count(&self) -> usize {
        self.weights.count_foreground()
    }
}

/// Dense per-voxel liver probability, every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVolume(ScalarVolume);

impl ProbVolume {
    pub fn new(v: ScalarVolume) -> Result<Self> {
        if let Some(bad) = v.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {bad} outside [0, 1]")));
        }
        Ok(ProbVolume(v))
    }

    pub fn values(&self) -> &ScalarVolume {
        &self.0
    }

    pub fn into_inner(self) -> ScalarVolume {
        self.0
    }

    /// Argmax labeling for two classes: label 1 where `p >= 0.5`.
    pub fn threshold(&self) -> LabelVolume {
        let data = self.0.data().iter().map(|&p| u8::from(p >= 0.5)).collect();
        LabelVolume::from_data(self.0.dims(), self.0.spacing(), data).expect("binary by construction")
    }
}
