//! Training loop: stratified batches, Adam updates, and periodic validation
//! with Jaccard-based model selection (best checkpoint wins, earliest on
//! ties). Retraining is always from scratch; the whole run is a pure
//! function of its inputs and `TrainConfig::seed`.

use super::adam::{adam_step, AdamConfig, AdamState};
use super::batch::{sample_stratified_batch, AnnotationIndex};
use super::features::{extract_features_dense, FeatureConfig, FeatureMatrix};
use super::loss::jaccard;
use super::mlp::{backward, forward, DropoutMask, MlpParams};
use super::{PartialLabels, ProbVolume};
use crate::error::{Error, Result};
use crate::stream::{derive_rng, Seg};
use crate::volume::{LabelVolume, ScalarVolume};
use serde::{Deserialize, Serialize};

/// Architecture and feature settings, fixed across an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub features: FeatureConfig,
    pub hidden_sizes: Vec<usize>,
    pub dropout: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            features: FeatureConfig::default(),
            hidden_sizes: vec![32],
            dropout: 0.25,
        }
    }
}

impl LearnerConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.features.feature_count()];
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(super::NUM_CLASSES);
        sizes
    }
}

/// Early-stop rule for the converged phase: stop once the best validation
/// Jaccard has not improved by `min_improvement` over the trailing
/// `window_fraction` of the step budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRule {
    pub min_improvement: f64,
    pub window_fraction: f64,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        ConvergenceRule {
            min_improvement: 1e-4,
            window_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_patches: usize,
    pub patch_size: (usize, usize, usize),
    pub max_steps: usize,
    pub validation_interval: usize,
    pub seed: u64,
    #[serde(default)]
    pub convergence: Option<ConvergenceRule>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_patches: 8,
            patch_size: (16, 16, 4),
            max_steps: 2000,
            validation_interval: 200,
            seed: 0,
            convergence: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.adam.learning_rate
            )));
        }
        if self.validation_interval == 0 {
            return Err(Error::invalid("validation interval must be >= 1".to_string()));
        }
        if self.batch_patches < 2 {
            return Err(Error::invalid(
                "stratified batches need at least 2 patches".to_string(),
            ));
        }
        if self.patch_size.0 == 0 || self.patch_size.1 == 0 || self.patch_size.2 == 0 {
            return Err(Error::invalid("patch size must be positive".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss: f64,
    pub val_jaccard: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub log: Vec<TrainLogEntry>,
    /// Step whose checkpoint was selected (0 means the initial parameters).
    pub best_step: usize,
    pub best_jaccard: Option<f64>,
    pub steps_run: usize,
}

/// Train from scratch and return the checkpoint with the best mean
/// validation Jaccard.
pub fn train(
    train_set: &[(&ScalarVolume, &PartialLabels)],
    val_set: &[(&ScalarVolume, &LabelVolume)],
    learner: &LearnerConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    learner.features.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty".to_string()));
    }
    for (v, p) in train_set {
        if v.dims() != p.labels().dims() {
            return Err(Error::invalid("volume/labels dims mismatch in training set".to_string()));
        }
    }

    let mut init_rng = derive_rng(cfg.seed, &[Seg::Label("train"), Seg::Label("init")]);
    let mut params = MlpParams::init(&learner.layer_sizes(), learner.dropout, &mut init_rng)?;

    let mut log = Vec::new();
    if cfg.max_steps == 0 {
        return Ok(TrainOutcome {
            params,
            log,
            best_step: 0,
            best_jaccard: None,
            steps_run: 0,
        });
    }

    // Dense features and annotation lists, computed once per run.
    let train_features: Vec<FeatureMatrix> = train_set
        .iter()
        .map(|(v, _)| extract_features_dense(v, &learner.features))
        .collect::<Result<_>>()?;
    let parts: Vec<&PartialLabels> = train_set.iter().map(|(_, p)| *p).collect();
    let index = AnnotationIndex::build(&parts);
    let val_features: Vec<FeatureMatrix> = val_set
        .iter()
        .map(|(v, _)| extract_features_dense(v, &learner.features))
        .collect::<Result<_>>()?;

    let mut batch_rng = derive_rng(cfg.seed, &[Seg::Label("train"), Seg::Label("batch")]);
    let mut dropout_rng = derive_rng(cfg.seed, &[Seg::Label("train"), Seg::Label("dropout")]);
    let mut state = AdamState::new(&params);

    let mut best: Option<(f64, usize, MlpParams)> = None;
    let rule = cfg.convergence;
    let window = rule.map(|r| ((r.window_fraction * cfg.max_steps as f64).ceil() as usize).max(1));
    let mut sig_best = f64::NEG_INFINITY;
    let mut last_sig_step = 0usize;

    let mut step = 0usize;
    while step < cfg.max_steps {
        step += 1;
        let patches = sample_stratified_batch(
            &parts,
            &index,
            cfg.batch_patches,
            cfg.patch_size,
            &mut batch_rng,
        )?;
        let rows: usize = patches.iter().map(|p| p.indices.len()).sum();
        let width = learner.features.feature_count();
        let mut data = Vec::with_capacity(rows * width);
        let mut y = Vec::with_capacity(rows);
        let mut w = Vec::with_capacity(rows);
        for patch in &patches {
            let feats = &train_features[patch.volume];
            for &idx in &patch.indices {
                data.extend_from_slice(feats.row(idx));
            }
            y.extend_from_slice(&patch.y);
            w.extend_from_slice(&patch.w);
        }
        let batch_features = FeatureMatrix { rows, width, data };
        let mask = DropoutMask::draw(&params, rows, &mut dropout_rng);
        let (grads, loss, _) = backward(&params, &batch_features, Some(&mask), &y, &w)?;
        adam_step(&mut params, &grads, &mut state, &cfg.adam);

        let on_grid = step % cfg.validation_interval == 0;
        let last = step == cfg.max_steps;
        if on_grid || last {
            let val_jaccard = mean_val_jaccard(&params, &val_features, val_set)?;
            log.push(TrainLogEntry {
                step,
                loss,
                val_jaccard,
            });
            let improved = match &best {
                Some((best_j, _, _)) => val_jaccard > *best_j,
                None => true,
            };
            if improved {
                best = Some((val_jaccard, step, params.clone()));
            }
            if let (Some(rule), Some(window)) = (rule, window) {
                if val_jaccard >= sig_best + rule.min_improvement {
                    sig_best = val_jaccard;
                    last_sig_step = step;
                } else if step - last_sig_step >= window {
                    break;
                }
            }
        }
    }

    let (best_jaccard, best_step, best_params) = match best {
        Some((j, s, p)) => (Some(j), s, p),
        None => (None, 0, params),
    };
    Ok(TrainOutcome {
        params: best_params,
        log,
        best_step,
        best_jaccard,
        steps_run: step,
    })
}

fn mean_val_jaccard(
    params: &MlpParams,
    val_features: &[FeatureMatrix],
    val_set: &[(&ScalarVolume, &LabelVolume)],
) -> Result<f64> {
    let mut total = 0.0;
    for (feats, (v, reference)) in val_features.iter().zip(val_set) {
        let prob = predict_from_features(params, feats, v)?;
        total += jaccard(&prob.threshold(), reference)?;
    }
    Ok(total / val_set.len() as f64)
}

/// Dense dropout-off inference over a whole volume.
pub fn predict(params: &MlpParams, v: &ScalarVolume, cfg: &FeatureConfig) -> Result<ProbVolume> {
    let feats = extract_features_dense(v, cfg)?;
    predict_from_features(params, &feats, v)
}

pub(crate) fn predict_from_features(
    params: &MlpParams,
    feats: &FeatureMatrix,
    v: &ScalarVolume,
) -> Result<ProbVolume> {
    use rayon::prelude::*;
    const CHUNK_ROWS: usize = 16384;
    let width = feats.width;
    let chunks: Vec<&[f64]> = feats.data.chunks(CHUNK_ROWS * width).collect();
    let outputs: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|chunk| {
            let rows = chunk.len() / width;
            let fm = FeatureMatrix {
                rows,
                width,
                data: chunk.to_vec(),
            };
            forward(params, &fm, None).map(|probs| (0..rows).map(|r| probs[r * 2 + 1]).collect())
        })
        .collect::<Result<_>>()?;
    let mut p1 = Vec::with_capacity(feats.rows);
    for out in outputs {
        p1.extend(out);
    }
    let scalar = ScalarVolume::from_data(v.dims(), v.spacing(), p1)?;
    ProbVolume::new(scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{generate_phantom, Dims, PhantomSpec, Spacing};

    fn toy_phantom(seed: u64) -> (ScalarVolume, LabelVolume) {
        let spec = PhantomSpec {
            dims: Dims { nx: 20, ny: 20, nz: 16 },
            spacing: Spacing { dx: 1.0, dy: 1.0, dz: 1.5 },
            organ_count: (1, 1),
            organ_semi_axes: (3.0, 5.0),
            lesion_count: (0, 1),
            lesion_radius: (1.0, 2.0),
            background_intensity: (40.0, 10.0),
            organ_intensity: (110.0, 10.0),
            lesion_intensity: (70.0, 10.0),
            smoothing_sigma: 0.8,
        };
        generate_phantom(&spec, seed).unwrap()
    }

    fn small_learner() -> LearnerConfig {
        LearnerConfig {
            features: FeatureConfig {
                scales: vec![1, 3],
                include_raw: false,
                include_z: true,
                intensity_shift: 80.0,
                intensity_scale: 40.0,
            },
            hidden_sizes: vec![8],
            dropout: 0.25,
        }
    }

    #[test]
    fn zero_steps_returns_initial_params_and_empty_log() {
        let (img, lbl) = toy_phantom(1);
        let part = PartialLabels::full(lbl.clone());
        let cfg = TrainConfig {
            max_steps: 0,
            ..TrainConfig::default()
        };
        let out = train(&[(&img, &part)], &[(&img, &lbl)], &small_learner(), &cfg).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.steps_run, 0);
        // Initial params are reproducible from the seed alone.
        let mut rng = derive_rng(cfg.seed, &[Seg::Label("train"), Seg::Label("init")]);
        let expect = MlpParams::init(&small_learner().layer_sizes(), 0.25, &mut rng).unwrap();
        assert_eq!(out.params, expect);
    }

    #[test]
    fn training_is_deterministic() {
        let (img, lbl) = toy_phantom(2);
        let part = PartialLabels::full(lbl.clone());
        let cfg = TrainConfig {
            max_steps: 40,
            validation_interval: 20,
            batch_patches: 2,
            patch_size: (6, 6, 3),
            seed: 77,
            ..TrainConfig::default()
        };
        let learner = small_learner();
        let a = train(&[(&img, &part)], &[(&img, &lbl)], &learner, &cfg).unwrap();
        let b = train(&[(&img, &part)], &[(&img, &lbl)], &learner, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        assert_eq!(a.best_step, b.best_step);
    }

    #[test]
    fn separable_toy_set_improves_validation_jaccard() {
        let (img_a, lbl_a) = toy_phantom(3);
        let (img_b, lbl_b) = toy_phantom(4);
        let (img_v, lbl_v) = toy_phantom(5);
        let parts = [PartialLabels::full(lbl_a), PartialLabels::full(lbl_b)];
        let train_set = [(&img_a, &parts[0]), (&img_b, &parts[1])];
        let val_set = [(&img_v, &lbl_v)];
        let learner = small_learner();
        let cfg = TrainConfig {
            max_steps: 2000,
            validation_interval: 100,
            batch_patches: 4,
            patch_size: (8, 8, 4),
            seed: 5,
            ..TrainConfig::default()
        };
        // Initial-model validation score (untrained parameters).
        let mut rng = derive_rng(cfg.seed, &[Seg::Label("train"), Seg::Label("init")]);
        let init = MlpParams::init(&learner.layer_sizes(), learner.dropout, &mut rng).unwrap();
        let init_j = {
            let prob = predict(&init, &img_v, &learner.features).unwrap();
            jaccard(&prob.threshold(), &lbl_v).unwrap()
        };
        let out = train(&train_set, &val_set, &learner, &cfg).unwrap();
        let final_j = out.best_jaccard.unwrap();
        assert!(
            final_j > init_j,
            "expected improvement: initial {init_j}, final {final_j}"
        );
        assert!(final_j > 0.5, "toy set should be mostly separable, got {final_j}");
    }

    #[test]
    fn predict_matches_row_by_row_forward() {
        let (img, _) = toy_phantom(6);
        let learner = small_learner();
        let mut rng = derive_rng(9, &[Seg::Label("x")]);
        let params = MlpParams::init(&learner.layer_sizes(), 0.25, &mut rng).unwrap();
        let prob = predict(&params, &img, &learner.features).unwrap();
        let feats = extract_features_dense(&img, &learner.features).unwrap();
        let probs = forward(&params, &feats, None).unwrap();
        for r in 0..feats.rows {
            assert_eq!(prob.values().data()[r], probs[r * 2 + 1]);
        }
    }

    #[test]
    fn zero_params_predict_half_everywhere() {
        let (img, _) = toy_phantom(7);
        let learner = small_learner();
        let params = MlpParams::zeros(&learner.layer_sizes(), 0.0).unwrap();
        let prob = predict(&params, &img, &learner.features).unwrap();
        assert!(prob.values().data().iter().all(|&p| p == 0.5));
    }
}
