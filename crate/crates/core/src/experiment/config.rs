//! Experiment configuration: a single JSON document with defaults for every
//! field and a validating loader.

use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, TrainConfig};
use crate::sampling::BudgetRule;
use crate::volume::PhantomSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uvs,
    Rvs,
    Uss,
    Rss,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Uvs, Strategy::Rvs, Strategy::Uss, Strategy::Rss];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uvs => "uvs",
            Strategy::Rvs => "rvs",
            Strategy::Uss => "uss",
            Strategy::Rss => "rss",
        }
    }

    pub fn selects_slices(self) -> bool {
        matches!(self, Strategy::Uss | Strategy::Rss)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uvs" => Ok(Strategy::Uvs),
            "rvs" => Ok(Strategy::Rvs),
            "uss" => Ok(Strategy::Uss),
            "rss" => Ok(Strategy::Rss),
            other => Err(format!("unknown strategy {other:?} (expected uvs, rvs, uss, or rss)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub pool: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            pool: 30,
            val: 4,
            test: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub phantom: PhantomSpec,
    pub splits: SplitCounts,
    /// Fully annotated volumes the initial model is trained on.
    pub initial_volumes: usize,
    pub iterations: usize,
    pub strategies: Vec<Strategy>,
    pub data_pool_baseline: bool,
    pub budget: BudgetRule,
    pub learner: LearnerConfig,
    /// Iteration-capped training configuration.
    pub train: TrainConfig,
    /// Training configuration for the converged phase.
    pub converged_train: TrainConfig,
    pub mc_samples: usize,
    pub seed: u64,
    /// Run the converged phase after the iterations.
    pub converged: bool,
    /// Persist intermediate probability/entropy volumes.
    pub keep_volumes: bool,
    /// Rayon worker threads; 0 picks the default.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            phantom: PhantomSpec::default(),
            splits: SplitCounts::default(),
            initial_volumes: 5,
            iterations: 5,
            strategies: Strategy::ALL.to_vec(),
            data_pool_baseline: true,
            budget: BudgetRule::default(),
            learner: LearnerConfig::default(),
            train: TrainConfig::default(),
            converged_train: TrainConfig {
                max_steps: 12_000,
                convergence: Some(Default::default()),
                ..TrainConfig::default()
            },
            mc_samples: 20,
            seed: 0,
            converged: false,
            keep_volumes: false,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(path.display().to_string(), format!("cannot read: {e}")))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.budget.validate()?;
        self.train.validate()?;
        self.converged_train.validate()?;
        self.learner.features.validate()?;
        if self.splits.pool == 0 || self.splits.val == 0 || self.splits.test == 0 {
            return Err(Error::invalid("every split needs at least one volume".to_string()));
        }
        if self.initial_volumes == 0 || self.initial_volumes > self.splits.pool {
            return Err(Error::invalid(format!(
                "initial_volumes must be in 1..=pool ({}), got {}",
                self.splits.pool, self.initial_volumes
            )));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be >= 1".to_string()));
        }
        let volume_arm = self
            .strategies
            .iter()
            .any(|s| matches!(s, Strategy::Uvs | Strategy::Rvs));
        if volume_arm && self.splits.pool < self.budget.volumes_per_iteration * self.iterations {
            return Err(Error::invalid(format!(
                "pool of {} cannot sustain {} iterations of {} volumes",
                self.splits.pool, self.iterations, self.budget.volumes_per_iteration
            )));
        }
        Ok(())
    }

    /// Strategies in config order with duplicates dropped.
    pub fn unique_strategies(&self) -> Vec<Strategy> {
        let mut seen = std::collections::BTreeSet::new();
        self.strategies
            .iter()
            .copied()
            .filter(|s| seen.insert(*s))
            .collect()
    }

    /// The budget reference protocol (UVS) must run whenever a slice arm
    /// needs budgets, even if UVS itself is not reported.
    pub fn needs_uvs_protocol(&self) -> bool {
        self.strategies
            .iter()
            .any(|s| s.selects_slices() || *s == Strategy::Uvs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn default_json_roundtrip() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_json_takes_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"seed": 9, "iterations": 2, "strategies": ["uss"]}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.iterations, 2);
        assert_eq!(cfg.strategies, vec![Strategy::Uss]);
        assert_eq!(cfg.mc_samples, 20);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"no_such_field": 1}"#).unwrap_err();
        assert!(err.to_string().contains("no_such_field"));
    }

    #[test]
    fn volume_arms_require_enough_pool() {
        let mut cfg = ExperimentConfig::default();
        cfg.splits.pool = 10;
        cfg.iterations = 5;
        cfg.strategies = vec![Strategy::Uvs];
        assert!(cfg.validate().is_err());
        cfg.strategies = vec![Strategy::Uss];
        cfg.validate().unwrap();
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("USS".parse::<Strategy>().unwrap(), Strategy::Uss);
        assert!("banana".parse::<Strategy>().is_err());
    }
}
