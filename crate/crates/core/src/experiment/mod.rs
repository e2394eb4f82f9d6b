//! Experiment orchestration: dataset generation, the per-strategy
//! active-learning loop, the converged phase, and report emission.
//!
//! Every random draw flows through [`crate::stream::derive_rng`] with a path
//! naming the arm, iteration, and purpose, so arms are independent of each
//! other and of execution order, and a rerun with the same master seed
//! produces byte-identical outputs. The UVS protocol doubles as the budget
//! reference for the slice arms and runs whenever one of them is configured,
//! whether or not UVS itself is reported.

mod config;
mod report;

pub use config::{ExperimentConfig, SplitCounts, Strategy};
pub use report::{
    build_summary, read_cases_csv, write_cases_csv, write_steps_csv, write_summary_csv, CaseRow,
    StepsRow, SummaryRow,
};

use crate::error::{Error, Result};
use crate::learner::{
    predict, save_checkpoint, train, MlpParams, PartialLabels, TrainConfig, TrainOutcome,
};
use crate::metrics::evaluate_case;
use crate::sampling::{
    compute_slice_budget, effort_units, select_rss, select_rvs, select_uss, select_uvs, PoolSnapshot,
    PoolState, Selection, VolumeId, VolumeSelection,
};
use crate::stream::{derive_rng, derive_seed, Seg};
use crate::uncertainty::{
    mc_sample, predictive_entropy, slice_uncertainty_profile, volume_uncertainty, EntropyVolume,
    SliceUncertaintyProfile,
};
use crate::volume::{generate_phantom, LabelVolume, ScalarVolume};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Minimum distance between slice peaks, in slices.
pub const PEAK_MIN_DISTANCE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Pool,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Pool => "pool",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: VolumeId,
    pub split: Split,
    pub image: String,
    pub labels: String,
    pub nz: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub volumes: Vec<ManifestEntry>,
}

/// All volumes of one experiment, keyed by id.
pub struct Dataset {
    images: BTreeMap<VolumeId, ScalarVolume>,
    labels: BTreeMap<VolumeId, LabelVolume>,
    splits: BTreeMap<VolumeId, Split>,
}

impl Dataset {
    /// Generate phantoms for every split. Volume `i` of a split draws from
    /// the stream `(seed, "dataset", split, i)`.
    pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset> {
        let plan: Vec<(VolumeId, Split, u64)> = {
            let mut plan = Vec::new();
            let mut next_id = 0u32;
            for (split, count) in [
                (Split::Pool, cfg.splits.pool),
                (Split::Val, cfg.splits.val),
                (Split::Test, cfg.splits.test),
            ] {
                for i in 0..count {
                    let seed = derive_seed(
                        cfg.seed,
                        &[Seg::Label("dataset"), Seg::Label(split.name()), Seg::Index(i as u64)],
                    );
                    plan.push((VolumeId(next_id), split, seed));
                    next_id += 1;
                }
            }
            plan
        };
        let generated: Vec<(VolumeId, Split, ScalarVolume, LabelVolume)> = plan
            .par_iter()
            .map(|&(id, split, seed)| {
                let (img, lbl) = generate_phantom(&cfg.phantom, seed)?;
                Ok((id, split, img, lbl))
            })
            .collect::<Result<_>>()?;
        let mut ds = Dataset {
            images: BTreeMap::new(),
            labels: BTreeMap::new(),
            splits: BTreeMap::new(),
        };
        for (id, split, img, lbl) in generated {
            ds.images.insert(id, img);
            ds.labels.insert(id, lbl);
            ds.splits.insert(id, split);
        }
        Ok(ds)
    }

    pub fn ids_of(&self, split: Split) -> Vec<VolumeId> {
        self.splits
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn image(&self, id: VolumeId) -> &ScalarVolume {
        &self.images[&id]
    }

    pub fn labels_of(&self, id: VolumeId) -> &LabelVolume {
        &self.labels[&id]
    }

    /// Write every volume under `dir/dataset` and return the manifest.
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        let data_dir = dir.join("dataset");
        std::fs::create_dir_all(&data_dir)?;
        let mut volumes = Vec::new();
        let mut ordinal: BTreeMap<Split, usize> = BTreeMap::new();
        for (&id, &split) in &self.splits {
            let n = ordinal.entry(split).or_insert(0);
            let stem = format!("{}_{:03}", split.name(), n);
            *n += 1;
            let image_rel = format!("dataset/{stem}.img.mhd");
            let labels_rel = format!("dataset/{stem}.lbl.mhd");
            self.images[&id].write_mhd(dir.join(&image_rel))?;
            self.labels[&id].write_mhd(dir.join(&labels_rel))?;
            volumes.push(ManifestEntry {
                id,
                split,
                image: image_rel,
                labels: labels_rel,
                nz: self.images[&id].dims().nz,
            });
        }
        let manifest = Manifest {
            version: 1,
            volumes,
        };
        report::atomic_write(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(manifest)
    }

    /// Load a dataset from a manifest written by [`Dataset::write`].
    pub fn load(manifest_path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(manifest_path)
            .map_err(|e| Error::parse(manifest_path.display().to_string(), format!("cannot read: {e}")))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(manifest_path.display().to_string(), e.to_string()))?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut ds = Dataset {
            images: BTreeMap::new(),
            labels: BTreeMap::new(),
            splits: BTreeMap::new(),
        };
        for entry in &manifest.volumes {
            let img = ScalarVolume::read_mhd(base.join(&entry.image))?;
            let lbl = LabelVolume::read_mhd(base.join(&entry.labels))?;
            if ds.images.insert(entry.id, img).is_some() {
                return Err(Error::parse(
                    manifest_path.display().to_string(),
                    format!("volumes: duplicate id {}", entry.id),
                ));
            }
            ds.labels.insert(entry.id, lbl);
            ds.splits.insert(entry.id, entry.split);
        }
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
struct StateCheckpoint {
    arm: String,
    iteration: usize,
    snapshot: PoolSnapshot,
}

/// In-memory copy of everything the run wrote to disk.
pub struct RunOutputs {
    pub cases: Vec<CaseRow>,
    pub steps: Vec<StepsRow>,
    pub summary: Vec<SummaryRow>,
    pub log: String,
}

struct ArmOutputs {
    cases: Vec<CaseRow>,
    steps: Vec<StepsRow>,
    log: Vec<String>,
    /// Liver slices added per iteration (budget reference when this is UVS).
    liver_added: Vec<f64>,
    final_pool: PoolState,
    aborted: Option<String>,
}

/// Run the full experiment into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutputs> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_inner(cfg, out_dir))
}

fn run_inner(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutputs> {
    std::fs::create_dir_all(out_dir)?;
    report::atomic_write(
        &out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg)?.as_bytes(),
    )?;

    let mut log: Vec<String> = Vec::new();
    let dataset = Dataset::generate(cfg)?;
    dataset.write(out_dir)?;
    log.push(format!(
        "dataset: pool={} val={} test={} dims={}x{}x{}",
        cfg.splits.pool, cfg.splits.val, cfg.splits.test, cfg.phantom.dims.nx, cfg.phantom.dims.ny, cfg.phantom.dims.nz
    ));

    // Initial fully annotated volumes, drawn uniformly from the pool.
    let pool_ids = dataset.ids_of(Split::Pool);
    let initial_ids = {
        let mut rng = derive_rng(cfg.seed, &[Seg::Label("initial-selection")]);
        let mut ids = pool_ids.clone();
        use rand::Rng;
        let take = cfg.initial_volumes.min(ids.len());
        for i in 0..take {
            let j = rng.gen_range(i..ids.len());
            ids.swap(i, j);
        }
        let mut chosen: Vec<VolumeId> = ids[..take].to_vec();
        chosen.sort();
        chosen
    };

    let mut base_pool = PoolState::new(
        pool_ids
            .iter()
            .map(|&id| (id, dataset.labels_of(id).clone())),
    )?;
    base_pool.annotate(&Selection::Volumes(VolumeSelection {
        ids: initial_ids.clone(),
    }))?;
    let initial_ledger = base_pool.ledger();
    log.push(format!(
        "initial: volumes={:?} ledger={}/{}/{}",
        initial_ids.iter().map(|id| id.0).collect::<Vec<_>>(),
        initial_ledger.annotated_slices,
        initial_ledger.annotated_liver_slices,
        initial_ledger.unique_volumes
    ));

    let mut cases: Vec<CaseRow> = Vec::new();
    let mut steps: Vec<StepsRow> = Vec::new();

    // Initial model, shared bit-identically across arms.
    let initial_outcome = train_on_pool(&dataset, &base_pool, cfg, &cfg.train, derive_seed(cfg.seed, &[Seg::Label("train"), Seg::Label("initial")]))?;
    let initial_dir = out_dir.join("initial");
    std::fs::create_dir_all(&initial_dir)?;
    save_checkpoint(initial_dir.join("model.ckpt"), &initial_outcome.params, &cfg.learner.features)?;
    let initial_cases = evaluate_on_test(&dataset, &initial_outcome.params, cfg, "initial", 0, &initial_dir)?;
    log.push(format!(
        "model=initial steps_run={} best_step={} best_val_jaccard={} mean_test_dice={}",
        initial_outcome.steps_run,
        initial_outcome.best_step,
        fmt_opt_f64(initial_outcome.best_jaccard),
        fmt_opt_f64(mean_dice(&initial_cases)),
    ));
    steps.push(StepsRow {
        strategy: "initial".into(),
        iteration: 0,
        steps_run: initial_outcome.steps_run,
        best_step: initial_outcome.best_step,
    });
    cases.extend(initial_cases);

    // Budget reference: the UVS protocol runs whenever a slice arm needs
    // per-iteration liver-slice counts, reported or not.
    let strategies = cfg.unique_strategies();
    let uvs_reference = if cfg.needs_uvs_protocol() {
        Some(run_arm(
            Strategy::Uvs,
            cfg,
            &dataset,
            &base_pool,
            &initial_outcome.params,
            None,
            out_dir,
        )?)
    } else {
        None
    };

    // Remaining arms are mutually independent; run them in parallel and
    // emit their outputs in configured order.
    let other_arms: Vec<Strategy> = strategies
        .iter()
        .copied()
        .filter(|s| !(*s == Strategy::Uvs && uvs_reference.is_some()))
        .collect();
    let computed: BTreeMap<Strategy, ArmOutputs> = other_arms
        .par_iter()
        .map(|&strategy| {
            let outputs = run_arm(
                strategy,
                cfg,
                &dataset,
                &base_pool,
                &initial_outcome.params,
                uvs_reference.as_ref().map(|r| r.liver_added.as_slice()),
                out_dir,
            )?;
            Ok((strategy, outputs))
        })
        .collect::<Result<_>>()?;

    for strategy in &strategies {
        let outputs: &ArmOutputs = if *strategy == Strategy::Uvs && uvs_reference.is_some() {
            uvs_reference.as_ref().unwrap()
        } else {
            &computed[strategy]
        };
        cases.extend(outputs.cases.iter().cloned());
        steps.extend(outputs.steps.iter().cloned());
        log.extend(outputs.log.iter().cloned());
        if let Some(reason) = &outputs.aborted {
            log.push(format!("arm={strategy} aborted: {reason}"));
        }

        if cfg.converged && outputs.aborted.is_none() {
            let seed = derive_seed(
                cfg.seed,
                &[Seg::Label("arm"), Seg::Label(strategy.name()), Seg::Label("converged")],
            );
            let outcome = train_on_pool(&dataset, &outputs.final_pool, cfg, &cfg.converged_train, seed)?;
            let name = format!("{strategy}_converged");
            let arm_dir = out_dir.join("arms").join(strategy.name()).join("converged");
            std::fs::create_dir_all(&arm_dir)?;
            save_checkpoint(arm_dir.join("model.ckpt"), &outcome.params, &cfg.learner.features)?;
            let rows = evaluate_on_test(&dataset, &outcome.params, cfg, &name, cfg.iterations, &arm_dir)?;
            log.push(format!(
                "model={name} steps_run={} best_step={} best_val_jaccard={} mean_test_dice={}",
                outcome.steps_run,
                outcome.best_step,
                fmt_opt_f64(outcome.best_jaccard),
                fmt_opt_f64(mean_dice(&rows)),
            ));
            steps.push(StepsRow {
                strategy: name,
                iteration: cfg.iterations,
                steps_run: outcome.steps_run,
                best_step: outcome.best_step,
            });
            cases.extend(rows);
        }
    }

    if cfg.data_pool_baseline {
        let mut full_pool = PoolState::new(
            pool_ids
                .iter()
                .map(|&id| (id, dataset.labels_of(id).clone())),
        )?;
        full_pool.annotate(&Selection::Volumes(VolumeSelection { ids: pool_ids.clone() }))?;
        let mut phases: Vec<(&str, &TrainConfig, &'static str)> =
            vec![("data_pool", &cfg.train, "data-pool")];
        if cfg.converged {
            phases.push(("data_pool_converged", &cfg.converged_train, "data-pool-converged"));
        }
        for (name, train_cfg, seed_label) in phases {
            let seed = derive_seed(cfg.seed, &[Seg::Label("train"), Seg::Label(seed_label)]);
            let outcome = train_on_pool(&dataset, &full_pool, cfg, train_cfg, seed)?;
            let dir = out_dir.join(name);
            std::fs::create_dir_all(&dir)?;
            save_checkpoint(dir.join("model.ckpt"), &outcome.params, &cfg.learner.features)?;
            let rows = evaluate_on_test(&dataset, &outcome.params, cfg, name, 0, &dir)?;
            log.push(format!(
                "model={name} steps_run={} best_step={} best_val_jaccard={} mean_test_dice={}",
                outcome.steps_run,
                outcome.best_step,
                fmt_opt_f64(outcome.best_jaccard),
                fmt_opt_f64(mean_dice(&rows)),
            ));
            steps.push(StepsRow {
                strategy: name.to_string(),
                iteration: 0,
                steps_run: outcome.steps_run,
                best_step: outcome.best_step,
            });
            cases.extend(rows);
        }
    }

    let summary = build_summary(&cases);
    write_cases_csv(&out_dir.join("cases.csv"), &cases)?;
    write_steps_csv(&out_dir.join("steps.csv"), &steps)?;
    write_summary_csv(&out_dir.join("summary.csv"), &summary)?;
    for row in &summary {
        log.push(format!(
            "summary strategy={} iteration={} metric={} mean={} sd={} tail={}",
            row.strategy, row.iteration, row.metric, row.mean, row.sd, row.p05_or_p95
        ));
    }
    let log_text = log.join("\n") + "\n";
    report::atomic_write(&out_dir.join("log.txt"), log_text.as_bytes())?;

    Ok(RunOutputs {
        cases,
        steps,
        summary,
        log: log_text,
    })
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

fn mean_dice(rows: &[CaseRow]) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter_map(|r| r.metrics.dice).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Train on every annotated volume of `pool`, validating on the val split.
fn train_on_pool(
    dataset: &Dataset,
    pool: &PoolState,
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut parts: Vec<(VolumeId, PartialLabels)> = Vec::new();
    for id in pool.annotated_volumes() {
        let part = pool.partial_labels(id)?.expect("annotated volume");
        parts.push((id, part));
    }
    if parts.is_empty() {
        return Err(Error::EmptyAnnotation("training set has no annotated volumes".to_string()));
    }
    let train_set: Vec<(&ScalarVolume, &PartialLabels)> = parts
        .iter()
        .map(|(id, part)| (dataset.image(*id), part))
        .collect();
    let val_ids = dataset.ids_of(Split::Val);
    let val_set: Vec<(&ScalarVolume, &LabelVolume)> = val_ids
        .iter()
        .map(|&id| (dataset.image(id), dataset.labels_of(id)))
        .collect();
    let mut train_cfg = train_cfg.clone();
    train_cfg.seed = seed;
    train(&train_set, &val_set, &cfg.learner, &train_cfg)
}

/// Predict, threshold, and score every test volume; predictions are
/// persisted so each row can be re-derived with `evaluate`.
fn evaluate_on_test(
    dataset: &Dataset,
    params: &MlpParams,
    cfg: &ExperimentConfig,
    strategy: &str,
    iteration: usize,
    dir: &Path,
) -> Result<Vec<CaseRow>> {
    let pred_dir = dir.join("predictions");
    std::fs::create_dir_all(&pred_dir)?;
    let test_ids = dataset.ids_of(Split::Test);
    let results: Vec<(VolumeId, LabelVolume, Option<crate::learner::ProbVolume>)> = test_ids
        .par_iter()
        .map(|&id| {
            let prob = predict(params, dataset.image(id), &cfg.learner.features)?;
            let pred = prob.threshold();
            Ok((id, pred, cfg.keep_volumes.then_some(prob)))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(results.len());
    for (id, pred, prob) in results {
        pred.write_mhd(pred_dir.join(format!("test_{:03}.pred.mhd", id.0)))?;
        if let Some(prob) = prob {
            prob.values()
                .write_mhd(pred_dir.join(format!("test_{:03}.prob.mhd", id.0)))?;
        }
        let metrics = evaluate_case(&pred, dataset.labels_of(id))?;
        rows.push(CaseRow {
            case_id: id,
            strategy: strategy.to_string(),
            iteration,
            metrics,
        });
    }
    Ok(rows)
}

/// One active-learning arm, independent of all others: per iteration,
/// estimate what the strategy needs, select, annotate, retrain from
/// scratch, and evaluate on the test split.
fn run_arm(
    strategy: Strategy,
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    base_pool: &PoolState,
    initial_params: &MlpParams,
    uvs_liver_history: Option<&[f64]>,
    out_dir: &Path,
) -> Result<ArmOutputs> {
    let arm_dir = out_dir.join("arms").join(strategy.name());
    std::fs::create_dir_all(&arm_dir)?;
    let mut pool = base_pool.clone();
    let mut params = initial_params.clone();
    let mut out = ArmOutputs {
        cases: Vec::new(),
        steps: Vec::new(),
        log: Vec::new(),
        liver_added: Vec::new(),
        final_pool: pool.clone(),
        aborted: None,
    };
    let initial_liver_mean =
        base_pool.ledger().annotated_liver_slices as f64 / base_pool.ledger().unique_volumes.max(1) as f64;

    for iteration in 1..=cfg.iterations {
        let selection = match select_for(
            strategy,
            cfg,
            dataset,
            &pool,
            &params,
            iteration,
            uvs_liver_history,
            initial_liver_mean,
            &arm_dir,
        ) {
            Ok(sel) => sel,
            Err(Error::ExhaustedPool) => {
                out.aborted = Some(format!("pool exhausted at iteration {iteration}"));
                report::atomic_write(
                    &arm_dir.join("ABORTED.txt"),
                    format!("pool exhausted at iteration {iteration}\n").as_bytes(),
                )?;
                break;
            }
            Err(e) => return Err(e),
        };
        let selected = match &selection {
            Selection::Volumes(v) => v.ids.len(),
            Selection::Slices(s) => s.targets.len(),
        };
        let exhausted = matches!(&selection, Selection::Slices(s) if s.exhausted);
        let (_, delta) = pool.annotate(&selection)?;
        out.liver_added.push(delta.liver_slices as f64);
        let effort = effort_units(&delta);
        let ledger = pool.ledger();
        debug_assert_eq!(ledger, pool.recompute_ledger());

        let seed = derive_seed(
            cfg.seed,
            &[
                Seg::Label("arm"),
                Seg::Label(strategy.name()),
                Seg::Label("iter"),
                Seg::Index(iteration as u64),
                Seg::Label("train"),
            ],
        );
        let outcome = train_on_pool(dataset, &pool, cfg, &cfg.train, seed)?;
        params = outcome.params.clone();

        let iter_dir = arm_dir.join(format!("iter{iteration}"));
        std::fs::create_dir_all(&iter_dir)?;
        save_checkpoint(iter_dir.join("model.ckpt"), &outcome.params, &cfg.learner.features)?;
        let rows = evaluate_on_test(dataset, &params, cfg, strategy.name(), iteration, &iter_dir)?;
        let state = StateCheckpoint {
            arm: strategy.name().to_string(),
            iteration,
            snapshot: pool.snapshot(),
        };
        report::atomic_write(
            &arm_dir.join(format!("state_iter{iteration}.json")),
            serde_json::to_string_pretty(&state)?.as_bytes(),
        )?;

        out.log.push(format!(
            "arm={} iter={} selected={} exhausted={} effort={} ledger={}/{}/{} steps_run={} best_step={} mean_test_dice={}",
            strategy,
            iteration,
            selected,
            exhausted,
            effort,
            ledger.annotated_slices,
            ledger.annotated_liver_slices,
            ledger.unique_volumes,
            outcome.steps_run,
            outcome.best_step,
            fmt_opt_f64(mean_dice(&rows)),
        ));
        out.steps.push(StepsRow {
            strategy: strategy.name().to_string(),
            iteration,
            steps_run: outcome.steps_run,
            best_step: outcome.best_step,
        });
        out.cases.extend(rows);
    }
    out.final_pool = pool;
    Ok(out)
}

/// Compute whatever the strategy needs for this iteration and return its
/// selection.
#[allow(clippy::too_many_arguments)]
fn select_for(
    strategy: Strategy,
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    pool: &PoolState,
    params: &MlpParams,
    iteration: usize,
    uvs_liver_history: Option<&[f64]>,
    initial_liver_mean: f64,
    arm_dir: &Path,
) -> Result<Selection> {
    let k = cfg.budget.volumes_per_iteration;
    match strategy {
        Strategy::Uvs => {
            let entropies = arm_entropies(strategy, cfg, dataset, pool, params, iteration, arm_dir)?;
            let mut uncertainties = BTreeMap::new();
            for (id, entropy) in &entropies {
                let predicted = predict(params, dataset.image(*id), &cfg.learner.features)?.threshold();
                let u = volume_uncertainty(entropy, &predicted)?;
                uncertainties.insert(*id, u.value);
            }
            Ok(Selection::Volumes(select_uvs(pool, &uncertainties, k)?))
        }
        Strategy::Rvs => {
            let mut rng = derive_rng(
                cfg.seed,
                &[
                    Seg::Label("arm"),
                    Seg::Label("rvs"),
                    Seg::Label("iter"),
                    Seg::Index(iteration as u64),
                    Seg::Label("select"),
                ],
            );
            Ok(Selection::Volumes(select_rvs(pool, &mut rng, k)?))
        }
        Strategy::Uss => {
            let n_slices = slice_budget(cfg, iteration, uvs_liver_history, initial_liver_mean)?;
            let entropies = arm_entropies(strategy, cfg, dataset, pool, params, iteration, arm_dir)?;
            let profiles: BTreeMap<VolumeId, SliceUncertaintyProfile> = entropies
                .iter()
                .map(|(id, e)| {
                    (
                        *id,
                        SliceUncertaintyProfile::new(slice_uncertainty_profile(e), PEAK_MIN_DISTANCE),
                    )
                })
                .collect();
            Ok(Selection::Slices(select_uss(pool, &profiles, n_slices)?))
        }
        Strategy::Rss => {
            let n_liver = slice_budget(cfg, iteration, uvs_liver_history, initial_liver_mean)?;
            let mut rng = derive_rng(
                cfg.seed,
                &[
                    Seg::Label("arm"),
                    Seg::Label("rss"),
                    Seg::Label("iter"),
                    Seg::Index(iteration as u64),
                    Seg::Label("select"),
                ],
            );
            Ok(Selection::Slices(select_rss(pool, &mut rng, n_liver)))
        }
    }
}

/// Slice budget N_S for this iteration: the running mean of liver slices
/// added per UVS iteration so far, divided by the configured divisor; the
/// first iteration falls back to the initial set's per-volume mean scaled
/// to one volume-iteration.
fn slice_budget(
    cfg: &ExperimentConfig,
    iteration: usize,
    uvs_liver_history: Option<&[f64]>,
    initial_liver_mean: f64,
) -> Result<usize> {
    let history = uvs_liver_history.unwrap_or(&[]);
    let past = &history[..history.len().min(iteration - 1)];
    let list: Vec<f64> = if past.is_empty() {
        vec![initial_liver_mean * cfg.budget.volumes_per_iteration as f64]
    } else {
        past.to_vec()
    };
    compute_slice_budget(&list, cfg.budget.liver_slice_divisor, cfg.budget.rounding)
}

/// MC-dropout entropy for every eligible pool volume of this arm/iteration.
fn arm_entropies(
    strategy: Strategy,
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    pool: &PoolState,
    params: &MlpParams,
    iteration: usize,
    arm_dir: &Path,
) -> Result<Vec<(VolumeId, EntropyVolume)>> {
    let eligible = pool.eligible_volumes();
    let entropies: Vec<(VolumeId, EntropyVolume)> = eligible
        .par_iter()
        .map(|&id| {
            let seed = derive_seed(
                cfg.seed,
                &[
                    Seg::Label("arm"),
                    Seg::Label(strategy.name()),
                    Seg::Label("iter"),
                    Seg::Index(iteration as u64),
                    Seg::Label("mc"),
                    Seg::Index(id.0 as u64),
                ],
            );
            let samples = mc_sample(params, dataset.image(id), &cfg.learner.features, cfg.mc_samples, seed)?;
            Ok((id, predictive_entropy(&samples)?))
        })
        .collect::<Result<_>>()?;
    if cfg.keep_volumes {
        let dir = arm_dir.join(format!("iter{iteration}")).join("entropy");
        std::fs::create_dir_all(&dir)?;
        for (id, e) in &entropies {
            e.values().write_mhd(dir.join(format!("pool_{:03}.entropy.mhd", id.0)))?;
        }
    }
    Ok(entropies)
}

/// Output directory layout helper used by the CLI.
pub fn default_out_dir() -> PathBuf {
    PathBuf::from("alsim-out")
}
