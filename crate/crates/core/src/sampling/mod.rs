//! Pool bookkeeping, the oracle annotator, the four query strategies, and
//! the annotation-effort budget.
//!
//! Reference labels live inside [`PoolState`] and are never handed out
//! whole: the learner-facing surface is [`PoolState::partial_labels`], which
//! only reveals label values on annotated voxels.

mod budget;
mod strategies;

pub use budget::{compute_slice_budget, effort_units, BudgetRounding, BudgetRule};
pub use strategies::{select_rss, select_rvs, select_uss, select_uvs};

use crate::error::{Error, Result};
use crate::learner::PartialLabels;
use crate::volume::LabelVolume;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Identifier of a pool volume; ordering breaks selection ties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VolumeId(pub u32);

impl fmt::Display for VolumeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationStatus {
    Unannotated,
    Slices(BTreeSet<usize>),
    Full,
}

impl AnnotationStatus {
    pub fn is_full(&self) -> bool {
        matches!(self, AnnotationStatus::Full)
    }

    pub fn is_unannotated(&self) -> bool {
        matches!(self, AnnotationStatus::Unannotated)
    }
}

/// Cumulative annotation totals; auditable against per-volume status.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub annotated_slices: usize,
    pub annotated_liver_slices: usize,
    pub unique_volumes: usize,
}

/// What one `annotate` call added, split by how the slices were bought.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LedgerDelta {
    pub slices: usize,
    pub liver_slices: usize,
    /// Liver slices gained through full-volume annotation.
    pub full_volume_liver_slices: usize,
    /// Liver slices gained as isolated slice annotations.
    pub isolated_liver_slices: usize,
    pub new_volumes: usize,
}

struct PoolRecord {
    reference: LabelVolume,
    status: AnnotationStatus,
    /// Cached per-slice liver flags for the reference.
    liver_slices: Vec<bool>,
}

/// Per-volume annotation status plus the cumulative effort ledger.
pub struct PoolState {
    records: BTreeMap<VolumeId, PoolRecord>,
    ledger: Ledger,
}

/// Either whole volumes or individual `(volume, z)` slices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    Volumes(VolumeSelection),
    Slices(SliceSelection),
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct VolumeSelection {
    pub ids: Vec<VolumeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SliceSelection {
    pub targets: Vec<(VolumeId, usize)>,
    /// Set when the pool ran out before the requested count was reached.
    pub exhausted: bool,
}

impl Selection {
    pub fn is_empty(&self) -> bool {
        match self {
            Selection::Volumes(v) => v.ids.is_empty(),
            Selection::Slices(s) => s.targets.is_empty(),
        }
    }
}

/// Serializable annotation state (no reference labels), for checkpointing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSnapshot {
    pub ledger: Ledger,
    pub volumes: Vec<(VolumeId, AnnotationStatus)>,
}

impl Clone for PoolState {
    fn clone(&self) -> Self {
        PoolState {
            records: self
                .records
                .iter()
                .map(|(id, r)| {
                    (
                        *id,
                        PoolRecord {
                            reference: r.reference.clone(),
                            status: r.status.clone(),
                            liver_slices: r.liver_slices.clone(),
                        },
                    )
                })
                .collect(),
            ledger: self.ledger,
        }
    }
}

impl PoolState {
    pub fn new(volumes: impl IntoIterator<Item = (VolumeId, LabelVolume)>) -> Result<Self> {
        let mut records = BTreeMap::new();
        for (id, reference) in volumes {
            let liver_slices = (0..reference.dims().nz)
                .map(|z| reference.slice_has_foreground(z))
                .collect();
            if records
                .insert(
                    id,
                    PoolRecord {
                        reference,
                        status: AnnotationStatus::Unannotated,
                        liver_slices,
                    },
                )
                .is_some()
            {
                return Err(Error::invalid(format!("duplicate volume id {id}")));
            }
        }
        Ok(PoolState {
            records,
            ledger: Ledger::default(),
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = VolumeId> + '_ {
        self.records.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ledger(&self) -> Ledger {
        self.ledger
    }

    pub fn status(&self, id: VolumeId) -> Option<&AnnotationStatus> {
        self.records.get(&id).map(|r| &r.status)
    }

    pub fn num_slices(&self, id: VolumeId) -> Option<usize> {
        self.records.get(&id).map(|r| r.reference.dims().nz)
    }

    /// Volumes that can still receive annotations (not fully annotated).
    pub fn eligible_volumes(&self) -> Vec<VolumeId> {
        self.records
            .iter()
            .filter(|(_, r)| !r.status.is_full())
            .map(|(id, _)| *id)
            .collect()
    }

    /// Volumes carrying at least one annotated slice.
    pub fn annotated_volumes(&self) -> Vec<VolumeId> {
        self.records
            .iter()
            .filter(|(_, r)| !r.status.is_unannotated())
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn is_slice_annotated(&self, id: VolumeId, z: usize) -> bool {
        match self.records.get(&id).map(|r| &r.status) {
            Some(AnnotationStatus::Full) => true,
            Some(AnnotationStatus::Slices(set)) => set.contains(&z),
            _ => false,
        }
    }

    /// All `(volume, z)` pairs still open for slice annotation, ordered by
    /// `(id, z)`.
    pub fn unannotated_slices(&self) -> Vec<(VolumeId, usize)> {
        let mut out = Vec::new();
        for (id, r) in &self.records {
            match &r.status {
                AnnotationStatus::Full => {}
                AnnotationStatus::Unannotated => {
                    out.extend((0..r.reference.dims().nz).map(|z| (*id, z)));
                }
                AnnotationStatus::Slices(set) => {
                    out.extend((0..r.reference.dims().nz).filter(|z| !set.contains(z)).map(|z| (*id, z)));
                }
            }
        }
        out
    }

    /// Oracle privilege: whether the reference slice contains liver.
    pub(crate) fn slice_has_liver(&self, id: VolumeId, z: usize) -> Option<bool> {
        self.records.get(&id).and_then(|r| r.liver_slices.get(z).copied())
    }

    fn liver_slice_count(&self, id: VolumeId) -> usize {
        self.records[&id].liver_slices.iter().filter(|&&b| b).count()
    }

    /// Apply a selection: copy reference labels onto the selected targets,
    /// update statuses and the ledger, and return the per-volume partial
    /// labels for every touched volume plus the ledger delta.
    pub fn annotate(&mut self, sel: &Selection) -> Result<(Vec<(VolumeId, PartialLabels)>, LedgerDelta)> {
        self.validate_selection(sel)?;
        let mut delta = LedgerDelta::default();
        let mut touched: BTreeSet<VolumeId> = BTreeSet::new();
        match sel {
            Selection::Volumes(v) => {
                for &id in &v.ids {
                    let prior_slices;
                    let prior_liver;
                    {
                        let r = &self.records[&id];
                        (prior_slices, prior_liver) = match &r.status {
                            AnnotationStatus::Unannotated => (0, 0),
                            AnnotationStatus::Slices(set) => (
                                set.len(),
                                set.iter().filter(|&&z| r.liver_slices[z]).count(),
                            ),
                            AnnotationStatus::Full => unreachable!("validated not-full"),
                        };
                    }
                    let nz = self.records[&id].reference.dims().nz;
                    let liver_total = self.liver_slice_count(id);
                    if self.records[&id].status.is_unannotated() {
                        delta.new_volumes += 1;
                    }
                    delta.slices += nz - prior_slices;
                    delta.liver_slices += liver_total - prior_liver;
                    delta.full_volume_liver_slices += liver_total - prior_liver;
                    self.records.get_mut(&id).unwrap().status = AnnotationStatus::Full;
                    touched.insert(id);
                }
            }
            Selection::Slices(s) => {
                for &(id, z) in &s.targets {
                    let has_liver = self.slice_has_liver(id, z).unwrap();
                    let r = self.records.get_mut(&id).unwrap();
                    match &mut r.status {
                        AnnotationStatus::Unannotated => {
                            r.status = AnnotationStatus::Slices(BTreeSet::from([z]));
                            delta.new_volumes += 1;
                        }
                        AnnotationStatus::Slices(set) => {
                            set.insert(z);
                        }
                        AnnotationStatus::Full => unreachable!("validated not-full"),
                    }
                    delta.slices += 1;
                    if has_liver {
                        delta.liver_slices += 1;
                        delta.isolated_liver_slices += 1;
                    }
                    touched.insert(id);
                }
            }
        }
        self.ledger.annotated_slices += delta.slices;
        self.ledger.annotated_liver_slices += delta.liver_slices;
        self.ledger.unique_volumes += delta.new_volumes;

        let labels = touched
            .into_iter()
            .map(|id| Ok((id, self.partial_labels(id)?.expect("touched volume is annotated"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((labels, delta))
    }

    fn validate_selection(&self, sel: &Selection) -> Result<()> {
        match sel {
            Selection::Volumes(v) => {
                let mut seen = BTreeSet::new();
                for &id in &v.ids {
                    let r = self
                        .records
                        .get(&id)
                        .ok_or_else(|| Error::invalid(format!("selection names unknown volume {id}")))?;
                    if r.status.is_full() {
                        return Err(Error::invalid(format!(
                            "selection targets already fully annotated volume {id}"
                        )));
                    }
                    if !seen.insert(id) {
                        return Err(Error::invalid(format!("selection repeats volume {id}")));
                    }
                }
            }
            Selection::Slices(s) => {
                let mut seen = BTreeSet::new();
                for &(id, z) in &s.targets {
                    let r = self
                        .records
                        .get(&id)
                        .ok_or_else(|| Error::invalid(format!("selection names unknown volume {id}")))?;
                    if z >= r.reference.dims().nz {
                        return Err(Error::invalid(format!(
                            "selection targets out-of-range slice ({id}, {z})"
                        )));
                    }
                    if self.is_slice_annotated(id, z) {
                        return Err(Error::invalid(format!(
                            "selection targets already annotated slice ({id}, {z})"
                        )));
                    }
                    if !seen.insert((id, z)) {
                        return Err(Error::invalid(format!("selection repeats slice ({id}, {z})")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Learner-facing labels: reference values where annotated, weight 0
    /// (and label 0) elsewhere. `None` for unannotated volumes.
    pub fn partial_labels(&self, id: VolumeId) -> Result<Option<PartialLabels>> {
        let r = self
            .records
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("unknown volume {id}")))?;
        Ok(match &r.status {
            AnnotationStatus::Unannotated => None,
            AnnotationStatus::Full => Some(PartialLabels::full(r.reference.clone())),
            AnnotationStatus::Slices(set) => Some(PartialLabels::from_slices(&r.reference, set)?),
        })
    }

    /// Recompute the ledger from scratch out of per-volume statuses.
    pub fn recompute_ledger(&self) -> Ledger {
        let mut ledger = Ledger::default();
        for (id, r) in &self.records {
            match &r.status {
                AnnotationStatus::Unannotated => {}
                AnnotationStatus::Full => {
                    ledger.annotated_slices += r.reference.dims().nz;
                    ledger.annotated_liver_slices += self.liver_slice_count(*id);
                    ledger.unique_volumes += 1;
                }
                AnnotationStatus::Slices(set) => {
                    ledger.annotated_slices += set.len();
                    ledger.annotated_liver_slices += set.iter().filter(|&&z| r.liver_slices[z]).count();
                    ledger.unique_volumes += 1;
                }
            }
        }
        ledger
    }

    pub fn snapshot(&self) -> PoolSnapshot {
        PoolSnapshot {
            ledger: self.ledger,
            volumes: self
                .records
                .iter()
                .map(|(id, r)| (*id, r.status.clone()))
                .collect(),
        }
    }

    /// Rebuild a pool from a snapshot plus the reference labels it was
    /// created from (snapshots deliberately do not embed references).
    pub fn restore(
        snapshot: &PoolSnapshot,
        volumes: impl IntoIterator<Item = (VolumeId, LabelVolume)>,
    ) -> Result<Self> {
        let mut pool = PoolState::new(volumes)?;
        for (id, status) in &snapshot.volumes {
            let r = pool
                .records
                .get_mut(id)
                .ok_or_else(|| Error::invalid(format!("snapshot names unknown volume {id}")))?;
            if let AnnotationStatus::Slices(set) = status {
                if set.iter().any(|&z| z >= r.reference.dims().nz) {
                    return Err(Error::invalid(format!("snapshot has out-of-range slice for {id}")));
                }
            }
            r.status = status.clone();
        }
        let recomputed = pool.recompute_ledger();
        if recomputed != snapshot.ledger {
            return Err(Error::invalid(format!(
                "snapshot ledger {:?} does not match recomputation {recomputed:?}",
                snapshot.ledger
            )));
        }
        pool.ledger = recomputed;
        Ok(pool)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::volume::{Dims, Spacing};

    /// A pool volume whose liver occupies the given z-slices (full x rows).
    pub fn pool_volume(nz: usize, liver: &[usize]) -> LabelVolume {
        let dims = Dims::new(4, 3, nz).unwrap();
        let mut l = LabelVolume::new(dims, Spacing::isotropic(1.0).unwrap(), 0).unwrap();
        for &z in liver {
            for j in 0..3 {
                for i in 0..4 {
                    l.set(i, j, z, 1);
                }
            }
        }
        l
    }

    pub fn small_pool() -> PoolState {
        PoolState::new(vec![
            (VolumeId(0), pool_volume(6, &[1, 2])),
            (VolumeId(1), pool_volume(6, &[0, 3, 4])),
            (VolumeId(2), pool_volume(6, &[])),
        ])
        .unwrap()
    }
}
