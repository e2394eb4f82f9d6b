//! The four query strategies. Ties break by `(value desc, volume id asc,
//! z asc)` everywhere so selections are total-ordered and reproducible.

use super::{PoolState, SliceSelection, VolumeId, VolumeSelection};
use crate::error::{Error, Result};
use crate::uncertainty::SliceUncertaintyProfile;
use rand::Rng;
use std::collections::BTreeMap;

/// Uncertainty volume sampling: top-`k` eligible volumes by volume-level
/// uncertainty; `k` is clipped to the eligible count.
pub fn select_uvs(
    pool: &PoolState,
    volume_uncertainties: &BTreeMap<VolumeId, f64>,
    k: usize,
) -> Result<VolumeSelection> {
    let eligible = pool.eligible_volumes();
    if eligible.is_empty() {
        return Err(Error::ExhaustedPool);
    }
    let mut scored = Vec::with_capacity(eligible.len());
    for id in eligible {
        let u = volume_uncertainties
            .get(&id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("missing uncertainty for eligible volume {id}")))?;
        if u.is_nan() {
            return Err(Error::invalid(format!("uncertainty for volume {id} is NaN")));
        }
        scored.push((id, u));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(VolumeSelection {
        ids: scored.into_iter().map(|(id, _)| id).collect(),
    })
}

/// Random volume sampling: uniform without replacement among eligible.
pub fn select_rvs(pool: &PoolState, rng: &mut impl Rng, k: usize) -> Result<VolumeSelection> {
    let mut eligible = pool.eligible_volumes();
    if eligible.is_empty() {
        return Err(Error::ExhaustedPool);
    }
    let take = k.min(eligible.len());
    // Partial Fisher-Yates over the id-sorted list.
    let mut ids = Vec::with_capacity(take);
    for i in 0..take {
        let j = rng.gen_range(i..eligible.len());
        eligible.swap(i, j);
        ids.push(eligible[i]);
    }
    Ok(VolumeSelection { ids })
}

/// Uncertainty slice sampling: pool every peak candidate from every
/// eligible volume, drop already-annotated slices, and take the global
/// top-`n_slices` by slice-level uncertainty.
pub fn select_uss(
    pool: &PoolState,
    profiles: &BTreeMap<VolumeId, SliceUncertaintyProfile>,
    n_slices: usize,
) -> Result<SliceSelection> {
    let mut candidates: Vec<(VolumeId, usize, f64)> = Vec::new();
    for id in pool.eligible_volumes() {
        let profile = profiles
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("missing slice profile for eligible volume {id}")))?;
        let nz = pool.num_slices(id).expect("eligible volume exists");
        for &z in &profile.peaks {
            if z >= nz {
                return Err(Error::invalid(format!(
                    "peak index {z} out of range for volume {id} with {nz} slices"
                )));
            }
            if !pool.is_slice_annotated(id, z) {
                candidates.push((id, z, profile.values[z]));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let exhausted = candidates.len() < n_slices;
    candidates.truncate(n_slices);
    Ok(SliceSelection {
        targets: candidates.into_iter().map(|(id, z, _)| (id, z)).collect(),
        exhausted,
    })
}

/// Random slice sampling: draw unannotated slices uniformly without
/// replacement until `n_liver_slices` of them contain liver (oracle
/// privilege) or the pool is exhausted. All drawn slices are returned.
pub fn select_rss(pool: &PoolState, rng: &mut impl Rng, n_liver_slices: usize) -> SliceSelection {
    let mut open = pool.unannotated_slices();
    let mut targets = Vec::new();
    let mut liver_found = 0usize;
    let mut next = 0usize;
    while liver_found < n_liver_slices && next < open.len() {
        let j = rng.gen_range(next..open.len());
        open.swap(next, j);
        let (id, z) = open[next];
        next += 1;
        targets.push((id, z));
        if pool.slice_has_liver(id, z).unwrap_or(false) {
            liver_found += 1;
        }
    }
    SliceSelection {
        targets,
        exhausted: liver_found < n_liver_slices,
    }
}
