//! Stratified mini-batch sampling: patches are centered on annotated voxels,
//! and the first patch of every batch is centered on an annotated liver
//! voxel so each batch is guaranteed a liver-bearing patch.

use super::PartialLabels;
use crate::error::{Error, Result};
use crate::volume::Dims;
use rand::Rng;

/// Flat lists of annotated voxels per training volume, built once per
/// training run so batch draws stay O(patch size).
#[derive(Clone, Debug)]
pub struct AnnotationIndex {
    /// `(volume, flat voxel index)` for every voxel with `w = 1`.
    annotated: Vec<(u32, u32)>,
    /// Subset with `y = 1` as well.
    annotated_liver: Vec<(u32, u32)>,
    dims: Vec<Dims>,
}

impl AnnotationIndex {
    pub fn build(parts: &[&PartialLabels]) -> Self {
        let mut annotated = Vec::new();
        let mut annotated_liver = Vec::new();
        let mut dims = Vec::with_capacity(parts.len());
        for (v, part) in parts.iter().enumerate() {
            dims.push(part.labels().dims());
            let w = part.weights().data();
            let y = part.labels().data();
            for idx in 0..w.len() {
                if w[idx] == 1 {
                    annotated.push((v as u32, idx as u32));
                    if y[idx] == 1 {
                        annotated_liver.push((v as u32, idx as u32));
                    }
                }
            }
        }
        AnnotationIndex {
            annotated,
            annotated_liver,
            dims,
        }
    }

    pub fn has_annotated_liver(&self) -> bool {
        !self.annotated_liver.is_empty()
    }
}

/// One sampled patch: a contiguous voxel box in a single training volume.
#[derive(Clone, Debug)]
pub struct Patch {
    pub volume: usize,
    pub indices: Vec<usize>,
    pub y: Vec<u8>,
    pub w: Vec<u8>,
}

/// Draw `patch_count` patches; the first is centered on an annotated liver
/// voxel, the rest on annotated voxels. Positions are deterministic in `rng`.
pub fn sample_stratified_batch(
    parts: &[&PartialLabels],
    index: &AnnotationIndex,
    patch_count: usize,
    patch_size: (usize, usize, usize),
    rng: &mut impl Rng,
) -> Result<Vec<Patch>> {
    if patch_count == 0 {
        return Err(Error::invalid("batch must contain at least one patch".to_string()));
    }
    if index.annotated_liver.is_empty() {
        return Err(Error::EmptyAnnotation(
            "no annotated liver voxels anywhere in the training set".to_string(),
        ));
    }
    let mut patches = Vec::with_capacity(patch_count);
    for p in 0..patch_count {
        let source = if p == 0 { &index.annotated_liver } else { &index.annotated };
        let (vol, center) = source[rng.gen_range(0..source.len())];
        patches.push(cut_patch(parts, index, vol as usize, center as usize, patch_size));
    }
    Ok(patches)
}

fn cut_patch(
    parts: &[&PartialLabels],
    index: &AnnotationIndex,
    vol: usize,
    center: usize,
    patch_size: (usize, usize, usize),
) -> Patch {
    let dims = index.dims[vol];
    let (ci, cj, ck) = dims.coords(center);
    let origin = |c: usize, size: usize, n: usize| -> usize {
        if size >= n {
            0
        } else {
            c.saturating_sub(size / 2).min(n - size)
        }
    };
    let (px, py, pz) = (
        patch_size.0.min(dims.nx),
        patch_size.1.min(dims.ny),
        patch_size.2.min(dims.nz),
    );
    let (ox, oy, oz) = (
        origin(ci, px, dims.nx),
        origin(cj, py, dims.ny),
        origin(ck, pz, dims.nz),
    );
    let part = parts[vol];
    let y_data = part.labels().data();
    let w_data = part.weights().data();
    let mut indices = Vec::with_capacity(px * py * pz);
    let mut y = Vec::with_capacity(px * py * pz);
    let mut w = Vec::with_capacity(px * py * pz);
    for k in oz..oz + pz {
        for j in oy..oy + py {
            for i in ox..ox + px {
                let idx = dims.index(i, j, k);
                indices.push(idx);
                y.push(y_data[idx]);
                w.push(w_data[idx]);
            }
        }
    }
    Patch {
        volume: vol,
        indices,
        y,
        w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{LabelVolume, Spacing};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sp() -> Spacing {
        Spacing::isotropic(1.0).unwrap()
    }

    fn volume_with_liver_slice(nz: usize, liver_z: usize) -> PartialLabels {
        let dims = Dims::new(8, 8, nz).unwrap();
        let mut reference = LabelVolume::new(dims, sp(), 0).unwrap();
        for j in 2..6 {
            for i in 2..6 {
                reference.set(i, j, liver_z, 1);
            }
        }
        PartialLabels::from_slices(&reference, &[liver_z]).unwrap()
    }

    #[test]
    fn single_annotated_slice_forces_overlap() {
        let part = volume_with_liver_slice(10, 4);
        let parts = vec![&part];
        let index = AnnotationIndex::build(&parts);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let batch = sample_stratified_batch(&parts, &index, 3, (4, 4, 2), &mut rng).unwrap();
            // Every patch contains an annotated voxel; the first contains liver.
            for (pi, patch) in batch.iter().enumerate() {
                assert!(patch.w.iter().any(|&w| w == 1), "patch {pi} has no annotation");
            }
            assert!(batch[0].y.iter().zip(&batch[0].w).any(|(&y, &w)| y == 1 && w == 1));
        }
    }

    #[test]
    fn fully_annotated_volumes_yield_all_one_weights() {
        let dims = Dims::new(6, 6, 6).unwrap();
        let mut reference = LabelVolume::new(dims, sp(), 0).unwrap();
        reference.set(3, 3, 3, 1);
        let part = PartialLabels::full(reference);
        let parts = vec![&part];
        let index = AnnotationIndex::build(&parts);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_stratified_batch(&parts, &index, 2, (3, 3, 3), &mut rng).unwrap();
        for patch in &batch {
            assert!(patch.w.iter().all(|&w| w == 1));
        }
    }

    #[test]
    fn stratification_holds_over_many_batches() {
        let a = volume_with_liver_slice(12, 2);
        // A second volume annotated on a liver-free slice.
        let dims = Dims::new(8, 8, 12).unwrap();
        let mut reference = LabelVolume::new(dims, sp(), 0).unwrap();
        reference.set(4, 4, 9, 1);
        let b = PartialLabels::from_slices(&reference, &[0]).unwrap();
        let parts = vec![&a, &b];
        let index = AnnotationIndex::build(&parts);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let batch = sample_stratified_batch(&parts, &index, 4, (4, 4, 3), &mut rng).unwrap();
            assert!(batch
                .iter()
                .any(|p| p.y.iter().zip(&p.w).any(|(&y, &w)| y == 1 && w == 1)));
        }
    }

    #[test]
    fn no_liver_annotation_is_an_error() {
        let dims = Dims::new(8, 8, 4).unwrap();
        let reference = LabelVolume::new(dims, sp(), 0).unwrap();
        let part = PartialLabels::from_slices(&reference, &[1]).unwrap();
        let parts = vec![&part];
        let index = AnnotationIndex::build(&parts);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = sample_stratified_batch(&parts, &index, 2, (4, 4, 2), &mut rng).unwrap_err();
        assert!(matches!(err, Error::EmptyAnnotation(_)));
    }

    #[test]
    fn draws_are_deterministic_in_seed() {
        let part = volume_with_liver_slice(10, 5);
        let parts = vec![&part];
        let index = AnnotationIndex::build(&parts);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_stratified_batch(&parts, &index, 3, (4, 4, 2), &mut rng)
                .unwrap()
                .iter()
                .map(|p| p.indices.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }
}
