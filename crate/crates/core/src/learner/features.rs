//! Per-voxel features for the classifier: normalized intensity, box-mean
//! intensities at several window scales, and an optional normalized
//! z-coordinate. Box means come from a summed-volume table, so extraction is
//! O(n) in the voxel count regardless of window size.

use crate::error::{Error, Result};
use crate::volume::ScalarVolume;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Odd box window sizes in voxels; a window of 1 reproduces the raw value.
    pub scales: Vec<usize>,
    pub include_raw: bool,
    /// Adds the voxel-center z coordinate divided by nz.
    pub include_z: bool,
    /// Intensities are mapped through `(v - shift) / scale`.
    pub intensity_shift: f64,
    pub intensity_scale: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            scales: vec![1, 3, 7, 15],
            include_raw: false,
            include_z: true,
            intensity_shift: 80.0,
            intensity_scale: 40.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        for &s in &self.scales {
            if s == 0 || s % 2 == 0 {
                return Err(Error::invalid(format!("box window size must be odd and >= 1, got {s}")));
            }
        }
        if self.intensity_scale == 0.0 || !self.intensity_scale.is_finite() {
            return Err(Error::invalid(format!(
                "intensity scale must be a nonzero real, got {}",
                self.intensity_scale
            )));
        }
        if !self.intensity_shift.is_finite() {
            return Err(Error::invalid("intensity shift must be finite".to_string()));
        }
        Ok(())
    }

    pub fn feature_count(&self) -> usize {
        usize::from(self.include_raw) + self.scales.len() + usize::from(self.include_z)
    }
}

/// Dense row-major feature matrix: `rows` voxels by `width` features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

/// Extract feature rows for the given flat voxel indices.
pub fn extract_features(
    v: &ScalarVolume,
    cfg: &FeatureConfig,
    voxel_indices: &[usize],
) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let dims = v.dims();
    if let Some(&bad) = voxel_indices.iter().find(|&&i| i >= dims.len()) {
        return Err(Error::invalid(format!(
            "voxel index {bad} out of range for volume of {} voxels",
            dims.len()
        )));
    }

    let box_means: Vec<Vec<f64>> = cfg
        .scales
        .iter()
        .map(|&s| box_mean_volume(v, s / 2))
        .collect();

    let width = cfg.feature_count();
    let mut data = Vec::with_capacity(voxel_indices.len() * width);
    let norm = |x: f64| (x - cfg.intensity_shift) / cfg.intensity_scale;
    for &idx in voxel_indices {
        if cfg.include_raw {
            data.push(norm(v.data()[idx]));
        }
        for means in &box_means {
            data.push(norm(means[idx]));
        }
        if cfg.include_z {
            let (_, _, k) = dims.coords(idx);
            data.push((k as f64 + 0.5) / dims.nz as f64);
        }
    }
    Ok(FeatureMatrix {
        rows: voxel_indices.len(),
        width,
        data,
    })
}

/// Feature rows for every voxel in flat order.
pub fn extract_features_dense(v: &ScalarVolume, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let all: Vec<usize> = (0..v.dims().len()).collect();
    extract_features(v, cfg, &all)
}

/// Mean over the box window of radius `r`, clamped at the borders (the mean
/// runs over the in-bounds part of the window).
fn box_mean_volume(v: &ScalarVolume, r: usize) -> Vec<f64> {
    if r == 0 {
        return v.data().to_vec();
    }
    let dims = v.dims();
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    // Summed-volume table with a zero border plane: sat[i+1][j+1][k+1] holds
    // the sum over the box [0..=i][0..=j][0..=k].
    let sx = nx + 1;
    let sy = ny + 1;
    let sat_idx = |i: usize, j: usize, k: usize| i + sx * (j + sy * k);
    let mut sat = vec![0.0f64; sx * sy * (nz + 1)];
    for k in 0..nz {
        for j in 0..ny {
            let mut row = 0.0;
            for i in 0..nx {
                row += v.get(i, j, k);
                sat[sat_idx(i + 1, j + 1, k + 1)] = row + sat[sat_idx(i + 1, j, k + 1)]
                    + sat[sat_idx(i + 1, j + 1, k)]
                    - sat[sat_idx(i + 1, j, k)];
            }
        }
    }
    let box_sum = |x0: usize, x1: usize, y0: usize, y1: usize, z0: usize, z1: usize| -> f64 {
        // inclusive voxel ranges
        sat[sat_idx(x1 + 1, y1 + 1, z1 + 1)] - sat[sat_idx(x0, y1 + 1, z1 + 1)]
            - sat[sat_idx(x1 + 1, y0, z1 + 1)]
            - sat[sat_idx(x1 + 1, y1 + 1, z0)]
            + sat[sat_idx(x0, y0, z1 + 1)]
            + sat[sat_idx(x0, y1 + 1, z0)]
            + sat[sat_idx(x1 + 1, y0, z0)]
            - sat[sat_idx(x0, y0, z0)]
    };
    let mut out = vec![0.0f64; dims.len()];
    let mut idx = 0;
    for k in 0..nz {
        let (z0, z1) = (k.saturating_sub(r), (k + r).min(nz - 1));
        for j in 0..ny {
            let (y0, y1) = (j.saturating_sub(r), (j + r).min(ny - 1));
            for i in 0..nx {
                let (x0, x1) = (i.saturating_sub(r), (i + r).min(nx - 1));
                let count = ((x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1)) as f64;
                out[idx] = box_sum(x0, x1, y0, y1, z0, z1) / count;
                idx += 1;
            }
        }
    }
    out
}
