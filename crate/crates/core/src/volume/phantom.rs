//! Synthetic liver-like phantoms: ellipsoidal organs on a noisy background,
//! with darker lesions carving intensity variation inside the organ.

use super::{Dims, LabelVolume, ScalarVolume, Spacing};
use crate::error::{Error, Result};
use crate::stream::{derive_rng, Seg};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Generation parameters for one synthetic volume.
///
/// Counts are inclusive ranges; semi-axes and radii are in voxels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    pub organ_count: (u32, u32),
    pub organ_semi_axes: (f64, f64),
    pub lesion_count: (u32, u32),
    pub lesion_radius: (f64, f64),
    /// (mean, standard deviation) of the per-voxel intensity draw.
    pub background_intensity: (f64, f64),
    pub organ_intensity: (f64, f64),
    pub lesion_intensity: (f64, f64),
    /// Gaussian smoothing applied to the intensity image, in voxels.
    pub smoothing_sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: Dims { nx: 64, ny: 64, nz: 48 },
            spacing: Spacing { dx: 1.0, dy: 1.0, dz: 1.5 },
            organ_count: (1, 3),
            organ_semi_axes: (8.0, 18.0),
            lesion_count: (0, 3),
            lesion_radius: (2.0, 5.0),
            background_intensity: (40.0, 15.0),
            organ_intensity: (110.0, 15.0),
            lesion_intensity: (70.0, 15.0),
            smoothing_sigma: 1.0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        self.spacing.validate()?;
        let (a_min, a_max) = self.organ_semi_axes;
        if !(a_min >= 1.0 && a_max >= a_min) {
            return Err(Error::invalid(format!(
                "organ semi-axes must satisfy 1 <= min <= max, got ({a_min}, {a_max})"
            )));
        }
        // Organ must fit inside the grid with at least a 2-voxel margin.
        for (n, name) in [
            (self.dims.nx, "nx"),
            (self.dims.ny, "ny"),
            (self.dims.nz, "nz"),
        ] {
            if 2.0 * a_max > n as f64 - 5.0 {
                return Err(Error::invalid(format!(
                    "organ semi-axis {a_max} cannot fit in {name}={n} with a 2-voxel margin"
                )));
            }
        }
        if self.organ_count.0 < 1 || self.organ_count.1 < self.organ_count.0 {
            return Err(Error::invalid(format!(
                "organ count range must satisfy 1 <= min <= max, got {:?}",
                self.organ_count
            )));
        }
        if self.lesion_count.1 < self.lesion_count.0 {
            return Err(Error::invalid(format!(
                "lesion count range must be ordered, got {:?}",
                self.lesion_count
            )));
        }
        if self.lesion_count.1 > 0 && !(self.lesion_radius.0 > 0.0 && self.lesion_radius.1 >= self.lesion_radius.0) {
            return Err(Error::invalid(format!(
                "lesion radius range must satisfy 0 < min <= max, got {:?}",
                self.lesion_radius
            )));
        }
        for (sd, name) in [
            (self.background_intensity.1, "background"),
            (self.organ_intensity.1, "organ"),
            (self.lesion_intensity.1, "lesion"),
        ] {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::invalid(format!("{name} intensity SD must be >= 0, got {sd}")));
            }
        }
        if !(self.smoothing_sigma.is_finite() && self.smoothing_sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "smoothing sigma must be >= 0, got {}",
                self.smoothing_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Ellipsoid {
    center: (f64, f64, f64),
    semi: (f64, f64, f64),
}

impl Ellipsoid {
    #[inline]
    fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        let dx = (i as f64 - self.center.0) / self.semi.0;
        let dy = (j as f64 - self.center.1) / self.semi.1;
        let dz = (k as f64 - self.center.2) / self.semi.2;
        dx * dx + dy * dy + dz * dz <= 1.0
    }
}

/// Build a deterministic phantom `(image, labels)` from `(spec, seed)`.
///
/// Organ geometry, lesion geometry, and voxel noise are drawn from separate
/// sub-streams of `seed`, so the label volume depends only on the organ
/// parameters and never on the lesion settings.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<(ScalarVolume, LabelVolume)> {
    spec.validate()?;
    let dims = spec.dims;

    let mut organ_rng = derive_rng(seed, &[Seg::Label("phantom"), Seg::Label("organ")]);
    let n_organs = rng_range_u32(&mut organ_rng, spec.organ_count);
    let mut organs = Vec::with_capacity(n_organs as usize);
    for _ in 0..n_organs {
        let semi = (
            organ_rng.gen_range(spec.organ_semi_axes.0..=spec.organ_semi_axes.1),
            organ_rng.gen_range(spec.organ_semi_axes.0..=spec.organ_semi_axes.1),
            organ_rng.gen_range(spec.organ_semi_axes.0..=spec.organ_semi_axes.1),
        );
        let center = (
            center_in(&mut organ_rng, dims.nx, semi.0),
            center_in(&mut organ_rng, dims.ny, semi.1),
            center_in(&mut organ_rng, dims.nz, semi.2),
        );
        organs.push(Ellipsoid { center, semi });
    }

    let mut labels = LabelVolume::new(dims, spec.spacing, 0)?;
    for k in 0..dims.nz {
        for j in 0..dims.ny {
            for i in 0..dims.nx {
                if organs.iter().any(|e| e.contains(i, j, k)) {
                    labels.set(i, j, k, 1);
                }
            }
        }
    }

    let mut lesion_rng = derive_rng(seed, &[Seg::Label("phantom"), Seg::Label("lesion")]);
    let n_lesions = rng_range_u32(&mut lesion_rng, spec.lesion_count);
    let mut lesions = Vec::with_capacity(n_lesions as usize);
    for _ in 0..n_lesions {
        let r = lesion_rng.gen_range(spec.lesion_radius.0..=spec.lesion_radius.1);
        // Place the lesion center on an organ voxel so it carves the organ
        // interior; capped rejection keeps generation total.
        let mut placed = None;
        for _ in 0..64 {
            let i = lesion_rng.gen_range(0..dims.nx);
            let j = lesion_rng.gen_range(0..dims.ny);
            let k = lesion_rng.gen_range(0..dims.nz);
            if labels.get(i, j, k) == 1 {
                placed = Some((i as f64, j as f64, k as f64));
                break;
            }
        }
        if let Some(center) = placed {
            lesions.push(Ellipsoid {
                center,
                semi: (r, r, r),
            });
        }
    }

    let mut noise_rng = derive_rng(seed, &[Seg::Label("phantom"), Seg::Label("noise")]);
    let mut img = ScalarVolume::new(dims, spec.spacing, 0.0);
    let mut idx = 0;
    for k in 0..dims.nz {
        for j in 0..dims.ny {
            for i in 0..dims.nx {
                let (mean, sd) = if labels.data()[idx] == 1 {
                    if lesions.iter().any(|e| e.contains(i, j, k)) {
                        spec.lesion_intensity
                    } else {
                        spec.organ_intensity
                    }
                } else {
                    spec.background_intensity
                };
                let z: f64 = noise_rng.sample(StandardNormal);
                img.data_mut()[idx] = mean + sd * z;
                idx += 1;
            }
        }
    }

    if spec.smoothing_sigma > 0.0 {
        img = gaussian_smooth(&img, spec.smoothing_sigma);
    }
    Ok((img, labels))
}

fn rng_range_u32(rng: &mut impl Rng, (lo, hi): (u32, u32)) -> u32 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn center_in(rng: &mut impl Rng, n: usize, semi: f64) -> f64 {
    let lo = semi + 2.0;
    let hi = (n - 1) as f64 - semi - 2.0;
    if hi <= lo {
        (n - 1) as f64 / 2.0
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Separable Gaussian filter, kernel truncated at 3 sigma, weights
/// renormalized over in-bounds taps.
fn gaussian_smooth(v: &ScalarVolume, sigma: f64) -> ScalarVolume {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for t in -radius..=radius {
        kernel.push((-0.5 * (t as f64 / sigma).powi(2)).exp());
    }
    let dims = v.dims();
    let mut cur = v.data().to_vec();
    for axis in 0..3 {
        let n = dims.axis(axis) as isize;
        let mut next = vec![0.0; cur.len()];
        super::for_each_line(dims, axis, |line| {
            for (pos, &out_idx) in line.iter().enumerate() {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (t, w) in (-radius..=radius).zip(&kernel) {
                    let s = pos as isize + t;
                    if s >= 0 && s < n {
                        acc += w * cur[line[s as usize]];
                        wsum += w;
                    }
                }
                next[out_idx] = acc / wsum;
            }
        });
        cur = next;
    }
    ScalarVolume {
        dims,
        spacing: v.spacing(),
        data: cur,
    }
}
