//! Segmentation quality metrics: Dice overlap, relative volume error, and
//! surface distances (mean and Hausdorff) over 6-connectivity boundary
//! voxels, computed through the exact distance transform.

mod distance;
mod summary;
mod wilcoxon;

pub use distance::distance_transform;
pub use summary::{summarize, MetricSummary, SummaryStats};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult};

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelVolume, Spacing};

/// Physical coordinates (mm) of boundary voxel centers, with the source
/// grid kept alongside so matching grids can use the fast transform path.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePointSet {
    points: Vec<(f64, f64, f64)>,
    indices: Vec<usize>,
    dims: Dims,
    spacing: Spacing,
}

impl SurfacePointSet {
    pub fn points(&self) -> &[(f64, f64, f64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    fn same_grid(&self, other: &SurfacePointSet) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    /// Surface voxels as a mask on the source grid.
    fn as_mask(&self) -> LabelVolume {
        let mut data = vec![0u8; self.dims.len()];
        for &idx in &self.indices {
            data[idx] = 1;
        }
        LabelVolume::from_data(self.dims, self.spacing, data).expect("binary")
    }
}

/// A foreground voxel is a surface voxel iff at least one 6-neighbor is
/// background or lies outside the volume. Coordinates are voxel centers.
pub fn extract_surface(l: &LabelVolume) -> SurfacePointSet {
    let dims = l.dims();
    let sp = l.spacing();
    let mut points = Vec::new();
    let mut indices = Vec::new();
    for k in 0..dims.nz {
        for j in 0..dims.ny {
            for i in 0..dims.nx {
                if l.get(i, j, k) == 0 {
                    continue;
                }
                let boundary = i == 0
                    || l.get(i - 1, j, k) == 0
                    || i + 1 == dims.nx
                    || l.get(i + 1, j, k) == 0
                    || j == 0
                    || l.get(i, j - 1, k) == 0
                    || j + 1 == dims.ny
                    || l.get(i, j + 1, k) == 0
                    || k == 0
                    || l.get(i, j, k - 1) == 0
                    || k + 1 == dims.nz
                    || l.get(i, j, k + 1) == 0;
                if boundary {
                    points.push((
                        (i as f64 + 0.5) * sp.dx,
                        (j as f64 + 0.5) * sp.dy,
                        (k as f64 + 0.5) * sp.dz,
                    ));
                    indices.push(dims.index(i, j, k));
                }
            }
        }
    }
    SurfacePointSet {
        points,
        indices,
        dims,
        spacing: sp,
    }
}

fn check_geometry(x: &LabelVolume, y: &LabelVolume) -> Result<()> {
    if x.dims() != y.dims() || x.spacing() != y.spacing() {
        return Err(Error::invalid(format!(
            "volumes must share geometry: {:?}/{:?} vs {:?}/{:?}",
            x.dims(),
            x.spacing(),
            y.dims(),
            y.spacing()
        )));
    }
    Ok(())
}

/// Dice overlap `2|X∩Y| / (|X|+|Y|)`; defined as 1 when both masks are empty.
pub fn dice(x: &LabelVolume, y: &LabelVolume) -> Result<f64> {
    check_geometry(x, y)?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&a, &b) in x.data().iter().zip(y.data()) {
        inter += usize::from(a == 1 && b == 1);
        total += usize::from(a == 1) + usize::from(b == 1);
    }
    if total == 0 {
        Ok(1.0)
    } else {
        Ok(2.0 * inter as f64 / total as f64)
    }
}

/// Relative volume error `|V_X - V_Y| / V_Y * 100%`; asymmetric, `y` is the
/// reference.
pub fn rve(x: &LabelVolume, y: &LabelVolume) -> Result<f64> {
    check_geometry(x, y)?;
    let vy = y.count_foreground() as f64 * y.spacing().voxel_volume();
    if vy == 0.0 {
        return Err(Error::UndefinedMetric("RVE with an empty reference".to_string()));
    }
    let vx = x.count_foreground() as f64 * x.spacing().voxel_volume();
    Ok((vx - vy).abs() / vy * 100.0)
}

/// Directed nearest-surface distances from every point of `from` to the
/// surface `to`, via the distance transform when grids match.
fn directed_distances(from: &SurfacePointSet, to: &SurfacePointSet) -> Vec<f64> {
    if from.same_grid(to) {
        let dt = distance_transform(&to.as_mask()).expect("nonempty surface");
        from.indices.iter().map(|&idx| dt.data()[idx]).collect()
    } else {
        from.points
            .iter()
            .map(|&(x, y, z)| {
                to.points
                    .iter()
                    .map(|&(tx, ty, tz)| {
                        let (dx, dy, dz) = (x - tx, y - ty, z - tz);
                        (dx * dx + dy * dy + dz * dz).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

fn require_nonempty(x: &SurfacePointSet, y: &SurfacePointSet, what: &str) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::UndefinedMetric(format!("{what} with an empty surface")));
    }
    Ok(())
}

/// Both surface metrics from one pass of directed distances: the mean
/// surface distance (average of the two directed means, each normalized by
/// its own point count) and the Hausdorff distance (larger directed max).
pub fn surface_distances(x: &SurfacePointSet, y: &SurfacePointSet) -> Result<(f64, f64)> {
    require_nonempty(x, y, "surface distance")?;
    let xy = directed_distances(x, y);
    let yx = directed_distances(y, x);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max = |v: &[f64]| v.iter().copied().fold(0.0f64, f64::max);
    Ok((0.5 * (mean(&xy) + mean(&yx)), max(&xy).max(max(&yx))))
}

/// Mean surface distance.
pub fn msd(x: &SurfacePointSet, y: &SurfacePointSet) -> Result<f64> {
    surface_distances(x, y).map(|(msd, _)| msd)
}

/// Hausdorff distance.
pub fn hd(x: &SurfacePointSet, y: &SurfacePointSet) -> Result<f64> {
    surface_distances(x, y).map(|(_, hd)| hd)
}

/// DICE / RVE / MSD / HD for one case; `None` marks a metric left undefined
/// by an empty mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSet {
    pub dice: Option<f64>,
    pub rve: Option<f64>,
    pub msd: Option<f64>,
    pub hd: Option<f64>,
}

impl MetricSet {
    pub fn undefined_flags(&self) -> Vec<&'static str> {
        let mut flags = Vec::new();
        if self.dice.is_none() {
            flags.push("dice");
        }
        if self.rve.is_none() {
            flags.push("rve");
        }
        if self.msd.is_none() {
            flags.push("msd");
        }
        if self.hd.is_none() {
            flags.push("hd");
        }
        flags
    }
}

/// All four metrics for a `(prediction, reference)` pair. Empty masks flag
/// the affected metrics as undefined instead of aborting.
pub fn evaluate_case(pred: &LabelVolume, reference: &LabelVolume) -> Result<MetricSet> {
    check_geometry(pred, reference)?;
    let dice_v = dice(pred, reference)?;
    let rve_v = rve(pred, reference).ok();
    let sx = extract_surface(pred);
    let sy = extract_surface(reference);
    let (msd_v, hd_v) = if sx.is_empty() || sy.is_empty() {
        (None, None)
    } else {
        let (m, h) = surface_distances(&sx, &sy)?;
        (Some(m), Some(h))
    };
    Ok(MetricSet {
        dice: Some(dice_v),
        rve: rve_v,
        msd: msd_v,
        hd: hd_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp() -> Spacing {
        Spacing::isotropic(1.0).unwrap()
    }

    fn cube(dims: Dims, lo: usize, hi: usize) -> LabelVolume {
        let mut l = LabelVolume::new(dims, sp(), 0).unwrap();
        for k in lo..=hi {
            for j in lo..=hi {
                for i in lo..=hi {
                    l.set(i, j, k, 1);
                }
            }
        }
        l
    }

    #[test]
    fn dice_hand_cases() {
        let d = Dims::new(10, 1, 1).unwrap();
        let mk = |n: usize, offset: usize| {
            let mut data = vec![0u8; 10];
            for i in offset..offset + n {
                data[i] = 1;
            }
            LabelVolume::from_data(d, sp(), data).unwrap()
        };
        let x = mk(4, 0);
        assert_eq!(dice(&x, &x).unwrap(), 1.0);
        let y = mk(4, 4);
        assert_eq!(dice(&x, &y).unwrap(), 0.0);
        // |X|=4, |Y|=6, |∩|=3 -> 2*3/10 = 0.6
        let x2 = mk(4, 0);
        let y2 = mk(6, 1);
        assert!((dice(&x2, &y2).unwrap() - 0.6).abs() < 1e-12);
        let empty = LabelVolume::new(d, sp(), 0).unwrap();
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn rve_hand_cases() {
        let d = Dims::new(220, 1, 1).unwrap();
        let mk = |n: usize| {
            let mut data = vec![0u8; 220];
            for i in 0..n {
                data[i] = 1;
            }
            LabelVolume::from_data(d, sp(), data).unwrap()
        };
        assert_eq!(rve(&mk(100), &mk(100)).unwrap(), 0.0);
        assert!((rve(&mk(110), &mk(100)).unwrap() - 10.0).abs() < 1e-12);
        assert!((rve(&mk(0), &mk(100)).unwrap() - 100.0).abs() < 1e-12);
        assert!(matches!(rve(&mk(5), &mk(0)), Err(Error::UndefinedMetric(_))));
        // Asymmetry: RVE(X,Y) != RVE(Y,X) in general.
        let a = rve(&mk(110), &mk(100)).unwrap();
        let b = rve(&mk(100), &mk(110)).unwrap();
        assert!((a - b).abs() > 1e-6);
    }

    #[test]
    fn surface_extraction_cases() {
        let d5 = Dims::new(5, 5, 5).unwrap();
        let empty = LabelVolume::new(d5, sp(), 0).unwrap();
        assert!(extract_surface(&empty).is_empty());

        let mut single = LabelVolume::new(d5, sp(), 0).unwrap();
        single.set(2, 3, 1, 1);
        let s = extract_surface(&single);
        assert_eq!(s.points(), &[(2.5, 3.5, 1.5)]);

        // Solid 3x3x3 cube: all 27 voxels are foreground, 26 on the surface.
        let c = cube(d5, 1, 3);
        assert_eq!(extract_surface(&c).len(), 26);

        // All-ones volume touches the boundary: the 5^3 shell is surface.
        let full = LabelVolume::new(d5, sp(), 1).unwrap();
        assert_eq!(extract_surface(&full).len(), 125 - 27);
    }

    #[test]
    fn msd_hd_single_pair() {
        let d = Dims::new(6, 6, 1).unwrap();
        let mut a = LabelVolume::new(d, sp(), 0).unwrap();
        a.set(0, 0, 0, 1);
        let mut b = LabelVolume::new(d, sp(), 0).unwrap();
        b.set(3, 4, 0, 1);
        let sa = extract_surface(&a);
        let sb = extract_surface(&b);
        assert!((msd(&sa, &sb).unwrap() - 5.0).abs() < 1e-12);
        assert!((hd(&sa, &sb).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(msd(&sa, &sa).unwrap(), 0.0);
        assert_eq!(hd(&sb, &sb).unwrap(), 0.0);
    }

    #[test]
    fn hd_of_subset_is_directed_superset_distance() {
        let d = Dims::new(8, 8, 8).unwrap();
        let small = cube(d, 3, 4);
        let large = cube(d, 2, 5);
        let ss = extract_surface(&small);
        let sl = extract_surface(&large);
        // directed small->large distances: every small-surface voxel is 1
        // voxel away from the large surface, so HD = directed(large->small).
        let hd_v = hd(&ss, &sl).unwrap();
        let directed_large: f64 = {
            let dt = distance_transform(&ss.as_mask()).unwrap();
            sl.indices.iter().map(|&i| dt.data()[i]).fold(0.0, f64::max)
        };
        assert!((hd_v - directed_large).abs() < 1e-12);
    }

    #[test]
    fn msd_hd_match_brute_force_on_random_masks() {
        use rand::{Rng, SeedableRng};
        let spacing = Spacing::new(1.0, 1.0, 1.5).unwrap();
        for seed in 0..10u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = Dims::new(6, 5, 4).unwrap();
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut data: Vec<u8> = (0..d.len()).map(|_| u8::from(rng.gen_bool(0.3))).collect();
                data[rng.gen_range(0..d.len())] = 1;
                LabelVolume::from_data(d, spacing, data).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let sa = extract_surface(&a);
            let sb = extract_surface(&b);

            let all_pairs = |x: &SurfacePointSet, y: &SurfacePointSet| -> Vec<f64> {
                x.points()
                    .iter()
                    .map(|&(px, py, pz)| {
                        y.points()
                            .iter()
                            .map(|&(qx, qy, qz)| {
                                ((px - qx).powi(2) + (py - qy).powi(2) + (pz - qz).powi(2)).sqrt()
                            })
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect()
            };
            let ab = all_pairs(&sa, &sb);
            let ba = all_pairs(&sb, &sa);
            let msd_o = 0.5 * (ab.iter().sum::<f64>() / ab.len() as f64 + ba.iter().sum::<f64>() / ba.len() as f64);
            let hd_o = ab.iter().chain(&ba).copied().fold(0.0f64, f64::max);
            assert!((msd(&sa, &sb).unwrap() - msd_o).abs() < 1e-9, "seed {seed}");
            assert!((hd(&sa, &sb).unwrap() - hd_o).abs() < 1e-9, "seed {seed}");
            // Symmetry and hd >= msd.
            assert!((msd(&sa, &sb).unwrap() - msd(&sb, &sa).unwrap()).abs() < 1e-12);
            assert!(hd(&sa, &sb).unwrap() >= msd(&sa, &sb).unwrap() - 1e-12);
        }
    }

    #[test]
    fn evaluate_case_perfect_and_empty() {
        let d = Dims::new(6, 6, 6).unwrap();
        let c = cube(d, 2, 4);
        let m = evaluate_case(&c, &c).unwrap();
        assert_eq!(m.dice, Some(1.0));
        assert_eq!(m.rve, Some(0.0));
        assert_eq!(m.msd, Some(0.0));
        assert_eq!(m.hd, Some(0.0));
        assert!(m.undefined_flags().is_empty());

        let empty = LabelVolume::new(d, sp(), 0).unwrap();
        let m2 = evaluate_case(&empty, &c).unwrap();
        assert_eq!(m2.dice, Some(0.0));
        assert!((m2.rve.unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(m2.msd, None);
        assert_eq!(m2.hd, None);
        assert_eq!(m2.undefined_flags(), vec!["msd", "hd"]);
    }

    #[test]
    fn shifted_cube_matches_brute_force() {
        let d = Dims::new(8, 8, 8).unwrap();
        let a = cube(d, 2, 4);
        let mut b = LabelVolume::new(d, sp(), 0).unwrap();
        for k in 3..=5 {
            for j in 2..=4 {
                for i in 2..=4 {
                    b.set(i, j, k, 1);
                }
            }
        }
        let m = evaluate_case(&a, &b).unwrap();
        // dice: intersection 3x3x2=18, each 27 voxels -> 36/54
        assert!((m.dice.unwrap() - 36.0 / 54.0).abs() < 1e-12);
        assert_eq!(m.rve, Some(0.0));
        assert!(m.hd.unwrap() >= m.msd.unwrap());
    }

    #[test]
    fn metrics_invariant_under_axis_permutation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let d = Dims::new(5, 6, 7).unwrap();
        let spacing = Spacing::new(0.8, 1.0, 1.5).unwrap();
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<u8> {
            let mut data: Vec<u8> = (0..d.len()).map(|_| u8::from(rng.gen_bool(0.25))).collect();
            data[0] = 1;
            data
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        // permute axes (x,y,z) -> (z,x,y)
        let dp = Dims::new(7, 5, 6).unwrap();
        let sp_p = Spacing::new(1.5, 0.8, 1.0).unwrap();
        let permute = |data: &[u8]| {
            let mut out = vec![0u8; data.len()];
            for k in 0..d.nz {
                for j in 0..d.ny {
                    for i in 0..d.nx {
                        out[dp.index(k, i, j)] = data[d.index(i, j, k)];
                    }
                }
            }
            out
        };
        let la = LabelVolume::from_data(d, spacing, a.clone()).unwrap();
        let lb = LabelVolume::from_data(d, spacing, b.clone()).unwrap();
        let pa = LabelVolume::from_data(dp, sp_p, permute(&a)).unwrap();
        let pb = LabelVolume::from_data(dp, sp_p, permute(&b)).unwrap();
        let m1 = evaluate_case(&la, &lb).unwrap();
        let m2 = evaluate_case(&pa, &pb).unwrap();
        assert!((m1.dice.unwrap() - m2.dice.unwrap()).abs() < 1e-12);
        assert!((m1.rve.unwrap() - m2.rve.unwrap()).abs() < 1e-9);
        assert!((m1.msd.unwrap() - m2.msd.unwrap()).abs() < 1e-9);
        assert!((m1.hd.unwrap() - m2.hd.unwrap()).abs() < 1e-9);
    }
}
