//! Exact Euclidean distance transform for anisotropic voxel grids.
//!
//! Squared distances are minimized axis by axis with the lower-envelope
//! parabola method; composing the three passes yields the exact (not
//! chamfer-approximate) squared distance to the nearest foreground voxel
//! center, in millimeters.

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume};

/// Distance in mm from every voxel center to the nearest foreground voxel
/// center. Foreground voxels map to 0.
pub fn distance_transform(l: &LabelVolume) -> Result<ScalarVolume> {
    if l.count_foreground() == 0 {
        return Err(Error::UndefinedMetric(
            "distance transform of an empty foreground".to_string(),
        ));
    }
    let dims = l.dims();
    let mut sq: Vec<f64> = l
        .data()
        .iter()
        .map(|&v| if v == 1 { 0.0 } else { f64::INFINITY })
        .collect();

    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    for axis in 0..3 {
        let n = dims.axis(axis);
        if n == 1 {
            continue;
        }
        let spacing = l.spacing().axis(axis);
        // Lines along `axis` are arithmetic progressions base + i*stride.
        let (stride, n1, s1, n2, s2) = match axis {
            0 => (1, ny, nx, nz, nx * ny),
            1 => (nx, nx, 1, nz, nx * ny),
            _ => (nx * ny, nx, 1, ny, nx),
        };
        let mut f = vec![0.0f64; n];
        let mut out = vec![0.0f64; n];
        let mut sites = vec![0usize; n];
        let mut bounds = vec![0.0f64; n + 1];
        for c2 in 0..n2 {
            for c1 in 0..n1 {
                let base = c1 * s1 + c2 * s2;
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi = sq[base + i * stride];
                }
                lower_envelope(&f, spacing, &mut out, &mut sites, &mut bounds);
                for (i, &oi) in out.iter().enumerate() {
                    sq[base + i * stride] = oi;
                }
            }
        }
    }

    let data: Vec<f64> = sq.into_iter().map(f64::sqrt).collect();
    ScalarVolume::from_data(dims, l.spacing(), data)
}

/// 1D pass: `out[i] = min_j f[j] + (s*(i-j))^2`, skipping infinite sites.
fn lower_envelope(f: &[f64], s: f64, out: &mut [f64], sites: &mut [usize], bounds: &mut [f64]) {
    let n = f.len();
    let s2 = s * s;
    let mut k = 0usize;
    let mut any = false;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        let qf = q as f64;
        if !any {
            sites[0] = q;
            bounds[0] = f64::NEG_INFINITY;
            bounds[1] = f64::INFINITY;
            k = 0;
            any = true;
            continue;
        }
        // Intersection of the parabola at q with the rightmost kept one.
        loop {
            let p = sites[k];
            let pf = p as f64;
            let cut = ((f[q] + s2 * qf * qf) - (f[p] + s2 * pf * pf)) / (2.0 * s2 * (qf - pf));
            if cut <= bounds[k] {
                if k == 0 {
                    sites[0] = q;
                    bounds[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                sites[k] = q;
                bounds[k] = cut;
                bounds[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if !any {
        out.copy_from_slice(f);
        return;
    }
    let mut j = 0usize;
    for i in 0..n {
        let fi = i as f64;
        while bounds[j + 1] < fi {
            j += 1;
        }
        let p = sites[j];
        let d = s * (fi - p as f64);
        out[i] = f[p] + d * d;
    }
}
