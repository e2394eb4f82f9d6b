//! Resampling onto a new voxel grid.
//!
//! Output dims are `round(physical extent / target spacing)` with a minimum
//! of 1 per axis. Sample positions use the voxel-center convention and
//! out-of-range positions clamp to the nearest edge voxel.

use super::{Dims, LabelVolume, ScalarVolume, Spacing};
use crate::error::Result;

fn output_dims(dims: Dims, spacing: Spacing, target: Spacing) -> Dims {
    let n = |count: usize, s_in: f64, s_out: f64| -> usize {
        let extent = count as f64 * s_in;
        ((extent / s_out).round() as usize).max(1)
    };
    Dims {
        nx: n(dims.nx, spacing.dx, target.dx),
        ny: n(dims.ny, spacing.dy, target.dy),
        nz: n(dims.nz, spacing.dz, target.dz),
    }
}

/// Continuous input coordinate of output voxel `i` along one axis, clamped
/// to the input's voxel-center range.
#[inline]
fn source_coord(i: usize, s_out: f64, s_in: f64, n_in: usize) -> f64 {
    let phys = (i as f64 + 0.5) * s_out;
    let u = phys / s_in - 0.5;
    u.clamp(0.0, (n_in - 1) as f64)
}

/// Trilinear intensity resampling.
pub fn resample_trilinear(v: &ScalarVolume, target: Spacing) -> Result<ScalarVolume> {
    target.validate()?;
    if target == v.spacing() {
        return Ok(v.clone());
    }
    let src = v.dims();
    let out_dims = output_dims(src, v.spacing(), target);
    let mut out = ScalarVolume::new(out_dims, target, 0.0);

    // Per-axis interpolation supports: floor index and fraction.
    let axis_support = |n_out: usize, s_out: f64, s_in: f64, n_in: usize| {
        (0..n_out)
            .map(|i| {
                let u = source_coord(i, s_out, s_in, n_in);
                let i0 = (u.floor() as usize).min(n_in.saturating_sub(2));
                let f = if n_in == 1 { 0.0 } else { u - i0 as f64 };
                (i0, f)
            })
            .collect::<Vec<_>>()
    };
    let xs = axis_support(out_dims.nx, target.dx, v.spacing().dx, src.nx);
    let ys = axis_support(out_dims.ny, target.dy, v.spacing().dy, src.ny);
    let zs = axis_support(out_dims.nz, target.dz, v.spacing().dz, src.nz);

    for k in 0..out_dims.nz {
        let (k0, fz) = zs[k];
        let k1 = (k0 + 1).min(src.nz - 1);
        for j in 0..out_dims.ny {
            let (j0, fy) = ys[j];
            let j1 = (j0 + 1).min(src.ny - 1);
            for i in 0..out_dims.nx {
                let (i0, fx) = xs[i];
                let i1 = (i0 + 1).min(src.nx - 1);
                // lerp as a + f*(b-a): exact when both ends coincide, so a
                // constant field resamples to the same constant bitwise.
                let lerp = |a: f64, b: f64, f: f64| a + f * (b - a);
                let c00 = lerp(v.get(i0, j0, k0), v.get(i1, j0, k0), fx);
                let c10 = lerp(v.get(i0, j1, k0), v.get(i1, j1, k0), fx);
                let c01 = lerp(v.get(i0, j0, k1), v.get(i1, j0, k1), fx);
                let c11 = lerp(v.get(i0, j1, k1), v.get(i1, j1, k1), fx);
                let c0 = lerp(c00, c10, fy);
                let c1 = lerp(c01, c11, fy);
                out.set(i, j, k, lerp(c0, c1, fz));
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbor label resampling; output stays binary.
pub fn resample_labels_nearest(l: &LabelVolume, target: Spacing) -> Result<LabelVolume> {
    target.validate()?;
    if target == l.spacing() {
        return Ok(l.clone());
    }
    let src = l.dims();
    let out_dims = output_dims(src, l.spacing(), target);

    let nearest = |n_out: usize, s_out: f64, s_in: f64, n_in: usize| {
        (0..n_out)
            .map(|i| {
                let u = source_coord(i, s_out, s_in, n_in);
                ((u + 0.5).floor() as usize).min(n_in - 1)
            })
            .collect::<Vec<_>>()
    };
    let xs = nearest(out_dims.nx, target.dx, l.spacing().dx, src.nx);
    let ys = nearest(out_dims.ny, target.dy, l.spacing().dy, src.ny);
    let zs = nearest(out_dims.nz, target.dz, l.spacing().dz, src.nz);

    let mut data = Vec::with_capacity(out_dims.len());
    for &sk in &zs {
        for &sj in &ys {
            for &si in &xs {
                data.push(l.get(si, sj, sk));
            }
        }
    }
    LabelVolume::from_data(out_dims, target, data)
}
