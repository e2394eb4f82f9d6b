//! 3D scalar and label volumes with physical voxel spacing.
//!
//! Data is stored flat in x-fastest, z-slowest order. The physical position
//! of voxel `(i, j, k)` is `((i+0.5)*dx, (j+0.5)*dy, (k+0.5)*dz)` — the
//! voxel-center convention used by resampling and the surface-distance
//! metrics alike.

mod mhd;
mod phantom;
mod resample;

pub use mhd::{read_mhd, MhdVolume};
pub use phantom::{generate_phantom, PhantomSpec};
pub use resample::{resample_labels_nearest, resample_trilinear};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Millimeters per voxel along each axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Spacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let s = Spacing { dx, dy, dz };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [(self.dx, "dx"), (self.dy, "dy"), (self.dz, "dz")] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "spacing {name} must be a positive real, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Spacing::new(s, s, s)
    }

    /// Physical volume of one voxel in cubic millimeters.
    pub fn voxel_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn axis(&self, axis: usize) -> f64 {
        match axis {
            0 => self.dx,
            1 => self.dy,
            _ => self.dz,
        }
    }
}

/// Grid extents `(nx, ny, nz)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!(
                "dims must be positive, got ({nx}, {ny}, {nz})"
            )));
        }
        Ok(Dims { nx, ny, nz })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of voxel `(i, j, k)` in x-fastest order.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        i + self.nx * (j + self.ny * k)
    }

    /// Inverse of [`Dims::index`].
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let rest = idx / self.nx;
        (i, rest % self.ny, rest / self.ny)
    }

    pub fn axis(&self, axis: usize) -> usize {
        match axis {
            0 => self.nx,
            1 => self.ny,
            _ => self.nz,
        }
    }
}

/// Dense grid of real values (image intensities, probabilities, entropies).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(dims: Dims, spacing: Spacing, fill: f64) -> Self {
        ScalarVolume {
            dims,
            spacing,
            data: vec![fill; dims.len()],
        }
    }

    pub fn from_data(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match dims product {}",
                data.len(),
                dims.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value {v} in volume")));
        }
        Ok(ScalarVolume { dims, spacing, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.dims.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.dims.index(i, j, k);
        self.data[idx] = v;
    }
}

/// Binary mask over the same grid layout; 0 = background, 1 = foreground.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<u8>,
}

impl LabelVolume {
    pub fn new(dims: Dims, spacing: Spacing, fill: u8) -> Result<Self> {
        if fill > 1 {
            return Err(Error::invalid(format!("label fill must be 0 or 1, got {fill}")));
        }
        Ok(LabelVolume {
            dims,
            spacing,
            data: vec![fill; dims.len()],
        })
    }

    pub fn from_data(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match dims product {}",
                data.len(),
                dims.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("label value {v} is not 0 or 1")));
        }
        Ok(LabelVolume { dims, spacing, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.data[self.dims.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: u8) {
        debug_assert!(v <= 1);
        let idx = self.dims.index(i, j, k);
        self.data[idx] = v;
    }

    /// Number of foreground voxels.
    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// True if slice `k` contains at least one foreground voxel.
    pub fn slice_has_foreground(&self, k: usize) -> bool {
        let n = self.dims.nx * self.dims.ny;
        let start = k * n;
        self.data[start..start + n].iter().any(|&v| v == 1)
    }
}

/// Binary box dilation: a voxel is set iff any input voxel inside the
/// axis-aligned `(2rx+1) x (2ry+1) x (2rz+1)` window is set.
///
/// Separable: one running-count pass per axis, O(n) per voxel overall.
pub fn dilate(l: &LabelVolume, radius: (usize, usize, usize)) -> LabelVolume {
    let dims = l.dims;
    let mut cur: Vec<u8> = l.data.clone();
    for (axis, r) in [(0usize, radius.0), (1, radius.1), (2, radius.2)] {
        if r == 0 {
            continue;
        }
        cur = dilate_axis(&cur, dims, axis, r);
    }
    LabelVolume {
        dims,
        spacing: l.spacing,
        data: cur,
    }
}

fn dilate_axis(data: &[u8], dims: Dims, axis: usize, r: usize) -> Vec<u8> {
    let n = dims.axis(axis);
    let mut out = vec![0u8; data.len()];
    let mut line_idx: Vec<usize> = Vec::with_capacity(n);
    for_each_line(dims, axis, |line| {
        line_idx.clear();
        line_idx.extend_from_slice(line);
        // prefix[i] = number of set voxels among the first i along the line
        let mut prefix = vec![0u32; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + u32::from(data[line_idx[i]]);
        }
        for i in 0..n {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(n - 1);
            if prefix[hi + 1] > prefix[lo] {
                out[line_idx[i]] = 1;
            }
        }
    });
    out
}

/// Invoke `f` once per grid line along `axis` with the flat indices of that
/// line's voxels in increasing axis order.
pub(crate) fn for_each_line(dims: Dims, axis: usize, mut f: impl FnMut(&[usize])) {
    let n = dims.axis(axis);
    let (a1, a2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut idx = Vec::with_capacity(n);
    for c2 in 0..dims.axis(a2) {
        for c1 in 0..dims.axis(a1) {
            idx.clear();
            for c in 0..n {
                let mut coord = [0usize; 3];
                coord[axis] = c;
                coord[a1] = c1;
                coord[a2] = c2;
                idx.push(dims.index(coord[0], coord[1], coord[2]));
            }
            f(&idx);
        }
    }
}

/// Reflect-pad without repeating the edge sample: `[a,b,c]` padded by 1 gives
/// `[b,a,b,c,b]`. Requires `pad < dim` along each axis.
pub fn pad_reflect(v: &ScalarVolume, pads: (usize, usize, usize)) -> Result<ScalarVolume> {
    let d = v.dims;
    for (p, n, name) in [
        (pads.0, d.nx, "x"),
        (pads.1, d.ny, "y"),
        (pads.2, d.nz, "z"),
    ] {
        if p >= n {
            return Err(Error::invalid(format!(
                "pad {p} along {name} must be smaller than the dimension {n}"
            )));
        }
    }
    let out_dims = Dims {
        nx: d.nx + 2 * pads.0,
        ny: d.ny + 2 * pads.1,
        nz: d.nz + 2 * pads.2,
    };
    let mut out = ScalarVolume::new(out_dims, v.spacing, 0.0);
    for k in 0..out_dims.nz {
        let sk = reflect_index(k as isize - pads.2 as isize, d.nz);
        for j in 0..out_dims.ny {
            let sj = reflect_index(j as isize - pads.1 as isize, d.ny);
            for i in 0..out_dims.nx {
                let si = reflect_index(i as isize - pads.0 as isize, d.nx);
                out.set(i, j, k, v.get(si, sj, sk));
            }
        }
    }
    Ok(out)
}

/// Mirror `i` into `[0, n)` about the boundary voxels without repeating them.
fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}
