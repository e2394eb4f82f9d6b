//! Monte-Carlo dropout sampling and predictive-entropy aggregation at voxel,
//! slice, and volume level, plus slice-candidate peak extraction.

use crate::error::{Error, Result};
use crate::learner::{extract_features_dense, forward, DropoutMask, FeatureConfig, FeatureMatrix, MlpParams, ProbVolume};
use crate::stream::{derive_rng, Seg};
use crate::volume::{dilate, LabelVolume, ScalarVolume};
use rayon::prelude::*;

/// Dilation window applied to the predicted mask before volume-level
/// averaging: an 11x11x11 box.
pub const MASK_DILATION_RADIUS: (usize, usize, usize) = (5, 5, 5);

/// Dropout-on probability samples over one input volume.
#[derive(Clone, Debug)]
pub struct McSampleSet {
    pub samples: Vec<ProbVolume>,
    pub seed: u64,
}

impl McSampleSet {
    pub fn n(&self) -> usize {
        self.samples.len()
    }
}

/// Per-voxel predictive entropy in nats; bounded by `ln 2` for two classes.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyVolume(ScalarVolume);

impl EntropyVolume {
    /// Wrap an entropy field, validating the two-class bound `[0, ln 2]`.
    pub fn from_values(v: ScalarVolume) -> Result<Self> {
        const BOUND: f64 = std::f64::consts::LN_2 + 1e-12;
        if let Some(bad) = v.data().iter().find(|u| !(0.0..=BOUND).contains(*u)) {
            return Err(Error::invalid(format!("entropy {bad} outside [0, ln 2]")));
        }
        Ok(EntropyVolume(v))
    }

    pub fn values(&self) -> &ScalarVolume {
        &self.0
    }

    pub fn into_inner(self) -> ScalarVolume {
        self.0
    }
}

/// Volume-level uncertainty; `fallback_full_volume` flags the degenerate
/// case where the dilated mask was empty and the mean ran over all voxels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeUncertainty {
    pub value: f64,
    pub fallback_full_volume: bool,
}

/// Per-slice mean entropy with extracted peak candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceUncertaintyProfile {
    pub values: Vec<f64>,
    pub peaks: Vec<usize>,
}

impl SliceUncertaintyProfile {
    pub fn new(values: Vec<f64>, min_distance: usize) -> Self {
        let peaks = find_peaks(&values, min_distance);
        SliceUncertaintyProfile { values, peaks }
    }
}

/// Draw `n` dropout-on probability volumes. Sample `k` takes its dropout
/// masks from the stream `(seed, "mc", k)`, so the set is deterministic in
/// `(params, v, n, seed)` and independent of evaluation order.
///
/// The dropout masks multiply post-tanh activations, so for the common
/// single-hidden-layer network the first-layer activations are computed
/// once and shared across samples; the result is bitwise identical to the
/// generic per-sample forward pass.
pub fn mc_sample(
    params: &MlpParams,
    v: &ScalarVolume,
    cfg: &FeatureConfig,
    n: usize,
    seed: u64,
) -> Result<McSampleSet> {
    if n == 0 {
        return Err(Error::invalid("MC sample count must be >= 1".to_string()));
    }
    let feats = extract_features_dense(v, cfg)?;
    let shared_tanh = if params.num_layers() == 2 {
        Some(crate::learner::first_hidden_tanh(params, &feats)?)
    } else {
        None
    };
    let samples: Vec<ProbVolume> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = derive_rng(seed, &[Seg::Label("mc"), Seg::Index(k as u64)]);
            match &shared_tanh {
                Some(tanh) => {
                    let p1 =
                        crate::learner::mc_forward_single_hidden(params, tanh, feats.rows, &mut rng);
                    ProbVolume::new(ScalarVolume::from_data(v.dims(), v.spacing(), p1)?)
                }
                None => {
                    let mask = DropoutMask::draw(params, feats.rows, &mut rng);
                    sample_once(params, &feats, v, &mask)
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(McSampleSet { samples, seed })
}

fn sample_once(
    params: &MlpParams,
    feats: &FeatureMatrix,
    v: &ScalarVolume,
    mask: &DropoutMask,
) -> Result<ProbVolume> {
    let probs = forward(params, feats, Some(mask))?;
    let p1: Vec<f64> = (0..feats.rows).map(|r| probs[r * 2 + 1]).collect();
    ProbVolume::new(ScalarVolume::from_data(v.dims(), v.spacing(), p1)?)
}

#[inline]
fn xlnx(m: f64) -> f64 {
    if m > 0.0 {
        m * m.ln()
    } else {
        0.0
    }
}

/// Predictive entropy of the mean class distribution across samples:
/// `U = -sum_c m_c ln m_c` with the `0 ln 0 = 0` convention.
pub fn predictive_entropy(set: &McSampleSet) -> Result<EntropyVolume> {
    let first = set
        .samples
        .first()
        .ok_or_else(|| Error::invalid("entropy of an empty sample set".to_string()))?;
    let dims = first.values().dims();
    let spacing = first.values().spacing();
    for s in &set.samples {
        if s.values().dims() != dims {
            return Err(Error::invalid("samples must share dims".to_string()));
        }
    }
    let n = set.samples.len() as f64;
    let len = dims.len();
    let mut out = vec![0.0f64; len];
    for (idx, u) in out.iter_mut().enumerate() {
        let mut mean = 0.0;
        for s in &set.samples {
            mean += s.values().data()[idx];
        }
        let m1 = mean / n;
        let m0 = 1.0 - m1;
        *u = (-(xlnx(m0) + xlnx(m1))).max(0.0);
    }
    Ok(EntropyVolume(ScalarVolume::from_data(dims, spacing, out)?))
}

/// Mean entropy inside the dilated predicted mask (11x11x11 box window).
pub fn volume_uncertainty(e: &EntropyVolume, predicted_mask: &LabelVolume) -> Result<VolumeUncertainty> {
    volume_uncertainty_dilated(e, predicted_mask, MASK_DILATION_RADIUS)
}

pub fn volume_uncertainty_dilated(
    e: &EntropyVolume,
    predicted_mask: &LabelVolume,
    radius: (usize, usize, usize),
) -> Result<VolumeUncertainty> {
    let values = e.values();
    if values.dims() != predicted_mask.dims() {
        return Err(Error::invalid(format!(
            "entropy dims {:?} do not match mask dims {:?}",
            values.dims(),
            predicted_mask.dims()
        )));
    }
    let dilated = dilate(predicted_mask, radius);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (u, m) in values.data().iter().zip(dilated.data()) {
        if *m == 1 {
            sum += u;
            count += 1;
        }
    }
    if count == 0 {
        let total: f64 = values.data().iter().sum();
        Ok(VolumeUncertainty {
            value: total / values.data().len() as f64,
            fallback_full_volume: true,
        })
    } else {
        Ok(VolumeUncertainty {
            value: sum / count as f64,
            fallback_full_volume: false,
        })
    }
}

/// Mean entropy over each full x-y slice (no masking at slice level).
pub fn slice_uncertainty_profile(e: &EntropyVolume) -> Vec<f64> {
    let v = e.values();
    let dims = v.dims();
    let per_slice = dims.nx * dims.ny;
    (0..dims.nz)
        .map(|k| {
            let start = k * per_slice;
            v.data()[start..start + per_slice].iter().sum::<f64>() / per_slice as f64
        })
        .collect()
}

/// Local-maximum slice candidates with greedy minimum-distance suppression.
///
/// A candidate is a run of equal values strictly above both neighbors;
/// boundary runs qualify against their single neighbor and a run reports its
/// leftmost index. Candidates are then accepted in descending value order
/// (ties toward lower index), discarding any candidate within `min_distance`
/// of an accepted one. Returned indices are sorted ascending.
pub fn find_peaks(values: &[f64], min_distance: usize) -> Vec<usize> {
    let min_distance = min_distance.max(1);
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut candidates: Vec<usize> = Vec::new();
    let mut start = 0usize;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[end + 1] == values[start] {
            end += 1;
        }
        let left_ok = start == 0 || values[start] > values[start - 1];
        let right_ok = end == n - 1 || values[start] > values[end + 1];
        if left_ok && right_ok {
            candidates.push(start);
        }
        start = end + 1;
    }
    candidates.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut accepted: Vec<usize> = Vec::new();
    for &c in &candidates {
        if accepted.iter().all(|&a| c.abs_diff(a) >= min_distance) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, Spacing};

    fn sp() -> Spacing {
        Spacing::isotropic(1.0).unwrap()
    }

    fn prob(dims: Dims, data: Vec<f64>) -> ProbVolume {
        ProbVolume::new(ScalarVolume::from_data(dims, sp(), data).unwrap()).unwrap()
    }

    #[test]
    fn entropy_certain_prediction_is_zero() {
        let d = Dims::new(2, 1, 1).unwrap();
        let set = McSampleSet {
            samples: vec![prob(d, vec![1.0, 0.0]), prob(d, vec![1.0, 0.0])],
            seed: 0,
        };
        let e = predictive_entropy(&set).unwrap();
        assert_eq!(e.values().data(), &[0.0, 0.0]);
    }

    #[test]
    fn entropy_half_is_ln_two() {
        let d = Dims::new(1, 1, 1).unwrap();
        let set = McSampleSet {
            samples: vec![prob(d, vec![0.5])],
            seed: 0,
        };
        let e = predictive_entropy(&set).unwrap();
        assert!((e.values().data()[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn entropy_two_sample_hand_case() {
        let d = Dims::new(1, 1, 1).unwrap();
        let set = McSampleSet {
            samples: vec![prob(d, vec![0.2]), prob(d, vec![0.6])],
            seed: 0,
        };
        let e = predictive_entropy(&set).unwrap();
        let expect = -(0.4f64 * 0.4f64.ln() + 0.6 * 0.6f64.ln());
        assert!((e.values().data()[0] - expect).abs() < 1e-12);
        assert!((e.values().data()[0] - 0.673012).abs() < 1e-6);
    }

    #[test]
    fn entropy_is_permutation_invariant_and_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let d = Dims::new(3, 2, 2).unwrap();
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let data: Vec<f64> = (0..d.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
            prob(d, data)
        };
        let samples: Vec<ProbVolume> = (0..5).map(|_| mk(&mut rng)).collect();
        let fwd = predictive_entropy(&McSampleSet { samples: samples.clone(), seed: 0 }).unwrap();
        let mut rev_samples = samples;
        rev_samples.reverse();
        let rev = predictive_entropy(&McSampleSet { samples: rev_samples, seed: 0 }).unwrap();
        for (a, b) in fwd.values().data().iter().zip(rev.values().data()) {
            assert!((a - b).abs() < 1e-15);
            assert!(*a >= 0.0 && *a <= std::f64::consts::LN_2 + 1e-12);
        }
    }

    #[test]
    fn volume_uncertainty_constant_field() {
        let d = Dims::new(6, 6, 6).unwrap();
        let e = EntropyVolume(ScalarVolume::new(d, sp(), 0.37));
        let mut mask = LabelVolume::new(d, sp(), 0).unwrap();
        mask.set(3, 3, 3, 1);
        let u = volume_uncertainty(&e, &mask).unwrap();
        assert_eq!(u.value, 0.37);
        assert!(!u.fallback_full_volume);
    }

    #[test]
    fn volume_uncertainty_is_size_invariant() {
        // entropy 1 inside the dilated region, 0 outside -> exactly 1.
        let d = Dims::new(9, 9, 9).unwrap();
        let mut mask = LabelVolume::new(d, sp(), 0).unwrap();
        mask.set(4, 4, 4, 1);
        let dilated = dilate(&mask, (2, 2, 2));
        let data: Vec<f64> = dilated.data().iter().map(|&m| f64::from(m)).collect();
        let e = EntropyVolume(ScalarVolume::from_data(d, sp(), data).unwrap());
        let u = volume_uncertainty_dilated(&e, &mask, (2, 2, 2)).unwrap();
        assert_eq!(u.value, 1.0);
    }

    #[test]
    fn volume_uncertainty_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let d = Dims::new(6, 6, 6).unwrap();
        let vals: Vec<f64> = (0..d.len()).map(|_| rng.gen_range(0.0..0.69)).collect();
        let e = EntropyVolume(ScalarVolume::from_data(d, sp(), vals.clone()).unwrap());
        let mask_data: Vec<u8> = (0..d.len()).map(|_| u8::from(rng.gen_bool(0.2))).collect();
        let mask = LabelVolume::from_data(d, sp(), mask_data).unwrap();
        let r = (1usize, 2usize, 1usize);
        let got = volume_uncertainty_dilated(&e, &mask, r).unwrap();
        // brute force: recompute the dilated region by direct window checks
        let mut sum = 0.0;
        let mut count = 0;
        for k in 0..6usize {
            for j in 0..6usize {
                for i in 0..6usize {
                    let mut inside = false;
                    for kk in k.saturating_sub(r.2)..=(k + r.2).min(5) {
                        for jj in j.saturating_sub(r.1)..=(j + r.1).min(5) {
                            for ii in i.saturating_sub(r.0)..=(i + r.0).min(5) {
                                inside |= mask.get(ii, jj, kk) == 1;
                            }
                        }
                    }
                    if inside {
                        sum += vals[d.index(i, j, k)];
                        count += 1;
                    }
                }
            }
        }
        assert!((got.value - sum / count as f64).abs() < 1e-12);
    }

    #[test]
    fn empty_dilated_mask_falls_back_to_full_volume() {
        let d = Dims::new(4, 4, 4).unwrap();
        let vals: Vec<f64> = (0..d.len()).map(|i| i as f64 / 100.0).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let e = EntropyVolume(ScalarVolume::from_data(d, sp(), vals).unwrap());
        let mask = LabelVolume::new(d, sp(), 0).unwrap();
        let u = volume_uncertainty(&e, &mask).unwrap();
        assert!(u.fallback_full_volume);
        assert!((u.value - mean).abs() < 1e-12);
    }

    #[test]
    fn slice_profile_hand_cases() {
        let d = Dims::new(2, 2, 4).unwrap();
        let e = EntropyVolume(ScalarVolume::new(d, sp(), 0.25));
        assert_eq!(slice_uncertainty_profile(&e), vec![0.25; 4]);

        let mut v = ScalarVolume::new(d, sp(), 0.0);
        v.set(0, 1, 3, 0.6);
        let profile = slice_uncertainty_profile(&EntropyVolume(v));
        assert_eq!(profile, vec![0.0, 0.0, 0.0, 0.15]);
    }

    #[test]
    fn slice_profile_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let d = Dims::new(4, 4, 5).unwrap();
        let vals: Vec<f64> = (0..d.len()).map(|_| rng.gen_range(0.0..0.7)).collect();
        let e = EntropyVolume(ScalarVolume::from_data(d, sp(), vals.clone()).unwrap());
        let got = slice_uncertainty_profile(&e);
        for k in 0..d.nz {
            let mut sum = 0.0;
            for j in 0..d.ny {
                for i in 0..d.nx {
                    sum += vals[d.index(i, j, k)];
                }
            }
            assert!((got[k] - sum / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn peaks_strictly_increasing_profile() {
        let v: Vec<f64> = (0..10).map(|x| x as f64).collect();
        assert_eq!(find_peaks(&v, 5), vec![9]);
    }

    #[test]
    fn peaks_hand_simulation_of_greedy_rule() {
        let v = vec![0.0, 5.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 3.0];
        assert_eq!(find_peaks(&v, 5), vec![1, 9]);
    }

    #[test]
    fn peaks_constant_profile_leftmost_plateau() {
        let v = vec![2.0; 8];
        assert_eq!(find_peaks(&v, 5), vec![0]);
    }

    #[test]
    fn peaks_plateau_inside_profile() {
        let v = vec![0.0, 1.0, 1.0, 1.0, 0.0, 2.0];
        assert_eq!(find_peaks(&v, 1), vec![1, 5]);
    }

    #[test]
    fn mc_sampling_deterministic_and_degenerate_without_dropout() {
        use crate::learner::{predict, LearnerConfig, MlpParams};
        use crate::stream::derive_rng;
        use crate::volume::{generate_phantom, PhantomSpec};
        let spec = PhantomSpec {
            dims: Dims { nx: 12, ny: 12, nz: 12 },
            organ_semi_axes: (2.0, 3.0),
            ..PhantomSpec::default()
        };
        let (img, _) = generate_phantom(&spec, 21).unwrap();
        let learner = LearnerConfig::default();
        let mut rng = derive_rng(5, &["p".into()]);
        let mut params = MlpParams::init(&learner.layer_sizes(), 0.25, &mut rng).unwrap();

        let a = mc_sample(&params, &img, &learner.features, 3, 99).unwrap();
        let b = mc_sample(&params, &img, &learner.features, 3, 99).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.values().data(), y.values().data());
        }

        // With dropout active, samples differ somewhere.
        let flat: Vec<f64> = a.samples[0].values().data().to_vec();
        assert!(a.samples[1].values().data().iter().zip(&flat).any(|(x, y)| x != y));

        // Dropout 0 -> every sample equals plain prediction.
        params.dropout = 0.0;
        let c = mc_sample(&params, &img, &learner.features, 2, 1).unwrap();
        let plain = predict(&params, &img, &learner.features).unwrap();
        for s in &c.samples {
            assert_eq!(s.values().data(), plain.values().data());
        }

        assert!(mc_sample(&params, &img, &learner.features, 0, 1).is_err());
    }

    #[test]
    fn mc_fast_path_is_bitwise_identical_to_generic_forward() {
        use crate::learner::{extract_features_dense, forward, LearnerConfig, MlpParams};
        use crate::stream::derive_rng;
        use crate::volume::{generate_phantom, PhantomSpec};
        let spec = PhantomSpec {
            dims: Dims { nx: 10, ny: 10, nz: 12 },
            organ_semi_axes: (2.0, 2.5),
            ..PhantomSpec::default()
        };
        let (img, _) = generate_phantom(&spec, 8).unwrap();
        let learner = LearnerConfig::default();
        let mut rng = derive_rng(4, &["p".into()]);
        let params = MlpParams::init(&learner.layer_sizes(), 0.25, &mut rng).unwrap();
        assert_eq!(params.num_layers(), 2, "default net takes the shared-tanh path");

        let set = mc_sample(&params, &img, &learner.features, 4, 55).unwrap();
        let feats = extract_features_dense(&img, &learner.features).unwrap();
        for (k, sample) in set.samples.iter().enumerate() {
            // Generic path: draw the full mask from the same stream and run
            // the ordinary forward pass.
            let mut rng = derive_rng(55, &["mc".into(), (k as u64).into()]);
            let mask = crate::learner::DropoutMask::draw(&params, feats.rows, &mut rng);
            let probs = forward(&params, &feats, Some(&mask)).unwrap();
            for r in 0..feats.rows {
                assert_eq!(sample.values().data()[r], probs[r * 2 + 1], "sample {k} row {r}");
            }
        }
    }
}
