//! The voxel classifier: a small fully connected network with tanh hidden
//! units, inverted dropout after each hidden layer, and a two-class softmax
//! output. Forward, loss, and backward are hand-rolled so every gradient can
//! be checked against finite differences.

use super::features::FeatureMatrix;
use super::loss::{dice_loss, dice_loss_grad};
use crate::error::{Error, Result};
use rand::Rng;

pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    /// `[input, hidden..., 2]`.
    pub layer_sizes: Vec<usize>,
    /// One `out x in` row-major matrix per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Dropout rate applied after each hidden layer.
    pub dropout: f64,
}

/// Parameter-shaped gradient accumulator.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Xavier-uniform weights (`±sqrt(6/(fan_in+fan_out))`), zero biases.
    pub fn init(layer_sizes: &[usize], dropout: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::check_shape(layer_sizes, dropout)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            dropout,
        })
    }

    pub fn zeros(layer_sizes: &[usize], dropout: f64) -> Result<Self> {
        Self::check_shape(layer_sizes, dropout)?;
        let weights = (0..layer_sizes.len() - 1)
            .map(|l| vec![0.0; layer_sizes[l] * layer_sizes[l + 1]])
            .collect();
        let biases = (0..layer_sizes.len() - 1)
            .map(|l| vec![0.0; layer_sizes[l + 1]])
            .collect();
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            dropout,
        })
    }

    fn check_shape(layer_sizes: &[usize], dropout: f64) -> Result<()> {
        if layer_sizes.len() < 3 {
            return Err(Error::invalid(
                "network needs input, at least one hidden, and output layer".to_string(),
            ));
        }
        if *layer_sizes.last().unwrap() != NUM_CLASSES {
            return Err(Error::invalid(format!(
                "output layer must have {NUM_CLASSES} units, got {}",
                layer_sizes.last().unwrap()
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::invalid("layer sizes must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid(format!("dropout must be in [0, 1), got {dropout}")));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Fill one row of dropout mask entries in `{0, 1/(1-p)}`.
///
/// This is the canonical draw procedure shared by every masked path: at the
/// default rate 1/4 each unit consumes two random bits (one `u64` covers 32
/// units), otherwise one 64-bit threshold draw per unit.
pub(crate) fn draw_mask_row(p: f64, rng: &mut impl Rng, out: &mut [f64]) {
    if p == 0.0 {
        out.fill(1.0);
        return;
    }
    let keep_scale = 1.0 / (1.0 - p);
    if p == 0.25 {
        let mut bits: u64 = 0;
        let mut left = 0u32;
        for slot in out.iter_mut() {
            if left == 0 {
                bits = rng.gen::<u64>();
                left = 32;
            }
            *slot = if bits & 3 == 0 { 0.0 } else { keep_scale };
            bits >>= 2;
            left -= 1;
        }
    } else {
        let threshold = (p * 2f64.powi(64)) as u64;
        for slot in out.iter_mut() {
            *slot = if rng.gen::<u64>() < threshold { 0.0 } else { keep_scale };
        }
    }
}

/// Inverted-dropout masks for one batch: per hidden layer, `rows x units`
/// entries in `{0, 1/(1-p)}`, drawn layer-major, row by row.
#[derive(Clone, Debug)]
pub struct DropoutMask {
    pub per_layer: Vec<Vec<f64>>,
    rows: usize,
}

impl DropoutMask {
    pub fn draw(params: &MlpParams, rows: usize, rng: &mut impl Rng) -> Self {
        let p = params.dropout;
        let per_layer = (1..params.layer_sizes.len() - 1)
            .map(|l| {
                let units = params.layer_sizes[l];
                let mut m = vec![0.0; rows * units];
                for row in m.chunks_mut(units) {
                    draw_mask_row(p, rng, row);
                }
                m
            })
            .collect();
        DropoutMask { per_layer, rows }
    }

    fn check(&self, params: &MlpParams, rows: usize) -> Result<()> {
        let hidden = params.layer_sizes.len() - 2;
        if self.per_layer.len() != hidden || self.rows != rows {
            return Err(Error::invalid(format!(
                "dropout mask shape mismatch: {} layers x {} rows vs expected {hidden} x {rows}",
                self.per_layer.len(),
                self.rows
            )));
        }
        Ok(())
    }
}

/// Per-row class probabilities, `rows x 2` row-major.
pub fn forward(
    params: &MlpParams,
    features: &FeatureMatrix,
    mask: Option<&DropoutMask>,
) -> Result<Vec<f64>> {
    let trace = forward_trace(params, features, mask)?;
    Ok(trace.probs)
}

struct ForwardTrace {
    /// Pre-mask tanh activations per hidden layer, `rows x units`.
    tanh: Vec<Vec<f64>>,
    /// Post-mask activations per hidden layer.
    acts: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

/// Hidden activation: tanh evaluated through exp as `1 - 2/(exp(2z)+1)`;
/// agrees with the libm tanh to an ulp everywhere.
#[inline]
fn activation(z: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * z).exp() + 1.0)
}

/// Row-major `out x in` to `in x out`.
fn transpose(w: &[f64], n_out: usize, n_in: usize) -> Vec<f64> {
    let mut wt = vec![0.0; w.len()];
    for o in 0..n_out {
        for i in 0..n_in {
            wt[i * n_out + o] = w[o * n_in + i];
        }
    }
    wt
}

fn forward_trace(
    params: &MlpParams,
    features: &FeatureMatrix,
    mask: Option<&DropoutMask>,
) -> Result<ForwardTrace> {
    if features.width != params.input_size() {
        return Err(Error::invalid(format!(
            "feature width {} does not match network input size {}",
            features.width,
            params.input_size()
        )));
    }
    if let Some(m) = mask {
        m.check(params, features.rows)?;
    }
    let rows = features.rows;
    let n_hidden = params.num_layers() - 1;
    let mut tanh_layers: Vec<Vec<f64>> = Vec::with_capacity(n_hidden);
    let mut act_layers: Vec<Vec<f64>> = Vec::with_capacity(n_hidden);

    for l in 0..n_hidden {
        let (n_in, n_out) = (params.layer_sizes[l], params.layer_sizes[l + 1]);
        let b = &params.biases[l];
        let wt = transpose(&params.weights[l], n_out, n_in);
        let input: &[f64] = if l == 0 {
            &features.data
        } else if act_layers[l - 1].is_empty() {
            &tanh_layers[l - 1]
        } else {
            &act_layers[l - 1]
        };
        let mut t = vec![0.0; rows * n_out];
        for r in 0..rows {
            let x = &input[r * n_in..(r + 1) * n_in];
            let out = &mut t[r * n_out..(r + 1) * n_out];
            out.copy_from_slice(b);
            // Unit-major inner loops; per-unit accumulation order matches
            // the plain dot product term by term.
            for (i, &xi) in x.iter().enumerate() {
                let wrow = &wt[i * n_out..(i + 1) * n_out];
                for (zo, wio) in out.iter_mut().zip(wrow) {
                    *zo += wio * xi;
                }
            }
            for zo in out.iter_mut() {
                *zo = activation(*zo);
            }
        }
        // Without dropout the activation equals the tanh buffer; an empty
        // vec marks that case so no copy is made.
        let a = match mask {
            Some(m) => t.iter().zip(&m.per_layer[l]).map(|(ti, mi)| ti * mi).collect(),
            None => Vec::new(),
        };
        tanh_layers.push(t);
        act_layers.push(a);
    }

    // Output layer with stable two-class softmax.
    let l = n_hidden;
    let (n_in, n_out) = (params.layer_sizes[l], NUM_CLASSES);
    let w = &params.weights[l];
    let b = &params.biases[l];
    let last_in: &[f64] = if n_hidden == 0 {
        &features.data
    } else if act_layers[n_hidden - 1].is_empty() {
        &tanh_layers[n_hidden - 1]
    } else {
        &act_layers[n_hidden - 1]
    };
    let mut probs = vec![0.0; rows * n_out];
    for r in 0..rows {
        let x = &last_in[r * n_in..(r + 1) * n_in];
        let mut z = [b[0], b[1]];
        for c in 0..2 {
            let wr = &w[c * n_in..(c + 1) * n_in];
            for (wi, xi) in wr.iter().zip(x) {
                z[c] += wi * xi;
            }
        }
        let m = z[0].max(z[1]);
        let e0 = (z[0] - m).exp();
        let e1 = (z[1] - m).exp();
        let sum = e0 + e1;
        probs[r * 2] = e0 / sum;
        probs[r * 2 + 1] = e1 / sum;
    }

    Ok(ForwardTrace {
        tanh: tanh_layers,
        acts: act_layers,
        probs,
    })
}

/// Pre-mask tanh activations of the first hidden layer, `rows x h1`.
/// They do not depend on dropout, so MC sampling computes them once.
pub(crate) fn first_hidden_tanh(params: &MlpParams, features: &FeatureMatrix) -> Result<Vec<f64>> {
    if features.width != params.input_size() {
        return Err(Error::invalid(format!(
            "feature width {} does not match network input size {}",
            features.width,
            params.input_size()
        )));
    }
    let rows = features.rows;
    let (n_in, n_out) = (params.layer_sizes[0], params.layer_sizes[1]);
    let b = &params.biases[0];
    let wt = transpose(&params.weights[0], n_out, n_in);
    let mut t = vec![0.0; rows * n_out];
    for r in 0..rows {
        let x = &features.data[r * n_in..(r + 1) * n_in];
        let out = &mut t[r * n_out..(r + 1) * n_out];
        out.copy_from_slice(b);
        for (i, &xi) in x.iter().enumerate() {
            let wrow = &wt[i * n_out..(i + 1) * n_out];
            for (zo, wio) in out.iter_mut().zip(wrow) {
                *zo += wio * xi;
            }
        }
        for zo in out.iter_mut() {
            *zo = activation(*zo);
        }
    }
    Ok(t)
}

/// One MC-dropout pass of a single-hidden-layer network: draws the mask
/// row by row from `rng` (the canonical order) and returns the class-1
/// probability per row. Bitwise identical to [`forward`] with a
/// [`DropoutMask`] drawn from the same stream.
pub(crate) fn mc_forward_single_hidden(
    params: &MlpParams,
    first_tanh: &[f64],
    rows: usize,
    rng: &mut impl Rng,
) -> Vec<f64> {
    debug_assert_eq!(params.num_layers(), 2);
    let h = params.layer_sizes[1];
    let w_out = &params.weights[1];
    let b_out = &params.biases[1];
    let p = params.dropout;
    let mut mask = vec![0.0; h];
    let mut masked = vec![0.0; h];
    let mut p1 = Vec::with_capacity(rows);
    for r in 0..rows {
        draw_mask_row(p, rng, &mut mask);
        let t = &first_tanh[r * h..(r + 1) * h];
        for i in 0..h {
            masked[i] = t[i] * mask[i];
        }
        let mut z = [b_out[0], b_out[1]];
        for c in 0..2 {
            let wr = &w_out[c * h..(c + 1) * h];
            for (wi, hi) in wr.iter().zip(&masked) {
                z[c] += wi * hi;
            }
        }
        let m = z[0].max(z[1]);
        let e0 = (z[0] - m).exp();
        let e1 = (z[1] - m).exp();
        p1.push(e1 / (e0 + e1));
    }
    p1
}

/// Backpropagate the weighted soft Dice loss; returns `(grads, loss, probs)`.
///
/// `y` and `w` are per-row labels and annotation weights; the liver-class
/// probability is column 1 of the softmax output.
pub fn backward(
    params: &MlpParams,
    features: &FeatureMatrix,
    mask: Option<&DropoutMask>,
    y: &[u8],
    w: &[u8],
) -> Result<(MlpGrads, f64, Vec<f64>)> {
    if y.len() != features.rows || w.len() != features.rows {
        return Err(Error::invalid(format!(
            "labels/weights length {}/{} does not match {} feature rows",
            y.len(),
            w.len(),
            features.rows
        )));
    }
    let trace = forward_trace(params, features, mask)?;
    let rows = features.rows;
    let p1: Vec<f64> = (0..rows).map(|r| trace.probs[r * 2 + 1]).collect();
    let loss = dice_loss(&p1, y, w)?;
    let dp = dice_loss_grad(&p1, y, w)?;

    let mut grads = params.zero_grads();
    let n_layers = params.num_layers();
    // delta for the output layer: dL/dz with z the softmax logits.
    let mut delta: Vec<f64> = vec![0.0; rows * NUM_CLASSES];
    for r in 0..rows {
        let p1r = trace.probs[r * 2 + 1];
        let p0r = trace.probs[r * 2];
        let g = dp[r] * p1r * p0r;
        delta[r * 2] = -g;
        delta[r * 2 + 1] = g;
    }

    for l in (0..n_layers).rev() {
        let n_in = params.layer_sizes[l];
        let n_out = params.layer_sizes[l + 1];
        let input: &[f64] = if l == 0 {
            &features.data
        } else if trace.acts[l - 1].is_empty() {
            &trace.tanh[l - 1]
        } else {
            &trace.acts[l - 1]
        };
        if n_out >= n_in {
            // Wide layer: accumulate into an input-major buffer so the inner
            // loop runs over the contiguous unit axis.
            let mut gwt = vec![0.0; n_in * n_out];
            let gb = &mut grads.biases[l];
            for r in 0..rows {
                let d = &delta[r * n_out..(r + 1) * n_out];
                let x = &input[r * n_in..(r + 1) * n_in];
                for (i, &xi) in x.iter().enumerate() {
                    let row = &mut gwt[i * n_out..(i + 1) * n_out];
                    for (g, dv) in row.iter_mut().zip(d) {
                        *g += xi * dv;
                    }
                }
                for (gbo, dv) in gb.iter_mut().zip(d) {
                    *gbo += dv;
                }
            }
            let gw = &mut grads.weights[l];
            for o in 0..n_out {
                for i in 0..n_in {
                    gw[o * n_in + i] = gwt[i * n_out + o];
                }
            }
        } else {
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for r in 0..rows {
                let d = &delta[r * n_out..(r + 1) * n_out];
                let x = &input[r * n_in..(r + 1) * n_in];
                for o in 0..n_out {
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    let dv = d[o];
                    if dv != 0.0 {
                        for (ri, xi) in row.iter_mut().zip(x) {
                            *ri += dv * xi;
                        }
                    }
                    gb[o] += dv;
                }
            }
        }
        if l == 0 {
            break;
        }
        // Propagate to the previous hidden layer through mask and tanh.
        let w_l = &params.weights[l];
        let mut prev = vec![0.0; rows * n_in];
        for r in 0..rows {
            let d = &delta[r * n_out..(r + 1) * n_out];
            let pd = &mut prev[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                let dv = d[o];
                if dv != 0.0 {
                    let wr = &w_l[o * n_in..(o + 1) * n_in];
                    for (pi, wi) in pd.iter_mut().zip(wr) {
                        *pi += dv * wi;
                    }
                }
            }
            let t = &trace.tanh[l - 1][r * n_in..(r + 1) * n_in];
            match mask {
                Some(m) => {
                    let mk = &m.per_layer[l - 1][r * n_in..(r + 1) * n_in];
                    for i in 0..n_in {
                        pd[i] *= mk[i] * (1.0 - t[i] * t[i]);
                    }
                }
                None => {
                    for i in 0..n_in {
                        pd[i] *= 1.0 - t[i] * t[i];
                    }
                }
            }
        }
        delta = prev;
    }

    Ok((grads, loss, trace.probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feat(rows: usize, width: usize, data: Vec<f64>) -> FeatureMatrix {
        assert_eq!(data.len(), rows * width);
        FeatureMatrix { rows, width, data }
    }

    #[test]
    fn zero_params_give_half_half() {
        let params = MlpParams::zeros(&[3, 4, 2], 0.25).unwrap();
        let f = feat(5, 3, (0..15).map(|x| x as f64).collect());
        let p = forward(&params, &f, None).unwrap();
        for r in 0..5 {
            assert_eq!(p[r * 2], 0.5);
            assert_eq!(p[r * 2 + 1], 0.5);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = MlpParams::init(&[4, 8, 2], 0.25, &mut rng).unwrap();
        let f = feat(7, 4, (0..28).map(|x| (x as f64).sin()).collect());
        let p = forward(&params, &f, None).unwrap();
        for r in 0..7 {
            assert!((p[r * 2] + p[r * 2 + 1] - 1.0).abs() < 1e-6);
            assert!(p[r * 2] >= 0.0 && p[r * 2] <= 1.0);
        }
    }

    #[test]
    fn zero_dropout_mask_equals_unmasked() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = MlpParams::init(&[3, 6, 2], 0.0, &mut rng).unwrap();
        let f = feat(4, 3, (0..12).map(|x| x as f64 * 0.3).collect());
        let mask = DropoutMask::draw(&params, 4, &mut rng);
        assert_eq!(forward(&params, &f, Some(&mask)).unwrap(), forward(&params, &f, None).unwrap());
    }

    #[test]
    fn forward_matches_hand_evaluated_chain() {
        // One hidden unit, one feature: p1 = softmax([w0*tanh(wx+b)+b0, w1*tanh(wx+b)+b1])[1]
        let params = MlpParams {
            layer_sizes: vec![1, 1, 2],
            weights: vec![vec![0.7], vec![-0.3, 0.9]],
            biases: vec![vec![0.1], vec![0.05, -0.2]],
            dropout: 0.0,
        };
        let x = 0.4;
        let f = feat(1, 1, vec![x]);
        let p = forward(&params, &f, None).unwrap();
        let h = (0.7f64 * x + 0.1).tanh();
        let z0 = -0.3 * h + 0.05;
        let z1 = 0.9 * h - 0.2;
        let e0 = z0.exp();
        let e1 = z1.exp();
        assert!((p[0] - e0 / (e0 + e1)).abs() < 1e-12);
        assert!((p[1] - e1 / (e0 + e1)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let params = MlpParams::zeros(&[3, 4, 2], 0.0).unwrap();
        let f = feat(2, 4, vec![0.0; 8]);
        assert!(forward(&params, &f, None).is_err());
    }

    /// Central finite differences of the full loss over every parameter.
    fn fd_check(params: &MlpParams, f: &FeatureMatrix, mask: Option<&DropoutMask>, y: &[u8], w: &[u8]) {
        let (grads, _, _) = backward(params, f, mask, y, w).unwrap();
        let h = 1e-4;
        let eval = |p: &MlpParams| {
            let probs = forward(p, f, mask).unwrap();
            let p1: Vec<f64> = (0..f.rows).map(|r| probs[r * 2 + 1]).collect();
            dice_loss(&p1, y, w).unwrap()
        };
        for l in 0..params.num_layers() {
            for idx in 0..params.weights[l].len() {
                let mut pp = params.clone();
                pp.weights[l][idx] += h;
                let up = eval(&pp);
                pp.weights[l][idx] -= 2.0 * h;
                let down = eval(&pp);
                let fd = (up - down) / (2.0 * h);
                let g = grads.weights[l][idx];
                let denom = fd.abs().max(g.abs()).max(1e-6);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "weight[{l}][{idx}]: analytic {g} vs fd {fd}"
                );
            }
            for idx in 0..params.biases[l].len() {
                let mut pp = params.clone();
                pp.biases[l][idx] += h;
                let up = eval(&pp);
                pp.biases[l][idx] -= 2.0 * h;
                let down = eval(&pp);
                let fd = (up - down) / (2.0 * h);
                let g = grads.biases[l][idx];
                let denom = fd.abs().max(g.abs()).max(1e-6);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "bias[{l}][{idx}]: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..10 {
            let params = MlpParams::init(&[3, 5, 2], 0.25, &mut rng).unwrap();
            let rows = 6;
            let f = feat(rows, 3, (0..18).map(|_| rng.gen_range(-1.5..1.5)).collect());
            let y: Vec<u8> = (0..rows).map(|_| rng.gen_range(0..=1)).collect();
            let mut w: Vec<u8> = (0..rows).map(|_| rng.gen_range(0..=1)).collect();
            w[0] = 1;
            let mask = if case % 2 == 0 {
                Some(DropoutMask::draw(&params, rows, &mut rng))
            } else {
                None
            };
            fd_check(&params, &f, mask.as_ref(), &y, &w);
        }
    }

    #[test]
    fn masked_out_rows_do_not_affect_gradients() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = MlpParams::init(&[2, 4, 2], 0.0, &mut rng).unwrap();
        let rows = 8;
        let data: Vec<f64> = (0..rows * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<u8> = (0..rows).map(|_| rng.gen_range(0..=1)).collect();
        let w: Vec<u8> = (0..rows).map(|r| u8::from(r < 4)).collect();

        let f_full = feat(rows, 2, data.clone());
        let (g_full, loss_full, _) = backward(&params, &f_full, None, &y, &w).unwrap();

        // Same batch restricted to the annotated half.
        let f_half = feat(4, 2, data[..8].to_vec());
        let (g_half, loss_half, _) = backward(&params, &f_half, None, &y[..4], &w[..4]).unwrap();

        assert!((loss_full - loss_half).abs() < 1e-12);
        for l in 0..g_full.weights.len() {
            for (a, b) in g_full.weights[l].iter().zip(&g_half.weights[l]) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in g_full.biases[l].iter().zip(&g_half.biases[l]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_linear_layer_matches_hand_derived_softmax_dice_gradient() {
        // Identity-ish setup: 1 feature, 1 hidden unit with zero weight so the
        // hidden activation is tanh(b); gradient flows only through the output
        // layer, for which the softmax-Dice expression is hand-derivable.
        let params = MlpParams {
            layer_sizes: vec![1, 1, 2],
            weights: vec![vec![0.0], vec![0.0, 0.0]],
            biases: vec![vec![1.0], vec![0.0, 0.0]],
            dropout: 0.0,
        };
        let f = feat(2, 1, vec![0.3, -0.2]);
        let y = [1u8, 0];
        let w = [1u8, 1];
        let (grads, _, probs) = backward(&params, &f, None, &y, &w).unwrap();
        // With zero output weights, p = (0.5, 0.5) for both rows.
        assert_eq!(probs, vec![0.5; 4]);
        // Hand derivation: L = 1 - 2*p_a/(1 + p_a + p_b + eps) with rows a
        // (y=1) and b (y=0); dL/dp_a and dL/dp_b at p=(0.5,0.5), then
        // dL/dz1 = dL/dp * p1*p0 = dL/dp * 0.25. The shared hidden activation
        // is t = tanh(1).
        let eps = super::super::loss::DICE_EPSILON;
        let den: f64 = 2.0 + eps;
        let dpa = -(2.0 * den - 1.0) / (den * den);
        let dpb = 1.0 / (den * den);
        let t = 1.0f64.tanh();
        let expect_w1 = 0.25 * (dpa + dpb) * t; // output class-1 weight grad
        assert!((grads.weights[1][1] - expect_w1).abs() < 1e-12);
        assert!((grads.weights[1][0] + expect_w1).abs() < 1e-12); // class-0 mirrors
        let expect_b1 = 0.25 * (dpa + dpb);
        assert!((grads.biases[1][1] - expect_b1).abs() < 1e-12);
    }
}
