use crate::data::{Image, LabeledExample};
use crate::error::{invalid, Error, Result};

use super::{Architecture, ModelParams};

/// Mean cross-entropy and argmax accuracy over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub accuracy: f64,
}

fn log_softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter_mut().for_each(|z| *z -= lse);
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `out[r] += sum_c m[r, c] * v[c]` for a row-major `rows x v.len()` matrix.
fn matvec_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Accumulates the dense-layer gradient for `logits = W v + b` and returns
/// `W^T d` when `want_input_grad`.
fn dense_backward(
    weight: &[f64],
    input: &[f64],
    d: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    want_input_grad: bool,
) -> Vec<f64> {
    let cols = input.len();
    let mut dinput = if want_input_grad {
        vec![0.0; cols]
    } else {
        Vec::new()
    };
    for (r, &dr) in d.iter().enumerate() {
        gb[r] += dr;
        if dr == 0.0 {
            continue;
        }
        let grow = &mut gw[r * cols..(r + 1) * cols];
        for (g, x) in grow.iter_mut().zip(input) {
            *g += dr * x;
        }
        if want_input_grad {
            let wrow = &weight[r * cols..(r + 1) * cols];
            for (di, w) in dinput.iter_mut().zip(wrow) {
                *di += dr * w;
            }
        }
    }
    dinput
}

/// Log-probabilities for one image. When `grad` is given, adds
/// `scale * d(-log p[label])/d(params)` into it.
fn example_pass(
    params: &ModelParams,
    img: &Image,
    grad: Option<(usize, f64, &mut ModelParams)>,
) -> Vec<f64> {
    let x = img.pixels();
    let c = params.num_classes();
    // (p - onehot) * scale, from log-probabilities
    let dlogits = |logp: &[f64], label: usize, scale: f64| -> Vec<f64> {
        logp.iter()
            .enumerate()
            .map(|(i, lp)| (lp.exp() - f64::from(u8::from(i == label))) * scale)
            .collect()
    };
    match params.arch() {
        Architecture::Softmax => {
            let mut logits = params.tensor(1).to_vec();
            matvec_add(params.tensor(0), x, &mut logits);
            log_softmax(&mut logits);
            if let Some((label, scale, g)) = grad {
                let d = dlogits(&logits, label, scale);
                let (gw, gb) = split_two(g, 0, 1);
                dense_backward(params.tensor(0), x, &d, gw, gb, false);
            }
            logits
        }
        Architecture::Mlp { hidden } => {
            let mut pre = params.tensor(1).to_vec();
            matvec_add(params.tensor(0), x, &mut pre);
            let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
            let mut logits = params.tensor(3).to_vec();
            matvec_add(params.tensor(2), &act, &mut logits);
            log_softmax(&mut logits);
            if let Some((label, scale, g)) = grad {
                let d = dlogits(&logits, label, scale);
                let dact = {
                    let (gw, gb) = split_two(g, 2, 3);
                    dense_backward(params.tensor(2), &act, &d, gw, gb, true)
                };
                let dpre: Vec<f64> = (0..hidden)
                    .map(|j| if pre[j] > 0.0 { dact[j] } else { 0.0 })
                    .collect();
                let (gw, gb) = split_two(g, 0, 1);
                dense_backward(params.tensor(0), x, &dpre, gw, gb, false);
            }
            logits
        }
        Architecture::TinyConv { filters } => {
            let (h, w) = params.image_shape();
            let (hp, wp) = (h / 2, w / 2);
            let kernels = params.tensor(0);
            let biases = params.tensor(1);
            // conv + relu
            let mut pre = vec![0.0; filters * h * w];
            for f in 0..filters {
                let k = &kernels[f * 9..f * 9 + 9];
                for r in 0..h {
                    for col in 0..w {
                        let mut s = biases[f];
                        for dr in 0..3 {
                            let rr = r as isize + dr as isize - 1;
                            if rr < 0 || rr >= h as isize {
                                continue;
                            }
                            for dc in 0..3 {
                                let cc = col as isize + dc as isize - 1;
                                if cc < 0 || cc >= w as isize {
                                    continue;
                                }
                                s += k[dr * 3 + dc] * x[rr as usize * w + cc as usize];
                            }
                        }
                        pre[(f * h + r) * w + col] = s;
                    }
                }
            }
            // 2x2 max-pool over relu(pre); remember the winning position
            let mut pooled = vec![0.0; filters * hp * wp];
            let mut winner = vec![0usize; filters * hp * wp];
            for f in 0..filters {
                for i in 0..hp {
                    for j in 0..wp {
                        let mut best_idx = (f * h + 2 * i) * w + 2 * j;
                        let mut best = pre[best_idx].max(0.0);
                        for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = (f * h + 2 * i + di) * w + 2 * j + dj;
                            let v = pre[idx].max(0.0);
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                        let o = (f * hp + i) * wp + j;
                        pooled[o] = best;
                        winner[o] = best_idx;
                    }
                }
            }
            let mut logits = params.tensor(3).to_vec();
            matvec_add(params.tensor(2), &pooled, &mut logits);
            log_softmax(&mut logits);
            if let Some((label, scale, g)) = grad {
                let d = dlogits(&logits, label, scale);
                let dpooled = {
                    let (gw, gb) = split_two(g, 2, 3);
                    dense_backward(params.tensor(2), &pooled, &d, gw, gb, true)
                };
                let (gk, gb) = split_two(g, 0, 1);
                for (o, &dp) in dpooled.iter().enumerate() {
                    let idx = winner[o];
                    if dp == 0.0 || pre[idx] <= 0.0 {
                        continue;
                    }
                    let f = idx / (h * w);
                    let r = (idx / w) % h;
                    let col = idx % w;
                    gb[f] += dp;
                    for dr in 0..3 {
                        let rr = r as isize + dr as isize - 1;
                        if rr < 0 || rr >= h as isize {
                            continue;
                        }
                        for dc in 0..3 {
                            let cc = col as isize + dc as isize - 1;
                            if cc < 0 || cc >= w as isize {
                                continue;
                            }
                            gk[f * 9 + dr * 3 + dc] += dp * x[rr as usize * w + cc as usize];
                        }
                    }
                }
            }
            debug_assert_eq!(logits.len(), c);
            logits
        }
    }
}

fn split_two(g: &mut ModelParams, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a < b);
    let (lo, hi) = g.tensors_mut().split_at_mut(b);
    (&mut lo[a].data, &mut hi[0].data)
}

fn check_image(params: &ModelParams, img: &Image) -> Result<()> {
    if img.shape() != params.image_shape() {
        return Err(Error::ShapeMismatch(format!(
            "image {:?}, model expects {:?}",
            img.shape(),
            params.image_shape()
        )));
    }
    Ok(())
}

/// Log-probabilities for one image.
pub(crate) fn log_probs(params: &ModelParams, img: &Image) -> Result<Vec<f64>> {
    check_image(params, img)?;
    Ok(example_pass(params, img, None))
}

/// Class probabilities, one row per image.
pub fn forward(params: &ModelParams, images: &[Image]) -> Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|img| {
            let mut row = log_probs(params, img)?;
            row.iter_mut().for_each(|v| *v = v.exp());
            Ok(row)
        })
        .collect()
}

/// Mean cross-entropy over `batch` and its gradient.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[LabeledExample],
) -> Result<(LossReport, ModelParams)> {
    let refs: Vec<&LabeledExample> = batch.iter().collect();
    loss_and_grad_refs(params, &refs)
}

pub(crate) fn loss_and_grad_refs(
    params: &ModelParams,
    batch: &[&LabeledExample],
) -> Result<(LossReport, ModelParams)> {
    if batch.is_empty() {
        return invalid("loss over an empty batch");
    }
    for ex in batch {
        check_image(params, &ex.image)?;
        if ex.label >= params.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: ex.label,
                num_classes: params.num_classes(),
            });
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in batch {
        let logp = example_pass(params, &ex.image, Some((ex.label, scale, &mut grads)));
        loss -= logp[ex.label];
        correct += usize::from(argmax(&logp) == ex.label);
    }
    Ok((
        LossReport {
            loss: loss * scale,
            accuracy: correct as f64 * scale,
        },
        grads,
    ))
}
